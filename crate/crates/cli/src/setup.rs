//! JSON setup files.

use serde::Deserialize;
use wmopt_core::states::{fock_state, oscillator_operators};
use wmopt_core::{ComplexMatrix, DensityMatrix, MeasurementSetup, Observable, PovmElement, Tolerances, C64};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetupFile {
    pub system: SystemSpec,
    pub detector: DetectorSpec,
    pub lambda: f64,
    #[serde(default)]
    pub tolerances: Option<Tolerances>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub dim: usize,
    pub rho_i: StateSpec,
    #[serde(rename = "E_f")]
    pub e_f: StateSpec,
    #[serde(rename = "A")]
    pub a: ComplexMatrix,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub oscillator_dim: Option<usize>,
    #[serde(default)]
    pub rho_det: Option<StateSpec>,
    #[serde(default)]
    pub named_state: Option<String>,
    pub q: OperatorSpec,
    pub o: OperatorSpec,
}

/// A density matrix (or effect) given in full or as a ket.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Ket { ket: Vec<[f64; 2]> },
    Matrix(ComplexMatrix),
}

/// A matrix or one of "oscillator_q", "oscillator_p".
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum OperatorSpec {
    Named(String),
    Matrix(ComplexMatrix),
}

fn invalid(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{path}: {msg}"))
}

impl StateSpec {
    fn matrix(&self, path: &str, dim: usize) -> Result<ComplexMatrix, CliError> {
        let m = match self {
            StateSpec::Ket { ket } => {
                let v: Vec<C64> = ket.iter().map(|&[re, im]| C64::new(re, im)).collect();
                let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if !(norm > 0.0) || !norm.is_finite() {
                    return Err(invalid(path, "ket must be a finite nonzero vector"));
                }
                let v: Vec<C64> = v.into_iter().map(|z| z / norm).collect();
                ComplexMatrix::projector(&v)
            }
            StateSpec::Matrix(m) => m.clone(),
        };
        if m.rows() != dim || m.cols() != dim {
            return Err(invalid(path, format!("expected {dim}x{dim}, got {}x{}", m.rows(), m.cols())));
        }
        Ok(m)
    }
}

fn observable(m: &ComplexMatrix, path: &str, dim: usize, tol: &Tolerances) -> Result<Observable, CliError> {
    if m.rows() != dim || m.cols() != dim {
        return Err(invalid(path, format!("expected {dim}x{dim}, got {}x{}", m.rows(), m.cols())));
    }
    Observable::new(m.clone(), tol).map_err(|e| invalid(path, e))
}

impl SetupFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Input(format!("{path}: {}", e.into_inner()))
        })
    }

    /// Builds the validated setup; every failure names the offending field.
    pub fn build(&self, tol: &Tolerances) -> Result<MeasurementSetup, CliError> {
        let s = &self.system;
        let ds = s.dim;
        if ds == 0 {
            return Err(invalid("system.dim", "must be >= 1"));
        }
        let rho_i = DensityMatrix::new(s.rho_i.matrix("system.rho_i", ds)?, tol).map_err(|e| invalid("system.rho_i", e))?;
        let e_f = PovmElement::new(s.e_f.matrix("system.E_f", ds)?, tol).map_err(|e| invalid("system.E_f", e))?;
        let a = observable(&s.a, "system.A", ds, tol)?;

        let d = &self.detector;
        let dd = match (d.dim, d.oscillator_dim) {
            (Some(_), Some(_)) => return Err(invalid("detector", "give either dim or oscillator_dim, not both")),
            (None, None) => return Err(invalid("detector", "missing dim or oscillator_dim")),
            (Some(n), None) | (None, Some(n)) => n,
        };
        if dd == 0 {
            return Err(invalid("detector.dim", "must be >= 1"));
        }
        let osc = match d.oscillator_dim {
            Some(n) => Some(oscillator_operators(n).map_err(|e| invalid("detector.oscillator_dim", e))?),
            None => None,
        };
        let named = |spec: &OperatorSpec, path: &str| -> Result<Observable, CliError> {
            match spec {
                OperatorSpec::Matrix(m) => observable(m, path, dd, tol),
                OperatorSpec::Named(name) => {
                    let (q, p) = osc
                        .as_ref()
                        .ok_or_else(|| invalid(path, format!("\"{name}\" needs detector.oscillator_dim")))?;
                    match name.as_str() {
                        "oscillator_q" => Ok(q.clone()),
                        "oscillator_p" => Ok(p.clone()),
                        other => Err(invalid(path, format!("unknown operator \"{other}\""))),
                    }
                }
            }
        };
        let q = named(&d.q, "detector.q")?;
        let o = named(&d.o, "detector.o")?;
        let rho_det = match (&d.rho_det, &d.named_state) {
            (Some(_), Some(_)) => return Err(invalid("detector", "give either rho_det or named_state, not both")),
            (None, None) => return Err(invalid("detector", "missing rho_det or named_state")),
            (Some(spec), None) => DensityMatrix::new(spec.matrix("detector.rho_det", dd)?, tol)
                .map_err(|e| invalid("detector.rho_det", e))?,
            (None, Some(name)) => {
                let n = match name.as_str() {
                    "ground" => 0,
                    other => other
                        .strip_prefix("fock:")
                        .and_then(|k| k.parse::<usize>().ok())
                        .ok_or_else(|| invalid("detector.named_state", format!("unknown state \"{other}\"")))?,
                };
                fock_state(dd, n).map_err(|e| invalid("detector.named_state", e))?
            }
        };
        MeasurementSetup::new(rho_i, e_f, a, rho_det, q, o, self.lambda).map_err(|e| invalid("lambda", e))
    }
}
