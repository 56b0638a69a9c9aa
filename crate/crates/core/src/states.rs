//! Validated state, effect and observable types, standard operator
//! factories, and seeded random generators for sweeps.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, ComplexMatrix, HermitianEigen, Tolerances, C64, I, MAX_COMBINED_DIM, ONE, ZERO};

/// Default truncation for oscillator detectors.
pub const DEFAULT_OSCILLATOR_DIM: usize = 32;

/// Hermitian, positive semi-definite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    pub fn new(m: ComplexMatrix, tol: &Tolerances) -> Result<Self> {
        let eig = hermitian_eig(&m, tol)?;
        if eig.min() < tol.psd_eigen_floor {
            return Err(Error::Spectrum {
                eigenvalue: eig.min(),
                range: "[0, 1]",
            });
        }
        let trace = m.trace();
        if (trace.re - 1.0).abs() > tol.trace_one || trace.im.abs() > tol.trace_one {
            return Err(Error::TraceNotOne { trace: trace.re });
        }
        Ok(Self(m.hermitian_part()))
    }

    /// Normalizes `ket` and returns |ψ⟩⟨ψ|.
    pub fn pure(ket: &[C64]) -> Result<Self> {
        let norm = ket.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if ket.is_empty() || !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidParameter("state vector has zero norm".into()));
        }
        let psi: Vec<C64> = ket.iter().map(|z| z / norm).collect();
        Ok(Self(ComplexMatrix::projector(&psi)))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    /// Tr[O ρ], real part.
    pub fn expect(&self, o: &ComplexMatrix) -> f64 {
        o.trace_product(&self.0).re
    }

    pub fn purity(&self) -> f64 {
        self.0.trace_product(&self.0).re
    }

    /// Skips validation; callers guarantee the invariants up to rounding.
    pub(crate) fn from_trusted(m: ComplexMatrix) -> Self {
        Self(m.hermitian_part())
    }
}

/// Hermitian effect operator with spectrum in [0, 1]. Trace is free.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PovmElement(ComplexMatrix);

impl PovmElement {
    pub fn new(m: ComplexMatrix, tol: &Tolerances) -> Result<Self> {
        let eig = hermitian_eig(&m, tol)?;
        let slack = tol.psd_eigen_floor.abs();
        if eig.min() < tol.psd_eigen_floor || eig.max() > 1.0 + slack {
            let eigenvalue = if eig.min() < tol.psd_eigen_floor { eig.min() } else { eig.max() };
            return Err(Error::Spectrum {
                eigenvalue,
                range: "[0, 1]",
            });
        }
        if m.trace().re <= slack {
            return Err(Error::InvalidParameter("postselection effect has zero trace".into()));
        }
        Ok(Self(m.hermitian_part()))
    }

    /// Rank-one projector onto the normalized `ket`.
    pub fn pure(ket: &[C64]) -> Result<Self> {
        Ok(Self(DensityMatrix::pure(ket)?.0))
    }

    pub fn identity(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim))
    }

    /// I − E.
    pub fn complement(&self) -> Self {
        Self(&ComplexMatrix::identity(self.dim()) - &self.0)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }
}

/// Hermitian operator.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Observable(ComplexMatrix);

impl Observable {
    pub fn new(m: ComplexMatrix, tol: &Tolerances) -> Result<Self> {
        m.check_hermitian(tol)?;
        Ok(Self(m.hermitian_part()))
    }

    pub fn identity(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn eigen(&self) -> HermitianEigen {
        hermitian_eig(&self.0, &Tolerances::default()).expect("validated Hermitian")
    }

    /// max |eigenvalue|.
    pub fn spectral_radius(&self) -> f64 {
        self.eigen().spectral_radius()
    }

    /// self − shift·I.
    pub fn shifted(&self, shift: f64) -> Self {
        Self(&self.0 - &ComplexMatrix::identity(self.dim()).scale_real(shift))
    }

    pub(crate) fn from_trusted(m: ComplexMatrix) -> Self {
        Self(m.hermitian_part())
    }
}

/// Preparation, postselection and observable on the system; state, coupling
/// variable and readout on the detector; and the coupling constant.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSetup {
    pub rho_i: DensityMatrix,
    pub e_f: PovmElement,
    pub a: Observable,
    pub rho_det: DensityMatrix,
    pub q: Observable,
    pub o: Observable,
    pub lambda: f64,
}

impl MeasurementSetup {
    pub fn new(
        rho_i: DensityMatrix,
        e_f: PovmElement,
        a: Observable,
        rho_det: DensityMatrix,
        q: Observable,
        o: Observable,
        lambda: f64,
    ) -> Result<Self> {
        let ds = rho_i.dim();
        if e_f.dim() != ds || a.dim() != ds {
            return Err(Error::DimensionMismatch(format!(
                "system operators have dims rho_i={ds}, E_f={}, A={}",
                e_f.dim(),
                a.dim()
            )));
        }
        let dd = rho_det.dim();
        if q.dim() != dd || o.dim() != dd {
            return Err(Error::DimensionMismatch(format!(
                "detector operators have dims rho_det={dd}, q={}, o={}",
                q.dim(),
                o.dim()
            )));
        }
        if ds * dd > MAX_COMBINED_DIM {
            return Err(Error::DimensionOverflow {
                dim: ds * dd,
                max: MAX_COMBINED_DIM,
            });
        }
        if !lambda.is_finite() {
            return Err(Error::InvalidParameter("coupling must be finite".into()));
        }
        Ok(Self {
            rho_i,
            e_f,
            a,
            rho_det,
            q,
            o,
            lambda,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rho_i.dim(), self.rho_det.dim())
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn with_system(&self, rho_i: DensityMatrix, e_f: PovmElement) -> Self {
        Self {
            rho_i,
            e_f,
            ..self.clone()
        }
    }

    /// Gauge transformation q → q − c, ρ_i → e^{iλcA} ρ_i e^{−iλcA}. The exact
    /// conditional output is invariant under it.
    pub fn gauge_shift(&self, c: f64) -> Self {
        let u = crate::linalg::unitary_exp(self.a.matrix(), self.lambda * c, &Tolerances::default())
            .expect("validated Hermitian");
        let rho_i = DensityMatrix::from_trusted(&(&u * self.rho_i.matrix()) * &u.adjoint());
        Self {
            rho_i,
            q: self.q.shifted(c),
            ..self.clone()
        }
    }

    /// Gauge shift by ⟨q⟩, leaving a zero-mean coupling variable.
    pub fn centered(&self) -> Self {
        self.gauge_shift(self.rho_det.expect(self.q.matrix()))
    }
}

/// Annihilation operator on the first `dim` Fock levels.
pub fn annihilation(dim: usize) -> ComplexMatrix {
    ComplexMatrix::from_dmatrix(DMatrix::from_fn(dim, dim, |i, j| {
        if j == i + 1 {
            C64::new((j as f64).sqrt(), 0.0)
        } else {
            ZERO
        }
    }))
}

/// Truncated position and momentum, q = (a + a†)/√2 and p = (a − a†)/(i√2).
///
/// On the truncated space [q, p] = i(I − dim·|dim−1⟩⟨dim−1|).
pub fn oscillator_operators(dim: usize) -> Result<(Observable, Observable)> {
    if dim < 2 {
        return Err(Error::InvalidParameter(format!("oscillator dimension {dim} < 2")));
    }
    let a = annihilation(dim);
    let ad = a.adjoint();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let q = (&a + &ad).scale_real(r);
    let p = (&a - &ad).scale(-I * r);
    Ok((Observable::from_trusted(q), Observable::from_trusted(p)))
}

/// Fock state |n⟩⟨n| on a `dim`-level truncation.
pub fn fock_state(dim: usize, n: usize) -> Result<DensityMatrix> {
    if n >= dim {
        return Err(Error::InvalidParameter(format!("Fock level {n} outside dimension {dim}")));
    }
    let mut ket = vec![C64::new(0.0, 0.0); dim];
    ket[n] = ONE;
    DensityMatrix::pure(&ket)
}

/// Per-sample seed from a master seed and an index (SplitMix64 finalizer on
/// both words), so sweeps are reproducible regardless of scheduling.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(master) ^ index)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_c64<R: Rng>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Normalized complex-Gaussian vector (Haar-random direction).
pub fn random_ket<R: Rng>(dim: usize, rng: &mut R) -> Vec<C64> {
    loop {
        let v: Vec<C64> = (0..dim).map(|_| gaussian_c64(rng)).collect();
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return v.into_iter().map(|z| z / norm).collect();
        }
    }
}

fn ginibre<R: Rng>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let entries = (0..dim * dim).map(|_| gaussian_c64(rng)).collect();
    ComplexMatrix::from_row_major(dim, dim, entries).expect("finite gaussian entries")
}

pub fn random_pure_state(dim: usize, seed: u64) -> Result<DensityMatrix> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    DensityMatrix::pure(&random_ket(dim, &mut rng(seed)))
}

/// G·G†/Tr[G·G†] for a complex Ginibre matrix G.
pub fn random_mixed_state(dim: usize, seed: u64) -> Result<DensityMatrix> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    let g = ginibre(dim, &mut rng(seed));
    let w = &g * &g.adjoint();
    let tr = w.trace().re;
    Ok(DensityMatrix::from_trusted(w.scale_real(1.0 / tr)))
}

/// (G + G†)/2 for a complex Ginibre matrix G.
pub fn random_hermitian(dim: usize, seed: u64) -> Result<Observable> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    Ok(Observable::from_trusted(ginibre(dim, &mut rng(seed)).hermitian_part()))
}

/// Full-rank effect: a random mixed state rescaled so its largest eigenvalue
/// is a uniform number in (0, 1].
pub fn random_mixed_effect(dim: usize, seed: u64) -> Result<PovmElement> {
    let rho = random_mixed_state(dim, seed)?;
    let top = rho.matrix().hermitian_part();
    let eig = hermitian_eig(&top, &Tolerances::default())?;
    let scale: f64 = 1.0 - rng(derive_seed(seed, 1)).random::<f64>();
    Ok(PovmElement(top.scale_real(scale / eig.max())))
}
