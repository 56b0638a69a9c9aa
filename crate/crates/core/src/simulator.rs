//! Exact evolution of a postselected von Neumann measurement and its
//! perturbative approximations.
//!
//! The exact path builds ρ⁺ = U(ρ_i ⊗ ρ_det)U† with U = exp(iλ A⊗q). Three
//! approximations are reported next to it:
//!
//! * interpolating: M₁/N₁, first order in the propagator on each side, with
//!   the λ² cross term kept so the formula stays finite when ω → 0;
//! * linear: the same expansion with N⁻¹ Taylor-expanded and truncated at
//!   first order in λ, which needs ω well away from zero.
//!
//! [`PostselectionKernel`] is a second exact route that never forms the
//! joint state; sweeps use it and tests check it against [`evolve_joint`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    hermitian_eig, partial_trace, tensor_product, unitary_exp, ComplexMatrix, HermitianEigen,
    Subsystem, Tolerances, C64, I,
};
use crate::states::{DensityMatrix, MeasurementSetup, Observable, PovmElement};
use crate::weak_values::{canonical_weak_values, weak_value_triple, CanonicalWeakValues, WeakValueTriple};

/// Smallest postselection probability that is still divided by.
pub const POSTSELECTION_FLOOR: f64 = 1e-14;

/// Default number of moment conditions checked by [`validity_report`].
pub const DEFAULT_N_MAX: u32 = 8;

/// Detector averages over the initial detector state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectorAverages {
    pub o_mean: f64,
    pub q_mean: f64,
    pub q2_mean: f64,
    /// ⟨o q⟩ (complex in general)
    pub oq: C64,
    /// ⟨q o q⟩
    pub qoq: f64,
}

impl DetectorAverages {
    pub fn new(rho_det: &DensityMatrix, q: &Observable, o: &Observable) -> Self {
        let (q, o, rho) = (q.matrix(), o.matrix(), rho_det.matrix());
        let oq = o * q;
        Self {
            o_mean: rho_det.expect(o),
            q_mean: rho_det.expect(q),
            q2_mean: (q * q).trace_product(rho).re,
            oq: oq.trace_product(rho),
            qoq: (q * &oq).trace_product(rho).re,
        }
    }

    /// −i⟨[q, o]⟩, real.
    pub fn commutator_term(&self) -> f64 {
        // ⟨qo⟩ = conj⟨oq⟩, so ⟨[q,o]⟩ = −2i·Im⟨oq⟩.
        -2.0 * self.oq.im
    }

    /// ⟨{q, o}⟩ = 2·Re⟨oq⟩.
    pub fn anticommutator(&self) -> f64 {
        2.0 * self.oq.re
    }
}

/// Exact and approximate conditional detector output for one setup.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionalOutput {
    pub mean_exact: f64,
    pub n_exact: f64,
    pub m_exact: f64,
    pub mean_interp: f64,
    /// Absent when preparation and postselection are orthogonal.
    pub mean_aav: Option<f64>,
    pub m1: f64,
    pub n1: f64,
    pub triple: WeakValueTriple,
    pub weak_values: CanonicalWeakValues,
    #[serde(skip)]
    pub rho_det_cond: DensityMatrix,
}

/// ρ⁺ = exp(iλ A⊗q)(ρ_i ⊗ ρ_det)exp(−iλ A⊗q).
pub fn evolve_joint(setup: &MeasurementSetup, tol: &Tolerances) -> Result<DensityMatrix> {
    let coupling = tensor_product(setup.a.matrix(), setup.q.matrix())?;
    let u = unitary_exp(&coupling, setup.lambda, tol)?;
    let rho = tensor_product(setup.rho_i.matrix(), setup.rho_det.matrix())?;
    Ok(DensityMatrix::from_trusted(&(&u * &rho) * &u.adjoint()))
}

fn check_joint_dims(rho_plus: &DensityMatrix, e_f: &PovmElement) -> Result<usize> {
    let (n, ds) = (rho_plus.dim(), e_f.dim());
    if n % ds != 0 {
        return Err(Error::DimensionMismatch(format!(
            "joint dimension {n} is not a multiple of the system dimension {ds}"
        )));
    }
    Ok(n / ds)
}

/// N = Tr[(E_f ⊗ I)ρ⁺] computed as a full trace.
pub fn postselection_probability(rho_plus: &DensityMatrix, e_f: &PovmElement) -> Result<f64> {
    let dd = check_joint_dims(rho_plus, e_f)?;
    let ef_i = tensor_product(e_f.matrix(), &ComplexMatrix::identity(dd))?;
    Ok(ef_i.trace_product(rho_plus.matrix()).re)
}

/// Conditional detector state Tr_sys[(E_f ⊗ I)ρ⁺]/N and N.
pub fn postselect(rho_plus: &DensityMatrix, e_f: &PovmElement) -> Result<(DensityMatrix, f64)> {
    let dd = check_joint_dims(rho_plus, e_f)?;
    let ds = e_f.dim();
    let ef_i = tensor_product(e_f.matrix(), &ComplexMatrix::identity(dd))?;
    let unnorm = partial_trace(&(&ef_i * rho_plus.matrix()), (ds, dd), Subsystem::Detector)?;
    let n = unnorm.trace().re;
    if !(n > POSTSELECTION_FLOOR) {
        return Err(Error::PostselectionZero { n });
    }
    Ok((DensityMatrix::from_trusted(unnorm.scale_real(1.0 / n)), n))
}

/// First-order-propagator approximations (M₁, N₁).
pub fn first_order_terms(t: &WeakValueTriple, avg: &DetectorAverages, lambda: f64) -> (f64, f64) {
    // M₁ = ωō + iλα⟨oq⟩ − iλα*⟨qo⟩ + λ²β⟨qoq⟩, with ⟨qo⟩ = conj⟨oq⟩.
    let cross = I * t.alpha * avg.oq;
    let m1 = t.omega * avg.o_mean + lambda * 2.0 * cross.re + lambda * lambda * t.beta * avg.qoq;
    // N₁ = ω + iλq̄(α − α*) + λ²⟨q²⟩β
    let n1 = t.omega - 2.0 * lambda * avg.q_mean * t.alpha.im + lambda * lambda * avg.q2_mean * t.beta;
    (m1, n1)
}

/// Interpolating formula in terms of the normalized weak values.
pub fn interpolating_output(w: &CanonicalWeakValues, avg: &DetectorAverages, lambda: f64) -> f64 {
    let num = avg.o_mean
        + lambda * (avg.commutator_term() * w.real() - avg.anticommutator() * w.imag())
        + lambda * lambda * avg.qoq * w.b_w;
    let den = 1.0 - 2.0 * lambda * avg.q_mean * w.imag() + lambda * lambda * avg.q2_mean * w.b_w;
    num / den
}

/// Output truncated at first order in λ after expanding N⁻¹.
pub fn linear_output(w: &CanonicalWeakValues, avg: &DetectorAverages, lambda: f64) -> f64 {
    avg.o_mean
        + lambda
            * (avg.commutator_term() * w.real()
                - (avg.anticommutator() - 2.0 * avg.q_mean * avg.o_mean) * w.imag())
}

pub fn conditional_mean(setup: &MeasurementSetup, tol: &Tolerances) -> Result<ConditionalOutput> {
    let rho_plus = evolve_joint(setup, tol)?;
    let (rho_det_cond, n_exact) = postselect(&rho_plus, &setup.e_f)?;
    let ef_o = tensor_product(setup.e_f.matrix(), setup.o.matrix())?;
    let m_exact = ef_o.trace_product(rho_plus.matrix()).re;

    let triple = weak_value_triple(&setup.e_f, &setup.rho_i, &setup.a, tol)?;
    let weak_values = canonical_weak_values(&triple, &setup.e_f, &setup.rho_i, &setup.a);
    let avg = DetectorAverages::new(&setup.rho_det, &setup.q, &setup.o);
    let (m1, n1) = first_order_terms(&triple, &avg, setup.lambda);
    let mean_aav = (!weak_values.orthogonal).then(|| linear_output(&weak_values, &avg, setup.lambda));

    Ok(ConditionalOutput {
        mean_exact: m_exact / n_exact,
        n_exact,
        m_exact,
        mean_interp: m1 / n1,
        mean_aav,
        m1,
        n1,
        triple,
        weak_values,
        rho_det_cond,
    })
}

/// Exact (N, M) without forming the joint state.
///
/// In the eigenbasis {|j⟩} of A the propagator is Σ_j |j⟩⟨j| ⊗ V_j with
/// V_j = exp(iλ a_j q), so Tr[(E ⊗ O)ρ⁺] = Σ_jk ρ_jk E_kj Tr[O V_j ρ_det V_k†].
/// The detector traces depend only on (A, ρ_det, q, o, λ) and are cached.
#[derive(Debug, Clone)]
pub struct PostselectionKernel {
    a_basis: ComplexMatrix,
    dim: usize,
    g_norm: Vec<C64>,
    g_out: Vec<C64>,
}

impl PostselectionKernel {
    pub fn new(
        a: &Observable,
        rho_det: &DensityMatrix,
        q: &Observable,
        o: &Observable,
        lambda: f64,
        tol: &Tolerances,
    ) -> Result<Self> {
        let a_eig = hermitian_eig(a.matrix(), tol)?;
        let q_eig = hermitian_eig(q.matrix(), tol)?;
        let props: Vec<ComplexMatrix> = a_eig
            .values
            .iter()
            .map(|&aj| q_eig.map(|qk| C64::from_polar(1.0, lambda * aj * qk)))
            .collect();
        let evolved: Vec<ComplexMatrix> = props.iter().map(|v| v * rho_det.matrix()).collect();
        let d = props.len();
        let mut g_norm = Vec::with_capacity(d * d);
        let mut g_out = Vec::with_capacity(d * d);
        for y in &evolved {
            let oy = o.matrix() * y;
            for v in &props {
                let vd = v.adjoint();
                g_norm.push(y.trace_product(&vd));
                g_out.push(oy.trace_product(&vd));
            }
        }
        Ok(Self {
            a_basis: a_eig.vectors,
            dim: d,
            g_norm,
            g_out,
        })
    }

    /// (N, M) for the given preparation and postselection.
    pub fn evaluate(&self, rho_i: &DensityMatrix, e_f: &PovmElement) -> (f64, f64) {
        let rho = rho_i.matrix().compress(&self.a_basis);
        let e = e_f.matrix().compress(&self.a_basis);
        let (mut n, mut m) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        for j in 0..self.dim {
            for k in 0..self.dim {
                let w = rho.get(j, k) * e.get(k, j);
                n += w * self.g_norm[j * self.dim + k];
                m += w * self.g_out[j * self.dim + k];
            }
        }
        (n.re, m.re)
    }
}

/// Normalized first-order outcome probabilities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityReport {
    /// P(o, E_f) per outcome projector, in input order.
    pub joint: Vec<f64>,
    /// P(E_f)
    pub marginal: f64,
    /// 1 + λ²⟨A²⟩_i⟨q²⟩, the factor the unnormalized expansion sums to.
    pub normalization: f64,
}

/// Projectors onto the eigenspaces of `o`, ascending eigenvalue; eigenvalues
/// closer than 1e-9·max(1, ‖o‖) share a projector.
pub fn spectral_projectors(o: &Observable) -> Vec<Observable> {
    let eig: HermitianEigen = o.eigen();
    let gap = 1e-9 * eig.spectral_radius().max(1.0);
    let mut out: Vec<ComplexMatrix> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (j, &e) in eig.values.iter().enumerate() {
        let v = eig.vector(j);
        let p = ComplexMatrix::projector(&v);
        if e - last > gap || out.is_empty() {
            out.push(p);
        } else {
            let top = out.pop().expect("non-empty");
            out.push(&top + &p);
        }
        last = e;
    }
    out.into_iter().map(Observable::from_trusted).collect()
}

/// Positivity-preserving expansion of P(o, E_f) and P(E_f), divided by the
/// normalization 1 + λ²⟨A²⟩_i⟨q²⟩.
pub fn normalized_probabilities(
    setup: &MeasurementSetup,
    outcomes: &[Observable],
    tol: &Tolerances,
) -> Result<ProbabilityReport> {
    let dd = setup.rho_det.dim();
    let mut total = ComplexMatrix::zeros(dd, dd);
    for p in outcomes {
        if p.dim() != dd {
            return Err(Error::DimensionMismatch(format!(
                "outcome projector is {0}x{0}, detector is {dd}x{dd}",
                p.dim()
            )));
        }
        total = &total + p.matrix();
    }
    let resid = total.max_abs_diff(&ComplexMatrix::identity(dd));
    if resid > tol.general_rel.max(1e-9) * dd as f64 {
        return Err(Error::InvalidParameter(format!(
            "outcome projectors do not resolve the identity (residual {resid:e})"
        )));
    }

    let t = weak_value_triple(&setup.e_f, &setup.rho_i, &setup.a, tol)?;
    let lambda = setup.lambda;
    let (q, rho) = (setup.q.matrix(), setup.rho_det.matrix());
    let a2_mean = setup.rho_i.expect(&(setup.a.matrix() * setup.a.matrix()));
    let q2_mean = setup.rho_det.expect(&(q * q));
    let normalization = 1.0 + lambda * lambda * a2_mean * q2_mean;

    let term = |proj: &ComplexMatrix| -> f64 {
        // ω⟨Π⟩ + λ(iα⟨Πq⟩ + c.c.) + λ²β⟨qΠq⟩
        let pi = proj.trace_product(rho).re;
        let piq = (proj * q).trace_product(rho);
        let qpq = (&(q * proj) * q).trace_product(rho).re;
        t.omega * pi + lambda * 2.0 * (I * t.alpha * piq).re + lambda * lambda * t.beta * qpq
    };
    let joint = outcomes.iter().map(|p| term(p.matrix()) / normalization).collect();
    let marginal = term(&ComplexMatrix::identity(dd)) / normalization;
    Ok(ProbabilityReport {
        joint,
        marginal,
        normalization,
    })
}

/// Sufficient condition for the first-order expansion and actual vs bounded
/// errors of (N₁, M₁).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidityReport {
    pub delta: f64,
    pub n_max: u32,
    pub condition_holds: bool,
    /// Tr[E_f](e^δ − 1 − δ)
    pub epsilon: f64,
    pub n_error_bound: f64,
    /// (1 + u)⟨o²⟩^{1/2}ε; rests on an unproven assumption about the readout.
    pub m_error_bound: f64,
    pub u_conjecture: f64,
    pub n_error_actual: f64,
    pub m_error_actual: f64,
    /// The condition holds but |M − M₁| exceeds `m_error_bound`.
    pub m_bound_violated: bool,
}

/// Checks (2λ max|A|)ⁿ ⟨q^{2n}⟩^{1/2} ≤ δⁿ for n = 1..=n_max.
pub fn perturbative_condition(
    lambda: f64,
    a_max: f64,
    rho_det: &DensityMatrix,
    q: &Observable,
    delta: f64,
    n_max: u32,
) -> bool {
    let q_eig = q.eigen();
    let pops: Vec<f64> = (0..q_eig.values.len())
        .map(|k| {
            let v = q_eig.vector(k);
            let rv = ComplexMatrix::projector(&v).trace_product(rho_det.matrix()).re;
            rv.max(0.0)
        })
        .collect();
    let base = 2.0 * lambda.abs() * a_max;
    (1..=n_max).all(|n| {
        let moment: f64 = q_eig
            .values
            .iter()
            .zip(&pops)
            .map(|(qk, w)| w * qk.powi(2 * n as i32))
            .sum();
        // compare n-th roots to keep the numbers in range
        base * moment.sqrt().powf(1.0 / n as f64) <= delta * (1.0 + 1e-12)
    })
}

pub fn validity_report(
    setup: &MeasurementSetup,
    delta: f64,
    n_max: u32,
    u: f64,
    tol: &Tolerances,
) -> Result<ValidityReport> {
    if !(delta > 0.0) || n_max < 2 {
        return Err(Error::InvalidParameter(format!(
            "validity check needs delta > 0 and n_max >= 2 (got {delta}, {n_max})"
        )));
    }
    let a_max = setup.a.spectral_radius();
    let condition_holds = perturbative_condition(setup.lambda, a_max, &setup.rho_det, &setup.q, delta, n_max);
    let epsilon = setup.e_f.trace() * (delta.exp_m1() - delta);
    let o2 = setup.rho_det.expect(&(setup.o.matrix() * setup.o.matrix()));
    let m_error_bound = (1.0 + u) * o2.max(0.0).sqrt() * epsilon;

    let kernel = PostselectionKernel::new(&setup.a, &setup.rho_det, &setup.q, &setup.o, setup.lambda, tol)?;
    let (n, m) = kernel.evaluate(&setup.rho_i, &setup.e_f);
    let t = weak_value_triple(&setup.e_f, &setup.rho_i, &setup.a, tol)?;
    let avg = DetectorAverages::new(&setup.rho_det, &setup.q, &setup.o);
    let (m1, n1) = first_order_terms(&t, &avg, setup.lambda);
    let m_error_actual = (m - m1).abs();
    Ok(ValidityReport {
        delta,
        n_max,
        condition_holds,
        epsilon,
        n_error_bound: epsilon,
        m_error_bound,
        u_conjecture: u,
        n_error_actual: (n - n1).abs(),
        m_error_actual,
        m_bound_violated: condition_holds && m_error_actual > m_error_bound,
    })
}
