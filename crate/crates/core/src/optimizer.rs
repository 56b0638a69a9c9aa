//! Extremal conditional outputs over the admissible weak values, the
//! uncertainty-relation bound on them, a detector construction that escapes
//! that bound, and the coupling that maximizes the output at fixed weak values.
//!
//! In the standardized frame (q centered, A rescaled by λσ_q) the shift of the
//! conditional output is
//!
//! ```text
//!     ⟨δo⟩ = (c·x − a·y + s·z) / (1 + z),   x = Re A_w, y = Im A_w, z = B_w,
//! ```
//!
//! over the region z ≥ x² + y². Its level sets are planes, and the extrema are
//! the two planes tangent to the paraboloid z = x² + y².

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, ComplexMatrix, Tolerances, C64};
use crate::simulator::{perturbative_condition, DEFAULT_N_MAX};
use crate::states::{DensityMatrix, MeasurementSetup, Observable};

/// Relative size below which a moment counts as zero.
pub const ZERO_MOMENT_REL: f64 = 1e-12;

/// Kernel cutoff for the standardized pointer, relative to its norm.
pub const KERNEL_CUTOFF_REL: f64 = 1e-10;

/// Averages of the anticommutator a = ⟨{δo, ξ}⟩, commutator c = ⟨i[δo, ξ]⟩
/// and sandwich s = ⟨ξ δo ξ⟩, with ξ = (q − q̄)/σ_q, plus the raw moments
/// they were built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectorMoments {
    pub a: f64,
    pub c: f64,
    pub s: f64,
    pub o_mean: f64,
    /// NaN when the moments were supplied directly.
    pub sigma_o: f64,
    pub q_mean: f64,
    pub sigma_q: f64,
    /// q̄/σ_q; only the coupling optimization uses it.
    pub xi_mean: f64,
}

impl DetectorMoments {
    /// Moments given directly, with a centered unit-variance pointer and an
    /// unknown readout spread.
    pub fn from_acs(a: f64, c: f64, s: f64) -> Self {
        Self {
            a,
            c,
            s,
            o_mean: 0.0,
            sigma_o: f64::NAN,
            q_mean: 0.0,
            sigma_q: 1.0,
            xi_mean: 0.0,
        }
    }

    pub fn from_detector(rho_det: &DensityMatrix, q: &Observable, o: &Observable) -> Result<Self> {
        if q.dim() != rho_det.dim() || o.dim() != rho_det.dim() {
            return Err(Error::DimensionMismatch("detector operators and state differ in dimension".into()));
        }
        let q_mean = rho_det.expect(q.matrix());
        let dq = q.shifted(q_mean);
        let var_q = rho_det.expect(&(dq.matrix() * dq.matrix()));
        let scale_q = q.matrix().max_abs().max(f64::MIN_POSITIVE);
        if !(var_q > (1e-14 * scale_q).powi(2)) {
            return Err(Error::InvalidParameter(
                "pointer variable has zero spread in the detector state".into(),
            ));
        }
        let sigma_q = var_q.sqrt();
        let xi = dq.matrix().scale_real(1.0 / sigma_q);
        let o_mean = rho_det.expect(o.matrix());
        let d_o = o.shifted(o_mean);
        let d_o = d_o.matrix();
        let sigma_o = rho_det.expect(&(d_o * d_o)).max(0.0).sqrt();
        let rho = rho_det.matrix();
        let a = d_o.anticommutator(&xi).trace_product(rho).re;
        let c = (d_o.commutator(&xi).scale(C64::new(0.0, 1.0))).trace_product(rho).re;
        let s = (&(&xi * d_o) * &xi).trace_product(rho).re;
        Ok(Self {
            a,
            c,
            s,
            o_mean,
            sigma_o,
            q_mean,
            sigma_q,
            xi_mean: q_mean / sigma_q,
        })
    }

    /// ⟨δo⟩ at rescaled weak values (x, y, z).
    pub fn output_at(&self, x: f64, y: f64, z: f64) -> f64 {
        (self.c * x - self.a * y + self.s * z) / (1.0 + z)
    }

    fn zero_scale(&self) -> f64 {
        let mut scale = 1.0f64.max(self.o_mean.abs());
        if self.sigma_o.is_finite() {
            scale = scale.max(self.sigma_o);
        }
        ZERO_MOMENT_REL * scale
    }

    /// a = c = s = 0: the output vanishes identically at this order.
    pub fn is_all_zero(&self) -> bool {
        self.a.abs().max(self.c.abs()).max(self.s.abs()) <= self.zero_scale()
    }

    /// a = c = 0 with s ≠ 0.
    pub fn is_degenerate(&self) -> bool {
        self.a.hypot(self.c) <= self.zero_scale().max(ZERO_MOMENT_REL * self.s.abs())
    }
}

/// Conversion factor λσ_q between physical and rescaled weak values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rescale {
    pub lambda_sigma_q: f64,
}

impl Rescale {
    pub fn to_rescaled(&self, a_w: C64, b_w: f64) -> WeakValuePoint {
        let k = self.lambda_sigma_q;
        WeakValuePoint {
            x: k * a_w.re,
            y: k * a_w.im,
            z: k * k * b_w,
        }
    }

    /// (A_w, B_w) for a rescaled point; `None` at zero coupling.
    pub fn to_physical(&self, p: &WeakValuePoint) -> Option<(C64, f64)> {
        let k = self.lambda_sigma_q;
        (k != 0.0).then(|| (C64::new(p.x / k, p.y / k), p.z / (k * k)))
    }
}

/// Detector moments of a setup and the factor mapping its weak values into
/// the standardized frame.
pub fn standardize(setup: &MeasurementSetup) -> Result<(DetectorMoments, Rescale)> {
    let m = DetectorMoments::from_detector(&setup.rho_det, &setup.q, &setup.o)?;
    Ok((
        m,
        Rescale {
            lambda_sigma_q: setup.lambda * m.sigma_q,
        },
    ))
}

/// ξ = (q − ⟨q⟩)/σ_q with respect to `rho_det`.
pub fn standardized_pointer(q: &Observable, rho_det: &DensityMatrix) -> Result<Observable> {
    let m = DetectorMoments::from_detector(rho_det, q, q)?;
    Ok(Observable::from_trusted(q.shifted(m.q_mean).matrix().scale_real(1.0 / m.sigma_q)))
}

/// Rescaled weak values: x = Re A_w, y = Im A_w, z = B_w.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakValuePoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WeakValuePoint {
    pub fn on_boundary(x: f64, y: f64) -> Self {
        Self { x, y, z: x * x + y * y }
    }

    /// z − (x² + y²); non-negative inside the admissible region.
    pub fn boundary_gap(&self) -> f64 {
        self.z - (self.x * self.x + self.y * self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtremumResult {
    pub max_value: f64,
    pub min_value: f64,
    /// `None` when the maximum is only approached at infinity.
    pub max_point: Option<WeakValuePoint>,
    pub min_point: Option<WeakValuePoint>,
    /// a = c = 0.
    pub degenerate: bool,
    /// One extremum is approached only as B_w → ∞ (orthogonal preparation
    /// and postselection).
    pub attained_at_infinity: bool,
}

/// Extremal values (s ± √(a² + c² + s²))/2 and their tangency points on the
/// paraboloid.
pub fn extremal_outputs(m: &DetectorMoments) -> Result<ExtremumResult> {
    if m.is_all_zero() {
        return Err(Error::Degenerate("a = c = s = 0".into()));
    }
    let (a, c, s) = (m.a, m.c, m.s);
    if m.is_degenerate() {
        // Horizontal planes: tangent at the origin (value 0) and at infinity (value s).
        let origin = Some(WeakValuePoint { x: 0.0, y: 0.0, z: 0.0 });
        let (max_value, min_value, max_point, min_point) = if s > 0.0 {
            (s, 0.0, None, origin)
        } else {
            (0.0, s, origin, None)
        };
        return Ok(ExtremumResult {
            max_value,
            min_value,
            max_point,
            min_point,
            degenerate: true,
            attained_at_infinity: true,
        });
    }
    let rho2 = a * a + c * c;
    let r = (rho2 + s * s).sqrt();
    // r ± s > 0 whenever a² + c² > 0; these forms avoid cancellation.
    let (up, down) = (r + s, r - s);
    let max_value = if s >= 0.0 { up / 2.0 } else { rho2 / (2.0 * down) };
    let min_value = if s <= 0.0 { -down / 2.0 } else { -rho2 / (2.0 * up) };
    Ok(ExtremumResult {
        max_value,
        min_value,
        max_point: Some(WeakValuePoint::on_boundary(c / down, -a / down)),
        min_point: Some(WeakValuePoint::on_boundary(-c / up, a / up)),
        degenerate: false,
        attained_at_infinity: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TradeoffBound {
    /// |s/2| + √(σ_o² + s²/4)
    pub bound: f64,
    /// 4σ_o² = a² + c² within tolerance.
    pub saturates_sr: bool,
}

/// Upper bound on |⟨δo⟩| implied by 4σ_o² ≥ a² + c².
pub fn tradeoff_bound(m: &DetectorMoments) -> Result<TradeoffBound> {
    if !m.sigma_o.is_finite() {
        return Err(Error::InvalidParameter("readout spread sigma_o is unknown".into()));
    }
    let half_s = m.s / 2.0;
    let bound = half_s.abs() + (m.sigma_o * m.sigma_o + half_s * half_s).sqrt();
    let slack = 4.0 * m.sigma_o * m.sigma_o - (m.a * m.a + m.c * m.c);
    let tol = 1e-9 * (4.0 * m.sigma_o * m.sigma_o).max(1e-300);
    Ok(TradeoffBound {
        bound,
        saturates_sr: slack < tol,
    })
}

/// Detector preparation built so the sandwich average equals Tr[o ρ̃].
#[derive(Debug, Clone, Serialize)]
pub struct AmplificationPlan {
    pub rho_det: Option<DensityMatrix>,
    /// Tr[o ξ ρ_det ξ] measured on the constructed state.
    pub achieved_s: f64,
    /// Tr[o ρ̃], what the construction promises.
    pub target_s: f64,
    pub kernel_dim: usize,
    /// Tr[ξ⁻¹ ρ̃ ξ⁻¹], the weight the complement block takes.
    pub complement_weight: f64,
    /// Tr[ξ⁻¹ ρ̃] = ⟨ξ⟩ in the constructed state; zero when ξ stays the
    /// standardized pointer of the new state.
    pub pointer_mean: f64,
    pub feasible: bool,
    pub infeasibility_reason: Option<String>,
}

struct PointerSplit {
    kernel: Vec<Vec<C64>>,
    /// ξ⁻¹ on the complement of the kernel (zero on the kernel).
    inverse: ComplexMatrix,
}

fn split_pointer(xi: &Observable, tol: &Tolerances) -> Result<PointerSplit> {
    let eig = hermitian_eig(xi.matrix(), tol)?;
    let cutoff = KERNEL_CUTOFF_REL * eig.spectral_radius();
    let d = xi.dim();
    let mut kernel = Vec::new();
    let mut inverse = ComplexMatrix::zeros(d, d);
    for (j, &e) in eig.values.iter().enumerate() {
        let v = eig.vector(j);
        if e.abs() <= cutoff {
            kernel.push(v);
        } else {
            inverse = &inverse + &ComplexMatrix::projector(&v).scale_real(1.0 / e);
        }
    }
    Ok(PointerSplit { kernel, inverse })
}

fn kernel_projector(kernel: &[Vec<C64>], d: usize) -> ComplexMatrix {
    kernel
        .iter()
        .fold(ComplexMatrix::zeros(d, d), |acc, v| &acc + &ComplexMatrix::projector(v))
}

/// Picks ρ̃ on the complement of ker ξ: the top eigenvector of o compressed
/// to the complement, or, with `target_s`, the mixture of the top and bottom
/// eigenvectors whose o-average equals the target.
pub fn select_rho_tilde(xi: &Observable, o: &Observable, target_s: Option<f64>, tol: &Tolerances) -> Result<DensityMatrix> {
    let split = split_pointer(xi, tol)?;
    let d = xi.dim();
    let p_k = kernel_projector(&split.kernel, d);
    let complement: Vec<Vec<C64>> = {
        let p_c = &ComplexMatrix::identity(d) - &p_k;
        let eig = hermitian_eig(&p_c, tol)?;
        (0..d).filter(|&j| eig.values[j] > 0.5).map(|j| eig.vector(j)).collect()
    };
    if complement.is_empty() {
        return Err(Error::Precondition("pointer kernel is the whole space".into()));
    }
    let basis = ComplexMatrix::from_columns(&complement, d);
    let o_c = o.matrix().compress(&basis);
    let eig = hermitian_eig(&o_c, tol)?;
    let lift = |j: usize| -> Vec<C64> {
        let v = eig.vector(j);
        (0..d).map(|i| (0..v.len()).map(|k| basis.get(i, k) * v[k]).sum()).collect()
    };
    let top = lift(eig.values.len() - 1);
    let Some(target) = target_s else {
        return DensityMatrix::pure(&top);
    };
    let (lo, hi) = (eig.min(), eig.max());
    let slack = 1e-12 * hi.abs().max(lo.abs()).max(1.0);
    if target > hi + slack || target < lo - slack {
        return Err(Error::Precondition(format!(
            "target sandwich average {target} outside [{lo}, {hi}] reachable on the complement"
        )));
    }
    let p = if hi - lo > slack { ((target - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 1.0 };
    let bottom = lift(0);
    let m = &ComplexMatrix::projector(&top).scale_real(p) + &ComplexMatrix::projector(&bottom).scale_real(1.0 - p);
    DensityMatrix::new(m, tol)
}

/// ρ_det = ξ⁻¹ρ̃ξ⁻¹ ⊕ ρ_K with ρ_K ≥ 0 on ker ξ chosen so that Tr ρ_det = 1
/// and Tr[o ρ_det] = `target_o_avg`. Then ξρ_detξ = ρ̃ and the sandwich
/// average equals Tr[o ρ̃].
pub fn amplifying_detector_state(
    xi: &Observable,
    o: &Observable,
    rho_tilde: &DensityMatrix,
    target_o_avg: f64,
    tol: &Tolerances,
) -> Result<AmplificationPlan> {
    let d = xi.dim();
    if o.dim() != d || rho_tilde.dim() != d {
        return Err(Error::DimensionMismatch("pointer, readout and rho_tilde differ in dimension".into()));
    }
    let split = split_pointer(xi, tol)?;
    let p_k = kernel_projector(&split.kernel, d);
    let leak = (&p_k * rho_tilde.matrix()).max_abs();
    if leak > 1e-9 {
        return Err(Error::Precondition(format!(
            "rho_tilde has weight {leak:e} on the kernel of the pointer"
        )));
    }

    let target_s = rho_tilde.expect(o.matrix());
    let rho_c = &(&split.inverse * rho_tilde.matrix()) * &split.inverse;
    let complement_weight = rho_c.trace().re;
    let pointer_mean = split.inverse.trace_product(rho_tilde.matrix()).re;
    let budget = 1.0 - complement_weight;
    let need = target_o_avg - rho_c.trace_product(o.matrix()).re;
    let o_scale = 1e-9 * o.matrix().max_abs().max(1.0);

    let infeasible = |reason: String| AmplificationPlan {
        rho_det: None,
        achieved_s: f64::NAN,
        target_s,
        kernel_dim: split.kernel.len(),
        complement_weight,
        pointer_mean,
        feasible: false,
        infeasibility_reason: Some(reason),
    };

    if budget < -1e-9 {
        return Ok(infeasible(format!(
            "Tr[xi^-1 rho_tilde xi^-1] = {complement_weight} exceeds the unit trace budget"
        )));
    }
    let budget = budget.max(0.0);

    let rho_k = if split.kernel.is_empty() {
        if budget > 1e-9 || need.abs() > o_scale {
            return Ok(infeasible(format!(
                "pointer kernel is trivial; the complement block has trace {complement_weight} \
                 and readout average offset {need}, neither of which can be corrected"
            )));
        }
        ComplexMatrix::zeros(d, d)
    } else {
        let basis = ComplexMatrix::from_columns(&split.kernel, d);
        let o_k = hermitian_eig(&o.matrix().compress(&basis), tol)?;
        let (lo, hi) = (budget * o_k.min(), budget * o_k.max());
        if need < lo - o_scale || need > hi + o_scale {
            return Ok(infeasible(format!(
                "no positive kernel block with trace {budget} gives readout contribution {need} \
                 (reachable range [{lo}, {hi}])"
            )));
        }
        let p = if hi - lo > o_scale { ((need - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 1.0 };
        let kmax = o_k.vector(o_k.values.len() - 1);
        let kmin = o_k.vector(0);
        let small = &ComplexMatrix::projector(&kmax).scale_real(budget * p)
            + &ComplexMatrix::projector(&kmin).scale_real(budget * (1.0 - p));
        &(&basis * &small) * &basis.adjoint()
    };

    let rho_det = DensityMatrix::new(&rho_c + &rho_k, tol)?;
    let sandwich = &(xi.matrix() * rho_det.matrix()) * xi.matrix();
    let achieved_s = sandwich.trace_product(o.matrix()).re;
    Ok(AmplificationPlan {
        rho_det: Some(rho_det),
        achieved_s,
        target_s,
        kernel_dim: split.kernel.len(),
        complement_weight,
        pointer_mean,
        feasible: true,
        infeasibility_reason: None,
    })
}

/// Stationary point of the output as a function of the coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryPoint {
    /// Dimensionless coupling λσ_q.
    pub lambda: f64,
    /// λ in physical units (λσ_q / σ_q).
    pub lambda_physical: f64,
    pub value: f64,
    /// Whether the perturbative sufficient condition holds at this coupling;
    /// `None` until checked against a setup.
    pub perturbative: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingOptimum {
    /// Real stationary points, highest value first.
    pub roots: Vec<StationaryPoint>,
    /// Roots of the closed form as commonly printed, whose radical carries an
    /// extra factor 4 relative to the stationarity condition.
    pub literal_roots: Vec<f64>,
    pub literal_values: Vec<f64>,
    /// Output in the limit |λ| → ∞.
    pub limit_at_infinity: f64,
}

/// Coefficients of ⟨δo⟩(ℓ) = (Pℓ + Qℓ²)/(1 + Rℓ + Tℓ²), ℓ = λσ_q.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingCoefficients {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub t: f64,
}

impl CouplingCoefficients {
    /// With q not centered, ⟨q δo q⟩ = σ_q²(s + ξ̄a), so the quadratic
    /// numerator coefficient is (s + ξ̄a)B_w.
    pub fn new(m: &DetectorMoments, a_w: C64, b_w: f64) -> Self {
        Self {
            p: m.c * a_w.re - m.a * a_w.im,
            q: (m.s + m.xi_mean * m.a) * b_w,
            r: -2.0 * m.xi_mean * a_w.im,
            t: (1.0 + m.xi_mean * m.xi_mean) * b_w,
        }
    }

    pub fn output(&self, l: f64) -> f64 {
        (self.p * l + self.q * l * l) / (1.0 + self.r * l + self.t * l * l)
    }
}

/// Extrema of the output over the coupling, from the stationarity condition
/// (PT − QR)ℓ² − 2Qℓ − P = 0.
pub fn optimal_coupling(m: &DetectorMoments, a_w: C64, b_w: f64) -> Result<CouplingOptimum> {
    if !(b_w.is_finite() && a_w.re.is_finite() && a_w.im.is_finite()) {
        return Err(Error::InvalidParameter("weak values must be finite".into()));
    }
    if b_w < a_w.norm_sqr() * (1.0 - 1e-9) - 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "B_w = {b_w} is below |A_w|^2 = {}",
            a_w.norm_sqr()
        )));
    }
    let k = CouplingCoefficients::new(m, a_w, b_w);
    let scale = k.p.abs().max(k.q.abs());
    if scale <= ZERO_MOMENT_REL * (1.0 + m.o_mean.abs()) {
        return Err(Error::Degenerate("output identically zero in the coupling".into()));
    }
    let lead = k.p * k.t - k.q * k.r;
    let mut roots = Vec::new();
    if lead.abs() <= 1e-14 * (k.p * k.t).abs().max((k.q * k.r).abs()).max(f64::MIN_POSITIVE) {
        if k.q != 0.0 {
            roots.push(-k.p / (2.0 * k.q));
        }
    } else {
        let disc = k.q * k.q + k.p * lead;
        if disc >= 0.0 {
            let root = disc.sqrt();
            let big = k.q + if k.q >= 0.0 { root } else { -root };
            if big != 0.0 {
                let l1 = big / lead;
                roots.push(l1);
                roots.push(-k.p / big);
            } else {
                roots.push(0.0);
            }
        }
    }
    let mut points: Vec<StationaryPoint> = roots
        .into_iter()
        .map(|l| StationaryPoint {
            lambda: l,
            lambda_physical: l / m.sigma_q,
            value: k.output(l),
            perturbative: None,
        })
        .collect();
    points.sort_by(|u, v| v.value.total_cmp(&u.value));

    let (literal_roots, literal_values) = literal_coupling_roots(m, a_w, b_w)
        .into_iter()
        .map(|l| (l, k.output(l)))
        .unzip();
    let limit_at_infinity = if k.t > 0.0 { k.q / k.t } else { 0.0 };
    Ok(CouplingOptimum {
        roots: points,
        literal_roots,
        literal_values,
        limit_at_infinity,
    })
}

/// Roots of the printed closed form
/// [s ± √(s² + 4P((1+ξ̄²)P + 2sξ̄A'')/B)] / ((1+ξ̄²)P + 2sξ̄A'').
pub fn literal_coupling_roots(m: &DetectorMoments, a_w: C64, b_w: f64) -> Vec<f64> {
    let p = m.c * a_w.re - m.a * a_w.im;
    let den = (1.0 + m.xi_mean * m.xi_mean) * p + 2.0 * m.s * m.xi_mean * a_w.im;
    let disc = m.s * m.s + 4.0 * p * den / b_w;
    if den == 0.0 || !(disc >= 0.0) || b_w == 0.0 {
        return Vec::new();
    }
    let root = disc.sqrt();
    vec![(m.s + root) / den, (m.s - root) / den]
}

/// Marks each stationary point with whether the perturbative sufficient
/// condition holds at its physical coupling for this setup.
pub fn flag_perturbative(opt: &mut CouplingOptimum, setup: &MeasurementSetup, delta: f64) {
    let a_max = setup.a.spectral_radius();
    for p in &mut opt.roots {
        p.perturbative = Some(perturbative_condition(
            p.lambda_physical,
            a_max,
            &setup.rho_det,
            &setup.q,
            delta,
            DEFAULT_N_MAX,
        ));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{fock_state, oscillator_operators};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn ground_state_momentum_moments() {
        let (q, p) = oscillator_operators(16).unwrap();
        let g = fock_state(16, 0).unwrap();
        let m = DetectorMoments::from_detector(&g, &q, &p).unwrap();
        assert_close(m.a, 0.0, 1e-14);
        assert_close(m.c, 2f64.sqrt(), 1e-14);
        assert_close(m.s, 0.0, 1e-14);
        assert_close(m.sigma_o, std::f64::consts::FRAC_1_SQRT_2, 1e-14);
        assert_close(m.sigma_q, std::f64::consts::FRAC_1_SQRT_2, 1e-14);
    }

    #[test]
    fn position_readout_moments() {
        let (q, _) = oscillator_operators(10).unwrap();
        let rho = crate::states::random_mixed_state(10, 4).unwrap();
        let m = DetectorMoments::from_detector(&rho, &q, &q).unwrap();
        assert_close(m.c, 0.0, 1e-12);
        assert_close(m.a, 2.0 * m.sigma_q, 1e-12);
        let dq = q.shifted(m.q_mean);
        let third = rho.expect(&dq.matrix().powi(3));
        assert_close(m.s, third / (m.sigma_q * m.sigma_q), 1e-12);
        // symmetric state: third central moment vanishes
        let g = fock_state(10, 0).unwrap();
        assert_close(DetectorMoments::from_detector(&g, &q, &q).unwrap().s, 0.0, 1e-14);
    }

    #[test]
    fn identity_readout_is_all_zero() {
        let (q, _) = oscillator_operators(8).unwrap();
        let g = fock_state(8, 0).unwrap();
        let m = DetectorMoments::from_detector(&g, &q, &Observable::identity(8)).unwrap();
        assert!(m.is_all_zero());
        assert!(matches!(extremal_outputs(&m), Err(Error::Degenerate(_))));
    }

    #[test]
    fn zero_spread_pointer_is_rejected() {
        let (q, p) = oscillator_operators(4).unwrap();
        // eigenstate of a diagonal pointer
        let qd = Observable::new(ComplexMatrix::from_real_diagonal(&[0.0, 1.0, 2.0, 3.0]), &Tolerances::default()).unwrap();
        let e = fock_state(4, 2).unwrap();
        assert!(DetectorMoments::from_detector(&e, &qd, &p).is_err());
        assert!(DetectorMoments::from_detector(&e, &q, &p).is_ok());
    }

    #[test]
    fn fig1_moments() {
        let r = extremal_outputs(&DetectorMoments::from_acs(0.0, 1.0, 0.0)).unwrap();
        assert_close(r.max_value, 0.5, 1e-15);
        assert_close(r.min_value, -0.5, 1e-15);
        assert_eq!(r.max_point, Some(WeakValuePoint { x: 1.0, y: 0.0, z: 1.0 }));
        let mp = r.min_point.unwrap();
        assert_close(mp.x, -1.0, 1e-15);
        assert_close(mp.z, 1.0, 1e-15);
    }

    #[test]
    fn three_four_zero() {
        let r = extremal_outputs(&DetectorMoments::from_acs(3.0, 4.0, 0.0)).unwrap();
        assert_close(r.max_value, 2.5, 1e-15);
        assert_close(r.min_value, -2.5, 1e-15);
    }

    #[test]
    fn degenerate_sandwich_only() {
        let r = extremal_outputs(&DetectorMoments::from_acs(0.0, 0.0, 2.0)).unwrap();
        assert!(r.degenerate && r.attained_at_infinity);
        assert_eq!((r.max_value, r.min_value), (2.0, 0.0));
        assert!(r.max_point.is_none());
        assert_eq!(r.min_point, Some(WeakValuePoint { x: 0.0, y: 0.0, z: 0.0 }));
        let r = extremal_outputs(&DetectorMoments::from_acs(0.0, 0.0, -1.0)).unwrap();
        assert_eq!((r.max_value, r.min_value), (0.0, -1.0));
        assert!(r.min_point.is_none());
    }

    #[test]
    fn extremal_points_lie_on_boundary_and_reproduce_values() {
        for (a, c, s) in [(0.3, -1.2, 4.0), (2.0, 0.1, -3.0), (-0.5, 0.5, 0.5), (1e-3, 0.0, 5.0)] {
            let m = DetectorMoments::from_acs(a, c, s);
            let r = extremal_outputs(&m).unwrap();
            for (v, p) in [(r.max_value, r.max_point.unwrap()), (r.min_value, r.min_point.unwrap())] {
                assert!(p.boundary_gap().abs() <= 1e-9 * (1.0 + p.z));
                assert_close(m.output_at(p.x, p.y, p.z), v, 1e-12 * (1.0 + v.abs()));
            }
            assert_close(r.max_value * r.min_value, -(a * a + c * c) / 4.0, 1e-12);
        }
    }

    #[test]
    fn tradeoff_cases() {
        let mut m = DetectorMoments::from_acs(0.0, 1.0, 0.0);
        assert!(tradeoff_bound(&m).is_err());
        m.sigma_o = 0.7;
        let b = tradeoff_bound(&m).unwrap();
        assert_close(b.bound, 0.7, 1e-15);
        assert!(!b.saturates_sr);
        m.sigma_o = 0.5;
        assert!(tradeoff_bound(&m).unwrap().saturates_sr);
        m.s = 2.0;
        m.sigma_o = 1.0;
        assert_close(tradeoff_bound(&m).unwrap().bound, 1.0 + 2f64.sqrt(), 1e-15);
    }

    #[test]
    fn rescale_round_trip() {
        let r = Rescale { lambda_sigma_q: 0.02 };
        let p = r.to_rescaled(C64::new(3.0, -4.0), 30.0);
        let (a, b) = r.to_physical(&p).unwrap();
        assert!((a - C64::new(3.0, -4.0)).norm() < 1e-12);
        assert_close(b, 30.0, 1e-12);
        assert!(Rescale { lambda_sigma_q: 0.0 }.to_physical(&p).is_none());
    }

    #[test]
    fn coupling_canonical_case() {
        let m = DetectorMoments::from_acs(0.0, 1.0, 0.0);
        let opt = optimal_coupling(&m, C64::new(1.0, 0.0), 1.0).unwrap();
        assert_eq!(opt.roots.len(), 2);
        assert_close(opt.roots[0].lambda, 1.0, 1e-14);
        assert_close(opt.roots[0].value, 0.5, 1e-14);
        assert_close(opt.roots[1].lambda, -1.0, 1e-14);
        assert_close(opt.roots[1].value, -0.5, 1e-14);
        let mut lit = opt.literal_roots.clone();
        lit.sort_by(f64::total_cmp);
        assert_close(lit[0], -2.0, 1e-14);
        assert_close(lit[1], 2.0, 1e-14);
        assert!(opt.literal_values.iter().all(|v| (v.abs() - 0.4).abs() < 1e-14));
    }

    #[test]
    fn coupling_symmetric_roots_when_q_zero() {
        let m = DetectorMoments::from_acs(0.7, -0.4, 0.0);
        let opt = optimal_coupling(&m, C64::new(0.3, 1.1), 2.0).unwrap();
        assert_eq!(opt.roots.len(), 2);
        assert_close(opt.roots[0].lambda, -opt.roots[1].lambda, 1e-14);
    }

    #[test]
    fn coupling_errors() {
        let m = DetectorMoments::from_acs(0.0, 1.0, 0.0);
        assert!(matches!(optimal_coupling(&m, C64::new(0.0, 0.0), 1.0), Err(Error::Degenerate(_))));
        assert!(optimal_coupling(&m, C64::new(2.0, 0.0), 1.0).is_err());
    }

    fn amp_detector(l: f64, s_val: f64) -> (Observable, Observable, DensityMatrix) {
        let tol = Tolerances::default();
        let xi = Observable::new(ComplexMatrix::from_real_diagonal(&[0.0, l, -l, l]), &tol).unwrap();
        let budget = 1.0 - 1.0 / (l * l);
        let o00 = s_val / (l * l * budget);
        let o = Observable::new(
            ComplexMatrix::from_real(4, 4, &[
                o00, 0.0, 0.0, 0.0, //
                0.0, 0.0, s_val, 0.0, //
                0.0, s_val, 0.0, 0.0, //
                0.0, 0.0, 0.0, 0.0,
            ])
            .unwrap(),
            &tol,
        )
        .unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let z = C64::new(0.0, 0.0);
        let phi = DensityMatrix::pure(&[z, C64::new(r, 0.0), C64::new(r, 0.0), z]).unwrap();
        (xi, o, phi)
    }

    #[test]
    fn amplification_feasible_construction() {
        let tol = Tolerances::default();
        let (xi, o, phi) = amp_detector(20.0, 3.0);
        let plan = amplifying_detector_state(&xi, &o, &phi, 0.0, &tol).unwrap();
        assert!(plan.feasible, "{:?}", plan.infeasibility_reason);
        assert_eq!(plan.kernel_dim, 1);
        let rho = plan.rho_det.unwrap();
        assert_close(rho.matrix().trace().re, 1.0, 1e-12);
        assert_close(rho.expect(o.matrix()), 0.0, 1e-12);
        assert_close(plan.achieved_s, 3.0, 1e-12);
        assert_close(plan.target_s, 3.0, 1e-12);
        assert_close(plan.pointer_mean, 0.0, 1e-14);
        let sel = select_rho_tilde(&xi, &o, None, &tol).unwrap();
        assert!(sel.matrix().max_abs_diff(phi.matrix()) < 1e-12);
    }

    #[test]
    fn amplification_rejects_kernel_support() {
        let tol = Tolerances::default();
        let (xi, o, _) = amp_detector(20.0, 3.0);
        let bad = fock_state(4, 0).unwrap();
        assert!(matches!(
            amplifying_detector_state(&xi, &o, &bad, 0.0, &tol),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn amplification_trace_budget() {
        let tol = Tolerances::default();
        let (xi, o, phi) = amp_detector(0.5, 3.0);
        let plan = amplifying_detector_state(&xi, &o, &phi, 0.0, &tol).unwrap();
        assert!(!plan.feasible);
        assert!(plan.infeasibility_reason.unwrap().contains("budget"));
    }

    #[test]
    fn amplification_trivial_kernel() {
        let tol = Tolerances::default();
        let xi = Observable::new(ComplexMatrix::from_real_diagonal(&[1.0, -1.0, 2.0]), &tol).unwrap();
        let o = Observable::new(ComplexMatrix::from_real_diagonal(&[1.0, 2.0, 3.0]), &tol).unwrap();
        let rho = fock_state(3, 2).unwrap();
        let plan = amplifying_detector_state(&xi, &o, &rho, 0.0, &tol).unwrap();
        assert!(!plan.feasible);
        assert_eq!(plan.kernel_dim, 0);
    }
}
