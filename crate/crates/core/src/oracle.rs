//! Brute-force checks of the closed forms: grid searches over the admissible
//! weak-value region, sweeps over random preparations and postselections, and
//! one-dimensional scans over the coupling. Nothing here calls the closed-form
//! optimizer; the `verify_*` suites compare the two.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, Tolerances, C64};
use crate::optimizer::{extremal_outputs, optimal_coupling, tradeoff_bound, DetectorMoments, WeakValuePoint};
use crate::simulator::{
    first_order_terms, normalized_probabilities, perturbative_condition, spectral_projectors, DetectorAverages,
    PostselectionKernel, DEFAULT_N_MAX,
};
use crate::states::{
    derive_seed, fock_state, oscillator_operators, random_hermitian, random_ket, random_mixed_effect,
    random_mixed_state, rng, DensityMatrix, Observable, PovmElement,
};
use crate::weak_values::{canonical_weak_values, weak_value_triple};

const GOLDEN_TOL: f64 = 1e-8;
const MAX_DOUBLINGS: u32 = 4;
const LEVEL_ETA: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub grid_radius: f64,
    pub grid_points_per_axis: usize,
    pub trials: usize,
    pub master_seed: u64,
    /// Range of the dimensionless coupling λσ_q.
    pub lambda_range: (f64, f64),
    pub lambda_points: usize,
    /// Double the radius (up to 4 times) when the extremum sits on the edge
    /// of the search box.
    pub auto_expand: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            grid_radius: 50.0,
            grid_points_per_axis: 400,
            trials: 1000,
            master_seed: 0,
            lambda_range: (-10.0, 10.0),
            lambda_points: 10_000,
            auto_expand: true,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points_per_axis < 3 || self.lambda_points < 3 {
            return Err(Error::InvalidParameter("scans need at least 3 points per axis".into()));
        }
        if self.trials < 1 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        if !(self.grid_radius > 0.0 && self.grid_radius.is_finite()) {
            return Err(Error::InvalidParameter("grid_radius must be positive".into()));
        }
        let (lo, hi) = self.lambda_range;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidParameter("lambda_range must be a finite interval".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint {
    pub value: f64,
    pub point: WeakValuePoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanResult {
    pub best: ScanPoint,
    pub worst: ScanPoint,
    /// Radius of the search box after any automatic doubling.
    pub radius_used: f64,
    pub best_at_infinity_suspected: bool,
    pub worst_at_infinity_suspected: bool,
}

/// Output in the standardized frame, written out directly.
fn output(m: &DetectorMoments, x: f64, y: f64, z: f64) -> f64 {
    (m.c * x - m.a * y + m.s * z) / (1.0 + z)
}

fn on_boundary(m: &DetectorMoments, r: f64, theta: f64) -> f64 {
    let (x, y) = (r * theta.cos(), r * theta.sin());
    output(m, x, y, r * r)
}

/// Maximizer of a unimodal `f` on [lo, hi] to an interval width of `tol`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol * (1.0 + lo.abs().max(hi.abs())) {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    let (ends_lo, ends_hi) = (f(lo), f(hi));
    [(x1, f1), (x2, f2), (lo, ends_lo), (hi, ends_hi)]
        .into_iter()
        .fold((x1, f1), |best, c| if c.1 > best.1 { c } else { best })
}

/// Best (r, θ, value) of `sign · output` over the polar boundary grid, then
/// nested golden-section refinement (outer in θ, inner in r).
fn boundary_extremum(m: &DetectorMoments, radius: f64, n: usize, sign: f64) -> (f64, f64, f64) {
    let dr = radius / (n - 1) as f64;
    let dtheta = std::f64::consts::TAU / n as f64;
    let f = |r: f64, t: f64| sign * on_boundary(m, r, t);
    let r_bracket = |ir: usize| ((ir as f64 - 1.0).max(0.0) * dr, ((ir + 1).min(n - 1)) as f64 * dr);
    // Each ray is refined before rays are compared: near the origin all rays
    // tie on the grid and only the refined values separate them.
    let rows: Vec<(f64, usize, usize)> = (0..n)
        .into_par_iter()
        .map(|it| {
            let t = it as f64 * dtheta;
            let (_, ir) = (0..n)
                .map(|ir| (f(ir as f64 * dr, t), ir))
                .fold((f64::NEG_INFINITY, 0), |b, c| if c.0 > b.0 { c } else { b });
            let (lo, hi) = r_bracket(ir);
            (golden_max(|r| f(r, t), lo, hi, GOLDEN_TOL).1, it, ir)
        })
        .collect();
    let (_, it, ir) = rows
        .into_iter()
        .fold((f64::NEG_INFINITY, 0, 0), |b, c| if c.0 > b.0 { c } else { b });

    let (r_lo, r_hi) = r_bracket(ir);
    let inner = |t: f64| {
        let (r, v) = golden_max(|r| f(r, t), r_lo, r_hi, GOLDEN_TOL * 1e-2);
        (level_midpoint(|r| f(r, t), r, v, r_lo, r_hi), v)
    };
    let t0 = it as f64 * dtheta;
    let (ta, tb) = (t0 - dtheta, t0 + dtheta);
    let (t, vt) = golden_max(|t| inner(t).1, ta, tb, GOLDEN_TOL * 1e-2);
    let t = level_midpoint(|t| inner(t).1, t, vt, ta, tb);
    let (r, v) = inner(t);
    (r, t, sign * v)
}

/// Midpoint of the superlevel set {f ≥ f(x*) − η} around a located maximum,
/// extrapolated to η → 0 from two levels (the midpoint drifts linearly in η
/// through the cubic term). Near a smooth peak this pins the argmax far more
/// tightly than value comparisons alone.
fn level_midpoint(f: impl Fn(f64) -> f64, x: f64, fx: f64, lo: f64, hi: f64) -> f64 {
    let crossing = |level: f64, mut inside: f64, mut outside: f64| -> Option<f64> {
        if f(outside) >= level {
            return None;
        }
        for _ in 0..200 {
            let mid = 0.5 * (inside + outside);
            if mid == inside || mid == outside {
                break;
            }
            if f(mid) >= level {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        Some(0.5 * (inside + outside))
    };
    let mid = |eta: f64| {
        let level = fx - eta * fx.abs().max(1e-3);
        match (crossing(level, x, lo), crossing(level, x, hi)) {
            (Some(a), Some(b)) => Some(0.5 * (a + b)),
            _ => None,
        }
    };
    match (mid(LEVEL_ETA), mid(LEVEL_ETA / 4.0)) {
        (Some(m1), Some(m2)) => (4.0 * m2 - m1) / 3.0,
        (_, Some(m2)) => m2,
        _ => x,
    }
}

fn polar_point(r: f64, t: f64) -> WeakValuePoint {
    WeakValuePoint::on_boundary(r * t.cos(), r * t.sin())
}

/// Extrema of the output over the boundary z = x² + y² with x² + y² ≤ R².
pub fn boundary_scan(m: &DetectorMoments, cfg: &ScanConfig) -> Result<ScanResult> {
    cfg.validate()?;
    let n = cfg.grid_points_per_axis;
    let mut radius = cfg.grid_radius;
    let mut doublings = 0;
    loop {
        let (rb, tb, vb) = boundary_extremum(m, radius, n, 1.0);
        let (rw, tw, vw) = boundary_extremum(m, radius, n, -1.0);
        let edge = radius * (1.0 - 1.5 / (n - 1) as f64);
        let (best_edge, worst_edge) = (rb >= edge, rw >= edge);
        if (best_edge || worst_edge) && cfg.auto_expand && doublings < MAX_DOUBLINGS {
            radius *= 2.0;
            doublings += 1;
            continue;
        }
        return Ok(ScanResult {
            best: ScanPoint { value: vb, point: polar_point(rb, tb) },
            worst: ScanPoint { value: vw, point: polar_point(rw, tw) },
            radius_used: radius,
            best_at_infinity_suspected: best_edge,
            worst_at_infinity_suspected: worst_edge,
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionScanResult {
    pub interior: ScanResult,
    pub boundary: ScanResult,
    /// Largest amount by which an interior grid value beats the boundary
    /// extremum (positive means a violation).
    pub interior_excess: f64,
}

/// Grid over {x² + y² ≤ z ≤ R²}, including the z-axis and the lid z = R².
pub fn region_scan(m: &DetectorMoments, cfg: &ScanConfig) -> Result<RegionScanResult> {
    cfg.validate()?;
    let n = cfg.grid_points_per_axis;
    let r = cfg.grid_radius;
    let zmax = r * r;
    let coord = |i: usize| -r + 2.0 * r * i as f64 / (n - 1) as f64;
    let zk = |k: usize| zmax * k as f64 / (n - 1) as f64;
    // (x, y) columns: the z-axis first, so ties on the lid resolve to it
    let mut columns: Vec<(f64, f64)> = Vec::with_capacity(n * n + 1);
    columns.push((0.0, 0.0));
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (coord(i), coord(j));
            if x * x + y * y <= zmax {
                columns.push((x, y));
            }
        }
    }
    let per_column: Vec<(ScanPoint, ScanPoint)> = columns
        .par_iter()
        .map(|&(x, y)| {
            let floor = x * x + y * y;
            let mut best = ScanPoint { value: f64::NEG_INFINITY, point: WeakValuePoint { x, y, z: floor } };
            let mut worst = ScanPoint { value: f64::INFINITY, point: best.point };
            let mut visit = |z: f64| {
                let v = output(m, x, y, z);
                if v > best.value {
                    best = ScanPoint { value: v, point: WeakValuePoint { x, y, z } };
                }
                if v < worst.value {
                    worst = ScanPoint { value: v, point: WeakValuePoint { x, y, z } };
                }
            };
            visit(floor);
            (0..n).map(zk).filter(|&z| z >= floor).for_each(&mut visit);
            (best, worst)
        })
        .collect();
    let first = per_column[0];
    let (best, worst) = per_column.iter().fold(first, |(b, w), &(cb, cw)| {
        (if cb.value > b.value { cb } else { b }, if cw.value < w.value { cw } else { w })
    });
    let boundary = boundary_scan(m, &ScanConfig { auto_expand: false, ..cfg.clone() })?;
    let tol = 1e-9 * (1.0 + boundary.best.value.abs().max(boundary.worst.value.abs()));
    let excess = (best.value - boundary.best.value).max(boundary.worst.value - worst.value);
    let edge = |p: &ScanPoint| p.point.z >= zmax * (1.0 - 1e-12);
    Ok(RegionScanResult {
        interior: ScanResult {
            best,
            worst,
            radius_used: r,
            best_at_infinity_suspected: edge(&best),
            worst_at_infinity_suspected: edge(&worst),
        },
        boundary,
        interior_excess: if excess > tol { excess } else { excess.min(0.0) },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepSample {
    pub seed: u64,
    pub pure: bool,
    pub point: WeakValuePoint,
    pub interp: f64,
    pub exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub samples: usize,
    /// Samples dropped because ω was numerically zero.
    pub skipped: usize,
    pub closed_form_max: f64,
    pub closed_form_min: f64,
    pub violations: usize,
    pub first_violation_seed: Option<u64>,
    pub best_interp: f64,
    pub best_exact: f64,
    pub worst_interp: f64,
    pub worst_exact: f64,
    /// closed_form_max − best_exact (negative if the exact tier beats it).
    pub exact_gap: f64,
    /// Largest |B_w − |A_w|²| / B_w over pure pairs.
    pub worst_pure_boundary_rel: f64,
    /// Fraction of mixed pairs with B_w − |A_w|² > 1e-9·B_w.
    pub mixed_strictly_inside: f64,
}

/// Random pure (even index) and mixed (odd index) preparation/postselection
/// pairs, evaluated through the first-order formula and the exact simulation
/// on the detector with q centered.
pub fn random_state_sweep(
    a: &Observable,
    rho_det: &DensityMatrix,
    q: &Observable,
    o: &Observable,
    lambda: f64,
    cfg: &ScanConfig,
    tol: &Tolerances,
) -> Result<SweepReport> {
    cfg.validate()?;
    let moments = DetectorMoments::from_detector(rho_det, q, o)?;
    let ext = extremal_outputs(&moments)?;
    let q = q.shifted(moments.q_mean);
    let kernel = PostselectionKernel::new(a, rho_det, &q, o, lambda, tol)?;
    let avg = DetectorAverages::new(rho_det, &q, o);
    let scale = lambda * moments.sigma_q;
    let d = a.dim();

    let samples: Vec<Option<SweepSample>> = (0..cfg.trials)
        .into_par_iter()
        .map(|idx| -> Result<Option<SweepSample>> {
            let seed = derive_seed(cfg.master_seed, idx as u64);
            let pure = idx % 2 == 0;
            let (rho_i, e_f) = if pure {
                let mut g = rng(seed);
                let i = random_ket(d, &mut g);
                let f = random_ket(d, &mut g);
                (DensityMatrix::pure(&i)?, PovmElement::pure(&f)?)
            } else {
                (random_mixed_state(d, seed)?, random_mixed_effect(d, derive_seed(seed, 7))?)
            };
            let t = weak_value_triple(&e_f, &rho_i, a, tol)?;
            let w = canonical_weak_values(&t, &e_f, &rho_i, a);
            if w.orthogonal {
                return Ok(None);
            }
            let (m1, n1) = first_order_terms(&t, &avg, lambda);
            let (n, m) = kernel.evaluate(&rho_i, &e_f);
            if !(n > 1e-14) {
                return Ok(None);
            }
            Ok(Some(SweepSample {
                seed,
                pure,
                point: WeakValuePoint {
                    x: scale * w.a_w.re,
                    y: scale * w.a_w.im,
                    z: scale * scale * w.b_w,
                },
                interp: m1 / n1 - avg.o_mean,
                exact: m / n - avg.o_mean,
            }))
        })
        .collect::<Result<_>>()?;

    let vtol = 1e-9 * (1.0 + ext.max_value.abs().max(ext.min_value.abs()));
    let mut rep = SweepReport {
        samples: 0,
        skipped: 0,
        closed_form_max: ext.max_value,
        closed_form_min: ext.min_value,
        violations: 0,
        first_violation_seed: None,
        best_interp: f64::NEG_INFINITY,
        best_exact: f64::NEG_INFINITY,
        worst_interp: f64::INFINITY,
        worst_exact: f64::INFINITY,
        exact_gap: 0.0,
        worst_pure_boundary_rel: 0.0,
        mixed_strictly_inside: 0.0,
    };
    let (mut mixed, mut inside) = (0usize, 0usize);
    for s in samples {
        let Some(s) = s else {
            rep.skipped += 1;
            continue;
        };
        rep.samples += 1;
        if s.interp > ext.max_value + vtol || s.interp < ext.min_value - vtol {
            rep.violations += 1;
            rep.first_violation_seed.get_or_insert(s.seed);
        }
        rep.best_interp = rep.best_interp.max(s.interp);
        rep.worst_interp = rep.worst_interp.min(s.interp);
        rep.best_exact = rep.best_exact.max(s.exact);
        rep.worst_exact = rep.worst_exact.min(s.exact);
        let gap = s.point.boundary_gap();
        if s.pure {
            let rel = gap.abs() / s.point.z.max(f64::MIN_POSITIVE);
            rep.worst_pure_boundary_rel = rep.worst_pure_boundary_rel.max(rel);
        } else {
            mixed += 1;
            if gap > 1e-9 * s.point.z {
                inside += 1;
            }
        }
    }
    rep.exact_gap = ext.max_value - rep.best_exact;
    rep.mixed_strictly_inside = if mixed > 0 { inside as f64 / mixed as f64 } else { f64::NAN };
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingScanResult {
    pub argmax: f64,
    pub max: f64,
    pub argmin: f64,
    pub min: f64,
    pub argmax_at_edge: bool,
    pub argmin_at_edge: bool,
    pub grid_spacing: f64,
}

/// First-order output as a function of ℓ = λσ_q, from
/// ⟨δo q⟩ = σ_q(a − ic)/2, ⟨q δo q⟩ = σ_q²(s + ξ̄a), ⟨q²⟩ = σ_q²(1 + ξ̄²).
pub fn coupling_output(m: &DetectorMoments, a_w: C64, b_w: f64, l: f64) -> f64 {
    let do_xi = C64::new(m.a / 2.0, -m.c / 2.0);
    let num = 2.0 * l * (C64::i() * a_w * do_xi).re + l * l * b_w * (m.s + m.xi_mean * m.a);
    let den = 1.0 - 2.0 * l * m.xi_mean * a_w.im + l * l * (1.0 + m.xi_mean * m.xi_mean) * b_w;
    num / den
}

/// Dense scan over `cfg.lambda_range` plus golden-section refinement.
pub fn coupling_scan(m: &DetectorMoments, a_w: C64, b_w: f64, cfg: &ScanConfig) -> Result<CouplingScanResult> {
    cfg.validate()?;
    if b_w < a_w.norm_sqr() * (1.0 - 1e-9) - 1e-12 {
        return Err(Error::InvalidParameter("B_w must be >= |A_w|^2".into()));
    }
    let (lo, hi) = cfg.lambda_range;
    let n = cfg.lambda_points;
    let h = (hi - lo) / (n - 1) as f64;
    let grid = |i: usize| lo + h * i as f64;
    let values: Vec<f64> = (0..n).into_par_iter().map(|i| coupling_output(m, a_w, b_w, grid(i))).collect();
    let refine = |sign: f64| {
        let i = (0..n).fold(0, |b, i| if sign * values[i] > sign * values[b] { i } else { b });
        let edge = i == 0 || i == n - 1;
        let a = grid(i.saturating_sub(1));
        let b = grid((i + 1).min(n - 1));
        let (x, v) = golden_max(|l| sign * coupling_output(m, a_w, b_w, l), a, b, GOLDEN_TOL);
        (x, sign * v, edge)
    };
    let (argmax, max, argmax_at_edge) = refine(1.0);
    let (argmin, min, argmin_at_edge) = refine(-1.0);
    Ok(CouplingScanResult {
        argmax,
        max,
        argmin,
        min,
        argmax_at_edge,
        argmin_at_edge,
        grid_spacing: h,
    })
}

/// Outcome of one verification suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: usize,
    pub failures: usize,
    /// Largest observed deviation in the suite's own metric.
    pub worst_margin: f64,
    /// Seed of the first failing sample, for reproduction.
    pub failing_seed: Option<u64>,
    pub details: Vec<String>,
    pub discrepancies: Vec<DiscrepancyRecord>,
}

/// Documented disagreement between a printed closed form and the
/// stationarity condition; informational, never a failure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscrepancyRecord {
    pub quantity: String,
    pub printed: f64,
    pub printed_value: f64,
    pub stationary: f64,
    pub stationary_value: f64,
}

struct Tally {
    suite: &'static str,
    checks: usize,
    failures: usize,
    worst: f64,
    seed: Option<u64>,
    details: Vec<String>,
    discrepancies: Vec<DiscrepancyRecord>,
}

impl Tally {
    fn new(suite: &'static str) -> Self {
        Self {
            suite,
            checks: 0,
            failures: 0,
            worst: 0.0,
            seed: None,
            details: Vec::new(),
            discrepancies: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, margin: f64, seed: u64, what: impl FnOnce() -> String) {
        self.checks += 1;
        if margin.is_nan() {
            self.worst = f64::NAN;
        } else {
            self.worst = self.worst.max(margin);
        }
        if !ok {
            self.failures += 1;
            if self.seed.is_none() {
                self.seed = Some(seed);
                self.details.push(format!("first failure (seed {seed}): {}", what()));
            }
        }
    }

    fn finish(self) -> SuiteReport {
        SuiteReport {
            suite: self.suite.into(),
            passed: self.failures == 0,
            checks: self.checks,
            failures: self.failures,
            worst_margin: self.worst,
            failing_seed: self.seed,
            details: self.details,
            discrepancies: self.discrepancies,
        }
    }
}

/// |A_w|² = B_w for pure pairs and |α|² ≤ βω for mixed pairs, `trials` of
/// each per system dimension in {2, 3, 4, 8}.
pub fn verify_cauchy(trials: usize, seed: u64, tol: &Tolerances) -> Result<SuiteReport> {
    let mut tally = Tally::new("cauchy");
    for (k, &d) in [2usize, 3, 4, 8].iter().enumerate() {
        let rows: Vec<(u64, f64, f64, bool, f64, f64)> = (0..trials)
            .into_par_iter()
            .map(|i| -> Result<_> {
                let s = derive_seed(derive_seed(seed, k as u64), i as u64);
                let a = random_hermitian(d, derive_seed(s, 1))?;
                let mut g = rng(s);
                let rho = DensityMatrix::pure(&random_ket(d, &mut g))?;
                let e = PovmElement::pure(&random_ket(d, &mut g))?;
                let t = weak_value_triple(&e, &rho, &a, tol)?;
                let w = canonical_weak_values(&t, &e, &rho, &a);
                let pure_rel = if w.orthogonal {
                    0.0
                } else {
                    (w.b_w - w.a_w.norm_sqr()).abs() / w.b_w.max(f64::MIN_POSITIVE)
                };
                let rho_m = random_mixed_state(d, derive_seed(s, 2))?;
                let e_m = random_mixed_effect(d, derive_seed(s, 3))?;
                let tm = weak_value_triple(&e_m, &rho_m, &a, tol)?;
                let (lhs, rhs) = (tm.alpha.norm_sqr(), tm.beta * tm.omega);
                Ok((s, pure_rel, lhs - rhs, rhs - lhs > 1e-9 * rhs, lhs, rhs))
            })
            .collect::<Result<_>>()?;
        let mut strict = 0;
        for &(s, pure_rel, excess, is_strict, lhs, rhs) in &rows {
            tally.check(pure_rel <= 1e-9, pure_rel, s, || format!("dim {d}: pure |A_w|^2 vs B_w rel {pure_rel:e}"));
            tally.check(excess <= 1e-12, excess.max(0.0), s, || {
                format!("dim {d}: mixed |alpha|^2 = {lhs} exceeds beta*omega = {rhs}")
            });
            strict += usize::from(is_strict);
        }
        let frac = strict as f64 / trials as f64;
        tally.details.push(format!("dim {d}: strict inequality in {:.2}% of mixed pairs", 100.0 * frac));
        tally.check(frac >= 0.99, 0.0, seed, || format!("dim {d}: only {:.2}% strict", 100.0 * frac));
    }
    Ok(tally.finish())
}

/// Parity (−1)^n on a truncated oscillator.
fn parity(dim: usize) -> ComplexMatrix {
    let d: Vec<f64> = (0..dim).map(|n| if n % 2 == 0 { 1.0 } else { -1.0 }).collect();
    ComplexMatrix::from_real_diagonal(&d)
}

/// Random parity-symmetric detector state and a parity-odd readout on an
/// oscillator of dimension `dim`; with q odd as well, s = 0 exactly.
pub fn symmetric_detector(dim: usize, seed: u64) -> Result<(DensityMatrix, Observable)> {
    let pi = parity(dim);
    let rho = random_mixed_state(dim, seed)?;
    let sym = (rho.matrix() + &(&(&pi * rho.matrix()) * &pi)).scale_real(0.5);
    let h = random_hermitian(dim, derive_seed(seed, 1))?;
    let odd = (h.matrix() - &(&(&pi * h.matrix()) * &pi)).scale_real(0.5);
    Ok((DensityMatrix::from_trusted(sym), Observable::from_trusted(odd)))
}

/// Trade-off bound on symmetric detectors, its saturation by the oscillator
/// ground state with o = p, and the first-order error bound and positivity of
/// the normalized probabilities on random setups passing the sufficient
/// condition with δ = 0.1.
pub fn verify_bounds(trials: usize, seed: u64, tol: &Tolerances) -> Result<SuiteReport> {
    let mut tally = Tally::new("bounds");

    let osc = 12;
    let (q, _) = oscillator_operators(osc)?;
    let sr: Vec<(u64, f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let s = derive_seed(derive_seed(seed, 100), i as u64);
            let (rho, o) = symmetric_detector(osc, s)?;
            let m = DetectorMoments::from_detector(&rho, &q, &o)?;
            let max = (m.a * m.a + m.c * m.c + m.s * m.s).sqrt() / 2.0 + m.s / 2.0;
            Ok((s, max, m.sigma_o))
        })
        .collect::<Result<_>>()?;
    for (s, max, sigma_o) in sr {
        tally.check(max <= sigma_o + 1e-9, max - sigma_o, s, || format!("max {max} above sigma_o {sigma_o}"));
    }
    for dim in [16, 24, 32] {
        let (q, p) = oscillator_operators(dim)?;
        let g = fock_state(dim, 0)?;
        let m = DetectorMoments::from_detector(&g, &q, &p)?;
        let ext = extremal_outputs(&m)?;
        let b = tradeoff_bound(&m)?;
        let dev = (ext.max_value - std::f64::consts::FRAC_1_SQRT_2).abs();
        tally.check(dev <= 1e-6 && b.saturates_sr, dev, seed, || format!("dim {dim}: ground state max {}", ext.max_value));
    }

    let delta = 0.1;
    let pert: Vec<(u64, bool, f64, f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let s = derive_seed(derive_seed(seed, 200), i as u64);
            let setup = random_perturbative_setup(s, delta)?;
            let holds = perturbative_condition(
                setup.lambda,
                setup.a.spectral_radius(),
                &setup.rho_det,
                &setup.q,
                delta,
                DEFAULT_N_MAX,
            );
            let kernel =
                PostselectionKernel::new(&setup.a, &setup.rho_det, &setup.q, &setup.o, setup.lambda, tol)?;
            let (n, _) = kernel.evaluate(&setup.rho_i, &setup.e_f);
            let t = weak_value_triple(&setup.e_f, &setup.rho_i, &setup.a, tol)?;
            let avg = DetectorAverages::new(&setup.rho_det, &setup.q, &setup.o);
            let (_, n1) = first_order_terms(&t, &avg, setup.lambda);
            let eps = setup.e_f.trace() * (delta.exp_m1() - delta);
            let probs = normalized_probabilities(&setup, &spectral_projectors(&setup.o), tol)?;
            let min_joint = probs.joint.iter().copied().fold(f64::INFINITY, f64::min);
            Ok((s, holds, (n - n1).abs(), eps, min_joint))
        })
        .collect::<Result<_>>()?;
    for (s, holds, err, eps, min_joint) in pert {
        tally.check(holds, 0.0, s, || "generated setup fails the sufficient condition".into());
        tally.check(err <= eps, err / eps, s, || format!("|N - N1| = {err:e} exceeds {eps:e}"));
        tally.check(min_joint >= -1e-12, (-min_joint).max(0.0), s, || format!("joint probability {min_joint:e}"));
    }
    Ok(tally.finish())
}

/// Random setup with coupling drawn below the largest value that passes the
/// sufficient condition with the given δ.
pub fn random_perturbative_setup(seed: u64, delta: f64) -> Result<crate::states::MeasurementSetup> {
    let mut g = rng(seed);
    let ds = g.random_range(2..=3usize);
    let dd = g.random_range(3..=8usize);
    let rho_i = random_mixed_state(ds, derive_seed(seed, 1))?;
    let e_f = random_mixed_effect(ds, derive_seed(seed, 2))?;
    let a = random_hermitian(ds, derive_seed(seed, 3))?;
    let rho_det = random_mixed_state(dd, derive_seed(seed, 4))?;
    let (q, o) = if g.random_bool(0.5) {
        oscillator_operators(dd)?
    } else {
        (random_hermitian(dd, derive_seed(seed, 5))?, random_hermitian(dd, derive_seed(seed, 6))?)
    };
    let q_eig = q.eigen();
    let pops: Vec<f64> = (0..dd)
        .map(|k| ComplexMatrix::projector(&q_eig.vector(k)).trace_product(rho_det.matrix()).re.max(0.0))
        .collect();
    let worst_root = (1..=DEFAULT_N_MAX)
        .map(|n| {
            let mom: f64 = q_eig.values.iter().zip(&pops).map(|(v, w)| w * v.powi(2 * n as i32)).sum();
            mom.sqrt().powf(1.0 / n as f64)
        })
        .fold(0.0, f64::max);
    let crit = delta / (2.0 * a.spectral_radius() * worst_root);
    let lambda = crit * g.random_range(0.05..0.999);
    crate::states::MeasurementSetup::new(rho_i, e_f, a, rho_det, q, o, lambda)
}

/// Closed-form extrema against the boundary scan for random moments in
/// [−5, 5]³, plus the root-product identity.
pub fn verify_optima(trials: usize, seed: u64, cfg: &ScanConfig) -> Result<SuiteReport> {
    let mut tally = Tally::new("optima");
    let rows: Vec<(u64, DetectorMoments)> = (0..trials)
        .map(|i| {
            let s = derive_seed(derive_seed(seed, 300), i as u64);
            let mut g = rng(s);
            let mut draw = || g.random_range(-5.0..=5.0);
            (s, DetectorMoments::from_acs(draw(), draw(), draw()))
        })
        .collect();
    for (s, m) in rows {
        if m.is_all_zero() {
            continue;
        }
        let ext = extremal_outputs(&m)?;
        let scan = boundary_scan(&m, cfg)?;
        let dv = (ext.max_value - scan.best.value).abs().max((ext.min_value - scan.worst.value).abs());
        let dist = |p: Option<WeakValuePoint>, q: &WeakValuePoint| {
            p.map_or(f64::INFINITY, |p| (p.x - q.x).hypot(p.y - q.y))
        };
        let dp = dist(ext.max_point, &scan.best.point).max(dist(ext.min_point, &scan.worst.point));
        let prod = ext.max_value * ext.min_value + (m.a * m.a + m.c * m.c) / 4.0;
        tally.check(dv <= 1e-6, dv, s, || format!("value mismatch {dv:e} for {m:?}"));
        tally.check(dp <= 1e-6, dp, s, || format!("location mismatch {dp:e} for {m:?}"));
        tally.check(prod.abs() <= 1e-12 * (1.0 + m.a * m.a + m.c * m.c), prod.abs(), s, || {
            format!("root product off by {prod:e}")
        });
    }
    Ok(tally.finish())
}

/// Stationary roots against the coupling scan, for the reference case and
/// random draws, plus the record of the printed closed-form roots.
pub fn verify_coupling(trials: usize, seed: u64, cfg: &ScanConfig) -> Result<SuiteReport> {
    let mut tally = Tally::new("coupling");

    let m = DetectorMoments::from_acs(0.0, 1.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let opt = optimal_coupling(&m, one, 1.0)?;
    let scan = coupling_scan(&m, one, 1.0, cfg)?;
    let top = opt.roots[0];
    let da = (top.lambda - scan.argmax).abs();
    let dv = (top.value - scan.max).abs();
    tally.check(da <= 1e-4 && dv <= 1e-6, da.max(dv), seed, || {
        format!("reference case: root {} value {} vs scan {} {}", top.lambda, top.value, scan.argmax, scan.max)
    });
    for (&l, &v) in opt.literal_roots.iter().zip(&opt.literal_values) {
        if l > 0.0 {
            tally.discrepancies.push(DiscrepancyRecord {
                quantity: "optimal coupling, c=1 a=s=xi_mean=0 A_w=B_w=1".into(),
                printed: l,
                printed_value: v,
                stationary: top.lambda,
                stationary_value: top.value,
            });
        }
    }

    for i in 0..trials {
        let s = derive_seed(derive_seed(seed, 400), i as u64);
        let mut g = rng(s);
        let mut m = DetectorMoments::from_acs(
            g.random_range(-5.0..=5.0),
            g.random_range(-5.0..=5.0),
            g.random_range(-5.0..=5.0),
        );
        m.xi_mean = g.random_range(-1.0..=1.0);
        let a_w = C64::new(g.random_range(-3.0..=3.0), g.random_range(-3.0..=3.0));
        let b_w = a_w.norm_sqr() + g.random_range(0.0..=3.0);
        let Ok(opt) = optimal_coupling(&m, a_w, b_w) else {
            continue;
        };
        let scan = coupling_scan(&m, a_w, b_w, cfg)?;
        let (lo, hi) = cfg.lambda_range;
        let vtol = 1e-6 * (1.0 + scan.max.abs());
        let in_range: Vec<_> = opt.roots.iter().filter(|r| r.lambda >= lo && r.lambda <= hi).collect();
        let ok = if scan.argmax_at_edge {
            in_range.iter().all(|r| r.value <= scan.max + vtol)
        } else {
            in_range
                .iter()
                .any(|r| (r.lambda - scan.argmax).abs() <= scan.grid_spacing && (r.value - scan.max).abs() <= vtol)
        };
        let miss = in_range
            .iter()
            .map(|r| (r.lambda - scan.argmax).abs())
            .fold(f64::INFINITY, f64::min);
        tally.check(ok, if scan.argmax_at_edge { 0.0 } else { miss }, s, || {
            format!("scan argmax {} ({}) not matched by roots {:?}", scan.argmax, scan.max, opt.roots)
        });
    }
    Ok(tally.finish())
}
