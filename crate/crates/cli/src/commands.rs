use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use wmopt_core::optimizer::{select_rho_tilde, standardized_pointer};
use wmopt_core::oracle::{verify_bounds, verify_cauchy, verify_coupling, verify_optima, SuiteReport};
use wmopt_core::simulator::{first_order_terms, linear_output, DetectorAverages, PostselectionKernel, POSTSELECTION_FLOOR};
use wmopt_core::weak_values::{canonical_weak_values, weak_value_triple};
use wmopt_core::{
    amplifying_detector_state, extremal_outputs, standardize, tradeoff_bound, AmplificationPlan, DensityMatrix,
    DetectorMoments, ExtremumResult, MeasurementSetup, Rescale, ScanConfig, Tolerances, TradeoffBound,
    WeakValuePoint, C64,
};

use crate::output::{config_hash, csv_float, emit, to_json, ResultDocument};
use crate::setup::SetupFile;
use crate::{Cli, CliError, Command, Suite};

pub const CSV_HEADER: &str = "lambda,N_exact,mean_exact,mean_interp,mean_aav,abs_err_interp,abs_err_aav";

struct Context {
    tol: Tolerances,
    tol_bytes: Vec<u8>,
    seed: Option<u64>,
    pretty: bool,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

struct LoadedSetup {
    setup: MeasurementSetup,
    text: String,
    tol: Tolerances,
    seed: u64,
}

impl Context {
    /// Tolerances: defaults, then the setup file's, then --tolerance-file.
    /// Seed: --seed, then the setup file's, then 0.
    fn load(&self, path: &Path, file_tol_given: bool) -> Result<LoadedSetup, CliError> {
        let text = read(path)?;
        let file = SetupFile::parse(&text)?;
        let tol = match (file_tol_given, file.tolerances) {
            (false, Some(t)) => t,
            _ => self.tol,
        };
        tol.validate().map_err(|e| CliError::Input(format!("tolerances: {e}")))?;
        let setup = file.build(&tol)?;
        Ok(LoadedSetup {
            setup,
            text,
            tol,
            seed: self.seed.or(file.seed).unwrap_or(0),
        })
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Input("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    let (tol, tol_bytes) = match &cli.tolerance_file {
        Some(p) => {
            let text = read(p)?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            let t: Tolerances = serde_path_to_error::deserialize(de)
                .map_err(|e| CliError::Input(format!("{}: {}: {}", p.display(), e.path(), e.inner())))?;
            t.validate().map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            (t, text.into_bytes())
        }
        None => (Tolerances::default(), Vec::new()),
    };
    let ctx = Context {
        tol,
        tol_bytes,
        seed: cli.seed,
        pretty: cli.pretty,
    };
    let file_tol = cli.tolerance_file.is_some();
    match cli.command {
        Command::Optimize { setup, moments, json, csv } => optimize(&ctx, file_tol, setup, moments, json, csv),
        Command::Simulate {
            setup,
            lambda_grid,
            csv,
            json,
        } => simulate(&ctx, file_tol, &setup, lambda_grid, csv, json),
        Command::Verify { suite, trials, json } => verify(&ctx, suite, trials, json),
        Command::Amplify {
            setup,
            target_s,
            target_o_avg,
            json,
        } => amplify(&ctx, file_tol, &setup, target_s, target_o_avg, json),
    }
}

#[derive(Debug, Serialize)]
struct PhysicalPoint {
    a_w: C64,
    b_w: f64,
}

#[derive(Debug, Serialize)]
struct SetupWeakValues {
    a_w: Option<C64>,
    b_w: Option<f64>,
    orthogonal: bool,
    /// Rescaled point and first-order output shift at these weak values.
    point: Option<WeakValuePoint>,
    output_shift: Option<f64>,
}

#[derive(Debug, Serialize)]
struct OptimizePayload {
    source: &'static str,
    moments: DetectorMoments,
    rescale: Option<Rescale>,
    extrema: ExtremumResult,
    max_point_physical: Option<PhysicalPoint>,
    min_point_physical: Option<PhysicalPoint>,
    tradeoff: Option<TradeoffBound>,
    setup_weak_values: Option<SetupWeakValues>,
}

fn parse_moments(s: &str) -> Result<DetectorMoments, CliError> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Input(format!("--moments: {e}")))?;
    match parts[..] {
        [a, c, s] if a.is_finite() && c.is_finite() && s.is_finite() => Ok(DetectorMoments::from_acs(a, c, s)),
        _ => Err(CliError::Input("--moments: expected three finite numbers a,c,s".into())),
    }
}

fn optimize(
    ctx: &Context,
    file_tol: bool,
    setup: Option<PathBuf>,
    moments: Option<String>,
    json: Option<PathBuf>,
    csv: Option<PathBuf>,
) -> Result<(), CliError> {
    let (payload, hash, seed) = match (setup, moments) {
        (_, Some(m)) => {
            let moments = parse_moments(&m)?;
            let extrema = extremal_outputs(&moments)?;
            let payload = OptimizePayload {
                source: "moments",
                moments,
                rescale: None,
                extrema,
                max_point_physical: None,
                min_point_physical: None,
                tradeoff: None,
                setup_weak_values: None,
            };
            (payload, config_hash("optimize", &[m.as_bytes(), &ctx.tol_bytes]), ctx.seed.unwrap_or(0))
        }
        (Some(path), None) => {
            let l = ctx.load(&path, file_tol)?;
            let (moments, rescale) = standardize(&l.setup)?;
            let extrema = extremal_outputs(&moments)?;
            let physical = |p: Option<WeakValuePoint>| {
                p.and_then(|p| rescale.to_physical(&p)).map(|(a_w, b_w)| PhysicalPoint { a_w, b_w })
            };
            let s = &l.setup;
            // weak values of the setup itself, in the frame where q is centered
            let centered = s.centered();
            let t = weak_value_triple(&centered.e_f, &centered.rho_i, &centered.a, &l.tol)?;
            let w = canonical_weak_values(&t, &centered.e_f, &centered.rho_i, &centered.a);
            let point = (!w.orthogonal).then(|| rescale.to_rescaled(w.a_w, w.b_w));
            let payload = OptimizePayload {
                source: "setup",
                moments,
                rescale: Some(rescale),
                max_point_physical: physical(extrema.max_point),
                min_point_physical: physical(extrema.min_point),
                extrema,
                tradeoff: Some(tradeoff_bound(&moments)?),
                setup_weak_values: Some(SetupWeakValues {
                    a_w: (!w.orthogonal).then_some(w.a_w),
                    b_w: (!w.orthogonal).then_some(w.b_w),
                    orthogonal: w.orthogonal,
                    point,
                    output_shift: point.map(|p| moments.output_at(p.x, p.y, p.z)),
                }),
            };
            (payload, config_hash("optimize", &[l.text.as_bytes(), &ctx.tol_bytes]), l.seed)
        }
        (None, None) => return Err(CliError::Input("optimize needs a setup file or --moments".into())),
    };
    if let Some(path) = csv {
        emit(Some(&path), &boundary_csv(&payload.moments, &payload.extrema))?;
    }
    let doc = ResultDocument::new("optimize", hash, seed, payload);
    emit(json.as_deref(), &to_json(&doc, ctx.pretty))
}

/// Output over a polar grid on the paraboloid, wide enough to include both
/// finite extremal points.
fn boundary_csv(m: &DetectorMoments, e: &ExtremumResult) -> String {
    let reach = [e.max_point, e.min_point]
        .iter()
        .flatten()
        .map(|p| p.x.hypot(p.y))
        .fold(1.0, f64::max);
    let radius = 2.0 * reach;
    let mut out = String::from("r,theta,x,y,z,value\n");
    for i in 0..=40 {
        let r = radius * i as f64 / 40.0;
        for j in 0..72 {
            let t = std::f64::consts::TAU * j as f64 / 72.0;
            let p = WeakValuePoint::on_boundary(r * t.cos(), r * t.sin());
            let v = m.output_at(p.x, p.y, p.z);
            let row = [r, t, p.x, p.y, p.z, v].map(csv_float).join(",");
            out.push_str(&row);
            out.push('\n');
        }
    }
    out
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Input(format!("--lambda-grid: expected LO:HI:N, got \"{spec}\""));
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, n] = parts[..] else { return Err(bad()) };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if n == 0 || !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

#[derive(Debug, Clone, Copy, Serialize)]
struct SimRow {
    lambda: f64,
    n_exact: f64,
    mean_exact: f64,
    mean_interp: f64,
    mean_aav: f64,
    abs_err_interp: f64,
    abs_err_aav: f64,
}

fn simulate(
    ctx: &Context,
    file_tol: bool,
    path: &Path,
    grid: Option<String>,
    csv: Option<PathBuf>,
    json: Option<PathBuf>,
) -> Result<(), CliError> {
    let l = ctx.load(path, file_tol)?;
    let s = &l.setup;
    let lambdas = match &grid {
        Some(g) => parse_grid(g)?,
        None => {
            let hi = if s.lambda != 0.0 { 2.0 * s.lambda } else { 1.0 };
            parse_grid(&format!("0:{hi}:21"))?
        }
    };
    let t = weak_value_triple(&s.e_f, &s.rho_i, &s.a, &l.tol)?;
    let w = canonical_weak_values(&t, &s.e_f, &s.rho_i, &s.a);
    let avg = DetectorAverages::new(&s.rho_det, &s.q, &s.o);
    let rows: Vec<SimRow> = lambdas
        .par_iter()
        .map(|&lambda| -> Result<SimRow, CliError> {
            let kernel = PostselectionKernel::new(&s.a, &s.rho_det, &s.q, &s.o, lambda, &l.tol)?;
            let (n, m) = kernel.evaluate(&s.rho_i, &s.e_f);
            let mean_exact = if n > POSTSELECTION_FLOOR { m / n } else { f64::NAN };
            let (m1, n1) = first_order_terms(&t, &avg, lambda);
            let mean_interp = m1 / n1;
            let mean_aav = if w.orthogonal { f64::NAN } else { linear_output(&w, &avg, lambda) };
            Ok(SimRow {
                lambda,
                n_exact: n,
                mean_exact,
                mean_interp,
                mean_aav,
                abs_err_interp: (mean_exact - mean_interp).abs(),
                abs_err_aav: (mean_exact - mean_aav).abs(),
            })
        })
        .collect::<Result<_, _>>()?;
    for r in rows.iter().filter(|r| r.mean_exact.is_nan()) {
        eprintln!("wmopt: postselection probability numerically zero at lambda = {}", r.lambda);
    }
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for r in &rows {
        let cells = [
            r.lambda,
            r.n_exact,
            r.mean_exact,
            r.mean_interp,
            r.mean_aav,
            r.abs_err_interp,
            r.abs_err_aav,
        ];
        text.push_str(&cells.map(csv_float).join(","));
        text.push('\n');
    }
    let hash = config_hash(
        "simulate",
        &[l.text.as_bytes(), grid.as_deref().unwrap_or("").as_bytes(), &ctx.tol_bytes],
    );
    if let Some(j) = json {
        let doc = ResultDocument::new("simulate", hash, l.seed, &rows);
        emit(Some(&j), &to_json(&doc, ctx.pretty))?;
    }
    emit(csv.as_deref(), &text)
}

#[derive(Debug, Serialize)]
struct VerifyPayload {
    passed: bool,
    trials: Option<usize>,
    suites: Vec<SuiteReport>,
}

fn verify(ctx: &Context, suite: Suite, trials: Option<usize>, json: Option<PathBuf>) -> Result<(), CliError> {
    if trials == Some(0) {
        return Err(CliError::Input("--trials must be >= 1".into()));
    }
    let seed = ctx.seed.unwrap_or(0);
    let cfg = ScanConfig::default();
    let want = |s: Suite| suite == Suite::All || suite == s;
    let mut suites = Vec::new();
    if want(Suite::Cauchy) {
        suites.push(verify_cauchy(trials.unwrap_or(1000), seed, &ctx.tol)?);
    }
    if want(Suite::Bounds) {
        suites.push(verify_bounds(trials.unwrap_or(200), seed, &ctx.tol)?);
    }
    if want(Suite::Optima) {
        suites.push(verify_optima(trials.unwrap_or(100), seed, &cfg)?);
    }
    if want(Suite::Coupling) {
        suites.push(verify_coupling(trials.unwrap_or(100), seed, &cfg)?);
    }
    let passed = suites.iter().all(|s| s.passed);
    let failing: Vec<String> = suites
        .iter()
        .filter(|s| !s.passed)
        .map(|s| format!("{} (seed {:?})", s.suite, s.failing_seed))
        .collect();
    let flags = format!("{suite:?}/{trials:?}");
    let hash = config_hash("verify", &[flags.as_bytes(), &ctx.tol_bytes]);
    let doc = ResultDocument::new("verify", hash, seed, VerifyPayload { passed, trials, suites });
    emit(json.as_deref(), &to_json(&doc, ctx.pretty))?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Verification(format!("failing suites: {}", failing.join(", "))))
    }
}

#[derive(Debug, Serialize)]
struct AmplifyPayload {
    rho_tilde: DensityMatrix,
    plan: AmplificationPlan,
    moments: Option<DetectorMoments>,
    extrema: Option<ExtremumResult>,
    tradeoff: Option<TradeoffBound>,
    ratio_max_over_sigma_o: Option<f64>,
}

fn amplify(
    ctx: &Context,
    file_tol: bool,
    path: &Path,
    target_s: Option<f64>,
    target_o_avg: f64,
    json: Option<PathBuf>,
) -> Result<(), CliError> {
    let l = ctx.load(path, file_tol)?;
    let s = &l.setup;
    let xi = standardized_pointer(&s.q, &s.rho_det)?;
    let rho_tilde = select_rho_tilde(&xi, &s.o, target_s, &l.tol)?;
    let plan = amplifying_detector_state(&xi, &s.o, &rho_tilde, target_o_avg, &l.tol)?;
    let flags = format!("{target_s:?}/{target_o_avg:?}");
    let hash = config_hash("amplify", &[l.text.as_bytes(), flags.as_bytes(), &ctx.tol_bytes]);
    let reason = plan.infeasibility_reason.clone();
    let (moments, extrema, tradeoff, ratio) = match &plan.rho_det {
        Some(rho) => {
            let new = MeasurementSetup::new(
                s.rho_i.clone(),
                s.e_f.clone(),
                s.a.clone(),
                rho.clone(),
                xi.clone(),
                s.o.clone(),
                s.lambda,
            )?;
            let (m, _) = standardize(&new)?;
            let e = extremal_outputs(&m)?;
            let b = tradeoff_bound(&m)?;
            let ratio = e.max_value / m.sigma_o;
            (Some(m), Some(e), Some(b), Some(ratio))
        }
        None => (None, None, None, None),
    };
    let doc = ResultDocument::new(
        "amplify",
        hash,
        l.seed,
        AmplifyPayload {
            rho_tilde,
            plan,
            moments,
            extrema,
            tradeoff,
            ratio_max_over_sigma_o: ratio,
        },
    );
    emit(json.as_deref(), &to_json(&doc, ctx.pretty))?;
    match reason {
        Some(r) => Err(CliError::Infeasible(format!("infeasible construction: {r}"))),
        None => Ok(()),
    }
}
