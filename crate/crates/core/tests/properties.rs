use proptest::prelude::*;
use wmopt_core::linalg::{partial_trace, tensor_product, Subsystem};
use wmopt_core::optimizer::CouplingCoefficients;
use wmopt_core::simulator::{normalized_probabilities, spectral_projectors, PostselectionKernel};
use wmopt_core::states::{
    oscillator_operators, random_hermitian, random_mixed_effect, random_mixed_state, random_pure_state,
};
use wmopt_core::weak_values::weak_value_triple;
use wmopt_core::{
    conditional_mean, extremal_outputs, optimal_coupling, DetectorMoments, MeasurementSetup, Tolerances, C64,
};

fn tol() -> Tolerances {
    Tolerances::default()
}

fn random_setup(seed: u64, ds: usize, dd: usize, lambda: f64) -> MeasurementSetup {
    MeasurementSetup::new(
        random_mixed_state(ds, seed).unwrap(),
        random_mixed_effect(ds, seed + 1).unwrap(),
        random_hermitian(ds, seed + 2).unwrap(),
        random_mixed_state(dd, seed + 3).unwrap(),
        random_hermitian(dd, seed + 4).unwrap(),
        random_hermitian(dd, seed + 5).unwrap(),
        lambda,
    )
    .unwrap()
}

fn moments() -> impl Strategy<Value = (f64, f64, f64)> {
    (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64).prop_filter("not all small", |(a, c, s)| {
        a.abs().max(c.abs()).max(s.abs()) > 1e-3
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn extrema_bound_every_admissible_point(
        (a, c, s) in moments(),
        x in -20.0..20.0f64,
        y in -20.0..20.0f64,
        lift in 0.0..50.0f64,
    ) {
        let m = DetectorMoments::from_acs(a, c, s);
        let ext = extremal_outputs(&m).unwrap();
        let v = m.output_at(x, y, x * x + y * y + lift);
        let slack = 1e-12 * (1.0 + ext.max_value.abs() + ext.min_value.abs());
        prop_assert!(v <= ext.max_value + slack);
        prop_assert!(v >= ext.min_value - slack);
        prop_assert!((ext.max_value * ext.min_value + (a * a + c * c) / 4.0).abs() < 1e-11);
        prop_assert!(ext.max_value >= 0.0 && ext.min_value <= 0.0);
    }

    #[test]
    fn stationary_roots_are_critical_points(
        (a, c, s) in moments(),
        xi_mean in -1.0..1.0f64,
        re in -3.0..3.0f64,
        im in -3.0..3.0f64,
        extra in 0.0..3.0f64,
    ) {
        let mut m = DetectorMoments::from_acs(a, c, s);
        m.xi_mean = xi_mean;
        let aw = C64::new(re, im);
        let bw = aw.norm_sqr() + extra;
        if let Ok(opt) = optimal_coupling(&m, aw, bw) {
            let k = CouplingCoefficients::new(&m, aw, bw);
            for r in &opt.roots {
                let h = 1e-5 * (1.0 + r.lambda.abs());
                let d = (k.output(r.lambda + h) - k.output(r.lambda - h)) / (2.0 * h);
                prop_assert!(d.abs() < 1e-6 * (1.0 + r.value.abs()), "derivative {} at {}", d, r.lambda);
            }
        }
    }

    #[test]
    fn partial_trace_of_product(seed in 0u64..10_000, ds in 1usize..4, dd in 1usize..5) {
        let a = random_mixed_state(ds, seed).unwrap();
        let b = random_mixed_state(dd, seed + 1).unwrap();
        let ab = tensor_product(a.matrix(), b.matrix()).unwrap();
        let sys = partial_trace(&ab, (ds, dd), Subsystem::System).unwrap();
        let det = partial_trace(&ab, (ds, dd), Subsystem::Detector).unwrap();
        prop_assert!(sys.max_abs_diff(a.matrix()) < 1e-14);
        prop_assert!(det.max_abs_diff(b.matrix()) < 1e-14);
    }

    #[test]
    fn mixed_pairs_satisfy_cauchy_schwarz(seed in 0u64..100_000, d in 2usize..6) {
        let rho = random_mixed_state(d, seed).unwrap();
        let e = random_mixed_effect(d, seed + 1).unwrap();
        let a = random_hermitian(d, seed + 2).unwrap();
        let t = weak_value_triple(&e, &rho, &a, &tol()).unwrap();
        prop_assert!(t.alpha.norm_sqr() <= t.beta * t.omega + 1e-12);
        prop_assert!(t.omega >= 0.0 && t.omega <= e.trace() + 1e-12);
    }

    #[test]
    fn complementary_postselection(seed in 0u64..100_000, d in 2usize..5) {
        let rho = random_pure_state(d, seed).unwrap();
        let e = random_mixed_effect(d, seed + 1).unwrap();
        let a = random_hermitian(d, seed + 2).unwrap();
        let t = weak_value_triple(&e, &rho, &a, &tol()).unwrap();
        let u = weak_value_triple(&e.complement(), &rho, &a, &tol()).unwrap();
        prop_assert!((t.omega + u.omega - 1.0).abs() < 1e-12);
        prop_assert!((t.alpha + u.alpha - rho.expect(a.matrix())).norm() < 1e-12);
        let a2 = a.matrix() * a.matrix();
        prop_assert!((t.beta + u.beta - rho.expect(&a2)).abs() < 1e-12);
    }

    #[test]
    fn exact_output_is_gauge_invariant(seed in 0u64..10_000, shift in -2.0..2.0f64) {
        let s = random_setup(seed, 2, 4, 0.3);
        let base = conditional_mean(&s, &tol()).unwrap();
        let moved = conditional_mean(&s.gauge_shift(shift), &tol()).unwrap();
        prop_assert!((base.mean_exact - moved.mean_exact).abs() < 1e-10);
        prop_assert!((base.n_exact - moved.n_exact).abs() < 1e-12);
    }

    #[test]
    fn kernel_agrees_with_joint_evolution(seed in 0u64..10_000, lambda in -1.0..1.0f64) {
        let s = random_setup(seed, 3, 3, lambda);
        let out = conditional_mean(&s, &tol()).unwrap();
        let k = PostselectionKernel::new(&s.a, &s.rho_det, &s.q, &s.o, s.lambda, &tol()).unwrap();
        let (n, m) = k.evaluate(&s.rho_i, &s.e_f);
        prop_assert!((n - out.n_exact).abs() < 1e-12);
        prop_assert!((m - out.m_exact).abs() < 1e-11);
    }

    #[test]
    fn normalized_probabilities_are_consistent(seed in 0u64..10_000, lambda in 0.0..0.2f64) {
        let (q, p) = oscillator_operators(8).unwrap();
        let base = random_setup(seed, 2, 8, lambda);
        let s = MeasurementSetup::new(base.rho_i, base.e_f, base.a, base.rho_det, q, p, lambda).unwrap();
        let projs = spectral_projectors(&s.o);
        let rep = normalized_probabilities(&s, &projs, &tol()).unwrap();
        let sum: f64 = rep.joint.iter().sum();
        prop_assert!((sum - rep.marginal).abs() < 1e-12);
        prop_assert!(rep.joint.iter().all(|&j| j >= -1e-12));
        let comp = s.with_system(s.rho_i.clone(), s.e_f.complement());
        let other = normalized_probabilities(&comp, &projs, &tol()).unwrap();
        prop_assert!((rep.marginal + other.marginal - 1.0).abs() < 1e-12);
    }
}
