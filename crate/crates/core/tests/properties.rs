use mdplab::anderson::{anderson_weights, rank_one_check, AndersonWindow};
use mdplab::first_order::solve_vi;
use mdplab::harness::{
    default_suite, estimate_rate, fit_residuals, reports_from_json, reports_to_json,
    run_experiment, Algorithm, RunParams, Suite, SuiteCell,
};
use mdplab::instances::{gen_reversible_pair, generate, mdp_from_json, mdp_to_json, GenKind, GenSpec};
use mdplab::kernels::{bfgs_update, QuadraticSpec};
use mdplab::mdp::sup_dist;
use mdplab::{Mdp, Policy, SolverConfig, SolverTrace, ValueVector};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(n: usize, a: usize, lambda: f64, seed: u64) -> Mdp {
    generate(&GenSpec::new(GenKind::Random, n, a, lambda, seed)).unwrap()
}

fn vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn instance() -> impl Strategy<Value = (Mdp, u64)> {
    (1usize..=12, 1usize..=5, 0.1f64..0.99, any::<u64>())
        .prop_map(|(n, a, lambda, seed)| (random(n, a, lambda, seed), seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bellman_is_a_monotone_contraction((mdp, seed) in instance()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = vector(&mut rng, mdp.n(), 10.0);
        let w: Vec<f64> = u.iter().map(|x| x + rng.random_range(0.0..1.0)).collect();
        let (tu, _) = mdp.bellman_apply(&u).unwrap();
        let (tw, _) = mdp.bellman_apply(&w).unwrap();
        prop_assert!(sup_dist(&tu, &tw) <= mdp.lambda() * sup_dist(&u, &w) + 1e-12);
        prop_assert!(tu.iter().zip(tw.iter()).all(|(a, b)| a <= &(b + 1e-12)));
    }

    #[test]
    fn residual_map_is_strongly_monotone_and_lipschitz((mdp, seed) in instance()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = vector(&mut rng, mdp.n(), 10.0);
        let w = vector(&mut rng, mdp.n(), 10.0);
        let fu = mdp.residual(&u).unwrap().value;
        let fw = mdp.residual(&w).unwrap().value;
        let d = sup_dist(&u, &w);
        let df = sup_dist(&fu, &fw);
        prop_assert!(df >= (1.0 - mdp.lambda()) * d - 1e-10);
        prop_assert!(df <= (1.0 + mdp.lambda()) * d + 1e-10);
    }

    #[test]
    fn policy_value_is_a_fixed_point((mdp, _) in instance()) {
        let pi = Policy::uniform(mdp.n(), mdp.a());
        let v = mdp.policy_value(&pi).unwrap();
        let tv = mdp.bellman_policy_apply(&pi, &v).unwrap();
        prop_assert!(sup_dist(&v, &tv) <= 1e-10);
    }

    #[test]
    fn smoothed_operator_sits_above_the_max((mdp, seed) in instance(), beta in 0.1f64..1000.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = vector(&mut rng, mdp.n(), 5.0);
        let (t, _) = mdp.bellman_apply(&v).unwrap();
        let tb = mdp.smoothed_bellman_apply(beta, &v).unwrap();
        let slack = (mdp.a() as f64).ln() / beta;
        for (x, y) in t.iter().zip(tb.iter()) {
            prop_assert!(*y >= x - 1e-10 && *y <= x + slack + 1e-10);
        }
    }

    #[test]
    fn smoothed_jacobian_matches_finite_differences((mdp, seed) in instance(), beta in 0.5f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = vector(&mut rng, mdp.n(), 2.0);
        let jac = mdp.smoothed_jacobian(beta, &v).unwrap();
        let h = 1e-6;
        let f = |x: &[f64]| -> Vec<f64> {
            let t = mdp.smoothed_bellman_apply(beta, x).unwrap();
            x.iter().zip(t.iter()).map(|(a, b)| a - b).collect()
        };
        for j in 0..mdp.n() {
            let (mut up, mut down) = (v.clone(), v.clone());
            up[j] += h;
            down[j] -= h;
            let (fu, fd) = (f(&up), f(&down));
            for i in 0..mdp.n() {
                let fd_ij = (fu[i] - fd[i]) / (2.0 * h);
                prop_assert!((fd_ij - jac[(i, j)]).abs() <= 1e-6, "entry ({}, {})", i, j);
            }
        }
    }

    #[test]
    fn mixing_weights_sum_to_one(seed in any::<u64>(), k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 8;
        let dv = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
        let df = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
        let window = AndersonWindow::from_differences(&dv, &df).unwrap();
        let f = vector(&mut rng, n, 1.0);
        let w = anderson_weights(&window, &f).unwrap();
        prop_assert_eq!(w.alpha.len(), k + 1);
        prop_assert!((w.alpha.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn trace_csv_round_trips(residuals in prop::collection::vec(1e-300f64..1e3, 1..40)) {
        let trace = SolverTrace {
            iterations: residuals.len() - 1,
            wall_time_ns: (0..residuals.len() as u64).collect(),
            residuals,
            iterates: None,
            termination: mdplab::Termination::MaxIter,
            anderson: None,
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let back = SolverTrace::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.residuals, trace.residuals);
        prop_assert_eq!(back.wall_time_ns, trace.wall_time_ns);
    }

    #[test]
    fn mdp_json_round_trips((mdp, _) in instance()) {
        let back = mdp_from_json(&mdp_to_json(&mdp).unwrap()).unwrap();
        prop_assert_eq!(back.kernel(), mdp.kernel());
        prop_assert_eq!(back.rewards(), mdp.rewards());
        prop_assert_eq!(back.lambda(), mdp.lambda());
    }
}

#[test]
fn bfgs_recovers_the_hessian_from_conjugate_steps() {
    let q = QuadraticSpec::with_spectrum(3, 0.5, 2.0, 4).unwrap();
    let eig = q.q.clone().symmetric_eigen();
    let mut j = DMatrix::identity(3, 3);
    for c in 0..3 {
        let dx = eig.eigenvectors.column(c).into_owned();
        let df = &q.q * &dx;
        j = bfgs_update(&j, &dx, &df).unwrap();
    }
    assert!((&j - &q.q).amax() <= 1e-8, "{j}");
}

#[test]
fn type_two_matrix_is_the_frobenius_nearest_secant_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, k) = (6, 2);
    let dx = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
    let df = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
    let g = mdplab::kernels::anderson_update_matrices(&dx, &df, mdplab::anderson::AndersonKind::Type2)
        .unwrap();
    let identity = DMatrix::<f64>::identity(n, n);
    let best = (&g - &identity).norm();
    let null = {
        let qr = df.clone().qr().q();
        &identity - &qr * qr.transpose()
    };
    for _ in 0..50 {
        let e = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        // Perturbations that keep G dF = dX vanish on the span of dF.
        let other = &g + e * &null;
        assert!((&other * &df - &dx).amax() <= 1e-10);
        assert!((&other - &identity).norm() >= best - 1e-12);
    }
}

#[test]
fn consecutive_affine_windows_differ_by_rank_one() {
    let pair = gen_reversible_pair(&GenSpec::new(GenKind::ReversiblePair, 12, 1, 0.9, 5)).unwrap();
    let mdp = pair.into_mdp(0.9).unwrap();
    let pi = Policy::uniform(12, 1);
    let mut window = AndersonWindow::new(usize::MAX, 12);
    let mut v = vec![0.0; 12];
    let mut prev = window.clone();
    for step in 0..6 {
        let t = mdp.bellman_policy_apply(&pi, &v).unwrap();
        let f: Vec<f64> = v.iter().zip(t.iter()).map(|(a, b)| a - b).collect();
        window.push(&v, &f);
        if step >= 2 {
            assert!(rank_one_check(&prev, &window).unwrap(), "step {step}");
        }
        prev = window.clone();
        v = t.into_inner();
    }
    assert!(rank_one_check(&window, &window).unwrap());
    let mut restarted = window.clone();
    restarted.clear();
    assert!(rank_one_check(&window, &restarted).is_err());
}

#[test]
fn window_differences_rederive_from_iterates() {
    let mdp = random(10, 3, 0.9, 2);
    let mut window = AndersonWindow::new(3, 10);
    let mut iterates = Vec::new();
    let mut v = vec![0.0; 10];
    for _ in 0..6 {
        let f = mdp.residual(&v).unwrap().value;
        window.push(&v, &f);
        iterates.push((v.clone(), f));
        v = mdp.bellman_apply(&v).unwrap().0.into_inner();
    }
    let (dv, df) = (window.dv(), window.df());
    assert_eq!(dv.ncols(), 3);
    for j in 0..3 {
        let (a, b) = (&iterates[2 + j], &iterates[3 + j]);
        for i in 0..10 {
            assert!((dv[(i, j)] - (b.0[i] - a.0[i])).abs() <= 1e-12);
            assert!((df[(i, j)] - (b.1[i] - a.1[i])).abs() <= 1e-12);
        }
    }
}

#[test]
fn noisy_geometric_rate_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let r: Vec<f64> = (0..200)
        .map(|t| 0.5 * 0.8f64.powi(t) + rng.random_range(0.0..1e-12))
        .collect();
    let fit = fit_residuals(&r).unwrap();
    assert!((0.79..=0.81).contains(&fit.rate), "{}", fit.rate);
}

#[test]
fn hard_cycle_vi_passes_the_harness() {
    let mdp = generate(&GenSpec::new(GenKind::HardCycle, 50, 1, 0.9, 0)).unwrap();
    let cfg = SolverConfig::default().with_tol(1e-10).with_max_iter(10_000);
    let sol = solve_vi(&mdp, &ValueVector::zeros(50), &cfg).unwrap();
    let rate = estimate_rate(&sol.trace).unwrap().rate;
    assert!((0.88..=0.92).contains(&rate), "{rate}");
}

#[test]
fn experiments_are_deterministic_and_serializable() {
    let cells: Vec<SuiteCell> = default_suite()
        .cells
        .into_iter()
        .filter(|c| c.instance.n <= 50 && matches!(c.algorithm, Algorithm::Avc | Algorithm::Vi))
        .take(4)
        .collect();
    assert!(!cells.is_empty());
    let first = run_experiment(&cells);
    let second = run_experiment(&cells);
    for (a, b) in first.iter().zip(&second) {
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.final_residual, b.final_residual);
        assert_eq!(a.pass, b.pass);
    }
    assert!(first.iter().all(|r| r.pass));
    let back = reports_from_json(&reports_to_json(&first).unwrap()).unwrap();
    assert_eq!(back.len(), first.len());
    assert_eq!(back[0].instance_id, first[0].instance_id);

    let suite = Suite {
        cells: vec![SuiteCell {
            instance: GenSpec::new(GenKind::Random, 5, 2, 0.9, 1),
            algorithm: Algorithm::Pi,
            params: RunParams::default(),
        }],
    };
    let parsed = Suite::from_json(&suite.to_json().unwrap()).unwrap();
    assert_eq!(parsed.cells[0].instance, suite.cells[0].instance);
}

#[test]
fn quadratic_minimizer_zeroes_the_gradient() {
    let q = QuadraticSpec::with_spectrum(4, 0.2, 3.0, 1).unwrap();
    let x = q.minimizer();
    let g: DVector<f64> = &q.q * &x - &q.b;
    assert!(g.amax() <= 1e-12);
    let (lo, hi) = q.spectrum_bounds();
    assert!((lo - 0.2).abs() <= 1e-10 && (hi - 3.0).abs() <= 1e-10);
}
