//! Browser bindings for the demo page. Each export takes plain numbers and
//! returns a JSON document ready for plotting.

use mdplab::anderson::{solve_anderson_vi, AndersonKind, StabilizationConfig};
use mdplab::first_order::{solve_avc, solve_avi, solve_mvc, solve_mvi, solve_vc, solve_vi};
use mdplab::harness::estimate_rate;
use mdplab::instances::{gen_random_mdp, gen_reversible_pair, GenKind, GenSpec};
use mdplab::mdp::sup_dist;
use mdplab::newton::{
    smoothing_gap_bound, smoothing_gap_bound_uniform, solve_newton_smoothed, solve_pi,
};
use mdplab::{Policy, SolverConfig, SolverTrace, ValueVector};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_STATES: usize = 200;
const MAX_ACTIONS: usize = 20;
const MAX_ITER: usize = 5000;

#[derive(Serialize)]
struct Series {
    name: &'static str,
    residuals: Vec<f64>,
    converged: bool,
    fitted_rate: Option<f64>,
    theoretical_rate: Option<f64>,
}

impl Series {
    fn new(name: &'static str, trace: &SolverTrace, theory: Option<f64>) -> Self {
        Self {
            name,
            residuals: trace.residuals.clone(),
            converged: trace.converged(),
            fitted_rate: estimate_rate(trace).ok().map(|f| f.rate),
            theoretical_rate: theory,
        }
    }
}

fn check_sizes(n: usize, a: usize) -> Result<(), String> {
    if n == 0 || n > MAX_STATES || a == 0 || a > MAX_ACTIONS {
        return Err(format!(
            "need 1 <= n <= {MAX_STATES} and 1 <= a <= {MAX_ACTIONS}, got n={n}, a={a}"
        ));
    }
    Ok(())
}

fn config() -> SolverConfig {
    SolverConfig::default().with_tol(1e-10).with_max_iter(MAX_ITER)
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// Residual curves of VI, AVI, MVI, Anderson (type II) and PI on a random
/// instance.
pub fn convergence_curves_json(
    n: usize,
    a: usize,
    lambda: f64,
    seed: u64,
    memory: usize,
) -> Result<String, String> {
    check_sizes(n, a)?;
    let err = |e: mdplab::Error| e.to_string();
    let mdp = gen_random_mdp(&GenSpec::new(GenKind::Random, n, a, lambda, seed)).map_err(err)?;
    let cfg = config();
    let v0 = ValueVector::zeros(n);
    let stab = StabilizationConfig::default().with_memory(memory.min(10));
    let pi = solve_pi(&mdp, None).map_err(err)?;
    let pi_trace = SolverTrace {
        residuals: pi.trace.bellman_residuals.clone(),
        wall_time_ns: Vec::new(),
        iterates: None,
        iterations: pi.trace.iterations,
        termination: mdplab::Termination::Converged,
        anderson: None,
    };
    let series = vec![
        Series::new("VI", &solve_vi(&mdp, &v0, &cfg).map_err(err)?.trace, Some(lambda)),
        Series::new("AVI", &solve_avi(&mdp, &v0, None, &cfg).map_err(err)?.trace, None),
        Series::new("MVI", &solve_mvi(&mdp, &v0, None, &cfg).map_err(err)?.trace, None),
        Series::new(
            "Anderson",
            &solve_anderson_vi(&mdp, &v0, &cfg, &stab, AndersonKind::Type2)
                .map_err(err)?
                .trace,
            None,
        ),
        Series::new("PI", &pi_trace, None),
    ];
    to_json(&serde_json::json!({ "lambda": lambda, "series": series }))
}

/// VC, AVC and MVC on a reversible chain, with fitted and theoretical rates.
pub fn rate_explorer_json(n: usize, lambda: f64, seed: u64) -> Result<String, String> {
    check_sizes(n, 1)?;
    let err = |e: mdplab::Error| e.to_string();
    let pair = gen_reversible_pair(&GenSpec::new(GenKind::ReversiblePair, n, 1, lambda, seed))
        .map_err(err)?;
    let mdp = pair.into_mdp(lambda).map_err(err)?;
    let pi = Policy::uniform(n, 1);
    let c = mdp.constants();
    let cfg = config();
    let v0 = ValueVector::zeros(n);
    let series = vec![
        Series::new("VC", &solve_vc(&mdp, &pi, &v0, &cfg).map_err(err)?.trace, Some(c.vi_rate())),
        Series::new(
            "AVC",
            &solve_avc(&mdp, &pi, &v0, None, &cfg).map_err(err)?.trace,
            Some(c.accelerated_rate()),
        ),
        Series::new(
            "MVC",
            &solve_mvc(&mdp, &pi, &v0, None, &cfg).map_err(err)?.trace,
            Some(c.momentum_rate()),
        ),
    ];
    to_json(&serde_json::json!({ "lambda": lambda, "kappa": c.kappa, "series": series }))
}

#[derive(Serialize)]
struct GapPoint {
    beta: f64,
    gap: f64,
    bound: f64,
    uniform_bound: f64,
}

/// Distance between the smoothed and exact fixed points over a log grid of
/// inverse temperatures.
pub fn smoothing_gap_json(
    n: usize,
    a: usize,
    lambda: f64,
    seed: u64,
    points: usize,
) -> Result<String, String> {
    check_sizes(n, a)?;
    let err = |e: mdplab::Error| e.to_string();
    let mdp = gen_random_mdp(&GenSpec::new(GenKind::Random, n, a, lambda, seed)).map_err(err)?;
    let exact = solve_pi(&mdp, None).map_err(err)?.value;
    let points = points.clamp(2, 60);
    let cfg = SolverConfig::default().with_tol(1e-11).with_max_iter(200);
    let mut warm = ValueVector::zeros(n);
    let mut out = Vec::with_capacity(points);
    for i in 0..points {
        let beta = 10f64.powf(-1.0 + 5.0 * i as f64 / (points - 1) as f64);
        let ev = solve_newton_smoothed(&mdp, beta, &warm, &cfg, None).map_err(err)?;
        out.push(GapPoint {
            beta,
            gap: sup_dist(&ev.value, &exact),
            bound: smoothing_gap_bound(lambda, a, beta),
            uniform_bound: smoothing_gap_bound_uniform(lambda, a, beta),
        });
        warm = ev.value;
    }
    to_json(&serde_json::json!({ "lambda": lambda, "a": a, "points": out }))
}

#[wasm_bindgen]
pub fn convergence_curves(
    n: usize,
    a: usize,
    lambda: f64,
    seed: u32,
    memory: usize,
) -> Result<String, JsValue> {
    convergence_curves_json(n, a, lambda, u64::from(seed), memory).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn rate_explorer(n: usize, lambda: f64, seed: u32) -> Result<String, JsValue> {
    rate_explorer_json(n, lambda, u64::from(seed)).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn smoothing_gap(
    n: usize,
    a: usize,
    lambda: f64,
    seed: u32,
    points: usize,
) -> Result<String, JsValue> {
    smoothing_gap_json(n, a, lambda, u64::from(seed), points).map_err(|e| JsValue::from_str(&e))
}
