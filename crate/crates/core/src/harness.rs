//! Experiment orchestration: one dispatcher over all solvers, linear rate
//! fitting on residual traces, and suite/report files.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::anderson::{solve_anderson_vi, AndersonKind, StabilizationConfig};
use crate::error::{Error, Result};
use crate::first_order::{
    solve_avc, solve_avi, solve_md_vi, solve_mvc, solve_mvi, solve_rvi, solve_vc, solve_vi,
};
use crate::instances::{generate, GenKind, GenSpec};
use crate::mdp::{Mdp, Policy, ValueVector};
use crate::newton::{solve_newton_smoothed, solve_pi, PiTrace};
use crate::trace::{SolverConfig, SolverTrace, Termination};

/// Residual band used for rate fits.
pub const FIT_LOW: f64 = 1e-10;
pub const FIT_HIGH: f64 = 1e-2;
/// Number of trailing qualifying points used in a fit.
pub const FIT_WINDOW: usize = 20;
pub const FIT_MIN_POINTS: usize = 10;
/// Absolute slack on the fitted rate when comparing with theory.
pub const RATE_TOLERANCE: f64 = 0.02;
pub const DEFAULT_BETA_SMOOTH: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    pub r2: f64,
    /// First and last iteration indices used.
    pub window: (usize, usize),
    pub contracting: bool,
}

/// Least-squares slope of `log10(residual)` against the iteration index over
/// the last 20 residuals inside `[1e-10, 1e-2]`; the rate is `10^slope`.
pub fn estimate_rate(trace: &SolverTrace) -> Result<RateFit> {
    fit_residuals(&trace.residuals)
}

pub fn fit_residuals(residuals: &[f64]) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = residuals
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_finite() && **r >= FIT_LOW && **r <= FIT_HIGH)
        .map(|(t, r)| (t as f64, r.log10()))
        .collect();
    if pts.len() < FIT_MIN_POINTS {
        return Err(Error::InsufficientData {
            needed: FIT_MIN_POINTS,
            found: pts.len(),
        });
    }
    let pts = &pts[pts.len().saturating_sub(FIT_WINDOW)..];
    let m = pts.len() as f64;
    let (mx, my) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x / m, b + y / m));
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = pts.iter().map(|(_, y)| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let rate = 10f64.powf(slope);
    Ok(RateFit {
        rate,
        r2,
        window: (pts[0].0 as usize, pts[pts.len() - 1].0 as usize),
        contracting: rate < 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Vi,
    Vc,
    Rvi,
    Avi,
    Mvi,
    Avc,
    Mvc,
    Pi,
    NewtonBeta,
    Anderson1,
    Anderson2,
    Mdvi,
}

impl Algorithm {
    pub const ALL: [Algorithm; 12] = [
        Self::Vi,
        Self::Vc,
        Self::Rvi,
        Self::Avi,
        Self::Mvi,
        Self::Avc,
        Self::Mvc,
        Self::Pi,
        Self::NewtonBeta,
        Self::Anderson1,
        Self::Anderson2,
        Self::Mdvi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Vi => "vi",
            Self::Vc => "vc",
            Self::Rvi => "rvi",
            Self::Avi => "avi",
            Self::Mvi => "mvi",
            Self::Avc => "avc",
            Self::Mvc => "mvc",
            Self::Pi => "pi",
            Self::NewtonBeta => "newton-beta",
            Self::Anderson1 => "anderson1",
            Self::Anderson2 => "anderson2",
            Self::Mdvi => "mdvi",
        }
    }

    /// Evaluates a fixed policy rather than solving for an optimal one.
    pub fn is_evaluation(self) -> bool {
        matches!(self, Self::Vc | Self::Avc | Self::Mvc)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown algorithm {s:?}")))
    }
}

/// Algorithm-specific inputs beyond [`SolverConfig`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunParams {
    pub config: SolverConfig,
    /// Policy for evaluation algorithms and starting policy for PI and MD-VI.
    /// Evaluation defaults to action 0 in every state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<Policy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_smooth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stabilization: Option<StabilizationConfig>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub value: ValueVector,
    pub policy: Option<Policy>,
    pub trace: SolverTrace,
    pub pi_trace: Option<PiTrace>,
}

/// Theoretical linear rate for the algorithms that have one.
pub fn theoretical_rate(mdp: &Mdp, algo: Algorithm, cfg: &SolverConfig) -> Option<f64> {
    let c = mdp.constants();
    match algo {
        Algorithm::Vi | Algorithm::Vc => Some(c.vi_rate()),
        Algorithm::Rvi if cfg.alpha.unwrap_or(1.0) == 1.0 => Some(c.vi_rate()),
        Algorithm::Avc => Some(c.accelerated_rate()),
        Algorithm::Mvc => Some(c.momentum_rate()),
        _ => None,
    }
}

fn pi_as_solver_trace(t: &PiTrace) -> SolverTrace {
    SolverTrace {
        residuals: t.bellman_residuals.clone(),
        wall_time_ns: vec![0; t.bellman_residuals.len()],
        iterates: None,
        iterations: t.iterations,
        termination: Termination::Converged,
        anderson: None,
    }
}

/// Runs one algorithm from `v = 0` (PI ignores the start vector).
pub fn run_algorithm(mdp: &Mdp, algo: Algorithm, params: &RunParams) -> Result<RunOutcome> {
    let cfg = &params.config;
    let v0 = ValueVector::zeros(mdp.n());
    let eval_policy = || match &params.policy {
        Some(p) => p.clone(),
        None => Policy::from_actions(&vec![0; mdp.n()], mdp.a()),
    };
    let control = |s: crate::first_order::Solution| RunOutcome {
        value: s.value,
        policy: Some(s.policy),
        trace: s.trace,
        pi_trace: None,
    };
    let eval = |e: crate::first_order::Evaluation| RunOutcome {
        value: e.value,
        policy: None,
        trace: e.trace,
        pi_trace: None,
    };
    let stab = params.stabilization.clone().unwrap_or_default();
    Ok(match algo {
        Algorithm::Vi => control(solve_vi(mdp, &v0, cfg)?),
        Algorithm::Rvi => control(solve_rvi(mdp, &v0, cfg)?),
        Algorithm::Avi => control(solve_avi(mdp, &v0, None, cfg)?),
        Algorithm::Mvi => control(solve_mvi(mdp, &v0, None, cfg)?),
        Algorithm::Vc => eval(solve_vc(mdp, &eval_policy(), &v0, cfg)?),
        Algorithm::Avc => eval(solve_avc(mdp, &eval_policy(), &v0, None, cfg)?),
        Algorithm::Mvc => eval(solve_mvc(mdp, &eval_policy(), &v0, None, cfg)?),
        Algorithm::Mdvi => control(solve_md_vi(mdp, &v0, params.policy.as_ref(), cfg)?),
        Algorithm::Anderson1 => control(solve_anderson_vi(mdp, &v0, cfg, &stab, AndersonKind::Type1)?),
        Algorithm::Anderson2 => control(solve_anderson_vi(mdp, &v0, cfg, &stab, AndersonKind::Type2)?),
        Algorithm::NewtonBeta => {
            let beta = params.beta_smooth.unwrap_or(DEFAULT_BETA_SMOOTH);
            let e = solve_newton_smoothed(mdp, beta, &v0, cfg, None)?;
            RunOutcome {
                policy: Some(mdp.softmax_policy(beta, &e.value)?),
                value: e.value,
                trace: e.trace,
                pi_trace: None,
            }
        }
        Algorithm::Pi => {
            let sol = solve_pi(mdp, params.policy.as_ref())?;
            RunOutcome {
                trace: pi_as_solver_trace(&sol.trace),
                value: sol.value,
                policy: Some(sol.policy),
                pi_trace: Some(sol.trace),
            }
        }
    })
}

/// One experiment: an instance, an algorithm and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteCell {
    pub instance: GenSpec,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub params: RunParams,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub cells: Vec<SuiteCell>,
}

impl Suite {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub cell: usize,
    pub instance_id: String,
    pub algorithm: Algorithm,
    pub config: RunParams,
    pub iterations: usize,
    pub final_residual: f64,
    pub termination: Option<Termination>,
    pub rate_fit: Option<RateFit>,
    pub theoretical_rate: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    pub wall_time_ms: f64,
    pub error: Option<String>,
}

pub fn instance_id(spec: &GenSpec) -> String {
    format!(
        "{}-n{}-a{}-l{}-s{}",
        spec.kind.name(),
        spec.n,
        spec.a,
        spec.lambda,
        spec.seed
    )
}

/// The pass rule: the run converged and, where a theoretical rate exists, the
/// fitted rate is at most that rate plus [`RATE_TOLERANCE`].
pub fn passes(converged: bool, fit: Option<&RateFit>, theory: Option<f64>) -> bool {
    match theory {
        None => converged,
        Some(rho) => converged && fit.is_some_and(|f| f.rate <= rho + RATE_TOLERANCE),
    }
}

pub fn run_cell(index: usize, cell: &SuiteCell) -> ExperimentReport {
    let mut start = crate::clock::Stopwatch::start();
    let mut report = ExperimentReport {
        cell: index,
        instance_id: instance_id(&cell.instance),
        algorithm: cell.algorithm,
        config: cell.params.clone(),
        iterations: 0,
        final_residual: f64::NAN,
        termination: None,
        rate_fit: None,
        theoretical_rate: None,
        tolerance: RATE_TOLERANCE,
        pass: false,
        wall_time_ms: 0.0,
        error: None,
    };
    let outcome = generate(&cell.instance).and_then(|mdp| {
        let out = run_algorithm(&mdp, cell.algorithm, &cell.params)?;
        Ok((theoretical_rate(&mdp, cell.algorithm, &cell.params.config), out))
    });
    match outcome {
        Ok((theory, out)) => {
            report.iterations = out.trace.iterations;
            report.final_residual = out.trace.final_residual();
            report.termination = Some(out.trace.termination);
            report.rate_fit = estimate_rate(&out.trace).ok();
            report.theoretical_rate = theory;
            report.pass = passes(out.trace.converged(), report.rate_fit.as_ref(), theory);
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    report.wall_time_ms = start.lap_ns() as f64 / 1e6;
    report
}

/// Runs every cell in order. Failures are recorded in the report.
pub fn run_experiment(suite: &[SuiteCell]) -> Vec<ExperimentReport> {
    suite.iter().enumerate().map(|(i, c)| run_cell(i, c)).collect()
}

pub fn reports_to_json(reports: &[ExperimentReport]) -> Result<String> {
    Ok(serde_json::to_string_pretty(reports)?)
}

pub fn reports_from_json(s: &str) -> Result<Vec<ExperimentReport>> {
    Ok(serde_json::from_str(s)?)
}

/// The shipped benchmark: every algorithm at λ = 0.9 on the instance family
/// it targets.
pub fn default_suite() -> Suite {
    let lambda = 0.9;
    let mut cells = Vec::new();
    let cell = |instance: GenSpec, algorithm: Algorithm| SuiteCell {
        instance,
        algorithm,
        params: RunParams::default(),
    };
    cells.push(cell(GenSpec::new(GenKind::HardCycle, 50, 1, lambda, 0), Algorithm::Vi));
    let control = [
        Algorithm::Vi,
        Algorithm::Rvi,
        Algorithm::Avi,
        Algorithm::Mvi,
        Algorithm::Pi,
        Algorithm::NewtonBeta,
        Algorithm::Anderson1,
        Algorithm::Anderson2,
        Algorithm::Mdvi,
    ];
    for seed in 0..3 {
        for algo in control {
            cells.push(cell(GenSpec::new(GenKind::Random, 50, 10, lambda, seed), algo));
        }
    }
    for seed in 0..3 {
        for algo in [Algorithm::Vc, Algorithm::Avc, Algorithm::Mvc] {
            cells.push(cell(
                GenSpec::new(GenKind::ReversiblePair, 50, 1, lambda, seed),
                algo,
            ));
        }
    }
    Suite { cells }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_fit_is_exact() {
        let r: Vec<f64> = (0..300).map(|t| 0.9f64.powi(t)).collect();
        let fit = fit_residuals(&r).unwrap();
        assert!((fit.rate - 0.9).abs() < 1e-6);
        assert!(fit.r2 > 1.0 - 1e-9);
        assert!(fit.contracting);
    }

    #[test]
    fn short_trace_is_insufficient() {
        let r: Vec<f64> = (0..5).map(|t| 1e-3 * 0.5f64.powi(t)).collect();
        assert!(matches!(
            fit_residuals(&r),
            Err(Error::InsufficientData { needed: 10, found: 5 })
        ));
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            let js = serde_json::to_string(&a).unwrap();
            assert_eq!(js, format!("\"{}\"", a.name()));
        }
        assert!("qvi".parse::<Algorithm>().is_err());
    }

    #[test]
    fn pass_rule() {
        let fit = RateFit {
            rate: 0.915,
            r2: 1.0,
            window: (0, 19),
            contracting: true,
        };
        assert!(passes(true, Some(&fit), Some(0.9)));
        assert!(!passes(true, Some(&fit), Some(0.89)));
        assert!(!passes(false, Some(&fit), Some(0.9)));
        assert!(!passes(true, None, Some(0.9)));
        assert!(passes(true, None, None));
    }

    #[test]
    fn empty_suite_gives_empty_report() {
        assert!(run_experiment(&[]).is_empty());
    }

    #[test]
    fn bad_cell_is_recorded() {
        let cell = SuiteCell {
            instance: GenSpec::new(GenKind::HardCycle, 5, 3, 0.9, 0),
            algorithm: Algorithm::Vi,
            params: RunParams::default(),
        };
        let rep = run_cell(0, &cell);
        assert!(!rep.pass);
        assert!(rep.error.is_some());
    }

    #[test]
    fn suite_json_round_trip() {
        let s = default_suite();
        assert_eq!(Suite::from_json(&s.to_json().unwrap()).unwrap(), s);
    }
}
