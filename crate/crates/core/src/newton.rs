//! Policy iteration, its reading as Newton's method on `F(v) = v − T(v)`,
//! and Newton-Raphson on the log-sum-exp smoothed Bellman equation.

use std::io::{Read, Write};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::first_order::Evaluation;
use crate::mdp::{solve_refined, sup_dist, Mdp, Policy, ValueVector, TIE_TOL};
use crate::trace::{SolverConfig, Termination, TraceRecorder};

/// Upper bound on the number of policy-iteration rounds,
/// `n²A/(1−λ) · log(n²/(1−λ))`.
pub fn ye_bound(n: usize, a: usize, lambda: f64) -> f64 {
    let n2 = (n * n) as f64;
    n2 * a as f64 / (1.0 - lambda) * (n2 / (1.0 - lambda)).ln()
}

/// The published distance bound between the smoothed and the exact fixed
/// points, `λ log(A) / (β (1−λ))`. It can fail for small `β`; see
/// [`smoothing_gap_bound_uniform`].
pub fn smoothing_gap_bound(lambda: f64, a: usize, beta: f64) -> f64 {
    lambda * (a as f64).ln() / (beta * (1.0 - lambda))
}

/// `log(A) / (β (1−λ))`, which holds on every instance because
/// `0 ≤ T_β(v) − T(v) ≤ log(A)/β` componentwise. It is attained when all
/// actions in a state are identical.
pub fn smoothing_gap_bound_uniform(lambda: f64, a: usize, beta: f64) -> f64 {
    (a as f64).ln() / (beta * (1.0 - lambda))
}

/// History of a policy-iteration run. Entry `t` describes the policy
/// evaluated in round `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiTrace {
    pub policies: Vec<Vec<usize>>,
    pub values: Vec<ValueVector>,
    pub returns: Vec<f64>,
    pub bellman_residuals: Vec<f64>,
    pub iterations: usize,
    pub ye_bound: f64,
}

/// One row of the policy-iteration CSV export.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PiTraceRow {
    pub iter: usize,
    pub policy_hash: String,
    pub return_p0: f64,
    pub bellman_residual_inf: f64,
}

/// FNV-1a over the action indices, as 16 hex digits.
pub fn policy_hash(actions: &[usize]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &a in actions {
        for b in (a as u64).to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

impl PiTrace {
    pub fn rows(&self) -> Vec<PiTraceRow> {
        (0..self.policies.len())
            .map(|t| PiTraceRow {
                iter: t,
                policy_hash: policy_hash(&self.policies[t]),
                return_p0: self.returns[t],
                bellman_residual_inf: self.bellman_residuals[t],
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Vec<PiTraceRow>> {
        let mut rdr = csv::Reader::from_reader(input);
        rdr.deserialize()
            .map(|r| r.map_err(Error::from))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct PiSolution {
    pub value: ValueVector,
    pub policy: Policy,
    pub trace: PiTrace,
}

fn action_values(mdp: &Mdp, s: usize, v: &[f64], q: &mut [f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for (a, qa) in q.iter_mut().enumerate() {
        *qa = mdp.q_value(s, a, v);
        best = best.max(*qa);
    }
    best
}

/// Policy iteration with exact evaluation. Improvement is greedy with the
/// lowest maximizing index, except that a state keeps its current action
/// whenever that action is within `1e-12` of the maximum. Without a starting
/// policy, a seeded random deterministic one is drawn.
pub fn solve_pi(mdp: &Mdp, pi0: Option<&Policy>) -> Result<PiSolution> {
    let (n, a) = (mdp.n(), mdp.a());
    let mut actions = match pi0 {
        Some(p) => {
            mdp.check_policy(p)?;
            p.actions().ok_or(Error::NotDeterministic)?
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            (0..n).map(|_| rng.random_range(0..a)).collect()
        }
    };
    let bound = ye_bound(n, a, mdp.lambda());
    let cap = bound.ceil() as usize + 1;
    let mut trace = PiTrace {
        policies: Vec::new(),
        values: Vec::new(),
        returns: Vec::new(),
        bellman_residuals: Vec::new(),
        iterations: 0,
        ye_bound: bound,
    };
    let mut q = vec![0.0; a];
    loop {
        let pi = Policy::from_actions(&actions, a);
        let v = mdp.policy_value(&pi)?;
        let mut next = actions.clone();
        let mut residual = 0.0f64;
        for s in 0..n {
            let best = action_values(mdp, s, &v, &mut q);
            residual = residual.max((v[s] - best).abs());
            if q[actions[s]] < best - TIE_TOL {
                next[s] = q.iter().position(|&x| x == best).unwrap_or(0);
            }
        }
        trace.returns.push(mdp.p0().iter().zip(v.iter()).map(|(p, x)| p * x).sum());
        trace.bellman_residuals.push(residual);
        trace.policies.push(actions.clone());
        trace.values.push(v.clone());
        trace.iterations += 1;
        if next == actions {
            return Ok(PiSolution {
                value: v,
                policy: pi,
                trace,
            });
        }
        if trace.iterations >= cap {
            return Err(Error::Precondition(format!(
                "policy iteration exceeded {cap} rounds"
            )));
        }
        actions = next;
    }
}

/// The two routes from `v_t` to the next policy-iteration value: evaluating
/// the greedy policy, and one Newton step on `F(v) = v − T(v)`.
#[derive(Debug, Clone)]
pub struct StepCheck {
    pub pi_step: ValueVector,
    pub newton_step: ValueVector,
    pub gap: f64,
    /// Whether the greedy policy at `v_t` is unique (`F` differentiable).
    pub unique: bool,
    /// `Some(gap ≤ 1e-8)` when `unique`, `None` otherwise.
    pub matched: Option<bool>,
}

pub const STEP_MATCH_TOL: f64 = 1e-8;

pub fn pi_newton_step_check(mdp: &Mdp, v_t: &[f64]) -> Result<StepCheck> {
    let jac = mdp.bellman_jacobian(v_t)?;
    let pi_step = mdp.policy_value(&jac.greedy)?;
    let f = mdp.residual(v_t)?;
    let delta = solve_refined(&jac.matrix, &DVector::from_vec(f.value), 1e-10)?;
    let newton: Vec<f64> = v_t.iter().zip(delta.iter()).map(|(x, d)| x - d).collect();
    let gap = sup_dist(&pi_step, &newton);
    Ok(StepCheck {
        pi_step,
        newton_step: ValueVector::from_raw(newton),
        gap,
        unique: jac.unique,
        matched: jac.unique.then_some(gap <= STEP_MATCH_TOL),
    })
}

/// Newton-Raphson on `F_β(v) = v − T_β(v)` with the closed-form Jacobian.
/// `damping` scales each step (`None` is the undamped method).
pub fn solve_newton_smoothed(
    mdp: &Mdp,
    beta: f64,
    v0: &ValueVector,
    cfg: &SolverConfig,
    damping: Option<f64>,
) -> Result<Evaluation> {
    cfg.validate()?;
    mdp.check_len("v0", v0.len())?;
    let step = damping.unwrap_or(1.0);
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::StepSize {
            name: "damping",
            value: step,
            range: "(0, 1]".into(),
        });
    }
    // Validates beta.
    mdp.smoothed_bellman_apply(beta, v0)?;
    let n = mdp.n();
    let mut rec = TraceRecorder::new(cfg);
    let mut v = v0.to_vec();
    let mut tv = vec![0.0; n];
    let mut q = vec![0.0; mdp.a()];
    loop {
        mdp.smoothed_into(beta, &v, &mut tv, &mut q);
        let f: Vec<f64> = v.iter().zip(&tv).map(|(x, y)| x - y).collect();
        let res = crate::mdp::sup_norm(&f);
        if let Some(term) = rec.record(res, &v) {
            if term == Termination::Diverged && v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Singular("Newton iterate became non-finite"));
            }
            return Ok(Evaluation {
                value: ValueVector::from_raw(v),
                trace: rec.finish(term),
            });
        }
        let jac = mdp.smoothed_jacobian(beta, &v)?;
        let delta = solve_refined(&jac, &DVector::from_vec(f), 1e-9)?;
        for (x, d) in v.iter_mut().zip(delta.iter()) {
            *x -= step * d;
        }
    }
}
