//! Value iteration and its relaxed, accelerated, momentum and mirror-descent
//! variants. Every solver records `‖v_t − T(v_t)‖∞` for each iterate, where
//! `T` is the operator whose fixed point is being sought.

use crate::error::{Error, Result};
use crate::mdp::{sup_dist, Mdp, Policy, ValueVector};
use crate::trace::{DivergenceKind, SolverConfig, SolverTrace, TraceRecorder};

/// Floor applied to policy entries before a Kullback-Leibler mirror step.
pub const KL_FLOOR: f64 = 1e-12;

/// Result of a control solve: final iterate, its greedy (or mirror) policy
/// and the trace.
#[derive(Debug, Clone)]
pub struct Solution {
    pub value: ValueVector,
    pub policy: Policy,
    pub trace: SolverTrace,
}

/// Result of a fixed-policy solve.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: ValueVector,
    pub trace: SolverTrace,
}

/// A contraction whose fixed point the first-order loops look for.
pub(crate) trait FixedPointMap {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64], out: &mut [f64]);
}

pub(crate) struct MaxBellman<'a> {
    mdp: &'a Mdp,
    greedy: std::cell::RefCell<Vec<usize>>,
}

impl<'a> MaxBellman<'a> {
    pub fn new(mdp: &'a Mdp) -> Self {
        Self {
            mdp,
            greedy: std::cell::RefCell::new(vec![0; mdp.n()]),
        }
    }
}

impl FixedPointMap for MaxBellman<'_> {
    fn dim(&self) -> usize {
        self.mdp.n()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.mdp.bellman_into(v, out, &mut self.greedy.borrow_mut());
    }
}

pub(crate) struct PolicyBellman<'a> {
    pub mdp: &'a Mdp,
    pub pi: &'a Policy,
}

impl FixedPointMap for PolicyBellman<'_> {
    fn dim(&self) -> usize {
        self.mdp.n()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.mdp.policy_apply_into(self.pi, v, out);
    }
}

/// Tuned step sizes `(α, γ)` for accelerated value iteration:
/// `α = 1/(1+λ)`, `γ = (1 − √(1−λ²))/λ`.
pub fn avi_step_sizes(lambda: f64) -> Result<(f64, f64)> {
    check_lambda(lambda)?;
    let root = (1.0 - lambda * lambda).sqrt();
    Ok((1.0 / (1.0 + lambda), (1.0 - root) / lambda))
}

/// Tuned step sizes `(α, β)` for momentum value iteration:
/// `α = 2/(1+√(1−λ²))`, `β = (1 − √(1−λ²))/(1 + √(1−λ²))`.
pub fn mvi_step_sizes(lambda: f64) -> Result<(f64, f64)> {
    check_lambda(lambda)?;
    let root = (1.0 - lambda * lambda).sqrt();
    Ok((2.0 / (1.0 + root), (1.0 - root) / (1.0 + root)))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Discount(lambda));
    }
    Ok(())
}

/// Value-iteration stopping rule: fires when
/// `‖v_t − v_next‖∞ ≤ ε(1−λ)/(2λ)`, at which point the greedy policy of
/// `v_next` is ε-optimal.
pub fn stop_check(v_t: &[f64], v_next: &[f64], epsilon: f64, lambda: f64) -> Result<bool> {
    if !(epsilon > 0.0) {
        return Err(Error::Parameter {
            name: "epsilon",
            value: epsilon,
            reason: "must be positive",
        });
    }
    check_lambda(lambda)?;
    Ok(sup_dist(v_t, v_next) <= stop_threshold(epsilon, lambda))
}

pub fn stop_threshold(epsilon: f64, lambda: f64) -> f64 {
    epsilon * (1.0 - lambda) / (2.0 * lambda)
}

pub(crate) fn check_start(mdp: &Mdp, v: &ValueVector, what: &'static str) -> Result<()> {
    mdp.check_len(what, v.len())?;
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

pub(crate) fn finite_or(v: Vec<f64>, fallback: Vec<f64>) -> ValueVector {
    if v.iter().all(|x| x.is_finite()) {
        ValueVector::from_raw(v)
    } else {
        ValueVector::from_raw(fallback)
    }
}

/// `v_{t+1} = (1−α) v_t + α T(v_t)`; with `α = 1` this is exactly `T(v_t)`.
fn relaxed_loop(
    map: &impl FixedPointMap,
    v0: &[f64],
    alpha: f64,
    cfg: &SolverConfig,
) -> (ValueVector, SolverTrace) {
    let n = map.dim();
    let mut rec = TraceRecorder::new(cfg);
    let mut v = v0.to_vec();
    let mut prev = v.clone();
    let mut tv = vec![0.0; n];
    loop {
        map.apply(&v, &mut tv);
        if let Some(term) = rec.record(sup_dist(&v, &tv), &v) {
            return (finite_or(v, prev), rec.finish(term));
        }
        std::mem::swap(&mut prev, &mut v);
        if alpha == 1.0 {
            v.copy_from_slice(&tv);
        } else {
            for ((x, &p), &t) in v.iter_mut().zip(&prev).zip(&tv) {
                *x = (1.0 - alpha) * p + alpha * t;
            }
        }
    }
}

/// `h_t = v_t + γ(v_t − v_{t−1})`, `v_{t+1} = (1−α) h_t + α T(h_t)`.
fn accelerated_loop(
    map: &impl FixedPointMap,
    v0: &[f64],
    v1: &[f64],
    alpha: f64,
    gamma: f64,
    cfg: &SolverConfig,
) -> (ValueVector, SolverTrace) {
    let n = map.dim();
    let mut rec = TraceRecorder::new(cfg);
    let mut tv = vec![0.0; n];
    map.apply(v0, &mut tv);
    if let Some(term) = rec.record(sup_dist(v0, &tv), v0) {
        return (ValueVector::from_raw(v0.to_vec()), rec.finish(term));
    }
    let mut prev = v0.to_vec();
    let mut v = v1.to_vec();
    let mut h = vec![0.0; n];
    let mut th = vec![0.0; n];
    loop {
        map.apply(&v, &mut tv);
        if let Some(term) = rec.record(sup_dist(&v, &tv), &v) {
            return (finite_or(v, prev), rec.finish(term));
        }
        for ((hi, &x), &p) in h.iter_mut().zip(&v).zip(&prev) {
            *hi = x + gamma * (x - p);
        }
        if gamma == 0.0 {
            th.copy_from_slice(&tv);
        } else {
            map.apply(&h, &mut th);
        }
        std::mem::swap(&mut prev, &mut v);
        for ((x, &hi), &t) in v.iter_mut().zip(&h).zip(&th) {
            *x = if alpha == 1.0 {
                t
            } else {
                (1.0 - alpha) * hi + alpha * t
            };
        }
    }
}

/// `v_{t+1} = (1−α) v_t + α T(v_t) + β(v_t − v_{t−1})`.
fn momentum_loop(
    map: &impl FixedPointMap,
    v0: &[f64],
    v1: &[f64],
    alpha: f64,
    beta: f64,
    cfg: &SolverConfig,
) -> (ValueVector, SolverTrace) {
    let n = map.dim();
    let mut rec = TraceRecorder::new(cfg);
    let mut tv = vec![0.0; n];
    map.apply(v0, &mut tv);
    if let Some(term) = rec.record(sup_dist(v0, &tv), v0) {
        return (ValueVector::from_raw(v0.to_vec()), rec.finish(term));
    }
    let mut prev = v0.to_vec();
    let mut v = v1.to_vec();
    let mut next = vec![0.0; n];
    loop {
        map.apply(&v, &mut tv);
        if let Some(term) = rec.record(sup_dist(&v, &tv), &v) {
            return (finite_or(v, prev), rec.finish(term));
        }
        for (((y, &x), &p), &t) in next.iter_mut().zip(&v).zip(&prev).zip(&tv) {
            let step = if alpha == 1.0 {
                t
            } else {
                (1.0 - alpha) * x + alpha * t
            };
            *y = step + beta * (x - p);
        }
        std::mem::swap(&mut prev, &mut v);
        std::mem::swap(&mut v, &mut next);
    }
}

pub(crate) fn greedy_of(mdp: &Mdp, v: &[f64]) -> Policy {
    let mut out = vec![0.0; mdp.n()];
    let mut greedy = vec![0; mdp.n()];
    mdp.bellman_into(v, &mut out, &mut greedy);
    Policy::from_actions(&greedy, mdp.a())
}

fn second_point(map: &impl FixedPointMap, v0: &ValueVector, v1: Option<&ValueVector>) -> Vec<f64> {
    match v1 {
        Some(v1) => v1.to_vec(),
        None => {
            let mut out = vec![0.0; map.dim()];
            map.apply(v0, &mut out);
            out
        }
    }
}

/// Value iteration `v_{t+1} = T(v_t)`.
pub fn solve_vi(mdp: &Mdp, v0: &ValueVector, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    check_start(mdp, v0, "v0")?;
    let map = MaxBellman::new(mdp);
    let mut rec = TraceRecorder::new(cfg);
    let n = mdp.n();
    let mut v = v0.to_vec();
    let mut prev = v.clone();
    let mut tv = vec![0.0; n];
    let (value, trace) = loop {
        map.apply(&v, &mut tv);
        if let Some(term) = rec.record(sup_dist(&v, &tv), &v) {
            break (finite_or(v, prev), rec.finish(term));
        }
        std::mem::swap(&mut prev, &mut v);
        v.copy_from_slice(&tv);
    };
    Ok(Solution {
        policy: greedy_of(mdp, &value),
        value,
        trace,
    })
}

/// Value computation `v_{t+1} = T_π(v_t)` for a fixed policy.
pub fn solve_vc(mdp: &Mdp, pi: &Policy, v0: &ValueVector, cfg: &SolverConfig) -> Result<Evaluation> {
    cfg.validate()?;
    mdp.check_policy(pi)?;
    check_start(mdp, v0, "v0")?;
    let (value, trace) = relaxed_loop(&PolicyBellman { mdp, pi }, v0, 1.0, cfg);
    Ok(Evaluation { value, trace })
}

/// Relaxed value iteration `v_{t+1} = v_t − α(v_t − T(v_t))` with
/// `α ∈ (0, 2/(1+λ))`, default 1.
pub fn solve_rvi(mdp: &Mdp, v0: &ValueVector, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    check_start(mdp, v0, "v0")?;
    let alpha = cfg.alpha.unwrap_or(1.0);
    let upper = 2.0 / mdp.constants().ell;
    if !(alpha > 0.0 && alpha < upper) {
        return Err(Error::StepSize {
            name: "alpha",
            value: alpha,
            range: format!("(0, {upper})"),
        });
    }
    let (value, trace) = relaxed_loop(&MaxBellman::new(mdp), v0, alpha, cfg);
    Ok(Solution {
        policy: greedy_of(mdp, &value),
        value,
        trace,
    })
}

fn check_finite_step(name: &'static str, value: f64, positive: bool) -> Result<f64> {
    if !value.is_finite() || (positive && value <= 0.0) {
        return Err(Error::StepSize {
            name,
            value,
            range: if positive { "(0, ∞)" } else { "finite" }.into(),
        });
    }
    Ok(value)
}

fn accelerated_params(lambda: f64, cfg: &SolverConfig) -> Result<(f64, f64)> {
    let (a, g) = avi_step_sizes(lambda)?;
    Ok((
        check_finite_step("alpha", cfg.alpha.unwrap_or(a), true)?,
        check_finite_step("gamma", cfg.gamma.unwrap_or(g), false)?,
    ))
}

fn momentum_params(lambda: f64, cfg: &SolverConfig) -> Result<(f64, f64)> {
    let (a, b) = mvi_step_sizes(lambda)?;
    Ok((
        check_finite_step("alpha", cfg.alpha.unwrap_or(a), true)?,
        check_finite_step("beta_momentum", cfg.beta_momentum.unwrap_or(b), false)?,
    ))
}

/// Accelerated value iteration. `v1` defaults to `T(v0)`. Can diverge; the
/// trace then ends with [`Termination::Diverged`].
pub fn solve_avi(
    mdp: &Mdp,
    v0: &ValueVector,
    v1: Option<&ValueVector>,
    cfg: &SolverConfig,
) -> Result<Solution> {
    cfg.validate()?;
    check_start(mdp, v0, "v0")?;
    if let Some(v1) = v1 {
        check_start(mdp, v1, "v1")?;
    }
    let (alpha, gamma) = accelerated_params(mdp.lambda(), cfg)?;
    let map = MaxBellman::new(mdp);
    let v1 = second_point(&map, v0, v1);
    let (value, trace) = accelerated_loop(&map, v0, &v1, alpha, gamma, cfg);
    Ok(Solution {
        policy: greedy_of(mdp, &value),
        value,
        trace,
    })
}

/// Momentum value iteration. `v1` defaults to `T(v0)`.
pub fn solve_mvi(
    mdp: &Mdp,
    v0: &ValueVector,
    v1: Option<&ValueVector>,
    cfg: &SolverConfig,
) -> Result<Solution> {
    cfg.validate()?;
    check_start(mdp, v0, "v0")?;
    if let Some(v1) = v1 {
        check_start(mdp, v1, "v1")?;
    }
    let (alpha, beta) = momentum_params(mdp.lambda(), cfg)?;
    let map = MaxBellman::new(mdp);
    let v1 = second_point(&map, v0, v1);
    let (value, trace) = momentum_loop(&map, v0, &v1, alpha, beta, cfg);
    Ok(Solution {
        policy: greedy_of(mdp, &value),
        value,
        trace,
    })
}

/// Accelerated value computation: the accelerated loop with `T_π`.
pub fn solve_avc(
    mdp: &Mdp,
    pi: &Policy,
    v0: &ValueVector,
    v1: Option<&ValueVector>,
    cfg: &SolverConfig,
) -> Result<Evaluation> {
    cfg.validate()?;
    mdp.check_policy(pi)?;
    check_start(mdp, v0, "v0")?;
    if let Some(v1) = v1 {
        check_start(mdp, v1, "v1")?;
    }
    let (alpha, gamma) = accelerated_params(mdp.lambda(), cfg)?;
    let map = PolicyBellman { mdp, pi };
    let v1 = second_point(&map, v0, v1);
    let (value, trace) = accelerated_loop(&map, v0, &v1, alpha, gamma, cfg);
    Ok(Evaluation { value, trace })
}

/// Momentum value computation: the momentum loop with `T_π`.
pub fn solve_mvc(
    mdp: &Mdp,
    pi: &Policy,
    v0: &ValueVector,
    v1: Option<&ValueVector>,
    cfg: &SolverConfig,
) -> Result<Evaluation> {
    cfg.validate()?;
    mdp.check_policy(pi)?;
    check_start(mdp, v0, "v0")?;
    if let Some(v1) = v1 {
        check_start(mdp, v1, "v1")?;
    }
    let (alpha, beta) = momentum_params(mdp.lambda(), cfg)?;
    let map = PolicyBellman { mdp, pi };
    let v1 = second_point(&map, v0, v1);
    let (value, trace) = momentum_loop(&map, v0, &v1, alpha, beta, cfg);
    Ok(Evaluation { value, trace })
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut shift = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            shift = candidate;
        }
    }
    y.iter().map(|&x| (x - shift).max(0.0)).collect()
}

fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum()
}

fn floor_and_normalize(row: &mut [f64]) {
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = x.max(KL_FLOOR);
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

/// One mirror step in a single state: the maximizer of
/// `⟨π, c⟩ − (1/η) D(π, π_old)` over the simplex, and the divergence it
/// pays.
fn mirror_step(c: &[f64], old: &[f64], eta: f64, kind: DivergenceKind) -> (Vec<f64>, f64) {
    if eta.is_infinite() {
        let arg = c
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(i, m), (j, &x)| if x > m { (j, x) } else { (i, m) })
            .0;
        let mut out = vec![0.0; c.len()];
        out[arg] = 1.0;
        return (out, 0.0);
    }
    match kind {
        DivergenceKind::KullbackLeibler => {
            let mut prior = old.to_vec();
            floor_and_normalize(&mut prior);
            let logits: Vec<f64> = prior.iter().zip(c).map(|(p, ci)| p.ln() + eta * ci).collect();
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut out: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let total: f64 = out.iter().sum();
            out.iter_mut().for_each(|x| *x /= total);
            let d = kl_divergence(&out, &prior);
            (out, d)
        }
        DivergenceKind::SquaredEuclidean => {
            let shifted: Vec<f64> = old.iter().zip(c).map(|(p, ci)| p + 0.5 * eta * ci).collect();
            let out = project_simplex(&shifted);
            let d = out.iter().zip(old).map(|(x, y)| (x - y) * (x - y)).sum();
            (out, d)
        }
    }
}

/// Mirror-descent value iteration. Each state's policy row takes a mirror
/// step `π_{t+1,s} = argmax ⟨π, c_s⟩ − (1/η) D(π, π_{t,s})` against the
/// lookahead values `c_s = r_s + λ P_s v_t`, then `v_{t+1,s} = ⟨π_{t+1,s}, c_s⟩`
/// (minus the paid divergence `(1/η) D(π_{t+1,s}, π_{t,s})` when
/// `cfg.mirror_variant` is set). `η = ∞` reduces to value iteration.
pub fn solve_md_vi(
    mdp: &Mdp,
    v0: &ValueVector,
    pi0: Option<&Policy>,
    cfg: &SolverConfig,
) -> Result<Solution> {
    cfg.validate()?;
    check_start(mdp, v0, "v0")?;
    let (n, a) = (mdp.n(), mdp.a());
    let mut pi = match pi0 {
        Some(p) => {
            mdp.check_policy(p)?;
            p.probs().to_vec()
        }
        None => Policy::uniform(n, a).probs().to_vec(),
    };
    let eta = cfg.eta_mirror;
    let mut rec = TraceRecorder::new(cfg);
    let mut v = v0.to_vec();
    let mut prev = v.clone();
    let mut next = vec![0.0; n];
    let mut c = vec![0.0; a];
    loop {
        let mut residual = 0.0f64;
        for s in 0..n {
            for (act, ca) in c.iter_mut().enumerate() {
                *ca = mdp.q_value(s, act, &v);
            }
            let best = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            residual = residual.max((v[s] - best).abs());
            let row = &mut pi[s * a..(s + 1) * a];
            let (new_row, div) = mirror_step(&c, row, eta, cfg.divergence_kind);
            let mut value: f64 = new_row.iter().zip(&c).map(|(p, q)| p * q).sum();
            if cfg.mirror_variant && eta.is_finite() {
                value -= div / eta;
            }
            row.copy_from_slice(&new_row);
            next[s] = value;
        }
        // `pi` now holds π_{t+1}; the recorded residual belongs to v_t.
        if let Some(term) = rec.record(residual, &v) {
            let value = finite_or(v, prev);
            return Ok(Solution {
                policy: Policy::from_probs_unchecked(n, a, pi),
                value,
                trace: rec.finish(term),
            });
        }
        std::mem::swap(&mut prev, &mut v);
        std::mem::swap(&mut v, &mut next);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{gen_named, GenKind, GenSpec};
    use crate::trace::Termination;

    fn m1() -> Mdp {
        gen_named(&GenSpec::new(GenKind::SingleState, 1, 1, 0.9, 0)).unwrap()
    }

    fn m2() -> Mdp {
        gen_named(&GenSpec::new(GenKind::TwoState, 2, 2, 0.5, 0)).unwrap()
    }

    fn iterates(trace: &SolverTrace) -> &Vec<Vec<f64>> {
        trace.iterates.as_ref().unwrap()
    }

    #[test]
    fn vi_examples() {
        let cfg = SolverConfig::default().storing_iterates();
        let sol = solve_vi(&m1(), &ValueVector::zeros(1), &cfg).unwrap();
        let it = iterates(&sol.trace);
        assert_eq!(it[1], vec![1.0]);
        assert!((it[2][0] - 1.9).abs() < 1e-15);
        assert!((it[3][0] - 2.71).abs() < 1e-15);
        assert!(sol.trace.converged());
        assert!((sol.value[0] - 10.0).abs() < 1e-8);

        let sol = solve_vi(&m2(), &ValueVector::zeros(2), &cfg).unwrap();
        let it = iterates(&sol.trace);
        assert_eq!(it[1], vec![1.0, 0.0]);
        assert_eq!(it[2], vec![1.5, 0.0]);
        assert_eq!(it[3], vec![1.75, 0.0]);
        assert!(sol.value.sup_dist(&[2.0, 0.0]) < 1e-9);

        let sol = solve_vi(&m1(), &ValueVector::new(vec![10.0]).unwrap(), &cfg).unwrap();
        assert_eq!(sol.trace.iterations, 0);
        assert!(sol.trace.converged());
        assert!(sol.trace.final_residual() < 1e-14);
    }

    #[test]
    fn vi_reports_budget_exhaustion() {
        let cfg = SolverConfig::default().with_max_iter(5);
        let sol = solve_vi(&m1(), &ValueVector::zeros(1), &cfg).unwrap();
        assert_eq!(sol.trace.termination, Termination::MaxIter);
        assert_eq!(sol.trace.iterations, 5);
    }

    #[test]
    fn vc_examples() {
        let cfg = SolverConfig::default().storing_iterates();
        let trivial = Policy::deterministic(&[0], 1).unwrap();
        let vc = solve_vc(&m1(), &trivial, &ValueVector::zeros(1), &cfg).unwrap();
        let vi = solve_vi(&m1(), &ValueVector::zeros(1), &cfg).unwrap();
        assert_eq!(vc.trace.iterates, vi.trace.iterates);

        let stay = Policy::deterministic(&[0, 0], 2).unwrap();
        let vc = solve_vc(&m2(), &stay, &ValueVector::zeros(2), &cfg).unwrap();
        assert!(vc.value.sup_dist(&[2.0, 0.0]) < 1e-9);

        let jump = Policy::deterministic(&[1, 0], 2).unwrap();
        let vc = solve_vc(&m2(), &jump, &ValueVector::new(vec![7.0, 7.0]).unwrap(), &cfg).unwrap();
        assert!(vc.value.sup_dist(&[0.0, 0.0]) < 1e-9);
    }

    #[test]
    fn rvi_examples() {
        let cfg = SolverConfig::default().storing_iterates();
        let vi = solve_vi(&m2(), &ValueVector::zeros(2), &cfg).unwrap();
        let rvi = solve_rvi(&m2(), &ValueVector::zeros(2), &cfg).unwrap();
        assert_eq!(vi.trace.iterates, rvi.trace.iterates);
        assert_eq!(vi.trace.residuals, rvi.trace.residuals);

        let half = SolverConfig {
            alpha: Some(0.5),
            ..cfg.clone()
        };
        let rvi = solve_rvi(&m1(), &ValueVector::zeros(1), &half).unwrap();
        assert_eq!(iterates(&rvi.trace)[1], vec![0.5]);

        let too_big = SolverConfig {
            alpha: Some(2.5 / 1.9),
            ..cfg
        };
        assert!(matches!(
            solve_rvi(&m1(), &ValueVector::zeros(1), &too_big),
            Err(Error::StepSize { name: "alpha", .. })
        ));
    }

    #[test]
    fn step_size_tunings() {
        let (a, g) = avi_step_sizes(0.9).unwrap();
        assert!((a - 0.526316).abs() < 1e-6);
        assert!((g - 0.626789).abs() < 1e-6);
        let (a, g) = avi_step_sizes(0.5).unwrap();
        assert!((a - 2.0 / 3.0).abs() < 1e-15);
        assert!((g - 0.267949).abs() < 1e-6);
        let (a, g) = avi_step_sizes(1e-8).unwrap();
        assert!((a - 1.0).abs() < 1e-7 && g.abs() < 1e-7);

        let (a, b) = mvi_step_sizes(0.9).unwrap();
        let root = 0.19f64.sqrt();
        assert!((a - 2.0 / (1.0 + root)).abs() < 1e-15);
        assert!((a - 1.392864).abs() < 1e-6);
        assert!((b - 0.392864).abs() < 1e-6);
        let (a, b) = mvi_step_sizes(0.5).unwrap();
        assert!((a - 1.071797).abs() < 1e-6);
        assert!((b - 0.071797).abs() < 1e-6);
        let (a, b) = mvi_step_sizes(1e-8).unwrap();
        assert!((a - 1.0).abs() < 1e-7 && b.abs() < 1e-7);

        assert!(avi_step_sizes(1.0).is_err());
        assert!(mvi_step_sizes(0.0).is_err());
    }

    #[test]
    fn avi_and_mvi_first_steps() {
        let cfg = SolverConfig::default().storing_iterates();
        let zero = ValueVector::zeros(1);
        let sol = solve_avi(&m1(), &zero, Some(&zero), &cfg).unwrap();
        assert!((iterates(&sol.trace)[2][0] - 1.0 / 1.9).abs() < 1e-15);
        assert!(sol.trace.converged());

        let sol = solve_mvi(&m1(), &zero, Some(&zero), &cfg).unwrap();
        let (alpha, _) = mvi_step_sizes(0.9).unwrap();
        assert!((iterates(&sol.trace)[2][0] - alpha).abs() < 1e-15);
        assert!((sol.value[0] - 10.0).abs() < 1e-8);
    }

    #[test]
    fn avi_and_mvi_reduce_to_vi() {
        let plain = SolverConfig::default().storing_iterates();
        let vi = solve_vi(&m2(), &ValueVector::zeros(2), &plain).unwrap();
        let avi_cfg = SolverConfig {
            alpha: Some(1.0),
            gamma: Some(0.0),
            ..plain.clone()
        };
        let avi = solve_avi(&m2(), &ValueVector::zeros(2), None, &avi_cfg).unwrap();
        assert_eq!(vi.trace.iterates, avi.trace.iterates);
        let mvi_cfg = SolverConfig {
            alpha: Some(1.0),
            beta_momentum: Some(0.0),
            ..plain
        };
        let mvi = solve_mvi(&m2(), &ValueVector::zeros(2), None, &mvi_cfg).unwrap();
        assert_eq!(vi.trace.iterates, mvi.trace.iterates);
    }

    #[test]
    fn avc_mvc_single_state() {
        let cfg = SolverConfig::default();
        let trivial = Policy::deterministic(&[0], 1).unwrap();
        let avc = solve_avc(&m1(), &trivial, &ValueVector::zeros(1), None, &cfg).unwrap();
        assert!(avc.trace.converged());
        assert!((avc.value[0] - 10.0).abs() < 1e-8);
        let mvc = solve_mvc(&m1(), &trivial, &ValueVector::zeros(1), None, &cfg).unwrap();
        assert!((mvc.value[0] - 10.0).abs() < 1e-8);
    }

    #[test]
    fn divergence_is_labelled() {
        // A momentum coefficient above one makes the recursion unstable.
        let cfg = SolverConfig {
            beta_momentum: Some(1.5),
            ..SolverConfig::default()
        };
        let sol = solve_mvi(&m2(), &ValueVector::zeros(2), None, &cfg).unwrap();
        assert_eq!(sol.trace.termination, Termination::Diverged);
        assert!(sol.trace.iterations < cfg.max_iter);
        assert!(sol.value.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn stop_check_examples() {
        assert!((stop_threshold(0.1, 0.9) - 0.0055556).abs() < 1e-7);
        assert!(stop_check(&[1.0, 2.0], &[1.0, 2.0], 1e-9, 0.9).unwrap());
        assert!(!stop_check(&[0.0], &[0.01], 0.1, 0.9).unwrap());
        assert!(stop_check(&[0.0], &[0.005], 0.1, 0.9).unwrap());
        assert!(stop_check(&[0.0], &[0.0], 0.0, 0.9).is_err());
    }

    #[test]
    fn md_vi_unregularized_is_vi() {
        let cfg = SolverConfig {
            eta_mirror: f64::INFINITY,
            ..SolverConfig::default().storing_iterates()
        };
        let md = solve_md_vi(&m2(), &ValueVector::zeros(2), None, &cfg).unwrap();
        let vi = solve_vi(&m2(), &ValueVector::zeros(2), &cfg).unwrap();
        assert_eq!(md.trace.iterates, vi.trace.iterates);

        let large = SolverConfig {
            eta_mirror: 1e8,
            ..cfg
        };
        let md = solve_md_vi(&m2(), &ValueVector::zeros(2), None, &large).unwrap();
        for (a, b) in iterates(&md.trace).iter().zip(iterates(&vi.trace)) {
            assert!(sup_dist(a, b) < 1e-9);
        }
    }

    #[test]
    fn md_vi_single_action_is_vc() {
        let cfg = SolverConfig::default().storing_iterates();
        let md = solve_md_vi(&m1(), &ValueVector::zeros(1), None, &cfg).unwrap();
        let trivial = Policy::deterministic(&[0], 1).unwrap();
        let vc = solve_vc(&m1(), &trivial, &ValueVector::zeros(1), &cfg).unwrap();
        assert_eq!(md.trace.iterates, vc.trace.iterates);
    }

    #[test]
    fn md_vi_kl_first_step_is_softmax_reweighting() {
        let e = std::f64::consts::E;
        let (first, _) =
            mirror_step(&[1.0, 0.0], &[0.5, 0.5], 1.0, DivergenceKind::KullbackLeibler);
        assert!((first[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((first[0] - 0.7311).abs() < 1e-4);

        // v_1 in state 0 is ⟨π_1, c⟩ with c = (1, 0).
        let cfg = SolverConfig::default().storing_iterates().with_max_iter(1);
        let md = solve_md_vi(&m2(), &ValueVector::zeros(2), None, &cfg).unwrap();
        assert!((iterates(&md.trace)[1][0] - e / (e + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn euclidean_mirror_step_projects() {
        let (p, d) = mirror_step(&[1.0, 0.0], &[0.5, 0.5], 1.0, DivergenceKind::SquaredEuclidean);
        assert!((p[0] - 0.75).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15);
        assert!((d - 0.125).abs() < 1e-15);
        let (p, _) = mirror_step(&[10.0, 0.0], &[0.5, 0.5], 1.0, DivergenceKind::SquaredEuclidean);
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn simplex_projection_is_a_distribution() {
        for y in [vec![0.2, 0.3, 0.5], vec![-1.0, 4.0, 0.0], vec![3.0, 3.0]] {
            let p = project_simplex(&y);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
        assert_eq!(project_simplex(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
    }

    #[test]
    fn md_vi_variant_pays_the_divergence() {
        let cfg = SolverConfig {
            mirror_variant: true,
            ..SolverConfig::default().storing_iterates().with_max_iter(3)
        };
        let md = solve_md_vi(&m2(), &ValueVector::zeros(2), None, &cfg).unwrap();
        let (p, d) = mirror_step(&[1.0, 0.0], &[0.5, 0.5], 1.0, DivergenceKind::KullbackLeibler);
        let expected = p[0] - d;
        assert!((iterates(&md.trace)[1][0] - expected).abs() < 1e-12);
    }
}
