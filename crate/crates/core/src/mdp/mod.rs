//! The finite discounted MDP model and the value/policy types the solvers
//! operate on.

mod operators;

pub use operators::{log_sum_exp, softmax_in_place, Jacobian, Residual};
pub(crate) use operators::solve_refined;

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on probability rows summing to one.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Absolute tolerance under which two action values count as tied.
pub const TIE_TOL: f64 = 1e-12;

fn check_distribution(row: &[f64]) -> std::result::Result<(), String> {
    let mut sum = 0.0;
    for (j, &p) in row.iter().enumerate() {
        if !p.is_finite() {
            return Err(format!("entry {j} is not finite"));
        }
        if p < 0.0 {
            return Err(format!("entry {j} is negative ({p})"));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(format!("entries sum to {sum}"));
    }
    Ok(())
}

/// A finite MDP with `n` states, `a` actions per state, a dense kernel
/// `P[s][a][s']`, rewards `r[s][a]`, an initial distribution and a discount
/// factor in (0, 1).
///
/// All stochasticity invariants are checked once, in [`Mdp::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    n: usize,
    a: usize,
    kernel: Vec<f64>,
    rewards: Vec<f64>,
    p0: Vec<f64>,
    lambda: f64,
}

impl Mdp {
    /// Builds an MDP from row-major arrays: `kernel` has length `n*a*n` with
    /// index `(s*a + action)*n + s'`, `rewards` has length `n*a`.
    pub fn new(
        n: usize,
        a: usize,
        kernel: Vec<f64>,
        rewards: Vec<f64>,
        p0: Vec<f64>,
        lambda: f64,
    ) -> Result<Self> {
        if n == 0 || a == 0 {
            return Err(Error::InvalidSize(format!(
                "state and action counts must be positive (n={n}, a={a})"
            )));
        }
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Discount(lambda));
        }
        if kernel.len() != n * a * n {
            return Err(Error::DimensionMismatch {
                what: "kernel",
                expected: n * a * n,
                got: kernel.len(),
            });
        }
        if rewards.len() != n * a {
            return Err(Error::DimensionMismatch {
                what: "rewards",
                expected: n * a,
                got: rewards.len(),
            });
        }
        if p0.len() != n {
            return Err(Error::DimensionMismatch {
                what: "p0",
                expected: n,
                got: p0.len(),
            });
        }
        for s in 0..n {
            for act in 0..a {
                let start = (s * a + act) * n;
                check_distribution(&kernel[start..start + n]).map_err(|reason| {
                    Error::KernelRow {
                        state: s,
                        action: act,
                        reason,
                    }
                })?;
            }
        }
        if let Some(i) = rewards.iter().position(|r| !r.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        check_distribution(&p0).map_err(Error::InitialDistribution)?;
        Ok(Self {
            n,
            a,
            kernel,
            rewards,
            p0,
            lambda,
        })
    }

    /// Builds an MDP from nested arrays, `kernel[s][a][s']` and `rewards[s][a]`.
    pub fn from_nested(
        kernel: &[Vec<Vec<f64>>],
        rewards: &[Vec<f64>],
        p0: Vec<f64>,
        lambda: f64,
    ) -> Result<Self> {
        let n = kernel.len();
        let a = kernel.first().map_or(0, Vec::len);
        let mut flat_kernel = Vec::with_capacity(n * a * n);
        for (s, per_action) in kernel.iter().enumerate() {
            if per_action.len() != a {
                return Err(Error::Parse(format!(
                    "kernel[{s}] has {} actions, expected {a}",
                    per_action.len()
                )));
            }
            for (act, row) in per_action.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::Parse(format!(
                        "kernel[{s}][{act}] has length {}, expected {n}",
                        row.len()
                    )));
                }
                flat_kernel.extend_from_slice(row);
            }
        }
        if rewards.len() != n {
            return Err(Error::DimensionMismatch {
                what: "rewards",
                expected: n,
                got: rewards.len(),
            });
        }
        let mut flat_rewards = Vec::with_capacity(n * a);
        for (s, row) in rewards.iter().enumerate() {
            if row.len() != a {
                return Err(Error::Parse(format!(
                    "rewards[{s}] has length {}, expected {a}",
                    row.len()
                )));
            }
            flat_rewards.extend_from_slice(row);
        }
        Self::new(n, a, flat_kernel, flat_rewards, p0, lambda)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> usize {
        self.a
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn p0(&self) -> &[f64] {
        &self.p0
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Transition distribution `P[s][a][·]`.
    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.a + a) * self.n;
        &self.kernel[start..start + self.n]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.a + a]
    }

    /// One-step lookahead value `r[s][a] + λ·P[s][a]·v`.
    #[inline]
    pub fn q_value(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        let expected: f64 = self.row(s, a).iter().zip(v).map(|(p, x)| p * x).sum();
        self.reward(s, a) + self.lambda * expected
    }

    pub fn constants(&self) -> ContractionConstants {
        ContractionConstants::new(self.lambda)
    }

    pub(crate) fn check_len(&self, what: &'static str, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.n,
                got: len,
            });
        }
        Ok(())
    }

    pub(crate) fn check_policy(&self, pi: &Policy) -> Result<()> {
        if pi.n() != self.n {
            return Err(Error::DimensionMismatch {
                what: "policy states",
                expected: self.n,
                got: pi.n(),
            });
        }
        if pi.a() != self.a {
            return Err(Error::DimensionMismatch {
                what: "policy actions",
                expected: self.a,
                got: pi.a(),
            });
        }
        Ok(())
    }
}

/// A stationary randomized policy: row `s` holds a distribution over actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyRepr", into = "PolicyRepr")]
pub struct Policy {
    n: usize,
    a: usize,
    probs: Vec<f64>,
}

impl Policy {
    /// Row-major `n×a` probabilities; every row must be a distribution.
    pub fn new(n: usize, a: usize, probs: Vec<f64>) -> Result<Self> {
        if n == 0 || a == 0 {
            return Err(Error::InvalidSize(format!(
                "policy needs n, a > 0 (n={n}, a={a})"
            )));
        }
        if probs.len() != n * a {
            return Err(Error::DimensionMismatch {
                what: "policy probabilities",
                expected: n * a,
                got: probs.len(),
            });
        }
        for s in 0..n {
            check_distribution(&probs[s * a..(s + 1) * a])
                .map_err(|reason| Error::PolicyRow { state: s, reason })?;
        }
        Ok(Self { n, a, probs })
    }

    /// The deterministic policy playing `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], a: usize) -> Result<Self> {
        if let Some((s, &act)) = actions.iter().enumerate().find(|(_, &act)| act >= a) {
            return Err(Error::PolicyRow {
                state: s,
                reason: format!("action {act} out of range for {a} actions"),
            });
        }
        Ok(Self::from_actions(actions, a))
    }

    pub(crate) fn from_actions(actions: &[usize], a: usize) -> Self {
        let n = actions.len();
        let mut probs = vec![0.0; n * a];
        for (s, &act) in actions.iter().enumerate() {
            probs[s * a + act] = 1.0;
        }
        Self { n, a, probs }
    }

    pub(crate) fn from_probs_unchecked(n: usize, a: usize, probs: Vec<f64>) -> Self {
        Self { n, a, probs }
    }

    pub fn uniform(n: usize, a: usize) -> Self {
        Self {
            n,
            a,
            probs: vec![1.0 / a as f64; n * a],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> usize {
        self.a
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.a..(s + 1) * self.a]
    }

    /// True when every row is a unit basis vector.
    pub fn is_deterministic(&self) -> bool {
        self.actions().is_some()
    }

    /// The action chosen in each state, if the policy is deterministic.
    pub fn actions(&self) -> Option<Vec<usize>> {
        (0..self.n)
            .map(|s| {
                let row = self.row(s);
                let hot = row.iter().position(|&p| p == 1.0)?;
                row.iter()
                    .enumerate()
                    .all(|(j, &p)| j == hot || p == 0.0)
                    .then_some(hot)
            })
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum PolicyRepr {
    Deterministic { a: usize, actions: Vec<usize> },
    Stochastic { probs: Vec<Vec<f64>> },
}

impl TryFrom<PolicyRepr> for Policy {
    type Error = Error;

    fn try_from(repr: PolicyRepr) -> Result<Self> {
        match repr {
            PolicyRepr::Deterministic { a, actions } => Policy::deterministic(&actions, a),
            PolicyRepr::Stochastic { probs } => {
                let n = probs.len();
                let a = probs.first().map_or(0, Vec::len);
                if let Some(s) = probs.iter().position(|row| row.len() != a) {
                    return Err(Error::Parse(format!("policy row {s} has the wrong length")));
                }
                Policy::new(n, a, probs.concat())
            }
        }
    }
}

impl From<Policy> for PolicyRepr {
    fn from(pi: Policy) -> Self {
        match pi.actions() {
            Some(actions) => PolicyRepr::Deterministic { a: pi.a, actions },
            None => PolicyRepr::Stochastic {
                probs: pi.probs.chunks(pi.a).map(<[f64]>::to_vec).collect(),
            },
        }
    }
}

/// A finite real vector indexed by states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueVector(Vec<f64>);

impl ValueVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.0)
    }

    /// `‖self − other‖∞`.
    pub fn sup_dist(&self, other: &[f64]) -> f64 {
        sup_dist(&self.0, other)
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }
}

impl Deref for ValueVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<DVector<f64>> for ValueVector {
    fn from(v: DVector<f64>) -> Self {
        Self(v.as_slice().to_vec())
    }
}

pub fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn sup_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

/// Transition matrix and one-step reward vector induced by a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyMatrices {
    pub p_pi: DMatrix<f64>,
    pub r_pi: DVector<f64>,
}

/// The strong-monotonicity and Lipschitz constants of `I − T` in the sup
/// norm, `μ = 1 − λ` and `L = 1 + λ`, with `κ = μ / L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionConstants {
    pub mu: f64,
    pub ell: f64,
    pub kappa: f64,
}

impl ContractionConstants {
    pub fn new(lambda: f64) -> Self {
        let mu = 1.0 - lambda;
        let ell = 1.0 + lambda;
        Self {
            mu,
            ell,
            kappa: mu / ell,
        }
    }

    /// Rate of plain value iteration, `(1 − κ)/(1 + κ) = λ`.
    pub fn vi_rate(&self) -> f64 {
        (1.0 - self.kappa) / (1.0 + self.kappa)
    }

    /// Rate of accelerated value computation on real-spectrum policies.
    pub fn accelerated_rate(&self) -> f64 {
        1.0 - self.kappa.sqrt()
    }

    /// Rate of momentum value computation on real-spectrum policies.
    pub fn momentum_rate(&self) -> f64 {
        let sk = self.kappa.sqrt();
        (1.0 - sk) / (1.0 + sk)
    }
}
