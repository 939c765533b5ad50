//! Seeded generators for test MDPs and the on-disk MDP format.

mod io;

pub use io::{load_mdp, mdp_from_json, mdp_to_json, save_mdp, MdpFile};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Mdp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenKind {
    Random,
    ReversiblePair,
    HardCycle,
    SingleState,
    TwoState,
}

impl GenKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::ReversiblePair => "reversible_pair",
            Self::HardCycle => "hard_cycle",
            Self::SingleState => "single_state",
            Self::TwoState => "two_state",
        }
    }
}

impl std::str::FromStr for GenKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "random" => Ok(Self::Random),
            "reversible_pair" => Ok(Self::ReversiblePair),
            "hard_cycle" => Ok(Self::HardCycle),
            "single_state" => Ok(Self::SingleState),
            "two_state" => Ok(Self::TwoState),
            other => Err(Error::Parse(format!("unknown instance kind '{other}'"))),
        }
    }
}

fn default_reward_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    pub kind: GenKind,
    pub n: usize,
    pub a: usize,
    pub lambda: f64,
    pub seed: u64,
    #[serde(default = "default_reward_scale")]
    pub reward_scale: f64,
}

impl GenSpec {
    pub fn new(kind: GenKind, n: usize, a: usize, lambda: f64, seed: u64) -> Self {
        Self {
            kind,
            n,
            a,
            lambda,
            seed,
            reward_scale: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.a == 0 {
            return Err(Error::InvalidSize(format!(
                "generator needs n, a ≥ 1 (n={}, a={})",
                self.n, self.a
            )));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Discount(self.lambda));
        }
        if !(self.reward_scale.is_finite() && self.reward_scale >= 0.0) {
            return Err(Error::Parameter {
                name: "reward_scale",
                value: self.reward_scale,
                reason: "must be finite and nonnegative",
            });
        }
        Ok(())
    }

    fn expect_kind(&self, kind: GenKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Config(format!(
                "generator for {kind:?} called with kind {:?}",
                self.kind
            )));
        }
        self.validate()
    }
}

fn uniform_p0(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Dense random MDP: flat-Dirichlet transition rows, rewards uniform on
/// `[0, reward_scale]`, uniform initial distribution.
pub fn gen_random_mdp(spec: &GenSpec) -> Result<Mdp> {
    spec.expect_kind(GenKind::Random)?;
    let (n, a) = (spec.n, spec.a);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut kernel = Vec::with_capacity(n * a * n);
    for _ in 0..n * a {
        let row: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = row.iter().sum();
        kernel.extend(row.into_iter().map(|x| x / total));
    }
    let rewards = (0..n * a)
        .map(|_| rng.random::<f64>() * spec.reward_scale)
        .collect();
    Mdp::new(n, a, kernel, rewards, uniform_p0(n), spec.lambda)
}

/// A reversible transition matrix with its reward vector.
#[derive(Debug, Clone)]
pub struct ReversiblePair {
    pub p_pi: DMatrix<f64>,
    pub r_pi: DVector<f64>,
    /// Largest imaginary part among the eigenvalues of `p_pi`.
    pub max_imag: f64,
}

impl ReversiblePair {
    /// Wraps the pair as a single-action MDP, whose only policy has exactly
    /// this transition matrix and reward.
    pub fn into_mdp(self, lambda: f64) -> Result<Mdp> {
        let n = self.p_pi.nrows();
        let kernel = (0..n)
            .flat_map(|s| self.p_pi.row(s).iter().copied().collect::<Vec<_>>())
            .collect();
        Mdp::new(n, 1, kernel, self.r_pi.as_slice().to_vec(), uniform_p0(n), lambda)
    }
}

/// Builds `P = D⁻¹W` for a seeded symmetric positive `W`. Such a chain is
/// reversible, so its spectrum is real; this is checked here.
pub fn gen_reversible_pair(spec: &GenSpec) -> Result<ReversiblePair> {
    spec.expect_kind(GenKind::ReversiblePair)?;
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let x = 0.01 + 0.99 * rng.random::<f64>();
            w[(i, j)] = x;
            w[(j, i)] = x;
        }
    }
    let r_pi = DVector::from_iterator(n, (0..n).map(|_| rng.random::<f64>() * spec.reward_scale));
    reversible_from_weights(&w, r_pi)
}

/// `P = D⁻¹W` from a symmetric nonnegative weight matrix with positive row sums.
pub fn reversible_from_weights(w: &DMatrix<f64>, r_pi: DVector<f64>) -> Result<ReversiblePair> {
    let n = w.nrows();
    if w.ncols() != n || r_pi.len() != n {
        return Err(Error::DimensionMismatch {
            what: "weight matrix",
            expected: n,
            got: w.ncols(),
        });
    }
    let mut p_pi = w.clone();
    for i in 0..n {
        let total: f64 = w.row(i).sum();
        if !(total > 0.0) {
            return Err(Error::Precondition(format!("weight row {i} has no mass")));
        }
        for j in 0..n {
            p_pi[(i, j)] = w[(i, j)] / total;
        }
    }
    let max_imag = p_pi
        .complex_eigenvalues()
        .iter()
        .fold(0.0f64, |m, z| m.max(z.im.abs()));
    if max_imag > 1e-10 {
        return Err(Error::Precondition(format!(
            "generated chain has complex eigenvalues (max |Im| = {max_imag:e})"
        )));
    }
    Ok(ReversiblePair {
        p_pi,
        r_pi,
        max_imag,
    })
}

/// Single-action cycle `s → s+1 mod n` with reward 1 in state 0 only. Value
/// iteration from zero leaves an error of exactly `λ^t ‖v_0 − v*‖∞` for
/// `t < n`; that behaviour is checked here for `n ≤ 100`.
pub fn gen_hard_cycle(spec: &GenSpec) -> Result<Mdp> {
    spec.expect_kind(GenKind::HardCycle)?;
    if spec.a != 1 {
        return Err(Error::InvalidSize(format!(
            "the hard cycle has a single action, got a={}",
            spec.a
        )));
    }
    let n = spec.n;
    let mut kernel = vec![0.0; n * n];
    for s in 0..n {
        kernel[s * n + (s + 1) % n] = 1.0;
    }
    let mut rewards = vec![0.0; n];
    rewards[0] = 1.0;
    let mdp = Mdp::new(n, 1, kernel, rewards, uniform_p0(n), spec.lambda)?;
    if n <= 100 {
        let ratios = hard_cycle_ratios(&mdp);
        let floor = spec.lambda.powi(n as i32);
        if let Some((t, r)) = ratios
            .iter()
            .enumerate()
            .skip(1)
            .find(|(_, &r)| r < floor * (1.0 - 1e-9) || r > 1.0 + 1e-9)
        {
            return Err(Error::Precondition(format!(
                "hard cycle ratio {r} at t={t} left [λ^n, 1]"
            )));
        }
    }
    Ok(mdp)
}

/// Closed-form optimal value of [`gen_hard_cycle`]: `v*_s = λ^{(n−s) mod n}/(1−λⁿ)`.
pub fn hard_cycle_value(n: usize, lambda: f64) -> Vec<f64> {
    let scale = 1.0 / (1.0 - lambda.powi(n as i32));
    (0..n)
        .map(|s| lambda.powi(((n - s) % n) as i32) * scale)
        .collect()
}

/// `‖v_t − v*‖∞ / (λ^t ‖v_0 − v*‖∞)` for value iteration from zero on a
/// cycle instance, for `t = 0..n`.
pub fn hard_cycle_ratios(mdp: &Mdp) -> Vec<f64> {
    let n = mdp.n();
    let lambda = mdp.lambda();
    let v_star = hard_cycle_value(n, lambda);
    let mut v = vec![0.0; n];
    let e0 = crate::mdp::sup_dist(&v, &v_star);
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        out.push(crate::mdp::sup_dist(&v, &v_star) / (lambda.powi(t as i32) * e0));
        v = mdp.bellman_vec(&v);
    }
    out
}

/// The two hand-checkable instances: a one-state self-loop (`r = 1`,
/// `λ = 0.9`) and a two-state stay-or-jump chain (`λ = 0.5`). Sizes and
/// discount in `spec` are ignored.
pub fn gen_named(spec: &GenSpec) -> Result<Mdp> {
    match spec.kind {
        GenKind::SingleState => Mdp::new(1, 1, vec![1.0], vec![1.0], vec![1.0], 0.9),
        GenKind::TwoState => Mdp::new(
            2,
            2,
            vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![1.0, 0.0],
            0.5,
        ),
        other => Err(Error::Config(format!("{other:?} is not a named instance"))),
    }
}

/// Dispatches on `spec.kind`; reversible pairs come back as single-action MDPs.
pub fn generate(spec: &GenSpec) -> Result<Mdp> {
    match spec.kind {
        GenKind::Random => gen_random_mdp(spec),
        GenKind::ReversiblePair => gen_reversible_pair(spec)?.into_mdp(spec.lambda),
        GenKind::HardCycle => gen_hard_cycle(spec),
        GenKind::SingleState | GenKind::TwoState => gen_named(spec),
    }
}
