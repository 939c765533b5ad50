//! Bellman operators (max, fixed-policy, log-sum-exp smoothed) and the
//! Jacobians of the associated residual maps.

use nalgebra::{DMatrix, DVector};

use super::{sup_norm, Mdp, Policy, PolicyMatrices, ValueVector, TIE_TOL};
use crate::error::{Error, Result};

/// `F(v) = v − T(v)` together with its sup norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub value: Vec<f64>,
    pub inf_norm: f64,
}

impl Residual {
    pub fn from_vec(value: Vec<f64>) -> Self {
        let inf_norm = sup_norm(&value);
        Self { value, inf_norm }
    }
}

/// Jacobian `I − λ P_{π(v)}` of `v ↦ v − T(v)` at a point, with the greedy
/// policy it was built from.
#[derive(Debug, Clone)]
pub struct Jacobian {
    pub matrix: DMatrix<f64>,
    pub greedy: Policy,
    /// False when some state has two actions tied for the maximum, where
    /// the residual map is not differentiable.
    pub unique: bool,
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Parameter {
            name: "beta",
            value: beta,
            reason: "smoothing parameter must be positive and finite",
        });
    }
    Ok(())
}

impl Mdp {
    /// Writes `T(v)` into `out` and the lowest-index maximizing action per
    /// state into `greedy`.
    pub(crate) fn bellman_into(&self, v: &[f64], out: &mut [f64], greedy: &mut [usize]) {
        for s in 0..self.n {
            let mut best = self.q_value(s, 0, v);
            let mut arg = 0;
            for a in 1..self.a {
                let q = self.q_value(s, a, v);
                if q > best {
                    best = q;
                    arg = a;
                }
            }
            out[s] = best;
            greedy[s] = arg;
        }
    }

    pub(crate) fn bellman_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        let mut greedy = vec![0; self.n];
        self.bellman_into(v, &mut out, &mut greedy);
        out
    }

    /// `T(v)_s = max_a { r_sa + λ P_sa·v }` and the greedy policy attaining
    /// it (lowest action index among exact maximizers).
    pub fn bellman_apply(&self, v: &[f64]) -> Result<(ValueVector, Policy)> {
        self.check_len("value vector", v.len())?;
        let mut out = vec![0.0; self.n];
        let mut greedy = vec![0; self.n];
        self.bellman_into(v, &mut out, &mut greedy);
        Ok((
            ValueVector::from_raw(out),
            Policy::from_actions(&greedy, self.a),
        ))
    }

    pub(crate) fn policy_apply_into(&self, pi: &Policy, v: &[f64], out: &mut [f64]) {
        for (s, o) in out.iter_mut().enumerate() {
            *o = pi
                .row(s)
                .iter()
                .enumerate()
                .filter(|(_, &w)| w != 0.0)
                .map(|(a, &w)| w * self.q_value(s, a, v))
                .sum();
        }
    }

    /// `T_π(v) = r_π + λ P_π v`.
    pub fn bellman_policy_apply(&self, pi: &Policy, v: &[f64]) -> Result<ValueVector> {
        self.check_policy(pi)?;
        self.check_len("value vector", v.len())?;
        let mut out = vec![0.0; self.n];
        self.policy_apply_into(pi, v, &mut out);
        Ok(ValueVector::from_raw(out))
    }

    /// `P_π[s][s'] = Σ_a π_sa P_sas'` and `r_π[s] = Σ_a π_sa r_sa`.
    pub fn policy_matrices(&self, pi: &Policy) -> Result<PolicyMatrices> {
        self.check_policy(pi)?;
        let n = self.n;
        let mut p_pi = DMatrix::zeros(n, n);
        let mut r_pi = DVector::zeros(n);
        for s in 0..n {
            for (a, &w) in pi.row(s).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                r_pi[s] += w * self.reward(s, a);
                for (t, &p) in self.row(s, a).iter().enumerate() {
                    p_pi[(s, t)] += w * p;
                }
            }
        }
        Ok(PolicyMatrices { p_pi, r_pi })
    }

    /// Exact value of a policy, solving `(I − λ P_π) v = r_π`.
    pub fn policy_value(&self, pi: &Policy) -> Result<ValueVector> {
        let PolicyMatrices { p_pi, r_pi } = self.policy_matrices(pi)?;
        let system = DMatrix::identity(self.n, self.n) - p_pi * self.lambda;
        let v = solve_refined(&system, &r_pi, 1e-10)?;
        Ok(ValueVector::from(v))
    }

    /// `R(π) = p0·v^π`.
    pub fn expected_return(&self, pi: &Policy) -> Result<f64> {
        let v = self.policy_value(pi)?;
        Ok(self.p0.iter().zip(v.iter()).map(|(p, x)| p * x).sum())
    }

    pub(crate) fn smoothed_into(&self, beta: f64, v: &[f64], out: &mut [f64], q: &mut [f64]) {
        for s in 0..self.n {
            for (a, qa) in q.iter_mut().enumerate() {
                *qa = self.q_value(s, a, v);
            }
            out[s] = log_sum_exp(beta, q);
        }
    }

    /// `T_β(v)_s = (1/β) log Σ_a exp(β (r_sa + λ P_sa·v))`.
    pub fn smoothed_bellman_apply(&self, beta: f64, v: &[f64]) -> Result<ValueVector> {
        check_beta(beta)?;
        self.check_len("value vector", v.len())?;
        let mut out = vec![0.0; self.n];
        let mut q = vec![0.0; self.a];
        self.smoothed_into(beta, v, &mut out, &mut q);
        Ok(ValueVector::from_raw(out))
    }

    /// Jacobian of `v ↦ v − T(v)` at `v`, built from the lowest-index greedy
    /// policy; `unique` reports whether that policy is the only maximizer.
    pub fn bellman_jacobian(&self, v: &[f64]) -> Result<Jacobian> {
        self.check_len("value vector", v.len())?;
        let n = self.n;
        let mut actions = vec![0; n];
        let mut unique = true;
        let mut q = vec![0.0; self.a];
        for s in 0..n {
            for (a, qa) in q.iter_mut().enumerate() {
                *qa = self.q_value(s, a, v);
            }
            let (arg, best) = q
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(i, m), (j, &x)| {
                    if x > m {
                        (j, x)
                    } else {
                        (i, m)
                    }
                });
            actions[s] = arg;
            if q.iter().filter(|&&x| x >= best - TIE_TOL).count() > 1 {
                unique = false;
            }
        }
        let mut matrix = DMatrix::identity(n, n);
        for s in 0..n {
            for (t, &p) in self.row(s, actions[s]).iter().enumerate() {
                matrix[(s, t)] -= self.lambda * p;
            }
        }
        Ok(Jacobian {
            matrix,
            greedy: Policy::from_actions(&actions, self.a),
            unique,
        })
    }

    /// Softmax action weights `w_sa ∝ exp(β q_sa)` at `v`.
    pub fn softmax_policy(&self, beta: f64, v: &[f64]) -> Result<Policy> {
        check_beta(beta)?;
        self.check_len("value vector", v.len())?;
        let mut probs = vec![0.0; self.n * self.a];
        for s in 0..self.n {
            let row = &mut probs[s * self.a..(s + 1) * self.a];
            for (a, w) in row.iter_mut().enumerate() {
                *w = self.q_value(s, a, v);
            }
            softmax_in_place(beta, row);
        }
        Ok(Policy::from_probs_unchecked(self.n, self.a, probs))
    }

    /// Jacobian of `v ↦ v − T_β(v)`: `I − λ P_{π_w}` for the softmax policy
    /// `π_w` at `v`.
    pub fn smoothed_jacobian(&self, beta: f64, v: &[f64]) -> Result<DMatrix<f64>> {
        let weights = self.softmax_policy(beta, v)?;
        let PolicyMatrices { p_pi, .. } = self.policy_matrices(&weights)?;
        Ok(DMatrix::identity(self.n, self.n) - p_pi * self.lambda)
    }

    /// `F(v) = v − T(v)`.
    pub fn residual(&self, v: &[f64]) -> Result<Residual> {
        self.check_len("value vector", v.len())?;
        let tv = self.bellman_vec(v);
        Ok(Residual::from_vec(
            v.iter().zip(&tv).map(|(x, y)| x - y).collect(),
        ))
    }
}

/// `(1/β) log Σ exp(β x)`, shifted by the maximum so that no term overflows.
pub fn log_sum_exp(beta: f64, x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = x.iter().map(|&xi| (beta * (xi - m)).exp()).sum();
    m + s.ln() / beta
}

/// Replaces `x` with `softmax(β x)`.
pub fn softmax_in_place(beta: f64, x: &mut [f64]) {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for xi in x.iter_mut() {
        *xi = (beta * (*xi - m)).exp();
        total += *xi;
    }
    for xi in x.iter_mut() {
        *xi /= total;
    }
}

/// LU solve with one step of iterative refinement when the sup-norm
/// residual of the first solve exceeds `tol`.
pub(crate) fn solve_refined(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    let mut x = lu.solve(b).ok_or(Error::Singular("LU factorization"))?;
    let mut r = b - a * &x;
    if r.amax() > tol {
        let dx = lu.solve(&r).ok_or(Error::Singular("LU refinement"))?;
        x += dx;
        r = b - a * &x;
    }
    if !r.amax().is_finite() || r.amax() > tol.max(1e3 * f64::EPSILON * b.amax()) {
        return Err(Error::Singular("residual check"));
    }
    Ok(x)
}
