//! Anderson value iteration of type I and type II.
//!
//! Both variants take the step `v_{t+1} = T(v_t) − (ΔV − ΔF) w` over a window
//! of the last `k ≤ m` iterate differences `ΔV` and residual differences
//! `ΔF`, where `F(v) = v − T(v)`. Type II picks `w` by least squares,
//! `min ‖f_t − ΔF w‖₂`, which is the mixing `v_{t+1} = Σ α_i T(v_i)`; type I
//! solves `ΔVᵀΔF w = ΔVᵀ f_t`, which is `v_t − J_t⁻¹ f_t` for the multi-secant
//! Jacobian `J_t = I + (ΔF − ΔV)(ΔVᵀΔV)⁻¹ΔVᵀ` after a Woodbury reduction.

use std::collections::VecDeque;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::first_order::{check_start, finite_or, greedy_of, FixedPointMap, MaxBellman, Solution};
use crate::kernels::anderson_update_matrices;
use crate::mdp::{sup_norm, Mdp, ValueVector};
use crate::trace::{AndersonStats, SolverConfig, TraceRecorder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AndersonKind {
    Type1,
    Type2,
}

impl FromStr for AndersonKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "type1" | "1" | "I" => Ok(Self::Type1),
            "type2" | "2" | "II" => Ok(Self::Type2),
            other => Err(Error::Parse(format!("unknown Anderson kind {other:?}"))),
        }
    }
}

pub const DEFAULT_MEMORY: usize = 5;

/// Sliding history of iterate and residual differences, oldest column first.
#[derive(Debug, Clone, PartialEq)]
pub struct AndersonWindow {
    m: usize,
    dim: usize,
    dv: VecDeque<Vec<f64>>,
    df: VecDeque<Vec<f64>>,
    anchor: Option<(Vec<f64>, Vec<f64>)>,
}

impl AndersonWindow {
    pub fn new(m: usize, dim: usize) -> Self {
        Self {
            m,
            dim,
            dv: VecDeque::with_capacity(m.min(dim).saturating_add(1)),
            df: VecDeque::with_capacity(m.min(dim).saturating_add(1)),
            anchor: None,
        }
    }

    /// Builds a window directly from difference matrices with equal column
    /// counts. The memory equals the number of columns.
    pub fn from_differences(dv: &DMatrix<f64>, df: &DMatrix<f64>) -> Result<Self> {
        if dv.shape() != df.shape() {
            return Err(Error::DimensionMismatch {
                what: "difference columns",
                expected: dv.ncols(),
                got: df.ncols(),
            });
        }
        let col = |m: &DMatrix<f64>, j: usize| m.column(j).iter().copied().collect::<Vec<_>>();
        Ok(Self {
            m: dv.ncols(),
            dim: dv.nrows(),
            dv: (0..dv.ncols()).map(|j| col(dv, j)).collect(),
            df: (0..df.ncols()).map(|j| col(df, j)).collect(),
            anchor: None,
        })
    }

    pub fn memory(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fill(&self) -> usize {
        self.dv.len()
    }

    /// Records the iterate `v` with residual `f`, appending the differences
    /// to the previous iterate and dropping the oldest column past `m`.
    pub fn push(&mut self, v: &[f64], f: &[f64]) {
        if let Some((pv, pf)) = &self.anchor {
            if self.m > 0 {
                self.dv.push_back(v.iter().zip(pv).map(|(a, b)| a - b).collect());
                self.df.push_back(f.iter().zip(pf).map(|(a, b)| a - b).collect());
                if self.dv.len() > self.m {
                    self.dv.pop_front();
                    self.df.pop_front();
                }
            }
        }
        self.anchor = Some((v.to_vec(), f.to_vec()));
    }

    /// Drops all stored differences; the last iterate stays as the anchor.
    pub fn clear(&mut self) {
        self.dv.clear();
        self.df.clear();
    }

    pub fn dv(&self) -> DMatrix<f64> {
        columns(self.dim, &self.dv)
    }

    pub fn df(&self) -> DMatrix<f64> {
        columns(self.dim, &self.df)
    }
}

fn columns(dim: usize, cols: &VecDeque<Vec<f64>>) -> DMatrix<f64> {
    DMatrix::from_fn(dim, cols.len(), |i, j| cols[j][i])
}

/// Thresholds of the stabilization pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilizationConfig {
    pub memory: usize,
    /// Weight of the plain step `T(v_t)` in a Powell blend.
    pub powell_theta: f64,
    /// Condition estimate above which the window system is regularized and
    /// the step blended.
    pub powell_cond: f64,
    /// Condition estimate above which the window is cleared.
    pub restart_cond_cap: f64,
    pub safeguard_factor: f64,
    /// Check the safeguard every `safeguard_period` iterations; 0 disables it.
    pub safeguard_period: usize,
    /// Relative Tikhonov weight used inside the Powell region.
    pub tikhonov: f64,
}

impl Default for StabilizationConfig {
    fn default() -> Self {
        Self {
            memory: DEFAULT_MEMORY,
            powell_theta: 0.1,
            powell_cond: 1e6,
            restart_cond_cap: 1e8,
            safeguard_factor: 2.0,
            safeguard_period: 5,
            tikhonov: 1e-10,
        }
    }
}

impl StabilizationConfig {
    pub fn with_memory(mut self, m: usize) -> Self {
        self.memory = m;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.powell_theta > 0.0 && self.powell_theta < 1.0) {
            return Err(Error::Parameter {
                name: "powell_theta",
                value: self.powell_theta,
                reason: "must lie in (0, 1)",
            });
        }
        if !(self.safeguard_factor >= 1.0) {
            return Err(Error::Parameter {
                name: "safeguard_factor",
                value: self.safeguard_factor,
                reason: "must be at least 1",
            });
        }
        if !(self.powell_cond >= 1.0 && self.restart_cond_cap >= self.powell_cond) {
            return Err(Error::Config(format!(
                "need 1 <= powell_cond ({}) <= restart_cond_cap ({})",
                self.powell_cond, self.restart_cond_cap
            )));
        }
        if !(self.tikhonov >= 0.0) {
            return Err(Error::Parameter {
                name: "tikhonov",
                value: self.tikhonov,
                reason: "must be nonnegative",
            });
        }
        Ok(())
    }
}

/// Least-squares mixing weights: `beta` minimizes `‖f_t − ΔF β‖₂` and
/// `alpha` are the affine weights on `T(v_{t−k}), …, T(v_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingWeights {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
}

/// `α₁ = β₁`, `α_i = β_i − β_{i−1}`, `α_{k+1} = 1 − β_k`. The sum telescopes
/// to one.
pub fn alpha_from_beta(beta: &[f64]) -> Vec<f64> {
    let k = beta.len();
    let mut alpha = Vec::with_capacity(k + 1);
    let mut prev = 0.0;
    for &b in beta {
        alpha.push(b - prev);
        prev = b;
    }
    alpha.push(1.0 - prev);
    alpha
}

pub fn anderson_weights(window: &AndersonWindow, f_t: &[f64]) -> Result<MixingWeights> {
    if window.fill() == 0 {
        return Err(Error::Precondition("Anderson weights need a nonempty window".into()));
    }
    if f_t.len() != window.dim() {
        return Err(Error::DimensionMismatch {
            what: "residual",
            expected: window.dim(),
            got: f_t.len(),
        });
    }
    let sys = WindowSystem::new(window, AndersonKind::Type2, f_t);
    let beta = sys.solve(&StabilizationConfig::default())?.weights;
    Ok(MixingWeights {
        alpha: alpha_from_beta(&beta),
        beta,
    })
}

/// The `k × k` system behind one Anderson step.
struct WindowSystem {
    dv: DMatrix<f64>,
    df: DMatrix<f64>,
    lhs: DMatrix<f64>,
    rhs: DVector<f64>,
    cond: f64,
    trace: f64,
}

struct WindowSolve {
    weights: Vec<f64>,
    regularized: bool,
}

impl WindowSystem {
    fn new(window: &AndersonWindow, kind: AndersonKind, f: &[f64]) -> Self {
        let dv = window.dv();
        let df = window.df();
        let f = DVector::from_column_slice(f);
        let (lhs, rhs) = match kind {
            AndersonKind::Type2 => (df.tr_mul(&df), df.tr_mul(&f)),
            AndersonKind::Type1 => (dv.tr_mul(&df), dv.tr_mul(&f)),
        };
        let sv = lhs.clone().singular_values();
        let (hi, lo) = sv
            .iter()
            .fold((0.0f64, f64::INFINITY), |(h, l), &s| (h.max(s), l.min(s)));
        let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        Self {
            dv,
            df,
            lhs,
            rhs,
            cond: if cond.is_nan() { f64::INFINITY } else { cond },
            trace: sv.sum(),
        }
    }

    fn solve(&self, stab: &StabilizationConfig) -> Result<WindowSolve> {
        if self.rhs.iter().all(|&x| x == 0.0) {
            return Ok(WindowSolve {
                weights: vec![0.0; self.rhs.len()],
                regularized: false,
            });
        }
        if self.cond > stab.restart_cond_cap {
            return Err(Error::Singular("Anderson window is ill-conditioned"));
        }
        let regularized = self.cond > stab.powell_cond;
        let mut lhs = self.lhs.clone();
        if regularized {
            let k = lhs.nrows();
            let delta = stab.tikhonov * self.trace / k as f64;
            for i in 0..k {
                lhs[(i, i)] += delta;
            }
        }
        let w = lhs
            .lu()
            .solve(&self.rhs)
            .filter(|w| w.iter().all(|x| x.is_finite()))
            .ok_or(Error::Singular("Anderson window system"))?;
        Ok(WindowSolve {
            weights: w.iter().copied().collect(),
            regularized,
        })
    }

    /// Largest columnwise relative residual of the unregularized multi-secant
    /// condition: `G ΔF = ΔV` for type II, `J ΔV = ΔF` for type I.
    fn secant_residual(&self, kind: AndersonKind) -> f64 {
        let (basis, target, other) = match kind {
            AndersonKind::Type2 => (&self.df, &self.dv, &self.df),
            AndersonKind::Type1 => (&self.dv, &self.df, &self.dv),
        };
        // M = I + (target − other) basis⁺, so M·basis − target =
        // (target − other)(basis⁺ basis − I).
        let k = basis.ncols();
        let Ok(pinv) = basis.clone().pseudo_inverse(0.0) else {
            return f64::INFINITY;
        };
        let proj = &pinv * basis - DMatrix::<f64>::identity(k, k);
        let err = (target - other) * proj;
        (0..k)
            .map(|j| err.column(j).norm() / target.column(j).norm().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

/// Anderson value iteration with Powell blending, restarts and safeguarding.
pub fn solve_anderson_vi(
    mdp: &Mdp,
    v0: &ValueVector,
    cfg: &SolverConfig,
    stab: &StabilizationConfig,
    kind: AndersonKind,
) -> Result<Solution> {
    cfg.validate()?;
    stab.validate()?;
    check_start(mdp, v0, "v0")?;
    let map = MaxBellman::new(mdp);
    let n = mdp.n();
    let mut rec = TraceRecorder::new(cfg);
    let mut stats = AndersonStats::default();
    let mut window = AndersonWindow::new(stab.memory, n);

    let mut v = v0.to_vec();
    let mut tv = vec![0.0; n];
    map.apply(&v, &mut tv);
    let mut f: Vec<f64> = v.iter().zip(&tv).map(|(a, b)| a - b).collect();
    let mut res = sup_norm(&f);
    let mut best = res;
    let mut prev = v.clone();
    window.push(&v, &f);

    let mut restarts = 0usize;
    let mut fired = false;
    let mut secant = f64::NAN;
    let mut t = 0usize;
    let (value, mut trace) = loop {
        stats.window_fill.push(window.fill());
        stats.restarts_so_far.push(restarts);
        stats.safeguard_fired.push(fired);
        stats.secant_residual.push(secant);
        if let Some(term) = rec.record(res, &v) {
            break (finite_or(v, prev), rec.finish(term));
        }

        let mut cand = tv.clone();
        secant = f64::NAN;
        if window.fill() > 0 {
            let sys = WindowSystem::new(&window, kind, &f);
            match sys.solve(stab) {
                Ok(sol) => {
                    secant = sys.secant_residual(kind);
                    let step = (&sys.dv - &sys.df) * DVector::from_vec(sol.weights);
                    for (c, s) in cand.iter_mut().zip(step.iter()) {
                        *c -= s;
                    }
                    if sol.regularized {
                        for (c, x) in cand.iter_mut().zip(&tv) {
                            *c = (1.0 - stab.powell_theta) * *c + stab.powell_theta * x;
                        }
                    }
                }
                Err(_) => {
                    window.clear();
                    restarts += 1;
                }
            }
        }

        t += 1;
        let mut t_cand = vec![0.0; n];
        map.apply(&cand, &mut t_cand);
        let mut f_cand: Vec<f64> = cand.iter().zip(&t_cand).map(|(a, b)| a - b).collect();
        let mut r_cand = sup_norm(&f_cand);
        fired = false;
        let check = stab.safeguard_period > 0 && t.is_multiple_of(stab.safeguard_period);
        let broken = stab.safeguard_period > 0 && !r_cand.is_finite();
        if broken || (check && r_cand > stab.safeguard_factor * best) {
            fired = true;
            cand.copy_from_slice(&tv);
            map.apply(&cand, &mut t_cand);
            f_cand = cand.iter().zip(&t_cand).map(|(a, b)| a - b).collect();
            r_cand = sup_norm(&f_cand);
        }
        prev = std::mem::replace(&mut v, cand);
        tv = t_cand;
        f = f_cand;
        res = r_cand;
        best = best.min(res);
        window.push(&v, &f);
    };
    trace.anderson = Some(stats);
    Ok(Solution {
        policy: greedy_of(mdp, &value),
        value,
        trace,
    })
}

/// Whether the multi-secant matrices of two consecutive windows differ by a
/// matrix of numerical rank at most one, for both the inverse (type II) and
/// direct (type I) forms.
///
/// The windows must be consecutive with unbounded memory: `next` equals
/// `prev` with one column appended, or the two are identical.
pub fn rank_one_check(prev: &AndersonWindow, next: &AndersonWindow) -> Result<bool> {
    if prev.dim() != next.dim() {
        return Err(Error::DimensionMismatch {
            what: "window dimension",
            expected: prev.dim(),
            got: next.dim(),
        });
    }
    let identical = prev.dv == next.dv && prev.df == next.df;
    let appended = next.fill() == prev.fill() + 1
        && prev.dv.iter().eq(next.dv.iter().take(prev.fill()))
        && prev.df.iter().eq(next.df.iter().take(prev.fill()));
    if !(identical || appended) {
        return Err(Error::Precondition(
            "rank-one check needs consecutive windows with unbounded memory".into(),
        ));
    }
    if identical {
        return Ok(true);
    }
    let n = prev.dim();
    for kind in [AndersonKind::Type2, AndersonKind::Type1] {
        let before = if prev.fill() == 0 {
            DMatrix::identity(n, n)
        } else {
            anderson_update_matrices(&prev.dv(), &prev.df(), kind)?
        };
        let after = anderson_update_matrices(&next.dv(), &next.df(), kind)?;
        let sv = (after - before).singular_values();
        let mut s: Vec<f64> = sv.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        let (s1, s2) = (s[0], s.get(1).copied().unwrap_or(0.0));
        if !(s1 == 0.0 || s2 <= 1e-8 * s1) {
            return Ok(false);
        }
    }
    Ok(true)
}
