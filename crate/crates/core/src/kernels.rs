//! Convex-optimization counterparts of the MDP solvers: gradient descent and
//! its accelerated and momentum forms on smooth strongly convex problems,
//! Newton-Raphson and quasi-Newton root finding, and the secant updates
//! shared with Anderson mixing.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::anderson::AndersonKind;
use crate::error::{Error, Result};
use crate::trace::{SolverConfig, SolverTrace, TraceRecorder};

pub type VectorMap = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixMap = Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type ScalarMap = Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

/// A `μ`-strongly convex function with `L`-Lipschitz gradient.
pub struct SmoothProblem {
    pub dim: usize,
    pub gradient: VectorMap,
    pub hessian: Option<MatrixMap>,
    pub value: Option<ScalarMap>,
    pub mu: f64,
    pub ell: f64,
}

impl SmoothProblem {
    pub fn new(dim: usize, mu: f64, ell: f64, gradient: VectorMap) -> Result<Self> {
        if !(mu > 0.0 && mu <= ell && ell.is_finite()) {
            return Err(Error::Config(format!("need 0 < mu <= ell, got mu={mu}, ell={ell}")));
        }
        Ok(Self {
            dim,
            gradient,
            hessian: None,
            value: None,
            mu,
            ell,
        })
    }

    pub fn with_hessian(mut self, h: MatrixMap) -> Self {
        self.hessian = Some(h);
        self
    }

    pub fn with_value(mut self, f: ScalarMap) -> Self {
        self.value = Some(f);
        self
    }

    pub fn kappa(&self) -> f64 {
        self.mu / self.ell
    }
}

/// A square system `F(x) = 0`.
pub struct RootProblem {
    pub dim: usize,
    pub f_map: VectorMap,
    pub jacobian: Option<MatrixMap>,
}

impl RootProblem {
    pub fn new(dim: usize, f_map: VectorMap) -> Self {
        Self {
            dim,
            f_map,
            jacobian: None,
        }
    }

    pub fn with_jacobian(mut self, j: MatrixMap) -> Self {
        self.jacobian = Some(j);
        self
    }

    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let f = (self.f_map)(x);
        if f.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "F(x)",
                expected: self.dim,
                got: f.len(),
            });
        }
        Ok(f)
    }
}

/// `f(x) = ½ xᵀQx − bᵀx` with symmetric positive definite `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSpec {
    pub q: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl QuadraticSpec {
    pub fn new(q: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = q.nrows();
        if q.ncols() != n || b.len() != n || n == 0 {
            return Err(Error::InvalidSize(format!(
                "Q is {}x{}, b has length {}",
                q.nrows(),
                q.ncols(),
                b.len()
            )));
        }
        if (&q - q.transpose()).amax() > 1e-12 {
            return Err(Error::Config("Q is not symmetric".into()));
        }
        if q.clone().cholesky().is_none() {
            return Err(Error::Config("Q is not positive definite".into()));
        }
        Ok(Self { q, b })
    }

    /// `Q = U diag(λ) Uᵀ` with a random orthogonal `U` and eigenvalues evenly
    /// spaced over `[mu, ell]`, endpoints included.
    pub fn with_spectrum(dim: usize, mu: f64, ell: f64, seed: u64) -> Result<Self> {
        if dim == 0 || !(mu > 0.0 && mu <= ell) || (dim == 1 && mu != ell) {
            return Err(Error::Config(format!(
                "cannot place spectrum [{mu}, {ell}] in dimension {dim}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
        let u = g.qr().q();
        let eig = DVector::from_fn(dim, |i, _| {
            if dim == 1 {
                mu
            } else {
                mu + (ell - mu) * i as f64 / (dim - 1) as f64
            }
        });
        let q = &u * DMatrix::from_diagonal(&eig) * u.transpose();
        let q = (&q + q.transpose()) * 0.5;
        let b = DVector::<f64>::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
        Self::new(q, b)
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn minimizer(&self) -> DVector<f64> {
        self.q
            .clone()
            .cholesky()
            .map(|c| c.solve(&self.b))
            .unwrap_or_else(|| DVector::zeros(self.dim()))
    }

    /// Extreme eigenvalues `(μ, L)`.
    pub fn spectrum_bounds(&self) -> (f64, f64) {
        let e = self.q.clone().symmetric_eigenvalues();
        (e.min(), e.max())
    }

    pub fn smooth_problem(&self) -> SmoothProblem {
        let (mu, ell) = self.spectrum_bounds();
        let (q1, b1) = (self.q.clone(), self.b.clone());
        let (q2, b2) = (self.q.clone(), self.b.clone());
        let q3 = self.q.clone();
        SmoothProblem {
            dim: self.dim(),
            gradient: Box::new(move |x| &q1 * x - &b1),
            hessian: Some(Box::new(move |_| q3.clone())),
            value: Some(Box::new(move |x| 0.5 * x.dot(&(&q2 * x)) - b2.dot(x))),
            mu,
            ell,
        }
    }

    /// The gradient system `Qx − b = 0` with Jacobian `Q`.
    pub fn root_problem(&self) -> RootProblem {
        let (q1, b1) = (self.q.clone(), self.b.clone());
        let q2 = self.q.clone();
        RootProblem::new(self.dim(), Box::new(move |x| &q1 * x - &b1))
            .with_jacobian(Box::new(move |_| q2.clone()))
    }
}

#[derive(Debug, Clone)]
pub struct KernelRun {
    pub x: DVector<f64>,
    pub trace: SolverTrace,
}

fn check_start(dim: usize, x: &DVector<f64>, what: &'static str) -> Result<()> {
    if x.len() != dim {
        return Err(Error::DimensionMismatch {
            what,
            expected: dim,
            got: x.len(),
        });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

/// Runs `x_{t+1} = step(x_{t−1}, x_t, ∇f(x_t))` recording `‖∇f(x_t)‖₂`.
fn gradient_loop(
    p: &SmoothProblem,
    x0: &DVector<f64>,
    x1: Option<DVector<f64>>,
    cfg: &SolverConfig,
    mut step: impl FnMut(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64>,
) -> KernelRun {
    let mut rec = TraceRecorder::new(cfg);
    let mut prev = x0.clone();
    let mut x = x0.clone();
    let mut g = (p.gradient)(&x);
    if let Some(term) = rec.record(g.norm(), x.as_slice()) {
        return KernelRun {
            x,
            trace: rec.finish(term),
        };
    }
    if let Some(x1) = x1 {
        x = x1;
        g = (p.gradient)(&x);
        if let Some(term) = rec.record(g.norm(), x.as_slice()) {
            return KernelRun {
                x,
                trace: rec.finish(term),
            };
        }
    }
    loop {
        let next = step(&prev, &x, &g);
        prev = std::mem::replace(&mut x, next);
        g = (p.gradient)(&x);
        if let Some(term) = rec.record(g.norm(), x.as_slice()) {
            let x = if x.iter().all(|v| v.is_finite()) { x } else { prev };
            return KernelRun {
                x,
                trace: rec.finish(term),
            };
        }
    }
}

/// Gradient descent with fixed step `α ∈ (0, 2/L)`.
pub fn gd_solve(
    p: &SmoothProblem,
    x0: &DVector<f64>,
    alpha: f64,
    cfg: &SolverConfig,
) -> Result<KernelRun> {
    cfg.validate()?;
    check_start(p.dim, x0, "x0")?;
    let upper = 2.0 / p.ell;
    if !(alpha > 0.0 && alpha < upper) {
        return Err(Error::StepSize {
            name: "alpha",
            value: alpha,
            range: format!("(0, {upper})"),
        });
    }
    Ok(gradient_loop(p, x0, None, cfg, |_, x, g| x - g * alpha))
}

/// `(α, γ) = (1/L, (√L − √μ)/(√L + √μ))`.
pub fn agd_parameters(mu: f64, ell: f64) -> (f64, f64) {
    let (sl, sm) = (ell.sqrt(), mu.sqrt());
    (1.0 / ell, (sl - sm) / (sl + sm))
}

/// `(α, β) = (4/(√L + √μ)², ((√L − √μ)/(√L + √μ))²)`.
pub fn mgd_parameters(mu: f64, ell: f64) -> (f64, f64) {
    let (sl, sm) = (ell.sqrt(), mu.sqrt());
    let r = (sl - sm) / (sl + sm);
    (4.0 / ((sl + sm) * (sl + sm)), r * r)
}

/// Accelerated gradient descent:
/// `h_t = x_t + γ(x_t − x_{t−1})`, `x_{t+1} = h_t − α∇f(h_t)`.
/// `cfg.alpha` and `cfg.gamma` override the tuned values; `x1` defaults to a
/// gradient step from `x0`.
pub fn agd_solve(
    p: &SmoothProblem,
    x0: &DVector<f64>,
    x1: Option<&DVector<f64>>,
    cfg: &SolverConfig,
) -> Result<KernelRun> {
    cfg.validate()?;
    check_start(p.dim, x0, "x0")?;
    let (a_def, g_def) = agd_parameters(p.mu, p.ell);
    let alpha = cfg.alpha.unwrap_or(a_def);
    let gamma = cfg.gamma.unwrap_or(g_def);
    let x1 = match x1 {
        Some(x1) => {
            check_start(p.dim, x1, "x1")?;
            x1.clone()
        }
        None => x0 - (p.gradient)(x0) * alpha,
    };
    Ok(gradient_loop(p, x0, Some(x1), cfg, |prev, x, _| {
        let h = if gamma == 0.0 {
            x.clone()
        } else {
            x + (x - prev) * gamma
        };
        let gh = (p.gradient)(&h);
        &h - gh * alpha
    }))
}

/// Momentum gradient descent:
/// `x_{t+1} = x_t − α∇f(x_t) + β(x_t − x_{t−1})`.
/// `cfg.alpha` and `cfg.beta_momentum` override the tuned values.
pub fn mgd_solve(
    p: &SmoothProblem,
    x0: &DVector<f64>,
    x1: Option<&DVector<f64>>,
    cfg: &SolverConfig,
) -> Result<KernelRun> {
    cfg.validate()?;
    check_start(p.dim, x0, "x0")?;
    let (a_def, b_def) = mgd_parameters(p.mu, p.ell);
    let alpha = cfg.alpha.unwrap_or(a_def);
    let beta = cfg.beta_momentum.unwrap_or(b_def);
    let x1 = match x1 {
        Some(x1) => {
            check_start(p.dim, x1, "x1")?;
            x1.clone()
        }
        None => x0 - (p.gradient)(x0) * alpha,
    };
    Ok(gradient_loop(p, x0, Some(x1), cfg, |prev, x, g| {
        if beta == 0.0 {
            x - g * alpha
        } else {
            x - g * alpha + (x - prev) * beta
        }
    }))
}

fn root_loop(
    rp: &RootProblem,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
    mut step: impl FnMut(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>>,
    mut observe: impl FnMut(&DVector<f64>, &DVector<f64>, &DVector<f64>, &DVector<f64>),
) -> Result<KernelRun> {
    cfg.validate()?;
    check_start(rp.dim, x0, "x0")?;
    let mut rec = TraceRecorder::new(cfg);
    let mut x = x0.clone();
    let mut f = rp.eval(&x)?;
    loop {
        if let Some(term) = rec.record(f.norm(), x.as_slice()) {
            return Ok(KernelRun {
                x,
                trace: rec.finish(term),
            });
        }
        let d = step(&x, &f)?;
        let next = &x - &d;
        let f_next = rp.eval(&next)?;
        observe(&x, &f, &next, &f_next);
        x = next;
        f = f_next;
    }
}

/// Newton-Raphson `x_{t+1} = x_t − α J(x_t)⁻¹ F(x_t)` with `α = 1` unless
/// `damping` is given.
pub fn newton_raphson_solve(
    rp: &RootProblem,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
    damping: Option<f64>,
) -> Result<KernelRun> {
    let jac = rp
        .jacobian
        .as_ref()
        .ok_or_else(|| Error::Config("Newton-Raphson needs a Jacobian".into()))?;
    let alpha = damping.unwrap_or(1.0);
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::StepSize {
            name: "damping",
            value: alpha,
            range: "(0, 1]".into(),
        });
    }
    root_loop(
        rp,
        x0,
        cfg,
        |x, f| {
            let d = jac(x)
                .lu()
                .solve(f)
                .ok_or(Error::Singular("Newton-Raphson Jacobian"))?;
            Ok(d * alpha)
        },
        |_, _, _, _| {},
    )
}

fn outer_ratio(num: &DVector<f64>, row: &DVector<f64>, den: f64) -> DMatrix<f64> {
    num * row.transpose() / den
}

/// Good Broyden: `J = J_prev + (df − J_prev dx) dxᵀ / (dxᵀdx)`.
pub fn broyden_update_type1(
    j_prev: &DMatrix<f64>,
    dx: &DVector<f64>,
    df: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let den = dx.dot(dx);
    if !(den > 0.0 && den.is_finite()) {
        return Err(Error::DegenerateUpdate("dx is zero"));
    }
    Ok(j_prev + outer_ratio(&(df - j_prev * dx), dx, den))
}

/// Bad Broyden on the inverse: `G = G_prev + (dx − G_prev df) dfᵀ / (dfᵀdf)`,
/// so that `G df = dx`.
pub fn broyden_update_type2(
    g_prev: &DMatrix<f64>,
    dx: &DVector<f64>,
    df: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let den = df.dot(df);
    if !(den > 0.0 && den.is_finite()) {
        return Err(Error::DegenerateUpdate("df is zero"));
    }
    Ok(g_prev + outer_ratio(&(dx - g_prev * df), df, den))
}

/// `J = J_prev + df dfᵀ/(dfᵀdx) − J_prev dx dxᵀ J_prev/(dxᵀ J_prev dx)`.
pub fn bfgs_update(
    j_prev: &DMatrix<f64>,
    dx: &DVector<f64>,
    df: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let curv = df.dot(dx);
    if !(curv > 0.0 && curv.is_finite()) {
        return Err(Error::DegenerateUpdate("nonpositive curvature dfᵀdx"));
    }
    let jdx = j_prev * dx;
    let quad = dx.dot(&jdx);
    if !(quad > 0.0 && quad.is_finite()) {
        return Err(Error::DegenerateUpdate("nonpositive dxᵀ J dx"));
    }
    let j = j_prev + outer_ratio(df, df, curv) - outer_ratio(&jdx, &jdx, quad);
    Ok((&j + j.transpose()) * 0.5)
}

/// Closed-form multi-secant matrices nearest to the identity in Frobenius
/// norm: type I returns `I + (dF − dX)(dXᵀdX)⁻¹dXᵀ` (so `J dX = dF`), type II
/// returns `I + (dX − dF)(dFᵀdF)⁻¹dFᵀ` (so `G dF = dX`).
pub fn anderson_update_matrices(
    dx: &DMatrix<f64>,
    df: &DMatrix<f64>,
    kind: AndersonKind,
) -> Result<DMatrix<f64>> {
    if dx.shape() != df.shape() {
        return Err(Error::DimensionMismatch {
            what: "secant columns",
            expected: dx.ncols(),
            got: df.ncols(),
        });
    }
    let (basis, target) = match kind {
        AndersonKind::Type1 => (dx, df),
        AndersonKind::Type2 => (df, dx),
    };
    let n = dx.nrows();
    // basis⁺ = R⁻¹Qᵀ from a thin QR, avoiding the squared conditioning of the
    // Gram matrix.
    let qr = basis.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().amax();
    if !(scale > 0.0) || r.diagonal().iter().any(|d| d.abs() <= 1e-14 * scale) {
        return Err(Error::Singular("secant Gram matrix"));
    }
    let pinv = r
        .solve_upper_triangular(&qr.q().transpose())
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or(Error::Singular("secant Gram matrix"))?;
    Ok(DMatrix::identity(n, n) + (target - basis) * pinv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuasiNewtonStrategy {
    Broyden1,
    Broyden2,
    Bfgs,
}

impl FromStr for QuasiNewtonStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "broyden1" => Ok(Self::Broyden1),
            "broyden2" => Ok(Self::Broyden2),
            "bfgs" => Ok(Self::Bfgs),
            other => Err(Error::Parse(format!("unknown quasi-Newton strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuasiNewtonRun {
    pub x: DVector<f64>,
    pub trace: SolverTrace,
    /// Updates skipped because their denominators vanished.
    pub skipped_updates: usize,
}

/// `x_{t+1} = x_t − J_t⁻¹ F(x_t)` from `J_0 = I` (or `G_0 = I` for the
/// inverse update).
pub fn quasi_newton_solve(
    rp: &RootProblem,
    x0: &DVector<f64>,
    strategy: QuasiNewtonStrategy,
    cfg: &SolverConfig,
) -> Result<QuasiNewtonRun> {
    let n = rp.dim;
    let approx = std::cell::RefCell::new(DMatrix::<f64>::identity(n, n));
    let mut skipped = 0usize;
    let run = root_loop(
        rp,
        x0,
        cfg,
        |_, f| match strategy {
            QuasiNewtonStrategy::Broyden2 => Ok(&*approx.borrow() * f),
            _ => approx
                .borrow()
                .clone()
                .lu()
                .solve(f)
                .ok_or(Error::Singular("quasi-Newton Jacobian")),
        },
        |x, f, xn, fn_| {
            let dx = xn - x;
            let df = fn_ - f;
            let cur = approx.borrow();
            let upd = match strategy {
                QuasiNewtonStrategy::Broyden1 => broyden_update_type1(&cur, &dx, &df),
                QuasiNewtonStrategy::Broyden2 => broyden_update_type2(&cur, &dx, &df),
                QuasiNewtonStrategy::Bfgs => bfgs_update(&cur, &dx, &df),
            };
            drop(cur);
            match upd {
                Ok(m) if m.iter().all(|v| v.is_finite()) => *approx.borrow_mut() = m,
                _ => skipped += 1,
            }
        },
    )?;
    Ok(QuasiNewtonRun {
        x: run.x,
        trace: run.trace,
        skipped_updates: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(tol: f64) -> SolverConfig {
        SolverConfig::default().with_tol(tol).with_max_iter(10_000)
    }

    fn scalar_half_square() -> SmoothProblem {
        SmoothProblem::new(1, 1.0, 1.0, Box::new(|x| x.clone())).unwrap()
    }

    #[test]
    fn gd_one_step_on_unit_quadratic() {
        let run = gd_solve(&scalar_half_square(), &DVector::from_element(1, 7.0), 1.0, &cfg(1e-12))
            .unwrap();
        assert_eq!(run.trace.iterations, 1);
        assert_eq!(run.x[0], 0.0);
    }

    #[test]
    fn gd_step_range() {
        let p = scalar_half_square();
        let x0 = DVector::from_element(1, 1.0);
        assert!(matches!(gd_solve(&p, &x0, 2.0, &cfg(1e-9)), Err(Error::StepSize { .. })));
        assert!(gd_solve(&p, &x0, 0.0, &cfg(1e-9)).is_err());
    }

    #[test]
    fn gd_is_a_descent_method() {
        let qs = QuadraticSpec::with_spectrum(6, 0.1, 1.9, 4).unwrap();
        let p = qs.smooth_problem();
        let run = gd_solve(&p, &DVector::from_element(6, 3.0), 1.0, &cfg(1e-10).storing_iterates())
            .unwrap();
        let f = p.value.as_ref().unwrap();
        let vals: Vec<f64> = run
            .trace
            .iterates
            .unwrap()
            .iter()
            .map(|x| f(&DVector::from_column_slice(x)))
            .collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn agd_and_mgd_reduce_to_gd() {
        let qs = QuadraticSpec::with_spectrum(5, 0.01, 1.0, 9).unwrap();
        let p = qs.smooth_problem();
        let x0 = DVector::from_element(5, 1.0);
        let mut c = cfg(1e-8).storing_iterates();
        c.gamma = Some(0.0);
        let agd = agd_solve(&p, &x0, None, &c).unwrap();
        let gd = gd_solve(&p, &x0, 1.0 / p.ell, &cfg(1e-8).storing_iterates()).unwrap();
        assert_eq!(agd.trace.residuals, gd.trace.residuals);

        let qs = QuadraticSpec::with_spectrum(5, 0.5, 1.0, 9).unwrap();
        let p = qs.smooth_problem();
        let mut c = cfg(1e-8);
        c.beta_momentum = Some(0.0);
        let mgd = mgd_solve(&p, &x0, None, &c).unwrap();
        let (alpha, _) = mgd_parameters(p.mu, p.ell);
        let gd = gd_solve(&p, &x0, alpha, &cfg(1e-8)).unwrap();
        assert_eq!(mgd.trace.residuals, gd.trace.residuals);
    }

    #[test]
    fn well_conditioned_parameters() {
        for (a, g) in [agd_parameters(2.0, 2.0), mgd_parameters(2.0, 2.0)] {
            assert!((a - 0.5).abs() < 1e-15 && g == 0.0);
        }
        let p = SmoothProblem::new(1, 2.0, 2.0, Box::new(|x| x * 2.0)).unwrap();
        let run = mgd_solve(&p, &DVector::from_element(1, 5.0), None, &cfg(1e-12)).unwrap();
        assert_eq!(run.trace.iterations, 1);
    }

    #[test]
    fn newton_on_cubic() {
        let rp = RootProblem::new(1, Box::new(|x| x.map(|v| v * v * v - 8.0)))
            .with_jacobian(Box::new(|x| DMatrix::from_element(1, 1, 3.0 * x[0] * x[0])));
        let run = newton_raphson_solve(&rp, &DVector::from_element(1, 3.0), &cfg(1e-13).storing_iterates(), None)
            .unwrap();
        let it = run.trace.iterates.unwrap();
        assert!((it[1][0] - (3.0 - 19.0 / 27.0)).abs() < 1e-15);
        assert!((run.x[0] - 2.0).abs() < 1e-13);
    }

    #[test]
    fn newton_affine_one_step() {
        let qs = QuadraticSpec::with_spectrum(4, 0.5, 3.0, 1).unwrap();
        let run = newton_raphson_solve(&qs.root_problem(), &DVector::zeros(4), &cfg(1e-10), None).unwrap();
        assert_eq!(run.trace.iterations, 1);
        assert!((run.x - qs.minimizer()).amax() < 1e-12);
    }

    #[test]
    fn newton_needs_jacobian() {
        let rp = RootProblem::new(1, Box::new(|x| x.clone()));
        assert!(newton_raphson_solve(&rp, &DVector::from_element(1, 1.0), &cfg(1e-9), None).is_err());
    }

    #[test]
    fn scalar_secant_updates() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let dx = DVector::from_element(1, 1.0);
        let df = DVector::from_element(1, 0.1);
        assert!((broyden_update_type1(&one, &dx, &df).unwrap()[(0, 0)] - 0.1).abs() < 1e-15);
        assert!((broyden_update_type2(&one, &dx, &df).unwrap()[(0, 0)] - 10.0).abs() < 1e-13);
        let zero = DVector::zeros(1);
        assert!(matches!(
            broyden_update_type1(&one, &zero, &df),
            Err(Error::DegenerateUpdate(_))
        ));
        assert!(matches!(
            bfgs_update(&one, &dx, &(-df)),
            Err(Error::DegenerateUpdate(_))
        ));
    }

    #[test]
    fn scalar_anderson_matrices() {
        let dx = DMatrix::from_element(1, 1, 1.0);
        let df = DMatrix::from_element(1, 1, 0.1);
        let j = anderson_update_matrices(&dx, &df, AndersonKind::Type1).unwrap();
        let g = anderson_update_matrices(&dx, &df, AndersonKind::Type2).unwrap();
        assert!((j[(0, 0)] - 0.1).abs() < 1e-15);
        assert!((g[(0, 0)] - 10.0).abs() < 1e-13);
        let same = anderson_update_matrices(&dx, &dx, AndersonKind::Type2).unwrap();
        assert_eq!(same, DMatrix::identity(1, 1));
        let z = DMatrix::zeros(2, 1);
        assert!(anderson_update_matrices(&z, &z, AndersonKind::Type1).is_err());
    }

    #[test]
    fn quasi_newton_scalar_affine() {
        let rp = RootProblem::new(1, Box::new(|x| x.map(|v| 0.1 * v - 1.0)));
        let run = quasi_newton_solve(
            &rp,
            &DVector::zeros(1),
            QuasiNewtonStrategy::Broyden1,
            &cfg(1e-12),
        )
        .unwrap();
        assert_eq!(run.trace.iterations, 2);
        assert!((run.x[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn quasi_newton_at_root_takes_no_steps() {
        let qs = QuadraticSpec::with_spectrum(3, 0.5, 1.5, 2).unwrap();
        let run = quasi_newton_solve(
            &qs.root_problem(),
            &qs.minimizer(),
            QuasiNewtonStrategy::Bfgs,
            &cfg(1e-10),
        )
        .unwrap();
        assert_eq!(run.trace.iterations, 0);
    }

    #[test]
    fn quadratic_spec_validation() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(QuadraticSpec::new(q, DVector::zeros(2)).is_err());
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(QuadraticSpec::new(q, DVector::zeros(2)).is_err());
        let qs = QuadraticSpec::with_spectrum(7, 0.01, 1.0, 3).unwrap();
        let (mu, ell) = qs.spectrum_bounds();
        assert!((mu - 0.01).abs() < 1e-12 && (ell - 1.0).abs() < 1e-12);
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("bfgs".parse::<QuasiNewtonStrategy>().unwrap(), QuasiNewtonStrategy::Bfgs);
        assert!("sr1".parse::<QuasiNewtonStrategy>().is_err());
    }
}
