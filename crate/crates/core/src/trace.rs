//! Solver configuration and per-iteration traces.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bregman divergence used by mirror-descent value iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DivergenceKind {
    SquaredEuclidean,
    #[default]
    KullbackLeibler,
}

/// Knobs shared by the iterative solvers. Unset step sizes fall back to
/// each algorithm's tuned defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub beta_momentum: Option<f64>,
    pub divergence_cap: f64,
    pub eta_mirror: f64,
    pub divergence_kind: DivergenceKind,
    /// Use the regularized value update in mirror-descent VI.
    pub mirror_variant: bool,
    pub store_iterates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            alpha: None,
            gamma: None,
            beta_momentum: None,
            divergence_cap: 1e12,
            eta_mirror: 1.0,
            divergence_kind: DivergenceKind::default(),
            mirror_variant: false,
            store_iterates: false,
        }
    }
}

impl SolverConfig {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn storing_iterates(mut self) -> Self {
        self.store_iterates = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if !(self.divergence_cap > self.tol) {
            return Err(Error::Config(format!(
                "divergence_cap ({}) must exceed tol ({})",
                self.divergence_cap, self.tol
            )));
        }
        if !(self.eta_mirror > 0.0) {
            return Err(Error::Config(format!(
                "eta_mirror must be positive, got {}",
                self.eta_mirror
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIter,
    Diverged,
}

/// Bookkeeping specific to Anderson iterations, one entry per recorded
/// iterate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AndersonStats {
    pub window_fill: Vec<usize>,
    pub restarts_so_far: Vec<usize>,
    pub safeguard_fired: Vec<bool>,
    /// Relative multi-secant residual of the unregularized window matrix
    /// used at each step (NaN when the window was empty).
    pub secant_residual: Vec<f64>,
}

/// Residual history of one solve.
///
/// `residuals[t]` is the sup-norm residual of the iterate `v_t`, starting at
/// `t = 0`, so `residuals.len() == iterations + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub residuals: Vec<f64>,
    pub wall_time_ns: Vec<u64>,
    pub iterates: Option<Vec<Vec<f64>>>,
    pub iterations: usize,
    pub termination: Termination,
    pub anderson: Option<AndersonStats>,
}

impl SolverTrace {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(f64::NAN)
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    /// Writes the trace as CSV. Anderson traces carry three extra columns.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iter", "residual_inf", "wall_time_ns"];
        if self.anderson.is_some() {
            header.extend(["window_fill", "restarts_so_far", "safeguard_fired"]);
        }
        w.write_record(&header)?;
        for (t, r) in self.residuals.iter().enumerate() {
            let mut rec = vec![
                t.to_string(),
                format!("{r:e}"),
                self.wall_time_ns.get(t).copied().unwrap_or(0).to_string(),
            ];
            if let Some(a) = &self.anderson {
                rec.push(a.window_fill[t].to_string());
                rec.push(a.restarts_so_far[t].to_string());
                rec.push(u8::from(a.safeguard_fired[t]).to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a trace written by [`SolverTrace::write_csv`]. The termination
    /// status is not part of the file and is reported as `MaxIter`.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let iter_col = col("iter").ok_or_else(|| Error::Parse("missing column iter".into()))?;
        let res_col =
            col("residual_inf").ok_or_else(|| Error::Parse("missing column residual_inf".into()))?;
        let time_col = col("wall_time_ns");
        let fill_col = col("window_fill");
        let restart_col = col("restarts_so_far");
        let fired_col = col("safeguard_fired");
        let has_anderson = fill_col.is_some() && restart_col.is_some() && fired_col.is_some();

        fn parse(rec: &csv::StringRecord, i: usize) -> Result<&str> {
            rec.get(i)
                .ok_or_else(|| Error::Parse(format!("short record at line {:?}", rec.position())))
        }
        let mut residuals = Vec::new();
        let mut wall = Vec::new();
        let mut stats = AndersonStats::default();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let t: usize = parse(&rec, iter_col)?
                .parse()
                .map_err(|e| Error::Parse(format!("iter: {e}")))?;
            if t != row {
                return Err(Error::Parse(format!("expected iter {row}, found {t}")));
            }
            residuals.push(
                parse(&rec, res_col)?
                    .parse()
                    .map_err(|e| Error::Parse(format!("residual_inf: {e}")))?,
            );
            wall.push(match time_col {
                Some(c) => parse(&rec, c)?
                    .parse()
                    .map_err(|e| Error::Parse(format!("wall_time_ns: {e}")))?,
                None => 0,
            });
            if has_anderson {
                let num = |c: Option<usize>| -> Result<usize> {
                    parse(&rec, c.unwrap())?
                        .parse()
                        .map_err(|e| Error::Parse(format!("anderson column: {e}")))
                };
                stats.window_fill.push(num(fill_col)?);
                stats.restarts_so_far.push(num(restart_col)?);
                stats.safeguard_fired.push(num(fired_col)? != 0);
                stats.secant_residual.push(f64::NAN);
            }
        }
        if residuals.is_empty() {
            return Err(Error::Parse("trace has no rows".into()));
        }
        Ok(Self {
            iterations: residuals.len() - 1,
            residuals,
            wall_time_ns: wall,
            iterates: None,
            termination: Termination::MaxIter,
            anderson: has_anderson.then_some(stats),
        })
    }
}

/// Accumulates a trace while a solver runs and decides termination.
pub(crate) struct TraceRecorder {
    residuals: Vec<f64>,
    wall: Vec<u64>,
    iterates: Option<Vec<Vec<f64>>>,
    clock: crate::clock::Stopwatch,
    tol: f64,
    cap: f64,
    max_iter: usize,
}

impl TraceRecorder {
    pub fn new(cfg: &SolverConfig) -> Self {
        Self {
            residuals: Vec::new(),
            wall: Vec::new(),
            iterates: cfg.store_iterates.then(Vec::new),
            clock: crate::clock::Stopwatch::start(),
            tol: cfg.tol,
            cap: cfg.divergence_cap,
            max_iter: cfg.max_iter,
        }
    }

    /// Records the residual of the next iterate; returns a termination status
    /// when the loop should stop.
    pub fn record(&mut self, residual: f64, v: &[f64]) -> Option<Termination> {
        self.residuals.push(residual);
        self.wall.push(self.clock.lap_ns());
        if let Some(it) = &mut self.iterates {
            it.push(v.to_vec());
        }
        if residual <= self.tol {
            Some(Termination::Converged)
        } else if !residual.is_finite() || residual > self.cap {
            Some(Termination::Diverged)
        } else if self.residuals.len() > self.max_iter {
            Some(Termination::MaxIter)
        } else {
            None
        }
    }

    pub fn finish(self, termination: Termination) -> SolverTrace {
        SolverTrace {
            iterations: self.residuals.len().saturating_sub(1),
            residuals: self.residuals,
            wall_time_ns: self.wall,
            iterates: self.iterates,
            termination,
            anderson: None,
        }
    }
}
