//! Iterative shrinkage-thresholding solvers.
//!
//! * [`ista_solve`]: proximal gradient with fixed non-descending weights.
//! * [`istra_solve`]: the same step with weights recomputed from the current
//!   singular values, minimizing `f + Σ (σ_i + ε)^p`.
//! * [`alter_ista_solve`] / [`alter_istra_solve`]: Gauss–Seidel sweeps over
//!   the shared block and the per-domain blocks of a [`MultiDomainProblem`].
//!
//! Every iteration is recorded in an [`IterateTrace`]. With
//! [`SolverConfig::diagnostics`] enabled, the runs check monotone descent,
//! sufficient decrease and the subgradient bound as they go and fail with
//! [`Error::InequalityViolated`] if any of them breaks.
//!
//! [`MultiDomainProblem`]: crate::loss::MultiDomainProblem
//! [`Error::InequalityViolated`]: crate::error::Error::InequalityViolated

mod alternating;
pub mod diagnostics;
mod single;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LIPSCHITZ;
use crate::matrix::DenseMatrix;

pub use alternating::{alter_ista_solve, alter_istra_solve, MultiSolution, MultiStart, SchattenParams};
pub use single::{backtrack_step, ista_solve, istra_solve, subgradient_residual, BacktrackStep, IstraStart};

/// Steps that fall below this fraction of `1/L` during a line search are
/// replaced by it and accepted unconditionally.
pub const SAFE_STEP_FRACTION: f64 = 0.9;

/// Consecutive iterations with negligible objective decrease before a run is declared stalled.
pub const STALL_WINDOW: usize = 50;
pub const STALL_DECREASE: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Backtracking {
    /// Factor applied to the step after a rejected trial.
    pub shrink: f64,
    /// Required decrease `F(X⁺) ≤ F(X) − c‖X⁺ − X‖²`.
    pub sufficient_decrease: f64,
    /// First trial step, before any iteration has accepted one.
    pub initial_step: f64,
}

impl Default for Backtracking {
    fn default() -> Self {
        Backtracking {
            shrink: 0.5,
            sufficient_decrease: 0.1,
            initial_step: 10.0 / LIPSCHITZ,
        }
    }
}

/// Finite non-increasing multipliers on the prox threshold, ending at 1.
/// Iteration `t` (zero-based) uses entry `t`; later iterations use 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TauSchedule(pub Vec<f64>);

impl Default for TauSchedule {
    fn default() -> Self {
        TauSchedule(vec![8.0, 4.0, 2.0, 1.0])
    }
}

impl TauSchedule {
    pub fn at(&self, iteration: usize) -> f64 {
        self.0.get(iteration).copied().unwrap_or(1.0)
    }

    fn validate(&self) -> Result<()> {
        if self.0.last() != Some(&1.0) {
            return Err(Error::InvalidConfig("tau schedule must end with 1".into()));
        }
        if self.0.iter().any(|t| !t.is_finite() || *t < 1.0) {
            return Err(Error::InvalidConfig("tau values must be finite and >= 1".into()));
        }
        if self.0.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig("tau schedule must be non-increasing".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Fixed step `μ`; must stay below `1/L` unless backtracking is enabled.
    pub step: f64,
    pub max_iters: usize,
    /// Stop once `‖X_{t+1} − X_t‖_F / ‖Y‖_Ω` falls to this value.
    pub rel_tol: f64,
    pub backtracking: Option<Backtracking>,
    pub tau_schedule: Option<TauSchedule>,
    pub diagnostics: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            step: 0.9 / LIPSCHITZ,
            max_iters: 2000,
            rel_tol: 1e-4,
            backtracking: None,
            tau_schedule: None,
            diagnostics: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol.is_finite() && self.rel_tol > 0.0) {
            return Err(Error::InvalidConfig(format!("rel_tol must be > 0, found {}", self.rel_tol)));
        }
        match &self.backtracking {
            None => {
                if !(self.step > 0.0 && self.step < 1.0 / LIPSCHITZ) {
                    return Err(Error::InvalidConfig(format!(
                        "step {} must lie in (0, 1/L) without backtracking",
                        self.step
                    )));
                }
            }
            Some(b) => {
                if !(b.shrink > 0.0 && b.shrink < 1.0) {
                    return Err(Error::InvalidConfig(format!("backtracking shrink {} not in (0, 1)", b.shrink)));
                }
                if !(b.sufficient_decrease > 0.0 && b.sufficient_decrease < 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "sufficient decrease {} not in (0, 1)",
                        b.sufficient_decrease
                    )));
                }
                if !(b.initial_step.is_finite() && b.initial_step > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "initial step {} must be > 0",
                        b.initial_step
                    )));
                }
            }
        }
        if let Some(tau) = &self.tau_schedule {
            tau.validate()?;
        }
        Ok(())
    }

    pub(crate) fn tau(&self, iteration: usize) -> f64 {
        self.tau_schedule.as_ref().map_or(1.0, |s| s.at(iteration))
    }
}

/// One row of the trace. Row 0 describes the starting point.
#[derive(Clone, Debug, PartialEq)]
pub struct IterateRecord {
    pub iter: usize,
    pub objective: f64,
    pub loss: f64,
    pub penalty: f64,
    /// `‖X_t − X_{t−1}‖_F` (over all blocks for the alternating solvers).
    pub step_gap: f64,
    pub rank: usize,
    pub subgrad_residual: f64,
    pub step: f64,
    /// Threshold multiplier applied this iteration.
    pub tau: f64,
    /// Decrease constant certified for this iteration: `F_{t−1} − F_t ≥ rho/2 · gap²`.
    pub rho: f64,
    /// Cumulative SVD count, including setup and any warm start.
    pub svd_count: usize,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterateTrace {
    pub records: Vec<IterateRecord>,
}

pub const TRACE_CSV_HEADER: &str =
    "iter,objective,loss,penalty,step_gap,rank,subgrad_residual,step,svd_count,elapsed_ms";

impl IterateTrace {
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn last(&self) -> &IterateRecord {
        self.records.last().expect("trace always holds the starting point")
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    /// CSV export. Wall-clock times vary between runs, so they are written as
    /// zero unless `with_timing` is set.
    pub fn to_csv(&self, with_timing: bool) -> String {
        let mut out = String::from(TRACE_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let ms = if with_timing { r.elapsed_ms } else { 0.0 };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.iter,
                r.objective,
                r.loss,
                r.penalty,
                r.step_gap,
                r.rank,
                r.subgrad_residual,
                r.step,
                r.svd_count,
                ms
            ));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    TolReached,
    MaxIters,
    Stalled,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::TolReached => "tol_reached",
            Termination::MaxIters => "max_iters",
            Termination::Stalled => "stalled",
        })
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub x: DenseMatrix,
    /// Singular values of `x`, non-increasing.
    pub singular_values: Vec<f64>,
    pub trace: IterateTrace,
    pub termination: Termination,
    /// SVDs spent before the first iteration of this run (not counting a warm start).
    pub setup_svds: usize,
    pub warm_start: Option<Box<Solution>>,
}

impl Solution {
    pub fn iterations(&self) -> usize {
        self.trace.iterations()
    }

    pub fn svd_count(&self) -> usize {
        self.trace.last().svd_count
    }

    pub fn objective(&self) -> f64 {
        self.trace.last().objective
    }
}
