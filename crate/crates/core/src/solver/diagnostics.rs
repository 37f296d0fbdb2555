//! Runtime checks of the convergence inequalities.
//!
//! For a proximal step with step `η` on an `L`-smooth loss:
//!
//! * `F(X_{t+1}) ≤ F(X_t)` (monotone descent),
//! * `F(X_t) − F(X_{t+1}) ≥ (1/η − L)/2 · ‖X_{t+1} − X_t‖²` (sufficient decrease),
//! * `‖G_{t+1}‖ ≤ (L + 1/η) ‖X_{t+1} − X_t‖` for the subgradient witness
//!   `G_{t+1} = (X_t − X_{t+1})/η + ∇f(X_{t+1}) − ∇f(X_t)`; the reweighted
//!   variant adds `(1 − p) p k / ε^{2−p}` to the constant.
//!
//! Summing sufficient decrease over a run gives the checkable rate statement
//! `min_t ‖ΔX_t‖² ≤ 2 (F(X_0) − F(X_T)) / (ρ T)`, see [`rate_check`].
//!
//! Objective comparisons carry a rounding allowance proportional to `|F|` on
//! top of the absolute slacks, since `F` itself is only known to a few ulps.

use crate::error::{Error, Result};
use crate::loss::LIPSCHITZ;

use super::IterateTrace;

pub const MONOTONE_SLACK: f64 = 1e-10;
pub const DECREASE_SLACK: f64 = 1e-8;
pub const SUBGRADIENT_SLACK: f64 = 1e-8;
pub const RATE_SLACK: f64 = 1e-12;
/// The reweighted subgradient bound is only asserted for `ε` at least this large.
pub const REWEIGHTED_BOUND_MIN_EPS: f64 = 1e-3;

const ROUNDING_ULPS: f64 = 64.0;

/// Floating-point uncertainty of an objective value of magnitude `f`.
pub fn rounding_allowance(f: f64) -> f64 {
    ROUNDING_ULPS * f64::EPSILON * f.abs()
}

/// `1/η − L`.
pub fn descent_constant(step: f64) -> f64 {
    1.0 / step - LIPSCHITZ
}

/// `L + 1/η`.
pub fn subgradient_constant(step: f64) -> f64 {
    LIPSCHITZ + 1.0 / step
}

/// `L + 1/η + (1 − p) p k / ε^{2−p}` for the reweighted penalty over `k` singular values.
pub fn reweighted_subgradient_constant(step: f64, p: f64, eps: f64, k: usize) -> f64 {
    subgradient_constant(step) + (1.0 - p) * p * k as f64 / eps.powf(2.0 - p)
}

pub fn check_monotone(iteration: usize, before: f64, after: f64) -> Result<()> {
    let rhs = before + MONOTONE_SLACK + rounding_allowance(before);
    if after > rhs {
        return Err(Error::InequalityViolated {
            check: "monotone descent",
            iteration,
            lhs: after,
            rhs,
        });
    }
    Ok(())
}

pub fn check_sufficient_decrease(iteration: usize, before: f64, after: f64, rho: f64, gap: f64) -> Result<()> {
    let lhs = 0.5 * rho * gap * gap;
    let rhs = before - after + DECREASE_SLACK + rounding_allowance(before);
    if lhs > rhs {
        return Err(Error::InequalityViolated {
            check: "sufficient decrease",
            iteration,
            lhs,
            rhs,
        });
    }
    Ok(())
}

pub fn check_subgradient_bound(iteration: usize, residual: f64, constant: f64, gap: f64) -> Result<()> {
    let rhs = constant * gap + SUBGRADIENT_SLACK;
    if residual > rhs {
        return Err(Error::InequalityViolated {
            check: "subgradient bound",
            iteration,
            lhs: residual,
            rhs,
        });
    }
    Ok(())
}

/// Both sides of the summed sufficient-decrease bound over the iterations run
/// with an unmodified threshold (`τ = 1`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateCheck {
    pub iterations: usize,
    pub rho: f64,
    pub min_gap_squared: f64,
    pub bound: f64,
}

impl RateCheck {
    pub fn holds(&self) -> bool {
        self.min_gap_squared <= self.bound + RATE_SLACK
    }
}

/// `None` when the trace has no `τ = 1` iterations.
pub fn rate_check(trace: &IterateTrace) -> Option<RateCheck> {
    let records = &trace.records;
    let start = records.iter().skip(1).position(|r| r.tau == 1.0)? + 1;
    let tail = &records[start..];
    let rho = tail.iter().map(|r| r.rho).fold(f64::INFINITY, f64::min);
    let min_gap_squared = tail.iter().map(|r| r.step_gap * r.step_gap).fold(f64::INFINITY, f64::min);
    let before = records[start - 1].objective;
    let after = records.last()?.objective;
    let decrease = before - after + rounding_allowance(before);
    Some(RateCheck {
        iterations: tail.len(),
        rho,
        min_gap_squared,
        bound: 2.0 * decrease / (rho * tail.len() as f64),
    })
}

pub(crate) fn enforce_rate(trace: &IterateTrace) -> Result<()> {
    match rate_check(trace) {
        Some(rc) if !rc.holds() => Err(Error::InequalityViolated {
            check: "summed sufficient decrease",
            iteration: trace.iterations(),
            lhs: rc.min_gap_squared,
            rhs: rc.bound,
        }),
        _ => Ok(()),
    }
}
