use std::time::Instant;

use crate::error::{Error, Result};
use crate::loss::{loss_grad, loss_value, MaskedQuadraticLoss, LIPSCHITZ};
use crate::matrix::{compose_with, numerical_rank, thin_svd, DenseMatrix, SvdFactors};
use crate::penalty::{reweight, shrink, Exponent, PenaltySpec, Shrinkage, WeightVector};

use super::diagnostics::{self, REWEIGHTED_BOUND_MIN_EPS};
use super::{
    Backtracking, IterateRecord, IterateTrace, Solution, SolverConfig, Termination, SAFE_STEP_FRACTION,
    STALL_DECREASE, STALL_WINDOW,
};

/// Penalty handled by a single-matrix run.
#[derive(Clone, Debug)]
pub(super) enum Regularizer {
    Fixed { weights: WeightVector },
    Reweighted { p: f64, eps: f64 },
}

impl Regularizer {
    pub(super) fn fixed(spec: &PenaltySpec, k: usize) -> Result<Self> {
        spec.validate()?;
        let weights = spec.weights(k)?;
        Ok(Regularizer::Fixed { weights })
    }

    pub(super) fn reweighted(p: Exponent, eps: f64) -> Result<Self> {
        let spec = PenaltySpec::schatten(p, eps);
        spec.validate()?;
        Ok(Regularizer::Reweighted { p: p.value(), eps })
    }

    /// True penalty value at the given singular values.
    pub(super) fn value(&self, sv: &[f64]) -> f64 {
        match self {
            Regularizer::Fixed { weights, .. } => {
                weights.as_slice().iter().zip(sv).map(|(w, s)| w * s).sum()
            }
            Regularizer::Reweighted { p, eps } => sv.iter().map(|s| (s + eps).powf(*p)).sum(),
        }
    }

    pub(super) fn weights_at(&self, sv: &[f64]) -> Result<WeightVector> {
        match self {
            Regularizer::Fixed { weights, .. } => Ok(weights.clone()),
            Regularizer::Reweighted { p, eps } => reweight(sv, *p, *eps),
        }
    }

    pub(super) fn is_reweighted(&self) -> bool {
        matches!(self, Regularizer::Reweighted { .. })
    }

    /// Constant in the subgradient bound, if it is asserted for this penalty.
    pub(super) fn subgradient_constant(&self, step: f64, k: usize) -> Option<f64> {
        match *self {
            Regularizer::Fixed { .. } => Some(diagnostics::subgradient_constant(step)),
            Regularizer::Reweighted { p, eps } if eps >= REWEIGHTED_BOUND_MIN_EPS => {
                Some(diagnostics::reweighted_subgradient_constant(step, p, eps, k))
            }
            Regularizer::Reweighted { .. } => None,
        }
    }
}

/// `U diag(w_new − w_old) Vᵀ`, the weight-drift term of the reweighted subgradient witness.
pub(super) fn weight_drift(factors: &SvdFactors, old: &WeightVector, new: &WeightVector) -> DenseMatrix {
    let diff: Vec<f64> = new
        .as_slice()
        .iter()
        .zip(old.as_slice())
        .map(|(a, b)| a - b)
        .collect();
    compose_with(&factors.u, &diff, &factors.v)
}

fn gradient_step(x: &DenseMatrix, grad: &DenseMatrix, step: f64) -> DenseMatrix {
    x - &grad.scaled(step)
}

/// Norm of `G = (X_prev − X_next)/η + ∇f(X_next) − ∇f(X_prev)`.
pub fn subgradient_residual(
    x_prev: &DenseMatrix,
    x_next: &DenseMatrix,
    loss: &MaskedQuadraticLoss,
    step: f64,
) -> Result<f64> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidArgument(format!("step must be > 0, found {step}")));
    }
    if x_prev.shape() != x_next.shape() {
        return Err(Error::dims(x_prev.shape(), x_next.shape()));
    }
    let g = &(&(x_prev - x_next).scaled(1.0 / step) + &loss_grad(x_next, loss)?) - &loss_grad(x_prev, loss)?;
    Ok(g.frobenius_norm())
}

struct Accepted {
    step: f64,
    shrinkage: Shrinkage,
    objective: f64,
    loss: f64,
    penalty: f64,
    svds: usize,
    shrinks: usize,
    rho: f64,
}

/// Shrinks the step from `start` until `F(X⁺) ≤ F(X) − c‖X⁺ − X‖²`, falling
/// back to the safe step `0.9/L` (accepted unconditionally) when the trial
/// step would drop below it.
#[allow(clippy::too_many_arguments)]
fn line_search(
    x: &DenseMatrix,
    grad: &DenseMatrix,
    weights: &WeightVector,
    tau: f64,
    reg: &Regularizer,
    loss: &MaskedQuadraticLoss,
    current: f64,
    start: f64,
    bt: &Backtracking,
) -> Result<Accepted> {
    let floor = SAFE_STEP_FRACTION / LIPSCHITZ;
    let mut step = start;
    let mut shrinks = 0;
    let mut svds = 0;
    loop {
        let shrinkage = shrink(&gradient_step(x, grad, step), weights, tau * step)?;
        svds += 1;
        let l = loss_value(&shrinkage.x, loss)?;
        let g = reg.value(&shrinkage.factors.singular_values);
        let gap2 = (&shrinkage.x - x).frobenius_norm_squared();
        let slack = diagnostics::rounding_allowance(current.abs().max(x.frobenius_norm_squared()));
        let sufficient = l + g <= current - bt.sufficient_decrease * gap2 + slack;
        let at_floor = step <= floor;
        if sufficient || at_floor {
            let base = diagnostics::descent_constant(step);
            let rho = if sufficient {
                base.max(2.0 * bt.sufficient_decrease)
            } else {
                base
            };
            return Ok(Accepted {
                step,
                shrinkage,
                objective: l + g,
                loss: l,
                penalty: g,
                svds,
                shrinks,
                rho,
            });
        }
        step = (step * bt.shrink).max(floor);
        shrinks += 1;
    }
}

/// Outcome of [`backtrack_step`].
#[derive(Clone, Debug)]
pub struct BacktrackStep {
    pub step: f64,
    pub candidate: DenseMatrix,
    pub shrinks: usize,
}

/// One backtracking prox step from `x` for the full objective `f + g`.
///
/// For the Schatten penalty the prox uses the reweighted majorizer at `x` and
/// the acceptance test uses the true penalty.
pub fn backtrack_step(
    x: &DenseMatrix,
    loss: &MaskedQuadraticLoss,
    spec: &PenaltySpec,
    initial_step: f64,
    shrink_factor: f64,
    sufficient_decrease: f64,
) -> Result<BacktrackStep> {
    let bt = Backtracking {
        shrink: shrink_factor,
        sufficient_decrease,
        initial_step,
    };
    SolverConfig {
        backtracking: Some(bt.clone()),
        ..SolverConfig::default()
    }
    .validate()?;
    let k = x.rows().min(x.cols());
    let reg = if spec.is_reweighted() {
        let (p, eps) = spec.schatten_params()?;
        Regularizer::reweighted(p, eps)?
    } else {
        Regularizer::fixed(spec, k)?
    };
    let sv = thin_svd(x)?.singular_values;
    let weights = reg.weights_at(&sv)?;
    let current = loss_value(x, loss)? + reg.value(&sv);
    let grad = loss_grad(x, loss)?;
    let acc = line_search(x, &grad, &weights, 1.0, &reg, loss, current, initial_step, &bt)?;
    Ok(BacktrackStep {
        step: acc.step,
        candidate: acc.shrinkage.x,
        shrinks: acc.shrinks,
    })
}

fn check_problem(loss: &MaskedQuadraticLoss, x0: &DenseMatrix) -> Result<()> {
    if loss.observations().is_empty() {
        return Err(Error::InvalidArgument("no observed entries".into()));
    }
    loss.observations().check_shape(x0)?;
    x0.ensure_finite()
}

/// Stopping denominator `‖Y‖_Ω`, or 1 when every observed value is zero.
pub(super) fn stopping_scale(norm: f64) -> f64 {
    if norm > 0.0 {
        norm
    } else {
        1.0
    }
}

pub(super) fn run_single(
    loss: &MaskedQuadraticLoss,
    reg: &Regularizer,
    cfg: &SolverConfig,
    x0: DenseMatrix,
    known_sv: Option<Vec<f64>>,
    svd_offset: usize,
) -> Result<Solution> {
    cfg.validate()?;
    check_problem(loss, &x0)?;
    let clock = Instant::now();
    let k = x0.rows().min(x0.cols());
    let scale = stopping_scale(loss.observations().value_norm());

    let mut svd_count = svd_offset;
    let mut setup_svds = 0;
    let mut sv = match known_sv {
        Some(sv) if sv.len() == k => sv,
        _ => {
            svd_count += 1;
            setup_svds = 1;
            thin_svd(&x0)?.singular_values
        }
    };
    let mut x = x0;
    let f = loss_value(&x, loss)?;
    let g = reg.value(&sv);
    let mut objective = f + g;
    if !objective.is_finite() {
        return Err(Error::NonFiniteObjective { iteration: 0 });
    }
    let mut trace = IterateTrace {
        records: vec![IterateRecord {
            iter: 0,
            objective,
            loss: f,
            penalty: g,
            step_gap: 0.0,
            rank: numerical_rank(&sv),
            subgrad_residual: 0.0,
            step: 0.0,
            tau: 1.0,
            rho: 0.0,
            svd_count,
            elapsed_ms: clock.elapsed().as_secs_f64() * 1e3,
        }],
    };

    let mut step = cfg.backtracking.as_ref().map_or(cfg.step, |b| b.initial_step);
    let mut weights = reg.weights_at(&sv)?;
    let mut grad = loss_grad(&x, loss)?;
    let mut termination = Termination::MaxIters;
    let mut flat = 0;

    for t in 1..=cfg.max_iters {
        let tau = cfg.tau(t - 1);
        let acc = match &cfg.backtracking {
            None => {
                let shrinkage = shrink(&gradient_step(&x, &grad, step), &weights, tau * step)?;
                let l = loss_value(&shrinkage.x, loss)?;
                let pen = reg.value(&shrinkage.factors.singular_values);
                Accepted {
                    step,
                    shrinkage,
                    objective: l + pen,
                    loss: l,
                    penalty: pen,
                    svds: 1,
                    shrinks: 0,
                    rho: diagnostics::descent_constant(step),
                }
            }
            Some(bt) => line_search(&x, &grad, &weights, tau, reg, loss, objective, step, bt)?,
        };
        if !acc.objective.is_finite() {
            return Err(Error::NonFiniteObjective { iteration: t });
        }
        step = acc.step;
        svd_count += acc.svds;
        let Shrinkage { x: x_next, factors } = acc.shrinkage;

        let grad_next = loss_grad(&x_next, loss)?;
        let delta = &x - &x_next;
        let gap = delta.frobenius_norm();
        let mut witness = &(&delta.scaled(1.0 / step) + &grad_next) - &grad;
        let next_weights = reg.weights_at(&factors.singular_values)?;
        if reg.is_reweighted() {
            witness = &witness + &weight_drift(&factors, &weights, &next_weights);
        }
        let residual = witness.frobenius_norm();

        if cfg.diagnostics {
            if tau == 1.0 {
                diagnostics::check_monotone(t, objective, acc.objective)?;
                diagnostics::check_sufficient_decrease(t, objective, acc.objective, acc.rho, gap)?;
            }
            if let Some(c) = reg.subgradient_constant(step, k) {
                diagnostics::check_subgradient_bound(t, residual, c, gap)?;
            }
        }

        let decrease = objective - acc.objective;
        trace.records.push(IterateRecord {
            iter: t,
            objective: acc.objective,
            loss: acc.loss,
            penalty: acc.penalty,
            step_gap: gap,
            rank: numerical_rank(&factors.singular_values),
            subgrad_residual: residual,
            step,
            tau,
            rho: acc.rho,
            svd_count,
            elapsed_ms: clock.elapsed().as_secs_f64() * 1e3,
        });

        x = x_next;
        sv = factors.singular_values;
        grad = grad_next;
        weights = next_weights;
        objective = acc.objective;

        if gap / scale <= cfg.rel_tol {
            termination = Termination::TolReached;
            break;
        }
        if decrease < STALL_DECREASE {
            flat += 1;
            if flat >= STALL_WINDOW {
                termination = Termination::Stalled;
                break;
            }
        } else {
            flat = 0;
        }
    }

    if cfg.diagnostics {
        diagnostics::enforce_rate(&trace)?;
    }
    Ok(Solution {
        x,
        singular_values: sv,
        trace,
        termination,
        setup_svds,
        warm_start: None,
    })
}

/// Proximal gradient with a fixed weighted penalty. Starts from `P_Ω(Y)`
/// unless `x_init` is given.
pub fn ista_solve(
    loss: &MaskedQuadraticLoss,
    spec: &PenaltySpec,
    cfg: &SolverConfig,
    x_init: Option<&DenseMatrix>,
) -> Result<Solution> {
    if spec.is_reweighted() {
        return Err(Error::InvalidArgument(
            "ista_solve needs a fixed-weight penalty; use istra_solve for schatten".into(),
        ));
    }
    let (m, n) = loss.shape();
    let reg = Regularizer::fixed(spec, m.min(n))?;
    let x0 = x_init.cloned().unwrap_or_else(|| loss.observations().observed_matrix());
    run_single(loss, &reg, cfg, x0, None, 0)
}

/// Starting point of a reweighted run.
#[derive(Clone, Debug)]
pub enum IstraStart {
    Matrix(DenseMatrix),
    /// Run [`ista_solve`] with this fixed penalty from `P_Ω(Y)` and continue from its solution.
    Warm(PenaltySpec),
}

impl IstraStart {
    /// Warm start with the nuclear norm `λ‖X‖_*`.
    pub fn nuclear(lambda: f64) -> Self {
        IstraStart::Warm(PenaltySpec::Nuclear { lambda })
    }
}

/// Reweighted proximal gradient for `f + Σ (σ_i + ε)^p`.
pub fn istra_solve(
    loss: &MaskedQuadraticLoss,
    p: Exponent,
    eps: f64,
    cfg: &SolverConfig,
    start: IstraStart,
) -> Result<Solution> {
    let reg = Regularizer::reweighted(p, eps)?;
    match start {
        IstraStart::Matrix(x0) => run_single(loss, &reg, cfg, x0, None, 0),
        IstraStart::Warm(spec) => {
            let warm = ista_solve(loss, &spec, cfg, None)?;
            let mut sol = run_single(
                loss,
                &reg,
                cfg,
                warm.x.clone(),
                Some(warm.singular_values.clone()),
                warm.svd_count(),
            )?;
            sol.warm_start = Some(Box::new(warm));
            Ok(sol)
        }
    }
}
