use std::time::Instant;

use crate::error::{Error, Result};
use crate::loss::{multi_loss_grad_block, multi_loss_value, MultiDomainProblem};
use crate::matrix::{numerical_rank, thin_svd, DenseMatrix};
use crate::penalty::{shrink, Exponent, PenaltySpec, Shrinkage};

use super::diagnostics;
use super::single::{stopping_scale, weight_drift, Regularizer};
use super::{IterateRecord, IterateTrace, SolverConfig, Termination, STALL_DECREASE, STALL_WINDOW};

/// Smoothed Schatten penalty `Σ (σ_i + ε)^p` on one block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchattenParams {
    pub p: Exponent,
    pub eps: f64,
}

/// Starting blocks for an alternating run. Defaults to all zeros.
#[derive(Clone, Debug)]
pub struct MultiStart {
    pub shared: DenseMatrix,
    pub domains: Vec<DenseMatrix>,
}

#[derive(Clone, Debug)]
pub struct MultiSolution {
    /// `X⁰`, spanning the columns of every domain.
    pub shared: DenseMatrix,
    /// `X¹ … X^D`.
    pub domains: Vec<DenseMatrix>,
    pub trace: IterateTrace,
    pub termination: Termination,
    pub setup_svds: usize,
}

impl MultiSolution {
    /// Per-domain reconstructions `X⁰_[d] + X^d`.
    pub fn predictions(&self, prob: &MultiDomainProblem) -> Result<Vec<DenseMatrix>> {
        prob.predictions(&self.shared, &self.domains)
    }

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

/// Gauss–Seidel proximal sweeps over `X⁰, X¹, …, X^D`, each block with its
/// own fixed-weight penalty (`specs[0]` for the shared block).
pub fn alter_ista_solve(
    prob: &MultiDomainProblem,
    specs: &[PenaltySpec],
    cfg: &SolverConfig,
    start: Option<MultiStart>,
) -> Result<MultiSolution> {
    check_block_count(prob, specs.len())?;
    let regs = specs
        .iter()
        .enumerate()
        .map(|(d, s)| {
            if s.is_reweighted() {
                return Err(Error::InvalidArgument(format!(
                    "block {d}: alter_ista_solve needs fixed-weight penalties"
                )));
            }
            let (m, n) = prob.block_shape(d);
            Regularizer::fixed(s, m.min(n))
        })
        .collect::<Result<Vec<_>>>()?;
    run_alternating(prob, &regs, cfg, start)
}

/// Alternating sweeps with every block's weights recomputed from its current
/// singular values.
pub fn alter_istra_solve(
    prob: &MultiDomainProblem,
    params: &[SchattenParams],
    cfg: &SolverConfig,
    start: Option<MultiStart>,
) -> Result<MultiSolution> {
    check_block_count(prob, params.len())?;
    let regs = params
        .iter()
        .map(|sp| Regularizer::reweighted(sp.p, sp.eps))
        .collect::<Result<Vec<_>>>()?;
    run_alternating(prob, &regs, cfg, start)
}

fn check_block_count(prob: &MultiDomainProblem, found: usize) -> Result<()> {
    if found != prob.domains() + 1 {
        return Err(Error::InvalidArgument(format!(
            "expected {} block penalties (shared + {} domains), found {found}",
            prob.domains() + 1,
            prob.domains()
        )));
    }
    Ok(())
}

struct Blocks<'a> {
    prob: &'a MultiDomainProblem,
    shared: DenseMatrix,
    domains: Vec<DenseMatrix>,
}

impl Blocks<'_> {
    fn get(&self, d: usize) -> &DenseMatrix {
        if d == 0 {
            &self.shared
        } else {
            &self.domains[d - 1]
        }
    }

    fn set(&mut self, d: usize, x: DenseMatrix) {
        if d == 0 {
            self.shared = x;
        } else {
            self.domains[d - 1] = x;
        }
    }

    fn grad(&self, d: usize) -> Result<DenseMatrix> {
        multi_loss_grad_block(d, &self.shared, &self.domains, self.prob)
    }

    fn loss(&self) -> Result<f64> {
        multi_loss_value(&self.shared, &self.domains, self.prob)
    }
}

fn run_alternating(
    prob: &MultiDomainProblem,
    regs: &[Regularizer],
    cfg: &SolverConfig,
    start: Option<MultiStart>,
) -> Result<MultiSolution> {
    cfg.validate()?;
    if cfg.backtracking.is_some() {
        return Err(Error::InvalidConfig(
            "alternating solvers use a fixed step; backtracking is not supported".into(),
        ));
    }
    if prob.all_observations().iter().all(|o| o.is_empty()) {
        return Err(Error::InvalidArgument("no observed entries in any domain".into()));
    }
    let clock = Instant::now();
    let nblocks = prob.domains() + 1;
    let (shared, domains) = match start {
        Some(s) => (s.shared, s.domains),
        None => (
            DenseMatrix::zeros(prob.shared_rows(), prob.total_cols()),
            (1..nblocks).map(|d| {
                let (m, n) = prob.block_shape(d);
                DenseMatrix::zeros(m, n)
            }).collect(),
        ),
    };
    prob.check_blocks(&shared, &domains)?;
    shared.ensure_finite()?;
    for x in &domains {
        x.ensure_finite()?;
    }
    let mut blocks = Blocks { prob, shared, domains };
    let mut svs = Vec::with_capacity(nblocks);
    for d in 0..nblocks {
        svs.push(thin_svd(blocks.get(d))?.singular_values);
    }
    let setup_svds = nblocks;
    let mut svd_count = setup_svds;
    let penalty_of = |svs: &[Vec<f64>]| -> f64 { regs.iter().zip(svs).map(|(r, s)| r.value(s)).sum() };
    let rank_of = |svs: &[Vec<f64>]| -> usize { svs.iter().map(|s| numerical_rank(s)).sum() };

    let loss = blocks.loss()?;
    let penalty = penalty_of(&svs);
    let mut objective = loss + penalty;
    if !objective.is_finite() {
        return Err(Error::NonFiniteObjective { iteration: 0 });
    }
    let step = cfg.step;
    let rho = diagnostics::descent_constant(step);
    let mut trace = IterateTrace {
        records: vec![IterateRecord {
            iter: 0,
            objective,
            loss,
            penalty,
            step_gap: 0.0,
            rank: rank_of(&svs),
            subgrad_residual: 0.0,
            step: 0.0,
            tau: 1.0,
            rho: 0.0,
            svd_count,
            elapsed_ms: clock.elapsed().as_secs_f64() * 1e3,
        }],
    };
    let scale = stopping_scale(prob.total_value_norm());
    let mut termination = Termination::MaxIters;
    let mut flat = 0;

    for t in 1..=cfg.max_iters {
        let tau = cfg.tau(t - 1);
        let mut gap2 = 0.0;
        let mut residual2 = 0.0;
        for d in 0..nblocks {
            let reg = &regs[d];
            let weights = reg.weights_at(&svs[d])?;
            let grad = blocks.grad(d)?;
            let x_prev = blocks.get(d).clone();
            let Shrinkage { x: x_next, factors } = shrink(&(&x_prev - &grad.scaled(step)), &weights, tau * step)?;
            svd_count += 1;
            let delta = &x_prev - &x_next;
            gap2 += delta.frobenius_norm_squared();
            blocks.set(d, x_next);
            let mut witness = &(&delta.scaled(1.0 / step) + &blocks.grad(d)?) - &grad;
            if reg.is_reweighted() {
                let next_weights = reg.weights_at(&factors.singular_values)?;
                witness = &witness + &weight_drift(&factors, &weights, &next_weights);
            }
            residual2 += witness.frobenius_norm_squared();
            svs[d] = factors.singular_values;
        }
        let loss = blocks.loss()?;
        let penalty = penalty_of(&svs);
        let next = loss + penalty;
        if !next.is_finite() {
            return Err(Error::NonFiniteObjective { iteration: t });
        }
        let gap = gap2.sqrt();
        if cfg.diagnostics && tau == 1.0 {
            diagnostics::check_monotone(t, objective, next)?;
            diagnostics::check_sufficient_decrease(t, objective, next, rho, gap)?;
        }
        let decrease = objective - next;
        objective = next;
        trace.records.push(IterateRecord {
            iter: t,
            objective,
            loss,
            penalty,
            step_gap: gap,
            rank: rank_of(&svs),
            subgrad_residual: residual2.sqrt(),
            step,
            tau,
            rho,
            svd_count,
            elapsed_ms: clock.elapsed().as_secs_f64() * 1e3,
        });

        if gap <= cfg.rel_tol * scale {
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
    Ok(MultiSolution {
        shared: blocks.shared,
        domains: blocks.domains,
        trace,
        termination,
        setup_svds,
    })
}
