//! Repeated seeded experiments over one varying parameter.
//!
//! Each cell `(axis value, repetition)` generates one problem and runs every
//! configured solver on it, so solvers are always compared on identical data.
//! Cells run in parallel; results are sorted before they are returned, which
//! keeps the CSV output independent of scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::MaskedQuadraticLoss;
use crate::matrix::{DenseMatrix, ObservationSet};
use crate::metrics::relative_error;
use crate::penalty::PenaltySpec;
use crate::solver::{
    alter_ista_solve, alter_istra_solve, ista_solve, istra_solve, IstraStart, SchattenParams, SolverConfig,
};
use crate::synth::{gen_multi, gen_single, MultiGenSpec, SingleGenSpec};

pub const CELLS_CSV_HEADER: &str = "solver,axis,axis_value,rep,rel_error,iterations,svd_count,elapsed_ms";
pub const SUMMARY_CSV_HEADER: &str =
    "solver,axis,axis_value,runs,mean_rel_error,std_rel_error,mean_svd_count,mean_iterations,mean_elapsed_ms";
pub const FAILURES_CSV_HEADER: &str = "solver,axis,axis_value,rep,error";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Rank,
    Noise,
    ObservedRatio,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Rank => "rank",
            Axis::Noise => "noise",
            Axis::ObservedRatio => "observed_ratio",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ista,
    Istra,
    AlterIsta,
    AlterIstra,
    /// Independent single-matrix ISTA on every domain.
    PerDomainIsta,
}

impl Algorithm {
    fn is_multi(self) -> bool {
        matches!(self, Algorithm::AlterIsta | Algorithm::AlterIstra | Algorithm::PerDomainIsta)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverEntry {
    pub name: String,
    pub algorithm: Algorithm,
    /// Penalty of the single matrix, or of every domain block.
    pub penalty: PenaltySpec,
    /// Penalty of the shared block for the alternating solvers; defaults to `penalty`.
    #[serde(default)]
    pub shared_penalty: Option<PenaltySpec>,
    /// Fixed penalty of the warm-start run for `istra`. Without it the run
    /// starts from the observed matrix.
    #[serde(default)]
    pub warm_start: Option<PenaltySpec>,
    /// On a rank axis, replace the `r` of every truncated penalty by the true rank.
    #[serde(default)]
    pub match_rank: bool,
    #[serde(default)]
    pub config: SolverConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec<P> {
    pub axis: Axis,
    pub values: Vec<f64>,
    /// Problem template; the axis parameter and the seed are overwritten per cell.
    pub problem: P,
    pub solvers: Vec<SolverEntry>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_repetitions() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellRecord {
    pub solver: String,
    pub axis_value: f64,
    pub rep: usize,
    pub rel_error: f64,
    pub iterations: usize,
    pub svd_count: usize,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellFailure {
    pub solver: String,
    pub axis_value: f64,
    pub rep: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub solver: String,
    pub axis_value: f64,
    /// Successful repetitions.
    pub runs: usize,
    pub mean_rel_error: f64,
    /// Sample standard deviation; zero for a single run.
    pub std_rel_error: f64,
    pub mean_svd_count: f64,
    pub mean_iterations: f64,
    pub mean_elapsed_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub axis: Axis,
    pub cells: Vec<CellRecord>,
    pub failures: Vec<CellFailure>,
    pub summary: Vec<SummaryRow>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of cell `(value, rep)`: `base ⊕ hash(value, rep)`.
pub fn cell_seed(base: u64, value: f64, rep: usize) -> u64 {
    base ^ splitmix64(splitmix64(value.to_bits()) ^ rep as u64)
}

fn with_rank(spec: &PenaltySpec, rank: usize) -> PenaltySpec {
    match spec {
        PenaltySpec::Truncated { lambda, .. } => PenaltySpec::Truncated { r: rank, lambda: *lambda },
        other => other.clone(),
    }
}

impl SolverEntry {
    fn penalties_for(&self, rank: Option<usize>) -> (PenaltySpec, PenaltySpec, Option<PenaltySpec>) {
        let shared = self.shared_penalty.clone().unwrap_or_else(|| self.penalty.clone());
        match rank.filter(|_| self.match_rank) {
            Some(r) => (
                with_rank(&self.penalty, r),
                with_rank(&shared, r),
                self.warm_start.as_ref().map(|w| with_rank(w, r)),
            ),
            None => (self.penalty.clone(), shared, self.warm_start.clone()),
        }
    }
}

fn validate_grid<P>(spec: &GridSpec<P>, multi: bool) -> Result<()> {
    if spec.values.is_empty() {
        return Err(Error::InvalidConfig("values: axis has no values".into()));
    }
    if spec.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("values: axis values must be finite".into()));
    }
    if spec.solvers.is_empty() {
        return Err(Error::InvalidConfig("solvers: at least one solver is required".into()));
    }
    if spec.repetitions == 0 {
        return Err(Error::InvalidConfig("repetitions: must be at least 1".into()));
    }
    if spec.axis == Axis::Rank {
        if multi {
            return Err(Error::InvalidConfig("axis: rank is not supported for multi-domain grids".into()));
        }
        if spec.values.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
            return Err(Error::InvalidConfig("values: ranks must be non-negative integers".into()));
        }
    }
    let mut names = std::collections::BTreeSet::new();
    for s in &spec.solvers {
        if s.name.is_empty() || s.name.contains([',', '"', '\n', '\r']) {
            return Err(Error::InvalidConfig(format!(
                "solvers.name: {:?} must be non-empty without commas, quotes or newlines",
                s.name
            )));
        }
        if !names.insert(s.name.as_str()) {
            return Err(Error::InvalidConfig(format!("solvers.name: duplicate solver {:?}", s.name)));
        }
        if s.algorithm.is_multi() != multi {
            return Err(Error::InvalidConfig(format!(
                "solvers.algorithm: solver {:?} uses {:?}, which does not fit a {} grid",
                s.name,
                s.algorithm,
                if multi { "multi-domain" } else { "single-matrix" }
            )));
        }
        s.config.validate().map_err(|e| Error::InvalidConfig(format!("solvers.config ({}): {e}", s.name)))?;
        s.penalty.validate().map_err(|e| Error::InvalidConfig(format!("solvers.penalty ({}): {e}", s.name)))?;
    }
    Ok(())
}

struct Outcome {
    rel_error: f64,
    iterations: usize,
    svd_count: usize,
    elapsed_ms: f64,
}

fn run_single_solver(entry: &SolverEntry, truth: &DenseMatrix, obs: &ObservationSet, rank: usize) -> Result<Outcome> {
    let loss = MaskedQuadraticLoss::new(obs.clone());
    let (penalty, _, warm) = entry.penalties_for(Some(rank));
    let sol = match entry.algorithm {
        Algorithm::Ista => ista_solve(&loss, &penalty, &entry.config, None)?,
        Algorithm::Istra => {
            let (p, eps) = penalty.schatten_params()?;
            let start = match warm {
                Some(w) => IstraStart::Warm(w),
                None => IstraStart::Matrix(obs.observed_matrix()),
            };
            istra_solve(&loss, p, eps, &entry.config, start)?
        }
        other => return Err(Error::InvalidConfig(format!("{other:?} needs a multi-domain grid"))),
    };
    let warm_iters = sol.warm_start.as_ref().map_or(0, |w| w.iterations());
    let warm_ms = sol.warm_start.as_ref().map_or(0.0, |w| w.trace.last().elapsed_ms);
    Ok(Outcome {
        rel_error: relative_error(&sol.x, truth)?,
        iterations: sol.iterations() + warm_iters,
        svd_count: sol.svd_count(),
        elapsed_ms: sol.trace.last().elapsed_ms + warm_ms,
    })
}

fn schatten_block(spec: &PenaltySpec) -> Result<SchattenParams> {
    let (p, eps) = spec.schatten_params()?;
    Ok(SchattenParams { p, eps })
}

fn run_multi_solver(
    entry: &SolverEntry,
    truths: &[DenseMatrix],
    prob: &crate::loss::MultiDomainProblem,
) -> Result<Outcome> {
    let (penalty, shared, _) = entry.penalties_for(None);
    let d = prob.domains();
    let (preds, iterations, svd_count, elapsed_ms) = match entry.algorithm {
        Algorithm::AlterIsta => {
            let mut specs = vec![shared];
            specs.extend(std::iter::repeat_n(penalty, d));
            let sol = alter_ista_solve(prob, &specs, &entry.config, None)?;
            (sol.predictions(prob)?, sol.iterations(), sol.svd_count(), sol.trace.last().elapsed_ms)
        }
        Algorithm::AlterIstra => {
            let mut params = vec![schatten_block(&shared)?];
            params.extend(std::iter::repeat_n(schatten_block(&penalty)?, d));
            let sol = alter_istra_solve(prob, &params, &entry.config, None)?;
            (sol.predictions(prob)?, sol.iterations(), sol.svd_count(), sol.trace.last().elapsed_ms)
        }
        Algorithm::PerDomainIsta => {
            let mut preds = Vec::with_capacity(d);
            let (mut iters, mut svds, mut ms) = (0, 0, 0.0);
            for obs in prob.all_observations() {
                let sol = ista_solve(&MaskedQuadraticLoss::new(obs.clone()), &penalty, &entry.config, None)?;
                iters += sol.iterations();
                svds += sol.svd_count();
                ms += sol.trace.last().elapsed_ms;
                preds.push(sol.x);
            }
            (preds, iters, svds, ms)
        }
        other => return Err(Error::InvalidConfig(format!("{other:?} needs a single-matrix grid"))),
    };
    Ok(Outcome {
        rel_error: relative_error(&DenseMatrix::hstack(&preds)?, &DenseMatrix::hstack(truths)?)?,
        iterations,
        svd_count,
        elapsed_ms,
    })
}

type CellOutput = Vec<std::result::Result<CellRecord, CellFailure>>;

fn collect(axis: Axis, outputs: Vec<CellOutput>, order: &[String]) -> GridResult {
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for r in outputs.into_iter().flatten() {
        match r {
            Ok(c) => cells.push(c),
            Err(f) => failures.push(f),
        }
    }
    let rank = |name: &str| order.iter().position(|n| n == name).unwrap_or(usize::MAX);
    cells.sort_by(|a, b| {
        (rank(&a.solver), a.axis_value, a.rep)
            .partial_cmp(&(rank(&b.solver), b.axis_value, b.rep))
            .expect("finite axis values")
    });
    failures.sort_by(|a, b| {
        (rank(&a.solver), a.axis_value, a.rep)
            .partial_cmp(&(rank(&b.solver), b.axis_value, b.rep))
            .expect("finite axis values")
    });
    let summary = summarize(&cells);
    GridResult {
        axis,
        cells,
        failures,
        summary,
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// One row per `(solver, axis value)` over the successful cells, which must be sorted by that pair.
pub fn summarize(cells: &[CellRecord]) -> Vec<SummaryRow> {
    cells
        .chunk_by(|a, b| a.solver == b.solver && a.axis_value == b.axis_value)
        .map(|group| {
            let re: Vec<f64> = group.iter().map(|c| c.rel_error).collect();
            let svd: Vec<f64> = group.iter().map(|c| c.svd_count as f64).collect();
            let it: Vec<f64> = group.iter().map(|c| c.iterations as f64).collect();
            let ms: Vec<f64> = group.iter().map(|c| c.elapsed_ms).collect();
            SummaryRow {
                solver: group[0].solver.clone(),
                axis_value: group[0].axis_value,
                runs: group.len(),
                mean_rel_error: mean(&re),
                std_rel_error: sample_std(&re),
                mean_svd_count: mean(&svd),
                mean_iterations: mean(&it),
                mean_elapsed_ms: mean(&ms),
            }
        })
        .collect()
}

fn cell_grid<P>(spec: &GridSpec<P>) -> Vec<(f64, usize)> {
    spec.values
        .iter()
        .flat_map(|&v| (0..spec.repetitions).map(move |rep| (v, rep)))
        .collect()
}

fn record(entry: &SolverEntry, value: f64, rep: usize, out: Result<Outcome>) -> std::result::Result<CellRecord, CellFailure> {
    match out {
        Ok(o) => Ok(CellRecord {
            solver: entry.name.clone(),
            axis_value: value,
            rep,
            rel_error: o.rel_error,
            iterations: o.iterations,
            svd_count: o.svd_count,
            elapsed_ms: o.elapsed_ms,
        }),
        Err(e) => Err(CellFailure {
            solver: entry.name.clone(),
            axis_value: value,
            rep,
            error: e.to_string(),
        }),
    }
}

fn fail_all(spec_solvers: &[SolverEntry], value: f64, rep: usize, e: &Error) -> CellOutput {
    spec_solvers
        .iter()
        .map(|s| record(s, value, rep, Err(Error::InvalidArgument(format!("data generation: {e}")))))
        .collect()
}

/// Single-matrix grid. A failing solver is recorded in
/// [`GridResult::failures`] and the grid carries on.
pub fn run_grid(spec: &GridSpec<SingleGenSpec>) -> Result<GridResult> {
    validate_grid(spec, false)?;
    let outputs: Vec<CellOutput> = cell_grid(spec)
        .into_par_iter()
        .map(|(value, rep)| {
            let mut problem = spec.problem.clone();
            problem.seed = cell_seed(spec.seed, value, rep);
            match spec.axis {
                Axis::Rank => problem.rank = value as usize,
                Axis::Noise => problem.noise = value,
                Axis::ObservedRatio => problem.observed_ratio = value,
            }
            let (truth, obs) = match gen_single(&problem) {
                Ok(d) => d,
                Err(e) => return fail_all(&spec.solvers, value, rep, &e),
            };
            spec.solvers
                .iter()
                .map(|s| record(s, value, rep, run_single_solver(s, &truth, &obs, problem.rank)))
                .collect()
        })
        .collect();
    let order: Vec<String> = spec.solvers.iter().map(|s| s.name.clone()).collect();
    Ok(collect(spec.axis, outputs, &order))
}

/// Multi-domain grid; errors are measured on the per-domain reconstructions.
pub fn run_multi_grid(spec: &GridSpec<MultiGenSpec>) -> Result<GridResult> {
    validate_grid(spec, true)?;
    let outputs: Vec<CellOutput> = cell_grid(spec)
        .into_par_iter()
        .map(|(value, rep)| {
            let mut problem = spec.problem.clone();
            problem.seed = cell_seed(spec.seed, value, rep);
            match spec.axis {
                Axis::Noise => problem.noise_std = value,
                Axis::ObservedRatio => problem.observed_ratios.iter_mut().for_each(|r| *r = value),
                Axis::Rank => unreachable!("rejected by validation"),
            }
            let (truths, prob) = match gen_multi(&problem) {
                Ok(d) => d,
                Err(e) => return fail_all(&spec.solvers, value, rep, &e),
            };
            spec.solvers
                .iter()
                .map(|s| record(s, value, rep, run_multi_solver(s, &truths, &prob)))
                .collect()
        })
        .collect();
    let order: Vec<String> = spec.solvers.iter().map(|s| s.name.clone()).collect();
    Ok(collect(spec.axis, outputs, &order))
}

impl GridResult {
    /// Per-cell CSV. Wall-clock columns are zero unless `with_timing` is set.
    pub fn cells_csv(&self, with_timing: bool) -> String {
        let mut out = format!("{CELLS_CSV_HEADER}\n");
        for c in &self.cells {
            let ms = if with_timing { c.elapsed_ms } else { 0.0 };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                c.solver,
                self.axis.name(),
                c.axis_value,
                c.rep,
                c.rel_error,
                c.iterations,
                c.svd_count,
                ms
            ));
        }
        out
    }

    pub fn summary_csv(&self, with_timing: bool) -> String {
        let mut out = format!("{SUMMARY_CSV_HEADER}\n");
        for r in &self.summary {
            let ms = if with_timing { r.mean_elapsed_ms } else { 0.0 };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.solver,
                self.axis.name(),
                r.axis_value,
                r.runs,
                r.mean_rel_error,
                r.std_rel_error,
                r.mean_svd_count,
                r.mean_iterations,
                ms
            ));
        }
        out
    }

    pub fn failures_csv(&self) -> String {
        let mut out = format!("{FAILURES_CSV_HEADER}\n");
        for f in &self.failures {
            let msg = f.error.replace('"', "'");
            out.push_str(&format!(
                "{},{},{},{},\"{}\"\n",
                f.solver,
                self.axis.name(),
                f.axis_value,
                f.rep,
                msg.replace(['\n', '\r'], " ")
            ));
        }
        out
    }

    /// Summary row of `solver` at `value`, if any run succeeded there.
    pub fn summary_row(&self, solver: &str, value: f64) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.solver == solver && r.axis_value == value)
    }
}
