use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rankmin::bench::{run_grid, run_multi_grid, GridResult, GridSpec};
use rankmin::io::{read_dense, read_observations, write_dense, write_observations};
use rankmin::solver::{Backtracking, TauSchedule};
use rankmin::synth::{gen_low_rank_image, gen_single, MultiGenSpec, SingleGenSpec};
use rankmin::{ista_solve, istra_solve, relative_error, IstraStart, MaskedQuadraticLoss, SolverConfig};
use serde::de::DeserializeOwned;

use crate::inpaint::{self, ChannelSolver};
use crate::penalty_arg::parse_penalty;
use crate::{CliResult, Failure};

/// Config files carry this schema number.
pub const SCHEMA_VERSION: u64 = 1;

#[derive(Parser, Debug)]
#[command(name = "rankmin", version, about = "Low-rank matrix completion and inpainting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Complete a partially observed matrix.
    Complete(CompleteArgs),
    /// Fill in missing pixels of an RGB image.
    Inpaint(InpaintArgs),
    /// Run a single-matrix benchmark grid.
    BenchSynthetic(BenchArgs),
    /// Run a multi-domain benchmark grid.
    BenchMulti(BenchArgs),
    /// Write a synthetic low-rank matrix and its observations.
    GenerateMatrix(GenerateMatrixArgs),
    /// Write a procedural rank-5 grayscale test image.
    GenerateImage(GenerateImageArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Relative stopping tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Fixed step size (must be below 1).
    #[arg(long)]
    pub step: Option<f64>,
    /// Use the backtracking line search instead of a fixed step.
    #[arg(long)]
    pub backtrack: bool,
    /// Threshold multipliers for the first iterations, e.g. `8,4,2,1`.
    #[arg(long, value_delimiter = ',')]
    pub tau: Option<Vec<f64>>,
    /// Nuclear-norm weight of the warm-start run for Schatten penalties.
    #[arg(long)]
    pub warm_lambda: Option<f64>,
}

impl SolverArgs {
    pub fn config(&self) -> CliResult<SolverConfig> {
        let mut cfg = SolverConfig::default();
        if let Some(n) = self.max_iters {
            cfg.max_iters = n;
        }
        if let Some(t) = self.tol {
            cfg.rel_tol = t;
        }
        if let Some(s) = self.step {
            cfg.step = s;
        }
        if self.backtrack {
            cfg.backtracking = Some(Backtracking::default());
        }
        cfg.tau_schedule = self.tau.clone().map(TauSchedule);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct CompleteArgs {
    /// Observation CSV: a `rows,cols` line, then `row,col,value` lines.
    #[arg(long)]
    pub obs: PathBuf,
    /// Dense ground truth for reporting the relative error.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// e.g. `truncated:8:5`, `nuclear:1`, `schatten:1/2:0.01`.
    #[arg(long)]
    pub penalty: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Accepted for uniformity; completion itself draws no random numbers.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Write wall-clock times into the trace instead of zeros.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("mask_source").required(true).args(["random_ratio", "mask"])))]
pub struct InpaintArgs {
    /// 8-bit RGB input image.
    #[arg(long)]
    pub image: PathBuf,
    /// Keep this fraction of pixels, chosen at random; PSNR against the input is printed.
    #[arg(long)]
    pub random_ratio: Option<f64>,
    /// Mask image of the same size; nonzero pixels are missing.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Clean image to report PSNR against in mask mode.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub penalty: String,
    /// Output PNG path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// JSON grid spec.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the base seed in the grid file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write wall-clock times instead of zeros.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args, Debug)]
pub struct GenerateMatrixArgs {
    #[arg(long, default_value_t = 200)]
    pub rows: usize,
    #[arg(long, default_value_t = 150)]
    pub cols: usize,
    #[arg(long, default_value_t = 5)]
    pub rank: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.5)]
    pub ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving `truth.csv` and `obs.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenerateImageArgs {
    #[arg(long, default_value_t = 200)]
    pub rows: u32,
    #[arg(long, default_value_t = 200)]
    pub cols: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Complete(a) => complete(&a),
        Command::Inpaint(a) => inpaint_cmd(&a),
        Command::BenchSynthetic(a) => bench::<SingleGenSpec>(&a, run_grid),
        Command::BenchMulti(a) => bench::<MultiGenSpec>(&a, run_multi_grid),
        Command::GenerateMatrix(a) => generate_matrix(&a),
        Command::GenerateImage(a) => generate_image(&a),
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::config(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

pub fn complete(a: &CompleteArgs) -> CliResult<()> {
    let penalty = parse_penalty(&a.penalty)?;
    let cfg = a.solver.config()?;
    let obs = read_observations(&a.obs)?;
    let truth = a.truth.as_ref().map(read_dense).transpose()?;
    create_dir(&a.out)?;
    let loss = MaskedQuadraticLoss::new(obs);
    let sol = if penalty.is_reweighted() {
        let (p, eps) = penalty.schatten_params()?;
        let start = match a.solver.warm_lambda {
            Some(lambda) => IstraStart::nuclear(lambda),
            None => IstraStart::Matrix(loss.observations().observed_matrix()),
        };
        istra_solve(&loss, p, eps, &cfg, start)?
    } else {
        ista_solve(&loss, &penalty, &cfg, None)?
    };
    write_dense(a.out.join("recovered.csv"), &sol.x)?;
    write_text(&a.out.join("trace.csv"), &sol.trace.to_csv(a.timing))?;
    if let Some(warm) = &sol.warm_start {
        write_text(&a.out.join("warm_trace.csv"), &warm.trace.to_csv(a.timing))?;
    }
    println!("termination: {}", sol.termination);
    println!("iterations: {}", sol.iterations());
    println!("svd_count: {}", sol.svd_count());
    println!("objective: {}", sol.objective());
    if let Some(t) = &truth {
        println!("rel_error: {}", relative_error(&sol.x, t)?);
    }
    Ok(())
}

pub fn inpaint_cmd(a: &InpaintArgs) -> CliResult<()> {
    let solver = ChannelSolver {
        penalty: parse_penalty(&a.penalty)?,
        config: a.solver.config()?,
        warm_lambda: a.solver.warm_lambda,
    };
    let img = inpaint::load_rgb(&a.image)?;
    let (w, h) = img.dimensions();
    let missing = match (&a.random_ratio, &a.mask) {
        (Some(ratio), None) => inpaint::random_missing(w, h, *ratio, a.seed)?,
        (None, Some(path)) => inpaint::mask_from_image(path, w, h)?,
        _ => return Err(Failure::config("give exactly one of --random-ratio and --mask")),
    };
    let reference = match (&a.reference, a.random_ratio.is_some()) {
        (Some(path), _) => Some(inpaint::load_rgb(path)?),
        (None, true) => Some(img.clone()),
        (None, false) => None,
    };
    let out = inpaint::inpaint(&img, &missing, &solver)?;
    inpaint::save_rgb(&out, &a.out)?;
    println!("missing_pixels: {}", missing.iter().filter(|&&m| m).count());
    if let Some(r) = reference {
        println!("psnr_db: {:.4}", inpaint::image_psnr(&out, &r)?);
    }
    Ok(())
}

/// Reads a JSON config with a `"schema": 1` field.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let fail = |msg: String| Failure::config(format!("{}: {msg}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| fail(e.to_string()))?;
    let obj = value.as_object_mut().ok_or_else(|| fail("expected a JSON object".into()))?;
    match obj.remove("schema") {
        Some(v) if v.as_u64() == Some(SCHEMA_VERSION) => {}
        Some(v) => return Err(fail(format!("schema: unsupported version {v}, expected {SCHEMA_VERSION}"))),
        None => return Err(fail(format!("schema: missing field, expected {SCHEMA_VERSION}"))),
    }
    serde_json::from_value(value).map_err(|e| fail(e.to_string()))
}

fn bench<P: DeserializeOwned>(a: &BenchArgs, runner: fn(&GridSpec<P>) -> rankmin::Result<GridResult>) -> CliResult<()> {
    let mut spec: GridSpec<P> = read_config(&a.spec)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let result = runner(&spec).map_err(|e| Failure::config(format!("{}: {e}", a.spec.display())))?;
    create_dir(&a.out)?;
    write_text(&a.out.join("cells.csv"), &result.cells_csv(a.timing))?;
    write_text(&a.out.join("summary.csv"), &result.summary_csv(a.timing))?;
    write_text(&a.out.join("failures.csv"), &result.failures_csv())?;
    println!(
        "{:<20} {:>12} {:>5} {:>12} {:>12} {:>10} {:>10}",
        "solver",
        result.axis.name(),
        "runs",
        "mean_re",
        "std_re",
        "mean_svd",
        "mean_iter"
    );
    for r in &result.summary {
        println!(
            "{:<20} {:>12} {:>5} {:>12.4e} {:>12.4e} {:>10.1} {:>10.1}",
            r.solver, r.axis_value, r.runs, r.mean_rel_error, r.std_rel_error, r.mean_svd_count, r.mean_iterations
        );
    }
    if !result.failures.is_empty() {
        eprintln!("{} cell(s) failed; see failures.csv", result.failures.len());
    }
    Ok(())
}

pub fn generate_matrix(a: &GenerateMatrixArgs) -> CliResult<()> {
    let (truth, obs) = gen_single(&SingleGenSpec {
        rows: a.rows,
        cols: a.cols,
        rank: a.rank,
        noise: a.noise,
        observed_ratio: a.ratio,
        seed: a.seed,
    })?;
    create_dir(&a.out)?;
    write_dense(a.out.join("truth.csv"), &truth)?;
    write_observations(a.out.join("obs.csv"), &obs)?;
    println!("observed: {} of {}", obs.len(), a.rows * a.cols);
    Ok(())
}

pub fn generate_image(a: &GenerateImageArgs) -> CliResult<()> {
    let m = gen_low_rank_image(a.rows as usize, a.cols as usize, a.seed)?;
    inpaint::save_rgb(&inpaint::gray_image(&m), &a.out)
}
