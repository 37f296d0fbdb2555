//! Seeded synthetic completion problems.
//!
//! Every generator draws from a ChaCha8 stream keyed by the seed, with
//! separate sub-streams for the factors, the noise and the mask. Changing the
//! noise level therefore leaves the truth and the mask untouched.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::MultiDomainProblem;
use crate::matrix::{DenseMatrix, ObservationSet};

const FACTOR_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;
const MASK_STREAM: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> DenseMatrix {
    // Row-major draw order so the stream layout does not depend on storage order.
    let mut v = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let z: f64 = StandardNormal.sample(rng);
        v.push(std * z);
    }
    DenseMatrix::from_row_major(rows, cols, v).expect("dimensions checked by caller")
}

fn product(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from(a.as_matrix() * b.as_matrix())
}

/// `round(ratio · rows · cols)` distinct positions, sorted row-major.
fn sample_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, ratio: f64) -> Vec<(usize, usize)> {
    let total = rows * cols;
    let count = ((ratio * total as f64).round() as usize).min(total);
    let mut picks = index::sample(rng, total, count).into_vec();
    picks.sort_unstable();
    picks.into_iter().map(|k| (k / cols, k % cols)).collect()
}

fn observe(truth: &DenseMatrix, ratio: f64, noise_std: f64, noise: &mut ChaCha8Rng, mask: &mut ChaCha8Rng) -> Result<ObservationSet> {
    let (m, n) = truth.shape();
    let z = if noise_std > 0.0 {
        gaussian(noise, m, n, 1.0)
    } else {
        DenseMatrix::zeros(m, n)
    };
    let entries = sample_mask(mask, m, n, ratio)
        .into_iter()
        .map(|(i, j)| (i, j, truth.get(i, j) + noise_std * z.get(i, j)))
        .collect();
    ObservationSet::new(m, n, entries)
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!("observed ratio {ratio} not in (0, 1]")));
    }
    Ok(())
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, found {v}")));
    }
    Ok(())
}

/// `M = A·B` with standard normal factors, observed as `M + a·Z` on a uniform mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleGenSpec {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    /// Multiplier `a` on the standard normal noise.
    pub noise: f64,
    pub observed_ratio: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SingleGenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidArgument("matrix dimensions must be positive".into()));
        }
        if self.rank > self.rows.min(self.cols) {
            return Err(Error::InvalidArgument(format!(
                "rank {} exceeds min({}, {})",
                self.rank, self.rows, self.cols
            )));
        }
        check_nonneg("noise", self.noise)?;
        check_ratio(self.observed_ratio)
    }
}

/// Returns the noiseless truth and the noisy observations.
pub fn gen_single(spec: &SingleGenSpec) -> Result<(DenseMatrix, ObservationSet)> {
    spec.validate()?;
    let mut factors = stream(spec.seed, FACTOR_STREAM);
    let truth = if spec.rank == 0 {
        DenseMatrix::zeros(spec.rows, spec.cols)
    } else {
        let a = gaussian(&mut factors, spec.rows, spec.rank, 1.0);
        let b = gaussian(&mut factors, spec.rank, spec.cols, 1.0);
        product(&a, &b)
    };
    let obs = observe(
        &truth,
        spec.observed_ratio,
        spec.noise,
        &mut stream(spec.seed, NOISE_STREAM),
        &mut stream(spec.seed, MASK_STREAM),
    )?;
    Ok((truth, obs))
}

/// Domains `Z^d = A·B^d + P^d·Q^d` sharing the row factor `A`.
///
/// Factor entries are Gaussian with the configured variances, so the shared
/// part can be made weaker than the domain-specific part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiGenSpec {
    pub rows: usize,
    pub domain_cols: Vec<usize>,
    pub shared_rank: usize,
    pub shared_variance: f64,
    pub distinct_rank: usize,
    pub distinct_variance: f64,
    pub noise_std: f64,
    /// One ratio per domain.
    pub observed_ratios: Vec<f64>,
    pub seed: u64,
}

impl Default for MultiGenSpec {
    fn default() -> Self {
        MultiGenSpec {
            rows: 100,
            domain_cols: vec![100, 100],
            shared_rank: 10,
            shared_variance: 25.0,
            distinct_rank: 10,
            distinct_variance: 100.0,
            noise_std: 0.0,
            observed_ratios: vec![0.5, 0.5],
            seed: 0,
        }
    }
}

impl MultiGenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.domain_cols.is_empty() || self.domain_cols.contains(&0) {
            return Err(Error::InvalidArgument("rows and every domain width must be positive".into()));
        }
        if self.observed_ratios.len() != self.domain_cols.len() {
            return Err(Error::InvalidArgument(format!(
                "{} observed ratios for {} domains",
                self.observed_ratios.len(),
                self.domain_cols.len()
            )));
        }
        for &n in &self.domain_cols {
            let k = self.rows.min(n);
            if self.shared_rank > k || self.distinct_rank > k {
                return Err(Error::InvalidArgument(format!(
                    "ranks {}/{} exceed min({}, {n})",
                    self.shared_rank, self.distinct_rank, self.rows
                )));
            }
        }
        check_nonneg("shared variance", self.shared_variance)?;
        check_nonneg("distinct variance", self.distinct_variance)?;
        check_nonneg("noise std", self.noise_std)?;
        self.observed_ratios.iter().try_for_each(|&r| check_ratio(r))
    }
}

/// Raw factors behind a multi-domain instance.
#[derive(Clone, Debug)]
pub struct MultiFactors {
    pub shared_rows: DenseMatrix,
    pub shared_cols: Vec<DenseMatrix>,
    pub distinct_rows: Vec<DenseMatrix>,
    pub distinct_cols: Vec<DenseMatrix>,
}

impl MultiFactors {
    pub fn truths(&self) -> Vec<DenseMatrix> {
        self.shared_cols
            .iter()
            .zip(self.distinct_rows.iter().zip(&self.distinct_cols))
            .map(|(b, (p, q))| &product(&self.shared_rows, b) + &product(p, q))
            .collect()
    }
}

pub fn gen_multi_factors(spec: &MultiGenSpec) -> Result<MultiFactors> {
    spec.validate()?;
    let mut rng = stream(spec.seed, FACTOR_STREAM);
    let s = spec.shared_variance.sqrt();
    let t = spec.distinct_variance.sqrt();
    let shared_rows = gaussian(&mut rng, spec.rows, spec.shared_rank.max(1), s);
    let mut shared_cols = Vec::new();
    let mut distinct_rows = Vec::new();
    let mut distinct_cols = Vec::new();
    for &n in &spec.domain_cols {
        shared_cols.push(gaussian(&mut rng, spec.shared_rank.max(1), n, s));
        distinct_rows.push(gaussian(&mut rng, spec.rows, spec.distinct_rank.max(1), t));
        distinct_cols.push(gaussian(&mut rng, spec.distinct_rank.max(1), n, t));
    }
    // A zero rank is represented by a single zero column.
    let zero_out = |m: &mut DenseMatrix| *m = DenseMatrix::zeros(m.rows(), m.cols());
    if spec.shared_rank == 0 {
        shared_cols.iter_mut().for_each(zero_out);
    }
    if spec.distinct_rank == 0 {
        distinct_cols.iter_mut().for_each(zero_out);
    }
    Ok(MultiFactors {
        shared_rows,
        shared_cols,
        distinct_rows,
        distinct_cols,
    })
}

/// Returns the noiseless per-domain truths and the observed problem.
pub fn gen_multi(spec: &MultiGenSpec) -> Result<(Vec<DenseMatrix>, MultiDomainProblem)> {
    let truths = gen_multi_factors(spec)?.truths();
    let mut noise = stream(spec.seed, NOISE_STREAM);
    let mut mask = stream(spec.seed, MASK_STREAM);
    let observations = truths
        .iter()
        .zip(&spec.observed_ratios)
        .map(|(z, &ratio)| observe(z, ratio, spec.noise_std, &mut noise, &mut mask))
        .collect::<Result<Vec<_>>>()?;
    Ok((truths, MultiDomainProblem::new(observations)?))
}

/// Uniform random mask with `round(ratio · rows · cols)` positions, sorted row-major.
pub fn random_mask(rows: usize, cols: usize, ratio: f64, seed: u64) -> Result<Vec<(usize, usize)>> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("mask dimensions must be positive".into()));
    }
    check_ratio(ratio)?;
    Ok(sample_mask(&mut stream(seed, MASK_STREAM), rows, cols, ratio))
}

/// Grayscale test image `128 + Σ_k a_k(i)·b_k(j)` over four factor pairs with
/// integer entries in `[-3, 3]`. Rank 5, pixel values in `[92, 164]`.
pub fn gen_low_rank_image(rows: usize, cols: usize, seed: u64) -> Result<DenseMatrix> {
    const PAIRS: usize = 4;
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("image dimensions must be positive".into()));
    }
    let mut rng = stream(seed, FACTOR_STREAM);
    let mut draw = |n: usize| -> Vec<f64> { (0..n * PAIRS).map(|_| rng.random_range(-3i32..=3) as f64).collect() };
    let a = draw(rows);
    let b = draw(cols);
    Ok(DenseMatrix::from_fn(rows, cols, |i, j| {
        128.0 + (0..PAIRS).map(|k| a[i * PAIRS + k] * b[j * PAIRS + k]).sum::<f64>()
    }))
}
