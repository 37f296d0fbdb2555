//! Masked quadratic data-fidelity terms.
//!
//! Single matrix: `f(X) = ½‖P_Ω(X − Y)‖²_F`, whose gradient `P_Ω(X − Y)` is
//! 1-Lipschitz. Multiple domains share rows; the prediction for domain `d` is
//! the sum of its column block of the shared matrix `X⁰` and its own block
//! `X^d`, and `f = Σ_d ½‖P_{Ω_d}(X⁰_[d] + X^d − Y^d)‖²_F`. Every partial
//! gradient is again 1-Lipschitz.

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, ObservationSet};

/// Lipschitz constant of the masked quadratic gradient, single or per block.
pub const LIPSCHITZ: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct MaskedQuadraticLoss {
    observations: ObservationSet,
}

impl MaskedQuadraticLoss {
    pub fn new(observations: ObservationSet) -> Self {
        MaskedQuadraticLoss { observations }
    }

    pub fn observations(&self) -> &ObservationSet {
        &self.observations
    }

    pub fn shape(&self) -> (usize, usize) {
        self.observations.shape()
    }

    pub fn lipschitz(&self) -> f64 {
        LIPSCHITZ
    }
}

/// `½‖P_Ω(X − Y)‖²_F`.
pub fn loss_value(x: &DenseMatrix, loss: &MaskedQuadraticLoss) -> Result<f64> {
    let obs = loss.observations();
    obs.check_shape(x)?;
    Ok(0.5
        * obs
            .entries()
            .iter()
            .map(|&(i, j, y)| (x.get(i, j) - y).powi(2))
            .sum::<f64>())
}

/// `P_Ω(X − Y)`.
pub fn loss_grad(x: &DenseMatrix, loss: &MaskedQuadraticLoss) -> Result<DenseMatrix> {
    let obs = loss.observations();
    obs.check_shape(x)?;
    let mut g = DenseMatrix::zeros(x.rows(), x.cols());
    for &(i, j, y) in obs.entries() {
        g.set(i, j, x.get(i, j) - y);
    }
    Ok(g)
}

/// Row-aligned observations from several domains.
///
/// Domain `d` (1-based, as in the block numbering where 0 is the shared block)
/// occupies columns `offsets[d-1] .. offsets[d-1] + domain_cols[d-1]` of the
/// shared matrix `X⁰`.
#[derive(Clone, Debug)]
pub struct MultiDomainProblem {
    shared_rows: usize,
    domain_cols: Vec<usize>,
    offsets: Vec<usize>,
    observations: Vec<ObservationSet>,
}

impl MultiDomainProblem {
    pub fn new(observations: Vec<ObservationSet>) -> Result<Self> {
        let first = observations
            .first()
            .ok_or_else(|| Error::InvalidArgument("at least one domain is required".into()))?;
        let shared_rows = first.rows();
        let mut domain_cols = Vec::with_capacity(observations.len());
        let mut offsets = Vec::with_capacity(observations.len());
        let mut offset = 0;
        for (d, o) in observations.iter().enumerate() {
            if o.rows() != shared_rows {
                return Err(Error::InvalidArgument(format!(
                    "domain {} has {} rows, expected {shared_rows}",
                    d + 1,
                    o.rows()
                )));
            }
            offsets.push(offset);
            domain_cols.push(o.cols());
            offset += o.cols();
        }
        Ok(MultiDomainProblem {
            shared_rows,
            domain_cols,
            offsets,
            observations,
        })
    }

    /// Number of domains `D`; blocks are numbered `0..=D`.
    pub fn domains(&self) -> usize {
        self.observations.len()
    }

    pub fn shared_rows(&self) -> usize {
        self.shared_rows
    }

    pub fn domain_cols(&self) -> &[usize] {
        &self.domain_cols
    }

    pub fn total_cols(&self) -> usize {
        self.domain_cols.iter().sum()
    }

    /// Column offset of domain `d` (1-based) inside `X⁰`.
    pub fn offset(&self, d: usize) -> usize {
        self.offsets[d - 1]
    }

    /// Observations of domain `d` (1-based).
    pub fn observations(&self, d: usize) -> &ObservationSet {
        &self.observations[d - 1]
    }

    pub fn all_observations(&self) -> &[ObservationSet] {
        &self.observations
    }

    /// Shape of block `d`: `X⁰` for `d = 0`, else `X^d`.
    pub fn block_shape(&self, d: usize) -> (usize, usize) {
        if d == 0 {
            (self.shared_rows, self.total_cols())
        } else {
            (self.shared_rows, self.domain_cols[d - 1])
        }
    }

    /// `sqrt(Σ_d ‖Y^d‖²_Ω)`.
    pub fn total_value_norm(&self) -> f64 {
        self.observations
            .iter()
            .map(|o| o.value_norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn check_blocks(&self, x0: &DenseMatrix, xs: &[DenseMatrix]) -> Result<()> {
        if xs.len() != self.domains() {
            return Err(Error::InvalidArgument(format!(
                "expected {} domain blocks, found {}",
                self.domains(),
                xs.len()
            )));
        }
        if x0.shape() != self.block_shape(0) {
            return Err(Error::dims(self.block_shape(0), x0.shape()));
        }
        for (d, x) in xs.iter().enumerate() {
            if x.shape() != self.block_shape(d + 1) {
                return Err(Error::dims(self.block_shape(d + 1), x.shape()));
            }
        }
        Ok(())
    }

    /// `X⁰_[d] + X^d` for every domain.
    pub fn predictions(&self, x0: &DenseMatrix, xs: &[DenseMatrix]) -> Result<Vec<DenseMatrix>> {
        self.check_blocks(x0, xs)?;
        Ok(xs
            .iter()
            .enumerate()
            .map(|(k, x)| &x0.column_block(self.offsets[k], self.domain_cols[k]) + x)
            .collect())
    }

    /// Masked residual `P_{Ω_d}(X⁰_[d] + X^d − Y^d)` for domain `d` (1-based).
    fn residual(&self, d: usize, x0: &DenseMatrix, xd: &DenseMatrix) -> DenseMatrix {
        let obs = &self.observations[d - 1];
        let off = self.offsets[d - 1];
        let mut r = DenseMatrix::zeros(obs.rows(), obs.cols());
        for &(i, j, y) in obs.entries() {
            r.set(i, j, x0.get(i, off + j) + xd.get(i, j) - y);
        }
        r
    }
}

pub fn multi_loss_value(x0: &DenseMatrix, xs: &[DenseMatrix], prob: &MultiDomainProblem) -> Result<f64> {
    prob.check_blocks(x0, xs)?;
    let mut total = 0.0;
    for (k, (obs, xd)) in prob.observations.iter().zip(xs).enumerate() {
        let off = prob.offsets[k];
        total += 0.5
            * obs
                .entries()
                .iter()
                .map(|&(i, j, y)| (x0.get(i, off + j) + xd.get(i, j) - y).powi(2))
                .sum::<f64>();
    }
    Ok(total)
}

/// Partial gradient with respect to block `d`: the domain residual for
/// `d ≥ 1`, the column-wise concatenation of all residuals for `d = 0`.
pub fn multi_loss_grad_block(
    d: usize,
    x0: &DenseMatrix,
    xs: &[DenseMatrix],
    prob: &MultiDomainProblem,
) -> Result<DenseMatrix> {
    if d > prob.domains() {
        return Err(Error::InvalidArgument(format!(
            "block index {d} out of range 0..={}",
            prob.domains()
        )));
    }
    prob.check_blocks(x0, xs)?;
    if d > 0 {
        return Ok(prob.residual(d, x0, &xs[d - 1]));
    }
    let blocks: Vec<DenseMatrix> = (1..=prob.domains())
        .map(|k| prob.residual(k, x0, &xs[k - 1]))
        .collect();
    DenseMatrix::hstack(&blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-2.0..2.0))
    }

    fn random_obs(rng: &mut ChaCha8Rng, rows: usize, cols: usize, ratio: f64) -> ObservationSet {
        let mut e = Vec::new();
        for i in 0..rows {
            for j in 0..cols {
                if rng.random::<f64>() < ratio {
                    e.push((i, j, rng.random_range(-3.0..3.0)));
                }
            }
        }
        ObservationSet::new(rows, cols, e).unwrap()
    }

    #[test]
    fn value_examples() {
        let obs = ObservationSet::new(2, 2, vec![(0, 0, 2.0)]).unwrap();
        let loss = MaskedQuadraticLoss::new(obs.clone());
        assert_eq!(loss_value(&DenseMatrix::zeros(2, 2), &loss).unwrap(), 2.0);
        assert_eq!(loss_value(&obs.observed_matrix(), &loss).unwrap(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let obs = random_obs(&mut rng, 4, 3, 0.6);
        let loss = MaskedQuadraticLoss::new(obs.clone());
        let y = obs.observed_matrix();
        let x = random(&mut rng, 4, 3);
        let double = &y + &(&x - &y).scaled(2.0);
        let base = loss_value(&x, &loss).unwrap();
        assert!((loss_value(&double, &loss).unwrap() - 4.0 * base).abs() < 1e-12 * base.max(1.0));
    }

    #[test]
    fn gradient_examples() {
        let obs = ObservationSet::new(2, 2, vec![(0, 0, 1.0)]).unwrap();
        let loss = MaskedQuadraticLoss::new(obs.clone());
        let g = loss_grad(&DenseMatrix::zeros(2, 2), &loss).unwrap();
        assert_eq!(g.to_row_major(), vec![-1.0, 0.0, 0.0, 0.0]);
        let g = loss_grad(&obs.observed_matrix(), &loss).unwrap();
        assert_eq!(g, DenseMatrix::zeros(2, 2));
        assert!(loss_grad(&DenseMatrix::zeros(2, 3), &loss).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let loss = MaskedQuadraticLoss::new(random_obs(&mut rng, 4, 3, 0.5));
        let x = random(&mut rng, 4, 3);
        let g = loss_grad(&x, &loss).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            for j in 0..3 {
                let mut plus = x.clone();
                plus.set(i, j, x.get(i, j) + h);
                let mut minus = x.clone();
                minus.set(i, j, x.get(i, j) - h);
                let fd = (loss_value(&plus, &loss).unwrap() - loss_value(&minus, &loss).unwrap()) / (2.0 * h);
                assert!((fd - g.get(i, j)).abs() <= 1e-5, "({i},{j}) fd {fd} vs {}", g.get(i, j));
            }
        }
    }

    #[test]
    fn gradient_is_one_lipschitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let loss = MaskedQuadraticLoss::new(random_obs(&mut rng, 5, 4, 0.5));
        for _ in 0..50 {
            let a = random(&mut rng, 5, 4);
            let b = random(&mut rng, 5, 4);
            let lhs = (&loss_grad(&a, &loss).unwrap() - &loss_grad(&b, &loss).unwrap()).frobenius_norm();
            assert!(lhs <= LIPSCHITZ * (&a - &b).frobenius_norm() + 1e-12);
            assert!(loss_value(&a, &loss).unwrap() >= 0.0);
        }
    }

    fn two_domain(rng: &mut ChaCha8Rng, n: usize, cols: &[usize], ratio: f64) -> MultiDomainProblem {
        MultiDomainProblem::new(cols.iter().map(|&c| random_obs(rng, n, c, ratio)).collect()).unwrap()
    }

    #[test]
    fn multi_value_matches_brute_force_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let prob = two_domain(&mut rng, 6, &[4, 5], 0.5);
        let x0 = random(&mut rng, 6, 9);
        let xs = vec![random(&mut rng, 6, 4), random(&mut rng, 6, 5)];

        // Independent oracle: walk every cell of every domain and test membership.
        let mut oracle = 0.0;
        for (k, cols) in [4usize, 5].iter().enumerate() {
            let obs = prob.observations(k + 1);
            let off = if k == 0 { 0 } else { 4 };
            for i in 0..6 {
                for j in 0..*cols {
                    if let Some(&(_, _, y)) = obs.entries().iter().find(|e| e.0 == i && e.1 == j) {
                        let pred = x0.get(i, off + j) + xs[k].get(i, j);
                        oracle += 0.5 * (pred - y) * (pred - y);
                    }
                }
            }
        }
        let v = multi_loss_value(&x0, &xs, &prob).unwrap();
        assert!((v - oracle).abs() <= 1e-12, "{v} vs {oracle}");
    }

    #[test]
    fn multi_reduces_to_single_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let obs = random_obs(&mut rng, 4, 3, 0.7);
        let prob = MultiDomainProblem::new(vec![obs.clone()]).unwrap();
        let x1 = random(&mut rng, 4, 3);
        let x0 = DenseMatrix::zeros(4, 3);
        let single = MaskedQuadraticLoss::new(obs.clone());
        let xs = vec![x1.clone()];
        assert_eq!(
            multi_loss_value(&x0, &xs, &prob).unwrap(),
            loss_value(&x1, &single).unwrap()
        );
        let g0 = multi_loss_grad_block(0, &x0, &xs, &prob).unwrap();
        let g1 = multi_loss_grad_block(1, &x0, &xs, &prob).unwrap();
        assert_eq!(g0, g1);
        assert_eq!(g1, loss_grad(&x1, &single).unwrap());

        let ys = vec![obs.observed_matrix()];
        assert_eq!(multi_loss_value(&x0, &ys, &prob).unwrap(), 0.0);
    }

    #[test]
    fn multi_gradient_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let prob = two_domain(&mut rng, 5, &[3, 3], 0.6);
        let x0 = random(&mut rng, 5, 6);
        let xs = vec![random(&mut rng, 5, 3), random(&mut rng, 5, 3)];
        let g0 = multi_loss_grad_block(0, &x0, &xs, &prob).unwrap();
        for d in 1..=2 {
            let gd = multi_loss_grad_block(d, &x0, &xs, &prob).unwrap();
            assert_eq!(g0.column_block(prob.offset(d), 3), gd);
        }
        assert!(multi_loss_grad_block(3, &x0, &xs, &prob).is_err());

        // Finite differences on every block.
        let h = 1e-6;
        let f = |x0: &DenseMatrix, xs: &[DenseMatrix]| multi_loss_value(x0, xs, &prob).unwrap();
        for i in 0..5 {
            for j in 0..6 {
                let (mut p, mut m) = (x0.clone(), x0.clone());
                p.set(i, j, x0.get(i, j) + h);
                m.set(i, j, x0.get(i, j) - h);
                let fd = (f(&p, &xs) - f(&m, &xs)) / (2.0 * h);
                assert!((fd - g0.get(i, j)).abs() <= 1e-5);
            }
        }
        for d in 1..=2 {
            let gd = multi_loss_grad_block(d, &x0, &xs, &prob).unwrap();
            for i in 0..5 {
                for j in 0..3 {
                    let (mut p, mut m) = (xs.clone(), xs.clone());
                    p[d - 1].set(i, j, xs[d - 1].get(i, j) + h);
                    m[d - 1].set(i, j, xs[d - 1].get(i, j) - h);
                    let fd = (f(&x0, &p) - f(&x0, &m)) / (2.0 * h);
                    assert!((fd - gd.get(i, j)).abs() <= 1e-5);
                }
            }
        }
    }

    #[test]
    fn zero_residual_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let prob = two_domain(&mut rng, 4, &[2, 3], 0.8);
        let x0 = DenseMatrix::zeros(4, 5);
        let xs: Vec<_> = prob.all_observations().iter().map(|o| o.observed_matrix()).collect();
        for d in 0..=2 {
            let g = multi_loss_grad_block(d, &x0, &xs, &prob).unwrap();
            assert_eq!(g.frobenius_norm(), 0.0);
        }
    }

    #[test]
    fn problem_validation() {
        assert!(MultiDomainProblem::new(vec![]).is_err());
        let a = ObservationSet::new(3, 2, vec![]).unwrap();
        let b = ObservationSet::new(4, 2, vec![]).unwrap();
        assert!(MultiDomainProblem::new(vec![a.clone(), b]).is_err());
        let prob = MultiDomainProblem::new(vec![a.clone(), a]).unwrap();
        assert_eq!(prob.block_shape(0), (3, 4));
        assert_eq!(prob.offset(2), 2);
        assert!(prob.check_blocks(&DenseMatrix::zeros(3, 4), &[DenseMatrix::zeros(3, 2)]).is_err());
    }
}
