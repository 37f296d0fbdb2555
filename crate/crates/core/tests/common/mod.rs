#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rankmin::solver::IterateTrace;
use rankmin::{DenseMatrix, MaskedQuadraticLoss, ObservationSet};

const LIPSCHITZ: f64 = 1.0;

fn allowance(f: f64) -> f64 {
    64.0 * f64::EPSILON * f.abs()
}

/// Re-checks the descent, sufficient-decrease, subgradient and rate
/// inequalities from a finished trace. `extra_subgrad` is the reweighting
/// term added to `L + 1/η` (zero for fixed weights, `None` to skip).
pub fn audit_trace(trace: &IterateTrace, extra_subgrad: Option<f64>) {
    let rows = &trace.records;
    assert_eq!(rows[0].iter, 0);
    let mut first_unit = None;
    for pair in rows.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        assert_eq!(cur.iter, prev.iter + 1);
        let slack = allowance(prev.objective);
        if cur.tau == 1.0 {
            first_unit.get_or_insert(prev.iter);
            assert!(
                cur.objective <= prev.objective + 1e-10 + slack,
                "iteration {}: objective rose from {} to {}",
                cur.iter,
                prev.objective,
                cur.objective
            );
            let rho = (1.0 / cur.step - LIPSCHITZ).max(0.0);
            assert!(
                prev.objective - cur.objective >= rho / 2.0 * cur.step_gap.powi(2) - 1e-8 - slack,
                "iteration {}: insufficient decrease",
                cur.iter
            );
        }
        if let Some(extra) = extra_subgrad {
            let bound = (LIPSCHITZ + 1.0 / cur.step + extra) * cur.step_gap + 1e-8;
            assert!(
                cur.subgrad_residual <= bound,
                "iteration {}: subgradient {} above {bound}",
                cur.iter,
                cur.subgrad_residual
            );
        }
    }
    let Some(start) = first_unit else { return };
    let tail = &rows[start..];
    let t = (tail.len() - 1) as f64;
    if t == 0.0 {
        return;
    }
    let rho = tail[1..]
        .iter()
        .map(|r| 1.0 / r.step - LIPSCHITZ)
        .fold(f64::INFINITY, f64::min);
    if rho <= 0.0 {
        return;
    }
    let min_gap2 = tail[1..].iter().map(|r| r.step_gap.powi(2)).fold(f64::INFINITY, f64::min);
    let (f0, ft) = (tail[0].objective, tail.last().unwrap().objective);
    assert!(
        min_gap2 <= 2.0 * (f0 - ft) / (rho * t) + 1e-12 + allowance(f0),
        "rate surrogate violated: {min_gap2} > 2({f0} - {ft})/({rho}·{t})"
    );
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Product of two Gaussian-ish factors, observed on a Bernoulli mask.
pub fn low_rank_loss(seed: u64, rows: usize, cols: usize, rank: usize, ratio: f64) -> MaskedQuadraticLoss {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_matrix(&mut rng, rows, rank);
    let b = random_matrix(&mut rng, rank, cols);
    let m = DenseMatrix::from(a.as_matrix() * b.as_matrix());
    let mut entries = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if rng.random::<f64>() < ratio {
                entries.push((i, j, 3.0 * m.get(i, j)));
            }
        }
    }
    MaskedQuadraticLoss::new(ObservationSet::new(rows, cols, entries).unwrap())
}
