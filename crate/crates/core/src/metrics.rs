//! Recovery quality measures.

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, ObservationSet};

/// PSNR reported for a perfect reconstruction, where the formula diverges.
pub const PSNR_CAP_DB: f64 = 120.0;

const PIXEL_PEAK: f64 = 255.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricKind {
    RelativeError,
    PsnrDb,
    Rmse,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricValue {
    pub kind: MetricKind,
    pub value: f64,
}

/// `‖X − M‖_F / ‖M‖_F`.
pub fn relative_error(x: &DenseMatrix, truth: &DenseMatrix) -> Result<f64> {
    if x.shape() != truth.shape() {
        return Err(Error::dims(truth.shape(), x.shape()));
    }
    let denom = truth.frobenius_norm();
    if denom == 0.0 {
        return Err(Error::InvalidArgument(
            "relative error against an all-zero ground truth".into(),
        ));
    }
    Ok((x - truth).frobenius_norm() / denom)
}

/// `10 log10(255² / MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (PIXEL_PEAK * PIXEL_PEAK / mse).log10()).min(PSNR_CAP_DB)
}

pub fn psnr(recovered: &DenseMatrix, truth: &DenseMatrix) -> Result<f64> {
    if recovered.shape() != truth.shape() {
        return Err(Error::dims(truth.shape(), recovered.shape()));
    }
    let n = (truth.rows() * truth.cols()) as f64;
    Ok(psnr_from_mse((recovered - truth).frobenius_norm_squared() / n))
}

/// PSNR over several channels, averaging the squared error over all of them jointly.
pub fn psnr_channels(recovered: &[DenseMatrix], truth: &[DenseMatrix]) -> Result<f64> {
    if recovered.len() != truth.len() || truth.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "channel count mismatch: {} recovered, {} truth",
            recovered.len(),
            truth.len()
        )));
    }
    let mut sse = 0.0;
    let mut n = 0usize;
    for (r, t) in recovered.iter().zip(truth) {
        if r.shape() != t.shape() {
            return Err(Error::dims(t.shape(), r.shape()));
        }
        sse += (r - t).frobenius_norm_squared();
        n += t.rows() * t.cols();
    }
    Ok(psnr_from_mse(sse / n as f64))
}

/// Root mean square error over the observed entries.
pub fn rmse(x: &DenseMatrix, obs: &ObservationSet) -> Result<f64> {
    obs.check_shape(x)?;
    if obs.is_empty() {
        return Err(Error::InvalidArgument("rmse over an empty observation set".into()));
    }
    let sse: f64 = obs.entries().iter().map(|&(i, j, y)| (x.get(i, j) - y).powi(2)).sum();
    Ok((sse / obs.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> DenseMatrix {
        DenseMatrix::from_row_major(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn relative_error_examples() {
        let truth = m(2, 2, &[1.0, -2.0, 3.0, 0.5]);
        assert_eq!(relative_error(&truth, &truth).unwrap(), 0.0);
        assert_eq!(relative_error(&DenseMatrix::zeros(2, 2), &truth).unwrap(), 1.0);
        assert_eq!(relative_error(&truth.scaled(2.0), &truth).unwrap(), 1.0);
        assert!(relative_error(&truth, &DenseMatrix::zeros(2, 2)).is_err());
        assert!(relative_error(&DenseMatrix::zeros(1, 2), &truth).is_err());
    }

    #[test]
    fn relative_error_is_scale_invariant() {
        let x = m(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let t = m(2, 3, &[1.5, 2.0, 2.0, 4.0, 5.5, 6.0]);
        let base = relative_error(&x, &t).unwrap();
        for alpha in [2.0, 0.5, -4.0, 1024.0] {
            assert_eq!(relative_error(&x.scaled(alpha), &t.scaled(alpha)).unwrap(), base);
        }
    }

    #[test]
    fn psnr_examples() {
        let black = DenseMatrix::zeros(3, 3);
        let white = DenseMatrix::from_fn(3, 3, |_, _| 255.0);
        assert_eq!(psnr(&black, &white).unwrap(), 0.0);
        let off_by_one = DenseMatrix::from_fn(3, 3, |_, _| 1.0);
        assert!((psnr(&off_by_one, &black).unwrap() - 48.1308).abs() < 1e-4);
        assert_eq!(psnr(&white, &white).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn psnr_decreases_with_mse() {
        let grid: Vec<f64> = (1..200).map(|k| k as f64 * 0.37).collect();
        for w in grid.windows(2) {
            assert!(psnr_from_mse(w[0]) > psnr_from_mse(w[1]));
        }
    }

    #[test]
    fn psnr_channels_pool_errors() {
        let zero = DenseMatrix::zeros(2, 2);
        let one = DenseMatrix::from_fn(2, 2, |_, _| 1.0);
        let three = DenseMatrix::from_fn(2, 2, |_, _| 3.0);
        // Channel MSEs 1 and 9 pool to 5.
        let v = psnr_channels(&[one, three], &[zero.clone(), zero]).unwrap();
        assert!((v - psnr_from_mse(5.0)).abs() < 1e-12);
    }

    #[test]
    fn rmse_examples() {
        let y = ObservationSet::new(2, 2, vec![(0, 0, 1.0)]).unwrap();
        assert_eq!(rmse(&y.observed_matrix(), &y).unwrap(), 0.0);
        assert_eq!(rmse(&DenseMatrix::from_fn(2, 2, |_, _| 4.0), &y).unwrap(), 3.0);

        let y = ObservationSet::new(2, 2, vec![(0, 0, 0.0), (0, 1, 0.0), (1, 0, 0.0), (1, 1, 0.0)]).unwrap();
        let x = m(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        assert_eq!(rmse(&x, &y).unwrap(), 1.0);

        assert!(rmse(&x, &ObservationSet::new(2, 2, vec![]).unwrap()).is_err());
    }

    #[test]
    fn rmse_over_full_set_is_scaled_frobenius() {
        let y = m(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = m(2, 3, &[0.0, 2.5, 3.0, 3.0, 5.0, 9.0]);
        let full = ObservationSet::full(&y);
        let expected = (&x - &y).frobenius_norm() / 6f64.sqrt();
        assert!((rmse(&x, &full).unwrap() - expected).abs() <= 1e-12);
    }
}
