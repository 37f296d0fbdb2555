//! Spectral penalties and the singular value shrinkage operator.
//!
//! Two families are supported: a weighted sum of singular values with
//! non-descending weights (plain nuclear norm and truncated nuclear norm are
//! presets of it), and the smoothed Schatten-p surrogate `Σ (σ_i + ε)^p`,
//! which the reweighted solvers majorize by its tangent at the current iterate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{thin_svd, DenseMatrix, SvdFactors};

/// Non-descending, non-negative weights, one per singular value.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weights must be finite and non-negative, found {w}"
            )));
        }
        if let Some(i) = weights.windows(2).position(|p| p[0] > p[1]) {
            return Err(Error::InvalidArgument(format!(
                "weights must be non-descending, but w[{i}] = {} > w[{}] = {}",
                weights[i],
                i + 1,
                weights[i + 1]
            )));
        }
        Ok(WeightVector(weights))
    }

    pub fn constant(len: usize, value: f64) -> Result<Self> {
        WeightVector::new(vec![value; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> WeightVector {
        WeightVector(self.0.iter().map(|w| w * factor).collect())
    }
}

/// Rational exponent `p = num / den` with `0 < p < 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exponent {
    num: u64,
    den: u64,
}

impl Exponent {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if num == 0 || den == 0 || num >= den {
            return Err(Error::InvalidArgument(format!(
                "exponent {num}/{den} is not in (0, 1)"
            )));
        }
        Ok(Exponent { num, den })
    }

    pub fn numerator(&self) -> u64 {
        self.num
    }

    pub fn denominator(&self) -> u64 {
        self.den
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Regularizer description, as it appears in config files.
///
/// ```json
/// {"variant":"weighted","weights":[0.0,1.0,1.0]}
/// {"variant":"nuclear","lambda":2.5}
/// {"variant":"truncated","r":8,"lambda":5.0}
/// {"variant":"schatten","p_num":1,"p_den":2,"eps":0.01}
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum PenaltySpec {
    Weighted { weights: Vec<f64> },
    Nuclear { lambda: f64 },
    /// Zero weight on the `r` largest singular values, `lambda` on the rest.
    Truncated { r: usize, lambda: f64 },
    Schatten { p_num: u64, p_den: u64, eps: f64 },
}

impl PenaltySpec {
    pub fn schatten(p: Exponent, eps: f64) -> Self {
        PenaltySpec::Schatten {
            p_num: p.numerator(),
            p_den: p.denominator(),
            eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PenaltySpec::Weighted { ref weights } => WeightVector::new(weights.clone()).map(|_| ()),
            PenaltySpec::Nuclear { lambda } | PenaltySpec::Truncated { lambda, .. } => {
                if lambda.is_finite() && lambda >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!("lambda must be >= 0, found {lambda}")))
                }
            }
            PenaltySpec::Schatten { .. } => self.schatten_params().map(|_| ()),
        }
    }

    pub fn is_reweighted(&self) -> bool {
        matches!(self, PenaltySpec::Schatten { .. })
    }

    /// `(p, ε)` for the Schatten variant, validated.
    pub fn schatten_params(&self) -> Result<(Exponent, f64)> {
        match *self {
            PenaltySpec::Schatten { p_num, p_den, eps } => {
                let p = Exponent::new(p_num, p_den)?;
                if !(eps.is_finite() && eps > 0.0) {
                    return Err(Error::InvalidArgument(format!("eps must be > 0, found {eps}")));
                }
                Ok((p, eps))
            }
            _ => Err(Error::InvalidArgument(
                "expected a schatten penalty".into(),
            )),
        }
    }

    /// Fixed weights for `k` singular values, or an error for the reweighted variant.
    pub fn weights(&self, k: usize) -> Result<WeightVector> {
        match *self {
            PenaltySpec::Weighted { ref weights } => {
                if weights.len() != k {
                    return Err(Error::DimensionMismatch {
                        expected: format!("{k} weights"),
                        found: format!("{} weights", weights.len()),
                    });
                }
                WeightVector::new(weights.clone())
            }
            PenaltySpec::Nuclear { lambda } => {
                self.validate()?;
                WeightVector::constant(k, lambda)
            }
            PenaltySpec::Truncated { r, lambda } => {
                self.validate()?;
                WeightVector::new((0..k).map(|i| if i < r { 0.0 } else { lambda }).collect())
            }
            PenaltySpec::Schatten { .. } => Err(Error::InvalidArgument(
                "the schatten penalty has no fixed weights; use the reweighted solvers".into(),
            )),
        }
    }
}

/// `g` evaluated on a singular value vector.
pub fn penalty_value(sv: &[f64], spec: &PenaltySpec) -> Result<f64> {
    match *spec {
        PenaltySpec::Weighted { ref weights } => {
            if weights.len() != sv.len() {
                return Err(Error::DimensionMismatch {
                    expected: format!("{} weights", sv.len()),
                    found: format!("{} weights", weights.len()),
                });
            }
            Ok(weights.iter().zip(sv).map(|(w, s)| w * s.abs()).sum())
        }
        PenaltySpec::Nuclear { lambda } => Ok(lambda * sv.iter().map(|s| s.abs()).sum::<f64>()),
        PenaltySpec::Truncated { r, lambda } => {
            Ok(lambda * sv.iter().skip(r).map(|s| s.abs()).sum::<f64>())
        }
        PenaltySpec::Schatten { p_num, p_den, eps } => {
            let p = p_num as f64 / p_den as f64;
            Ok(sv.iter().map(|s| (s.abs() + eps).powf(p)).sum())
        }
    }
}

fn check_exponent(p: f64, eps: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("p must lie in (0, 1), found {p}")));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be > 0, found {eps}")));
    }
    Ok(())
}

/// Tangent slopes of `Σ (σ_i + ε)^p`: `w_i = p (σ_i + ε)^(p-1)`.
///
/// Non-increasing `sv` yields non-descending weights; a running maximum guards
/// the invariant against `powf` rounding.
pub fn reweight(sv: &[f64], p: f64, eps: f64) -> Result<WeightVector> {
    check_exponent(p, eps)?;
    let mut weights = Vec::with_capacity(sv.len());
    let mut floor = 0.0f64;
    for s in sv {
        let w = (p * (s.abs() + eps).powf(p - 1.0)).max(floor);
        floor = w;
        weights.push(w);
    }
    WeightVector::new(weights)
}

/// Linearization of `Σ (σ_i + ε)^p` at `anchor`, evaluated at `sv`.
pub fn majorizer_value(sv: &[f64], anchor: &[f64], p: f64, eps: f64) -> Result<f64> {
    check_exponent(p, eps)?;
    if sv.len() != anchor.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} singular values", anchor.len()),
            found: format!("{} singular values", sv.len()),
        });
    }
    let mut value = 0.0;
    for (s, a) in sv.iter().zip(anchor) {
        let base = a.abs() + eps;
        value += base.powf(p) + p * base.powf(p - 1.0) * (s.abs() - a.abs());
    }
    Ok(value)
}

/// Result of a shrinkage step.
#[derive(Clone, Debug)]
pub struct Shrinkage {
    pub x: DenseMatrix,
    /// Factors of `x`: the input's singular vectors with the shrunk values.
    pub factors: SvdFactors,
}

/// Proximal map of `μ Σ w_i σ_i(X)` at `m`: `U diag((σ_i − μ w_i)_+) Vᵀ`.
pub fn shrink(m: &DenseMatrix, weights: &WeightVector, mu: f64) -> Result<Shrinkage> {
    let factors = thin_svd(m)?;
    shrink_factors(factors, weights, mu)
}

/// Shrinkage on an already computed factorization.
pub fn shrink_factors(factors: SvdFactors, weights: &WeightVector, mu: f64) -> Result<Shrinkage> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::InvalidArgument(format!("shrinkage step must be > 0, found {mu}")));
    }
    let k = factors.singular_values.len();
    if weights.len() != k {
        return Err(Error::DimensionMismatch {
            expected: format!("{k} weights"),
            found: format!("{} weights", weights.len()),
        });
    }
    let shrunk: Vec<f64> = factors
        .singular_values
        .iter()
        .zip(weights.as_slice())
        .map(|(s, w)| (s - mu * w).max(0.0))
        .collect();
    let x = factors.compose(&shrunk);
    Ok(Shrinkage {
        x,
        factors: SvdFactors {
            singular_values: shrunk,
            ..factors
        },
    })
}
