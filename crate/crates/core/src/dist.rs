//! Categorical and Gaussian primitives shared by the proposal heads and tests.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{AqlError, Result};
use crate::rng::DetRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Row-wise log-softmax, stabilized by subtracting the row max before
/// exponentiating.
pub fn log_softmax<F: Scalar>(logits: &Tensor<F>) -> Result<Tensor<F>> {
    let cols = logits.cols();
    if cols == 0 {
        return Err(AqlError::Usage("log_softmax over zero columns".into()));
    }
    let mut out = Vec::with_capacity(logits.numel());
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let sum: F = row.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        out.extend(row.iter().map(|&v| v - lse));
    }
    Tensor::from_vec(logits.shape().to_vec(), out)
}

/// Entropy of one normalized log-distribution: `-sum p log p`.
///
/// Fails if the row does not exponentiate-and-sum to 1.
pub fn categorical_entropy<F: Scalar>(log_probs: &[F]) -> Result<F> {
    let total: F = log_probs.iter().map(|&l| l.exp()).sum();
    let tol = F::from_f64_lit(1e-9);
    if (total - F::one()).abs() > tol {
        return Err(AqlError::Usage(format!(
            "log-probabilities sum to {} after exponentiation, not 1",
            total
        )));
    }
    let h: F = log_probs.iter().map(|&l| -(l.exp() * l)).sum();
    // Clamp the tiny negative values that p*log p roundoff can produce.
    Ok(h.max(F::zero()))
}

/// Log-density of a Normal with the given mean and variance.
pub fn gaussian_log_prob<F: Scalar>(x: F, mean: F, variance: F) -> F {
    debug_assert!(variance > F::zero());
    let two = F::from_f64_lit(2.0);
    let tau = F::from_f64_lit(std::f64::consts::TAU); // 2*pi
    let d = x - mean;
    -((tau * variance).ln() + d * d / variance) / two
}

/// Entropy of a Normal with the given variance: `0.5 * ln(2 pi e var)`.
pub fn gaussian_entropy<F: Scalar>(variance: F) -> F {
    let tau_e = F::from_f64_lit(std::f64::consts::TAU * std::f64::consts::E);
    (tau_e * variance).ln() / F::from_f64_lit(2.0)
}

/// Draw an index from a normalized log-distribution by inverse CDF walk.
pub fn sample_categorical<F: Scalar>(log_probs: &[F], rng: &mut DetRng) -> usize {
    let u = F::from_f64_lit(rng.gen::<f64>());
    let mut acc = F::zero();
    for (i, &l) in log_probs.iter().enumerate() {
        acc += l.exp();
        if u < acc {
            return i;
        }
    }
    // Roundoff can leave the cumulative sum a hair under u; take the last bin.
    log_probs.len() - 1
}

/// Draw from a Normal with the given mean and variance.
pub fn sample_gaussian<F: Scalar>(mean: F, variance: F, rng: &mut DetRng) -> F {
    let z: f64 = rng.sample(StandardNormal);
    mean + variance.sqrt() * F::from_f64_lit(z)
}
