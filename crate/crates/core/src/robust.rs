//! Risk objectives over a vector of per-sample losses.
//!
//! Ordinary training minimizes the mean loss. The functions here give the
//! tail-sensitive alternatives: the empirical percentile itself, the
//! log-sum-exp relaxation `(1/β)·log Σ exp(β·L_i)`, its Chernoff upper bound on
//! the α-percentile, and the dual view as a KL-regularized maximization over
//! sample weights `q` on the simplex, whose maximizer is `softmax(β·L)`.
//!
//! All aggregations of `exp` go through max-subtraction, so `β = 100` with
//! losses of order 10 is fine. Logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::error::{DroError, Result};

/// Tolerance on `Σ q_i = 1` accepted by [`WeightVector::new`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

/// Finite, non-empty per-sample losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LossVector(Vec<f64>);

impl LossVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(DroError::invalid("loss vector is empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DroError::invalid(format!(
                "loss at index {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(LossVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for LossVector {
    type Error = DroError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        LossVector::new(values)
    }
}

impl From<LossVector> for Vec<f64> {
    fn from(v: LossVector) -> Self {
        v.0
    }
}

/// A probability vector on the unit simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(DroError::invalid("weight vector is empty"));
        }
        if let Some(i) = probabilities.iter().position(|&p| !p.is_finite() || p < 0.0) {
            return Err(DroError::invalid(format!(
                "weight at index {i} is not a probability ({})",
                probabilities[i]
            )));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(DroError::invalid(format!("weights sum to {sum}, not 1")));
        }
        Ok(WeightVector(probabilities))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(DroError::invalid("weight vector is empty"));
        }
        Ok(WeightVector(vec![1.0 / n as f64; n]))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Temperature `beta` and percentile level `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustConfig {
    pub beta: f64,
    pub alpha: f64,
}

impl RobustConfig {
    pub fn new(beta: f64, alpha: f64) -> Result<Self> {
        let config = RobustConfig { beta, alpha };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        check_alpha(self.alpha)
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(DroError::invalid(format!("beta must be positive and finite, got {beta}")))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(DroError::invalid(format!("alpha must lie in (0, 1], got {alpha}")))
    }
}

/// Average loss (the empirical risk).
pub fn mean_loss(losses: &LossVector) -> f64 {
    losses.0.iter().sum::<f64>() / losses.len() as f64
}

/// 1-based nearest rank `max(1, ceil(alpha·n))`.
///
/// The product is nudged down by a few ulps so that e.g. `0.1 * 30` (which is
/// `3.0000000000000004` in binary) still yields rank 3.
pub(crate) fn nearest_rank(alpha: f64, n: usize) -> usize {
    let raw = alpha * n as f64;
    let k = (raw - raw.abs() * 4.0 * f64::EPSILON).ceil() as usize;
    k.clamp(1, n)
}

/// Lower-tail nearest-rank percentile: the `ceil(alpha·n)`-th smallest score.
pub fn empirical_percentile(scores: &[f64], alpha: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(DroError::invalid("cannot take a percentile of an empty list"));
    }
    check_alpha(alpha)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(DroError::invalid("scores contain NaN"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[nearest_rank(alpha, sorted.len()) - 1])
}

/// The log-sum-exp relaxation `(1/β)·log Σ_i exp(β·L_i)`.
///
/// Always lies in `[max L, max L + ln(n)/β]`.
pub fn lse_robust_loss(losses: &LossVector, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let m = losses.max();
    let tail: f64 = losses.0.iter().map(|&l| (beta * (l - m)).exp()).sum();
    Ok(m + tail.ln() / beta)
}

/// Chernoff upper bound on the α-percentile of the loss:
/// `(1/β)·log((1/(α·n))·Σ exp(β·L_i))`.
///
/// At most a fraction `α` of the losses can be `>=` this value.
pub fn chernoff_percentile_bound(losses: &LossVector, config: &RobustConfig) -> Result<f64> {
    config.validate()?;
    let lse = lse_robust_loss(losses, config.beta)?;
    Ok(lse - (config.alpha * losses.len() as f64).ln() / config.beta)
}

/// Closed-form maximizer of [`dro_inner_objective`]: `q* = softmax(β·L)`.
pub fn optimal_weights(losses: &LossVector, beta: f64) -> Result<WeightVector> {
    check_beta(beta)?;
    Ok(WeightVector(softmax_scaled(losses.as_slice(), beta)))
}

/// `softmax(beta·xs)` with max-subtraction. Adding a constant to every entry
/// leaves the shifted exponents, and hence the result, unchanged whenever the
/// subtraction is exact.
pub(crate) fn softmax_scaled(xs: &[f64], beta: f64) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = xs.iter().map(|&x| (beta * (x - m)).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
    out
}

/// `D_KL(q ‖ p) = Σ q_i·log(q_i/p_i)`, with `0·log(0/p) = 0`.
pub fn kl_divergence(q: &WeightVector, p: &WeightVector) -> Result<f64> {
    if q.len() != p.len() {
        return Err(DroError::invalid(format!(
            "length mismatch: q has {}, p has {}",
            q.len(),
            p.len()
        )));
    }
    let mut total = 0.0;
    for (i, (&qi, &pi)) in q.0.iter().zip(&p.0).enumerate() {
        if qi == 0.0 {
            continue;
        }
        if pi == 0.0 {
            return Err(DroError::invalid(format!(
                "q has mass {qi} at index {i} where p has none"
            )));
        }
        total += qi * (qi / pi).ln();
    }
    // Rounding can produce tiny negatives when q ≈ p.
    Ok(total.max(0.0))
}

/// Adversary objective `Σ q_i·L_i − (1/β)·D_KL(q ‖ uniform)`.
pub fn dro_inner_objective(losses: &LossVector, q: &WeightVector, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if q.len() != losses.len() {
        return Err(DroError::invalid(format!(
            "length mismatch: {} losses, {} weights",
            losses.len(),
            q.len()
        )));
    }
    let n = losses.len() as f64;
    let mut expected = 0.0;
    let mut kl = 0.0;
    for (&l, &qi) in losses.0.iter().zip(&q.0) {
        expected += qi * l;
        if qi > 0.0 {
            kl += qi * (qi * n).ln();
        }
    }
    Ok(expected - kl.max(0.0) / beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lv(v: &[f64]) -> LossVector {
        LossVector::new(v.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Independent evaluation of `log Σ exp(β·L_i)`: fold pairs with
    /// `log(e^a + e^b) = max + ln1p(e^-|a-b|)`, never forming a global max.
    fn pairwise_lse_oracle(losses: &[f64], beta: f64) -> f64 {
        let mut terms: Vec<f64> = losses.iter().map(|l| beta * l).collect();
        while terms.len() > 1 {
            terms = terms
                .chunks(2)
                .map(|c| match c {
                    [a, b] => a.max(*b) + (-(a - b).abs()).exp().ln_1p(),
                    [a] => *a,
                    _ => unreachable!(),
                })
                .collect();
        }
        terms[0] / beta
    }

    #[test]
    fn loss_vector_rejects_bad_input() {
        assert!(LossVector::new(vec![]).is_err());
        assert!(LossVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(LossVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn weight_vector_invariants() {
        assert!(WeightVector::new(vec![0.5, 0.5]).is_ok());
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![-0.1, 1.1]).is_err());
        assert!(WeightVector::new(vec![]).is_err());
    }

    #[test]
    fn mean_loss_examples() {
        assert_eq!(mean_loss(&lv(&[2.0, 4.0])), 3.0);
        assert_eq!(mean_loss(&lv(&[-7.25])), -7.25);
        assert_eq!(mean_loss(&lv(&[0.0, 0.0, 0.0])), 0.0);
    }

    #[test]
    fn percentile_examples() {
        let grid: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(empirical_percentile(&grid, 0.05).unwrap(), 5.0);
        assert_eq!(empirical_percentile(&[7.0], 0.3).unwrap(), 7.0);
        assert_eq!(empirical_percentile(&[7.0], 1.0).unwrap(), 7.0);
        assert_eq!(empirical_percentile(&[0.3, 0.1, 0.2], 0.5).unwrap(), 0.2);
    }

    #[test]
    fn percentile_errors() {
        assert!(empirical_percentile(&[], 0.5).is_err());
        assert!(empirical_percentile(&[1.0], 0.0).is_err());
        assert!(empirical_percentile(&[1.0], 1.5).is_err());
        assert!(empirical_percentile(&[1.0], f64::NAN).is_err());
    }

    #[test]
    fn nearest_rank_survives_representation_error() {
        assert_eq!(nearest_rank(0.1, 30), 3);
        assert_eq!(nearest_rank(0.1, 31), 4);
        assert_eq!(nearest_rank(0.05, 1), 1);
        assert_eq!(nearest_rank(1.0, 98), 98);
        for n in 1..500 {
            for pct in [5usize, 10, 25, 50] {
                assert_eq!(nearest_rank(pct as f64 / 100.0, n), ((pct * n).div_ceil(100)).max(1));
            }
        }
    }

    #[test]
    fn lse_examples() {
        let n = 7;
        let c = 0.4;
        for beta in [0.5, 1.0, 100.0] {
            let v = lse_robust_loss(&lv(&vec![c; n]), beta).unwrap();
            assert!(close(v, c + (n as f64).ln() / beta, 1e-12));
        }
        let v = lse_robust_loss(&lv(&[0.0, 3f64.ln()]), 1.0).unwrap();
        assert!(close(v, 4f64.ln(), 1e-12));
        assert!(close(v, 1.386294, 1e-6));
    }

    #[test]
    fn lse_matches_pairwise_oracle_at_large_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let losses: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..10.0)).collect();
            let l = lv(&losses);
            let v = lse_robust_loss(&l, 100.0).unwrap();
            let m = l.max();
            assert!(v >= m && v <= m + 50f64.ln() / 100.0);
            assert!(close(v, pairwise_lse_oracle(&losses, 100.0), 1e-9));
        }
    }

    #[test]
    fn beta_must_be_positive() {
        let l = lv(&[1.0]);
        assert!(lse_robust_loss(&l, 0.0).is_err());
        assert!(lse_robust_loss(&l, -1.0).is_err());
        assert!(optimal_weights(&l, 0.0).is_err());
        assert!(RobustConfig::new(1.0, 0.0).is_err());
        assert!(RobustConfig::new(0.0, 0.5).is_err());
        assert!(chernoff_percentile_bound(&l, &RobustConfig { beta: 1.0, alpha: 2.0 }).is_err());
    }

    #[test]
    fn chernoff_examples() {
        let cfg = RobustConfig::new(3.0, 1.0).unwrap();
        assert!(close(chernoff_percentile_bound(&lv(&[0.7]), &cfg).unwrap(), 0.7, 1e-12));
        let cfg = RobustConfig::new(10.0, 0.05).unwrap();
        let v = chernoff_percentile_bound(&lv(&[0.2; 40]), &cfg).unwrap();
        assert!(close(v, 0.2 + (1.0f64 / 0.05).ln() / 10.0, 1e-12));
    }

    #[test]
    fn optimal_weights_examples() {
        let q = optimal_weights(&lv(&[0.3, 0.3, 0.3]), 5.0).unwrap();
        for &p in q.as_slice() {
            assert!(close(p, 1.0 / 3.0, 1e-15));
        }
        let q = optimal_weights(&lv(&[0.0, 3f64.ln()]), 1.0).unwrap();
        assert!(close(q.as_slice()[0], 0.25, 1e-15));
        assert!(close(q.as_slice()[1], 0.75, 1e-15));
    }

    #[test]
    fn kl_examples() {
        let u = WeightVector::uniform(4).unwrap();
        assert_eq!(kl_divergence(&u, &u).unwrap(), 0.0);
        let one_hot = WeightVector::new(vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(close(kl_divergence(&one_hot, &u).unwrap(), 4f64.ln(), 1e-15));
        let q = WeightVector::new(vec![0.25, 0.75]).unwrap();
        let p = WeightVector::uniform(2).unwrap();
        let expected = 0.25 * 0.5f64.ln() + 0.75 * 1.5f64.ln();
        assert!(close(kl_divergence(&q, &p).unwrap(), expected, 1e-15));
        assert!(close(expected, 0.130812, 1e-6));
    }

    #[test]
    fn kl_errors() {
        let q = WeightVector::new(vec![0.5, 0.5]).unwrap();
        let p = WeightVector::new(vec![1.0, 0.0]).unwrap();
        assert!(kl_divergence(&q, &p).is_err());
        // q = 0 where p = 0 is fine
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        assert!(kl_divergence(&q, &WeightVector::uniform(3).unwrap()).is_err());
    }

    #[test]
    fn dro_inner_examples() {
        let l = lv(&[0.1, 0.9, 0.4, 0.2]);
        let beta = 2.5;
        let u = WeightVector::uniform(4).unwrap();
        assert!(close(dro_inner_objective(&l, &u, beta).unwrap(), mean_loss(&l), 1e-15));
        let hot = WeightVector::new(vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let v = dro_inner_objective(&l, &hot, beta).unwrap();
        assert!(close(v, 0.9 - 4f64.ln() / beta, 1e-15));
        let q = optimal_weights(&l, beta).unwrap();
        let v = dro_inner_objective(&l, &q, beta).unwrap();
        assert!(close(v, lse_robust_loss(&l, beta).unwrap() - 4f64.ln() / beta, 1e-12));
        assert!(dro_inner_objective(&l, &WeightVector::uniform(3).unwrap(), beta).is_err());
    }

    #[test]
    fn single_sample_is_degenerate_but_defined() {
        let l = lv(&[0.42]);
        assert_eq!(mean_loss(&l), 0.42);
        assert_eq!(lse_robust_loss(&l, 7.0).unwrap(), 0.42);
        assert_eq!(optimal_weights(&l, 7.0).unwrap().as_slice(), &[1.0]);
        let q = WeightVector::uniform(1).unwrap();
        assert_eq!(dro_inner_objective(&l, &q, 7.0).unwrap(), 0.42);
    }

    #[test]
    fn lse_is_non_increasing_in_beta_and_normalized_mean_non_decreasing() {
        let l = lv(&[0.1, 0.5, 0.52, 0.9, 0.3]);
        let n = 5f64.ln();
        let betas = [0.01, 0.1, 1.0, 3.0, 10.0, 100.0, 1e3, 1e4];
        let lse: Vec<f64> = betas.iter().map(|&b| lse_robust_loss(&l, b).unwrap()).collect();
        let normalized: Vec<f64> = betas.iter().zip(&lse).map(|(&b, v)| v - n / b).collect();
        for w in lse.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        for w in normalized.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        assert!(close(*lse.last().unwrap(), 0.9, 1e-3));
        assert!(normalized[0] >= mean_loss(&l) - 1e-12);
    }

    #[test]
    fn shift_is_exact_on_dyadic_losses() {
        let base: Vec<f64> = [3.0, 17.0, 9.0, 1.0].iter().map(|k| k / 64.0).collect();
        let shifted: Vec<f64> = base.iter().map(|l| l + 8.0).collect();
        let q0 = optimal_weights(&lv(&base), 10.0).unwrap();
        let q1 = optimal_weights(&lv(&shifted), 10.0).unwrap();
        assert_eq!(q0, q1);
    }
}
