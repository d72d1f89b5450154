//! Decision operating characteristics from emulated Beta parameters, and
//! the accuracy metrics used to score an emulator against simulation.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::emulator::PredictiveDraws;
use crate::error::{Error, Result};
use crate::special::{beta_inc, beta_inc_upper};
use crate::trial_models::{PiSample, Theta};
#[cfg(not(feature = "std"))]
use num_traits::Float;

/// `P(π > u)` for `π ~ Beta(a, b)`.
pub fn beta_exceedance(a: f64, b: f64, u: f64) -> f64 {
    beta_inc_upper(a, b, u)
}

/// `P(π ≤ u)` for `π ~ Beta(a, b)`.
pub fn beta_cdf(a: f64, b: f64, u: f64) -> f64 {
    beta_inc(a, b, u)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    /// `P(π > U)`: probability of stopping for superiority.
    Superiority,
    /// `P(π < ℓ)`: probability of stopping for futility.
    Futility,
}

impl Statistic {
    pub fn as_str(self) -> &'static str {
        match self {
            Statistic::Superiority => "superiority",
            Statistic::Futility => "futility",
        }
    }

    fn phi(self, a: f64, b: f64, threshold: f64) -> f64 {
        match self {
            Statistic::Superiority => beta_exceedance(a, b, threshold),
            Statistic::Futility => beta_cdf(a, b, threshold),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocEstimate {
    pub theta: Theta,
    pub statistic: Statistic,
    pub threshold: f64,
    /// Mean of the `φ_k`.
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub draws: Vec<f64>,
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Maps each predictive `(a_k, b_k)` to `φ_k` and summarizes by the mean
/// and the empirical 2.5% / 97.5% quantiles. The interval is widened to
/// contain the mean when the `φ_k` are so skewed that it falls outside.
pub fn doc_estimate(draws: &PredictiveDraws, statistic: Statistic, threshold: f64) -> Result<DocEstimate> {
    if draws.pairs.is_empty() {
        return Err(Error::invalid("no predictive draws"));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(alloc::format!("threshold {threshold} outside (0, 1)")));
    }
    let phi: Vec<f64> = draws
        .pairs
        .iter()
        .map(|&(a, b)| statistic.phi(a, b, threshold))
        .collect();
    let mut sorted = phi.clone();
    sorted.sort_by(f64::total_cmp);
    let (first, last) = (sorted[0], sorted[sorted.len() - 1]);
    let point = (phi.iter().sum::<f64>() / phi.len() as f64).clamp(first, last);
    let ci_low = quantile_sorted(&sorted, 0.025).min(point);
    let ci_high = quantile_sorted(&sorted, 0.975).max(point);
    Ok(DocEstimate {
        theta: draws.theta,
        statistic,
        threshold,
        point,
        ci_low,
        ci_high,
        draws: phi,
    })
}

/// Fraction of simulated `π` strictly above `u`.
pub fn mc_power(sample: &PiSample, u: f64) -> Result<f64> {
    exceed_fraction(&sample.draws, u)
}

/// Fraction of simulated `π` strictly below `l`.
pub fn mc_futility(sample: &PiSample, l: f64) -> Result<f64> {
    if sample.draws.is_empty() {
        return Err(Error::invalid("no simulated draws"));
    }
    let n = sample.draws.iter().filter(|&&v| v < l).count();
    Ok(n as f64 / sample.draws.len() as f64)
}

pub fn exceed_fraction(draws: &[f64], u: f64) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::invalid("no simulated draws"));
    }
    Ok(draws.iter().filter(|&&v| v > u).count() as f64 / draws.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub rmse: f64,
    pub bias: f64,
    pub psd: f64,
}

/// RMSE, bias and posterior standard deviation (divisor `K`) of the `φ_k`
/// against the simulated value.
pub fn sim_metrics(doc: &DocEstimate, phi_true: f64) -> Result<SimMetrics> {
    metrics_from_draws(&doc.draws, phi_true)
}

pub fn metrics_from_draws(phi: &[f64], phi_true: f64) -> Result<SimMetrics> {
    if phi.is_empty() {
        return Err(Error::invalid("no draws"));
    }
    let k = phi.len() as f64;
    let mean = phi.iter().sum::<f64>() / k;
    let mse = phi.iter().map(|v| (v - phi_true) * (v - phi_true)).sum::<f64>() / k;
    let var = phi.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k;
    Ok(SimMetrics {
        rmse: mse.sqrt(),
        bias: mean - phi_true,
        psd: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial_models::BinarySpec;
    use alloc::vec;

    fn pd(pairs: Vec<(f64, f64)>) -> PredictiveDraws {
        PredictiveDraws {
            theta: Theta::Binary(BinarySpec::new(0.4, 0.8).unwrap()),
            pairs,
            rejection_count: 0,
        }
    }

    #[test]
    fn uniform_pairs() {
        let d = pd(vec![(1.0, 1.0); 50]);
        let sup = doc_estimate(&d, Statistic::Superiority, 0.95).unwrap();
        assert!((sup.point - 0.05).abs() < 1e-12);
        assert_eq!(sup.ci_low, sup.ci_high);
        let fut = doc_estimate(&d, Statistic::Futility, 0.05).unwrap();
        assert!((fut.point - 0.05).abs() < 1e-12);
    }

    #[test]
    fn interval_contains_point_when_skewed() {
        let mut pairs = vec![(1.0, 1e4); 98];
        pairs.push((1e4, 1.0));
        pairs.push((1e4, 1.0));
        let e = doc_estimate(&pd(pairs), Statistic::Superiority, 0.5).unwrap();
        assert!(e.ci_low <= e.point && e.point <= e.ci_high);
    }

    #[test]
    fn quantile_type7() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert!((quantile_sorted(&s, 0.5) - 2.5).abs() < 1e-15);
        assert_eq!(quantile_sorted(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(doc_estimate(&pd(vec![]), Statistic::Superiority, 0.9).is_err());
        assert!(metrics_from_draws(&[], 0.1).is_err());
        assert!(exceed_fraction(&[], 0.1).is_err());
    }
}
