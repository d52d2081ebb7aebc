//! Prediction scores.

use serde::{Deserialize, Serialize};

use crate::error::{MraError, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(MraError::DimensionMismatch { expected: a, got: b });
    }
    if a == 0 {
        return Err(MraError::InvalidArgument("no prediction pairs".into()));
    }
    Ok(())
}

/// Root mean-square prediction error.
pub fn rmspe(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(pred.len(), actual.len())?;
    let sse: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// CRPS of a normal predictive distribution `N(mean, sd²)` at `actual`.
pub fn crps_normal(mean: f64, sd: f64, actual: f64) -> Result<f64> {
    if !(sd >= 0.0) {
        return Err(MraError::InvalidArgument(format!("negative standard deviation {sd}")));
    }
    if sd == 0.0 {
        return Ok((actual - mean).abs());
    }
    let z = (actual - mean) / sd;
    Ok(sd * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - FRAC_1_SQRT_PI))
}

/// Log density of `N(mean, sd²)` at `actual`.
pub fn normal_log_density(mean: f64, sd: f64, actual: f64) -> f64 {
    let z = (actual - mean) / sd;
    -0.5 * (LN_2PI + z * z) - sd.ln()
}

/// A log-score compared with a reference log-score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeLogScore {
    pub value: f64,
    pub reference: f64,
    /// `value - reference`; negative means worse than the reference.
    pub difference: f64,
    /// `value / reference`.
    pub ratio: f64,
}

pub fn log_score(value: f64, reference: f64) -> RelativeLogScore {
    RelativeLogScore { value, reference, difference: value - reference, ratio: value / reference }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub rmspe: f64,
    pub crps_mean: f64,
    /// Mean log predictive density of the actual values.
    pub log_score: f64,
    pub count: usize,
}

/// Scores Gaussian marginal predictions against actual values.
pub fn score(mean: &[f64], sd: &[f64], actual: &[f64]) -> Result<ScoreReport> {
    check_lengths(mean.len(), actual.len())?;
    check_lengths(mean.len(), sd.len())?;
    let n = mean.len() as f64;
    let mut crps = 0.0;
    let mut ls = 0.0;
    for ((&m, &s), &a) in mean.iter().zip(sd).zip(actual) {
        crps += crps_normal(m, s, a)?;
        ls += normal_log_density(m, s, a);
    }
    Ok(ScoreReport { rmspe: rmspe(mean, actual)?, crps_mean: crps / n, log_score: ls / n, count: mean.len() })
}
