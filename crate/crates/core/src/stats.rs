//! Statistical kernels: the standard normal upper tail, the one-tailed
//! z-test of a mean against a threshold, Spearman's rank correlation and the
//! data-driven threshold suggestion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least two samples (or a constant sample), got {0}")]
    InsufficientSample(usize),
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("rank correlation is undefined for a constant series")]
    DegenerateInput,
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Switch-over between the power series and the continued fraction.
const SERIES_LIMIT: f64 = 3.0;

fn normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Upper-tail probability `P(Z >= z)` of the standard normal, i.e.
/// `erfc(z / sqrt 2) / 2`.
///
/// For `0 <= z < 3` the complementary error function is obtained from the
/// all-positive power series `Phi(z) - 1/2 = pdf(z) * sum z^(2k+1) / (2k+1)!!`;
/// beyond that, from Laplace's continued fraction for the Mills ratio
/// `sf(z) = pdf(z) / (z + 1/(z + 2/(z + 3/(z + ...))))`, evaluated backwards.
/// Negative arguments use `sf(z) = 1 - sf(-z)`. Absolute error is below
/// 1e-15 for all finite inputs.
pub fn normal_sf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z < 0.0 {
        return 1.0 - normal_sf(-z);
    }
    if z == f64::INFINITY {
        return 0.0;
    }
    if z < SERIES_LIMIT {
        let z2 = z * z;
        let mut term = z;
        let mut sum = z;
        let mut k = 0.0;
        while term > sum * 1e-17 {
            k += 1.0;
            term *= z2 / (2.0 * k + 1.0);
            sum += term;
        }
        0.5 - normal_pdf(z) * sum
    } else {
        // Depth 120 converges to full precision from z = 3 upward.
        let mut tail = z;
        for k in (1..=120).rev() {
            tail = z + f64::from(k) / tail;
        }
        normal_pdf(z) / tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    RejectNull,
    Inconclusive,
}

/// Outcome of testing `H0: mean <= tau` against `H1: mean > tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisResult {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation, n - 1 denominator.
    pub std: f64,
    pub tau: f64,
    /// `None` for a zero-variance sample.
    pub z: Option<f64>,
    pub p_value: f64,
    pub alpha: f64,
    pub decision: Decision,
}

impl HypothesisResult {
    pub fn rejected(&self) -> bool {
        self.decision == Decision::RejectNull
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// One-tailed z-test that the population mean of `samples` exceeds `tau`.
///
/// A constant sample is decided by direct comparison: p = 0 if its value is
/// above `tau`, else p = 1.
pub fn ztest_mean_gt(
    samples: &[f64],
    tau: f64,
    alpha: f64,
) -> Result<HypothesisResult, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::BadAlpha(alpha));
    }
    if samples.iter().any(|x| !x.is_finite()) || !tau.is_finite() {
        return Err(StatsError::NonFinite);
    }
    let n = samples.len();
    let Some(&first) = samples.first() else {
        return Err(StatsError::InsufficientSample(0));
    };
    let constant = samples.iter().all(|&x| x == first);
    let (mean, std, z, p_value) = if constant {
        let p = if first > tau { 0.0 } else { 1.0 };
        (first, 0.0, None, p)
    } else {
        let m = mean(samples);
        let s = sample_std(samples);
        let z = (m - tau) / (s / (n as f64).sqrt());
        (m, s, Some(z), normal_sf(z))
    };
    let decision = if p_value < alpha {
        Decision::RejectNull
    } else {
        Decision::Inconclusive
    };
    Ok(HypothesisResult {
        n,
        mean,
        std,
        tau,
        z,
        p_value,
        alpha,
        decision,
    })
}

/// 1-based ranks with ties sharing the mean of their rank range.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share ranks i+1..=j
        let rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        i = j;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::DegenerateInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of the average-ranked series.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::InsufficientSample(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Smallest integer strictly greater than the mean of `scores`.
pub fn suggest_tau(scores: &[f64]) -> Result<i64, StatsError> {
    if scores.is_empty() {
        return Err(StatsError::InsufficientSample(0));
    }
    let m = mean(scores);
    if !m.is_finite() {
        return Err(StatsError::NonFinite);
    }
    Ok(m.floor() as i64 + 1)
}
