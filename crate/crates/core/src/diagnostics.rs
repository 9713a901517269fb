//! Finite-run proxies for the asymptotic statements about decrease sequences:
//! Cesaro averages, a tail test for the summability of `a_n / n`, and
//! power-law decay fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tail share of `sum a_n / n` above which the series is reported as not summable.
pub const DEFAULT_TAIL_FRACTION: f64 = 0.05;

/// Minimum sequence length for [`fit_decay`].
pub const MIN_FIT_POINTS: usize = 20;

/// First index (1-based) used by [`fit_decay`].
pub const FIT_START: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceReport {
    pub len: usize,
    /// Running sums of `a_n / n`.
    pub weighted_sums: Vec<f64>,
    /// Running Cesaro averages `(1/N) sum_{n <= N} a_n`.
    pub cesaro: Vec<f64>,
    /// Share of `sum a_n / n` contributed by `n > N/2`.
    pub tail_fraction: f64,
    pub summable: bool,
    /// Number of `n` with `|a_{n+1} - a_n| > c / n`, when a step bound is given.
    pub step_violations: Option<usize>,
    /// `max a_n` over the last half of the sequence.
    pub final_segment_max: f64,
}

impl SequenceReport {
    pub fn cesaro_final(&self) -> f64 {
        self.cesaro.last().copied().unwrap_or(0.0)
    }

    /// Cesaro average at `N/2`.
    pub fn cesaro_half(&self) -> f64 {
        if self.len < 2 {
            return self.cesaro_final();
        }
        self.cesaro[self.len / 2 - 1]
    }
}

/// Summability, Cesaro and slow-variation diagnostics of a nonnegative sequence
/// `a_1, a_2, ...` (`a[0]` is `a_1`).
pub fn cesaro_check(a: &[f64], step_bound: Option<f64>, tail_fraction: f64) -> Result<SequenceReport> {
    if let Some((i, v)) = a.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(Error::Validation(format!("a_{} = {v} must be finite and >= 0", i + 1)));
    }
    let len = a.len();
    let mut sum = 0.0;
    let mut weighted = 0.0;
    let mut weighted_sums = Vec::with_capacity(len);
    let mut cesaro = Vec::with_capacity(len);
    for (i, v) in a.iter().enumerate() {
        let n = (i + 1) as f64;
        sum += v;
        weighted += v / n;
        weighted_sums.push(weighted);
        cesaro.push(sum / n);
    }
    let half = len / 2;
    let tail: f64 = a.iter().enumerate().skip(half).map(|(i, v)| v / (i + 1) as f64).sum();
    let share = if weighted > 0.0 { tail / weighted } else { 0.0 };
    let step_violations = step_bound.map(|c| {
        a.windows(2)
            .enumerate()
            .filter(|(i, w)| (w[1] - w[0]).abs() > c / (i + 1) as f64)
            .count()
    });
    let final_segment_max = a[half..].iter().copied().fold(0.0, f64::max);
    Ok(SequenceReport {
        len,
        weighted_sums,
        cesaro,
        tail_fraction: share,
        summable: share <= tail_fraction,
        step_violations,
        final_segment_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    COverN,
    COverN2,
}

impl DecayModel {
    pub fn exponent(&self) -> f64 {
        match self {
            DecayModel::COverN => 1.0,
            DecayModel::COverN2 => 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub c: f64,
    /// `max x_n / (c n^-p)` over the fitted range.
    pub max_ratio: f64,
    /// Points that entered the fit.
    pub points: usize,
}

/// Least-squares fit of `log x_n = log c - p log n` with fixed `p` over
/// `n >= 10` (`x[0]` is `x_1`). Nonpositive entries are skipped.
pub fn fit_decay(x: &[f64], model: DecayModel) -> Result<DecayFit> {
    if x.len() < MIN_FIT_POINTS {
        return Err(Error::ShortSequence { len: x.len(), min: MIN_FIT_POINTS });
    }
    let p = model.exponent();
    let pts: Vec<(f64, f64)> = x
        .iter()
        .enumerate()
        .skip(FIT_START - 1)
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(i, v)| ((i + 1) as f64, *v))
        .collect();
    if pts.is_empty() {
        return Ok(DecayFit { c: 0.0, max_ratio: 0.0, points: 0 });
    }
    let log_c = pts.iter().map(|(n, v)| v.ln() + p * n.ln()).sum::<f64>() / pts.len() as f64;
    let c = log_c.exp();
    let max_ratio = pts.iter().map(|(n, v)| v / (c * n.powf(-p))).fold(0.0, f64::max);
    Ok(DecayFit { c, max_ratio, points: pts.len() })
}

/// Upticks of a potential history against a fitted `C / n^2` envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialTrend {
    /// `sum max(phi_{n+1} - phi_n, 0)`.
    pub upticks: f64,
    /// `c` of the `c / n^2` fit to `|phi_{n+1} - phi_n|`.
    pub c_fit: f64,
    /// `c_fit * sum_{n <= N} n^-2`.
    pub bound: f64,
    /// `phi_N <= phi_1`.
    pub decreased: bool,
}

impl PotentialTrend {
    pub fn holds(&self) -> bool {
        self.decreased && self.upticks <= self.bound
    }
}

/// `phi[0]` is `phi_1`.
pub fn potential_trend(phi: &[f64]) -> Result<PotentialTrend> {
    let steps: Vec<f64> = phi.windows(2).map(|w| w[1] - w[0]).collect();
    let magnitudes: Vec<f64> = steps.iter().map(|d| d.abs()).collect();
    let fit = fit_decay(&magnitudes, DecayModel::COverN2)?;
    let basel: f64 = (1..=phi.len()).map(|n| 1.0 / (n * n) as f64).sum();
    Ok(PotentialTrend {
        upticks: steps.iter().map(|d| d.max(0.0)).sum(),
        c_fit: fit.c,
        bound: fit.c * basel,
        decreased: phi.last() <= phi.first(),
    })
}
