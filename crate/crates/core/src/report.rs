//! Settings and per-iteration records shared by all fictitious-play loops.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DensityFlow;

/// How the next stage's belief is formed from realized flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeliefRule {
    /// Running average of all realized flows (fictitious play).
    #[default]
    Average,
    /// The last realized flow only.
    Last,
}

/// Loop controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlayConfig {
    pub n_max: usize,
    pub tol_a: f64,
    /// Density floor used in flux-to-velocity ratios.
    pub m_floor: f64,
    pub belief: BeliefRule,
    /// Consecutive iterations with `a_n < tol_a` required to stop.
    pub sustain: usize,
}

impl Default for PlayConfig {
    fn default() -> Self {
        Self { n_max: 200, tol_a: 1e-4, m_floor: 1e-10, belief: BeliefRule::Average, sustain: 5 }
    }
}

impl PlayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_max < 1 {
            return Err(Error::Config("play.n_max must be >= 1".into()));
        }
        if !(self.tol_a.is_finite() && self.tol_a >= 0.0) {
            return Err(Error::Config(format!("play.tol_a must be finite and >= 0, got {}", self.tol_a)));
        }
        if !(self.m_floor.is_finite() && self.m_floor > 0.0) {
            return Err(Error::Config(format!("play.m_floor must be > 0, got {}", self.m_floor)));
        }
        if self.sustain < 1 {
            return Err(Error::Config("play.sustain must be >= 1".into()));
        }
        Ok(())
    }
}

/// One row of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub n: usize,
    pub phi: f64,
    pub a_n: f64,
    pub du_inf: f64,
    pub dgrad_inf: f64,
    pub dm_inf: f64,
    pub dw_inf: f64,
    pub residual_hjb: f64,
    pub residual_fp: f64,
}

impl IterationRecord {
    pub(crate) fn check_finite(&self) -> Result<()> {
        let fields = [
            self.phi,
            self.a_n,
            self.du_inf,
            self.dgrad_inf,
            self.dm_inf,
            self.dw_inf,
            self.residual_hjb,
            self.residual_fp,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iteration: self.n, detail: format!("non-finite diagnostics {self:?}") });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// `a_n < tol_a` held for the required number of iterations.
    Converged,
    /// The realized iterate repeated exactly, so every later iterate is the same.
    FixedPoint,
    /// Stopped at `n_max`.
    IterationLimit,
}

impl Termination {
    pub fn converged(&self) -> bool {
        !matches!(self, Termination::IterationLimit)
    }
}

/// Tracks the stopping rule across iterations.
#[derive(Debug, Clone, Default)]
pub(crate) struct StopRule {
    streak: usize,
}

impl StopRule {
    /// `n` is the 1-based stage; the stage-1 decrease quantity is zero by
    /// construction and does not count toward the streak.
    pub(crate) fn update(&mut self, play: &PlayConfig, n: usize, a_n: f64, repeated: bool) -> Option<Termination> {
        if repeated {
            return Some(Termination::FixedPoint);
        }
        if n >= 2 && a_n < play.tol_a {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        if self.streak >= play.sustain {
            Some(Termination::Converged)
        } else if n >= play.n_max {
            Some(Termination::IterationLimit)
        } else {
            None
        }
    }
}

/// Outcome of a complete loop.
#[derive(Debug, Clone)]
pub struct PlayReport {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    /// Final belief flow.
    pub belief: DensityFlow,
    /// `(hjb, fp)` fixed-point residuals of the final realized pair.
    pub residual: (f64, f64),
}

impl PlayReport {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn a_history(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.a_n).collect()
    }

    pub fn phi_history(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.phi).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stop_rule_needs_a_sustained_streak() {
        let play = PlayConfig { n_max: 20, tol_a: 1e-3, sustain: 3, ..PlayConfig::default() };
        let mut rule = StopRule::default();
        let a = [0.0, 1e-4, 1e-4, 1.0, 1e-4, 1e-4];
        for (i, v) in a.iter().enumerate() {
            assert_eq!(rule.update(&play, i + 1, *v, false), None);
        }
        assert_eq!(rule.update(&play, 7, 1e-4, false), Some(Termination::Converged));
        assert_eq!(StopRule::default().update(&play, 2, 1.0, true), Some(Termination::FixedPoint));
        assert_eq!(StopRule::default().update(&play, 20, 1.0, false), Some(Termination::IterationLimit));
    }

    #[test]
    fn config_validation() {
        assert!(PlayConfig::default().validate().is_ok());
        assert!(PlayConfig { m_floor: 0.0, ..PlayConfig::default() }.validate().is_err());
        assert!(PlayConfig { n_max: 0, ..PlayConfig::default() }.validate().is_err());
    }
}
