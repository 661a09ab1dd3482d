//! Conformal risk control for candidate-set thresholds.
//!
//! The loss of a threshold `lambda` on calibration sample `i` is
//! `1(lambda < lambda_i)`, where `lambda_i` is the smallest score among the
//! eps-good beams of that sample. [`calibrate`] picks the smallest threshold
//! whose empirical risk satisfies the finite-sample corrected bound;
//! [`weighted`] handles covariate shift through importance weights.

pub mod ratio;
pub mod weighted;

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::codebook::BeamIndex;
use crate::error::CrcError;
use crate::predictor::ScoreMatrix;

pub use ratio::{estimate_ratio, ratio_features, LogisticFit, LogisticRatioModel, LosOracleRatio, RATIO_CLAMP};
pub use weighted::{calibrate_weighted, weighted_risk, WeightedCalibrator};

/// Slack, in units of normalised risk, when comparing against the bound.
/// Absorbs rounding in `alpha * (n + 1) - 1` for alphas such as 0.1.
pub const RISK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub sample_id: u64,
    pub critical_score: f64,
    /// Unnormalised likelihood ratio; only read by the weighted procedure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

impl CalibrationRecord {
    pub fn new(sample_id: u64, critical_score: f64) -> Self {
        Self {
            sample_id,
            critical_score,
            weight: None,
        }
    }

    pub fn weighted(sample_id: u64, critical_score: f64, weight: f64) -> Self {
        Self {
            sample_id,
            critical_score,
            weight: Some(weight),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationMode {
    Standard,
    Weighted,
}

impl fmt::Display for CalibrationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Standard => "standard",
            Self::Weighted => "weighted",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    /// `+inf` means "select the whole codebook".
    #[serde(with = "finite_or_inf")]
    pub lambda_hat: f64,
    pub achieved_empirical_risk: f64,
    pub alpha: f64,
    pub n_cal: usize,
    pub mode: CalibrationMode,
}

impl ThresholdResult {
    /// Full-codebook sentinel.
    pub fn full_codebook(alpha: f64, n_cal: usize, mode: CalibrationMode) -> Self {
        Self {
            lambda_hat: f64::INFINITY,
            achieved_empirical_risk: 0.0,
            alpha,
            n_cal,
            mode,
        }
    }

    pub fn is_full_codebook(&self) -> bool {
        self.lambda_hat == f64::INFINITY
    }
}

/// Serialises `+inf` as the string `"inf"`; JSON has no infinity literal.
pub mod finite_or_inf {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_infinite() && *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(de::Error::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

/// Smallest score over the eps-good beams.
pub fn critical_score(scores: &ScoreMatrix, eps_good: &[BeamIndex]) -> Result<f64, CrcError> {
    if eps_good.is_empty() {
        return Err(CrcError::EmptyGoodSet);
    }
    Ok(eps_good
        .iter()
        .map(|&b| scores.get(b))
        .fold(f64::INFINITY, f64::min))
}

/// Fraction of records with `lambda < lambda_i`.
pub fn empirical_risk(records: &[CalibrationRecord], lambda: f64) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let misses = records.iter().filter(|r| lambda < r.critical_score).count();
    misses as f64 / records.len() as f64
}

fn check_alpha(alpha: f64) -> Result<(), CrcError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CrcError::Alpha(alpha))
    }
}

/// Largest number of calibration misses the bound tolerates, or `None` when
/// even zero misses exceed it.
pub fn allowed_misses(n_cal: usize, alpha: f64) -> Option<usize> {
    let n1 = (n_cal + 1) as f64;
    let m = (alpha * n1 - 1.0 + RISK_TOLERANCE * n1).floor();
    if m < 0.0 {
        None
    } else {
        Some((m as usize).min(n_cal))
    }
}

/// Smallest calibration set size for which `alpha` is attainable.
pub fn required_calibration_size(alpha: f64) -> usize {
    let mut n = ((1.0 - alpha) / alpha).ceil().max(0.0) as usize;
    while n > 0 && allowed_misses(n - 1, alpha).is_some() {
        n -= 1;
    }
    while allowed_misses(n, alpha).is_none() {
        n += 1;
    }
    n
}

fn check_scores(records: &[CalibrationRecord]) -> Result<(), CrcError> {
    if records.is_empty() {
        return Err(CrcError::Empty);
    }
    if let Some(r) = records.iter().find(|r| !r.critical_score.is_finite()) {
        return Err(CrcError::Weight(format!(
            "critical score of sample {} is not finite",
            r.sample_id
        )));
    }
    Ok(())
}

/// Critical scores sorted ascending.
pub fn sorted_scores(records: &[CalibrationRecord]) -> Vec<f64> {
    let mut s: Vec<f64> = records.iter().map(|r| r.critical_score).collect();
    s.sort_by(f64::total_cmp);
    s
}

/// Threshold from the `(n - m)`-th order statistic of the critical scores,
/// `m` being [`allowed_misses`]. Equivalent to the smallest grid point whose
/// empirical risk is at most `alpha + (alpha - 1) / n`.
pub fn calibrate(records: &[CalibrationRecord], alpha: f64) -> Result<ThresholdResult, CrcError> {
    check_alpha(alpha)?;
    check_scores(records)?;
    let n = records.len();
    let m = allowed_misses(n, alpha).ok_or(CrcError::Infeasible {
        n_cal: n,
        alpha,
        required: required_calibration_size(alpha),
    })?;
    let sorted = sorted_scores(records);
    let lambda_hat = sorted[n - m - 1];
    Ok(ThresholdResult {
        lambda_hat,
        achieved_empirical_risk: empirical_risk(records, lambda_hat),
        alpha,
        n_cal: n,
        mode: CalibrationMode::Standard,
    })
}
