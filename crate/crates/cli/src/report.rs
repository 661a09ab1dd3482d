//! Report types and writers.

use nearbeam_core::crc::finite_or_inf;
use nearbeam_core::ThresholdResult;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::stats::Quantiles;
use crate::HarnessError;

/// Output of `calibrate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationReport {
    pub predictor: String,
    pub eps: f64,
    pub seed: u64,
    pub split: [f64; 4],
    pub n_samples: usize,
    pub dataset_digest: String,
    pub n_cal: usize,
    pub thresholds: Vec<ThresholdResult>,
    /// Critical scores of the calibration samples, ascending.
    pub sorted_scores: Vec<f64>,
    /// SHA-256 over the little-endian bytes of `sorted_scores`.
    pub sorted_scores_digest: String,
}

pub fn scores_digest(sorted: &[f64]) -> String {
    let mut h = Sha256::new();
    for x in sorted {
        h.update(x.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// One CSV row of `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub alpha: f64,
    pub sample_id: u64,
    pub set_size: usize,
    pub branch: String,
    pub chosen_n: usize,
    pub chosen_s: usize,
    pub ratio: f64,
    pub covered: u8,
    pub pilots_used: usize,
    pub critical_score: f64,
    /// The chosen beam is eps-good.
    pub success: u8,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchCounts {
    pub empty_set_fallback: usize,
    pub singleton: usize,
    pub trained: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub alpha: f64,
    #[serde(with = "finite_or_inf")]
    pub lambda_hat: f64,
    pub n_test: usize,
    /// Fraction of test samples whose candidate set holds an eps-good beam.
    pub achieved_coverage: f64,
    /// Fraction of test samples whose selected beam is eps-good.
    pub achieved_eps_suboptimal_rate: f64,
    pub mean_set_size: f64,
    pub set_size_quantiles: Quantiles,
    pub mean_pilots: f64,
    pub branches: BranchCounts,
}

impl AlphaSummary {
    pub fn from_rows(alpha: f64, lambda_hat: f64, rows: &[EvaluationRow]) -> Self {
        let n = rows.len() as f64;
        let sizes: Vec<f64> = rows.iter().map(|r| r.set_size as f64).collect();
        let mut branches = BranchCounts::default();
        for r in rows {
            match r.branch.as_str() {
                "empty-set-fallback" => branches.empty_set_fallback += 1,
                "singleton" => branches.singleton += 1,
                _ => branches.trained += 1,
            }
        }
        Self {
            alpha,
            lambda_hat,
            n_test: rows.len(),
            achieved_coverage: rows.iter().map(|r| r.covered as f64).sum::<f64>() / n,
            achieved_eps_suboptimal_rate: rows.iter().map(|r| r.success as f64).sum::<f64>() / n,
            mean_set_size: sizes.iter().sum::<f64>() / n,
            set_size_quantiles: Quantiles::of(&sizes),
            mean_pilots: rows.iter().map(|r| r.pilots_used as f64).sum::<f64>() / n,
            branches,
        }
    }
}

/// JSON summary of `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub predictor: String,
    pub eps: f64,
    pub pilots_per_beam: usize,
    pub n_test: usize,
    pub per_alpha: Vec<AlphaSummary>,
}

/// Long-form sweep row: one per (grid point, trial, alpha).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub trial: usize,
    pub alpha: f64,
    pub n_cal: usize,
    pub n_test: usize,
    pub lambda_hat: f64,
    pub coverage: f64,
    pub eps_rate: f64,
    pub mean_set_size: f64,
    pub median_set_size: f64,
    pub mean_pilots: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Weighted,
    Unweighted,
}

/// Per (test ratio, trial, method) row of `shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
    pub test_los_ratio: f64,
    pub trial: usize,
    pub method: Method,
    pub coverage: f64,
    pub mean_set_size: f64,
    /// Test samples whose threshold was the full-codebook sentinel.
    pub sentinels: usize,
}

/// Per test sample row of `shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSampleRow {
    pub test_los_ratio: f64,
    pub trial: usize,
    pub sample_id: u64,
    pub los: u8,
    /// Likelihood ratio `p'` of the test input.
    pub weight: f64,
    /// Normalised test weight `p' / (sum_i p_i + p')`.
    pub omega_prime: f64,
    pub lambda_weighted: f64,
    pub covered_weighted: u8,
    pub set_size_weighted: usize,
    pub lambda_unweighted: f64,
    pub covered_unweighted: u8,
    pub set_size_unweighted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSummaryRow {
    pub test_los_ratio: f64,
    pub method: Method,
    pub trials: usize,
    pub mean_coverage: f64,
    pub coverage_se: f64,
    pub mean_set_size: f64,
    /// Trials with at least one sentinel threshold.
    pub sentinel_runs: usize,
    pub sentinel_samples: usize,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nearbeam_core::CalibrationMode;

    #[test]
    fn calibration_report_round_trips_byte_for_byte() {
        let sorted = vec![0.1, 0.2, 1.0 / 3.0];
        let report = CalibrationReport {
            predictor: "adt(temp=0.01)".into(),
            eps: 0.15,
            seed: 1,
            split: [0.5, 0.1, 0.2, 0.2],
            n_samples: 15,
            dataset_digest: "00".into(),
            n_cal: 3,
            thresholds: vec![
                ThresholdResult {
                    lambda_hat: 1.0 / 3.0,
                    achieved_empirical_risk: 0.0,
                    alpha: 0.5,
                    n_cal: 3,
                    mode: CalibrationMode::Standard,
                },
                ThresholdResult::full_codebook(0.1, 3, CalibrationMode::Weighted),
            ],
            sorted_scores_digest: scores_digest(&sorted),
            sorted_scores: sorted,
        };
        let text = serde_json::to_string_pretty(&report).unwrap();
        assert!(text.contains("\"inf\""));
        let back: CalibrationReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
        assert_eq!(serde_json::to_string_pretty(&back).unwrap(), text);
    }

    #[test]
    fn digest_depends_on_order_and_bits() {
        assert_ne!(scores_digest(&[1.0, 2.0]), scores_digest(&[2.0, 1.0]));
        assert_ne!(scores_digest(&[0.0]), scores_digest(&[-0.0]));
        assert_eq!(scores_digest(&[]).len(), 64);
    }
}
