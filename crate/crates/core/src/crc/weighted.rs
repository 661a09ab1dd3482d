//! Weighted calibration under covariate shift.
//!
//! With likelihood ratios `p_i` on the calibration samples and `p'` on the
//! test input, weights are `w_i = p_i / (sum p + p')` and `w' = p' / (sum p + p')`.
//! The threshold is the smallest grid point with weighted risk at most
//! `alpha - w'`; when none exists the full codebook is selected.

use super::{check_alpha, CalibrationMode, CalibrationRecord, ThresholdResult, RISK_TOLERANCE};
use crate::error::CrcError;

fn weight_of(r: &CalibrationRecord) -> Result<f64, CrcError> {
    let w = r.weight.unwrap_or(1.0);
    if w.is_finite() && w >= 0.0 {
        Ok(w)
    } else {
        Err(CrcError::Weight(format!("sample {} has weight {w}", r.sample_id)))
    }
}

fn check_prime(p_prime: f64) -> Result<(), CrcError> {
    if p_prime.is_finite() && p_prime >= 0.0 {
        Ok(())
    } else {
        Err(CrcError::Weight(format!("test ratio {p_prime}")))
    }
}

/// Weighted risk at `lambda` and the test-point weight `w'`. Records without
/// a weight count as ratio 1.
pub fn weighted_risk(records: &[CalibrationRecord], lambda: f64, p_prime: f64) -> Result<(f64, f64), CrcError> {
    check_prime(p_prime)?;
    let mut total = p_prime;
    let mut missed = 0.0;
    for r in records {
        let w = weight_of(r)?;
        total += w;
        if lambda < r.critical_score {
            missed += w;
        }
    }
    if total <= 0.0 {
        return Err(CrcError::Weight("all weights are zero".into()));
    }
    Ok((missed / total, p_prime / total))
}

/// Sorted calibration scores with suffix weight sums, reusable across many
/// test points.
#[derive(Debug, Clone)]
pub struct WeightedCalibrator {
    /// Distinct critical scores, ascending.
    grid: Vec<f64>,
    /// `above[j]`: total weight of records scoring strictly above `grid[j]`.
    above: Vec<f64>,
    total: f64,
    n_cal: usize,
}

impl WeightedCalibrator {
    pub fn new(records: &[CalibrationRecord]) -> Result<Self, CrcError> {
        if records.is_empty() {
            return Err(CrcError::Empty);
        }
        let mut pairs = Vec::with_capacity(records.len());
        for r in records {
            if !r.critical_score.is_finite() {
                return Err(CrcError::Weight(format!(
                    "critical score of sample {} is not finite",
                    r.sample_id
                )));
            }
            pairs.push((r.critical_score, weight_of(r)?));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut grid: Vec<f64> = Vec::new();
        let mut mass: Vec<f64> = Vec::new();
        for (s, w) in pairs {
            if grid.last() == Some(&s) {
                *mass.last_mut().unwrap() += w;
            } else {
                grid.push(s);
                mass.push(w);
            }
        }
        let mut above = vec![0.0; grid.len()];
        let mut acc = 0.0;
        for j in (0..grid.len()).rev() {
            above[j] = acc;
            acc += mass[j];
        }
        Ok(Self {
            grid,
            above,
            total: acc,
            n_cal: records.len(),
        })
    }

    pub fn n_cal(&self) -> usize {
        self.n_cal
    }

    /// Threshold for a test input with likelihood ratio `p_prime`.
    pub fn threshold(&self, alpha: f64, p_prime: f64) -> Result<ThresholdResult, CrcError> {
        check_alpha(alpha)?;
        check_prime(p_prime)?;
        let denom = self.total + p_prime;
        if denom <= 0.0 {
            return Err(CrcError::Weight("all weights are zero".into()));
        }
        let budget = alpha - p_prime / denom + RISK_TOLERANCE;
        // risk along the grid is non-increasing; find the first index within budget
        let j = self.above.partition_point(|&a| a / denom > budget);
        if j == self.grid.len() {
            return Ok(ThresholdResult::full_codebook(alpha, self.n_cal, CalibrationMode::Weighted));
        }
        Ok(ThresholdResult {
            lambda_hat: self.grid[j],
            achieved_empirical_risk: self.above[j] / denom,
            alpha,
            n_cal: self.n_cal,
            mode: CalibrationMode::Weighted,
        })
    }
}

pub fn calibrate_weighted(
    records: &[CalibrationRecord],
    alpha: f64,
    p_prime: f64,
) -> Result<ThresholdResult, CrcError> {
    WeightedCalibrator::new(records)?.threshold(alpha, p_prime)
}

#[cfg(test)]
mod tests {
    use super::super::calibrate;
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::{Distribution, Exp};

    fn weighted(scores: &[f64], weights: &[f64]) -> Vec<CalibrationRecord> {
        scores
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(i, (&s, &w))| CalibrationRecord::weighted(i as u64, s, w))
            .collect()
    }

    fn brute_force(records: &[CalibrationRecord], alpha: f64, p_prime: f64) -> f64 {
        let mut grid: Vec<f64> = records.iter().map(|r| r.critical_score).collect();
        grid.sort_by(f64::total_cmp);
        for lam in grid {
            let (risk, wp) = weighted_risk(records, lam, p_prime).unwrap();
            if risk <= alpha - wp + RISK_TOLERANCE {
                return lam;
            }
        }
        f64::INFINITY
    }

    #[test]
    fn worked_example() {
        let r = weighted(&[1.0, 2.0, 3.0], &[1.0, 2.0, 1.0]);
        let (risk, wp) = weighted_risk(&r, 1.5, 0.0).unwrap();
        assert_eq!(risk, 0.75);
        assert_eq!(wp, 0.0);
    }

    #[test]
    fn uniform_ratios_reduce_to_standard() {
        let mut rng = stream(41, &[]);
        for _ in 0..500 {
            let n = rng.random_range(5..200);
            let alpha = rng.random_range(0.02..0.98);
            let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0.0..10.0f64) * 8.0).round() / 8.0).collect();
            let r = weighted(&scores, &vec![1.0; n]);
            let w = calibrate_weighted(&r, alpha, 1.0).unwrap();
            match calibrate(&r, alpha) {
                Ok(s) => {
                    assert_eq!(w.lambda_hat, s.lambda_hat, "n={n} alpha={alpha}");
                    assert_eq!(w.mode, CalibrationMode::Weighted);
                }
                Err(CrcError::Infeasible { .. }) => assert!(w.is_full_codebook()),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn zero_test_weight_uses_plain_alpha() {
        let r = weighted(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4]);
        // budget alpha = 0.5: two misses allowed -> lambda = 2
        assert_eq!(calibrate_weighted(&r, 0.5, 0.0).unwrap().lambda_hat, 2.0);
    }

    #[test]
    fn dominating_test_weight_is_sentinel() {
        let r = weighted(&[1.0, 2.0, 3.0], &[1.0; 3]);
        let t = calibrate_weighted(&r, 0.2, 1e9).unwrap();
        assert!(t.is_full_codebook());
        let (_, wp) = weighted_risk(&r, 0.0, 1e9).unwrap();
        assert!(wp > 0.999);
    }

    #[test]
    fn invalid_weights() {
        let r = weighted(&[1.0, 2.0], &[0.0, 0.0]);
        assert!(calibrate_weighted(&r, 0.5, 0.0).is_err());
        assert!(weighted_risk(&r, 1.0, 0.0).is_err());
        let r = weighted(&[1.0, 2.0], &[-1.0, 1.0]);
        assert!(calibrate_weighted(&r, 0.5, 1.0).is_err());
        let r = weighted(&[1.0, 2.0], &[1.0, 1.0]);
        assert!(calibrate_weighted(&r, 0.5, f64::NAN).is_err());
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = stream(42, &[]);
        let exp = Exp::new(1.0).unwrap();
        for _ in 0..500 {
            let n = [5usize, 50, 200][rng.random_range(0..3)];
            let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0.0..6.0f64) * 4.0).round() / 4.0).collect();
            let weights: Vec<f64> = (0..n).map(|_| exp.sample(&mut rng)).collect();
            let r = weighted(&scores, &weights);
            let alpha = rng.random_range(0.02..0.98);
            let p_prime = exp.sample(&mut rng) * 3.0;
            let t = calibrate_weighted(&r, alpha, p_prime).unwrap();
            assert_eq!(t.lambda_hat, brute_force(&r, alpha, p_prime));
            if !t.is_full_codebook() {
                let (risk, wp) = weighted_risk(&r, t.lambda_hat, p_prime).unwrap();
                assert!((risk - t.achieved_empirical_risk).abs() < 1e-12);
                assert!(risk <= alpha - wp + 1e-9);
            }
        }
    }

    #[test]
    fn weighted_risk_is_non_increasing() {
        let mut rng = stream(43, &[]);
        for _ in 0..100 {
            let scores: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..5.0)).collect();
            let weights: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..3.0)).collect();
            let r = weighted(&scores, &weights);
            let mut prev = f64::INFINITY;
            for k in 0..60 {
                let (risk, _) = weighted_risk(&r, -0.5 + k as f64 * 0.1, 0.7).unwrap();
                assert!(risk <= prev);
                prev = risk;
            }
        }
    }

    /// Calibration scores from N(0, 1), test scores from N(1, 1); the ratio
    /// `exp(x - 1/2)` is known exactly.
    #[test]
    fn weighted_guarantee_under_shift() {
        use rand_distr::Normal;
        let mut rng = stream(44, &[]);
        let cal = Normal::new(0.0, 1.0).unwrap();
        let test = Normal::new(1.0, 1.0).unwrap();
        let ratio = |x: f64| (x - 0.5).exp();
        let alpha = 0.1;
        let trials = 2000;
        let (mut miss_w, mut miss_u) = (0, 0);
        for _ in 0..trials {
            let xs: Vec<f64> = (0..100).map(|_| cal.sample(&mut rng)).collect();
            let r: Vec<_> = xs
                .iter()
                .enumerate()
                .map(|(i, &x)| CalibrationRecord::weighted(i as u64, x, ratio(x)))
                .collect();
            let x_test = test.sample(&mut rng);
            let t = calibrate_weighted(&r, alpha, ratio(x_test)).unwrap();
            if t.lambda_hat < x_test {
                miss_w += 1;
            }
            if calibrate(&r, alpha).unwrap().lambda_hat < x_test {
                miss_u += 1;
            }
        }
        let se = (alpha * (1.0 - alpha) / trials as f64).sqrt();
        let rate_w = miss_w as f64 / trials as f64;
        let rate_u = miss_u as f64 / trials as f64;
        assert!(rate_w <= alpha + 3.0 * se, "weighted miscoverage {rate_w}");
        // the unweighted threshold is too small for the shifted test data
        assert!(rate_u > rate_w);
    }
}
