//! Likelihood-ratio estimation for weighted calibration.

use ndarray::ArrayView2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::CrcError;
use crate::predictor::{angle_delay_spectrum, angle_grid};

/// Classifier outputs are clamped to `[RATIO_CLAMP, 1 - RATIO_CLAMP]`.
pub const RATIO_CLAMP: f64 = 1e-6;

/// `g / (1 - g)` for a classifier output `g = P(test | x)` trained on
/// balanced classes.
pub fn estimate_ratio(g: f64) -> f64 {
    let g = g.clamp(RATIO_CLAMP, 1.0 - RATIO_CLAMP);
    g / (1.0 - g)
}

/// Exact ratios for a LoS/NLoS mixture shift: the two populations differ
/// only in their LoS probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LosOracleRatio {
    pub p_los_cal: f64,
    pub p_los_test: f64,
}

impl LosOracleRatio {
    pub fn new(p_los_cal: f64, p_los_test: f64) -> Result<Self, CrcError> {
        let ok = |p: f64| p > 0.0 && p < 1.0;
        if !ok(p_los_cal) || !(0.0..=1.0).contains(&p_los_test) {
            return Err(CrcError::Weight(format!(
                "LoS probabilities must satisfy 0 < cal < 1 and 0 <= test <= 1, got {p_los_cal} and {p_los_test}"
            )));
        }
        Ok(Self { p_los_cal, p_los_test })
    }

    pub fn ratio(&self, los: bool) -> f64 {
        if los {
            self.p_los_test / self.p_los_cal
        } else {
            (1.0 - self.p_los_test) / (1.0 - self.p_los_cal)
        }
    }
}

pub const N_FEATURES: usize = 3;

/// `[mean power (dB), rms delay spread (bins), rms angular spread (sin units)]`
/// of a sub-6 GHz estimate.
pub fn ratio_features(h_sub_est: ArrayView2<'_, Complex64>) -> [f64; N_FEATURES] {
    let (m, n) = h_sub_est.dim();
    let mean_power = h_sub_est.iter().map(|z| z.norm_sqr()).sum::<f64>() / (m * n) as f64;
    let power_db = 10.0 * mean_power.max(1e-300).log10();
    let spectrum = angle_delay_spectrum(h_sub_est);
    let grid = angle_grid(n);
    let delay_profile: Vec<f64> = spectrum.rows().into_iter().map(|r| r.sum()).collect();
    let angle_profile: Vec<f64> = spectrum.columns().into_iter().map(|c| c.sum()).collect();
    let spread = |weights: &[f64], at: &dyn Fn(usize) -> f64| {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        let mean = weights.iter().enumerate().map(|(i, w)| w * at(i)).sum::<f64>() / total;
        let var = weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * (at(i) - mean).powi(2))
            .sum::<f64>()
            / total;
        var.sqrt()
    };
    [
        power_db,
        spread(&delay_profile, &|i| i as f64),
        spread(&angle_profile, &|i| grid[i]),
    ]
}

/// Logistic discriminator between calibration (label 0) and test (label 1)
/// features on standardised inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRatioModel {
    pub mean: [f64; N_FEATURES],
    pub scale: [f64; N_FEATURES],
    pub weights: [f64; N_FEATURES],
    pub bias: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct LogisticFit {
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for LogisticFit {
    fn default() -> Self {
        Self {
            iterations: 2000,
            learning_rate: 0.5,
            l2: 1e-4,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl LogisticRatioModel {
    /// Full-batch gradient descent on class-balanced cross-entropy, so that
    /// `g / (1 - g)` estimates the density ratio regardless of class sizes.
    pub fn fit(
        cal: &[[f64; N_FEATURES]],
        test: &[[f64; N_FEATURES]],
        opts: LogisticFit,
    ) -> Result<Self, CrcError> {
        if cal.is_empty() || test.is_empty() {
            return Err(CrcError::Empty);
        }
        let all: Vec<&[f64; N_FEATURES]> = cal.iter().chain(test).collect();
        let count = all.len() as f64;
        let mut mean = [0.0; N_FEATURES];
        let mut scale = [0.0; N_FEATURES];
        for j in 0..N_FEATURES {
            mean[j] = all.iter().map(|x| x[j]).sum::<f64>() / count;
            let var = all.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / count;
            scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        let standardise = |x: &[f64; N_FEATURES]| -> [f64; N_FEATURES] {
            std::array::from_fn(|j| (x[j] - mean[j]) / scale[j])
        };
        let data: Vec<([f64; N_FEATURES], f64, f64)> = cal
            .iter()
            .map(|x| (standardise(x), 0.0, 0.5 / cal.len() as f64))
            .chain(test.iter().map(|x| (standardise(x), 1.0, 0.5 / test.len() as f64)))
            .collect();
        let mut w = [0.0; N_FEATURES];
        let mut b = 0.0;
        for _ in 0..opts.iterations {
            let mut gw = [0.0; N_FEATURES];
            let mut gb = 0.0;
            for (x, y, weight) in &data {
                let z = b + (0..N_FEATURES).map(|j| w[j] * x[j]).sum::<f64>();
                let err = weight * (sigmoid(z) - y);
                for j in 0..N_FEATURES {
                    gw[j] += err * x[j];
                }
                gb += err;
            }
            for j in 0..N_FEATURES {
                w[j] -= opts.learning_rate * (gw[j] + opts.l2 * w[j]);
            }
            b -= opts.learning_rate * gb;
        }
        Ok(Self {
            mean,
            scale,
            weights: w,
            bias: b,
        })
    }

    /// Classifier output `P(test | x)`.
    pub fn probability(&self, x: &[f64; N_FEATURES]) -> f64 {
        let z = self.bias
            + (0..N_FEATURES)
                .map(|j| self.weights[j] * (x[j] - self.mean[j]) / self.scale[j])
                .sum::<f64>();
        sigmoid(z)
    }

    pub fn ratio(&self, x: &[f64; N_FEATURES]) -> f64 {
        estimate_ratio(self.probability(x))
    }
}
