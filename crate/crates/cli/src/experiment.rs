//! Experiment configuration file (TOML).

use nearbeam_core::crc::{LogisticRatioModel, LosOracleRatio};
use nearbeam_core::predictor::{AdtPredictor, BeamPredictor, ExternalPredictor, OraclePredictor, UniformPredictor};
use nearbeam_core::{Dataset, GeometryConfig, SystemConfig, SystemParams};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub n_trials: usize,
    pub eps: f64,
    pub alphas: Vec<f64>,
    pub pilots_per_beam: usize,
    /// Train / validation / calibration / test fractions.
    pub split: [f64; 4],
    pub system: SystemParams,
    pub geometry: GeometryConfig,
    pub predictor: PredictorSpec,
    pub shift: Option<ShiftSpec>,
    pub sweep: Option<SweepSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_samples: 2000,
            n_trials: 15,
            eps: 0.15,
            alphas: vec![0.05, 0.15, 0.25],
            pilots_per_beam: 1,
            split: [0.5, 0.1, 0.2, 0.2],
            system: SystemParams::desk_profile(),
            geometry: GeometryConfig::default(),
            predictor: PredictorSpec::default(),
            shift: None,
            sweep: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let total: f64 = self.split.iter().sum();
        if self.split.iter().any(|f| !(0.0..=1.0).contains(f)) || (total - 1.0).abs() > 1e-9 {
            return bad(format!("split fractions must lie in [0, 1] and sum to 1, got {:?}", self.split));
        }
        if !(0.0..=1.0).contains(&self.eps) {
            return bad(format!("eps must lie in [0, 1], got {}", self.eps));
        }
        if self.alphas.is_empty() {
            return bad("alphas is empty".into());
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return bad(format!("alpha must lie in (0, 1), got {a}"));
        }
        if self.pilots_per_beam == 0 {
            return bad("pilots_per_beam must be at least 1".into());
        }
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1".into());
        }
        self.system_config()?;
        self.geometry.validate()?;
        if let PredictorSpec::Adt { temperature } = self.predictor {
            AdtPredictor::new(temperature).map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        if let Some(s) = &self.shift {
            s.validate()?;
        }
        Ok(())
    }

    pub fn system_config(&self) -> Result<SystemConfig, HarnessError> {
        let mut params = self.system.clone();
        params.rng_seed = self.seed;
        Ok(params.into_config()?)
    }

    /// Sample counts per split, largest-remainder rounding.
    pub fn split_counts(&self, n: usize) -> [usize; 4] {
        largest_remainder(n, &self.split)
    }
}

/// Rounds `n * fractions` to integers summing to `n`; leftovers go to the
/// largest fractional parts, earlier entries first on ties.
pub fn largest_remainder(n: usize, fractions: &[f64; 4]) -> [usize; 4] {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: [usize; 4] = std::array::from_fn(|i| exact[i].floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PredictorSpec {
    Uniform,
    Adt {
        #[serde(default = "default_temperature")]
        temperature: f64,
    },
    Oracle {
        #[serde(default = "default_delta")]
        delta: f64,
    },
    /// Probability matrices stored in a dataset file; without a path the
    /// evaluated dataset's own probability section is used.
    External {
        #[serde(default)]
        path: Option<PathBuf>,
    },
}

fn default_temperature() -> f64 {
    AdtPredictor::DEFAULT_TEMPERATURE
}

fn default_delta() -> f64 {
    OraclePredictor::default().delta
}

impl Default for PredictorSpec {
    fn default() -> Self {
        Self::Adt {
            temperature: default_temperature(),
        }
    }
}

impl fmt::Display for PredictorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform => write!(f, "uniform"),
            Self::Adt { temperature } => write!(f, "adt(temp={temperature})"),
            Self::Oracle { delta } => write!(f, "oracle(delta={delta})"),
            Self::External { path: Some(p) } => write!(f, "external({})", p.display()),
            Self::External { path: None } => write!(f, "external(dataset)"),
        }
    }
}

impl PredictorSpec {
    /// Parses `uniform`, `adt`, `adt:0.02`, `oracle`, `oracle:0.05`,
    /// `external` or `external:path`.
    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let num = |a: Option<&str>, default: f64| -> Result<f64, HarnessError> {
            a.map(|x| x.parse::<f64>().map_err(|e| HarnessError::Config(format!("{s}: {e}"))))
                .unwrap_or(Ok(default))
        };
        match kind {
            "uniform" if arg.is_none() => Ok(Self::Uniform),
            "adt" => Ok(Self::Adt {
                temperature: num(arg, default_temperature())?,
            }),
            "oracle" => Ok(Self::Oracle {
                delta: num(arg, default_delta())?,
            }),
            "external" => Ok(Self::External {
                path: arg.map(PathBuf::from),
            }),
            _ => Err(HarnessError::Config(format!("unknown predictor {s:?}"))),
        }
    }

    pub fn build(&self, dataset: Option<&Dataset>) -> Result<Box<dyn BeamPredictor>, HarnessError> {
        Ok(match self {
            Self::Uniform => Box::new(UniformPredictor),
            Self::Adt { temperature } => {
                Box::new(AdtPredictor::new(*temperature).map_err(|e| HarnessError::Config(e.to_string()))?)
            }
            Self::Oracle { delta } => Box::new(OraclePredictor { delta: *delta }),
            Self::External { path } => {
                let loaded;
                let source = match path {
                    Some(p) => {
                        loaded = Dataset::load(p)?;
                        &loaded
                    }
                    None => dataset.ok_or_else(|| HarnessError::Config("external predictor needs a dataset".into()))?,
                };
                let map = source
                    .probabilities
                    .as_ref()
                    .ok_or_else(|| HarnessError::Config("dataset has no probability section".into()))?;
                Box::new(ExternalPredictor {
                    label: self.to_string(),
                    matrices: map.iter().map(|(k, v)| (*k, v.clone())).collect::<HashMap<_, _>>(),
                })
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatioMode {
    Oracle,
    Learned,
}

/// LoS/NLoS covariate shift study. Ratios are LoS:NLoS counts, so a ratio
/// `r` means `p_los = r / (1 + r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShiftSpec {
    pub cal_los_ratio: f64,
    pub test_los_ratios: Vec<f64>,
    pub ratio_mode: RatioMode,
    pub n_cal: usize,
    pub n_test: usize,
    pub alpha: f64,
    /// Samples per population used to fit the learned ratio model.
    pub n_ratio_train: usize,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self {
            cal_los_ratio: 1.0,
            test_los_ratios: vec![0.25, 1.0, 4.0],
            ratio_mode: RatioMode::Oracle,
            n_cal: 400,
            n_test: 400,
            alpha: 0.15,
            n_ratio_train: 400,
        }
    }
}

pub fn los_probability(ratio: f64) -> f64 {
    ratio / (1.0 + ratio)
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let ok = |r: f64| r.is_finite() && r > 0.0;
        if !ok(self.cal_los_ratio) || !self.test_los_ratios.iter().all(|&r| ok(r)) || self.test_los_ratios.is_empty() {
            return Err(HarnessError::Config("LoS ratios must be positive and finite".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(HarnessError::Config(format!("shift alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.n_cal == 0 || self.n_test == 0 {
            return Err(HarnessError::Config("shift n_cal and n_test must be positive".into()));
        }
        Ok(())
    }

    pub fn oracle(&self, test_ratio: f64) -> LosOracleRatio {
        LosOracleRatio::new(los_probability(self.cal_los_ratio), los_probability(test_ratio))
            .expect("validated ratios")
    }
}

/// How likelihood ratios are obtained in a shift run.
pub enum RatioSource {
    Oracle(LosOracleRatio),
    Learned(LogisticRatioModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Alpha,
    NCal,
    Sub6Power,
    Sub6Antennas,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Alpha => "alpha",
            Self::NCal => "n_cal",
            Self::Sub6Power => "sub6_power",
            Self::Sub6Antennas => "sub6_antennas",
        })
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alpha" => Ok(Self::Alpha),
            "n_cal" => Ok(Self::NCal),
            "sub6_power" => Ok(Self::Sub6Power),
            "sub6_antennas" => Ok(Self::Sub6Antennas),
            _ => Err(HarnessError::Config(format!(
                "unknown sweep axis {s:?}; expected alpha, n_cal, sub6_power or sub6_antennas"
            ))),
        }
    }
}

/// One sweep: `values` are alphas, calibration sizes, sub-6 GHz pilot powers
/// (dBm) or sub-6 GHz antenna counts depending on `axis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}
