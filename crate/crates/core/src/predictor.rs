//! Beam-probability predictors and the min-entropy-adjusted beam score.
//!
//! Any model mapping a sub-6 GHz estimate to a probability over the
//! codebook can drive calibration; the coverage guarantee does not depend on
//! its quality. Shipped predictors:
//!
//! * [`UniformPredictor`]: no information, every beam equally likely.
//! * [`AdtPredictor`]: angle-delay spectrum of the sub-6 GHz estimate mapped
//!   onto the codebook grid and passed through a softmax.
//! * [`OraclePredictor`]: peeks at the mmWave channel; for tests only.
//! * [`ExternalPredictor`]: matrices produced out-of-band, keyed by sample id.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use std::collections::HashMap;
use std::f64::consts::PI;

use crate::codebook::{angle_sines, BeamIndex, PolarCodebook};
use crate::config::{SystemConfig, SPEED_OF_LIGHT};
use crate::error::PredictError;
use crate::metrics::optimal_beam;

/// Lower clamp applied to probabilities before taking logs.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Nonnegative `N_t x S` matrix summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    p: Array2<f64>,
}

impl ProbabilityMatrix {
    /// Normalises nonnegative weights into a probability matrix, clamping
    /// entries to [`PROBABILITY_FLOOR`] first.
    pub fn from_weights(mut w: Array2<f64>) -> Result<Self, PredictError> {
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(PredictError::InvalidProbabilities(
                "entries must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = w.sum();
        if total <= 0.0 {
            return Err(PredictError::InvalidProbabilities("all entries are zero".into()));
        }
        w.mapv_inplace(|x| x / total);
        let clamped = w.iter().any(|&x| x < PROBABILITY_FLOOR);
        if clamped {
            w.mapv_inplace(|x| x.max(PROBABILITY_FLOOR));
        }
        let total: f64 = w.sum();
        if clamped || (total - 1.0).abs() > 1e-12 {
            w.mapv_inplace(|x| x / total);
        }
        Ok(Self { p: w })
    }

    pub fn uniform(antennas: usize, rings: usize) -> Self {
        let k = (antennas * rings) as f64;
        Self {
            p: Array2::from_elem((antennas, rings), 1.0 / k),
        }
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.p.view()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.p.dim()
    }

    /// Entries in codebook flat order.
    pub fn flat(&self) -> &[f64] {
        self.p.as_slice().expect("standard layout")
    }

    pub fn get(&self, idx: BeamIndex) -> f64 {
        self.p[(idx.n - 1, idx.s - 1)]
    }

    pub fn max(&self) -> f64 {
        self.p.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Most likely beam, lowest `n` then lowest `s` on ties.
    pub fn argmax(&self) -> BeamIndex {
        let flat = self.flat();
        let mut best = 0;
        for (k, &x) in flat.iter().enumerate() {
            if x > flat[best] {
                best = k;
            }
        }
        let rings = self.p.ncols();
        BeamIndex::new(best / rings + 1, best % rings + 1)
    }
}

/// Beam scores `u(n, s) = -ln P_max - ln P(n, s)`, lower is more likely.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    u: Array2<f64>,
}

impl ScoreMatrix {
    pub fn from_probabilities(p: &ProbabilityMatrix) -> Self {
        let min_entropy = -p.max().ln();
        Self {
            u: p.view().mapv(|x| min_entropy - x.ln()),
        }
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.u.view()
    }

    pub fn flat(&self) -> &[f64] {
        self.u.as_slice().expect("standard layout")
    }

    pub fn get(&self, idx: BeamIndex) -> f64 {
        self.u[(idx.n - 1, idx.s - 1)]
    }

    pub fn min(&self) -> f64 {
        self.u.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn dim(&self) -> (usize, usize) {
        self.u.dim()
    }
}

pub fn score_matrix(p: &ProbabilityMatrix) -> ScoreMatrix {
    ScoreMatrix::from_probabilities(p)
}

/// What a predictor may look at for one sample.
#[derive(Debug, Clone, Copy)]
pub struct PredictorInput<'a> {
    pub sample_id: u64,
    /// `M_sub x N_sub` LS estimate, rows `h_m^H`.
    pub h_sub_est: ArrayView2<'a, Complex64>,
    /// Ground-truth mmWave channel; only the oracle reads it.
    pub h_mm: Option<ArrayView2<'a, Complex64>>,
}

pub trait BeamPredictor: Send + Sync {
    /// Short identifier used in reports to match calibration and evaluation.
    fn name(&self) -> String;

    fn predict(
        &self,
        input: &PredictorInput<'_>,
        cb: &PolarCodebook,
        config: &SystemConfig,
    ) -> Result<ProbabilityMatrix, PredictError>;
}

fn check_sub6_shape(input: &PredictorInput<'_>, config: &SystemConfig) -> Result<(), PredictError> {
    let expected = (config.subcarriers_sub, config.antennas_sub);
    let got = input.h_sub_est.dim();
    if got != expected {
        return Err(PredictError::Shape {
            what: "sub-6 GHz estimate",
            expected,
            got,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPredictor;

impl BeamPredictor for UniformPredictor {
    fn name(&self) -> String {
        "uniform".into()
    }

    fn predict(
        &self,
        input: &PredictorInput<'_>,
        cb: &PolarCodebook,
        config: &SystemConfig,
    ) -> Result<ProbabilityMatrix, PredictError> {
        check_sub6_shape(input, config)?;
        Ok(ProbabilityMatrix::uniform(cb.antennas(), cb.rings()))
    }
}

/// Puts `1 - delta` on the true best beam and spreads `delta` evenly.
#[derive(Debug, Clone, Copy)]
pub struct OraclePredictor {
    pub delta: f64,
}

impl Default for OraclePredictor {
    fn default() -> Self {
        Self { delta: 0.01 }
    }
}

impl BeamPredictor for OraclePredictor {
    fn name(&self) -> String {
        format!("oracle(delta={})", self.delta)
    }

    fn predict(
        &self,
        input: &PredictorInput<'_>,
        cb: &PolarCodebook,
        config: &SystemConfig,
    ) -> Result<ProbabilityMatrix, PredictError> {
        check_sub6_shape(input, config)?;
        let h = input.h_mm.ok_or(PredictError::MissingChannel)?;
        let best = optimal_beam(h, cb, config).best_index();
        let k = cb.len();
        let rest = if k > 1 { self.delta / (k - 1) as f64 } else { 0.0 };
        let mut w = Array2::from_elem((cb.antennas(), cb.rings()), rest);
        w[(best.n - 1, best.s - 1)] = if k > 1 { 1.0 - self.delta } else { 1.0 };
        ProbabilityMatrix::from_weights(w)
    }
}

/// Angle-delay spectrum predictor.
///
/// 1. Spatial matched filter of each subcarrier's estimate on a centred,
///    4x oversampled grid of `sin(theta)` values.
/// 2. Inverse DFT across subcarriers to the delay domain.
/// 3. Each delay bin at the angle bin nearest `theta_n` adds its normalised
///    energy to the ring `(n, s)` whose delay `r_{n,s} / c` is nearest; the
///    outermost ring thus collects everything beyond it.
/// 4. Softmax over cells with temperature `temperature`.
#[derive(Debug, Clone, Copy)]
pub struct AdtPredictor {
    pub temperature: f64,
}

impl AdtPredictor {
    pub const OVERSAMPLING: usize = 4;
    pub const DEFAULT_TEMPERATURE: f64 = 0.01;

    pub fn new(temperature: f64) -> Result<Self, PredictError> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(PredictError::Temperature(temperature));
        }
        Ok(Self { temperature })
    }
}

impl Default for AdtPredictor {
    fn default() -> Self {
        Self {
            temperature: Self::DEFAULT_TEMPERATURE,
        }
    }
}

/// Angle-delay energy spectrum of a sub-6 GHz estimate, normalised to unit
/// total energy. Shape `M_sub x (4 N_sub)`: rows are delay bins, columns the
/// angle grid of [`angle_grid`].
pub fn angle_delay_spectrum(h_sub_est: ArrayView2<'_, Complex64>) -> Array2<f64> {
    let (m_sub, n_sub) = h_sub_est.dim();
    let grid = angle_grid(n_sub);
    let q = grid.len();
    // Columns of the estimate are conj(row).
    let mut angle = Array2::<Complex64>::zeros((m_sub, q));
    for m in 0..m_sub {
        for (qi, &psi) in grid.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n_sub {
                acc += h_sub_est[(m, k)].conj() * Complex64::from_polar(1.0, PI * k as f64 * psi);
            }
            angle[(m, qi)] = acc;
        }
    }
    let mut energy = Array2::<f64>::zeros((m_sub, q));
    for d in 0..m_sub {
        for qi in 0..q {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..m_sub {
                // subcarrier index runs 1..=M
                let phase = 2.0 * PI * (((m + 1) * d) % m_sub) as f64 / m_sub as f64;
                acc += angle[(m, qi)] * Complex64::from_polar(1.0, phase);
            }
            energy[(d, qi)] = (acc / m_sub as f64).norm_sqr();
        }
    }
    let total = energy.sum();
    if total > 0.0 {
        energy.mapv_inplace(|e| e / total);
    }
    energy
}

/// Centred `sin(theta)` grid, `(2q + 1 - Q) / Q` for `q = 0..Q`, `Q = 4N`.
pub fn angle_grid(antennas_sub: usize) -> Vec<f64> {
    let q = AdtPredictor::OVERSAMPLING * antennas_sub;
    (0..q)
        .map(|i| (2.0 * i as f64 + 1.0 - q as f64) / q as f64)
        .collect()
}

/// Nearest grid bin to `sin_theta`, mirror-symmetric in the sign.
pub fn nearest_angle_bin(sin_theta: f64, grid_len: usize) -> usize {
    let q = grid_len as f64;
    let positive = |s: f64| -> usize {
        let x = ((q * s + q - 1.0) / 2.0).round();
        x.clamp(0.0, q - 1.0) as usize
    };
    if sin_theta < 0.0 {
        grid_len - 1 - positive(-sin_theta)
    } else {
        positive(sin_theta)
    }
}

/// Delay of each inverse-DFT bin. Taps start at `d = 1`, so bin 0 holds
/// the alias of `d = M_sub` rather than zero delay.
pub fn delay_bin_delays(ts_sub: f64, subcarriers_sub: usize) -> Vec<f64> {
    (0..subcarriers_sub)
        .map(|d| if d == 0 { subcarriers_sub } else { d } as f64 * ts_sub)
        .collect()
}

/// Ring (0-based) whose delay `r / c` is nearest `delay`; ties go to the
/// farther ring.
pub fn nearest_ring(delay: f64, ring_delays: &[f64]) -> usize {
    let mut best = 0;
    for (s, &t) in ring_delays.iter().enumerate() {
        if (delay - t).abs() < (delay - ring_delays[best]).abs() {
            best = s;
        }
    }
    best
}

impl BeamPredictor for AdtPredictor {
    fn name(&self) -> String {
        format!("adt(temp={})", self.temperature)
    }

    fn predict(
        &self,
        input: &PredictorInput<'_>,
        cb: &PolarCodebook,
        config: &SystemConfig,
    ) -> Result<ProbabilityMatrix, PredictError> {
        check_sub6_shape(input, config)?;
        let spectrum = angle_delay_spectrum(input.h_sub_est);
        let q = spectrum.ncols();
        let sines: Vec<f64> = angle_sines(cb.antennas()).collect();
        let bin_delays = delay_bin_delays(config.ts_sub(), config.subcarriers_sub);
        let mut energy = Array2::<f64>::zeros((cb.antennas(), cb.rings()));
        for (n, &s) in sines.iter().enumerate() {
            let qi = nearest_angle_bin(s, q);
            let ring_delays: Vec<f64> = (1..=cb.rings())
                .map(|ring| cb.distance(n + 1, ring) / SPEED_OF_LIGHT)
                .collect();
            for (d, &t) in bin_delays.iter().enumerate() {
                energy[(n, nearest_ring(t, &ring_delays))] += spectrum[(d, qi)];
            }
        }
        let peak = energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights = energy.mapv(|e| ((e - peak) / self.temperature).exp());
        ProbabilityMatrix::from_weights(weights)
    }
}

/// Probability matrices computed elsewhere, looked up by sample id.
#[derive(Debug, Clone, Default)]
pub struct ExternalPredictor {
    pub label: String,
    pub matrices: HashMap<u64, ProbabilityMatrix>,
}

impl BeamPredictor for ExternalPredictor {
    fn name(&self) -> String {
        format!("external({})", self.label)
    }

    fn predict(
        &self,
        input: &PredictorInput<'_>,
        cb: &PolarCodebook,
        _config: &SystemConfig,
    ) -> Result<ProbabilityMatrix, PredictError> {
        let p = self
            .matrices
            .get(&input.sample_id)
            .ok_or(PredictError::MissingSample(input.sample_id))?;
        let expected = (cb.antennas(), cb.rings());
        if p.dim() != expected {
            return Err(PredictError::Shape {
                what: "external probability matrix",
                expected,
                got: p.dim(),
            });
        }
        Ok(p.clone())
    }
}
