//! Spectral efficiency, exhaustive best-beam search, suboptimality ratios and
//! eps-good beam sets.

use ndarray::{Array2, ArrayView1, ArrayView2};
use num_complex::Complex64;

use crate::codebook::{BeamIndex, PolarCodebook};
use crate::config::SystemConfig;

/// Rates of every codebook beam for one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// Flat beam order of [`PolarCodebook`] (bits/s/Hz).
    rates: Vec<f64>,
    antennas: usize,
    rings: usize,
    best_flat: usize,
    best_rate: f64,
}

impl RateReport {
    /// Builds a report from flat per-beam rates; the best beam is the first
    /// maximiser in flat order (lowest `n`, then lowest `s`).
    pub fn from_rates(rates: Vec<f64>, antennas: usize, rings: usize) -> Self {
        assert_eq!(rates.len(), antennas * rings);
        let mut best_flat = 0;
        for (k, &r) in rates.iter().enumerate() {
            if r > rates[best_flat] {
                best_flat = k;
            }
        }
        let best_rate = rates[best_flat];
        Self {
            rates,
            antennas,
            rings,
            best_flat,
            best_rate,
        }
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// `N x S` view of the rates.
    pub fn per_beam_rate(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.antennas, self.rings), &self.rates).expect("shape checked at build")
    }

    pub fn best_index(&self) -> BeamIndex {
        BeamIndex::new(self.best_flat / self.rings + 1, self.best_flat % self.rings + 1)
    }

    pub fn best_flat(&self) -> usize {
        self.best_flat
    }

    pub fn best_rate(&self) -> f64 {
        self.best_rate
    }

    /// Suboptimality ratio of flat beam `k`.
    pub fn ratio(&self, k: usize) -> f64 {
        ratio_of(self.rates[k], self.best_rate)
    }

    /// Flat indices of the eps-good beams, ascending.
    pub fn eps_good_flat(&self, eps: f64) -> Vec<usize> {
        (0..self.rates.len())
            .filter(|&k| self.ratio(k) >= 1.0 - eps)
            .collect()
    }
}

/// `rate / best`, with the zero-channel convention `0 / 0 = 1`.
pub fn ratio_of(rate: f64, best: f64) -> f64 {
    if best <= 0.0 {
        1.0
    } else {
        (rate / best).clamp(0.0, 1.0)
    }
}

fn rate_from_gains(gains: impl Iterator<Item = f64>, config: &SystemConfig) -> f64 {
    let m = config.subcarriers as f64;
    let snr_scale = config.tx_power / m / config.noise_power;
    gains.map(|g| (1.0 + snr_scale * g).log2()).sum::<f64>() / m
}

/// `h_m^H w` for every subcarrier.
pub fn projection(w: ArrayView1<'_, Complex64>, h: ArrayView2<'_, Complex64>) -> Vec<Complex64> {
    h.rows()
        .into_iter()
        .map(|row| row.iter().zip(w.iter()).map(|(a, b)| a * b).sum())
        .collect()
}

/// Average spectral efficiency of beam `w` over all subcarriers of `h`.
pub fn spectral_efficiency(w: ArrayView1<'_, Complex64>, h: ArrayView2<'_, Complex64>, config: &SystemConfig) -> f64 {
    rate_from_gains(projection(w, h).iter().map(|z| z.norm_sqr()), config)
}

/// `|h_m^H w_k|^2` for every subcarrier `m` (rows) and beam `k` (columns).
pub fn beam_gains(h: ArrayView2<'_, Complex64>, cb: &PolarCodebook) -> Array2<f64> {
    let beams = cb.beams();
    let (m, _) = h.dim();
    let mut out = Array2::zeros((m, cb.len()));
    for (mi, row) in h.rows().into_iter().enumerate() {
        for (k, beam) in beams.rows().into_iter().enumerate() {
            let z: Complex64 = row.iter().zip(beam.iter()).map(|(a, b)| a * b).sum();
            out[(mi, k)] = z.norm_sqr();
        }
    }
    out
}

/// Exhaustive search over all `N_t * S` beams.
pub fn optimal_beam(h: ArrayView2<'_, Complex64>, cb: &PolarCodebook, config: &SystemConfig) -> RateReport {
    let gains = beam_gains(h, cb);
    let rates = gains
        .columns()
        .into_iter()
        .map(|col| rate_from_gains(col.iter().copied(), config))
        .collect();
    RateReport::from_rates(rates, cb.antennas(), cb.rings())
}

/// `R(w, H) / R(f*, H)` in `[0, 1]`; 1 when the best rate is zero.
pub fn suboptimality_ratio(
    w: ArrayView1<'_, Complex64>,
    h: ArrayView2<'_, Complex64>,
    report: &RateReport,
    config: &SystemConfig,
) -> f64 {
    ratio_of(spectral_efficiency(w, h, config), report.best_rate())
}

/// Beams whose suboptimality ratio is at least `1 - eps`. Never empty: the
/// best beam always qualifies.
pub fn eps_good_set(report: &RateReport, cb: &PolarCodebook, eps: f64) -> Vec<BeamIndex> {
    report
        .eps_good_flat(eps)
        .into_iter()
        .map(|k| cb.beam_index(k))
        .collect()
}
