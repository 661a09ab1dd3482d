//! Synthetic dual-band multipath scenarios and OFDM channel synthesis.
//!
//! A [`ScenarioSample`] is one UE drop: a list of paths for each band that
//! share geometry (the sub-6 GHz list additionally carries diffuse paths).
//! [`mmwave_channel`] and [`sub6_channel`] turn the path lists into
//! frequency-domain channels through a tap model with a raised-cosine pulse,
//! and [`ls_estimate`] adds the pilot-based estimation noise.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::array::{far_field_steering_centred, near_field_steering};
use crate::config::{GeometryConfig, SystemConfig, SPEED_OF_LIGHT};
use crate::error::{ChannelError, ConfigError};

/// Raised-cosine roll-off of the pulse-shaping filter.
pub const PULSE_ROLLOFF: f64 = 0.4;
/// The pulse is zero beyond this many sampling periods from its centre.
pub const PULSE_SPAN: f64 = 4.0;

/// Raised-cosine pulse with `p(0) = 1`, time in units of the sampling period.
pub fn pulse(t: f64) -> f64 {
    if t.abs() > PULSE_SPAN {
        return 0.0;
    }
    let beta = PULSE_ROLLOFF;
    let sinc = |x: f64| if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
    let denom = 1.0 - (2.0 * beta * t).powi(2);
    if denom.abs() < 1e-10 {
        PI / 4.0 * sinc(1.0 / (2.0 * beta))
    } else {
        sinc(t) * (PI * beta * t).cos() / denom
    }
}

/// One propagation path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub gain: Complex64,
    /// Angle of departure from broadside (rad).
    pub aod: f64,
    /// Time of arrival (s).
    pub toa: f64,
    /// BS-UE distance for the LoS path, BS-scatterer distance otherwise (m).
    pub dist: f64,
    pub is_los: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSample {
    pub mmwave_paths: Vec<PathParams>,
    pub sub6_paths: Vec<PathParams>,
    pub ue_position: [f64; 2],
    pub los_condition: bool,
}

impl ScenarioSample {
    pub fn ue_distance(&self, geometry: &GeometryConfig) -> f64 {
        let [bx, by] = geometry.bs_position;
        (self.ue_position[0] - bx).hypot(self.ue_position[1] - by)
    }
}

/// Ground-truth mmWave channel and noisy sub-6 GHz estimate of one drop.
///
/// `h_mm` is `M x N_t` with row `m` equal to `h_m^H`; `h_sub_est` is
/// `M_sub x N_sub` laid out the same way.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPair {
    pub sample_id: u64,
    pub h_mm: Array2<Complex64>,
    pub h_sub_est: Array2<Complex64>,
    pub scenario: ScenarioSample,
}

impl ChannelPair {
    /// Synthesizes both channels for `scenario` and draws the LS estimate.
    pub fn synthesize<R: Rng + ?Sized>(
        sample_id: u64,
        scenario: ScenarioSample,
        config: &SystemConfig,
        rng: &mut R,
    ) -> Result<Self, ChannelError> {
        let h_mm = mmwave_channel(&scenario, config)?;
        let h_sub = sub6_channel(&scenario, config)?;
        let h_sub_est = ls_estimate(&h_sub, config, rng);
        Ok(Self {
            sample_id,
            h_mm,
            h_sub_est,
            scenario,
        })
    }
}

/// Draws a complex normal `CN(0, variance)`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

fn uniform_count<R: Rng + ?Sized>(rng: &mut R, range: [usize; 2]) -> usize {
    rng.random_range(range[0]..=range[1])
}

/// Exponential draw truncated to `(0, max]` by inverting the truncated CDF.
fn truncated_exponential<R: Rng + ?Sized>(rng: &mut R, mean: f64, max: f64) -> f64 {
    let cap = 1.0 - (-max / mean).exp();
    loop {
        let u: f64 = rng.random::<f64>() * cap;
        let x = -mean * (1.0 - u).ln();
        if x > 0.0 {
            return x.min(max);
        }
    }
}

/// Scatterer on the ellipse with foci at BS and UE: the point along unit
/// direction `dir` from the BS whose bounce path has total length `total`.
fn scatterer_distance(dir: [f64; 2], ue_rel: [f64; 2], total: f64) -> f64 {
    let d2 = ue_rel[0] * ue_rel[0] + ue_rel[1] * ue_rel[1];
    let proj = dir[0] * ue_rel[0] + dir[1] * ue_rel[1];
    (total * total - d2) / (2.0 * (total - proj))
}

fn free_space_amplitude(wavelength: f64, length: f64) -> f64 {
    wavelength / (4.0 * PI * length)
}

fn db_amp(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// One scattered path's geometry: angle, BS-scatterer distance, delay.
struct Bounce {
    aod: f64,
    dist: f64,
    toa: f64,
}

fn draw_bounce<R: Rng + ?Sized>(rng: &mut R, geometry: &GeometryConfig, ue_rel: [f64; 2]) -> Bounce {
    let direct = ue_rel[0].hypot(ue_rel[1]);
    let phi = rng.random_range(0.0..2.0 * PI);
    let dir = [phi.cos(), phi.sin()];
    let excess = truncated_exponential(rng, geometry.excess_delay_mean, geometry.excess_delay_max);
    let total = direct + SPEED_OF_LIGHT * excess;
    Bounce {
        aod: dir[0].clamp(-1.0, 1.0).asin(),
        dist: scatterer_distance(dir, ue_rel, total),
        toa: total / SPEED_OF_LIGHT,
    }
}

/// Generates one UE drop.
///
/// LoS drops carry a direct path whose delay is `dist / c` and whose gain
/// follows free-space loss at each carrier. Scattered paths are shared by
/// both bands (angles and delays jittered slightly at sub-6 GHz) with
/// partially correlated log-normal shadowing and an extra mmWave loss; the
/// sub-6 GHz list is extended with diffuse paths seen only in that band.
pub fn generate_scenario<R: Rng + ?Sized>(
    config: &SystemConfig,
    geometry: &GeometryConfig,
    rng: &mut R,
) -> Result<ScenarioSample, ConfigError> {
    config.validate()?;
    geometry.validate()?;
    let max_delay = geometry.max_path_delay();
    for (band, span) in [
        ("mmWave", config.taps as f64 * config.ts()),
        ("sub-6 GHz", config.taps_sub as f64 * config.ts_sub()),
    ] {
        if max_delay > span {
            return Err(ConfigError::Geometry(format!(
                "{band} tap span {span:.3e} s cannot hold delays up to {max_delay:.3e} s"
            )));
        }
    }

    let [bx, by] = geometry.bs_position;
    let ue = loop {
        let x = rng.random_range(0.0..=geometry.room_width);
        let y = rng.random_range(0.0..=geometry.room_length);
        if (x - bx).hypot(y - by) >= geometry.min_ue_distance {
            break [x, y];
        }
    };
    let ue_rel = [ue[0] - bx, ue[1] - by];
    let direct = ue_rel[0].hypot(ue_rel[1]);
    let los = rng.random_bool(geometry.p_los);

    let lambda = config.wavelength();
    let lambda_sub = config.wavelength_sub();
    let mut mm = Vec::new();
    let mut sub = Vec::new();

    if los {
        let toa = direct / SPEED_OF_LIGHT;
        let aod = (ue_rel[0] / direct).clamp(-1.0, 1.0).asin();
        let path = |wavelength: f64, fc: f64, gain_db: f64| PathParams {
            gain: Complex64::from_polar(
                free_space_amplitude(wavelength, direct) * db_amp(gain_db),
                -2.0 * PI * fc * toa,
            ),
            aod,
            toa,
            dist: direct,
            is_los: true,
        };
        mm.push(path(lambda, config.fc, geometry.link_gain_db));
        sub.push(path(lambda_sub, config.fc_sub, geometry.link_gain_sub_db));
    }

    let mut n_scatter = uniform_count(rng, geometry.scatterers);
    if !los {
        n_scatter = n_scatter.max(1);
    }
    let rho = geometry.shadowing_correlation.clamp(0.0, 1.0);
    for _ in 0..n_scatter {
        let b = draw_bounce(rng, geometry, ue_rel);
        let total = b.toa * SPEED_OF_LIGHT;
        let common: f64 = StandardNormal.sample(rng);
        let own_mm: f64 = StandardNormal.sample(rng);
        let own_sub: f64 = StandardNormal.sample(rng);
        let shadow = |own: f64| geometry.shadowing_db * (rho.sqrt() * common + (1.0 - rho).sqrt() * own);
        let mm_amp = free_space_amplitude(lambda, total)
            * db_amp(geometry.link_gain_db - geometry.nlos_loss_db - geometry.mmwave_nlos_extra_db + shadow(own_mm));
        let sub_amp = free_space_amplitude(lambda_sub, total)
            * db_amp(geometry.link_gain_sub_db - geometry.nlos_loss_db + shadow(own_sub));
        mm.push(PathParams {
            gain: Complex64::from_polar(mm_amp, rng.random_range(0.0..2.0 * PI)),
            aod: b.aod,
            toa: b.toa,
            dist: b.dist,
            is_los: false,
        });
        let jitter_aod = if geometry.angle_jitter > 0.0 {
            rng.random_range(-geometry.angle_jitter..=geometry.angle_jitter)
        } else {
            0.0
        };
        let jitter_toa = if geometry.delay_jitter > 0.0 {
            rng.random_range(0.0..=geometry.delay_jitter)
        } else {
            0.0
        };
        sub.push(PathParams {
            gain: Complex64::from_polar(sub_amp, rng.random_range(0.0..2.0 * PI)),
            aod: (b.aod + jitter_aod).clamp(-PI / 2.0, PI / 2.0),
            toa: b.toa + jitter_toa,
            dist: b.dist,
            is_los: false,
        });
    }

    for _ in 0..uniform_count(rng, geometry.diffuse_paths) {
        let b = draw_bounce(rng, geometry, ue_rel);
        let total = b.toa * SPEED_OF_LIGHT;
        let shadow: f64 = StandardNormal.sample(rng);
        let amp = free_space_amplitude(lambda_sub, total)
            * db_amp(geometry.link_gain_sub_db - geometry.nlos_loss_db + geometry.shadowing_db * shadow);
        sub.push(PathParams {
            gain: Complex64::from_polar(amp, rng.random_range(0.0..2.0 * PI)),
            aod: b.aod,
            toa: b.toa,
            dist: b.dist,
            is_los: false,
        });
    }

    Ok(ScenarioSample {
        mmwave_paths: mm,
        sub6_paths: sub,
        ue_position: ue,
        los_condition: los,
    })
}

fn check_delays(
    paths: &[PathParams],
    taps: usize,
    ts: f64,
    band: &'static str,
) -> Result<(), ChannelError> {
    let span = taps as f64 * ts;
    for (index, p) in paths.iter().enumerate() {
        if p.toa > span {
            return Err(ChannelError::DelayOutOfRange {
                band,
                index,
                delay: p.toa,
                span,
            });
        }
    }
    Ok(())
}

/// Per-path tap weights `p(d T_s - tau)` for `d = 1..=taps`.
fn tap_weights(toa: f64, taps: usize, ts: f64) -> impl Iterator<Item = (usize, f64)> {
    (1..=taps).map(move |d| (d, pulse(d as f64 - toa / ts)))
}

/// mmWave delay-domain taps, `D x N_t`, row `d - 1` holding `h_d^H`.
pub fn mmwave_taps(sample: &ScenarioSample, config: &SystemConfig) -> Result<Array2<Complex64>, ChannelError> {
    check_delays(&sample.mmwave_paths, config.taps, config.ts(), "mmWave")?;
    let n = config.antennas;
    let scale = (n as f64).sqrt();
    let mut taps = Array2::zeros((config.taps, n));
    for path in &sample.mmwave_paths {
        let b = near_field_steering(path.aod, path.dist, n, config.wavelength());
        let row: Array1<Complex64> = b.mapv(|z| z.conj() * path.gain * scale);
        for (d, w) in tap_weights(path.toa, config.taps, config.ts()) {
            if w != 0.0 {
                taps.row_mut(d - 1).scaled_add(Complex64::from(w), &row);
            }
        }
    }
    Ok(taps)
}

/// Sub-6 GHz delay-domain taps, `D_sub x N_sub`, row `d - 1` holding
/// `h_d^H`. Paths beyond the sub-6 GHz Rayleigh distance use the planar
/// response, nearer ones the spherical one.
pub fn sub6_taps(sample: &ScenarioSample, config: &SystemConfig) -> Result<Array2<Complex64>, ChannelError> {
    check_delays(&sample.sub6_paths, config.taps_sub, config.ts_sub(), "sub-6 GHz")?;
    let n = config.antennas_sub;
    let scale = (n as f64).sqrt();
    let rayleigh = config.rayleigh_distance_sub();
    let mut taps = Array2::zeros((config.taps_sub, n));
    for path in &sample.sub6_paths {
        let a = sub6_response(path.aod, path.dist, n, config.wavelength_sub(), rayleigh);
        // Rows store h_d^H, the conjugate of the column tap h_d.
        let row: Array1<Complex64> = a.mapv(|z| (z * path.gain * scale).conj());
        for (d, w) in tap_weights(path.toa, config.taps_sub, config.ts_sub()) {
            if w != 0.0 {
                taps.row_mut(d - 1).scaled_add(Complex64::from(w), &row);
            }
        }
    }
    Ok(taps)
}

/// Sub-6 GHz array response with the far/near-field branch switch at
/// `rayleigh`.
pub fn sub6_response(aod: f64, dist: f64, antennas: usize, wavelength: f64, rayleigh: f64) -> Array1<Complex64> {
    if dist > rayleigh {
        far_field_steering_centred(aod, antennas)
    } else {
        near_field_steering(aod, dist, antennas, wavelength)
    }
}

/// Frequency transform `h_m^H = sum_d h_d^H e^{-j 2 pi m d / M}` for
/// `m = 1..=M`, taps indexed from `d = 1`.
pub fn taps_to_frequency(taps: &Array2<Complex64>, subcarriers: usize) -> Array2<Complex64> {
    let (n_taps, n_ant) = taps.dim();
    let mut out = Array2::zeros((subcarriers, n_ant));
    for m in 1..=subcarriers {
        let mut row = out.row_mut(m - 1);
        for d in 1..=n_taps {
            let phase = -2.0 * PI * ((m * d) % subcarriers) as f64 / subcarriers as f64;
            row.scaled_add(Complex64::from_polar(1.0, phase), &taps.row(d - 1));
        }
    }
    out
}

/// Ground-truth mmWave channel `H`, `M x N_t`.
pub fn mmwave_channel(sample: &ScenarioSample, config: &SystemConfig) -> Result<Array2<Complex64>, ChannelError> {
    Ok(taps_to_frequency(&mmwave_taps(sample, config)?, config.subcarriers))
}

/// Noise-free sub-6 GHz channel, `M_sub x N_sub`, row `m` holding `h_m^H`
/// where the column `h_m = sum_d h_d e^{-j 2 pi m d / M_sub}`.
pub fn sub6_channel(sample: &ScenarioSample, config: &SystemConfig) -> Result<Array2<Complex64>, ChannelError> {
    let columns = sub6_taps(sample, config)?.mapv(|z| z.conj());
    Ok(taps_to_frequency(&columns, config.subcarriers_sub).mapv(|z| z.conj()))
}

/// LS estimate from one pilot per subcarrier of amplitude
/// `sqrt(P_sub / M_sub)`: truth plus `CN(0, sigma^2 M_sub / P_sub)` noise.
pub fn ls_estimate<R: Rng + ?Sized>(h_sub: &Array2<Complex64>, config: &SystemConfig, rng: &mut R) -> Array2<Complex64> {
    let pilot = (config.pilot_power_sub / config.subcarriers_sub as f64).sqrt();
    let sigma2 = config.noise_power_sub;
    h_sub.mapv(|h| {
        if sigma2 == 0.0 {
            return h;
        }
        let received = h * pilot + complex_normal(rng, sigma2);
        received / pilot
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn single_los(aod: f64, dist: f64) -> ScenarioSample {
        let p = PathParams {
            gain: Complex64::new(1.0, 0.0),
            aod,
            toa: dist / SPEED_OF_LIGHT,
            dist,
            is_los: true,
        };
        ScenarioSample {
            mmwave_paths: vec![p.clone()],
            sub6_paths: vec![p],
            ue_position: [0.0, 0.0],
            los_condition: true,
        }
    }

    #[test]
    fn pulse_shape() {
        assert_eq!(pulse(0.0), 1.0);
        for k in [1.0, 2.0, 3.0, -2.0] {
            assert!(pulse(k).abs() < 1e-15);
        }
        assert_eq!(pulse(4.5), 0.0);
        let t0 = 1.0 / (2.0 * PULSE_ROLLOFF);
        assert!((pulse(t0) - pulse(t0 + 1e-7)).abs() < 1e-5);
        assert!((pulse(0.3) - pulse(-0.3)).abs() < 1e-15);
    }

    #[test]
    fn single_path_los_geometry() {
        let cfg = SystemConfig::desk_profile();
        let geo = GeometryConfig {
            p_los: 1.0,
            scatterers: [0, 0],
            diffuse_paths: [0, 0],
            ..Default::default()
        };
        let mut rng = stream(1, &[0]);
        let s = generate_scenario(&cfg, &geo, &mut rng).unwrap();
        assert_eq!(s.mmwave_paths.len(), 1);
        assert_eq!(s.sub6_paths.len(), 1);
        let d = s.ue_distance(&geo);
        let p = &s.mmwave_paths[0];
        assert!(p.is_los && s.los_condition);
        assert!((p.toa - d / SPEED_OF_LIGHT).abs() < 1e-18);
        let fspl = cfg.wavelength() / (4.0 * PI * d) * db_amp(geo.link_gain_db);
        assert!((p.gain.norm() - fspl).abs() / fspl < 1e-12);
        let fspl_sub = cfg.wavelength_sub() / (4.0 * PI * d) * db_amp(geo.link_gain_sub_db);
        assert!((s.sub6_paths[0].gain.norm() - fspl_sub).abs() / fspl_sub < 1e-12);
    }

    #[test]
    fn nlos_paths_are_late_and_weaker() {
        let cfg = SystemConfig::desk_profile();
        let geo = GeometryConfig {
            p_los: 0.0,
            ..Default::default()
        };
        let mut rng = stream(2, &[0]);
        for _ in 0..200 {
            let s = generate_scenario(&cfg, &geo, &mut rng).unwrap();
            assert!(!s.los_condition);
            let d = s.ue_distance(&geo);
            for p in s.mmwave_paths.iter().chain(&s.sub6_paths) {
                assert!(!p.is_los);
                assert!(p.toa > d / SPEED_OF_LIGHT);
                assert!(p.dist > 0.0 && p.gain.norm().is_finite() && p.gain.norm() > 0.0);
            }
            assert!(s.sub6_paths.len() > s.mmwave_paths.len());
            assert!(!s.mmwave_paths.is_empty());
        }
    }

    #[test]
    fn scattered_path_length_matches_delay() {
        let ue_rel = [3.0, -4.0];
        let dir = [0.6f64.cos(), 0.6f64.sin()];
        let total = 9.0;
        let r = scatterer_distance(dir, ue_rel, total);
        let p = [r * dir[0], r * dir[1]];
        let back = (ue_rel[0] - p[0]).hypot(ue_rel[1] - p[1]);
        assert!((r + back - total).abs() < 1e-12);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SystemConfig::desk_profile();
        let geo = GeometryConfig::default();
        let a = generate_scenario(&cfg, &geo, &mut stream(9, &[1])).unwrap();
        let b = generate_scenario(&cfg, &geo, &mut stream(9, &[1])).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn delay_beyond_span_is_reported() {
        let cfg = SystemConfig::desk_profile();
        let mut s = single_los(0.1, 5.0);
        s.mmwave_paths[0].toa = 1.0;
        match mmwave_channel(&s, &cfg) {
            Err(ChannelError::DelayOutOfRange { index: 0, band, .. }) => assert_eq!(band, "mmWave"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_path_list_gives_zero_channel() {
        let cfg = SystemConfig::desk_profile();
        let s = ScenarioSample {
            mmwave_paths: vec![],
            sub6_paths: vec![],
            ue_position: [0.0, 0.0],
            los_condition: false,
        };
        let h = mmwave_channel(&s, &cfg).unwrap();
        assert_eq!(h.dim(), (cfg.subcarriers, cfg.antennas));
        assert!(h.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn broadside_far_field_sub6_row_is_flat() {
        let cfg = SystemConfig::desk_profile();
        let s = single_los(0.0, 30.0);
        let h = sub6_channel(&s, &cfg).unwrap();
        for row in h.rows() {
            let first = row[0];
            for z in row.iter() {
                assert!((*z - first).norm() <= 1e-12 * first.norm().max(1e-300));
            }
        }
    }

    #[test]
    fn noiseless_ls_is_identity() {
        let mut cfg = SystemConfig::desk_profile();
        cfg.noise_power_sub = 0.0;
        let s = single_los(0.4, 7.0);
        let h = sub6_channel(&s, &cfg).unwrap();
        let est = ls_estimate(&h, &cfg, &mut stream(3, &[]));
        assert_eq!(h, est);
    }

    #[test]
    fn channel_is_deterministic() {
        let cfg = SystemConfig::desk_profile();
        let geo = GeometryConfig::default();
        let s = generate_scenario(&cfg, &geo, &mut stream(5, &[])).unwrap();
        assert_eq!(mmwave_channel(&s, &cfg).unwrap(), mmwave_channel(&s, &cfg).unwrap());
        assert_eq!(sub6_channel(&s, &cfg).unwrap(), sub6_channel(&s, &cfg).unwrap());
    }
}
