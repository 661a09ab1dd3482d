//! System and scene configuration.
//!
//! Powers are given in dBm in configuration files ([`SystemParams`]) and
//! converted to watts exactly once, when a [`SystemConfig`] is built. All
//! downstream math uses the linear values.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Thermal noise floor used by the default noise model (dBm/Hz).
const NOISE_FLOOR_DBM_PER_HZ: f64 = -173.8;
/// Fixed offset added to the noise floor in the default noise model (dB).
const NOISE_OFFSET_DB: f64 = 90.0;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// Default noise power for a band of width `bandwidth` Hz, in dBm.
pub fn default_noise_dbm(bandwidth: f64) -> f64 {
    NOISE_FLOOR_DBM_PER_HZ + NOISE_OFFSET_DB + 10.0 * bandwidth.log10()
}

/// Dual-band link parameters in linear units.
///
/// Sampling periods are derived from the bandwidths ([`SystemConfig::ts`]),
/// never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// mmWave carrier (Hz).
    pub fc: f64,
    /// Sub-6 GHz carrier (Hz).
    pub fc_sub: f64,
    /// mmWave bandwidth (Hz).
    pub bandwidth: f64,
    /// Sub-6 GHz bandwidth (Hz).
    pub bandwidth_sub: f64,
    /// mmWave subcarriers.
    pub subcarriers: usize,
    /// Sub-6 GHz subcarriers.
    pub subcarriers_sub: usize,
    /// mmWave BS antennas.
    pub antennas: usize,
    /// Sub-6 GHz BS antennas.
    pub antennas_sub: usize,
    /// mmWave channel taps.
    pub taps: usize,
    /// Sub-6 GHz channel taps.
    pub taps_sub: usize,
    /// mmWave downlink transmit power (W).
    pub tx_power: f64,
    /// mmWave uplink pilot power (W).
    pub pilot_power: f64,
    /// Sub-6 GHz uplink pilot power (W).
    pub pilot_power_sub: f64,
    /// mmWave noise power (W).
    pub noise_power: f64,
    /// Sub-6 GHz noise power (W).
    pub noise_power_sub: f64,
    /// Number of distance rings in the polar codebook.
    pub rings: usize,
    /// Codebook correlation parameter.
    pub beta: f64,
    pub rng_seed: u64,
}

impl SystemConfig {
    /// Full-scale parameter set (73 GHz / 3.5 GHz, 256 / 16 antennas).
    pub fn table_profile() -> Self {
        SystemParams::table_profile()
            .into_config()
            .expect("built-in profile is valid")
    }

    /// Reduced profile for minutes-scale experiments.
    pub fn desk_profile() -> Self {
        SystemParams::desk_profile()
            .into_config()
            .expect("built-in profile is valid")
    }

    pub fn ts(&self) -> f64 {
        1.0 / self.bandwidth
    }

    pub fn ts_sub(&self) -> f64 {
        1.0 / self.bandwidth_sub
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc
    }

    pub fn wavelength_sub(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc_sub
    }

    /// Number of beams in the polar codebook.
    pub fn codebook_size(&self) -> usize {
        self.antennas * self.rings
    }

    /// Boundary between near- and far-field for the sub-6 GHz array,
    /// `2 D^2 / lambda` with aperture `D = N * lambda / 2`.
    pub fn rayleigh_distance_sub(&self) -> f64 {
        rayleigh_distance(self.antennas_sub, self.wavelength_sub())
    }

    pub fn rayleigh_distance(&self) -> f64 {
        rayleigh_distance(self.antennas, self.wavelength())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let counts = [
            ("subcarriers", self.subcarriers),
            ("subcarriers_sub", self.subcarriers_sub),
            ("antennas", self.antennas),
            ("antennas_sub", self.antennas_sub),
            ("taps", self.taps),
            ("taps_sub", self.taps_sub),
            ("rings", self.rings),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be at least 1")));
            }
        }
        let positive = [
            ("fc", self.fc),
            ("fc_sub", self.fc_sub),
            ("bandwidth", self.bandwidth),
            ("bandwidth_sub", self.bandwidth_sub),
            ("tx_power", self.tx_power),
            ("pilot_power", self.pilot_power),
            ("pilot_power_sub", self.pilot_power_sub),
            ("beta", self.beta),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("noise_power", self.noise_power),
            ("noise_power_sub", self.noise_power_sub),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::Invalid(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

pub fn rayleigh_distance(antennas: usize, wavelength: f64) -> f64 {
    let aperture = antennas as f64 * wavelength / 2.0;
    2.0 * aperture * aperture / wavelength
}

/// File-facing form of [`SystemConfig`]: frequencies in GHz, bandwidths in
/// MHz, powers in dBm. Missing noise powers fall back to the thermal model
/// `-173.8 + 90 + 10 log10(W)` dBm; other missing fields take the desk
/// profile value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemParams {
    pub fc_ghz: f64,
    pub fc_sub_ghz: f64,
    pub bandwidth_mhz: f64,
    pub bandwidth_sub_mhz: f64,
    pub subcarriers: usize,
    pub subcarriers_sub: usize,
    pub antennas: usize,
    pub antennas_sub: usize,
    pub taps: usize,
    pub taps_sub: usize,
    pub tx_power_dbm: f64,
    pub pilot_power_dbm: f64,
    pub pilot_power_sub_dbm: f64,
    #[serde(default)]
    pub noise_power_dbm: Option<f64>,
    #[serde(default)]
    pub noise_power_sub_dbm: Option<f64>,
    pub rings: usize,
    pub beta: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl SystemParams {
    pub fn table_profile() -> Self {
        Self {
            fc_ghz: 73.0,
            fc_sub_ghz: 3.5,
            bandwidth_mhz: 200.0,
            bandwidth_sub_mhz: 80.0,
            subcarriers: 64,
            subcarriers_sub: 32,
            antennas: 256,
            antennas_sub: 16,
            taps: 40,
            taps_sub: 20,
            tx_power_dbm: 25.0,
            pilot_power_dbm: 25.0,
            pilot_power_sub_dbm: 10.0,
            noise_power_dbm: None,
            noise_power_sub_dbm: None,
            rings: 7,
            beta: 1.6,
            rng_seed: 0,
        }
    }

    pub fn desk_profile() -> Self {
        Self {
            subcarriers: 16,
            subcarriers_sub: 8,
            antennas: 64,
            antennas_sub: 8,
            rings: 4,
            ..Self::table_profile()
        }
    }

    pub fn into_config(self) -> Result<SystemConfig, ConfigError> {
        let bandwidth = self.bandwidth_mhz * 1e6;
        let bandwidth_sub = self.bandwidth_sub_mhz * 1e6;
        let noise_dbm = self.noise_power_dbm.unwrap_or_else(|| default_noise_dbm(bandwidth));
        let noise_sub_dbm = self
            .noise_power_sub_dbm
            .unwrap_or_else(|| default_noise_dbm(bandwidth_sub));
        let cfg = SystemConfig {
            fc: self.fc_ghz * 1e9,
            fc_sub: self.fc_sub_ghz * 1e9,
            bandwidth,
            bandwidth_sub,
            subcarriers: self.subcarriers,
            subcarriers_sub: self.subcarriers_sub,
            antennas: self.antennas,
            antennas_sub: self.antennas_sub,
            taps: self.taps,
            taps_sub: self.taps_sub,
            tx_power: dbm_to_watts(self.tx_power_dbm),
            pilot_power: dbm_to_watts(self.pilot_power_dbm),
            pilot_power_sub: dbm_to_watts(self.pilot_power_sub_dbm),
            noise_power: dbm_to_watts(noise_dbm),
            noise_power_sub: dbm_to_watts(noise_sub_dbm),
            rings: self.rings,
            beta: self.beta,
            rng_seed: self.rng_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::desk_profile()
    }
}

/// Scene description for the synthetic scenario generator.
///
/// The room is a 2D rectangle `[0, room_width] x [0, room_length]`; the BS
/// array lies along the x axis, so a direction `u` from the BS has
/// `sin(aod) = u.x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub room_width: f64,
    pub room_length: f64,
    pub bs_position: [f64; 2],
    /// Probability that a drop has a line-of-sight path.
    pub p_los: f64,
    /// UEs closer than this to the BS are redrawn (m).
    pub min_ue_distance: f64,
    /// Inclusive range of shared (both-band) scattered paths.
    pub scatterers: [usize; 2],
    /// Inclusive range of extra diffuse paths seen only at sub-6 GHz.
    pub diffuse_paths: [usize; 2],
    /// Mean of the exponential NLoS excess delay (s).
    pub excess_delay_mean: f64,
    /// Truncation point of the excess delay (s).
    pub excess_delay_max: f64,
    /// Log-normal shadowing standard deviation (dB).
    pub shadowing_db: f64,
    /// Correlation of the two bands' shadowing on a shared path, in [0, 1].
    pub shadowing_correlation: f64,
    /// Mean extra loss of a scattered path over free space (dB).
    pub nlos_loss_db: f64,
    /// Additional loss of scattered paths at mmWave relative to sub-6 GHz (dB).
    pub mmwave_nlos_extra_db: f64,
    /// Aggregate antenna and front-end gain applied to every mmWave path (dB).
    pub link_gain_db: f64,
    /// Same for the sub-6 GHz band (dB).
    pub link_gain_sub_db: f64,
    /// Max sub-6 GHz angle perturbation of a shared scattered path (rad).
    pub angle_jitter: f64,
    /// Max sub-6 GHz extra delay of a shared scattered path (s).
    pub delay_jitter: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            room_width: 13.2,
            room_length: 26.5,
            bs_position: [6.6, 13.25],
            p_los: 0.6,
            min_ue_distance: 1.0,
            scatterers: [1, 4],
            diffuse_paths: [2, 6],
            excess_delay_mean: 15e-9,
            excess_delay_max: 60e-9,
            shadowing_db: 4.0,
            shadowing_correlation: 0.5,
            nlos_loss_db: 6.0,
            mmwave_nlos_extra_db: 10.0,
            link_gain_db: 80.0,
            link_gain_sub_db: 50.0,
            angle_jitter: 0.02,
            delay_jitter: 1e-9,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.room_width > 0.0 && self.room_length > 0.0) {
            return Err(ConfigError::Geometry(format!(
                "room extents must be positive, got {} x {}",
                self.room_width, self.room_length
            )));
        }
        let [bx, by] = self.bs_position;
        if !(0.0..=self.room_width).contains(&bx) || !(0.0..=self.room_length).contains(&by) {
            return Err(ConfigError::Geometry(format!(
                "BS position ({bx}, {by}) lies outside the room"
            )));
        }
        if !(0.0..=1.0).contains(&self.p_los) {
            return Err(ConfigError::Geometry(format!(
                "p_los must lie in [0, 1], got {}",
                self.p_los
            )));
        }
        if self.scatterers[0] > self.scatterers[1] || self.diffuse_paths[0] > self.diffuse_paths[1] {
            return Err(ConfigError::Geometry("path-count ranges must be ordered".into()));
        }
        if self.p_los < 1.0 && self.scatterers[1] == 0 {
            return Err(ConfigError::Geometry(
                "NLoS drops need at least one scatterer".into(),
            ));
        }
        if self.min_ue_distance <= 0.0 || self.excess_delay_mean <= 0.0 || self.excess_delay_max < 0.0
        {
            return Err(ConfigError::Geometry(
                "min_ue_distance and excess delays must be positive".into(),
            ));
        }
        if self.shadowing_db < 0.0 || self.angle_jitter < 0.0 || self.delay_jitter < 0.0 {
            return Err(ConfigError::Geometry("spreads must be non-negative".into()));
        }
        let max_reach = self.max_ue_distance();
        if max_reach < self.min_ue_distance {
            return Err(ConfigError::Geometry(
                "min_ue_distance excludes the whole room".into(),
            ));
        }
        Ok(())
    }

    /// Largest BS-UE distance the room allows.
    pub fn max_ue_distance(&self) -> f64 {
        let [bx, by] = self.bs_position;
        let dx = bx.max(self.room_width - bx);
        let dy = by.max(self.room_length - by);
        dx.hypot(dy)
    }

    /// Upper bound on any generated path delay (s).
    pub fn max_path_delay(&self) -> f64 {
        self.max_ue_distance() / SPEED_OF_LIGHT + self.excess_delay_max + self.delay_jitter
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_round_trip() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-18);
        assert!((watts_to_dbm(dbm_to_watts(12.5)) - 12.5).abs() < 1e-12);
    }

    #[test]
    fn table_profile_values() {
        let c = SystemConfig::table_profile();
        assert_eq!(c.fc, 73e9);
        assert_eq!(c.fc_sub, 3.5e9);
        assert_eq!(c.antennas, 256);
        assert_eq!(c.antennas_sub, 16);
        assert_eq!(c.subcarriers, 64);
        assert_eq!(c.subcarriers_sub, 32);
        assert_eq!(c.rings, 7);
        assert_eq!(c.beta, 1.6);
        assert!((watts_to_dbm(c.pilot_power_sub) - 10.0).abs() < 1e-9);
        let expected_noise = -173.8 + 90.0 + 10.0 * (200e6f64).log10();
        assert!((watts_to_dbm(c.noise_power) - expected_noise).abs() < 1e-9);
        assert!((c.ts() - 5e-9).abs() < 1e-20);
    }

    #[test]
    fn rejects_zero_counts() {
        let mut c = SystemConfig::desk_profile();
        c.rings = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn geometry_rejects_bs_outside_room() {
        let g = GeometryConfig {
            bs_position: [20.0, 1.0],
            ..Default::default()
        };
        assert!(matches!(g.validate(), Err(ConfigError::Geometry(_))));
        let g = GeometryConfig {
            room_width: 0.0,
            ..Default::default()
        };
        assert!(g.validate().is_err());
    }

    #[test]
    fn default_delays_fit_default_taps() {
        let g = GeometryConfig::default();
        let c = SystemConfig::desk_profile();
        assert!(g.max_path_delay() <= c.taps as f64 * c.ts());
        assert!(g.max_path_delay() <= c.taps_sub as f64 * c.ts_sub());
    }
}
