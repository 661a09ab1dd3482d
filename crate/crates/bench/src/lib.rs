//! Fixtures shared by the benchmarks.

use nearbeam_core::channel::{generate_scenario, ChannelPair};
use nearbeam_core::rng::{stream, tag};
use nearbeam_core::{CalibrationRecord, GeometryConfig, SystemConfig, SystemParams};

pub fn desk_config() -> SystemConfig {
    SystemParams::desk_profile().into_config().expect("desk profile is valid")
}

/// Deterministic drops `0..n` for `config`.
pub fn drops(config: &SystemConfig, n: usize) -> Vec<ChannelPair> {
    let geometry = GeometryConfig::default();
    (0..n as u64)
        .map(|id| {
            let scenario = generate_scenario(config, &geometry, &mut stream(7, &[tag::SCENARIO, id])).expect("valid scene");
            ChannelPair::synthesize(id, scenario, config, &mut stream(7, &[tag::SUB6_NOISE, id])).expect("valid drop")
        })
        .collect()
}

/// `n` calibration records with pseudo-random scores in `[0, 20)`.
pub fn records(n: usize) -> Vec<CalibrationRecord> {
    let mut x: u64 = 0x9e37_79b9_7f4a_7c15;
    (0..n as u64)
        .map(|i| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            CalibrationRecord::new(i, (x >> 11) as f64 / (1u64 << 53) as f64 * 20.0)
        })
        .collect()
}
