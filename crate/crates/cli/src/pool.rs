//! Sample pools: parallel generation, splitting and scoring.

use nearbeam_core::channel::{generate_scenario, ChannelPair};
use nearbeam_core::rng::{stream, tag};
use nearbeam_core::selection::{score_sample, ScoredSample};
use nearbeam_core::{BeamPredictor, GeometryConfig, PolarCodebook, SystemConfig};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::HarnessError;

/// Generates samples `0..n`. Sample `i` draws its scenario from
/// `stream(seed, [SCENARIO, i])` and its sub-6 GHz estimation noise from
/// `stream(seed, [SUB6_NOISE, i])`, so the output is independent of the
/// thread count, and changing only sub-6 GHz parameters keeps the scenes.
pub fn generate_pool(
    config: &SystemConfig,
    geometry: &GeometryConfig,
    seed: u64,
    n: usize,
) -> Result<Vec<ChannelPair>, HarnessError> {
    config.validate()?;
    geometry.validate()?;
    (0..n as u64)
        .into_par_iter()
        .map(|id| {
            let scenario = generate_scenario(config, geometry, &mut stream(seed, &[tag::SCENARIO, id]))?;
            Ok(ChannelPair::synthesize(
                id,
                scenario,
                config,
                &mut stream(seed, &[tag::SUB6_NOISE, id]),
            )?)
        })
        .collect()
}

/// Sample indices of the train / validation / calibration / test splits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub cal: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` with `stream(seed, path)` and cuts it into consecutive
/// blocks of the given sizes.
pub fn split_indices(n: usize, counts: [usize; 4], seed: u64, path: &[u64]) -> Splits {
    assert_eq!(counts.iter().sum::<usize>(), n, "split counts must cover the pool");
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, path));
    let mut rest = idx.as_slice();
    let mut take = |k: usize| {
        let (head, tail) = rest.split_at(k);
        rest = tail;
        head.to_vec()
    };
    Splits {
        train: take(counts[0]),
        val: take(counts[1]),
        cal: take(counts[2]),
        test: take(counts[3]),
    }
}

/// Dataset split used by `calibrate` and `evaluate`.
pub fn dataset_splits(n: usize, counts: [usize; 4], seed: u64) -> Splits {
    split_indices(n, counts, seed, &[tag::SPLIT])
}

/// Random calibration and test subsets of sizes `n_cal` and `n_test`,
/// disjoint, drawn from `0..n`.
pub fn resample(n: usize, n_cal: usize, n_test: usize, seed: u64, path: &[u64]) -> Result<(Vec<usize>, Vec<usize>), HarnessError> {
    if n_cal + n_test > n {
        return Err(HarnessError::Config(format!(
            "n_cal + n_test = {} exceeds the pool of {n} samples",
            n_cal + n_test
        )));
    }
    let s = split_indices(n, [n - n_cal - n_test, 0, n_cal, n_test], seed, path);
    Ok((s.cal, s.test))
}

pub fn score_pool(
    pairs: &[ChannelPair],
    predictor: &dyn BeamPredictor,
    cb: &PolarCodebook,
    config: &SystemConfig,
    eps: f64,
) -> Result<Vec<ScoredSample>, HarnessError> {
    pairs
        .par_iter()
        .map(|p| Ok(score_sample(p, predictor, cb, config, eps)?))
        .collect()
}

/// Configures the global rayon pool from [`crate::WORKERS_ENV`]. Only the
/// first call has an effect.
pub fn init_workers() -> Result<(), HarnessError> {
    let Ok(v) = std::env::var(crate::WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| HarnessError::Config(format!("{} must be a positive integer, got {v:?}", crate::WORKERS_ENV)))?;
    // A pool that is already built (tests, repeated calls) is left alone.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::largest_remainder;
    use std::collections::HashSet;

    #[test]
    fn splits_are_disjoint_and_sized() {
        for n in [0, 1, 7, 100, 2001] {
            let counts = largest_remainder(n, &[0.5, 0.1, 0.2, 0.2]);
            let s = dataset_splits(n, counts, 3);
            let sizes = [s.train.len(), s.val.len(), s.cal.len(), s.test.len()];
            assert_eq!(sizes, counts);
            let all: HashSet<usize> = s.train.iter().chain(&s.val).chain(&s.cal).chain(&s.test).copied().collect();
            assert_eq!(all.len(), n);
            assert!(all.iter().all(|&i| i < n));
        }
    }

    #[test]
    fn splits_depend_on_seed_only() {
        let c = [5, 1, 2, 2];
        assert_eq!(dataset_splits(10, c, 1), dataset_splits(10, c, 1));
        assert_ne!(dataset_splits(10, c, 1), dataset_splits(10, c, 2));
    }

    #[test]
    fn resample_bounds() {
        let (cal, test) = resample(10, 4, 6, 0, &[1]).unwrap();
        assert_eq!((cal.len(), test.len()), (4, 6));
        assert!(cal.iter().all(|i| !test.contains(i)));
        assert!(resample(10, 5, 6, 0, &[1]).is_err());
    }

    #[test]
    fn pool_is_deterministic_and_thread_independent() {
        let cfg = nearbeam_core::SystemParams {
            antennas: 16,
            rings: 2,
            subcarriers: 4,
            subcarriers_sub: 4,
            antennas_sub: 4,
            ..nearbeam_core::SystemParams::desk_profile()
        }
        .into_config()
        .unwrap();
        let geo = GeometryConfig::default();
        let a = generate_pool(&cfg, &geo, 5, 12).unwrap();
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = single.install(|| generate_pool(&cfg, &geo, 5, 12)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().enumerate().all(|(i, p)| p.sample_id == i as u64));
    }
}
