//! Subcommand implementations. Each returns its artifacts in memory; the
//! binary decides where they are written.

use nearbeam_core::channel::ChannelPair;
use nearbeam_core::crc::{
    calibrate as crc_calibrate, ratio_features, sorted_scores, LogisticFit, LogisticRatioModel, WeightedCalibrator,
};
use nearbeam_core::dataset::{file_digest, sidecar_path, Provenance};
use nearbeam_core::rng::{derive_seed, stream, tag};
use nearbeam_core::selection::{candidate_set, select, PipelineOptions, ScoredSample};
use nearbeam_core::{BeamPredictor, CalibrationRecord, Dataset, PolarCodebook, SystemConfig, SystemParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::experiment::{los_probability, ExperimentConfig, RatioMode, SweepAxis};
use crate::pool::{dataset_splits, generate_pool, resample, score_pool};
use crate::report::{
    scores_digest, write_json, AlphaSummary, CalibrationReport, EvaluationReport, EvaluationRow, Method,
    ShiftRow, ShiftSampleRow, ShiftSummaryRow, SweepRow,
};
use crate::stats::{mean, quantile, std_error};
use crate::HarnessError;

fn codebook(config: &SystemConfig) -> Result<PolarCodebook, HarnessError> {
    PolarCodebook::build(config).map_err(|e| HarnessError::Config(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub n_samples: usize,
    pub los_fraction: f64,
    pub mean_mmwave_paths: f64,
    pub mean_sub6_paths: f64,
    pub digest: String,
}

/// Writes the dataset to `out` and its provenance sidecar to `<out>.json`.
pub fn generate(cfg: &ExperimentConfig, out: &Path) -> Result<GenerateSummary, HarnessError> {
    let system = cfg.system_config()?;
    let pairs = generate_pool(&system, &cfg.geometry, cfg.seed, cfg.n_samples)?;
    let n = pairs.len().max(1) as f64;
    let los = pairs.iter().filter(|p| p.scenario.los_condition).count() as f64 / n;
    let mm = pairs.iter().map(|p| p.scenario.mmwave_paths.len()).sum::<usize>() as f64 / n;
    let sub = pairs.iter().map(|p| p.scenario.sub6_paths.len()).sum::<usize>() as f64 / n;
    let dataset = Dataset::new(system, Some(cfg.geometry.clone()), pairs);
    dataset.save(out)?;
    let provenance: Provenance = dataset.provenance(cfg.seed, out)?;
    write_json(&sidecar_path(out), &provenance)?;
    Ok(GenerateSummary {
        n_samples: dataset.len(),
        los_fraction: los,
        mean_mmwave_paths: mm,
        mean_sub6_paths: sub,
        digest: provenance.digest,
    })
}

struct Loaded {
    dataset: Dataset,
    digest: String,
    cb: PolarCodebook,
    predictor: Box<dyn BeamPredictor>,
}

fn load(cfg: &ExperimentConfig, path: &Path) -> Result<Loaded, HarnessError> {
    let dataset = Dataset::load(path)?;
    let digest = file_digest(path)?;
    let cb = codebook(&dataset.system)?;
    let predictor = cfg.predictor.build(Some(&dataset))?;
    Ok(Loaded {
        dataset,
        digest,
        cb,
        predictor,
    })
}

fn pick(pairs: &[ChannelPair], idx: &[usize]) -> Vec<ChannelPair> {
    idx.iter().map(|&i| pairs[i].clone()).collect()
}

/// Scores the calibration split of the dataset and calibrates one threshold
/// per configured alpha.
pub fn calibrate(cfg: &ExperimentConfig, dataset_path: &Path) -> Result<CalibrationReport, HarnessError> {
    let l = load(cfg, dataset_path)?;
    let n = l.dataset.len();
    let splits = dataset_splits(n, cfg.split_counts(n), cfg.seed);
    if splits.cal.is_empty() {
        return Err(HarnessError::EmptySplit("calibration"));
    }
    let cal = pick(&l.dataset.pairs, &splits.cal);
    let scored = score_pool(&cal, l.predictor.as_ref(), &l.cb, &l.dataset.system, cfg.eps)?;
    let records: Vec<CalibrationRecord> = scored.iter().map(ScoredSample::record).collect();
    let thresholds = cfg
        .alphas
        .iter()
        .map(|&a| crc_calibrate(&records, a))
        .collect::<Result<Vec<_>, _>>()?;
    let sorted = sorted_scores(&records);
    Ok(CalibrationReport {
        predictor: cfg.predictor.to_string(),
        eps: cfg.eps,
        seed: cfg.seed,
        split: cfg.split,
        n_samples: n,
        dataset_digest: l.digest,
        n_cal: records.len(),
        thresholds,
        sorted_scores_digest: scores_digest(&sorted),
        sorted_scores: sorted,
    })
}

/// Runs selection for every sample at `lambda_hat`. Sample `id` trains with
/// `stream(seed, path ++ [id])`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_samples(
    scored: &[ScoredSample],
    pairs: &[ChannelPair],
    cb: &PolarCodebook,
    config: &SystemConfig,
    alpha: f64,
    lambda_hat: f64,
    opts: PipelineOptions,
    seed: u64,
    path: &[u64],
) -> Result<Vec<EvaluationRow>, HarnessError> {
    scored
        .par_iter()
        .zip(pairs)
        .map(|(s, p)| {
            let mut full = path.to_vec();
            full.push(s.sample_id);
            let mut rng = stream(seed, &full);
            let (outcome, diag) = select(s, p.h_mm.view(), cb, lambda_hat, config, opts, &mut rng)?;
            let chosen = cb.flat_index(outcome.chosen).expect("beam from this codebook");
            Ok(EvaluationRow {
                alpha,
                sample_id: s.sample_id,
                set_size: diag.set_size,
                branch: outcome.branch.to_string(),
                chosen_n: outcome.chosen.n,
                chosen_s: outcome.chosen.s,
                ratio: diag.ratio,
                covered: diag.covered as u8,
                pilots_used: outcome.pilots_used,
                critical_score: s.critical_score,
                success: s.rates.eps_good_flat(s.eps).contains(&chosen) as u8,
            })
        })
        .collect()
}

/// Evaluates the test split of the dataset against a calibration report.
pub fn evaluate(
    cfg: &ExperimentConfig,
    dataset_path: &Path,
    report: &CalibrationReport,
) -> Result<(Vec<EvaluationRow>, EvaluationReport), HarnessError> {
    let requested = cfg.predictor.to_string();
    if report.predictor != requested {
        return Err(HarnessError::Mismatch(format!(
            "thresholds were calibrated for predictor {}, evaluation requests {requested}",
            report.predictor
        )));
    }
    if report.eps != cfg.eps {
        return Err(HarnessError::Mismatch(format!(
            "thresholds were calibrated at eps = {}, evaluation requests eps = {}",
            report.eps, cfg.eps
        )));
    }
    if report.seed != cfg.seed || report.split != cfg.split {
        return Err(HarnessError::Mismatch(
            "seed or split differs, so the calibration and test splits could overlap".into(),
        ));
    }
    let l = load(cfg, dataset_path)?;
    if report.dataset_digest != l.digest {
        return Err(HarnessError::Mismatch(format!(
            "thresholds were calibrated on dataset {}, this dataset is {}",
            report.dataset_digest, l.digest
        )));
    }
    let n = l.dataset.len();
    let splits = dataset_splits(n, cfg.split_counts(n), cfg.seed);
    if splits.test.is_empty() {
        return Err(HarnessError::EmptySplit("test"));
    }
    let test = pick(&l.dataset.pairs, &splits.test);
    let scored = score_pool(&test, l.predictor.as_ref(), &l.cb, &l.dataset.system, cfg.eps)?;
    let opts = PipelineOptions {
        pilots_per_beam: cfg.pilots_per_beam,
        keep_powers: false,
    };
    let mut rows = Vec::new();
    let mut per_alpha = Vec::new();
    for (ai, t) in report.thresholds.iter().enumerate() {
        let r = evaluate_samples(
            &scored,
            &test,
            &l.cb,
            &l.dataset.system,
            t.alpha,
            t.lambda_hat,
            opts,
            cfg.seed,
            &[tag::TRAINING, ai as u64],
        )?;
        per_alpha.push(AlphaSummary::from_rows(t.alpha, t.lambda_hat, &r));
        rows.extend(r);
    }
    Ok((
        rows,
        EvaluationReport {
            predictor: requested,
            eps: cfg.eps,
            pilots_per_beam: cfg.pilots_per_beam,
            n_test: test.len(),
            per_alpha,
        },
    ))
}

/// System parameters at one grid point of a sweep.
fn grid_system(base: &SystemParams, axis: SweepAxis, value: f64) -> Result<SystemParams, HarnessError> {
    let mut p = base.clone();
    match axis {
        SweepAxis::Sub6Power => p.pilot_power_sub_dbm = value,
        SweepAxis::Sub6Antennas => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(HarnessError::Config(format!("antenna count must be a positive integer, got {value}")));
            }
            p.antennas_sub = value as usize;
        }
        SweepAxis::Alpha | SweepAxis::NCal => {}
    }
    Ok(p)
}

/// Runs the configured sweep. For each grid point the pool of `n_samples`
/// drops is generated once (same scenes across grid points); each trial
/// draws fresh calibration and test subsets from it and runs calibration
/// plus selection.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, HarnessError> {
    let spec = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| HarnessError::Config("no [sweep] section".into()))?;
    if spec.values.is_empty() {
        return Err(HarnessError::Config("sweep values are empty".into()));
    }
    let counts = cfg.split_counts(cfg.n_samples);
    let opts = PipelineOptions {
        pilots_per_beam: cfg.pilots_per_beam,
        keep_powers: false,
    };
    let base = {
        let mut p = cfg.system.clone();
        p.rng_seed = cfg.seed;
        p
    };
    // Grid points that share system parameters share one scored pool.
    let shared_pool = matches!(spec.axis, SweepAxis::Alpha | SweepAxis::NCal);
    let mut cached: Option<(SystemConfig, PolarCodebook, Vec<ChannelPair>, Vec<ScoredSample>)> = None;
    let mut rows = Vec::new();
    for (gi, &value) in spec.values.iter().enumerate() {
        if !shared_pool || cached.is_none() {
            let system = grid_system(&base, spec.axis, value)?.into_config()?;
            let cb = codebook(&system)?;
            let pairs = generate_pool(&system, &cfg.geometry, cfg.seed, cfg.n_samples)?;
            let predictor = cfg.predictor.build(None)?;
            let scored = score_pool(&pairs, predictor.as_ref(), &cb, &system, cfg.eps)?;
            cached = Some((system, cb, pairs, scored));
        }
        let (system, cb, pairs, scored) = cached.as_ref().expect("pool built above");
        let (alphas, n_cal) = match spec.axis {
            SweepAxis::Alpha => {
                if !(value > 0.0 && value < 1.0) {
                    return Err(HarnessError::Config(format!("alpha must lie in (0, 1), got {value}")));
                }
                (vec![value], counts[2])
            }
            SweepAxis::NCal => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(HarnessError::Config(format!("n_cal must be a positive integer, got {value}")));
                }
                (cfg.alphas.clone(), value as usize)
            }
            _ => (cfg.alphas.clone(), counts[2]),
        };
        let n_test = counts[3];
        if n_test == 0 {
            return Err(HarnessError::EmptySplit("test"));
        }
        let trial_rows: Vec<Vec<SweepRow>> = (0..cfg.n_trials)
            .into_par_iter()
            .map(|trial| -> Result<Vec<SweepRow>, HarnessError> {
                let (g, t) = (gi as u64, trial as u64);
                let (cal_idx, test_idx) = resample(pairs.len(), n_cal, n_test, cfg.seed, &[tag::TRIAL, g, t])?;
                let records: Vec<CalibrationRecord> = cal_idx.iter().map(|&i| scored[i].record()).collect();
                let test_scored: Vec<ScoredSample> = test_idx.iter().map(|&i| scored[i].clone()).collect();
                let test_pairs = pick(pairs, &test_idx);
                let mut out = Vec::with_capacity(alphas.len());
                for (ai, &alpha) in alphas.iter().enumerate() {
                    let th = crc_calibrate(&records, alpha)?;
                    let ev = evaluate_samples(
                        &test_scored,
                        &test_pairs,
                        cb,
                        system,
                        alpha,
                        th.lambda_hat,
                        opts,
                        cfg.seed,
                        &[tag::TRAINING, g, t, ai as u64],
                    )?;
                    let s = AlphaSummary::from_rows(alpha, th.lambda_hat, &ev);
                    out.push(SweepRow {
                        axis: spec.axis.to_string(),
                        value,
                        trial,
                        alpha,
                        n_cal,
                        n_test,
                        lambda_hat: th.lambda_hat,
                        coverage: s.achieved_coverage,
                        eps_rate: s.achieved_eps_suboptimal_rate,
                        mean_set_size: s.mean_set_size,
                        median_set_size: s.set_size_quantiles.median,
                        mean_pilots: s.mean_pilots,
                    });
                }
                Ok(out)
            })
            .collect::<Result<_, _>>()?;
        rows.extend(trial_rows.into_iter().flatten());
    }
    Ok(rows)
}

/// Output of `shift`.
#[derive(Debug, Clone)]
pub struct ShiftOutput {
    pub rows: Vec<ShiftRow>,
    pub samples: Vec<ShiftSampleRow>,
    pub summary: Vec<ShiftSummaryRow>,
}

/// Calibration at one LoS ratio, testing at each configured test ratio;
/// standard and weighted calibration are compared on the same draws.
pub fn shift(cfg: &ExperimentConfig) -> Result<ShiftOutput, HarnessError> {
    let spec = cfg
        .shift
        .as_ref()
        .ok_or_else(|| HarnessError::Config("no [shift] section".into()))?;
    let system = cfg.system_config()?;
    let cb = codebook(&system)?;
    let predictor = cfg.predictor.build(None)?;
    let population = |ratio: f64, seed: u64, n: usize| -> Result<Vec<ChannelPair>, HarnessError> {
        let mut geo = cfg.geometry.clone();
        geo.p_los = los_probability(ratio);
        generate_pool(&system, &geo, seed, n)
    };
    let tasks: Vec<(usize, usize)> = (0..spec.test_los_ratios.len())
        .flat_map(|ri| (0..cfg.n_trials).map(move |t| (ri, t)))
        .collect();
    let results: Vec<(Vec<ShiftRow>, Vec<ShiftSampleRow>)> = tasks
        .into_par_iter()
        .map(|(ri, trial)| -> Result<_, HarnessError> {
            let test_ratio = spec.test_los_ratios[ri];
            let (r, t) = (ri as u64, trial as u64);
            let cal = population(spec.cal_los_ratio, derive_seed(cfg.seed, &[tag::TRIAL, r, t, 0]), spec.n_cal)?;
            let test = population(test_ratio, derive_seed(cfg.seed, &[tag::TRIAL, r, t, 1]), spec.n_test)?;
            let cal_scored = score_pool(&cal, predictor.as_ref(), &cb, &system, cfg.eps)?;
            let test_scored = score_pool(&test, predictor.as_ref(), &cb, &system, cfg.eps)?;

            let weight_of: Box<dyn Fn(&ChannelPair) -> f64 + Send + Sync> = match spec.ratio_mode {
                RatioMode::Oracle => {
                    let oracle = spec.oracle(test_ratio);
                    Box::new(move |p: &ChannelPair| oracle.ratio(p.scenario.los_condition))
                }
                RatioMode::Learned => {
                    let features = |pairs: &[ChannelPair]| pairs.iter().map(|p| ratio_features(p.h_sub_est.view())).collect::<Vec<_>>();
                    let cal_train = population(
                        spec.cal_los_ratio,
                        derive_seed(cfg.seed, &[tag::RATIO, r, t, 0]),
                        spec.n_ratio_train,
                    )?;
                    let test_train =
                        population(test_ratio, derive_seed(cfg.seed, &[tag::RATIO, r, t, 1]), spec.n_ratio_train)?;
                    let model =
                        LogisticRatioModel::fit(&features(&cal_train), &features(&test_train), LogisticFit::default())?;
                    Box::new(move |p: &ChannelPair| model.ratio(&ratio_features(p.h_sub_est.view())))
                }
            };

            let plain: Vec<CalibrationRecord> = cal_scored.iter().map(ScoredSample::record).collect();
            let unweighted = crc_calibrate(&plain, spec.alpha)?;
            let weighted_records: Vec<CalibrationRecord> = cal_scored
                .iter()
                .zip(&cal)
                .map(|(s, p)| CalibrationRecord::weighted(s.sample_id, s.critical_score, weight_of(p)))
                .collect();
            let total_weight: f64 = weighted_records.iter().map(|r| r.weight.unwrap_or(1.0)).sum();
            let calibrator = WeightedCalibrator::new(&weighted_records)?;

            let mut samples = Vec::with_capacity(test.len());
            for (s, p) in test_scored.iter().zip(&test) {
                let w = weight_of(p);
                let lw = calibrator.threshold(spec.alpha, w)?.lambda_hat;
                let lu = unweighted.lambda_hat;
                samples.push(ShiftSampleRow {
                    test_los_ratio: test_ratio,
                    trial,
                    sample_id: s.sample_id,
                    los: p.scenario.los_condition as u8,
                    weight: w,
                    omega_prime: w / (total_weight + w),
                    lambda_weighted: lw,
                    covered_weighted: s.covered(lw) as u8,
                    set_size_weighted: candidate_set(&s.scores, lw, s.sample_id).len(),
                    lambda_unweighted: lu,
                    covered_unweighted: s.covered(lu) as u8,
                    set_size_unweighted: candidate_set(&s.scores, lu, s.sample_id).len(),
                });
            }
            let n = samples.len() as f64;
            let row = |method, covered: fn(&ShiftSampleRow) -> u8, size: fn(&ShiftSampleRow) -> usize, lambda: fn(&ShiftSampleRow) -> f64| ShiftRow {
                test_los_ratio: test_ratio,
                trial,
                method,
                coverage: samples.iter().map(|x| covered(x) as f64).sum::<f64>() / n,
                mean_set_size: samples.iter().map(|x| size(x) as f64).sum::<f64>() / n,
                sentinels: samples.iter().filter(|x| lambda(x).is_infinite()).count(),
            };
            let rows = vec![
                row(Method::Weighted, |x| x.covered_weighted, |x| x.set_size_weighted, |x| x.lambda_weighted),
                row(Method::Unweighted, |x| x.covered_unweighted, |x| x.set_size_unweighted, |x| x.lambda_unweighted),
            ];
            Ok((rows, samples))
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for (r, s) in results {
        rows.extend(r);
        samples.extend(s);
    }
    let mut summary = Vec::new();
    for &ratio in &spec.test_los_ratios {
        for method in [Method::Weighted, Method::Unweighted] {
            let sel: Vec<&ShiftRow> = rows
                .iter()
                .filter(|r| r.test_los_ratio == ratio && r.method == method)
                .collect();
            let cov: Vec<f64> = sel.iter().map(|r| r.coverage).collect();
            let size: Vec<f64> = sel.iter().map(|r| r.mean_set_size).collect();
            summary.push(ShiftSummaryRow {
                test_los_ratio: ratio,
                method,
                trials: sel.len(),
                mean_coverage: mean(&cov),
                coverage_se: std_error(&cov),
                mean_set_size: mean(&size),
                sentinel_runs: sel.iter().filter(|r| r.sentinels > 0).count(),
                sentinel_samples: sel.iter().map(|r| r.sentinels).sum(),
            });
        }
    }
    Ok(ShiftOutput { rows, samples, summary })
}

/// Mean and median per-trial set size at each sweep grid value, for quick
/// console summaries.
pub fn sweep_digest(rows: &[SweepRow]) -> Vec<(f64, f64, f64, f64)> {
    let mut values: Vec<f64> = rows.iter().map(|r| r.value).collect();
    values.dedup();
    values
        .into_iter()
        .map(|v| {
            let sel: Vec<&SweepRow> = rows.iter().filter(|r| r.value == v).collect();
            let cov: Vec<f64> = sel.iter().map(|r| r.coverage).collect();
            let size: Vec<f64> = sel.iter().map(|r| r.mean_set_size).collect();
            (v, mean(&cov), mean(&size), quantile(&size, 0.5))
        })
        .collect()
}
