//! Candidate sets and the three-branch selection stage.
//!
//! 1. Empty set: fall back to the most likely beam of the predictor.
//! 2. One candidate: use it, no mmWave pilots spent.
//! 3. Otherwise: uplink training over the candidates, pick the strongest.

use ndarray::ArrayView2;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::channel::{complex_normal, ChannelPair};
use crate::codebook::{BeamIndex, PolarCodebook};
use crate::config::SystemConfig;
use crate::crc::{critical_score, CalibrationRecord, ThresholdResult};
use crate::error::SelectionError;
use crate::metrics::{optimal_beam, projection, RateReport};
use crate::predictor::{score_matrix, BeamPredictor, PredictorInput, ProbabilityMatrix, ScoreMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    /// Ascending score, ties in `(n, s)` order.
    pub members: Vec<BeamIndex>,
    pub threshold_used: f64,
    pub source_sample_id: u64,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, b: BeamIndex) -> bool {
        self.members.contains(&b)
    }
}

/// All beams with score at most `lambda_hat`; `+inf` yields the codebook.
pub fn candidate_set(scores: &ScoreMatrix, lambda_hat: f64, sample_id: u64) -> CandidateSet {
    let (antennas, rings) = scores.dim();
    let flat = scores.flat();
    let mut ks: Vec<usize> = (0..flat.len()).filter(|&k| flat[k] <= lambda_hat).collect();
    ks.sort_by(|&a, &b| flat[a].total_cmp(&flat[b]).then(a.cmp(&b)));
    debug_assert_eq!(flat.len(), antennas * rings);
    CandidateSet {
        members: ks
            .into_iter()
            .map(|k| BeamIndex::new(k / rings + 1, k % rings + 1))
            .collect(),
        threshold_used: lambda_hat,
        source_sample_id: sample_id,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    EmptySetFallback,
    Singleton,
    Trained,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::EmptySetFallback => "empty-set-fallback",
            Self::Singleton => "singleton",
            Self::Trained => "trained",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub chosen: BeamIndex,
    pub branch: Branch,
    pub pilots_used: usize,
    /// Average received power per member (W), kept only on request.
    pub received_powers: Option<Vec<f64>>,
}

/// Uplink beam training over the candidate set.
///
/// Each pilot gives `y_m = (h_m^H w) s_p + n_m` per subcarrier with
/// `s_p = sqrt(P_pilot / M)` and fresh `CN(0, sigma^2)` noise; the beam with
/// the largest `sum_m |y_m|^2`, averaged over repeats, wins.
#[allow(clippy::too_many_arguments)]
pub fn beam_training<R: Rng + ?Sized>(
    cands: &CandidateSet,
    fallback: Option<&ProbabilityMatrix>,
    h: ArrayView2<'_, Complex64>,
    cb: &PolarCodebook,
    config: &SystemConfig,
    pilots_per_beam: usize,
    keep_powers: bool,
    rng: &mut R,
) -> Result<SelectionOutcome, SelectionError> {
    if pilots_per_beam == 0 {
        return Err(SelectionError::Pilots);
    }
    match cands.members.as_slice() {
        [] => {
            let p = fallback.ok_or(SelectionError::MissingFallback)?;
            Ok(SelectionOutcome {
                chosen: p.argmax(),
                branch: Branch::EmptySetFallback,
                pilots_used: 0,
                received_powers: None,
            })
        }
        [only] => Ok(SelectionOutcome {
            chosen: *only,
            branch: Branch::Singleton,
            pilots_used: 0,
            received_powers: None,
        }),
        members => {
            let amplitude = (config.pilot_power / config.subcarriers as f64).sqrt();
            let sigma2 = config.noise_power;
            let mut powers = Vec::with_capacity(members.len());
            for &b in members {
                let w = cb.beams().row(cb.flat_index(b).expect("candidate from this codebook"));
                let clean = projection(w, h);
                let mut acc = 0.0;
                for _ in 0..pilots_per_beam {
                    acc += clean
                        .iter()
                        .map(|z| {
                            let y = z * amplitude
                                + if sigma2 > 0.0 {
                                    complex_normal(rng, sigma2)
                                } else {
                                    Complex64::new(0.0, 0.0)
                                };
                            y.norm_sqr()
                        })
                        .sum::<f64>();
                }
                powers.push(acc / pilots_per_beam as f64);
            }
            let mut best = 0;
            for (i, &p) in powers.iter().enumerate() {
                if p > powers[best] {
                    best = i;
                }
            }
            Ok(SelectionOutcome {
                chosen: members[best],
                branch: Branch::Trained,
                pilots_used: members.len() * pilots_per_beam,
                received_powers: keep_powers.then_some(powers),
            })
        }
    }
}

/// Predictor output, scores and ground-truth rates of one sample.
#[derive(Debug, Clone)]
pub struct ScoredSample {
    pub sample_id: u64,
    pub probabilities: ProbabilityMatrix,
    pub scores: ScoreMatrix,
    pub rates: RateReport,
    pub eps: f64,
    pub critical_score: f64,
}

impl ScoredSample {
    pub fn record(&self) -> CalibrationRecord {
        CalibrationRecord::new(self.sample_id, self.critical_score)
    }

    /// Whether the set at `lambda` contains an eps-good beam. Identical to
    /// `lambda >= critical_score` by construction.
    pub fn covered(&self, lambda: f64) -> bool {
        lambda >= self.critical_score
    }
}

pub fn score_sample(
    pair: &ChannelPair,
    predictor: &dyn BeamPredictor,
    cb: &PolarCodebook,
    config: &SystemConfig,
    eps: f64,
) -> Result<ScoredSample, SelectionError> {
    let input = PredictorInput {
        sample_id: pair.sample_id,
        h_sub_est: pair.h_sub_est.view(),
        h_mm: Some(pair.h_mm.view()),
    };
    let probabilities = predictor.predict(&input, cb, config)?;
    let scores = score_matrix(&probabilities);
    let rates = optimal_beam(pair.h_mm.view(), cb, config);
    let good: Vec<BeamIndex> = rates
        .eps_good_flat(eps)
        .into_iter()
        .map(|k| cb.beam_index(k))
        .collect();
    let critical_score = critical_score(&scores, &good)?;
    Ok(ScoredSample {
        sample_id: pair.sample_id,
        probabilities,
        scores,
        rates,
        eps,
        critical_score,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct PipelineOptions {
    pub pilots_per_beam: usize,
    pub keep_powers: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            pilots_per_beam: 1,
            keep_powers: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub set_size: usize,
    /// An eps-good beam was in the candidate set.
    pub covered: bool,
    /// Suboptimality ratio of the chosen beam.
    pub ratio: f64,
    pub best: BeamIndex,
}

/// Selection for an already scored sample.
pub fn select<R: Rng + ?Sized>(
    scored: &ScoredSample,
    h: ArrayView2<'_, Complex64>,
    cb: &PolarCodebook,
    lambda_hat: f64,
    config: &SystemConfig,
    opts: PipelineOptions,
    rng: &mut R,
) -> Result<(SelectionOutcome, Diagnostics), SelectionError> {
    let cands = candidate_set(&scored.scores, lambda_hat, scored.sample_id);
    let outcome = beam_training(
        &cands,
        Some(&scored.probabilities),
        h,
        cb,
        config,
        opts.pilots_per_beam,
        opts.keep_powers,
        rng,
    )?;
    let good = scored.rates.eps_good_flat(scored.eps);
    let covered = cands
        .members
        .iter()
        .any(|b| good.contains(&cb.flat_index(*b).expect("candidate from this codebook")));
    let chosen = cb.flat_index(outcome.chosen).expect("chosen from this codebook");
    let diag = Diagnostics {
        set_size: cands.len(),
        covered,
        ratio: scored.rates.ratio(chosen),
        best: scored.rates.best_index(),
    };
    Ok((outcome, diag))
}

/// Predict, score, build the candidate set and train.
#[allow(clippy::too_many_arguments)]
pub fn run_pipeline<R: Rng + ?Sized>(
    pair: &ChannelPair,
    predictor: &dyn BeamPredictor,
    cb: &PolarCodebook,
    thresh: &ThresholdResult,
    config: &SystemConfig,
    eps: f64,
    opts: PipelineOptions,
    rng: &mut R,
) -> Result<(SelectionOutcome, Diagnostics), SelectionError> {
    let scored = score_sample(pair, predictor, cb, config, eps)?;
    select(&scored, pair.h_mm.view(), cb, thresh.lambda_hat, config, opts, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_scenario, ChannelPair};
    use crate::config::GeometryConfig;
    use crate::crc::CalibrationMode;
    use crate::predictor::{AdtPredictor, OraclePredictor, UniformPredictor};
    use crate::rng::stream;
    use ndarray::{arr2, Array2};

    fn small() -> SystemConfig {
        let mut c = SystemConfig::desk_profile();
        c.antennas = 8;
        c.rings = 2;
        c.subcarriers = 4;
        c
    }

    fn threshold(lambda_hat: f64) -> ThresholdResult {
        ThresholdResult {
            lambda_hat,
            achieved_empirical_risk: 0.0,
            alpha: 0.1,
            n_cal: 1,
            mode: CalibrationMode::Standard,
        }
    }

    fn pair(seed: u64, c: &SystemConfig) -> ChannelPair {
        let g = GeometryConfig::default();
        let mut rng = stream(seed, &[]);
        let s = generate_scenario(c, &g, &mut rng).unwrap();
        ChannelPair::synthesize(seed, s, c, &mut rng).unwrap()
    }

    #[test]
    fn candidate_set_edges() {
        let p = ProbabilityMatrix::from_weights(arr2(&[[0.4, 0.1], [0.4, 0.1]])).unwrap();
        let u = score_matrix(&p);
        assert!(candidate_set(&u, u.min() - 1e-9, 0).is_empty());
        let at_min = candidate_set(&u, u.min(), 0);
        assert_eq!(at_min.members, vec![BeamIndex::new(1, 1), BeamIndex::new(2, 1)]);
        let all = candidate_set(&u, f64::INFINITY, 0);
        assert_eq!(all.len(), 4);
        assert_eq!(all.members[2], BeamIndex::new(1, 2));
        assert!(all.members.iter().all(|&b| u.get(b) <= all.threshold_used));
    }

    #[test]
    fn sets_are_nested() {
        let mut rng = stream(61, &[]);
        let w = Array2::from_shape_fn((6, 3), |_| rng.random::<f64>());
        let u = score_matrix(&ProbabilityMatrix::from_weights(w).unwrap());
        let mut prev = candidate_set(&u, 0.0, 0);
        for k in 1..60 {
            let cur = candidate_set(&u, k as f64 * 0.1, 0);
            assert!(prev.members.iter().all(|b| cur.contains(*b)));
            prev = cur;
        }
    }

    #[test]
    fn singleton_and_empty_branches() {
        let c = small();
        let cb = PolarCodebook::build(&c).unwrap();
        let h = Array2::zeros((c.subcarriers, c.antennas));
        let mut rng = stream(62, &[]);
        let single = CandidateSet {
            members: vec![BeamIndex::new(4, 2)],
            threshold_used: 1.0,
            source_sample_id: 0,
        };
        let o = beam_training(&single, None, h.view(), &cb, &c, 1, false, &mut rng).unwrap();
        assert_eq!((o.chosen, o.branch, o.pilots_used), (BeamIndex::new(4, 2), Branch::Singleton, 0));

        let empty = CandidateSet {
            members: vec![],
            threshold_used: 0.0,
            source_sample_id: 0,
        };
        assert!(matches!(
            beam_training(&empty, None, h.view(), &cb, &c, 1, false, &mut rng),
            Err(SelectionError::MissingFallback)
        ));
        let mut w = Array2::from_elem((8, 2), 0.01);
        w[(6, 1)] = 0.5;
        let p = ProbabilityMatrix::from_weights(w).unwrap();
        let o = beam_training(&empty, Some(&p), h.view(), &cb, &c, 1, false, &mut rng).unwrap();
        assert_eq!((o.chosen, o.branch, o.pilots_used), (BeamIndex::new(7, 2), Branch::EmptySetFallback, 0));
        assert!(matches!(
            beam_training(&single, None, h.view(), &cb, &c, 0, false, &mut rng),
            Err(SelectionError::Pilots)
        ));
    }

    #[test]
    fn noiseless_training_finds_aligned_beam() {
        let mut c = small();
        c.noise_power = 0.0;
        let cb = PolarCodebook::build(&c).unwrap();
        let a = BeamIndex::new(6, 1);
        let b = cb.beam_at(a.n, a.s).unwrap();
        let h = Array2::from_shape_fn((c.subcarriers, c.antennas), |(_, i)| b[i].conj() * 1e-4);
        let cands = CandidateSet {
            members: vec![BeamIndex::new(2, 2), a],
            threshold_used: 1.0,
            source_sample_id: 0,
        };
        let o = beam_training(&cands, None, h.view(), &cb, &c, 3, true, &mut stream(63, &[])).unwrap();
        assert_eq!(o.chosen, a);
        assert_eq!(o.branch, Branch::Trained);
        assert_eq!(o.pilots_used, 6);
        assert_eq!(o.received_powers.unwrap().len(), 2);
    }

    /// Success rate of picking the within-set rate argmax grows with SNR.
    #[test]
    fn training_success_improves_with_snr() {
        let c0 = small();
        let cb = PolarCodebook::build(&c0).unwrap();
        let cands = candidate_set(&score_matrix(&ProbabilityMatrix::uniform(8, 2)), f64::INFINITY, 0);
        let power = |p: &ChannelPair, b: BeamIndex| -> f64 {
            projection(cb.beam_at(b.n, b.s).unwrap(), p.h_mm.view()).iter().map(|z| z.norm_sqr()).sum()
        };
        // a drop where the strongest beam is also the rate argmax
        let p = (64..)
            .map(|seed| pair(seed, &c0))
            .find(|p| {
                let rates = optimal_beam(p.h_mm.view(), &cb, &c0);
                let strongest = cands.members.iter().copied().max_by(|x, y| power(p, *x).total_cmp(&power(p, *y)));
                strongest == Some(rates.best_index())
            })
            .unwrap();
        let gain: f64 = p.h_mm.iter().map(|z| z.norm_sqr()).sum::<f64>() / c0.antennas as f64;
        let mut rates = Vec::new();
        for &snr in &[1.0, 1e3, 1e6] {
            let mut c = c0.clone();
            // per-subcarrier pilot SNR relative to the average beam gain
            c.noise_power = c.pilot_power / c.subcarriers as f64 * gain / c.subcarriers as f64 / snr;
            // rate argmax at the operating point, not the training SNR
            let best = optimal_beam(p.h_mm.view(), &cb, &c0).best_index();
            let mut rng = stream(65, &[snr.to_bits()]);
            let trials = 2000;
            let hits = (0..trials)
                .filter(|_| {
                    beam_training(&cands, None, p.h_mm.view(), &cb, &c, 1, false, &mut rng)
                        .unwrap()
                        .chosen
                        == best
                })
                .count();
            rates.push(hits as f64 / trials as f64);
        }
        assert!(rates[0] < rates[1] && rates[1] <= rates[2], "{rates:?}");
        assert!(rates[2] > 0.99, "{rates:?}");
    }

    #[test]
    fn oracle_at_min_score_is_singleton_with_ratio_one() {
        let c = small();
        let cb = PolarCodebook::build(&c).unwrap();
        for seed in 0..10 {
            let p = pair(100 + seed, &c);
            let scored = score_sample(&p, &OraclePredictor::default(), &cb, &c, 0.1).unwrap();
            let (o, d) = select(
                &scored,
                p.h_mm.view(),
                &cb,
                scored.scores.min(),
                &c,
                PipelineOptions::default(),
                &mut stream(seed, &[]),
            )
            .unwrap();
            assert_eq!(o.branch, Branch::Singleton);
            assert_eq!(o.chosen, d.best);
            assert_eq!(d.ratio, 1.0);
            assert!(d.covered);
        }
    }

    #[test]
    fn uniform_at_two_log_k_trains_over_codebook() {
        let c = small();
        let cb = PolarCodebook::build(&c).unwrap();
        let p = pair(70, &c);
        let t = threshold(2.0 * (cb.len() as f64).ln() + 1e-12);
        let (o, d) = run_pipeline(&p, &UniformPredictor, &cb, &t, &c, 0.1, PipelineOptions::default(), &mut stream(71, &[]))
            .unwrap();
        assert_eq!(d.set_size, cb.len());
        assert_eq!(o.branch, Branch::Trained);
        assert_eq!(o.pilots_used, cb.len());
    }

    /// The deployed coverage event equals the calibration loss.
    #[test]
    fn coverage_identity() {
        let c = small();
        let cb = PolarCodebook::build(&c).unwrap();
        let adt = AdtPredictor::default();
        let mut rng = stream(72, &[]);
        for seed in 0..40 {
            let p = pair(200 + seed, &c);
            let scored = score_sample(&p, &adt, &cb, &c, 0.2).unwrap();
            let mut lambdas: Vec<f64> = scored.scores.flat().to_vec();
            lambdas.push(scored.scores.min() - 1.0);
            lambdas.push(f64::INFINITY);
            for lam in lambdas {
                let (_, d) = select(&scored, p.h_mm.view(), &cb, lam, &c, PipelineOptions::default(), &mut rng).unwrap();
                assert_eq!(d.covered, scored.covered(lam));
                assert_eq!(!d.covered, lam < scored.critical_score);
            }
        }
    }
}
