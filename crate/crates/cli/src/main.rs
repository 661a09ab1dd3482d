use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nearbeam_cli::commands;
use nearbeam_cli::pool::init_workers;
use nearbeam_cli::report::{read_json, write_csv, write_json, CalibrationReport};
use nearbeam_cli::{ExperimentConfig, PredictorSpec, SweepAxis, SweepSpec};
use nearbeam_core::SystemParams;
use std::path::{Path, PathBuf};

/// Sub-6 GHz aided near-field beam selection with calibrated candidate sets.
#[derive(Debug, Parser)]
#[command(name = "nearbeam", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Replace the configured alphas with this single value.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Predictor: uniform, adt[:temp], oracle[:delta] or external[:path].
    #[arg(long)]
    predictor: Option<String>,
    /// Use the full-size system profile instead of the desk profile.
    #[arg(long)]
    table_profile: bool,
    /// Output path (file or directory, depending on the command).
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset and its provenance sidecar.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Override n_samples.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Calibrate thresholds on the dataset's calibration split (JSON report).
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Evaluate the dataset's test split against a calibration report.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        pilots_per_beam: Option<usize>,
    },
    /// Run a parameter sweep (long-form CSV).
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Override the sweep axis: alpha, n_cal, sub6_power or sub6_antennas.
        #[arg(long, requires = "values")]
        axis: Option<SweepAxis>,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Compare weighted and standard calibration under LoS/NLoS shift.
    Shift {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if c.table_profile {
        cfg.system = SystemParams::table_profile();
    }
    if let Some(a) = c.alpha {
        cfg.alphas = vec![a];
        if let Some(s) = cfg.shift.as_mut() {
            s.alpha = a;
        }
    }
    if let Some(e) = c.eps {
        cfg.eps = e;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(p) = &c.predictor {
        cfg.predictor = PredictorSpec::parse(p)?;
    }
    Ok(cfg)
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("cannot create {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    init_workers()?;
    match cli.command {
        Command::Generate { common, samples } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = samples {
                cfg.n_samples = n;
            }
            cfg.validate()?;
            let s = commands::generate(&cfg, &common.out)?;
            println!(
                "wrote {} samples to {} (sha256 {})",
                s.n_samples,
                common.out.display(),
                s.digest
            );
            println!(
                "LoS fraction {:.3}, mean paths: mmWave {:.2}, sub-6 GHz {:.2}",
                s.los_fraction, s.mean_mmwave_paths, s.mean_sub6_paths
            );
        }
        Command::Calibrate { common, dataset } => {
            let cfg = load_config(&common)?;
            cfg.validate()?;
            let report = commands::calibrate(&cfg, &dataset)?;
            write_json(&common.out, &report)?;
            for t in &report.thresholds {
                println!(
                    "alpha {:.3}: lambda_hat {} (empirical risk {:.4}, n_cal {})",
                    t.alpha, t.lambda_hat, t.achieved_empirical_risk, t.n_cal
                );
            }
        }
        Command::Evaluate {
            common,
            dataset,
            calibration,
            pilots_per_beam,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(p) = pilots_per_beam {
                cfg.pilots_per_beam = p;
            }
            cfg.validate()?;
            let report: CalibrationReport = read_json(&calibration)?;
            let (rows, summary) = commands::evaluate(&cfg, &dataset, &report)?;
            ensure_dir(&common.out)?;
            write_csv(&common.out.join("evaluation.csv"), &rows)?;
            write_json(&common.out.join("summary.json"), &summary)?;
            for a in &summary.per_alpha {
                println!(
                    "alpha {:.3}: coverage {:.4}, eps-suboptimal rate {:.4}, mean set size {:.2}, mean pilots {:.2}",
                    a.alpha, a.achieved_coverage, a.achieved_eps_suboptimal_rate, a.mean_set_size, a.mean_pilots
                );
            }
        }
        Command::Sweep {
            common,
            axis,
            values,
            trials,
        } => {
            let mut cfg = load_config(&common)?;
            if let (Some(axis), Some(values)) = (axis, values) {
                cfg.sweep = Some(SweepSpec { axis, values });
            }
            if let Some(t) = trials {
                cfg.n_trials = t;
            }
            cfg.validate()?;
            if cfg.sweep.is_none() {
                bail!("no sweep configured; add a [sweep] section or pass --axis and --values");
            }
            let rows = commands::sweep(&cfg)?;
            write_csv(&common.out, &rows)?;
            for (v, cov, size, med) in commands::sweep_digest(&rows) {
                println!("value {v}: mean coverage {cov:.4}, mean set size {size:.2} (median over trials {med:.2})");
            }
        }
        Command::Shift { common, trials } => {
            let mut cfg = load_config(&common)?;
            if cfg.shift.is_none() {
                cfg.shift = Some(Default::default());
            }
            if let Some(t) = trials {
                cfg.n_trials = t;
            }
            cfg.validate()?;
            let out = commands::shift(&cfg)?;
            ensure_dir(&common.out)?;
            write_csv(&common.out.join("shift_trials.csv"), &out.rows)?;
            write_csv(&common.out.join("shift_samples.csv"), &out.samples)?;
            write_json(&common.out.join("shift_summary.json"), &out.summary)?;
            for s in &out.summary {
                println!(
                    "test LoS ratio {}: {:?} coverage {:.4} +- {:.4}, mean set size {:.2}, sentinel runs {}",
                    s.test_los_ratio, s.method, s.mean_coverage, s.coverage_se, s.mean_set_size, s.sentinel_runs
                );
            }
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
