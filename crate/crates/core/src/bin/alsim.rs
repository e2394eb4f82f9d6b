//! Command-line interface for the annotation-workflow simulator.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use alsim_core::error::Error;
use alsim_core::experiment::{
    build_summary, read_cases_csv, run, write_summary_csv, Dataset, ExperimentConfig, Split, Strategy,
};
use alsim_core::learner::{load_checkpoint, predict, save_checkpoint, train, PartialLabels, TrainConfig};
use alsim_core::metrics::evaluate_case;
use alsim_core::uncertainty::{mc_sample, predictive_entropy, slice_uncertainty_profile, SliceUncertaintyProfile};
use alsim_core::volume::{LabelVolume, ScalarVolume};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "alsim", version, about = "Active-learning annotation workflow simulator for 3D segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a phantom dataset and its manifest.
    Generate(GenerateArgs),
    /// Run the full multi-iteration experiment.
    Run(RunArgs),
    /// Train a single model on a dataset manifest.
    Train(TrainArgs),
    /// Write entropy map and slice profile for one volume and checkpoint.
    Uncertainty(UncertaintyArgs),
    /// Score a prediction against a reference segmentation.
    Evaluate(EvaluateArgs),
    /// Re-summarize a per-case CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Experiment config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated strategy arms (uvs,rvs,uss,rss).
    #[arg(long, value_delimiter = ',')]
    arms: Option<Vec<Strategy>>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Run the converged phase after the iterations.
    #[arg(long)]
    converged: bool,
    /// Persist intermediate probability/entropy volumes.
    #[arg(long)]
    keep_volumes: bool,
    /// Worker threads (0 = default).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest; pool volumes train fully annotated, val validates.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct UncertaintyArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    volume: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    cases: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, Error> {
    match path {
        Some(p) => ExperimentConfig::from_json_file(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Generate(args) => {
            let mut cfg = load_config(&args.config)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            cfg.validate()?;
            std::fs::create_dir_all(&args.out)?;
            let dataset = Dataset::generate(&cfg)?;
            let manifest = dataset.write(&args.out)?;
            println!("wrote {} volumes to {}", manifest.volumes.len(), args.out.display());
            Ok(())
        }
        Command::Run(args) => {
            let mut cfg = load_config(&args.config)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let Some(arms) = args.arms {
                cfg.strategies = arms;
            }
            if let Some(iters) = args.iterations {
                cfg.iterations = iters;
            }
            if args.converged {
                cfg.converged = true;
            }
            if args.keep_volumes {
                cfg.keep_volumes = true;
            }
            if let Some(threads) = args.threads {
                cfg.threads = threads;
            }
            let outputs = run(&cfg, &args.out)?;
            println!(
                "run complete: {} case rows, {} summary rows -> {}",
                outputs.cases.len(),
                outputs.summary.len(),
                args.out.display()
            );
            Ok(())
        }
        Command::Train(args) => {
            let mut cfg = load_config(&args.config)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            let mut train_cfg: TrainConfig = cfg.train.clone();
            train_cfg.seed = cfg.seed;
            if let Some(steps) = args.steps {
                train_cfg.max_steps = steps;
            }
            let dataset = Dataset::load(&args.manifest)?;
            let parts: Vec<(alsim_core::sampling::VolumeId, PartialLabels)> = dataset
                .ids_of(Split::Pool)
                .into_iter()
                .map(|id| (id, PartialLabels::full(dataset.labels_of(id).clone())))
                .collect();
            let train_set: Vec<(&ScalarVolume, &PartialLabels)> = parts
                .iter()
                .map(|(id, part)| (dataset.image(*id), part))
                .collect();
            let val_set: Vec<(&ScalarVolume, &LabelVolume)> = dataset
                .ids_of(Split::Val)
                .into_iter()
                .map(|id| (dataset.image(id), dataset.labels_of(id)))
                .collect();
            let outcome = train(&train_set, &val_set, &cfg.learner, &train_cfg)?;
            std::fs::create_dir_all(&args.out)?;
            save_checkpoint(args.out.join("model.ckpt"), &outcome.params, &cfg.learner.features)?;
            let mut log = String::from("step,loss,val_jaccard\n");
            for entry in &outcome.log {
                log.push_str(&format!("{},{},{}\n", entry.step, entry.loss, entry.val_jaccard));
            }
            std::fs::write(args.out.join("train_log.csv"), log)?;
            println!(
                "trained {} steps, best step {} (val jaccard {})",
                outcome.steps_run,
                outcome.best_step,
                outcome.best_jaccard.map(|j| j.to_string()).unwrap_or_else(|| "none".into())
            );
            Ok(())
        }
        Command::Uncertainty(args) => {
            let (params, features) = load_checkpoint(&args.checkpoint)?;
            let volume = ScalarVolume::read_mhd(&args.volume)?;
            let samples = mc_sample(&params, &volume, &features, args.samples, args.seed)?;
            let entropy = predictive_entropy(&samples)?;
            let profile = SliceUncertaintyProfile::new(slice_uncertainty_profile(&entropy), 5);
            std::fs::create_dir_all(&args.out)?;
            entropy.values().write_mhd(args.out.join("entropy.mhd"))?;
            let prob = predict(&params, &volume, &features)?;
            prob.values().write_mhd(args.out.join("probability.mhd"))?;
            let mut csv = String::from("z,mean_entropy,is_peak\n");
            for (z, value) in profile.values.iter().enumerate() {
                csv.push_str(&format!("{},{},{}\n", z, value, u8::from(profile.peaks.contains(&z))));
            }
            std::fs::write(args.out.join("profile.csv"), csv)?;
            println!("peaks: {:?}", profile.peaks);
            Ok(())
        }
        Command::Evaluate(args) => {
            let pred = LabelVolume::read_mhd(&args.pred)?;
            let reference = LabelVolume::read_mhd(&args.reference)?;
            let m = evaluate_case(&pred, &reference)?;
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            println!("dice,rve_pct,msd_mm,hd_mm,undefined_flags");
            println!(
                "{},{},{},{},{}",
                fmt(m.dice),
                fmt(m.rve),
                fmt(m.msd),
                fmt(m.hd),
                m.undefined_flags().join(";")
            );
            Ok(())
        }
        Command::Report(args) => {
            let rows = read_cases_csv(&args.cases)?;
            let summary = build_summary(&rows);
            write_summary_csv(&args.out, &summary)?;
            println!("wrote {} summary rows to {}", summary.len(), args.out.display());
            Ok(())
        }
    }
}
