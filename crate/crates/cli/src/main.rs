use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use synthfetal_cli::{
    cmd_bench, cmd_cluster_inspect, cmd_epg, cmd_evaluate, cmd_generate, cmd_interpolate, cmd_replay, CliError,
    CliResult, Overrides, RunConfig,
};
use synthfetal_core::augment::Profile;
use synthfetal_core::synth::GeneratorMode;

#[derive(Parser)]
#[command(name = "synthfetal", version, about = "Randomized synthetic fetal brain MR generation and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    count: Option<usize>,
    /// Single interpolation weight
    #[arg(long, global = true, conflicts_with = "alphas")]
    alpha: Option<f64>,
    /// Comma-separated interpolation weights
    #[arg(long, global = true, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// Augmentation profile: synthseg or simple
    #[arg(long, global = true, value_parser = parse_profile)]
    profile: Option<Profile>,
    /// Generator: synthseg, fetalsynthseg, fabian or randfabian
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<GeneratorMode>,
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    Profile::from_name(s).ok_or_else(|| format!("unknown profile {s:?}"))
}

fn parse_mode(s: &str) -> Result<GeneratorMode, String> {
    GeneratorMode::from_name(s).ok_or_else(|| format!("unknown mode {s:?}"))
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic image/label pairs from an input directory
    Generate {
        /// Input directory of subject pairs (overrides input.dir)
        input: Option<PathBuf>,
        /// Re-render the sample described by this sidecar instead
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Keep going past unreadable subjects and failed samples
        #[arg(long)]
        continue_on_error: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Time the GMM and EPG pipelines stage by stage
    Bench {
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Interpolate two checkpoints in weight space
    Interpolate {
        a: Option<PathBuf>,
        b: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Dice and HD95 report from a prediction/ground-truth manifest
    Evaluate {
        manifest: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Render a FeTA label map with the extended phase graph model
    Epg {
        labels: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Write the subclass map and fits for one subject
    ClusterInspect {
        labels: Option<PathBuf>,
        image: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: common.seed,
        workers: common.workers,
        out: common.out.clone(),
        count: common.count,
        alphas: common.alpha.map(|a| vec![a]).or_else(|| common.alphas.clone()),
        profile: common.profile,
        mode: common.mode,
    });
    Ok(cfg)
}

fn emit<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializes"));
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate {
            input,
            replay,
            continue_on_error,
            common,
        } => {
            let mut cfg = resolve(&common)?;
            if let Some(sidecar) = replay {
                let out = cfg.out_dir()?.to_path_buf();
                let w = cmd_replay(&sidecar, &out)?;
                emit(&serde_json::json!({ "replayed": w.index, "image": w.image, "labels": w.labels }));
                return Ok(());
            }
            if input.is_some() {
                cfg.input.dir = input;
            }
            cfg.run.continue_on_error |= continue_on_error;
            emit(&cmd_generate(&cfg)?);
        }
        Command::Bench { input, common } => {
            let mut cfg = resolve(&common)?;
            if input.is_some() {
                cfg.input.dir = input;
            }
            emit(&cmd_bench(&cfg)?);
        }
        Command::Interpolate { a, b, common } => {
            let mut cfg = resolve(&common)?;
            cfg.interpolate.a = a.or(cfg.interpolate.a);
            cfg.interpolate.b = b.or(cfg.interpolate.b);
            emit(&cmd_interpolate(&cfg)?);
        }
        Command::Evaluate { manifest, common } => {
            let mut cfg = resolve(&common)?;
            cfg.evaluate.manifest = manifest.or(cfg.evaluate.manifest);
            let report = cmd_evaluate(&cfg)?;
            emit(&report.summary);
        }
        Command::Epg { labels, common } => {
            let mut cfg = resolve(&common)?;
            cfg.epg.labels = labels.or(cfg.epg.labels);
            emit(&cmd_epg(&cfg)?);
        }
        Command::ClusterInspect { labels, image, common } => {
            let mut cfg = resolve(&common)?;
            cfg.cluster.labels = labels.or(cfg.cluster.labels);
            cfg.cluster.image = image.or(cfg.cluster.image);
            emit(&cmd_cluster_inspect(&cfg)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.to_string().lines().next().unwrap_or("").to_string());
            eprintln!("{}", err.to_json_line());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::FAILURE
        }
    }
}
