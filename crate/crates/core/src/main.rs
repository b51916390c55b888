use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use facesynth::datasets::commands::{self, RunOptions};
use facesynth::datasets::config::StrategyKind;
use facesynth::datasets::PipelineConfig;
use facesynth::error::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "facesynth", about = "Synthetic identity dataset pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON pipeline config; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// uncontrolled | replicated | uniform | subject_aware
    #[arg(long, global = true)]
    strategy: Option<String>,
    #[arg(long, global = true)]
    t0: Option<usize>,
    #[arg(long, global = true)]
    w: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Build the ground-truth corpus and calibrate the identity extractor.
    World,
    /// Fit the style prior to the corpus attributes.
    Fit,
    /// Train the generator.
    Train,
    /// Generate one synthetic dataset.
    Generate,
    /// Compute metric reports for the generated dataset.
    Analyze,
    /// Compare strategies and blending settings.
    Ablate,
}

fn options(cli: &Cli) -> Result<RunOptions> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(name) = &cli.strategy {
        cfg.sampler.strategy = serde_json::from_value::<StrategyKind>(serde_json::Value::String(name.clone()))
            .map_err(|_| Error::Config(format!("unknown strategy {name:?}")))?;
    }
    if let Some(t0) = cli.t0 {
        cfg.blend.t0 = t0;
    }
    if let Some(w) = cli.w {
        cfg.blend.w = w;
    }
    cfg.validate()?;
    if cli.workers == Some(0) {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    Ok(RunOptions { config: cfg, out: cli.out.clone(), workers: cli.workers })
}

fn run(cli: &Cli) -> Result<()> {
    let opts = options(cli)?;
    match cli.command {
        Command::World => {
            let s = commands::cmd_world(&opts)?;
            println!(
                "world: {} images of {} subjects, intra {:.3}, inter {:.3}",
                s.images, s.subjects, s.intra_mean, s.inter_mean
            );
        }
        Command::Fit => {
            let p = commands::cmd_fit(&opts)?;
            println!("prior: {} dims written to {}", p.mu().len(), opts.prior_dir().display());
        }
        Command::Train => {
            let h = commands::cmd_train(&opts)?;
            if let Some(last) = h.last() {
                println!("trained {} steps, final loss {:.5}", last.step, last.loss);
            }
        }
        Command::Generate => {
            let dir = commands::cmd_generate(&opts)?;
            println!("dataset written to {}", dir.display());
        }
        Command::Analyze => {
            let a = commands::cmd_analyze(&opts)?;
            println!(
                "intra {:.3}  inter {:.3}  eIR {:.3}  world intra {:.3}  cross {:.3}",
                a.synth.intra_mean, a.synth.inter_mean, a.eir, a.world.intra_mean, a.privacy_inter_mean
            );
        }
        Command::Ablate => {
            let rows = commands::cmd_ablate(&opts)?;
            print!("{}", commands::ablation_table(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
