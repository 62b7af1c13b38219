use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lungmtl::mtl::LossMode;
use lungmtl::pipeline::{run_pipeline, run_stage, Config, MaskSource, RunOptions, Stage};

#[derive(Parser)]
#[command(name = "lungmtl", version, about = "Lung CT phantom pipeline: segmentation, features, multitask training")]
struct Cli {
    /// TOML configuration; missing keys take their defaults.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Run directory.
    #[arg(long, short, global = true, default_value = "run")]
    out: PathBuf,
    /// Master seed (overrides run.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 = one per core (overrides run.workers).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct InputArgs {
    /// Directory holding the volumes and labels.csv (default <out>/phantoms).
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args, Default)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort.
    GenPhantoms {
        #[arg(long)]
        cases: Option<usize>,
    },
    /// Classical lung masks plus active-contour refinement.
    Segment(InputArgs),
    /// Dice, Jaccard, MCC and precision against ground truth.
    EvalSeg(InputArgs),
    /// Texture features for every case.
    Extract {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        mask: Option<MaskSource>,
        #[arg(long)]
        augment_copies: Option<usize>,
    },
    /// Train one loss mode.
    Train {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        mode: Option<LossMode>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Train every loss mode over a list of seeds.
    AblateLoss {
        #[command(flatten)]
        input: InputArgs,
        /// Comma-separated seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Welch's ANOVA significance table.
    Analyze,
    /// Every stage in order.
    Pipeline {
        #[arg(long)]
        cases: Option<usize>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenPhantoms { .. } => Stage::GenPhantoms.name(),
            Command::Segment(_) => Stage::Segment.name(),
            Command::EvalSeg(_) => Stage::EvalSeg.name(),
            Command::Extract { .. } => Stage::Extract.name(),
            Command::Train { .. } => Stage::Train.name(),
            Command::AblateLoss { .. } => Stage::AblateLoss.name(),
            Command::Analyze => Stage::Analyze.name(),
            Command::Pipeline { .. } => "pipeline",
            Command::ShowConfig => "show-config",
        }
    }
}

fn run(cli: Cli) -> lungmtl::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.run.workers = w;
    }
    let mut opts = RunOptions::new(cli.out);
    opts.force = cli.force;
    let epochs = |t: &TrainArgs, cfg: &mut Config| {
        if let Some(e) = t.epochs {
            cfg.train.epochs = e;
        }
    };
    let stage = match cli.command {
        Command::GenPhantoms { cases } => {
            if let Some(n) = cases {
                cfg.phantoms.cases = n;
            }
            Stage::GenPhantoms
        }
        Command::Segment(i) => {
            opts.input = i.input;
            Stage::Segment
        }
        Command::EvalSeg(i) => {
            opts.input = i.input;
            Stage::EvalSeg
        }
        Command::Extract { input, mask, augment_copies } => {
            opts.input = input.input;
            if let Some(m) = mask {
                cfg.extract.mask = m;
            }
            if let Some(k) = augment_copies {
                cfg.extract.augment_copies = k;
            }
            Stage::Extract
        }
        Command::Train { input, mode, train } => {
            opts.input = input.input;
            if let Some(m) = mode {
                cfg.train.mode = m;
            }
            epochs(&train, &mut cfg);
            Stage::Train
        }
        Command::AblateLoss { input, seeds, train } => {
            opts.input = input.input;
            if let Some(s) = seeds {
                cfg.ablate.seeds = s;
            }
            epochs(&train, &mut cfg);
            Stage::AblateLoss
        }
        Command::Analyze => Stage::Analyze,
        Command::Pipeline { cases, train } => {
            if let Some(n) = cases {
                cfg.phantoms.cases = n;
            }
            epochs(&train, &mut cfg);
            let m = run_pipeline(&cfg, &opts)?;
            println!("{}  {}", m.digest(), opts.out.join("manifest.json").display());
            return Ok(());
        }
        Command::ShowConfig => {
            print!("{}", cfg.to_toml());
            return Ok(());
        }
    };
    let m = run_stage(stage, &cfg, &opts)?;
    println!("{stage}: {} outputs, manifest {}", m.outputs.len(), m.digest());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli).map_err(|e| e.in_stage(name)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
