use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rendnet::harness::{
    ablate, ablation_table, evaluate, inspect, load_checkpoint, save_checkpoint, synth_generate,
    train_prepared, DatasetManifest, EpochLog, HarnessError, Metrics, Prepared, Symbol, SynthSpec,
    TrainConfig,
};
use rendnet::net::{Mode, ModelConfig};
use rendnet::vgdoc::{parse_canonical, parse_svg, VgDocument};

#[derive(Parser)]
#[command(
    name = "rendnet",
    version,
    about = "Vector-graphics recognition with latent space rasterization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic symbol dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1600)]
        train: usize,
        #[arg(long, default_value_t = 400)]
        test: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Also emit the train3d/test3d splits.
        #[arg(long)]
        dim3: bool,
        /// Comma-separated subset of symbol classes.
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<String>>,
    },
    /// Train one model variant; writes the best checkpoint and a CSV log.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: TrainOpts,
        #[arg(long, default_value = "full")]
        mode: Mode,
        /// CSV log path, defaults to the checkpoint path with a .csv extension.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train several variants on identical data and compare test error.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated modes, or "all".
        #[arg(long, default_value = "all", value_delimiter = ',')]
        modes: Vec<String>,
        #[command(flatten)]
        opts: TrainOpts,
        /// Write the table as CSV here as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the hypergraph, fragment cloud and, with a checkpoint,
    /// PCA-colored embeddings of one document.
    Inspect {
        #[arg(long)]
        doc: PathBuf,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        out_prefix: PathBuf,
    },
}

#[derive(clap::Args)]
struct TrainOpts {
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Use the train3d/test3d splits.
    #[arg(long)]
    dim3: bool,
}

impl TrainOpts {
    fn config(&self, data: &Path, mode: Mode) -> TrainConfig {
        let (train_split, test_split) = if self.dim3 {
            ("train3d", "test3d")
        } else {
            ("train", "test")
        };
        TrainConfig {
            model: ModelConfig {
                mode,
                ..Default::default()
            },
            epochs: self.epochs,
            batch: self.batch,
            lr: self.lr,
            seed: self.seed,
            data: data.to_path_buf(),
            train_split: train_split.into(),
            test_split: test_split.into(),
            stop_at: None,
        }
    }
}

enum Failure {
    Usage(String),
    Run(HarnessError),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Run(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|source| {
        Failure::Run(HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Synth {
            out,
            train,
            test,
            seed,
            dim3,
            classes,
        } => {
            let classes = match classes {
                None => Symbol::ALL.to_vec(),
                Some(names) => names
                    .iter()
                    .map(|n| {
                        Symbol::from_name(n)
                            .ok_or_else(|| Failure::Usage(format!("unknown class '{n}'")))
                    })
                    .collect::<Result<_, _>>()?,
            };
            let spec = SynthSpec {
                classes,
                train,
                test,
                seed,
                dim3,
            };
            spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let m = synth_generate(&spec, &out)?;
            for (split, files) in &m.splits {
                println!("{split}: {} documents", files.len());
            }
        }
        Command::Train {
            data,
            out,
            opts,
            mode,
            log,
        } => {
            let cfg = opts.config(&data, mode);
            cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let prepared = Prepared::load(&cfg)?;
            println!("{}", EpochLog::CSV_HEADER);
            let outcome = train_prepared(&cfg, &prepared, |e| println!("{}", e.csv_row()))?;
            save_checkpoint(&outcome.best, &out).map_err(HarnessError::from)?;
            write(
                &log.unwrap_or_else(|| out.with_extension("csv")),
                &outcome.csv(),
            )?;
            println!(
                "best test accuracy {:.4} at epoch {}",
                outcome.best_test_acc, outcome.best.meta.epoch
            );
        }
        Command::Eval { ckpt, data, split } => {
            let ckpt = load_checkpoint(&ckpt).map_err(HarnessError::from)?;
            let manifest = DatasetManifest::load(&data)?;
            let m = evaluate(&ckpt, &manifest, &split)?;
            print_metrics(&m, &manifest.classes);
        }
        Command::Ablate {
            data,
            modes,
            opts,
            out,
        } => {
            let modes: Vec<Mode> = if modes.iter().any(|m| m == "all") {
                Mode::ALL.to_vec()
            } else {
                modes
                    .iter()
                    .map(|m| m.parse().map_err(Failure::Usage))
                    .collect::<Result<_, _>>()?
            };
            let cfg = opts.config(&data, Mode::Full);
            cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let rows = ablate(&cfg, &modes)?;
            let table = ablation_table(&rows);
            print!("{table}");
            if let Some(p) = out {
                write(&p, &table)?;
            }
        }
        Command::Inspect {
            doc,
            ckpt,
            out_prefix,
        } => {
            let document = read_document(&doc)?;
            let ckpt = match ckpt {
                Some(p) => Some(load_checkpoint(&p).map_err(HarnessError::from)?),
                None => None,
            };
            let outs = inspect(&document, ckpt.as_ref(), &out_prefix)?;
            println!("{}", outs.dump.display());
            println!("{}", outs.fragments.display());
            if let Some(p) = outs.features {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn read_document(path: &Path) -> Result<VgDocument<f64>, Failure> {
    let text = fs::read_to_string(path).map_err(|source| {
        Failure::Run(HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })
    })?;
    let parsed = if path.extension().is_some_and(|e| e == "svg") {
        parse_svg(&text)
    } else {
        parse_canonical(&text)
    };
    parsed.map_err(|source| {
        Failure::Run(HarnessError::Document {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn print_metrics(m: &Metrics, classes: &[String]) {
    println!("accuracy {:.4}", m.accuracy);
    println!("error_pct {:.2}", m.error_pct());
    println!("mean_loss {:.6}", m.mean_loss);
    println!("class,precision,recall");
    for (k, name) in classes.iter().enumerate() {
        println!("{name},{:.4},{:.4}", m.precision[k], m.recall[k]);
    }
    println!("confusion (rows = truth)");
    for row in &m.confusion {
        println!(
            "{}",
            row.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
    }
}
