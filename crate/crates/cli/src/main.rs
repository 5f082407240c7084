use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ukan_bench::{Arm, SweepSpec};
use ukan_cli::{eval_checkpoint, load_config, train, Overrides, RunError, TaskKind, TrainOptions};

#[derive(Parser)]
#[command(name = "ukan", version, about = "Train, evaluate and benchmark KAN and UKAN models")]
struct Cli {
    /// Overrides the seed of the config or sweep.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for evaluation and benchmark forward passes.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write metrics.csv and checkpoint.bin.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Print each metric row to stderr as it is written.
        #[arg(long)]
        verbose: bool,
    },
    /// Print metrics of a checkpoint as one CSV row.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Task to evaluate on; defaults to the checkpoint's own task.
        #[arg(long)]
        task: Option<TaskKind>,
    },
    /// Time the matrix and naive KAN layers over orders and grid sizes.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "3")]
        orders: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "16,64,256,1024,4096")]
        grids: Vec<usize>,
        #[arg(long, default_value_t = 4096)]
        batch: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 32)]
        d_in: usize,
        #[arg(long, default_value_t = 32)]
        d_out: usize,
        /// Arms to run: matrix, naive.
        #[arg(long, value_delimiter = ',', default_value = "matrix,naive")]
        arms: Vec<String>,
        /// Largest naive basis tensor, in bytes, before a row is reported as OOM.
        #[arg(long)]
        memory_budget: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), RunError> {
    let overrides = Overrides {
        seed: cli.seed,
        out_dir: cli.out.clone(),
    };
    match cli.command {
        Command::Train { config, verbose } => {
            let cfg = load_config(&config, &overrides)?;
            let outcome = train(
                &cfg,
                TrainOptions {
                    threads: cli.threads,
                    verbose,
                },
            )?;
            eprintln!(
                "trained {} epochs; wrote {} and {}",
                outcome.epochs_run,
                outcome.metrics_path.display(),
                outcome.checkpoint_path.display()
            );
        }
        Command::Eval { checkpoint, task } => {
            println!("{}", eval_checkpoint(&checkpoint, task, cli.threads)?);
        }
        Command::Bench {
            orders,
            grids,
            batch,
            reps,
            d_in,
            d_out,
            arms,
            memory_budget,
        } => {
            let defaults = SweepSpec::default();
            let arms = arms
                .iter()
                .map(|a| match a.as_str() {
                    "matrix" => Ok(Arm::Matrix),
                    "naive" => Ok(Arm::Naive),
                    _ => Err(RunError::Config(ukan_cli::ConfigError {
                        key: "--arms".into(),
                        message: format!("unknown arm `{a}` (matrix, naive)"),
                    })),
                })
                .collect::<Result<_, _>>()?;
            let spec = SweepSpec {
                orders,
                grids,
                batch,
                d_in,
                d_out,
                reps,
                threads: cli.threads,
                memory_budget: memory_budget.unwrap_or(defaults.memory_budget),
                seed: cli.seed.unwrap_or(defaults.seed),
                arms,
            };
            spec.validate().map_err(|e| {
                RunError::Config(ukan_cli::ConfigError {
                    key: "bench".into(),
                    message: e.to_string(),
                })
            })?;
            let mut csv = Vec::new();
            {
                let stdout = std::io::stdout();
                let mut tee = Tee {
                    out: stdout.lock(),
                    copy: &mut csv,
                };
                ukan_bench::write_sweep_csv(&spec, &mut tee)?;
            }
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir).and_then(|()| std::fs::write(dir.join("bench.csv"), &csv)).map_err(
                    |source| RunError::Io {
                        path: dir.join("bench.csv"),
                        source,
                    },
                )?;
            }
        }
    }
    Ok(())
}

/// Writes to standard output and keeps a copy.
struct Tee<'a, W: Write> {
    out: W,
    copy: &'a mut Vec<u8>,
}

impl<W: Write> Write for Tee<'_, W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.out.write(buf)?;
        self.copy.extend_from_slice(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
