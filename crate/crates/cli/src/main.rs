//! `rodpinn`: train, verify and export.

mod config;
mod run;
mod verify;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rodpinn::analysis::{exact_bar_general, BarSupport};

use config::RunConfigFile;

/// Exit status for a run that stopped on divergence.
const EXIT_DIVERGED: u8 = 2;

#[derive(Parser)]
#[command(name = "rodpinn", version, about = "Physics-informed networks for bar and rod dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write loss, probe, diagnostics and checkpoint files.
    Run(RunArgs),
    /// Run the built-in correctness checks.
    Verify {
        #[arg(value_enum, default_value = "all")]
        suite: verify::Suite,
        /// Also try to load this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Print the effective configuration after defaults and overrides.
    Config(ConfigArgs),
    /// Write the collocation grid of a configuration as CSV.
    Grid {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Tabulate the exact bar solution as CSV (`t,u`).
    Exact {
        #[arg(long, default_value = "pinned-pinned")]
        bc: String,
        #[arg(long, default_value_t = 0.5)]
        x: f64,
        #[arg(long, default_value_t = 4.0)]
        t_max: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, default_value_t = 1.0)]
        s: f64,
        #[arg(long, default_value_t = 0.5)]
        fx: f64,
        #[arg(long, default_value_t = 200)]
        terms: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML run configuration.
    config: Option<PathBuf>,
    /// Override any key: `--set section.key=value` (repeatable).
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    form: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Initializer seed.
    #[arg(long)]
    seed: Option<u64>,
    /// regular | fixed-random | varying-random
    #[arg(long)]
    grid: Option<String>,
    #[arg(long = "grid-n")]
    grid_n: Option<usize>,
    #[arg(long = "grid-seed")]
    grid_seed: Option<u64>,
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long = "init-lr")]
    init_lr: Option<f64>,
    #[arg(long = "checkpoint-stride")]
    checkpoint_stride: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Barrier as `shape:basis`, e.g. `inverse:acceleration` or `i:a`.
    #[arg(long)]
    barrier: Option<String>,
    #[arg(long = "barrier-depth")]
    barrier_depth: Option<f64>,
    #[arg(long = "barrier-weight")]
    barrier_weight: Option<f64>,
    #[arg(long = "barrier-off-at")]
    barrier_off_at: Option<usize>,
    #[arg(long = "run-id")]
    run_id: Option<String>,
    /// Output directory; defaults to `RODPINN_OUT_DIR`, then `.`.
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Continue from a checkpoint; steps count on from its step.
    #[arg(long)]
    resume: Option<PathBuf>,
}

impl ConfigArgs {
    /// Flags become `--set` overrides, applied after the explicit ones.
    fn overrides(&self) -> Result<Vec<String>> {
        let mut out = self.sets.clone();
        let mut push = |key: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push(format!("{key}={v}"));
            }
        };
        let quoted = |s: &Option<String>| s.as_ref().map(|s| format!("{s:?}"));
        push("problem.preset", quoted(&self.preset));
        push("problem.form", quoted(&self.form));
        push("train.steps", self.steps.map(|v| v.to_string()));
        push("network.width", self.width.map(|v| v.to_string()));
        push("network.hidden", self.hidden.map(|v| v.to_string()));
        push("network.seed", self.seed.map(|v| v.to_string()));
        push("grid.kind", quoted(&self.grid));
        push("grid.n", self.grid_n.map(|v| v.to_string()));
        push("grid.seed", self.grid_seed.map(|v| v.to_string()));
        push("schedule.kind", quoted(&self.schedule));
        push("schedule.init_lr", self.init_lr.map(|v| format!("{v:?}")));
        push("train.checkpoint_stride", self.checkpoint_stride.map(|v| v.to_string()));
        push("train.workers", self.workers.map(|v| v.to_string()));
        if let Some(b) = &self.barrier {
            let Some((shape, basis)) = b.split_once(':') else {
                bail!("--barrier expects shape:basis, got {b:?}");
            };
            push("barrier.shape", Some(format!("{shape:?}")));
            push("barrier.basis", Some(format!("{basis:?}")));
        }
        push("barrier.depth", self.barrier_depth.map(|v| format!("{v:?}")));
        push("barrier.weight", self.barrier_weight.map(|v| format!("{v:?}")));
        push("barrier.off_at", self.barrier_off_at.map(|v| v.to_string()));
        push("run.run_id", quoted(&self.run_id));
        push(
            "run.out_dir",
            self.out_dir.as_ref().map(|p| format!("{:?}", p.display().to_string())),
        );
        Ok(out)
    }

    fn load(&self) -> Result<RunConfigFile> {
        RunConfigFile::load(self.config.as_deref(), &self.overrides()?)
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => {
            let file = args.cfg.load()?;
            let outcome = run::execute(&file, args.resume.as_deref())?;
            let rec = &outcome.record;
            if let Some(last) = rec.history.last() {
                println!("step {} loss {:.6e}", last.step, last.total);
            }
            println!("best loss {:.6e} at step {}", rec.best_loss, rec.best_step);
            if !rec.inside_buffer_steps.is_empty() {
                println!(
                    "barrier buffer entered at {} steps (first {})",
                    rec.inside_buffer_steps.len(),
                    rec.inside_buffer_steps[0]
                );
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if let Some(d) = &rec.diverged {
                eprintln!("diverged at step {}: {}", d.step, d.reason);
                return Ok(ExitCode::from(EXIT_DIVERGED));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { suite, checkpoint } => {
            let checks = verify::run(suite, checkpoint.as_deref());
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!("{} checks, {failed} failed", checks.len());
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Config(args) => {
            let file = args.load()?;
            file.resolve()?;
            print!("{}", file.to_toml()?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Grid { cfg, output } => {
            let file = cfg.load()?;
            let r = file.resolve()?;
            let grid = r.train.grid.build(r.train.problem.t_final)?;
            match output {
                Some(p) => grid.save_csv(&p)?,
                None => grid.write_csv(std::io::stdout().lock())?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Exact { bc, x, t_max, dt, s, fx, terms, output } => {
            let support = match bc.as_str() {
                "pinned-pinned" | "pp" => BarSupport::PinnedPinned,
                "pinned-free" | "pf" => BarSupport::PinnedFree,
                _ => bail!("unknown bc {bc:?} (pinned-pinned | pinned-free)"),
            };
            if !(dt > 0.0 && t_max >= 0.0) {
                bail!("--dt must be positive and --t-max non-negative");
            }
            let mut text = String::from("t,u\n");
            let n = (t_max / dt).round() as usize;
            for i in 0..=n {
                let t = i as f64 * dt;
                let u = exact_bar_general(support, s, fx, x, t, terms)?;
                text.push_str(&format!("{t},{u}\n"));
            }
            match output {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => std::io::stdout().lock().write_all(text.as_bytes())?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
