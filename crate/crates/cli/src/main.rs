use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dynregret_cli::config::{Assignments, ExperimentConfig, SetSpec, StreamSpec};
use dynregret_cli::experiment::run_experiment;
use dynregret_cli::studies::{
    gram_csv, lower_bound_study, trace_inequality_study, GramFamily, LowerBoundParams,
};
use dynregret_cli::verify::{verify_suite, Scale};

#[derive(Parser)]
#[command(name = "dynregret", version, about = "Dynamic-regret experiments for online gradient descent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides run.out)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed (overrides run.seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Repetitions (overrides run.reps)
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Small,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured experiment and write trace and summary CSVs
    Run(Common),
    /// Check every acceptance property and print one line per criterion
    Verify {
        #[arg(long, value_enum, default_value = "small")]
        scale: ScaleArg,
        /// Also write verify.csv here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo regret of the adaptive policy on Rademacher streams
    LowerBound(Common),
    /// Energy versus tr(sqrt(A)) on random Gram matrices
    TraceIneq(Common),
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn io_error(path: &Path, err: std::io::Error) -> ExitCode {
    eprintln!("error: {}: {err}", path.display());
    ExitCode::from(3)
}

fn load(common: &Common) -> Result<ExperimentConfig, ExitCode> {
    let text = match &common.config {
        Some(path) => fs::read_to_string(path).map_err(|e| io_error(path, e))?,
        None => String::new(),
    };
    let mut a = Assignments::parse(&text).map_err(usage)?;
    if let Some(seed) = common.seed {
        a.insert("run.seed", &seed.to_string(), None).map_err(usage)?;
    }
    if let Some(reps) = common.reps {
        a.insert("run.reps", &reps.to_string(), None).map_err(usage)?;
    }
    if let Some(out) = &common.out {
        a.insert("run.out", &out.to_string_lossy(), None).map_err(usage)?;
    }
    a.build().map_err(usage)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), ExitCode> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_error(&path, e))
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(common) => {
            let cfg = match load(&common) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match run_experiment(&cfg, &out_dir(&cfg)) {
                Ok(summary) => {
                    println!(
                        "{} repetitions, {} with violations; wrote {}",
                        summary.repetitions.len(),
                        summary.violations,
                        out_dir(&cfg).display()
                    );
                    ExitCode::from(summary.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::Verify { scale, out } => {
            let scale = match scale {
                ScaleArg::Small => Scale::Small,
                ScaleArg::Full => Scale::Full,
            };
            let report = verify_suite(scale);
            for o in &report.outcomes {
                println!("{}", o.line());
            }
            if let Some(dir) = out {
                if let Err(code) = write_file(&dir, "verify.csv", &report.to_csv()) {
                    return code;
                }
            }
            ExitCode::from(u8::from(!report.all_passed()))
        }
        Command::LowerBound(common) => {
            let cfg = match load(&common) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let SetSpec::Ball { dim, radius, center: None } = cfg.set else {
                return usage("lower-bound needs a ball centered at the origin");
            };
            let scale = match cfg.stream {
                StreamSpec::Rademacher { scale, .. } => scale,
                _ => return usage("lower-bound needs stream.kind = rademacher"),
            };
            let budget = match cfg.comparator {
                dynregret_cli::config::ComparatorSpec::Segmented { p } => p.unwrap_or(0.0),
                _ => return usage("lower-bound needs comparator.kind = segmented"),
            };
            let params = LowerBoundParams {
                dim,
                radius,
                scale,
                budget,
                horizon: cfg.horizon,
                reps: cfg.reps,
                seed: cfg.seed,
            };
            let study = match lower_bound_study(&params) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(4);
                }
            };
            println!(
                "mean regret {:.6} over {} repetitions; lower_bound_sum {:.6}; ratio {:.4}",
                study.mean,
                params.reps,
                study.lower_bound,
                study.mean / study.lower_bound
            );
            match write_file(&out_dir(&cfg), "lower_bound.csv", &study.to_csv()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(code) => code,
            }
        }
        Command::TraceIneq(common) => {
            let cfg = match load(&common) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let mut all = Vec::new();
            for family in [GramFamily::Random, GramFamily::RankOne, GramFamily::Isotropic] {
                match trace_inequality_study(family, cfg.reps, cfg.seed) {
                    Ok(v) => all.extend(v),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(4);
                    }
                }
            }
            let (lo, hi) = all.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), g| {
                let scaled = g.comparison.ratio / (g.dim as f64).sqrt();
                (lo.min(g.comparison.ratio), hi.max(scaled))
            });
            println!("{} instances; min ratio {lo:.12}; max ratio/sqrt(N) {hi:.12}", all.len());
            match write_file(&out_dir(&cfg), "trace_ineq.csv", &gram_csv(&all)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(code) => code,
            }
        }
    }
}
