//! `trialoc`: emulate operating characteristics of Bayesian trial designs.

mod error;
mod figures;
mod io;
mod run;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use trialoc_core::design::DesignKind;
use trialoc_core::doc::Statistic;
use trialoc_core::emulator::Emulator;
use trialoc_core::study::{run_sim_study, StudyConfig};
use trialoc_core::trial_models::ModelKind;

use crate::error::{CliError, Result};
use crate::io::fmt;
use crate::stages::{Bounds, ScmcSettings};

#[derive(Parser)]
#[command(name = "trialoc", version, about)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Binary,
    Ordinal,
}

impl From<Model> for ModelKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Binary => ModelKind::Binary,
            Model::Ordinal => ModelKind::Ordinal,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Stat {
    Sup,
    Fut,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Training,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Covering sample on the constrained simplex.
    SampleSimplex {
        #[arg(long)]
        bounds: PathBuf,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1e6)]
        tau_target: f64,
        #[arg(long, default_value_t = 5)]
        moves: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Training or test design: clustered simplex points crossed with an OR
    /// grid, or with `--p0-range` a rectangular grid for the binary model.
    Design {
        #[arg(long, conflicts_with = "p0_range")]
        bounds: Option<PathBuf>,
        #[arg(long, requires = "bounds")]
        k: Option<usize>,
        #[arg(long, requires = "bounds")]
        or_grid: Option<String>,
        #[arg(long, requires = "bounds")]
        seed: Option<u64>,
        #[arg(long, default_value_t = 2000)]
        covering_n: usize,
        #[arg(long, requires_all = ["or_range", "grid"])]
        p0_range: Option<String>,
        #[arg(long)]
        or_range: Option<String>,
        /// Grid size as `N_P0xN_OR`.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, value_enum, default_value = "training")]
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulated `π` for every design point.
    Simulate {
        #[arg(long)]
        design: PathBuf,
        #[arg(long, value_enum)]
        model: Model,
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        posterior_draws: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Beta fits and Gaussian-process emulator.
    Fit {
        #[arg(long)]
        pi_samples: PathBuf,
        #[arg(long)]
        design: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long)]
        nugget: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predictive Beta-parameter draws at test points.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Operating-characteristic estimates with credible intervals.
    Doc {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_enum)]
        stat: Stat,
        #[arg(long)]
        threshold: f64,
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emulator accuracy study for the binary model.
    Simstudy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the full report (per-replication summaries) as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Full pipeline from one JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Record per-stage wall time in the manifest (outputs then differ
        /// between runs).
        #[arg(long)]
        timings: bool,
    },
    /// Figure data files from stage outputs.
    Figures {
        #[arg(long)]
        run_dir: PathBuf,
        /// Figure id, or `all` for every figure whose inputs exist.
        #[arg(long, default_value = "all")]
        id: String,
        #[arg(long)]
        simstudy: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn pair(text: &str) -> Result<(f64, f64)> {
    match io::parse_list(text)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(CliError::config(format!("expected `lo,hi`, got `{text}`"))),
    }
}

fn grid_size(text: &str) -> Result<(usize, usize)> {
    let bad = || CliError::config(format!("expected `NxM`, got `{text}`"));
    let (a, b) = text.split_once('x').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn design_kind(k: Kind) -> DesignKind {
    match k {
        Kind::Training => DesignKind::Training,
        Kind::Test => DesignKind::Test,
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::SampleSimplex {
            bounds,
            n,
            seed,
            tau_target,
            moves,
            out,
        } => {
            let spec = io::read_json::<Bounds>(&bounds)?.spec()?;
            let settings = ScmcSettings {
                tau_target,
                moves_per_step: moves,
            };
            io::write_points(&out, &stages::sample_simplex(&spec, n, seed, settings)?)
        }
        Command::Design {
            bounds,
            k,
            or_grid,
            seed,
            covering_n,
            p0_range,
            or_range,
            grid,
            kind,
            out,
        } => {
            let kind = design_kind(kind);
            if let Some(bounds) = bounds {
                let spec = io::read_json::<Bounds>(&bounds)?.spec()?;
                let (k, or_grid, seed) = match (k, or_grid, seed) {
                    (Some(k), Some(g), Some(s)) => (k, io::parse_list(&g)?, s),
                    _ => return Err(CliError::config("--bounds needs --k, --or-grid and --seed")),
                };
                let d = stages::ordinal_design(&spec, k, &or_grid, seed, covering_n, ScmcSettings::default(), kind)?;
                io::write_design(&out, &d.points, kind, ModelKind::Ordinal)
            } else {
                let (p0, or, grid) = match (p0_range, or_range, grid) {
                    (Some(p), Some(o), Some(g)) => (pair(&p)?, pair(&o)?, grid_size(&g)?),
                    _ => {
                        return Err(CliError::config(
                            "give either --bounds (ordinal) or --p0-range, --or-range and --grid (binary)",
                        ))
                    }
                };
                let d = stages::binary_grid(p0, or, grid, kind)?;
                io::write_design(&out, &d.points, kind, ModelKind::Binary)
            }
        }
        Command::Simulate {
            design,
            model,
            n,
            replicates,
            posterior_draws,
            seed,
            out,
        } => {
            let (kind, points) = io::read_design(&design)?;
            let model: ModelKind = model.into();
            if kind != model {
                return Err(CliError::config(format!(
                    "design {} holds {} points but --model is {}",
                    design.display(),
                    kind.as_str(),
                    model.as_str()
                )));
            }
            let config = stages::trial_config(model, seed, n, replicates, posterior_draws);
            io::write_pi_samples(&out, &stages::simulate(&points, &config)?)
        }
        Command::Fit {
            pi_samples,
            design,
            seed,
            restarts,
            nugget,
            out,
        } => {
            let (_, points) = io::read_design(&design)?;
            let samples = io::read_pi_samples(&pi_samples, &points)?;
            io::write_json(&out, &stages::fit(&samples, seed, restarts, nugget)?)
        }
        Command::Predict {
            model,
            test,
            draws,
            seed,
            out,
        } => {
            let emulator: Emulator = io::read_json(&model)?;
            let (_, points) = io::read_design(&test)?;
            stages::write_predictive(&out, &stages::predict(&emulator, &points, draws, seed)?)
        }
        Command::Doc {
            model,
            test,
            stat,
            threshold,
            draws,
            seed,
            out,
        } => {
            let emulator: Emulator = io::read_json(&model)?;
            let (kind, points) = io::read_design(&test)?;
            let statistic = match stat {
                Stat::Sup => Statistic::Superiority,
                Stat::Fut => Statistic::Futility,
            };
            let predictive = stages::predict(&emulator, &points, draws, seed)?;
            stages::write_doc(&out, kind, &stages::doc(&predictive, statistic, threshold)?)
        }
        Command::Simstudy { config, out, report } => {
            let config: StudyConfig = io::read_json(&config)?;
            let r = run_sim_study(&config)?;
            let rows = r.points.iter().map(|p| {
                let mut row: Vec<String> = p.theta.coords().into_iter().map(fmt).collect();
                row.extend([p.phi_true, p.point, p.rmse, p.bias, p.psd].map(fmt));
                row
            });
            io::write_csv(&out, &["p0", "or", "phi_true", "point", "rmse", "bias", "psd"], rows)?;
            if let Some(path) = report {
                io::write_json(&path, &r)?;
            }
            Ok(())
        }
        Command::Run {
            config,
            out_dir,
            timings,
        } => {
            let config: run::RunConfig = io::read_json(&config)?;
            let dir = out_dir
                .or_else(|| config.output_dir.clone())
                .ok_or_else(|| CliError::config("no output directory: set output_dir or pass --out-dir"))?;
            run::run_pipeline(&config, &dir, timings)
        }
        Command::Figures {
            run_dir,
            id,
            simstudy,
            out_dir,
        } => {
            let out_dir = out_dir.unwrap_or_else(|| run_dir.join("figures"));
            if id == "all" {
                let mut written = 0;
                for id in figures::FIGURE_IDS {
                    let out = out_dir.join(format!("{id}.csv"));
                    match figures::emit(id, &run_dir, simstudy.as_deref(), &out) {
                        Ok(()) => written += 1,
                        Err(CliError::Config(msg)) => eprintln!("skipping {id}: {msg}"),
                        Err(e) => return Err(e),
                    }
                }
                if written == 0 {
                    return Err(CliError::config(format!(
                        "no figure inputs found in {}",
                        run_dir.display()
                    )));
                }
                Ok(())
            } else {
                figures::emit(&id, &run_dir, simstudy.as_deref(), &out_dir.join(format!("{id}.csv")))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
