//! Command-line front end: run experiments, score clouds and plot metrics.

use std::ops::Range;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use see_core::sim::experiment::{plot_csv, run_experiment, ExperimentConfig};
use see_core::sim::{coverage, load_mesh, ply::read_ply};
use see_core::Vector;

#[derive(Parser, Debug)]
#[command(name = "see", version, about = "Next-best-view planning on simulated depth sensors")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run seeded trials from a TOML config and write metrics, clouds and plots.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Half-open seed range such as `0..10`, or a single seed.
        #[arg(short, long, default_value = "0..1", value_parser = parse_seeds)]
        seeds: Range<u64>,
    },
    /// Fraction of mesh vertices within `eta` of a point in a PLY cloud.
    Coverage {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long, default_value_t = 0.005)]
        eta: f64,
        /// Rescale the mesh to fit this box first, e.g. `0.8,0.8,0.6`.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        scale_to_box: Option<Vec<f64>>,
    },
    /// Plot coverage from a views CSV as an SVG.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Axis::Distance)]
        x: Axis,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Axis {
    Distance,
    Time,
}

fn parse_seeds(s: &str) -> Result<Range<u64>, String> {
    let range = match s.split_once("..") {
        Some((a, b)) => {
            let a = a.trim().parse::<u64>().map_err(|e| format!("bad seed {a:?}: {e}"))?;
            let b = b.trim().parse::<u64>().map_err(|e| format!("bad seed {b:?}: {e}"))?;
            a..b
        }
        None => {
            let a = s.trim().parse::<u64>().map_err(|e| format!("bad seed {s:?}: {e}"))?;
            a..a + 1
        }
    };
    if range.is_empty() {
        return Err(format!("empty seed range {s:?}"));
    }
    Ok(range)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config, out, seeds } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let seeds: Vec<u64> = seeds.collect();
            let summary = run_experiment(&cfg, &out, &seeds)?;
            println!(
                "{} trials ({} failed): views {:.2} ± {:.2}, coverage {:.2}% ± {:.2}, distance {:.3} ± {:.3} m, planning {:.2} ± {:.2} s",
                summary.trials.len(),
                summary.failed,
                summary.views.mean,
                summary.views.std,
                100.0 * summary.coverage.mean,
                100.0 * summary.coverage.std,
                summary.distance_m.mean,
                summary.distance_m.std,
                summary.planning_time_s.mean,
                summary.planning_time_s.std,
            );
            println!("outputs in {}", out.display());
        }
        Command::Coverage {
            mesh,
            cloud,
            eta,
            scale_to_box,
        } => {
            if eta.is_nan() || eta <= 0.0 {
                bail!("eta must be positive");
            }
            let mut m = load_mesh(&mesh)?;
            if let Some(b) = scale_to_box {
                m.scale_to_box(Vector::new(b[0], b[1], b[2]));
            }
            let file = std::fs::File::open(&cloud).with_context(|| format!("opening {}", cloud.display()))?;
            let pts = read_ply(file)?.vertices;
            let c = coverage(m.vertices(), &pts, eta);
            println!("{c:.6}");
        }
        Command::Plot { csv, out, x } => {
            let column = match x {
                Axis::Distance => "cum_distance_m",
                Axis::Time => "nbv_time_s",
            };
            plot_csv(&csv, &out, column)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
