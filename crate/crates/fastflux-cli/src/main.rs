use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fastflux::decomp::{decompose, decomposition_report};
use fastflux::dynamics::{build_effective, read_trajectory, rescale, simulate_effective, simulate_eps, well_prepare, write_trajectory, Frame};
use fastflux::functionals::{eval_j_eps, eval_j_limit};
use fastflux::harness::{lower_bound_probe, run_study, write_study, InitialDatum, MarginTable, StudyConfig};
use fastflux::netmodel::{load_network, stationary_distribution, Network};
use fastflux::spikelab::{narrow_limit_check, spike_cost, NarrowReport, SpikeConfig, SpikeCost};
use fastflux::{ExtReal, Tolerances};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] fastflux::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "fastflux", version, about = "Fast-reaction limits of linear reaction networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FrameArg {
    Eps,
    Limit,
}

#[derive(Subcommand)]
enum Command {
    /// Print the decomposition report of a network as JSON.
    Analyze { net: PathBuf },
    /// Simulate the ε-dynamics (with --eps) or the effective dynamics.
    Simulate {
        net: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
        /// Time horizon.
        #[arg(long = "t", default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        /// Densities `u` by node, inline JSON object or path to one.
        #[arg(long)]
        init: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the blocks of the effective system.
    Reduce {
        net: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the rate functional of a trajectory CSV.
    Functional {
        net: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        /// `eps` for ε-trajectories (raw or rescaled), `limit` for effective ones.
        #[arg(long, value_enum)]
        frame: FrameArg,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form and quadrature costs of the spike family.
    Spike {
        #[arg(long = "K")]
        k: usize,
        #[arg(long)]
        l: usize,
        #[arg(long = "eps-sweep", value_delimiter = ',', default_value = "1e-2,1e-3,1e-4")]
        eps_sweep: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an ε-sweep convergence study; exits nonzero if a check fails.
    Converge {
        net: PathBuf,
        /// Study configuration JSON.
        #[arg(long)]
        config: PathBuf,
        /// Output directory; created if missing.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct SpikeReport {
    config: SpikeConfig,
    costs: Vec<SpikeCost>,
    /// `(max − min)/max` of the closed-form totals.
    spread: f64,
    narrow: NarrowReport,
    lower_bound: MarginTable,
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|source| CliError::Io { path: p.into(), source }),
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() == ErrorKind::BrokenPipe => Ok(()),
            r => r.map_err(|source| CliError::Io { path: "<stdout>".into(), source }),
        },
    }
}

fn initial_u(net: &Network, init: Option<&str>) -> CliResult<Vec<f64>> {
    let Some(spec) = init else {
        return Ok(vec![1.0; net.node_count()]);
    };
    let text = if spec.trim_start().starts_with('{') { spec.to_string() } else { read(Path::new(spec))? };
    let u = serde_json::from_str(&text)?;
    Ok(InitialDatum::Density { u, prepare: false }.resolve(net)?.0)
}

fn run(cli: Cli) -> CliResult<bool> {
    let tol = Tolerances::default();
    match cli.command {
        Command::Analyze { net } => {
            let net = load_network(&net)?;
            let d = decompose(&net, &tol)?;
            emit(&serde_json::to_string_pretty(&decomposition_report(&net, &d))?, None)?;
        }
        Command::Simulate { net, eps, horizon, steps, init, out } => {
            let net = load_network(&net)?;
            let d = decompose(&net, &tol)?;
            let u0 = initial_u(&net, init.as_deref())?;
            let traj = match eps {
                Some(eps) => {
                    let pi = stationary_distribution(&net, eps)?;
                    let rho0: Vec<f64> = u0.iter().zip(&pi.pi).map(|(u, p)| u * p).collect();
                    rescale(&net, &simulate_eps(&net, eps, &rho0, horizon, steps)?, &pi, &d)?
                }
                None => {
                    let sys = build_effective(&net, &d)?;
                    simulate_effective(&net, &d, &sys, &well_prepare(&u0, &d, &sys), horizon, steps)?
                }
            };
            write_trajectory(&net, &traj, &out)?;
        }
        Command::Reduce { net, out } => {
            let net = load_network(&net)?;
            let d = decompose(&net, &tol)?;
            let sys = build_effective(&net, &d)?;
            emit(&serde_json::to_string_pretty(&sys.to_json(&net, &d))?, out.as_deref())?;
        }
        Command::Functional { net, traj, frame, eps, out } => {
            let net = load_network(&net)?;
            let d = decompose(&net, &tol)?;
            let traj = read_trajectory(&net, &traj)?;
            let report = match frame {
                FrameArg::Limit => eval_j_limit(&net, &traj, &d, &tol)?,
                FrameArg::Eps => {
                    let file_eps = traj.frame.eps();
                    let eps = match (eps, file_eps) {
                        (Some(a), Some(b)) if (a - b).abs() > 1e-12 * b => {
                            return Err(CliError::Usage(format!("--eps {a} disagrees with trajectory header ε = {b}")))
                        }
                        (Some(a), _) => a,
                        (None, Some(b)) => b,
                        (None, None) => return Err(CliError::Usage("ε frame needs --eps".into())),
                    };
                    let pi = stationary_distribution(&net, eps)?;
                    let traj = match traj.frame {
                        Frame::Raw { .. } => rescale(&net, &traj, &pi, &d)?,
                        _ => traj,
                    };
                    eval_j_eps(&net, &traj, &d, &pi, &tol)?
                }
            };
            emit(&serde_json::to_string_pretty(&report)?, out.as_deref())?;
        }
        Command::Spike { k, l, eps_sweep, out } => {
            if eps_sweep.windows(2).any(|w| w[1] >= w[0]) {
                return Err(CliError::Usage("--eps-sweep must be strictly decreasing".into()));
            }
            let first = *eps_sweep.first().ok_or_else(|| CliError::Usage("--eps-sweep is empty".into()))?;
            let base = SpikeConfig::new(k, l, first);
            base.validate()?;
            let family: Vec<SpikeConfig> = eps_sweep.iter().map(|&e| base.with_eps(e)).collect();
            let costs = family.iter().map(spike_cost).collect::<Result<Vec<_>, _>>()?;
            let totals: Vec<f64> = costs.iter().map(|c| c.analytic_total).collect();
            let max = totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = totals.iter().copied().fold(f64::INFINITY, f64::min);
            let pts: Vec<(f64, ExtReal)> = costs.iter().map(|c| (c.eps, ExtReal::Finite(c.analytic_total))).collect();
            let report = SpikeReport {
                lower_bound: lower_bound_probe(&pts, costs[0].limit_total),
                narrow: narrow_limit_check(&family)?,
                spread: (max - min) / max,
                config: base,
                costs,
            };
            emit(&serde_json::to_string_pretty(&report)?, out.as_deref())?;
        }
        Command::Converge { net, config, out } => {
            let mut cfg = StudyConfig::from_json(&read(&config)?)?;
            cfg.network = Some(net.clone());
            cfg.output = Some(out.clone());
            let study = run_study(&load_network(&net)?, &cfg)?;
            write_study(&study, &out)?;
            for c in &study.report.checks {
                eprintln!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            return Ok(study.report.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
