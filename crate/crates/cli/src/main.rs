//! `lorentz`: run the soft-sphere Lorentz gas experiments from a JSON config.
//!
//! Precedence for every parameter: command-line flag, then the config file block
//! for the subcommand, then the built-in default. The output directory comes from
//! `--out`, else `LORENTZ_OUT`, else the config's `out`, else `lorentz-out`.

mod config;
mod output;
mod run;

use clap::{Args, Parser, Subcommand};
use config::ConfigFile;
use output::{CliError, Kind};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "lorentz", version, about = "Soft-sphere Lorentz gas experiments")]
struct Cli {
    /// JSON config with one block per experiment kind.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (default 1).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs serially.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "LORENTZ_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one trajectory through a sampled obstacle field.
    Simulate(SimulateArgs),
    /// Velocity diffusion constant by quadrature, ε-limit, Fourier moment and Monte Carlo.
    Zeta(ZetaArgs),
    /// Solve the Landau equation in velocity or phase space.
    Landau(LandauArgs),
    /// Linear Boltzmann equation on the circle: jump process and Duhamel series.
    Boltzmann(BoltzmannArgs),
    /// Law of the velocity angle against the Gaussian limit over an ε sweep.
    Law(EnsembleArgs),
    /// Moments of a smooth observable against the Landau solution.
    Expectation(ExpectationArgs),
    /// Census of two-obstacle clusters along trajectories.
    Doublets(EnsembleArgs),
    /// Frequency of returns to a visited obstacle.
    Recollision(EnsembleArgs),
    /// Tabulate θ_ε(b) and the cross section.
    ScatterTable(ScatterArgs),
}

#[derive(Args, Debug, Default)]
struct SimulateArgs {
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Drop all stopping times.
    #[arg(long)]
    no_cutoffs: bool,
}

#[derive(Args, Debug, Default)]
struct ZetaArgs {
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Trajectories of the Monte Carlo estimate.
    #[arg(long)]
    n_traj: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct LandauArgs {
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    /// Solve on phase space instead of velocity space.
    #[arg(long)]
    phase: bool,
}

#[derive(Args, Debug, Default)]
struct BoltzmannArgs {
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    n_samples: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct EnsembleArgs {
    #[arg(long)]
    n_traj: Option<usize>,
    /// Comma-separated ε sweep.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Comma-separated α sweep.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long)]
    rho: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct ExpectationArgs {
    #[command(flatten)]
    ensemble: EnsembleArgs,
    #[arg(long)]
    zeta_ref: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct ScatterArgs {
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_ensemble(e: &mut config::EnsembleConfig, a: &EnsembleArgs) {
    set(&mut e.n_traj, a.n_traj);
    set(&mut e.eps_sweep, a.eps.clone());
    set(&mut e.alpha_sweep, a.alpha.clone());
    set(&mut e.rho, a.rho);
}

fn load(path: Option<&PathBuf>) -> Result<ConfigFile, CliError> {
    let Some(p) = path else { return Ok(ConfigFile::default()) };
    let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let file = match load(cli.config.as_ref()) {
        Ok(f) => f,
        Err(e) => return output::fail(&e, cli.out.as_deref()),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(1);
    let workers = cli.workers.or(file.workers);
    let out = cli.out.clone().or(file.out.clone()).unwrap_or_else(|| PathBuf::from("lorentz-out"));
    let ctx = run::Context { seed, workers, out: out.clone() };

    let result = match &cli.command {
        Command::Simulate(a) => {
            let mut c = file.simulate.unwrap_or_default();
            set(&mut c.eps, a.eps);
            set(&mut c.alpha, a.alpha);
            set(&mut c.rho, a.rho);
            set(&mut c.horizon, a.horizon);
            if a.no_cutoffs {
                c.cutoffs = lorentz_core::ensemble::CutoffMode::Disabled;
            }
            run::execute(&ctx, Kind::Simulate, &c, run::simulate)
        }
        Command::Zeta(a) => {
            let mut c = file.zeta.unwrap_or_default();
            set(&mut c.rho, a.rho);
            set(&mut c.alpha, a.alpha);
            set(&mut c.mc.n_traj, a.n_traj);
            run::execute(&ctx, Kind::Zeta, &c, run::zeta)
        }
        Command::Landau(a) => {
            let mut c = file.landau.unwrap_or_default();
            set(&mut c.zeta, a.zeta);
            set(&mut c.t, a.t);
            if a.phase {
                c.mode = config::LandauMode::Phase;
            }
            run::execute(&ctx, Kind::Landau, &c, run::landau)
        }
        Command::Boltzmann(a) => {
            let mut c = file.boltzmann.unwrap_or_default();
            set(&mut c.eps, a.eps);
            set(&mut c.alpha, a.alpha);
            set(&mut c.rho, a.rho);
            set(&mut c.t, a.t);
            set(&mut c.n_samples, a.n_samples);
            run::execute(&ctx, Kind::Boltzmann, &c, run::boltzmann)
        }
        Command::Law(a) => {
            let mut c = file.law.unwrap_or_default();
            apply_ensemble(&mut c.ensemble, a);
            run::execute(&ctx, Kind::Law, &c, run::law)
        }
        Command::Expectation(a) => {
            let mut c = file.expectation.unwrap_or_default();
            apply_ensemble(&mut c.ensemble, &a.ensemble);
            if a.zeta_ref.is_some() {
                c.zeta_ref = a.zeta_ref;
            }
            run::execute(&ctx, Kind::Expectation, &c, run::expectation)
        }
        Command::Doublets(a) => {
            let mut c = file.doublets.unwrap_or_default();
            apply_ensemble(&mut c.ensemble, a);
            run::execute(&ctx, Kind::Doublets, &c, run::doublets)
        }
        Command::Recollision(a) => {
            let mut c = file.recollision.unwrap_or_default();
            apply_ensemble(&mut c.ensemble, a);
            run::execute(&ctx, Kind::Recollision, &c, run::recollision)
        }
        Command::ScatterTable(a) => {
            let mut c = file.scatter_table.unwrap_or_default();
            set(&mut c.eps, a.eps);
            set(&mut c.alpha, a.alpha);
            run::execute(&ctx, Kind::ScatterTable, &c, run::scatter_table)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => output::fail(&e, Some(&out)),
    }
}
