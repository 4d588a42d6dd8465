//! One runner per subcommand. Each writes its result files into the sink.

use crate::config::*;
use crate::output::{self, CliError, Kind, Resolved, Sink};
use lorentz_core::coefficients::{self, Method, ZetaReportEntry};
use lorentz_core::dynamics::{self, SimulationParams};
use lorentz_core::ensemble::{self, CellStats, EnsembleSpec, Observable};
use lorentz_core::field::ObstacleField;
use lorentz_core::kinetic::{self, AngularDistribution, PhaseField};
use lorentz_core::scattering::ScatteringTable;
use lorentz_core::{stats, Vec2};
use serde::Serialize;
use serde_json::json;
use std::path::PathBuf;

pub struct Context {
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: PathBuf,
}

type Runner<C> = fn(&mut Sink, &C, u64) -> Result<(), CliError>;

pub fn execute<C: Serialize + Sync>(ctx: &Context, kind: Kind, cfg: &C, f: Runner<C>) -> Result<(), CliError> {
    if ctx.workers == Some(0) {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let mut sink = Sink::new(&ctx.out)?;
    let resolved = Resolved { seed: ctx.seed, params: cfg };
    let hash = output::write_manifest(&sink, kind, &resolved, ctx.workers)?;
    sink.line(format!("lorentz {} {:?}  config {}", env!("CARGO_PKG_VERSION"), kind, &hash[..16]));
    let seed = ctx.seed;
    lorentz_core::ensemble::with_workers(ctx.workers, || f(&mut sink, cfg, seed))??;
    sink.finish()
}

pub fn simulate(sink: &mut Sink, c: &SimulateConfig, seed: u64) -> Result<(), CliError> {
    let p = c.params(seed);
    p.validate()?;
    let field = ObstacleField::new(p.field_params())?;
    let cut = c.cutoffs.config(p.eps, p.alpha);
    let (traj, rep) = dynamics::simulate(&p, &field, &cut)?;
    traj.write_csv(sink.file("trajectory.csv")?)?;
    traj.write_events_csv(sink.file("events.csv")?)?;
    let fin = traj.final_state();
    sink.json(
        "result.json",
        &json!({
            "kappa": p.kappa(),
            "stop_time": traj.stop_time,
            "final_state": fin,
            "cutoffs": rep,
            "diagnostics": traj.diagnostics,
        }),
    )?;
    sink.line(format!("ε = {}, α = {}, ρ = {}, κ = {:.6}", p.eps, p.alpha, p.rho, p.kappa()));
    sink.line(format!("stopped at t = {} of {}; τ = {:?}", traj.stop_time, p.horizon, rep.tau));
    sink.line(format!("final angle {:.9}, |v| − 1 = {:.3e}", fin.angle, fin.v.norm() - 1.0));
    sink.line(format!(
        "cluster visits {}, max energy error {:.3e}",
        traj.diagnostics.cluster_visits, traj.diagnostics.max_energy_error
    ));
    Ok(())
}

pub fn zeta(sink: &mut Sink, c: &ZetaConfig, seed: u64) -> Result<(), CliError> {
    let m = &c.potential;
    let reference = coefficients::zeta_quadrature(m, c.rho)?;
    let mut entries = Vec::new();
    for method in &c.methods {
        let est = match method {
            Method::QuadratureZeta => reference.clone(),
            Method::LimitDefn => coefficients::zeta_limit(m, c.rho, c.alpha, &c.eps_list)?,
            Method::Fourier => coefficients::zeta_fourier(m, c.rho, 1.0)?,
            Method::TrajectoryMc => {
                let alpha = c.mc.alpha.unwrap_or(c.alpha);
                let horizon = c.mc.times.iter().cloned().fold(0.0, f64::max);
                let base = SimulationParams {
                    eps: c.mc.eps,
                    alpha,
                    rho: c.rho,
                    v0: Vec2::new(1.0, 0.0),
                    x0: Vec2::ZERO,
                    horizon,
                    step: c.mc.step,
                    seed: 0,
                    potential: *m,
                };
                let mut spec = EnsembleSpec::new(base, c.mc.n_traj, vec![c.mc.eps], vec![alpha], c.mc.times.clone(), seed);
                spec.cutoffs = c.mc.cutoffs;
                let cells = ensemble::run_sweep(&spec, Some(&sink.dir.join("cells")))?;
                coefficients::mc_report(&cells[0], &c.mc.times)?.estimate
            }
        };
        est.validate()?;
        entries.push(ZetaReportEntry::new(&est, reference.value));
    }
    sink.json("zeta.json", &json!({ "reference": { "method": Method::QuadratureZeta, "value": reference.value }, "entries": entries }))?;
    let mut w = sink.csv("zeta.csv")?;
    w.write_record(["method", "value", "uncertainty", "ratio_to_reference"])?;
    for e in &entries {
        let name = serde_json::to_value(e.method)?.as_str().unwrap_or_default().to_string();
        w.write_record([name, e.value.to_string(), e.uncertainty.to_string(), e.ratio_to_reference.map(|r| r.to_string()).unwrap_or_default()])?;
    }
    w.flush()?;
    for e in &entries {
        let r = e.ratio_to_reference.map(|r| format!("{r:.6}")).unwrap_or_else(|| "-".into());
        sink.line(format!("{:<16} {:.9} ± {:.2e}  ratio {r}", format!("{:?}", e.method), e.value, e.uncertainty));
    }
    Ok(())
}

pub fn landau(sink: &mut Sink, c: &LandauConfig, _seed: u64) -> Result<(), CliError> {
    match c.mode {
        LandauMode::Velocity => {
            let d0 = AngularDistribution::point_mass(c.theta0, c.order);
            let d = kinetic::landau_evolve_velocity(&d0, c.zeta, c.t)?;
            d.write_csv(sink.file("density.csv")?, c.grid)?;
            sink.json("result.json", &json!({ "mass": d.mass(), "min_on_grid": d.min_on_grid(), "distribution": d }))?;
            sink.line(format!("velocity space: ζ = {}, t = {}, order {}", c.zeta, c.t, c.order));
            sink.line(format!("mass {:.15}, |c_1| = {:.6e}", d.mass(), d.coeff(1).norm()));
        }
        LandauMode::Phase => {
            let r = &c.resolution;
            let f0 = PhaseField::from_fn(c.initial.box_size, r.nx, r.nx, r.ntheta, 1.0, |x, th| c.initial.eval(x, th))?;
            let (ft, rep) = kinetic::landau_evolve_phase(&f0, c.zeta, c.t, r.dt)?;
            ft.write_csv(sink.file("phase.csv")?)?;
            sink.json("result.json", &json!({ "initial_mass": f0.mass(), "mass": ft.mass(), "report": rep }))?;
            sink.line(format!("phase space: ζ = {}, t = {}, {}²×{} grid, dt = {}", c.zeta, c.t, r.nx, r.ntheta, r.dt));
            sink.line(format!("{} steps, mass drift {:.3e}, min {:.6}", rep.steps, rep.max_mass_drift, rep.min_value));
            if rep.aliasing_warning {
                sink.line(format!("warning: tail energy fraction {:.3e}", rep.tail_energy_fraction));
            }
        }
    }
    Ok(())
}

pub fn boltzmann(sink: &mut Sink, c: &BoltzmannConfig, seed: u64) -> Result<(), CliError> {
    let table = ScatteringTable::new(&c.potential, c.eps, c.alpha)?;
    let jump = kinetic::boltzmann_jump_simulate(&table, c.rho, c.t, c.n_samples, seed, c.theta0, c.order)?;
    let lambda = c.rho * table.gamma_hat(0) * c.t;
    let terms = kinetic::poisson_truncation(lambda, c.series_tol);
    let series = kinetic::boltzmann_series_eval(&table, c.rho, &AngularDistribution::point_mass(c.theta0, c.order), c.t, terms)?;
    let zeta_eps = coefficients::zeta_eps(&table, c.rho);
    let ks_series = stats::ks_statistic(&jump.angles, |x| series.cdf(x));
    let ks_landau = (zeta_eps * c.t > 0.0).then(|| {
        let shifted: Vec<f64> = jump.unwrapped.iter().map(|a| a - c.theta0).collect();
        stats::ks_normal(&shifted, 2.0 * zeta_eps * c.t)
    });
    let mj = jump.mean_jumps();
    let mut w = sink.csv("samples.csv")?;
    w.write_record(["index", "angle", "unwrapped", "jumps"])?;
    for (i, ((a, u), k)) in jump.angles.iter().zip(&jump.unwrapped).zip(&jump.jumps).enumerate() {
        w.serialize((i, a, u, k))?;
    }
    w.flush()?;
    jump.distribution.write_csv(sink.file("jump_density.csv")?, c.grid)?;
    series.write_csv(sink.file("series_density.csv")?, c.grid)?;
    sink.json(
        "result.json",
        &json!({
            "rate": jump.rate,
            "mean_jumps": mj,
            "expected_jumps": jump.rate * c.t,
            "series_terms": terms,
            "zeta_eps": zeta_eps,
            "ks_jump_vs_series": ks_series,
            "ks_jump_vs_landau": ks_landau,
            "dkw_sigma": stats::dkw_sigma(c.n_samples),
        }),
    )?;
    sink.line(format!("ε = {}, α = {}, ρ = {}, t = {}", c.eps, c.alpha, c.rho, c.t));
    sink.line(format!("jump rate {:.6}, mean jumps {:.4} ± {:.4} (expected {:.4})", jump.rate, mj.mean, mj.se, jump.rate * c.t));
    sink.line(format!("series terms {terms}, KS jump vs series {ks_series:.5}"));
    if let Some(k) = ks_landau {
        sink.line(format!("ζ_ε = {zeta_eps:.6}, KS jump vs Landau {k:.5}"));
    }
    Ok(())
}

fn write_cells(sink: &Sink, cells: &[CellStats]) -> Result<(), CliError> {
    let mut w = sink.csv("cells.csv")?;
    w.write_record([
        "eps",
        "alpha",
        "kappa",
        "n_traj",
        "included",
        "excluded",
        "excluded_fraction",
        "triggered_phi_a",
        "triggered_k",
        "triggered_v",
        "max_energy_error",
        "mean_visits",
        "flagged",
    ])?;
    for c in cells {
        w.serialize((
            c.eps,
            c.alpha,
            c.kappa,
            c.n_traj,
            c.included,
            c.excluded,
            c.excluded_fraction(),
            c.triggered_phi_a,
            c.triggered_k,
            c.triggered_v,
            c.max_energy_error,
            c.mean_visits,
            c.flagged(),
        ))?;
    }
    w.flush()?;
    let mut w = sink.csv("samples.csv")?;
    w.write_record(["eps", "alpha", "index", "excluded", "t", "angle"])?;
    for c in cells {
        for r in &c.records {
            for (t, a) in c.times.iter().zip(&r.angles) {
                w.serialize((c.eps, c.alpha, r.index, r.excluded(), t, a))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn sweep(sink: &Sink, spec: &EnsembleSpec) -> Result<Vec<CellStats>, CliError> {
    let cells = ensemble::run_sweep(spec, Some(&sink.dir.join("cells")))?;
    write_cells(sink, &cells)?;
    Ok(cells)
}

pub fn law(sink: &mut Sink, c: &LawConfig, seed: u64) -> Result<(), CliError> {
    let spec = c.ensemble.spec(seed);
    spec.validate()?;
    if spec.eps_sweep.len() < 3 {
        return Err(CliError::Usage("law needs at least three ε values".into()));
    }
    let cells = sweep(sink, &spec)?;
    let rep = ensemble::law_report(&spec, &cells, c.reference)?;
    sink.json("law.json", &rep)?;
    let mut w = sink.csv("law.csv")?;
    w.write_record([
        "eps",
        "alpha",
        "t",
        "n_included",
        "excluded_fraction",
        "flagged",
        "ks_included",
        "ks_stopped",
        "dkw_sigma_included",
        "variance",
        "reference_variance",
        "increment_correlation",
    ])?;
    for l in &rep.cells {
        w.serialize((
            l.eps,
            l.alpha,
            l.t,
            l.n_included,
            l.excluded_fraction,
            l.flagged,
            l.ks_included,
            l.ks_stopped,
            l.dkw_sigma_included,
            l.variance,
            l.reference_variance,
            l.increment_correlation,
        ))?;
    }
    w.flush()?;
    sink.line(format!("ζ_ref = {:.6}", rep.zeta_ref));
    for l in &rep.cells {
        sink.line(format!(
            "ε = {:<8} α = {:<5} t = {:<5} KS {:.4} (stopped {:.4}), excluded {:.4}",
            l.eps, l.alpha, l.t, l.ks_included, l.ks_stopped, l.excluded_fraction
        ));
    }
    for t in &rep.trends {
        sink.line(format!("α = {} t = {}: KS decreasing {}", t.alpha, t.t, t.ks_included_decreasing));
    }
    Ok(())
}

pub fn expectation(sink: &mut Sink, c: &ExpectationConfig, seed: u64) -> Result<(), CliError> {
    let spec = c.ensemble.spec(seed);
    spec.validate()?;
    let cells = sweep(sink, &spec)?;
    let zeta_ref = match c.zeta_ref {
        Some(z) => z,
        None => {
            let na = spec.alpha_sweep.len();
            let ie = (0..spec.eps_sweep.len()).min_by(|&a, &b| spec.eps_sweep[a].total_cmp(&spec.eps_sweep[b])).unwrap_or(0);
            ensemble::mc_zeta(&cells[ie * na], &spec.times)?.value
        }
    };
    let rep = ensemble::expectation_report(&spec, &cells, &c.observable, zeta_ref, &c.resolution)?;
    sink.json("expectation.json", &rep)?;
    let mut w = sink.csv("expectation.csv")?;
    w.write_record(["eps", "alpha", "mean", "se", "excluded_fraction", "flagged", "difference", "combined_error"])?;
    for e in &rep.cells {
        w.serialize((e.eps, e.alpha, e.mc.mean, e.mc.se, e.excluded_fraction, e.flagged, e.difference, e.combined_error))?;
    }
    w.flush()?;
    sink.line(format!("t = {}, ζ_ref = {:.6}, Landau value {:.6} ± {:.1e}", rep.t, rep.zeta_ref, rep.pde_value, rep.pde_error));
    for e in &rep.cells {
        sink.line(format!("ε = {:<8} α = {:<5} MC {:.6} ± {:.6}, difference {:+.6}", e.eps, e.alpha, e.mc.mean, e.mc.se, e.difference));
    }
    Ok(())
}

pub fn doublets(sink: &mut Sink, c: &DoubletsConfig, seed: u64) -> Result<(), CliError> {
    let mut spec = c.ensemble.spec(seed);
    spec.observables.push(Observable::Doublets);
    spec.validate()?;
    let cells = sweep(sink, &spec)?;
    let rep = ensemble::doublet_report(&spec, &cells);
    sink.json("doublets.json", &rep)?;
    let mut w = sink.csv("doublets.csv")?;
    w.write_record(["eps", "alpha", "n_traj", "mean_count", "count_se", "upper_bound", "encounters", "mean_deflection", "deflection_se"])?;
    for d in &rep.cells {
        w.serialize((d.eps, d.alpha, d.n_traj, d.mean_count, d.count_se, d.upper_bound, d.encounters, d.mean_deflection, d.deflection_se))?;
    }
    w.flush()?;
    for d in &rep.cells {
        sink.line(format!("ε = {:<8} α = {:<5} doublets/trajectory {:.5} ± {:.5}", d.eps, d.alpha, d.mean_count, d.count_se));
    }
    for f in &rep.fits {
        sink.line(format!("α = {}: exponent {:.3} ± {:.3} (1 − 4α = {:.3})", f.alpha, f.exponent, f.exponent_se, 1.0 - 4.0 * f.alpha));
    }
    Ok(())
}

pub fn recollision(sink: &mut Sink, c: &RecollisionConfig, seed: u64) -> Result<(), CliError> {
    let mut spec = c.ensemble.spec(seed);
    spec.observables.push(Observable::Recollision);
    spec.validate()?;
    let cells = sweep(sink, &spec)?;
    let rep = ensemble::recollision_report(&spec, &cells);
    sink.json("recollision.json", &rep)?;
    let mut w = sink.csv("recollision.csv")?;
    w.write_record(["eps", "alpha", "n_traj", "count", "frequency", "se", "upper_bound"])?;
    for r in &rep.cells {
        w.serialize((r.eps, r.alpha, r.n_traj, r.count, r.frequency, r.se, r.upper_bound))?;
    }
    w.flush()?;
    for r in &rep.cells {
        sink.line(format!("ε = {:<8} α = {:<5} recollision frequency {:.5} ± {:.5}", r.eps, r.alpha, r.frequency, r.se));
    }
    for f in &rep.fits {
        sink.line(format!("α = {}: exponent {:.3} ± {:.3}", f.alpha, f.exponent, f.exponent_se));
    }
    Ok(())
}

pub fn scatter_table(sink: &mut Sink, c: &ScatterTableConfig, _seed: u64) -> Result<(), CliError> {
    let t = ScatteringTable::build(&c.potential, c.eps, c.alpha, c.order, &c.step)?;
    t.write_csv(sink.file("table.csv")?)?;
    let (lo, hi) = t.theta_range();
    let n = c.cross_section_points.max(2);
    let mut w = sink.csv("cross_section.csv")?;
    w.write_record(["theta", "gamma"])?;
    for k in 0..n {
        let th = lo + (hi - lo) * k as f64 / (n - 1) as f64;
        w.serialize((th, t.cross_section(th)))?;
    }
    w.flush()?;
    let mass = t.cross_section_mass()?;
    let modes: Vec<f64> = (0..=8).map(|m| t.gamma_hat(m)).collect();
    sink.json(
        "result.json",
        &json!({
            "eps": c.eps,
            "alpha": c.alpha,
            "kappa": c.eps.powf(c.alpha),
            "theta_range": [lo, hi],
            "cross_section_mass": mass,
            "gamma_hat": modes,
        }),
    )?;
    sink.line(format!("ε = {}, α = {}, {} nodes", c.eps, c.alpha, t.b.len()));
    sink.line(format!("θ range [{lo:.6e}, {hi:.6e}], ∫Γ dθ = {mass:.9e}"));
    Ok(())
}
