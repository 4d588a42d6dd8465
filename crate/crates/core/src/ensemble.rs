//! Monte Carlo experiments over obstacle configurations: convergence in law and in
//! expectation, the doublet census and the recollision sweep.
//!
//! Trajectory `i` of cell `(ie, ia)` uses the seed `derive_seed(master, [cell, i])`,
//! so results do not depend on scheduling. Reductions run in index order.

use crate::cutoffs::{self, CutoffConfig};
use crate::dynamics::{simulate, Sample, SimulationParams};
use crate::error::{domain, Error, Result};
use crate::field::{csv_err, ObstacleField};
use crate::geom::Vec2;
use crate::kinetic::{landau_evolve_phase, PhaseField};
use crate::rng::derive_seed;
use crate::stats::{self, MeanSe};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum CutoffMode {
    Standard,
    Disabled,
    Custom { config: CutoffConfig },
}

impl Default for CutoffMode {
    fn default() -> Self {
        CutoffMode::Standard
    }
}

impl CutoffMode {
    pub fn config(&self, eps: f64, alpha: f64) -> CutoffConfig {
        match self {
            CutoffMode::Standard => CutoffConfig::standard(eps, alpha),
            CutoffMode::Disabled => CutoffConfig::disabled(),
            CutoffMode::Custom { config } => *config,
        }
    }
}

/// `f0(x, θ) = constant + cos(m θ) cos(2π (kx x + ky y) / L)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothObservable {
    #[serde(default)]
    pub constant: f64,
    pub m: i32,
    #[serde(default)]
    pub kx: i32,
    #[serde(default)]
    pub ky: i32,
    #[serde(default = "default_box")]
    pub box_size: f64,
}

fn default_box() -> f64 {
    4.0
}

impl SmoothObservable {
    pub fn cos_angle() -> Self {
        SmoothObservable { constant: 0.0, m: 1, kx: 0, ky: 0, box_size: default_box() }
    }

    pub fn one() -> Self {
        SmoothObservable { constant: 0.0, m: 0, kx: 0, ky: 0, box_size: default_box() }
    }

    pub fn eval(&self, x: Vec2, theta: f64) -> f64 {
        let k = TAU / self.box_size;
        self.constant + (self.m as f64 * theta).cos() * (k * (self.kx as f64 * x.x + self.ky as f64 * x.y)).cos()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Doublets,
    Recollision,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    /// `eps`, `alpha` and `seed` are overridden per cell and trajectory; `horizon` by `times`.
    pub base: SimulationParams,
    pub n_traj: usize,
    pub eps_sweep: Vec<f64>,
    pub alpha_sweep: Vec<f64>,
    /// Observation times; the horizon is the largest.
    pub times: Vec<f64>,
    #[serde(default)]
    pub observables: Vec<Observable>,
    #[serde(default)]
    pub cutoffs: CutoffMode,
    pub master_seed: u64,
}

impl EnsembleSpec {
    pub fn new(base: SimulationParams, n_traj: usize, eps_sweep: Vec<f64>, alpha_sweep: Vec<f64>, times: Vec<f64>, master_seed: u64) -> Self {
        EnsembleSpec { base, n_traj, eps_sweep, alpha_sweep, times, observables: Vec::new(), cutoffs: CutoffMode::Standard, master_seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 {
            return domain("n_traj must be positive");
        }
        if self.eps_sweep.is_empty() || self.alpha_sweep.is_empty() || self.times.is_empty() {
            return domain("sweeps and times must be non-empty");
        }
        if self.times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return domain("observation times must be positive");
        }
        for &e in &self.eps_sweep {
            for &a in &self.alpha_sweep {
                self.cell_params(e, a, 0).validate()?;
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.times.iter().cloned().fold(0.0, f64::max)
    }

    /// `times` with the half horizon added, sorted and deduplicated.
    pub fn sample_times(&self) -> Vec<f64> {
        let mut t = self.times.clone();
        t.push(0.5 * self.horizon());
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    fn cell_params(&self, eps: f64, alpha: f64, seed: u64) -> SimulationParams {
        SimulationParams { eps, alpha, horizon: self.horizon(), seed, ..self.base }
    }

    pub fn has(&self, o: Observable) -> bool {
        self.observables.contains(&o)
    }
}

/// Seed-space key of cell `(ie, ia)`.
pub fn cell_key(ie: usize, ia: usize) -> u64 {
    ((ie as u64) << 32) | ia as u64
}

/// Per-trajectory outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajRecord {
    pub index: usize,
    /// Unwrapped angle at each sample time, frozen at `τ` when a cutoff triggers.
    pub angles: Vec<f64>,
    pub tau: Option<f64>,
    pub tau_phi_a: bool,
    pub tau_k: bool,
    pub tau_v: bool,
    /// State at `min(T, τ)`.
    pub final_state: Sample,
    pub visits: u32,
    pub doublets: u32,
    pub doublet_deflection_sum: f64,
    pub doublet_deflection_sq: f64,
    pub recollision: Option<bool>,
    pub max_energy_error: f64,
}

impl TrajRecord {
    pub fn excluded(&self) -> bool {
        self.tau.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub eps: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub times: Vec<f64>,
    pub n_traj: usize,
    pub excluded: usize,
    pub included: usize,
    pub triggered_phi_a: usize,
    pub triggered_k: usize,
    pub triggered_v: usize,
    pub max_energy_error: f64,
    pub mean_visits: f64,
    pub records: Vec<TrajRecord>,
}

impl CellStats {
    pub fn excluded_fraction(&self) -> f64 {
        self.excluded as f64 / self.n_traj as f64
    }

    /// Flagged when more than 10 % of the trajectories hit a cutoff.
    pub fn flagged(&self) -> bool {
        self.excluded_fraction() > 0.1
    }

    fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
    }

    /// Angles at `t` of the trajectories that never triggered a cutoff.
    pub fn included_angles(&self, t: f64) -> Vec<f64> {
        let Some(k) = self.time_index(t) else { return Vec::new() };
        self.records.iter().filter(|r| !r.excluded()).map(|r| r.angles[k]).collect()
    }

    /// Angles at `min(t, τ)` of all trajectories.
    pub fn stopped_angles(&self, t: f64) -> Vec<f64> {
        let Some(k) = self.time_index(t) else { return Vec::new() };
        self.records.iter().map(|r| r.angles[k]).collect()
    }

    /// CSV `index,tau,excluded,visits,doublets,recollision,angle_<t>...`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut head = vec!["index".to_string(), "tau".into(), "excluded".into(), "visits".into(), "doublets".into(), "recollision".into()];
        head.extend(self.times.iter().map(|t| format!("angle_{t}")));
        wr.write_record(&head).map_err(csv_err)?;
        for r in &self.records {
            let mut row = vec![
                r.index.to_string(),
                r.tau.map(|t| t.to_string()).unwrap_or_default(),
                (r.excluded() as u8).to_string(),
                r.visits.to_string(),
                r.doublets.to_string(),
                r.recollision.map(|b| (b as u8).to_string()).unwrap_or_default(),
            ];
            row.extend(r.angles.iter().map(|a| a.to_string()));
            wr.write_record(&row).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Run `f` on a pool of `workers` threads (`None`: the global pool).
pub fn with_workers<R: Send, F: FnOnce() -> R + Send>(workers: Option<usize>, f: F) -> Result<R> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Simulate one trajectory of a cell.
pub fn run_trajectory(spec: &EnsembleSpec, eps: f64, alpha: f64, cell: u64, index: usize) -> Result<TrajRecord> {
    let seed = derive_seed(spec.master_seed, &[cell, index as u64]);
    let params = spec.cell_params(eps, alpha, seed);
    let field = ObstacleField::new(params.field_params())?;
    let cfg = spec.cutoffs.config(eps, alpha);
    let (traj, rep) = simulate(&params, &field, &cfg)?;
    let times = spec.sample_times();
    let angles = times.iter().map(|&t| traj.angle_at(t)).collect();
    let visits = cutoffs::cluster_visits(&traj);
    let (mut doublets, mut s1, mut s2) = (0u32, 0.0, 0.0);
    if spec.has(Observable::Doublets) {
        for v in visits.iter().filter(|v| v.obstacles.len() == 2) {
            doublets += 1;
            let d = v.deflection();
            s1 += d;
            s2 += d * d;
        }
    }
    let recollision = spec.has(Observable::Recollision).then(|| cutoffs::has_recollision(&traj, eps));
    Ok(TrajRecord {
        index,
        angles,
        tau: rep.tau,
        tau_phi_a: rep.tau_phi_a.is_some(),
        tau_k: rep.tau_k.is_some(),
        tau_v: rep.tau_v.is_some(),
        final_state: traj.final_state(),
        visits: visits.len() as u32,
        doublets,
        doublet_deflection_sum: s1,
        doublet_deflection_sq: s2,
        recollision,
        max_energy_error: traj.diagnostics.max_energy_error,
    })
}

pub fn run_cell(spec: &EnsembleSpec, ie: usize, ia: usize) -> Result<CellStats> {
    spec.validate()?;
    let (eps, alpha) = (spec.eps_sweep[ie], spec.alpha_sweep[ia]);
    let cell = cell_key(ie, ia);
    let records: Vec<TrajRecord> = (0..spec.n_traj)
        .into_par_iter()
        .map(|i| run_trajectory(spec, eps, alpha, cell, i))
        .collect::<Result<_>>()?;
    let excluded = records.iter().filter(|r| r.excluded()).count();
    Ok(CellStats {
        eps,
        alpha,
        kappa: eps.powf(alpha),
        times: spec.sample_times(),
        n_traj: spec.n_traj,
        excluded,
        included: spec.n_traj - excluded,
        triggered_phi_a: records.iter().filter(|r| r.tau_phi_a).count(),
        triggered_k: records.iter().filter(|r| r.tau_k).count(),
        triggered_v: records.iter().filter(|r| r.tau_v).count(),
        max_energy_error: records.iter().map(|r| r.max_energy_error).fold(0.0, f64::max),
        mean_visits: records.iter().map(|r| r.visits as f64).sum::<f64>() / spec.n_traj as f64,
        records,
    })
}

/// Hex SHA-256 identifying the inputs of cell `(ie, ia)`.
pub fn cell_hash(spec: &EnsembleSpec, ie: usize, ia: usize) -> Result<String> {
    let key = serde_json::json!({
        "spec": spec,
        "eps": spec.eps_sweep[ie],
        "alpha": spec.alpha_sweep[ia],
        "version": env!("CARGO_PKG_VERSION"),
    });
    let bytes = serde_json::to_vec(&key)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Serialize, Deserialize)]
struct CellFile {
    hash: String,
    stats: CellStats,
}

/// All cells in `(eps, alpha)` order. With `dir`, a cell whose file exists and matches
/// the spec hash is loaded instead of recomputed; fresh cells are written there.
pub fn run_sweep(spec: &EnsembleSpec, dir: Option<&Path>) -> Result<Vec<CellStats>> {
    spec.validate()?;
    let mut out = Vec::new();
    for ie in 0..spec.eps_sweep.len() {
        for ia in 0..spec.alpha_sweep.len() {
            let hash = cell_hash(spec, ie, ia)?;
            if let Some(d) = dir {
                let path = d.join(format!("cell_e{ie}_a{ia}.json"));
                if let Ok(bytes) = std::fs::read(&path) {
                    if let Ok(f) = serde_json::from_slice::<CellFile>(&bytes) {
                        if f.hash == hash {
                            out.push(f.stats);
                            continue;
                        }
                    }
                }
                let stats = run_cell(spec, ie, ia)?;
                std::fs::create_dir_all(d)?;
                let file = CellFile { hash, stats };
                std::fs::write(&path, serde_json::to_vec(&file)?)?;
                out.push(file.stats);
            } else {
                out.push(run_cell(spec, ie, ia)?);
            }
        }
    }
    Ok(out)
}

/// Velocity diffusion constant from `Var[angle(t)] = 2ζt` fitted through the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McZeta {
    pub eps: f64,
    pub alpha: f64,
    pub value: f64,
    /// Batch-means standard error (accounts for the correlation between times).
    pub uncertainty: f64,
    /// Standard error of the weighted fit treating times as independent.
    pub fit_se: f64,
    pub excluded_fraction: f64,
    pub flagged: bool,
    /// `(t, Var, se)` per observation time.
    pub variances: Vec<(f64, f64, f64)>,
}

const BATCHES: usize = 20;

fn variance_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = stats::mean(x);
    let v = stats::variance(x);
    let m4 = x.iter().map(|a| (a - m).powi(4)).sum::<f64>() / n;
    (v, ((m4 - v * v).max(0.0) / n).sqrt())
}

/// ζ from the included trajectories of a cell at the spec's observation `times`.
pub fn mc_zeta(cell: &CellStats, times: &[f64]) -> Result<McZeta> {
    let mut tv = Vec::new();
    for &t in times {
        let a = cell.included_angles(t);
        if a.len() < 2 {
            return domain("fewer than two included trajectories");
        }
        let (v, se) = variance_se(&a);
        tv.push((t, v, se));
    }
    let xs: Vec<f64> = tv.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = tv.iter().map(|p| p.1).collect();
    let sg: Vec<f64> = tv.iter().map(|p| if p.2 > 0.0 { p.2 } else { 1.0 }).collect();
    let (slope, slope_se) = stats::fit_through_origin(&xs, &ys, &sg);
    // batch means over trajectory index
    let inc: Vec<&TrajRecord> = cell.records.iter().filter(|r| !r.excluded()).collect();
    let mut batch = Vec::new();
    if inc.len() >= 2 * BATCHES {
        for b in 0..BATCHES {
            let part: Vec<&&TrajRecord> = inc.iter().enumerate().filter(|(i, _)| i % BATCHES == b).map(|(_, r)| r).collect();
            let yb: Vec<f64> = times
                .iter()
                .map(|&t| {
                    let k = cell.time_index(t).expect("time sampled");
                    let a: Vec<f64> = part.iter().map(|r| r.angles[k]).collect();
                    stats::variance(&a)
                })
                .collect();
            batch.push(stats::fit_through_origin(&xs, &yb, &sg).0);
        }
    }
    let batch_se = if batch.len() > 1 { (stats::variance(&batch) / batch.len() as f64).sqrt() } else { slope_se };
    Ok(McZeta {
        eps: cell.eps,
        alpha: cell.alpha,
        value: 0.5 * slope,
        uncertainty: 0.5 * batch_se,
        fit_se: 0.5 * slope_se,
        excluded_fraction: cell.excluded_fraction(),
        flagged: cell.flagged(),
        variances: tv,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LawReference {
    Fixed { zeta: f64 },
    /// Trajectory-MC value at the smallest ε of the sweep (first α).
    SmallestEpsMc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawCell {
    pub eps: f64,
    pub alpha: f64,
    pub t: f64,
    pub n_included: usize,
    pub excluded_fraction: f64,
    pub flagged: bool,
    /// KS distance of the included angles to `Normal(0, 2ζt)`.
    pub ks_included: f64,
    /// KS distance of the stopped angles `θ(t ∧ τ)` of all trajectories.
    pub ks_stopped: f64,
    pub dkw_sigma_included: f64,
    pub dkw_sigma_stopped: f64,
    pub variance: f64,
    pub reference_variance: f64,
    /// Correlation of the increments on `[0, T/2]` and `[T/2, T]` (at the horizon only).
    pub increment_correlation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub alpha: f64,
    pub t: f64,
    /// Along decreasing ε: each KS exceeds its predecessor by at most 2σ.
    pub ks_included_decreasing: bool,
    pub ks_stopped_decreasing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawReport {
    pub zeta_ref: f64,
    pub cells: Vec<LawCell>,
    pub trends: Vec<Trend>,
}

fn decreasing_within(ks: &[(f64, f64)]) -> bool {
    ks.windows(2).all(|w| w[1].0 <= w[0].0 + 2.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt())
}

/// Index pairs `(ie, ia)` ordered by decreasing ε for each α.
fn by_alpha_desc_eps(spec: &EnsembleSpec) -> Vec<(usize, Vec<usize>)> {
    (0..spec.alpha_sweep.len())
        .map(|ia| {
            let mut ies: Vec<usize> = (0..spec.eps_sweep.len()).collect();
            ies.sort_by(|&a, &b| spec.eps_sweep[b].total_cmp(&spec.eps_sweep[a]));
            (ia, ies)
        })
        .collect()
}

/// Law of the unwrapped angle against `Normal(0, 2ζ_ref t)` on precomputed cells
/// (in `run_sweep` order).
pub fn law_report(spec: &EnsembleSpec, cells: &[CellStats], reference: LawReference) -> Result<LawReport> {
    if spec.eps_sweep.len() < 3 {
        return domain("convergence in law needs at least three ε values");
    }
    let na = spec.alpha_sweep.len();
    let get = |ie: usize, ia: usize| &cells[ie * na + ia];
    let zeta_ref = match reference {
        LawReference::Fixed { zeta } => zeta,
        LawReference::SmallestEpsMc => {
            let ie = (0..spec.eps_sweep.len()).min_by(|&a, &b| spec.eps_sweep[a].total_cmp(&spec.eps_sweep[b])).unwrap();
            mc_zeta(get(ie, 0), &spec.times)?.value
        }
    };
    let horizon = spec.horizon();
    let mut out = Vec::new();
    for c in cells {
        for &t in &spec.times {
            let inc = c.included_angles(t);
            let stp = c.stopped_angles(t);
            let rv = 2.0 * zeta_ref * t;
            let corr = if t == horizon && inc.len() > 2 {
                let half: Vec<f64> = c.included_angles(0.5 * horizon);
                let a: Vec<f64> = half.clone();
                let b: Vec<f64> = inc.iter().zip(&half).map(|(x, y)| x - y).collect();
                Some(stats::correlation(&a, &b))
            } else {
                None
            };
            out.push(LawCell {
                eps: c.eps,
                alpha: c.alpha,
                t,
                n_included: inc.len(),
                excluded_fraction: c.excluded_fraction(),
                flagged: c.flagged(),
                ks_included: if inc.is_empty() { 1.0 } else { stats::ks_normal(&inc, rv) },
                ks_stopped: stats::ks_normal(&stp, rv),
                dkw_sigma_included: stats::dkw_sigma(inc.len().max(1)),
                dkw_sigma_stopped: stats::dkw_sigma(stp.len()),
                variance: if inc.len() > 1 { stats::variance(&inc) } else { 0.0 },
                reference_variance: rv,
                increment_correlation: corr,
            });
        }
    }
    let nt = spec.times.len();
    let mut trends = Vec::new();
    for (ia, ies) in by_alpha_desc_eps(spec) {
        for (k, &t) in spec.times.iter().enumerate() {
            let row = |ie: usize| &out[(ie * na + ia) * nt + k];
            let inc: Vec<(f64, f64)> = ies.iter().map(|&ie| (row(ie).ks_included, row(ie).dkw_sigma_included)).collect();
            let stp: Vec<(f64, f64)> = ies.iter().map(|&ie| (row(ie).ks_stopped, row(ie).dkw_sigma_stopped)).collect();
            trends.push(Trend {
                alpha: spec.alpha_sweep[ia],
                t,
                ks_included_decreasing: decreasing_within(&inc),
                ks_stopped_decreasing: decreasing_within(&stp),
            });
        }
    }
    Ok(LawReport { zeta_ref, cells: out, trends })
}

pub fn convergence_in_law(spec: &EnsembleSpec, reference: LawReference, dir: Option<&Path>) -> Result<LawReport> {
    let cells = run_sweep(spec, dir)?;
    law_report(spec, &cells, reference)
}

/// Phase-space solver resolution for [`convergence_in_expectation`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeResolution {
    pub nx: usize,
    pub ntheta: usize,
    pub dt: f64,
}

impl Default for PdeResolution {
    fn default() -> Self {
        PdeResolution { nx: 16, ntheta: 64, dt: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectationCell {
    pub eps: f64,
    pub alpha: f64,
    pub mc: MeanSe,
    pub excluded_fraction: f64,
    pub flagged: bool,
    pub difference: f64,
    /// `√(se² + pde_error²)`.
    pub combined_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectationReport {
    pub t: f64,
    pub zeta_ref: f64,
    pub pde_value: f64,
    /// |h(dt) − h(dt/2)| at the evaluation point.
    pub pde_error: f64,
    pub cells: Vec<ExpectationCell>,
    /// Per α: |difference| decreasing along ε within combined 2σ.
    pub trends: Vec<(f64, bool)>,
}

/// Landau side: `E[f0(Φ^t(x0, v0))] = w(t, x0, −v0)` where `w` solves the forward
/// equation with `w(0, x, v) = f0(x, −v)`.
pub fn landau_expectation(f0: &SmoothObservable, x0: Vec2, theta0: f64, zeta: f64, t: f64, res: &PdeResolution) -> Result<(f64, f64)> {
    let build = || PhaseField::from_fn(f0.box_size, res.nx, res.nx, res.ntheta, 1.0, |x, th| f0.eval(x, th + PI));
    let h0 = build()?;
    let (h1, _) = landau_evolve_phase(&h0, zeta, t, res.dt)?;
    let (h2, _) = landau_evolve_phase(&h0, zeta, t, 0.5 * res.dt)?;
    let a = h1.interpolate(x0, theta0 + PI);
    let b = h2.interpolate(x0, theta0 + PI);
    Ok((b, (a - b).abs()))
}

pub fn expectation_report(
    spec: &EnsembleSpec,
    cells: &[CellStats],
    f0: &SmoothObservable,
    zeta_ref: f64,
    res: &PdeResolution,
) -> Result<ExpectationReport> {
    let t = spec.horizon();
    let theta0 = spec.base.v0.angle();
    let (pde_value, pde_error) = landau_expectation(f0, spec.base.x0, theta0, zeta_ref, t, res)?;
    let mut out = Vec::new();
    for c in cells {
        let vals: Vec<f64> = c.records.iter().filter(|r| !r.excluded()).map(|r| f0.eval(r.final_state.x, r.final_state.angle)).collect();
        let mc = stats::mean_se(&vals);
        let difference = mc.mean - pde_value;
        out.push(ExpectationCell {
            eps: c.eps,
            alpha: c.alpha,
            combined_error: (mc.se * mc.se + pde_error * pde_error).sqrt(),
            mc,
            excluded_fraction: c.excluded_fraction(),
            flagged: c.flagged(),
            difference,
        });
    }
    let na = spec.alpha_sweep.len();
    let trends = by_alpha_desc_eps(spec)
        .into_iter()
        .map(|(ia, ies)| {
            let seq: Vec<(f64, f64)> = ies.iter().map(|&ie| (out[ie * na + ia].difference.abs(), out[ie * na + ia].combined_error)).collect();
            (spec.alpha_sweep[ia], decreasing_within(&seq))
        })
        .collect();
    Ok(ExpectationReport { t, zeta_ref, pde_value, pde_error, cells: out, trends })
}

pub fn convergence_in_expectation(
    spec: &EnsembleSpec,
    f0: &SmoothObservable,
    zeta_ref: f64,
    res: &PdeResolution,
    dir: Option<&Path>,
) -> Result<ExpectationReport> {
    let cells = run_sweep(spec, dir)?;
    expectation_report(spec, &cells, f0, zeta_ref, res)
}

/// Log-log fit `y ∝ ε^γ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub alpha: f64,
    pub exponent: f64,
    pub exponent_se: f64,
    /// Cells entering the fit (non-zero observations).
    pub points: usize,
}

fn exponent_fit(alpha: f64, pts: &[(f64, f64, f64)]) -> Option<ExponentFit> {
    // (eps, value, se) with value > 0
    let p: Vec<&(f64, f64, f64)> = pts.iter().filter(|p| p.1 > 0.0 && p.2 > 0.0).collect();
    if p.len() < 2 {
        return None;
    }
    let x: Vec<f64> = p.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = p.iter().map(|p| p.1.ln()).collect();
    let s: Vec<f64> = p.iter().map(|p| p.2 / p.1).collect();
    let f = stats::linear_fit(&x, &y, Some(&s));
    Some(ExponentFit { alpha, exponent: f.slope, exponent_se: f.slope_se, points: p.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoubletCell {
    pub eps: f64,
    pub alpha: f64,
    pub n_traj: usize,
    pub mean_count: f64,
    pub count_se: f64,
    /// Upper 95 % bound on the mean count when no doublet was seen.
    pub upper_bound: Option<f64>,
    pub encounters: u64,
    pub mean_deflection: f64,
    pub deflection_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoubletReport {
    pub cells: Vec<DoubletCell>,
    pub fits: Vec<ExponentFit>,
}

pub fn doublet_report(spec: &EnsembleSpec, cells: &[CellStats]) -> DoubletReport {
    let mut out = Vec::new();
    for c in cells {
        let counts: Vec<f64> = c.records.iter().map(|r| r.doublets as f64).collect();
        let ms = stats::mean_se(&counts);
        let enc: u64 = c.records.iter().map(|r| r.doublets as u64).sum();
        let s1: f64 = c.records.iter().map(|r| r.doublet_deflection_sum).sum();
        let s2: f64 = c.records.iter().map(|r| r.doublet_deflection_sq).sum();
        let (md, se) = if enc > 1 {
            let n = enc as f64;
            let m = s1 / n;
            let v = (s2 / n - m * m).max(0.0) * n / (n - 1.0);
            (m, (v / n).sqrt())
        } else {
            (0.0, 0.0)
        };
        out.push(DoubletCell {
            eps: c.eps,
            alpha: c.alpha,
            n_traj: c.n_traj,
            mean_count: ms.mean,
            count_se: ms.se,
            upper_bound: (enc == 0).then(|| stats::rule_of_three(c.n_traj)),
            encounters: enc,
            mean_deflection: md,
            deflection_se: se,
        });
    }
    let na = spec.alpha_sweep.len();
    let fits = (0..na)
        .filter_map(|ia| {
            let pts: Vec<(f64, f64, f64)> =
                (0..spec.eps_sweep.len()).map(|ie| &out[ie * na + ia]).map(|c| (c.eps, c.mean_count, c.count_se)).collect();
            exponent_fit(spec.alpha_sweep[ia], &pts)
        })
        .collect();
    DoubletReport { cells: out, fits }
}

pub fn doublet_census(spec: &EnsembleSpec, dir: Option<&Path>) -> Result<DoubletReport> {
    let mut s = spec.clone();
    if !s.has(Observable::Doublets) {
        s.observables.push(Observable::Doublets);
    }
    let cells = run_sweep(&s, dir)?;
    Ok(doublet_report(&s, &cells))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecollisionCell {
    pub eps: f64,
    pub alpha: f64,
    pub n_traj: usize,
    pub count: usize,
    pub frequency: f64,
    pub se: f64,
    pub upper_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecollisionReport {
    pub cells: Vec<RecollisionCell>,
    pub fits: Vec<ExponentFit>,
}

pub fn recollision_report(spec: &EnsembleSpec, cells: &[CellStats]) -> RecollisionReport {
    let mut out = Vec::new();
    for c in cells {
        let count = c.records.iter().filter(|r| r.recollision == Some(true)).count();
        let n = c.n_traj as f64;
        let p = count as f64 / n;
        out.push(RecollisionCell {
            eps: c.eps,
            alpha: c.alpha,
            n_traj: c.n_traj,
            count,
            frequency: p,
            se: (p * (1.0 - p) / n).sqrt(),
            upper_bound: (count == 0).then(|| stats::rule_of_three(c.n_traj)),
        });
    }
    let na = spec.alpha_sweep.len();
    let fits = (0..na)
        .filter_map(|ia| {
            let pts: Vec<(f64, f64, f64)> =
                (0..spec.eps_sweep.len()).map(|ie| &out[ie * na + ia]).map(|c| (c.eps, c.frequency, c.se)).collect();
            exponent_fit(spec.alpha_sweep[ia], &pts)
        })
        .collect();
    RecollisionReport { cells: out, fits }
}

pub fn recollision_sweep(spec: &EnsembleSpec, dir: Option<&Path>) -> Result<RecollisionReport> {
    let mut s = spec.clone();
    if !s.has(Observable::Recollision) {
        s.observables.push(Observable::Recollision);
    }
    let cells = run_sweep(&s, dir)?;
    Ok(recollision_report(&s, &cells))
}
