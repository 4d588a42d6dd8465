//! Newtonian motion of the light particle through an obstacle field.
//!
//! Outside all supports the particle flies straight and the next entry is solved
//! exactly. Inside supports a fourth-order symmetric composition of velocity
//! Verlet steps is used with a fixed step `h = ε / (N |v0|)`; a step whose stage
//! positions change the set of supports containing the particle is redone as
//! finer sub-steps so the derivative kink at the support edge is resolved.

use crate::cutoffs::{self, CutoffConfig, CutoffReport};
use crate::error::{domain, Error, Result};
use crate::field::{csv_err, Obstacle, ObstacleField};
use crate::geom::{turn_angle, Vec2};
use crate::potential::PotentialModel;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Integrator resolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepControl {
    /// Steps per support radius: `h = ε / (steps_per_radius · |v0|)`.
    pub steps_per_radius: u32,
    /// Sub-steps replacing a step that crosses a support boundary.
    pub kink_substeps: u32,
    /// Macro-grid density.
    pub samples_per_unit_time: u32,
    /// Abort when |H − H0| exceeds this (the step is far too coarse).
    pub energy_abort: f64,
    /// Record every integrator step in `Trajectory::samples`.
    #[serde(default)]
    pub record_steps: bool,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            steps_per_radius: 160,
            kink_substeps: 32,
            samples_per_unit_time: 512,
            energy_abort: 1e-3,
            record_steps: false,
        }
    }
}

impl StepControl {
    /// Coarser setting for large ensembles: relative deflection error per crossing about 1e-5.
    pub fn ensemble() -> Self {
        StepControl { steps_per_radius: 32, kink_substeps: 8, ..StepControl::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.steps_per_radius == 0 || self.kink_substeps == 0 || self.samples_per_unit_time == 0 {
            return domain("step control counts must be positive");
        }
        if !(self.energy_abort > 0.0) {
            return domain("energy_abort must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationParams {
    pub eps: f64,
    pub alpha: f64,
    pub rho: f64,
    pub v0: Vec2,
    pub x0: Vec2,
    pub horizon: f64,
    #[serde(default)]
    pub step: StepControl,
    pub seed: u64,
    #[serde(default)]
    pub potential: PotentialModel,
}

impl SimulationParams {
    pub fn new(eps: f64, alpha: f64, rho: f64, horizon: f64, seed: u64) -> Self {
        SimulationParams {
            eps,
            alpha,
            rho,
            v0: Vec2::new(1.0, 0.0),
            x0: Vec2::ZERO,
            horizon,
            step: StepControl::default(),
            seed,
            potential: PotentialModel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !((self.v0.norm() - 1.0).abs() < 1e-12) {
            return domain(format!("|v0| must be 1, got {}", self.v0.norm()));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return domain(format!("eps must lie in (0, 1), got {}", self.eps));
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return domain(format!("alpha must lie in (0, 1/2], got {}", self.alpha));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return domain("horizon must be positive and finite");
        }
        if !self.x0.is_finite() {
            return domain("x0 must be finite");
        }
        self.step.validate()
    }

    /// Field parameters for this run's obstacle configuration.
    pub fn field_params(&self) -> crate::field::FieldParams {
        crate::field::FieldParams::new(self.rho, self.eps, self.alpha, self.seed)
    }

    pub fn kappa(&self) -> f64 {
        self.eps.powf(self.alpha)
    }
}

/// Instantaneous particle state; `angle` is the continuously unwrapped velocity angle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: Vec2,
    pub v: Vec2,
    pub angle: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ObstacleEnter,
    ObstacleExit,
    SelfCrossing,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub state: Sample,
    /// Obstacle entered or left.
    pub obstacle: Option<Obstacle>,
    /// Number of supports containing the particle just after the event.
    pub inside_after: u32,
    /// For self-crossings: time of the earlier pass through the crossing point.
    pub earlier_t: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Largest |H − H0| seen at recorded states.
    pub max_energy_error: f64,
    /// Largest |H_exit − H_entry| over cluster visits.
    pub max_crossing_drift: f64,
    /// Largest speed change across a single free-flight segment.
    pub max_free_speed_error: f64,
    /// Largest speed deviation from |v0| on free flight (accumulated crossing drift).
    pub max_free_speed_deviation: f64,
    /// Largest number of simultaneously containing supports.
    pub max_inside: u32,
    pub cluster_visits: u64,
    pub steps: u64,
    pub force_evaluations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Time-ordered states: macro-grid, events and (optionally) every step.
    pub samples: Vec<Sample>,
    /// Uniform macro-grid `k / samples_per_unit_time`, closed by the stop state.
    pub grid: Vec<Sample>,
    pub events: Vec<Event>,
    pub stop_time: f64,
    pub tau_v: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl Trajectory {
    pub fn final_state(&self) -> Sample {
        *self.samples.last().expect("trajectory has samples")
    }

    /// State at time `t` by linear interpolation of the recorded samples.
    pub fn state_at(&self, t: f64) -> Sample {
        interpolate(&self.samples, t)
    }

    /// Unwrapped velocity angle at time `t ≤ stop_time` from the macro-grid.
    pub fn angle_at(&self, t: f64) -> f64 {
        interpolate(&self.grid, t).angle
    }

    /// Cut the trajectory at `tau`, discarding later samples and events.
    pub fn truncate(&mut self, tau: f64) {
        if tau >= self.stop_time {
            return;
        }
        let end = self.state_at(tau);
        self.samples.retain(|s| s.t < tau);
        self.samples.push(end);
        self.grid.retain(|s| s.t < tau);
        self.grid.push(end);
        self.events.retain(|e| e.state.t <= tau);
        self.stop_time = tau;
    }

    /// CSV `t,x,y,vx,vy,angle` of all samples.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "x", "y", "vx", "vy", "angle"]).map_err(csv_err)?;
        for s in &self.samples {
            wr.serialize((s.t, s.x.x, s.x.y, s.v.x, s.v.y, s.angle)).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// CSV `t,kind,cell_i,cell_j,index,ox,oy,x,y,vx,vy,inside_after,earlier_t` of the event log.
    pub fn write_events_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "t", "kind", "cell_i", "cell_j", "index", "ox", "oy", "x", "y", "vx", "vy", "inside_after", "earlier_t",
        ])
        .map_err(csv_err)?;
        for e in &self.events {
            let kind = match e.kind {
                EventKind::ObstacleEnter => "obstacle_enter",
                EventKind::ObstacleExit => "obstacle_exit",
                EventKind::SelfCrossing => "self_crossing",
            };
            let (ci, cj, k, ox, oy) = match e.obstacle {
                Some(o) => (
                    o.id.i.to_string(),
                    o.id.j.to_string(),
                    o.id.k.to_string(),
                    o.center.x.to_string(),
                    o.center.y.to_string(),
                ),
                None => Default::default(),
            };
            let s = e.state;
            wr.write_record([
                s.t.to_string(),
                kind.to_string(),
                ci,
                cj,
                k,
                ox,
                oy,
                s.x.x.to_string(),
                s.x.y.to_string(),
                s.v.x.to_string(),
                s.v.y.to_string(),
                e.inside_after.to_string(),
                e.earlier_t.map(|t| t.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub(crate) fn interpolate(s: &[Sample], t: f64) -> Sample {
    let i = s.partition_point(|p| p.t < t);
    if i == 0 {
        return s[0];
    }
    if i >= s.len() {
        return *s.last().unwrap();
    }
    let (a, b) = (s[i - 1], s[i]);
    if b.t == a.t {
        return b;
    }
    let w = (t - a.t) / (b.t - a.t);
    Sample {
        t,
        x: a.x + (b.x - a.x) * w,
        v: a.v + (b.v - a.v) * w,
        angle: a.angle + (b.angle - a.angle) * w,
    }
}

/// Straight flight from `state` to the first support entry or to `horizon`.
/// Returns the new state and the obstacle entered, if any.
pub fn free_flight_advance(state: Sample, field: &ObstacleField, horizon: f64) -> (Sample, Option<Obstacle>) {
    let speed = state.v.norm();
    let remaining = horizon - state.t;
    if remaining <= 0.0 || speed == 0.0 {
        return (state, None);
    }
    let d = state.v / speed;
    match field.first_entry(state.x, d, remaining * speed) {
        Some((s, o)) => {
            let dt = s / speed;
            let mut next = Sample { t: state.t + dt, x: state.x + d * s, ..state };
            if next.t > horizon {
                next.t = horizon;
            }
            (next, Some(o))
        }
        None => (Sample { t: horizon, x: state.x + state.v * remaining, ..state }, None),
    }
}

const NEIGHBOR_RADIUS: f64 = 2.5;

/// Obstacles near the particle, with per-obstacle inside flags.
struct Neighbors {
    center: Vec2,
    reach: f64,
    obstacles: Vec<Obstacle>,
    centers: Vec<Vec2>,
}

struct Force<'a> {
    model: &'a PotentialModel,
    /// `ε^α / ε²`
    scale: f64,
    kappa: f64,
    inv_e2: f64,
}

impl Force<'_> {
    /// Acceleration at `x`; writes inside flags of `nb` into `flags`.
    #[inline]
    fn accel(&self, nb: &Neighbors, x: Vec2, flags: &mut [u64]) -> Vec2 {
        flags.iter_mut().for_each(|f| *f = 0);
        let mut a = Vec2::ZERO;
        for (k, r) in nb.centers.iter().enumerate() {
            let y = x - *r;
            let u2 = y.norm2() * self.inv_e2;
            if u2 < 1.0 {
                flags[k >> 6] |= 1 << (k & 63);
                a -= y * (self.scale * self.model.radial_factor(u2));
            }
        }
        a
    }

    fn potential_energy(&self, nb: &Neighbors, x: Vec2) -> f64 {
        nb.centers.iter().map(|r| self.kappa * self.model.value_sq((x - *r).norm2() * self.inv_e2)).sum()
    }
}

struct Integrator<'a> {
    force: Force<'a>,
    field: Option<&'a ObstacleField>,
    eps: f64,
    h: f64,
    kink: u32,
    nb: Neighbors,
    flags: Vec<u64>,
    scratch: Vec<u64>,
    evals: u64,
}

const W1: f64 = 1.351_207_191_959_657_6; // 1/(2 − 2^{1/3})
const W0: f64 = -1.702_414_383_919_315_3; // −2^{1/3}/(2 − 2^{1/3})

impl<'a> Integrator<'a> {
    fn rebuild(&mut self, x: Vec2) {
        let Some(field) = self.field else { return };
        let reach = NEIGHBOR_RADIUS * self.eps;
        field.collect_near(x, reach, &mut self.nb.obstacles);
        self.nb.centers.clear();
        self.nb.centers.extend(self.nb.obstacles.iter().map(|o| o.center));
        self.nb.center = x;
        self.nb.reach = reach;
        let words = self.nb.centers.len().div_ceil(64).max(1);
        self.flags.resize(words, 0);
        self.scratch.resize(words, 0);
    }

    fn needs_rebuild(&self, x: Vec2) -> bool {
        self.field.is_some() && (x - self.nb.center).norm() > self.nb.reach - 1.2 * self.eps
    }

    /// One fourth-order step of size `h` from `(x, v)` with acceleration `a` at x.
    /// Returns the new state and whether any stage changed the inside set relative to `start`.
    #[inline]
    fn y4(&mut self, x: Vec2, v: Vec2, a: Vec2, h: f64, start: &[u64], check: bool) -> (Vec2, Vec2, Vec2, bool) {
        let (mut x, mut v, mut a) = (x, v, a);
        let mut straddle = false;
        for w in [W1, W0, W1] {
            let tau = w * h;
            v += a * (0.5 * tau);
            x += v * tau;
            a = self.force.accel(&self.nb, x, &mut self.scratch);
            self.evals += 1;
            if check && self.scratch[..] != start[..] {
                straddle = true;
            }
            v += a * (0.5 * tau);
        }
        (x, v, a, straddle)
    }

    /// Advance by `h`, refining when a support boundary is crossed. Leaves the final
    /// inside flags in `self.flags`.
    fn step(&mut self, x: Vec2, v: Vec2, a: Vec2, h: f64) -> (Vec2, Vec2, Vec2) {
        let start = std::mem::take(&mut self.flags);
        let out = self.advance(x, v, a, h, &start, 0);
        self.flags = start;
        self.flags.copy_from_slice(&self.scratch);
        out
    }

    /// `|x − c|²/ε² − 1` for neighbour `k`.
    fn gap(&self, k: usize, x: Vec2) -> f64 {
        (x - self.nb.centers[k]).norm2() * self.force.inv_e2 - 1.0
    }

    /// Classical fourth-order Runge–Kutta–Nyström step. Its stages stay inside `[0, h]`,
    /// so a segment ending on a support boundary never samples the far side.
    fn rkn(&mut self, x: Vec2, v: Vec2, a: Vec2, h: f64, start: &[u64], check: bool) -> (Vec2, Vec2, Vec2, bool) {
        let mut straddle = false;
        let mut eval = |it: &mut Self, y: Vec2| {
            let k = it.force.accel(&it.nb, y, &mut it.scratch);
            it.evals += 1;
            if check && it.scratch[..] != start[..] {
                straddle = true;
            }
            k
        };
        let k2 = eval(self, x + v * (0.5 * h) + a * (h * h / 8.0));
        let k3 = eval(self, x + v * (0.5 * h) + k2 * (h * h / 8.0));
        let k4 = eval(self, x + v * h + k3 * (0.5 * h * h));
        let x1 = x + v * h + (a + k2 + k3) * (h * h / 6.0);
        let v1 = v + (a + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let a1 = eval(self, x1);
        (x1, v1, a1, straddle)
    }

    fn advance(&mut self, x: Vec2, v: Vec2, a: Vec2, h: f64, start: &[u64], depth: u32) -> (Vec2, Vec2, Vec2) {
        let (x1, v1, a1, straddle) = self.y4(x, v, a, h, start, true);
        if !straddle {
            return (x1, v1, a1);
        }
        self.split(x, v, a, h, start, depth)
    }

    fn split(&mut self, x: Vec2, v: Vec2, a: Vec2, h: f64, start: &[u64], depth: u32) -> (Vec2, Vec2, Vec2) {
        let (x1, v1, a1, straddle) = self.rkn(x, v, a, h, start, true);
        if !straddle {
            return (x1, v1, a1);
        }
        let end = self.scratch.clone();
        // earliest boundary crossed, by linear estimate
        let mut first: Option<(f64, usize)> = None;
        for (w, (s, e)) in start.iter().zip(&end).enumerate() {
            let mut diff = s ^ e;
            while diff != 0 {
                let k = w * 64 + diff.trailing_zeros() as usize;
                diff &= diff - 1;
                let (g0, g1) = (self.gap(k, x), self.gap(k, x1));
                let est = if g0 != g1 { g0 / (g0 - g1) } else { 1.0 };
                if first.is_none_or(|(f, _)| est < f) {
                    first = Some((est, k));
                }
            }
        }
        if let (Some((_, k)), true) = (first, depth < 4) {
            // Illinois regula falsi on the crossing time
            let g0 = self.gap(k, x);
            let (mut lo, mut glo) = (0.0, g0);
            let (mut hi, mut ghi) = (1.0, self.gap(k, x1));
            let mut past = None;
            let mut side = 0i32;
            for _ in 0..40 {
                let s = (lo * ghi - hi * glo) / (ghi - glo);
                if !(s > lo && s < hi) {
                    break;
                }
                let r = self.rkn(x, v, a, s * h, start, false);
                let gs = self.gap(k, r.0);
                if gs.abs() < 1e-14 {
                    hi = s;
                    past = Some(r);
                    break;
                }
                if (gs < 0.0) == (g0 < 0.0) {
                    lo = s;
                    glo = gs;
                    if side == -1 {
                        ghi *= 0.5;
                    }
                    side = -1;
                } else {
                    hi = s;
                    ghi = gs;
                    past = Some(r);
                    if side == 1 {
                        glo *= 0.5;
                    }
                    side = 1;
                }
                if hi - lo <= 1e-15 {
                    break;
                }
            }
            if let Some((xh, vh, ah, _)) = past {
                let mut flags = vec![0u64; start.len()];
                self.force.accel(&self.nb, xh, &mut flags);
                self.evals += 1;
                let bit = 1u64 << (k & 63);
                flags[k >> 6] = (flags[k >> 6] & !bit) | (end[k >> 6] & bit);
                return self.split(xh, vh, ah, (1.0 - hi) * h, &flags, depth + 1);
            }
        }
        // grazing step or too many boundaries: uniform sub-steps
        let m = self.kink;
        let hs = h / m as f64;
        let (mut xs, mut vs, mut as_) = (x, v, a);
        for _ in 0..m {
            let r = self.rkn(xs, vs, as_, hs, start, false);
            xs = r.0;
            vs = r.1;
            as_ = r.2;
        }
        (xs, vs, as_)
    }
}

/// Integrate the dynamics and evaluate the stopping times.
pub fn simulate(
    params: &SimulationParams,
    field: &ObstacleField,
    cutoff: &CutoffConfig,
) -> Result<(Trajectory, CutoffReport)> {
    params.validate()?;
    cutoff.validate()?;
    let fp = field.params();
    if (fp.eps - params.eps).abs() > 1e-15 * params.eps || (fp.alpha - params.alpha).abs() > 1e-15 {
        return domain("field and simulation parameters disagree on (eps, alpha)");
    }
    let mut traj = integrate(params, field, cutoff.v_band_or_inf())?;
    let report = cutoffs::evaluate(&mut traj, field, cutoff)?;
    Ok((traj, report))
}

/// Integrate on `[0, horizon]`, stopping early when the speed leaves `(1 − v_band, 1 + v_band)`.
pub fn integrate(params: &SimulationParams, field: &ObstacleField, v_band: f64) -> Result<Trajectory> {
    params.validate()?;
    let eps = params.eps;
    let kappa = params.kappa();
    let model = &params.potential;
    let sc = params.step;
    let per = sc.samples_per_unit_time as f64;
    let horizon = params.horizon;
    let b_sup = model.sup_bounds().0;

    let mut it = Integrator {
        force: Force { model, scale: kappa / (eps * eps), kappa, inv_e2: 1.0 / (eps * eps) },
        field: Some(field),
        eps,
        h: eps / sc.steps_per_radius as f64,
        kink: sc.kink_substeps,
        nb: Neighbors { center: params.x0, reach: 0.0, obstacles: Vec::new(), centers: Vec::new() },
        flags: vec![0],
        scratch: vec![0],
        evals: 0,
    };

    let mut rec = Recorder {
        samples: Vec::new(),
        grid: Vec::new(),
        events: Vec::new(),
        next_grid: 0,
        per,
        record_steps: sc.record_steps,
        bound_kappa_b: 4.0 * kappa * b_sup,
        diag: Diagnostics::default(),
    };

    let mut s = Sample { t: 0.0, x: params.x0, v: params.v0, angle: params.v0.angle() };
    // the start may lie inside supports
    it.rebuild(params.x0);
    let e0 = 0.5 * params.v0.norm2() + it.force.potential_energy(&it.nb, params.x0);
    rec.grid_until(&s, &s, 0.0);
    rec.samples.push(s);
    let mut tau_v = None;
    let mut pending: Option<Obstacle> = None;

    'outer: while s.t < horizon {
        // free flight
        if pending.is_none() && !field.inside_any(s.x) {
            let (next, hit) = free_flight_advance(s, field, horizon);
            rec.grid_until(&s, &next, next.t);
            rec.diag.max_free_speed_error = rec.diag.max_free_speed_error.max((next.v.norm() - s.v.norm()).abs());
            rec.diag.max_free_speed_deviation = rec.diag.max_free_speed_deviation.max((s.v.norm() - 1.0).abs());
            s = next;
            match hit {
                None => break,
                Some(o) => pending = Some(o),
            }
        }
        // inside supports
        it.rebuild(s.x);
        let mut a = it.force.accel(&it.nb, s.x, &mut it.flags);
        it.evals += 1;
        let h_entry = 0.5 * s.v.norm2() + it.force.potential_energy(&it.nb, s.x);
        rec.diag.cluster_visits += 1;
        if let Some(o) = pending.take() {
            // the entry point sits on the support edge; count the entered obstacle as inside
            if let Some(k) = it.nb.obstacles.iter().position(|q| q.id == o.id) {
                it.flags[k >> 6] |= 1 << (k & 63);
            }
        }
        let inside = inside_list(&it);
        for o in &inside {
            rec.event(EventKind::ObstacleEnter, s, Some(*o), inside.len() as u32, None);
        }
        loop {
            let h = it.h.min(horizon - s.t);
            if h <= 0.0 {
                break 'outer;
            }
            let old_flags = it.flags.clone();
            let old_obstacles_len = it.nb.obstacles.len();
            let (x1, v1, a1) = it.step(s.x, s.v, a, h);
            rec.diag.steps += 1;
            let t1 = if h == it.h { s.t + h } else { horizon };
            let next = Sample { t: t1, x: x1, v: v1, angle: s.angle + turn_angle(s.v, v1) };
            debug_assert_eq!(old_obstacles_len, it.nb.obstacles.len());
            // boundary events
            let mut count = count_bits(&it.flags);
            if old_flags != it.flags {
                let mut changes: Vec<(f64, usize, bool)> = Vec::new();
                for (k, c) in it.nb.centers.iter().enumerate() {
                    let was = old_flags[k >> 6] >> (k & 63) & 1 == 1;
                    let now = it.flags[k >> 6] >> (k & 63) & 1 == 1;
                    if was != now {
                        let d0 = (s.x - *c).norm() - eps;
                        let d1 = (next.x - *c).norm() - eps;
                        let w = if d0 != d1 { (d0 / (d0 - d1)).clamp(0.0, 1.0) } else { 1.0 };
                        changes.push((w, k, now));
                    }
                }
                changes.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut running = count_bits(&old_flags) as i64;
                for (w, k, now) in changes {
                    running += if now { 1 } else { -1 };
                    let st = lerp(&s, &next, w);
                    let kind = if now { EventKind::ObstacleEnter } else { EventKind::ObstacleExit };
                    rec.event(kind, st, Some(it.nb.obstacles[k]), running as u32, None);
                }
            }
            rec.grid_until(&s, &next, next.t);
            s = next;
            a = a1;
            if rec.record_steps {
                rec.samples.push(s);
            }
            let speed = s.v.norm();
            rec.diag.max_inside = rec.diag.max_inside.max(count);
            if (speed - 1.0).abs() >= v_band {
                tau_v = Some(s.t);
                rec.samples.push(s);
                break 'outer;
            }
            if count == 0 {
                let de = (0.5 * s.v.norm2() - h_entry).abs();
                rec.diag.max_crossing_drift = rec.diag.max_crossing_drift.max(de);
                let eh = (0.5 * s.v.norm2() - e0).abs();
                rec.diag.max_energy_error = rec.diag.max_energy_error.max(eh);
                if eh > sc.energy_abort {
                    return Err(Error::Integration(format!(
                        "energy error {eh:e} at cluster exit, t = {:.6}: step too coarse for the local stiffness",
                        s.t
                    )));
                }
                break;
            }
            if it.needs_rebuild(s.x) {
                it.rebuild(s.x);
                a = it.force.accel(&it.nb, s.x, &mut it.flags);
                it.evals += 1;
                count = count_bits(&it.flags);
                let _ = count;
            }
            if s.t >= horizon {
                break 'outer;
            }
            let eh = (0.5 * s.v.norm2() + it.force.potential_energy(&it.nb, s.x) - e0).abs();
            if rec.diag.steps % 64 == 0 {
                rec.diag.max_energy_error = rec.diag.max_energy_error.max(eh);
                if eh > sc.energy_abort {
                    return Err(Error::Integration(format!(
                        "energy error {eh:e} at t = {:.6}: step too coarse for the local stiffness",
                        s.t
                    )));
                }
            }
        }
    }
    if rec.samples.last().is_none_or(|p| p.t < s.t) {
        rec.samples.push(s);
    }
    rec.samples.sort_by(|a, b| a.t.total_cmp(&b.t));
    rec.samples.dedup_by(|a, b| a.t == b.t);
    if rec.grid.last().is_none_or(|p| p.t < s.t) {
        rec.grid.push(s);
    }
    rec.diag.force_evaluations = it.evals;
    // speed bound along the path
    let cap = 1.0 + rec.bound_kappa_b * rec.diag.max_inside.max(1) as f64;
    for p in rec.samples.iter() {
        if p.v.norm2() > cap * (1.0 + 1e-12) {
            return Err(Error::Invariant(format!(
                "speed bound violated at t = {}: |v|² = {} > {}",
                p.t,
                p.v.norm2(),
                cap
            )));
        }
    }
    Ok(Trajectory {
        samples: rec.samples,
        grid: rec.grid,
        events: rec.events,
        stop_time: s.t,
        tau_v,
        diagnostics: rec.diag,
    })
}

/// Outcome of scattering off a fixed finite configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crossing {
    /// State after leaving the last support (time measured from the start).
    pub exit: Sample,
    /// Largest |H − H0| over the integration.
    pub max_energy_error: f64,
    /// Total time spent inside supports.
    pub time_inside: f64,
    pub supports_entered: usize,
}

/// Scatter a particle starting at `x` (outside all supports) with velocity `v`
/// off the obstacles `centers`, until it leaves the configuration for good.
/// Fails when the particle is still inside after `max_inside_time`.
pub fn cross_configuration(
    model: &PotentialModel,
    eps: f64,
    alpha: f64,
    centers: &[Vec2],
    x: Vec2,
    v: Vec2,
    step: &StepControl,
    max_inside_time: f64,
) -> Result<Crossing> {
    step.validate()?;
    if !(eps > 0.0) || !(alpha > 0.0 && alpha <= 0.5) {
        return domain("cross_configuration: invalid (eps, alpha)");
    }
    let kappa = eps.powf(alpha);
    let speed0 = v.norm();
    let obstacles: Vec<Obstacle> = centers
        .iter()
        .enumerate()
        .map(|(k, c)| Obstacle { id: crate::field::ObstacleId { i: 0, j: 0, k: k as u32 }, center: *c })
        .collect();
    let words = centers.len().div_ceil(64).max(1);
    let mut it = Integrator {
        force: Force { model, scale: kappa / (eps * eps), kappa, inv_e2: 1.0 / (eps * eps) },
        field: None,
        eps,
        h: eps / (step.steps_per_radius as f64 * speed0),
        kink: step.kink_substeps,
        nb: Neighbors { center: x, reach: f64::INFINITY, obstacles, centers: centers.to_vec() },
        flags: vec![0; words],
        scratch: vec![0; words],
        evals: 0,
    };
    let e0 = 0.5 * v.norm2() + it.force.potential_energy(&it.nb, x);
    let mut s = Sample { t: 0.0, x, v, angle: v.angle() };
    let mut max_err: f64 = 0.0;
    let mut inside_time = 0.0;
    let mut entered = 0usize;
    let e2 = eps * eps;
    loop {
        // straight flight to the next support entry
        let speed = s.v.norm();
        let d = s.v / speed;
        let mut best: Option<(f64, usize)> = None;
        for (k, c) in centers.iter().enumerate() {
            let w = s.x - *c;
            let b = w.dot(d);
            let cc = w.norm2() - e2;
            if b >= 0.0 && cc >= 0.0 {
                continue;
            }
            let disc = b * b - cc;
            if disc < 0.0 {
                continue;
            }
            let dist = if cc <= 0.0 { 0.0 } else { cc / (-b + disc.sqrt()) };
            if best.is_none_or(|(bd, _)| dist < bd) {
                best = Some((dist, k));
            }
        }
        let Some((dist, k)) = best else { break };
        s.x += d * dist;
        s.t += dist / speed;
        entered += 1;
        let mut a = it.force.accel(&it.nb, s.x, &mut it.flags);
        it.flags[k >> 6] |= 1 << (k & 63);
        let t_in = s.t;
        loop {
            let (x1, v1, a1) = it.step(s.x, s.v, a, it.h);
            let next = Sample { t: s.t + it.h, x: x1, v: v1, angle: s.angle + turn_angle(s.v, v1) };
            s = next;
            a = a1;
            let e = (0.5 * s.v.norm2() + it.force.potential_energy(&it.nb, s.x) - e0).abs();
            max_err = max_err.max(e);
            if count_bits(&it.flags) == 0 {
                break;
            }
            if s.t - t_in > max_inside_time {
                return Err(Error::Integration(format!(
                    "particle still inside the configuration after {max_inside_time:e} time units"
                )));
            }
        }
        inside_time += s.t - t_in;
    }
    Ok(Crossing { exit: s, max_energy_error: max_err, time_inside: inside_time, supports_entered: entered })
}

fn inside_list(it: &Integrator) -> Vec<Obstacle> {
    it.nb
        .obstacles
        .iter()
        .enumerate()
        .filter(|(k, _)| it.flags[k >> 6] >> (k & 63) & 1 == 1)
        .map(|(_, o)| *o)
        .collect()
}

#[inline]
fn count_bits(f: &[u64]) -> u32 {
    f.iter().map(|w| w.count_ones()).sum()
}

fn lerp(a: &Sample, b: &Sample, w: f64) -> Sample {
    Sample {
        t: a.t + (b.t - a.t) * w,
        x: a.x + (b.x - a.x) * w,
        v: a.v + (b.v - a.v) * w,
        angle: a.angle + (b.angle - a.angle) * w,
    }
}

struct Recorder {
    samples: Vec<Sample>,
    grid: Vec<Sample>,
    events: Vec<Event>,
    next_grid: u64,
    per: f64,
    record_steps: bool,
    bound_kappa_b: f64,
    diag: Diagnostics,
}

impl Recorder {
    /// Emit grid samples with times in `[a.t, t_end]` by interpolation between `a` and `b`.
    fn grid_until(&mut self, a: &Sample, b: &Sample, t_end: f64) {
        loop {
            let tg = self.next_grid as f64 / self.per;
            if tg > t_end {
                break;
            }
            let w = if b.t > a.t { ((tg - a.t) / (b.t - a.t)).clamp(0.0, 1.0) } else { 1.0 };
            let mut st = lerp(a, b, w);
            st.t = tg;
            self.grid.push(st);
            self.samples.push(st);
            self.next_grid += 1;
        }
    }

    fn event(&mut self, kind: EventKind, state: Sample, obstacle: Option<Obstacle>, inside_after: u32, earlier_t: Option<f64>) {
        self.samples.push(state);
        self.events.push(Event { kind, state, obstacle, inside_after, earlier_t });
    }
}
