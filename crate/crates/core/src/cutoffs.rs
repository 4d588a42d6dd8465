//! Stopping times and cluster diagnostics evaluated on finished trajectories.
//!
//! * `τ_{φ,a}`: first `t` with an earlier `s` such that `|Q(s) − Q(t)| ≤ a`, the
//!   velocity has turned through a right angle somewhere on `[s, t]`, and
//!   `|cos∠(p(s), p(t))| ≥ cos φ`.
//! * `τ_K`: time of the K-th transversal self-crossing of the macro-grid polyline.
//! * `τ_v`: first time `| |v| − 1 | ≥ v_band` (recorded during integration).

use crate::dynamics::{Event, EventKind, Sample, Trajectory};
use crate::error::{domain, Result};
use crate::field::{Obstacle, ObstacleField, ObstacleId};
use crate::geom::Vec2;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffConfig {
    /// Angle threshold of `τ_{φ,a}`; `None` disables that stopping time.
    pub phi: Option<f64>,
    /// Distance threshold of `τ_{φ,a}` (absolute units).
    pub a: f64,
    /// Crossing count of `τ_K`; `None` disables it.
    pub k_max: Option<u32>,
    /// Speed band of `τ_v`; `None` disables it.
    pub v_band: Option<f64>,
    /// Cluster threshold λ.
    pub lambda: f64,
    /// Ball multiplier n of `S_n(x) = B(x, nε)`.
    pub n: u32,
}

impl CutoffConfig {
    /// `φ = 0.1`, `a = 10ε`, `K = 100`, `v_band = 1/2`, `λ = ε^{−β}` with `β = 0.9·min(2α, 1/3)`, `n = 1`.
    pub fn standard(eps: f64, alpha: f64) -> Self {
        let beta = 0.9 * (2.0 * alpha).min(1.0 / 3.0);
        CutoffConfig {
            phi: Some(0.1),
            a: 10.0 * eps,
            k_max: Some(100),
            v_band: Some(0.5),
            lambda: eps.powf(-beta),
            n: 1,
        }
    }

    /// No stopping time ever triggers.
    pub fn disabled() -> Self {
        CutoffConfig { phi: None, a: 1.0, k_max: None, v_band: None, lambda: f64::MAX, n: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(phi) = self.phi {
            if !(phi > 0.0 && phi < std::f64::consts::FRAC_PI_2) {
                return domain(format!("phi must lie in (0, π/2), got {phi}"));
            }
        }
        if !(self.a > 0.0) {
            return domain("cutoff distance a must be positive");
        }
        if self.k_max == Some(0) {
            return domain("K must be at least 1");
        }
        if let Some(b) = self.v_band {
            if !(b > 0.0 && b < 1.0) {
                return domain(format!("v_band must lie in (0, 1), got {b}"));
            }
        }
        if self.n == 0 {
            return domain("ball multiplier n must be at least 1");
        }
        Ok(())
    }

    pub(crate) fn v_band_or_inf(&self) -> f64 {
        self.v_band.unwrap_or(f64::INFINITY)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CutoffReport {
    pub tau_phi_a: Option<f64>,
    pub tau_k: Option<f64>,
    pub tau_v: Option<f64>,
    pub tau: Option<f64>,
    /// `sup_t N_n(x(t))` over recorded states.
    pub max_cluster: usize,
    /// `(enter, exit)` of each visit to an obstacle ball `B(r, nε)`.
    pub crossing_times: Vec<(f64, f64)>,
    /// Number of transversal self-crossings before the stop time.
    pub self_crossings: usize,
    /// Collinear overlaps between non-adjacent grid segments.
    pub collinear_overlaps: usize,
}

impl CutoffReport {
    pub fn triggered(&self) -> bool {
        self.tau.is_some()
    }
}

/// Evaluate all stopping times, truncate the trajectory at `τ` and append
/// self-crossing events.
pub fn evaluate(traj: &mut Trajectory, field: &ObstacleField, cfg: &CutoffConfig) -> Result<CutoffReport> {
    cfg.validate()?;
    let tau_phi_a = match cfg.phi {
        Some(phi) => detect_small_angle_approach(traj, phi, cfg.a),
        None => None,
    };
    let crossings = count_self_crossings(traj);
    let tau_k = cfg.k_max.and_then(|k| crossings.times.get(k as usize - 1).map(|c| c.0));
    let tau_v = traj.tau_v;
    let tau = [tau_phi_a, tau_k, tau_v].into_iter().flatten().min_by(f64::total_cmp);
    if let Some(t) = tau {
        traj.truncate(t);
    }
    let horizon = traj.stop_time;
    let mut n_cross = 0;
    for &(t, s, x) in crossings.times.iter().filter(|c| c.0 <= horizon) {
        n_cross += 1;
        let st = traj.state_at(t);
        traj.events.push(Event {
            kind: EventKind::SelfCrossing,
            state: Sample { x, ..st },
            obstacle: None,
            inside_after: 0,
            earlier_t: Some(s),
        });
    }
    traj.events.sort_by(|a, b| a.state.t.total_cmp(&b.state.t));
    let max_cluster = max_cluster_stat(traj, field, cfg.n)?;
    let crossing_times = crossing_time_stats(traj, field, cfg.n)?.into_iter().map(|c| (c.enter, c.exit)).collect();
    Ok(CutoffReport {
        tau_phi_a,
        tau_k,
        tau_v,
        tau,
        max_cluster,
        crossing_times,
        self_crossings: n_cross,
        collinear_overlaps: crossings.collinear,
    })
}

/// Sparse table for O(1) range min / max queries.
struct RangeExtrema {
    min: Vec<Vec<f64>>,
    max: Vec<Vec<f64>>,
}

impl RangeExtrema {
    fn new(v: &[f64]) -> Self {
        let mut min = vec![v.to_vec()];
        let mut max = vec![v.to_vec()];
        let mut w = 1;
        while 2 * w <= v.len() {
            let (pm, px) = (min.last().unwrap(), max.last().unwrap());
            let nm: Vec<f64> = (0..=v.len() - 2 * w).map(|i| pm[i].min(pm[i + w])).collect();
            let nx: Vec<f64> = (0..=v.len() - 2 * w).map(|i| px[i].max(px[i + w])).collect();
            min.push(nm);
            max.push(nx);
            w *= 2;
        }
        RangeExtrema { min, max }
    }

    /// (min, max) over indices `i..=j`.
    fn query(&self, i: usize, j: usize) -> (f64, f64) {
        let len = j - i + 1;
        let k = usize::BITS - 1 - len.leading_zeros();
        let w = 1usize << k;
        let k = k as usize;
        (self.min[k][i].min(self.min[k][j + 1 - w]), self.max[k][i].max(self.max[k][j + 1 - w]))
    }
}

struct PointHash {
    inv: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl PointHash {
    fn new(cell: f64) -> Self {
        PointHash { inv: 1.0 / cell, cells: HashMap::new() }
    }
    fn key(&self, x: Vec2) -> (i64, i64) {
        ((x.x * self.inv).floor() as i64, (x.y * self.inv).floor() as i64)
    }
    fn insert(&mut self, x: Vec2, i: usize) {
        let k = self.key(x);
        self.cells.entry(k).or_default().push(i);
    }
    fn around(&self, x: Vec2, mut f: impl FnMut(usize)) {
        let (ci, cj) = self.key(x);
        for di in -1..=1 {
            for dj in -1..=1 {
                if let Some(v) = self.cells.get(&(ci + di, cj + dj)) {
                    v.iter().for_each(|&i| f(i));
                }
            }
        }
    }
}

/// `τ_{φ,a}` on the macro-grid, refined between grid samples to path resolution `a/100`.
pub fn detect_small_angle_approach(traj: &Trajectory, phi: f64, a: f64) -> Option<f64> {
    let g = &traj.grid;
    if g.len() < 3 {
        return None;
    }
    let psi: Vec<f64> = g.iter().map(|s| s.angle).collect();
    let rx = RangeExtrema::new(&psi);
    let cos_phi = phi.cos();
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut hash = PointHash::new(a);
    let hit = |i: usize, q: Vec2, psi_t: f64, upto: usize| -> bool {
        let s = &g[i];
        if (s.x - q).norm() > a {
            return false;
        }
        if (psi_t - s.angle).cos().abs() < cos_phi {
            return false;
        }
        let (lo, hi) = rx.query(i, upto);
        let (lo, hi) = (lo.min(psi_t), hi.max(psi_t));
        hi - s.angle >= half_pi || s.angle - lo >= half_pi
    };
    hash.insert(g[0].x, 0);
    for j in 1..g.len() {
        let q = g[j].x;
        let mut found = false;
        hash.around(q, |i| {
            if !found && i + 1 < j && hit(i, q, psi[j], j) {
                found = true;
            }
        });
        if found {
            // refine inside (t_{j−1}, t_j]
            let (p0, p1) = (&g[j - 1], &g[j]);
            let len = (p1.x - p0.x).norm();
            let m = ((len / (a / 100.0)).ceil() as usize).clamp(1, 10_000);
            for k in 1..=m {
                let w = k as f64 / m as f64;
                let x = p0.x + (p1.x - p0.x) * w;
                let ang = p0.angle + (p1.angle - p0.angle) * w;
                let mut ok = false;
                hash.around(x, |i| {
                    if !ok && i + 1 < j && hit(i, x, ang, j - 1) {
                        ok = true;
                    }
                });
                if ok {
                    return Some(p0.t + (p1.t - p0.t) * w);
                }
            }
            return Some(p1.t);
        }
        hash.insert(q, j);
    }
    None
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SelfCrossings {
    /// `(t_later, t_earlier, point)` sorted by `t_later`.
    pub times: Vec<(f64, f64, Vec2)>,
    pub collinear: usize,
}

impl SelfCrossings {
    pub fn count(&self) -> usize {
        self.times.len()
    }
}

/// Intersection parameters of segments `p0→p1` and `q0→q1`, each in `[0, 1)`.
/// Returns `Err(())` for collinear overlap.
pub(crate) fn segment_intersection(p0: Vec2, p1: Vec2, q0: Vec2, q1: Vec2) -> std::result::Result<Option<(f64, f64)>, ()> {
    let r = p1 - p0;
    let s = q1 - q0;
    let den = r.cross(s);
    let qp = q0 - p0;
    if den == 0.0 {
        if qp.cross(r) != 0.0 {
            return Ok(None);
        }
        let rr = r.norm2();
        if rr == 0.0 {
            return Ok(None);
        }
        let t0 = qp.dot(r) / rr;
        let t1 = t0 + s.dot(r) / rr;
        let (lo, hi) = (t0.min(t1), t0.max(t1));
        return if hi > 0.0 && lo < 1.0 { Err(()) } else { Ok(None) };
    }
    let t = qp.cross(s) / den;
    let u = qp.cross(r) / den;
    if (0.0..1.0).contains(&t) && (0.0..1.0).contains(&u) {
        Ok(Some((t, u)))
    } else {
        Ok(None)
    }
}

/// Transversal self-crossings of the polyline through `points` at times `times`.
pub fn polyline_self_crossings(points: &[Vec2], times: &[f64]) -> SelfCrossings {
    let n = points.len();
    let mut out = SelfCrossings::default();
    if n < 4 {
        return out;
    }
    let mean_len = points.windows(2).map(|w| (w[1] - w[0]).norm()).sum::<f64>() / (n - 1) as f64;
    let cell = if mean_len > 0.0 { mean_len } else { 1.0 };
    let inv = 1.0 / cell;
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut stamp = vec![usize::MAX; n];
    let key = |x: f64| (x * inv).floor() as i64;
    for j in 0..n - 1 {
        let (a, b) = (points[j], points[j + 1]);
        let (i0, i1) = (key(a.x.min(b.x)), key(a.x.max(b.x)));
        let (j0, j1) = (key(a.y.min(b.y)), key(a.y.max(b.y)));
        if (i1 - i0 + 1) * (j1 - j0 + 1) > 1_000_000 {
            // pathological segment: fall back to direct scan
            for i in 0..j.saturating_sub(1) {
                test_pair(points, times, i, j, &mut out);
            }
        } else {
            for ci in i0..=i1 {
                for cj in j0..=j1 {
                    if let Some(list) = grid.get(&(ci, cj)) {
                        for &i in list {
                            if i + 2 <= j && stamp[i] != j {
                                stamp[i] = j;
                                test_pair(points, times, i, j, &mut out);
                            }
                        }
                    }
                }
            }
        }
        for ci in i0..=i1.min(i0 + 10_000) {
            for cj in j0..=j1.min(j0 + 10_000) {
                grid.entry((ci, cj)).or_default().push(j);
            }
        }
    }
    out.times.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn test_pair(p: &[Vec2], t: &[f64], i: usize, j: usize, out: &mut SelfCrossings) {
    match segment_intersection(p[i], p[i + 1], p[j], p[j + 1]) {
        Ok(Some((wi, wj))) => {
            let tj = t[j] + (t[j + 1] - t[j]) * wj;
            let ti = t[i] + (t[i + 1] - t[i]) * wi;
            out.times.push((tj, ti, p[i] + (p[i + 1] - p[i]) * wi));
        }
        Ok(None) => {}
        Err(()) => out.collinear += 1,
    }
}

/// Self-crossings of the trajectory's macro-grid polyline.
pub fn count_self_crossings(traj: &Trajectory) -> SelfCrossings {
    let pts: Vec<Vec2> = traj.grid.iter().map(|s| s.x).collect();
    let ts: Vec<f64> = traj.grid.iter().map(|s| s.t).collect();
    polyline_self_crossings(&pts, &ts)
}

/// `sup_t N_n(x(t))` over the recorded states.
pub fn max_cluster_stat(traj: &Trajectory, field: &ObstacleField, n: u32) -> Result<usize> {
    let mut m = 0;
    for s in &traj.samples {
        m = m.max(field.count_in_ball(s.x, n)?);
    }
    Ok(m)
}

/// Right-hand side of the overlap tail bound,
/// `((1 + 4λε^α B T)/(nε) + 1)² · exp(32 n² ρ ε^{−2α−1} − λ)`.
pub fn overlap_tail_bound(lambda: f64, n: u32, eps: f64, alpha: f64, rho: f64, horizon: f64, b: f64) -> f64 {
    let nf = n as f64;
    let pre = ((1.0 + 4.0 * lambda * eps.powf(alpha) * b * horizon) / (nf * eps) + 1.0).powi(2);
    pre * (32.0 * nf * nf * rho * eps.powf(-2.0 * alpha - 1.0) - lambda).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallCrossing {
    pub obstacle: ObstacleId,
    pub enter: f64,
    pub exit: f64,
    pub duration: f64,
    pub velocity_change: f64,
}

/// Complete visits of the balls `B(r, nε)` around every obstacle the trajectory entered,
/// located on the sample polyline.
pub fn crossing_time_stats(traj: &Trajectory, field: &ObstacleField, n: u32) -> Result<Vec<BallCrossing>> {
    let radius = n as f64 * field.eps();
    if radius > field.max_radius() {
        return domain("ball multiplier exceeds the field's query radius");
    }
    let mut seen: Vec<Obstacle> = Vec::new();
    for e in &traj.events {
        if e.kind == EventKind::ObstacleEnter {
            if let Some(o) = e.obstacle {
                if !seen.iter().any(|q| q.id == o.id) {
                    seen.push(o);
                }
            }
        }
    }
    let s = &traj.samples;
    let mut out = Vec::new();
    for o in seen {
        let r2 = radius * radius;
        let inside = |p: &Sample| (p.x - o.center).norm2() <= r2;
        let mut enter: Option<Sample> = None;
        for k in 1..s.len() {
            let (a, b) = (&s[k - 1], &s[k]);
            let (ia, ib) = (inside(a), inside(b));
            if ia == ib {
                continue;
            }
            let w = circle_crossing(a.x, b.x, o.center, radius);
            let st = crate::dynamics::interpolate(s, a.t + (b.t - a.t) * w);
            if !ia && ib {
                enter = Some(st);
            } else if let Some(en) = enter.take() {
                out.push(BallCrossing {
                    obstacle: o.id,
                    enter: en.t,
                    exit: st.t,
                    duration: st.t - en.t,
                    velocity_change: (st.v - en.v).norm(),
                });
            }
        }
    }
    out.sort_by(|a, b| a.enter.total_cmp(&b.enter));
    Ok(out)
}

/// Parameter in [0, 1] where segment `a→b` crosses the circle `|x − c| = r`.
fn circle_crossing(a: Vec2, b: Vec2, c: Vec2, r: f64) -> f64 {
    let d = b - a;
    let w = a - c;
    let (qa, qb, qc) = (d.norm2(), 2.0 * w.dot(d), w.norm2() - r * r);
    if qa == 0.0 {
        return 0.0;
    }
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
    let roots = [(-qb - disc) / (2.0 * qa), (-qb + disc) / (2.0 * qa)];
    roots.into_iter().filter(|t| (-1e-9..=1.0 + 1e-9).contains(t)).fold(f64::NAN, |acc, t| if acc.is_nan() { t } else { acc.min(t) }).clamp(0.0, 1.0)
}

/// Encounters with groups of overlapping supports: maximal intervals during which the
/// particle is inside at least one support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterVisit {
    pub enter: Sample,
    pub exit: Sample,
    /// Distinct obstacles entered during the visit, in order of entry.
    pub obstacles: Vec<Obstacle>,
}

impl ClusterVisit {
    pub fn deflection(&self) -> f64 {
        self.exit.angle - self.enter.angle
    }
}

/// Complete cluster visits reconstructed from the event log.
pub fn cluster_visits(traj: &Trajectory) -> Vec<ClusterVisit> {
    let mut out = Vec::new();
    let mut cur: Option<ClusterVisit> = None;
    for e in &traj.events {
        match e.kind {
            EventKind::ObstacleEnter => {
                let o = e.obstacle.expect("enter events carry an obstacle");
                let v = cur.get_or_insert_with(|| ClusterVisit { enter: e.state, exit: e.state, obstacles: Vec::new() });
                if !v.obstacles.iter().any(|q| q.id == o.id) {
                    v.obstacles.push(o);
                }
            }
            EventKind::ObstacleExit => {
                if e.inside_after == 0 {
                    if let Some(mut v) = cur.take() {
                        v.exit = e.state;
                        out.push(v);
                    }
                }
            }
            EventKind::SelfCrossing => {}
        }
    }
    out
}

/// Whether some obstacle met in a later cluster lies within `2ε` of a free-flight
/// segment that ended at least one cluster earlier.
pub fn has_recollision(traj: &Trajectory, eps: f64) -> bool {
    let visits = cluster_visits(traj);
    if visits.len() < 2 {
        return false;
    }
    // free segment k runs from the exit of visit k−1 (or the start) to the entry of visit k
    let start = traj.samples[0].x;
    let segs: Vec<(Vec2, Vec2)> = visits
        .iter()
        .enumerate()
        .map(|(k, v)| (if k == 0 { start } else { visits[k - 1].exit.x }, v.enter.x))
        .collect();
    let tube = 2.0 * eps;
    for (c, v) in visits.iter().enumerate().skip(1) {
        for o in &v.obstacles {
            for &(a, b) in &segs[..c] {
                if point_segment_distance(o.center, a, b) <= tube {
                    return true;
                }
            }
        }
    }
    false
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let l2 = d.norm2();
    if l2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(d) / l2).clamp(0.0, 1.0);
    (p - (a + d * t)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Diagnostics;

    pub(crate) fn synthetic(points: &[(f64, Vec2, f64)]) -> Trajectory {
        let samples: Vec<Sample> = points
            .iter()
            .map(|&(t, x, angle)| Sample { t, x, v: Vec2::from_angle(angle), angle })
            .collect();
        Trajectory {
            grid: samples.clone(),
            stop_time: samples.last().unwrap().t,
            samples,
            events: Vec::new(),
            tau_v: None,
            diagnostics: Diagnostics::default(),
        }
    }

    fn straight(n: usize) -> Trajectory {
        let pts: Vec<(f64, Vec2, f64)> =
            (0..n).map(|i| (i as f64 / 512.0, Vec2::new(i as f64 / 512.0, 0.0), 0.0)).collect();
        synthetic(&pts)
    }

    #[test]
    fn straight_line_never_triggers() {
        let tr = straight(2000);
        assert_eq!(detect_small_angle_approach(&tr, 0.1, 0.01), None);
        assert_eq!(count_self_crossings(&tr).count(), 0);
    }

    #[test]
    fn circle_closes_near_circumference() {
        let l = 1.0;
        let n = 1024;
        let r = l / (2.0 * std::f64::consts::PI);
        let pts: Vec<(f64, Vec2, f64)> = (0..=n + 200)
            .map(|i| {
                let t = i as f64 / n as f64 * l;
                let th = t / r;
                (t, Vec2::new(r * th.sin(), r * (1.0 - th.cos())), th)
            })
            .collect();
        let tr = synthetic(&pts);
        let t = detect_small_angle_approach(&tr, 0.1, 0.01).unwrap();
        assert!((t - l).abs() < 0.02, "{t}");
    }

    #[test]
    fn sparse_table_matches_scan() {
        let v: Vec<f64> = (0..37).map(|i| ((i * 7919) % 101) as f64).collect();
        let rx = RangeExtrema::new(&v);
        for i in 0..v.len() {
            for j in i..v.len() {
                let lo = v[i..=j].iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = v[i..=j].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(rx.query(i, j), (lo, hi));
            }
        }
    }

    #[test]
    fn figure_eight_single_crossing() {
        let n = 400;
        // closed loop: the last point repeats the first
        let pts: Vec<Vec2> = (0..=n)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64 + 0.01;
                Vec2::new(t.sin(), t.sin() * t.cos())
            })
            .collect();
        let ts: Vec<f64> = (0..=n).map(|i| i as f64).collect();
        assert_eq!(polyline_self_crossings(&pts, &ts).count(), 1);
    }

    #[test]
    fn collinear_overlap_reported_separately() {
        let pts = [Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(2.0, 1.0), Vec2::new(1.0, 0.0), Vec2::new(1.5, 0.0), Vec2::new(1.5, -1.0)];
        let ts: Vec<f64> = (0..pts.len()).map(|i| i as f64).collect();
        let c = polyline_self_crossings(&pts, &ts);
        assert_eq!(c.collinear, 1);
    }
}
