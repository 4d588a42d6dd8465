//! Single-obstacle scattering: deflection angle θ(b), its leading coefficient
//! g(b) = lim ε^{−α} θ, and the rescaled cross section Γ_ε(θ).
//!
//! Conventions: the particle enters with velocity (1, 0); `b > 0` puts the
//! obstacle centre to its left; θ > 0 is a counterclockwise turn. `b` is measured
//! in units of ε.

use crate::dynamics::{cross_configuration, StepControl};
use crate::error::{domain, Error, Result};
use crate::field::csv_err;
use crate::geom::Vec2;
use crate::interp::Pchip;
use crate::potential::PotentialModel;
use crate::quad::{self, Tolerance};
use rayon::prelude::*;
use std::f64::consts::FRAC_PI_2;
use std::io::Write;

/// Time budget for one crossing, in units of ε.
pub const MAX_CROSSING_TIME: f64 = 100.0;

/// Default table order: `n + 1` Chebyshev points.
pub const TABLE_ORDER: usize = 2048;

/// Full crossing of a single obstacle at the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingleCrossing {
    pub theta: f64,
    pub exit_speed: f64,
    /// Time from entering to leaving the support.
    pub duration: f64,
    pub energy_error: f64,
}

/// Entry point on the support circle for impact parameter `b` (ε units).
pub fn entry_point(eps: f64, b: f64) -> Vec2 {
    Vec2::new(-(1.0 - b * b).max(0.0).sqrt() * eps, -b * eps)
}

pub fn single_crossing(m: &PotentialModel, eps: f64, alpha: f64, b: f64, step: &StepControl) -> Result<SingleCrossing> {
    if !(b.abs() <= 1.0) {
        return domain(format!("impact parameter must satisfy |b| ≤ 1, got {b}"));
    }
    if b.abs() == 1.0 || m.is_zero() {
        return Ok(SingleCrossing { theta: 0.0, exit_speed: 1.0, duration: 0.0, energy_error: 0.0 });
    }
    let x = entry_point(eps, b);
    let c = cross_configuration(m, eps, alpha, &[Vec2::ZERO], x, Vec2::new(1.0, 0.0), step, MAX_CROSSING_TIME * eps)?;
    Ok(SingleCrossing {
        theta: c.exit.angle,
        exit_speed: c.exit.v.norm(),
        duration: c.time_inside,
        energy_error: c.max_energy_error,
    })
}

/// Signed deflection angle θ_ε(b).
pub fn deflection(m: &PotentialModel, eps: f64, alpha: f64, b: f64) -> Result<f64> {
    Ok(single_crossing(m, eps, alpha, b, &StepControl::default())?.theta)
}

/// `g(b) = 2 ∫_{|b|}^{1} V′(|b|/u) (b/u) du / √(1 − u²)`, evaluated with `u = sin ψ`.
pub fn leading_angle(m: &PotentialModel, b: f64) -> Result<f64> {
    if !(b.abs() <= 1.0) {
        return domain(format!("impact parameter must satisfy |b| ≤ 1, got {b}"));
    }
    let ab = b.abs();
    if ab == 0.0 || ab == 1.0 || m.is_zero() {
        return Ok(0.0);
    }
    let lo = ab.asin();
    let r = quad::integrate(
        |psi: f64| {
            let u = psi.sin();
            m.derivative(ab / u) * (b / u)
        },
        lo,
        FRAC_PI_2,
        Tolerance::new(1e-14, 1e-12),
        2000,
    )?;
    Ok(2.0 * r.value)
}

/// `|τ − τ̂|`: exit time of the simulated crossing minus the straight chord time `2√(1−b²) ε`.
pub fn straightline_time_gap(m: &PotentialModel, eps: f64, alpha: f64, b: f64) -> Result<f64> {
    let c = single_crossing(m, eps, alpha, b, &StepControl::default())?;
    if c.duration == 0.0 {
        return Ok(0.0);
    }
    Ok((c.duration - 2.0 * (1.0 - b * b).sqrt() * eps).abs())
}

/// θ_ε tabulated on Chebyshev points of `b ∈ [−1, 1]`.
#[derive(Clone, Debug)]
pub struct ScatteringTable {
    pub eps: f64,
    pub alpha: f64,
    /// Ascending impact parameters.
    pub b: Vec<f64>,
    pub theta: Vec<f64>,
    pub dtheta_db: Vec<f64>,
    /// Clenshaw–Curtis weights on `b`.
    pub weights: Vec<f64>,
    forward: Pchip,
    branches: Vec<Branch>,
}

/// Inverse `b(θ)` on one monotone run of the table.
#[derive(Clone, Debug)]
struct Branch {
    inverse: Pchip,
    lo: f64,
    hi: f64,
}

impl ScatteringTable {
    pub fn build(m: &PotentialModel, eps: f64, alpha: f64, order: usize, step: &StepControl) -> Result<Self> {
        if order < 8 || order % 2 != 0 {
            return domain("table order must be even and at least 8");
        }
        let (x, w) = quad::clenshaw_curtis(order);
        let half = order / 2;
        // ascending, exactly antisymmetric nodes
        let mut b: Vec<f64> = x.iter().rev().cloned().collect();
        for k in half..=order {
            b[k] = if k == half { 0.0 } else { b[k] };
            b[order - k] = -b[k];
        }
        let weights: Vec<f64> = w.iter().rev().cloned().collect();
        // θ is odd: integrate b ≥ 0 and mirror
        let pos: Vec<Result<f64>> = (half..=order)
            .into_par_iter()
            .map(|k| single_crossing(m, eps, alpha, b[k], step).map(|c| c.theta))
            .collect();
        let mut theta = vec![0.0; order + 1];
        for (off, r) in pos.into_iter().enumerate() {
            let k = half + off;
            theta[k] = r?;
            theta[order - k] = -theta[k];
        }
        Self::from_samples(eps, alpha, b, theta, weights)
    }

    /// Default-resolution table.
    pub fn new(m: &PotentialModel, eps: f64, alpha: f64) -> Result<Self> {
        Self::build(m, eps, alpha, TABLE_ORDER, &StepControl::default())
    }

    /// Assemble a table from tabulated `θ(b)` on ascending `b` with quadrature weights.
    pub fn from_samples(eps: f64, alpha: f64, b: Vec<f64>, theta: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let n = b.len();
        if n < 3 || theta.len() != n || weights.len() != n {
            return domain("table needs at least three matching samples");
        }
        if !b.windows(2).all(|w| w[1] > w[0]) || b[0] < -1.0 || b[n - 1] > 1.0 {
            return domain("table abscissae must increase within [-1, 1]");
        }
        if theta.iter().any(|t| !(t.abs() <= std::f64::consts::PI + 1e-9)) {
            return Err(Error::Invariant("deflection exceeds π in magnitude".into()));
        }
        let mut d = vec![0.0; n];
        for k in 0..n {
            let (i0, i1, i2) = if k == 0 {
                (0, 1, 2)
            } else if k == n - 1 {
                (n - 3, n - 2, n - 1)
            } else {
                (k - 1, k, k + 1)
            };
            d[k] = three_point_derivative(b[i0], b[i1], b[i2], theta[i0], theta[i1], theta[i2], b[k]);
        }
        let forward = Pchip::new(b.clone(), theta.clone());
        let branches = monotone_branches(&b, &theta);
        Ok(ScatteringTable { eps, alpha, b, theta, dtheta_db: d, weights, forward, branches })
    }

    /// Smallest and largest tabulated θ.
    pub fn theta_range(&self) -> (f64, f64) {
        let lo = self.theta.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// θ(b) by shape-preserving interpolation of the table.
    pub fn theta_at(&self, b: f64) -> f64 {
        self.forward.eval(b).0
    }

    /// Pre-images of θ with `|db/dθ|` at each, one per monotone branch containing θ.
    pub fn preimages(&self, theta: f64) -> Vec<(f64, f64)> {
        self.branches
            .iter()
            .filter(|br| theta >= br.lo && theta <= br.hi)
            .map(|br| {
                let (b, db) = br.inverse.eval(theta);
                (b, db.abs())
            })
            .collect()
    }

    /// `Γ_ε(θ) = ε^{−2α} Σ |db/dθ|` over pre-images; zero outside the range.
    pub fn cross_section(&self, theta: f64) -> f64 {
        let s: f64 = self.preimages(theta).into_iter().map(|(_, d)| d).sum();
        s * self.eps.powf(-2.0 * self.alpha)
    }

    /// `∫ Γ_ε dθ` by adaptive quadrature in θ, branch by branch.
    pub fn cross_section_mass(&self) -> Result<f64> {
        let mut total = 0.0;
        for br in &self.branches {
            let r = quad::integrate_breaks(
                |t| br.inverse.eval(t).1.abs(),
                br.inverse.xs(),
                Tolerance::new(1e-14, 1e-12),
                1_000_000,
            )?;
            total += r.value;
        }
        Ok(total * self.eps.powf(-2.0 * self.alpha))
    }

    /// Mass fraction of Γ_ε carried by `|θ| > c`.
    pub fn tail_mass_fraction(&self, c: f64) -> f64 {
        // measure of {b : |θ(b)| > c} on the interpolant, by a fine uniform scan
        let n = 200_000;
        let mut hit = 0usize;
        for i in 0..n {
            let b = -1.0 + 2.0 * (i as f64 + 0.5) / n as f64;
            if self.theta_at(b).abs() > c {
                hit += 1;
            }
        }
        hit as f64 / n as f64
    }

    /// `ε^{−2α} ∫ f(θ(b)) db` by Clenshaw–Curtis on the table.
    pub fn b_integral<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let s: f64 = self.theta.iter().zip(&self.weights).map(|(t, w)| w * f(*t)).sum();
        s * self.eps.powf(-2.0 * self.alpha)
    }

    /// `Γ̂(m) = ∫ Γ_ε(θ) cos(mθ) dθ`.
    pub fn gamma_hat(&self, m: u32) -> f64 {
        self.b_integral(|t| (m as f64 * t).cos())
    }

    /// `Γ̂(0) − Γ̂(m) = ε^{−2α} ∫ 2 sin²(mθ/2) db`, free of cancellation.
    pub fn gamma_hat_gap(&self, m: u32) -> f64 {
        self.b_integral(|t| 2.0 * (0.5 * m as f64 * t).sin().powi(2))
    }

    /// Jump angle for a uniform variate `u ∈ [0, 1)`: θ(b) with `b = 2u − 1`.
    pub fn sample_jump(&self, u: f64) -> f64 {
        self.theta_at(2.0 * u - 1.0)
    }

    /// CSV `b,theta,dtheta_db`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["b", "theta", "dtheta_db"]).map_err(csv_err)?;
        for k in 0..self.b.len() {
            wr.serialize((self.b[k], self.theta[k], self.dtheta_db[k])).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn three_point_derivative(x0: f64, x1: f64, x2: f64, y0: f64, y1: f64, y2: f64, x: f64) -> f64 {
    // derivative of the quadratic through the three points
    y0 * (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2))
        + y1 * (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2))
        + y2 * (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1))
}

/// Split the table at sign changes of the increments; flat runs carry no θ-measure.
fn monotone_branches(b: &[f64], theta: &[f64]) -> Vec<Branch> {
    let n = b.len();
    let sign = |k: usize| {
        let d = theta[k + 1] - theta[k];
        if d > 0.0 {
            1
        } else if d < 0.0 {
            -1
        } else {
            0
        }
    };
    let mut out = Vec::new();
    let mut start = 0;
    while start < n - 1 {
        let s = sign(start);
        let mut e = start + 1;
        while e < n - 1 && sign(e) == s {
            e += 1;
        }
        if s != 0 {
            let (mut th, mut bb) = (theta[start..=e].to_vec(), b[start..=e].to_vec());
            if s < 0 {
                th.reverse();
                bb.reverse();
            }
            let (lo, hi) = (th[0], th[th.len() - 1]);
            out.push(Branch { inverse: Pchip::new(th, bb), lo, hi });
        }
        start = e;
    }
    out
}
