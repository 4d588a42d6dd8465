//! Limiting kinetic equations: the linear Landau equation on the circle of speeds
//! and in phase space, and the linear Boltzmann family with kernel `ρ Γ_ε`.

use crate::error::{domain, Error, Result};
use crate::geom::Vec2;
use crate::rng;
use crate::scattering::ScatteringTable;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::{PI, TAU};
use std::io::Write;

pub const DEFAULT_ORDER: usize = 256;
pub const DEFAULT_NTHETA: usize = 512;

/// Density on the circle through its Fourier coefficients `c_m`, `m = 0..=M`;
/// `c_{−m} = conj(c_m)`. The density is `Σ_m c_m e^{imθ}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngularDistribution {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl AngularDistribution {
    pub fn order(&self) -> usize {
        self.re.len() - 1
    }

    pub fn coeff(&self, m: i64) -> Complex64 {
        let k = m.unsigned_abs() as usize;
        if k > self.order() {
            return Complex64::new(0.0, 0.0);
        }
        let c = Complex64::new(self.re[k], self.im[k]);
        if m < 0 {
            c.conj()
        } else {
            c
        }
    }

    fn from_coeffs(c: Vec<Complex64>) -> Self {
        let mut re: Vec<f64> = c.iter().map(|z| z.re).collect();
        let mut im: Vec<f64> = c.iter().map(|z| z.im).collect();
        re.shrink_to_fit();
        im.shrink_to_fit();
        im[0] = 0.0;
        AngularDistribution { re, im }
    }

    fn coeffs(&self) -> Vec<Complex64> {
        self.re.iter().zip(&self.im).map(|(&r, &i)| Complex64::new(r, i)).collect()
    }

    /// Unit point mass at `theta0`.
    pub fn point_mass(theta0: f64, order: usize) -> Self {
        let c = (0..=order).map(|m| Complex64::from_polar(1.0 / TAU, -(m as f64) * theta0)).collect();
        Self::from_coeffs(c)
    }

    /// Uniform density of total mass one.
    pub fn uniform(order: usize) -> Self {
        let mut c = vec![Complex64::new(0.0, 0.0); order + 1];
        c[0] = Complex64::new(1.0 / TAU, 0.0);
        Self::from_coeffs(c)
    }

    /// Empirical coefficients `(1/2πN) Σ_j e^{−imθ_j}` of a sample.
    pub fn from_samples(angles: &[f64], order: usize) -> Self {
        let n = angles.len().max(1) as f64;
        let c = (0..=order)
            .map(|m| {
                let mut s = Complex64::new(0.0, 0.0);
                for &t in angles {
                    s += Complex64::from_polar(1.0, -(m as f64) * t);
                }
                s / (TAU * n)
            })
            .collect();
        Self::from_coeffs(c)
    }

    /// Coefficients of `f` sampled on `4M` equispaced points.
    pub fn from_density<F: Fn(f64) -> f64>(f: F, order: usize) -> Self {
        let n = 4 * order.max(1);
        let mut buf: Vec<Complex64> = (0..n).map(|j| Complex64::new(f(TAU * j as f64 / n as f64), 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        Self::from_coeffs(buf[..=order].iter().map(|z| z / n as f64).collect())
    }

    pub fn density(&self, theta: f64) -> f64 {
        let mut s = self.re[0];
        for m in 1..=self.order() {
            let (sn, cs) = (m as f64 * theta).sin_cos();
            s += 2.0 * (self.re[m] * cs - self.im[m] * sn);
        }
        s
    }

    /// Density on `n` equispaced points `2πj/n` (requires `n > 2M`).
    pub fn grid_density(&self, n: usize) -> Vec<f64> {
        assert!(n > 2 * self.order());
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for m in 0..=self.order() {
            let c = self.coeff(m as i64);
            buf[m] += c;
            if m > 0 {
                buf[n - m] += c.conj();
            }
        }
        FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
        buf.iter().map(|z| z.re).collect()
    }

    pub fn mass(&self) -> f64 {
        TAU * self.re[0]
    }

    /// Distribution function on `[−π, θ]` for `θ ∈ [−π, π]`.
    pub fn cdf(&self, theta: f64) -> f64 {
        let mut s = self.re[0] * (theta + PI);
        for m in 1..=self.order() {
            let mf = m as f64;
            let c = self.coeff(m as i64);
            // ∫_{−π}^{θ} e^{imφ} dφ = (e^{imθ} − e^{−imπ}) / (im)
            let e = Complex64::from_polar(1.0, mf * theta) - Complex64::from_polar(1.0, -mf * PI);
            s += 2.0 * (c * e / Complex64::new(0.0, mf)).re;
        }
        s
    }

    /// Smallest density value on the `4M` grid.
    pub fn min_on_grid(&self) -> f64 {
        self.grid_density(4 * self.order().max(1)).into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Checks the stated invariants: real `c_0` and non-negativity to `−1e−9`.
    pub fn validate(&self) -> Result<()> {
        if self.re.len() != self.im.len() || self.re.is_empty() {
            return domain("coefficient arrays must be non-empty and of equal length");
        }
        if self.im[0] != 0.0 {
            return Err(Error::Invariant("c_0 must be real".into()));
        }
        let m = self.min_on_grid();
        if m < -1e-9 {
            return Err(Error::Invariant(format!("density negative on the grid: {m:e}")));
        }
        Ok(())
    }

    /// Largest |c_m(self) − c_m(other)| over common modes.
    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        let n = self.order().max(other.order()) as i64;
        (0..=n).map(|m| (self.coeff(m) - other.coeff(m)).norm()).fold(0.0, f64::max)
    }

    /// CSV `theta,value` on `n` points.
    pub fn write_csv<W: Write>(&self, w: W, n: usize) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["theta", "value"]).map_err(crate::field::csv_err)?;
        let vals = self.grid_density(n.max(2 * self.order() + 1));
        let n = vals.len();
        for (j, v) in vals.iter().enumerate() {
            wr.serialize((TAU * j as f64 / n as f64, v)).map_err(crate::field::csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Exact solution of `∂_t d = ζ ∂²_θ d`: `c_m(t) = c_m(0) e^{−ζ m² t}`.
pub fn landau_evolve_velocity(d0: &AngularDistribution, zeta: f64, t: f64) -> Result<AngularDistribution> {
    if !(t >= 0.0) || !(zeta >= 0.0) {
        return domain("landau_evolve_velocity needs t ≥ 0 and ζ ≥ 0");
    }
    let c = d0
        .coeffs()
        .into_iter()
        .enumerate()
        .map(|(m, c)| c * (-zeta * (m * m) as f64 * t).exp())
        .collect();
    Ok(AngularDistribution::from_coeffs(c))
}

/// `h(x, y, θ)` on a periodic box `[0, L)²` times the circle; speed `|v0|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseField {
    pub box_size: f64,
    pub nx: usize,
    pub ny: usize,
    pub ntheta: usize,
    pub speed: f64,
    /// Row-major `(ix, iy, iθ)`.
    pub data: Vec<f64>,
}

impl PhaseField {
    pub fn from_fn<F: Fn(Vec2, f64) -> f64>(box_size: f64, nx: usize, ny: usize, ntheta: usize, speed: f64, f: F) -> Result<Self> {
        if !(box_size > 0.0) || nx < 2 || ny < 2 || ntheta < 2 || !(speed > 0.0) {
            return domain("phase field needs positive box, speed and at least two points per axis");
        }
        let mut data = Vec::with_capacity(nx * ny * ntheta);
        for ix in 0..nx {
            for iy in 0..ny {
                let x = Vec2::new(box_size * ix as f64 / nx as f64, box_size * iy as f64 / ny as f64);
                for it in 0..ntheta {
                    data.push(f(x, TAU * it as f64 / ntheta as f64));
                }
            }
        }
        Ok(PhaseField { box_size, nx, ny, ntheta, speed, data })
    }

    fn idx(&self, ix: usize, iy: usize, it: usize) -> usize {
        (ix * self.ny + iy) * self.ntheta + it
    }

    pub fn at(&self, ix: usize, iy: usize, it: usize) -> f64 {
        self.data[self.idx(ix, iy, it)]
    }

    pub fn cell_volume(&self) -> f64 {
        let dx = self.box_size / self.nx as f64;
        let dy = self.box_size / self.ny as f64;
        dx * dy * TAU / self.ntheta as f64
    }

    pub fn mass(&self) -> f64 {
        self.data.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Spatially averaged angular profile on the θ grid.
    pub fn angular_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.ntheta];
        for ix in 0..self.nx {
            for iy in 0..self.ny {
                for (it, o) in out.iter_mut().enumerate() {
                    *o += self.at(ix, iy, it);
                }
            }
        }
        let s = (self.nx * self.ny) as f64;
        out.iter_mut().for_each(|o| *o /= s);
        out
    }

    /// Trigonometric interpolant at an arbitrary point.
    pub fn interpolate(&self, x: Vec2, theta: f64) -> f64 {
        let spec = self.spectrum();
        let (nx, ny, nt) = (self.nx, self.ny, self.ntheta);
        let mut s = Complex64::new(0.0, 0.0);
        for ix in 0..nx {
            let kx = wavenumber(ix, nx);
            for iy in 0..ny {
                let ky = wavenumber(iy, ny);
                for it in 0..nt {
                    let m = wavenumber(it, nt);
                    let ph = TAU * (kx * x.x + ky * x.y) / self.box_size + m * theta;
                    s += spec[self.idx(ix, iy, it)] * Complex64::from_polar(1.0, ph);
                }
            }
        }
        s.re / (nx * ny * nt) as f64
    }

    fn spectrum(&self) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut planner = FftPlanner::new();
        fft_axes(&mut buf, self.nx, self.ny, self.ntheta, &mut planner, false);
        buf
    }

    /// Share of spectral energy in the upper third of any axis.
    pub fn tail_energy_fraction(&self) -> f64 {
        let spec = self.spectrum();
        let (mut tail, mut total) = (0.0, 0.0);
        for ix in 0..self.nx {
            for iy in 0..self.ny {
                for it in 0..self.ntheta {
                    let e = spec[self.idx(ix, iy, it)].norm_sqr();
                    total += e;
                    let hi = wavenumber(ix, self.nx).abs() > self.nx as f64 / 3.0
                        || wavenumber(iy, self.ny).abs() > self.ny as f64 / 3.0
                        || wavenumber(it, self.ntheta).abs() > self.ntheta as f64 / 3.0;
                    if hi {
                        tail += e;
                    }
                }
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }

    /// CSV `x,y,theta,value` of the whole grid.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x", "y", "theta", "value"]).map_err(crate::field::csv_err)?;
        for ix in 0..self.nx {
            for iy in 0..self.ny {
                for it in 0..self.ntheta {
                    wr.serialize((
                        self.box_size * ix as f64 / self.nx as f64,
                        self.box_size * iy as f64 / self.ny as f64,
                        TAU * it as f64 / self.ntheta as f64,
                        self.at(ix, iy, it),
                    ))
                    .map_err(crate::field::csv_err)?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }
}

fn wavenumber(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

/// In-place FFT over all three axes of a row-major `(nx, ny, nt)` array (unnormalised).
fn fft_axes(buf: &mut [Complex64], nx: usize, ny: usize, nt: usize, planner: &mut FftPlanner<f64>, inverse: bool) {
    let plan = |n: usize, p: &mut FftPlanner<f64>| if inverse { p.plan_fft_inverse(n) } else { p.plan_fft_forward(n) };
    let ft = plan(nt, planner);
    for row in buf.chunks_mut(nt) {
        ft.process(row);
    }
    let fy = plan(ny, planner);
    let mut line = vec![Complex64::new(0.0, 0.0); ny.max(nx)];
    for ix in 0..nx {
        for it in 0..nt {
            for iy in 0..ny {
                line[iy] = buf[(ix * ny + iy) * nt + it];
            }
            fy.process(&mut line[..ny]);
            for iy in 0..ny {
                buf[(ix * ny + iy) * nt + it] = line[iy];
            }
        }
    }
    let fx = plan(nx, planner);
    for iy in 0..ny {
        for it in 0..nt {
            for ix in 0..nx {
                line[ix] = buf[(ix * ny + iy) * nt + it];
            }
            fx.process(&mut line[..nx]);
            for ix in 0..nx {
                buf[(ix * ny + iy) * nt + it] = line[ix];
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub steps: usize,
    pub dt: f64,
    pub max_mass_drift: f64,
    pub min_value: f64,
    pub tail_energy_fraction: f64,
    /// Set when the tail-energy fraction exceeds `1e−4`.
    pub aliasing_warning: bool,
}

/// Strang splitting for `(∂_t + v·∇_x) h = ζ ∂²_θ h`: half a diffusion step (exact in θ),
/// a transport step (exact Fourier shift in x), half a diffusion step.
pub fn landau_evolve_phase(f0: &PhaseField, zeta: f64, t: f64, dt: f64) -> Result<(PhaseField, PhaseReport)> {
    if !(t >= 0.0) || !(zeta >= 0.0) || !(dt > 0.0) {
        return domain("landau_evolve_phase needs t ≥ 0, ζ ≥ 0, dt > 0");
    }
    let dx = f0.box_size / f0.nx.max(f0.ny) as f64;
    if dt > dx / f0.speed * (1.0 + 1e-12) {
        return domain(format!("dt = {dt} exceeds the transport bound {}", dx / f0.speed));
    }
    let steps = if t == 0.0 { 0 } else { (t / dt).ceil() as usize };
    let h = if steps == 0 { 0.0 } else { t / steps as f64 };
    let (nx, ny, nt) = (f0.nx, f0.ny, f0.ntheta);
    let mass0 = f0.mass();
    let mut out = f0.clone();
    let mut buf: Vec<Complex64> = f0.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    // everything is kept in spectral form: diffusion and transport are both diagonal there
    fft_axes(&mut buf, nx, ny, nt, &mut planner, false);
    let half: Vec<f64> = (0..nt).map(|it| (-zeta * wavenumber(it, nt).powi(2) * 0.5 * h).exp()).collect();
    let kscale = TAU / f0.box_size;
    let mut drift: f64 = 0.0;
    let total = (nx * ny * nt) as f64;
    for _ in 0..steps {
        // D(h/2) T(h) D(h/2) acting on the θ-grid representation of the transport
        apply_theta_diag(&mut buf, &half, nt);
        transport(&mut buf, nx, ny, nt, kscale * f0.speed * h, &mut planner);
        apply_theta_diag(&mut buf, &half, nt);
        drift = drift.max((buf[0].re / total * f0.box_size * f0.box_size * TAU - mass0).abs());
    }
    fft_axes(&mut buf, nx, ny, nt, &mut planner, true);
    for (o, z) in out.data.iter_mut().zip(&buf) {
        *o = z.re / total;
    }
    let tail = out.tail_energy_fraction();
    let report = PhaseReport {
        steps,
        dt: h,
        max_mass_drift: drift.max((out.mass() - mass0).abs()),
        min_value: out.min_value(),
        tail_energy_fraction: tail,
        aliasing_warning: tail > 1e-4,
    };
    Ok((out, report))
}

fn apply_theta_diag(buf: &mut [Complex64], diag: &[f64], nt: usize) {
    for row in buf.chunks_mut(nt) {
        for (z, d) in row.iter_mut().zip(diag) {
            *z *= d;
        }
    }
}

/// Transport over one step: the x-shift depends on θ, so go to the θ grid, shift, come back.
fn transport(buf: &mut [Complex64], nx: usize, ny: usize, nt: usize, shift: f64, planner: &mut FftPlanner<f64>) {
    let inv = planner.plan_fft_inverse(nt);
    let fwd = planner.plan_fft_forward(nt);
    let dirs: Vec<(f64, f64)> = (0..nt).map(|it| (TAU * it as f64 / nt as f64).sin_cos()).map(|(s, c)| (c, s)).collect();
    for ix in 0..nx {
        let kx = wavenumber(ix, nx);
        for iy in 0..ny {
            let ky = wavenumber(iy, ny);
            let row = &mut buf[(ix * ny + iy) * nt..(ix * ny + iy + 1) * nt];
            if kx == 0.0 && ky == 0.0 {
                continue;
            }
            inv.process(row);
            for (z, (c, s)) in row.iter_mut().zip(&dirs) {
                *z *= Complex64::from_polar(1.0 / nt as f64, -shift * (kx * c + ky * s));
            }
            fwd.process(row);
        }
    }
}

/// Outcome of [`boltzmann_jump_simulate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpSimulation {
    /// Final angles reduced to `[−π, π)`.
    pub angles: Vec<f64>,
    /// Final unwrapped angles.
    pub unwrapped: Vec<f64>,
    pub jumps: Vec<u32>,
    /// Total jump rate `ρ ∫ Γ_ε dθ`.
    pub rate: f64,
    pub distribution: AngularDistribution,
}

impl JumpSimulation {
    pub fn mean_jumps(&self) -> crate::stats::MeanSe {
        let j: Vec<f64> = self.jumps.iter().map(|&k| k as f64).collect();
        crate::stats::mean_se(&j)
    }
}

pub fn wrap_angle(t: f64) -> f64 {
    let w = (t + PI).rem_euclid(TAU) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

/// Jump process on the circle with kernel `ρ Γ_ε`, started at `theta0`.
pub fn boltzmann_jump_simulate(
    table: &ScatteringTable,
    rho: f64,
    t: f64,
    n_samples: usize,
    seed: u64,
    theta0: f64,
    order: usize,
) -> Result<JumpSimulation> {
    if !(rho >= 0.0) || !(t >= 0.0) || n_samples == 0 {
        return domain("boltzmann_jump_simulate needs ρ ≥ 0, t ≥ 0 and at least one sample");
    }
    let rate = rho * table.cross_section_mass()?;
    let runs: Vec<(f64, u32)> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, &[i as u64]);
            let mut theta = theta0;
            let mut k = 0u32;
            if rate > 0.0 {
                let exp = Exp::new(rate).expect("positive rate");
                let mut s = exp.sample(&mut r);
                while s <= t {
                    theta += table.sample_jump(r.random::<f64>());
                    k += 1;
                    s += exp.sample(&mut r);
                }
            }
            (theta, k)
        })
        .collect();
    let unwrapped: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let angles: Vec<f64> = unwrapped.iter().map(|&a| wrap_angle(a)).collect();
    let distribution = AngularDistribution::from_samples(&angles, order);
    Ok(JumpSimulation { angles, unwrapped, jumps: runs.iter().map(|r| r.1).collect(), rate, distribution })
}

/// Mode-`m` decay rates `ρ (Γ̂_ε(0) − Γ̂_ε(m))`, `m = 0..=m_max`.
pub fn mode_decay_rates(table: &ScatteringTable, rho: f64, m_max: u32) -> Vec<f64> {
    (0..=m_max).map(|m| rho * table.gamma_hat_gap(m)).collect()
}

/// Smallest `n` with Poisson(`mean`) tail `P(N > n) < tol`.
pub fn poisson_truncation(mean: f64, tol: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let mut n = 0usize;
    let mut cdf = 0.0;
    loop {
        let lp = -mean + n as f64 * mean.ln() - ln_gamma(n as f64 + 1.0);
        cdf += lp.exp();
        if 1.0 - cdf < tol && n as f64 > mean {
            return n;
        }
        n += 1;
    }
}

/// Duhamel series `e^{−tR} Σ_{n ≤ M} (t ρ Γ̂(m))^n / n!` applied mode by mode, `R = ρ Γ̂(0)`.
pub fn boltzmann_series_eval(
    table: &ScatteringTable,
    rho: f64,
    f0: &AngularDistribution,
    t: f64,
    m_max: usize,
) -> Result<AngularDistribution> {
    if !(rho >= 0.0) || !(t >= 0.0) {
        return domain("boltzmann_series_eval needs ρ ≥ 0 and t ≥ 0");
    }
    if rho == 0.0 || t == 0.0 {
        return Ok(f0.clone());
    }
    let r0 = rho * table.gamma_hat(0);
    let lambda = t * r0;
    // P(N > M_max) for N ~ Poisson(tR)
    let mut head = 0.0;
    for n in 0..=m_max {
        head += (-lambda + n as f64 * lambda.ln() - ln_gamma(n as f64 + 1.0)).exp();
    }
    let tail = (1.0 - head).max(0.0);
    if tail >= 1e-8 {
        return Err(Error::Truncation(format!(
            "Poisson tail {tail:e} beyond {m_max} terms (mean {lambda}); need ≥ {}",
            poisson_truncation(lambda, 1e-8)
        )));
    }
    let c = f0
        .coeffs()
        .into_iter()
        .enumerate()
        .map(|(m, c)| {
            let x = t * rho * table.gamma_hat(m as u32);
            let mut s = 0.0;
            for n in 0..=m_max {
                let l = -lambda + n as f64 * x.abs().ln() - ln_gamma(n as f64 + 1.0);
                let sign = if x < 0.0 && n % 2 == 1 { -1.0 } else { 1.0 };
                s += sign * l.exp();
            }
            if x == 0.0 {
                s = (-lambda).exp();
            }
            c * s
        })
        .collect();
    Ok(AngularDistribution::from_coeffs(c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heat_kernel_coefficients() {
        let d = AngularDistribution::point_mass(0.0, 64);
        let e = landau_evolve_velocity(&d, 0.3, 0.5).unwrap();
        for m in 0..=64i64 {
            let want = (-0.3 * (m * m) as f64 * 0.5).exp() / TAU;
            assert!((e.coeff(m).re - want).abs() < 1e-15);
        }
        let u = landau_evolve_velocity(&d, 1.0, 31.0).unwrap();
        assert!((1..=64).all(|m| u.coeff(m).norm() < 1e-12));
        assert_eq!(landau_evolve_velocity(&d, 0.3, 0.0).unwrap(), d);
    }

    #[test]
    fn cdf_of_uniform_and_grid() {
        let u = AngularDistribution::uniform(8);
        assert!((u.cdf(0.0) - 0.5).abs() < 1e-15);
        let f = AngularDistribution::from_density(|t| 1.0 + t.cos(), 16);
        assert!((f.re[1] - 0.5).abs() < 1e-14 && (f.re[0] - 1.0).abs() < 1e-14);
        let g = f.grid_density(64);
        assert!((g[0] - 2.0).abs() < 1e-13);
    }

    #[test]
    fn transport_only_translates() {
        let l = 2.0;
        let f = |x: Vec2, th: f64| (1.0 + (TAU * x.x / l).cos() * 0.5) * (1.0 + 0.3 * th.cos());
        let f0 = PhaseField::from_fn(l, 16, 8, 8, 1.0, f).unwrap();
        let (ft, rep) = landau_evolve_phase(&f0, 0.0, 0.5, 0.05).unwrap();
        let want = PhaseField::from_fn(l, 16, 8, 8, 1.0, |x, th| f(x - Vec2::from_angle(th) * 0.5, th)).unwrap();
        assert!(ft.max_abs_diff(&want) < 1e-12, "{}", ft.max_abs_diff(&want));
        assert!(rep.max_mass_drift < 1e-12);
    }

    #[test]
    fn poisson_truncation_bound() {
        let n = poisson_truncation(10.0, 1e-8);
        assert!((30..45).contains(&n));
        assert_eq!(poisson_truncation(0.0, 1e-8), 0);
    }

    #[test]
    fn wrapping() {
        assert_eq!(wrap_angle(PI), -PI);
        assert!((wrap_angle(3.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
    }
}
