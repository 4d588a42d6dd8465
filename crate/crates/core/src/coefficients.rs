//! The velocity diffusion constant ζ by several routes, and the generator identity.
//!
//! * `zeta_quadrature`: `(ρ/2) ∫_{−1}^{1} (g(b)/2)² db` with `g` the leading deflection.
//! * `zeta_limit`: `ε^{−2α} (ρ/2) ∫ θ_ε(b)² db` (b in units of ε: the absolute
//!   impact parameter is `εb`, and the `ε` of `d(εb)` cancels against the `ε^{−1}` of
//!   the obstacle intensity `ρ ε^{−2α−1}`), extrapolated to `κ = ε^α → 0`.
//! * `zeta_fourier`: `π ρ |v0|^{−1} ∫₀^∞ k² V̂(k)² dk`.
//! * `zeta_trajectory_mc`: `Var[angle(t)] = 2ζt` over simulated trajectories.

use crate::dynamics::SimulationParams;
use crate::ensemble::{self, EnsembleSpec, McZeta};
use crate::error::{domain, Error, Result};
use crate::potential::PotentialModel;
use crate::quad::{self, Tolerance};
use crate::scattering::{leading_angle, ScatteringTable};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// `zeta_quadrature` for the default potential at `ρ = 1`, frozen from the Gauss–Legendre oracle.
pub const ZETA_QUADRATURE_DEFAULT: f64 = 0.361_199_294_532_627_9;

/// Measured `zeta_fourier / zeta_quadrature`, the same for every potential.
pub const FOURIER_TO_QUADRATURE: f64 = 78.956_835_208_714_86;

/// Measured `zeta_limit / zeta_quadrature`.
pub const LIMIT_TO_QUADRATURE: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    QuadratureZeta,
    LimitDefn,
    Fourier,
    TrajectoryMc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionEstimate {
    pub value: f64,
    pub method: Method,
    pub eps_sequence: Vec<f64>,
    pub uncertainty: f64,
    pub alpha: Option<f64>,
}

impl DiffusionEstimate {
    fn exact(method: Method, value: f64, uncertainty: f64) -> Self {
        DiffusionEstimate { value, method, eps_sequence: Vec::new(), uncertainty, alpha: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.value >= 0.0) || !(self.uncertainty >= 0.0) {
            return Err(Error::Invariant("estimate and uncertainty must be non-negative".into()));
        }
        let free = matches!(self.method, Method::QuadratureZeta | Method::Fourier);
        if free && (self.alpha.is_some() || !self.eps_sequence.is_empty()) {
            return Err(Error::Invariant("ε-free methods carry no α or ε sequence".into()));
        }
        Ok(())
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return domain(format!("rho must be non-negative, got {rho}"));
    }
    Ok(())
}

/// Outer integrand `(g(b)/2)²`.
fn half_angle_sq(m: &PotentialModel, b: f64) -> f64 {
    let g = leading_angle(m, b).unwrap_or(f64::NAN);
    0.25 * g * g
}

/// Inner integral with the lower limit taken literally as `b` instead of `|b|`.
pub fn inner_literal(m: &PotentialModel, b: f64) -> Result<f64> {
    if b >= 0.0 {
        return Ok(0.5 * leading_angle(m, b)?);
    }
    // u ∈ (b, |b|) maps to |b|/|u| ≥ 1, outside the support
    let extra = quad::integrate(
        |u: f64| if u == 0.0 { 0.0 } else { m.derivative((b.abs() / u).abs()) * (b / u) / (1.0 - u * u).sqrt() },
        b,
        b.abs(),
        Tolerance::new(1e-14, 1e-12),
        2000,
    )?;
    Ok(0.5 * leading_angle(m, b)? + extra.value)
}

pub fn zeta_quadrature(m: &PotentialModel, rho: f64) -> Result<DiffusionEstimate> {
    check_rho(rho)?;
    if rho == 0.0 || m.is_zero() {
        return Ok(DiffusionEstimate::exact(Method::QuadratureZeta, 0.0, 0.0));
    }
    let r = quad::integrate_breaks(|b| half_angle_sq(m, b), &[-1.0, 0.0, 1.0], Tolerance::new(1e-10, 1e-12), 4000)?;
    Ok(DiffusionEstimate::exact(Method::QuadratureZeta, 0.5 * rho * r.value, 0.5 * rho * r.error))
}

/// Same double integral by fixed-order Gauss–Legendre (`n` points per axis), with the
/// inner variable `u = sin ψ`.
pub fn zeta_quadrature_gauss_legendre(m: &PotentialModel, rho: f64, n: usize) -> f64 {
    let (x, w) = quad::gauss_legendre(n);
    let inner = |b: f64| -> f64 {
        let ab = b.abs();
        if ab == 0.0 || ab >= 1.0 {
            return 0.0;
        }
        let lo = ab.asin();
        let half = 0.5 * (PI / 2.0 - lo);
        let mid = 0.5 * (PI / 2.0 + lo);
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            let u = (mid + half * xi).sin();
            s += wi * m.derivative(ab / u) * (b / u);
        }
        s * half
    };
    let mut s = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let v = inner(*xi);
        s += wi * v * v;
    }
    0.5 * rho * s
}

/// `ε` with `ε^α = κ`.
pub fn eps_for_kappa(kappa: f64, alpha: f64) -> f64 {
    kappa.powf(1.0 / alpha)
}

/// `ε^{−2α} (ρ/2) ∫ θ_ε² db` from a scattering table.
pub fn zeta_eps(table: &ScatteringTable, rho: f64) -> f64 {
    0.5 * rho * table.b_integral(|t| t * t)
}

/// Per-ε values behind a [`zeta_limit`] estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitSequence {
    pub eps: Vec<f64>,
    pub kappa: Vec<f64>,
    pub zeta_eps: Vec<f64>,
    /// Quadratic-in-κ extrapolation through the three smallest ε.
    pub quadratic: f64,
    /// Linear-in-κ extrapolation through the two smallest ε.
    pub linear: f64,
}

pub fn zeta_limit(m: &PotentialModel, rho: f64, alpha: f64, eps_list: &[f64]) -> Result<DiffusionEstimate> {
    Ok(zeta_limit_detailed(m, rho, alpha, eps_list)?.0)
}

pub fn zeta_limit_detailed(m: &PotentialModel, rho: f64, alpha: f64, eps_list: &[f64]) -> Result<(DiffusionEstimate, LimitSequence)> {
    check_rho(rho)?;
    if eps_list.len() < 3 {
        return domain("zeta_limit needs at least three ε values");
    }
    if !eps_list.windows(2).all(|w| w[1] < w[0]) || eps_list.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return domain("eps_list must be strictly decreasing in (0, 1)");
    }
    let mut z = Vec::new();
    for &e in eps_list {
        let t = ScatteringTable::new(m, e, alpha)?;
        z.push(zeta_eps(&t, rho));
    }
    let kappa: Vec<f64> = eps_list.iter().map(|e| e.powf(alpha)).collect();
    let n = z.len();
    let (k, y) = (&kappa[n - 3..], &z[n - 3..]);
    // Lagrange interpolation at κ = 0
    let l0 = k[1] * k[2] / ((k[0] - k[1]) * (k[0] - k[2]));
    let l1 = k[0] * k[2] / ((k[1] - k[0]) * (k[1] - k[2]));
    let l2 = k[0] * k[1] / ((k[2] - k[0]) * (k[2] - k[1]));
    let quadratic = l0 * y[0] + l1 * y[1] + l2 * y[2];
    let linear = (k[1] * y[2] - k[2] * y[1]) / (k[1] - k[2]);
    let seq = LimitSequence { eps: eps_list.to_vec(), kappa: kappa.clone(), zeta_eps: z.clone(), quadratic, linear };
    if m.is_zero() || rho == 0.0 {
        let est = DiffusionEstimate { value: 0.0, method: Method::LimitDefn, eps_sequence: eps_list.to_vec(), uncertainty: 0.0, alpha: Some(alpha) };
        return Ok((est, seq));
    }
    // residuals |ζ_ε − ζ_0| must shrink along the sequence
    let res: Vec<f64> = z.iter().map(|v| (v - quadratic).abs()).collect();
    if !res.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-14) {
        return Err(Error::Extrapolation(format!("residuals do not shrink: {res:?}")));
    }
    let est = DiffusionEstimate {
        value: quadratic,
        method: Method::LimitDefn,
        eps_sequence: eps_list.to_vec(),
        uncertainty: (quadratic - linear).abs(),
        alpha: Some(alpha),
    };
    Ok((est, seq))
}

/// `∫₀^∞ k² V̂(k)² dk`.
pub fn fourier_moment(m: &PotentialModel) -> Result<f64> {
    if m.is_zero() {
        return Ok(0.0);
    }
    let a2 = m.amplitude().powi(2);
    let r = quad::integrate_algebraic_tail(
        |k| {
            let v = m.hankel_transform(k).unwrap_or(f64::NAN);
            k * k * v * v
        },
        PI,
        Tolerance::new(1e-10 * a2, 1e-10),
        400,
    )?;
    Ok(r.value)
}

pub fn zeta_fourier(m: &PotentialModel, rho: f64, v0_norm: f64) -> Result<DiffusionEstimate> {
    check_rho(rho)?;
    if !(v0_norm > 0.0) {
        return domain("v0_norm must be positive");
    }
    let s = fourier_moment(m)?;
    let c = PI * rho / v0_norm;
    Ok(DiffusionEstimate::exact(Method::Fourier, c * s, c * 1e-10 * m.amplitude().powi(2)))
}

/// Trajectory Monte Carlo estimate, one cell per `(eps, alpha)` of the spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub estimate: DiffusionEstimate,
    pub detail: McZeta,
}

pub fn zeta_trajectory_mc(params: &SimulationParams, t_list: &[f64], n_traj: usize, master_seed: u64) -> Result<McReport> {
    let mut spec = EnsembleSpec::new(*params, n_traj, vec![params.eps], vec![params.alpha], t_list.to_vec(), master_seed);
    spec.base.horizon = spec.horizon();
    let cells = ensemble::run_sweep(&spec, None)?;
    mc_report(&cells[0], t_list)
}

pub fn mc_report(cell: &ensemble::CellStats, t_list: &[f64]) -> Result<McReport> {
    let d = ensemble::mc_zeta(cell, t_list)?;
    Ok(McReport {
        estimate: DiffusionEstimate {
            value: d.value.max(0.0),
            method: Method::TrajectoryMc,
            eps_sequence: vec![cell.eps],
            uncertainty: d.uncertainty,
            alpha: Some(cell.alpha),
        },
        detail: d,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub m: u32,
    /// `(L f)(p)` at the evaluation direction.
    pub lf: f64,
    /// `f″(θ)` there.
    pub f2: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorReport {
    /// `∫₀^∞ k² V̂² dk`.
    pub moment: f64,
    /// δ-reduced constant `2πρ ∫ k² V̂² dk`: `L f = c f″` at `|p| = 1`.
    pub reduced_constant: f64,
    pub harmonics: Vec<Harmonic>,
    /// Largest relative spread of `Lf/f″` over harmonics.
    pub harmonic_spread: f64,
    /// Largest relative spread of `Lf/f″` over directions of `p`.
    pub rotation_spread: f64,
    /// `L 1` (must vanish).
    pub constant_image: f64,
    pub zeta_eff: Option<f64>,
    pub ratio_to_zeta_eff: Option<f64>,
}

/// Apply `L = ∇_p·D(p)∇_p` with `D(p) = (2πρS/|p|) ê⊥ê⊥` (the δ-reduced form of
/// `πρ ∫ d²k (k⊗k) δ(k·p) V̂²`) to `F(p)` by nested central differences with one
/// Richardson step.
fn apply_generator<F: Fn(f64, f64) -> f64>(c: f64, f: &F, p: (f64, f64), h: f64) -> f64 {
    let once = |h: f64| {
        let flux = |x: f64, y: f64| -> (f64, f64) {
            let gx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
            let gy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
            let r = (x * x + y * y).sqrt();
            let (ex, ey) = (-y / r, x / r);
            let proj = ex * gx + ey * gy;
            (c / r * proj * ex, c / r * proj * ey)
        };
        let (x, y) = p;
        (flux(x + h, y).0 - flux(x - h, y).0) / (2.0 * h) + (flux(x, y + h).1 - flux(x, y - h).1) / (2.0 * h)
    };
    (4.0 * once(0.5 * h) - once(h)) / 3.0
}

pub fn generator_check(m: &PotentialModel, rho: f64, harmonics: &[u32], zeta_eff: Option<f64>) -> Result<GeneratorReport> {
    check_rho(rho)?;
    let s = fourier_moment(m)?;
    let c = 2.0 * PI * rho * s;
    let h = 2e-3;
    let mut hs = Vec::new();
    let mut rot: f64 = 0.0;
    for &k in harmonics {
        let mk = k as f64;
        let mut ratios = Vec::new();
        for j in 0..8 {
            let phi = 0.3 + j as f64 * PI / 4.0;
            // f(θ) = cos(m(θ − φ)) evaluated at direction φ: f″ = −m²
            let f = |x: f64, y: f64| (mk * (y.atan2(x) - phi)).cos();
            let lf = apply_generator(c, &f, (phi.cos(), phi.sin()), h);
            ratios.push(lf / -(mk * mk));
        }
        let r0 = ratios[0];
        if r0 != 0.0 {
            rot = rot.max(ratios.iter().map(|r| ((r - r0) / r0).abs()).fold(0.0, f64::max));
        }
        let lf = r0 * -(mk * mk);
        hs.push(Harmonic { m: k, lf, f2: -(mk * mk), ratio: r0 });
    }
    let base = hs.first().map(|h| h.ratio).unwrap_or(0.0);
    let spread = if base != 0.0 { hs.iter().map(|h| ((h.ratio - base) / base).abs()).fold(0.0, f64::max) } else { 0.0 };
    let one = |_: f64, _: f64| 1.0;
    let constant_image = apply_generator(c, &one, (1.0, 0.0), h);
    let ratio_to_zeta_eff = zeta_eff.and_then(|z| (z > 0.0).then(|| base / z));
    Ok(GeneratorReport {
        moment: s,
        reduced_constant: c,
        harmonics: hs,
        harmonic_spread: spread,
        rotation_spread: rot,
        constant_image,
        zeta_eff,
        ratio_to_zeta_eff,
    })
}

/// `{method, value, uncertainty, ratio_to_reference}` entry of the `zeta` report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZetaReportEntry {
    pub method: Method,
    pub value: f64,
    pub uncertainty: f64,
    pub ratio_to_reference: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub eps_sequence: Vec<f64>,
}

impl ZetaReportEntry {
    pub fn new(e: &DiffusionEstimate, reference: f64) -> Self {
        ZetaReportEntry {
            method: e.method,
            value: e.value,
            uncertainty: e.uncertainty,
            ratio_to_reference: (reference > 0.0).then(|| e.value / reference),
            alpha: e.alpha,
            eps_sequence: e.eps_sequence.clone(),
        }
    }
}
