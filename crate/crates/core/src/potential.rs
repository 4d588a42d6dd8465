//! Radial obstacle potentials supported in the unit disk, their ε-rescaling,
//! forces, sup bounds and 2D radial Fourier transform.

use crate::error::{domain, Result};
use crate::geom::Vec2;
use crate::quad::{self, Tolerance};
use crate::special::bessel_j;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Radial profile `V(r)` on `[0, 1)`, zero for `r ≥ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// `A (1 − r²)^n`, n ≥ 2.
    Polynomial { amplitude: f64, power: u32 },
    /// `A cos²(π r / 2)`.
    CosineSquared { amplitude: f64 },
    /// `A exp(1 − 1/(1 − r²))`, smooth to all orders at the edge.
    Bump { amplitude: f64 },
    Zero,
}

impl Default for Profile {
    fn default() -> Self {
        Profile::Polynomial { amplitude: 1.0, power: 2 }
    }
}

/// Grid size used by [`PotentialModel::sup_bounds`] at refinement level 0.
pub const SUP_GRID_POINTS: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialModel {
    pub profile: Profile,
}

impl Default for PotentialModel {
    fn default() -> Self {
        PotentialModel { profile: Profile::default() }
    }
}

impl PotentialModel {
    pub fn new(profile: Profile) -> Result<Self> {
        match profile {
            Profile::Polynomial { amplitude, power } => {
                if power < 2 {
                    return domain("polynomial profile needs power ≥ 2 for a continuous derivative");
                }
                check_amp(amplitude)?;
            }
            Profile::CosineSquared { amplitude } | Profile::Bump { amplitude } => check_amp(amplitude)?,
            Profile::Zero => {}
        }
        Ok(PotentialModel { profile })
    }

    /// Default profile `(1 − r²)²` scaled by `amplitude`.
    pub fn default_with_amplitude(amplitude: f64) -> Self {
        PotentialModel { profile: Profile::Polynomial { amplitude, power: 2 } }
    }

    pub fn zero() -> Self {
        PotentialModel { profile: Profile::Zero }
    }

    pub fn amplitude(&self) -> f64 {
        match self.profile {
            Profile::Zero => 0.0,
            Profile::Polynomial { amplitude, .. }
            | Profile::CosineSquared { amplitude }
            | Profile::Bump { amplitude } => amplitude,
        }
    }

    /// Same profile with a different amplitude.
    pub fn with_amplitude(&self, amplitude: f64) -> Self {
        let profile = match self.profile {
            Profile::Zero => Profile::Zero,
            Profile::Polynomial { power, .. } => Profile::Polynomial { amplitude, power },
            Profile::CosineSquared { .. } => Profile::CosineSquared { amplitude },
            Profile::Bump { .. } => Profile::Bump { amplitude },
        };
        PotentialModel { profile }
    }

    pub fn support_radius(&self) -> f64 {
        1.0
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude() == 0.0
    }

    /// `V(r)`.
    pub fn value(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= 1.0 {
            return 0.0;
        }
        match self.profile {
            Profile::Polynomial { amplitude, power } => amplitude * (1.0 - r * r).powi(power as i32),
            Profile::CosineSquared { amplitude } => amplitude * (0.5 * PI * r).cos().powi(2),
            Profile::Bump { amplitude } => amplitude * (1.0 - 1.0 / (1.0 - r * r)).exp(),
            Profile::Zero => 0.0,
        }
    }

    /// `V′(r)`.
    pub fn derivative(&self, r: f64) -> f64 {
        let s = r.signum();
        let r = r.abs();
        if r >= 1.0 {
            return 0.0;
        }
        s * r * self.radial_factor(r * r)
    }

    /// `V′(u)/u` as a function of `u²` (sqrt-free for polynomial profiles); zero for `u ≥ 1`.
    #[inline]
    pub fn radial_factor(&self, u2: f64) -> f64 {
        if u2 >= 1.0 {
            return 0.0;
        }
        match self.profile {
            Profile::Polynomial { amplitude, power } => {
                -2.0 * power as f64 * amplitude * (1.0 - u2).powi(power as i32 - 1)
            }
            Profile::CosineSquared { amplitude } => {
                let u = u2.sqrt();
                if u < 1e-8 {
                    -0.5 * amplitude * PI * PI
                } else {
                    -0.5 * amplitude * PI * (PI * u).sin() / u
                }
            }
            Profile::Bump { amplitude } => {
                let w = 1.0 - u2;
                -2.0 * amplitude * (1.0 - 1.0 / w).exp() / (w * w)
            }
            Profile::Zero => 0.0,
        }
    }

    /// `V(u)` as a function of `u²`.
    #[inline]
    pub fn value_sq(&self, u2: f64) -> f64 {
        if u2 >= 1.0 {
            return 0.0;
        }
        match self.profile {
            Profile::Polynomial { amplitude, power } => amplitude * (1.0 - u2).powi(power as i32),
            _ => self.value(u2.sqrt()),
        }
    }

    /// `ε^α V(|y|/ε)`.
    pub fn rescaled_potential(&self, eps: f64, alpha: f64, y: Vec2) -> Result<f64> {
        check_scale(eps, alpha, y)?;
        Ok(eps.powf(alpha) * self.value_sq(y.norm2() / (eps * eps)))
    }

    /// `−∇ ε^α V(|y|/ε) = −ε^{α−2} (V′(u)/u) y`.
    pub fn force(&self, eps: f64, alpha: f64, y: Vec2) -> Result<Vec2> {
        check_scale(eps, alpha, y)?;
        let u2 = y.norm2() / (eps * eps);
        Ok(y * (-eps.powf(alpha - 2.0) * self.radial_factor(u2)))
    }

    /// Grid suprema `(sup|V|, sup|V′|)` on `N·2^level` equispaced points of `[0, 1]`.
    /// Grids are nested, so the values never decrease with `level`.
    pub fn sup_bounds_at_level(&self, level: u32) -> (f64, f64) {
        let n = SUP_GRID_POINTS << level;
        let mut b: f64 = 0.0;
        let mut bp: f64 = 0.0;
        for i in 0..=n {
            let r = i as f64 / n as f64;
            b = b.max(self.value(r).abs());
            bp = bp.max(self.derivative(r).abs());
        }
        (b, bp)
    }

    /// `(B, B′)`: grid suprema at level 0, replaced by closed forms when known.
    pub fn sup_bounds(&self) -> (f64, f64) {
        let (gb, gbp) = self.sup_bounds_at_level(0);
        match self.profile {
            Profile::Polynomial { amplitude, power } => {
                // max of 2n r (1−r²)^{n−1} at r² = 1/(2n−1)
                let n = power as f64;
                let r2 = 1.0 / (2.0 * n - 1.0);
                let bp = 2.0 * n * r2.sqrt() * (1.0 - r2).powf(n - 1.0);
                (amplitude.abs().max(gb), (amplitude.abs() * bp).max(gbp))
            }
            Profile::CosineSquared { amplitude } => (amplitude.abs().max(gb), (0.5 * PI * amplitude.abs()).max(gbp)),
            _ => (gb, gbp),
        }
    }

    /// `V̂(k) = 2π ∫₀¹ V(r) J₀(kr) r dr`.
    pub fn hankel_transform(&self, k: f64) -> Result<f64> {
        if !k.is_finite() {
            return domain("hankel_transform: non-finite k");
        }
        if self.is_zero() {
            return Ok(0.0);
        }
        let k = k.abs();
        let panels = ((k / PI).ceil() as usize).max(1);
        let breaks: Vec<f64> = (0..=panels).map(|i| i as f64 / panels as f64).collect();
        let scale = self.amplitude().abs().max(1e-300);
        let r = quad::integrate_breaks(
            |r| self.value(r) * bessel_j(0, k * r) * r,
            &breaks,
            // roundoff floor of the oscillating panel sum scales like k^{-1/2}
            Tolerance::new(4e-15 * scale / (1.0 + k).sqrt(), 1e-10),
            20_000 + 64 * panels,
        )?;
        Ok(2.0 * PI * r.value)
    }
}

fn check_amp(a: f64) -> Result<()> {
    if !a.is_finite() {
        return domain("non-finite amplitude");
    }
    Ok(())
}

fn check_scale(eps: f64, alpha: f64, y: Vec2) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return domain(format!("eps must be positive and finite, got {eps}"));
    }
    if !(alpha > 0.0 && alpha <= 0.5) {
        return domain(format!("alpha must lie in (0, 1/2], got {alpha}"));
    }
    if !y.is_finite() {
        return domain("non-finite position");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_profiles() -> Vec<PotentialModel> {
        vec![
            PotentialModel::default(),
            PotentialModel::new(Profile::Polynomial { amplitude: 0.7, power: 3 }).unwrap(),
            PotentialModel::new(Profile::CosineSquared { amplitude: 1.0 }).unwrap(),
            PotentialModel::new(Profile::Bump { amplitude: -0.4 }).unwrap(),
        ]
    }

    #[test]
    fn default_profile_values() {
        let m = PotentialModel::default();
        let (eps, alpha): (f64, f64) = (1e-3, 0.3);
        let ka = eps.powf(alpha);
        assert_eq!(m.rescaled_potential(eps, alpha, Vec2::ZERO).unwrap(), ka);
        let half = m.rescaled_potential(eps, alpha, Vec2::new(0.5 * eps, 0.0)).unwrap();
        assert!((half - 0.5625 * ka).abs() < 1e-15 * ka);
        assert_eq!(m.rescaled_potential(eps, alpha, Vec2::new(0.0, 2.0 * eps)).unwrap(), 0.0);
    }

    #[test]
    fn default_force_at_half_radius() {
        let m = PotentialModel::default();
        let (eps, alpha): (f64, f64) = (1e-2, 0.25);
        let f = m.force(eps, alpha, Vec2::new(0.5 * eps, 0.0)).unwrap();
        let want = 1.5 * eps.powf(alpha - 1.0);
        assert!((f.x - want).abs() < 1e-12 * want && f.y == 0.0);
        assert_eq!(m.force(eps, alpha, Vec2::new(eps, 0.0)).unwrap(), Vec2::ZERO);
        assert_eq!(m.force(eps, alpha, Vec2::ZERO).unwrap(), Vec2::ZERO);
        assert!((m.derivative(0.5) + 1.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        let m = PotentialModel::default();
        assert!(m.rescaled_potential(1e-3, 0.3, Vec2::new(f64::NAN, 0.0)).is_err());
        assert!(m.force(-1.0, 0.3, Vec2::ZERO).is_err());
        assert!(m.force(1e-3, 0.7, Vec2::ZERO).is_err());
        assert!(PotentialModel::new(Profile::Polynomial { amplitude: 1.0, power: 1 }).is_err());
    }

    #[test]
    fn compact_support_and_continuity() {
        for m in all_profiles() {
            assert_eq!(m.value(1.0), 0.0);
            assert_eq!(m.derivative(1.0), 0.0);
            assert!(m.value(1.0 - 1e-9).abs() < 1e-8);
            assert!(m.derivative(1.0 - 1e-9).abs() < 1e-7);
        }
    }

    #[test]
    fn sup_bounds_default() {
        let m = PotentialModel::default();
        let (b, bp) = m.sup_bounds();
        assert_eq!(b, 1.0);
        assert!((bp - 8.0 / (3.0 * 3f64.sqrt())).abs() < 1e-14);
        let (gb, gbp) = m.sup_bounds_at_level(0);
        assert!(gb <= b && (bp - gbp) < 1e-9);
        assert_eq!(PotentialModel::zero().sup_bounds(), (0.0, 0.0));
    }

    #[test]
    fn sup_bounds_monotone_under_refinement() {
        for m in all_profiles() {
            let (b0, p0) = m.sup_bounds_at_level(0);
            let (b1, p1) = m.sup_bounds_at_level(1);
            assert!(b1 >= b0 && p1 >= p0);
        }
    }

    #[test]
    fn hankel_at_zero_default() {
        let v = PotentialModel::default().hankel_transform(0.0).unwrap();
        assert!((v - PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn hankel_closed_form_polynomial() {
        // 2π ∫₀¹ (1−r²)^n J₀(kr) r dr = 2π 2^n n! J_{n+1}(k)/k^{n+1}
        for (n, fact) in [(2u32, 2.0), (3, 6.0)] {
            let m = PotentialModel::new(Profile::Polynomial { amplitude: 1.0, power: n }).unwrap();
            for k in [0.5, 3.0, 17.0, 60.0, 211.0] {
                let want = 2.0 * PI * 2f64.powi(n as i32) * fact * bessel_j(n + 1, k) / k.powi(n as i32 + 1);
                let got = m.hankel_transform(k).unwrap();
                assert!((got - want).abs() < 1e-10 * want.abs() + 1e-15, "n={n} k={k}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn hankel_decays() {
        let m = PotentialModel::default();
        let a = m.hankel_transform(50.0).unwrap().abs();
        let b = m.hankel_transform(500.0).unwrap().abs();
        assert!(a < 1e-3 && b < 1e-5);
    }
}
