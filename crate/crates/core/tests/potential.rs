use lorentz_core::quad::{self, Tolerance};
use lorentz_core::{PotentialModel, Profile, Vec2};
use proptest::prelude::*;
use std::f64::consts::PI;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn force_is_minus_gradient(r in 0.05f64..0.98, phi in 0.0f64..6.28, eps in 1e-4f64..1e-1, alpha in 0.05f64..0.5) {
        let m = PotentialModel::default();
        let y = Vec2::from_angle(phi) * (r * eps);
        let h = 1e-7 * eps;
        let v = |p: Vec2| m.rescaled_potential(eps, alpha, p).unwrap();
        let gx = (v(y + Vec2::new(h, 0.0)) - v(y - Vec2::new(h, 0.0))) / (2.0 * h);
        let gy = (v(y + Vec2::new(0.0, h)) - v(y - Vec2::new(0.0, h))) / (2.0 * h);
        let f = m.force(eps, alpha, y).unwrap();
        let rel = ((f.x + gx).hypot(f.y + gy)) / f.norm();
        prop_assert!(rel < 1e-6, "relative error {rel}");
    }

    #[test]
    fn eps_scaling(ux in -1.2f64..1.2, uy in -1.2f64..1.2, eps in 1e-5f64..0.5, alpha in 0.01f64..0.5) {
        for m in [PotentialModel::default(), PotentialModel::new(Profile::Bump { amplitude: 0.8 }).unwrap()] {
            let u = Vec2::new(ux, uy);
            let got = m.rescaled_potential(eps, alpha, u * eps).unwrap();
            let want = eps.powf(alpha) * m.value(u.norm());
            prop_assert!((got - want).abs() <= 1e-14 * eps.powf(alpha), "{got} vs {want}");
        }
    }

    #[test]
    fn force_is_odd(x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let m = PotentialModel::default();
        let p = Vec2::new(x, y) * 1e-2;
        let a = m.force(1e-2, 0.3, p).unwrap();
        let b = m.force(1e-2, 0.3, -p).unwrap();
        prop_assert_eq!(a.x, -b.x);
        prop_assert_eq!(a.y, -b.y);
    }
}

#[test]
fn spec_point_values() {
    let m = PotentialModel::default();
    let (eps, alpha): (f64, f64) = (1e-3, 0.3);
    let k = eps.powf(alpha);
    assert_eq!(m.rescaled_potential(eps, alpha, Vec2::new(2.0 * eps, 0.0)).unwrap(), 0.0);
    assert!((m.rescaled_potential(eps, alpha, Vec2::ZERO).unwrap() - k).abs() < 1e-15);
    assert!((m.rescaled_potential(eps, alpha, Vec2::new(0.0, 0.5 * eps)).unwrap() - 0.5625 * k).abs() < 1e-15);
    let f = m.force(eps, alpha, Vec2::new(0.5 * eps, 0.0)).unwrap();
    assert!((f.x / (1.5 * eps.powf(alpha - 1.0)) - 1.0).abs() < 1e-13);
    assert_eq!(f.y, 0.0);
    assert_eq!(m.force(eps, alpha, Vec2::new(eps, 0.0)).unwrap(), Vec2::ZERO);
    assert_eq!(m.force(eps, alpha, Vec2::ZERO).unwrap(), Vec2::ZERO);
    assert!(m.rescaled_potential(eps, alpha, Vec2::new(f64::NAN, 0.0)).is_err());
}

#[test]
fn hankel_origin_value() {
    let m = PotentialModel::default();
    assert!((m.hankel_transform(0.0).unwrap() - PI / 3.0).abs() < 1e-12);
}

fn plancherel(m: &PotentialModel, kmax: f64) -> (f64, f64) {
    let breaks: Vec<f64> = (0..=((kmax / PI) as usize)).map(|j| j as f64 * PI).collect();
    let lhs = quad::integrate_breaks(
        |k| {
            let v = m.hankel_transform(k).unwrap();
            v * v * k
        },
        &breaks,
        Tolerance::new(1e-14, 1e-12),
        20_000,
    )
    .unwrap()
    .value
        / (2.0 * PI);
    let rhs = 2.0 * PI * quad::integrate(|r| m.value(r).powi(2) * r, 0.0, 1.0, Tolerance::new(1e-15, 1e-14), 2000).unwrap().value;
    (lhs, rhs)
}

#[test]
fn plancherel_default_profile() {
    let m = PotentialModel::default();
    // |V̂|² k ≲ 512π k^{-6}: the tail beyond 400 is below 1e-12
    let (lhs, rhs) = plancherel(&m, 400.0);
    assert!((rhs - 0.2 * PI).abs() < 1e-14);
    assert!((lhs / rhs - 1.0).abs() < 1e-8, "{lhs} vs {rhs}");
}

#[test]
fn plancherel_smooth_bump() {
    let m = PotentialModel::new(Profile::Bump { amplitude: 1.0 }).unwrap();
    let (lhs, rhs) = plancherel(&m, 120.0);
    assert!((lhs / rhs - 1.0).abs() < 1e-8, "{lhs} vs {rhs}");
}

#[test]
fn hankel_riemann_lebesgue() {
    let m = PotentialModel::new(Profile::CosineSquared { amplitude: 1.0 }).unwrap();
    let a = m.hankel_transform(10.0).unwrap().abs();
    let b = m.hankel_transform(100.0).unwrap().abs();
    let c = m.hankel_transform(1000.0).unwrap().abs();
    assert!(b < a && c < b && c < 1e-4, "{a} {b} {c}");
}

#[test]
fn sup_bounds_values() {
    let (b, bp) = PotentialModel::default().sup_bounds();
    assert!((b - 1.0).abs() < 1e-12);
    assert!((bp - 8.0 / (3.0 * 3f64.sqrt())).abs() < 1e-6);
    assert_eq!(PotentialModel::zero().sup_bounds(), (0.0, 0.0));
}
