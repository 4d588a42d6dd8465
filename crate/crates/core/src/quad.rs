//! Numerical quadrature: adaptive Gauss–Kronrod, fixed Gauss–Legendre and
//! Clenshaw–Curtis rules.

use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Stopping rule: accept when the error estimate is below `max(abs, rel·|I|)`.
#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// One 15-point Kronrod panel; returns (K15, |K15 - G7|).
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// Globally adaptive Gauss–Kronrod (7/15) integration over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: Tolerance,
    max_panels: usize,
) -> Result<Integral> {
    integrate_breaks(f, &[a, b], tol, max_panels)
}

/// Adaptive integration starting from the partition given by `breaks`
/// (sorted, at least two entries).
pub fn integrate_breaks<F: FnMut(f64) -> f64>(
    mut f: F,
    breaks: &[f64],
    tol: Tolerance,
    max_panels: usize,
) -> Result<Integral> {
    if breaks.len() < 2 {
        return Err(Error::Domain("need at least two break points".into()));
    }
    if breaks.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite integration limits".into()));
    }
    let mut heap = BinaryHeap::new();
    let mut value = 0.0;
    let mut error = 0.0;
    let mut evals = 0;
    for w in breaks.windows(2) {
        let (v, e) = gk15(&mut f, w[0], w[1]);
        evals += 15;
        value += v;
        error += e;
        heap.push(Panel { a: w[0], b: w[1], value: v, error: e });
    }
    loop {
        if !value.is_finite() {
            return Err(Error::Quadrature("integrand produced a non-finite value".into()));
        }
        if error <= tol.abs.max(tol.rel * value.abs()) {
            return Ok(Integral { value, error, evaluations: evals });
        }
        if heap.len() >= max_panels {
            return Err(Error::Quadrature(format!(
                "{} panels exhausted, estimate {value:e} with error {error:e}",
                heap.len()
            )));
        }
        let p = heap.pop().expect("non-empty");
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            return Err(Error::Quadrature(format!(
                "panel width underflow near {m:e}, error {error:e}"
            )));
        }
        let (v1, e1) = gk15(&mut f, p.a, m);
        let (v2, e2) = gk15(&mut f, m, p.b);
        evals += 30;
        value += v1 + v2 - p.value;
        error += e1 + e2 - p.error;
        heap.push(Panel { a: p.a, b: m, value: v1, error: e1 });
        heap.push(Panel { a: m, b: p.b, value: v2, error: e2 });
        if heap.len() % 64 == 0 {
            // re-sum to wash out cancellation in the running totals
            value = heap.iter().map(|p| p.value).sum();
            error = heap.iter().map(|p| p.error).sum();
        }
    }
}

/// `∫₀^∞ f` for integrands decaying like a power law times a bounded oscillation of
/// period about `period`. Integrates blocks of eight periods and closes with a power-law
/// tail fitted to the last two blocks; the tail estimate is included in `value`.
pub fn integrate_algebraic_tail<F: FnMut(f64) -> f64>(
    mut f: F,
    period: f64,
    tol: Tolerance,
    max_blocks: usize,
) -> Result<Integral> {
    let w = 8.0 * period;
    let inner = Tolerance::new(tol.abs * 1e-3, tol.rel * 1e-3);
    let mut blocks: Vec<f64> = Vec::new();
    let mut total = 0.0;
    let mut error = 0.0;
    let mut evals = 0;
    let mut last_tail: Option<f64> = None;
    for j in 0..max_blocks {
        let (a, b) = (w * j as f64, w * (j + 1) as f64);
        let sub: Vec<f64> = (0..=8).map(|i| a + period * i as f64).collect();
        let r = integrate_breaks(&mut f, &sub, inner, 4000)?;
        evals += r.evaluations;
        total += r.value;
        error += r.error;
        blocks.push(r.value);
        if j < 3 {
            continue;
        }
        let tail = match power_tail(blocks[j - 1], blocks[j], a - w, a, b) {
            Some(t) => t,
            None => continue,
        };
        let target = tol.abs.max(tol.rel * total.abs());
        let spread = last_tail.map_or(f64::INFINITY, |t: f64| (t - tail).abs());
        last_tail = Some(tail);
        if tail.abs() <= 50.0 * target && spread <= target {
            return Ok(Integral { value: total + tail, error: error + 0.05 * tail.abs(), evaluations: evals });
        }
    }
    Err(Error::Quadrature(format!("tail did not settle within {max_blocks} blocks, partial {total:e}")))
}

/// Tail `∫_{kc}^∞ c k^{−q}` from two adjacent block integrals over `[ka,kb]`, `[kb,kc]`.
fn power_tail(i1: f64, i2: f64, ka: f64, kb: f64, kc: f64) -> Option<f64> {
    if i1 == 0.0 && i2 == 0.0 {
        return Some(0.0);
    }
    if !(i1 != 0.0 && i2 / i1 > 0.0 && i2 / i1 < 1.0) {
        return None;
    }
    let ratio = i2 / i1;
    let g = |q: f64| {
        let e = 1.0 - q;
        (kb.powf(e) - kc.powf(e)) / (ka.powf(e) - kb.powf(e))
    };
    let (mut lo, mut hi) = (1.0 + 1e-9, 60.0);
    if ratio > g(lo) || ratio < g(hi) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > ratio {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = 0.5 * (lo + hi);
    let e = 1.0 - q;
    Some(i2 * kc.powf(e) / (kb.powf(e) - kc.powf(e)))
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 0 {
                break;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Fixed-order Gauss–Legendre composite rule: `panels` equal panels of `n` nodes.
pub fn gauss_legendre_composite<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    n: usize,
    panels: usize,
) -> f64 {
    let (x, w) = gauss_legendre(n);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + h * p as f64;
        let c = lo + 0.5 * h;
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            s += wi * f(c + 0.5 * h * xi);
        }
        total += 0.5 * h * s;
    }
    total
}

/// Chebyshev extreme points `cos(jπ/n)`, j = 0..=n, with Clenshaw–Curtis weights on [-1, 1].
pub fn clenshaw_curtis(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2 && n % 2 == 0, "Clenshaw–Curtis order must be even");
    let pi = std::f64::consts::PI;
    let nf = n as f64;
    let x: Vec<f64> = (0..=n).map(|j| (pi * j as f64 / nf).cos()).collect();
    let mut w = vec![0.0; n + 1];
    for (j, wj) in w.iter_mut().enumerate() {
        let theta = pi * j as f64 / nf;
        let mut s = 1.0;
        for k in 1..=n / 2 {
            let bk = if k == n / 2 { 1.0 } else { 2.0 };
            let kf = k as f64;
            s -= bk * (2.0 * kf * theta).cos() / (4.0 * kf * kf - 1.0);
        }
        let cj = if j == 0 || j == n { 1.0 } else { 2.0 };
        *wj = cj * s / nf;
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_polynomial_exact() {
        let r = integrate(|x| x.powi(20), -1.0, 2.0, Tolerance::new(1e-13, 1e-14), 100).unwrap();
        let exact = (2f64.powi(21) + 1.0) / 21.0;
        assert!((r.value - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn adaptive_endpoint_singularity() {
        // ∫₀¹ x^{-1/2} dx = 2
        let r = integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, Tolerance::new(1e-10, 1e-12), 2000).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn exhausted_budget_is_reported() {
        let r = integrate(|x: f64| (1.0 / x).sin() / x, 1e-9, 1.0, Tolerance::new(1e-14, 0.0), 8);
        assert!(r.is_err());
    }

    #[test]
    fn algebraic_tail_closure() {
        // ∫₀^∞ sin²(k)/(1+k)^4 dk by dense reference quadrature
        let f = |k: f64| k.sin().powi(2) / (1.0 + k).powi(4);
        let r = integrate_algebraic_tail(f, std::f64::consts::PI, Tolerance::new(1e-11, 1e-10), 400).unwrap();
        let head = integrate(f, 0.0, 2000.0, Tolerance::new(1e-14, 1e-13), 100_000).unwrap().value;
        let reference = head + 0.5 / (3.0 * 2001f64.powi(3));
        assert!((r.value - reference).abs() < 1e-9, "{} vs {}", r.value, reference);
    }

    #[test]
    fn legendre_weights_and_moments() {
        for n in [1, 2, 5, 16, 64] {
            let (x, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n}");
            let m: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
            if n >= 2 {
                assert!((m - 2.0 / 3.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn clenshaw_curtis_exact_cosine() {
        let (x, w) = clenshaw_curtis(64);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.cos()).sum();
        assert!((s - 2.0 * 1f64.sin()).abs() < 1e-14);
    }
}
