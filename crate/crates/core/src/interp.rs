//! Shape-preserving piecewise cubic Hermite interpolation.

/// Monotone cubic (Fritsch–Carlson / Butland slopes) through strictly increasing `x`.
#[derive(Clone, Debug)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n);
        assert!(x.windows(2).all(|w| w[1] > w[0]), "abscissae must increase");
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let del: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = del[0];
            d[1] = del[0];
            return Pchip { x, y, d };
        }
        for k in 1..n - 1 {
            if del[k - 1] * del[k] > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
            }
        }
        d[0] = end_slope(h[0], h[1], del[0], del[1]);
        d[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
        Pchip { x, y, d }
    }

    pub fn xs(&self) -> &[f64] {
        &self.x
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    fn segment(&self, t: f64) -> usize {
        let i = self.x.partition_point(|&v| v <= t);
        i.saturating_sub(1).min(self.x.len() - 2)
    }

    /// Value and derivative at `t` (clamped to the data range).
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let t = t.clamp(self.x[0], *self.x.last().unwrap());
        let k = self.segment(t);
        self.eval_in(k, t)
    }

    pub(crate) fn eval_in(&self, k: usize, t: f64) -> (f64, f64) {
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (y0, y1, d0, d1) = (self.y[k], self.y[k + 1], self.d[k] * h, self.d[k + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * d1;
        let dv = ((6.0 * s2 - 6.0 * s) * y0 + (3.0 * s2 - 4.0 * s + 1.0) * d0 + (-6.0 * s2 + 6.0 * s) * y1
            + (3.0 * s2 - 2.0 * s) * d1)
            / h;
        (v, dv)
    }
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d * del0 <= 0.0 {
        0.0
    } else if del0 * del1 <= 0.0 && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_nodes_and_cubic_accuracy() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 / 49.0).powi(2)).collect();
        let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let p = Pchip::new(x.clone(), y.clone());
        for (a, b) in x.iter().zip(&y) {
            assert!((p.eval(*a).0 - b).abs() < 1e-15);
        }
        assert!((p.eval(0.5).0 - 0.5f64.exp()).abs() < 1e-5);
    }

    #[test]
    fn monotone_data_monotone_interpolant() {
        let x = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let y = vec![0.0, 0.0, 1.0, 1.0, 5.0];
        let p = Pchip::new(x, y);
        let mut last = -1.0;
        for i in 0..=400 {
            let v = p.eval(i as f64 / 100.0).0;
            assert!(v >= last - 1e-15);
            last = v;
        }
    }
}
