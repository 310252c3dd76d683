/// Piecewise cubic Hermite interpolant on a uniform grid, for vector values
/// with known derivatives at the nodes.
#[derive(Debug, Clone)]
pub struct UniformHermite<const N: usize> {
    pub x0: f64,
    pub h: f64,
    pub y: Vec<[f64; N]>,
    pub dy: Vec<[f64; N]>,
}

impl<const N: usize> UniformHermite<N> {
    pub fn new(x0: f64, h: f64, y: Vec<[f64; N]>, dy: Vec<[f64; N]>) -> Self {
        assert_eq!(y.len(), dy.len());
        assert!(y.len() >= 2 && h > 0.0);
        UniformHermite { x0, h, y, dy }
    }

    pub fn x_max(&self) -> f64 {
        self.x0 + self.h * (self.y.len() - 1) as f64
    }

    /// Value and derivative at `x`; outside the grid the end node is returned
    /// with its stored derivative.
    pub fn eval(&self, x: f64) -> ([f64; N], [f64; N]) {
        let n = self.y.len();
        if x <= self.x0 {
            return (self.y[0], self.dy[0]);
        }
        if x >= self.x_max() {
            return (self.y[n - 1], self.dy[n - 1]);
        }
        let s = (x - self.x0) / self.h;
        let i = (s.floor() as usize).min(n - 2);
        let t = s - i as f64;
        let h = self.h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        let (ya, yb, da, db) = (&self.y[i], &self.y[i + 1], &self.dy[i], &self.dy[i + 1]);
        let mut v = [0.0; N];
        let mut d = [0.0; N];
        for k in 0..N {
            v[k] = h00 * ya[k] + h * h10 * da[k] + h01 * yb[k] + h * h11 * db[k];
            d[k] = d00 * ya[k] + d10 * da[k] + d01 * yb[k] + d11 * db[k];
        }
        (v, d)
    }
}

/// Piecewise quintic Hermite interpolant using values, first and second
/// derivatives at the nodes. Returns value, first and second derivative.
#[derive(Debug, Clone)]
pub struct UniformQuintic<const N: usize> {
    pub x0: f64,
    pub h: f64,
    pub y: Vec<[f64; N]>,
    pub dy: Vec<[f64; N]>,
    pub d2y: Vec<[f64; N]>,
}

impl<const N: usize> UniformQuintic<N> {
    pub fn new(x0: f64, h: f64, y: Vec<[f64; N]>, dy: Vec<[f64; N]>, d2y: Vec<[f64; N]>) -> Self {
        assert!(y.len() == dy.len() && y.len() == d2y.len());
        assert!(y.len() >= 2 && h > 0.0);
        UniformQuintic { x0, h, y, dy, d2y }
    }

    pub fn x_max(&self) -> f64 {
        self.x0 + self.h * (self.y.len() - 1) as f64
    }

    pub fn eval(&self, x: f64) -> ([f64; N], [f64; N], [f64; N]) {
        let n = self.y.len();
        if x <= self.x0 {
            return (self.y[0], self.dy[0], self.d2y[0]);
        }
        if x >= self.x_max() {
            return (self.y[n - 1], self.dy[n - 1], self.d2y[n - 1]);
        }
        let s = (x - self.x0) / self.h;
        let i = (s.floor() as usize).min(n - 2);
        let t = s - i as f64;
        let h = self.h;
        let (t2, t3) = (t * t, t * t * t);
        let (t4, t5) = (t3 * t, t3 * t2);
        // Basis for y0, y0', y0'', y1'', y1', y1 on the unit interval.
        let b = [
            1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5,
            t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5,
            0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5),
            0.5 * (t3 - 2.0 * t4 + t5),
            -4.0 * t3 + 7.0 * t4 - 3.0 * t5,
            10.0 * t3 - 15.0 * t4 + 6.0 * t5,
        ];
        let db = [
            -30.0 * t2 + 60.0 * t3 - 30.0 * t4,
            1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4,
            0.5 * (2.0 * t - 9.0 * t2 + 12.0 * t3 - 5.0 * t4),
            0.5 * (3.0 * t2 - 8.0 * t3 + 5.0 * t4),
            -12.0 * t2 + 28.0 * t3 - 15.0 * t4,
            30.0 * t2 - 60.0 * t3 + 30.0 * t4,
        ];
        let d2b = [
            -60.0 * t + 180.0 * t2 - 120.0 * t3,
            -36.0 * t + 96.0 * t2 - 60.0 * t3,
            0.5 * (2.0 - 18.0 * t + 36.0 * t2 - 20.0 * t3),
            0.5 * (6.0 * t - 24.0 * t2 + 20.0 * t3),
            -24.0 * t + 84.0 * t2 - 60.0 * t3,
            60.0 * t - 180.0 * t2 + 120.0 * t3,
        ];
        let mut v = [0.0; N];
        let mut d = [0.0; N];
        let mut dd = [0.0; N];
        for k in 0..N {
            let c = [
                self.y[i][k],
                h * self.dy[i][k],
                h * h * self.d2y[i][k],
                h * h * self.d2y[i + 1][k],
                h * self.dy[i + 1][k],
                self.y[i + 1][k],
            ];
            for j in 0..6 {
                v[k] += b[j] * c[j];
                d[k] += db[j] * c[j];
                dd[k] += d2b[j] * c[j];
            }
            d[k] /= h;
            dd[k] /= h * h;
        }
        (v, d, dd)
    }
}

/// Four-point cubic Lagrange interpolation of uniformly sampled data; clamps
/// to the end values outside the grid.
pub fn lagrange4(x0: f64, h: f64, y: &[f64], x: f64) -> f64 {
    let n = y.len();
    let s = (x - x0) / h;
    if s <= 0.0 {
        return y[0];
    }
    if s >= (n - 1) as f64 {
        return y[n - 1];
    }
    let i = (s.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let t = s - i as f64;
    let w0 = -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0;
    let w1 = t * (t - 2.0) * (t - 3.0) / 2.0;
    let w2 = -t * (t - 1.0) * (t - 3.0) / 2.0;
    let w3 = t * (t - 1.0) * (t - 2.0) / 6.0;
    w0 * y[i] + w1 * y[i + 1] + w2 * y[i + 2] + w3 * y[i + 3]
}

/// Six-point Lagrange interpolation of uniformly sampled data and its
/// derivative at `x`; stencils are shifted inward near the ends. `x` must lie
/// inside the sampled range.
pub fn lagrange6(x0: f64, h: f64, y: &[f64], x: f64) -> (f64, f64) {
    let n = y.len();
    debug_assert!(n >= 6);
    let s = (x - x0) / h;
    let i = (s.floor() as isize - 2).clamp(0, n as isize - 6) as usize;
    let t = s - i as f64;
    let mut v = 0.0;
    let mut dv = 0.0;
    for j in 0..6 {
        let mut w = 1.0;
        let mut dw = 0.0;
        let mut den = 1.0;
        for m in 0..6 {
            if m == j {
                continue;
            }
            den *= j as f64 - m as f64;
            dw = dw * (t - m as f64) + w;
            w *= t - m as f64;
        }
        v += y[i + j] * w / den;
        dv += y[i + j] * dw / den;
    }
    (v, dv / h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_is_exact_for_cubics() {
        let f = |x: f64| x * x * x - 2.0 * x + 1.0;
        let df = |x: f64| 3.0 * x * x - 2.0;
        let xs: Vec<f64> = (0..11).map(|i| -1.0 + 0.2 * i as f64).collect();
        let it = UniformHermite::new(
            -1.0,
            0.2,
            xs.iter().map(|&x| [f(x)]).collect(),
            xs.iter().map(|&x| [df(x)]).collect(),
        );
        for k in 0..50 {
            let x = -1.0 + 2.0 * k as f64 / 49.0;
            let (v, d) = it.eval(x);
            assert!((v[0] - f(x)).abs() < 1e-13);
            assert!((d[0] - df(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn quintic_is_exact_for_quintics() {
        let f = |x: f64| x.powi(5) - 2.0 * x.powi(3) + x;
        let df = |x: f64| 5.0 * x.powi(4) - 6.0 * x * x + 1.0;
        let d2f = |x: f64| 20.0 * x.powi(3) - 12.0 * x;
        let xs: Vec<f64> = (0..9).map(|i| -1.0 + 0.25 * i as f64).collect();
        let it = UniformQuintic::new(
            -1.0,
            0.25,
            xs.iter().map(|&x| [f(x)]).collect(),
            xs.iter().map(|&x| [df(x)]).collect(),
            xs.iter().map(|&x| [d2f(x)]).collect(),
        );
        for k in 0..60 {
            let x = -1.0 + 2.0 * k as f64 / 59.0;
            let (v, d, dd) = it.eval(x);
            assert!((v[0] - f(x)).abs() < 1e-13);
            assert!((d[0] - df(x)).abs() < 1e-12);
            assert!((dd[0] - d2f(x)).abs() < 1e-11);
        }
    }

    #[test]
    fn lagrange_is_exact_for_cubics() {
        let f = |x: f64| 0.5 * x * x * x + x * x - 3.0;
        let y: Vec<f64> = (0..20).map(|i| f(0.1 * i as f64)).collect();
        for k in 0..40 {
            let x = 1.9 * k as f64 / 39.0;
            assert!((lagrange4(0.0, 0.1, &y, x) - f(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn lagrange6_is_exact_for_quintics() {
        let f = |x: f64| x.powi(5) - 3.0 * x.powi(3) + x - 2.0;
        let df = |x: f64| 5.0 * x.powi(4) - 9.0 * x * x + 1.0;
        let y: Vec<f64> = (0..12).map(|i| f(-1.0 + 0.25 * i as f64)).collect();
        for x in [-1.0, -0.93, 0.1, 0.5, 1.61, 1.75] {
            let (v, dv) = lagrange6(-1.0, 0.25, &y, x);
            assert!((v - f(x)).abs() < 1e-12 && (dv - df(x)).abs() < 1e-10, "{x}");
        }
    }
}
