//! Explicit integrators for small complex linear systems.

use nalgebra::SMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat<const R: usize, const C: usize> = SMatrix<Complex64, R, C>;

#[derive(Debug, Clone, Copy)]
pub struct Dp45Options {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step magnitude; `None` picks one from the local derivative.
    pub h0: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Dp45Options {
    fn default() -> Self {
        Dp45Options {
            rtol: 1e-10,
            atol: 1e-13,
            h0: None,
            h_max: 1.0,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub last_h: f64,
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn amax<const R: usize, const C: usize>(m: &CMat<R, C>) -> f64 {
    m.iter().fold(0.0f64, |a, z| a.max(z.norm()))
}

/// Dormand–Prince 5(4) from `x0` to `x1` (either direction). The error
/// norm is scaled by the infinity norm of the whole state so that small
/// components of a large vector do not force tiny steps.
pub fn dp45<const R: usize, const C: usize, F>(
    mut f: F,
    x0: f64,
    x1: f64,
    y0: CMat<R, C>,
    opts: &Dp45Options,
) -> Result<(CMat<R, C>, OdeStats)>
where
    F: FnMut(f64, &CMat<R, C>) -> CMat<R, C>,
{
    let span = x1 - x0;
    let mut stats = OdeStats::default();
    if span == 0.0 {
        return Ok((y0, stats));
    }
    let dir = span.signum();
    let mut x = x0;
    let mut y = y0;
    let mut k1 = f(x, &y);
    let mut h = match opts.h0 {
        Some(h) => h.abs(),
        None => {
            let ny = amax(&y).max(1e-300);
            let nf = amax(&k1);
            let h = if nf > 0.0 { 0.01 * ny / nf } else { 1e-3 };
            h.clamp(1e-8, opts.h_max)
        }
    }
    .min(span.abs())
    .min(opts.h_max);

    while (x1 - x) * dir > 0.0 {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::Numerical(format!(
                "dp45: step limit {} reached at x = {x}",
                opts.max_steps
            )));
        }
        let last = h >= (x1 - x).abs();
        let hs = if last { x1 - x } else { h * dir };
        let c = |a: f64| Complex64::new(a * hs, 0.0);
        let k2 = f(x + hs / 5.0, &(y + k1 * c(A21)));
        let k3 = f(x + hs * 0.3, &(y + k1 * c(A31) + k2 * c(A32)));
        let k4 = f(x + hs * 0.8, &(y + k1 * c(A41) + k2 * c(A42) + k3 * c(A43)));
        let k5 = f(
            x + hs * 8.0 / 9.0,
            &(y + k1 * c(A51) + k2 * c(A52) + k3 * c(A53) + k4 * c(A54)),
        );
        let k6 = f(
            x + hs,
            &(y + k1 * c(A61) + k2 * c(A62) + k3 * c(A63) + k4 * c(A64) + k5 * c(A65)),
        );
        let yn = y + k1 * c(B1) + k3 * c(B3) + k4 * c(B4) + k5 * c(B5) + k6 * c(B6);
        let k7 = f(x + hs, &yn);
        let err = k1 * c(E1) + k3 * c(E3) + k4 * c(E4) + k5 * c(E5) + k6 * c(E6) + k7 * c(E7);
        let scale = opts.atol + opts.rtol * amax(&y).max(amax(&yn));
        let en = amax(&err) / scale;
        if !en.is_finite() {
            return Err(Error::Numerical(format!("dp45: non-finite state at x = {x}")));
        }
        if en <= 1.0 {
            x = if last { x1 } else { x + hs };
            y = yn;
            k1 = k7;
            stats.accepted += 1;
            stats.last_h = hs.abs();
            let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
            if !last {
                h = (h * fac).min(opts.h_max);
            }
        } else {
            stats.rejected += 1;
            h *= (0.9 * en.powf(-0.2)).clamp(0.1, 0.9);
            if h < 1e-14 * (1.0 + x.abs()) {
                return Err(Error::Numerical(format!("dp45: step underflow at x = {x}")));
            }
        }
    }
    Ok((y, stats))
}

/// Integrates through the increasing or decreasing output points `xs`
/// (starting at `xs[0]` with `y0`) and returns the state at each of them.
pub fn dp45_dense<const R: usize, const C: usize, F>(
    mut f: F,
    xs: &[f64],
    y0: CMat<R, C>,
    opts: &Dp45Options,
) -> Result<Vec<CMat<R, C>>>
where
    F: FnMut(f64, &CMat<R, C>) -> CMat<R, C>,
{
    let mut out = Vec::with_capacity(xs.len());
    let mut y = y0;
    out.push(y);
    let mut o = *opts;
    for w in xs.windows(2) {
        let (yn, st) = dp45(&mut f, w[0], w[1], y, &o)?;
        if st.last_h > 0.0 {
            o.h0 = Some(st.last_h);
        }
        y = yn;
        out.push(y);
    }
    Ok(out)
}

/// One classical RK4 step.
pub fn rk4_step<const R: usize, const C: usize, F>(f: &mut F, x: f64, y: &CMat<R, C>, h: f64) -> CMat<R, C>
where
    F: FnMut(f64, &CMat<R, C>) -> CMat<R, C>,
{
    let c = |a: f64| Complex64::new(a, 0.0);
    let k1 = f(x, y);
    let k2 = f(x + h / 2.0, &(y + k1 * c(h / 2.0)));
    let k3 = f(x + h / 2.0, &(y + k2 * c(h / 2.0)));
    let k4 = f(x + h, &(y + k3 * c(h)));
    y + (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(h / 6.0)
}
