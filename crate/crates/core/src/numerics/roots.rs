use crate::error::{Error, Result};

/// Brent's method on a sign-changing bracket [a, b].
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Numerical(format!(
            "brent: no sign change on [{a}, {b}]"
        )));
    }
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut mflag = true;
    for _ in 0..200 {
        if fb == 0.0 || (b - a).abs() < tol {
            return Ok(b);
        }
        let mut s = if fa != fc && fb != fc {
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let between = if lo < b { s > lo && s < b } else { s > b && s < lo };
        if !between
            || (mflag && (s - b).abs() >= (b - c).abs() / 2.0)
            || (!mflag && (s - b).abs() >= (c - d).abs() / 2.0)
            || (mflag && (b - c).abs() < tol)
            || (!mflag && (c - d).abs() < tol)
        {
            s = (a + b) / 2.0;
            mflag = true;
        } else {
            mflag = false;
        }
        let fs = f(s);
        d = c;
        c = b;
        fc = fb;
        if fa.signum() != fs.signum() {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    Err(Error::Numerical("brent: iteration limit".into()))
}

/// All sign changes of `f` on a uniform scan of [a, b] with `n` cells,
/// each polished with Brent. Exact zeros at scan nodes are included once.
pub fn scan_roots<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize, tol: f64) -> Vec<f64> {
    let xs = super::linspace(a, b, n + 1);
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut roots = Vec::new();
    for i in 0..n {
        if fs[i] == 0.0 {
            roots.push(xs[i]);
            continue;
        }
        if fs[i].is_finite() && fs[i + 1].is_finite() && fs[i].signum() != fs[i + 1].signum() && fs[i + 1] != 0.0 {
            if let Ok(r) = brent(&mut f, xs[i], xs[i + 1], tol) {
                roots.push(r);
            }
        }
    }
    if fs[n] == 0.0 {
        roots.push(xs[n]);
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_sqrt2() {
        let r = brent(|x| x * x - 2.0, 0.0, 2.0, 1e-15).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn scan_finds_all_cubic_roots() {
        let r = scan_roots(|x| (x - 0.3) * (x + 1.1) * (x - 2.0), -3.0, 3.0, 97, 1e-14);
        assert_eq!(r.len(), 3);
        assert!((r[0] + 1.1).abs() < 1e-12 && (r[1] - 0.3).abs() < 1e-12 && (r[2] - 2.0).abs() < 1e-12);
    }
}
