//! Numerical building blocks shared by the physics modules.

pub mod banded;
pub mod exterior;
pub mod fit;
pub mod interp;
pub mod ode;
pub mod roots;

use num_complex::Complex64;

/// Radical-inverse (van der Corput) sequence in the given base, used for
/// deterministic quasi-random sampling of 2D domains.
pub fn halton(index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Normalized cumulative Gaussian: errfn(z) = (1 + erf z)/2, so errfn(+inf) = 1.
pub fn errfn(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z))
}

pub(crate) fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Principal complex square root (branch cut on the negative real axis).
pub(crate) fn csqrt(z: Complex64) -> Complex64 {
    z.sqrt()
}

/// Order-preserving map, parallel when the `parallel` feature is on.
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// n evenly spaced points from a to b inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}
