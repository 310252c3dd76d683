//! Banded LU factorization with partial pivoting.
//!
//! Rows are stored in fixed windows `[i - kl, i + kl + ku]` so that the
//! fill-in produced by row interchanges fits without reallocation. The
//! multipliers of elimination step `k` are kept separately and applied
//! interleaved with the interchanges during the solve, the same scheme used
//! by LAPACK's unblocked band factorization.

use std::ops::Neg;

use num_complex::Complex64;
use num_traits::NumAssign;

use crate::error::{Error, Result};

pub trait BandScalar: Copy + NumAssign + Neg<Output = Self> + Send + Sync {
    fn modulus(self) -> f64;
}

impl BandScalar for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl BandScalar for Complex64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone)]
pub struct BandedMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: BandScalar> BandedMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandedMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![T::zero(); n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if !self.in_band(i, j) {
            return T::zero();
        }
        self.data[self.idx(i, j)]
    }

    /// Adds `v` to entry (i, j). Panics if the entry is outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        assert!(
            self.in_band(i, j),
            "entry ({i},{j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "entry ({i},{j}) outside band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            for (j, xj) in x.iter().enumerate().take(hi + 1).skip(lo) {
                *yi += self.data[self.idx(i, j)] * *xj;
            }
        }
        y
    }

    /// Factorizes in place, consuming the matrix.
    pub fn factor(mut self) -> Result<BandedLu<T>> {
        let n = self.n;
        let kl = self.kl;
        let reach = self.kl + self.ku;
        let mut piv = vec![0usize; n];
        let mut mult = vec![T::zero(); n * kl.max(1)];
        let mut tmp = vec![T::zero(); reach + 1];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].modulus();
            for i in k + 1..=last {
                let v = self.data[self.idx(i, k)].modulus();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular(format!(
                    "zero pivot in banded LU at column {k}"
                )));
            }
            piv[k] = p;
            let cmax = (k + reach).min(n - 1);
            if p != k {
                for c in k..=cmax {
                    tmp[c - k] = self.get_fill(p, c);
                }
                for c in k..=cmax {
                    let vk = self.get_fill(k, c);
                    self.set_fill(p, c, vk);
                    self.set_fill(k, c, tmp[c - k]);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            for i in k + 1..=last {
                let ii = self.idx(i, k);
                let m = self.data[ii] / pivot;
                self.data[ii] = T::zero();
                mult[k * kl + (i - k - 1)] = m;
                if m == T::zero() {
                    continue;
                }
                for c in k + 1..=cmax {
                    let a = self.get_fill(k, c);
                    if a != T::zero() {
                        let ic = self.idx(i, c);
                        self.data[ic] -= m * a;
                    }
                }
            }
        }
        Ok(BandedLu {
            a: self,
            piv,
            mult,
        })
    }

    #[inline]
    fn get_fill(&self, i: usize, j: usize) -> T {
        if j + self.kl < i || j > i + self.kl + self.ku {
            return T::zero();
        }
        self.data[self.idx(i, j)]
    }

    #[inline]
    fn set_fill(&mut self, i: usize, j: usize, v: T) {
        if j + self.kl < i || j > i + self.kl + self.ku {
            debug_assert!(v == T::zero());
            return;
        }
        let k = self.idx(i, j);
        self.data[k] = v;
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    a: BandedMatrix<T>,
    piv: Vec<usize>,
    mult: Vec<T>,
}

impl<T: BandScalar> BandedLu<T> {
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.a.n;
        let kl = self.a.kl;
        let reach = self.a.kl + self.a.ku;
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            let last = (k + kl).min(n - 1);
            for (i, bi) in b.iter_mut().enumerate().take(last + 1).skip(k + 1) {
                *bi -= self.mult[k * kl + (i - k - 1)] * bk;
            }
        }
        for k in (0..n).rev() {
            let cmax = (k + reach).min(n - 1);
            let mut s = b[k];
            for (c, bc) in b.iter().enumerate().take(cmax + 1).skip(k + 1) {
                s -= self.a.get_fill(k, c) * *bc;
            }
            b[k] = s / self.a.data[self.a.idx(k, k)];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn dense_of(m: &BandedMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(m.n, m.n, |i, j| m.get(i, j))
    }

    proptest! {
        #[test]
        fn matches_dense_solve(
            n in 3usize..40, kl in 0usize..4, ku in 0usize..4, seed in 0u64..1000
        ) {
            let mut m = BandedMatrix::<f64>::zeros(n, kl, ku);
            let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let mut next = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            };
            for i in 0..n {
                for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                    // Small diagonal forces pivoting to do real work.
                    let v = if i == j { 0.01 * next() } else { next() };
                    m.set(i, j, v);
                }
            }
            let b: Vec<f64> = (0..n).map(|_| next()).collect();
            let dense = dense_of(&m);
            let Some(xd) = dense.clone().lu().solve(&DVector::from_vec(b.clone())) else {
                return Ok(());
            };
            if dense.clone().lu().determinant().abs() < 1e-8 {
                return Ok(());
            }
            let lu = m.factor().unwrap();
            let x = lu.solve(&b);
            let r = &dense * DVector::from_vec(x.clone()) - DVector::from_vec(b);
            prop_assert!(r.amax() < 1e-8 * (1.0 + xd.amax()), "residual {}", r.amax());
        }
    }

    #[test]
    fn complex_tridiagonal() {
        let n = 50;
        let mut m = BandedMatrix::<Complex64>::zeros(n, 1, 1);
        for i in 0..n {
            m.set(i, i, Complex64::new(2.0, 0.3));
            if i > 0 {
                m.set(i, i - 1, Complex64::new(-1.0, 0.0));
            }
            if i + 1 < n {
                m.set(i, i + 1, Complex64::new(-1.0, 0.1));
            }
        }
        let x_true: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let b = m.mul_vec(&x_true);
        let x = m.factor().unwrap().solve(&b);
        for (a, e) in x.iter().zip(&x_true) {
            assert!((a - e).norm() < 1e-10);
        }
    }

    #[test]
    fn singular_is_reported() {
        let m = BandedMatrix::<f64>::zeros(4, 1, 1);
        assert!(matches!(m.factor(), Err(Error::Singular(_))));
    }
}
