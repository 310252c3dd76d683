//! Test-only oracles shared by the integration tests.

#![allow(dead_code)]

use combust::numerics::banded::BandedMatrix;
use combust::spectral::Operator;
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Central-difference discretization of LU = BU″ − (AU)′ + CU on (−L, L)
/// with homogeneous Dirichlet data; unknowns interleaved as (u_i, z_i).
/// Returns the triplets of the 2(n−1)-square matrix.
pub fn fd_triplets<O: Operator>(op: &O, l: f64, n: usize) -> (usize, Vec<(usize, usize, f64)>) {
    let h = 2.0 * l / n as f64;
    let (b, d) = op.diffusion();
    let m = n - 1;
    let mut t = Vec::with_capacity(14 * m);
    for i in 0..m {
        let x = -l + (i + 1) as f64 * h;
        let k = op.coeffs(x);
        let diff = [b, d];
        for r in 0..2 {
            let row = 2 * i + r;
            // Diffusion.
            t.push((row, row, -2.0 * diff[r] / (h * h)));
            if i > 0 {
                t.push((row, row - 2, diff[r] / (h * h)));
            }
            if i + 1 < m {
                t.push((row, row + 2, diff[r] / (h * h)));
            }
            for col in 0..2 {
                // −A U′ − A′U + CU
                let a = k.a[(r, col)];
                let zero = k.c[(r, col)] - k.da[(r, col)];
                t.push((row, 2 * i + col, zero));
                if a != 0.0 {
                    if i > 0 {
                        t.push((row, 2 * (i - 1) + col, a / (2.0 * h)));
                    }
                    if i + 1 < m {
                        t.push((row, 2 * (i + 1) + col, -a / (2.0 * h)));
                    }
                }
            }
        }
    }
    (2 * m, t)
}

/// All eigenvalues of the dense discretization.
pub fn fd_dense_eigenvalues<O: Operator>(op: &O, l: f64, n: usize) -> Vec<Complex64> {
    let (dim, t) = fd_triplets(op, l, n);
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    for (i, j, v) in t {
        a[(i, j)] += v;
    }
    a.complex_eigenvalues().iter().copied().collect()
}

/// Real eigenvalue nearest `shift` by inverse iteration on the banded
/// discretization.
pub fn fd_inverse_iteration<O: Operator>(op: &O, l: f64, n: usize, shift: f64) -> f64 {
    let (dim, t) = fd_triplets(op, l, n);
    let mut a = BandedMatrix::<f64>::zeros(dim, 3, 3);
    let mut shifted = BandedMatrix::<f64>::zeros(dim, 3, 3);
    for &(i, j, v) in &t {
        a.add(i, j, v);
        shifted.add(i, j, v);
    }
    for i in 0..dim {
        shifted.add(i, i, -shift);
    }
    let lu = shifted.factor().expect("shift is not an eigenvalue");
    let mut v = vec![1.0; dim];
    let mut lam = shift;
    for _ in 0..200 {
        let mut w = lu.solve(&v);
        let nrm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        w.iter_mut().for_each(|x| *x /= nrm);
        let av = a.mul_vec(&w);
        let next = av.iter().zip(&w).map(|(p, q)| p * q).sum::<f64>();
        v = w;
        if (next - lam).abs() < 1e-14 * next.abs().max(1.0) {
            return next;
        }
        lam = next;
    }
    lam
}

/// Richardson-extrapolated (h² → 0) real eigenvalue near `shift`.
pub fn fd_eigenvalue_extrapolated<O: Operator>(op: &O, l: f64, n: usize, shift: f64) -> (f64, f64) {
    let a = fd_inverse_iteration(op, l, n, shift);
    let b = fd_inverse_iteration(op, l, 2 * n, shift);
    let c = fd_inverse_iteration(op, l, 4 * n, shift);
    let r1 = (4.0 * b - a) / 3.0;
    let r2 = (4.0 * c - b) / 3.0;
    (r2, (r2 - r1).abs())
}
