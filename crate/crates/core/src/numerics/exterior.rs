//! Second exterior power of C^4, used to integrate 2-planes without losing
//! linear independence.

use nalgebra::{Matrix4, Matrix6, Vector4, Vector6};
use num_complex::Complex64;

/// Basis order of Λ²C⁴: e1∧e2, e1∧e3, e1∧e4, e2∧e3, e2∧e4, e3∧e4.
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Induced action of `a` on Λ²: (u∧v)' = Au∧v + u∧Av.
pub fn compound2(a: &Matrix4<Complex64>) -> Matrix6<Complex64> {
    let z = Complex64::new(0.0, 0.0);
    let mut m = Matrix6::from_element(z);
    for (r, &(i, j)) in PAIRS.iter().enumerate() {
        for (col, &(k, l)) in PAIRS.iter().enumerate() {
            let mut v = z;
            if l == j {
                v += a[(i, k)];
            }
            if l == i {
                v -= a[(j, k)];
            }
            if k == i {
                v += a[(j, l)];
            }
            if k == j {
                v -= a[(i, l)];
            }
            m[(r, col)] = v;
        }
    }
    m
}

pub fn wedge(u: &Vector4<Complex64>, v: &Vector4<Complex64>) -> Vector6<Complex64> {
    Vector6::from_fn(|r, _| {
        let (i, j) = PAIRS[r];
        u[i] * v[j] - u[j] * v[i]
    })
}

/// Coefficient of e1∧e2∧e3∧e4 in a∧b, i.e. det[a1, a2, b1, b2] when
/// a = a1∧a2 and b = b1∧b2.
pub fn pairing(a: &Vector6<Complex64>, b: &Vector6<Complex64>) -> Complex64 {
    a[0] * b[5] - a[1] * b[4] + a[2] * b[3] + a[3] * b[2] - a[4] * b[1] + a[5] * b[0]
}

/// Sine of the angle between the 2-planes represented by two decomposable
/// 2-vectors (phase and scale invariant).
pub fn plane_distance(a: &Vector6<Complex64>, b: &Vector6<Complex64>) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    let cos = (a.dotc(b)).norm() / (na * nb);
    (1.0 - cos.min(1.0).powi(2)).max(0.0).sqrt()
}
