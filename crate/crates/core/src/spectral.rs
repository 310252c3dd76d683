//! Linearized eigenvalue problem about a profile.
//!
//! The operator is written generically as LU = BU″ − (AU)′ + CU with
//! B = diag(b, d), A = [[α, β], [0, −s]], C the reaction Jacobian. In first-order
//! form W = (u, z, u′, z′):
//!
//!   W′ = 𝔸(x,λ)W,  𝔸 = [[0, I], [B⁻¹(λ − C + A′), B⁻¹A]].
//!
//! The adjoint L*V = BV″ + AᵀV′ + CᵀV has the same shape with Â = −Aᵀ,
//! Ĉ = Cᵀ − A′ᵀ and is evaluated at λ̄.

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::{c, csqrt};
use crate::profile::{Profile, Side};

pub type C64 = Complex64;
pub type CMat4 = Matrix4<C64>;
pub type CVec4 = Vector4<C64>;

/// Coefficients of the second-order operator at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coeffs {
    pub a: Matrix2<f64>,
    pub da: Matrix2<f64>,
    pub c: Matrix2<f64>,
}

impl Coeffs {
    pub fn adjoint(&self) -> Coeffs {
        Coeffs {
            a: -self.a.transpose(),
            da: -self.da.transpose(),
            c: self.c.transpose() - self.da.transpose(),
        }
    }
}

/// First-order coefficient matrix for given second-order coefficients.
pub fn first_order(k: &Coeffs, diffusion: (f64, f64), lam: C64) -> CMat4 {
    let (b, d) = diffusion;
    let inv = [1.0 / b, 1.0 / d];
    let mut m = CMat4::zeros();
    m[(0, 2)] = c(1.0, 0.0);
    m[(1, 3)] = c(1.0, 0.0);
    for r in 0..2 {
        for col in 0..2 {
            let mut v = c(-k.c[(r, col)] + k.da[(r, col)], 0.0);
            if r == col {
                v += lam;
            }
            m[(2 + r, col)] = v * inv[r];
            m[(2 + r, 2 + col)] = c(k.a[(r, col)] * inv[r], 0.0);
        }
    }
    m
}

/// Variable-coefficient operator with constant limits at ±∞.
pub trait Operator: Sync {
    fn coeffs(&self, x: f64) -> Coeffs;
    fn limit(&self, side: Side) -> Coeffs;
    /// (b, d)
    fn diffusion(&self) -> (f64, f64);
    /// Half-width of the computational window.
    fn x_max(&self) -> f64;

    fn matrix(&self, x: f64, lam: C64) -> CMat4 {
        first_order(&self.coeffs(x), self.diffusion(), lam)
    }

    fn limit_matrix(&self, side: Side, lam: C64) -> CMat4 {
        first_order(&self.limit(side), self.diffusion(), lam)
    }

    /// Adjoint first-order matrix at λ̄.
    fn adjoint_matrix(&self, x: f64, lam: C64) -> CMat4 {
        first_order(&self.coeffs(x).adjoint(), self.diffusion(), lam.conj())
    }

    fn adjoint_limit_matrix(&self, side: Side, lam: C64) -> CMat4 {
        first_order(&self.limit(side).adjoint(), self.diffusion(), lam.conj())
    }

    /// Duality form S = [[−A, B], [−B, 0]] at x.
    fn duality_form(&self, x: f64) -> Matrix4<f64> {
        let a = self.coeffs(x).a;
        let (b, d) = self.diffusion();
        let mut s = Matrix4::zeros();
        for r in 0..2 {
            for col in 0..2 {
                s[(r, col)] = -a[(r, col)];
            }
        }
        s[(0, 2)] = b;
        s[(1, 3)] = d;
        s[(2, 0)] = -b;
        s[(3, 1)] = -d;
        s
    }
}

/// W̃*·S·W for forward solution W at λ and adjoint solution W̃ at λ̄.
pub fn duality_pairing<O: Operator + ?Sized>(op: &O, x: f64, wt: &CVec4, w: &CVec4) -> C64 {
    let s = op.duality_form(x).map(|v| c(v, 0.0));
    (wt.adjoint() * s * w)[(0, 0)]
}

/// The linearization about a computed profile.
#[derive(Debug, Clone)]
pub struct SpectralProblem<'a> {
    pub profile: &'a Profile,
    pub params: ModelParams,
    pub s: f64,
    limits: [Coeffs; 2],
}

fn side_index(side: Side) -> usize {
    match side {
        Side::Minus => 0,
        Side::Plus => 1,
    }
}

impl<'a> SpectralProblem<'a> {
    pub fn new(profile: &'a Profile) -> Self {
        let params = profile.params.clone();
        let s = profile.wave.s;
        let at = |u: f64, z: f64| coeffs_at(&params, s, [u, z], [0.0, 0.0]);
        let limits = [at(profile.wave.u_minus, 0.0), at(profile.wave.u_plus, 1.0)];
        SpectralProblem {
            profile,
            params,
            s,
            limits,
        }
    }

    /// α(±∞) = f_u(u±, z±) − s.
    pub fn alpha(&self, side: Side) -> f64 {
        self.limits[side_index(side)].a[(0, 0)]
    }

    /// kφ(u±).
    pub fn reaction_gap(&self, side: Side) -> f64 {
        -self.limits[side_index(side)].c[(1, 1)]
    }

    pub fn alpha_beta(&self, x: f64) -> (f64, f64) {
        let k = self.coeffs(x);
        (k.a[(0, 0)], k.a[(0, 1)])
    }
}

fn coeffs_at(p: &ModelParams, s: f64, w: [f64; 2], dw: [f64; 2]) -> Coeffs {
    let [u, z] = w;
    let fl = p.flux.eval(u, z);
    let (phi, dphi) = p.ignition.eval(u);
    let alpha = fl.f_u - s;
    let beta = fl.f_z;
    let dalpha = fl.f_uu * dw[0] + fl.f_uz * dw[1];
    let dbeta = fl.f_uz * dw[0] + fl.f_zz * dw[1];
    let r = p.k * dphi * z;
    Coeffs {
        a: Matrix2::new(alpha, beta, 0.0, -s),
        da: Matrix2::new(dalpha, dbeta, 0.0, 0.0),
        c: Matrix2::new(p.q * r, p.q * p.k * phi, -r, -p.k * phi),
    }
}

impl Operator for SpectralProblem<'_> {
    fn coeffs(&self, x: f64) -> Coeffs {
        let pt = self.profile.eval(x);
        coeffs_at(&self.params, self.s, [pt.w[0], pt.w[1]], [pt.dw[0], pt.dw[1]])
    }

    fn limit(&self, side: Side) -> Coeffs {
        self.limits[side_index(side)]
    }

    fn diffusion(&self) -> (f64, f64) {
        (self.params.b, self.params.d)
    }

    fn x_max(&self) -> f64 {
        self.profile.x_max()
    }
}

/// Adds a localized potential g(x)·I to C (a synthetic instability).
#[derive(Debug, Clone, Copy)]
pub struct Planted<'a, O: Operator> {
    pub inner: &'a O,
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

impl<O: Operator> Planted<'_, O> {
    pub fn potential(&self, x: f64) -> f64 {
        let t = (x - self.center) / self.width;
        self.amplitude * (-t * t).exp()
    }
}

impl<O: Operator> Operator for Planted<'_, O> {
    fn coeffs(&self, x: f64) -> Coeffs {
        let mut k = self.inner.coeffs(x);
        let g = self.potential(x);
        k.c[(0, 0)] += g;
        k.c[(1, 1)] += g;
        k
    }
    fn limit(&self, side: Side) -> Coeffs {
        self.inner.limit(side)
    }
    fn diffusion(&self) -> (f64, f64) {
        self.inner.diffusion()
    }
    fn x_max(&self) -> f64 {
        self.inner.x_max()
    }
}

/// The operator with coefficients frozen at one end state.
#[derive(Debug, Clone, Copy)]
pub struct Frozen<'a, O: Operator> {
    pub inner: &'a O,
    pub side: Side,
}

impl<O: Operator> Operator for Frozen<'_, O> {
    fn coeffs(&self, _x: f64) -> Coeffs {
        self.inner.limit(self.side)
    }
    fn limit(&self, _side: Side) -> Coeffs {
        self.inner.limit(self.side)
    }
    fn diffusion(&self) -> (f64, f64) {
        self.inner.diffusion()
    }
    fn x_max(&self) -> f64 {
        self.inner.x_max()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Fluid,
    Reaction,
}

/// One eigenpair of a limiting matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub kind: ModeKind,
    /// Sign in front of the principal square root.
    pub branch: i8,
    pub mu: C64,
    pub v: [C64; 4],
    /// μ → 0 as λ → 0.
    pub slow: bool,
    /// Eigenvector taken from a dense null-space solve (collision).
    pub fallback: bool,
}

impl Mode {
    pub fn vector(&self) -> CVec4 {
        CVec4::from(self.v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    pub side: Side,
    pub lambda: C64,
    pub modes: Vec<Mode>,
    pub warnings: Vec<String>,
}

impl ModeSet {
    pub fn stable(&self) -> Vec<&Mode> {
        self.modes.iter().filter(|m| m.mu.re < 0.0).collect()
    }
    pub fn unstable(&self) -> Vec<&Mode> {
        self.modes.iter().filter(|m| m.mu.re > 0.0).collect()
    }
    pub fn get(&self, kind: ModeKind, branch: i8) -> &Mode {
        self.modes
            .iter()
            .find(|m| m.kind == kind && m.branch == branch)
            .expect("mode sets always hold both branches of both kinds")
    }
}

/// Roots of aμ² + bμ + c = 0 labeled (+, −) by the sign in front of the
/// principal root of the discriminant, computed without cancellation.
pub fn quadratic_roots(a: f64, b: C64, cc: C64) -> (C64, C64) {
    let sq = csqrt(b * b - 4.0 * a * cc);
    let plus = -b + sq;
    let minus = -b - sq;
    if plus.norm() >= minus.norm() {
        let r1 = plus / (2.0 * a);
        let r2 = if r1.norm() > 0.0 { cc / (a * r1) } else { minus / (2.0 * a) };
        (r1, r2)
    } else {
        let r2 = minus / (2.0 * a);
        let r1 = if r2.norm() > 0.0 { cc / (a * r2) } else { plus / (2.0 * a) };
        (r1, r2)
    }
}

/// Right null vector of a (numerically) singular complex 4×4 matrix.
pub fn null_vector(m: &CMat4) -> CVec4 {
    let svd = m.svd(true, true);
    let k = svd.singular_values.imin();
    svd.v_t.unwrap().row(k).adjoint()
}

/// Eigenvalues of a complex 4×4 matrix from its Schur form.
pub fn dense_eigenvalues(m: &CMat4) -> [C64; 4] {
    let t = m.schur().unpack().1;
    [t[(0, 0)], t[(1, 1)], t[(2, 2)], t[(3, 3)]]
}

/// Closed-form limiting modes from the block-triangular structure.
pub fn limiting_modes<O: Operator + ?Sized>(op: &O, side: Side, lam: C64) -> ModeSet {
    let k = op.limit(side);
    let (b, d) = op.diffusion();
    let m = op.limit_matrix(side, lam);
    let mut warnings = Vec::new();
    let (a11, a12, a22) = (k.a[(0, 0)], k.a[(0, 1)], k.a[(1, 1)]);
    let (c11, c12, c22) = (k.c[(0, 0)], k.c[(0, 1)], k.c[(1, 1)]);
    // Fluid: bμ² − a11μ − (λ − c11) = 0; reaction: dμ² − a22μ − (λ − c22) = 0.
    let (f_p, f_m) = quadratic_roots(b, c(-a11, 0.0), -(lam - c11));
    let (r_p, r_m) = quadratic_roots(d, c(-a22, 0.0), -(lam - c22));
    let f_slow = c11 == 0.0;
    let r_slow = c22 == 0.0;
    // At λ = 0 the slow root is the one that vanishes: for bμ² − aμ = 0 it is
    // the branch whose −b ± |b| cancels.
    let slow_branch = |lin: f64| if -lin > 0.0 { -1 } else { 1 };
    let mut modes = Vec::with_capacity(4);
    for (mu, br) in [(f_p, 1i8), (f_m, -1)] {
        let v = [c(1.0, 0.0), c(0.0, 0.0), mu, c(0.0, 0.0)];
        modes.push(Mode {
            kind: ModeKind::Fluid,
            branch: br,
            mu,
            v,
            slow: f_slow && br == slow_branch(-a11),
            fallback: false,
        });
    }
    for (mu, br) in [(r_p, 1i8), (r_m, -1)] {
        let num = mu * a12 - c12;
        let den = mu * mu * b - mu * a11 + c11 - lam;
        let scale = (mu * mu * b).norm() + (mu * a11).norm() + c11.abs() + lam.norm() + 1.0;
        let (v, fallback) = if num.norm() == 0.0 {
            ([c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), mu], false)
        } else if den.norm() > 1e-8 * scale {
            let u = num / den;
            ([u, c(1.0, 0.0), mu * u, mu], false)
        } else {
            warnings.push(format!(
                "{} side: fluid/reaction eigenvalue collision at λ = {lam}; dense eigenvector used",
                side.as_str()
            ));
            let mut v = null_vector(&(m - CMat4::identity() * mu));
            if v[1].norm() > 0.0 {
                v /= v[1];
            }
            ([v[0], v[1], v[2], v[3]], true)
        };
        modes.push(Mode {
            kind: ModeKind::Reaction,
            branch: br,
            mu,
            v,
            slow: r_slow && br == slow_branch(-a22),
            fallback,
        });
    }
    ModeSet {
        side,
        lambda: lam,
        modes,
        warnings,
    }
}

/// Adjoint limiting modes, from a dense solve of the adjoint limit matrix
/// at λ̄. Eigenvalues are −conj of the forward ones.
pub fn adjoint_limiting_modes<O: Operator + ?Sized>(op: &O, side: Side, lam: C64) -> Vec<(C64, CVec4)> {
    let m = op.adjoint_limit_matrix(side, lam);
    let fwd = limiting_modes(op, side, lam);
    fwd.modes
        .iter()
        .map(|md| {
            let mu = -md.mu.conj();
            let mut v = null_vector(&(m - CMat4::identity() * mu));
            let k = v.icamax();
            v /= v[k];
            (mu, v)
        })
        .collect()
}

/// Counts (stable, unstable, center) eigenvalues of a limiting matrix.
pub fn splitting<O: Operator + ?Sized>(op: &O, side: Side, lam: C64) -> (usize, usize, usize) {
    let ms = limiting_modes(op, side, lam);
    let tol = 1e-12;
    let st = ms.modes.iter().filter(|m| m.mu.re < -tol).count();
    let un = ms.modes.iter().filter(|m| m.mu.re > tol).count();
    (st, un, 4 - st - un)
}

/// Formal power series in λ truncated at order `N - 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Jet<const N: usize>([f64; N]);

impl<const N: usize> Jet<N> {
    fn constant(v: f64) -> Self {
        let mut a = [0.0; N];
        a[0] = v;
        Jet(a)
    }
    fn add(&self, o: &Self) -> Self {
        let mut a = self.0;
        for i in 0..N {
            a[i] += o.0[i];
        }
        Jet(a)
    }
    fn scale(&self, k: f64) -> Self {
        Jet(self.0.map(|v| v * k))
    }
    fn mul(&self, o: &Self) -> Self {
        let mut a = [0.0; N];
        for i in 0..N {
            for j in 0..N - i {
                a[i + j] += self.0[i] * o.0[j];
            }
        }
        Jet(a)
    }
    /// Quotient, cancelling common leading zeros; None if the divisor's
    /// leading order exceeds the dividend's.
    fn div(&self, o: &Self) -> Option<Self> {
        let tiny = 1e-14;
        let lead = |j: &Self| j.0.iter().position(|v| v.abs() > tiny);
        let Some(ln) = lead(self) else {
            return Some(Jet([0.0; N]));
        };
        let ld = lead(o)?;
        if ld > ln {
            return None;
        }
        let num: Vec<f64> = self.0[ld..].to_vec();
        let den: Vec<f64> = o.0[ld..].to_vec();
        let m = num.len();
        let mut q = [0.0; N];
        for i in 0..m {
            let mut acc = num[i];
            for j in 1..=i {
                acc -= den[j] * q[i - j];
            }
            q[i] = acc / den[0];
        }
        // Orders beyond the shifted length are unknown; leave zero.
        Some(Jet(q))
    }
}

/// Taylor coefficients of μ solving aμ² + bμ − λ = 0 with μ(0) = 0.
pub fn slow_root_series(a: f64, b: f64, order: usize) -> Vec<f64> {
    let mut mu = vec![0.0; order + 1];
    for n in 1..=order {
        let mut acc = if n == 1 { 1.0 } else { 0.0 };
        for i in 1..n {
            acc -= a * mu[i] * mu[n - i];
        }
        mu[n] = acc / b;
    }
    mu
}

/// Second-order expansion of one slow mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowModeExpansion {
    pub side: Side,
    pub kind: ModeKind,
    pub branch: i8,
    /// μ(λ) ≈ c[1]λ + c[2]λ² + c[3]λ³ (c[0] = 0).
    pub mu: Vec<f64>,
    /// Eigenvector coefficients by order, in (u, z, u′, z′).
    pub vector: Vec<[f64; 4]>,
}

impl SlowModeExpansion {
    pub fn eval_mu(&self, lam: C64, order: usize) -> C64 {
        let mut acc = c(0.0, 0.0);
        let mut p = c(1.0, 0.0);
        for k in 0..=order.min(self.mu.len() - 1) {
            acc += p * self.mu[k];
            p *= lam;
        }
        acc
    }
}

/// Slow-mode Taylor expansions by implicit differentiation of the exact
/// characteristic polynomials.
pub fn slow_mode_expansion<O: Operator + ?Sized>(op: &O, side: Side) -> Vec<SlowModeExpansion> {
    let k = op.limit(side);
    let (b, d) = op.diffusion();
    let (a11, a12, a22) = (k.a[(0, 0)], k.a[(0, 1)], k.a[(1, 1)]);
    let (c11, c12, c22) = (k.c[(0, 0)], k.c[(0, 1)], k.c[(1, 1)]);
    let mut out = Vec::new();
    if c11 == 0.0 && a11 != 0.0 {
        let mu = slow_root_series(b, -a11, 3);
        let vector = (0..3)
            .map(|n| {
                let mut v = [0.0; 4];
                if n == 0 {
                    v[0] = 1.0;
                }
                v[2] = mu[n];
                v
            })
            .collect();
        out.push(SlowModeExpansion {
            side,
            kind: ModeKind::Fluid,
            branch: if a11 > 0.0 { -1 } else { 1 },
            mu,
            vector,
        });
    }
    if c22 == 0.0 && a22 != 0.0 {
        let mu = slow_root_series(d, -a22, 3);
        let m = Jet::<4>([mu[0], mu[1], mu[2], mu[3]]);
        let lam = Jet::<4>([0.0, 1.0, 0.0, 0.0]);
        let num = m.scale(a12).add(&Jet::constant(-c12));
        let den = m.mul(&m).scale(b).add(&m.scale(-a11)).add(&Jet::constant(c11)).add(&lam.scale(-1.0));
        let u = num.div(&den).unwrap_or(Jet([f64::NAN; 4]));
        let mu_u = m.mul(&u);
        let vector = (0..3)
            .map(|n| [u.0[n], if n == 0 { 1.0 } else { 0.0 }, mu_u.0[n], m.0[n]])
            .collect();
        out.push(SlowModeExpansion {
            side,
            kind: ModeKind::Reaction,
            branch: if a22 < 0.0 { 1 } else { -1 },
            mu,
            vector,
        });
    }
    out
}

/// Dispersion curves λ(ξ) of the limiting matrices (μ = iξ), from the block
/// symbols directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionCurves {
    pub xi: Vec<f64>,
    pub fluid_minus: Vec<C64>,
    pub fluid_plus: Vec<C64>,
    pub reaction_minus: Vec<C64>,
    pub reaction_plus: Vec<C64>,
    /// Ω_η parameters: Re λ ≤ −η1|Im λ| on |Im λ| ≥ 1 and Re λ ≤ −η2|Im λ|²
    /// on |Im λ| < 1, for every curve point.
    pub eta1: f64,
    pub eta2: f64,
    /// Largest c with Re λ ≤ −c·min(1,d)·ξ²/(1+ξ²) on every curve.
    pub envelope_const: f64,
}

impl DispersionCurves {
    pub fn all(&self) -> [(&'static str, &Vec<C64>); 4] {
        [
            ("fluid_minus", &self.fluid_minus),
            ("fluid_plus", &self.fluid_plus),
            ("reaction_minus", &self.reaction_minus),
            ("reaction_plus", &self.reaction_plus),
        ]
    }
}

pub fn dispersion<O: Operator + ?Sized>(op: &O, xi: &[f64]) -> DispersionCurves {
    let (b, d) = op.diffusion();
    let curve = |side: Side, fluid: bool| -> Vec<C64> {
        let k = op.limit(side);
        xi.iter()
            .map(|&x| {
                if fluid {
                    // b(iξ)² − a11(iξ) − (λ − c11) = 0
                    c(-b * x * x + k.c[(0, 0)], -k.a[(0, 0)] * x)
                } else {
                    c(-d * x * x + k.c[(1, 1)], -k.a[(1, 1)] * x)
                }
            })
            .collect()
    };
    let fm = curve(Side::Minus, true);
    let fp = curve(Side::Plus, true);
    let rm = curve(Side::Minus, false);
    let rp = curve(Side::Plus, false);
    let mut eta1 = f64::INFINITY;
    let mut eta2 = f64::INFINITY;
    let mut env = f64::INFINITY;
    let md = b.min(d).min(1.0);
    for cv in [&fm, &fp, &rm, &rp] {
        for (l, &x) in cv.iter().zip(xi) {
            let im = l.im.abs();
            if im >= 1.0 {
                eta1 = eta1.min(-l.re / im);
            } else if im > 0.0 {
                eta2 = eta2.min(-l.re / (im * im));
            }
            if x != 0.0 {
                env = env.min(-l.re * (1.0 + x * x) / (md * x * x));
            }
        }
    }
    DispersionCurves {
        xi: xi.to_vec(),
        fluid_minus: fm,
        fluid_plus: fp,
        reaction_minus: rm,
        reaction_plus: rp,
        eta1,
        eta2,
        envelope_const: env,
    }
}

/// Residual of the second row of the eigenvalue system after eliminating
/// the reaction terms with the z equation:
/// bu″ = λ(u + qz) − sqz′ − qdz″ + (αu)′ + (βz)′.
pub fn alternative_form_residual(
    problem: &SpectralProblem<'_>,
    x: f64,
    lam: C64,
    w: &CVec4,
    dw: &CVec4,
) -> C64 {
    let k = problem.coeffs(x);
    let p = &problem.params;
    let (alpha, beta) = (k.a[(0, 0)], k.a[(0, 1)]);
    let (dalpha, dbeta) = (k.da[(0, 0)], k.da[(0, 1)]);
    let (u, z, du, dz) = (w[0], w[1], w[2], w[3]);
    let (d2u, d2z) = (dw[2], dw[3]);
    let rhs = lam * (u + z * p.q) - dz * (problem.s * p.q) - d2z * (p.q * p.d)
        + u * dalpha
        + du * alpha
        + z * dbeta
        + dz * beta;
    d2u * p.b - rhs
}

/// Ensures a λ lies in the closed right half-plane or a small disk about 0.
pub fn check_lambda(lam: C64) -> Result<()> {
    if !lam.re.is_finite() || !lam.im.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite λ = {lam}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hugoniot::WaveProblem;
    use crate::numerics::ode::{dp45_dense, Dp45Options};
    use crate::profile::{compute_profile, ProfileOptions};
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn dc_profile() -> &'static Profile {
        static P: OnceLock<Profile> = OnceLock::new();
        P.get_or_init(|| {
            let p = ModelParams::dc();
            let w = WaveProblem::dc_strong(&p).unwrap();
            compute_profile(&w, &p, &ProfileOptions::default()).unwrap()
        })
    }

    #[test]
    fn first_order_rows() {
        let sp = SpectralProblem::new(dc_profile());
        let m = sp.matrix(0.3, c(0.7, -0.2));
        assert_eq!(m[(0, 2)], c(1.0, 0.0));
        assert_eq!(m[(1, 3)], c(1.0, 0.0));
        for col in [0, 1, 3] {
            assert_eq!(m[(0, col)], c(0.0, 0.0));
        }
        assert!((m[(3, 3)].re + 7.5).abs() < 1e-14);
    }

    #[test]
    fn coefficients_approach_limits() {
        let sp = SpectralProblem::new(dc_profile());
        let lam = c(0.4, 0.9);
        for side in [Side::Minus, Side::Plus] {
            let x = side.sign() * sp.x_max();
            let e = (sp.matrix(x, lam) - sp.limit_matrix(side, lam)).camax();
            assert!(e < 1e-6, "{side:?}: {e:e}");
        }
    }

    #[test]
    fn plus_modes_at_zero() {
        let sp = SpectralProblem::new(dc_profile());
        let ms = limiting_modes(&sp, Side::Plus, c(0.0, 0.0));
        let f: Vec<f64> = ms.modes.iter().filter(|m| m.kind == ModeKind::Fluid).map(|m| m.mu.re).collect();
        let r: Vec<f64> = ms.modes.iter().filter(|m| m.kind == ModeKind::Reaction).map(|m| m.mu.re).collect();
        assert!(f.iter().any(|v| v.abs() < 1e-15) && f.iter().any(|v| (v + 1.5).abs() < 1e-14));
        assert!(r.iter().any(|v| v.abs() < 1e-15) && r.iter().any(|v| (v + 7.5).abs() < 1e-14));
    }

    #[test]
    fn minus_reaction_modes_at_zero() {
        let sp = SpectralProblem::new(dc_profile());
        let ms = limiting_modes(&sp, Side::Minus, c(0.0, 0.0));
        let kphi = sp.reaction_gap(Side::Minus);
        let p = ms.get(ModeKind::Reaction, 1).mu.re;
        let m = ms.get(ModeKind::Reaction, -1).mu.re;
        assert!(p > 0.0 && m < 0.0);
        for mu in [p, m] {
            assert!((0.2 * mu * mu + 1.5 * mu - kphi).abs() < 1e-13);
        }
    }

    #[test]
    fn reaction_taylor_coefficients() {
        let sp = SpectralProblem::new(dc_profile());
        let ex = slow_mode_expansion(&sp, Side::Plus);
        let r = ex.iter().find(|e| e.kind == ModeKind::Reaction).unwrap();
        assert_eq!(r.mu[1], 1.0 / 1.5);
        assert!((r.mu[2] + 0.2 / 3.375).abs() < 1e-15);
        let f = ex.iter().find(|e| e.kind == ModeKind::Fluid).unwrap();
        assert!((f.mu[1] - 1.0 / 1.5).abs() < 1e-15);
        assert!((f.mu[2] - 1.0 / (-1.5f64).powi(3)).abs() < 1e-15);
        // Slow fluid vector at λ = 0 is (1, 0, 0, 0).
        assert_eq!(f.vector[0], [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn taylor_remainder_is_cubic() {
        let sp = SpectralProblem::new(dc_profile());
        for ex in slow_mode_expansion(&sp, Side::Plus).iter().chain(&slow_mode_expansion(&sp, Side::Minus)) {
            let ms = |lam: C64| limiting_modes(&sp, ex.side, lam).get(ex.kind, ex.branch).mu;
            let rem = |l: f64| (ms(c(l, 0.0)) - ex.eval_mu(c(l, 0.0), 2)).norm();
            for k in 2..4 {
                let l = 10f64.powi(-k);
                let ratio = rem(l) / rem(l / 10.0);
                assert!((ratio / 1000.0 - 1.0).abs() < 0.05, "{:?} {:?}: ratio {ratio}", ex.side, ex.kind);
            }
        }
    }

    #[test]
    fn dispersion_curves() {
        let sp = SpectralProblem::new(dc_profile());
        let xi: Vec<f64> = (-200..=200).map(|i| i as f64 * 0.05).collect();
        let dc = dispersion(&sp, &xi);
        let i0 = 200;
        assert_eq!(dc.fluid_plus[i0], c(0.0, 0.0));
        assert_eq!(dc.reaction_plus[i0], c(0.0, 0.0));
        assert!((dc.reaction_minus[i0].re + sp.reaction_gap(Side::Minus)).abs() < 1e-15);
        for (_, cv) in dc.all() {
            assert!(cv.iter().all(|l| l.re <= 0.0));
        }
        assert!(dc.eta1 > 0.0 && dc.eta2 > 0.0 && dc.envelope_const > 0.0);
    }

    #[test]
    fn adjoint_eigenvalues_are_negated_conjugates() {
        let sp = SpectralProblem::new(dc_profile());
        let lam = c(0.3, 0.8);
        for side in [Side::Minus, Side::Plus] {
            let m = sp.adjoint_limit_matrix(side, lam);
            for (mu, v) in adjoint_limiting_modes(&sp, side, lam) {
                assert!(((m - CMat4::identity() * mu) * v).norm() < 1e-10 * v.norm());
            }
        }
        // Dual slow fluid mode on the minus side ∝ (1, q).
        let v = adjoint_limiting_modes(&sp, Side::Minus, c(0.0, 0.0))
            .into_iter()
            .find(|(mu, _)| mu.norm() < 1e-12)
            .unwrap()
            .1;
        assert!((v[1] / v[0] - 0.5).norm() < 1e-12);
    }

    #[test]
    fn alternative_form_along_solution() {
        let sp = SpectralProblem::new(dc_profile());
        let lam = c(0.5, 0.5);
        let xs: Vec<f64> = (0..=40).map(|i| -2.0 + 0.1 * i as f64).collect();
        let w0 = CVec4::new(c(1.0, 0.0), c(0.2, 0.1), c(-0.3, 0.0), c(0.1, 0.0));
        let opts = Dp45Options { rtol: 1e-12, atol: 1e-14, ..Default::default() };
        let ws = dp45_dense(|x, w| sp.matrix(x, lam) * w, &xs, w0, &opts).unwrap();
        for (x, w) in xs.iter().zip(&ws) {
            let dw = sp.matrix(*x, lam) * w;
            let r = alternative_form_residual(&sp, *x, lam, w, &dw);
            assert!(r.norm() < 1e-8 * w.norm(), "x = {x}: {r}");
        }
    }

    #[test]
    fn duality_pairing_is_constant() {
        let sp = SpectralProblem::new(dc_profile());
        let opts = Dp45Options { rtol: 1e-12, atol: 1e-15, ..Default::default() };
        let xs: Vec<f64> = (0..=12).map(|i| -3.0 + 0.5 * i as f64).collect();
        let mut worst = 0.0f64;
        for t in 0..100usize {
            let h = |b: usize| crate::numerics::halton(t + 1, b);
            let lam = c(2.0 * h(2), 4.0 * h(3) - 2.0);
            let w0 = CVec4::new(c(1.0, 0.0), c(h(5) - 0.5, 0.0), c(h(7), 0.3), c(0.0, h(11)));
            let v0 = CVec4::new(c(h(13), 0.0), c(1.0, -0.4), c(0.2, h(17)), c(h(19) - 0.5, 0.0));
            let ws = dp45_dense(|x, w| sp.matrix(x, lam) * w, &xs, w0, &opts).unwrap();
            let vs = dp45_dense(|x, v| sp.adjoint_matrix(x, lam) * v, &xs, v0, &opts).unwrap();
            let p0 = duality_pairing(&sp, xs[0], &vs[0], &ws[0]);
            for i in 1..xs.len() {
                let p = duality_pairing(&sp, xs[i], &vs[i], &ws[i]);
                let scale = p0.norm().max(vs[i].norm() * ws[i].norm());
                worst = worst.max((p - p0).norm() / scale);
            }
        }
        assert!(worst < 1e-8, "worst relative drift {worst:e}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn closed_form_matches_dense(re in 0.0f64..5.0, im in -5.0f64..5.0) {
            let sp = SpectralProblem::new(dc_profile());
            let lam = c(re, im);
            for side in [Side::Minus, Side::Plus] {
                let ms = limiting_modes(&sp, side, lam);
                let dense = dense_eigenvalues(&sp.limit_matrix(side, lam));
                let m = sp.limit_matrix(side, lam);
                for md in &ms.modes {
                    let e = dense.iter().map(|z| (z - md.mu).norm()).fold(f64::INFINITY, f64::min);
                    prop_assert!(e < 1e-10 * md.mu.norm().max(1.0), "{:?} {:?}", side, md);
                    let v = md.vector();
                    prop_assert!(((m - CMat4::identity() * md.mu) * v).norm() < 1e-10 * v.norm());
                }
                if re > 1e-9 {
                    prop_assert_eq!(splitting(&sp, side, lam), (2, 2, 0));
                }
                let mc = limiting_modes(&sp, side, lam.conj());
                for (a, b) in ms.modes.iter().zip(&mc.modes) {
                    prop_assert!((a.mu.conj() - b.mu).norm() < 1e-14 * (1.0 + a.mu.norm()));
                }
            }
        }
    }
}
