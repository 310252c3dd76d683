//! Resolvent kernel of L − λ, its low-frequency pole, the excited term and
//! the time-domain Green function by inverse Laplace transform.
//!
//! In phase variables W = (U, U′) the kernel 𝒢(x,y) = (G, ∂ₓG) is a
//! decaying solution on each side of x = y with jump (0, B⁻¹) at x = y:
//!
//!   𝒢 = Φ⁺(x)a (x > y),  𝒢 = Φ⁻(x)b (x < y),  Φ⁺(y)a − Φ⁻(y)b = (0; B⁻¹),
//!
//! which is the projection form Π±_y S⁻¹(y) written as a direct solve.

use nalgebra::{Matrix2, Matrix4, SMatrix};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::evans::default_r0;
use crate::numerics::ode::{dp45, Dp45Options};
use crate::numerics::{c, errfn, par_map};
use crate::profile::Side;
use crate::spectral::{dense_eigenvalues, first_order, null_vector, CMat4, CVec4, Coeffs, Operator, SpectralProblem, C64};

pub type CMat42 = SMatrix<C64, 4, 2>;
pub type CMat2 = Matrix2<C64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolventOptions {
    /// Largest Magnus step.
    pub max_step: f64,
    /// Smallest admissible singular value of the matching matrix.
    pub singular_tol: f64,
}

impl Default for ResolventOptions {
    fn default() -> Self {
        ResolventOptions {
            max_step: 0.05,
            singular_tol: 1e-10,
        }
    }
}

const GAUSS: f64 = 0.288_675_134_594_812_9; // 1/(2√3)

/// One step of the fourth-order Magnus integrator with its two Gauss-point
/// coefficient sets (λ-independent, so they are shared by all λ).
#[derive(Debug, Clone, Copy)]
struct MagnusStep {
    h: f64,
    lo: Coeffs,
    hi: Coeffs,
}

impl MagnusStep {
    fn new<O: Operator + ?Sized>(op: &O, a: f64, b: f64) -> Self {
        let m = 0.5 * (a + b);
        let h = b - a;
        MagnusStep {
            h,
            lo: op.coeffs(m - GAUSS * h),
            hi: op.coeffs(m + GAUSS * h),
        }
    }

    /// Propagator from a to b (forward) or from b to a.
    fn propagator(&self, diff: (f64, f64), lam: C64, forward: bool) -> CMat4 {
        let a1 = first_order(&self.lo, diff, lam);
        let a2 = first_order(&self.hi, diff, lam);
        let h = self.h;
        let k = 3f64.sqrt() / 12.0 * h * h;
        let omega = (a1 + a2) * c(0.5 * h, 0.0) + (a2 * a1 - a1 * a2) * c(k, 0.0);
        if forward { omega.exp() } else { (-omega).exp() }
    }
}

fn steps_between<O: Operator + ?Sized>(op: &O, a: f64, b: f64, max_step: f64) -> Vec<MagnusStep> {
    let n = ((b - a).abs() / max_step).ceil().max(1.0) as usize;
    (0..n)
        .map(|i| {
            let x0 = a + (b - a) * i as f64 / n as f64;
            let x1 = a + (b - a) * (i + 1) as f64 / n as f64;
            MagnusStep::new(op, x0, x1)
        })
        .collect()
}

/// Kernel grid with cached Magnus coefficients.
#[derive(Debug, Clone)]
pub struct KernelGrid {
    pub x: Vec<f64>,
    /// +X down to x_last.
    outer_plus: Vec<MagnusStep>,
    /// −X up to x_0.
    outer_minus: Vec<MagnusStep>,
    /// Steps of interval j, ascending.
    inner: Vec<Vec<MagnusStep>>,
    diffusion: (f64, f64),
}

impl KernelGrid {
    pub fn new<O: Operator + ?Sized>(op: &O, xs: &[f64], opts: &ResolventOptions) -> Result<Self> {
        if xs.len() < 2 {
            return Err(Error::InvalidInput("kernel grid needs at least two nodes".into()));
        }
        let xm = op.x_max();
        if xs.windows(2).any(|w| w[1] <= w[0]) || xs[0] < -xm || xs[xs.len() - 1] > xm {
            return Err(Error::InvalidInput(
                "kernel grid must be increasing and inside the profile domain".into(),
            ));
        }
        let h = opts.max_step;
        Ok(KernelGrid {
            x: xs.to_vec(),
            outer_plus: steps_between(op, xm, xs[xs.len() - 1], h),
            outer_minus: steps_between(op, -xm, xs[0], h),
            inner: xs.windows(2).map(|w| steps_between(op, w[0], w[1], h)).collect(),
            diffusion: op.diffusion(),
        })
    }

    pub fn uniform<O: Operator + ?Sized>(op: &O, l: f64, n: usize, opts: &ResolventOptions) -> Result<Self> {
        let xs: Vec<f64> = (0..=n).map(|i| -l + 2.0 * l * i as f64 / n as f64).collect();
        Self::new(op, &xs, opts)
    }
}

/// Orthonormal basis of the invariant subspace of the limiting matrix
/// for its two eigenvalues of smallest (plus side) or largest (minus side)
/// real part, from the spectral projector onto them.
pub fn boundary_subspace<O: Operator + ?Sized>(op: &O, side: Side, lam: C64) -> CMat42 {
    let m = op.limit_matrix(side, lam);
    let mut ev = dense_eigenvalues(&m);
    ev.sort_by(|a, b| a.re.total_cmp(&b.re));
    let rest = match side {
        Side::Plus => [ev[2], ev[3]],
        Side::Minus => [ev[0], ev[1]],
    };
    let id = CMat4::identity();
    let p = (m - id * rest[0]) * (m - id * rest[1]);
    let svd = p.svd(true, false);
    let u = svd.u.expect("requested U");
    let mut idx: Vec<usize> = (0..4).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    CMat42::from_columns(&[u.column(idx[0]).into_owned(), u.column(idx[1]).into_owned()])
}

fn qr42(y: &CMat42) -> (CMat42, CMat2) {
    let qr = y.qr();
    (qr.q(), qr.r())
}

/// Decaying solutions of one side sampled on the kernel grid.
struct SideTransport {
    /// Orthonormal bases at each node.
    q: Vec<CMat42>,
    /// Plus: solution through q[j+1] equals q[j]·r[j] at x_j.
    /// Minus: solution through q[j] equals q[j+1]·r[j] at x_{j+1}.
    r: Vec<CMat2>,
}

fn apply(steps: &[MagnusStep], diff: (f64, f64), lam: C64, forward: bool, y: CMat42) -> CMat42 {
    let mut y = y;
    let it: Box<dyn Iterator<Item = &MagnusStep>> = if forward {
        Box::new(steps.iter())
    } else {
        Box::new(steps.iter().rev())
    };
    for st in it {
        y = st.propagator(diff, lam, forward) * y;
    }
    y
}

fn transport_side<O: Operator + ?Sized>(op: &O, grid: &KernelGrid, side: Side, lam: C64) -> SideTransport {
    let diff = grid.diffusion;
    let n = grid.x.len();
    let mut y = boundary_subspace(op, side, lam);
    let outer = match side {
        Side::Plus => &grid.outer_plus,
        Side::Minus => &grid.outer_minus,
    };
    for st in outer {
        y = qr42(&(st.propagator(diff, lam, true) * y)).0;
    }
    let mut q = vec![CMat42::zeros(); n];
    let mut r = vec![CMat2::zeros(); n - 1];
    match side {
        Side::Plus => {
            q[n - 1] = y;
            for j in (0..n - 1).rev() {
                let (qj, rj) = qr42(&apply(&grid.inner[j], diff, lam, false, q[j + 1]));
                q[j] = qj;
                r[j] = rj;
            }
        }
        Side::Minus => {
            q[0] = y;
            for j in 0..n - 1 {
                let (qj, rj) = qr42(&apply(&grid.inner[j], diff, lam, true, q[j]));
                q[j + 1] = qj;
                r[j] = rj;
            }
        }
    }
    SideTransport { q, r }
}

/// Kernel samples on a grid. Entries are indexed [y][x]; at x = y the
/// plus-side (x → y⁺) value is stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolventSample {
    pub lambda: C64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub y_index: Vec<usize>,
    pub g: Vec<Vec<[[C64; 2]; 2]>>,
    pub gx: Vec<Vec<[[C64; 2]; 2]>>,
    /// ∂ₓG(y⁺, y) − ∂ₓG(y⁻, y) for each y.
    pub jump: Vec<[[C64; 2]; 2]>,
    /// Smallest singular value of the matching matrix over all y.
    pub min_singular: f64,
}

fn arr2(m: &CMat2) -> [[C64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

fn split(v: &CMat42) -> (CMat2, CMat2) {
    (v.fixed_rows::<2>(0).into_owned(), v.fixed_rows::<2>(2).into_owned())
}

/// Resolvent kernel G_λ(x, y) on the uniform grid `xs` (x nodes) for the
/// y nodes `y_index` (indices into `xs`).
pub fn resolvent_kernel<O: Operator + ?Sized>(
    op: &O,
    lam: C64,
    xs: &[f64],
    y_index: &[usize],
    opts: &ResolventOptions,
) -> Result<ResolventSample> {
    let grid = KernelGrid::new(op, xs, opts)?;
    resolvent_kernel_on(op, &grid, lam, y_index, opts)
}

/// As [`resolvent_kernel`] on a prepared grid.
pub fn resolvent_kernel_on<O: Operator + ?Sized>(
    op: &O,
    grid: &KernelGrid,
    lam: C64,
    y_index: &[usize],
    opts: &ResolventOptions,
) -> Result<ResolventSample> {
    let xs = &grid.x;
    if let Some(&j) = y_index.iter().find(|&&j| j >= xs.len()) {
        return Err(Error::InvalidInput(format!("y index {j} outside the grid")));
    }
    if !(lam.re.is_finite() && lam.im.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite λ = {lam}")));
    }
    let plus = transport_side(op, grid, Side::Plus, lam);
    let minus = transport_side(op, grid, Side::Minus, lam);
    let (b, d) = op.diffusion();
    let mut rhs = CMat42::zeros();
    rhs[(2, 0)] = c(1.0 / b, 0.0);
    rhs[(3, 1)] = c(1.0 / d, 0.0);
    let n = xs.len();
    let mut g = Vec::with_capacity(y_index.len());
    let mut gx = Vec::with_capacity(y_index.len());
    let mut jump = Vec::with_capacity(y_index.len());
    let mut min_sv = f64::INFINITY;
    for &j in y_index {
        let mut m = CMat4::zeros();
        m.fixed_columns_mut::<2>(0).copy_from(&plus.q[j]);
        m.fixed_columns_mut::<2>(2).copy_from(&(-minus.q[j]));
        let sv = m.singular_values().min();
        min_sv = min_sv.min(sv);
        if sv < opts.singular_tol {
            return Err(Error::Singular(format!(
                "λ = {lam} is within {sv:e} (matching singular value) of an eigenvalue"
            )));
        }
        let sol = m.lu().solve(&rhs).ok_or_else(|| Error::Singular(format!("matching matrix singular at λ = {lam}")))?;
        let a: CMat2 = sol.fixed_rows::<2>(0).into_owned();
        let bb: CMat2 = sol.fixed_rows::<2>(2).into_owned();
        let mut gy = vec![[[c(0.0, 0.0); 2]; 2]; n];
        let mut gxy = vec![[[c(0.0, 0.0); 2]; 2]; n];
        let mut coef = a;
        for i in j..n {
            if i > j {
                coef = plus.r[i - 1].lu().solve(&coef).ok_or_else(|| Error::Numerical("singular transfer".into()))?;
            }
            let (u, du) = split(&(plus.q[i] * coef));
            gy[i] = arr2(&u);
            gxy[i] = arr2(&du);
        }
        let dplus = split(&(plus.q[j] * a)).1;
        let dminus = split(&(minus.q[j] * bb)).1;
        jump.push(arr2(&(dplus - dminus)));
        let mut coef = bb;
        for i in (0..j).rev() {
            coef = minus.r[i].lu().solve(&coef).ok_or_else(|| Error::Numerical("singular transfer".into()))?;
            let (u, du) = split(&(minus.q[i] * coef));
            gy[i] = arr2(&u);
            gxy[i] = arr2(&du);
        }
        g.push(gy);
        gx.push(gxy);
    }
    Ok(ResolventSample {
        lambda: lam,
        x: xs.to_vec(),
        y: y_index.iter().map(|&j| xs[j]).collect(),
        y_index: y_index.to_vec(),
        g,
        gx,
        jump,
        min_singular: min_sv,
    })
}

/// Exact kernel of a constant-coefficient operator (limits of `side`) from
/// its eigen-decomposition: 𝒢 = V e^{μ(x−y)} P± V⁻¹ (0; B⁻¹).
pub fn constant_coefficient_kernel<O: Operator + ?Sized>(op: &O, side: Side, lam: C64, x: f64, y: f64) -> Result<(CMat2, CMat2)> {
    let m = op.limit_matrix(side, lam);
    let mut ev = dense_eigenvalues(&m);
    ev.sort_by(|a, b| a.re.total_cmp(&b.re));
    let v = Matrix4::from_columns(&ev.map(|mu| null_vector(&(m - CMat4::identity() * mu))));
    let vinv = v.try_inverse().ok_or_else(|| Error::Singular("defective limiting matrix".into()))?;
    let (b, d) = op.diffusion();
    let mut rhs = CMat42::zeros();
    rhs[(2, 0)] = c(1.0 / b, 0.0);
    rhs[(3, 1)] = c(1.0 / d, 0.0);
    let mut diag = CMat4::zeros();
    let above = x >= y;
    for k in 0..4 {
        let sel = if above { k < 2 } else { k >= 2 };
        if sel {
            diag[(k, k)] = (ev[k] * (x - y)).exp() * if above { 1.0 } else { -1.0 };
        }
    }
    Ok(split(&(v * diag * vinv * rhs)))
}

/// Mass m = (u₊ − u₋) + q(z₊ − z₋) of the profile derivative.
pub fn profile_mass(problem: &SpectralProblem<'_>) -> f64 {
    let w = &problem.profile.wave;
    (w.u_plus - w.u_minus) + problem.params.q * (w.z_plus - w.z_minus)
}

/// Rank-one structure of the residue of G_λ at λ = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidueReport {
    pub rho: f64,
    pub y: Vec<f64>,
    /// Smallest |cos| between a residue column (as a function of x) and Ū′.
    pub min_cosine: f64,
    /// Second over first singular value of the stacked residue columns.
    pub rank_ratio: f64,
    /// Row vector ψ(y) with residue ≈ Ū′(x)ψ(y).
    pub y_factor: Vec<[f64; 2]>,
    /// ψ(y)·(−q, 1) for each y.
    pub y_factor_dot_reaction: Vec<f64>,
}

/// Residue of G_λ at 0 from the average of λG_λ over λ = ±ρ, ±iρ.
pub fn pole_structure(
    problem: &SpectralProblem<'_>,
    rho: Option<f64>,
    xs: &[f64],
    y_index: &[usize],
    opts: &ResolventOptions,
) -> Result<ResidueReport> {
    let rho = rho.unwrap_or_else(|| default_r0(problem) / 10.0);
    let lams = [c(rho, 0.0), c(-rho, 0.0), c(0.0, rho), c(0.0, -rho)];
    let grid = KernelGrid::new(problem, xs, opts)?;
    let samples: Vec<ResolventSample> = par_map(&lams, |&l| resolvent_kernel_on(problem, &grid, l, y_index, opts))
        .into_iter()
        .collect::<Result<_>>()?;
    let n = xs.len();
    let up: Vec<[f64; 2]> = xs
        .iter()
        .map(|&x| {
            let p = problem.profile.eval(x);
            [p.du(), p.dz()]
        })
        .collect();
    let upn = up.iter().map(|v| v[0] * v[0] + v[1] * v[1]).sum::<f64>().sqrt();
    let mut min_cos = f64::INFINITY;
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut yf = Vec::new();
    let mut ydot = Vec::new();
    for (k, _) in y_index.iter().enumerate() {
        let mut psi = [0.0; 2];
        for col in 0..2 {
            let r: Vec<[f64; 2]> = (0..n)
                .map(|i| {
                    let mut acc = [c(0.0, 0.0); 2];
                    for s in &samples {
                        for row in 0..2 {
                            acc[row] += s.lambda * s.g[k][i][row][col];
                        }
                    }
                    [acc[0].re / 4.0, acc[1].re / 4.0]
                })
                .collect();
            let rn = r.iter().map(|v| v[0] * v[0] + v[1] * v[1]).sum::<f64>().sqrt();
            let dot: f64 = r.iter().zip(&up).map(|(a, b)| a[0] * b[0] + a[1] * b[1]).sum();
            if rn > 0.0 {
                min_cos = min_cos.min(dot.abs() / (rn * upn));
            }
            psi[col] = dot / (upn * upn);
            cols.push(r.iter().flat_map(|v| [v[0], v[1]]).collect());
        }
        ydot.push(-problem.params.q * psi[0] + psi[1]);
        yf.push(psi);
    }
    let mat = nalgebra::DMatrix::from_fn(2 * n, cols.len(), |i, j| cols[j][i]);
    let sv = mat.singular_values();
    let mut s: Vec<f64> = sv.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(ResidueReport {
        rho,
        y: y_index.iter().map(|&j| xs[j]).collect(),
        min_cosine: min_cos,
        rank_ratio: if s.len() > 1 && s[0] > 0.0 { s[1] / s[0] } else { 0.0 },
        y_factor: yf,
        y_factor_dot_reaction: ydot,
    })
}

/// Bounded adjoint zero-modes and the excited term e(y,t) of a strong
/// detonation (α⁻ > 0, α⁺ < 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitedKernel {
    pub alpha_minus: f64,
    pub alpha_plus: f64,
    pub s: f64,
    pub b: f64,
    pub d: f64,
    pub q: f64,
    pub mass: f64,
    /// π_f⁻ = (1, q)/m for y ≤ 0.
    pub pi_f_minus: [f64; 2],
    /// π_r⁺ on the grid `y_plus`; π_f⁺ = (1, q)/m − π_r⁺.
    pub y_plus: Vec<f64>,
    pub pi_r_plus: Vec<[f64; 2]>,
}

impl ExcitedKernel {
    pub fn new(problem: &SpectralProblem<'_>, h: f64) -> Result<Self> {
        let am = problem.alpha(Side::Minus);
        let ap = problem.alpha(Side::Plus);
        if !(am > 0.0 && ap < 0.0) {
            return Err(Error::InvalidInput(format!(
                "excited term implemented for strong detonations (α⁻ = {am}, α⁺ = {ap})"
            )));
        }
        let q = problem.params.q;
        let m = profile_mass(problem);
        if m.abs() < 1e-12 {
            return Err(Error::Singular("profile derivative has zero mass".into()));
        }
        // Fluid and reaction dual directions at +∞: (1, β/α̂) and (0, 1).
        let lp = problem.limit(Side::Plus);
        let beta = lp.a[(0, 1)];
        let ahat = ap + problem.s;
        let ratio = if beta == 0.0 { 0.0 } else { beta / ahat };
        if !ratio.is_finite() {
            return Err(Error::Singular("sonic plus state with coupled flux".into()));
        }
        let c_r = (q - ratio) / m;
        let xm = problem.x_max();
        let n = (xm / h).ceil() as usize;
        let ys: Vec<f64> = (0..=n).map(|i| xm * (1.0 - i as f64 / n as f64)).collect();
        let o = Dp45Options { rtol: 1e-12, atol: 1e-15, ..Default::default() };
        let mut v = CVec4::new(c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0));
        let mut vals = vec![[c_r * v[0].re, c_r * v[1].re]];
        for w in ys.windows(2) {
            v = dp45(|x, v: &CVec4| problem.adjoint_matrix(x, c(0.0, 0.0)) * v, w[0], w[1], v, &o)?.0;
            vals.push([c_r * v[0].re, c_r * v[1].re]);
        }
        let mut y_plus = ys;
        y_plus.reverse();
        vals.reverse();
        Ok(ExcitedKernel {
            alpha_minus: am,
            alpha_plus: ap,
            s: problem.s,
            b: problem.params.b,
            d: problem.params.d,
            q,
            mass: m,
            pi_f_minus: [1.0 / m, q / m],
            y_plus,
            pi_r_plus: vals,
        })
    }

    pub fn pi_r_plus_at(&self, y: f64) -> [f64; 2] {
        let n = self.y_plus.len();
        if y <= self.y_plus[0] {
            return self.pi_r_plus[0];
        }
        if y >= self.y_plus[n - 1] {
            return self.pi_r_plus[n - 1];
        }
        let h = self.y_plus[1] - self.y_plus[0];
        let k = (((y - self.y_plus[0]) / h) as usize).min(n - 2);
        let t = (y - self.y_plus[k]) / h;
        let (a, b) = (self.pi_r_plus[k], self.pi_r_plus[k + 1]);
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    pub fn pi_f_plus_at(&self, y: f64) -> [f64; 2] {
        let r = self.pi_r_plus_at(y);
        [self.pi_f_minus[0] - r[0], self.pi_f_minus[1] - r[1]]
    }

    /// Row vector e(y, t).
    pub fn e(&self, y: f64, t: f64) -> [f64; 2] {
        if t <= 0.0 {
            return [0.0; 2];
        }
        let w = |a: f64, diff: f64| {
            let sq = (4.0 * diff * t).sqrt();
            errfn((y + a * t) / sq) - errfn((y - a * t) / sq)
        };
        if y <= 0.0 {
            let k = w(self.alpha_minus, self.b);
            [k * self.pi_f_minus[0], k * self.pi_f_minus[1]]
        } else {
            let kf = w(-self.alpha_plus, self.b);
            let kr = w(self.s, self.d);
            let pf = self.pi_f_plus_at(y);
            let pr = self.pi_r_plus_at(y);
            [kf * pf[0] + kr * pr[0], kf * pf[1] + kr * pr[1]]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenOptions {
    /// Contour λ(τ) = μ₀ − κτ² + iτ; μ₀ defaults to max(0.5, 1/t).
    pub mu0: Option<f64>,
    /// κ as a fraction of min(b/α±², d/s²).
    pub kappa_fraction: f64,
    /// Truncate where e^{Re λ·t} has fallen by e^{−tail}.
    pub tail: f64,
    pub rel_tol: f64,
    pub max_doublings: usize,
    pub resolvent: ResolventOptions,
}

impl Default for GreenOptions {
    fn default() -> Self {
        GreenOptions {
            mu0: None,
            kappa_fraction: 0.5,
            tail: 30.0,
            rel_tol: 1e-4,
            max_doublings: 6,
            resolvent: ResolventOptions::default(),
        }
    }
}

/// Parameters of the parabolic inverse-Laplace contour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IltContour {
    pub mu0: f64,
    pub kappa: f64,
    pub tau_max: f64,
    pub dtau: f64,
}

impl IltContour {
    pub fn point(&self, tau: f64) -> C64 {
        c(self.mu0 - self.kappa * tau * tau, tau)
    }
    pub fn derivative(&self, tau: f64) -> C64 {
        c(-2.0 * self.kappa * tau, 1.0)
    }
}

pub fn ilt_contour<O: Operator + ?Sized>(op: &O, t: f64, opts: &GreenOptions) -> IltContour {
    let (b, d) = op.diffusion();
    let am = op.limit(Side::Minus).a[(0, 0)];
    let ap = op.limit(Side::Plus).a[(0, 0)];
    let s = -op.limit(Side::Plus).a[(1, 1)];
    let mut k = d / (s * s);
    for a in [am, ap] {
        if a != 0.0 {
            k = k.min(b / (a * a));
        }
    }
    let kappa = opts.kappa_fraction * k;
    let mu0 = opts.mu0.unwrap_or((1.0 / t).max(0.5));
    let tau_max = ((opts.tail + mu0 * t) / (kappa * t)).sqrt();
    let dtau = (mu0 / 4.0).min(0.5 / t);
    IltContour { mu0, kappa, tau_max, dtau }
}

/// −(1/2πi)∫_Γ e^{λt} F(λ) dλ for a conjugate-symmetric vector-valued F,
/// by the trapezoid rule on τ ∈ [0, τ_max] with node doubling.
pub fn inverse_laplace<F>(f: F, t: f64, contour: &IltContour, opts: &GreenOptions) -> Result<(Vec<f64>, IltContour)>
where
    F: Fn(C64) -> Result<Vec<C64>> + Sync,
{
    let eval = |taus: &[f64]| -> Result<Vec<Vec<f64>>> {
        par_map(taus, |&tau| {
            let lam = contour.point(tau);
            let v = f(lam)?;
            let w = (lam * t).exp() * contour.derivative(tau);
            Ok(v.iter().map(|z| (w * z).im).collect())
        })
        .into_iter()
        .collect()
    };
    let mut h = contour.dtau;
    let n = (contour.tau_max / h).ceil() as usize;
    h = contour.tau_max / n as f64;
    let taus: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    let vals = eval(&taus)?;
    let dim = vals[0].len();
    let mut sum = vec![0.0; dim];
    for (i, v) in vals.iter().enumerate() {
        let wgt = if i == 0 || i == n { 0.5 } else { 1.0 };
        for k in 0..dim {
            sum[k] += wgt * v[k];
        }
    }
    let scale = -1.0 / PI;
    let mut est: Vec<f64> = sum.iter().map(|s| scale * h * s).collect();
    for _ in 0..opts.max_doublings {
        let mids: Vec<f64> = (0..(contour.tau_max / h).round() as usize).map(|i| (i as f64 + 0.5) * h).collect();
        let mv = eval(&mids)?;
        for v in &mv {
            for k in 0..dim {
                sum[k] += v[k];
            }
        }
        h /= 2.0;
        let next: Vec<f64> = sum.iter().map(|s| scale * h * s).collect();
        let diff = next.iter().zip(&est).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let mag = next.iter().map(|a| a.abs()).fold(0.0, f64::max);
        est = next;
        if diff <= opts.rel_tol * mag.max(1e-300) {
            return Ok((est, IltContour { dtau: h, ..*contour }));
        }
    }
    Err(Error::Numerical(format!(
        "inverse Laplace quadrature did not converge to {:e} at t = {t}",
        opts.rel_tol
    )))
}

/// Green function samples G(x, t; y) (2×2, real).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// [y][x] → 2×2
    pub g: Vec<Vec<[[f64; 2]; 2]>>,
    /// Excited part Ū′(x)e(y,t), when available.
    pub excited: Option<Vec<Vec<[[f64; 2]; 2]>>>,
    pub contour: IltContour,
}

/// Green function of the linearized operator on a grid, by inverse Laplace
/// transform of the resolvent kernel.
pub fn green_function<O: Operator + ?Sized>(
    op: &O,
    xs: &[f64],
    y_index: &[usize],
    t: f64,
    opts: &GreenOptions,
) -> Result<GreenSample> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("t must be positive, got {t}")));
    }
    let nx = xs.len();
    let ny = y_index.len();
    let contour = ilt_contour(op, t, opts);
    let grid = KernelGrid::new(op, xs, &opts.resolvent)?;
    let f = |lam: C64| -> Result<Vec<C64>> {
        let k = resolvent_kernel_on(op, &grid, lam, y_index, &opts.resolvent)?;
        let mut out = Vec::with_capacity(4 * nx * ny);
        for gy in &k.g {
            for m in gy {
                out.extend([m[0][0], m[0][1], m[1][0], m[1][1]]);
            }
        }
        Ok(out)
    };
    let (v, used) = inverse_laplace(f, t, &contour, opts)?;
    let mut g = vec![vec![[[0.0; 2]; 2]; nx]; ny];
    for (k, gy) in g.iter_mut().enumerate() {
        for (i, m) in gy.iter_mut().enumerate() {
            let o = 4 * (k * nx + i);
            *m = [[v[o], v[o + 1]], [v[o + 2], v[o + 3]]];
        }
    }
    Ok(GreenSample {
        t,
        x: xs.to_vec(),
        y: y_index.iter().map(|&j| xs[j]).collect(),
        g,
        excited: None,
        contour: used,
    })
}

/// Adds the excited term E = Ū′(x)e(y,t) to a Green sample of a profile.
pub fn attach_excited(sample: &mut GreenSample, problem: &SpectralProblem<'_>, ek: &ExcitedKernel) {
    let e: Vec<Vec<[[f64; 2]; 2]>> = sample
        .y
        .iter()
        .map(|&y| {
            let ey = ek.e(y, sample.t);
            sample
                .x
                .iter()
                .map(|&x| {
                    let p = problem.profile.eval(x);
                    let up = [p.du(), p.dz()];
                    [[up[0] * ey[0], up[0] * ey[1]], [up[1] * ey[0], up[1] * ey[1]]]
                })
                .collect()
        })
        .collect();
    sample.excited = Some(e);
}

/// ∫G(x,t;y)g(y)dy by inverse Laplace transform of the resolvent applied
/// to g (trapezoid rule in y over the grid nodes `y_index`).
pub fn green_apply<O: Operator + ?Sized>(
    op: &O,
    xs: &[f64],
    y_index: &[usize],
    g: &[[f64; 2]],
    t: f64,
    opts: &GreenOptions,
) -> Result<Vec<[f64; 2]>> {
    if g.len() != y_index.len() {
        return Err(Error::InvalidInput("one source value per y node required".into()));
    }
    let nx = xs.len();
    let wts: Vec<f64> = (0..y_index.len())
        .map(|k| {
            let j = y_index[k];
            let h = if j + 1 < nx { xs[j + 1] - xs[j] } else { xs[j] - xs[j - 1] };
            if k == 0 || k + 1 == y_index.len() { 0.5 * h } else { h }
        })
        .collect();
    let contour = ilt_contour(op, t, opts);
    let grid = KernelGrid::new(op, xs, &opts.resolvent)?;
    let f = |lam: C64| -> Result<Vec<C64>> {
        let k = resolvent_kernel_on(op, &grid, lam, y_index, &opts.resolvent)?;
        let mut out = vec![c(0.0, 0.0); 2 * nx];
        for (kk, gy) in k.g.iter().enumerate() {
            let src = g[kk];
            for (i, m) in gy.iter().enumerate() {
                for r in 0..2 {
                    out[2 * i + r] += (m[r][0] * src[0] + m[r][1] * src[1]) * wts[kk];
                }
            }
        }
        Ok(out)
    };
    let (v, _) = inverse_laplace(f, t, &contour, opts)?;
    Ok((0..nx).map(|i| [v[2 * i], v[2 * i + 1]]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hugoniot::WaveProblem;
    use crate::model::ModelParams;
    use crate::profile::{compute_profile, Profile, ProfileOptions};
    use crate::spectral::Frozen;
    use std::sync::OnceLock;

    fn dc_profile() -> &'static Profile {
        static P: OnceLock<Profile> = OnceLock::new();
        P.get_or_init(|| {
            let p = ModelParams::dc();
            let w = WaveProblem::dc_strong(&p).unwrap();
            compute_profile(&w, &p, &ProfileOptions::default()).unwrap()
        })
    }

    fn grid(l: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| -l + 2.0 * l * i as f64 / n as f64).collect()
    }

    #[test]
    fn constant_coefficient_self_test() {
        let sp = SpectralProblem::new(dc_profile());
        let fz = Frozen { inner: &sp, side: Side::Plus };
        let xs = grid(4.0, 80);
        let ys = [20, 40, 55];
        for lam in [c(0.5, 0.0), c(0.3, 2.0), c(2.0, -1.0)] {
            let k = resolvent_kernel(&fz, lam, &xs, &ys, &ResolventOptions::default()).unwrap();
            let mut err = 0.0f64;
            let mut mag = 0.0f64;
            for (kk, &j) in ys.iter().enumerate() {
                for (i, &x) in xs.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    let (g, _) = constant_coefficient_kernel(&fz, Side::Plus, lam, x, xs[j]).unwrap();
                    for r in 0..2 {
                        for cc in 0..2 {
                            err = err.max((g[(r, cc)] - k.g[kk][i][r][cc]).norm());
                            mag = mag.max(g[(r, cc)].norm());
                        }
                    }
                }
            }
            assert!(err < 1e-8 * mag.max(1.0), "λ = {lam}: {err:e}");
        }
    }

    #[test]
    fn jump_is_inverse_diffusion() {
        let sp = SpectralProblem::new(dc_profile());
        let xs = grid(6.0, 120);
        let k = resolvent_kernel(&sp, c(0.4, 0.7), &xs, &[30, 60, 90], &ResolventOptions::default()).unwrap();
        for j in &k.jump {
            assert!((j[0][0] - 1.0).norm() < 1e-6);
            assert!((j[1][1] - 5.0).norm() < 1e-6);
            assert!(j[0][1].norm() < 1e-6 && j[1][0].norm() < 1e-6);
        }
    }

    #[test]
    fn residue_is_translation_mode() {
        let sp = SpectralProblem::new(dc_profile());
        let xs = grid(10.0, 200);
        let ys = [40, 90, 100, 110, 160];
        let r = pole_structure(&sp, None, &xs, &ys, &ResolventOptions::default()).unwrap();
        assert!(r.min_cosine > 0.999, "{r:?}");
        assert!(r.rank_ratio < 1e-3, "{r:?}");
        // Mass conservation fixes the y-factor to −(1, q)/m everywhere.
        let m = profile_mass(&sp);
        for psi in &r.y_factor {
            assert!((psi[0] + 1.0 / m).abs() < 1e-3, "{psi:?}");
            assert!((psi[1] + 0.5 / m).abs() < 1e-3, "{psi:?}");
        }
    }

    #[test]
    fn excited_term_limits() {
        let sp = SpectralProblem::new(dc_profile());
        let ek = ExcitedKernel::new(&sp, 0.05).unwrap();
        for y in [-3.0, 2.0] {
            let e = ek.e(y, 1e-6);
            assert!(e[0].abs() < 1e-12 && e[1].abs() < 1e-12);
        }
        let e = ek.e(-2.0, 1e4);
        assert!((e[0] - ek.pi_f_minus[0]).abs() < 1e-12);
        let e = ek.e(2.0, 1e4);
        assert!((e[0] - ek.pi_f_minus[0]).abs() < 1e-9 && (e[1] - ek.pi_f_minus[1]).abs() < 1e-9);
        // π_r⁺ tends to c_r(0, 1) at +∞ and π_f⁺ to (1, 0)/m.
        let far = ek.pi_f_plus_at(40.0);
        assert!((far[0] - 1.0 / ek.mass).abs() < 1e-9 && far[1].abs() < 1e-9);
    }

    #[test]
    fn green_mass_is_conserved() {
        let sp = SpectralProblem::new(dc_profile());
        let xs = grid(20.0, 400);
        let ys = [180, 220];
        let o = GreenOptions::default();
        for t in [1.0, 3.0] {
            let gs = green_function(&sp, &xs, &ys, t, &o).unwrap();
            let h = xs[1] - xs[0];
            for gy in &gs.g {
                for col in 0..2 {
                    let mass: f64 = gy.iter().map(|m| (m[0][col] + 0.5 * m[1][col]) * h).sum();
                    let expect = if col == 0 { 1.0 } else { 0.5 };
                    assert!((mass - expect).abs() < 2e-3, "t = {t}: {mass} vs {expect}");
                }
            }
        }
    }
}
