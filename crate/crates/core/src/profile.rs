//! Traveling-wave profiles: heteroclinic orbits of the traveling-wave ODE
//!
//!   u′ = (f(u,z) − f(u₋,0) − s(u−u₋) − sqz − qdy)/b,   z′ = y,   y′ = (−sy + kφ(u)z)/d
//!
//! computed by Hermite–Simpson collocation with projection boundary
//! conditions, a phase condition ū(0) = (u₋+u₊)/2 and continuation in q
//! from the explicit Burgers shock.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hugoniot::{WaveClass, WaveProblem};
use crate::model::ModelParams;
use crate::numerics::banded::BandedMatrix;
use crate::numerics::fit::line_fit;
use crate::numerics::interp::UniformQuintic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Minus,
    Plus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Minus => -1.0,
            Side::Plus => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Minus => "minus",
            Side::Plus => "plus",
        }
    }
}

/// Right-hand side of the traveling-wave ODE bound to one parameter set
/// and one pair of end states.
#[derive(Debug, Clone)]
pub struct TravelingWaveOde {
    pub params: ModelParams,
    pub u_minus: f64,
    pub u_plus: f64,
    pub s: f64,
    c0: f64,
}

impl TravelingWaveOde {
    pub fn new(params: &ModelParams, wave: &WaveProblem) -> Self {
        Self::with_states(params, wave.u_minus, wave.u_plus, wave.s)
    }

    pub fn with_states(params: &ModelParams, u_minus: f64, u_plus: f64, s: f64) -> Self {
        let c0 = s * u_minus - params.flux.f(u_minus, 0.0);
        TravelingWaveOde {
            params: params.clone(),
            u_minus,
            u_plus,
            s,
            c0,
        }
    }

    #[inline]
    pub fn rhs(&self, w: [f64; 3]) -> [f64; 3] {
        let p = &self.params;
        let [u, z, y] = w;
        let f = p.flux.f(u, z);
        let phi = p.ignition.phi(u);
        [
            (f - self.s * u - self.s * p.q * z - p.q * p.d * y + self.c0) / p.b,
            y,
            (-self.s * y + p.k * phi * z) / p.d,
        ]
    }

    #[inline]
    pub fn jacobian(&self, w: [f64; 3]) -> Matrix3<f64> {
        let p = &self.params;
        let [u, z, _] = w;
        let fl = p.flux.eval(u, z);
        let (phi, dphi) = p.ignition.eval(u);
        Matrix3::new(
            (fl.f_u - self.s) / p.b,
            (fl.f_z - self.s * p.q) / p.b,
            -p.q * p.d / p.b,
            0.0,
            0.0,
            1.0,
            p.k * dphi * z / p.d,
            p.k * phi / p.d,
            -self.s / p.d,
        )
    }

    pub fn endstate(&self, side: Side) -> [f64; 3] {
        match side {
            Side::Minus => [self.u_minus, 0.0, 0.0],
            Side::Plus => [self.u_plus, 1.0, 0.0],
        }
    }

    pub fn equilibrium(&self, side: Side) -> Result<EquilibriumAnalysis> {
        equilibrium_jacobian(self, side)
    }
}

/// Linearization of the traveling-wave ODE at one end state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumAnalysis {
    pub side: Side,
    pub state: [f64; 3],
    pub jacobian: [[f64; 3]; 3],
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Unit right eigenvectors, largest component positive.
    pub eigenvectors: Vec<[f64; 3]>,
    pub stable_dim: usize,
    pub unstable_dim: usize,
    pub center_dim: usize,
}

fn zero_tol(j: &Matrix3<f64>) -> f64 {
    1e-10 * j.amax().max(1.0)
}

fn null_vectors(m: &Matrix3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let svd = m.svd(true, true);
    let k = svd.singular_values.imin();
    let v = svd.v_t.unwrap().row(k).transpose();
    let l = svd.u.unwrap().column(k).into_owned();
    (v, l)
}

fn orient(v: Vector3<f64>) -> [f64; 3] {
    let v = v.normalize();
    let k = v.iamax();
    let v = if v[k] < 0.0 { -v } else { v };
    [v[0], v[1], v[2]]
}

pub fn equilibrium_jacobian(ode: &TravelingWaveOde, side: Side) -> Result<EquilibriumAnalysis> {
    let state = ode.endstate(side);
    let j = ode.jacobian(state);
    let mut eig = if j[(1, 0)] == 0.0 && j[(2, 0)] == 0.0 {
        // Block upper triangular: j00 and the lower-right 2×2 block.
        let tr = j[(1, 1)] + j[(2, 2)];
        let det = j[(1, 1)] * j[(2, 2)] - j[(1, 2)] * j[(2, 1)];
        let disc = tr * tr - 4.0 * det;
        if disc < 0.0 {
            return Err(Error::Numerical("complex equilibrium eigenvalues".into()));
        }
        let r = disc.sqrt();
        // Cancellation-free roots of μ² − tr·μ + det.
        let b = -tr;
        let big = -0.5 * (b + if b >= 0.0 { r } else { -r });
        let (a, b) = if big != 0.0 { (big, det / big) } else { (0.0, 0.0) };
        vec![j[(0, 0)], a, b]
    } else {
        let ev = j.complex_eigenvalues();
        if ev.iter().any(|z| z.im.abs() > 1e-12 * (1.0 + z.norm())) {
            return Err(Error::Numerical("complex equilibrium eigenvalues".into()));
        }
        ev.iter().map(|z| z.re).collect()
    };
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tol = zero_tol(&j);
    let eigenvectors = eig
        .iter()
        .map(|&mu| orient(null_vectors(&(j - Matrix3::identity() * mu)).0))
        .collect();
    let stable_dim = eig.iter().filter(|&&m| m < -tol).count();
    let unstable_dim = eig.iter().filter(|&&m| m > tol).count();
    let mut jac = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            jac[r][c] = j[(r, c)];
        }
    }
    Ok(EquilibriumAnalysis {
        side,
        state,
        jacobian: jac,
        eigenvalues: eig,
        eigenvectors,
        stable_dim,
        unstable_dim,
        center_dim: 3 - stable_dim - unstable_dim,
    })
}

impl EquilibriumAnalysis {
    fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.jacobian[r][c])
    }

    /// Left eigenvectors of the eigenvalues that the connection must avoid:
    /// non-unstable at −∞, non-stable at +∞. One boundary row each.
    pub fn boundary_functionals(&self) -> Vec<[f64; 3]> {
        let j = self.matrix();
        let tol = zero_tol(&j);
        self.eigenvalues
            .iter()
            .filter(|&&mu| match self.side {
                Side::Minus => mu <= tol,
                Side::Plus => mu >= -tol,
            })
            .map(|&mu| orient(null_vectors(&(j - Matrix3::identity() * mu)).1))
            .collect()
    }

    /// Eigenvalues with the decay sign of the side, as positive rates.
    pub fn decay_rates(&self) -> Vec<f64> {
        let tol = zero_tol(&self.matrix());
        self.eigenvalues
            .iter()
            .filter_map(|&mu| match self.side {
                Side::Minus if mu > tol => Some(mu),
                Side::Plus if mu < -tol => Some(-mu),
                _ => None,
            })
            .collect()
    }

    /// Decaying modes as (rate, eigenvector).
    fn decay_modes(&self) -> Vec<(f64, [f64; 3])> {
        let tol = zero_tol(&self.matrix());
        self.eigenvalues
            .iter()
            .zip(&self.eigenvectors)
            .filter_map(|(&mu, v)| match self.side {
                Side::Minus if mu > tol => Some((mu, *v)),
                Side::Plus if mu < -tol => Some((-mu, *v)),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileOptions {
    /// Grid spacing.
    pub h: f64,
    /// Half-width is chosen so the slowest tail mode decays to this level.
    pub tail_tol: f64,
    /// Explicit half-width, overriding `tail_tol`.
    pub x_max: Option<f64>,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub q_step: f64,
    pub min_q_step: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            h: 0.01,
            tail_tol: 1e-11,
            x_max: None,
            newton_tol: 1e-12,
            max_newton: 30,
            q_step: 0.1,
            min_q_step: 1e-5,
        }
    }
}

/// A converged profile on a uniform grid symmetric about ξ = 0.
#[derive(Debug, Clone)]
pub struct Profile {
    pub params: ModelParams,
    pub wave: WaveProblem,
    pub x0: f64,
    pub h: f64,
    /// (ū, z̄, z̄′) per node.
    pub w: Vec<[f64; 3]>,
    /// Max-norm collocation defect per unit length.
    pub residual: f64,
    pub continuation_steps: usize,
    ode: TravelingWaveOde,
    interp: UniformQuintic<3>,
}

/// Values and derivatives of the profile at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub w: [f64; 3],
    pub dw: [f64; 3],
    pub d2w: [f64; 3],
}

impl ProfilePoint {
    pub fn u(&self) -> f64 {
        self.w[0]
    }
    pub fn z(&self) -> f64 {
        self.w[1]
    }
    pub fn du(&self) -> f64 {
        self.dw[0]
    }
    pub fn dz(&self) -> f64 {
        self.dw[1]
    }
}

/// JSON-friendly summary of a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileMeta {
    pub s: f64,
    pub u_minus: f64,
    pub u_plus: f64,
    pub class: WaveClass,
    pub x_max: f64,
    pub h: f64,
    pub nodes: usize,
    pub residual: f64,
    pub continuation_steps: usize,
    pub u_at_zero: f64,
    pub z_at_zero: f64,
    pub z_monotone: bool,
}

impl Profile {
    /// Rebuilds a profile from stored node values (e.g. a CSV artifact).
    pub fn from_nodes(params: &ModelParams, wave: &WaveProblem, x0: f64, h: f64, w: Vec<[f64; 3]>) -> Result<Self> {
        if w.len() < 3 || !(h > 0.0) {
            return Err(Error::InvalidInput("profile needs at least 3 nodes and h > 0".into()));
        }
        let ode = TravelingWaveOde::new(params, wave);
        let dw: Vec<[f64; 3]> = w.iter().map(|&v| ode.rhs(v)).collect();
        let d2w: Vec<[f64; 3]> = w
            .iter()
            .zip(&dw)
            .map(|(&v, f)| {
                let r = ode.jacobian(v) * Vector3::from(*f);
                [r[0], r[1], r[2]]
            })
            .collect();
        let mut residual: f64 = 0.0;
        for i in 0..w.len() - 1 {
            let r = interval_residual(&ode, h, w[i], w[i + 1]);
            residual = residual.max(r.iter().fold(0.0, |a: f64, v| a.max(v.abs())) / h);
        }
        let interp = UniformQuintic::new(x0, h, w.clone(), dw, d2w);
        Ok(Profile {
            params: params.clone(),
            wave: *wave,
            x0,
            h,
            w,
            residual,
            continuation_steps: 0,
            ode,
            interp,
        })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn xi(&self, i: usize) -> f64 {
        self.x0 + self.h * i as f64
    }

    pub fn x_max(&self) -> f64 {
        -self.x0
    }

    pub fn ode(&self) -> &TravelingWaveOde {
        &self.ode
    }

    /// Interpolated profile; beyond the grid the end values are returned.
    pub fn eval(&self, x: f64) -> ProfilePoint {
        let (w, dw, d2w) = self.interp.eval(x);
        ProfilePoint { w, dw, d2w }
    }

    pub fn center_index(&self) -> usize {
        (self.len() - 1) / 2
    }

    pub fn z_monotone(&self) -> bool {
        self.w.windows(2).all(|p| p[1][1] >= p[0][1] - 1e-12)
    }

    pub fn meta(&self) -> ProfileMeta {
        let c = self.w[self.center_index()];
        ProfileMeta {
            s: self.wave.s,
            u_minus: self.wave.u_minus,
            u_plus: self.wave.u_plus,
            class: self.wave.class(),
            x_max: self.x_max(),
            h: self.h,
            nodes: self.len(),
            residual: self.residual,
            continuation_steps: self.continuation_steps,
            u_at_zero: c[0],
            z_at_zero: c[1],
            z_monotone: self.z_monotone(),
        }
    }

    /// Distance of the end nodes from the end states in (u, z).
    pub fn endstate_error(&self) -> f64 {
        let a = self.w[0];
        let b = self.w[self.len() - 1];
        let e1 = (a[0] - self.wave.u_minus).abs().max(a[1].abs());
        let e2 = (b[0] - self.wave.u_plus).abs().max((b[1] - 1.0).abs());
        e1.max(e2)
    }
}

/// Exact viscous Burgers shock between u₋ and u₊ (f = u²/2, b = 1).
pub fn burgers_shock(u_minus: f64, u_plus: f64, xi: f64) -> f64 {
    0.5 * (u_minus + u_plus) - 0.5 * (u_minus - u_plus) * (0.25 * (u_minus - u_plus) * xi).tanh()
}

fn interval_residual(ode: &TravelingWaveOde, h: f64, a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    let fa = ode.rhs(a);
    let fb = ode.rhs(b);
    let mut m = [0.0; 3];
    for c in 0..3 {
        m[c] = 0.5 * (a[c] + b[c]) + h / 8.0 * (fa[c] - fb[c]);
    }
    let fm = ode.rhs(m);
    let mut r = [0.0; 3];
    for c in 0..3 {
        r[c] = b[c] - a[c] - h / 6.0 * (fa[c] + 4.0 * fm[c] + fb[c]);
    }
    r
}

struct Collocation {
    n: usize,
    h: f64,
    x0: f64,
}

struct Bcs {
    left: [f64; 3],
    right: [f64; 3],
    w_minus: [f64; 3],
    w_plus: [f64; 3],
    anchor: f64,
}

impl Collocation {
    fn unknowns(&self) -> usize {
        3 * (self.n + 1)
    }

    fn block_row(&self, i: usize) -> usize {
        1 + 3 * i + usize::from(i >= self.n / 2)
    }

    fn phase_row(&self) -> usize {
        1 + 3 * (self.n / 2)
    }

    fn residual(&self, ode: &TravelingWaveOde, bc: &Bcs, w: &[[f64; 3]]) -> Vec<f64> {
        let mut r = vec![0.0; self.unknowns()];
        r[0] = dot(&bc.left, &sub(&w[0], &bc.w_minus));
        for i in 0..self.n {
            let ri = interval_residual(ode, self.h, w[i], w[i + 1]);
            let row = self.block_row(i);
            r[row..row + 3].copy_from_slice(&ri);
        }
        r[self.phase_row()] = w[self.n / 2][0] - bc.anchor;
        r[self.unknowns() - 1] = dot(&bc.right, &sub(&w[self.n], &bc.w_plus));
        r
    }

    fn jacobian(&self, ode: &TravelingWaveOde, bc: &Bcs, w: &[[f64; 3]]) -> BandedMatrix<f64> {
        let h = self.h;
        let mut jac = BandedMatrix::zeros(self.unknowns(), 4, 4);
        for c in 0..3 {
            jac.set(0, c, bc.left[c]);
        }
        let eye = Matrix3::<f64>::identity();
        let mut ja = ode.jacobian(w[0]);
        let mut fa = Vector3::from(ode.rhs(w[0]));
        for i in 0..self.n {
            let jb = ode.jacobian(w[i + 1]);
            let fb = Vector3::from(ode.rhs(w[i + 1]));
            let wm = (Vector3::from(w[i]) + Vector3::from(w[i + 1])) * 0.5 + (fa - fb) * (h / 8.0);
            let jm = ode.jacobian([wm[0], wm[1], wm[2]]);
            let da = -eye - (ja + jm * 4.0 * (eye * 0.5 + ja * (h / 8.0))) * (h / 6.0);
            let db = eye - (jm * 4.0 * (eye * 0.5 - jb * (h / 8.0)) + jb) * (h / 6.0);
            let row = self.block_row(i);
            for r in 0..3 {
                for c in 0..3 {
                    jac.set(row + r, 3 * i + c, da[(r, c)]);
                    jac.set(row + r, 3 * (i + 1) + c, db[(r, c)]);
                }
            }
            ja = jb;
            fa = fb;
        }
        jac.set(self.phase_row(), 3 * (self.n / 2), 1.0);
        let last = self.unknowns() - 1;
        for c in 0..3 {
            jac.set(last, 3 * self.n + c, bc.right[c]);
        }
        jac
    }

    /// Damped Newton; returns the number of iterations used.
    fn newton(
        &self,
        ode: &TravelingWaveOde,
        bc: &Bcs,
        w: &mut Vec<[f64; 3]>,
        opts: &ProfileOptions,
    ) -> Result<usize> {
        let norm = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut r = self.residual(ode, bc, w);
        let mut nr = norm(&r);
        for it in 0..opts.max_newton {
            if !nr.is_finite() {
                break;
            }
            if nr < opts.newton_tol {
                return Ok(it);
            }
            let lu = self.jacobian(ode, bc, w).factor()?;
            let mut delta: Vec<f64> = r.iter().map(|v| -v).collect();
            lu.solve_in_place(&mut delta);
            let mut lam = 1.0;
            loop {
                let trial: Vec<[f64; 3]> = w
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        [
                            v[0] + lam * delta[3 * i],
                            v[1] + lam * delta[3 * i + 1],
                            v[2] + lam * delta[3 * i + 2],
                        ]
                    })
                    .collect();
                let rt = self.residual(ode, bc, &trial);
                let nt = norm(&rt);
                if nt.is_finite() && (nt < (1.0 - 1e-4 * lam) * nr || nt < opts.newton_tol) {
                    *w = trial;
                    r = rt;
                    nr = nt;
                    break;
                }
                lam *= 0.5;
                if lam < 1.0 / 1024.0 {
                    return Err(Error::NoConnection(format!(
                        "Newton line search failed (residual {nr:e})"
                    )));
                }
            }
        }
        if nr < opts.newton_tol {
            Ok(opts.max_newton)
        } else {
            Err(Error::NoConnection(format!("Newton did not converge (residual {nr:e})")))
        }
    }
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn boundary_conditions(ode: &TravelingWaveOde) -> Result<Bcs> {
    let lm = equilibrium_jacobian(ode, Side::Minus)?.boundary_functionals();
    let lp = equilibrium_jacobian(ode, Side::Plus)?.boundary_functionals();
    if lm.len() + lp.len() != 2 {
        return Err(Error::NoConnection(format!(
            "boundary count {} + {} + phase ≠ 3: no codimension-0 connection for this class",
            lm.len(),
            lp.len()
        )));
    }
    Ok(Bcs {
        left: lm[0],
        right: lp[0],
        w_minus: ode.endstate(Side::Minus),
        w_plus: ode.endstate(Side::Plus),
        anchor: 0.5 * (ode.u_minus + ode.u_plus),
    })
}

/// Half-width giving e^{−rate·X} = tail_tol for the slowest tail rate.
pub fn domain_half_width(ode: &TravelingWaveOde, tail_tol: f64) -> Result<f64> {
    let mut slowest = f64::INFINITY;
    for side in [Side::Minus, Side::Plus] {
        for r in equilibrium_jacobian(ode, side)?.decay_rates() {
            slowest = slowest.min(r);
        }
    }
    if !slowest.is_finite() || slowest <= 0.0 {
        return Err(Error::NoConnection("no decaying tail modes".into()));
    }
    Ok((-tail_tol.ln() / slowest).max(10.0))
}

fn seed(coll: &Collocation, u_minus: f64, u_plus: f64) -> Vec<[f64; 3]> {
    (0..=coll.n)
        .map(|i| {
            let x = coll.x0 + coll.h * i as f64;
            let u = burgers_shock(u_minus, u_plus, x);
            let e = (-x).exp();
            let z = 1.0 / (1.0 + e);
            [u, z, z * (1.0 - z)]
        })
        .collect()
}

/// Computes the profile of `wave` by continuation in q from the Burgers shock
/// at q = 0 (same s and u₊).
pub fn compute_profile(wave: &WaveProblem, params: &ModelParams, opts: &ProfileOptions) -> Result<Profile> {
    if !wave.admissible {
        return Err(Error::InvalidInput(format!(
            "end states u₋ = {}, u₊ = {} are not admissible for the ignition interval",
            wave.u_minus, wave.u_plus
        )));
    }
    if !(opts.h > 0.0) {
        return Err(Error::InvalidInput("grid spacing must be positive".into()));
    }
    let target = TravelingWaveOde::new(params, wave);
    // Rejects classes without a codimension-0 connection before any work.
    boundary_conditions(&target)?;

    let x_max = match opts.x_max {
        Some(x) => x,
        None => domain_half_width(&target, opts.tail_tol)?,
    };
    let half = (x_max / opts.h).ceil() as usize;
    let coll = Collocation {
        n: 2 * half,
        h: opts.h,
        x0: -(half as f64) * opts.h,
    };

    let class = wave.class();
    let ode_at = |q: f64| -> Result<TravelingWaveOde> {
        if q == params.q {
            return Ok(target.clone());
        }
        let p = params.with_q(q);
        let wq = WaveProblem::from_speed(&p, wave.u_plus, wave.s, class)
            .map_err(|e| Error::NoConnection(format!("continuation left the {class} branch at q = {q}: {e}")))?;
        Ok(TravelingWaveOde::new(&p, &wq))
    };

    let ode0 = ode_at(0.0)?;
    let mut w = seed(&coll, ode0.u_minus, ode0.u_plus);
    coll.newton(&ode0, &boundary_conditions(&ode0)?, &mut w, opts)?;

    let q_target = params.q;
    let mut q = 0.0;
    let mut prev: Option<(f64, Vec<[f64; 3]>)> = None;
    let mut dq = opts.q_step.min(q_target.abs()) * q_target.signum();
    let mut steps = 0;
    while q != q_target {
        let qn = if (q + dq - q_target) * q_target.signum() >= 0.0 { q_target } else { q + dq };
        let mut trial = w.clone();
        if let Some((qp, wp)) = &prev {
            let r = (qn - q) / (q - qp);
            for (t, (a, b)) in trial.iter_mut().zip(w.iter().zip(wp)) {
                for c in 0..3 {
                    t[c] = a[c] + r * (a[c] - b[c]);
                }
            }
        }
        let attempt = ode_at(qn).and_then(|ode| {
            let bc = boundary_conditions(&ode)?;
            coll.newton(&ode, &bc, &mut trial, opts)
        });
        match attempt {
            Ok(iters) => {
                prev = Some((q, std::mem::replace(&mut w, trial)));
                q = qn;
                steps += 1;
                if iters <= 4 {
                    dq *= 1.5;
                }
            }
            Err(e) => {
                dq *= 0.5;
                if dq.abs() < opts.min_q_step {
                    return Err(Error::NoConnection(format!("continuation stalled at q = {q}: {e}")));
                }
            }
        }
    }

    let mut profile = Profile::from_nodes(params, wave, coll.x0, coll.h, w)?;
    profile.continuation_steps = steps;
    Ok(profile)
}

/// Fitted tail rate of one component on one side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub side: Side,
    pub component: String,
    /// None when the fit window falls below the noise floor.
    pub rate: Option<f64>,
    pub expected: f64,
    pub rel_error: Option<f64>,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub fits: Vec<DecayFit>,
}

impl DecayReport {
    pub fn max_rel_error(&self) -> Option<f64> {
        self.fits
            .iter()
            .map(|f| f.rel_error)
            .try_fold(0.0f64, |a, e| e.map(|e| a.max(e)))
    }

    pub fn get(&self, side: Side, component: &str) -> Option<&DecayFit> {
        self.fits.iter().find(|f| f.side == side && f.component == component)
    }
}

/// Log-linear fits of |w_c − endstate_c| on the outer quarter of each tail
/// (restricted to points above the noise floor), compared with the slowest
/// equilibrium rate whose eigenvector has a component in that coordinate.
pub fn verify_decay(profile: &Profile) -> Result<DecayReport> {
    let ode = profile.ode();
    let mut fits = Vec::new();
    let scale = profile.wave.u_minus.abs().max(profile.wave.u_plus.abs()).max(1.0);
    let floor = 1e-9 * scale;
    for side in [Side::Minus, Side::Plus] {
        let eq = equilibrium_jacobian(ode, side)?;
        let end = eq.state;
        let modes = eq.decay_modes();
        for (c, name) in [(0usize, "u"), (1, "z")] {
            let expected = modes
                .iter()
                .filter(|(_, v)| v[c].abs() > 1e-8)
                .map(|(r, _)| *r)
                .fold(f64::INFINITY, f64::min);
            let mut pts: Vec<(f64, f64)> = (0..profile.len())
                .map(|i| (profile.xi(i), profile.w[i][c] - end[c]))
                .filter(|(x, _)| x * side.sign() > 0.0)
                .filter(|(_, e)| e.abs() > floor)
                .map(|(x, e)| (x.abs(), e.abs().ln()))
                .collect();
            pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let keep = pts.len() / 4;
            let window = &pts[pts.len() - keep..];
            let (xs, ys): (Vec<f64>, Vec<f64>) = window.iter().copied().unzip();
            let rate = if keep >= 8 && expected.is_finite() {
                line_fit(&xs, &ys).map(|f| -f.slope)
            } else {
                None
            };
            fits.push(DecayFit {
                side,
                component: name.to_string(),
                rate,
                expected,
                rel_error: rate.map(|r| (r - expected).abs() / expected),
                points: keep,
            });
        }
    }
    Ok(DecayReport { fits })
}

/// Signed transversality measure from the profile direction `e` and bases
/// (u1, u2) of the unstable and (s1, s2) of the stable manifold tangent
/// planes at the matching point. Multilinear in every basis vector.
pub fn gamma_from_bases(e: [f64; 3], u1: [f64; 3], u2: [f64; 3], s1: [f64; 3], s2: [f64; 3]) -> f64 {
    let e = Vector3::from(e);
    let e = e / e.norm();
    let nu = Vector3::from(u1).cross(&Vector3::from(u2));
    let ns = Vector3::from(s1).cross(&Vector3::from(s2));
    gamma_from_normals(&e, &nu, &ns)
}

fn gamma_from_normals(e: &Vector3<f64>, nu: &Vector3<f64>, ns: &Vector3<f64>) -> f64 {
    Matrix3::from_columns(&[*e, nu.cross(e), ns.cross(e)]).determinant()
}

/// Transports the normals of the unstable plane at −∞ and the stable plane at
/// +∞ to ξ = 0 (n′ = (tr J)n − Jᵀn, renormalized every step) and measures
/// their separation transverse to the profile direction.
pub fn transversality_gamma(profile: &Profile) -> Result<f64> {
    let ode = profile.ode();
    let em = equilibrium_jacobian(ode, Side::Minus)?;
    let ep = equilibrium_jacobian(ode, Side::Plus)?;
    let pick = |eq: &EquilibriumAnalysis, want_pos: bool| -> Vec<Vector3<f64>> {
        eq.eigenvalues
            .iter()
            .zip(&eq.eigenvectors)
            .filter(|(mu, _)| if want_pos { **mu > 0.0 } else { **mu < 0.0 })
            .map(|(_, v)| Vector3::from(*v))
            .collect()
    };
    let um = pick(&em, true);
    let sp = pick(&ep, false);
    if um.len() != 2 || sp.len() != 2 {
        return Err(Error::InvalidInput(
            "transversality needs a 2D unstable (−∞) and 2D stable (+∞) manifold".into(),
        ));
    }
    let field = |x: f64, n: &Vector3<f64>| -> Vector3<f64> {
        let j = ode.jacobian(profile.eval(x).w);
        n * j.trace() - j.transpose() * n
    };
    let transport = |mut n: Vector3<f64>, from: f64, steps: usize, h: f64| -> Result<Vector3<f64>> {
        let mut x = from;
        for _ in 0..steps {
            let k1 = field(x, &n);
            let k2 = field(x + h / 2.0, &(n + k1 * (h / 2.0)));
            let k3 = field(x + h / 2.0, &(n + k2 * (h / 2.0)));
            let k4 = field(x + h, &(n + k3 * h));
            n += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            x += h;
            let nn = n.norm();
            if !nn.is_finite() || nn == 0.0 {
                return Err(Error::Numerical("normal transport produced NaN".into()));
            }
            n /= nn;
        }
        Ok(n)
    };
    let half = profile.center_index();
    let nu = transport(um[0].cross(&um[1]).normalize(), profile.x0, half, profile.h)?;
    let ns = transport(sp[0].cross(&sp[1]).normalize(), profile.x_max(), half, -profile.h)?;
    let e = Vector3::from(profile.eval(0.0).dw).normalize();
    Ok(gamma_from_normals(&e, &nu, &ns))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dc_wave(q: f64) -> (ModelParams, WaveProblem) {
        let p = ModelParams::dc().with_q(q);
        let w = WaveProblem::dc_strong(&p).unwrap();
        (p, w)
    }

    #[test]
    fn endstates_are_equilibria() {
        let (p, w) = dc_wave(0.5);
        let ode = TravelingWaveOde::new(&p, &w);
        for side in [Side::Minus, Side::Plus] {
            let r = ode.rhs(ode.endstate(side));
            assert!(r.iter().all(|v| v.abs() < 1e-12), "{side:?}: {r:?}");
        }
    }

    #[test]
    fn plus_side_spectrum() {
        let (p, w) = dc_wave(0.5);
        let eq = equilibrium_jacobian(&TravelingWaveOde::new(&p, &w), Side::Plus).unwrap();
        let expected = [-7.5, -1.5, 0.0];
        for (a, b) in eq.eigenvalues.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{:?}", eq.eigenvalues);
        }
        assert_eq!((eq.stable_dim, eq.center_dim, eq.unstable_dim), (2, 1, 0));
        let l = eq.boundary_functionals();
        assert_eq!(l.len(), 1);
        // Left null vector ∝ (0, s/d, 1).
        assert!(l[0][0].abs() < 1e-12 && (l[0][1] / l[0][2] - 7.5).abs() < 1e-10);
    }

    #[test]
    fn minus_side_signature() {
        let (p, w) = dc_wave(0.5);
        let eq = equilibrium_jacobian(&TravelingWaveOde::new(&p, &w), Side::Minus).unwrap();
        assert_eq!((eq.unstable_dim, eq.stable_dim), (2, 1));
        let phi = p.ignition.phi(w.u_minus);
        // Reaction block roots of μ² + (s/d)μ − kφ/d = 0.
        let disc = (w.s / p.d).powi(2) + 4.0 * p.k * phi / p.d;
        let r1 = 0.5 * (-w.s / p.d + disc.sqrt());
        assert!(eq.eigenvalues.iter().any(|m| (m - r1).abs() < 1e-10));
        assert!(eq.eigenvalues.iter().any(|m| (m - (w.u_minus - w.s)).abs() < 1e-12));
    }

    #[test]
    fn burgers_profile_is_exact_at_q0() {
        let (p, w) = dc_wave(0.0);
        assert!((w.u_minus - 3.0).abs() < 1e-14);
        let pr = compute_profile(&w, &p, &ProfileOptions::default()).unwrap();
        let err = (0..pr.len())
            .map(|i| (pr.w[i][0] - burgers_shock(3.0, 0.0, pr.xi(i))).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "max error {err:e}");
        let d = verify_decay(&pr).unwrap();
        let f = d.get(Side::Minus, "u").unwrap();
        assert!(f.rel_error.unwrap() < 0.01, "{f:?}");
    }

    #[test]
    fn dc_profile_converges_with_decay_rates() {
        let (p, w) = dc_wave(0.5);
        let pr = compute_profile(&w, &p, &ProfileOptions::default()).unwrap();
        assert!(pr.residual < 1e-8, "residual {:e}", pr.residual);
        assert!(pr.endstate_error() < 1e-6);
        assert!(pr.z_monotone());
        let d = verify_decay(&pr).unwrap();
        for f in &d.fits {
            assert!(f.rate.unwrap() > 0.0);
            assert!(f.rel_error.unwrap() < 0.05, "{f:?}");
        }
        let zp = d.get(Side::Plus, "z").unwrap();
        assert!((zp.expected - 7.5).abs() < 1e-10);
        let g = transversality_gamma(&pr).unwrap();
        assert!(g.abs() > 1e-6, "gamma {g}");
    }

    #[test]
    fn weak_detonation_has_no_connection() {
        let p = ModelParams::dc();
        let w = WaveProblem::from_speed(&p, 0.0, 1.5, WaveClass::WeakDetonation).unwrap();
        assert!(matches!(
            compute_profile(&w, &p, &ProfileOptions::default()),
            Err(Error::NoConnection(_))
        ));
    }

    #[test]
    fn gamma_is_multilinear() {
        let e = [1.0, 0.0, 0.0];
        let (u1, u2) = ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        let (s1, s2) = ([1.0, 0.0, 0.0], [0.0, 0.6, 0.8]);
        let g = gamma_from_bases(e, u1, u2, s1, s2);
        assert!(g.abs() > 0.1);
        assert_eq!(gamma_from_bases(e, u1, u1, s1, s2), 0.0);
        let neg = gamma_from_bases(e, u1, [0.0, -1.0, 0.0], s1, s2);
        assert!((neg + g).abs() < 1e-15);
    }
}
