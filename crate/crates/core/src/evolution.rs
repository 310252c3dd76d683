//! Method-of-lines evolution of the model in the frame moving with the wave,
//! perturbation experiments, phase tracking and decay diagnostics.
//!
//! Nonlinear runs use SBDF2: diffusion and the linear frame advection are
//! implicit (tridiagonal), the flux divergence and the reaction explicit.
//! Linearized runs use Crank–Nicolson on the full banded operator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::banded::{BandedLu, BandedMatrix};
use crate::numerics::fit::{envelope_exponent, line_fit, LineFit};
use crate::numerics::interp::lagrange6;
use crate::numerics::par_map;
use crate::profile::{Profile, Side};
use crate::resolvent::ExcitedKernel;
use crate::spectral::{Coeffs, Operator, SpectralProblem};

/// Interior nodes x_i = x0 + i·dx, i < n. Dirichlet values sit at x0 − dx
/// and x0 + n·dx.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x0: f64,
    pub dx: f64,
    pub n: usize,
}

impl Grid {
    /// Grid on [−half_width, half_width] with spacing at most `dx`.
    pub fn symmetric(half_width: f64, dx: f64) -> Result<Self> {
        if !(half_width > 0.0 && dx > 0.0 && dx < half_width) {
            return Err(Error::InvalidInput(format!(
                "grid needs 0 < dx < half-width, got dx = {dx}, half-width = {half_width}"
            )));
        }
        let cells = (2.0 * half_width / dx).ceil() as usize;
        let dx = 2.0 * half_width / cells as f64;
        Ok(Grid { x0: -half_width + dx, dx, n: cells - 1 })
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    pub fn half_width(&self) -> f64 {
        -(self.x0 - self.dx)
    }

    /// Index of the node nearest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        (((x - self.x0) / self.dx).round().max(0.0) as usize).min(self.n - 1)
    }
}

/// Pointwise norms of a two-component field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub fn expected_exponent(self) -> f64 {
        let p_inv = match self {
            Norm::L1 => 1.0,
            Norm::L2 => 0.5,
            Norm::Linf => 0.0,
        };
        // + 0.0 turns the L¹ value −0 into 0.
        -0.5 * (1.0 - p_inv) + 0.0
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Norm::L1 => "L1",
            Norm::L2 => "L2",
            Norm::Linf => "Linf",
        }
    }
}

/// (u, z) on a grid at time t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub grid: Grid,
    pub t: f64,
    pub u: Vec<f64>,
    pub z: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Field { grid, t: 0.0, u: vec![0.0; grid.n], z: vec![0.0; grid.n] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> [f64; 2]) -> Self {
        let (u, z) = (0..grid.n).map(|i| f(grid.x(i))).map(|w| (w[0], w[1])).unzip();
        Field { grid, t: 0.0, u, z }
    }

    /// Σ(u + qz)·dx.
    pub fn mass(&self, q: f64) -> f64 {
        self.u.iter().zip(&self.z).map(|(u, z)| u + q * z).sum::<f64>() * self.grid.dx
    }

    pub fn norm(&self, p: Norm) -> f64 {
        norm_of(&self.u, &self.z, self.grid.dx, p)
    }

    pub fn sub(&self, other: &Field) -> Field {
        Field {
            grid: self.grid,
            t: self.t,
            u: self.u.iter().zip(&other.u).map(|(a, b)| a - b).collect(),
            z: self.z.iter().zip(&other.z).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        Field {
            grid: self.grid,
            t: self.t,
            u: self.u.iter().zip(&other.u).map(|(a, b)| a + b).collect(),
            z: self.z.iter().zip(&other.z).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.sub(other).norm(Norm::Linf)
    }
}

fn norm_of(u: &[f64], z: &[f64], dx: f64, p: Norm) -> f64 {
    let mag = u.iter().zip(z).map(|(a, b)| a.hypot(*b));
    match p {
        Norm::L1 => mag.sum::<f64>() * dx,
        Norm::L2 => (mag.map(|m| m * m).sum::<f64>() * dx).sqrt(),
        Norm::Linf => mag.fold(0.0, f64::max),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionOptions {
    /// Grid spacing; defaults to (d/s)/points_per_scale.
    pub dx: Option<f64>,
    pub points_per_scale: f64,
    /// Half-width; defaults to X + (max outgoing undamped speed)·T + margin.
    pub half_width: Option<f64>,
    pub margin: f64,
    pub cfl: f64,
    pub dt: Option<f64>,
    /// Abort when the perturbation grows by this factor.
    pub blowup_factor: f64,
    pub newton_tol: f64,
    /// Accepted residual once Newton stagnates on the rounding floor.
    pub newton_stall_tol: f64,
    pub max_newton: usize,
}

impl Default for EvolutionOptions {
    fn default() -> Self {
        EvolutionOptions {
            dx: None,
            points_per_scale: 8.0,
            half_width: None,
            margin: 10.0,
            cfl: 0.4,
            dt: None,
            blowup_factor: 1e6,
            newton_tol: 1e-11,
            newton_stall_tol: 1e-9,
            max_newton: 30,
        }
    }
}

/// Dirichlet end states and frame speed of a nonlinear run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub s: f64,
    pub left: [f64; 2],
    pub right: [f64; 2],
}

impl Frame {
    pub fn of(profile: &Profile) -> Self {
        let w = &profile.wave;
        Frame { s: w.s, left: [w.u_minus, w.z_minus], right: [w.u_plus, w.z_plus] }
    }
}

/// Largest characteristic speed in the moving frame along the profile.
pub fn max_speed(profile: &Profile) -> f64 {
    let s = profile.wave.s;
    profile
        .w
        .iter()
        .map(|w| (profile.params.flux.eval(w[0], w[1]).f_u - s).abs())
        .fold(s, f64::max)
}

/// Undamped characteristic speeds (a⁻, a⁺) in the moving frame: fluid on
/// both sides and the reaction on the unburned side.
pub fn undamped_speeds(profile: &Profile) -> (Vec<f64>, Vec<f64>) {
    let p = &profile.params;
    let w = &profile.wave;
    let am = p.flux.eval(w.u_minus, w.z_minus).f_u - w.s;
    let ap = p.flux.eval(w.u_plus, w.z_plus).f_u - w.s;
    (vec![am], vec![ap, -w.s])
}

/// Largest speed at which an undamped signal leaves the wave region.
pub fn max_outgoing_speed(profile: &Profile) -> f64 {
    let (am, ap) = undamped_speeds(profile);
    let out_m = am.iter().filter(|a| **a < 0.0).map(|a| -a);
    let out_p = ap.iter().filter(|a| **a > 0.0).copied();
    out_m.chain(out_p).fold(0.0, f64::max)
}

pub fn default_dx(profile: &Profile, opts: &EvolutionOptions) -> f64 {
    opts.dx.unwrap_or(profile.params.d / profile.wave.s / opts.points_per_scale)
}

pub fn default_half_width(profile: &Profile, t_end: f64, opts: &EvolutionOptions) -> f64 {
    opts.half_width
        .unwrap_or(profile.x_max() + max_outgoing_speed(profile) * t_end + opts.margin)
}

pub fn default_dt(profile: &Profile, dx: f64, opts: &EvolutionOptions) -> f64 {
    let p = &profile.params;
    let react = p.k * p.ignition.amplitude * (1.0 + p.q.abs());
    let lim = (dx / max_speed(profile)).min(if react > 0.0 { 1.0 / react } else { f64::INFINITY });
    opts.dt.unwrap_or(opts.cfl * lim)
}

/// Tridiagonal coefficients (lower, diag, upper) of κ∂ₓ² + s∂ₓ.
fn implicit_stencil(kappa: f64, s: f64, dx: f64) -> [f64; 3] {
    let d2 = kappa / (dx * dx);
    let d1 = s / (2.0 * dx);
    [d2 - d1, -2.0 * d2, d2 + d1]
}

/// Factorization of γI − dt(κ∂ₓ² + s∂ₓ).
fn implicit_lu(n: usize, st: [f64; 3], gamma: f64, dt: f64) -> Result<BandedLu<f64>> {
    let mut m = BandedMatrix::zeros(n, 1, 1);
    for i in 0..n {
        m.set(i, i, gamma - dt * st[1]);
        if i > 0 {
            m.set(i, i - 1, -dt * st[0]);
        }
        if i + 1 < n {
            m.set(i, i + 1, -dt * st[2]);
        }
    }
    m.factor()
}

/// Explicit part −∂ₓf(u,z) + S(u,z), central in space.
fn explicit_rhs(params: &ModelParams, frame: &Frame, dx: f64, u: &[f64], z: &[f64], nu: &mut [f64], nz: &mut [f64]) {
    let n = u.len();
    let fl = |i: isize| -> f64 {
        if i < 0 {
            params.flux.f(frame.left[0], frame.left[1])
        } else if i as usize >= n {
            params.flux.f(frame.right[0], frame.right[1])
        } else {
            params.flux.f(u[i as usize], z[i as usize])
        }
    };
    let inv = 1.0 / (2.0 * dx);
    let mut f_prev = fl(-1);
    let mut f_cur = fl(0);
    for i in 0..n {
        let f_next = fl(i as isize + 1);
        let (su, sz) = params.source(u[i], z[i]);
        nu[i] = -(f_next - f_prev) * inv + su;
        nz[i] = sz;
        f_prev = f_cur;
        f_cur = f_next;
    }
}

/// SBDF2 integrator of the nonlinear system in the moving frame.
pub struct NonlinearStepper<'a> {
    params: &'a ModelParams,
    frame: Frame,
    grid: Grid,
    dt: f64,
    stencils: [[f64; 3]; 2],
    euler: [BandedLu<f64>; 2],
    bdf2: [BandedLu<f64>; 2],
    prev: Option<[Vec<f64>; 4]>,
    nu: Vec<f64>,
    nz: Vec<f64>,
}

impl<'a> NonlinearStepper<'a> {
    pub fn new(params: &'a ModelParams, frame: Frame, grid: Grid, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
        }
        let su = implicit_stencil(params.b, frame.s, grid.dx);
        let sz = implicit_stencil(params.d, frame.s, grid.dx);
        let n = grid.n;
        Ok(NonlinearStepper {
            params,
            frame,
            grid,
            dt,
            stencils: [su, sz],
            euler: [implicit_lu(n, su, 1.0, dt)?, implicit_lu(n, sz, 1.0, dt)?],
            bdf2: [implicit_lu(n, su, 1.5, dt)?, implicit_lu(n, sz, 1.5, dt)?],
            prev: None,
            nu: vec![0.0; n],
            nz: vec![0.0; n],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Forgets the multistep history (next step is IMEX Euler).
    pub fn reset(&mut self) {
        self.prev = None;
    }

    pub fn step(&mut self, f: &mut Field) {
        let n = self.grid.n;
        let dt = self.dt;
        explicit_rhs(self.params, &self.frame, self.grid.dx, &f.u, &f.z, &mut self.nu, &mut self.nz);
        let ends = [[self.frame.left[0], self.frame.right[0]], [self.frame.left[1], self.frame.right[1]]];
        let mut next: [Vec<f64>; 2] = [vec![0.0; n], vec![0.0; n]];
        for c in 0..2 {
            let (cur, ncur) = if c == 0 { (&f.u, &self.nu) } else { (&f.z, &self.nz) };
            let st = self.stencils[c];
            let r = &mut next[c];
            match &self.prev {
                None => {
                    for i in 0..n {
                        r[i] = cur[i] + dt * ncur[i];
                    }
                }
                Some(p) => {
                    let (old, nold) = (&p[c], &p[2 + c]);
                    for i in 0..n {
                        r[i] = 2.0 * cur[i] - 0.5 * old[i] + dt * (2.0 * ncur[i] - nold[i]);
                    }
                }
            }
            r[0] += dt * st[0] * ends[c][0];
            r[n - 1] += dt * st[2] * ends[c][1];
            let lu = if self.prev.is_some() { &self.bdf2[c] } else { &self.euler[c] };
            lu.solve_in_place(r);
        }
        let [nu_new, nz_new] = next;
        let old_u = std::mem::replace(&mut f.u, nu_new);
        let old_z = std::mem::replace(&mut f.z, nz_new);
        let hist = match self.prev.take() {
            Some([mut a, mut b, mut c, mut d]) => {
                a.copy_from_slice(&old_u);
                b.copy_from_slice(&old_z);
                c.copy_from_slice(&self.nu);
                d.copy_from_slice(&self.nz);
                [a, b, c, d]
            }
            None => [old_u, old_z, self.nu.clone(), self.nz.clone()],
        };
        self.prev = Some(hist);
        f.t += dt;
    }

    /// Steps with the fixed dt until t ≥ `t_end`; returns the step count.
    pub fn advance(&mut self, f: &mut Field, t_end: f64) -> usize {
        let mut k = 0;
        while f.t < t_end - 1e-12 * t_end.abs().max(1.0) {
            self.step(f);
            k += 1;
        }
        k
    }
}

/// Semi-discrete right-hand side of the nonlinear system.
pub fn nonlinear_rhs(params: &ModelParams, frame: &Frame, f: &Field) -> (Vec<f64>, Vec<f64>) {
    let n = f.grid.n;
    let mut nu = vec![0.0; n];
    let mut nz = vec![0.0; n];
    explicit_rhs(params, frame, f.grid.dx, &f.u, &f.z, &mut nu, &mut nz);
    let ends = [[frame.left[0], frame.right[0]], [frame.left[1], frame.right[1]]];
    for (c, (v, out)) in [(&f.u, &mut nu), (&f.z, &mut nz)].into_iter().enumerate() {
        let kappa = if c == 0 { params.b } else { params.d };
        let st = implicit_stencil(kappa, frame.s, f.grid.dx);
        for i in 0..n {
            let lo = if i > 0 { v[i - 1] } else { ends[c][0] };
            let hi = if i + 1 < n { v[i + 1] } else { ends[c][1] };
            out[i] += st[0] * lo + st[1] * v[i] + st[2] * hi;
        }
    }
    (nu, nz)
}

/// Banded matrix of B∂ₓ² − ∂ₓ(A·) + C on interleaved unknowns
/// (u₀, z₀, u₁, z₁, …) with zero Dirichlet data, central differences.
pub fn assemble_operator(grid: &Grid, diffusion: (f64, f64), coeffs: &[Coeffs]) -> BandedMatrix<f64> {
    let n = grid.n;
    let dx = grid.dx;
    let mut m = BandedMatrix::zeros(2 * n, 3, 3);
    let diff = [diffusion.0, diffusion.1];
    let h2 = 1.0 / (2.0 * dx);
    for i in 0..n {
        for r in 0..2 {
            let row = 2 * i + r;
            let k = diff[r] / (dx * dx);
            m.add(row, row, -2.0 * k);
            if i > 0 {
                m.add(row, row - 2, k);
                for cc in 0..2 {
                    m.add(row, 2 * (i - 1) + cc, coeffs[i - 1].a[(r, cc)] * h2);
                }
            }
            if i + 1 < n {
                m.add(row, row + 2, k);
                for cc in 0..2 {
                    m.add(row, 2 * (i + 1) + cc, -coeffs[i + 1].a[(r, cc)] * h2);
                }
            }
            for cc in 0..2 {
                m.add(row, 2 * i + cc, coeffs[i].c[(r, cc)]);
            }
        }
    }
    m
}

/// Coefficients of an operator on a grid; outside its window the limits
/// are used.
pub fn operator_coeffs<O: Operator + ?Sized>(op: &O, grid: &Grid) -> Vec<Coeffs> {
    let xm = op.x_max();
    (0..grid.n)
        .map(|i| {
            let x = grid.x(i);
            if x < -xm {
                op.limit(Side::Minus)
            } else if x > xm {
                op.limit(Side::Plus)
            } else {
                op.coeffs(x)
            }
        })
        .collect()
}

/// Crank–Nicolson integrator of the linearized equations U_t = LU.
pub struct LinearizedStepper {
    grid: Grid,
    dt: f64,
    explicit: BandedMatrix<f64>,
    implicit: BandedLu<f64>,
}

impl LinearizedStepper {
    pub fn new<O: Operator + ?Sized>(op: &O, grid: Grid, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
        }
        let l = assemble_operator(&grid, op.diffusion(), &operator_coeffs(op, &grid));
        let mut plus = BandedMatrix::zeros(2 * grid.n, 3, 3);
        let mut minus = BandedMatrix::zeros(2 * grid.n, 3, 3);
        for i in 0..2 * grid.n {
            plus.add(i, i, 1.0);
            minus.add(i, i, 1.0);
            for j in i.saturating_sub(3)..(i + 4).min(2 * grid.n) {
                let v = l.get(i, j);
                plus.add(i, j, 0.5 * dt * v);
                minus.add(i, j, -0.5 * dt * v);
            }
        }
        Ok(LinearizedStepper { grid, dt, explicit: plus, implicit: minus.factor()? })
    }

    pub fn step(&self, f: &mut Field) {
        let v: Vec<f64> = f.u.iter().zip(&f.z).flat_map(|(a, b)| [*a, *b]).collect();
        let mut r = self.explicit.mul_vec(&v);
        self.implicit.solve_in_place(&mut r);
        for i in 0..self.grid.n {
            f.u[i] = r[2 * i];
            f.z[i] = r[2 * i + 1];
        }
        f.t += self.dt;
    }
}

/// Integration mode of [`evolve`].
pub enum EvolutionMode<'a, O: Operator + ?Sized> {
    Nonlinear { params: &'a ModelParams, frame: Frame },
    Linearized(&'a O),
}

/// Evolves `initial` to `t_end` with step `dt` (shortened so that t_end is
/// hit exactly), recording every `snap_every` time units.
pub fn evolve<O: Operator + ?Sized>(
    mode: EvolutionMode<'_, O>,
    initial: &Field,
    t_end: f64,
    dt: f64,
    snap_every: f64,
) -> Result<Vec<Field>> {
    if !(t_end >= 0.0 && snap_every > 0.0) {
        return Err(Error::InvalidInput("need T ≥ 0 and a positive snapshot interval".into()));
    }
    let snaps = (t_end / snap_every).ceil().max(1.0) as usize;
    let per = (snap_every.min(t_end.max(f64::MIN_POSITIVE)) / dt).ceil().max(1.0) as usize;
    let h = t_end / (snaps * per) as f64;
    let mut f = initial.clone();
    let mut out = vec![f.clone()];
    if t_end == 0.0 {
        return Ok(out);
    }
    let scale = f.norm(Norm::Linf).max(1.0);
    match mode {
        EvolutionMode::Nonlinear { params, frame } => {
            let mut st = NonlinearStepper::new(params, frame, f.grid, h)?;
            for k in 1..=snaps {
                for _ in 0..per {
                    st.step(&mut f);
                }
                f.t = k as f64 * per as f64 * h;
                check_finite(&f, scale, 1e6)?;
                out.push(f.clone());
            }
        }
        EvolutionMode::Linearized(op) => {
            let st = LinearizedStepper::new(op, f.grid, h)?;
            for k in 1..=snaps {
                for _ in 0..per {
                    st.step(&mut f);
                }
                f.t = k as f64 * per as f64 * h;
                check_finite(&f, scale, 1e6)?;
                out.push(f.clone());
            }
        }
    }
    Ok(out)
}

fn check_finite(f: &Field, scale: f64, factor: f64) -> Result<()> {
    let m = f.norm(Norm::Linf);
    if !m.is_finite() || m > factor * scale {
        return Err(Error::Numerical(format!("blow-up at t = {}: sup norm {m:e}", f.t)));
    }
    Ok(())
}

/// Steady state of the semi-discrete system together with its frame speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteWave {
    pub field: Field,
    pub frame: Frame,
    /// Speed of the continuous profile.
    pub s_exact: f64,
    pub newton_iterations: usize,
    pub residual: f64,
    /// max |discrete − continuous profile| on the grid.
    pub profile_gap: f64,
}

/// Ū(x − shift) sampled on a grid, end states outside the profile window.
pub fn sample_profile(profile: &Profile, grid: Grid, shift: f64) -> Field {
    let w = &profile.wave;
    let xm = profile.x_max();
    Field::from_fn(grid, |x| {
        let x = x - shift;
        if x < -xm {
            [w.u_minus, w.z_minus]
        } else if x > xm {
            [w.u_plus, w.z_plus]
        } else {
            let p = profile.eval(x);
            [p.u(), p.z()]
        }
    })
}

fn nonlinear_coeffs(params: &ModelParams, s: f64, f: &Field) -> Vec<Coeffs> {
    (0..f.grid.n)
        .map(|i| {
            let (u, z) = (f.u[i], f.z[i]);
            let fl = params.flux.eval(u, z);
            let (phi, dphi) = params.ignition.eval(u);
            let r = params.k * dphi * z;
            Coeffs {
                a: nalgebra::Matrix2::new(fl.f_u - s, fl.f_z, 0.0, -s),
                da: nalgebra::Matrix2::zeros(),
                c: nalgebra::Matrix2::new(params.q * r, params.q * params.k * phi, -r, -params.k * phi),
            }
        })
        .collect()
}

/// Newton's method for the discrete traveling wave: the semi-discrete
/// right-hand side vanishes, the speed is an unknown and ū at the node
/// nearest 0 is pinned to the continuous profile.
pub fn discrete_wave(profile: &Profile, grid: Grid, opts: &EvolutionOptions) -> Result<DiscreteWave> {
    discrete_wave_shifted(profile, grid, 0.0, opts)
}

/// As [`discrete_wave`] for the profile translated by `shift`.
pub fn discrete_wave_shifted(profile: &Profile, grid: Grid, shift: f64, opts: &EvolutionOptions) -> Result<DiscreteWave> {
    let params = &profile.params;
    let mut frame = Frame::of(profile);
    let start = sample_profile(profile, grid, shift);
    let mut f = start.clone();
    let pin = grid.nearest(0.0);
    let target = profile.eval(grid.x(pin) - shift).u();
    let n = grid.n;
    let dx = grid.dx;
    let mut res = f64::INFINITY;
    let mut best: Option<(f64, Field, Frame, usize)> = None;
    let mut stalled = 0;
    let done = |f: Field, frame: Frame, it: usize, res: f64| DiscreteWave {
        profile_gap: f.max_abs_diff(&start),
        field: f,
        frame,
        s_exact: profile.wave.s,
        newton_iterations: it,
        residual: res,
    };
    for it in 0..opts.max_newton {
        let (ru, rz) = nonlinear_rhs(params, &frame, &f);
        res = ru.iter().chain(&rz).fold(0.0f64, |a, v| a.max(v.abs()));
        if res < opts.newton_tol {
            return Ok(done(f, frame, it, res));
        }
        if best.as_ref().map_or(true, |b| res < b.0) {
            best = Some((res, f.clone(), frame, it));
            stalled = 0;
        } else {
            stalled += 1;
        }
        if stalled >= 4 && best.as_ref().is_some_and(|b| b.0 < opts.newton_stall_tol) {
            break;
        }
        let jac = assemble_operator(&grid, (params.b, params.d), &nonlinear_coeffs(params, frame.s, &f)).factor()?;
        let mut a: Vec<f64> = (0..n).flat_map(|i| [-ru[i], -rz[i]]).collect();
        // ∂F/∂s = ∂ₓ(u, z) with the Dirichlet data.
        let mut bvec = vec![0.0; 2 * n];
        for (c, v) in [&f.u, &f.z].into_iter().enumerate() {
            let lo = [frame.left[0], frame.left[1]][c];
            let hi = [frame.right[0], frame.right[1]][c];
            for i in 0..n {
                let vm = if i > 0 { v[i - 1] } else { lo };
                let vp = if i + 1 < n { v[i + 1] } else { hi };
                bvec[2 * i + c] = -(vp - vm) / (2.0 * dx);
            }
        }
        jac.solve_in_place(&mut a);
        jac.solve_in_place(&mut bvec);
        let g = f.u[pin] - target;
        let den = bvec[2 * pin];
        if den.abs() < 1e-300 {
            return Err(Error::Singular("phase condition is degenerate".into()));
        }
        let ds = (-g - a[2 * pin]) / den;
        for i in 0..n {
            f.u[i] += a[2 * i] + ds * bvec[2 * i];
            f.z[i] += a[2 * i + 1] + ds * bvec[2 * i + 1];
        }
        frame.s += ds;
    }
    if let Some((r, f, frame, it)) = best {
        if r < opts.newton_stall_tol {
            return Ok(done(f, frame, it, r));
        }
        res = r;
    }
    Err(Error::Numerical(format!(
        "discrete traveling wave: Newton did not converge (residual {res:e})"
    )))
}

/// Shape of an initial perturbation; the amplitude is set by E₀.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Perturbation {
    /// exp(−(x−center)²/(2·width²))·direction
    Gaussian { center: f64, width: f64, direction: [f64; 2] },
    /// exp(1 − 1/(1 − r²)) for r = (x−center)/width ∈ (−1, 1)
    Bump { center: f64, width: f64, direction: [f64; 2] },
    /// (1+|x|)^{-3/2}·direction, the slowest decay the weighted bound allows
    Algebraic { direction: [f64; 2] },
    /// Samples (x, u, z), linearly interpolated and zero outside.
    Samples { x: Vec<f64>, u: Vec<f64>, z: Vec<f64> },
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation::Gaussian { center: 0.0, width: 1.0, direction: [1.0, 0.0] }
    }
}

impl Perturbation {
    pub fn name(&self) -> &'static str {
        match self {
            Perturbation::Gaussian { .. } => "gaussian",
            Perturbation::Bump { .. } => "bump",
            Perturbation::Algebraic { .. } => "algebraic",
            Perturbation::Samples { .. } => "file",
        }
    }

    pub fn shape(&self, x: f64) -> [f64; 2] {
        match self {
            Perturbation::Gaussian { center, width, direction } => {
                let g = (-(x - center).powi(2) / (2.0 * width * width)).exp();
                [g * direction[0], g * direction[1]]
            }
            Perturbation::Bump { center, width, direction } => {
                let r = (x - center) / width;
                let g = if r.abs() < 1.0 { (1.0 - 1.0 / (1.0 - r * r)).exp() } else { 0.0 };
                [g * direction[0], g * direction[1]]
            }
            Perturbation::Algebraic { direction } => {
                let g = (1.0 + x.abs()).powf(-1.5);
                [g * direction[0], g * direction[1]]
            }
            Perturbation::Samples { x: xs, u, z } => {
                let n = xs.len();
                if n == 0 || x < xs[0] || x > xs[n - 1] {
                    return [0.0; 2];
                }
                let k = xs.partition_point(|v| *v <= x).clamp(1, n - 1);
                let (x0, x1) = (xs[k - 1], xs[k]);
                let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
                [u[k - 1] + t * (u[k] - u[k - 1]), z[k - 1] + t * (z[k] - z[k - 1])]
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Perturbation::Gaussian { width, direction, .. } | Perturbation::Bump { width, direction, .. } => {
                if !(*width > 0.0) || direction.iter().all(|d| *d == 0.0) {
                    return Err(Error::InvalidInput("perturbation needs positive width and nonzero direction".into()));
                }
            }
            Perturbation::Algebraic { direction } => {
                if direction.iter().all(|d| *d == 0.0) {
                    return Err(Error::InvalidInput("perturbation needs a nonzero direction".into()));
                }
            }
            Perturbation::Samples { x, u, z } => {
                if x.len() != u.len() || x.len() != z.len() || x.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidInput("perturbation samples need increasing x and matching columns".into()));
                }
            }
        }
        Ok(())
    }

    /// Field with sup (1+|x|)^{3/2}|U₀| = e0 (zero field when e0 = 0).
    pub fn field(&self, grid: Grid, e0: f64) -> Result<Field> {
        self.validate()?;
        let raw = Field::from_fn(grid, |x| self.shape(x));
        let w = weighted_sup(&raw);
        if e0 == 0.0 {
            return Ok(Field::zeros(grid));
        }
        if !(w > 0.0) {
            return Err(Error::InvalidInput("perturbation vanishes on the grid".into()));
        }
        let k = e0 / w;
        Ok(Field {
            grid,
            t: 0.0,
            u: raw.u.iter().map(|v| v * k).collect(),
            z: raw.z.iter().map(|v| v * k).collect(),
        })
    }
}

/// sup (1+|x|)^{3/2}|U(x)|.
pub fn weighted_sup(f: &Field) -> f64 {
    (0..f.grid.n)
        .map(|i| (1.0 + f.grid.x(i).abs()).powf(1.5) * f.u[i].hypot(f.z[i]))
        .fold(0.0, f64::max)
}

/// Decay templates θ, ψ₁, ψ₂ built on the undamped characteristic speeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTemplates {
    pub a_minus: Vec<f64>,
    pub a_plus: Vec<f64>,
    pub l: f64,
    pub m: f64,
}

impl DecayTemplates {
    pub fn new(profile: &Profile) -> Self {
        let (a_minus, a_plus) = undamped_speeds(profile);
        let l = 8.0 * profile.params.d.max(1.0);
        DecayTemplates { a_minus, a_plus, l, m: l }
    }

    fn outgoing(&self) -> impl Iterator<Item = f64> + '_ {
        let m = self.a_minus.iter().filter(|a| **a < 0.0);
        let p = self.a_plus.iter().filter(|a| **a > 0.0);
        m.chain(p).copied()
    }

    /// Whether θ and ψ₁ have no terms.
    pub fn outgoing_sums_empty(&self) -> bool {
        self.outgoing().next().is_none()
    }

    /// Indicator of the region between the extremal outgoing characteristics.
    pub fn chi(&self, x: f64, t: f64) -> f64 {
        let lo = self.a_minus.iter().map(|a| a * t).fold(0.0, f64::min);
        let hi = self.a_plus.iter().map(|a| a * t).fold(0.0, f64::max);
        if x >= lo && x <= hi {
            1.0
        } else {
            0.0
        }
    }

    pub fn theta(&self, x: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.outgoing()
            .map(|a| (1.0 + t).powf(-0.5) * (-(x - a * t).powi(2) / (self.l * t)).exp())
            .sum()
    }

    pub fn psi1(&self, x: f64, t: f64) -> f64 {
        let chi = self.chi(x, t);
        if chi == 0.0 {
            return 0.0;
        }
        self.outgoing()
            .map(|a| chi * (1.0 + x.abs() + t).powf(-0.5) * (1.0 + (x - a * t).abs()).powf(-0.5))
            .sum()
    }

    pub fn psi2(&self, x: f64, t: f64) -> f64 {
        let rest = 1.0 - self.chi(x, t);
        if rest == 0.0 {
            return 0.0;
        }
        let a1 = self.a_minus.iter().copied().fold(f64::INFINITY, f64::min);
        let an = self.a_plus.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let term = |a: f64| (1.0 + (x - a * t).abs() + t.sqrt()).powf(-1.5);
        rest * (term(a1) + term(an))
    }

    pub fn total(&self, x: f64, t: f64) -> f64 {
        self.theta(x, t) + self.psi1(x, t) + self.psi2(x, t)
    }
}

/// Evaluates Ū(x − δ) from grid samples with end states beyond the grid.
struct ShiftedBase<'a> {
    base: &'a Field,
    pu: Vec<f64>,
    pz: Vec<f64>,
}

const PAD: usize = 3;

impl<'a> ShiftedBase<'a> {
    fn new(base: &'a Field, frame: &Frame) -> Self {
        let pad = |v: &[f64], lo: f64, hi: f64| -> Vec<f64> {
            let mut out = vec![lo; PAD];
            out.extend_from_slice(v);
            out.extend(std::iter::repeat(hi).take(PAD));
            out
        };
        ShiftedBase {
            base,
            pu: pad(&base.u, frame.left[0], frame.right[0]),
            pz: pad(&base.z, frame.left[1], frame.right[1]),
        }
    }

    /// (value, derivative) of (ū, z̄) at x.
    fn eval(&self, x: f64) -> ([f64; 2], [f64; 2]) {
        let g = &self.base.grid;
        let x0 = g.x0 - PAD as f64 * g.dx;
        let xn = x0 + (self.pu.len() - 1) as f64 * g.dx;
        if x <= x0 {
            return ([self.pu[0], self.pz[0]], [0.0; 2]);
        }
        if x >= xn {
            return ([self.pu[self.pu.len() - 1], self.pz[self.pz.len() - 1]], [0.0; 2]);
        }
        let (u, du) = lagrange6(x0, g.dx, &self.pu, x);
        let (z, dz) = lagrange6(x0, g.dx, &self.pz, x);
        ([u, z], [du, dz])
    }
}

/// Least-squares shift: δ minimizing ‖Ũ − Ū(· − δ)‖²_{L²} by Gauss–Newton,
/// returning (δ, reliable, Ũ − Ū(· − δ)).
fn fit_shift(sb: &ShiftedBase<'_>, f: &Field, guess: f64) -> (f64, bool, Field) {
    let g = f.grid;
    let mut delta = guess;
    let mut reliable = true;
    let mut resid = Field::zeros(g);
    for it in 0..50 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..g.n {
            let (w, dw) = sb.eval(g.x(i) - delta);
            let (ru, rz) = (f.u[i] - w[0], f.z[i] - w[1]);
            resid.u[i] = ru;
            resid.z[i] = rz;
            num += ru * dw[0] + rz * dw[1];
            den += dw[0] * dw[0] + dw[1] * dw[1];
        }
        if den * g.dx < 1e-12 {
            reliable = false;
            break;
        }
        let step = -num / den;
        delta += step;
        if step.abs() < 1e-14 * (1.0 + delta.abs()) || it == 49 {
            if it == 49 {
                reliable = false;
            }
            for i in 0..g.n {
                let (w, _) = sb.eval(g.x(i) - delta);
                resid.u[i] = f.u[i] - w[0];
                resid.z[i] = f.z[i] - w[1];
            }
            break;
        }
    }
    resid.t = f.t;
    (delta, reliable, resid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub t_end: f64,
    pub snap_every: f64,
    /// Keep every k-th snapshot field in the run (0 keeps none).
    pub keep_every: usize,
    /// Spatial stride of kept fields.
    pub keep_stride: usize,
    pub evolution: EvolutionOptions,
    /// Track the linear phase −∫e(y,t)·U₀(y)dy from the excited kernel.
    pub linear_phase: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            t_end: 200.0,
            snap_every: 0.5,
            keep_every: 0,
            keep_stride: 1,
            evolution: EvolutionOptions::default(),
            linear_phase: true,
        }
    }
}

/// One snapshot of a perturbation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSample {
    pub t: f64,
    pub delta: f64,
    pub delta_reliable: bool,
    /// Norms of Ũ(·+δ(t), t) − Ū.
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    /// sup_x |U(x,t)| / (θ+ψ₁+ψ₂)(x,t)
    pub template_ratio: f64,
    /// Σ(u+qz)dx of Ũ minus that of Ū.
    pub mass: f64,
    /// −∫e(y,t)·U₀(y)dy
    pub delta_linear: Option<f64>,
}

impl RunSample {
    pub fn norm(&self, p: Norm) -> f64 {
        match p {
            Norm::L1 => self.l1,
            Norm::L2 => self.l2,
            Norm::Linf => self.linf,
        }
    }
}

impl Norm {
    fn index(self) -> usize {
        match self {
            Norm::L1 => 0,
            Norm::L2 => 1,
            Norm::Linf => 2,
        }
    }
}

/// Nonlinear trajectory with phase and norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRun {
    pub e0: f64,
    pub perturbation: Perturbation,
    pub grid: Grid,
    pub dt: f64,
    pub frame: Frame,
    pub s_exact: f64,
    /// Mass of u + qz carried by U₀.
    pub initial_mass: f64,
    /// −M₀/[u + qz] (translation carrying the same mass).
    pub delta_from_mass: f64,
    pub templates: DecayTemplates,
    /// (L¹, L², L^∞) distance between the discrete steady state pinned at the
    /// final shift and the interpolated shift of Ū: the level below which
    /// norms stop decaying.
    pub noise_floor: [f64; 3],
    /// Why the noise floor is zero, when the discrete steady state failed.
    pub noise_floor_error: Option<String>,
    pub samples: Vec<RunSample>,
    /// Kept perturbation fields Ũ − Ū (downsampled).
    pub fields: Vec<Field>,
    pub aborted: Option<String>,
}

impl PerturbationRun {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Central differences of δ(t) at the sample times.
    pub fn delta_dot(&self) -> Vec<f64> {
        let s = &self.samples;
        let n = s.len();
        (0..n)
            .map(|i| {
                if n < 2 {
                    0.0
                } else if i == 0 {
                    (s[1].delta - s[0].delta) / (s[1].t - s[0].t)
                } else if i == n - 1 {
                    (s[n - 1].delta - s[n - 2].delta) / (s[n - 1].t - s[n - 2].t)
                } else {
                    (s[i + 1].delta - s[i - 1].delta) / (s[i + 1].t - s[i - 1].t)
                }
            })
            .collect()
    }

    /// ζ(t) = sup_{s ≤ t} (template ratio + |δ̇(s)|(1+s)).
    pub fn zeta(&self) -> Vec<f64> {
        let dd = self.delta_dot();
        let mut m: f64 = 0.0;
        self.samples
            .iter()
            .zip(dd)
            .map(|(s, d)| {
                m = m.max(s.template_ratio + d.abs() * (1.0 + s.t));
                m
            })
            .collect()
    }
}

/// Runs Ū + U₀ with Ū the discrete traveling wave and tracks the phase.
pub fn perturb_and_track(profile: &Profile, perturbation: &Perturbation, e0: f64, opts: &RunOptions) -> Result<PerturbationRun> {
    if !(opts.t_end > 0.0 && opts.snap_every > 0.0) {
        return Err(Error::InvalidInput("need T > 0 and a positive snapshot interval".into()));
    }
    if !(e0 >= 0.0 && e0.is_finite()) {
        return Err(Error::InvalidInput(format!("E0 must be non-negative, got {e0}")));
    }
    let eo = &opts.evolution;
    let dx = default_dx(profile, eo);
    let grid = Grid::symmetric(default_half_width(profile, opts.t_end, eo), dx)?;
    let wave = discrete_wave(profile, grid, eo)?;
    let base = &wave.field;
    let frame = wave.frame;
    let params = &profile.params;
    let u0 = perturbation.field(grid, e0)?;
    let mut f = base.add(&u0);
    let w = &profile.wave;
    let jump = (w.u_plus + params.q * w.z_plus) - (w.u_minus + params.q * w.z_minus);
    let m0 = u0.mass(params.q);
    let base_mass = base.mass(params.q);

    let snaps = (opts.t_end / opts.snap_every).round().max(1.0) as usize;
    let dt0 = default_dt(profile, grid.dx, eo);
    let snap = opts.t_end / snaps as f64;
    let per = (snap / dt0).ceil() as usize;
    let dt = snap / per as f64;

    let sp = SpectralProblem::new(profile);
    let excited = if opts.linear_phase && e0 > 0.0 {
        ExcitedKernel::new(&sp, 0.05).ok()
    } else {
        None
    };
    let templates = DecayTemplates::new(profile);
    let sb = ShiftedBase::new(base, &frame);
    let xs = grid.xs();

    let measure = |f: &Field, guess: f64| -> RunSample {
        let (delta, reliable, resid) = fit_shift(&sb, f, guess);
        let t = f.t;
        let ratio = if t > 0.0 {
            (0..grid.n)
                .map(|i| resid.u[i].hypot(resid.z[i]) / templates.total(xs[i] - delta, t))
                .fold(0.0, f64::max)
        } else {
            0.0
        };
        let delta_linear = excited.as_ref().map(|ek| {
            if t <= 0.0 {
                0.0
            } else {
                -(0..grid.n)
                    .map(|i| {
                        let e = ek.e(xs[i], t);
                        e[0] * u0.u[i] + e[1] * u0.z[i]
                    })
                    .sum::<f64>()
                    * grid.dx
            }
        });
        RunSample {
            t,
            delta,
            delta_reliable: reliable,
            l1: resid.norm(Norm::L1),
            l2: resid.norm(Norm::L2),
            linf: resid.norm(Norm::Linf),
            template_ratio: ratio,
            mass: f.mass(params.q) - base_mass,
            delta_linear,
        }
    };

    let keep = |f: &Field| -> Field {
        let st = opts.keep_stride.max(1);
        let d = f.sub(base);
        let idx: Vec<usize> = (0..grid.n).step_by(st).collect();
        Field {
            grid: Grid { x0: grid.x0, dx: grid.dx * st as f64, n: idx.len() },
            t: f.t,
            u: idx.iter().map(|&i| d.u[i]).collect(),
            z: idx.iter().map(|&i| d.z[i]).collect(),
        }
    };

    let mut samples = vec![measure(&f, 0.0)];
    let mut fields = Vec::new();
    if opts.keep_every > 0 {
        fields.push(keep(&f));
    }
    let scale = samples[0].linf;
    let mut stepper = NonlinearStepper::new(params, frame, grid, dt)?;
    let mut aborted = None;
    for k in 1..=snaps {
        for _ in 0..per {
            stepper.step(&mut f);
        }
        f.t = k as f64 * snap;
        let s = measure(&f, samples[samples.len() - 1].delta);
        let bad = !s.linf.is_finite() || (scale > 0.0 && s.linf > eo.blowup_factor * scale);
        samples.push(s);
        if opts.keep_every > 0 && k % opts.keep_every == 0 {
            fields.push(keep(&f));
        }
        if bad {
            aborted = Some(format!("perturbation grew beyond {:e}× at t = {}", eo.blowup_factor, f.t));
            break;
        }
    }
    let d_end = samples[samples.len() - 1].delta;
    let (noise_floor, noise_floor_error) = match discrete_wave_shifted(profile, grid, d_end, eo) {
        Ok(dw) => {
            let (_, _, r) = fit_shift(&sb, &dw.field, d_end);
            ([r.norm(Norm::L1), r.norm(Norm::L2), r.norm(Norm::Linf)], None)
        }
        Err(e) => ([0.0; 3], Some(e.to_string())),
    };
    Ok(PerturbationRun {
        e0,
        perturbation: perturbation.clone(),
        grid,
        dt,
        frame,
        s_exact: profile.wave.s,
        initial_mass: m0,
        delta_from_mass: -m0 / jump,
        templates,
        noise_floor,
        noise_floor_error,
        samples,
        fields,
        aborted,
    })
}

/// Log-log fit of one norm over a time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub norm: Norm,
    pub exponent: f64,
    pub expected: f64,
    pub t_start: f64,
    pub t_stop: f64,
    pub points: usize,
    pub r2: f64,
    /// Window cut short because the norm reached the noise floor.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub t_start: f64,
    /// Norms below this multiple of the run's noise floor end the window.
    pub floor_factor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { t_start: 10.0, floor_factor: 3.0 }
    }
}

/// Fits ‖Ũ(·+δ) − Ū‖_p ∼ (1+t)^k for each requested norm.
pub fn decay_rates(run: &PerturbationRun, norms: &[Norm], opts: &FitOptions) -> Result<Vec<DecayFit>> {
    norms
        .iter()
        .map(|&p| {
            let floor = opts.floor_factor * run.noise_floor[p.index()];
            let mut truncated = false;
            let mut pts = Vec::new();
            for s in run.samples.iter().filter(|s| s.t >= opts.t_start) {
                let v = s.norm(p);
                if !(v > floor) {
                    truncated = true;
                    break;
                }
                pts.push(((1.0 + s.t).ln(), v.ln()));
            }
            let (lx, ly): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
            let fit = line_fit(&lx, &ly).ok_or_else(|| {
                Error::Numerical(format!("{}: fewer than two points above the noise floor", p.as_str()))
            })?;
            Ok(DecayFit {
                norm: p,
                exponent: fit.slope,
                expected: p.expected_exponent(),
                t_start: lx[0].exp() - 1.0,
                t_stop: lx[lx.len() - 1].exp() - 1.0,
                points: fit.n,
                r2: fit.r2,
                truncated,
            })
        })
        .collect()
}

/// Phase diagnostics of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub delta_final: f64,
    pub delta_from_mass: f64,
    pub delta_linear_final: Option<f64>,
    /// sup |δ̇|(1+t) over the first and second halves of the window.
    pub delta_dot_weighted_first: f64,
    pub delta_dot_weighted_second: f64,
    pub delta_dot_bounded: bool,
    /// Envelope exponent of |δ(t) − δ(T)| over [t_start, T/2].
    pub delta_envelope: Option<LineFit>,
    pub unreliable_samples: usize,
}

fn halves(ts: &[f64], vs: &[f64], t0: f64) -> (f64, f64) {
    let t_end = ts.last().copied().unwrap_or(t0);
    let mid = 0.5 * (t0 + t_end);
    let mut a: f64 = 0.0;
    let mut b: f64 = 0.0;
    for (t, v) in ts.iter().zip(vs) {
        if *t < t0 {
            continue;
        }
        if *t <= mid {
            a = a.max(*v);
        } else {
            b = b.max(*v);
        }
    }
    (a, b)
}

/// Growth allowance between window halves that still counts as bounded.
pub const TREND_SLACK: f64 = 1.1;

pub fn phase_report(run: &PerturbationRun, opts: &FitOptions) -> PhaseReport {
    let ts = run.times();
    let dd = run.delta_dot();
    let w: Vec<f64> = dd.iter().zip(&ts).map(|(d, t)| d.abs() * (1.0 + t)).collect();
    let (a, b) = halves(&ts, &w, opts.t_start);
    let last = run.samples.last();
    let d_inf = last.map(|s| s.delta).unwrap_or(0.0);
    let t_end = last.map(|s| s.t).unwrap_or(0.0);
    let (et, ev): (Vec<f64>, Vec<f64>) = run
        .samples
        .iter()
        .filter(|s| s.t >= opts.t_start && s.t <= 0.5 * t_end)
        .map(|s| (s.t, (s.delta - d_inf).abs()))
        .unzip();
    PhaseReport {
        delta_final: d_inf,
        delta_from_mass: run.delta_from_mass,
        delta_linear_final: last.and_then(|s| s.delta_linear),
        delta_dot_weighted_first: a,
        delta_dot_weighted_second: b,
        delta_dot_bounded: b <= TREND_SLACK * a,
        delta_envelope: envelope_exponent(&et, &ev),
        unreliable_samples: run.samples.iter().filter(|s| !s.delta_reliable).count(),
    }
}

/// Comparison of |U| against θ+ψ₁+ψ₂.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateReport {
    pub l: f64,
    pub m: f64,
    pub outgoing_sums_empty: bool,
    pub t_start: f64,
    pub sup_ratio: f64,
    pub first_half_sup: f64,
    pub second_half_sup: f64,
    /// Log-log slope of the ratio over the window.
    pub trend_slope: Option<f64>,
    pub upward_trend: bool,
    pub sup_delta_dot_weighted: f64,
    pub zeta_final: f64,
}

pub fn template_compare(run: &PerturbationRun, opts: &FitOptions) -> TemplateReport {
    let ts = run.times();
    let r: Vec<f64> = run.samples.iter().map(|s| s.template_ratio).collect();
    let (a, b) = halves(&ts, &r, opts.t_start);
    let (lx, ly): (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(&r)
        .filter(|(t, v)| **t >= opts.t_start && **v > 0.0)
        .map(|(t, v)| ((1.0 + t).ln(), v.ln()))
        .unzip();
    let dd = run.delta_dot();
    let sup_dd = dd
        .iter()
        .zip(&ts)
        .filter(|(_, t)| **t >= opts.t_start)
        .map(|(d, t)| d.abs() * (1.0 + t))
        .fold(0.0, f64::max);
    TemplateReport {
        l: run.templates.l,
        m: run.templates.m,
        outgoing_sums_empty: run.templates.outgoing_sums_empty(),
        t_start: opts.t_start,
        sup_ratio: r.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max),
        first_half_sup: a,
        second_half_sup: b,
        trend_slope: line_fit(&lx, &ly).map(|f| f.slope),
        upward_trend: b > TREND_SLACK * a,
        sup_delta_dot_weighted: sup_dd,
        zeta_final: run.zeta().last().copied().unwrap_or(0.0),
    }
}

/// Structure of the quadratic reactive remainder along the profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceReport {
    /// max |r(U)|
    pub max_remainder: f64,
    /// max |r(U/2)|
    pub max_remainder_half: f64,
    /// max|r(U)| / max|r(U/2)| (≈ 4 for a quadratic remainder)
    pub scaling_ratio: f64,
    /// max |r(U)| over nodes where ū and ū+u both lie outside the ignition range
    pub max_outside_support: f64,
    /// Nodes in that set.
    pub outside_nodes: usize,
    /// max |R₁ + qR₂| / max |R| for R = S(Ū+U) − S(Ū) − DS(Ū)U
    pub direction_error: f64,
}

/// Scalar reactive remainder r(U) = kφ(ū+u)(z̄+z) − kφ(ū)z̄ − k(φ′(ū)u z̄ + φ(ū)z).
pub fn reactive_remainder(params: &ModelParams, base: [f64; 2], pert: [f64; 2]) -> f64 {
    let (ub, zb) = (base[0], base[1]);
    let (u, z) = (pert[0], pert[1]);
    let (phi, dphi) = params.ignition.eval(ub);
    let phi_new = params.ignition.phi(ub + u);
    params.k * (phi_new * (zb + z) - phi * zb - (dphi * u * zb + phi * z))
}

pub fn source_structure_check(params: &ModelParams, base: &Field, pert: &Field) -> SourceReport {
    let ign = &params.ignition;
    let inside = |u: f64| u > ign.u_i && u < ign.u_sup;
    let mut max_r: f64 = 0.0;
    let mut max_h: f64 = 0.0;
    let mut max_out: f64 = 0.0;
    let mut outside = 0;
    let mut max_s: f64 = 0.0;
    let mut max_dir: f64 = 0.0;
    for i in 0..base.grid.n {
        let b = [base.u[i], base.z[i]];
        let p = [pert.u[i], pert.z[i]];
        let r = reactive_remainder(params, b, p);
        max_r = max_r.max(r.abs());
        max_h = max_h.max(reactive_remainder(params, b, [0.5 * p[0], 0.5 * p[1]]).abs());
        if !inside(b[0]) && !inside(b[0] + p[0]) && !inside(b[0] - p[0].abs()) {
            outside += 1;
            max_out = max_out.max(r.abs());
        }
        let s1 = params.source(b[0] + p[0], b[1] + p[1]);
        let s0 = params.source(b[0], b[1]);
        let (phi, dphi) = ign.eval(b[0]);
        let lin = (
            params.q * params.k * (dphi * p[0] * b[1] + phi * p[1]),
            -params.k * (dphi * p[0] * b[1] + phi * p[1]),
        );
        let rv = (s1.0 - s0.0 - lin.0, s1.1 - s0.1 - lin.1);
        max_s = max_s.max(rv.0.hypot(rv.1));
        max_dir = max_dir.max((rv.0 + params.q * rv.1).abs());
    }
    SourceReport {
        max_remainder: max_r,
        max_remainder_half: max_h,
        scaling_ratio: if max_h > 0.0 { max_r / max_h } else { f64::NAN },
        max_outside_support: max_out,
        outside_nodes: outside,
        direction_error: if max_s > 0.0 { max_dir / max_s } else { 0.0 },
    }
}

/// Discrete L¹ distance between two sampled fields relative to the L¹ norm
/// of `reference` (same uniform nodes).
pub fn relative_l1(a: &[[f64; 2]], reference: &[[f64; 2]]) -> f64 {
    let num: f64 = a.iter().zip(reference).map(|(p, q)| (p[0] - q[0]).hypot(p[1] - q[1])).sum();
    let den: f64 = reference.iter().map(|q| q[0].hypot(q[1])).sum();
    num / den
}

/// Linearized evolution of several initial data to time t, in parallel.
pub fn linearized_at<O: Operator + ?Sized>(
    op: &O,
    grid: Grid,
    initial: &[Field],
    t: f64,
    dt: f64,
) -> Result<Vec<Field>> {
    let steps = (t / dt).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let st = LinearizedStepper::new(op, grid, h)?;
    Ok(par_map(initial, |f0| {
        let mut f = f0.clone();
        for _ in 0..steps {
            st.step(&mut f);
        }
        f.t = t;
        f
    }))
}
