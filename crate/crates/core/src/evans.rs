//! Evans function by compound-matrix integration, zero counting by the
//! argument principle, and the stability verdict.
//!
//! The unstable 2-plane at −X and the stable 2-plane at +X are represented
//! by their wedges in Λ²C⁴ and transported to x = 0 with the growth rate
//! σ = μ₁ + μ₂ of the selected modes factored out, so the transported
//! wedges match e^{σx}·(limiting wedge) asymptotically. D(λ) is the 4×4
//! determinant of the two planes at x = 0.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::numerics::exterior::{compound2, pairing, PAIRS};
use crate::numerics::ode::{dp45, Dp45Options};
use crate::numerics::{c, par_map};
use crate::profile::{transversality_gamma, Side};
use crate::spectral::{limiting_modes, ModeKind, Operator, SpectralProblem, C64};

pub type CVec6 = Vector6<C64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvansOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Origin indentation radius; default 1e-2·min(1, kφ(u₋), s²/d).
    pub r0: Option<f64>,
    /// Outer radius; default `radius_factor`·max(1, α̂₋², s²/d).
    pub radius: Option<f64>,
    pub radius_factor: f64,
    pub arc_nodes: usize,
    pub axis_nodes: usize,
    pub small_arc_nodes: usize,
    pub origin_nodes: usize,
    /// Maximum number of refinement sweeps.
    pub max_refine: usize,
    /// Contour rejected when min|D| < `min_abs_rel`·max|D|.
    pub min_abs_rel: f64,
}

impl Default for EvansOptions {
    fn default() -> Self {
        EvansOptions {
            rtol: 1e-10,
            atol: 1e-13,
            r0: None,
            radius: None,
            radius_factor: 1.0,
            arc_nodes: 24,
            axis_nodes: 48,
            small_arc_nodes: 8,
            origin_nodes: 16,
            max_refine: 12,
            min_abs_rel: 1e-9,
        }
    }
}

impl EvansOptions {
    fn ode(&self) -> Dp45Options {
        Dp45Options {
            rtol: self.rtol,
            atol: self.atol,
            ..Default::default()
        }
    }

    /// Node counts multiplied by `k`.
    pub fn refined(&self, k: usize) -> Self {
        EvansOptions {
            arc_nodes: self.arc_nodes * k,
            axis_nodes: self.axis_nodes * k,
            small_arc_nodes: self.small_arc_nodes * k,
            origin_nodes: self.origin_nodes * k,
            ..*self
        }
    }
}

/// Wave speed and kφ(u₋) read off the limiting coefficients.
fn limit_scales<O: Operator + ?Sized>(op: &O) -> (f64, f64, f64) {
    let m = op.limit(Side::Minus);
    let s = -m.a[(1, 1)];
    let kphi = -m.c[(1, 1)];
    let alpha_hat = m.a[(0, 0)] + s;
    (s, kphi, alpha_hat)
}

pub fn default_r0<O: Operator + ?Sized>(op: &O) -> f64 {
    let (s, kphi, _) = limit_scales(op);
    let d = op.diffusion().1;
    1e-2 * 1f64.min(kphi).min(s * s / d)
}

pub fn default_radius<O: Operator + ?Sized>(op: &O, factor: f64) -> f64 {
    let (s, _, ah) = limit_scales(op);
    let d = op.diffusion().1;
    factor * 1f64.max(ah * ah).max(s * s / d)
}

/// Limiting 2-plane on one side: stable modes at +∞, unstable at −∞.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryWedge {
    pub side: Side,
    pub lambda: C64,
    pub zeta: CVec6,
    pub sigma: C64,
    pub mu_fluid: C64,
    pub mu_reaction: C64,
    pub warnings: Vec<String>,
}

/// Branches spanning the decaying subspace on each side.
pub fn selected_branch(side: Side) -> i8 {
    match side {
        Side::Plus => -1,
        Side::Minus => 1,
    }
}

/// Wedge of the fluid and reaction modes, normalized so its e₁∧e₂
/// coordinate is 1. Written in closed form so that it stays analytic when
/// the selected fluid and reaction eigenvalues collide.
pub fn boundary_wedge<O: Operator + ?Sized>(op: &O, side: Side, lam: C64) -> Result<BoundaryWedge> {
    let br = selected_branch(side);
    let ms = limiting_modes(op, side, lam);
    let f = ms.get(ModeKind::Fluid, br).mu;
    let other = ms.get(ModeKind::Fluid, -br).mu;
    let r = ms.get(ModeKind::Reaction, br).mu;
    let k = op.limit(side);
    let b = op.diffusion().0;
    let num = r * k.a[(0, 1)] - k.c[(0, 1)];
    let den = (r - other) * b;
    let mut warnings = Vec::new();
    if den.norm() < 1e-12 * (1.0 + r.norm()) {
        return Err(Error::Numerical(format!(
            "{} side: splitting fails at λ = {lam} (reaction mode meets the complementary fluid mode)",
            side.as_str()
        )));
    }
    let sgn = -side.sign();
    if lam.re > 0.0 && (f.re * sgn <= 0.0 || r.re * sgn <= 0.0) {
        warnings.push(format!(
            "{} side: selected modes not separated at λ = {lam}",
            side.as_str()
        ));
    }
    let zeta = CVec6::new(c(1.0, 0.0), num / den, r, -f, c(0.0, 0.0), f * r);
    Ok(BoundaryWedge {
        side,
        lambda: lam,
        zeta,
        sigma: f + r,
        mu_fluid: f,
        mu_reaction: r,
        warnings,
    })
}

/// Transports the boundary wedge of `side` from ±X to `x_end`.
pub fn transport_wedge<O: Operator + ?Sized>(
    op: &O,
    side: Side,
    lam: C64,
    x_end: f64,
    opts: &EvansOptions,
) -> Result<(CVec6, usize)> {
    let bw = boundary_wedge(op, side, lam)?;
    let x0 = side.sign() * op.x_max();
    let shift = Matrix6::identity() * bw.sigma;
    let (z, st) = dp45(
        |x, z: &CVec6| (compound2(&op.matrix(x, lam)) - shift) * z,
        x0,
        x_end,
        bw.zeta,
        &opts.ode(),
    )?;
    Ok((z, st.accepted + st.rejected))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvansEvaluation {
    pub lambda: C64,
    pub d: C64,
    pub minus: [C64; 6],
    pub plus: [C64; 6],
    /// ln‖ζ⁻(0)‖ + ln‖ζ⁺(0)‖: growth left after the σ rescaling.
    pub scale_exponent: f64,
    pub steps: usize,
}

pub fn evans_eval<O: Operator + ?Sized>(op: &O, lam: C64, opts: &EvansOptions) -> Result<EvansEvaluation> {
    if !(lam.re.is_finite() && lam.im.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite λ = {lam}")));
    }
    let (zm, nm) = transport_wedge(op, Side::Minus, lam, 0.0, opts)?;
    let (zp, np) = transport_wedge(op, Side::Plus, lam, 0.0, opts)?;
    let d = pairing(&zm, &zp);
    let arr = |z: &CVec6| std::array::from_fn(|i| z[i]);
    Ok(EvansEvaluation {
        lambda: lam,
        d,
        minus: arr(&zm),
        plus: arr(&zp),
        scale_exponent: zm.norm().ln() + zp.norm().ln(),
        steps: nm + np,
    })
}

pub fn evans_many<O: Operator + ?Sized>(op: &O, lams: &[C64], opts: &EvansOptions) -> Result<Vec<EvansEvaluation>> {
    par_map(lams, |&l| evans_eval(op, l, opts)).into_iter().collect()
}

/// Upper half of a conjugate-symmetric closed contour, parameterized on
/// [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContourPath {
    /// R → iR along the arc, down the imaginary axis (log-spaced) to i r₀,
    /// then around the origin through the right half-plane to r₀. Encloses
    /// {Re λ ≥ 0, r₀ < |λ| < R}.
    Outer { radius: f64, r0: f64 },
    /// Circle |λ| = r₀ from r₀ to −r₀.
    Origin { r0: f64 },
}

impl ContourPath {
    fn breaks(&self, opts: &EvansOptions) -> (f64, f64) {
        let n = (opts.arc_nodes + opts.axis_nodes + opts.small_arc_nodes) as f64;
        let t1 = opts.arc_nodes as f64 / n;
        (t1, t1 + opts.axis_nodes as f64 / n)
    }

    pub fn point(&self, t: f64, opts: &EvansOptions) -> C64 {
        match *self {
            ContourPath::Origin { r0 } => C64::from_polar(r0, PI * t),
            ContourPath::Outer { radius, r0 } => {
                let (t1, t2) = self.breaks(opts);
                if t <= t1 {
                    C64::from_polar(radius, FRAC_PI_2 * t / t1)
                } else if t <= t2 {
                    let f = (t - t1) / (t2 - t1);
                    c(0.0, radius * (r0 / radius).powf(f))
                } else {
                    let f = (t - t2) / (1.0 - t2);
                    C64::from_polar(r0, FRAC_PI_2 * (1.0 - f))
                }
            }
        }
    }

    pub fn initial_params(&self, opts: &EvansOptions) -> Vec<f64> {
        let n = match self {
            ContourPath::Origin { .. } => opts.origin_nodes,
            ContourPath::Outer { .. } => opts.arc_nodes + opts.axis_nodes + opts.small_arc_nodes,
        };
        (0..=n).map(|i| i as f64 / n as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourResult {
    pub path: ContourPath,
    pub nodes: Vec<C64>,
    pub values: Vec<C64>,
    pub scale_exponents: Vec<f64>,
    /// Argument change over the upper half; the closed contour has twice this.
    pub accumulated_arg: f64,
    /// Full-contour argument change / 2π before rounding.
    pub winding_raw: f64,
    pub winding: i64,
    pub min_abs_d: f64,
    pub refinements: usize,
}

/// Zero count inside a conjugate-symmetric contour from the argument
/// change of D along its upper half.
pub fn winding<O: Operator + ?Sized>(op: &O, path: ContourPath, opts: &EvansOptions) -> Result<ContourResult> {
    let mut ts = path.initial_params(opts);
    let lams: Vec<C64> = ts.iter().map(|&t| path.point(t, opts)).collect();
    let mut evs = evans_many(op, &lams, opts)?;
    let mut refinements = 0;
    loop {
        let bad: Vec<usize> = (0..ts.len() - 1)
            .filter(|&i| (evs[i + 1].d / evs[i].d).arg().abs() > FRAC_PI_2)
            .collect();
        if bad.is_empty() {
            break;
        }
        if refinements >= opts.max_refine {
            return Err(Error::Numerical(format!(
                "winding: argument increments above π/2 remain after {refinements} refinements"
            )));
        }
        refinements += 1;
        let mids: Vec<f64> = bad.iter().map(|&i| 0.5 * (ts[i] + ts[i + 1])).collect();
        let new_lams: Vec<C64> = mids.iter().map(|&t| path.point(t, opts)).collect();
        let new_evs = evans_many(op, &new_lams, opts)?;
        let mut nt = Vec::with_capacity(ts.len() + mids.len());
        let mut ne = Vec::with_capacity(ts.len() + mids.len());
        let mut j = 0;
        for i in 0..ts.len() {
            nt.push(ts[i]);
            ne.push(evs[i].clone());
            if j < bad.len() && bad[j] == i {
                nt.push(mids[j]);
                ne.push(new_evs[j].clone());
                j += 1;
            }
        }
        ts = nt;
        evs = ne;
    }
    let values: Vec<C64> = evs.iter().map(|e| e.d).collect();
    let max_abs = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let min_abs = values.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    if !(min_abs > opts.min_abs_rel * max_abs) {
        return Err(Error::Numerical(format!(
            "contour through zero: min|D| = {min_abs:e} (max {max_abs:e}); change the indentation radius"
        )));
    }
    let acc: f64 = values.windows(2).map(|w| (w[1] / w[0]).arg()).sum();
    let raw = acc / PI;
    Ok(ContourResult {
        path,
        nodes: evs.iter().map(|e| e.lambda).collect(),
        values,
        scale_exponents: evs.iter().map(|e| e.scale_exponent).collect(),
        accumulated_arg: acc,
        winding_raw: raw,
        winding: raw.round() as i64,
        min_abs_d: min_abs,
        refinements,
    })
}

/// Central-difference D′(0) from D(±r).
pub fn d_prime_zero<O: Operator + ?Sized>(op: &O, r: f64, opts: &EvansOptions) -> Result<C64> {
    let e = evans_many(op, &[c(r, 0.0), c(-r, 0.0)], opts)?;
    Ok((e[0].d - e[1].d) / (2.0 * r))
}

/// Real zeros of D on [a, b] by sign changes of the real part on an n-point
/// grid refined with Brent's method.
pub fn real_zeros<O: Operator + ?Sized>(op: &O, a: f64, b: f64, n: usize, opts: &EvansOptions) -> Result<Vec<f64>> {
    let xs = crate::numerics::linspace(a, b, n);
    let lams: Vec<C64> = xs.iter().map(|&x| c(x, 0.0)).collect();
    let ds = evans_many(op, &lams, opts)?;
    let mut out = Vec::new();
    for i in 0..n - 1 {
        let (d0, d1) = (ds[i].d.re, ds[i + 1].d.re);
        if d0 == 0.0 {
            out.push(xs[i]);
        } else if d0 * d1 < 0.0 {
            let z = crate::numerics::roots::brent(
                |x| evans_eval(op, c(x, 0.0), opts).map(|e| e.d.re).unwrap_or(f64::NAN),
                xs[i],
                xs[i + 1],
                1e-12,
            )?;
            out.push(z);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Unstable,
    Indeterminate,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Indeterminate => "indeterminate",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub verdict: Verdict,
    pub outer_winding: i64,
    pub outer_winding_doubled_radius: i64,
    pub origin_winding: i64,
    pub radius: f64,
    pub r0: f64,
    pub d_prime_zero: C64,
    /// |D′(0)| relative to |D| on the origin circle over r₀.
    pub d_prime_rel: f64,
    pub gamma: Option<f64>,
    pub min_abs_d: f64,
    pub notes: Vec<String>,
}

/// Counts needed by the verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerdictInputs {
    pub outer: i64,
    pub outer_doubled: i64,
    pub origin: i64,
    pub gamma: Option<f64>,
    pub d_prime_rel: f64,
}

pub const GAMMA_TOL: f64 = 1e-8;
pub const D_PRIME_TOL: f64 = 1e-3;

/// Stable iff no zeros in the punctured right half-plane, a simple zero at
/// the origin, a transversal profile and a nondegenerate D′(0).
pub fn decide(v: &VerdictInputs) -> (Verdict, Vec<String>) {
    let mut notes = Vec::new();
    if v.outer != v.outer_doubled {
        notes.push(format!(
            "outer winding changes from {} to {} when the radius is doubled",
            v.outer, v.outer_doubled
        ));
        return (Verdict::Indeterminate, notes);
    }
    if v.outer > 0 {
        notes.push(format!("{} zero(s) of D in the punctured right half-plane", v.outer));
        return (Verdict::Unstable, notes);
    }
    if v.outer < 0 {
        notes.push(format!("negative outer winding {} (poles or numerical failure)", v.outer));
        return (Verdict::Indeterminate, notes);
    }
    match v.gamma {
        Some(g) if g.abs() > GAMMA_TOL => {}
        Some(g) => {
            notes.push(format!("profile connection not transversal (γ = {g:e})"));
            return (Verdict::Indeterminate, notes);
        }
        None => notes.push("γ not available".into()),
    }
    if v.origin != 1 {
        notes.push(format!("origin winding {} (expected a simple translational zero)", v.origin));
        return (Verdict::Indeterminate, notes);
    }
    if v.d_prime_rel < D_PRIME_TOL {
        notes.push(format!("D′(0) degenerate (relative size {:e})", v.d_prime_rel));
        return (Verdict::Indeterminate, notes);
    }
    (Verdict::Stable, notes)
}

/// Full stability analysis of an operator, with γ supplied by the caller.
pub fn analyze<O: Operator + ?Sized>(op: &O, gamma: Option<f64>, opts: &EvansOptions) -> Result<(StabilityReport, ContourResult, ContourResult)> {
    let r0 = opts.r0.unwrap_or_else(|| default_r0(op));
    let radius = opts.radius.unwrap_or_else(|| default_radius(op, opts.radius_factor));
    let outer = winding(op, ContourPath::Outer { radius, r0 }, opts)?;
    let outer2 = winding(op, ContourPath::Outer { radius: 2.0 * radius, r0 }, opts)?;
    let origin = winding(op, ContourPath::Origin { r0 }, opts)?;
    let dp = d_prime_zero(op, r0, opts)?;
    let typical = origin.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let d_prime_rel = dp.norm() * r0 / typical;
    let inputs = VerdictInputs {
        outer: outer.winding,
        outer_doubled: outer2.winding,
        origin: origin.winding,
        gamma,
        d_prime_rel,
    };
    let (v, notes) = decide(&inputs);
    let report = StabilityReport {
        verdict: v,
        outer_winding: outer.winding,
        outer_winding_doubled_radius: outer2.winding,
        origin_winding: origin.winding,
        radius,
        r0,
        d_prime_zero: dp,
        d_prime_rel,
        gamma,
        min_abs_d: outer.min_abs_d.min(origin.min_abs_d),
        notes,
    };
    Ok((report, outer, origin))
}

/// Stability verdict for a profile's linearization.
pub fn verdict(problem: &SpectralProblem<'_>, opts: &EvansOptions) -> Result<StabilityReport> {
    let gamma = transversality_gamma(problem.profile).ok();
    analyze(problem, gamma, opts).map(|r| r.0)
}

/// Index of e_i∧e_j in the Λ² basis.
pub fn pair_index(i: usize, j: usize) -> usize {
    PAIRS.iter().position(|&p| p == (i, j)).expect("i < j < 4")
}
