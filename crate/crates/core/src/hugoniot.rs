//! Rankine–Hugoniot end-state algebra, wave classification, CJ speeds and the
//! gamma-law mixture pressure law.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::roots::{brent, scan_roots};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WaveClass {
    StrongDetonation,
    WeakDetonation,
    WeakDeflagration,
    StrongDeflagration,
    ChapmanJouguetDetonation,
    ChapmanJouguetDeflagration,
}

impl WaveClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            WaveClass::StrongDetonation => "StrongDetonation",
            WaveClass::WeakDetonation => "WeakDetonation",
            WaveClass::WeakDeflagration => "WeakDeflagration",
            WaveClass::StrongDeflagration => "StrongDeflagration",
            WaveClass::ChapmanJouguetDetonation => "ChapmanJouguetDetonation",
            WaveClass::ChapmanJouguetDeflagration => "ChapmanJouguetDeflagration",
        }
    }
}

impl std::fmt::Display for WaveClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub class: WaveClass,
    /// f_u(u₋, 0)
    pub alpha_hat_minus: f64,
    /// f_u(u₊, 1)
    pub alpha_hat_plus: f64,
}

pub fn cj_tolerance(s: f64) -> f64 {
    1e-8 * s.abs().max(1.0)
}

pub fn classify(params: &ModelParams, u_minus: f64, u_plus: f64, s: f64) -> Classification {
    let am = params.flux.eval(u_minus, 0.0).f_u;
    let ap = params.flux.eval(u_plus, 1.0).f_u;
    let tol = cj_tolerance(s);
    let class = if (am - s).abs() < tol || (ap - s).abs() < tol {
        if u_minus >= u_plus {
            WaveClass::ChapmanJouguetDetonation
        } else {
            WaveClass::ChapmanJouguetDeflagration
        }
    } else {
        match (am > s, ap > s) {
            (true, false) => WaveClass::StrongDetonation,
            (false, false) => WaveClass::WeakDetonation,
            (true, true) => WaveClass::WeakDeflagration,
            (false, true) => WaveClass::StrongDeflagration,
        }
    };
    Classification {
        class,
        alpha_hat_minus: am,
        alpha_hat_plus: ap,
    }
}

/// f(u₊,1) − f(u₋,0) − s·q − s·(u₊ − u₋)
pub fn rh_residual(params: &ModelParams, u_minus: f64, u_plus: f64, s: f64) -> f64 {
    params.flux.f(u_plus, 1.0) - params.flux.f(u_minus, 0.0) - s * params.q - s * (u_plus - u_minus)
}

fn rh_scale(params: &ModelParams, u_minus: f64, u_plus: f64, s: f64) -> f64 {
    1.0 + params.flux.f(u_plus, 1.0).abs()
        + params.flux.f(u_minus, 0.0).abs()
        + (s * params.q).abs()
        + (s * (u_plus - u_minus)).abs()
}

/// u₋ ∈ [u_i, u_sup] and u₊ outside it.
pub fn end_states_admissible(params: &ModelParams, u_minus: f64, u_plus: f64) -> bool {
    let ig = &params.ignition;
    ig.contains(u_minus) && !ig.contains(u_plus)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhRoot {
    pub u_minus: f64,
    pub classification: Classification,
    pub admissible: bool,
    pub residual: f64,
}

const SEARCH_REACH: f64 = 1e6;

/// All real roots u₋ of the RH equation for fixed (u₊, s), in increasing order.
///
/// For f convex in u the residual is concave in u₋, so the roots straddle
/// the tangency point f_u(u_m,0) = s; each side is bracketed by expansion
/// and polished with Brent.
pub fn solve_rh(params: &ModelParams, u_plus: f64, s: f64) -> Result<Vec<RhRoot>> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidInput(format!("wave speed must be positive, got {s}")));
    }
    let fl = &params.flux;
    let g = |um: f64| rh_residual(params, um, u_plus, s);
    let slope = |u: f64| fl.eval(u, 0.0).f_u - s;

    let mut roots = Vec::new();
    if params.flux.eval(0.0, 0.0).f_uu > 0.0 {
        let u_m = tangency_point(&slope, u_plus)?;
        let gm = g(u_m);
        let tol = 1e-13 * rh_scale(params, u_m, u_plus, s);
        if gm.abs() <= tol {
            roots.push(u_m);
        } else if gm > 0.0 {
            for dir in [-1.0, 1.0] {
                let mut step = 1.0f64.max(u_m.abs());
                let mut far = u_m + dir * step;
                while g(far) > 0.0 {
                    step *= 2.0;
                    far = u_m + dir * step;
                    if step > SEARCH_REACH {
                        return Err(Error::Numerical("RH root bracket expansion failed".into()));
                    }
                }
                let (a, b) = if dir < 0.0 { (far, u_m) } else { (u_m, far) };
                roots.push(brent(g, a, b, 1e-15 * (1.0 + u_m.abs()))?);
            }
        }
    } else {
        // Non-convex flux: plain scan over the working domain.
        roots = scan_roots(g, fl.u_min, fl.u_max, 4000, 1e-14);
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(roots
        .into_iter()
        .map(|um| RhRoot {
            u_minus: um,
            classification: classify(params, um, u_plus, s),
            admissible: end_states_admissible(params, um, u_plus),
            residual: g(um),
        })
        .collect())
}

/// Solves f_u(u, 0) = s (monotone for convex f).
fn tangency_point(slope: &dyn Fn(f64) -> f64, start: f64) -> Result<f64> {
    let s0 = slope(start);
    if s0 == 0.0 {
        return Ok(start);
    }
    let dir = if s0 < 0.0 { 1.0 } else { -1.0 };
    let mut step = 1.0f64.max(start.abs());
    let mut far = start + dir * step;
    while slope(far).signum() == s0.signum() {
        step *= 2.0;
        far = start + dir * step;
        if step > SEARCH_REACH {
            return Err(Error::Numerical("tangency point not bracketed".into()));
        }
    }
    let (a, b) = if dir > 0.0 { (start, far) } else { (far, start) };
    brent(slope, a, b, 1e-15 * (1.0 + start.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CjSpeeds {
    /// s_*: detonation branch (u₋ > u₊).
    pub detonation: Option<f64>,
    /// s^*: deflagration branch (u₋ < u₊).
    pub deflagration: Option<f64>,
}

/// CJ speeds from the tangency condition: a double RH root u_m with
/// s = f_u(u_m, 0), i.e. f(u₊,1) − f(u_m,0) − f_u(u_m,0)(q + u₊ − u_m) = 0.
pub fn cj_speeds(params: &ModelParams, u_plus: f64) -> CjSpeeds {
    let fl = &params.flux;
    let tangency = |u: f64| {
        let e = fl.eval(u, 0.0);
        fl.f(u_plus, 1.0) - e.f - e.f_u * (params.q + u_plus - u)
    };
    let reach = (fl.u_max - fl.u_min).abs().max(10.0) * 4.0;
    let scale = 1.0 + fl.f(u_plus, 1.0).abs();
    let branch = |lo: f64, hi: f64, detonation: bool| -> Option<f64> {
        let mut roots = scan_roots(tangency, lo, hi, 4000, 1e-15);
        // Tangency at u₊ itself is the trivial zero of the q = 0 limit.
        roots.retain(|&u| (u - u_plus).abs() > 1e-12 * (1.0 + u_plus.abs()));
        let speeds: Vec<f64> = roots.iter().map(|&u| fl.eval(u, 0.0).f_u).filter(|&s| s > 0.0).collect();
        let pick = if detonation { speeds.first() } else { speeds.last() };
        if let Some(&s) = pick {
            return Some(s);
        }
        // Nonreactive limit: the detonation branch collapses onto u₊.
        if detonation && params.q == 0.0 && tangency(u_plus).abs() <= 1e-12 * scale {
            let s = fl.eval(u_plus, 0.0).f_u;
            if s >= 0.0 {
                return Some(s);
            }
        }
        None
    };
    CjSpeeds {
        detonation: branch(u_plus, u_plus + reach, true),
        deflagration: branch(u_plus - reach, u_plus, false),
    }
}

/// End states, speed and classification of one combustion wave
/// (burned (u₋, 0) on the left, unburned (u₊, 1) on the right).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveProblem {
    pub u_minus: f64,
    pub u_plus: f64,
    pub z_minus: f64,
    pub z_plus: f64,
    pub s: f64,
    pub classification: Classification,
    pub admissible: bool,
    pub rh_residual: f64,
}

impl WaveProblem {
    /// Validates RH and admissibility of the given triple.
    pub fn new(params: &ModelParams, u_minus: f64, u_plus: f64, s: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(Error::InvalidInput(format!("wave speed must be positive, got {s}")));
        }
        let res = rh_residual(params, u_minus, u_plus, s);
        if res.abs() > 1e-10 * rh_scale(params, u_minus, u_plus, s) {
            return Err(Error::InvalidInput(format!(
                "end states violate the RH condition (residual {res:e})"
            )));
        }
        Ok(WaveProblem {
            u_minus,
            u_plus,
            z_minus: 0.0,
            z_plus: 1.0,
            s,
            classification: classify(params, u_minus, u_plus, s),
            admissible: end_states_admissible(params, u_minus, u_plus),
            rh_residual: res,
        })
    }

    /// Speed from RH given both end states.
    pub fn from_states(params: &ModelParams, u_minus: f64, u_plus: f64) -> Result<Self> {
        let denom = params.q + u_plus - u_minus;
        if denom.abs() < 1e-14 {
            return Err(Error::Singular("q + u₊ − u₋ = 0: speed undefined".into()));
        }
        let s = (params.flux.f(u_plus, 1.0) - params.flux.f(u_minus, 0.0)) / denom;
        Self::new(params, u_minus, u_plus, s)
    }

    /// The RH root of the requested class for fixed (u₊, s).
    pub fn from_speed(params: &ModelParams, u_plus: f64, s: f64, class: WaveClass) -> Result<Self> {
        let roots = solve_rh(params, u_plus, s)?;
        let r = roots
            .iter()
            .find(|r| r.classification.class == class)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "no {class} root for u₊ = {u_plus}, s = {s} (found {:?})",
                    roots.iter().map(|r| r.classification.class).collect::<Vec<_>>()
                ))
            })?;
        Self::new(params, r.u_minus, u_plus, s)
    }

    pub fn class(&self) -> WaveClass {
        self.classification.class
    }

    /// The DC strong detonation: u₊ = 0, s = 1.5.
    pub fn dc_strong(params: &ModelParams) -> Result<Self> {
        Self::from_speed(params, 0.0, 1.5, WaveClass::StrongDetonation)
    }
}

/// Two-phase gamma-law mixture, RH algebra only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaLawMixture {
    pub gamma1: f64,
    pub gamma2: f64,
    pub c1: f64,
    pub c2: f64,
    pub tau_plus: f64,
    pub p_plus: f64,
    pub q: f64,
}

impl GammaLawMixture {
    pub fn check(&self) -> Result<()> {
        let pos = [self.gamma1, self.gamma2, self.c1, self.c2, self.tau_plus];
        if pos.iter().all(|v| *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidInput("Γ1, Γ2, c1, c2, τ₊ must be positive".into()))
        }
    }

    /// Mixture coefficients (c(z), Γ(z)) of the reacting phase blend.
    pub fn eos_coefficients(&self, z: f64) -> (f64, f64) {
        let c = z * self.c1 + (1.0 - z) * self.c2;
        let g = (z * self.c1 * self.gamma1 + (1.0 - z) * self.c2 * self.gamma2) / c;
        (c, g)
    }

    fn denominator(&self, tau: f64) -> f64 {
        tau / self.gamma2 - 0.5 * (tau - self.tau_plus)
    }
}

/// Burned-phase pressure P₋(τ) on the shifted Hugoniot curve.
pub fn mixture_hugoniot(mix: &GammaLawMixture, tau: f64) -> Result<f64> {
    mix.check()?;
    let den = mix.denominator(tau);
    if den <= 1e-14 * (1.0 + tau.abs()) {
        return Err(Error::Singular(format!(
            "Hugoniot denominator τ/Γ2 − (τ−τ₊)/2 = {den:e} at τ = {tau}"
        )));
    }
    let num = (mix.tau_plus / mix.gamma1 - 0.5 * (tau - mix.tau_plus)) * mix.p_plus + mix.q;
    Ok(num / den)
}

/// p₊(1 − Γ2/Γ1) < qΓ2/τ₊, equivalently p₊ < P₋(τ₊).
pub fn standard_structure(mix: &GammaLawMixture) -> bool {
    mix.p_plus * (1.0 - mix.gamma2 / mix.gamma1) < mix.q * mix.gamma2 / mix.tau_plus
}

/// Intersections τ of the Rayleigh line of slope −s² through (τ₊, p₊) with
/// the burned Hugoniot curve, over the physical range where the denominator
/// is positive and P₋ ≥ 0.
pub fn rayleigh_intersections(mix: &GammaLawMixture, s: f64) -> Result<Vec<f64>> {
    mix.check()?;
    let mut hi = mix.tau_plus * (1.0 + 2.0 / mix.gamma1) + 2.0 * mix.q / mix.p_plus.max(1e-300);
    if mix.gamma2 > 2.0 {
        hi = hi.min(mix.tau_plus / (1.0 - 2.0 / mix.gamma2));
    }
    let lo = 1e-9 * mix.tau_plus;
    let hi = hi * (1.0 - 1e-9);
    let h = |tau: f64| match mixture_hugoniot(mix, tau) {
        Ok(p) => p + s * s * (tau - mix.tau_plus) - mix.p_plus,
        Err(_) => f64::NAN,
    };
    let mut r = scan_roots(h, lo, hi, 20_000, 1e-14);
    // τ₊ itself is a trivial crossing only when the curve passes through (τ₊, p₊).
    r.dedup_by(|a, b| (*a - *b).abs() < 1e-10);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FluxSpec, IgnitionFn};
    use proptest::prelude::*;

    fn dc() -> ModelParams {
        ModelParams::dc()
    }

    #[test]
    fn dc_roots_at_s_1_5() {
        let r = solve_rh(&dc(), 0.0, 1.5).unwrap();
        assert_eq!(r.len(), 2);
        let d = 0.75f64.sqrt();
        assert!((r[1].u_minus - (1.5 + d)).abs() < 1e-14);
        assert!((r[0].u_minus - (1.5 - d)).abs() < 1e-14);
        assert_eq!(r[1].classification.class, WaveClass::StrongDetonation);
        assert_eq!(r[0].classification.class, WaveClass::WeakDetonation);
        assert!(r.iter().all(|x| x.admissible));
    }

    #[test]
    fn dc_double_root_is_cj() {
        let r = solve_rh(&dc(), 0.0, 1.0).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0].u_minus - 1.0).abs() < 1e-12);
        assert_eq!(r[0].classification.class, WaveClass::ChapmanJouguetDetonation);
    }

    #[test]
    fn nonreactive_roots() {
        let r = solve_rh(&dc().with_q(0.0), 0.0, 1.5).unwrap();
        let us: Vec<f64> = r.iter().map(|x| x.u_minus).collect();
        assert_eq!(us.len(), 2);
        assert!(us[0].abs() < 1e-14 && (us[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn no_roots_below_cj() {
        assert!(solve_rh(&dc(), 0.0, 0.8).unwrap().is_empty());
    }

    #[test]
    fn rejects_nonpositive_speed() {
        assert!(solve_rh(&dc(), 0.0, 0.0).is_err());
    }

    #[test]
    fn cj_speed_examples() {
        let c = cj_speeds(&dc(), 0.0);
        assert!((c.detonation.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(c.deflagration, None);
        let c0 = cj_speeds(&dc().with_q(0.0), 0.0);
        assert_eq!(c0.detonation, Some(0.0));
    }

    #[test]
    fn cj_is_the_root_count_boundary() {
        let p = dc();
        let s_star = cj_speeds(&p, 0.0).detonation.unwrap();
        let count = |s: f64| {
            solve_rh(&p, 0.0, s)
                .unwrap()
                .iter()
                .filter(|r| r.u_minus > 0.0 && r.admissible)
                .count()
        };
        for k in 1..20 {
            let s = 0.5 + 0.075 * k as f64;
            let expected = if (s - s_star).abs() < 1e-12 {
                1
            } else if s > s_star {
                2
            } else {
                0
            };
            assert_eq!(count(s), expected, "s = {s}");
        }
        assert_eq!(count(s_star), 1);
    }

    #[test]
    fn classify_examples() {
        let p = dc();
        assert_eq!(classify(&p, 2.3660, 0.0, 1.5).class, WaveClass::StrongDetonation);
        assert_eq!(classify(&p, 0.6340, 0.0, 1.5).class, WaveClass::WeakDetonation);
        assert_eq!(classify(&p, 2.0, 3.0, 1.5).class, WaveClass::WeakDeflagration);
        assert_eq!(classify(&p, 0.586, 4.0, 2.0).class, WaveClass::StrongDeflagration);
    }

    #[test]
    fn wave_problem_checks_rh() {
        let p = dc();
        assert!(WaveProblem::new(&p, 2.0, 0.0, 1.5).is_err());
        let w = WaveProblem::dc_strong(&p).unwrap();
        assert!(w.admissible && w.rh_residual.abs() < 1e-14);
        let w2 = WaveProblem::from_states(&p, w.u_minus, 0.0).unwrap();
        assert!((w2.s - 1.5).abs() < 1e-13);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn closed_form_roots(s in 0.1f64..4.0, q in 0.0f64..1.0, up in -1.0f64..1.0) {
            let p = dc().with_q(q);
            let disc = (s - up) * (s - up) - 2.0 * s * q;
            let r = solve_rh(&p, up, s).unwrap();
            if disc < -1e-6 {
                prop_assert!(r.is_empty());
            } else if disc > 1e-3 {
                prop_assert_eq!(r.len(), 2);
                let sq = disc.sqrt();
                prop_assert!((r[0].u_minus - (s - sq)).abs() < 1e-12);
                prop_assert!((r[1].u_minus - (s + sq)).abs() < 1e-12);
            }
        }

        #[test]
        fn classification_invariant_under_offset(s in 1.1f64..3.0, c in -5.0f64..5.0) {
            let p = dc();
            let mut shifted = dc();
            shifted.flux.offset = c;
            let a = solve_rh(&p, 0.0, s).unwrap();
            let b = solve_rh(&shifted, 0.0, s).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x.u_minus - y.u_minus).abs() < 1e-12);
                prop_assert_eq!(x.classification.class, y.classification.class);
            }
        }

        #[test]
        fn classification_equivariant_under_translation(s in 1.1f64..3.0, c in -2.0f64..2.0) {
            let p = dc();
            let t = ModelParams {
                flux: FluxSpec { shift: c, ..FluxSpec::burgers() },
                ignition: IgnitionFn::new(0.5 + c, 3.5 + c),
                ..dc()
            };
            let a = solve_rh(&p, 0.0, s).unwrap();
            let b = solve_rh(&t, c, s).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x.u_minus + c - y.u_minus).abs() < 1e-11);
                prop_assert_eq!(x.classification.class, y.classification.class);
                prop_assert_eq!(x.admissible, y.admissible);
            }
        }
    }

    fn mix(g1: f64, g2: f64, q: f64) -> GammaLawMixture {
        GammaLawMixture { gamma1: g1, gamma2: g2, c1: 1.0, c2: 1.0, tau_plus: 1.0, p_plus: 1.0, q }
    }

    #[test]
    fn mixture_pressure_examples() {
        assert!((mixture_hugoniot(&mix(0.4, 0.4, 0.5), 1.0).unwrap() - 1.2).abs() < 1e-14);
        assert!((mixture_hugoniot(&mix(0.4, 0.4, 0.0), 1.0).unwrap() - 1.0).abs() < 1e-14);
        // Γ2 > 2 makes the denominator vanish at τ = τ₊/(1 − 2/Γ2) = 3.
        assert!(matches!(mixture_hugoniot(&mix(0.4, 3.0, 0.5), 3.0), Err(Error::Singular(_))));
    }

    #[test]
    fn standard_structure_examples() {
        assert!(standard_structure(&mix(0.4, 0.6, 0.1)));
        assert!(standard_structure(&mix(0.4, 0.4, 0.1)));
        assert!(!standard_structure(&mix(0.8, 0.4, 0.1)));
        assert!(standard_structure(&mix(0.8, 0.4, 10.0)));
    }

    #[test]
    fn standard_structure_matches_pressure_comparison() {
        for (g1, g2, q) in [(0.8, 0.4, 0.1), (0.4, 0.8, 0.3), (1.2, 0.3, 2.0), (0.5, 0.5, 0.0)] {
            let m = mix(g1, g2, q);
            let p_at = mixture_hugoniot(&m, m.tau_plus).unwrap();
            if (p_at - m.p_plus).abs() > 1e-12 {
                assert_eq!(standard_structure(&m), m.p_plus < p_at);
            }
        }
    }

    #[test]
    fn rayleigh_counts_cover_zero_one_two() {
        let m = mix(0.4, 0.4, 0.5);
        let mut seen = [false; 3];
        for k in 1..400 {
            let s = 0.02 * k as f64;
            let n = rayleigh_intersections(&m, s)
                .unwrap()
                .iter()
                .filter(|&&t| t < m.tau_plus)
                .count();
            assert!(n <= 2, "s = {s}: {n} intersections");
            seen[n] = true;
        }
        assert!(seen.iter().all(|b| *b), "{seen:?}");
    }

    #[test]
    fn mixture_eos_interpolates() {
        let m = GammaLawMixture { gamma1: 0.4, gamma2: 0.6, c1: 2.0, c2: 1.0, tau_plus: 1.0, p_plus: 1.0, q: 0.1 };
        assert_eq!(m.eos_coefficients(1.0), (2.0, 0.4));
        assert_eq!(m.eos_coefficients(0.0), (1.0, 0.6));
    }
}
