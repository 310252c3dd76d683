//! Majda's scalar combustion model: flux, ignition function and constants.
//!
//! u_t + f(u,z)_x = b u_xx + q k φ(u) z,   z_t = d z_xx − k φ(u) z,  b = 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::halton;

fn one() -> f64 {
    1.0
}

fn default_u_min() -> f64 {
    0.0
}

fn default_u_max() -> f64 {
    10.0
}

/// Closed-form fluxes selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxName {
    /// f = u²/2
    Burgers,
    /// f = u²/2 + coupling·z·u
    BurgersCoupled,
    /// f = u (violates convexity; kept for validation tests)
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxSpec {
    pub name: FluxName,
    #[serde(default)]
    pub coupling: f64,
    /// Additive constant in f (leaves every derivative unchanged).
    #[serde(default)]
    pub offset: f64,
    /// Evaluates f at u − shift, translating the whole model in u.
    #[serde(default)]
    pub shift: f64,
    #[serde(default = "default_u_min")]
    pub u_min: f64,
    #[serde(default = "default_u_max")]
    pub u_max: f64,
}

/// Flux value and partial derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxEval {
    pub f: f64,
    pub f_u: f64,
    pub f_z: f64,
    pub f_uu: f64,
    pub f_uz: f64,
    pub f_zz: f64,
}

impl FluxSpec {
    pub fn burgers() -> Self {
        FluxSpec {
            name: FluxName::Burgers,
            coupling: 0.0,
            offset: 0.0,
            shift: 0.0,
            u_min: default_u_min(),
            u_max: default_u_max(),
        }
    }

    pub fn burgers_coupled(coupling: f64) -> Self {
        FluxSpec {
            name: FluxName::BurgersCoupled,
            coupling,
            ..Self::burgers()
        }
    }

    pub fn linear() -> Self {
        FluxSpec {
            name: FluxName::Linear,
            ..Self::burgers()
        }
    }

    /// Unchecked evaluation, used in inner loops.
    #[inline]
    pub fn eval(&self, u: f64, z: f64) -> FluxEval {
        let v = u - self.shift;
        match self.name {
            FluxName::Burgers => FluxEval {
                f: 0.5 * v * v + self.offset,
                f_u: v,
                f_z: 0.0,
                f_uu: 1.0,
                f_uz: 0.0,
                f_zz: 0.0,
            },
            FluxName::BurgersCoupled => {
                let c = self.coupling;
                FluxEval {
                    f: 0.5 * v * v + c * z * v + self.offset,
                    f_u: v + c * z,
                    f_z: c * v,
                    f_uu: 1.0,
                    f_uz: c,
                    f_zz: 0.0,
                }
            }
            FluxName::Linear => FluxEval {
                f: v + self.offset,
                f_u: 1.0,
                f_z: 0.0,
                f_uu: 0.0,
                f_uz: 0.0,
                f_zz: 0.0,
            },
        }
    }

    #[inline]
    pub fn f(&self, u: f64, z: f64) -> f64 {
        self.eval(u, z).f
    }

    pub fn in_domain(&self, u: f64) -> bool {
        u >= self.u_min - 1e-12 * (1.0 + self.u_min.abs())
            && u <= self.u_max + 1e-12 * (1.0 + self.u_max.abs())
    }
}

/// Bump ignition function, identically zero outside (u_i, u_sup).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IgnitionFn {
    pub u_i: f64,
    pub u_sup: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

impl IgnitionFn {
    pub fn new(u_i: f64, u_sup: f64) -> Self {
        IgnitionFn {
            u_i,
            u_sup,
            amplitude: 1.0,
        }
    }

    /// φ(u) = A·16((u−u_i)(u_sup−u))²/(u_sup−u_i)⁴ inside, 0 outside.
    #[inline]
    pub fn phi(&self, u: f64) -> f64 {
        if u <= self.u_i || u >= self.u_sup {
            return 0.0;
        }
        let w = self.u_sup - self.u_i;
        let p = (u - self.u_i) * (self.u_sup - u);
        self.amplitude * 16.0 * p * p / (w * w * w * w)
    }

    #[inline]
    pub fn dphi(&self, u: f64) -> f64 {
        if u <= self.u_i || u >= self.u_sup {
            return 0.0;
        }
        let w = self.u_sup - self.u_i;
        let p = (u - self.u_i) * (self.u_sup - u);
        self.amplitude * 32.0 * p * (self.u_i + self.u_sup - 2.0 * u) / (w * w * w * w)
    }

    #[inline]
    pub fn eval(&self, u: f64) -> (f64, f64) {
        (self.phi(u), self.dphi(u))
    }

    pub fn contains(&self, u: f64) -> bool {
        u >= self.u_i && u <= self.u_sup
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub flux: FluxSpec,
    pub q: f64,
    pub k: f64,
    pub d: f64,
    #[serde(default = "one")]
    pub b: f64,
    pub ignition: IgnitionFn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub u: f64,
    pub z: f64,
}

impl ModelParams {
    /// Reference configuration: f = u²/2, q = 0.5, k = 1, d = 0.2,
    /// ignition on (0.5, 3.5). Pair with u₊ = 0.
    pub fn dc() -> Self {
        ModelParams {
            flux: FluxSpec::burgers(),
            q: 0.5,
            k: 1.0,
            d: 0.2,
            b: 1.0,
            ignition: IgnitionFn::new(0.5, 3.5),
        }
    }

    pub fn with_q(&self, q: f64) -> Self {
        ModelParams { q, ..self.clone() }
    }

    /// Reactive source S(u,z) = kφ(u)z·(q, −1).
    #[inline]
    pub fn source(&self, u: f64, z: f64) -> (f64, f64) {
        let r = self.k * self.ignition.phi(u) * z;
        (self.q * r, -r)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("model config: {e}")))
    }
}

/// Checked flux evaluation.
pub fn eval_flux(params: &ModelParams, u: f64, z: f64) -> Result<FluxEval> {
    if !u.is_finite() || !z.is_finite() {
        return Err(Error::Domain(format!("non-finite state ({u}, {z})")));
    }
    if !params.flux.in_domain(u) {
        return Err(Error::Domain(format!(
            "u = {u} outside working domain [{}, {}]",
            params.flux.u_min, params.flux.u_max
        )));
    }
    Ok(params.flux.eval(u, z))
}

pub fn eval_ignition(params: &ModelParams, u: f64) -> (f64, f64) {
    params.ignition.eval(u)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub hypothesis: String,
    pub detail: String,
    /// Up to a few offending (u, z) sample points.
    pub samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub samples_checked: usize,
}

impl ValidationReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, hypothesis: &str, detail: String, samples: Vec<(f64, f64)>) {
        self.violations.push(Violation {
            hypothesis: hypothesis.to_string(),
            detail,
            samples,
        });
    }
}

const VALIDATION_SAMPLES: usize = 1000;

/// Sampled check of every model hypothesis; never fails, only reports.
pub fn validate(params: &ModelParams) -> ValidationReport {
    let mut rep = ValidationReport::default();
    if !(params.k > 0.0) {
        rep.push("k>0", format!("k = {}", params.k), vec![]);
    }
    if !(params.d > 0.0) {
        rep.push("d>0", format!("d = {}", params.d), vec![]);
    }
    if params.b != 1.0 {
        rep.push("b=1", format!("b = {} (fixed to 1 by scaling)", params.b), vec![]);
    }
    let ig = &params.ignition;
    if !(ig.u_i < ig.u_sup) {
        rep.push(
            "u_i < u^i",
            format!("u_i = {} is not below u_sup = {}", ig.u_i, ig.u_sup),
            vec![],
        );
    }
    if !(ig.amplitude > 0.0) {
        rep.push("phi>0 inside", format!("amplitude = {}", ig.amplitude), vec![]);
    }
    let fl = &params.flux;
    if !(fl.u_min < fl.u_max) {
        rep.push(
            "working domain",
            format!("u_min = {} >= u_max = {}", fl.u_min, fl.u_max),
            vec![],
        );
        return rep;
    }

    let mut bad_fu = Vec::new();
    let mut bad_fuu = Vec::new();
    let mut bad_deriv = Vec::new();
    for i in 1..=VALIDATION_SAMPLES {
        let u = fl.u_min + (fl.u_max - fl.u_min) * halton(i, 2);
        let z = halton(i, 3);
        let e = fl.eval(u, z);
        if !(e.f_u > 0.0) {
            bad_fu.push((u, z));
        }
        if !(e.f_uu > 0.0) {
            bad_fuu.push((u, z));
        }
        if !derivatives_consistent(fl, u, z) {
            bad_deriv.push((u, z));
        }
    }
    rep.samples_checked = VALIDATION_SAMPLES;
    let summarize = |v: &Vec<(f64, f64)>| v.iter().take(5).copied().collect::<Vec<_>>();
    if !bad_fu.is_empty() {
        rep.push(
            "f_u>0",
            format!("f_u>0 fails at {} of {VALIDATION_SAMPLES} samples", bad_fu.len()),
            summarize(&bad_fu),
        );
    }
    if !bad_fuu.is_empty() {
        rep.push(
            "f_uu>0",
            format!("f_uu>0 fails at {} of {VALIDATION_SAMPLES} samples", bad_fuu.len()),
            summarize(&bad_fuu),
        );
    }
    if !bad_deriv.is_empty() {
        rep.push(
            "flux derivatives",
            "analytic derivatives disagree with central differences".into(),
            summarize(&bad_deriv),
        );
    }

    // Ignition: vanishing outside, positivity inside, C¹ matching.
    if ig.u_i < ig.u_sup {
        let mut bad_phi = Vec::new();
        for i in 1..=200 {
            let u = ig.u_i + (ig.u_sup - ig.u_i) * halton(i, 5);
            if !(ig.phi(u) > 0.0) {
                bad_phi.push((u, 0.0));
            }
        }
        if !bad_phi.is_empty() {
            rep.push("phi>0 inside", "φ not positive inside (u_i, u^i)".into(), summarize(&bad_phi));
        }
        for u in [ig.u_i, ig.u_sup, ig.u_i - 1.0, ig.u_sup + 1.0] {
            if ig.phi(u) != 0.0 || ig.dphi(u) != 0.0 {
                rep.push("phi=0 outside", format!("φ or φ' nonzero at u = {u}"), vec![(u, 0.0)]);
            }
        }
    }
    rep
}

fn derivatives_consistent(fl: &FluxSpec, u: f64, z: f64) -> bool {
    let h = 1e-5 * (1.0 + u.abs());
    let e = fl.eval(u, z);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * (1.0 + a.abs().max(b.abs()));
    let fu = (fl.f(u + h, z) - fl.f(u - h, z)) / (2.0 * h);
    let fz = (fl.f(u, z + h) - fl.f(u, z - h)) / (2.0 * h);
    let fuu = (fl.eval(u + h, z).f_u - fl.eval(u - h, z).f_u) / (2.0 * h);
    close(fu, e.f_u) && close(fz, e.f_z) && close(fuu, e.f_uu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flux_examples() {
        let p = ModelParams::dc();
        let e = eval_flux(&p, 2.0, 0.0).unwrap();
        assert_eq!((e.f, e.f_u, e.f_z, e.f_uu), (2.0, 2.0, 0.0, 1.0));
        let e = eval_flux(&p, 0.5, 1.0).unwrap();
        assert_eq!((e.f, e.f_u, e.f_z, e.f_uu), (0.125, 0.5, 0.0, 1.0));
        let c = FluxSpec::burgers_coupled(0.1).eval(1.0, 1.0);
        assert!((c.f - 0.6).abs() < 1e-15 && (c.f_u - 1.1).abs() < 1e-15);
        assert!((c.f_z - 0.1).abs() < 1e-15 && c.f_uu == 1.0);
    }

    #[test]
    fn flux_domain_violation() {
        let p = ModelParams::dc();
        assert!(matches!(eval_flux(&p, 11.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(eval_flux(&p, f64::NAN, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn ignition_examples() {
        let p = ModelParams::dc();
        assert_eq!(eval_ignition(&p, 0.5), (0.0, 0.0));
        assert_eq!(eval_ignition(&p, 4.0), (0.0, 0.0));
        let (phi, dphi) = eval_ignition(&p, 2.0);
        // 16·(1.5·1.5)²/3⁴ = 16·5.0625/81 = 1.
        assert!((phi - 1.0).abs() < 1e-15 && dphi.abs() < 1e-15);
    }

    #[test]
    fn default_config_is_admissible() {
        let r = validate(&ModelParams::dc());
        assert!(r.is_admissible(), "{:?}", r.violations);
        assert_eq!(r.samples_checked, 1000);
    }

    #[test]
    fn linear_flux_fails_convexity() {
        let p = ModelParams {
            flux: FluxSpec::linear(),
            ..ModelParams::dc()
        };
        let r = validate(&p);
        assert!(r.violations.iter().any(|v| v.detail.contains("f_uu>0 fails")));
    }

    #[test]
    fn reversed_ignition_is_reported() {
        let p = ModelParams {
            ignition: IgnitionFn::new(3.5, 0.5),
            ..ModelParams::dc()
        };
        let r = validate(&p);
        assert!(r.violations.iter().any(|v| v.hypothesis == "u_i < u^i"));
    }

    #[test]
    fn config_round_trip_and_unknown_keys() {
        let s = r#"{"flux": {"name": "burgers_coupled", "coupling": 0.1}, "q": 0.5, "k": 1, "d": 0.2,
                    "ignition": {"u_i": 0.5, "u_sup": 3.5, "amplitude": 1}}"#;
        let p = ModelParams::from_json(s).unwrap();
        assert_eq!(p.flux.name, FluxName::BurgersCoupled);
        let back = ModelParams::from_json(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(p, back);
        let bad = r#"{"flux": {"name": "burgers"}, "q": 0.5, "k": 1, "d": 0.2, "kk": 3,
                      "ignition": {"u_i": 0.5, "u_sup": 3.5}}"#;
        assert!(ModelParams::from_json(bad).is_err());
    }

    proptest! {
        #[test]
        fn dphi_matches_finite_differences(u in 0.51f64..3.49) {
            let ig = IgnitionFn::new(0.5, 3.5);
            let h = 1e-6;
            let fd = (ig.phi(u + h) - ig.phi(u - h)) / (2.0 * h);
            prop_assert!((fd - ig.dphi(u)).abs() <= 1e-6 * (1.0 + fd.abs()));
        }

        #[test]
        fn phi_vanishes_outside(u in -5.0f64..10.0) {
            let ig = IgnitionFn::new(0.5, 3.5);
            if u <= 0.5 || u >= 3.5 {
                prop_assert_eq!(ig.phi(u), 0.0);
                prop_assert_eq!(ig.dphi(u), 0.0);
            } else {
                prop_assert!(ig.phi(u) > 0.0);
            }
        }

        #[test]
        fn coupled_flux_derivatives(u in 0.0f64..10.0, z in 0.0f64..1.0, c in -1.0f64..1.0) {
            prop_assert!(derivatives_consistent(&FluxSpec::burgers_coupled(c), u, z));
        }
    }
}
