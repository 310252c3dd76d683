//! Run configuration: model, problem, numerics and run blocks.

use std::path::Path;

use combust::evans::EvansOptions;
use combust::evolution::{FitOptions, Perturbation, RunOptions};
use combust::hugoniot::WaveClass;
use combust::model::validate;
use combust::profile::ProfileOptions;
use combust::resolvent::{GreenOptions, ResolventOptions};
use combust::{ModelParams, WaveProblem};
use serde::{Deserialize, Serialize};

use crate::CliError;

fn strong() -> WaveClass {
    WaveClass::StrongDetonation
}

/// End states of the wave: u₊ and either s or u₋.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub u_plus: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_minus: Option<f64>,
    /// RH root selected when only s is given.
    #[serde(default = "strong")]
    pub class: WaveClass,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub profile: ProfileOptions,
    pub evans: EvansOptions,
    pub resolvent: ResolventOptions,
    pub green: GreenOptions,
}

fn default_e0() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunBlock {
    pub evolve: RunOptions,
    pub fit: FitOptions,
    pub perturbation: Perturbation,
    #[serde(default = "default_e0")]
    pub e0: f64,
}

impl Default for RunBlock {
    fn default() -> Self {
        RunBlock {
            evolve: RunOptions::default(),
            fit: FitOptions::default(),
            perturbation: Perturbation::default(),
            e0: default_e0(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<Problem>,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub run: RunBlock,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Usage(format!("config: at `{path}`: {}", e.into_inner()))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Rejects models that violate the standing hypotheses.
    pub fn check_model(&self) -> Result<(), CliError> {
        let rep = validate(&self.model);
        if rep.violations.is_empty() {
            return Ok(());
        }
        let list: Vec<String> = rep.violations.iter().map(|v| format!("{} ({})", v.hypothesis, v.detail)).collect();
        Err(CliError::Usage(format!("model violates: {}", list.join("; "))))
    }

    pub fn problem(&self) -> Result<&Problem, CliError> {
        self.problem.as_ref().ok_or_else(|| CliError::Usage("config: `problem` block required".into()))
    }

    /// The wave described by the problem block; fills in both s and u₋.
    pub fn resolve_wave(&mut self) -> Result<WaveProblem, CliError> {
        let model = self.model.clone();
        let pb = self.problem()?;
        let w = match (pb.s, pb.u_minus) {
            (Some(s), None) => WaveProblem::from_speed(&model, pb.u_plus, s, pb.class)?,
            (None, Some(um)) => WaveProblem::from_states(&model, um, pb.u_plus)?,
            (Some(s), Some(um)) => WaveProblem::new(&model, um, pb.u_plus, s)?,
            (None, None) => return Err(CliError::Usage("config: `problem` needs `s` or `u_minus`".into())),
        };
        let pb = self.problem.as_mut().expect("checked above");
        pb.s = Some(w.s);
        pb.u_minus = Some(w.u_minus);
        pb.class = w.class();
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DC: &str = r#"{
        "model": {"flux": {"name": "burgers"}, "q": 0.5, "k": 1, "d": 0.2,
                  "ignition": {"u_i": 0.5, "u_sup": 3.5}},
        "problem": {"u_plus": 0, "s": 1.5}
    }"#;

    #[test]
    fn dc_parses_and_resolves() {
        let mut c = Config::parse(DC).unwrap();
        let w = c.resolve_wave().unwrap();
        assert!((w.u_minus - 2.366_025_403_784_438_6).abs() < 1e-14);
        assert_eq!(c.problem.as_ref().unwrap().u_minus, Some(w.u_minus));
    }

    #[test]
    fn echo_round_trips() {
        let mut c = Config::parse(DC).unwrap();
        c.resolve_wave().unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(Config::parse(&text).unwrap(), c);
    }

    #[test]
    fn unknown_key_reports_path() {
        let bad = DC.replace("\"k\": 1", "\"k\": 1, \"kk\": 2");
        let CliError::Usage(msg) = Config::parse(&bad).unwrap_err() else { panic!() };
        assert!(msg.contains("model") && msg.contains("kk"), "{msg}");
    }

    #[test]
    fn missing_key_reports_path() {
        let bad = DC.replace("\"u_sup\": 3.5", "");
        let bad = bad.replace("\"u_i\": 0.5,", "\"u_i\": 0.5");
        let CliError::Usage(msg) = Config::parse(&bad).unwrap_err() else { panic!() };
        assert!(msg.contains("model.ignition") && msg.contains("u_sup"), "{msg}");
    }
}
