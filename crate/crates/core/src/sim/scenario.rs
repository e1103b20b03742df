//! Line-based `key = value` scenario files.

use std::path::PathBuf;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::funnel::{FunnelDesign, FunnelFunction};
use crate::robot::RobotParams;
use crate::servo::BvpOptions;

use super::dopri::StepControl;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Feedforward plus funnel feedback.
    C1,
    /// Funnel feedback only.
    C2,
    /// Feedforward only.
    C3,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::C1, Mode::C2, Mode::C3];

    pub fn uses_feedforward(self) -> bool {
        matches!(self, Mode::C1 | Mode::C3)
    }

    pub fn uses_feedback(self) -> bool {
        matches!(self, Mode::C1 | Mode::C2)
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::C1 => "C1",
            Mode::C2 => "C2",
            Mode::C3 => "C3",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "C1" => Ok(Mode::C1),
            "C2" => Ok(Mode::C2),
            "C3" => Ok(Mode::C3),
            other => Err(Error::Config(format!("unknown controller mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Only `robot` is simulated.
    pub model: String,
    /// Plant parameter preset; the controller and the inversion always use
    /// the reference preset.
    pub params: String,
    pub t_end: f64,
    pub step: StepControl,
    pub baumgarte: (f64, f64),
    pub bvp: BvpOptions,
    pub funnel: FunnelDesign,
    pub k1: f64,
    pub k2: [f64; 2],
    pub out_dir: Option<PathBuf>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            model: "robot".into(),
            params: "simulated".into(),
            t_end: 2.0,
            step: StepControl::default(),
            baumgarte: (20.0, 20.0),
            bvp: BvpOptions::around(0.0, 1.0),
            funnel: FunnelDesign::default(),
            k1: -0.1,
            k2: [1.0, 0.01],
            out_dir: None,
        }
    }
}

fn number(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::Config(format!("{key}: expected a number, got '{v}'")))
}

fn positive(key: &str, v: &str) -> Result<f64> {
    let x = number(key, v)?;
    if x <= 0.0 {
        return Err(Error::Config(format!("{key} must be positive")));
    }
    Ok(x)
}

impl Scenario {
    /// Parses scenario text. Blank lines and `#` comments are skipped;
    /// omitted keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Scenario::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "model" => s.model = value.to_string(),
                "params" => s.params = value.to_string(),
                "t_end" => s.t_end = positive(key, value)?,
                "rel_tol" => s.step.rel_tol = positive(key, value)?,
                "abs_tol" => s.step.abs_tol = positive(key, value)?,
                "max_step" => s.step.max_step = positive(key, value)?,
                "baumgarte_alpha" => s.baumgarte.0 = number(key, value)?,
                "baumgarte_beta" => s.baumgarte.1 = number(key, value)?,
                "bvp_T0" => s.bvp.t_start = number(key, value)?,
                "bvp_Tf" => s.bvp.t_end = number(key, value)?,
                "bvp_N" => {
                    s.bvp.intervals =
                        value.parse().map_err(|_| Error::Config(format!("bvp_N: expected a count, got '{value}'")))?
                }
                "K1" => s.k1 = number(key, value)?,
                "K2" => {
                    let parts: Vec<&str> = value.split(',').collect();
                    if parts.len() != 2 {
                        return Err(Error::Config("K2 needs two comma-separated entries".into()));
                    }
                    s.k2 = [number(key, parts[0])?, number(key, parts[1])?];
                }
                "out_dir" => s.out_dir = Some(PathBuf::from(value)),
                _ => {
                    let Some(rest) = key.strip_prefix("funnel.") else {
                        return Err(Error::Config(format!("unknown key '{key}'")));
                    };
                    let (j, field) = rest
                        .split_once('.')
                        .ok_or_else(|| Error::Config(format!("unknown key '{key}'")))?;
                    let j: usize = match j {
                        "0" => 0,
                        "1" => 1,
                        "2" => 2,
                        _ => return Err(Error::Config(format!("unknown key '{key}'"))),
                    };
                    let x = positive(key, value)?;
                    match field {
                        "p" => s.funnel.stages[j].p = x,
                        "q" => s.funnel.stages[j].qrate = x,
                        "r" => s.funnel.stages[j].r = x,
                        "kappa" => s.funnel.kappa[j] = x,
                        _ => return Err(Error::Config(format!("unknown key '{key}'"))),
                    }
                }
            }
        }
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        if self.model != "robot" {
            return Err(Error::Config(format!("only model 'robot' can be simulated, got '{}'", self.model)));
        }
        if RobotParams::preset(&self.params).is_none() {
            return Err(Error::Config(format!("unknown params preset '{}'", self.params)));
        }
        if self.bvp.t_end <= self.bvp.t_start {
            return Err(Error::Config("bvp_Tf must exceed bvp_T0".into()));
        }
        Ok(())
    }

    pub fn plant_params(&self) -> RobotParams {
        RobotParams::preset(&self.params).expect("checked at parse time")
    }

    pub fn gains(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        (DMatrix::from_element(1, 1, self.k1), DMatrix::from_row_slice(1, 2, &self.k2))
    }

    pub fn stage(&self, j: usize) -> FunnelFunction {
        self.funnel.stages[j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let s = Scenario::parse("# comment\nparams = reference\nK2 = 2, 0.5\nfunnel.2.kappa = 10\nbvp_N = 100\n").unwrap();
        assert_eq!(s.params, "reference");
        assert_eq!(s.k2, [2.0, 0.5]);
        assert_eq!(s.funnel.kappa, [1.0, 1.0, 10.0]);
        assert_eq!(s.bvp.intervals, 100);
        assert_eq!(s.t_end, 2.0);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(Scenario::parse("speed = 3"), Err(Error::Config(_))));
        assert!(matches!(Scenario::parse("funnel.3.p = 1"), Err(Error::Config(_))));
        assert!(matches!(Scenario::parse("funnel.0.x = 1"), Err(Error::Config(_))));
    }

    #[test]
    fn bad_values_rejected() {
        assert!(Scenario::parse("rel_tol = -1").is_err());
        assert!(Scenario::parse("t_end = abc").is_err());
        assert!(Scenario::parse("params = heavy").is_err());
        assert!(Scenario::parse("no equals sign").is_err());
        assert!("C4".parse::<Mode>().is_err());
        assert_eq!("c2".parse::<Mode>().unwrap(), Mode::C2);
    }
}
