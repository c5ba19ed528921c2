//! Textual curve descriptions: `circle:R`, `cosine:R,eps,n` or
//! `checkpoint:path`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::curve::{ClosedFormCurve, CurveEvaluator, CurvePoint};
use crate::error::{Error, Result};
use crate::netparam::{Activation, Checkpoint, NetworkCurve, NetworkParams};

#[derive(Debug, Clone, PartialEq)]
pub enum CurveSpec {
    Closed(ClosedFormCurve),
    Checkpoint(PathBuf),
}

impl FromStr for CurveSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("curve spec '{s}' has no ':'")))?;
        let nums = |n: usize| -> Result<Vec<f64>> {
            let v = rest
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Parse(format!("bad number in curve spec '{s}'")))?;
            if v.len() != n {
                return Err(Error::Parse(format!("curve spec '{s}' needs {n} values")));
            }
            Ok(v)
        };
        match kind.trim() {
            "circle" => Ok(CurveSpec::Closed(ClosedFormCurve::circle(nums(1)?[0])?)),
            "cosine" => {
                let v = nums(3)?;
                if !(v[2] >= 0.0 && v[2] <= u32::MAX as f64 && v[2].fract() == 0.0) {
                    return Err(Error::Parse(format!("mode in '{s}' must be a non-negative integer")));
                }
                Ok(CurveSpec::Closed(ClosedFormCurve::cosine_perturbed(v[0], v[1], v[2] as u32)?))
            }
            "checkpoint" if !rest.is_empty() => Ok(CurveSpec::Checkpoint(PathBuf::from(rest))),
            _ => Err(Error::Parse(format!(
                "unknown curve spec '{s}' (expected circle:R, cosine:R,eps,n or checkpoint:path)"
            ))),
        }
    }
}

impl fmt::Display for CurveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurveSpec::Closed(ClosedFormCurve::Circle { r0 }) => write!(f, "circle:{r0}"),
            CurveSpec::Closed(ClosedFormCurve::CosinePerturbed { r0, eps, n }) => {
                write!(f, "cosine:{r0},{eps},{n}")
            }
            CurveSpec::Checkpoint(p) => write!(f, "checkpoint:{}", p.display()),
        }
    }
}

/// A curve that owns its data.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedCurve {
    Closed(ClosedFormCurve),
    Network(NetworkParams, Activation),
}

impl CurveEvaluator for LoadedCurve {
    fn eval(&self, theta: f64) -> CurvePoint {
        match self {
            LoadedCurve::Closed(c) => c.eval(theta),
            LoadedCurve::Network(p, act) => NetworkCurve::new(p, *act).eval(theta),
        }
    }
}

impl CurveSpec {
    pub fn load(&self) -> Result<LoadedCurve> {
        match self {
            CurveSpec::Closed(c) => Ok(LoadedCurve::Closed(*c)),
            CurveSpec::Checkpoint(path) => {
                let ck = Checkpoint::from_json(&std::fs::read_to_string(path)?)?;
                Ok(LoadedCurve::Network(ck.params()?, ck.activation))
            }
        }
    }
}
