//! Single-hidden-layer boundary ansatz
//!
//! ```text
//! ρ(θ) = Σ a_i Ψ(b_i θ + c_i) + d
//! ```
//!
//! with its θ-derivatives and parameter gradients. Parameters are flattened
//! in the fixed order `(a_1..a_N, b_1..b_N, c_1..c_N, d)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::curve::{CurveEvaluator, CurvePoint};
use crate::error::{Error, Result};

pub const DEFAULT_FINGER_P: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Activation {
    Cosine,
    Sigmoid,
    /// `p / (cos²x + p² sin²x)`
    Finger { p: f64 },
}

impl Activation {
    pub fn finger(p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::Parse(format!("finger parameter must be > 0, got {p}")));
        }
        Ok(Activation::Finger { p })
    }

    /// `[Ψ, Ψ', Ψ'', Ψ''', Ψ'''']` at `x`.
    #[inline]
    pub fn derivatives(&self, x: f64) -> [f64; 5] {
        match *self {
            Activation::Cosine => {
                let (s, c) = x.sin_cos();
                [c, -s, -c, s, c]
            }
            Activation::Sigmoid => {
                let sg = if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                };
                let d1 = sg * (1.0 - sg);
                let d2 = d1 * (1.0 - 2.0 * sg);
                let poly = 1.0 - 6.0 * sg + 6.0 * sg * sg;
                let d3 = d1 * poly;
                let d4 = d2 * poly + d1 * d1 * (12.0 * sg - 6.0);
                [sg, d1, d2, d3, d4]
            }
            Activation::Finger { p } => {
                // Ψ = p / D with D = α + β cos 2x
                let alpha = 0.5 * (1.0 + p * p);
                let beta = 0.5 * (1.0 - p * p);
                let (s, c) = (2.0 * x).sin_cos();
                let d0 = alpha + beta * c;
                let d1 = -2.0 * beta * s;
                let d2 = -4.0 * beta * c;
                let d3 = 8.0 * beta * s;
                let d4 = 16.0 * beta * c;
                let inv = 1.0 / d0;
                let inv2 = inv * inv;
                let inv3 = inv2 * inv;
                let inv4 = inv3 * inv;
                let inv5 = inv4 * inv;
                let f0 = inv;
                let f1 = -d1 * inv2;
                let f2 = -d2 * inv2 + 2.0 * d1 * d1 * inv3;
                let f3 = -d3 * inv2 + 6.0 * d1 * d2 * inv3 - 6.0 * d1 * d1 * d1 * inv4;
                let f4 = -d4 * inv2 + (8.0 * d1 * d3 + 6.0 * d2 * d2) * inv3
                    - 36.0 * d1 * d1 * d2 * inv4
                    + 24.0 * d1 * d1 * d1 * d1 * inv5;
                [p * f0, p * f1, p * f2, p * f3, p * f4]
            }
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.derivatives(x)[0]
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Cosine => write!(f, "cosine"),
            Activation::Sigmoid => write!(f, "sigmoid"),
            Activation::Finger { p } => write!(f, "finger({p})"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "cosine" | "cos" => return Ok(Activation::Cosine),
            "sigmoid" => return Ok(Activation::Sigmoid),
            "finger" => return Ok(Activation::Finger { p: DEFAULT_FINGER_P }),
            _ => {}
        }
        if let Some(inner) = s.strip_prefix("finger(").and_then(|r| r.strip_suffix(')')) {
            let p: f64 = inner
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad finger parameter '{inner}'")))?;
            return Activation::finger(p);
        }
        Err(Error::Parse(format!(
            "unknown activation '{s}' (expected cosine, sigmoid or finger(p))"
        )))
    }
}

impl TryFrom<String> for Activation {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Activation> for String {
    fn from(a: Activation) -> String {
        a.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: f64,
}

impl NetworkParams {
    pub fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, d: f64) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() || a.len() != c.len() {
            return Err(Error::Config(format!(
                "parameter blocks must be nonempty and equal length (a: {}, b: {}, c: {})",
                a.len(),
                b.len(),
                c.len()
            )));
        }
        let p = NetworkParams { a, b, c, d };
        if !p.is_finite() {
            return Err(Error::Config("parameters must be finite".into()));
        }
        Ok(p)
    }

    /// Circle of radius `d` with `n` inactive units of frequency 1.
    pub fn circle(n: usize, d: f64) -> Self {
        NetworkParams { a: vec![0.0; n], b: vec![1.0; n], c: vec![0.0; n], d }
    }

    pub fn width(&self) -> usize {
        self.a.len()
    }

    /// Flattened length `3N + 1`.
    pub fn len(&self) -> usize {
        3 * self.width() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_finite(&self) -> bool {
        self.d.is_finite()
            && self.a.iter().chain(&self.b).chain(&self.c).all(|v| v.is_finite())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.a);
        v.extend_from_slice(&self.b);
        v.extend_from_slice(&self.c);
        v.push(self.d);
        v
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() < 4 || (flat.len() - 1) % 3 != 0 {
            return Err(Error::Config(format!(
                "flattened parameter length {} is not of the form 3N+1",
                flat.len()
            )));
        }
        let n = (flat.len() - 1) / 3;
        NetworkParams::new(
            flat[..n].to_vec(),
            flat[n..2 * n].to_vec(),
            flat[2 * n..3 * n].to_vec(),
            flat[3 * n],
        )
    }

    /// Single flattened entry.
    pub fn get(&self, k: usize) -> f64 {
        let n = self.width();
        match k / n {
            0 => self.a[k],
            1 => self.b[k - n],
            2 => self.c[k - 2 * n],
            _ => {
                assert_eq!(k, 3 * n, "parameter index out of range");
                self.d
            }
        }
    }

    pub fn set(&mut self, k: usize, v: f64) {
        let n = self.width();
        match k / n {
            0 => self.a[k] = v,
            1 => self.b[k - n] = v,
            2 => self.c[k - 2 * n] = v,
            _ => {
                assert_eq!(k, 3 * n, "parameter index out of range");
                self.d = v
            }
        }
    }

    /// `self + scale · dir` for a flattened direction.
    pub fn axpy(&self, scale: f64, dir: &[f64]) -> Self {
        assert_eq!(dir.len(), self.len());
        let n = self.width();
        let shift = |block: &[f64], off: usize| -> Vec<f64> {
            block.iter().zip(&dir[off..off + n]).map(|(x, g)| x + scale * g).collect()
        };
        NetworkParams {
            a: shift(&self.a, 0),
            b: shift(&self.b, n),
            c: shift(&self.c, 2 * n),
            d: self.d + scale * dir[3 * n],
        }
    }
}

/// ρ and its first three θ-derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JetAtTheta {
    pub rho: f64,
    pub rho_p: f64,
    pub rho_pp: f64,
    pub rho_ppp: f64,
}

pub fn eval_jet(params: &NetworkParams, act: Activation, theta: f64) -> JetAtTheta {
    let mut jet = JetAtTheta { rho: params.d, rho_p: 0.0, rho_pp: 0.0, rho_ppp: 0.0 };
    for i in 0..params.width() {
        let (a, b) = (params.a[i], params.b[i]);
        let psi = act.derivatives(b * theta + params.c[i]);
        let ab = a * b;
        let abb = ab * b;
        jet.rho += a * psi[0];
        jet.rho_p += ab * psi[1];
        jet.rho_pp += abb * psi[2];
        jet.rho_ppp += abb * b * psi[3];
    }
    jet
}

/// `∇ρ, ∇ρ', ∇ρ''` with respect to the flattened parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradJet {
    pub rho: Vec<f64>,
    pub rho_p: Vec<f64>,
    pub rho_pp: Vec<f64>,
}

pub fn param_gradient_jet(params: &NetworkParams, act: Activation, theta: f64) -> ParamGradJet {
    let len = params.len();
    let mut out = ParamGradJet { rho: vec![0.0; len], rho_p: vec![0.0; len], rho_pp: vec![0.0; len] };
    accumulate_param_gradient(params, act, theta, [1.0, 0.0, 0.0], &mut out.rho);
    accumulate_param_gradient(params, act, theta, [0.0, 1.0, 0.0], &mut out.rho_p);
    accumulate_param_gradient(params, act, theta, [0.0, 0.0, 1.0], &mut out.rho_pp);
    out
}

/// `out += w0 ∇ρ(θ) + w1 ∇ρ'(θ) + w2 ∇ρ''(θ)`.
#[inline]
pub fn accumulate_param_gradient(
    params: &NetworkParams,
    act: Activation,
    theta: f64,
    weights: [f64; 3],
    out: &mut [f64],
) {
    let n = params.width();
    debug_assert_eq!(out.len(), 3 * n + 1);
    let [w0, w1, w2] = weights;
    let (out_a, rest) = out.split_at_mut(n);
    let (out_b, rest) = rest.split_at_mut(n);
    let (out_c, out_d) = rest.split_at_mut(n);
    for i in 0..n {
        let (a, b) = (params.a[i], params.b[i]);
        let psi = act.derivatives(b * theta + params.c[i]);
        // ∂/∂a: Ψ, bΨ', b²Ψ''
        out_a[i] += w0 * psi[0] + w1 * b * psi[1] + w2 * b * b * psi[2];
        // ∂/∂c: aΨ', abΨ'', ab²Ψ'''
        let dc = a * (w0 * psi[1] + w1 * b * psi[2] + w2 * b * b * psi[3]);
        out_c[i] += dc;
        // ∂/∂b: aθΨ', aΨ' + abθΨ'', 2abΨ'' + ab²θΨ'''
        out_b[i] += theta * dc + a * (w1 * psi[1] + 2.0 * w2 * b * psi[2]);
    }
    out_d[0] += w0;
}

/// `(ρ(0) - ρ(2π), ρ'(0) - ρ'(2π), ρ''(0) - ρ''(2π))`.
pub fn periodic_defect(params: &NetworkParams, act: Activation) -> (f64, f64, f64) {
    let start = eval_jet(params, act, 0.0);
    let end = eval_jet(params, act, 2.0 * PI);
    (start.rho - end.rho, start.rho_p - end.rho_p, start.rho_pp - end.rho_pp)
}

/// A network viewed as a polar curve.
#[derive(Debug, Clone, Copy)]
pub struct NetworkCurve<'a> {
    pub params: &'a NetworkParams,
    pub act: Activation,
}

impl<'a> NetworkCurve<'a> {
    pub fn new(params: &'a NetworkParams, act: Activation) -> Self {
        NetworkCurve { params, act }
    }
}

impl CurveEvaluator for NetworkCurve<'_> {
    fn eval(&self, theta: f64) -> CurvePoint {
        let j = eval_jet(self.params, self.act, theta);
        CurvePoint::new(j.rho, j.rho_p, j.rho_pp)
    }
}

/// On-disk record of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    #[serde(rename = "N")]
    pub n: usize,
    pub activation: Activation,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: f64,
}

impl Checkpoint {
    pub fn new(params: &NetworkParams, act: Activation) -> Self {
        Checkpoint {
            n: params.width(),
            activation: act,
            a: params.a.clone(),
            b: params.b.clone(),
            c: params.c.clone(),
            d: params.d,
        }
    }

    /// JSON text. Numbers are written in shortest round-trip form, so parsing
    /// recovers every bit.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("checkpoint: {e}")))?;
        if ck.a.len() != ck.n || ck.b.len() != ck.n || ck.c.len() != ck.n {
            return Err(Error::Parse(format!(
                "checkpoint: N = {} but block lengths are a: {}, b: {}, c: {}",
                ck.n,
                ck.a.len(),
                ck.b.len(),
                ck.c.len()
            )));
        }
        ck.params().map_err(|e| Error::Parse(format!("checkpoint: {e}")))?;
        Ok(ck)
    }

    pub fn params(&self) -> Result<NetworkParams> {
        NetworkParams::new(self.a.clone(), self.b.clone(), self.c.clone(), self.d)
    }
}
