//! Regularized boundary-integral residual
//!
//! ```text
//! L_τ(θ̂) = ∫₀^{2π} M(θ, θ̂) dθ
//! M = β G1(D) A - [(μ + κ) Q(D) - (κ - κ̂)/(2π D²)] Γ
//! ```
//!
//! where `D` is the regularized chord, `A` the arclength element and `Γ` the
//! normal-flux geometric factor. The integral is a composite trapezoid rule
//! on `n_quad` uniform nodes, summed left to right.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{check_point, curvature_unchecked, d_tau_from_half_sine, CurveEvaluator, CurvePoint, DEFAULT_GUARD};
use crate::error::{Error, Result};
use crate::specfun::kernels_unchecked;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub mu: f64,
    pub beta: f64,
}

impl ProblemParams {
    pub fn new(mu: f64, beta: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0 && beta.is_finite() && beta > 0.0) {
            return Err(Error::Config(format!(
                "mu and beta must be finite and positive, got mu = {mu}, beta = {beta}"
            )));
        }
        Ok(ProblemParams { mu, beta })
    }

    /// `β` matched to the radial solution of radius `r_s`.
    pub fn with_radial_beta(mu: f64, r_s: f64) -> Result<Self> {
        ProblemParams::new(mu, crate::bifurcation::beta_of(mu, r_s)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub tau: f64,
    pub n_quad: usize,
    pub guard: f64,
}

pub const DEFAULT_TAU: f64 = 1e-3;
pub const DEFAULT_N_QUAD: usize = 4096;

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { tau: DEFAULT_TAU, n_quad: DEFAULT_N_QUAD, guard: DEFAULT_GUARD }
    }
}

impl KernelConfig {
    pub fn new(tau: f64, n_quad: usize, guard: f64) -> Result<Self> {
        let kc = KernelConfig { tau, n_quad, guard };
        kc.validate()?;
        Ok(kc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 0.1) {
            return Err(Error::Config(format!("tau must lie in (0, 0.1], got {}", self.tau)));
        }
        if self.n_quad < 64 || self.n_quad % 2 != 0 {
            return Err(Error::Config(format!(
                "n_quad must be even and at least 64, got {}",
                self.n_quad
            )));
        }
        if !(self.guard.is_finite() && self.guard > 0.0) {
            return Err(Error::Config(format!("guard must be positive, got {}", self.guard)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSample {
    pub theta_hat: f64,
    pub value: f64,
}

/// The three parts of the residual, `L = h - g + w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSplit {
    pub h: f64,
    pub g: f64,
    pub w: f64,
}

impl ResidualSplit {
    pub fn total(&self) -> f64 {
        self.h - self.g + self.w
    }
}

/// `θ_j = 2πj/n` for `j = 0..n`.
pub fn quadrature_nodes(n: usize) -> Vec<f64> {
    (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
}

/// Curve data at one angle, shared by every term of the integrand.
#[derive(Debug, Clone, Copy)]
pub(crate) struct NodeData {
    pub p: CurvePoint,
    pub kappa: f64,
    pub arclen: f64,
    /// `sin(θ/2)`, `cos(θ/2)`: angle differences are formed by addition rules.
    pub sin_half: f64,
    pub cos_half: f64,
}

impl NodeData {
    pub fn new<C: CurveEvaluator + ?Sized>(curve: &C, theta: f64, guard: f64) -> Result<Self> {
        NodeData::from_point(curve.eval(theta), theta, guard)
    }

    pub fn from_point(p: CurvePoint, theta: f64, guard: f64) -> Result<Self> {
        check_point(theta, &p, guard)?;
        let (sin_half, cos_half) = (0.5 * theta).sin_cos();
        Ok(NodeData {
            p,
            kappa: curvature_unchecked(p.r, p.rp, p.rpp),
            arclen: p.r.hypot(p.rp),
            sin_half,
            cos_half,
        })
    }

    /// `(sin((θ̂-θ)/2), cos((θ̂-θ)/2))` with `self` at `θ`.
    #[inline]
    pub fn half_diff(&self, hat: &NodeData) -> (f64, f64) {
        (
            hat.sin_half * self.cos_half - hat.cos_half * self.sin_half,
            hat.cos_half * self.cos_half + hat.sin_half * self.sin_half,
        )
    }
}

/// The curve sampled at the quadrature nodes.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub(crate) nodes: Vec<NodeData>,
    pub(crate) weight: f64,
}

impl QuadratureGrid {
    pub fn new<C: CurveEvaluator + ?Sized>(curve: &C, kc: &KernelConfig) -> Result<Self> {
        kc.validate()?;
        let nodes = quadrature_nodes(kc.n_quad)
            .into_iter()
            .map(|t| NodeData::new(curve, t, kc.guard))
            .collect::<Result<Vec<_>>>()?;
        Ok(QuadratureGrid { nodes, weight: 2.0 * PI / kc.n_quad as f64 })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// `(h, g, w)` integrand parts at one node pair.
#[inline]
fn integrand_parts(node: &NodeData, hat: &NodeData, pp: &ProblemParams, tau: f64) -> (f64, f64, f64) {
    let (sh, ch) = node.half_diff(hat);
    let d = d_tau_from_half_sine(hat.p.r, node.p.r, sh, tau);
    let k = kernels_unchecked(d);
    let sin_d = 2.0 * sh * ch;
    let cos_d = 1.0 - 2.0 * sh * sh;
    let r = node.p.r;
    let gamma = r * r + hat.p.r * node.p.rp * sin_d - hat.p.r * r * cos_d;
    let h = pp.beta * k.g1 * node.arclen;
    let g = (pp.mu + node.kappa) * k.q * gamma;
    let w = (node.kappa - hat.kappa) * gamma / (2.0 * PI * d * d);
    (h, g, w)
}

/// Integrand `M(θ, θ̂)`.
pub fn integrand_m<C: CurveEvaluator + ?Sized>(
    curve: &C,
    theta: f64,
    theta_hat: f64,
    pp: &ProblemParams,
    kc: &KernelConfig,
) -> Result<f64> {
    let node = NodeData::new(curve, theta, kc.guard)?;
    let hat = NodeData::new(curve, theta_hat, kc.guard)?;
    let (h, g, w) = integrand_parts(&node, &hat, pp, kc.tau);
    Ok(h - g + w)
}

/// Integrand from the radius jets at `θ` and `θ̂` directly.
pub fn integrand_from_points(
    node: CurvePoint,
    theta: f64,
    hat: CurvePoint,
    theta_hat: f64,
    pp: &ProblemParams,
    kc: &KernelConfig,
) -> Result<f64> {
    let node = NodeData::from_point(node, theta, kc.guard)?;
    let hat = NodeData::from_point(hat, theta_hat, kc.guard)?;
    let (h, g, w) = integrand_parts(&node, &hat, pp, kc.tau);
    Ok(h - g + w)
}

fn split_on_grid(grid: &QuadratureGrid, hat: &NodeData, pp: &ProblemParams, tau: f64) -> (ResidualSplit, f64) {
    let (mut h, mut g, mut w, mut m) = (0.0, 0.0, 0.0, 0.0);
    for node in &grid.nodes {
        let (hj, gj, wj) = integrand_parts(node, hat, pp, tau);
        h += hj;
        g += gj;
        w += wj;
        m += hj - gj + wj;
    }
    let q = grid.weight;
    (ResidualSplit { h: h * q, g: g * q, w: w * q }, m * q)
}

/// Residual at `θ̂` on a precomputed grid.
pub fn l_tau_on_grid<C: CurveEvaluator + ?Sized>(
    grid: &QuadratureGrid,
    curve: &C,
    theta_hat: f64,
    pp: &ProblemParams,
    kc: &KernelConfig,
) -> Result<f64> {
    let hat = NodeData::new(curve, theta_hat, kc.guard)?;
    Ok(split_on_grid(grid, &hat, pp, kc.tau).1)
}

pub fn l_tau<C: CurveEvaluator + ?Sized>(
    curve: &C,
    theta_hat: f64,
    pp: &ProblemParams,
    kc: &KernelConfig,
) -> Result<f64> {
    let grid = QuadratureGrid::new(curve, kc)?;
    l_tau_on_grid(&grid, curve, theta_hat, pp, kc)
}

pub fn l_tau_split<C: CurveEvaluator + ?Sized>(
    curve: &C,
    theta_hat: f64,
    pp: &ProblemParams,
    kc: &KernelConfig,
) -> Result<ResidualSplit> {
    let grid = QuadratureGrid::new(curve, kc)?;
    let hat = NodeData::new(curve, theta_hat, kc.guard)?;
    Ok(split_on_grid(&grid, &hat, pp, kc.tau).0)
}

/// Residuals at many angles. Samples may run in parallel; output order
/// matches input order and the first failing sample (in input order) is
/// reported.
pub fn residual_batch<C: CurveEvaluator + ?Sized>(
    curve: &C,
    theta_hats: &[f64],
    pp: &ProblemParams,
    kc: &KernelConfig,
) -> Result<Vec<ResidualSample>> {
    let grid = QuadratureGrid::new(curve, kc)?;
    residual_batch_on_grid(&grid, curve, theta_hats, pp, kc)
}

pub fn residual_batch_on_grid<C: CurveEvaluator + ?Sized>(
    grid: &QuadratureGrid,
    curve: &C,
    theta_hats: &[f64],
    pp: &ProblemParams,
    kc: &KernelConfig,
) -> Result<Vec<ResidualSample>> {
    let results: Vec<Result<ResidualSample>> = theta_hats
        .par_iter()
        .map(|&t| {
            l_tau_on_grid(grid, curve, t, pp, kc).map(|value| ResidualSample { theta_hat: t, value })
        })
        .collect();
    results.into_iter().collect()
}

/// Residual split at many angles, in input order.
pub fn split_batch<C: CurveEvaluator + ?Sized>(
    curve: &C,
    theta_hats: &[f64],
    pp: &ProblemParams,
    kc: &KernelConfig,
) -> Result<Vec<(ResidualSplit, f64)>> {
    let grid = QuadratureGrid::new(curve, kc)?;
    let results: Vec<Result<(ResidualSplit, f64)>> = theta_hats
        .par_iter()
        .map(|&t| {
            let hat = NodeData::new(curve, t, kc.guard)?;
            Ok(split_on_grid(&grid, &hat, pp, kc.tau))
        })
        .collect();
    results.into_iter().collect()
}
