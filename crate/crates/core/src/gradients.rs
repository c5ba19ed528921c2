//! Analytic gradients of the discretized residual and of the training loss.
//!
//! The residual is differentiated after discretization: the gradient is the
//! exact derivative of the trapezoid sum that [`crate::integral_op`]
//! evaluates, taken on the same nodes.
//!
//! For one node pair write `B = (μ+κ)Q(D) - (κ-κ̂)/(2πD²)` so that
//! `M = βG1(D)A - BΓ`. The chain rule through the radius jets at `θ` and `θ̂`
//! gives six slot partials; the parameter gradient then contracts them with
//! `∇ρ, ∇ρ', ∇ρ''` at both angles.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::curve::{CurveEvaluator, CurvePoint};
use crate::error::{Error, Result};
use crate::integral_op::{quadrature_nodes, KernelConfig, NodeData, ProblemParams};
use crate::netparam::{accumulate_param_gradient, eval_jet, periodic_defect, Activation, NetworkCurve, NetworkParams};
use crate::specfun::kernels_unchecked;

// Samples per work unit. Fixed so the reduction order, and therefore every
// bit of the result, does not depend on the thread count.
const CHUNK: usize = 4;

/// Partials of `M(θ, θ̂)` with respect to the six radius-jet slots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MPartials {
    pub d_rho_theta: f64,
    pub d_rho_hat: f64,
    pub d_rhop_theta: f64,
    pub d_rhop_hat: f64,
    pub d_rhopp_theta: f64,
    pub d_rhopp_hat: f64,
}

/// `∂κ/∂R, ∂κ/∂R', ∂κ/∂R''`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvaturePartials {
    pub d_r: f64,
    pub d_rp: f64,
    pub d_rpp: f64,
}

pub fn curvature_partials(r: f64, rp: f64, rpp: f64) -> CurvaturePartials {
    let w = r * r + rp * rp;
    let w15 = w * w.sqrt();
    let w25 = w15 * w;
    CurvaturePartials {
        d_r: (-r * r * r - 4.0 * r * rp * rp + 2.0 * r * r * rpp - rpp * rp * rp) / w25,
        d_rp: rp * (r * r - 2.0 * rp * rp + 3.0 * r * rpp) / w25,
        d_rpp: -r / w15,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub entries: Vec<f64>,
}

impl GradientVector {
    pub fn zeros(len: usize) -> Self {
        GradientVector { entries: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|g| g.is_finite())
    }
}

#[derive(Debug, Clone, Copy)]
struct GradNode {
    base: NodeData,
    dk: CurvaturePartials,
    r_over_a: f64,
    rp_over_a: f64,
}

impl GradNode {
    fn new(base: NodeData) -> Self {
        let p = base.p;
        GradNode {
            base,
            dk: curvature_partials(p.r, p.rp, p.rpp),
            r_over_a: p.r / base.arclen,
            rp_over_a: p.rp / base.arclen,
        }
    }
}

/// Pair terms: `M`, the three node-side partials, the part of `∂M/∂R̂` not
/// involving `κ̂`, and `Γ/(2πD²)` (which carries every `κ̂` dependence).
#[inline(always)]
fn pair_terms(node: &GradNode, hat: &GradNode, pp: &ProblemParams, tau: f64) -> (f64, [f64; 3], f64, f64) {
    let nb = &node.base;
    let hb = &hat.base;
    let (sh, ch) = nb.half_diff(hb);
    let sin_d = 2.0 * sh * ch;
    let cos_d = 1.0 - 2.0 * sh * sh;
    let (r, rp) = (nb.p.r, nb.p.rp);
    let rh = hb.p.r;

    let dr = rh - r;
    let d = (dr * dr + 4.0 * rh * r * sh * sh + tau * tau).sqrt();
    let k = kernels_unchecked(d);
    let inv_d = 1.0 / d;
    let c_w = inv_d * inv_d * (0.5 / PI);

    let gamma = r * r + rh * rp * sin_d - rh * r * cos_d;
    let mu_k = pp.mu + nb.kappa;
    let dkappa = nb.kappa - hb.kappa;
    let b = mu_k * k.q - dkappa * c_w;
    let m = pp.beta * k.g1 * nb.arclen - b * gamma;

    let db_dd = mu_k * k.q_prime + 2.0 * dkappa * c_w * inv_d;
    let along_d = pp.beta * k.g1_prime * nb.arclen - db_dd * gamma;
    let d_r = (r - rh * cos_d) * inv_d;
    let d_rh = (rh - r * cos_d) * inv_d;
    let q_minus = (k.q - c_w) * gamma;

    let dm_r = along_d * d_r + pp.beta * k.g1 * node.r_over_a - q_minus * node.dk.d_r - b * (2.0 * r - rh * cos_d);
    let dm_rp = pp.beta * k.g1 * node.rp_over_a - q_minus * node.dk.d_rp - b * rh * sin_d;
    let dm_rpp = -q_minus * node.dk.d_rpp;
    let dm_rh_partial = along_d * d_rh - b * (rp * sin_d - r * cos_d);
    (m, [dm_r, dm_rp, dm_rpp], dm_rh_partial, c_w * gamma)
}

#[inline]
fn hat_partials(hat: &GradNode, rh_partial: f64, cwg: f64) -> [f64; 3] {
    [rh_partial - hat.dk.d_r * cwg, -hat.dk.d_rp * cwg, -hat.dk.d_rpp * cwg]
}

/// The six slot partials of `M` at one node pair.
pub fn m_partials(
    node: CurvePoint,
    theta: f64,
    hat: CurvePoint,
    theta_hat: f64,
    pp: &ProblemParams,
    kc: &KernelConfig,
) -> Result<MPartials> {
    let n = GradNode::new(NodeData::from_point(node, theta, kc.guard)?);
    let h = GradNode::new(NodeData::from_point(hat, theta_hat, kc.guard)?);
    let (_, node_side, rh_partial, cwg) = pair_terms(&n, &h, pp, kc.tau);
    let hat_side = hat_partials(&h, rh_partial, cwg);
    Ok(MPartials {
        d_rho_theta: node_side[0],
        d_rho_hat: hat_side[0],
        d_rhop_theta: node_side[1],
        d_rhop_hat: hat_side[1],
        d_rhopp_theta: node_side[2],
        d_rhopp_hat: hat_side[2],
    })
}

/// Network sampled on the quadrature nodes with everything the gradient
/// sweep needs.
struct GradGrid {
    thetas: Vec<f64>,
    nodes: Vec<GradNode>,
    weight: f64,
}

impl GradGrid {
    fn new(params: &NetworkParams, act: Activation, kc: &KernelConfig) -> Result<Self> {
        kc.validate()?;
        let curve = NetworkCurve::new(params, act);
        let thetas = quadrature_nodes(kc.n_quad);
        let nodes = thetas
            .iter()
            .map(|&t| NodeData::new(&curve, t, kc.guard).map(GradNode::new))
            .collect::<Result<Vec<_>>>()?;
        Ok(GradGrid { thetas, nodes, weight: 2.0 * PI / kc.n_quad as f64 })
    }
}

/// One residual sweep over the nodes. Writes the node-side partials into
/// `coef` (three per node) and returns `(Σ M, Σ hat-side partials)`, both
/// without the quadrature weight.
fn sweep(grid: &GradGrid, hat: &GradNode, pp: &ProblemParams, tau: f64, coef: &mut [f64]) -> (f64, [f64; 3]) {
    let mut m_sum = 0.0;
    let mut rh_sum = 0.0;
    let mut cwg_sum = 0.0;
    for (node, out) in grid.nodes.iter().zip(coef.chunks_exact_mut(3)) {
        let (m, node_side, rh_partial, cwg) = pair_terms(node, hat, pp, tau);
        m_sum += m;
        out.copy_from_slice(&node_side);
        rh_sum += rh_partial;
        cwg_sum += cwg;
    }
    (m_sum, hat_partials(hat, rh_sum, cwg_sum))
}

fn hat_node(params: &NetworkParams, act: Activation, theta_hat: f64, guard: f64) -> Result<GradNode> {
    let j = eval_jet(params, act, theta_hat);
    NodeData::from_point(CurvePoint::new(j.rho, j.rho_p, j.rho_pp), theta_hat, guard).map(GradNode::new)
}

/// Contract accumulated per-node jet coefficients with the parameter
/// gradients of the jets.
fn contract_nodes(params: &NetworkParams, act: Activation, grid: &GradGrid, node_acc: &[f64], scale: f64, grad: &mut [f64]) {
    for (t, c) in grid.thetas.iter().zip(node_acc.chunks_exact(3)) {
        accumulate_param_gradient(params, act, *t, [scale * c[0], scale * c[1], scale * c[2]], grad);
    }
}

/// `∇_𝒳 L_τ(θ̂)`.
pub fn grad_l_tau(
    params: &NetworkParams,
    act: Activation,
    theta_hat: f64,
    pp: &ProblemParams,
    kc: &KernelConfig,
) -> Result<GradientVector> {
    let grid = GradGrid::new(params, act, kc)?;
    let hat = hat_node(params, act, theta_hat, kc.guard)?;
    let mut coef = vec![0.0; 3 * grid.nodes.len()];
    let (_, hat_side) = sweep(&grid, &hat, pp, kc.tau, &mut coef);
    let mut grad = GradientVector::zeros(params.len());
    contract_nodes(params, act, &grid, &coef, grid.weight, &mut grad.entries);
    let w = grid.weight;
    accumulate_param_gradient(params, act, theta_hat, [w * hat_side[0], w * hat_side[1], w * hat_side[2]], &mut grad.entries);
    Ok(grad)
}

/// Loss value, gradient and the per-sample residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub loss: f64,
    pub grad: GradientVector,
    pub residuals: Vec<f64>,
}

struct ChunkResult {
    residuals: Vec<f64>,
    node_acc: Vec<f64>,
    hat_terms: Vec<[f64; 3]>,
}

fn defect_penalty(params: &NetworkParams, act: Activation) -> (f64, [f64; 3]) {
    let (d0, d1, d2) = periodic_defect(params, act);
    (d0 * d0 + d1 * d1 + d2 * d2, [d0, d1, d2])
}

/// Loss `F = (1/m) Σ L_τ(θ̂_i)² + Σ_α (ρ^(α)(0) - ρ^(α)(2π))²` and its gradient.
pub fn loss_and_grad(
    params: &NetworkParams,
    act: Activation,
    theta_hats: &[f64],
    pp: &ProblemParams,
    kc: &KernelConfig,
) -> Result<LossEval> {
    if theta_hats.is_empty() {
        return Err(Error::Config("loss needs at least one collocation point".into()));
    }
    let grid = GradGrid::new(params, act, kc)?;
    let hats = theta_hats
        .iter()
        .map(|&t| hat_node(params, act, t, kc.guard))
        .collect::<Result<Vec<_>>>()?;
    let n3 = 3 * grid.nodes.len();
    let inv_m = 1.0 / theta_hats.len() as f64;
    let w = grid.weight;

    let chunks: Vec<ChunkResult> = hats
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut coef = vec![0.0; n3];
            let mut out = ChunkResult {
                residuals: Vec::with_capacity(chunk.len()),
                node_acc: vec![0.0; n3],
                hat_terms: Vec::with_capacity(chunk.len()),
            };
            for hat in chunk {
                let (m_sum, hat_side) = sweep(&grid, hat, pp, kc.tau, &mut coef);
                let l = w * m_sum;
                // d/dX of (1/m) L² is (2/m) L ∇L
                let s = 2.0 * inv_m * l;
                for (acc, c) in out.node_acc.iter_mut().zip(&coef) {
                    *acc += s * c;
                }
                out.residuals.push(l);
                out.hat_terms.push([s * hat_side[0], s * hat_side[1], s * hat_side[2]]);
            }
            out
        })
        .collect();

    let mut node_acc = vec![0.0; n3];
    let mut residuals = Vec::with_capacity(theta_hats.len());
    let mut hat_terms = Vec::with_capacity(theta_hats.len());
    for c in chunks {
        for (acc, v) in node_acc.iter_mut().zip(&c.node_acc) {
            *acc += v;
        }
        residuals.extend(c.residuals);
        hat_terms.extend(c.hat_terms);
    }

    let mut grad = GradientVector::zeros(params.len());
    contract_nodes(params, act, &grid, &node_acc, w, &mut grad.entries);
    for (&t, h) in theta_hats.iter().zip(&hat_terms) {
        accumulate_param_gradient(params, act, t, [w * h[0], w * h[1], w * h[2]], &mut grad.entries);
    }

    let (penalty, defects) = defect_penalty(params, act);
    let two = [2.0 * defects[0], 2.0 * defects[1], 2.0 * defects[2]];
    accumulate_param_gradient(params, act, 0.0, two, &mut grad.entries);
    accumulate_param_gradient(params, act, 2.0 * PI, [-two[0], -two[1], -two[2]], &mut grad.entries);

    let loss = inv_m * residuals.iter().map(|l| l * l).sum::<f64>() + penalty;
    Ok(LossEval { loss, grad, residuals })
}

/// `(F, ∇F)`.
pub fn grad_loss(
    params: &NetworkParams,
    act: Activation,
    theta_hats: &[f64],
    pp: &ProblemParams,
    kc: &KernelConfig,
) -> Result<(f64, GradientVector)> {
    let e = loss_and_grad(params, act, theta_hats, pp, kc)?;
    Ok((e.loss, e.grad))
}

/// `F` alone.
pub fn loss_value(
    params: &NetworkParams,
    act: Activation,
    theta_hats: &[f64],
    pp: &ProblemParams,
    kc: &KernelConfig,
) -> Result<f64> {
    if theta_hats.is_empty() {
        return Err(Error::Config("loss needs at least one collocation point".into()));
    }
    let curve = NetworkCurve::new(params, act);
    let samples = crate::integral_op::residual_batch(&curve, theta_hats, pp, kc)?;
    let mean_sq = samples.iter().map(|s| s.value * s.value).sum::<f64>() / samples.len() as f64;
    Ok(mean_sq + defect_penalty(params, act).0)
}

/// Validate that a parameter vector describes an admissible curve on the
/// quadrature grid, without evaluating any kernels.
pub fn check_admissible(params: &NetworkParams, act: Activation, kc: &KernelConfig) -> Result<()> {
    let curve = NetworkCurve::new(params, act);
    for t in quadrature_nodes(kc.n_quad) {
        crate::curve::check_point(t, &curve.eval(t), kc.guard)?;
    }
    Ok(())
}
