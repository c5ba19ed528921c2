//! Radial steady state and the bifurcation points of its symmetry-breaking
//! branches.
//!
//! With `L_k = I_k'(R)/I_k(R)` and all Bessel values at `R = R_S`, the mode-n
//! linearization coefficient is
//!
//! ```text
//! λ_n(μ) = -μ (I1/I0)(L_n - L_1) + (n²-1)/R² L_n - (I1/(R I0))(L_n - L_1)
//! ```
//!
//! which is affine in μ; its root is `μ_n(R)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::specfun::{bessel_i, bessel_i_log_derivative};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialSolution {
    pub mu: f64,
    pub r_s: f64,
    pub beta: f64,
}

impl RadialSolution {
    pub fn new(mu: f64, r_s: f64) -> Result<Self> {
        Ok(RadialSolution { mu, r_s, beta: beta_of(mu, r_s)? })
    }

    pub fn sigma(&self, r: f64) -> Result<f64> {
        sigma_s(r, self.mu, self.r_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BifurcationPoint {
    pub n: u32,
    pub r_s: f64,
    pub mu_n: f64,
}

fn check_radius(func: &'static str, r_s: f64) -> Result<()> {
    if r_s.is_finite() && r_s > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(func, format!("R_S must be finite and > 0, got {r_s}")))
    }
}

fn check_inside(func: &'static str, r: f64, r_s: f64) -> Result<()> {
    if (0.0..=r_s).contains(&r) {
        Ok(())
    } else {
        Err(Error::domain(func, format!("r = {r} lies outside [0, {r_s}]")))
    }
}

/// `I1(R)/I0(R)`.
fn i_ratio(r_s: f64) -> Result<f64> {
    Ok(bessel_i(1, r_s)? / bessel_i(0, r_s)?)
}

/// Flux constant making the disk of radius `r_s` a steady state.
pub fn beta_of(mu: f64, r_s: f64) -> Result<f64> {
    check_radius("beta_of", r_s)?;
    Ok((mu + 1.0 / r_s) * i_ratio(r_s)?)
}

/// `σ_S(r) = (μ + 1/R) I0(r)/I0(R)`.
pub fn sigma_s(r: f64, mu: f64, r_s: f64) -> Result<f64> {
    check_radius("sigma_s", r_s)?;
    check_inside("sigma_s", r, r_s)?;
    Ok((mu + 1.0 / r_s) * bessel_i(0, r)? / bessel_i(0, r_s)?)
}

/// First-order correction of the interior field for a mode-n boundary
/// perturbation.
pub fn sigma_1n(r: f64, n: u32, mu: f64, r_s: f64) -> Result<f64> {
    check_radius("sigma_1n", r_s)?;
    check_inside("sigma_1n", r, r_s)?;
    let k = (n * n) as f64 - 1.0;
    let amp = k / (r_s * r_s) - (mu + 1.0 / r_s) * i_ratio(r_s)?;
    Ok(amp * bessel_i(n, r)? / bessel_i(n, r_s)?)
}

/// `(slope, intercept)` of `λ_n(μ) = slope·μ + intercept`.
fn frechet_affine(n: u32, r_s: f64) -> Result<(f64, f64)> {
    let ratio = i_ratio(r_s)?;
    let l_n = bessel_i_log_derivative(n, r_s)?;
    let gap = l_n - bessel_i_log_derivative(1, r_s)?;
    let k = (n * n) as f64 - 1.0;
    let slope = -ratio * gap;
    let intercept = k / (r_s * r_s) * l_n - ratio / r_s * gap;
    Ok((slope, intercept))
}

/// Coefficient of `cos(nθ)` in the linearized residual map at the radial
/// solution.
pub fn frechet_eigen(n: u32, mu: f64, r_s: f64) -> Result<f64> {
    check_radius("frechet_eigen", r_s)?;
    let (slope, intercept) = frechet_affine(n, r_s)?;
    Ok(slope * mu + intercept)
}

/// `∂λ_n/∂μ`, negative for every `n >= 2`.
pub fn frechet_slope(n: u32, r_s: f64) -> Result<f64> {
    check_radius("frechet_slope", r_s)?;
    Ok(frechet_affine(n, r_s)?.0)
}

/// Bifurcation value `μ_n(R_S)`. Order 1 has no bifurcation and is rejected;
/// order 0 uses the simplified closed form.
pub fn mu_n(n: u32, r_s: f64) -> Result<f64> {
    check_radius("mu_n", r_s)?;
    match n {
        1 => Err(Error::domain("mu_n", "mode 1 is a translation and has no bifurcation value")),
        0 => {
            let i0 = bessel_i(0, r_s)?;
            let i1 = bessel_i(1, r_s)?;
            let i2 = bessel_i(2, r_s)?;
            Ok((-1.0 + 1.0 / (r_s * i2 / i1 - r_s * i1 / i0 + 1.0)) / r_s)
        }
        _ => {
            let ratio = i_ratio(r_s)?;
            let l_n = bessel_i_log_derivative(n, r_s)?;
            let gap = l_n - bessel_i_log_derivative(1, r_s)?;
            let k = (n * n) as f64 - 1.0;
            Ok(-1.0 / r_s + k * l_n / (r_s * r_s * ratio * gap))
        }
    }
}

pub fn bifurcation_point(n: u32, r_s: f64) -> Result<BifurcationPoint> {
    Ok(BifurcationPoint { n, r_s, mu_n: mu_n(n, r_s)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const RADII: [f64; 4] = [0.5, 1.0, 2.0, 5.0];

    fn second_difference(f: impl Fn(f64) -> f64, r: f64, h: f64) -> (f64, f64) {
        let (fp, f0, fm) = (f(r + h), f(r), f(r - h));
        ((fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / (h * h))
    }

    #[test]
    fn beta_examples() {
        let i1 = bessel_i(1, 1.0).unwrap();
        let i0 = bessel_i(0, 1.0).unwrap();
        assert_relative_eq!(beta_of(14.6, 1.0).unwrap(), 15.6 * i1 / i0, max_relative = 1e-15);
        assert_eq!(beta_of(-0.5, 2.0).unwrap(), 0.0);
        assert!((beta_of(0.0, 1.0).unwrap() - 0.44639).abs() < 1e-5);
        assert!(beta_of(1.0, 0.0).is_err());
    }

    #[test]
    fn sigma_s_examples() {
        assert_relative_eq!(sigma_s(2.0, 3.0, 2.0).unwrap(), 3.5, max_relative = 1e-15);
        assert_relative_eq!(
            sigma_s(0.0, 1.0, 1.0).unwrap(),
            2.0 / bessel_i(0, 1.0).unwrap(),
            max_relative = 1e-15
        );
        assert!(sigma_s(1.5, 1.0, 1.0).is_err());
        assert!(sigma_s(-0.1, 1.0, 1.0).is_err());
    }

    #[test]
    fn sigma_s_normal_derivative_is_beta() {
        for &r_s in &RADII {
            let mu = 7.0;
            let h = 1e-6;
            let fd = (sigma_s(r_s, mu, r_s).unwrap() - sigma_s(r_s - h, mu, r_s).unwrap()) / h;
            // one-sided difference: O(h) error
            assert_relative_eq!(fd, beta_of(mu, r_s).unwrap(), max_relative = 1e-5);
        }
    }

    #[test]
    fn sigma_s_solves_interior_equation() {
        let (mu, r_s) = (14.6, 1.0);
        let f = |r: f64| sigma_s(r, mu, r_s).unwrap();
        for k in 1..10 {
            let r = 0.1 + 0.8 * k as f64 / 10.0;
            let (d1, d2) = second_difference(f, r, 1e-4);
            let res = -d2 - d1 / r + f(r);
            assert!(res.abs() < 1e-6, "r = {r}: {res}");
        }
    }

    #[test]
    fn sigma_1n_boundary_value() {
        for n in 0..6 {
            let v = sigma_1n(1.3, n, 10.0, 1.3).unwrap();
            let want = ((n * n) as f64 - 1.0) / 1.69 - beta_of(10.0, 1.3).unwrap();
            assert_relative_eq!(v, want, max_relative = 1e-14);
        }
        assert_relative_eq!(sigma_1n(1.0, 1, 3.0, 1.0).unwrap(), -beta_of(3.0, 1.0).unwrap());
        assert_eq!(sigma_1n(0.0, 3, 3.0, 1.0).unwrap(), 0.0);
        assert!(sigma_1n(1.1, 2, 3.0, 1.0).is_err());
    }

    #[test]
    fn sigma_1n_solves_mode_equation() {
        for &r_s in &RADII {
            for n in [2u32, 3, 5] {
                let f = |r: f64| sigma_1n(r, n, 14.6, r_s).unwrap();
                for k in 0..=8 {
                    let r = r_s * (0.1 + 0.85 * k as f64 / 8.0);
                    let h = 1e-4 * r_s;
                    let (d1, d2) = second_difference(f, r, h);
                    let res = -d2 - d1 / r + (n * n) as f64 / (r * r) * f(r) + f(r);
                    let scale = 1.0 + f(r).abs() * (n * n) as f64 / (r * r);
                    assert!(res.abs() < 1e-6 * scale, "n = {n}, r = {r}: {res}");
                }
            }
        }
    }

    #[test]
    fn bifurcation_values_at_unit_radius() {
        let want = [(2, 14.7496), (3, 28.7234), (4, 47.1794), (5, 70.1169)];
        for (n, v) in want {
            let got = mu_n(n, 1.0).unwrap();
            assert!((got - v).abs() < 5e-4, "mu_{n} = {got}");
        }
    }

    #[test]
    fn mu_zero_matches_general_formula() {
        for &r_s in &RADII {
            let ratio = i_ratio(r_s).unwrap();
            let l0 = bessel_i_log_derivative(0, r_s).unwrap();
            let gap = l0 - bessel_i_log_derivative(1, r_s).unwrap();
            let general = -1.0 / r_s - l0 / (r_s * r_s * ratio * gap);
            assert_relative_eq!(mu_n(0, r_s).unwrap(), general, max_relative = 1e-10);
        }
    }

    #[test]
    fn bifurcation_chain_is_increasing() {
        for &r_s in &RADII {
            let mu0 = mu_n(0, r_s).unwrap();
            assert!(mu0 > 0.0);
            let mut prev = mu0;
            for n in 2..=8 {
                let m = mu_n(n, r_s).unwrap();
                assert!(m > prev + 1e-6, "R = {r_s}, n = {n}");
                prev = m;
            }
        }
    }

    #[test]
    fn bifurcation_value_is_root() {
        for &r_s in &RADII {
            for n in 2..=8 {
                let m = mu_n(n, r_s).unwrap();
                assert!(frechet_eigen(n, m, r_s).unwrap().abs() < 1e-9);
            }
        }
    }

    #[test]
    fn eigenvalue_decreases_in_mu() {
        for &r_s in &RADII {
            for n in 2..=8 {
                assert!(frechet_slope(n, r_s).unwrap() < 0.0);
            }
        }
        let m2 = mu_n(2, 1.0).unwrap();
        assert!(frechet_eigen(2, m2 - 1.0, 1.0).unwrap() > 0.0);
        assert!(frechet_eigen(2, m2 + 1.0, 1.0).unwrap() < 0.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(mu_n(1, 1.0).is_err());
        assert!(mu_n(2, 0.0).is_err());
        assert!(frechet_eigen(2, 1.0, -1.0).is_err());
        let p = bifurcation_point(3, 1.0).unwrap();
        assert_eq!(p.n, 3);
        let rad = RadialSolution::new(14.6, 1.0).unwrap();
        assert_relative_eq!(rad.sigma(1.0).unwrap(), 15.6, max_relative = 1e-15);
    }
}
