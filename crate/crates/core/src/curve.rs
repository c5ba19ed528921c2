//! Polar boundary curves `r = R(θ)` and the geometric pieces of the boundary
//! integrand: curvature, regularized chord length, normal-flux factor and
//! arclength element.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Radii at or below this are treated as a degenerate curve.
pub const MIN_RADIUS: f64 = 0.05;

/// Default lower bound on `sqrt(R² + R'²)`.
pub const DEFAULT_GUARD: f64 = 1e-4;

/// Value and first two θ-derivatives of a polar radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub r: f64,
    pub rp: f64,
    pub rpp: f64,
}

impl CurvePoint {
    pub fn new(r: f64, rp: f64, rpp: f64) -> Self {
        CurvePoint { r, rp, rpp }
    }
}

/// Anything that yields `R, R', R''` on a 2π-periodic angle.
pub trait CurveEvaluator: Sync {
    fn eval(&self, theta: f64) -> CurvePoint;
}

impl<C: CurveEvaluator + ?Sized> CurveEvaluator for &C {
    fn eval(&self, theta: f64) -> CurvePoint {
        (**self).eval(theta)
    }
}

/// Closed-form test curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedFormCurve {
    Circle { r0: f64 },
    /// `R(θ) = r0 + eps·cos(nθ)`.
    CosinePerturbed { r0: f64, eps: f64, n: u32 },
}

impl ClosedFormCurve {
    pub fn circle(r0: f64) -> Result<Self> {
        if !(r0.is_finite() && r0 > 0.0) {
            return Err(Error::domain("ClosedFormCurve::circle", format!("radius must be > 0, got {r0}")));
        }
        Ok(ClosedFormCurve::Circle { r0 })
    }

    pub fn cosine_perturbed(r0: f64, eps: f64, n: u32) -> Result<Self> {
        if !(r0.is_finite() && r0 > 0.0 && eps.is_finite() && eps.abs() < r0) {
            return Err(Error::domain(
                "ClosedFormCurve::cosine_perturbed",
                format!("need r0 > 0 and |eps| < r0, got r0 = {r0}, eps = {eps}"),
            ));
        }
        Ok(ClosedFormCurve::CosinePerturbed { r0, eps, n })
    }

    /// Third derivative `R'''(θ)`.
    pub fn rppp(&self, theta: f64) -> f64 {
        match *self {
            ClosedFormCurve::Circle { .. } => 0.0,
            ClosedFormCurve::CosinePerturbed { eps, n, .. } => {
                let k = n as f64;
                eps * k * k * k * (k * theta).sin()
            }
        }
    }
}

impl CurveEvaluator for ClosedFormCurve {
    fn eval(&self, theta: f64) -> CurvePoint {
        match *self {
            ClosedFormCurve::Circle { r0 } => CurvePoint::new(r0, 0.0, 0.0),
            ClosedFormCurve::CosinePerturbed { r0, eps, n } => {
                let k = n as f64;
                let (s, c) = (k * theta).sin_cos();
                CurvePoint::new(r0 + eps * c, -eps * k * s, -eps * k * k * c)
            }
        }
    }
}

/// Reduce an angle difference to `(-π, π]`.
pub fn reduce_angle(dtheta: f64) -> f64 {
    if dtheta > -PI && dtheta <= PI {
        return dtheta;
    }
    let two_pi = 2.0 * PI;
    let mut x = dtheta.rem_euclid(two_pi);
    if x > PI {
        x -= two_pi;
    }
    x
}

/// Reject points with too small a radius or a vanishing speed `sqrt(R² + R'²)`.
pub fn check_point(theta: f64, p: &CurvePoint, guard: f64) -> Result<()> {
    if !(p.r.is_finite() && p.rp.is_finite() && p.rpp.is_finite()) {
        return Err(Error::DegenerateCurve { theta, reason: "non-finite radius or derivative".into() });
    }
    if p.r <= MIN_RADIUS {
        return Err(Error::DegenerateCurve {
            theta,
            reason: format!("radius {} is below {MIN_RADIUS}", p.r),
        });
    }
    if p.r * p.r + p.rp * p.rp <= guard * guard {
        return Err(Error::DegenerateCurve {
            theta,
            reason: format!("R² + R'² fell below guard² = {}", guard * guard),
        });
    }
    Ok(())
}

/// Curvature of the polar graph, positive for convex curves.
pub fn curvature(r: f64, rp: f64, rpp: f64, guard: f64) -> Result<f64> {
    let w = r * r + rp * rp;
    if !(w > guard * guard) {
        return Err(Error::DegenerateCurve {
            theta: f64::NAN,
            reason: format!("R² + R'² = {w} at or below guard² = {}", guard * guard),
        });
    }
    Ok(curvature_unchecked(r, rp, rpp))
}

#[inline]
pub(crate) fn curvature_unchecked(r: f64, rp: f64, rpp: f64) -> f64 {
    let w = r * r + rp * rp;
    (r * r + 2.0 * rp * rp - r * rpp) / (w * w.sqrt())
}

/// `sqrt(R̂² + R² - 2R̂R cos Δ + τ²)`.
#[inline]
pub fn d_tau(r_hat: f64, r: f64, dtheta: f64, tau: f64) -> f64 {
    let s_half = (0.5 * reduce_angle(dtheta)).sin();
    d_tau_from_half_sine(r_hat, r, s_half, tau)
}

/// The chord part is written as `(R̂-R)² + 4R̂R sin²(Δ/2)` so it stays
/// accurate for nearby points.
#[inline]
pub(crate) fn d_tau_from_half_sine(r_hat: f64, r: f64, s_half: f64, tau: f64) -> f64 {
    let dr = r_hat - r;
    (dr * dr + 4.0 * r_hat * r * s_half * s_half + tau * tau).sqrt()
}

/// `R² + R̂R' sin Δ - R̂R cos Δ` with `Δ = θ̂ - θ`: the quantity
/// `(y - x)·n_y |dS_y/dθ|`.
#[inline]
pub fn geometric_factor(r_hat: f64, r: f64, rp: f64, dtheta: f64) -> f64 {
    let (s, c) = reduce_angle(dtheta).sin_cos();
    r * r + r_hat * rp * s - r_hat * r * c
}

#[inline]
pub fn arclength_element(r: f64, rp: f64) -> f64 {
    r.hypot(rp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Curvature of a parametric plane curve from its first two derivatives.
    fn cartesian_curvature(dx: f64, dy: f64, ddx: f64, ddy: f64) -> f64 {
        (dx * ddy - dy * ddx) / (dx * dx + dy * dy).powf(1.5)
    }

    #[test]
    fn circle_curvature() {
        assert_relative_eq!(curvature(2.0, 0.0, 0.0, DEFAULT_GUARD).unwrap(), 0.5);
    }

    #[test]
    fn perturbed_circle_curvature_by_substitution() {
        let (r, rpp) = (1.01, -0.04);
        let want = (r * r - r * rpp) / (r * r * r);
        assert_relative_eq!(curvature(r, 0.0, rpp, DEFAULT_GUARD).unwrap(), want, max_relative = 1e-15);
    }

    #[test]
    fn ellipse_curvature_matches_parametric_oracle() {
        // x² + y²/0.25 = 1 as a polar graph, derivatives by nested differences
        let radius = |t: f64| 1.0 / (t.cos().powi(2) + 4.0 * t.sin().powi(2)).sqrt();
        let h = 1e-4;
        for &theta in &[0.0, 0.3, 1.1, 2.0] {
            let r = radius(theta);
            let rp = (radius(theta + h) - radius(theta - h)) / (2.0 * h);
            let rpp = (radius(theta + h) - 2.0 * r + radius(theta - h)) / (h * h);
            // parametric point on the ellipse at the same polar angle
            let (s, c) = theta.sin_cos();
            let t = (2.0 * s).atan2(c);
            let want = cartesian_curvature(-t.sin(), 0.5 * t.cos(), -t.cos(), -0.5 * t.sin());
            let got = curvature(r, rp, rpp, DEFAULT_GUARD).unwrap();
            assert_relative_eq!(got, want, max_relative = 1e-6);
        }
        assert_relative_eq!(curvature(1.0, 0.0, -3.0, DEFAULT_GUARD).unwrap(), 4.0);
    }

    #[test]
    fn curvature_rejects_degenerate() {
        assert!(curvature(0.0, 0.0, 1.0, DEFAULT_GUARD).is_err());
        assert!(curvature(1e-5, 1e-5, 0.0, DEFAULT_GUARD).is_err());
    }

    #[test]
    fn check_point_guards() {
        let ok = CurvePoint::new(1.0, 0.0, 0.0);
        assert!(check_point(0.0, &ok, DEFAULT_GUARD).is_ok());
        let small = CurvePoint::new(0.05, 1.0, 0.0);
        let err = check_point(0.3, &small, DEFAULT_GUARD).unwrap_err();
        assert!(err.is_degeneracy());
        let nan = CurvePoint::new(f64::NAN, 0.0, 0.0);
        assert!(check_point(0.0, &nan, DEFAULT_GUARD).is_err());
    }

    #[test]
    fn d_tau_examples() {
        let tau = 1e-3;
        assert_relative_eq!(d_tau(1.0, 1.0, 0.0, tau), tau);
        assert_relative_eq!(d_tau(1.0, 1.0, PI, 0.0), 2.0);
        let want = (1.44f64 + 0.64 - 2.0 * 0.96 * 0.5 + 1e-6).sqrt();
        assert_relative_eq!(d_tau(1.2, 0.8, PI / 3.0, 1e-3), want, max_relative = 1e-15);
    }

    #[test]
    fn geometric_factor_examples() {
        assert_eq!(geometric_factor(1.3, 1.3, 0.0, 0.0), 0.0);
        assert_relative_eq!(geometric_factor(1.0, 1.0, 0.0, PI), 2.0);
    }

    #[test]
    fn arclength_examples() {
        assert_eq!(arclength_element(1.0, 0.0), 1.0);
        assert_eq!(arclength_element(2.0, 0.0), 2.0);
        let n = 64;
        let unit = ClosedFormCurve::circle(1.0).unwrap();
        let len: f64 = (0..n)
            .map(|j| {
                let p = unit.eval(2.0 * PI * j as f64 / n as f64);
                arclength_element(p.r, p.rp)
            })
            .sum::<f64>()
            * 2.0
            * PI
            / n as f64;
        assert!((len - 2.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn angle_reduction() {
        assert_eq!(reduce_angle(PI), PI);
        assert_relative_eq!(reduce_angle(-PI), PI);
        assert_relative_eq!(reduce_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_relative_eq!(reduce_angle(1.0 + 200.0 * PI), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_validation() {
        assert!(ClosedFormCurve::circle(0.0).is_err());
        assert!(ClosedFormCurve::cosine_perturbed(1.0, 1.0, 2).is_err());
        assert!(ClosedFormCurve::cosine_perturbed(1.0, -0.5, 2).is_ok());
    }

    #[test]
    fn closed_form_third_derivative() {
        let c = ClosedFormCurve::cosine_perturbed(1.0, 0.2, 3).unwrap();
        let h = 1e-5;
        for &t in &[0.1, 0.9, 2.7] {
            let fd = (c.eval(t + h).rpp - c.eval(t - h).rpp) / (2.0 * h);
            assert_relative_eq!(c.rppp(t), fd, max_relative = 1e-8);
        }
    }

    #[test]
    fn curvature_linearizes_to_mode_factor() {
        for n in 0..6u32 {
            let flat = ClosedFormCurve::cosine_perturbed(1.0, 0.0, n).unwrap();
            for &t in &[0.0, 1.0, 2.5] {
                let p = flat.eval(t);
                assert_relative_eq!(curvature(p.r, p.rp, p.rpp, DEFAULT_GUARD).unwrap(), 1.0);
            }
            let eps = 1e-5;
            let c = ClosedFormCurve::cosine_perturbed(1.0, eps, n).unwrap();
            let p = c.eval(0.0);
            let dk = curvature(p.r, p.rp, p.rpp, DEFAULT_GUARD).unwrap() - 1.0;
            let want = ((n * n) as f64 - 1.0) * eps;
            assert!((dk - want).abs() < 10.0 * eps * eps * (1.0 + (n * n) as f64).powi(2));
        }
    }

    proptest! {
        #[test]
        fn d_tau_regularization_is_additive(
            a in 0.1f64..3.0, b in 0.1f64..3.0, dt in -10.0f64..10.0, tau in 0.0f64..0.1
        ) {
            let lhs = d_tau(a, b, dt, tau).powi(2) - d_tau(a, b, dt, 0.0).powi(2);
            prop_assert!((lhs - tau * tau).abs() < 1e-14);
            prop_assert!(d_tau(a, b, dt, tau) >= tau);
        }

        #[test]
        fn d_tau_symmetric(a in 0.1f64..3.0, b in 0.1f64..3.0, dt in -10.0f64..10.0, tau in 0.0f64..0.1) {
            prop_assert_eq!(d_tau(a, b, dt, tau), d_tau(b, a, -dt, tau));
        }

        #[test]
        fn geometric_factor_matches_cartesian(
            r_hat in 0.2f64..3.0, r in 0.2f64..3.0, rp in -3.0f64..3.0,
            theta in 0.0f64..(2.0 * PI), theta_hat in 0.0f64..(2.0 * PI)
        ) {
            let y = (r * theta.cos(), r * theta.sin());
            let x = (r_hat * theta_hat.cos(), r_hat * theta_hat.sin());
            let tangent = (rp * theta.cos() - r * theta.sin(), rp * theta.sin() + r * theta.cos());
            let speed = (tangent.0 * tangent.0 + tangent.1 * tangent.1).sqrt();
            let normal = (tangent.1 / speed, -tangent.0 / speed);
            let want = ((y.0 - x.0) * normal.0 + (y.1 - x.1) * normal.1) * speed;
            let got = geometric_factor(r_hat, r, rp, theta_hat - theta);
            prop_assert!((got - want).abs() < 1e-12 * (1.0 + want.abs()));
        }
    }
}
