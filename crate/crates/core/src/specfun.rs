//! Modified Bessel functions of integer order and the Green-function kernels
//! of `-Δ + 1` in the plane.
//!
//! The kernel quartet used by the boundary integral is
//!
//! ```text
//! G1(r)  = K0(r) / 2π
//! G1'(r) = -K1(r) / 2π
//! Q(r)   = (G1'(r) + 1/(2πr)) / r
//! Q'(r)
//! ```
//!
//! `Q` is the difference of two `O(1/r)` quantities, so it is never formed by
//! subtraction. For `r <= 3` every kernel is a convergent power series in
//! `t = r²/4` with a `ln(r/2)` part, including the regular remainder
//! `K1(r) - 1/r`. For `r > 3` the pair `K0, K1` comes from Steed's continued
//! fraction (Temme's CF2), where no cancellation occurs.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Largest supported order for [`bessel_i`].
pub const MAX_ORDER: u32 = 64;

/// Upper end of the argument range with the documented accuracy contract.
pub const MAX_ARG: f64 = 50.0;

// Chord lengths of unit-scale curves stay below 3, where the series still
// loses under two digits to cancellation.
const SMALL_ARG: f64 = 3.0;
// even, so the series splits into even and odd halves
const SERIES_LEN: usize = 18;

// Beyond this I0/I1 use the Hankel asymptotic expansion, whose smallest term
// is ~e^{-2r}.
const ASYMPTOTIC_SWITCH: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BesselOrder(u32);

impl BesselOrder {
    pub fn new(n: u32) -> Result<Self> {
        if n > MAX_ORDER {
            return Err(Error::domain(
                "BesselOrder::new",
                format!("order {n} exceeds supported maximum {MAX_ORDER}"),
            ));
        }
        Ok(BesselOrder(n))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

/// All four kernels at one distance, sharing the Bessel work.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSet {
    pub g1: f64,
    pub g1_prime: f64,
    pub q: f64,
    pub q_prime: f64,
}

/// Power-series coefficients in `t = r²/4` for the small-argument branch,
/// one row per power with columns `[P0, P1, P2, P3]`:
///
/// ```text
/// I0 = P0
/// I1 = (r/2) P1
/// K0 = -ln(r/2) P0 + P2
/// K1 - 1/r = (r/2) (ln(r/2) P1 - P3)
/// ```
fn small_series() -> &'static [[f64; 4]; SERIES_LEN] {
    static TABLE: OnceLock<[[f64; 4]; SERIES_LEN]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut rows = [[0.0; 4]; SERIES_LEN];
        let mut u = 1.0_f64;
        let mut harmonic = 0.0_f64;
        for (k, row) in rows.iter_mut().enumerate() {
            if k > 0 {
                u /= (k * k) as f64;
                harmonic += 1.0 / k as f64;
            }
            let v = u / (k + 1) as f64;
            let harmonic_next = harmonic + 1.0 / (k + 1) as f64;
            // ψ(k+1) = H_k - γ
            *row = [
                u,
                v,
                (harmonic - EULER_GAMMA) * u,
                0.5 * (harmonic + harmonic_next - 2.0 * EULER_GAMMA) * v,
            ];
        }
        rows
    })
}

/// Regular parts at small argument: (I0, I1, K0, K1 - 1/r, K0 + 2(K1 - 1/r)/r).
#[inline]
fn small_parts(r: f64) -> (f64, f64, f64, f64, f64) {
    let rows = small_series();
    let t = 0.25 * r * r;
    // even and odd powers as two Horner chains in t² to shorten the dependency chain
    let t2 = t * t;
    let mut even = [0.0_f64; 4];
    let mut odd = [0.0_f64; 4];
    for pair in rows.chunks_exact(2).rev() {
        for j in 0..4 {
            even[j] = even[j] * t2 + pair[0][j];
            odd[j] = odd[j] * t2 + pair[1][j];
        }
    }
    let mut acc = [0.0_f64; 4];
    for j in 0..4 {
        acc[j] = even[j] + t * odd[j];
    }
    let log_half = (0.5 * r).ln();
    let half = 0.5 * r;
    let i0 = acc[0];
    let i1 = half * acc[1];
    let k0 = -log_half * acc[0] + acc[2];
    let e1 = half * (log_half * acc[1] - acc[3]);
    // the logarithms cancel to about one digit as r -> 0, where this tends to -1/2
    let s = k0 + 2.0 * e1 / r;
    (i0, i1, k0, e1, s)
}

/// K0 and K1 for `x >= 2` by Steed's method on Temme's second continued fraction.
fn k01_continued_fraction(x: f64) -> (f64, f64) {
    const MAX_ITER: usize = 10_000;
    let a1 = 0.25;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..MAX_ITER {
        a -= 2.0 * (i - 1) as f64;
        c = -a * c / i as f64;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        // the sum for K0 settles before the fraction for K1 does
        if (dels / s).abs() < f64::EPSILON * 0.5 && (delh / h).abs() < f64::EPSILON * 0.5 {
            break;
        }
    }
    h *= a1;
    let k0 = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    (k0, k1)
}

/// (K0, K1, K1 - 1/r, K0 + 2(K1 - 1/r)/r) for r > 0.
#[inline]
fn k_parts(r: f64) -> (f64, f64, f64, f64) {
    if r <= SMALL_ARG {
        let (_, _, k0, e1, s) = small_parts(r);
        (k0, e1 + 1.0 / r, e1, s)
    } else {
        let (k0, k1) = k01_continued_fraction(r);
        let e1 = k1 - 1.0 / r;
        (k0, k1, e1, k0 + 2.0 * e1 / r)
    }
}

/// Kernel quartet without argument checking. Callers guarantee `r > 0`.
#[inline]
pub(crate) fn kernels_unchecked(r: f64) -> KernelSet {
    debug_assert!(r > 0.0);
    let (k0, k1, e1, s) = k_parts(r);
    let inv_two_pi = 0.5 / PI;
    KernelSet {
        g1: inv_two_pi * k0,
        g1_prime: -inv_two_pi * k1,
        q: -inv_two_pi * e1 / r,
        q_prime: inv_two_pi * s / r,
    }
}

fn check_positive(func: &'static str, r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(func, format!("argument must be finite and > 0, got {r}")))
    }
}

pub fn kernels(r: f64) -> Result<KernelSet> {
    check_positive("kernels", r)?;
    Ok(kernels_unchecked(r))
}

fn i01_series(r: f64) -> (f64, f64) {
    if r <= SMALL_ARG {
        let (i0, i1, ..) = small_parts(r);
        return (i0, i1);
    }
    let t = 0.25 * r * r;
    let (mut s0, mut s1) = (1.0, 1.0);
    let (mut u, mut v) = (1.0_f64, 1.0_f64);
    for k in 1..500 {
        let kf = k as f64;
        u *= t / (kf * kf);
        v *= t / (kf * (kf + 1.0));
        s0 += u;
        s1 += v;
        if u < s0 * 1e-17 && v < s1 * 1e-17 {
            break;
        }
    }
    (s0, 0.5 * r * s1)
}

/// Hankel expansion `I_ν(r) ~ e^r / sqrt(2πr) Σ (-1)^k a_k(ν) / r^k`.
fn i_asymptotic(nu: u32, r: f64) -> f64 {
    let mu = 4.0 * (nu as f64).powi(2);
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu - odd * odd) / (k as f64 * 8.0 * r);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    r.exp() / (2.0 * PI * r).sqrt() * sum
}

fn i0_i1(r: f64) -> (f64, f64) {
    if r > ASYMPTOTIC_SWITCH {
        (i_asymptotic(0, r), i_asymptotic(1, r))
    } else {
        i01_series(r)
    }
}

/// Miller's downward recurrence, normalised by I0; returns (I_n, I_{n+1}).
fn i_miller(n: u32, r: f64, i0: f64) -> (f64, f64) {
    let n = n as usize;
    let scale = n.max(r.ceil() as usize);
    let top = 2 * (scale + 16 + (40.0 * scale as f64).sqrt() as usize);
    let two_over_r = 2.0 / r;
    let mut above = 0.0_f64;
    let mut here = 1.0_f64;
    let mut at_n = 0.0_f64;
    let mut at_n1 = 0.0_f64;
    for j in (1..=top).rev() {
        let below = above + j as f64 * two_over_r * here;
        above = here;
        here = below;
        if here.abs() > 1e250 {
            here *= 1e-250;
            above *= 1e-250;
            at_n *= 1e-250;
            at_n1 *= 1e-250;
        }
        if j == n + 1 {
            at_n1 = above;
        }
        if j == n {
            at_n = above;
        }
    }
    let norm = i0 / here;
    (at_n * norm, at_n1 * norm)
}

fn check_i_args(func: &'static str, n: u32, r: f64) -> Result<()> {
    if n > MAX_ORDER {
        return Err(Error::domain(
            func,
            format!("order {n} exceeds supported maximum {MAX_ORDER}"),
        ));
    }
    if !r.is_finite() || r < 0.0 {
        return Err(Error::domain(func, format!("argument must be finite and >= 0, got {r}")));
    }
    Ok(())
}

fn i_pair(n: u32, r: f64) -> (f64, f64) {
    if r == 0.0 {
        return (if n == 0 { 1.0 } else { 0.0 }, 0.0);
    }
    let (i0, i1) = i0_i1(r);
    match n {
        0 => (i0, i1),
        _ => {
            let (in_, in1) = i_miller(n, r, i0);
            if n == 1 {
                (i1, in1)
            } else {
                (in_, in1)
            }
        }
    }
}

/// Modified Bessel function of the first kind `I_n(r)`.
pub fn bessel_i(n: u32, r: f64) -> Result<f64> {
    check_i_args("bessel_i", n, r)?;
    Ok(i_pair(n, r).0)
}

/// `I_n'(r) = I_{n+1}(r) + (n/r) I_n(r)`.
pub fn bessel_i_prime(n: u32, r: f64) -> Result<f64> {
    check_i_args("bessel_i_prime", n, r)?;
    if n >= MAX_ORDER {
        return Err(Error::domain(
            "bessel_i_prime",
            format!("order {n} needs I_{} which exceeds the supported range", n + 1),
        ));
    }
    if r == 0.0 {
        return Ok(if n == 1 { 0.5 } else { 0.0 });
    }
    let (i_n, i_next) = i_pair(n, r);
    Ok(i_next + n as f64 / r * i_n)
}

/// Logarithmic derivative `I_n'(r) / I_n(r)` for `r > 0`, formed from the
/// ratio `I_{n+1}/I_n` so it stays finite where `I_n` underflows.
pub fn bessel_i_log_derivative(n: u32, r: f64) -> Result<f64> {
    check_i_args("bessel_i_log_derivative", n, r)?;
    check_positive("bessel_i_log_derivative", r)?;
    if n >= MAX_ORDER {
        return Err(Error::domain(
            "bessel_i_log_derivative",
            format!("order {n} exceeds supported maximum {}", MAX_ORDER - 1),
        ));
    }
    let (i_n, i_next) = i_pair(n, r);
    Ok(i_next / i_n + n as f64 / r)
}

/// Modified Bessel function of the second kind, orders 0 and 1.
pub fn bessel_k(n: u32, r: f64) -> Result<f64> {
    check_positive("bessel_k", r)?;
    let (k0, k1, _, _) = k_parts(r);
    match n {
        0 => Ok(k0),
        1 => Ok(k1),
        _ => Err(Error::domain("bessel_k", format!("only orders 0 and 1 are supported, got {n}"))),
    }
}

/// `G1(r) = K0(r)/2π`, the free-space Green function of `-Δ + 1`.
pub fn green_g1(r: f64) -> Result<f64> {
    Ok(kernels(r)?.g1)
}

pub fn green_g1_prime(r: f64) -> Result<f64> {
    Ok(kernels(r)?.g1_prime)
}

pub fn q_kernel(r: f64) -> Result<f64> {
    Ok(kernels(r)?.q)
}

pub fn q_kernel_prime(r: f64) -> Result<f64> {
    Ok(kernels(r)?.q_prime)
}
