//! Fourier diagnostics of a sampled boundary.

use std::f64::consts::TAU;

use serde::Serialize;

use crate::curve::CurveEvaluator;
use crate::error::{Error, Result};

pub const DEFAULT_MODES: usize = 16;
pub const DOMINANCE_FACTOR: f64 = 5.0;

/// `amplitudes[0]` is the mean radius; `amplitudes[k]` is the magnitude of the
/// `cos(kθ + φ)` component.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSpectrum {
    pub amplitudes: Vec<f64>,
}

impl ModeSpectrum {
    pub fn mean_radius(&self) -> f64 {
        self.amplitudes[0]
    }

    pub fn max_mode(&self) -> usize {
        self.amplitudes.len() - 1
    }

    /// Largest nonzero mode `k >= 1` (first one on ties).
    pub fn dominant_mode(&self) -> usize {
        let mut best = 1;
        for k in 2..self.amplitudes.len() {
            if self.amplitudes[k] > self.amplitudes[best] {
                best = k;
            }
        }
        best
    }

    fn largest_other(&self, n: usize) -> f64 {
        (1..self.amplitudes.len()).filter(|&k| k != n).map(|k| self.amplitudes[k]).fold(0.0, f64::max)
    }

    /// `amplitude[n] / max_{k >= 1, k != n} amplitude[k]`.
    pub fn dominance_ratio(&self, n: usize) -> f64 {
        self.amplitudes[n] / self.largest_other(n)
    }

    pub fn dominates(&self, n: usize, factor: f64) -> bool {
        n >= 1 && n < self.amplitudes.len() && self.amplitudes[n] > factor * self.largest_other(n)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,amplitude\n");
        for (k, a) in self.amplitudes.iter().enumerate() {
            s.push_str(&format!("{k},{a:e}\n"));
        }
        s
    }
}

/// Uniform angles `2πj/samples`.
pub fn uniform_angles(samples: usize) -> Vec<f64> {
    (0..samples).map(|j| TAU * j as f64 / samples as f64).collect()
}

pub fn sample_radius<C: CurveEvaluator + ?Sized>(curve: &C, samples: usize) -> Vec<(f64, f64)> {
    uniform_angles(samples).into_iter().map(|t| (t, curve.eval(t).r)).collect()
}

/// Direct DFT of `ρ(2πj/S)` for modes `0..=k_max`.
pub fn fourier_modes<C: CurveEvaluator + ?Sized>(curve: &C, k_max: usize, samples: usize) -> Result<ModeSpectrum> {
    if k_max == 0 || samples < 4 * k_max {
        return Err(Error::Config(format!(
            "need at least 4K samples for K = {k_max} modes, got {samples}"
        )));
    }
    let rho: Vec<f64> = sample_radius(curve, samples).into_iter().map(|(_, r)| r).collect();
    Ok(spectrum_of_samples(&rho, k_max))
}

pub(crate) fn spectrum_of_samples(rho: &[f64], k_max: usize) -> ModeSpectrum {
    let s = rho.len();
    let mut amplitudes = Vec::with_capacity(k_max + 1);
    amplitudes.push(rho.iter().sum::<f64>() / s as f64);
    for k in 1..=k_max {
        let (mut re, mut im) = (0.0, 0.0);
        for (j, r) in rho.iter().enumerate() {
            // reduce kj mod S so the angle stays exact
            let phase = TAU * ((k * j) % s) as f64 / s as f64;
            re += r * phase.cos();
            im -= r * phase.sin();
        }
        amplitudes.push(2.0 / s as f64 * re.hypot(im));
    }
    ModeSpectrum { amplitudes }
}

/// Strict local maxima of the cyclic sequence `rho`, counting plateaus once.
pub fn count_local_maxima(rho: &[f64]) -> usize {
    let n = rho.len();
    if n < 3 {
        return 0;
    }
    // start from a strict global minimum neighbour so plateaus never straddle the wrap
    let start = (0..n).min_by(|&i, &j| rho[i].total_cmp(&rho[j])).unwrap();
    let at = |i: usize| rho[(start + i) % n];
    let mut count = 0;
    let mut rising = false;
    for i in 1..=n {
        let (prev, cur) = (at(i - 1), at(i));
        if cur > prev {
            rising = true;
        } else if cur < prev {
            if rising {
                count += 1;
            }
            rising = false;
        }
    }
    count
}

pub fn count_lobes<C: CurveEvaluator + ?Sized>(curve: &C, samples: usize) -> usize {
    let rho: Vec<f64> = sample_radius(curve, samples).into_iter().map(|(_, r)| r).collect();
    count_local_maxima(&rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::ClosedFormCurve;
    use proptest::prelude::*;

    #[test]
    fn circle_has_only_mean() {
        let c = ClosedFormCurve::circle(1.0).unwrap();
        let s = fourier_modes(&c, 16, 64).unwrap();
        assert_eq!(s.amplitudes.len(), 17);
        assert!((s.mean_radius() - 1.0).abs() < 1e-15);
        assert!(s.amplitudes[1..].iter().all(|&a| a < 1e-12));
    }

    #[test]
    fn pure_mode_is_recovered() {
        let c = ClosedFormCurve::cosine_perturbed(1.0, 0.1, 3).unwrap();
        let s = fourier_modes(&c, 16, 128).unwrap();
        assert!((s.amplitudes[3] - 0.1).abs() < 1e-10);
        for k in (1..=16).filter(|&k| k != 3) {
            assert!(s.amplitudes[k] < 1e-12, "k = {k}: {}", s.amplitudes[k]);
        }
        assert_eq!(s.dominant_mode(), 3);
        assert!(s.dominates(3, DOMINANCE_FACTOR));
        assert!(!s.dominates(2, DOMINANCE_FACTOR));
    }

    #[test]
    fn too_few_samples() {
        let c = ClosedFormCurve::circle(1.0).unwrap();
        assert!(fourier_modes(&c, 16, 63).is_err());
        assert!(fourier_modes(&c, 0, 63).is_err());
    }

    #[test]
    fn dominance_is_strict_factor() {
        let s = ModeSpectrum { amplitudes: vec![1.0, 0.01, 0.06, 0.0] };
        assert!(s.dominates(2, 5.0));
        assert!((s.dominance_ratio(2) - 6.0).abs() < 1e-12);
        let t = ModeSpectrum { amplitudes: vec![1.0, 0.01, 0.04, 0.01] };
        assert!(t.dominates(2, 3.9));
        assert!(!t.dominates(2, 4.0));
    }

    #[test]
    fn local_maxima_examples() {
        assert_eq!(count_local_maxima(&[1.0, 1.0, 1.0, 1.0]), 0);
        assert_eq!(count_local_maxima(&[0.0, 1.0, 0.0, 1.0]), 2);
        assert_eq!(count_local_maxima(&[0.0, 1.0, 1.0, 0.0, 0.5, 0.0]), 2);
        // maximum sitting on the wrap-around
        assert_eq!(count_local_maxima(&[2.0, 1.0, 0.0, 1.0]), 1);
    }

    proptest! {
        #[test]
        fn lobes_of_pure_modes(n in 1u32..9, eps in 0.01f64..0.4) {
            let c = ClosedFormCurve::cosine_perturbed(1.0, eps, n).unwrap();
            prop_assert_eq!(count_lobes(&c, 720), n as usize);
        }

        #[test]
        fn amplitudes_are_nonnegative(eps in 0.0f64..0.3, n in 1u32..6) {
            let c = ClosedFormCurve::cosine_perturbed(1.5, eps, n).unwrap();
            let s = fourier_modes(&c, 8, 64).unwrap();
            prop_assert!(s.amplitudes.iter().all(|&a| a >= 0.0));
            prop_assert!((s.mean_radius() - 1.5).abs() < 1e-12);
        }
    }
}
