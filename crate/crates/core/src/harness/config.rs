//! Experiment configuration files.
//!
//! A config is TOML with flat sections only. Every key is optional; missing
//! keys take the defaults below, and unknown keys are rejected.
//!
//! ```toml
//! [experiment]
//! kind = "train_bifurcation"   # bifurcation_table | radial_residual | gradcheck
//!                              # | train_bifurcation | train_finger
//! output_dir = "out"
//! mode = 2                     # target Fourier mode / lobe count
//!
//! [problem]
//! # mu defaults to the mode's preset value; omit beta to match the radial state
//! r_s = 1.0
//!
//! [kernel]
//! tau = 1e-3
//! n_quad = 4096
//! guard = 1e-4
//!
//! [network]
//! width = 20
//! activation = "cosine"
//!
//! [train]
//! m = 4000
//! batches = 20
//! epochs = 50
//! seed = 0
//! schedule = "constant"        # constant | harmonic | geometric
//! alpha0 = 1e-4
//! alpha_floor = 1e-6           # geometric only
//!
//! [init]
//! a = "normal(0, 0.04)"        # b defaults to constant(mode)
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bifurcation::{beta_of, mu_n};
use crate::error::{Error, Result};
use crate::integral_op::{KernelConfig, ProblemParams};
use crate::netparam::Activation;
use crate::train::{InitDist, InitSpec, StepSchedule, TrainConfig};

use super::spectrum::DEFAULT_MODES;

/// Standard deviation of the initial amplitudes `a_i`.
pub const DEFAULT_A_STD: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    BifurcationTable,
    RadialResidual,
    Gradcheck,
    TrainBifurcation,
    TrainFinger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    pub output_dir: PathBuf,
    pub mode: u32,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            kind: ExperimentKind::TrainBifurcation,
            output_dir: PathBuf::from("out"),
            mode: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub r_s: f64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection { mu: None, beta: None, r_s: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub tau: f64,
    pub n_quad: usize,
    pub guard: f64,
}

impl Default for KernelSection {
    fn default() -> Self {
        let kc = KernelConfig::default();
        KernelSection { tau: kc.tau, n_quad: kc.n_quad, guard: kc.guard }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub width: usize,
    pub activation: Activation,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection { width: 20, activation: Activation::Cosine }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    Harmonic,
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub m: usize,
    pub batches: usize,
    pub epochs: usize,
    pub seed: u64,
    pub guard_retries: u32,
    pub eval_points: usize,
    pub checkpoint_every: usize,
    pub schedule: ScheduleKind,
    pub alpha0: f64,
    pub alpha_floor: f64,
    /// Geometric decay factor per epoch; by default chosen so that
    /// `alpha_floor` is reached at the final epoch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_factor: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            m: t.m,
            batches: t.batches,
            epochs: t.epochs,
            seed: t.seed,
            guard_retries: t.guard_retries,
            eval_points: t.eval_points,
            checkpoint_every: t.checkpoint_every,
            schedule: ScheduleKind::Constant,
            alpha0: 1e-4,
            alpha_floor: 1e-6,
            alpha_factor: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<InitDist>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<InitDist>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<InitDist>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<InitDist>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableSection {
    pub modes: Vec<u32>,
    pub radii: Vec<f64>,
}

impl Default for TableSection {
    fn default() -> Self {
        TableSection { modes: vec![0, 2, 3, 4, 5, 6, 7, 8], radii: vec![0.5, 1.0, 2.0, 5.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidualSection {
    pub taus: Vec<f64>,
    /// Curve spec, see [`super::curvespec::CurveSpec`].
    pub curve: String,
    pub theta_hat: f64,
    /// Quadrature nodes per unit `1/τ`; the count used is the next power of two
    /// above `nodes_per_inv_tau / τ`, and never below `kernel.n_quad`.
    pub nodes_per_inv_tau: f64,
}

impl Default for ResidualSection {
    fn default() -> Self {
        ResidualSection {
            taus: vec![1e-2, 3e-3, 1e-3, 3e-4],
            curve: "circle:1".into(),
            theta_hat: 0.0,
            nodes_per_inv_tau: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSection {
    pub seeds: u64,
    pub width: usize,
    pub m: usize,
    pub step: f64,
    /// Largest relative error tolerated by `--check`.
    pub tolerance: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        GradcheckSection { seeds: 10, width: 4, m: 8, step: 1e-6, tolerance: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub boundary_samples: usize,
    pub spectrum_modes: usize,
    pub gnuplot: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { boundary_samples: 720, spectrum_modes: DEFAULT_MODES, gnuplot: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub problem: ProblemSection,
    pub kernel: KernelSection,
    pub network: NetworkSection,
    pub train: TrainSection,
    pub init: InitSection,
    pub table: TableSection,
    pub residual: ResidualSection,
    pub gradcheck: GradcheckSection,
    pub output: OutputSection,
}

/// `μ` used for mode `n` near the unit-radius bifurcation value.
pub fn default_mu(n: u32) -> Result<f64> {
    Ok(match n {
        2 => 14.6,
        3 => 28.6,
        4 => 47.0,
        5 => 70.0,
        _ => mu_n(n, 1.0)? - 0.15,
    })
}

pub const FINGER_MU: f64 = 20.0;

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let pp = self.problem_params()?;
        if pp.mu <= 0.0 {
            return Err(Error::Config("mu must be positive".into()));
        }
        self.kernel_config()?;
        match self.experiment.kind {
            ExperimentKind::TrainBifurcation | ExperimentKind::TrainFinger => {
                self.train_config()?.validate()?;
                if self.experiment.mode == 0 {
                    return Err(Error::Config("experiment.mode must be at least 1".into()));
                }
                if self.output.spectrum_modes == 0 || self.output.boundary_samples < 4 * self.output.spectrum_modes {
                    return Err(Error::Config(
                        "output.boundary_samples must be at least 4 × output.spectrum_modes".into(),
                    ));
                }
            }
            ExperimentKind::RadialResidual => {
                if self.residual.taus.is_empty() {
                    return Err(Error::Config("residual.taus must not be empty".into()));
                }
                for &tau in &self.residual.taus {
                    self.residual_kernel(tau)?;
                }
                self.residual.curve.parse::<super::curvespec::CurveSpec>()?;
            }
            ExperimentKind::Gradcheck => {
                let g = &self.gradcheck;
                if g.seeds == 0 || g.width == 0 || g.m == 0 || !(g.step > 0.0) || !(g.tolerance > 0.0) {
                    return Err(Error::Config(
                        "gradcheck seeds, width, m, step and tolerance must be positive".into(),
                    ));
                }
            }
            ExperimentKind::BifurcationTable => {
                if self.table.modes.is_empty() || self.table.radii.is_empty() {
                    return Err(Error::Config("table.modes and table.radii must not be empty".into()));
                }
                if self.table.modes.contains(&1) {
                    return Err(Error::Config("mode 1 has no bifurcation value".into()));
                }
                if self.table.radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                    return Err(Error::Config("table.radii must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn mu(&self) -> Result<f64> {
        match self.problem.mu {
            Some(mu) => Ok(mu),
            None => match self.experiment.kind {
                ExperimentKind::TrainFinger => Ok(FINGER_MU),
                _ => default_mu(self.experiment.mode.max(2)),
            },
        }
    }

    pub fn problem_params(&self) -> Result<ProblemParams> {
        let mu = self.mu()?;
        match self.problem.beta {
            Some(beta) => ProblemParams::new(mu, beta),
            None => ProblemParams::new(mu, beta_of(mu, self.problem.r_s)?),
        }
    }

    pub fn kernel_config(&self) -> Result<KernelConfig> {
        KernelConfig::new(self.kernel.tau, self.kernel.n_quad, self.kernel.guard)
    }

    /// Kernel settings for one entry of a `τ` sweep.
    pub fn residual_kernel(&self, tau: f64) -> Result<KernelConfig> {
        let want = (self.residual.nodes_per_inv_tau / tau).ceil();
        if !(want.is_finite() && want < 1e8) {
            return Err(Error::Config(format!("tau = {tau} needs too many quadrature nodes")));
        }
        let n = (want as usize).next_power_of_two().max(self.kernel.n_quad);
        KernelConfig::new(tau, n, self.kernel.guard)
    }

    pub fn schedule(&self) -> StepSchedule {
        let t = &self.train;
        match t.schedule {
            ScheduleKind::Constant => StepSchedule::Constant { alpha0: t.alpha0 },
            ScheduleKind::Harmonic => StepSchedule::Harmonic { alpha0: t.alpha0 },
            ScheduleKind::Geometric => match t.alpha_factor {
                Some(factor) => StepSchedule::Geometric { alpha0: t.alpha0, factor, floor: t.alpha_floor },
                None => StepSchedule::geometric_spanning(t.alpha0, t.alpha_floor, t.epochs),
            },
        }
    }

    pub fn init_spec(&self) -> InitSpec {
        let base = InitSpec::mode(self.experiment.mode, DEFAULT_A_STD);
        InitSpec {
            a: self.init.a.unwrap_or(base.a),
            b: self.init.b.unwrap_or(base.b),
            c: self.init.c.unwrap_or(base.c),
            d: self.init.d.unwrap_or(base.d),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        let config = TrainConfig {
            width: self.network.width,
            m: t.m,
            batches: t.batches,
            epochs: t.epochs,
            schedule: self.schedule(),
            seed: t.seed,
            init: self.init_spec(),
            guard_retries: t.guard_retries,
            eval_points: t.eval_points,
            checkpoint_every: t.checkpoint_every,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &[
    "table", "residual", "gradcheck", "mode2", "mode3", "mode4", "mode5", "harmonic2", "finger2", "finger4",
];

/// Named experiment setups.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::default();
    c.experiment.output_dir = PathBuf::from(format!("out/{name}"));
    match name {
        "table" => c.experiment.kind = ExperimentKind::BifurcationTable,
        "residual" => {
            c.experiment.kind = ExperimentKind::RadialResidual;
            c.problem.mu = Some(14.6);
        }
        "gradcheck" => {
            c.experiment.kind = ExperimentKind::Gradcheck;
            c.problem.mu = Some(14.6);
            c.kernel.tau = 1e-2;
            c.kernel.n_quad = 512;
        }
        "mode2" | "mode3" | "mode4" | "mode5" => {
            c.experiment.mode = name[4..].parse().expect("preset name ends in a digit");
        }
        "harmonic2" => {
            c.train.schedule = ScheduleKind::Harmonic;
            c.train.alpha0 = 1e-2;
        }
        "finger2" => {
            c.experiment.kind = ExperimentKind::TrainFinger;
            c.network.activation = Activation::Finger { p: crate::netparam::DEFAULT_FINGER_P };
            c.train.m = 10_000;
            c.train.batches = 100;
            c.train.epochs = 200;
            c.train.schedule = ScheduleKind::Geometric;
            c.train.alpha0 = 1e-3;
            c.train.alpha_floor = 1e-6;
            c.init.b = Some(InitDist::Constant { value: 1.0 });
            c.init.c = Some(InitDist::Normal { mean: 0.0, std: 0.1 });
        }
        "finger4" => {
            c.experiment.kind = ExperimentKind::TrainFinger;
            c.experiment.mode = 4;
            c.network.activation = Activation::Finger { p: crate::netparam::DEFAULT_FINGER_P };
            c.train.m = 10_000;
            c.train.batches = 100;
            c.train.epochs = 200;
            c.train.alpha0 = 1e-5;
            c.init.b = Some(InitDist::Constant { value: 2.0 });
            c.init.c = Some(InitDist::Constant { value: 0.0 });
            c.init.d = Some(InitDist::Uniform { lo: 0.9, hi: 1.1 });
        }
        _ => {
            return Err(Error::Config(format!(
                "unknown preset '{name}' (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    }
    c.validate()?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integral_op::{DEFAULT_N_QUAD, DEFAULT_TAU};

    #[test]
    fn empty_config_has_training_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.experiment.kind, ExperimentKind::TrainBifurcation);
        let t = c.train_config().unwrap();
        assert_eq!((t.width, t.m, t.batches, t.epochs), (20, 4000, 20, 50));
        assert_eq!(t.schedule, StepSchedule::Constant { alpha0: 1e-4 });
        assert_eq!(c.network.activation, Activation::Cosine);
        let kc = c.kernel_config().unwrap();
        assert_eq!((kc.tau, kc.n_quad), (DEFAULT_TAU, DEFAULT_N_QUAD));
        assert_eq!(c.mu().unwrap(), 14.6);
        assert_eq!(c.init_spec().b, InitDist::Constant { value: 2.0 });
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config("[train]\nmomentum = 0.9\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("momentum"), "{err}");
        let err = parse_config("[optimizer]\nlr = 1\n").unwrap_err();
        assert!(err.to_string().contains("optimizer"), "{err}");
    }

    #[test]
    fn error_reports_line() {
        let err = parse_config("[train]\nm = 4000\nepochs = \"many\"\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(parse_config("[train]\nbatches = 7\n").is_err());
        assert!(parse_config("[kernel]\ntau = 0.5\n").is_err());
        assert!(parse_config("[problem]\nmu = -1.0\n").is_err());
        assert!(parse_config("[init]\na = \"normal(0)\"\n").is_err());
        assert!(parse_config("[network]\nactivation = \"relu\"\n").is_err());
        assert!(parse_config("[experiment]\nkind = \"bifurcation_table\"\n[table]\nmodes = [1]\n").is_err());
    }

    #[test]
    fn round_trip_is_idempotent() {
        let text = "[experiment]\nkind = \"train_finger\"\nmode = 4\n[init]\nd = \"uniform(0.9, 1.1)\"\n\
                    [train]\nschedule = \"geometric\"\n[network]\nactivation = \"finger(0.3)\"\n";
        let c = parse_config(text).unwrap();
        let canon = c.to_toml();
        let again = parse_config(&canon).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_toml(), canon);
    }

    #[test]
    fn presets_are_valid_and_round_trip() {
        for name in PRESETS {
            let c = preset(name).unwrap();
            assert_eq!(parse_config(&c.to_toml()).unwrap(), c, "{name}");
        }
        assert!(preset("mode9").is_err());
    }

    #[test]
    fn finger_presets() {
        let f2 = preset("finger2").unwrap();
        assert_eq!(f2.mu().unwrap(), FINGER_MU);
        let t = f2.train_config().unwrap();
        assert_eq!((t.m, t.batches, t.epochs), (10_000, 100, 200));
        match t.schedule {
            StepSchedule::Geometric { alpha0, floor, .. } => {
                assert_eq!(alpha0, 1e-3);
                assert!((t.schedule.alpha(0, 199) - floor).abs() < 1e-18);
            }
            other => panic!("{other:?}"),
        }
        let f4 = preset("finger4").unwrap().train_config().unwrap();
        assert_eq!(f4.init.b, InitDist::Constant { value: 2.0 });
        assert_eq!(f4.init.c, InitDist::Constant { value: 0.0 });
    }

    #[test]
    fn residual_kernel_scales_with_tau() {
        let c = preset("residual").unwrap();
        assert_eq!(c.residual_kernel(1e-2).unwrap().n_quad, 4096);
        assert_eq!(c.residual_kernel(1e-3).unwrap().n_quad, 4096);
        assert_eq!(c.residual_kernel(3e-4).unwrap().n_quad, 16384);
    }

    #[test]
    fn explicit_beta_overrides_radial_value() {
        let c = parse_config("[problem]\nmu = 10.0\nbeta = 3.0\n").unwrap();
        assert_eq!(c.problem_params().unwrap(), ProblemParams::new(10.0, 3.0).unwrap());
        let d = parse_config("[problem]\nmu = 10.0\nr_s = 2.0\n").unwrap();
        assert_eq!(d.problem_params().unwrap().beta, beta_of(10.0, 2.0).unwrap());
        let e = parse_config("[experiment]\nmode = 7\n").unwrap();
        assert!((e.mu().unwrap() - (mu_n(7, 1.0).unwrap() - 0.15)).abs() < 1e-12);
    }
}
