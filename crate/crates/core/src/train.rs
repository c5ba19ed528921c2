//! Minibatch stochastic gradient descent on the boundary loss.
//!
//! Each epoch draws `m` fresh collocation angles and splits them into
//! `batches` consecutive minibatches; every minibatch is one parameter update.
//! Collocation angles and initial parameters come from ChaCha streams keyed by
//! the seed, so a run is fully determined by its configuration.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradients::{check_admissible, loss_and_grad, loss_value};
use crate::integral_op::{KernelConfig, ProblemParams};
use crate::netparam::{Activation, NetworkParams};

// Stream reserved for parameter initialization; epochs use streams 0, 1, ...
const INIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant { alpha0: f64 },
    /// `α_k = α0 / k` over accepted steps `k = 1, 2, ...`.
    Harmonic { alpha0: f64 },
    /// `α = max(α0 · factor^epoch, floor)`.
    Geometric { alpha0: f64, factor: f64, floor: f64 },
}

impl StepSchedule {
    /// Geometric decay from `alpha0` that reaches `floor` at the last epoch.
    pub fn geometric_spanning(alpha0: f64, floor: f64, epochs: usize) -> Self {
        let factor = if epochs > 1 { (floor / alpha0).powf(1.0 / (epochs - 1) as f64) } else { 1.0 };
        StepSchedule::Geometric { alpha0, factor, floor }
    }

    /// Step size for accepted step `k` (1-based) in `epoch` (0-based).
    pub fn alpha(&self, k: usize, epoch: usize) -> f64 {
        match *self {
            StepSchedule::Constant { alpha0 } => alpha0,
            StepSchedule::Harmonic { alpha0 } => alpha0 / k.max(1) as f64,
            StepSchedule::Geometric { alpha0, factor, floor } => {
                (alpha0 * factor.powi(epoch as i32)).max(floor)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Constant { alpha0 } | StepSchedule::Harmonic { alpha0 } => {
                alpha0.is_finite() && alpha0 >= 0.0
            }
            StepSchedule::Geometric { alpha0, factor, floor } => {
                alpha0.is_finite() && alpha0 >= 0.0 && factor > 0.0 && factor.is_finite() && floor >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid step schedule {self:?}")))
        }
    }
}

/// Distribution of one parameter block at initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InitDist {
    Constant { value: f64 },
    Normal { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl InitDist {
    fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            InitDist::Constant { value } => value.is_finite(),
            InitDist::Normal { mean, std } => mean.is_finite() && std.is_finite() && std >= 0.0,
            InitDist::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid initialization for {name}: {self:?}")))
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            InitDist::Constant { value } => value,
            InitDist::Normal { mean, std } => {
                Normal::new(mean, std).expect("validated normal parameters").sample(rng)
            }
            InitDist::Uniform { lo, hi } => rng.gen_range(lo..hi),
        }
    }
}

impl TryFrom<String> for InitDist {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<InitDist> for String {
    fn from(d: InitDist) -> String {
        d.to_string()
    }
}

impl fmt::Display for InitDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            InitDist::Constant { value } => write!(f, "constant({value})"),
            InitDist::Normal { mean, std } => write!(f, "normal({mean}, {std})"),
            InitDist::Uniform { lo, hi } => write!(f, "uniform({lo}, {hi})"),
        }
    }
}

/// Accepts `constant(v)`, `normal(mean, std)`, `standard_normal`,
/// `uniform(lo, hi)` or a bare number for a constant.
impl FromStr for InitDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "standard_normal" {
            return Ok(InitDist::Normal { mean: 0.0, std: 1.0 });
        }
        if let Ok(value) = s.parse::<f64>() {
            return Ok(InitDist::Constant { value });
        }
        let bad = || Error::Parse(format!("bad initialization '{s}'"));
        let open = s.find('(').ok_or_else(bad)?;
        let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let args = inner
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        let dist = match (&s[..open], args.as_slice()) {
            ("constant", &[value]) => InitDist::Constant { value },
            ("normal", &[mean, std]) => InitDist::Normal { mean, std },
            ("uniform", &[lo, hi]) => InitDist::Uniform { lo, hi },
            _ => return Err(bad()),
        };
        dist.validate("init")?;
        Ok(dist)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub a: InitDist,
    pub b: InitDist,
    pub c: InitDist,
    pub d: InitDist,
}

impl InitSpec {
    /// Small random amplitudes on a single mode `n` around the unit circle.
    pub fn mode(n: u32, a_std: f64) -> Self {
        InitSpec {
            a: InitDist::Normal { mean: 0.0, std: a_std },
            b: InitDist::Constant { value: n as f64 },
            c: InitDist::Constant { value: 0.0 },
            d: InitDist::Constant { value: 1.0 },
        }
    }

    fn validate(&self) -> Result<()> {
        self.a.validate("a")?;
        self.b.validate("b")?;
        self.c.validate("c")?;
        self.d.validate("d")
    }
}

pub const DEFAULT_A_STD: f64 = 0.01;

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::mode(2, DEFAULT_A_STD)
    }
}

/// Draw initial parameters: all `a`, then all `b`, all `c`, and `d`.
pub fn init_params(width: usize, init: &InitSpec, seed: u64) -> Result<NetworkParams> {
    init.validate()?;
    if width == 0 {
        return Err(Error::Config("network width must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    let a = (0..width).map(|_| init.a.draw(&mut rng)).collect();
    let b = (0..width).map(|_| init.b.draw(&mut rng)).collect();
    let c = (0..width).map(|_| init.c.draw(&mut rng)).collect();
    let d = init.d.draw(&mut rng);
    NetworkParams::new(a, b, c, d)
}

/// `m` i.i.d. uniform angles in `[0, 2π)` from stream `stream` of `seed`.
pub fn sample_collocation(m: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let dist = Uniform::new(0.0, TAU);
    (0..m).map(|_| dist.sample(&mut rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Hidden units `N`.
    pub width: usize,
    /// Collocation points per epoch.
    pub m: usize,
    pub batches: usize,
    pub epochs: usize,
    pub schedule: StepSchedule,
    pub seed: u64,
    pub init: InitSpec,
    pub guard_retries: u32,
    /// Size of the fixed uniform grid for the per-epoch full loss.
    pub eval_points: usize,
    /// Keep a checkpoint every this many epochs (0: final only).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            width: 20,
            m: 4000,
            batches: 20,
            epochs: 50,
            schedule: StepSchedule::Constant { alpha0: 1e-4 },
            seed: 0,
            init: InitSpec::default(),
            guard_retries: 8,
            eval_points: 256,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.m == 0 || self.batches == 0 || self.epochs == 0 || self.eval_points == 0 {
            return Err(Error::Config(
                "width, m, batches, epochs and eval_points must all be positive".into(),
            ));
        }
        if self.m % self.batches != 0 {
            return Err(Error::Config(format!(
                "batches ({}) must divide m ({})",
                self.batches, self.m
            )));
        }
        self.schedule.validate()?;
        self.init.validate()
    }

    pub fn batch_size(&self) -> usize {
        self.m / self.batches
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    /// Accepted-step index, starting at 1.
    pub step: usize,
    pub epoch: usize,
    pub batch_loss: f64,
    pub grad_norm: f64,
    /// Step size actually applied after any halving.
    pub alpha: f64,
    pub rejected: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    /// 0 is the initial state; epoch `e` is the state after `e` epochs.
    pub epoch: usize,
    pub full_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    pub checkpoints: Vec<(usize, NetworkParams)>,
    pub initial: NetworkParams,
    pub final_params: NetworkParams,
    /// Largest `|parameter|` seen at any step, including the start.
    pub max_abs_param: f64,
}

impl TrainingTrace {
    pub fn initial_loss(&self) -> f64 {
        self.epochs.first().map_or(f64::NAN, |e| e.full_loss)
    }

    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.full_loss)
    }
}

/// One update `X ← X - α ∇F`. If the updated curve is degenerate the step
/// size is halved and the update retried, at most `guard_retries` times.
#[allow(clippy::too_many_arguments)]
pub fn sgd_step(
    params: &NetworkParams,
    act: Activation,
    batch: &[f64],
    pp: &ProblemParams,
    kc: &KernelConfig,
    alpha: f64,
    guard_retries: u32,
    step: usize,
) -> Result<(NetworkParams, StepRecord)> {
    let eval = loss_and_grad(params, act, batch, pp, kc)?;
    if !eval.grad.is_finite() {
        return Err(Error::Unrecoverable { step, retries: 0 });
    }
    let mut a = alpha;
    let mut rejected = 0;
    loop {
        let next = params.axpy(-a, &eval.grad.entries);
        if next.is_finite() && check_admissible(&next, act, kc).is_ok() {
            let record = StepRecord {
                step,
                epoch: 0,
                batch_loss: eval.loss,
                grad_norm: eval.grad.norm(),
                alpha: a,
                rejected,
            };
            return Ok((next, record));
        }
        if rejected >= guard_retries {
            return Err(Error::Unrecoverable { step, retries: rejected });
        }
        rejected += 1;
        a *= 0.5;
    }
}

/// Uniform evaluation grid `2πj/K`.
pub fn eval_grid(points: usize) -> Vec<f64> {
    (0..points).map(|j| TAU * j as f64 / points as f64).collect()
}

pub fn train_from(
    initial: NetworkParams,
    config: &TrainConfig,
    act: Activation,
    pp: &ProblemParams,
    kc: &KernelConfig,
) -> Result<TrainingTrace> {
    config.validate()?;
    kc.validate()?;
    check_admissible(&initial, act, kc)?;
    let grid = eval_grid(config.eval_points);
    let mut params = initial.clone();
    let mut steps = Vec::with_capacity(config.epochs * config.batches);
    let mut epochs = Vec::with_capacity(config.epochs + 1);
    let mut checkpoints = Vec::new();
    let max_abs = |p: &NetworkParams| p.to_flat().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut max_abs_param = max_abs(&params);
    epochs.push(EpochRecord { epoch: 0, full_loss: loss_value(&params, act, &grid, pp, kc)? });

    let per_batch = config.batch_size();
    let mut k = 0;
    for epoch in 0..config.epochs {
        let points = sample_collocation(config.m, config.seed, epoch as u64);
        for batch in points.chunks_exact(per_batch) {
            k += 1;
            let alpha = config.schedule.alpha(k, epoch);
            let (next, mut record) =
                sgd_step(&params, act, batch, pp, kc, alpha, config.guard_retries, k)?;
            record.epoch = epoch;
            steps.push(record);
            params = next;
            max_abs_param = max_abs_param.max(max_abs(&params));
        }
        let done = epoch + 1;
        epochs.push(EpochRecord { epoch: done, full_loss: loss_value(&params, act, &grid, pp, kc)? });
        if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < config.epochs {
            checkpoints.push((done, params.clone()));
        }
    }
    checkpoints.push((config.epochs, params.clone()));
    Ok(TrainingTrace { steps, epochs, checkpoints, initial, final_params: params, max_abs_param })
}

pub fn train(
    config: &TrainConfig,
    act: Activation,
    pp: &ProblemParams,
    kc: &KernelConfig,
) -> Result<TrainingTrace> {
    config.validate()?;
    let initial = init_params(config.width, &config.init, config.seed)?;
    train_from(initial, config, act, pp, kc)
}

/// `Σα_k‖∇F_k‖² / Σα_k` over a slice of steps.
pub fn weighted_grad_average(steps: &[StepRecord]) -> f64 {
    let num: f64 = steps.iter().map(|s| s.alpha * s.grad_norm * s.grad_norm).sum();
    let den: f64 = steps.iter().map(|s| s.alpha).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::DEFAULT_GUARD;
    use approx::assert_relative_eq;

    fn kc(tau: f64, n: usize) -> KernelConfig {
        KernelConfig::new(tau, n, DEFAULT_GUARD).unwrap()
    }

    fn radial(mu: f64) -> ProblemParams {
        ProblemParams::with_radial_beta(mu, 1.0).unwrap()
    }

    #[test]
    fn collocation_is_reproducible() {
        let a = sample_collocation(1, 7, 0);
        assert_eq!(a, sample_collocation(1, 7, 0));
        assert!((0.0..TAU).contains(&a[0]));
        let x = sample_collocation(10, 1, 0);
        let y = sample_collocation(10, 2, 0);
        assert_ne!(x, y);
        assert_ne!(x, sample_collocation(10, 1, 1));
    }

    #[test]
    fn collocation_mean() {
        let pts = sample_collocation(100_000, 3, 0);
        let mean = pts.iter().sum::<f64>() / pts.len() as f64;
        assert!((mean - std::f64::consts::PI).abs() < 0.02);
        assert!(pts.iter().all(|t| (0.0..TAU).contains(t)));
    }

    #[test]
    fn schedules() {
        let h = StepSchedule::Harmonic { alpha0: 0.5 };
        assert_eq!(h.alpha(1, 0), 0.5);
        assert_eq!(h.alpha(4, 3), 0.125);
        let g = StepSchedule::geometric_spanning(1e-3, 1e-6, 200);
        assert_relative_eq!(g.alpha(0, 0), 1e-3);
        assert_relative_eq!(g.alpha(0, 199), 1e-6, max_relative = 1e-10);
        assert!(g.alpha(0, 100) < 1e-3 && g.alpha(0, 100) > 1e-6);
        if let StepSchedule::Geometric { factor, .. } = g {
            assert_relative_eq!(factor, (1e-3f64).powf(1.0 / 199.0), max_relative = 1e-14);
        }
        assert_eq!(StepSchedule::Constant { alpha0: 2.0 }.alpha(9, 9), 2.0);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(c.batch_size(), 200);
        c.batches = 7;
        assert!(c.validate().is_err());
        c = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(c.validate().is_err());
        c = TrainConfig { schedule: StepSchedule::Constant { alpha0: -1.0 }, ..TrainConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn init_dist_strings() {
        for text in ["constant(2)", "normal(0, 0.04)", "uniform(-1, 1)"] {
            let d: InitDist = text.parse().unwrap();
            assert_eq!(d.to_string().parse::<InitDist>().unwrap(), d);
        }
        assert_eq!("standard_normal".parse::<InitDist>().unwrap(), InitDist::Normal { mean: 0.0, std: 1.0 });
        assert_eq!("3".parse::<InitDist>().unwrap(), InitDist::Constant { value: 3.0 });
        for bad in ["normal(1)", "uniform(2, 1)", "gamma(1, 2)", "constant(x)", "normal(0, 1"] {
            assert!(bad.parse::<InitDist>().is_err(), "{bad}");
        }
    }

    #[test]
    fn init_is_seeded() {
        let spec = InitSpec::mode(3, 0.1);
        let p = init_params(5, &spec, 11).unwrap();
        assert_eq!(p, init_params(5, &spec, 11).unwrap());
        assert_ne!(p.a, init_params(5, &spec, 12).unwrap().a);
        assert!(p.b.iter().all(|&b| b == 3.0));
        assert_eq!(p.d, 1.0);
        let uni = InitSpec { c: InitDist::Uniform { lo: -1.0, hi: 1.0 }, ..spec };
        let q = init_params(50, &uni, 1).unwrap();
        assert!(q.c.iter().all(|c| (-1.0..1.0).contains(c)));
        let bad = InitSpec { a: InitDist::Normal { mean: 0.0, std: -1.0 }, ..spec };
        assert!(init_params(3, &bad, 0).is_err());
    }

    #[test]
    fn zero_step_leaves_params_unchanged() {
        let pp = radial(14.6);
        let k = kc(1e-2, 128);
        let p = init_params(3, &InitSpec::mode(2, 0.01), 1).unwrap();
        let (next, rec) = sgd_step(&p, Activation::Cosine, &[0.1, 0.2], &pp, &k, 0.0, 3, 1).unwrap();
        assert_eq!(next, p);
        assert_eq!(rec.alpha, 0.0);
        assert!(rec.grad_norm.is_finite());
    }

    #[test]
    fn small_step_descends() {
        let pp = radial(14.6);
        let k = kc(1e-2, 256);
        let p = NetworkParams::new(vec![0.05, 0.02], vec![2.0, 3.0], vec![0.0, 0.5], 1.05).unwrap();
        let batch = [0.3, 1.1, 2.0, 3.3, 4.4, 5.9];
        let before = loss_value(&p, Activation::Cosine, &batch, &pp, &k).unwrap();
        let (next, _) = sgd_step(&p, Activation::Cosine, &batch, &pp, &k, 1e-6, 3, 1).unwrap();
        let after = loss_value(&next, Activation::Cosine, &batch, &pp, &k).unwrap();
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn rejected_steps_halve_and_then_fail() {
        let pp = radial(14.6);
        let k = kc(1e-2, 128);
        let p = NetworkParams::new(vec![0.05], vec![2.0], vec![0.0], 1.05).unwrap();
        // a huge step leaves the admissible region every time
        let err = sgd_step(&p, Activation::Cosine, &[0.3], &pp, &k, 1e12, 2, 5).unwrap_err();
        assert!(matches!(err, Error::Unrecoverable { step: 5, retries: 2 }));
        // with enough retries the halving reaches an admissible step
        let (next, rec) = sgd_step(&p, Activation::Cosine, &[0.3], &pp, &k, 1e3, 60, 1).unwrap();
        assert!(rec.rejected > 0);
        assert!(rec.alpha < 1e3);
        assert!(next.is_finite());
    }

    #[test]
    fn single_zero_step_run() {
        let pp = radial(14.6);
        let k = kc(1e-2, 128);
        let config = TrainConfig {
            width: 3,
            m: 4,
            batches: 1,
            epochs: 1,
            schedule: StepSchedule::Constant { alpha0: 0.0 },
            eval_points: 8,
            ..TrainConfig::default()
        };
        let trace = train(&config, Activation::Cosine, &pp, &k).unwrap();
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.final_params, trace.initial);
        assert_eq!(trace.epochs.len(), 2);
        assert_eq!(trace.checkpoints.len(), 1);
    }

    #[test]
    fn short_runs_are_reproducible() {
        let pp = radial(14.6);
        let k = kc(1e-2, 128);
        let config = TrainConfig {
            width: 4,
            m: 8,
            batches: 2,
            epochs: 3,
            schedule: StepSchedule::Harmonic { alpha0: 1e-3 },
            seed: 42,
            eval_points: 16,
            checkpoint_every: 1,
            ..TrainConfig::default()
        };
        let a = train(&config, Activation::Cosine, &pp, &k).unwrap();
        let b = train(&config, Activation::Cosine, &pp, &k).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps.len(), 6);
        let idx: Vec<usize> = a.steps.iter().map(|s| s.step).collect();
        assert_eq!(idx, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(a.checkpoints.len(), 3);
        assert!(a.steps.iter().all(|s| s.grad_norm.is_finite()));
    }

    #[test]
    fn harmonic_steps_sum_diverges_but_squares_converge() {
        // Σ 1/k ≥ ln(K+1) grows without bound while Σ 1/k² ≤ π²/6
        let h = StepSchedule::Harmonic { alpha0: 1.0 };
        let k = 100_000;
        let (s1, s2) = (1..=k).fold((0.0, 0.0), |(a, b), i| {
            let x = h.alpha(i, 0);
            (a + x, b + x * x)
        });
        assert!(s1 >= ((k + 1) as f64).ln());
        assert!(s2 <= std::f64::consts::PI.powi(2) / 6.0);
    }
}
