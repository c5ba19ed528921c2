//! Experiment dispatch and artifact export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::bifurcation::{frechet_eigen, frechet_slope, mu_n};
use crate::error::Result;
use crate::gradients::{grad_loss, loss_value};
use crate::integral_op::{l_tau, ProblemParams};
use crate::netparam::{Activation, Checkpoint, NetworkCurve, NetworkParams};
use crate::train::{sample_collocation, train, weighted_grad_average, TrainingTrace};

use super::config::{ExperimentConfig, ExperimentKind};
use super::curvespec::CurveSpec;
use super::spectrum::{count_local_maxima, spectrum_of_samples, uniform_angles, ModeSpectrum, DOMINANCE_FACTOR};

/// Unit-radius bifurcation values the table is checked against.
pub const REFERENCE_MU: [(u32, f64); 4] = [(2, 14.7496), (3, 28.7234), (4, 47.1794), (5, 70.1169)];
pub const REFERENCE_TOL: f64 = 5e-4;
pub const CHAIN_MARGIN: f64 = 1e-6;
pub const ROOT_TOL: f64 = 1e-9;
pub const RESIDUAL_RATIO_SPREAD: f64 = 10.0;
pub const MEAN_RADIUS_RANGE: (f64, f64) = (0.8, 1.2);
pub const LOSS_REDUCTION: f64 = 0.1;
pub const SMOOTHING_WINDOW: usize = 10;
/// Bound on `max |param|` over a training run.
pub const PARAM_BOX: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check { name: name.to_string(), passed, detail }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub kind: ExperimentKind,
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Output { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("summary serializes");
        text.push('\n');
        self.write(name, &text)
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let mut out = Output::new(&config.experiment.output_dir)?;
    out.write("config.toml", &config.to_toml())?;
    let (summary, checks) = match config.experiment.kind {
        ExperimentKind::BifurcationTable => bifurcation_table(config, &mut out)?,
        ExperimentKind::RadialResidual => radial_residual(config, &mut out)?,
        ExperimentKind::Gradcheck => gradcheck(config, &mut out)?,
        ExperimentKind::TrainBifurcation | ExperimentKind::TrainFinger => training(config, &mut out)?,
    };
    let summary = json!({
        "kind": config.experiment.kind,
        "results": summary,
        "checks": checks,
    });
    out.json("summary.json", &summary)?;
    Ok(RunReport { kind: config.experiment.kind, checks, files: out.files, summary })
}

type Outcome = (serde_json::Value, Vec<Check>);

fn bifurcation_table(config: &ExperimentConfig, out: &mut Output) -> Result<Outcome> {
    let table = &config.table;
    let mut csv = String::from("n,r_s,mu_n,eigen_slope\n");
    let mut rows = Vec::new();
    for &r_s in &table.radii {
        for &n in &table.modes {
            let mu = mu_n(n, r_s)?;
            let slope = frechet_slope(n, r_s)?;
            writeln!(csv, "{n},{r_s:e},{mu:e},{slope:e}").unwrap();
            rows.push(json!({"n": n, "r_s": r_s, "mu_n": mu, "eigen_slope": slope}));
        }
    }
    out.write("bifurcation.csv", &csv)?;

    let mut checks = Vec::new();
    if table.radii.contains(&1.0) {
        let mut worst: f64 = 0.0;
        let mut compared = 0;
        for (n, want) in REFERENCE_MU {
            if table.modes.contains(&n) {
                worst = worst.max((mu_n(n, 1.0)? - want).abs());
                compared += 1;
            }
        }
        if compared > 0 {
            checks.push(Check::new(
                "reference_values",
                worst < REFERENCE_TOL,
                format!("max |mu_n - reference| = {worst:.2e} over {compared} modes (tol {REFERENCE_TOL:e})"),
            ));
        }
    }
    let mut sorted = table.modes.clone();
    sorted.sort_unstable();
    sorted.dedup();
    let mut min_gap = f64::INFINITY;
    let mut min_mu0 = f64::INFINITY;
    for &r_s in &table.radii {
        let mus = sorted.iter().map(|&n| mu_n(n, r_s)).collect::<Result<Vec<_>>>()?;
        if sorted.first() == Some(&0) {
            min_mu0 = min_mu0.min(mus[0]);
        }
        for w in mus.windows(2) {
            min_gap = min_gap.min(w[1] - w[0]);
        }
    }
    let chain_ok = min_gap > CHAIN_MARGIN && min_mu0 > 0.0;
    checks.push(Check::new(
        "monotone_chain",
        chain_ok,
        format!("min consecutive gap {min_gap:.3e}, min mu_0 {min_mu0:.4}"),
    ));
    let mut worst_root: f64 = 0.0;
    for &r_s in &table.radii {
        for &n in table.modes.iter().filter(|&&n| n >= 2) {
            worst_root = worst_root.max(frechet_eigen(n, mu_n(n, r_s)?, r_s)?.abs());
        }
    }
    checks.push(Check::new(
        "root_consistency",
        worst_root < ROOT_TOL,
        format!("max |lambda_n(mu_n)| = {worst_root:.2e}"),
    ));
    Ok((json!({ "rows": rows }), checks))
}

/// `τ|ln τ| + τ`.
pub fn residual_scale(tau: f64) -> f64 {
    tau * tau.ln().abs() + tau
}

fn radial_residual(config: &ExperimentConfig, out: &mut Output) -> Result<Outcome> {
    let spec: CurveSpec = config.residual.curve.parse()?;
    let curve = spec.load()?;
    let pp = config.problem_params()?;
    let mut csv = String::from("tau,n_quad,l_tau,ratio\n");
    let mut ratios = Vec::new();
    for &tau in &config.residual.taus {
        let kc = config.residual_kernel(tau)?;
        let l = l_tau(&curve, config.residual.theta_hat, &pp, &kc)?;
        let ratio = l.abs() / residual_scale(tau);
        writeln!(csv, "{tau:e},{},{l:e},{ratio:e}", kc.n_quad).unwrap();
        ratios.push(ratio);
    }
    out.write("residual.csv", &csv)?;
    let first = ratios[0];
    let spread = ratios.iter().map(|r| (r / first).max(first / r)).fold(1.0, f64::max);
    let checks = vec![Check::new(
        "ratio_bounded",
        spread.is_finite() && spread <= RESIDUAL_RATIO_SPREAD,
        format!("ratios {ratios:.3?}, max spread factor {spread:.3}"),
    )];
    Ok((json!({ "curve": spec.to_string(), "taus": config.residual.taus, "ratios": ratios }), checks))
}

/// Parameters for gradient checking: small amplitudes, frequencies near
/// integers (so the periodicity penalty is active), arbitrary phases.
pub fn gradcheck_params(width: usize, seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = (0..width).map(|_| rng.gen_range(-0.05..0.05)).collect();
    let b = (0..width).map(|_| rng.gen_range(1..5) as f64 + rng.gen_range(-0.1..0.1)).collect();
    let c = (0..width).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let d = 1.0 + rng.gen_range(-0.1..0.1);
    NetworkParams::new(a, b, c, d).expect("finite draws")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradcheckEntry {
    pub index: usize,
    pub analytic: f64,
    pub finite_diff: f64,
    pub rel_err: f64,
}

/// Relative error with the denominator floored at `1e-3 · max(1, ‖g‖∞)` so
/// that components at round-off level compare absolutely.
pub fn relative_error(analytic: f64, fd: f64, scale: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-3 * scale.max(1.0))
}

/// Compare `∇F` against central differences of `F` for every parameter.
pub fn gradcheck_entries(
    params: &NetworkParams,
    act: Activation,
    hats: &[f64],
    pp: &ProblemParams,
    kc: &crate::integral_op::KernelConfig,
    step: f64,
) -> Result<Vec<GradcheckEntry>> {
    let (_, g) = grad_loss(params, act, hats, pp, kc)?;
    let scale = g.entries.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    (0..params.len())
        .map(|i| {
            let mut up = params.clone();
            up.set(i, params.get(i) + step);
            let mut dn = params.clone();
            dn.set(i, params.get(i) - step);
            let fd = (loss_value(&up, act, hats, pp, kc)? - loss_value(&dn, act, hats, pp, kc)?) / (2.0 * step);
            let analytic = g.entries[i];
            Ok(GradcheckEntry { index: i, analytic, finite_diff: fd, rel_err: relative_error(analytic, fd, scale) })
        })
        .collect()
}

fn gradcheck(config: &ExperimentConfig, out: &mut Output) -> Result<Outcome> {
    let g = &config.gradcheck;
    let pp = config.problem_params()?;
    let kc = config.kernel_config()?;
    let act = config.network.activation;
    let mut csv = String::from("seed,index,analytic,finite_diff,rel_err\n");
    let mut worst: f64 = 0.0;
    for seed in 0..g.seeds {
        let params = gradcheck_params(g.width, seed);
        let hats = sample_collocation(g.m, seed, 0);
        for e in gradcheck_entries(&params, act, &hats, &pp, &kc, g.step)? {
            writeln!(csv, "{seed},{},{:e},{:e},{:e}", e.index, e.analytic, e.finite_diff, e.rel_err).unwrap();
            worst = worst.max(e.rel_err);
        }
    }
    out.write("gradcheck.csv", &csv)?;
    let checks = vec![Check::new(
        "gradient_matches_finite_differences",
        worst < g.tolerance,
        format!("max relative error {worst:.3e} (tol {:e})", g.tolerance),
    )];
    Ok((json!({ "max_rel_err": worst, "seeds": g.seeds }), checks))
}

/// Trailing moving average with window `w` (entries `w-1..`).
pub fn moving_average(xs: &[f64], w: usize) -> Vec<f64> {
    if w == 0 || xs.len() < w {
        return Vec::new();
    }
    xs.windows(w).map(|s| s.iter().sum::<f64>() / w as f64).collect()
}

/// Whether the window-`w` moving average of `losses` never increases over the
/// final half of the sequence.
pub fn smoothed_tail_is_monotone(losses: &[f64], w: usize) -> bool {
    let smooth = moving_average(losses, w);
    // smooth[j] ends at losses[j + w - 1]
    let half = losses.len() / 2;
    let start = half.saturating_sub(w - 1);
    smooth.get(start..).is_some_and(|tail| tail.windows(2).all(|p| p[1] <= p[0]))
}

pub fn trace_csv(trace: &TrainingTrace) -> String {
    let mut s = String::from("step,epoch,batch_loss,grad_norm,alpha\n");
    for r in &trace.steps {
        writeln!(s, "{},{},{:e},{:e},{:e}", r.step, r.epoch, r.batch_loss, r.grad_norm, r.alpha).unwrap();
    }
    s
}

pub fn epochs_csv(trace: &TrainingTrace) -> String {
    let mut s = String::from("epoch,full_loss\n");
    for e in &trace.epochs {
        writeln!(s, "{},{:e}", e.epoch, e.full_loss).unwrap();
    }
    s
}

pub fn boundary_csv(samples: &[(f64, f64)]) -> String {
    let mut s = String::from("theta,rho\n");
    for (t, r) in samples {
        writeln!(s, "{t:e},{r:e}").unwrap();
    }
    s
}

const GNUPLOT: &str = "set terminal pngcairo size 1200,500\n\
set output 'plots.png'\n\
set datafile separator ','\n\
set multiplot layout 1,2\n\
set size ratio -1\n\
plot 'boundary.csv' skip 1 using ($2*cos($1)):($2*sin($1)) with lines title 'boundary'\n\
set size noratio\n\
set logscale y\n\
plot 'epochs.csv' skip 1 using 1:2 with linespoints title 'full-grid loss'\n\
unset multiplot\n";

fn training(config: &ExperimentConfig, out: &mut Output) -> Result<Outcome> {
    let pp = config.problem_params()?;
    let kc = config.kernel_config()?;
    let act = config.network.activation;
    let tc = config.train_config()?;
    let trace = train(&tc, act, &pp, &kc)?;

    out.write("trace.csv", &trace_csv(&trace))?;
    out.write("epochs.csv", &epochs_csv(&trace))?;
    out.write("checkpoint_init.json", &Checkpoint::new(&trace.initial, act).to_json())?;
    for (epoch, params) in &trace.checkpoints {
        let name = if *epoch == tc.epochs {
            "checkpoint_final.json".to_string()
        } else {
            format!("checkpoint_epoch_{epoch:04}.json")
        };
        out.write(&name, &Checkpoint::new(params, act).to_json())?;
    }

    let curve = NetworkCurve::new(&trace.final_params, act);
    let samples: Vec<(f64, f64)> = uniform_angles(config.output.boundary_samples)
        .into_iter()
        .map(|t| (t, crate::curve::CurveEvaluator::eval(&curve, t).r))
        .collect();
    let rho: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let spectrum: ModeSpectrum = spectrum_of_samples(&rho, config.output.spectrum_modes);
    out.write("boundary.csv", &boundary_csv(&samples))?;
    out.write("spectrum.csv", &spectrum.to_csv())?;
    if config.output.gnuplot {
        out.write("plot.gp", GNUPLOT)?;
    }

    let n = config.experiment.mode as usize;
    let dominant = spectrum.dominant_mode();
    let lobes = count_local_maxima(&rho);
    let (initial, fin) = (trace.initial_loss(), trace.final_loss());
    let third = trace.steps.len() / 3;
    let (early, late) = if third > 0 {
        (
            weighted_grad_average(&trace.steps[..third]),
            weighted_grad_average(&trace.steps[trace.steps.len() - third..]),
        )
    } else {
        (f64::NAN, f64::NAN)
    };
    let max_abs_param = trace.max_abs_param;
    let losses: Vec<f64> = trace.epochs.iter().map(|e| e.full_loss).collect();
    let summary = json!({
        "mu": pp.mu,
        "beta": pp.beta,
        "initial_loss": initial,
        "final_loss": fin,
        "loss_ratio": fin / initial,
        "dominant_mode": dominant,
        "dominance_ratio": spectrum.dominance_ratio(n.min(spectrum.max_mode()).max(1)),
        "mean_radius": spectrum.mean_radius(),
        "local_maxima": lobes,
        "amplitudes": spectrum.amplitudes,
        "steps": trace.steps.len(),
        "rejected_steps": trace.steps.iter().map(|s| s.rejected as u64).sum::<u64>(),
        "weighted_grad_first_third": early,
        "weighted_grad_last_third": late,
        "max_abs_param": max_abs_param,
    });

    let mut checks = Vec::new();
    let finite = trace.steps.iter().all(|s| s.grad_norm.is_finite()) && trace.final_params.is_finite();
    checks.push(Check::new(
        "finite_trace",
        finite && max_abs_param < PARAM_BOX,
        format!("max |param| {max_abs_param:.3e} (box {PARAM_BOX:e})"),
    ));
    match config.experiment.kind {
        ExperimentKind::TrainBifurcation => {
            checks.push(Check::new(
                "dominant_mode",
                spectrum.dominates(n, DOMINANCE_FACTOR),
                format!(
                    "dominant mode {dominant}, amplitude[{n}] / next = {:.3e}",
                    spectrum.dominance_ratio(n.min(spectrum.max_mode()).max(1))
                ),
            ));
            let mean = spectrum.mean_radius();
            checks.push(Check::new(
                "mean_radius",
                (MEAN_RADIUS_RANGE.0..=MEAN_RADIUS_RANGE.1).contains(&mean),
                format!("mean radius {mean:.4}"),
            ));
            checks.push(Check::new(
                "loss_reduction",
                fin <= LOSS_REDUCTION * initial,
                format!("final/initial loss = {fin:.3e}/{initial:.3e} = {:.3e}", fin / initial),
            ));
            if matches!(tc.schedule, crate::train::StepSchedule::Harmonic { .. }) {
                checks.push(Check::new(
                    "weighted_gradient_decreases",
                    late < early,
                    format!("last third {late:.3e} vs first third {early:.3e}"),
                ));
            }
        }
        _ => {
            checks.push(Check::new(
                "lobe_count",
                lobes == n,
                format!("{lobes} local maxima, expected {n}"),
            ));
            checks.push(Check::new(
                "smoothed_loss_monotone",
                smoothed_tail_is_monotone(&losses, SMOOTHING_WINDOW),
                format!("window {SMOOTHING_WINDOW} over the final half of {} epochs", tc.epochs),
            ));
        }
    }
    Ok((summary, checks))
}

/// Exit status for a finished or failed run.
pub fn exit_code(result: &Result<RunReport>, check: bool) -> i32 {
    match result {
        Ok(report) if check && !report.passed() => 1,
        Ok(_) => 0,
        Err(e) if e.is_degeneracy() => 3,
        Err(_) => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::harness::config::preset;

    #[test]
    fn table_run_writes_csv_and_passes() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = preset("table").unwrap();
        c.experiment.output_dir = dir.path().to_path_buf();
        let report = run_experiment(&c).unwrap();
        assert!(report.passed(), "{:?}", report.checks);
        let csv = fs::read_to_string(dir.path().join("bifurcation.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 8 * 4);
        assert!(dir.path().join("summary.json").exists());
        assert_eq!(exit_code(&Ok(report), true), 0);
    }

    #[test]
    fn residual_run_on_coarse_sweep() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = preset("residual").unwrap();
        c.experiment.output_dir = dir.path().to_path_buf();
        c.residual.taus = vec![1e-2, 3e-3];
        c.kernel.n_quad = 1024;
        let report = run_experiment(&c).unwrap();
        assert!(report.passed(), "{:?}", report.checks);
        let csv = fs::read_to_string(dir.path().join("residual.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn gradcheck_run_small() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = preset("gradcheck").unwrap();
        c.experiment.output_dir = dir.path().to_path_buf();
        c.gradcheck.seeds = 2;
        c.gradcheck.width = 2;
        c.kernel.n_quad = 128;
        let report = run_experiment(&c).unwrap();
        assert!(report.passed(), "{:?}", report.checks);
    }

    #[test]
    fn tiny_training_run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = preset("mode2").unwrap();
        c.experiment.output_dir = dir.path().to_path_buf();
        c.network.width = 3;
        c.train.m = 8;
        c.train.batches = 2;
        c.train.epochs = 2;
        c.train.eval_points = 16;
        c.train.checkpoint_every = 1;
        c.kernel.tau = 1e-2;
        c.kernel.n_quad = 128;
        c.output.boundary_samples = 64;
        c.output.gnuplot = true;
        let report = run_experiment(&c).unwrap();
        for f in ["trace.csv", "epochs.csv", "boundary.csv", "spectrum.csv", "summary.json", "plot.gp",
                  "checkpoint_init.json", "checkpoint_epoch_0001.json", "checkpoint_final.json", "config.toml"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
        assert_eq!(trace.lines().next(), Some("step,epoch,batch_loss,grad_norm,alpha"));
        assert_eq!(trace.lines().count(), 5);
        let boundary = fs::read_to_string(dir.path().join("boundary.csv")).unwrap();
        let thetas: Vec<f64> = boundary.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert_eq!(thetas.len(), 64);
        assert!(thetas.windows(2).all(|w| w[1] > w[0]));
        assert!(thetas[0] == 0.0 && *thetas.last().unwrap() < std::f64::consts::TAU);
        let ck = Checkpoint::from_json(&fs::read_to_string(dir.path().join("checkpoint_final.json")).unwrap()).unwrap();
        assert_eq!(ck.params().unwrap().width(), 3);
        let names: Vec<&str> = report.checks.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["finite_trace", "dominant_mode", "mean_radius", "loss_reduction"]);
    }

    #[test]
    fn identical_runs_write_identical_bytes() {
        let run = |dir: &Path| {
            let mut c = preset("mode3").unwrap();
            c.experiment.output_dir = dir.to_path_buf();
            c.network.width = 2;
            c.train.m = 6;
            c.train.batches = 3;
            c.train.epochs = 2;
            c.train.eval_points = 8;
            c.kernel.tau = 1e-2;
            c.kernel.n_quad = 128;
            run_experiment(&c).unwrap();
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run(a.path());
        run(b.path());
        for f in ["trace.csv", "epochs.csv", "boundary.csv", "spectrum.csv", "summary.json"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn moving_average_and_monotone_tail() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0, 4.0], 2), vec![1.5, 2.5, 3.5]);
        assert!(moving_average(&[1.0], 2).is_empty());
        let decreasing: Vec<f64> = (0..40).map(|i| 1.0 / (1.0 + i as f64)).collect();
        assert!(smoothed_tail_is_monotone(&decreasing, 10));
        let mut bump = decreasing.clone();
        bump[35] = 1.0;
        assert!(!smoothed_tail_is_monotone(&bump, 10));
        // a blip early on does not matter
        let mut early = decreasing;
        early[3] = 5.0;
        assert!(smoothed_tail_is_monotone(&early, 10));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0, 1.0) - 0.5).abs() < 1e-15);
        // tiny components are compared against the floor
        assert!(relative_error(1e-12, 2e-12, 1.0) < 1e-8);
    }

    #[test]
    fn exit_codes() {
        let degenerate: Result<RunReport> = Err(Error::DegenerateCurve { theta: 0.0, reason: "x".into() });
        assert_eq!(exit_code(&degenerate, false), 3);
        let bad: Result<RunReport> = Err(Error::Config("x".into()));
        assert_eq!(exit_code(&bad, true), 2);
        let failing = RunReport {
            kind: ExperimentKind::Gradcheck,
            checks: vec![Check::new("x", false, String::new())],
            files: vec![],
            summary: json!({}),
        };
        assert_eq!(exit_code(&Ok(failing.clone()), false), 0);
        assert_eq!(exit_code(&Ok(failing), true), 1);
    }
}
