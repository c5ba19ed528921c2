use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use helewave_core::bifurcation::{frechet_slope, mu_n};
use helewave_core::harness::config::{ExperimentKind, ScheduleKind};
use helewave_core::harness::run::{gradcheck_entries, gradcheck_params, residual_scale};
use helewave_core::harness::{exit_code, parse_config, preset, run_experiment, CurveSpec, ExperimentConfig, RunReport};
use helewave_core::integral_op::{l_tau_split, KernelConfig, ProblemParams};
use helewave_core::netparam::Activation;
use helewave_core::specfun;
use helewave_core::train::{sample_collocation, InitDist};
use helewave_core::{Error, Result};

#[derive(Parser)]
#[command(name = "helewave", version, about = "Free-boundary steady states via a boundary-integral loss")]
struct Cli {
    /// Worker threads for batch evaluation (results do not depend on it).
    #[arg(long, global = true, env = "HELEWAVE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print bifurcation values mu_n(R_S).
    Bifurcation(BifurcationArgs),
    /// Evaluate the regularized residual at one or more tau.
    Residual(ResidualArgs),
    /// Compare the analytic loss gradient with central differences.
    Gradcheck(GradcheckArgs),
    /// Train a network boundary.
    Train(Box<TrainArgs>),
    /// Run an experiment from a config file or preset.
    Run(RunArgs),
    /// Tabulate kernels and Bessel functions.
    SpecfunTable(SpecfunArgs),
}

#[derive(Args)]
struct BifurcationArgs {
    #[arg(long = "r-s", value_delimiter = ',', default_value = "1")]
    radii: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
    modes: Vec<u32>,
    /// Also write artifacts to this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fail (exit 1) unless the table checks pass.
    #[arg(long)]
    check: bool,
}

#[derive(Args, Clone)]
struct ProblemArgs {
    #[arg(long, default_value_t = 14.6)]
    mu: f64,
    /// Flux constant; when omitted it is matched to the radial state of radius R_S.
    #[arg(long, conflicts_with = "beta_auto")]
    beta: Option<f64>,
    /// Match beta to the radial state (the default).
    #[arg(long)]
    beta_auto: bool,
    #[arg(long = "r-s", default_value_t = 1.0)]
    r_s: f64,
}

impl ProblemArgs {
    fn params(&self) -> Result<ProblemParams> {
        match self.beta {
            Some(beta) => ProblemParams::new(self.mu, beta),
            None => ProblemParams::with_radial_beta(self.mu, self.r_s),
        }
    }
}

#[derive(Args)]
struct ResidualArgs {
    /// circle:R, cosine:R,eps,n or checkpoint:path
    #[arg(long, default_value = "circle:1")]
    curve: String,
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_delimiter = ',', default_value = "1e-3")]
    tau: Vec<f64>,
    /// Quadrature nodes; defaults to the next power of two above 4/tau (at least 4096).
    #[arg(long)]
    n_quad: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    theta_hat: f64,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 4)]
    width: usize,
    #[arg(long, default_value_t = 8)]
    m: usize,
    #[arg(long, default_value_t = 1e-2)]
    tau: f64,
    #[arg(long, default_value_t = 512)]
    n_quad: usize,
    #[arg(long, default_value_t = 1e-6)]
    step: f64,
    #[arg(long, default_value = "cosine")]
    activation: Activation,
    #[command(flatten)]
    problem: ProblemArgs,
    /// Exit 1 when any relative error exceeds this.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// Start from a named preset (see `run --list`).
    #[arg(long)]
    preset: Option<String>,
    /// bifurcation (mode-n shape) or finger (lobe count).
    #[arg(long, value_parser = ["bifurcation", "finger"])]
    kind: Option<String>,
    /// Target Fourier mode or lobe count; sets b = mode unless --init-b is given.
    #[arg(long)]
    mode: Option<u32>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, conflicts_with = "beta_auto")]
    beta: Option<f64>,
    #[arg(long)]
    beta_auto: bool,
    #[arg(long = "r-s")]
    r_s: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    n_quad: Option<usize>,
    #[arg(long)]
    guard: Option<f64>,
    #[arg(long)]
    activation: Option<Activation>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    batches: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["constant", "harmonic", "geometric"])]
    schedule: Option<String>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    alpha_floor: Option<f64>,
    #[arg(long)]
    alpha_factor: Option<f64>,
    #[arg(long)]
    guard_retries: Option<u32>,
    #[arg(long)]
    eval_points: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// e.g. "normal(0, 0.04)", "constant(2)", "uniform(0.9, 1.1)"
    #[arg(long)]
    init_a: Option<InitDist>,
    #[arg(long)]
    init_b: Option<InitDist>,
    #[arg(long)]
    init_c: Option<InitDist>,
    #[arg(long)]
    init_d: Option<InitDist>,
    #[arg(long, default_value = "out/train")]
    out: PathBuf,
    #[arg(long)]
    gnuplot: bool,
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(required_unless_present_any = ["preset", "list"], conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the preset names and exit.
    #[arg(long)]
    list: bool,
    /// Print the resolved config instead of running it.
    #[arg(long)]
    dump: bool,
    #[arg(long)]
    gnuplot: bool,
    /// Exit 1 unless every acceptance check passes.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct SpecfunArgs {
    #[arg(long, default_value_t = 0.1)]
    from: f64,
    #[arg(long, default_value_t = 10.0)]
    to: f64,
    #[arg(long, default_value_t = 50)]
    points: usize,
    /// Extra orders n for I_n columns.
    #[arg(long, value_delimiter = ',')]
    orders: Vec<u32>,
}

fn print_report(report: &RunReport) {
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for f in &report.files {
        eprintln!("wrote {}", f.display());
    }
}

fn finish(result: Result<RunReport>, check: bool) -> i32 {
    match &result {
        Ok(report) => print_report(report),
        Err(e) => eprintln!("error: {e}"),
    }
    exit_code(&result, check)
}

fn bifurcation(args: BifurcationArgs) -> Result<i32> {
    println!("n,r_s,mu_n,eigen_slope");
    for &r_s in &args.radii {
        for &n in &args.modes {
            println!("{n},{r_s},{:.10},{:.10}", mu_n(n, r_s)?, frechet_slope(n, r_s)?);
        }
    }
    if args.out.is_none() && !args.check {
        return Ok(0);
    }
    let mut config = preset("table")?;
    config.table.radii = args.radii;
    config.table.modes = args.modes;
    config.experiment.output_dir = args.out.unwrap_or_else(|| std::env::temp_dir().join("helewave-table"));
    Ok(finish(run_experiment(&config), args.check))
}

fn residual(args: ResidualArgs) -> Result<i32> {
    let spec: CurveSpec = args.curve.parse()?;
    let curve = spec.load()?;
    let pp = args.problem.params()?;
    println!("tau,n_quad,l_tau,h,g,w,ratio");
    for &tau in &args.tau {
        let n_quad = match args.n_quad {
            Some(n) => n,
            None => ((4.0 / tau).ceil() as usize).next_power_of_two().max(4096),
        };
        let kc = KernelConfig::new(tau, n_quad, helewave_core::curve::DEFAULT_GUARD)?;
        let s = l_tau_split(&curve, args.theta_hat, &pp, &kc)?;
        let l = s.total();
        println!("{tau:e},{n_quad},{l:e},{:e},{:e},{:e},{:e}", s.h, s.g, s.w, l.abs() / residual_scale(tau));
    }
    Ok(0)
}

fn gradcheck(args: GradcheckArgs) -> Result<i32> {
    let pp = args.problem.params()?;
    let kc = KernelConfig::new(args.tau, args.n_quad, helewave_core::curve::DEFAULT_GUARD)?;
    let mut worst: f64 = 0.0;
    println!("seed,index,analytic,finite_diff,rel_err");
    for seed in 0..args.seeds {
        let params = gradcheck_params(args.width, seed);
        let hats = sample_collocation(args.m, seed, 0);
        for e in gradcheck_entries(&params, args.activation, &hats, &pp, &kc, args.step)? {
            println!("{seed},{},{:e},{:e},{:e}", e.index, e.analytic, e.finite_diff, e.rel_err);
            worst = worst.max(e.rel_err);
        }
    }
    let ok = worst <= args.tolerance;
    eprintln!("{} max relative error {worst:.3e} (tolerance {:e})", if ok { "PASS" } else { "FAIL" }, args.tolerance);
    Ok(if ok { 0 } else { 1 })
}

fn train_config(args: &TrainArgs) -> Result<ExperimentConfig> {
    let mut c = match &args.preset {
        Some(name) => preset(name)?,
        None => ExperimentConfig::default(),
    };
    if let Some(kind) = &args.kind {
        c.experiment.kind = if kind == "finger" { ExperimentKind::TrainFinger } else { ExperimentKind::TrainBifurcation };
    }
    macro_rules! set {
        ($($field:ident => $target:expr),* $(,)?) => {
            $(if let Some(v) = args.$field.clone() { $target = v; })*
        };
    }
    set!(
        mode => c.experiment.mode,
        r_s => c.problem.r_s,
        tau => c.kernel.tau,
        n_quad => c.kernel.n_quad,
        guard => c.kernel.guard,
        activation => c.network.activation,
        width => c.network.width,
        m => c.train.m,
        batches => c.train.batches,
        epochs => c.train.epochs,
        seed => c.train.seed,
        alpha0 => c.train.alpha0,
        alpha_floor => c.train.alpha_floor,
        guard_retries => c.train.guard_retries,
        eval_points => c.train.eval_points,
        checkpoint_every => c.train.checkpoint_every,
    );
    if args.mu.is_some() {
        c.problem.mu = args.mu;
    }
    if args.beta.is_some() || args.beta_auto {
        c.problem.beta = args.beta;
    }
    if args.alpha_factor.is_some() {
        c.train.alpha_factor = args.alpha_factor;
    }
    if let Some(s) = &args.schedule {
        c.train.schedule = match s.as_str() {
            "harmonic" => ScheduleKind::Harmonic,
            "geometric" => ScheduleKind::Geometric,
            _ => ScheduleKind::Constant,
        };
    }
    for (dst, src) in [
        (&mut c.init.a, args.init_a),
        (&mut c.init.b, args.init_b),
        (&mut c.init.c, args.init_c),
        (&mut c.init.d, args.init_d),
    ] {
        if src.is_some() {
            *dst = src;
        }
    }
    c.experiment.output_dir = args.out.clone();
    c.output.gnuplot |= args.gnuplot;
    c.validate()?;
    Ok(c)
}

fn run(args: RunArgs) -> Result<i32> {
    if args.list {
        for name in helewave_core::harness::PRESETS {
            println!("{name}");
        }
        return Ok(0);
    }
    let mut config = match (&args.config, &args.preset) {
        (Some(path), _) => parse_config(&std::fs::read_to_string(path)?)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => unreachable!("clap requires a config or preset"),
    };
    if let Some(out) = args.out {
        config.experiment.output_dir = out;
    }
    config.output.gnuplot |= args.gnuplot;
    if args.dump {
        print!("{}", config.to_toml());
        return Ok(0);
    }
    Ok(finish(run_experiment(&config), args.check))
}

fn specfun_table(args: SpecfunArgs) -> Result<i32> {
    if args.points < 2 || !(args.from > 0.0 && args.to > args.from) {
        return Err(Error::Config("need 0 < from < to and at least 2 points".into()));
    }
    print!("r,I0,I1,K0,K1,G1,G1_prime,Q,Q_prime");
    for n in &args.orders {
        print!(",I{n}");
    }
    println!();
    for j in 0..args.points {
        let r = args.from + (args.to - args.from) * j as f64 / (args.points - 1) as f64;
        let k = specfun::kernels(r)?;
        print!(
            "{r:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            specfun::bessel_i(0, r)?,
            specfun::bessel_i(1, r)?,
            specfun::bessel_k(0, r)?,
            specfun::bessel_k(1, r)?,
            k.g1,
            k.g1_prime,
            k.q,
            k.q_prime
        );
        for &n in &args.orders {
            print!(",{:e}", specfun::bessel_i(n, r)?);
        }
        println!();
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Bifurcation(a) => bifurcation(a),
        Command::Residual(a) => residual(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Train(a) => {
            let check = a.check;
            train_config(&a).map(|c| finish(run_experiment(&c), check))
        }
        Command::Run(a) => run(a),
        Command::SpecfunTable(a) => specfun_table(a),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_degeneracy() {
                3
            } else {
                2
            }
        }
    };
    ExitCode::from(code as u8)
}
