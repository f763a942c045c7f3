use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use cobp_core::bounds::{error_bound_gaussian, error_bound_subgaussian, min_measurements_sparse, BoundConstants};
use cobp_core::experiments::{persist, run_experiment, ExperimentSpec, Method, Preset, Scale};
use cobp_core::linalg::norm_inf;
use cobp_core::models::{atomic_norm, width_estimate, AtomicModel};
use cobp_core::sensing::{consistency_residual, Instance, QuantizerConfig};
use cobp_core::solvers::{
    bpdn, bpdq, cobp, cobp_lambda, epsilon_bpdn, epsilon_bpdq4, DEFAULT_KAPPA, DEFAULT_KAPPA4,
};
use cobp_core::{QcsError, SolverConfig};

/// Environment variable naming the root for run directories when `--out` is absent.
const OUT_ROOT_VAR: &str = "QCS_OUT_ROOT";
/// Share of failed trials above which an experiment exits with status 3.
const MAX_FAILURE_FRACTION: f64 = 0.10;

const EXPERIMENT_HELP: &str = "\
Preset defaults (paper scale / desk scale):
  sparse-gaussian        N=2048 K=16 / N=512 K=8, B=3, M/K in {8,16,32,64,128},
                         trials 20 / 10, methods bpdn, bpdq4, cobp
  bernoulli-vs-gaussian  N=1024 K in {1,...,64} / N=256 K in {1,...,16}, B=4, M/K=16,
                         trials 20, methods cobp, cobp-lambda, Gaussian and Bernoulli
  lowrank                rank-1, n=32 P=64 / n=16 P=32, B=2, M/P in {4,8,16,32},
                         trials 20 / 10, methods bpdn, cobp

Writes trials.csv, summary.json and curves.csv. Without --out, a new
directory is created under $QCS_OUT_ROOT (default ./runs).";

#[derive(Parser, Debug)]
#[command(name = "qcs", version, about = "Quantized compressed sensing: consistent basis pursuit experiments and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a reconstruction-error experiment and persist its results.
    #[command(after_help = EXPERIMENT_HELP)]
    Experiment(ExperimentArgs),
    /// Reconstruct a signal from a serialized instance file.
    Solve(SolveArgs),
    /// Tabulate the error and sample-complexity bounds.
    Bounds(BoundsArgs),
    /// Monte Carlo estimate of the Gaussian mean width of a unit atomic ball.
    Width(WidthArgs),
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// Iteration cap of the primal-dual solver.
    #[arg(long, default_value_t = SolverConfig::default().max_iters)]
    max_iters: usize,
    /// Relative constraint violation accepted at convergence.
    #[arg(long, default_value_t = SolverConfig::default().tol_feas)]
    tol_feas: f64,
    /// Relative iterate change accepted at convergence.
    #[arg(long, default_value_t = SolverConfig::default().tol_rel_change)]
    tol_rel_change: f64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            max_iters: self.max_iters,
            tol_feas: self.tol_feas,
            tol_rel_change: self.tol_rel_change,
            ..SolverConfig::default()
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum PresetArg {
    SparseGaussian,
    BernoulliVsGaussian,
    Lowrank,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::SparseGaussian => Preset::SparseGaussian,
            PresetArg::BernoulliVsGaussian => Preset::BernoulliVsGaussian,
            PresetArg::Lowrank => Preset::LowRankGaussian,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ScaleArg {
    Paper,
    Desk,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Paper => Scale::Paper,
            ScaleArg::Desk => Scale::Desk,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MethodArg {
    Cobp,
    CobpLambda,
    Bpdn,
    Bpdq4,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Cobp => Method::Cobp,
            MethodArg::CobpLambda => Method::CobpLambda,
            MethodArg::Bpdn => Method::Bpdn,
            MethodArg::Bpdq4 => Method::Bpdq4,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModelArg {
    Sparse,
    Lowrank,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long, value_enum)]
    preset: PresetArg,
    #[arg(long, value_enum, default_value = "paper")]
    scale: ScaleArg,
    /// Master seed; every trial seed is derived from it.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every available core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Override the preset's number of trials per grid value.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the preset's grid (comma separated, ascending).
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Override the preset's methods (comma separated).
    #[arg(long, value_enum, value_delimiter = ',')]
    methods: Option<Vec<MethodArg>>,
    /// Override the quantizer resolution in bits (1 to 4).
    #[arg(long)]
    bits: Option<u32>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Instance file in the qcs-instance v1 text format.
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Bound on ‖u‖_∞ for cobp-lambda.
    #[arg(long)]
    lambda: Option<f64>,
    /// Signal model: l1 norm for sparse vectors, nuclear norm for square matrices.
    #[arg(long, value_enum, default_value = "sparse")]
    model: ModelArg,
    /// BPDN radius slack.
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,
    /// BPDQ radius slack.
    #[arg(long, default_value_t = DEFAULT_KAPPA4)]
    kappa4: f64,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    /// Numbers of measurements (comma separated).
    #[arg(long = "M", value_delimiter = ',', required = true)]
    m: Vec<f64>,
    /// Quantizer resolutions (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    delta: Vec<f64>,
    /// Gaussian mean width of the signal set.
    #[arg(long)]
    w: f64,
    /// Also report the sub-Gaussian bound for this ‖x₀‖_∞ level.
    #[arg(long)]
    lambda: Option<f64>,
    /// Target precision for the sparse sample-complexity column (needs --K and --N).
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long = "N")]
    n: Option<usize>,
    /// Prefactor of the error rates.
    #[arg(long, default_value_t = 1.0)]
    c_cor: f64,
    /// Prefactor of the sparse sample complexity.
    #[arg(long, default_value_t = 1.0)]
    c_sparse: f64,
    /// Anisotropy constant of the ensemble (0 for Gaussian).
    #[arg(long, default_value_t = 0.0)]
    kappa_sg: f64,
}

#[derive(Args, Debug)]
struct WidthArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Ambient dimension (sparse model).
    #[arg(long = "N")]
    n_dim: Option<usize>,
    /// Sparsity (sparse model).
    #[arg(long = "K")]
    k: Option<usize>,
    /// Matrix side (low-rank model).
    #[arg(long = "n")]
    side: Option<usize>,
    /// Rank (low-rank model).
    #[arg(long = "r")]
    rank: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// Failure carrying the process exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<QcsError> for Failure {
    fn from(e: QcsError) -> Self {
        let code = match e {
            QcsError::InvalidInput(_) | QcsError::InvalidConfig(_) => 2,
            QcsError::NumericalFailure(_) => 3,
            QcsError::Io(_) => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn validation(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Experiment(a) => experiment(a),
        Command::Solve(a) => solve(a),
        Command::Bounds(a) => bounds(a),
        Command::Width(a) => width(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn experiment(a: ExperimentArgs) -> Result<(), Failure> {
    let preset: Preset = a.preset.into();
    let scale: Scale = a.scale.into();
    let mut spec = ExperimentSpec::preset(preset, scale, a.seed)?;
    if let Some(t) = a.trials {
        spec.trials = t;
    }
    if let Some(g) = a.grid {
        spec.grid = g;
    }
    if let Some(ms) = a.methods {
        spec.methods = ms.into_iter().map(Method::from).collect();
    }
    if let Some(b) = a.bits {
        spec.bits = b;
    }
    spec.solver = a.solver.config();
    spec.validate()?;

    let dir = match a.out {
        Some(d) => d,
        None => {
            let root = std::env::var_os(OUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
            let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            root.join(format!("{}-{}-seed{}-{}", preset.tag(), scale.tag(), a.seed, stamp))
        }
    };
    let outcome = run_experiment(&spec, a.jobs)?;
    persist(&outcome, &dir)?;

    println!("output: {}", dir.display());
    for arm in &outcome.summary.arms {
        let slope = arm
            .slope
            .map(|s| format!("{:.3}", s.slope))
            .unwrap_or_else(|| "n/a".into());
        let means: Vec<String> = arm.mean_error.iter().map(|e| format!("{e:.4}")).collect();
        println!("{:<22} slope {:>7}  mean error [{}]", arm.method, slope, means.join(", "));
    }
    let md = &outcome.summary.metadata;
    if md.failed_trials > 0 {
        eprintln!("warning: {} of {} trials failed", md.failed_trials, md.total_trials);
    }
    if outcome.failure_fraction() > MAX_FAILURE_FRACTION {
        return Err(Failure {
            code: 3,
            message: format!("{} of {} trials failed", md.failed_trials, md.total_trials),
        });
    }
    Ok(())
}

fn solve(a: SolveArgs) -> Result<(), Failure> {
    let file = File::open(&a.instance)
        .map_err(|e| validation(format!("cannot open {}: {e}", a.instance.display())))?;
    let inst = Instance::read_from(BufReader::new(file))?;
    let (ens, q) = (&inst.ensemble, &inst.measurements);
    let n = ens.dim();
    let model = match a.model {
        ModelArg::Sparse => AtomicModel::sparse(n, 1)?,
        ModelArg::Lowrank => {
            let side = (n as f64).sqrt().round() as usize;
            if side * side != n {
                return Err(validation(format!("N = {n} is not a square; the low-rank model needs N = n²")));
            }
            AtomicModel::low_rank(side, 1)?
        }
    };
    let cfg_q = QuantizerConfig::from_delta(q.delta)?;
    let sc = a.solver.config();
    sc.validate()?;
    let m = ens.measurements();
    let method: Method = a.method.into();
    let result = match method {
        Method::Cobp => cobp(q, ens, &cfg_q, &model, &sc)?,
        Method::CobpLambda => {
            let lambda = a.lambda.ok_or_else(|| validation("cobp-lambda needs --lambda"))?;
            cobp_lambda(q, ens, &cfg_q, &model, lambda, &sc)?
        }
        Method::Bpdn => bpdn(q, ens, &cfg_q, &model, epsilon_bpdn(m, q.delta, a.kappa), &sc)?,
        Method::Bpdq4 => bpdq(q, ens, &cfg_q, &model, epsilon_bpdq4(m, q.delta, a.kappa4), &sc)?,
    };
    let x = &result.x_star;
    println!("method {}", method.tag());
    println!("M {m} N {n} delta {:?}", q.delta);
    println!("iterations {}", result.iterations);
    println!("converged {}", result.converged);
    println!("objective {:?}", result.objective);
    println!("max_violation {:?}", result.max_violation());
    println!("consistency_residual {:?}", consistency_residual(x, q, ens)?);
    println!("norm_inf {:?}", norm_inf(x));
    println!("atomic_norm {:?}", atomic_norm(x, &model)?);
    println!("x_star");
    for v in x {
        println!("{v:?}");
    }
    Ok(())
}

fn bounds(a: BoundsArgs) -> Result<(), Failure> {
    let consts = BoundConstants {
        c_cor: a.c_cor,
        c_sparse: a.c_sparse,
        kappa_sg: a.kappa_sg,
        ..BoundConstants::default()
    };
    consts.validate()?;
    let mut header = vec!["M", "delta", "w", "error_bound_gaussian"];
    if a.lambda.is_some() {
        header.push("error_bound_subgaussian");
    }
    println!("{}", header.join("\t"));
    for &delta in &a.delta {
        for &m in &a.m {
            let mut row = vec![
                format!("{m}"),
                format!("{delta}"),
                format!("{}", a.w),
                format!("{:?}", error_bound_gaussian(m, delta, a.w, &consts)?),
            ];
            if let Some(l) = a.lambda {
                row.push(format!("{:?}", error_bound_subgaussian(m, delta, a.w, l, &consts)?));
            }
            println!("{}", row.join("\t"));
        }
    }
    match (a.eps, a.k, a.n) {
        (Some(eps), Some(k), Some(n)) => {
            println!();
            println!("K\tN\tdelta\teps\tmin_measurements_sparse\tdegenerate");
            for &delta in &a.delta {
                let b = min_measurements_sparse(k, n, delta, eps, &consts)?;
                println!("{k}\t{n}\t{delta}\t{eps}\t{:?}\t{}", b.value, b.degenerate);
            }
        }
        (None, None, None) => {}
        _ => return Err(validation("--eps, --K and --N must be given together")),
    }
    Ok(())
}

fn width(a: WidthArgs) -> Result<(), Failure> {
    let model = match a.model {
        ModelArg::Sparse => {
            let (n, k) = a.n_dim.zip(a.k).ok_or_else(|| validation("the sparse model needs --N and --K"))?;
            AtomicModel::sparse(n, k)?
        }
        ModelArg::Lowrank => {
            let (side, r) = a.side.zip(a.rank).ok_or_else(|| validation("the low-rank model needs --n and --r"))?;
            AtomicModel::low_rank(side, r)?
        }
    };
    let est = width_estimate(&model, a.samples, a.seed)?;
    println!("samples {}", est.n_samples);
    println!("mean {:?}", est.mean);
    println!("std_error {:?}", est.std_error);
    println!("mean_squared {:?}", est.mean * est.mean);
    Ok(())
}
