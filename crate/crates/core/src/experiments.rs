//! Error-decay experiments: instance generation, trial execution, aggregation
//! over seeds, log-log slope fitting, and persistence.
//!
//! Three presets are provided: sparse signals under Gaussian sensing with a
//! sweep over `M/K`; Bernoulli versus Gaussian sensing at fixed `M/K` with a
//! sweep over `K`; and rank-1 matrices with a sweep over `M/P`. Each comes at
//! paper scale and at a reduced desk scale.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, QcsError, Result};
use crate::linalg::{dist2, norm2, norm_inf};
use crate::models::AtomicModel;
use crate::rng::{derive_seed, label_tag, Stream};
use crate::sensing::{draw_ensemble, saturation_fraction, sense, Distribution, QuantizerConfig};
use crate::solvers::{
    bpdn, bpdq, cobp, cobp_lambda, epsilon_bpdn, epsilon_bpdq4, ReconResult, SolverConfig,
    DEFAULT_KAPPA, DEFAULT_KAPPA4,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    SparseGaussian,
    BernoulliVsGaussian,
    LowRankGaussian,
    Custom,
}

impl Preset {
    pub fn tag(&self) -> &'static str {
        match self {
            Preset::SparseGaussian => "sparse-gaussian",
            Preset::BernoulliVsGaussian => "bernoulli-vs-gaussian",
            Preset::LowRankGaussian => "lowrank",
            Preset::Custom => "custom",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Preset {
    type Err = QcsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse-gaussian" => Ok(Preset::SparseGaussian),
            "bernoulli-vs-gaussian" => Ok(Preset::BernoulliVsGaussian),
            "lowrank" => Ok(Preset::LowRankGaussian),
            "custom" => Ok(Preset::Custom),
            other => invalid_input(format!("unknown preset '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scale {
    Paper,
    Desk,
}

impl Scale {
    pub fn tag(&self) -> &'static str {
        match self {
            Scale::Paper => "paper",
            Scale::Desk => "desk",
        }
    }
}

impl FromStr for Scale {
    type Err = QcsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            other => invalid_input(format!("unknown scale '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Cobp,
    /// CoBP with the oracle bound `λ = ‖x₀‖_∞`.
    CobpLambda,
    Bpdn,
    Bpdq4,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Cobp => "cobp",
            Method::CobpLambda => "cobp-lambda",
            Method::Bpdn => "bpdn",
            Method::Bpdq4 => "bpdq4",
        }
    }
}

impl FromStr for Method {
    type Err = QcsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cobp" => Ok(Method::Cobp),
            "cobp-lambda" => Ok(Method::CobpLambda),
            "bpdn" => Ok(Method::Bpdn),
            "bpdq4" => Ok(Method::Bpdq4),
            other => invalid_input(format!("unknown method '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalFamily {
    /// Unit-norm `K`-sparse vectors in `ℝ^N`.
    Sparse { dim: usize, sparsity: usize },
    /// Unit-Frobenius rank-1 PSD matrices `vvᵀ/‖v‖²` of side `n`.
    RankOne { side: usize },
}

/// How a grid value maps to the instance size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridAxis {
    /// Grid value is `M/K`.
    MeasurementsPerSparsity,
    /// Grid value is `M/P` for a fixed complexity budget `P`.
    MeasurementsPerComplexity { complexity: usize },
    /// Grid value is the sparsity `K`, with `M = ratio · K`.
    Sparsity { ratio: usize },
}

/// One curve of an experiment: a reconstruction method under one ensemble law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arm {
    pub method: Method,
    pub dist: Distribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub preset: Preset,
    pub scale: Scale,
    pub signal: SignalFamily,
    pub bits: u32,
    pub axis: GridAxis,
    pub grid: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub methods: Vec<Method>,
    pub ensembles: Vec<Distribution>,
    pub solver: SolverConfig,
    /// BPDN radius slack.
    pub kappa: f64,
    /// BPDQ radius slack.
    pub kappa4: f64,
}

const POWERS_8_128: [f64; 5] = [8.0, 16.0, 32.0, 64.0, 128.0];

impl ExperimentSpec {
    pub fn preset(preset: Preset, scale: Scale, master_seed: u64) -> Result<Self> {
        let base = |signal, bits, axis, grid: Vec<f64>, trials, methods, ensembles| Self {
            preset,
            scale,
            signal,
            bits,
            axis,
            grid,
            trials,
            master_seed,
            methods,
            ensembles,
            solver: SolverConfig::default(),
            kappa: DEFAULT_KAPPA,
            kappa4: DEFAULT_KAPPA4,
        };
        let spec = match (preset, scale) {
            (Preset::SparseGaussian, _) => {
                let (dim, sparsity, trials) = match scale {
                    Scale::Paper => (2048, 16, 20),
                    Scale::Desk => (512, 8, 10),
                };
                base(
                    SignalFamily::Sparse { dim, sparsity },
                    3,
                    GridAxis::MeasurementsPerSparsity,
                    POWERS_8_128.to_vec(),
                    trials,
                    vec![Method::Bpdn, Method::Bpdq4, Method::Cobp],
                    vec![Distribution::Gaussian],
                )
            }
            (Preset::BernoulliVsGaussian, _) => {
                let (dim, grid) = match scale {
                    Scale::Paper => (1024, vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]),
                    Scale::Desk => (256, vec![1.0, 2.0, 4.0, 8.0, 16.0]),
                };
                base(
                    SignalFamily::Sparse { dim, sparsity: 1 },
                    4,
                    GridAxis::Sparsity { ratio: 16 },
                    grid,
                    20,
                    vec![Method::Cobp, Method::CobpLambda],
                    vec![Distribution::Gaussian, Distribution::Bernoulli],
                )
            }
            (Preset::LowRankGaussian, _) => {
                let (side, complexity, trials) = match scale {
                    Scale::Paper => (32, 64, 20),
                    Scale::Desk => (16, 32, 10),
                };
                base(
                    SignalFamily::RankOne { side },
                    2,
                    GridAxis::MeasurementsPerComplexity { complexity },
                    vec![4.0, 8.0, 16.0, 32.0],
                    trials,
                    vec![Method::Bpdn, Method::Cobp],
                    vec![Distribution::Gaussian],
                )
            }
            (Preset::Custom, _) => {
                return invalid_input("the custom preset has no defaults; build the spec directly")
            }
        };
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return invalid_input("grid must not be empty");
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) || self.grid.iter().any(|g| !(*g > 0.0)) {
            return invalid_input("grid must be positive and strictly ascending");
        }
        if self.trials == 0 {
            return invalid_input("at least one trial is required");
        }
        if self.methods.is_empty() || self.ensembles.is_empty() {
            return invalid_input("at least one method and one ensemble are required");
        }
        QuantizerConfig::from_bits(self.bits)?;
        self.solver.validate()?;
        for &g in &self.grid {
            let (model, m) = self.model_and_measurements(g)?;
            model.validate()?;
            if m == 0 {
                return invalid_input(format!("grid value {g} yields no measurements"));
            }
        }
        Ok(())
    }

    pub fn arms(&self) -> Vec<Arm> {
        let mut arms = Vec::new();
        for &dist in &self.ensembles {
            for &method in &self.methods {
                arms.push(Arm { method, dist });
            }
        }
        arms
    }

    /// Curve label; the ensemble is appended only when several are compared.
    pub fn arm_label(&self, arm: &Arm) -> String {
        if self.ensembles.len() > 1 {
            format!("{}/{}", arm.method.tag(), arm.dist.tag())
        } else {
            arm.method.tag().to_string()
        }
    }

    /// Signal model and number of measurements at one grid value.
    pub fn model_and_measurements(&self, grid_value: f64) -> Result<(AtomicModel, usize)> {
        let as_count = |v: f64| -> Result<usize> {
            let r = v.round();
            if (v - r).abs() > 1e-9 || r < 1.0 {
                return invalid_input(format!("grid value {v} does not give an integer size"));
            }
            Ok(r as usize)
        };
        match (self.signal, self.axis) {
            (SignalFamily::Sparse { dim, sparsity }, GridAxis::MeasurementsPerSparsity) => Ok((
                AtomicModel::Sparse { dim, sparsity },
                as_count(grid_value * sparsity as f64)?,
            )),
            (SignalFamily::Sparse { dim, sparsity }, GridAxis::MeasurementsPerComplexity { complexity }) => Ok((
                AtomicModel::Sparse { dim, sparsity },
                as_count(grid_value * complexity as f64)?,
            )),
            (SignalFamily::Sparse { dim, .. }, GridAxis::Sparsity { ratio }) => {
                let k = as_count(grid_value)?;
                Ok((AtomicModel::Sparse { dim, sparsity: k }, ratio * k))
            }
            (SignalFamily::RankOne { side }, GridAxis::MeasurementsPerComplexity { complexity }) => Ok((
                AtomicModel::LowRank { side, rank: 1 },
                as_count(grid_value * complexity as f64)?,
            )),
            (SignalFamily::RankOne { side }, GridAxis::MeasurementsPerSparsity) => Ok((
                AtomicModel::LowRank { side, rank: 1 },
                as_count(grid_value)?,
            )),
            (SignalFamily::RankOne { .. }, GridAxis::Sparsity { .. }) => {
                invalid_input("a sparsity sweep needs a sparse signal family")
            }
        }
    }

    /// Seed of one (grid value, trial) cell, shared by every arm.
    pub fn trial_seed(&self, grid_value: f64, trial_index: usize) -> u64 {
        derive_seed(&[
            self.master_seed,
            label_tag(self.preset.tag()),
            grid_value.to_bits(),
            trial_index as u64,
        ])
    }
}

const SIGNAL_STREAM: u64 = 11;
const ENSEMBLE_STREAM: u64 = 12;

/// Unit-norm vector with a uniformly random `K`-subset support and
/// `N(0,1)` nonzeros before normalization.
pub fn gen_sparse_signal(dim: usize, sparsity: usize, seed: u64) -> Result<Vec<f64>> {
    if sparsity < 1 || sparsity > dim {
        return invalid_input(format!("need 1 <= K <= N, got K={sparsity}, N={dim}"));
    }
    let mut rng = Stream::new(seed);
    // partial Fisher–Yates
    let mut idx: Vec<usize> = (0..dim).collect();
    for i in 0..sparsity {
        let j = i + rng.below((dim - i) as u64) as usize;
        idx.swap(i, j);
    }
    let mut x = vec![0.0; dim];
    for &i in &idx[..sparsity] {
        // a zero draw would shrink the support
        let mut v = 0.0;
        while v == 0.0 {
            v = rng.normal();
        }
        x[i] = v;
    }
    let n = norm2(&x);
    x.iter_mut().for_each(|v| *v /= n);
    Ok(x)
}

/// Column-stacked `vvᵀ/‖v‖²` with `v ~ N(0, I_n)`.
pub fn gen_rank1(side: usize, seed: u64) -> Result<Vec<f64>> {
    if side == 0 {
        return invalid_input("matrix side must be at least 1");
    }
    let mut rng = Stream::new(seed);
    let v = rng.normal_vec(side);
    let nv2: f64 = v.iter().map(|a| a * a).sum();
    let mut x = vec![0.0; side * side];
    for j in 0..side {
        for i in 0..side {
            x[j * side + i] = v[i] * v[j] / nv2;
        }
    }
    Ok(x)
}

/// One `(arm, grid value, trial)` outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub preset: String,
    pub method: String,
    pub grid_value: f64,
    pub trial_index: usize,
    pub seed: u64,
    /// `‖x₀ − x*‖₂`; NaN when the solve failed.
    pub error_l2: f64,
    pub iterations: usize,
    pub converged: bool,
    pub saturation_fraction: f64,
    pub wall_ms: f64,
    /// Largest per-block violation of the returned point. Not persisted.
    #[serde(skip)]
    pub max_violation: f64,
    /// Solver error message. Not persisted.
    #[serde(skip)]
    pub failure: Option<String>,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.failure.is_some() || !self.error_l2.is_finite()
    }
}

/// Everything `run_trial` needs besides the solver: the signal, the
/// ensemble for one arm, and the observed data.
pub struct TrialInstance {
    pub x0: Vec<f64>,
    pub model: AtomicModel,
    pub quantizer: QuantizerConfig,
    pub ensemble: crate::sensing::SensingEnsemble,
    pub measurements: crate::sensing::QuantizedMeasurements,
    pub seed: u64,
}

pub fn build_instance(spec: &ExperimentSpec, dist: Distribution, grid_value: f64, trial_index: usize) -> Result<TrialInstance> {
    let (model, m) = spec.model_and_measurements(grid_value)?;
    let seed = spec.trial_seed(grid_value, trial_index);
    let signal_seed = derive_seed(&[seed, SIGNAL_STREAM]);
    let x0 = match model {
        AtomicModel::Sparse { dim, sparsity } => gen_sparse_signal(dim, sparsity, signal_seed)?,
        AtomicModel::LowRank { side, .. } => gen_rank1(side, signal_seed)?,
    };
    let quantizer = QuantizerConfig::from_bits(spec.bits)?;
    let ensemble = draw_ensemble(
        m,
        model.ambient_dim(),
        dist,
        quantizer.delta,
        derive_seed(&[seed, ENSEMBLE_STREAM]),
    )?;
    let measurements = sense(&x0, &ensemble, &quantizer)?;
    Ok(TrialInstance {
        x0,
        model,
        quantizer,
        ensemble,
        measurements,
        seed,
    })
}

pub fn solve_instance(spec: &ExperimentSpec, method: Method, inst: &TrialInstance) -> Result<ReconResult> {
    let (q, ens, cfg, model, sc) = (
        &inst.measurements,
        &inst.ensemble,
        &inst.quantizer,
        &inst.model,
        &spec.solver,
    );
    let m = ens.measurements();
    match method {
        Method::Cobp => cobp(q, ens, cfg, model, sc),
        Method::CobpLambda => cobp_lambda(q, ens, cfg, model, norm_inf(&inst.x0), sc),
        Method::Bpdn => bpdn(q, ens, cfg, model, epsilon_bpdn(m, cfg.delta, spec.kappa), sc),
        Method::Bpdq4 => bpdq(q, ens, cfg, model, epsilon_bpdq4(m, cfg.delta, spec.kappa4), sc),
    }
}

/// Generates the instance for one cell and reconstructs it with `arm`.
/// Solver failures are captured in the record.
pub fn run_trial(spec: &ExperimentSpec, arm: &Arm, grid_value: f64, trial_index: usize) -> Result<TrialRecord> {
    let inst = build_instance(spec, arm.dist, grid_value, trial_index)?;
    let start = Instant::now();
    let outcome = solve_instance(spec, arm.method, &inst);
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut rec = TrialRecord {
        preset: spec.preset.tag().to_string(),
        method: spec.arm_label(arm),
        grid_value,
        trial_index,
        seed: inst.seed,
        error_l2: f64::NAN,
        iterations: 0,
        converged: false,
        saturation_fraction: saturation_fraction(&inst.measurements),
        wall_ms,
        max_violation: f64::INFINITY,
        failure: None,
    };
    match outcome {
        Ok(r) => {
            rec.error_l2 = dist2(&r.x_star, &inst.x0);
            rec.iterations = r.iterations;
            rec.converged = r.converged;
            rec.max_violation = r.max_violation();
        }
        Err(e @ QcsError::NumericalFailure(_)) => rec.failure = Some(e.to_string()),
        Err(e) => return Err(e),
    }
    Ok(rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub n_points_used: usize,
}

pub const DEFAULT_LAST_K: usize = 4;

/// Least-squares line through `(log₂ m, log₂ err)` over the `last_k` points
/// with the largest `m`.
pub fn fit_log_slope(points: &[(f64, f64)], last_k: usize) -> Result<SlopeFit> {
    if points.iter().any(|&(m, e)| !(m > 0.0) || !(e > 0.0)) {
        return invalid_input("slope fitting needs positive abscissae and errors");
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let take = last_k.min(pts.len());
    if take < 2 {
        return invalid_input("slope fitting needs at least two points");
    }
    let used = &pts[pts.len() - take..];
    let xs: Vec<f64> = used.iter().map(|p| p.0.log2()).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.1.log2()).collect();
    let n = take as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return invalid_input("slope fitting needs distinct abscissae");
    }
    let slope = sxy / sxx;
    Ok(SlopeFit {
        slope,
        intercept: my - slope * mx,
        n_points_used: take,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub preset: String,
    pub method: String,
    pub grid: Vec<f64>,
    /// Arithmetic mean of `error_l2` over the included trials at each grid value.
    pub mean_error: Vec<f64>,
    pub median_error: Vec<f64>,
    pub included: Vec<usize>,
    pub excluded: Vec<usize>,
    pub slope: Option<SlopeFit>,
    pub last_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub preset: String,
    pub scale: String,
    pub master_seed: u64,
    pub trials: usize,
    pub bits: u32,
    pub tool_version: String,
    pub total_trials: usize,
    pub failed_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub metadata: RunMetadata,
    pub arms: Vec<ArmSummary>,
}

impl Summary {
    pub fn arm(&self, label: &str) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.method == label)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub spec: ExperimentSpec,
    pub records: Vec<TrialRecord>,
    pub summary: Summary,
}

impl ExperimentOutcome {
    pub fn failure_fraction(&self) -> f64 {
        let failed = self.records.iter().filter(|r| r.failed()).count();
        failed as f64 / self.records.len().max(1) as f64
    }
}

/// A trial enters the means if it did not fail and either converged or ended
/// within ten times the feasibility tolerance.
fn include_in_mean(rec: &TrialRecord, tol_feas: f64) -> bool {
    !rec.failed() && (rec.converged || rec.max_violation <= 10.0 * tol_feas)
}

/// Runs every `(arm, grid value, trial)` cell on a pool of `jobs` workers
/// (`0` = all cores). Record order is fixed and independent of scheduling.
pub fn run_experiment(spec: &ExperimentSpec, jobs: usize) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let arms = spec.arms();
    let mut cells = Vec::new();
    for arm in &arms {
        for &g in &spec.grid {
            for t in 0..spec.trials {
                cells.push((*arm, g, t));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| QcsError::InvalidConfig(e.to_string()))?;
    let records: Vec<TrialRecord> = pool.install(|| {
        cells
            .par_iter()
            .map(|(arm, g, t)| run_trial(spec, arm, *g, *t))
            .collect::<Result<Vec<_>>>()
    })?;
    let summary = summarize(spec, &records);
    Ok(ExperimentOutcome {
        spec: spec.clone(),
        records,
        summary,
    })
}

pub fn summarize(spec: &ExperimentSpec, records: &[TrialRecord]) -> Summary {
    let mut arms_out = Vec::new();
    for arm in spec.arms() {
        let label = spec.arm_label(&arm);
        let mut mean_error = Vec::new();
        let mut median_error = Vec::new();
        let mut included = Vec::new();
        let mut excluded = Vec::new();
        for &g in &spec.grid {
            let cell: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.method == label && r.grid_value == g)
                .collect();
            let mut errs: Vec<f64> = cell
                .iter()
                .filter(|r| include_in_mean(r, spec.solver.tol_feas))
                .map(|r| r.error_l2)
                .collect();
            included.push(errs.len());
            excluded.push(cell.len() - errs.len());
            if errs.is_empty() {
                mean_error.push(f64::NAN);
                median_error.push(f64::NAN);
                continue;
            }
            mean_error.push(errs.iter().sum::<f64>() / errs.len() as f64);
            errs.sort_by(|a, b| a.total_cmp(b));
            let mid = errs.len() / 2;
            median_error.push(if errs.len() % 2 == 0 {
                0.5 * (errs[mid - 1] + errs[mid])
            } else {
                errs[mid]
            });
        }
        let points: Vec<(f64, f64)> = spec
            .grid
            .iter()
            .copied()
            .zip(mean_error.iter().copied())
            .filter(|(_, e)| e.is_finite() && *e > 0.0)
            .collect();
        arms_out.push(ArmSummary {
            preset: spec.preset.tag().to_string(),
            method: label,
            grid: spec.grid.clone(),
            mean_error,
            median_error,
            included,
            excluded,
            slope: fit_log_slope(&points, DEFAULT_LAST_K).ok(),
            last_k: DEFAULT_LAST_K,
        });
    }
    Summary {
        metadata: RunMetadata {
            preset: spec.preset.tag().to_string(),
            scale: spec.scale.tag().to_string(),
            master_seed: spec.master_seed,
            trials: spec.trials,
            bits: spec.bits,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            total_trials: records.len(),
            failed_trials: records.iter().filter(|r| r.failed()).count(),
        },
        arms: arms_out,
    }
}

pub const TRIALS_HEADER: [&str; 10] = [
    "preset",
    "method",
    "grid",
    "trial",
    "seed",
    "error_l2",
    "iterations",
    "converged",
    "saturation",
    "wall_ms",
];

/// 17 significant digits.
fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trials_csv(records: &[TrialRecord], w: impl std::io::Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRIALS_HEADER)?;
    for r in records {
        out.write_record([
            r.preset.clone(),
            r.method.clone(),
            fmt_real(r.grid_value),
            r.trial_index.to_string(),
            r.seed.to_string(),
            fmt_real(r.error_l2),
            r.iterations.to_string(),
            r.converged.to_string(),
            fmt_real(r.saturation_fraction),
            format!("{:.3}", r.wall_ms),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trials_csv(r: impl std::io::Read) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().ne(TRIALS_HEADER.iter().copied()) {
        return invalid_input("unexpected trials.csv header");
    }
    let field = |rec: &csv::StringRecord, i: usize| -> Result<String> {
        rec.get(i)
            .map(str::to_string)
            .ok_or_else(|| QcsError::InvalidInput(format!("missing column {}", TRIALS_HEADER[i])))
    };
    fn num<T: FromStr>(s: String, what: &str) -> Result<T> {
        s.parse()
            .map_err(|_| QcsError::InvalidInput(format!("bad {what} value '{s}'")))
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let error_l2: f64 = num(field(&rec, 5)?, "error_l2")?;
        out.push(TrialRecord {
            preset: field(&rec, 0)?,
            method: field(&rec, 1)?,
            grid_value: num(field(&rec, 2)?, "grid")?,
            trial_index: num(field(&rec, 3)?, "trial")?,
            seed: num(field(&rec, 4)?, "seed")?,
            error_l2,
            iterations: num(field(&rec, 6)?, "iterations")?,
            converged: num(field(&rec, 7)?, "converged")?,
            saturation_fraction: num(field(&rec, 8)?, "saturation")?,
            wall_ms: num(field(&rec, 9)?, "wall_ms")?,
            max_violation: f64::NAN,
            failure: if error_l2.is_finite() {
                None
            } else {
                Some("failed".into())
            },
        });
    }
    Ok(out)
}

pub fn write_curves_csv(summary: &Summary, w: impl std::io::Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["method", "log2_grid", "log2_mean_error"])?;
    for arm in &summary.arms {
        for (g, e) in arm.grid.iter().zip(&arm.mean_error) {
            if e.is_finite() && *e > 0.0 {
                out.write_record([arm.method.clone(), fmt_real(g.log2()), fmt_real(e.log2())])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes `trials.csv`, `summary.json` and `curves.csv` into `dir`.
pub fn persist(outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_trials_csv(&outcome.records, fs::File::create(dir.join("trials.csv"))?)?;
    let json = serde_json::to_string_pretty(&outcome.summary)?;
    fs::write(dir.join("summary.json"), json + "\n")?;
    write_curves_csv(&outcome.summary, fs::File::create(dir.join("curves.csv"))?)?;
    Ok(())
}
