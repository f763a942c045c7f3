//! Reconstruction programs solved by a product-space primal-dual splitting.
//!
//! Every program has the form
//!
//! ```text
//! minimize  w · ‖u‖_♯   subject to   A_b u ∈ C_b  for each block b
//! ```
//!
//! where each `A_b` is either the sensing matrix `Φ` or the identity and each
//! `C_b` has a closed-form projection. The base iteration `T` is the
//! Chambolle–Pock step (one prox of the atomic norm, one projection per block,
//! one product with `Φ` and `Φᵀ`). It is driven by a reflected Halpern scheme,
//! `z ← (k+1)/(k+2) · (2T(z) − z) + 1/(k+2) · z_anchor`, restarted from `T(z)`
//! whenever the fixed-point residual `‖z − T(z)‖` has dropped enough since the
//! last anchor. On these polyhedral programs this converges linearly where the
//! plain iteration stalls.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, invalid_input, QcsError, Result};
use crate::linalg::{axpy, dist2, dot, norm2, norm_inf, operator_norm, DenseMatrix, LinearOperator};
use crate::models::{atomic_norm, project_lp_ball, prox_atomic_in_place, AtomicModel};
use crate::sensing::{QuantizedMeasurements, QuantizerConfig, SensingEnsemble};

/// Which linear map feeds a constraint block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearMapKind {
    Sensing,
    Identity,
}

/// One convex constraint `A u ∈ C`. Measurement-space centers are `q − ξ`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintBlock {
    /// `‖Φu − center‖_∞ ≤ half_width` (quantization consistency).
    ConsistencyBox { center: Vec<f64>, half_width: f64 },
    /// `‖Φu − center‖₂ ≤ radius`.
    ResidualL2Ball { center: Vec<f64>, radius: f64 },
    /// `‖Φu − center‖₄ ≤ radius`.
    ResidualL4Ball { center: Vec<f64>, radius: f64 },
    /// `‖u‖₂ ≤ 1`.
    UnitL2Ball,
    /// `‖u‖_∞ ≤ lambda`.
    InfBall { lambda: f64 },
}

impl ConstraintBlock {
    pub fn map(&self) -> LinearMapKind {
        match self {
            ConstraintBlock::ConsistencyBox { .. }
            | ConstraintBlock::ResidualL2Ball { .. }
            | ConstraintBlock::ResidualL4Ball { .. } => LinearMapKind::Sensing,
            ConstraintBlock::UnitL2Ball | ConstraintBlock::InfBall { .. } => LinearMapKind::Identity,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConstraintBlock::ConsistencyBox { .. } => "consistency-box",
            ConstraintBlock::ResidualL2Ball { .. } => "residual-l2",
            ConstraintBlock::ResidualL4Ball { .. } => "residual-l4",
            ConstraintBlock::UnitL2Ball => "unit-l2",
            ConstraintBlock::InfBall { .. } => "inf-ball",
        }
    }

    /// Natural size of the set; violations are reported in these units.
    pub fn scale(&self) -> f64 {
        match *self {
            ConstraintBlock::ConsistencyBox { half_width, .. } => half_width,
            ConstraintBlock::ResidualL2Ball { radius, .. }
            | ConstraintBlock::ResidualL4Ball { radius, .. } => radius,
            ConstraintBlock::UnitL2Ball => 1.0,
            ConstraintBlock::InfBall { lambda } => lambda,
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        let center_ok = |c: &Vec<f64>| c.len() == m && c.iter().all(|v| v.is_finite());
        let ok = match self {
            ConstraintBlock::ConsistencyBox { center, half_width } => center_ok(center) && *half_width >= 0.0,
            ConstraintBlock::ResidualL2Ball { center, radius }
            | ConstraintBlock::ResidualL4Ball { center, radius } => center_ok(center) && *radius >= 0.0,
            ConstraintBlock::UnitL2Ball => true,
            ConstraintBlock::InfBall { lambda } => *lambda > 0.0,
        };
        if ok {
            Ok(())
        } else {
            invalid_input(format!("malformed {} block", self.name()))
        }
    }

    /// Projects `z` onto the block's set in place.
    pub fn project_in_place(&self, z: &mut [f64]) -> Result<()> {
        match self {
            ConstraintBlock::ConsistencyBox { center, half_width } => {
                for (zi, c) in z.iter_mut().zip(center) {
                    *zi = zi.clamp(c - half_width, c + half_width);
                }
            }
            ConstraintBlock::ResidualL2Ball { center, radius } => {
                let d = dist2(z, center);
                if d > *radius {
                    let s = if d > 0.0 { radius / d } else { 0.0 };
                    for (zi, c) in z.iter_mut().zip(center) {
                        *zi = c + s * (*zi - c);
                    }
                }
            }
            ConstraintBlock::ResidualL4Ball { center, radius } => {
                if *radius == 0.0 {
                    z.copy_from_slice(center);
                    return Ok(());
                }
                for (zi, c) in z.iter_mut().zip(center) {
                    *zi -= c;
                }
                let p = project_lp_ball(z, *radius, 4)?;
                for ((zi, pi), c) in z.iter_mut().zip(&p.z).zip(center) {
                    *zi = pi + c;
                }
            }
            ConstraintBlock::UnitL2Ball => crate::models::project_l2_ball_in_place(z, 1.0),
            ConstraintBlock::InfBall { lambda } => {
                z.iter_mut().for_each(|v| *v = v.clamp(-lambda, *lambda));
            }
        }
        Ok(())
    }

    /// Constraint excess at `z = A u`, divided by [`Self::scale`] when positive.
    pub fn violation(&self, z: &[f64]) -> f64 {
        let excess = match self {
            ConstraintBlock::ConsistencyBox { center, half_width } => z
                .iter()
                .zip(center)
                .map(|(a, c)| (a - c).abs() - half_width)
                .fold(0.0, f64::max),
            ConstraintBlock::ResidualL2Ball { center, radius } => dist2(z, center) - radius,
            ConstraintBlock::ResidualL4Ball { center, radius } => {
                z.iter()
                    .zip(center)
                    .map(|(a, c)| (a - c).powi(4))
                    .sum::<f64>()
                    .powf(0.25)
                    - radius
            }
            ConstraintBlock::UnitL2Ball => norm2(z) - 1.0,
            ConstraintBlock::InfBall { lambda } => norm_inf(z) - lambda,
        }
        .max(0.0);
        let s = self.scale();
        if s > 0.0 {
            excess / s
        } else {
            excess
        }
    }
}

/// A convex program: atomic-norm objective plus constraint blocks.
#[derive(Debug, Clone)]
pub struct ProgramSpec<'a> {
    pub model: AtomicModel,
    pub blocks: Vec<ConstraintBlock>,
    pub phi: &'a DenseMatrix,
    /// Multiplier of the objective; zero turns the program into a feasibility problem.
    pub objective_weight: f64,
}

impl<'a> ProgramSpec<'a> {
    pub fn new(model: AtomicModel, blocks: Vec<ConstraintBlock>, phi: &'a DenseMatrix) -> Self {
        Self {
            model,
            blocks,
            phi,
            objective_weight: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.blocks.is_empty() {
            return invalid_input("program needs at least one constraint block");
        }
        if self.phi.cols() != self.model.ambient_dim() {
            return invalid_input(format!(
                "sensing matrix has {} columns, model dimension is {}",
                self.phi.cols(),
                self.model.ambient_dim()
            ));
        }
        if !(self.objective_weight >= 0.0) {
            return invalid_input("objective weight must be nonnegative");
        }
        for b in &self.blocks {
            b.validate(self.phi.rows())?;
        }
        Ok(())
    }

    fn stacked(&self) -> StackedMap<'_> {
        let n_sensing = self.blocks.iter().filter(|b| b.map() == LinearMapKind::Sensing).count();
        StackedMap {
            phi: self.phi,
            n_sensing,
            n_identity: self.blocks.len() - n_sensing,
        }
    }
}

/// `u ↦ (Φu, …, Φu, u, …, u)`, the map seen by the dual variables.
struct StackedMap<'a> {
    phi: &'a DenseMatrix,
    n_sensing: usize,
    n_identity: usize,
}

impl LinearOperator for StackedMap<'_> {
    fn input_dim(&self) -> usize {
        self.phi.cols()
    }
    fn output_dim(&self) -> usize {
        self.n_sensing * self.phi.rows() + self.n_identity * self.phi.cols()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (m, n) = (self.phi.rows(), self.phi.cols());
        if self.n_sensing > 0 {
            self.phi.matvec_into(x, &mut out[..m]);
            for b in 1..self.n_sensing {
                out.copy_within(0..m, b * m);
            }
        }
        let off = self.n_sensing * m;
        for b in 0..self.n_identity {
            out[off + b * n..off + (b + 1) * n].copy_from_slice(x);
        }
    }
    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        let (m, n) = (self.phi.rows(), self.phi.cols());
        if self.n_sensing > 0 {
            let mut acc = y[..m].to_vec();
            for b in 1..self.n_sensing {
                axpy(1.0, &y[b * m..(b + 1) * m], &mut acc);
            }
            self.phi.matvec_t_into(&acc, out);
        } else {
            out.iter_mut().for_each(|o| *o = 0.0);
        }
        let off = self.n_sensing * m;
        for b in 0..self.n_identity {
            axpy(1.0, &y[off + b * n..off + (b + 1) * n], out);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Per-block violation allowed at convergence, in block-natural units.
    pub tol_feas: f64,
    pub tol_rel_change: f64,
    /// `τσ‖L‖² = step_safety²`.
    pub step_safety: f64,
    pub check_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 50_000,
            tol_feas: 1e-5,
            tol_rel_change: 1e-7,
            step_safety: 0.99,
            check_every: 50,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.check_every == 0 {
            return invalid_config("iteration counts must be positive");
        }
        if !(self.tol_feas > 0.0) || !(self.tol_rel_change > 0.0) {
            return invalid_config("tolerances must be positive");
        }
        if !(self.step_safety > 0.0 && self.step_safety < 1.0) {
            return invalid_config("step_safety must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconResult {
    pub x_star: Vec<f64>,
    pub iterations: usize,
    /// Per-block violation, in the order of the program's blocks.
    pub feasibility: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
}

impl ReconResult {
    pub fn max_violation(&self) -> f64 {
        self.feasibility.iter().copied().fold(0.0, f64::max)
    }
}

const DIVERGENCE_LIMIT: f64 = 1e6;

pub fn solve_primal_dual(spec: &ProgramSpec<'_>, cfg: &SolverConfig) -> Result<ReconResult> {
    spec.validate()?;
    cfg.validate()?;
    let phi = spec.phi;
    let (m, n) = (phi.rows(), phi.cols());

    let stacked = spec.stacked();
    let norm = operator_norm(&stacked);
    if !(norm.value > 0.0) || !norm.value.is_finite() {
        return Err(QcsError::NumericalFailure(format!(
            "operator norm estimate is {}",
            norm.value
        )));
    }
    let tau = cfg.step_safety / norm.value;
    let sigma = cfg.step_safety / norm.value;

    let dims: Vec<usize> = spec
        .blocks
        .iter()
        .map(|b| match b.map() {
            LinearMapKind::Sensing => m,
            LinearMapKind::Identity => n,
        })
        .collect();
    let zeros = |d: usize| vec![0.0; d];
    let has_sensing = stacked.n_sensing > 0;

    // current iterate z = (x, y), its image T(z), and the Halpern anchor
    let mut it = PdState::new(n, m, &dims);
    let mut img = PdState::new(n, m, &dims);
    let mut anchor = PdState::new(n, m, &dims);
    let mut scratch: Vec<Vec<f64>> = dims.iter().map(|&d| zeros(d)).collect();
    let mut x_bar = zeros(n);
    let mut phi_x_bar = zeros(m);
    let mut grad = zeros(n);
    let mut dual_sum = zeros(m);
    let mut x_checkpoint = zeros(n);
    let mut dx = zeros(n);
    let mut dphi_x = zeros(m);
    let prox_step = tau * spec.objective_weight;

    let mut converged = false;
    let mut iterations = 0;
    let mut inner = 0usize;
    let mut residual_anchor = 0.0;
    let mut residual_prev = f64::INFINITY;
    for k in 1..=cfg.max_iters {
        iterations = k;

        // primal: x⁺ = prox_{τf}(x − τ Lᵀy)
        if has_sensing {
            dual_sum.iter_mut().for_each(|v| *v = 0.0);
            for (b, y) in spec.blocks.iter().zip(&it.y) {
                if b.map() == LinearMapKind::Sensing {
                    axpy(1.0, y, &mut dual_sum);
                }
            }
            phi.matvec_t_into(&dual_sum, &mut grad);
        } else {
            grad.iter_mut().for_each(|v| *v = 0.0);
        }
        for (b, y) in spec.blocks.iter().zip(&it.y) {
            if b.map() == LinearMapKind::Identity {
                axpy(1.0, y, &mut grad);
            }
        }
        for ((xt, xo), g) in img.x.iter_mut().zip(&it.x).zip(&grad) {
            *xt = xo - tau * g;
        }
        prox_atomic_in_place(&mut img.x, prox_step, &spec.model)?;
        if has_sensing {
            phi.matvec_into(&img.x, &mut img.phi_x);
        }
        for ((xb, xt), xo) in x_bar.iter_mut().zip(&img.x).zip(&it.x) {
            *xb = 2.0 * xt - xo;
        }
        for ((pb, pt), po) in phi_x_bar.iter_mut().zip(&img.phi_x).zip(&it.phi_x) {
            *pb = 2.0 * pt - po;
        }

        // dual: y⁺ = y + σ A x̄ − σ P_C(y/σ + A x̄)
        for (((b, yt), y), w) in spec
            .blocks
            .iter()
            .zip(img.y.iter_mut())
            .zip(&it.y)
            .zip(scratch.iter_mut())
        {
            let ax = match b.map() {
                LinearMapKind::Sensing => &phi_x_bar,
                LinearMapKind::Identity => &x_bar,
            };
            for ((wi, yi), ai) in w.iter_mut().zip(y).zip(ax) {
                *wi = yi / sigma + ai;
            }
            yt.copy_from_slice(w);
            b.project_in_place(yt)?;
            for (ti, wi) in yt.iter_mut().zip(w.iter()) {
                *ti = sigma * (wi - *ti);
            }
        }

        // fixed-point residual ‖z − T z‖ in the metric of the iteration
        for ((d, a), b) in dx.iter_mut().zip(&it.x).zip(&img.x) {
            *d = a - b;
        }
        for ((d, a), b) in dphi_x.iter_mut().zip(&it.phi_x).zip(&img.phi_x) {
            *d = a - b;
        }
        let mut r2 = dot(&dx, &dx) / tau;
        for ((b, y), yt) in spec.blocks.iter().zip(&it.y).zip(&img.y) {
            let a_dx = match b.map() {
                LinearMapKind::Sensing => &dphi_x,
                LinearMapKind::Identity => &dx,
            };
            let mut dyy = 0.0;
            let mut cross = 0.0;
            for ((yi, ti), ai) in y.iter().zip(yt).zip(a_dx) {
                let d = yi - ti;
                dyy += d * d;
                cross += d * ai;
            }
            r2 += dyy / sigma - 2.0 * cross;
        }
        let residual = r2.max(0.0).sqrt();
        if inner == 0 {
            residual_anchor = residual;
        }

        let restart = inner > 0
            && (residual <= RESTART_SUFFICIENT * residual_anchor
                || (residual <= RESTART_NECESSARY * residual_anchor && residual > residual_prev)
                || inner as f64 >= RESTART_ARTIFICIAL * k as f64);
        if restart {
            it.copy_from(&img);
            anchor.copy_from(&img);
            inner = 0;
            residual_prev = f64::INFINITY;
        } else {
            let w1 = (inner + 1) as f64 / (inner + 2) as f64;
            let w0 = 1.0 / (inner + 2) as f64;
            it.halpern_step(&img, &anchor, w1, w0, REFLECTION);
            inner += 1;
            residual_prev = residual;
        }

        if k % cfg.check_every == 0 {
            let xn = norm2(&img.x);
            if !xn.is_finite() || xn > DIVERGENCE_LIMIT {
                return Err(QcsError::NumericalFailure(format!(
                    "primal-dual iterates diverged (norm {xn:e} at iteration {k})"
                )));
            }
            let feasible = spec
                .blocks
                .iter()
                .all(|b| violation_at(b, &img.x, &img.phi_x) <= cfg.tol_feas);
            let change = dist2(&img.x, &x_checkpoint) / xn.max(1e-12);
            x_checkpoint.copy_from_slice(&img.x);
            if feasible && (change <= cfg.tol_rel_change || xn == 0.0 && change == 0.0) {
                converged = true;
                break;
            }
        }
    }

    let PdState { x, mut phi_x, .. } = img;
    if !has_sensing {
        phi.matvec_into(&x, &mut phi_x);
    }
    let feasibility = spec.blocks.iter().map(|b| violation_at(b, &x, &phi_x)).collect();
    let objective = atomic_norm(&x, &spec.model)?;
    Ok(ReconResult {
        x_star: x,
        iterations,
        feasibility,
        objective,
        converged,
    })
}

/// Reflection coefficient of the Halpern update `(1+ρ)T(z) − ρz`.
const REFLECTION: f64 = 1.0;
const RESTART_SUFFICIENT: f64 = 0.2;
const RESTART_NECESSARY: f64 = 0.8;
const RESTART_ARTIFICIAL: f64 = 0.36;

/// Primal point, its image under `Φ`, and one dual vector per block.
struct PdState {
    x: Vec<f64>,
    phi_x: Vec<f64>,
    y: Vec<Vec<f64>>,
}

impl PdState {
    fn new(n: usize, m: usize, dims: &[usize]) -> Self {
        Self {
            x: vec![0.0; n],
            phi_x: vec![0.0; m],
            y: dims.iter().map(|&d| vec![0.0; d]).collect(),
        }
    }

    fn copy_from(&mut self, other: &PdState) {
        self.x.copy_from_slice(&other.x);
        self.phi_x.copy_from_slice(&other.phi_x);
        for (a, b) in self.y.iter_mut().zip(&other.y) {
            a.copy_from_slice(b);
        }
    }

    /// `z ← w1 ((1+ρ) T(z) − ρ z) + w0 z_anchor`; linear, so `Φx` follows along.
    fn halpern_step(&mut self, img: &PdState, anchor: &PdState, w1: f64, w0: f64, rho: f64) {
        let step = |z: &mut [f64], t: &[f64], a: &[f64]| {
            for ((zi, ti), ai) in z.iter_mut().zip(t).zip(a) {
                *zi = w1 * ((1.0 + rho) * ti - rho * *zi) + w0 * ai;
            }
        };
        step(&mut self.x, &img.x, &anchor.x);
        step(&mut self.phi_x, &img.phi_x, &anchor.phi_x);
        for ((y, t), a) in self.y.iter_mut().zip(&img.y).zip(&anchor.y) {
            step(y, t, a);
        }
    }
}

fn violation_at(b: &ConstraintBlock, x: &[f64], phi_x: &[f64]) -> f64 {
    match b.map() {
        LinearMapKind::Sensing => b.violation(phi_x),
        LinearMapKind::Identity => b.violation(x),
    }
}

fn check_measurements(
    q: &QuantizedMeasurements,
    ensemble: &SensingEnsemble,
    cfg_q: &QuantizerConfig,
    model: &AtomicModel,
) -> Result<()> {
    cfg_q.validate()?;
    if (q.delta - cfg_q.delta).abs() > 1e-12 * cfg_q.delta {
        return invalid_input("measurements were quantized with a different bin width");
    }
    if q.len() != ensemble.measurements() || ensemble.dither.len() != q.len() {
        return invalid_input("measurement count does not match the ensemble");
    }
    if ensemble.dim() != model.ambient_dim() {
        return invalid_input("ensemble width does not match the model dimension");
    }
    Ok(())
}

/// Consistent basis pursuit: `min ‖u‖_♯  s.t.  ‖Φu + ξ − q‖_∞ ≤ δ/2, ‖u‖₂ ≤ 1`.
pub fn cobp(
    q: &QuantizedMeasurements,
    ensemble: &SensingEnsemble,
    cfg_q: &QuantizerConfig,
    model: &AtomicModel,
    solver_cfg: &SolverConfig,
) -> Result<ReconResult> {
    check_measurements(q, ensemble, cfg_q, model)?;
    let blocks = vec![
        ConstraintBlock::ConsistencyBox {
            center: q.centered(ensemble),
            half_width: cfg_q.delta / 2.0,
        },
        ConstraintBlock::UnitL2Ball,
    ];
    solve_primal_dual(&ProgramSpec::new(*model, blocks, &ensemble.phi), solver_cfg)
}

/// CoBP with the extra bound `‖u‖_∞ ≤ λ`.
///
/// For `λ ≥ 1` the bound is implied by the unit ball and the block is left
/// out, so the result coincides with [`cobp`]. Otherwise plain CoBP is solved
/// first: a converged CoBP minimizer that already meets the bound is also a
/// minimizer here and is returned as is.
pub fn cobp_lambda(
    q: &QuantizedMeasurements,
    ensemble: &SensingEnsemble,
    cfg_q: &QuantizerConfig,
    model: &AtomicModel,
    lambda: f64,
    solver_cfg: &SolverConfig,
) -> Result<ReconResult> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return invalid_input(format!("lambda must be positive, got {lambda}"));
    }
    check_measurements(q, ensemble, cfg_q, model)?;
    let mut blocks = vec![
        ConstraintBlock::ConsistencyBox {
            center: q.centered(ensemble),
            half_width: cfg_q.delta / 2.0,
        },
        ConstraintBlock::UnitL2Ball,
    ];
    if lambda >= 1.0 {
        return solve_primal_dual(&ProgramSpec::new(*model, blocks, &ensemble.phi), solver_cfg);
    }
    let inf_ball = ConstraintBlock::InfBall { lambda };
    let relaxed = solve_primal_dual(&ProgramSpec::new(*model, blocks.clone(), &ensemble.phi), solver_cfg)?;
    if relaxed.converged {
        let v = inf_ball.violation(&relaxed.x_star);
        if v <= solver_cfg.tol_feas {
            let mut r = relaxed;
            r.feasibility.push(v.max(0.0));
            return Ok(r);
        }
    }
    blocks.push(inf_ball);
    let mut full = solve_primal_dual(&ProgramSpec::new(*model, blocks, &ensemble.phi), solver_cfg)?;
    full.iterations += relaxed.iterations;
    Ok(full)
}

/// Basis pursuit denoise with the unit-ball constraint added.
pub fn bpdn(
    q: &QuantizedMeasurements,
    ensemble: &SensingEnsemble,
    cfg_q: &QuantizerConfig,
    model: &AtomicModel,
    epsilon: f64,
    solver_cfg: &SolverConfig,
) -> Result<ReconResult> {
    if !(epsilon >= 0.0) {
        return invalid_input("epsilon must be nonnegative");
    }
    check_measurements(q, ensemble, cfg_q, model)?;
    let blocks = vec![
        ConstraintBlock::ResidualL2Ball {
            center: q.centered(ensemble),
            radius: epsilon,
        },
        ConstraintBlock::UnitL2Ball,
    ];
    solve_primal_dual(&ProgramSpec::new(*model, blocks, &ensemble.phi), solver_cfg)
}

/// Basis pursuit dequantizer with an `ℓ4` residual ball.
pub fn bpdq(
    q: &QuantizedMeasurements,
    ensemble: &SensingEnsemble,
    cfg_q: &QuantizerConfig,
    model: &AtomicModel,
    epsilon4: f64,
    solver_cfg: &SolverConfig,
) -> Result<ReconResult> {
    if !(epsilon4 >= 0.0) {
        return invalid_input("epsilon4 must be nonnegative");
    }
    check_measurements(q, ensemble, cfg_q, model)?;
    let blocks = vec![
        ConstraintBlock::ResidualL4Ball {
            center: q.centered(ensemble),
            radius: epsilon4,
        },
        ConstraintBlock::UnitL2Ball,
    ];
    solve_primal_dual(&ProgramSpec::new(*model, blocks, &ensemble.phi), solver_cfg)
}

pub const DEFAULT_KAPPA: f64 = 2.0;

/// Slack of the `ℓ4` radius, in units of `√M (δ/2)⁴`. Calibrated so the
/// uniform quantization noise lands inside the ball in well over 95% of draws
/// (the standard deviation of `Σ n_i⁴` is `(4/15) √M (δ/2)⁴`).
pub const DEFAULT_KAPPA4: f64 = 1.0;

/// `√(Mδ²/12 + κ√M)`.
pub fn epsilon_bpdn(m: usize, delta: f64, kappa: f64) -> f64 {
    let mf = m as f64;
    (mf * delta * delta / 12.0 + kappa * mf.sqrt()).sqrt()
}

/// `(M (δ/2)⁴/5 + κ₄ √M (δ/2)⁴)^{1/4}`.
pub fn epsilon_bpdq4(m: usize, delta: f64, kappa4: f64) -> f64 {
    let mf = m as f64;
    let h4 = (delta / 2.0).powi(4);
    (mf * h4 / 5.0 + kappa4 * mf.sqrt() * h4).powf(0.25)
}
