//! Low-complexity signal models: atomic norms, their proximal maps, convex
//! projections, and Gaussian mean width estimation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, QcsError, Result};
use crate::linalg::{norm1, norm2, norm_inf, svd, DenseMatrix};
use crate::rng::Stream;

/// Prior on the unknown signal. Low-rank signals are `n x n` matrices handled
/// through their column-stacked vectorization of length `n²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AtomicModel {
    Sparse { dim: usize, sparsity: usize },
    LowRank { side: usize, rank: usize },
}

impl AtomicModel {
    pub fn sparse(dim: usize, sparsity: usize) -> Result<Self> {
        let m = AtomicModel::Sparse { dim, sparsity };
        m.validate()?;
        Ok(m)
    }

    pub fn low_rank(side: usize, rank: usize) -> Result<Self> {
        let m = AtomicModel::LowRank { side, rank };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AtomicModel::Sparse { dim, sparsity } if sparsity >= 1 && sparsity <= dim => Ok(()),
            AtomicModel::LowRank { side, rank } if rank >= 1 && rank <= side => Ok(()),
            m => invalid_input(format!("invalid model parameters {m:?}")),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match *self {
            AtomicModel::Sparse { dim, .. } => dim,
            AtomicModel::LowRank { side, .. } => side * side,
        }
    }

    /// Radius `s` of the atomic ball containing the unit-norm model set.
    pub fn radius(&self) -> f64 {
        match *self {
            AtomicModel::Sparse { sparsity, .. } => (sparsity as f64).sqrt(),
            AtomicModel::LowRank { rank, .. } => (rank as f64).sqrt(),
        }
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.ambient_dim() {
            return invalid_input(format!(
                "vector of length {} for a model of ambient dimension {}",
                u.len(),
                self.ambient_dim()
            ));
        }
        Ok(())
    }

    fn as_matrix(&self, u: &[f64]) -> Result<DenseMatrix> {
        match *self {
            AtomicModel::LowRank { side, .. } => DenseMatrix::from_column_stacked(side, side, u),
            AtomicModel::Sparse { .. } => invalid_input("sparse model has no matrix form"),
        }
    }
}

/// `‖u‖₁` for sparse models, nuclear norm of `mat(u)` for low-rank models.
pub fn atomic_norm(u: &[f64], model: &AtomicModel) -> Result<f64> {
    model.check_len(u)?;
    match model {
        AtomicModel::Sparse { .. } => Ok(norm1(u)),
        AtomicModel::LowRank { .. } => Ok(svd(&model.as_matrix(u)?)?.sigma.iter().sum()),
    }
}

#[inline]
pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// Proximal map of `tau · ‖·‖_♯`: soft thresholding of entries, or of
/// singular values for low-rank models.
pub fn prox_atomic(u: &[f64], tau: f64, model: &AtomicModel) -> Result<Vec<f64>> {
    let mut out = u.to_vec();
    prox_atomic_in_place(&mut out, tau, model)?;
    Ok(out)
}

pub fn prox_atomic_in_place(u: &mut [f64], tau: f64, model: &AtomicModel) -> Result<()> {
    model.check_len(u)?;
    if !(tau >= 0.0) {
        return invalid_input(format!("prox parameter must be nonnegative, got {tau}"));
    }
    if tau == 0.0 {
        return Ok(());
    }
    match *model {
        AtomicModel::Sparse { .. } => {
            u.iter_mut().for_each(|v| *v = soft_threshold(*v, tau));
        }
        AtomicModel::LowRank { .. } => {
            let mut dec = svd(&model.as_matrix(u)?)?;
            dec.sigma.iter_mut().for_each(|s| *s = (*s - tau).max(0.0));
            u.copy_from_slice(&dec.reconstruct().to_column_stacked());
        }
    }
    Ok(())
}

/// Euclidean projection onto `{‖u‖₂ ≤ radius}`.
pub fn project_l2_ball(u: &[f64], radius: f64) -> Vec<f64> {
    let mut out = u.to_vec();
    project_l2_ball_in_place(&mut out, radius);
    out
}

pub fn project_l2_ball_in_place(u: &mut [f64], radius: f64) {
    let n = norm2(u);
    if n > radius {
        let s = radius / n;
        u.iter_mut().for_each(|v| *v *= s);
    }
}

/// Componentwise clamp to `[lo, hi]`.
pub fn project_box(u: &[f64], lo: &[f64], hi: &[f64]) -> Result<Vec<f64>> {
    if lo.len() != u.len() || hi.len() != u.len() {
        return invalid_input("box bounds do not match vector length");
    }
    if let Some(i) = lo.iter().zip(hi).position(|(l, h)| !(l <= h)) {
        return invalid_input(format!("empty box at coordinate {i}: lo > hi"));
    }
    Ok(u.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&v, (&l, &h))| v.clamp(l, h))
        .collect())
}

/// Output of [`project_lp_ball`]: the projection and its KKT multiplier
/// (`z − v + 4μ z³ = 0`, `μ = 0` when `v` is already inside).
#[derive(Debug, Clone, PartialEq)]
pub struct LpProjection {
    pub z: Vec<f64>,
    pub mu: f64,
}

const LP_MAX_OUTER: usize = 300;
const CUBIC_MAX_NEWTON: usize = 100;

/// Euclidean projection onto `{‖z‖_p ≤ radius}`; only `p = 4` is supported.
pub fn project_lp_ball(v: &[f64], radius: f64, p: u32) -> Result<LpProjection> {
    if p != 4 {
        return invalid_input(format!("only the l4 ball is supported, got p = {p}"));
    }
    if !(radius > 0.0) {
        return invalid_input(format!("ball radius must be positive, got {radius}"));
    }
    let r4 = radius.powi(4);
    let sum4 = |z: &[f64]| z.iter().map(|x| x.powi(4)).sum::<f64>();
    if sum4(v) <= r4 {
        return Ok(LpProjection { z: v.to_vec(), mu: 0.0 });
    }

    let mut z = vec![0.0; v.len()];
    let eval = |mu: f64, z: &mut [f64]| -> (f64, f64) {
        // returns (Σ z⁴ − r⁴, d/dμ)
        let mut h = -r4;
        let mut dh = 0.0;
        for (zi, &vi) in z.iter_mut().zip(v) {
            *zi = cubic_root(4.0 * mu, vi);
            let z2 = *zi * *zi;
            let z3 = z2 * *zi;
            h += z2 * z2;
            dh += 4.0 * z3 * (-4.0 * z3 / (1.0 + 12.0 * mu * z2));
        }
        (h, dh)
    };

    // Since a z³ ≤ |v| at the root, Σ z⁴ ≤ Σ (|v|/4μ)^{4/3}, which is ≤ r⁴ here.
    let s43: f64 = v.iter().map(|x| x.abs().powf(4.0 / 3.0)).sum();
    let mut hi = s43.powf(0.75) / (4.0 * radius.powi(3));
    let mut lo = 0.0;
    let mut mu = 0.5 * hi;
    let tol = 1e-15 * r4;
    for _ in 0..LP_MAX_OUTER {
        let (h, dh) = eval(mu, &mut z);
        if h.abs() <= tol || hi - lo <= 1e-17 * hi {
            return Ok(LpProjection { z, mu });
        }
        if h > 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        let newton = mu - h / dh;
        mu = if dh < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(QcsError::NumericalFailure(
        "l4-ball projection: multiplier search did not converge".into(),
    ))
}

/// Real root of `a z³ + z = v` for `a ≥ 0`.
fn cubic_root(a: f64, v: f64) -> f64 {
    if a == 0.0 || v == 0.0 {
        return v;
    }
    let t = v.abs();
    // Both bounds lie above the root; Newton on the convex branch then
    // decreases monotonically.
    let mut z = t.min((t / a).cbrt());
    for _ in 0..CUBIC_MAX_NEWTON {
        let f = a * z * z * z + z - t;
        let step = f / (3.0 * a * z * z + 1.0);
        let next = z - step;
        if !(next < z) || step <= 1e-17 * z {
            z = next.min(z);
            break;
        }
        z = next;
    }
    z.copysign(v)
}

/// Euclidean projection onto `{‖z − center‖₄ ≤ radius}`.
pub fn project_l4_ball_centered(v: &[f64], center: &[f64], radius: f64) -> Result<Vec<f64>> {
    let shifted: Vec<f64> = v.iter().zip(center).map(|(a, c)| a - c).collect();
    let p = project_lp_ball(&shifted, radius, 4)?;
    Ok(p.z.iter().zip(center).map(|(z, c)| z + c).collect())
}

/// `sup { |gᵀu| : u ∈ 𝒦, ‖u‖₂ ≤ 1 }` for the model's set 𝒦.
pub fn sup_correlation(g: &[f64], model: &AtomicModel) -> Result<f64> {
    model.check_len(g)?;
    match *model {
        AtomicModel::Sparse { sparsity, .. } => {
            let mut mags: Vec<f64> = g.iter().map(|x| x.abs()).collect();
            if sparsity < mags.len() {
                mags.select_nth_unstable_by(sparsity - 1, |a, b| b.total_cmp(a));
                mags.truncate(sparsity);
            }
            Ok(norm2(&mags))
        }
        AtomicModel::LowRank { rank, .. } => {
            let s = svd(&model.as_matrix(g)?)?.sigma;
            Ok(norm2(&s[..rank]))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// Monte-Carlo Gaussian mean width of the model set intersected with the unit ball.
pub fn width_estimate(model: &AtomicModel, n_samples: usize, seed: u64) -> Result<WidthEstimate> {
    model.validate()?;
    if n_samples < 2 {
        return invalid_input("width estimation needs at least 2 samples");
    }
    let mut rng = Stream::new(seed);
    let dim = model.ambient_dim();
    let mut g = vec![0.0; dim];
    let mut values = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        g.iter_mut().for_each(|x| *x = rng.normal());
        values.push(sup_correlation(&g, model)?);
    }
    let n = n_samples as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(WidthEstimate {
        mean,
        std_error: (var / n).sqrt(),
        n_samples,
    })
}

/// Membership in `{u : K0 ‖u‖²_∞ ≤ ‖u‖²₂}`.
pub fn in_antisparse(u: &[f64], k0: f64) -> bool {
    let inf = norm_inf(u);
    k0 * inf * inf <= u.iter().map(|x| x * x).sum::<f64>()
}
