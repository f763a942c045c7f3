//! Dense linear algebra for the small problems in scope: row-major matrices,
//! a one-sided Jacobi SVD, and power-iteration operator norms.

use crate::error::{invalid_input, QcsError, Result};
use crate::rng::Stream;

/// Row-major dense matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return invalid_input(format!(
                "matrix data has {} entries, expected {}x{}",
                data.len(),
                rows,
                cols
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return invalid_input("matrix has non-finite entries");
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// Rebuilds an `rows x cols` matrix from its column-stacked vectorization.
    pub fn from_column_stacked(rows: usize, cols: usize, v: &[f64]) -> Result<Self> {
        if v.len() != rows * cols {
            return invalid_input(format!(
                "vectorized length {} does not match {}x{}",
                v.len(),
                rows,
                cols
            ));
        }
        let mut m = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m.data[i * cols + j] = v[j * rows + i];
            }
        }
        Ok(m)
    }

    /// Column-stacking vectorization `(u_1ᵀ, …, u_nᵀ)ᵀ`.
    pub fn to_column_stacked(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                v.push(self.data[i * self.cols + j]);
            }
        }
        v
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return invalid_input(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            ));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                axpy(a, other.row(k), out_row);
            }
        }
        Ok(out)
    }

    /// `out = A x`
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    /// `out = Aᵀ y`
    pub fn matvec_t_into(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                axpy(yi, self.row(i), out);
            }
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return invalid_input(format!(
                "vector length {} does not match {} columns",
                x.len(),
                self.cols
            ));
        }
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out);
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

/// `y += a x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Thin singular value decomposition `A = U diag(sigma) Vᵀ`.
///
/// For an `m x n` input, `U` is `m x k`, `V` is `n x k` with `k = min(m, n)`,
/// both with orthonormal columns; `sigma` is nonincreasing.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> DenseMatrix {
        let (m, n, k) = (self.u.rows, self.v.rows, self.sigma.len());
        let mut out = DenseMatrix::zeros(m, n);
        for (l, &s) in self.sigma.iter().enumerate().take(k) {
            if s == 0.0 {
                continue;
            }
            for i in 0..m {
                let a = s * self.u.get(i, l);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * self.v.get(j, l);
                }
            }
        }
        out
    }
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd(a: &DenseMatrix) -> Result<SvdResult> {
    if a.rows == 0 || a.cols == 0 {
        return invalid_input("svd of an empty matrix");
    }
    if a.data.iter().any(|v| !v.is_finite()) {
        return invalid_input("svd input has non-finite entries");
    }
    if a.rows < a.cols {
        let t = svd_tall(&a.transpose())?;
        return Ok(SvdResult {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    svd_tall(a)
}

fn svd_tall(a: &DenseMatrix) -> Result<SvdResult> {
    let (m, n) = (a.rows, a.cols);
    // columns of A and V stored contiguously
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a.get(i, j)).collect()).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let tol = f64::EPSILON * m as f64;

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut cols, p, q, c, s);
                rotate_pair(&mut vcols, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(QcsError::NumericalFailure(
            "jacobi svd did not converge".into(),
        ));
    }

    let mut order: Vec<(usize, f64)> = cols.iter().map(|c| norm2(c)).enumerate().collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1));

    let mut u = DenseMatrix::zeros(m, n);
    let mut v = DenseMatrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (l, &(j, s)) in order.iter().enumerate() {
        sigma.push(s);
        for i in 0..n {
            v.set(i, l, vcols[j][i]);
        }
        if s > 0.0 {
            for i in 0..m {
                u.set(i, l, cols[j][i] / s);
            }
        } else {
            missing.push(l);
        }
    }
    complete_orthonormal_columns(&mut u, &missing);
    Ok(SvdResult { u, sigma, v })
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all other
/// columns (modified Gram–Schmidt against the canonical basis).
fn complete_orthonormal_columns(u: &mut DenseMatrix, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let (m, k) = (u.rows, u.cols);
    let mut filled: Vec<bool> = (0..k).map(|l| !missing.contains(&l)).collect();
    let mut candidate = 0usize;
    for &l in missing {
        while candidate < m {
            let mut w = vec![0.0; m];
            w[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for c in 0..k {
                    if !filled[c] {
                        continue;
                    }
                    let col: Vec<f64> = (0..m).map(|i| u.get(i, c)).collect();
                    let proj = dot(&col, &w);
                    axpy(-proj, &col, &mut w);
                }
            }
            let nw = norm2(&w);
            if nw > 1e-8 {
                for i in 0..m {
                    u.set(i, l, w[i] / nw);
                }
                filled[l] = true;
                break;
            }
        }
    }
}

/// Abstract linear map with an adjoint.
pub trait LinearOperator {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn adjoint(&self, y: &[f64], out: &mut [f64]);
}

impl LinearOperator for DenseMatrix {
    fn input_dim(&self) -> usize {
        self.cols
    }
    fn output_dim(&self) -> usize {
        self.rows
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.matvec_into(x, out)
    }
    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        self.matvec_t_into(y, out)
    }
}

/// Largest relative discrepancy `|⟨Lx, y⟩ − ⟨x, Lᵀy⟩|` over random pairs.
pub fn adjoint_mismatch(op: &dyn LinearOperator, trials: usize, seed: u64) -> f64 {
    let mut rng = Stream::new(seed);
    let mut worst: f64 = 0.0;
    let mut lx = vec![0.0; op.output_dim()];
    let mut lty = vec![0.0; op.input_dim()];
    for _ in 0..trials {
        let x = rng.normal_vec(op.input_dim());
        let y = rng.normal_vec(op.output_dim());
        op.apply(&x, &mut lx);
        op.adjoint(&y, &mut lty);
        let a = dot(&lx, &y);
        let b = dot(&x, &lty);
        worst = worst.max((a - b).abs() / (1.0 + a.abs().max(b.abs())));
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    /// False when the iteration cap was reached before the stopping rule.
    pub converged: bool,
}

pub const POWER_MAX_ITERS: usize = 200;
pub const POWER_REL_TOL: f64 = 1e-9;
const POWER_SEED: u64 = 0x0b5e_55ed;

/// Spectral norm estimate by power iteration on `LᵀL`.
pub fn operator_norm(op: &dyn LinearOperator) -> NormEstimate {
    let n = op.input_dim();
    let mut rng = Stream::new(POWER_SEED);
    let mut x = rng.normal_vec(n);
    let nx = norm2(&x);
    if nx == 0.0 || n == 0 {
        return NormEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    x.iter_mut().for_each(|v| *v /= nx);
    let mut lx = vec![0.0; op.output_dim()];
    let mut ltlx = vec![0.0; n];
    let mut prev = 0.0;
    let mut best = 0.0;
    for it in 1..=POWER_MAX_ITERS {
        op.apply(&x, &mut lx);
        let est = norm2(&lx);
        best = f64::max(best, est);
        if it > 1 && (est - prev).abs() <= POWER_REL_TOL * est {
            return NormEstimate {
                value: best,
                iterations: it,
                converged: true,
            };
        }
        prev = est;
        op.adjoint(&lx, &mut ltlx);
        let nz = norm2(&ltlx);
        if nz == 0.0 {
            return NormEstimate {
                value: best,
                iterations: it,
                converged: true,
            };
        }
        for (xi, zi) in x.iter_mut().zip(&ltlx) {
            *xi = zi / nz;
        }
    }
    NormEstimate {
        value: best,
        iterations: POWER_MAX_ITERS,
        converged: false,
    }
}
