//! Acceptance suite. Each test checks one acceptance criterion and writes a
//! single `PASS`/`FAIL` line to stderr (unbuffered, so it shows even when
//! the harness captures test output), then asserts.

use std::io::Write;
use std::time::Instant;

use cobp_core::bounds::{error_bound_gaussian, kappa_sg_upper, prop3_error, BoundConstants};
use cobp_core::experiments::{gen_sparse_signal, run_experiment, ExperimentSpec, Preset, Scale, Summary};
use cobp_core::linalg::{norm1, norm2, DenseMatrix};
use cobp_core::models::{
    atomic_norm, project_box, project_l2_ball, project_lp_ball, prox_atomic, soft_threshold, width_estimate,
    AtomicModel,
};
use cobp_core::rng::Stream;
use cobp_core::sensing::{draw_ensemble, quantize, sense, Distribution, QuantizerConfig};
use cobp_core::solvers::{bpdn, bpdq, cobp, epsilon_bpdn, epsilon_bpdq4, DEFAULT_KAPPA, DEFAULT_KAPPA4};
use cobp_core::SolverConfig;

const REFERENCE_SEED: u64 = 20240601;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("[acceptance {id}] {verdict} {name}: {detail}\n");
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}

fn slope_of(summary: &Summary, label: &str) -> f64 {
    summary
        .arm(label)
        .and_then(|a| a.slope)
        .unwrap_or_else(|| panic!("no slope for {label}"))
        .slope
}

fn means_of<'a>(summary: &'a Summary, label: &str) -> &'a [f64] {
    &summary.arm(label).unwrap_or_else(|| panic!("no arm {label}")).mean_error
}

fn within(v: f64, lo: f64, hi: f64) -> bool {
    v >= lo && v <= hi
}

#[test]
fn sparse_gaussian_slopes() {
    let spec = ExperimentSpec::preset(Preset::SparseGaussian, Scale::Desk, REFERENCE_SEED).unwrap();
    let start = Instant::now();
    let out = run_experiment(&spec, 0).unwrap();
    let s = &out.summary;
    let (cobp_slope, bpdn_slope) = (slope_of(s, "cobp"), slope_of(s, "bpdn"));
    let cobp_last = *means_of(s, "cobp").last().unwrap();
    let bpdn_last = *means_of(s, "bpdn").last().unwrap();
    let pass = within(cobp_slope, -1.25, -0.60) && within(bpdn_slope, -0.55, -0.12) && cobp_last <= 0.5 * bpdn_last;
    report(
        1,
        "sparse Gaussian slopes (desk)",
        pass,
        &format!(
            "cobp slope {cobp_slope:.3} in [-1.25,-0.60], bpdn slope {bpdn_slope:.3} in [-0.55,-0.12], \
             cobp/bpdn error at M/K=128 {:.3} <= 0.5, bpdq4 slope {:.3}, {:.0?}",
            cobp_last / bpdn_last,
            slope_of(s, "bpdq4"),
            start.elapsed()
        ),
    );
    assert!(pass);

    // CoBP means nonincreasing in M, with at most one adjacent inversion of at most 5%
    let m = means_of(s, "cobp");
    let inversions: Vec<f64> = m.windows(2).filter(|w| w[1] > w[0]).map(|w| w[1] / w[0] - 1.0).collect();
    assert!(inversions.len() <= 1 && inversions.iter().all(|r| *r <= 0.05), "{m:?}");
    // CoBP beats BPDN at the largest oversampling
    assert!(cobp_last < bpdn_last);
}

#[test]
fn low_rank_slopes() {
    let spec = ExperimentSpec::preset(Preset::LowRankGaussian, Scale::Desk, REFERENCE_SEED).unwrap();
    let start = Instant::now();
    let out = run_experiment(&spec, 0).unwrap();
    let s = &out.summary;
    let (cobp_slope, bpdn_slope) = (slope_of(s, "cobp"), slope_of(s, "bpdn"));
    let pass = within(cobp_slope, -1.15, -0.55) && within(bpdn_slope, -0.55, -0.12);
    report(
        2,
        "low-rank slopes (desk)",
        pass,
        &format!(
            "cobp slope {cobp_slope:.3} in [-1.15,-0.55], bpdn slope {bpdn_slope:.3} in [-0.55,-0.12], {:.0?}",
            start.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn bernoulli_gap() {
    let spec = ExperimentSpec::preset(Preset::BernoulliVsGaussian, Scale::Desk, REFERENCE_SEED).unwrap();
    let out = run_experiment(&spec, 0).unwrap();
    let s = &out.summary;
    let gauss = means_of(s, "cobp/gaussian");
    let bern = means_of(s, "cobp/bernoulli");
    let bern_lambda = means_of(s, "cobp-lambda/bernoulli");
    let mut pass = true;
    let mut detail = Vec::new();
    for (i, k) in spec.grid.iter().enumerate().filter(|(_, k)| **k <= 4.0) {
        let ratio = bern[i] / gauss[i];
        let gap_ok = ratio >= 1.15;
        let lambda_ok = bern_lambda[i] <= bern[i];
        pass &= gap_ok && lambda_ok;
        detail.push(format!(
            "K={k}: bernoulli/gaussian {ratio:.3} (>= 1.15 {}), cobp-lambda {:.4} <= cobp {:.4} ({})",
            if gap_ok { "ok" } else { "no" },
            bern_lambda[i],
            bern[i],
            if lambda_ok { "ok" } else { "no" }
        ));
    }
    report(3, "Bernoulli vs Gaussian gap (desk)", pass, &detail.join("; "));
    assert!(pass);
}

/// Minimum of `‖u‖₁` over `feasible` points of a grid on `[-1,1]²`, refined
/// twice around the incumbent.
fn grid_oracle_2d(feasible: impl Fn(f64, f64) -> bool) -> Option<f64> {
    let mut best: Option<(f64, f64, f64)> = None;
    let scan = |cx: f64, cy: f64, half: f64, steps: usize, best: &mut Option<(f64, f64, f64)>| {
        let h = 2.0 * half / steps as f64;
        for i in 0..=steps {
            let x = cx - half + i as f64 * h;
            for j in 0..=steps {
                let y = cy - half + j as f64 * h;
                let f = x.abs() + y.abs();
                if best.map_or(true, |b| f < b.0) && x * x + y * y <= 1.0 && feasible(x, y) {
                    *best = Some((f, x, y));
                }
            }
        }
    };
    scan(0.0, 0.0, 1.0, 2000, &mut best);
    for half in [2e-3, 2e-5] {
        let (_, x, y) = best?;
        scan(x, y, half, 400, &mut best);
    }
    best.map(|b| b.0)
}

fn bin_for_bin(t: &[f64], q: &[f64], delta: f64, tol: f64) -> bool {
    t.iter().zip(q).all(|(ti, qi)| {
        let same_bin = quantize(*ti, delta).unwrap() == *qi;
        same_bin || ((ti - qi).abs() - delta / 2.0).abs() <= tol * delta / 2.0
    })
}

#[test]
fn solver_correctness() {
    let start = Instant::now();
    let sc = SolverConfig::default();
    let cfg = QuantizerConfig::from_bits(3).unwrap();
    let delta = cfg.delta;
    let model2 = AtomicModel::sparse(2, 1).unwrap();
    let m = 8;
    let (mut worst_gap, mut resense_ok, mut bound_ok) = (0.0f64, true, true);
    let mut resense_checked = 0;
    for trial in 0..50u64 {
        let x0 = gen_sparse_signal(2, 1 + (trial % 2) as usize, 1000 + trial).unwrap();
        let ens = draw_ensemble(m, 2, Distribution::Gaussian, delta, 5000 + trial).unwrap();
        let q = sense(&x0, &ens, &cfg).unwrap();
        let c = q.centered(&ens);
        let (a, b): (Vec<f64>, Vec<f64>) = (0..m).map(|i| (ens.phi.get(i, 0), ens.phi.get(i, 1))).unzip();
        let resid = |x: f64, y: f64| -> Vec<f64> { (0..m).map(|i| a[i] * x + b[i] * y - c[i]).collect() };
        let eps2 = epsilon_bpdn(m, delta, DEFAULT_KAPPA);
        let eps4 = epsilon_bpdq4(m, delta, DEFAULT_KAPPA4);

        let programs: [(&str, Box<dyn Fn(&[f64]) -> bool>); 3] = [
            ("cobp", Box::new(|r: &[f64]| r.iter().all(|v| v.abs() <= delta / 2.0))),
            ("bpdn", Box::new(|r: &[f64]| norm2(r) <= eps2)),
            ("bpdq4", Box::new(|r: &[f64]| r.iter().map(|v| v.powi(4)).sum::<f64>().powf(0.25) <= eps4)),
        ];
        for (name, feas) in &programs {
            let res = match *name {
                "cobp" => cobp(&q, &ens, &cfg, &model2, &sc),
                "bpdn" => bpdn(&q, &ens, &cfg, &model2, eps2, &sc),
                _ => bpdq(&q, &ens, &cfg, &model2, eps4, &sc),
            }
            .unwrap();
            let oracle = grid_oracle_2d(|x, y| feas(&resid(x, y))).expect("grid found no feasible point");
            worst_gap = worst_gap.max((res.objective - oracle).abs());
            if feas(&resid(x0[0], x0[1])) && res.objective > norm1(&x0) + 10.0 * sc.tol_feas {
                bound_ok = false;
            }
            if *name == "cobp" && res.converged {
                let t = ens.phi.matvec(&res.x_star).unwrap();
                let t: Vec<f64> = t.iter().zip(&ens.dither).map(|(v, d)| v + d).collect();
                resense_ok &= bin_for_bin(&t, &q.q, delta, sc.tol_feas);
                resense_checked += 1;
            }
        }
    }
    // re-sensing on larger sparse instances
    for trial in 0..20u64 {
        let model = AtomicModel::sparse(64, 4).unwrap();
        let x0 = gen_sparse_signal(64, 4, 7000 + trial).unwrap();
        let ens = draw_ensemble(96, 64, Distribution::Gaussian, delta, 8000 + trial).unwrap();
        let q = sense(&x0, &ens, &cfg).unwrap();
        let res = cobp(&q, &ens, &cfg, &model, &sc).unwrap();
        if res.objective > atomic_norm(&x0, &model).unwrap() + 10.0 * sc.tol_feas {
            bound_ok = false;
        }
        if res.converged {
            let t = ens.phi.matvec(&res.x_star).unwrap();
            let t: Vec<f64> = t.iter().zip(&ens.dither).map(|(v, d)| v + d).collect();
            resense_ok &= bin_for_bin(&t, &q.q, delta, sc.tol_feas);
            resense_checked += 1;
        }
    }
    let pass = worst_gap <= 2e-3 && resense_ok && bound_ok && resense_checked > 0;
    report(
        4,
        "solver correctness",
        pass,
        &format!(
            "worst objective gap to grid oracle {worst_gap:.2e} <= 2e-3, re-sensing bin-for-bin on {resense_checked} \
             converged CoBP solves {resense_ok}, objective <= ||x0|| + 10 tol {bound_ok}, {:.0?}",
            start.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn prox_and_projection_suite() {
    let start = Instant::now();
    let mut rng = Stream::new(REFERENCE_SEED);

    // l1 prox subgradient conditions
    let mut worst_sub = 0.0f64;
    let mut sub_ok = true;
    let sparse = AtomicModel::sparse(8, 1).unwrap();
    for _ in 0..10_000 {
        let u: Vec<f64> = (0..8).map(|_| 3.0 * rng.normal()).collect();
        let tau = 2.0 * rng.uniform();
        let p = prox_atomic(&u, tau, &sparse).unwrap();
        for (ui, pi) in u.iter().zip(&p) {
            if *pi != 0.0 {
                let r = (ui - pi - tau * pi.signum()).abs();
                worst_sub = worst_sub.max(r);
            } else if ui.abs() > tau + 1e-12 {
                sub_ok = false;
            }
        }
    }
    sub_ok &= worst_sub <= 1e-12;

    // SVT on diagonal matrices
    let mut worst_svt = 0.0f64;
    for _ in 0..200 {
        let n = 2 + rng.below(7) as usize;
        let d: Vec<f64> = (0..n).map(|_| 2.0 * rng.normal()).collect();
        let tau = rng.uniform();
        let model = AtomicModel::low_rank(n, 1).unwrap();
        let x = DenseMatrix::from_diag(&d).to_column_stacked();
        let p = prox_atomic(&x, tau, &model).unwrap();
        let expect = DenseMatrix::from_diag(&d.iter().map(|v| soft_threshold(*v, tau)).collect::<Vec<_>>());
        let got = DenseMatrix::from_column_stacked(n, n, &p).unwrap();
        worst_svt = worst_svt.max(got.max_abs_diff(&expect));
    }
    let svt_ok = worst_svt <= 1e-10;

    // idempotence and nonexpansiveness
    let mut proj_ok = true;
    let mut worst_kkt = 0.0f64;
    for _ in 0..1000 {
        let n = 1 + rng.below(12) as usize;
        let v: Vec<f64> = (0..n).map(|_| 2.0 * rng.normal()).collect();
        let w: Vec<f64> = (0..n).map(|_| 2.0 * rng.normal()).collect();
        let r = 0.1 + 2.0 * rng.uniform();
        let lo: Vec<f64> = (0..n).map(|_| -rng.uniform()).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + 2.0 * rng.uniform()).collect();
        let projections: [Box<dyn Fn(&[f64]) -> Vec<f64>>; 3] = [
            Box::new(|z: &[f64]| project_l2_ball(z, r)),
            Box::new(|z: &[f64]| project_box(z, &lo, &hi).unwrap()),
            Box::new(|z: &[f64]| project_lp_ball(z, r, 4).unwrap().z),
        ];
        for p in &projections {
            let (pv, pw) = (p(&v), p(&w));
            let twice = p(&pv);
            let idem = pv.iter().zip(&twice).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let dist = |a: &[f64], b: &[f64]| norm2(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>());
            proj_ok &= idem <= 1e-10 && dist(&pv, &pw) <= dist(&v, &w) * (1.0 + 1e-12) + 1e-12;
        }
        // l4 KKT: z + 4μz³ = v, μ ≥ 0, ‖z‖₄ ≤ r with equality when μ > 0
        let proj = project_lp_ball(&v, r, 4).unwrap();
        let stat = v
            .iter()
            .zip(&proj.z)
            .map(|(vi, zi)| (zi + 4.0 * proj.mu * zi.powi(3) - vi).abs())
            .fold(0.0, f64::max);
        let norm4 = proj.z.iter().map(|z| z.powi(4)).sum::<f64>().powf(0.25);
        let primal = (norm4 - r).max(0.0) / r;
        let slack = if proj.mu > 0.0 { (norm4 - r).abs() / r } else { 0.0 };
        let dual = (-proj.mu).max(0.0);
        worst_kkt = worst_kkt.max(stat).max(primal).max(slack).max(dual);
    }
    let kkt_ok = worst_kkt <= 1e-8;
    let pass = sub_ok && svt_ok && proj_ok && kkt_ok;
    report(
        5,
        "prox and projection suite",
        pass,
        &format!(
            "l1 prox subgradient residual {worst_sub:.1e} ({sub_ok}), SVT vs diagonal soft-threshold {worst_svt:.1e}, \
             projections idempotent and nonexpansive {proj_ok}, l4 KKT residual {worst_kkt:.1e}, {:.0?}",
            start.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn quantization_noise_model() {
    let (m, n, delta) = (10_000, 16, 1.0);
    let cfg = QuantizerConfig::from_delta(delta).unwrap();
    let eps = epsilon_bpdn(m, delta, 2.0);
    let (mut within_ball, mut sum_sq, mut count) = (0, 0.0, 0usize);
    let (mut lo_var, mut hi_var) = (f64::INFINITY, 0.0f64);
    for draw in 0..100u64 {
        let x0 = gen_sparse_signal(n, 4, 900 + draw).unwrap();
        let ens = draw_ensemble(m, n, Distribution::Gaussian, delta, 100 + draw).unwrap();
        let q = sense(&x0, &ens, &cfg).unwrap();
        let phix = ens.phi.matvec(&x0).unwrap();
        let noise: Vec<f64> = (0..m).map(|i| q.q[i] - phix[i] - ens.dither[i]).collect();
        if norm2(&noise) <= eps {
            within_ball += 1;
        }
        let ss: f64 = noise.iter().map(|v| v * v).sum();
        let var = ss / m as f64;
        lo_var = lo_var.min(var);
        hi_var = hi_var.max(var);
        sum_sq += ss;
        count += m;
    }
    let rel_var = sum_sq / count as f64 / (delta * delta / 12.0);
    let pass = within_ball >= 95 && within(rel_var, 0.95, 1.05);
    report(
        6,
        "quantization noise model",
        pass,
        &format!(
            "{within_ball}/100 draws inside the BPDN ball (>= 95), pooled variance {rel_var:.4} x delta^2/12, \
             per-draw range [{:.4}, {:.4}]",
            lo_var * 12.0,
            hi_var * 12.0
        ),
    );
    assert!(pass);
}

/// `E‖g‖₂` for `g ~ N(0, I_k)` by Simpson integration of `r · χ_k(r)`.
fn chi_mean(k: usize) -> f64 {
    let kf = k as f64;
    // ln Γ(k/2) by the recurrence from Γ(1) = 1 or Γ(1/2) = √π
    let mut ln_gamma = if k % 2 == 0 { 0.0 } else { 0.5 * std::f64::consts::PI.ln() };
    let mut a = if k % 2 == 0 { 1.0 } else { 0.5 };
    while a < kf / 2.0 {
        ln_gamma += a.ln();
        a += 1.0;
    }
    let ln_norm = (kf / 2.0 - 1.0) * 2f64.ln() + ln_gamma;
    let f = |r: f64| if r == 0.0 { 0.0 } else { (kf * r.ln() - r * r / 2.0 - ln_norm).exp() };
    let (upper, steps) = (30.0, 200_000);
    let h = upper / steps as f64;
    let mut s = f(0.0) + f(upper);
    for i in 1..steps {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn width_estimates() {
    let start = Instant::now();
    let full = width_estimate(&AtomicModel::sparse(16, 16).unwrap(), 10_000, 11).unwrap();
    let chi = chi_mean(16);
    let full_ok = (full.mean - chi).abs() <= 3.0 * full.std_error;

    let lr = width_estimate(&AtomicModel::low_rank(32, 1).unwrap(), 2_000, 12).unwrap();
    let lr_ok = lr.mean * lr.mean <= 128.0;

    let mut sparse_ok = true;
    let mut sparse_detail = Vec::new();
    for (n, k) in [(256usize, 4usize), (1024, 16)] {
        let w = width_estimate(&AtomicModel::sparse(n, k).unwrap(), 10_000, 13).unwrap();
        let limit = 2.0 * k as f64 * (2.0 * n as f64 / k as f64).ln() + 5.0 * k as f64;
        sparse_ok &= w.mean * w.mean <= limit;
        sparse_detail.push(format!("(N={n},K={k}) {:.2} <= {limit:.2}", w.mean * w.mean));
    }
    let pass = full_ok && lr_ok && sparse_ok;
    report(
        7,
        "Gaussian mean width estimates",
        pass,
        &format!(
            "full ball {:.5} vs chi mean {chi:.5} (3 s.e. = {:.5}), rank-1 32x32 width^2 {:.2} <= 128, sparse {}, {:.0?}",
            full.mean,
            3.0 * full.std_error,
            lr.mean * lr.mean,
            sparse_detail.join(", "),
            start.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn bound_calculators() {
    let c = BoundConstants::default();
    let mut worst_slope = 0.0f64;
    for &(m, delta, w) in &[(16.0, 2.0, 1.0), (100.0, 0.75, 3.0), (1e4, 3.0, 10.0), (2.0, 0.1, 0.5)] {
        let h = 1.0;
        let f = |mm: f64| error_bound_gaussian(mm, delta, w, &c).unwrap().ln();
        let slope = (f(m * (1.0 + h)) - f(m)) / (1.0 + h).ln();
        worst_slope = worst_slope.max((slope + 0.25).abs());
    }
    let slope_ok = worst_slope <= 1e-12;
    let prop3_ok = [0.0, 0.3, 1.7].iter().all(|&e| prop3_error(e, 0.4, 0.0).unwrap() == e);
    let kappa = kappa_sg_upper(1.0).unwrap();
    let kappa_ok = (kappa - 9.0 * 27f64.sqrt()).abs() <= 1e-9;
    let pass = slope_ok && prop3_ok && kappa_ok;
    report(
        8,
        "bound calculators",
        pass,
        &format!(
            "finite-difference log-log slope deviation {worst_slope:.1e}, prop3_error(eps, lambda, 0) == eps {prop3_ok}, \
             kappa_sg_upper(1) = {kappa:.9}"
        ),
    );
    assert!(pass);
}
