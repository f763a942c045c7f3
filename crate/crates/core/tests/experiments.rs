use cobp_core::experiments::{
    build_instance, gen_sparse_signal, read_trials_csv, run_experiment, run_trial, summarize, write_trials_csv,
    Arm, ExperimentSpec, Method, Preset, Scale, TrialRecord,
};
use cobp_core::linalg::norm_inf;
use cobp_core::sensing::{draw_ensemble, sense, Distribution, QuantizerConfig};
use cobp_core::solvers::{cobp, cobp_lambda};
use cobp_core::SolverConfig;

fn small_spec() -> ExperimentSpec {
    let mut s = ExperimentSpec::preset(Preset::SparseGaussian, Scale::Desk, 3).unwrap();
    s.grid = vec![8.0, 16.0];
    s.trials = 2;
    s
}

#[test]
fn sparse_support_is_uniform() {
    // chi-squared goodness of fit, 15 degrees of freedom, 1% critical value 30.578
    let (n, draws) = (16usize, 10_000u64);
    let mut counts = vec![0usize; n];
    for seed in 0..draws {
        let x = gen_sparse_signal(n, 1, seed).unwrap();
        counts[x.iter().position(|v| *v != 0.0).unwrap()] += 1;
    }
    let expected = draws as f64 / n as f64;
    let chi2: f64 = counts.iter().map(|c| (*c as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < 30.578, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn trial_is_reproducible() {
    let spec = small_spec();
    let arm = Arm {
        method: Method::Cobp,
        dist: Distribution::Gaussian,
    };
    let mut a = run_trial(&spec, &arm, 16.0, 1).unwrap();
    let mut b = run_trial(&spec, &arm, 16.0, 1).unwrap();
    a.wall_ms = 0.0;
    b.wall_ms = 0.0;
    assert_eq!(a, b);
    assert!(a.error_l2 >= 0.0);
    assert_eq!(a.seed, spec.trial_seed(16.0, 1));
}

#[test]
fn measurement_count_follows_grid() {
    let spec = small_spec();
    let inst = build_instance(&spec, Distribution::Gaussian, 16.0, 0).unwrap();
    assert_eq!(inst.ensemble.measurements(), 16 * 8);
    let lr = ExperimentSpec::preset(Preset::LowRankGaussian, Scale::Paper, 3).unwrap();
    let inst = build_instance(&lr, Distribution::Gaussian, 4.0, 0).unwrap();
    assert_eq!(inst.ensemble.measurements(), 4 * 64);
    assert_eq!(inst.ensemble.dim(), 32 * 32);
}

#[test]
fn arms_share_signal_and_dither() {
    let spec = ExperimentSpec::preset(Preset::BernoulliVsGaussian, Scale::Desk, 3).unwrap();
    let g = build_instance(&spec, Distribution::Gaussian, 2.0, 0).unwrap();
    let b = build_instance(&spec, Distribution::Bernoulli, 2.0, 0).unwrap();
    assert_eq!(g.x0, b.x0);
    assert_eq!(g.ensemble.dither, b.ensemble.dither);
    assert!(b.ensemble.phi.as_slice().iter().all(|v| v.abs() == 1.0));
}

#[test]
fn records_do_not_depend_on_parallelism() {
    let spec = small_spec();
    let strip = |mut rs: Vec<TrialRecord>| {
        rs.iter_mut().for_each(|r| r.wall_ms = 0.0);
        rs
    };
    let one = run_experiment(&spec, 1).unwrap();
    let many = run_experiment(&spec, 4).unwrap();
    assert_eq!(strip(one.records.clone()), strip(many.records.clone()));
    assert_eq!(one.summary, many.summary);
    assert_eq!(one.records.len(), 3 * 2 * 2);
    assert_eq!(one.failure_fraction(), 0.0);
}

#[test]
fn csv_round_trip_is_lossless() {
    let spec = small_spec();
    let out = run_experiment(&spec, 0).unwrap();
    let mut buf = Vec::new();
    write_trials_csv(&out.records, &mut buf).unwrap();
    let back = read_trials_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), out.records.len());
    for (a, b) in out.records.iter().zip(&back) {
        assert_eq!(a.preset, b.preset);
        assert_eq!(a.method, b.method);
        assert_eq!(a.grid_value.to_bits(), b.grid_value.to_bits());
        assert_eq!(a.trial_index, b.trial_index);
        assert_eq!(a.seed, b.seed);
        assert_eq!(a.error_l2.to_bits(), b.error_l2.to_bits());
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.converged, b.converged);
        assert_eq!(a.saturation_fraction.to_bits(), b.saturation_fraction.to_bits());
    }
    assert!(read_trials_csv("a,b\n1,2\n".as_bytes()).is_err());
}

#[test]
fn summary_excludes_failed_trials() {
    let spec = small_spec();
    let out = run_experiment(&spec, 0).unwrap();
    let mut records = out.records.clone();
    records[0].failure = Some("diverged".into());
    records[0].error_l2 = f64::NAN;
    let s = summarize(&spec, &records);
    assert_eq!(s.metadata.failed_trials, 1);
    let arm = s.arm(&records[0].method).unwrap();
    assert_eq!(arm.included[0], 1);
    assert_eq!(arm.excluded[0], 1);
    assert!(arm.mean_error[0].is_finite());
}

#[test]
fn cobp_lambda_matches_cobp_when_bound_is_slack() {
    let cfg = QuantizerConfig::from_bits(3).unwrap();
    let model = cobp_core::AtomicModel::sparse(48, 3).unwrap();
    let x0 = gen_sparse_signal(48, 3, 21).unwrap();
    let ens = draw_ensemble(64, 48, Distribution::Gaussian, cfg.delta, 22).unwrap();
    let q = sense(&x0, &ens, &cfg).unwrap();
    let sc = SolverConfig::default();
    let base = cobp(&q, &ens, &cfg, &model, &sc).unwrap();
    let big = cobp_lambda(&q, &ens, &cfg, &model, 2.0, &sc).unwrap();
    assert!(cobp_core::linalg::dist2(&base.x_star, &big.x_star) <= 10.0 * sc.tol_feas);
    let slack = cobp_lambda(&q, &ens, &cfg, &model, norm_inf(&base.x_star) * 1.01, &sc).unwrap();
    assert_eq!(slack.x_star, base.x_star);
    let tight_lambda = 0.9 * norm_inf(&base.x_star);
    let tight = cobp_lambda(&q, &ens, &cfg, &model, tight_lambda, &sc).unwrap();
    assert!(tight.converged);
    assert!(norm_inf(&tight.x_star) <= tight_lambda * (1.0 + 1e-4));
    assert!(tight.objective >= base.objective - 1e-6);
}
