use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use metric_cubature::discretizer::{monte_carlo, plain_rule, RuleMethod};
use metric_cubature::error_harness::{
    bound_constants, compare_methods, decay_experiment, fit_line, make_eval_net, reference_values, sup_error,
    zonal_exact, DecayConfig, Oracle, ERROR_FLOOR,
};
use metric_cubature::function_classes::{sphere_basis, KernelProfile};
use metric_cubature::geometry::{sample_uniform, SpaceSpec};
use metric_cubature::moment_match::CompressMethod;

#[test]
fn cloud_is_exact_against_itself() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let cloud = sample_uniform(&s2, 500, 1).unwrap();
    let k = KernelProfile::parse("abs", &s2).unwrap();
    let net = make_eval_net(&s2, 50, 2).unwrap();
    let reference = reference_values(&k, &net, Oracle::FineCloud { cloud: &cloud, g: None }).unwrap();
    let mut rule = monte_carlo(&cloud, None, 1, 0).unwrap();
    rule.nodes = cloud.points().map(|p| p.to_vec()).collect();
    rule.weights = cloud.weights().to_vec();
    assert!(sup_error(&rule, &k, &net, &reference).unwrap().value <= 1e-14);
}

#[test]
fn zonal_exact_values() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    assert_abs_diff_eq!(zonal_exact(&KernelProfile::parse("abs", &s2).unwrap(), 2).unwrap(), 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(zonal_exact(&KernelProfile::parse("linear", &s2).unwrap(), 2).unwrap(), 0.0, epsilon = 1e-12);
    let s3 = SpaceSpec::sphere(3).unwrap();
    // E|t| on S³ is 4/(3π)
    let v = zonal_exact(&KernelProfile::parse("abs", &s3).unwrap(), 3).unwrap();
    assert_abs_diff_eq!(v, 4.0 / (3.0 * PI), epsilon = 1e-12);
}

#[test]
fn zonal_exact_agrees_with_a_large_cloud() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let m = 100_000;
    let cloud = sample_uniform(&s2, m, 3).unwrap();
    let k = KernelProfile::parse("abs", &s2).unwrap();
    let net = make_eval_net(&s2, 20, 4).unwrap();
    let exact = reference_values(&k, &net, Oracle::ZonalExact).unwrap();
    let fine = reference_values(&k, &net, Oracle::FineCloud { cloud: &cloud, g: None }).unwrap();
    for (a, b) in exact.iter().zip(&fine) {
        assert!((a - b).abs() <= 3.0 / (m as f64).sqrt(), "{a} vs {b}");
    }
}

#[test]
fn monte_carlo_error_is_in_the_expected_band() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let k = KernelProfile::parse("abs", &s2).unwrap();
    let cloud = sample_uniform(&s2, 200_000, 5).unwrap();
    let n = 10_000;
    let m_eval = 200;
    let net = make_eval_net(&s2, m_eval, 6).unwrap();
    let reference = reference_values(&k, &net, Oracle::FineCloud { cloud: &cloud, g: None }).unwrap();
    let rule = monte_carlo(&cloud, None, n, 7).unwrap();
    let e = sup_error(&rule, &k, &net, &reference).unwrap().value;
    let scale = (m_eval as f64).ln().sqrt() / (n as f64).sqrt();
    assert!(e >= 0.1 * scale && e <= 10.0 * scale, "{e} vs {scale}");
}

#[test]
fn linear_profile_hits_the_exactness_floor() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let cloud = sample_uniform(&s2, 20_000, 8).unwrap();
    let k = KernelProfile::parse("linear", &s2).unwrap();
    let b1 = sphere_basis(2, 1).unwrap();
    let n = 64;
    let rule = plain_rule(&cloud, n, &b1, 9, CompressMethod::default()).unwrap();
    let net = make_eval_net(&s2, 500, 10).unwrap();
    let reference = reference_values(&k, &net, Oracle::FineCloud { cloud: &cloud, g: None }).unwrap();
    let e = sup_error(&rule, &k, &net, &reference).unwrap().value;
    assert!(e <= 10.0 * (b1.r + 2) as f64 * n as f64 * 1e-9, "{e}");
}

#[test]
fn constant_profile_is_reported_at_the_floor() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let mut cfg = DecayConfig::new(s2, "const:1", vec![4, 8, 16]);
    cfg.seeds = 2;
    cfg.methods = vec![RuleMethod::Plain];
    cfg.fine_factor = 20;
    let report = compare_methods(&cfg).unwrap();
    let s = report.series(RuleMethod::Plain).unwrap();
    assert!(s.at_floor && s.fit.is_none());
    assert!(s.median.iter().all(|&e| e <= ERROR_FLOOR));
}

#[test]
fn sup_error_grows_over_nested_nets() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let cloud = sample_uniform(&s2, 10_000, 11).unwrap();
    let k = KernelProfile::parse("abs", &s2).unwrap();
    let rule = monte_carlo(&cloud, None, 100, 12).unwrap();
    let net = make_eval_net(&s2, 400, 13).unwrap();
    let reference = reference_values(&k, &net, Oracle::FineCloud { cloud: &cloud, g: None }).unwrap();
    let mut last = 0.0;
    for m in [10, 50, 100, 400] {
        let sub = net.prefix(m);
        let e = sup_error(&rule, &k, &sub, &reference[..m]).unwrap().value;
        assert!(e >= last);
        last = e;
    }
    let norms: Vec<f64> = (1..=4).map(|j| net.prefix(j * 100).mesh_norm()).collect();
    assert!(norms.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn measured_errors_stay_below_the_bound() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let mut cfg = DecayConfig::new(s2, "abs", vec![16, 64]);
    cfg.seeds = 2;
    cfg.fine_factor = 20;
    let report = compare_methods(&cfg).unwrap();
    let c = report.constants.as_ref().unwrap();
    for row in &report.rows {
        assert!(row.sup_error <= c.bound(row.n));
    }
    assert!(report.series(RuleMethod::Plain).unwrap().fit.is_none());
}

#[test]
fn decay_experiment_validates_its_range() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    assert!(decay_experiment(&DecayConfig::new(s2, "abs", vec![16, 32, 64, 128])).is_err());
    assert!(decay_experiment(&DecayConfig::new(s2, "abs", vec![16, 64, 1000])).is_err());
    assert!(decay_experiment(&DecayConfig::new(s2, "abs", vec![64, 16, 1000, 2000])).is_err());
    let mut cfg = DecayConfig::new(s2, "abs", vec![16]);
    cfg.methods = vec![RuleMethod::Euclidean];
    assert!(compare_methods(&cfg).is_err());
}

#[test]
fn line_fit_and_constants() {
    let xs = [1.0, 2.0, 3.0, 4.0];
    let fit = fit_line(&xs, &[3.0, 1.0, -1.0, -3.0]).unwrap();
    assert_abs_diff_eq!(fit.slope, -2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    assert!(fit.reliable);
    let c = bound_constants(2, 2, 2.0);
    assert_abs_diff_eq!(c.c1, 40.0 * PI, epsilon = 1e-12);
    assert_abs_diff_eq!(c.exponent, -1.25, epsilon = 1e-15);
    assert!(c.chain_holds());
}
