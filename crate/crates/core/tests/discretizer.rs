use approx::assert_abs_diff_eq;
use metric_cubature::discretizer::{
    apply, build_euclidean, build_signed, monte_carlo, plain_rule, DensityField, NormKind, RuleMethod,
};
use metric_cubature::function_classes::{basis_for, sphere_basis, KernelProfile};
use metric_cubature::geometry::{sample_uniform, SpaceSpec};
use metric_cubature::moment_match::CompressMethod;
use metric_cubature::net_partition::besicovitch::NxPolicy;

#[test]
fn one_cell_rule_matches_constants_and_linears() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let cloud = sample_uniform(&s2, 2000, 1).unwrap();
    let b1 = sphere_basis(2, 1).unwrap();
    let rule = plain_rule(&cloud, 1, &b1, 3, CompressMethod::default()).unwrap();
    assert!(rule.len() <= b1.r + 2);
    assert_abs_diff_eq!(rule.weight_sum(), 1.0, epsilon = 1e-12);
    for k in 0..3 {
        let exact: f64 = cloud.points().zip(cloud.weights()).map(|(p, w)| w * p[k]).sum();
        assert_abs_diff_eq!(rule.integrate(|y| y[k]), exact, epsilon = 1e-9);
    }
}

#[test]
fn plain_rule_structure() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let cloud = sample_uniform(&s2, 20_000, 2).unwrap();
    let b1 = sphere_basis(2, 1).unwrap();
    let n = 64;
    let rule = plain_rule(&cloud, n, &b1, 4, CompressMethod::default()).unwrap();
    assert_eq!(rule.meta.method, RuleMethod::Plain);
    assert!(rule.len() <= (b1.r + 2) * n);
    assert!(rule.weights.iter().all(|&w| w >= 0.0));
    assert_abs_diff_eq!(rule.weight_sum(), 1.0, epsilon = 1e-12);
    for k in 0..3 {
        let exact: f64 = cloud.points().zip(cloud.weights()).map(|(p, w)| w * p[k]).sum();
        // the cloud's first moments are O(M^{-1/2}); the rule reproduces them exactly
        assert!(exact.abs() < 0.05);
        assert_abs_diff_eq!(rule.integrate(|y| y[k]), exact, epsilon = 1e-9 * n as f64);
    }
}

#[test]
fn rules_are_deterministic() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let cloud = sample_uniform(&s2, 5000, 3).unwrap();
    let b1 = sphere_basis(2, 1).unwrap();
    let a = plain_rule(&cloud, 16, &b1, 9, CompressMethod::default()).unwrap();
    let b = plain_rule(&cloud, 16, &b1, 9, CompressMethod::default()).unwrap();
    assert_eq!(a, b);
    let c = plain_rule(&cloud, 16, &b1, 10, CompressMethod::default()).unwrap();
    assert_ne!(a.nodes, c.nodes);
}

#[test]
fn signed_rule_with_zero_density() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let cloud = sample_uniform(&s2, 10_000, 4).unwrap();
    let b1 = sphere_basis(2, 1).unwrap();
    let g = DensityField::constant(&cloud, 0.0, NormKind::SupNormalized).unwrap();
    let n = 32;
    let s = build_signed(&cloud, &g, n, &b1, 5, CompressMethod::default()).unwrap();
    assert_abs_diff_eq!(s.b, 0.5, epsilon = 1e-12);
    assert!(s.rule.len() <= 2 * (b1.r + 2) * n);
    assert_abs_diff_eq!(s.rule.weight_sum(), 0.0, epsilon = 1e-9);
    for k in 0..3 {
        assert_abs_diff_eq!(s.rule.integrate(|y| y[k]), 0.0, epsilon = 1e-8);
    }
}

#[test]
fn signed_rule_reproduces_weighted_moments() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let cloud = sample_uniform(&s2, 10_000, 5).unwrap();
    let b1 = sphere_basis(2, 1).unwrap();
    let g = DensityField::parse("sign:1", &cloud, NormKind::SupNormalized).unwrap();
    let s = build_signed(&cloud, &g, 32, &b1, 6, CompressMethod::default()).unwrap();
    for k in 0..3 {
        let exact: f64 = cloud
            .points()
            .zip(cloud.weights())
            .zip(&g.values)
            .map(|((p, w), gi)| w * gi * p[k])
            .sum();
        assert_abs_diff_eq!(s.rule.integrate(|y| y[k]), exact, epsilon = 1e-8);
    }
    assert!(DensityField::constant(&cloud, 1.0, NormKind::L1Normalized)
        .and_then(|g| build_signed(&cloud, &g, 4, &b1, 1, CompressMethod::default()))
        .is_err());
}

#[test]
fn euclidean_rule_on_the_ball() {
    let b2 = SpaceSpec::ball(2, 1.0).unwrap();
    let cloud = sample_uniform(&b2, 20_000, 6).unwrap();
    let basis = basis_for(&b2, 1).unwrap();
    let g = DensityField::constant(&cloud, 1.0, NormKind::L1Normalized).unwrap();
    let n = 1000;
    let rule = build_euclidean(&cloud, &g, n, &basis, NxPolicy::Adaptive, 7, CompressMethod::default()).unwrap();
    assert!(rule.len() <= n);
    assert_abs_diff_eq!(rule.weight_sum(), 1.0, epsilon = 1e-9);
    for (a, b) in [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)] {
        let m = |y: &[f64]| y[0].powi(a) * y[1].powi(b);
        let exact: f64 = cloud.points().zip(cloud.weights()).map(|(p, w)| w * m(p)).sum();
        assert_abs_diff_eq!(rule.integrate(m), exact, epsilon = 1e-8);
    }
    // budget too small for a single atom per cell
    assert!(build_euclidean(&cloud, &g, 10, &basis, NxPolicy::Adaptive, 7, CompressMethod::default()).is_err());
}

#[test]
fn euclidean_rule_respects_the_support_of_g() {
    let b2 = SpaceSpec::ball(2, 1.0).unwrap();
    let cloud = sample_uniform(&b2, 20_000, 8).unwrap();
    let basis = basis_for(&b2, 1).unwrap();
    let raw: Vec<f64> = cloud.points().map(|p| if p[0] > 0.0 { 1.0 } else { 0.0 }).collect();
    let mass: f64 = raw.iter().zip(cloud.weights()).map(|(v, w)| v * w).sum();
    let g = DensityField::new("half", raw.iter().map(|v| v / mass).collect(), NormKind::L1Normalized, &cloud).unwrap();
    let rule = build_euclidean(&cloud, &g, 1000, &basis, NxPolicy::Adaptive, 9, CompressMethod::default()).unwrap();
    assert!(rule.nodes.iter().all(|y| y[0] > 0.0));
    assert_abs_diff_eq!(rule.weight_sum(), 1.0, epsilon = 1e-9);
}

#[test]
fn monte_carlo_rule() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let cloud = sample_uniform(&s2, 10_000, 10).unwrap();
    let rule = monte_carlo(&cloud, None, 500, 1).unwrap();
    assert_eq!(rule.len(), 500);
    assert!(rule.weights.iter().all(|&w| (w - 1.0 / 500.0).abs() < 1e-15));
    let c = KernelProfile::parse("const:2.5", &s2).unwrap();
    assert_abs_diff_eq!(apply(&rule, &c, &[0.0, 0.0, 1.0]).unwrap(), 2.5, epsilon = 1e-12);
    assert!(monte_carlo(&cloud, None, 0, 1).is_err());
}

#[test]
fn monte_carlo_variance_matches_theory() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let cloud = sample_uniform(&s2, 20_000, 11).unwrap();
    let n = 100;
    // f = y₃ has Var = 1/3 under the uniform measure
    let est: Vec<f64> = (0..400)
        .map(|s| monte_carlo(&cloud, None, n, s).unwrap().integrate(|y| y[2]))
        .collect();
    let mean = est.iter().sum::<f64>() / est.len() as f64;
    let var = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (est.len() - 1) as f64;
    let target = 1.0 / 3.0 / n as f64;
    assert!((var / target - 1.0).abs() < 0.25, "var {var} vs {target}");
}

#[test]
fn apply_single_atom_and_linearity() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let cloud = sample_uniform(&s2, 3000, 12).unwrap();
    let k = KernelProfile::parse("abs", &s2).unwrap();
    let lin = KernelProfile::parse("linear", &s2).unwrap();
    let mut rule = monte_carlo(&cloud, None, 1, 2).unwrap();
    rule.weights[0] = 1.0;
    let y = rule.nodes[0].clone();
    let x = [1.0, 0.0, 0.0];
    assert_abs_diff_eq!(apply(&rule, &lin, &x).unwrap(), y[0], epsilon = 1e-12);
    assert_abs_diff_eq!(apply(&rule, &k, &x).unwrap(), y[0].abs(), epsilon = 1e-12);

    let a = monte_carlo(&cloud, None, 50, 3).unwrap();
    let mut doubled = a.clone();
    doubled.weights.iter_mut().for_each(|w| *w *= 2.0);
    assert_abs_diff_eq!(apply(&doubled, &k, &x).unwrap(), 2.0 * apply(&a, &k, &x).unwrap(), epsilon = 1e-12);
    assert!(apply(&a, &k, &[1.0, 0.0]).is_err());
}
