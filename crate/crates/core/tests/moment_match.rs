use approx::assert_abs_diff_eq;
use metric_cubature::function_classes::sphere_basis;
use metric_cubature::geometry::{sample_uniform, SpaceSpec, WeightedPointCloud};
use metric_cubature::moment_match::{cell_moments, compress, verify_rule, CompressMethod, MOMENT_TOL};
use metric_cubature::net_partition::Cell;

fn cell_of(cloud: &WeightedPointCloud, idx: Vec<usize>) -> Cell {
    let w: Vec<f64> = idx.iter().map(|&i| cloud.weights()[i]).collect();
    Cell {
        anchor: cloud.point(idx[0]).to_vec(),
        mass: w.iter().sum(),
        diameter_ub: std::f64::consts::PI,
        point_indices: idx,
        point_weights: w,
    }
}

#[test]
fn moment_examples() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let cloud = sample_uniform(&s2, 10, 1).unwrap();
    let b0 = sphere_basis(2, 0).unwrap();
    let b1 = sphere_basis(2, 1).unwrap();
    let all = cell_of(&cloud, (0..10).collect());
    let m0 = cell_moments(&all, &cloud, &b0).unwrap();
    assert_abs_diff_eq!(m0[0], b0.eval(cloud.point(0))[0], epsilon = 1e-12);

    let single = cell_of(&cloud, vec![3]);
    let m = cell_moments(&single, &cloud, &b1).unwrap();
    for (a, b) in m.iter().zip(b1.eval(cloud.point(3))) {
        assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
    }
    let pair = cell_of(&cloud, vec![2, 5]);
    let m = cell_moments(&pair, &cloud, &b1).unwrap();
    let (u, v) = (b1.eval(cloud.point(2)), b1.eval(cloud.point(5)));
    for k in 0..b1.r {
        assert_abs_diff_eq!(m[k], 0.5 * (u[k] + v[k]), epsilon = 1e-12);
    }
}

#[test]
fn single_point_and_constant_basis() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let cloud = sample_uniform(&s2, 200, 2).unwrap();
    let b1 = sphere_basis(2, 1).unwrap();
    let rule = compress(&cell_of(&cloud, vec![7]), 0, &cloud, &b1, 1, CompressMethod::default()).unwrap();
    assert_eq!(rule.indices, vec![7]);
    assert_abs_diff_eq!(rule.weights[0], 1.0);
    let b0 = sphere_basis(2, 0).unwrap();
    let cell = cell_of(&cloud, (0..200).collect());
    let rule = compress(&cell, 0, &cloud, &b0, 1, CompressMethod::default()).unwrap();
    assert!(rule.len() <= 3);
    assert!(verify_rule(&rule, &cell, &cloud, &b0).unwrap().residual <= 1e-15);
}

#[test]
fn five_hundred_point_cell() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let cloud = sample_uniform(&s2, 500, 3).unwrap();
    let b1 = sphere_basis(2, 1).unwrap();
    let cell = cell_of(&cloud, (0..500).collect());
    for method in [CompressMethod::RandomizedCaratheodory, CompressMethod::CandidateNnls] {
        let rule = compress(&cell, 0, &cloud, &b1, 5, method).unwrap();
        assert!(rule.len() <= b1.r + 2);
        let check = verify_rule(&rule, &cell, &cloud, &b1).unwrap();
        assert!(check.residual <= MOMENT_TOL, "{method:?}: {check:?}");
        assert!(check.min_weight >= 0.0 && check.atoms_in_cell);
    }
}

#[test]
fn perturbed_rule_fails_verification() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let cloud = sample_uniform(&s2, 300, 4).unwrap();
    let b1 = sphere_basis(2, 1).unwrap();
    let cell = cell_of(&cloud, (0..300).collect());
    let mut rule = compress(&cell, 0, &cloud, &b1, 6, CompressMethod::default()).unwrap();
    rule.weights[0] += 1e-3;
    assert!(verify_rule(&rule, &cell, &cloud, &b1).unwrap().residual >= 1e-4);
}

#[test]
fn seeds_change_the_support() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let cloud = sample_uniform(&s2, 400, 5).unwrap();
    let b1 = sphere_basis(2, 1).unwrap();
    let cell = cell_of(&cloud, (0..400).collect());
    let a = compress(&cell, 0, &cloud, &b1, 1, CompressMethod::default()).unwrap();
    let b = compress(&cell, 0, &cloud, &b1, 2, CompressMethod::default()).unwrap();
    assert_ne!(a.indices, b.indices);
    assert!(verify_rule(&a, &cell, &cloud, &b1).unwrap().residual <= MOMENT_TOL);
    assert!(verify_rule(&b, &cell, &cloud, &b1).unwrap().residual <= MOMENT_TOL);
}

#[test]
fn coincident_points_compress() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let coords: Vec<f64> = (0..50).flat_map(|_| [0.0, 0.6, 0.8]).collect();
    let cloud = WeightedPointCloud::new(s2, coords, vec![0.02; 50]).unwrap();
    let b1 = sphere_basis(2, 1).unwrap();
    let cell = cell_of(&cloud, (0..50).collect());
    let rule = compress(&cell, 0, &cloud, &b1, 3, CompressMethod::default()).unwrap();
    assert!(rule.len() <= b1.r + 2);
    assert_abs_diff_eq!(rule.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    assert!(verify_rule(&rule, &cell, &cloud, &b1).unwrap().residual <= MOMENT_TOL);
}
