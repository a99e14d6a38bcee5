use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use metric_cubature::geometry::{
    annulus_mass, annulus_mass_bound, cap_measure, cap_measure_bounds_check, delta_for_n, sample_uniform,
    surface_ratio, surface_ratio_bracket, SpaceSpec, WeightedPointCloud,
};

#[test]
fn distance_examples() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let x = [0.6, 0.0, 0.8];
    assert_eq!(s2.distance(&x, &x).unwrap(), 0.0);
    assert_abs_diff_eq!(s2.distance(&x, &[-0.6, 0.0, -0.8]).unwrap(), PI, epsilon = 1e-12);
    let b2 = SpaceSpec::ball(2, 1.0).unwrap();
    assert_abs_diff_eq!(b2.distance(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 2.0);
}

#[test]
fn tiny_cloud_is_normalized() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let c = sample_uniform(&s2, 4, 11).unwrap();
    assert_eq!(c.len(), 4);
    for (p, &w) in c.points().zip(c.weights()) {
        assert_abs_diff_eq!(p.iter().map(|v| v * v).sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_eq!(w, 0.25);
    }
}

#[test]
fn sphere_sample_mean_is_centered() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    let m = 100_000;
    let c = sample_uniform(&s2, m, 5).unwrap();
    let mean = c.points().map(|p| p[0]).sum::<f64>() / m as f64;
    // Var(x·e1) = 1/3 on S²
    assert!(mean.abs() <= 3.0 * (1.0f64 / 3.0 / m as f64).sqrt(), "mean {mean}");
}

#[test]
fn ball_sample_area_ratio() {
    let b2 = SpaceSpec::ball(2, 1.0).unwrap();
    let m = 100_000;
    let c = sample_uniform(&b2, m, 6).unwrap();
    let inside = c.points().filter(|p| p[0] * p[0] + p[1] * p[1] <= 0.25).count() as f64 / m as f64;
    let sigma = (0.25f64 * 0.75 / m as f64).sqrt();
    assert!((inside - 0.25).abs() <= 3.0 * sigma, "fraction {inside}");
}

#[test]
fn cap_measure_examples() {
    for d in 1..=8 {
        assert_abs_diff_eq!(cap_measure(d, PI / 2.0).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(cap_measure(d, PI).unwrap(), 1.0, epsilon = 1e-12);
    }
    assert_abs_diff_eq!(cap_measure(2, PI / 3.0).unwrap(), 0.25, epsilon = 1e-12);
    for k in 1..20 {
        let t = PI * k as f64 / 20.0;
        assert_abs_diff_eq!(cap_measure(2, t).unwrap(), (1.0 - t.cos()) / 2.0, epsilon = 1e-12);
    }
    assert!(cap_measure(2, -0.1).is_err());
}

#[test]
fn cap_bounds_contain_the_measure() {
    let b = cap_measure_bounds_check(2, PI / 6.0).unwrap();
    assert_abs_diff_eq!(b.value, (1.0 - (PI / 6.0).cos()) / 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(b.lower, 0.0625, epsilon = 1e-12);
    for (d, t) in [(3, PI / 8.0), (10, PI / 4.0), (1, 0.3), (20, 0.1)] {
        let b = cap_measure_bounds_check(d, t).unwrap();
        assert!(b.lower <= b.value && b.value <= b.upper, "{d} {t} {b:?}");
    }
    // the constant 1/(2√d) would not be a lower bound at (2, π/6)
    let ratio = b.value / (PI / 6.0).sin().powi(2);
    assert!(ratio < 1.0 / (2.0 * 2f64.sqrt()));
}

#[test]
fn delta_examples() {
    assert_abs_diff_eq!(delta_for_n(2, 100), PI / 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(delta_for_n(3, 1000), PI / 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(delta_for_n(4, 1), 5.0 * PI, epsilon = 1e-12);
}

#[test]
fn cap_of_radius_delta_n_has_mass_one_over_n() {
    for d in 1..=10 {
        let mut n = 2.0f64;
        while n <= 1e6 {
            let ni = n as usize;
            let delta = delta_for_n(d, ni);
            if delta <= PI {
                assert!(cap_measure(d, delta).unwrap() >= 1.0 / ni as f64, "d={d} N={ni}");
            }
            n *= 1.7;
        }
    }
}

#[test]
fn annulus_examples() {
    let bound = annulus_mass_bound(2, PI / 2.0, 0.1);
    assert_abs_diff_eq!(bound, 1.5 * 2f64.sqrt() * 0.1, epsilon = 1e-15);
    let exact = annulus_mass(2, PI / 2.0, 0.1).unwrap();
    assert_abs_diff_eq!(exact, ((PI / 2.0 - 0.1).cos() - (PI / 2.0 + 0.1).cos()) / 2.0, epsilon = 1e-12);
    assert!(exact <= bound);
    assert_eq!(annulus_mass(3, 1.0, 0.0).unwrap(), 0.0);
    assert_eq!(annulus_mass_bound(3, 1.0, 0.0), 0.0);
    assert_abs_diff_eq!(annulus_mass_bound(5, 1.0, 0.05), 0.1677, epsilon = 1e-4);
}

#[test]
fn annulus_mass_monte_carlo_in_five_dimensions() {
    let s5 = SpaceSpec::sphere(5).unwrap();
    let m = 200_000;
    let c = sample_uniform(&s5, m, 9).unwrap();
    let (t, delta) = (1.0, 0.05);
    let hat = c
        .points()
        .filter(|p| {
            let a = p[0].clamp(-1.0, 1.0).acos();
            (t - delta..=t + delta).contains(&a)
        })
        .count() as f64
        / m as f64;
    let sigma = (hat * (1.0 - hat) / m as f64).sqrt();
    assert!(hat <= annulus_mass_bound(5, t, delta) + 3.0 * sigma);
    assert!((hat - annulus_mass(5, t, delta).unwrap()).abs() <= 4.0 * sigma.max(1e-6));
}

#[test]
fn surface_ratio_examples() {
    assert_abs_diff_eq!(surface_ratio(2), 0.5, epsilon = 1e-14);
    assert_abs_diff_eq!(surface_ratio(1), 1.0 / PI, epsilon = 1e-14);
    let (lo, hi) = surface_ratio_bracket(10);
    let v = surface_ratio(10);
    assert!(lo <= v && v <= hi);
}

#[test]
fn csv_round_trip_is_exact() {
    let b3 = SpaceSpec::ball(3, 2.5).unwrap();
    let c = sample_uniform(&b3, 50, 4).unwrap();
    let mut buf = Vec::new();
    c.write_csv(&mut buf).unwrap();
    let back = WeightedPointCloud::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.fingerprint(), c.fingerprint());
    assert!(WeightedPointCloud::read_csv("3,2,sphere\n1,0,0,0.5\n".as_bytes()).is_err());
}

#[test]
fn invalid_clouds_are_rejected() {
    let s2 = SpaceSpec::sphere(2).unwrap();
    // weights must sum to one
    assert!(WeightedPointCloud::new(s2, vec![0.0, 0.0, 1.0], vec![0.5]).is_err());
    // points must lie on the sphere
    assert!(WeightedPointCloud::new(s2, vec![0.0, 0.0, 2.0], vec![1.0]).is_err());
    // coordinate count must match
    assert!(WeightedPointCloud::new(s2, vec![0.0, 1.0], vec![1.0]).is_err());
}
