//! Metric-measure spaces, the weighted point-cloud surrogate for μ, and the
//! exact spherical cap/annulus formulas.
//!
//! Two spaces are supported: the unit sphere `S^d ⊂ R^{d+1}` with geodesic
//! distance `arccos(x·y)` and normalized surface measure, and the Euclidean
//! ball of radius `R` in `R^d` with the norm metric and normalized Lebesgue
//! measure. Both are `β`-regular with `β = d`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quadrature;
use crate::seeds;

const MODULE: &str = "geometry";

/// Tolerance absorbed when clamping `x·y` into `[-1, 1]`.
pub const CLAMP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceKind {
    /// Unit sphere `S^d` embedded in `R^{d+1}`.
    Sphere { d: usize },
    /// Closed ball of the given radius in `R^d`.
    Ball { d: usize, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub kind: SpaceKind,
    /// Regularity exponent of the measure (`μ(B_t(x)) ≳ t^β`).
    pub beta: f64,
}

impl SpaceSpec {
    pub fn sphere(d: usize) -> Result<Self> {
        if d < 1 {
            return Err(Error::invalid(MODULE, "sphere dimension must be >= 1"));
        }
        Ok(SpaceSpec {
            kind: SpaceKind::Sphere { d },
            beta: d as f64,
        })
    }

    pub fn ball(d: usize, radius: f64) -> Result<Self> {
        if d < 1 {
            return Err(Error::invalid(MODULE, "ball dimension must be >= 1"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(MODULE, "ball radius must be positive"));
        }
        Ok(SpaceSpec {
            kind: SpaceKind::Ball { d, radius },
            beta: d as f64,
        })
    }

    /// Intrinsic dimension `d`.
    pub fn dim(&self) -> usize {
        match self.kind {
            SpaceKind::Sphere { d } | SpaceKind::Ball { d, .. } => d,
        }
    }

    /// Number of coordinates of a point.
    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            SpaceKind::Sphere { d } => d + 1,
            SpaceKind::Ball { d, .. } => d,
        }
    }

    pub fn diameter(&self) -> f64 {
        match self.kind {
            SpaceKind::Sphere { .. } => PI,
            SpaceKind::Ball { radius, .. } => 2.0 * radius,
        }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self.kind, SpaceKind::Sphere { .. })
    }

    /// Short label used in reports and file headers.
    pub fn label(&self) -> String {
        match self.kind {
            SpaceKind::Sphere { .. } => "sphere".to_string(),
            SpaceKind::Ball { radius, .. } => format!("ball:{radius}"),
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch {
                module: MODULE,
                expected: self.ambient_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Metric distance `ρ(x, y)`; geodesic on the sphere, Euclidean on the
    /// ball.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.dist(x, y))
    }

    /// Unchecked [`distance`](Self::distance).
    #[inline]
    pub fn dist(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            SpaceKind::Sphere { .. } => dot(x, y).clamp(-1.0, 1.0).acos(),
            SpaceKind::Ball { .. } => sq_dist(x, y).sqrt(),
        }
    }

    /// A cheap quantity strictly increasing in the metric distance:
    /// `1 - x·y` on the sphere and `‖x - y‖²` on the ball.
    #[inline]
    pub fn proxy(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            SpaceKind::Sphere { .. } => 1.0 - dot(x, y),
            SpaceKind::Ball { .. } => sq_dist(x, y),
        }
    }

    /// Maps a metric distance to the proxy scale.
    #[inline]
    pub fn proxy_of(&self, dist: f64) -> f64 {
        match self.kind {
            SpaceKind::Sphere { .. } => 1.0 - dist.min(PI).cos(),
            SpaceKind::Ball { .. } => dist * dist,
        }
    }

    /// Inverse of [`proxy_of`](Self::proxy_of).
    #[inline]
    pub fn dist_of_proxy(&self, p: f64) -> f64 {
        match self.kind {
            SpaceKind::Sphere { .. } => (1.0 - p).clamp(-1.0, 1.0).acos(),
            SpaceKind::Ball { .. } => p.max(0.0).sqrt(),
        }
    }

    /// True when `x` is a valid point of the space (up to `tol`).
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.ambient_dim() {
            return false;
        }
        match self.kind {
            SpaceKind::Sphere { .. } => (dot(x, x).sqrt() - 1.0).abs() <= tol,
            SpaceKind::Ball { radius, .. } => dot(x, x).sqrt() <= radius + tol,
        }
    }
}

#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Free-function form of [`SpaceSpec::distance`].
pub fn geodesic_distance(space: &SpaceSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    space.distance(x, y)
}

/// Finite weighted sample standing in for the measure μ.
///
/// Coordinates are stored row-major, one point per row of
/// `space.ambient_dim()` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPointCloud {
    pub space: SpaceSpec,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedPointCloud {
    /// Builds a cloud, checking point validity, nonnegative weights and
    /// `Σ weights = 1 ± 1e-12`.
    pub fn new(space: SpaceSpec, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let dim = space.ambient_dim();
        if coords.len() != dim * weights.len() {
            return Err(Error::DimensionMismatch {
                module: MODULE,
                expected: dim * weights.len(),
                got: coords.len(),
            });
        }
        if weights.is_empty() {
            return Err(Error::invalid(MODULE, "point cloud is empty"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid(MODULE, "weights must be finite and nonnegative"));
        }
        let total: f64 = crate::summation::compensated_sum(weights.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                MODULE,
                format!("weights sum to {total}, expected 1"),
            ));
        }
        let tol = match space.kind {
            SpaceKind::Sphere { .. } => 1e-12,
            SpaceKind::Ball { radius, .. } => 1e-12 * radius.max(1.0),
        };
        if let Some(i) = coords.chunks_exact(dim).position(|p| !space.contains(p, tol)) {
            return Err(Error::invalid(
                MODULE,
                format!("point {i} does not belong to the space"),
            ));
        }
        Ok(WeightedPointCloud {
            space,
            coords,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.space.ambient_dim()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Same points with new weights (renormalized to sum 1).
    pub fn reweighted(&self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::DimensionMismatch {
                module: MODULE,
                expected: self.len(),
                got: weights.len(),
            });
        }
        let total = crate::summation::compensated_sum(weights.iter().copied());
        if !(total > 0.0) {
            return Err(Error::invalid(MODULE, "reweighting has zero total mass"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        WeightedPointCloud::new(self.space, self.coords.clone(), weights)
    }

    /// Stable 64-bit fingerprint of points and weights (FNV-1a over the
    /// IEEE bit patterns), used to tie partitions to their source cloud.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.coords.iter().chain(self.weights.iter()) {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }

    /// Writes the cloud as CSV: a header row `dim,M,kind`, then one row per
    /// point holding its coordinates followed by its weight. Floats use the
    /// shortest representation that round-trips exactly.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        w.write_record([
            self.dim().to_string(),
            self.len().to_string(),
            self.space.label(),
        ])?;
        let mut row = Vec::with_capacity(self.dim() + 1);
        for (p, wt) in self.points().zip(&self.weights) {
            row.clear();
            row.extend(p.iter().map(|v| v.to_string()));
            row.push(wt.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(input);
        let mut records = r.records();
        let header = records
            .next()
            .ok_or_else(|| Error::Io("empty point-cloud file".into()))??;
        if header.len() != 3 {
            return Err(Error::Io("header must be `dim,M,kind`".into()));
        }
        let parse_usize = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::Io(format!("bad header field {s:?}: {e}")))
        };
        let dim = parse_usize(&header[0])?;
        let m = parse_usize(&header[1])?;
        let kind = header[2].trim();
        let space = if kind == "sphere" {
            SpaceSpec::sphere(dim.saturating_sub(1))?
        } else if let Some(radius) = kind.strip_prefix("ball:") {
            let radius = radius
                .parse::<f64>()
                .map_err(|e| Error::Io(format!("bad ball radius: {e}")))?;
            SpaceSpec::ball(dim, radius)?
        } else {
            return Err(Error::Io(format!("unknown space kind {kind:?}")));
        };
        let mut coords = Vec::with_capacity(m * dim);
        let mut weights = Vec::with_capacity(m);
        for rec in records {
            let rec = rec?;
            if rec.len() != dim + 1 {
                return Err(Error::Io(format!(
                    "row has {} fields, expected {}",
                    rec.len(),
                    dim + 1
                )));
            }
            for (k, field) in rec.iter().enumerate() {
                let v = field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Io(format!("bad number {field:?}: {e}")))?;
                if k < dim {
                    coords.push(v);
                } else {
                    weights.push(v);
                }
            }
        }
        if weights.len() != m {
            return Err(Error::Io(format!(
                "header announces {m} points, found {}",
                weights.len()
            )));
        }
        WeightedPointCloud::new(space, coords, weights)
    }
}

/// `m` i.i.d. points from the uniform measure of `space`, each with weight
/// `1/m`. Sphere points are normalized Gaussians; ball points are a uniform
/// direction scaled by `R·U^{1/d}`.
pub fn sample_uniform(space: &SpaceSpec, m: usize, seed: u64) -> Result<WeightedPointCloud> {
    if m == 0 {
        return Err(Error::invalid(MODULE, "sample size must be >= 1"));
    }
    let mut rng = seeds::rng(seed);
    let dim = space.ambient_dim();
    let mut coords = Vec::with_capacity(m * dim);
    let mut p = vec![0.0; dim];
    for _ in 0..m {
        random_direction(&mut rng, &mut p);
        if let SpaceKind::Ball { d, radius } = space.kind {
            let u: f64 = rng.random();
            let s = radius * u.powf(1.0 / d as f64);
            p.iter_mut().for_each(|v| *v *= s);
        }
        coords.extend_from_slice(&p);
    }
    let weights = vec![1.0 / m as f64; m];
    Ok(WeightedPointCloud {
        space: *space,
        coords,
        weights,
    })
}

pub(crate) fn random_direction<R: Rng>(rng: &mut R, out: &mut [f64]) {
    loop {
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let n = dot(out, out).sqrt();
        if n > 1e-150 {
            out.iter_mut().for_each(|v| *v /= n);
            return;
        }
    }
}

/// `ω_{d-1}/ω_d = Γ((d+1)/2) / (Γ(d/2) √π)`, the ratio of consecutive unit
/// sphere surface areas.
pub fn surface_ratio(d: usize) -> f64 {
    assert!(d >= 1, "surface_ratio needs d >= 1");
    let x = d as f64;
    let ratio = (ln_gamma((x + 1.0) / 2.0) - ln_gamma(x / 2.0)).exp() / PI.sqrt();
    debug_assert!({
        let (lo, hi) = surface_ratio_bracket(d);
        lo <= ratio * (1.0 + 1e-12) && ratio <= hi * (1.0 + 1e-12)
    });
    ratio
}

/// Gamma-ratio bracket `π^{-1/2}((d-1)/2)^{1/2} ≤ ω_{d-1}/ω_d ≤ π^{-1/2}((d+1)/2)^{1/2}`.
pub fn surface_ratio_bracket(d: usize) -> (f64, f64) {
    let x = d as f64;
    let s = PI.sqrt();
    (((x - 1.0) / 2.0).sqrt() / s, ((x + 1.0) / 2.0).sqrt() / s)
}

/// `(ω_{d-1}/ω_d) ∫_a^b sin^{d-1}(u) du`, the normalized measure of the set
/// of points at geodesic distance in `[a, b]` from a fixed point.
fn zonal_mass(d: usize, a: f64, b: f64) -> f64 {
    let a = a.clamp(0.0, PI);
    let b = b.clamp(0.0, PI);
    if b <= a {
        return 0.0;
    }
    let k = (d - 1) as i32;
    let integral = if k == 0 {
        b - a
    } else {
        quadrature::integrate(|u: f64| u.sin().powi(k), a, b, 1e-13)
    };
    surface_ratio(d) * integral
}

fn check_dim(d: usize) -> Result<()> {
    if d < 1 {
        return Err(Error::invalid(MODULE, "sphere dimension must be >= 1"));
    }
    Ok(())
}

/// Normalized measure of a geodesic cap of radius `theta` on `S^d`.
///
/// Evaluated as `(ω_{d-1}/ω_d) ∫_0^θ sin^{d-1} u du`, which equals the
/// `∫_{cos θ}^1 (1-t²)^{(d-2)/2} dt` form after `t = cos u` but has no
/// endpoint singularity for `d = 1`.
pub fn cap_measure(d: usize, theta: f64) -> Result<f64> {
    check_dim(d)?;
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::invalid(
            MODULE,
            format!("cap radius {theta} outside [0, π]"),
        ));
    }
    // integrate the shorter side for accuracy near π
    let v = if theta <= PI / 2.0 {
        zonal_mass(d, 0.0, theta)
    } else {
        1.0 - zonal_mass(d, theta, PI)
    };
    Ok(v.clamp(0.0, 1.0))
}

/// Sandwich of a small cap's measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapBounds {
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
}

/// Lower and upper bounds for the cap measure on `(0, π/4]`:
///
/// ```text
///   (ω_{d-1}/ω_d) sin^d θ / d  ≤  μ_d(B_θ)  ≤  2 sin^d θ / √d
/// ```
///
/// The lower constant comes from `(1-t)^{-1/2} ≥ 1` in
/// `μ_d(B_θ) = (ω_{d-1}/ω_d) · ½ ∫_0^{sin²θ} t^{(d-2)/2} (1-t)^{-1/2} dt`;
/// it behaves like `1/√(2π d)` for large `d`. The constants `1/√(2d)` and
/// `1/(2√d)` do not bound the ratio (e.g. `d = 2`, `θ = π/6` gives a ratio
/// of 0.268).
pub fn cap_measure_bounds_check(d: usize, theta: f64) -> Result<CapBounds> {
    check_dim(d)?;
    if !(theta > 0.0 && theta <= PI / 4.0) {
        return Err(Error::invalid(
            MODULE,
            format!("bounds need 0 < θ ≤ π/4, got {theta}"),
        ));
    }
    let sd = theta.sin().powi(d as i32);
    let bounds = CapBounds {
        lower: surface_ratio(d) * sd / d as f64,
        value: cap_measure(d, theta)?,
        upper: 2.0 * sd / (d as f64).sqrt(),
    };
    if !(bounds.lower <= bounds.value * (1.0 + 1e-12) && bounds.value <= bounds.upper) {
        return Err(Error::numerical(
            MODULE,
            format!("cap bounds violated: {bounds:?}"),
        ));
    }
    Ok(bounds)
}

/// `δ_N = 5π N^{-1/d}`: every cap of this radius has measure at least
/// `1/N` (when `δ_N ≥ π` the cap is the whole sphere).
pub fn delta_for_n(d: usize, n: usize) -> f64 {
    5.0 * PI * (n.max(1) as f64).powf(-1.0 / d.max(1) as f64)
}

/// Upper bound `(3/2)√d δ` on the measure of any annulus
/// `{y : t-δ ≤ ρ(x,y) ≤ t+δ}` on `S^d`.
pub fn annulus_mass_bound(d: usize, _t: f64, delta: f64) -> f64 {
    1.5 * (d as f64).sqrt() * delta.max(0.0)
}

/// Exact normalized measure of the annulus `{y : t-δ ≤ ρ(x,y) ≤ t+δ}`.
pub fn annulus_mass(d: usize, t: f64, delta: f64) -> Result<f64> {
    check_dim(d)?;
    if !(0.0..=PI).contains(&t) || delta < 0.0 {
        return Err(Error::invalid(MODULE, "annulus needs t ∈ [0, π], δ ≥ 0"));
    }
    Ok(zonal_mass(d, t - delta, t + delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn distance_special_cases() {
        let s2 = SpaceSpec::sphere(2).unwrap();
        let x = [0.0, 0.0, 1.0];
        assert_eq!(s2.distance(&x, &x).unwrap(), 0.0);
        assert_abs_diff_eq!(s2.distance(&x, &[0.0, 0.0, -1.0]).unwrap(), PI);
        let b2 = SpaceSpec::ball(2, 1.0).unwrap();
        assert_abs_diff_eq!(b2.distance(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 2.0);
        assert!(matches!(
            s2.distance(&x, &[1.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn distance_clamps_rounding() {
        let s2 = SpaceSpec::sphere(2).unwrap();
        let x = [0.6, 0.8, 0.0];
        // x·x rounds slightly above 1 for some inputs; must not be NaN
        let y = [0.6 * (1.0 + 1e-16), 0.8, 0.0];
        assert!(s2.distance(&x, &y).unwrap().is_finite());
    }

    #[test]
    fn sample_uniform_basics() {
        let s2 = SpaceSpec::sphere(2).unwrap();
        let c = sample_uniform(&s2, 4, 11).unwrap();
        assert_eq!(c.len(), 4);
        assert!(c.weights().iter().all(|&w| w == 0.25));
        assert!(c.points().all(|p| (dot(p, p) - 1.0).abs() < 1e-12));
        assert_eq!(c, sample_uniform(&s2, 4, 11).unwrap());
        assert!(sample_uniform(&s2, 0, 1).is_err());
    }

    #[test]
    fn sphere_mean_coordinate_is_zero() {
        let m = 100_000;
        let c = sample_uniform(&SpaceSpec::sphere(2).unwrap(), m, 3).unwrap();
        let mean: f64 = c.points().map(|p| p[0]).sum::<f64>() / m as f64;
        // Var(x₁) = 1/3 on S²
        assert!(mean.abs() < 3.0 * (1.0f64 / 3.0).sqrt() / (m as f64).sqrt());
    }

    #[test]
    fn ball_inner_disc_fraction() {
        let m = 100_000;
        let c = sample_uniform(&SpaceSpec::ball(2, 1.0).unwrap(), m, 5).unwrap();
        let frac = c.points().filter(|p| dot(p, p) < 0.25).count() as f64 / m as f64;
        let sigma = (0.25f64 * 0.75 / m as f64).sqrt();
        assert!((frac - 0.25).abs() < 3.0 * sigma, "fraction {frac}");
    }

    #[test]
    fn cap_measure_examples() {
        for d in 1..=8 {
            assert_abs_diff_eq!(cap_measure(d, PI / 2.0).unwrap(), 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(cap_measure(d, PI).unwrap(), 1.0, epsilon = 1e-12);
            assert_eq!(cap_measure(d, 0.0).unwrap(), 0.0);
        }
        for theta in [0.1, 0.7, PI / 3.0, 2.5] {
            let closed = (1.0 - f64::cos(theta)) / 2.0;
            assert_abs_diff_eq!(cap_measure(2, theta).unwrap(), closed, epsilon = 1e-13);
        }
        assert_abs_diff_eq!(cap_measure(2, PI / 3.0).unwrap(), 0.25, epsilon = 1e-13);
        assert!(cap_measure(2, -0.1).is_err());
        assert!(cap_measure(2, 3.2).is_err());
    }

    #[test]
    fn surface_ratio_values() {
        assert_abs_diff_eq!(surface_ratio(2), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(surface_ratio(1), 1.0 / PI, epsilon = 1e-14);
        // d = 3: Γ(2)/(Γ(3/2)√π) = 2/π
        assert_abs_diff_eq!(surface_ratio(3), 2.0 / PI, epsilon = 1e-14);
        for d in 1..=40 {
            let (lo, hi) = surface_ratio_bracket(d);
            let r = surface_ratio(d);
            assert!(lo <= r && r <= hi, "d={d}");
        }
    }

    #[test]
    fn cap_bounds_hold_with_derived_lower_constant() {
        let b = cap_measure_bounds_check(2, PI / 6.0).unwrap();
        assert_abs_diff_eq!(b.value, (1.0 - (PI / 6.0).cos()) / 2.0, epsilon = 1e-14);
        // (ω₁/ω₂) sin²θ / 2 = 0.5 · 0.25 / 2
        assert_abs_diff_eq!(b.lower, 0.0625, epsilon = 1e-14);
        assert_abs_diff_eq!(b.upper, 2.0 * 0.25 / 2f64.sqrt(), epsilon = 1e-14);
        cap_measure_bounds_check(3, PI / 8.0).unwrap();
        cap_measure_bounds_check(10, PI / 4.0).unwrap();
        assert!(cap_measure_bounds_check(2, 1.0).is_err());
        assert!(cap_measure_bounds_check(2, 0.0).is_err());
    }

    #[test]
    fn larger_lower_constants_are_violated() {
        // ratio μ/sin^d at d = 2, θ = π/6 is (1 - cos θ)/(2 sin²θ) ≈ 0.268
        let theta = PI / 6.0;
        let ratio = cap_measure(2, theta).unwrap() / theta.sin().powi(2);
        assert!(ratio < 1.0 / (2.0 * 2f64.sqrt()));
        assert!(ratio < 1.0 / 2f64.sqrt() / 2f64.sqrt());
        // d = 1: ratio tends to 1/π as θ → 0
        let r1 = cap_measure(1, 1e-3).unwrap() / 1e-3f64.sin();
        assert!(r1 < 0.5);
    }

    #[test]
    fn delta_examples() {
        assert_abs_diff_eq!(delta_for_n(2, 100), PI / 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(delta_for_n(3, 1000), PI / 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(delta_for_n(5, 1), 5.0 * PI);
    }

    #[test]
    fn annulus_bound_examples() {
        let b = annulus_mass_bound(2, PI / 2.0, 0.1);
        assert_abs_diff_eq!(b, 1.5 * 2f64.sqrt() * 0.1, epsilon = 1e-15);
        let exact = annulus_mass(2, PI / 2.0, 0.1).unwrap();
        let closed = ((PI / 2.0 - 0.1).cos() - (PI / 2.0 + 0.1).cos()) / 2.0;
        assert_abs_diff_eq!(exact, closed, epsilon = 1e-14);
        assert!(exact <= b);
        assert_eq!(annulus_mass_bound(3, 1.0, 0.0), 0.0);
        assert_eq!(annulus_mass(3, 1.0, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(annulus_mass_bound(5, 1.0, 0.05), 0.167_705, epsilon = 1e-6);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let c = sample_uniform(&SpaceSpec::ball(3, 2.5).unwrap(), 50, 9).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("3,50,ball:2.5\n"));
        let back = WeightedPointCloud::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn cloud_validation() {
        let s2 = SpaceSpec::sphere(2).unwrap();
        assert!(WeightedPointCloud::new(s2, vec![1.0, 0.0, 0.0], vec![0.5]).is_err());
        assert!(WeightedPointCloud::new(s2, vec![2.0, 0.0, 0.0], vec![1.0]).is_err());
        assert!(WeightedPointCloud::new(s2, vec![1.0, 0.0], vec![1.0]).is_err());
        assert!(WeightedPointCloud::new(s2, vec![1.0, 0.0, 0.0], vec![1.0]).is_ok());
    }
}
