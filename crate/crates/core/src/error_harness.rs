//! Sup-error measurement, decay-rate fitting and the theoretical constants.
//!
//! Errors are measured on an evaluation net of anchors `z_k` against a
//! reference integral. The reference is either exact (zonal profiles on the
//! sphere with `g ≡ 1`) or a sum over a fine cloud. The decay experiments
//! use the build cloud itself as the reference measure, so the measured
//! error is the discretization error of the rule with respect to the
//! measure it was built from, free of the cloud's own sampling noise.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::discretizer::{
    build_euclidean_with, build_plain, build_signed_with, monte_carlo, plan_euclidean, CubatureRule, DensityField,
    NormKind, RuleMethod,
};
use crate::error::{Error, Result};
use crate::function_classes::{basis_for, BasisSet, KernelProfile, ProfileVariant};
use crate::geometry::{sample_uniform, surface_ratio, SpaceKind, SpaceSpec, WeightedPointCloud};
use crate::moment_match::{CompressMethod, MOMENT_TOL};
use crate::net_partition::besicovitch::NxPolicy;
use crate::net_partition::{partition_space, PartitionParams};
use crate::quadrature;
use crate::seeds;
use crate::summation::Compensated;

const MODULE: &str = "error_harness";

/// Fits with an R² below this are flagged as unreliable.
pub const MIN_R_SQUARED: f64 = 0.95;

/// Minimum span of the N sweep, in decades.
pub const MIN_DECADES: f64 = 1.5;

/// Medians at or below this are treated as exact integration.
pub const ERROR_FLOOR: f64 = 1e-8;

/// Quasi-uniform evaluation anchors. The first `k` anchors of a net form a
/// farthest-point prefix, so prefixes of one net are nested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalNet {
    pub space: SpaceSpec,
    points: Vec<f64>,
    /// `mesh_norms[k-1]`: covering radius of the first `k` anchors over the
    /// candidate pool.
    mesh_norms: Vec<f64>,
}

impl EvalNet {
    pub fn len(&self) -> usize {
        self.mesh_norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh_norms.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let k = self.space.ambient_dim();
        &self.points[i * k..(i + 1) * k]
    }

    pub fn mesh_norm(&self) -> f64 {
        self.mesh_norms.last().copied().unwrap_or(f64::INFINITY)
    }

    /// The first `m` anchors.
    pub fn prefix(&self, m: usize) -> EvalNet {
        let m = m.min(self.len());
        let k = self.space.ambient_dim();
        EvalNet {
            space: self.space,
            points: self.points[..m * k].to_vec(),
            mesh_norms: self.mesh_norms[..m].to_vec(),
        }
    }
}

/// Farthest-point subsample of `m_eval` anchors from a fresh uniform pool of
/// `max(40000, 2·m_eval)` points.
pub fn make_eval_net(space: &SpaceSpec, m_eval: usize, seed: u64) -> Result<EvalNet> {
    if m_eval == 0 {
        return Err(Error::invalid(MODULE, "evaluation net needs at least one anchor"));
    }
    let pool = sample_uniform(space, (2 * m_eval).max(40_000), seed)?;
    let mut near = vec![f64::INFINITY; pool.len()];
    let mut chosen = Vec::with_capacity(m_eval);
    let mut mesh = Vec::with_capacity(m_eval);
    let mut next = 0usize;
    for _ in 0..m_eval {
        chosen.push(next);
        let a = pool.point(next);
        near.par_iter_mut().enumerate().for_each(|(i, q)| {
            let v = space.proxy(a, pool.point(i));
            if v < *q {
                *q = v;
            }
        });
        let (far, arg) = near
            .iter()
            .enumerate()
            .fold((f64::NEG_INFINITY, 0), |acc, (i, &v)| if v > acc.0 { (v, i) } else { acc });
        mesh.push(space.dist_of_proxy(far));
        next = arg;
    }
    let mut points = Vec::with_capacity(m_eval * space.ambient_dim());
    for &i in &chosen {
        points.extend_from_slice(pool.point(i));
    }
    Ok(EvalNet {
        space: *space,
        points,
        mesh_norms: mesh,
    })
}

/// Reference measure for `∫ Φ(ρ(x,y)) g(y) dμ(y)`.
#[derive(Debug, Clone, Copy)]
pub enum Oracle<'a> {
    /// `(ω_{d-1}/ω_d) ∫_0^π Φ(θ) sin^{d-1}θ dθ`, valid on the sphere with
    /// `g ≡ 1`.
    ZonalExact,
    /// `Σ_i w_i g_i Φ(ρ(x, p_i))` over a cloud (`g ≡ 1` when absent).
    FineCloud {
        cloud: &'a WeightedPointCloud,
        g: Option<&'a [f64]>,
    },
}

/// Exact integral of a zonal profile against the normalized surface measure
/// of `S^d`, by per-piece adaptive quadrature.
pub fn zonal_exact(k: &KernelProfile, d: usize) -> Result<f64> {
    if k.variant != ProfileVariant::SphereZonal {
        return Err(Error::invalid(MODULE, "exact zonal reference needs a sphere profile"));
    }
    let p = (d - 1) as i32;
    let mut acc = Compensated::default();
    for w in k.theta_knots.windows(2) {
        acc.add(quadrature::integrate(
            |t: f64| k.eval_metric(t) * t.sin().powi(p),
            w[0],
            w[1],
            1e-13,
        ));
    }
    Ok(surface_ratio(d) * acc.total())
}

/// Reference value of the integral at `x`.
pub fn reference_integral(k: &KernelProfile, x: &[f64], oracle: Oracle<'_>) -> Result<f64> {
    match oracle {
        Oracle::ZonalExact => match k.variant {
            ProfileVariant::SphereZonal => zonal_exact(k, x.len() - 1),
            _ => Err(Error::invalid(MODULE, "exact zonal reference needs a sphere profile")),
        },
        Oracle::FineCloud { cloud, g } => {
            if !k.matches_space(&cloud.space) {
                return Err(Error::invalid(MODULE, "profile does not match the oracle cloud"));
            }
            if let Some(g) = g {
                if g.len() != cloud.len() {
                    return Err(Error::DimensionMismatch {
                        module: MODULE,
                        expected: cloud.len(),
                        got: g.len(),
                    });
                }
            }
            let dim = cloud.dim();
            let mut acc = Compensated::default();
            let pts = cloud.coords().chunks_exact(dim).zip(cloud.weights());
            match g {
                Some(g) => {
                    for ((p, &w), &gi) in pts.zip(g) {
                        acc.add(w * gi * k.eval_pair(x, p));
                    }
                }
                None => {
                    for (p, &w) in pts {
                        acc.add(w * k.eval_pair(x, p));
                    }
                }
            }
            Ok(acc.total())
        }
    }
}

/// Reference values at every anchor of a net.
pub fn reference_values(k: &KernelProfile, net: &EvalNet, oracle: Oracle<'_>) -> Result<Vec<f64>> {
    if let Oracle::ZonalExact = oracle {
        let d = net.space.dim();
        let v = zonal_exact(k, d)?;
        return Ok(vec![v; net.len()]);
    }
    (0..net.len())
        .into_par_iter()
        .map(|i| reference_integral(k, net.point(i), oracle))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupError {
    pub value: f64,
    /// Index of the anchor attaining the maximum.
    pub argmax: usize,
}

/// `max_k |reference_k - Σ_j λ_j Φ(ρ(z_k, y_j))|` over the anchors of `net`.
pub fn sup_error(rule: &CubatureRule, k: &KernelProfile, net: &EvalNet, reference: &[f64]) -> Result<SupError> {
    if reference.len() != net.len() {
        return Err(Error::DimensionMismatch {
            module: MODULE,
            expected: net.len(),
            got: reference.len(),
        });
    }
    if net.is_empty() {
        return Err(Error::invalid(MODULE, "empty evaluation net"));
    }
    if !k.matches_space(&rule.meta.space) || rule.meta.space != net.space {
        return Err(Error::invalid(MODULE, "rule, profile and net live on different spaces"));
    }
    let dim = net.space.ambient_dim();
    let flat: Vec<f64> = rule.nodes.iter().flatten().copied().collect();
    let errs: Vec<f64> = (0..net.len())
        .into_par_iter()
        .map(|i| {
            let x = net.point(i);
            let mut acc = Compensated::default();
            for (y, &w) in flat.chunks_exact(dim).zip(&rule.weights) {
                acc.add(w * k.eval_pair(x, y));
            }
            (acc.total() - reference[i]).abs()
        })
        .collect();
    let (argmax, value) = errs
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, (i, v)| if v > a.1 { (i, v) } else { a });
    Ok(SupError { value, argmax })
}

/// Least-squares line through `(ln N, ln(err/√ln N))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci95: [f64; 2],
    pub r_squared: f64,
    pub reliable: bool,
}

/// Ordinary least squares with a Student-t 95% interval for the slope.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    let n = xs.len();
    if n != ys.len() || n < 3 {
        return Err(Error::invalid(MODULE, "slope fit needs at least three points"));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::invalid(MODULE, "slope fit needs distinct abscissae"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    let se = (ssr / (nf - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, nf - 2.0)
        .map_err(|e| Error::numerical(MODULE, e.to_string()))?
        .inverse_cdf(0.975);
    Ok(SlopeFit {
        slope,
        intercept,
        ci95: [slope - t * se, slope + t * se],
        r_squared,
        reliable: r_squared >= MIN_R_SQUARED,
    })
}

/// Fits the decay exponent of `errors` against `n_values` after dividing
/// out `√ln N`.
pub fn fit_slope(n_values: &[usize], errors: &[f64]) -> Result<SlopeFit> {
    if errors.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::invalid(MODULE, "errors must be positive to fit a slope"));
    }
    let xs: Vec<f64> = n_values.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = n_values
        .iter()
        .zip(errors)
        .map(|(&n, &e)| (e / (n as f64).ln().sqrt()).ln())
        .collect();
    fit_line(&xs, &ys)
}

/// Exponent `-1/2 - 3/(2β)` of the sup-error bound.
pub fn theory_slope(beta: f64) -> f64 {
    -0.5 - 1.5 / beta
}

/// Theoretical constants for the sphere `S^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub d: usize,
    pub ell: usize,
    pub beta: f64,
    /// Diameter constant `40π`.
    pub c1: f64,
    /// Annulus constant `(3/2)√d`.
    pub c2: f64,
    /// `8 c1² √(c2 ℓ) √β`.
    pub c3: f64,
    /// `45 c3`, the factor for bounded signed densities.
    pub signed_factor: f64,
    /// `7·10⁶ √ℓ d^{3/4}`.
    pub sphere_prefactor: f64,
    pub exponent: f64,
}

impl Constants {
    /// `c3 N^{-1/2-3/(2β)} √ln N`.
    pub fn bound(&self, n: usize) -> f64 {
        let nf = n as f64;
        self.c3 * nf.powf(self.exponent) * nf.ln().sqrt()
    }

    /// The same bound with the signed-density factor.
    pub fn signed_bound(&self, n: usize) -> f64 {
        self.bound(n) * self.signed_factor / self.c3
    }

    /// Whether `45 c3 ≤ 7·10⁶ √ℓ d^{3/4}`.
    pub fn chain_holds(&self) -> bool {
        self.signed_factor <= self.sphere_prefactor
    }
}

pub fn bound_constants(d: usize, ell: usize, beta: f64) -> Constants {
    let c1 = 40.0 * PI;
    let c2 = 1.5 * (d as f64).sqrt();
    let c3 = 8.0 * c1 * c1 * (c2 * ell as f64).sqrt() * beta.sqrt();
    Constants {
        d,
        ell,
        beta,
        c1,
        c2,
        c3,
        signed_factor: 45.0 * c3,
        sphere_prefactor: 7e6 * (ell as f64).sqrt() * (d as f64).powf(0.75),
        exponent: theory_slope(beta),
    }
}

/// One (method, N, seed) measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub method: RuleMethod,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: usize,
    pub nodes: usize,
    pub sup_error: f64,
    pub mesh_norm: f64,
}

/// Per-method summary across `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSeries {
    pub method: RuleMethod,
    pub nodes: Vec<usize>,
    pub median: Vec<f64>,
    pub min: Vec<f64>,
    pub fit: Option<SlopeFit>,
    /// Errors sit at the exact-integration floor; no slope was fitted.
    pub at_floor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayConfig {
    pub space: SpaceSpec,
    pub profile: String,
    pub density: String,
    /// Polynomial degree `n₀` of the profile (basis degree on the sphere,
    /// half the monomial degree on the ball).
    pub degree: usize,
    #[serde(rename = "N_values")]
    pub n_values: Vec<usize>,
    pub seeds: usize,
    pub methods: Vec<RuleMethod>,
    pub master_seed: u64,
    /// Fine cloud size per cell, `M = fine_factor · N`.
    pub fine_factor: usize,
    pub eval_cap: usize,
    pub eval_per_n: usize,
    pub compress: CompressMethod,
}

impl DecayConfig {
    pub fn new(space: SpaceSpec, profile: &str, n_values: Vec<usize>) -> Self {
        DecayConfig {
            space,
            profile: profile.to_string(),
            density: "const".to_string(),
            degree: 1,
            n_values,
            seeds: 20,
            methods: vec![RuleMethod::Plain, RuleMethod::MonteCarlo],
            master_seed: 7,
            fine_factor: 50,
            eval_cap: 20_000,
            eval_per_n: 50,
            compress: CompressMethod::default(),
        }
    }

    pub fn eval_size(&self, n: usize) -> usize {
        self.eval_cap.min(self.eval_per_n * n).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub config: DecayConfig,
    #[serde(rename = "N_values")]
    pub n_values: Vec<usize>,
    pub eval_sizes: Vec<usize>,
    pub mesh_norms: Vec<f64>,
    /// Scale applied to normalize the profile to Lipschitz constant 1.
    pub lipschitz_scale: f64,
    pub theory_slope: f64,
    pub mc_theory_slope: f64,
    pub series: Vec<MethodSeries>,
    pub constants: Option<Constants>,
    pub bound_curve: Vec<f64>,
    pub rows: Vec<Row>,
    pub notes: Vec<String>,
}

impl ErrorReport {
    pub fn series(&self, method: RuleMethod) -> Option<&MethodSeries> {
        self.series.iter().find(|s| s.method == method)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows_csv(&self.rows, out)
    }
}

/// Flat CSV with columns `method,d,N,seed,nodes,sup_error,mesh_norm`.
pub fn write_rows_csv<W: Write>(rows: &[Row], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn summarize(method: RuleMethod, n_values: &[usize], rows: &[Row]) -> Result<MethodSeries> {
    let mut s = MethodSeries {
        method,
        nodes: Vec::new(),
        median: Vec::new(),
        min: Vec::new(),
        fit: None,
        at_floor: false,
    };
    for &n in n_values {
        let sel: Vec<&Row> = rows.iter().filter(|r| r.method == method && r.n == n).collect();
        let errs: Vec<f64> = sel.iter().map(|r| r.sup_error).collect();
        let mut nodes: Vec<usize> = sel.iter().map(|r| r.nodes).collect();
        nodes.sort_unstable();
        s.nodes.push(nodes.get(nodes.len() / 2).copied().unwrap_or(0));
        s.median.push(median(&errs));
        s.min.push(errs.iter().copied().fold(f64::INFINITY, f64::min));
    }
    if s.median.iter().all(|&e| e <= ERROR_FLOOR) {
        s.at_floor = true;
    } else if n_values.len() >= 3 && n_values[0] >= 2 {
        s.fit = Some(fit_slope(n_values, &s.median)?);
    }
    Ok(s)
}

fn check_n_values(n_values: &[usize], min_len: usize) -> Result<()> {
    if n_values.len() < min_len {
        return Err(Error::invalid(MODULE, format!("need at least {min_len} N values")));
    }
    if n_values.windows(2).any(|w| w[0] >= w[1]) || n_values[0] < 1 {
        return Err(Error::invalid(MODULE, "N values must be increasing and positive"));
    }
    Ok(())
}

/// Runs the decay experiment: for every `N` a fine cloud of `fine_factor·N`
/// points is sampled and partitioned once; each seed then draws fresh rules
/// for every method and measures their sup error on a nested evaluation net
/// against the cloud's own integral.
pub fn decay_experiment(config: &DecayConfig) -> Result<ErrorReport> {
    check_n_values(&config.n_values, 4)?;
    let span = *config.n_values.last().unwrap() as f64 / config.n_values[0] as f64;
    if span.log10() < MIN_DECADES {
        return Err(Error::invalid(MODULE, format!("N range spans {:.2} decades, need {MIN_DECADES}", span.log10())));
    }
    compare_methods(config)
}

/// The measurement loop of [`decay_experiment`] without the range
/// requirement; slopes are fitted only when at least three `N` are given.
pub fn compare_methods(config: &DecayConfig) -> Result<ErrorReport> {
    check_n_values(&config.n_values, 1)?;
    if config.seeds == 0 {
        return Err(Error::invalid(MODULE, "need at least one seed"));
    }
    if config.methods.contains(&RuleMethod::Euclidean) {
        return Err(Error::invalid(MODULE, "use euclidean_experiment for the Euclidean rule"));
    }
    let space = config.space;
    let (profile, scale) = KernelProfile::parse(&config.profile, &space)?.lipschitz_normalize();
    let basis = basis_for(&space, config.degree)?;
    let max_eval = config.n_values.iter().map(|&n| config.eval_size(n)).max().unwrap_or(1);
    let full_net = make_eval_net(&space, max_eval, seeds::derive(config.master_seed, &[0xe7a1]))?;
    let per = basis.r + 2;
    let mc_budget = |n: usize| {
        if config.methods.contains(&RuleMethod::Signed) {
            2 * per * n
        } else {
            per * n
        }
    };

    let mut rows = Vec::new();
    let mut eval_sizes = Vec::new();
    let mut mesh_norms = Vec::new();
    for &n in &config.n_values {
        let cloud = sample_uniform(&space, config.fine_factor * n, seeds::derive(config.master_seed, &[0xc10d, n as u64]))?;
        let g = DensityField::parse(&config.density, &cloud, NormKind::SupNormalized)?;
        let constant_one = g.values.iter().all(|&v| v == 1.0);
        let net = full_net.prefix(config.eval_size(n));
        let reference = reference_values(
            &profile,
            &net,
            Oracle::FineCloud {
                cloud: &cloud,
                g: if constant_one { None } else { Some(&g.values) },
            },
        )?;
        let partition = partition_space(&cloud, &PartitionParams::new(n))?;
        eval_sizes.push(net.len());
        mesh_norms.push(net.mesh_norm());
        for s in 0..config.seeds {
            let rule_seed = seeds::derive(config.master_seed, &[n as u64, s as u64]);
            for &method in &config.methods {
                let rule = match method {
                    RuleMethod::Plain => {
                        if !constant_one {
                            return Err(Error::invalid(MODULE, "the plain rule needs g = 1; use the signed method"));
                        }
                        build_plain(&partition, &cloud, &basis, rule_seed, config.compress)?
                    }
                    RuleMethod::Signed => build_signed_with(&cloud, &g, &partition, &basis, rule_seed, config.compress)?.rule,
                    RuleMethod::MonteCarlo => monte_carlo(
                        &cloud,
                        if constant_one { None } else { Some(&g) },
                        mc_budget(n),
                        seeds::derive(rule_seed, &[0x3c]),
                    )?,
                    RuleMethod::Euclidean => unreachable!(),
                };
                let err = sup_error(&rule, &profile, &net, &reference)?;
                rows.push(Row {
                    method,
                    d: space.dim(),
                    n,
                    seed: s,
                    nodes: rule.len(),
                    sup_error: err.value,
                    mesh_norm: net.mesh_norm(),
                });
            }
        }
    }
    let series = config
        .methods
        .iter()
        .map(|&m| summarize(m, &config.n_values, &rows))
        .collect::<Result<Vec<_>>>()?;
    let (constants, bound_curve) = match space.kind {
        SpaceKind::Sphere { d } => {
            let c = bound_constants(d, profile.ell(), space.beta);
            let curve = config.n_values.iter().map(|&n| c.bound(n)).collect();
            (Some(c), curve)
        }
        SpaceKind::Ball { .. } => (None, Vec::new()),
    };
    Ok(ErrorReport {
        config: config.clone(),
        n_values: config.n_values.clone(),
        eval_sizes,
        mesh_norms,
        lipschitz_scale: scale,
        theory_slope: theory_slope(space.beta),
        mc_theory_slope: -0.5,
        series,
        constants,
        bound_curve,
        rows,
        notes: vec![
            "sup errors are maxima over a finite evaluation net and are lower bounds on the true sup; \
             the true sup exceeds them by at most twice the mesh norm (errors are 1-Lipschitz in x)"
                .to_string(),
            "the reference measure is the build cloud itself".to_string(),
        ],
    })
}

/// Exponent of the Euclidean bound in each regularity regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub beta: f64,
    pub regime: String,
    pub exponent: f64,
    pub log_power: f64,
}

pub fn beta_regime(beta: f64) -> RegimeRow {
    if beta < 3.0 {
        RegimeRow {
            beta,
            regime: "beta < 3".to_string(),
            exponent: theory_slope(beta),
            log_power: 0.5,
        }
    } else if beta == 3.0 {
        RegimeRow {
            beta,
            regime: "beta = 3".to_string(),
            exponent: -1.0,
            log_power: 1.5,
        }
    } else {
        RegimeRow {
            beta,
            regime: "beta > 3".to_string(),
            exponent: -(beta + 1.0) / (2.0 * (beta - 1.0)),
            log_power: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EuclidConfig {
    pub space: SpaceSpec,
    pub profile: String,
    pub density: String,
    /// Profile degree `n₀`; the monomial basis has degree `2 n₀`.
    pub degree: usize,
    pub n_values: Vec<usize>,
    pub seeds: usize,
    pub master_seed: u64,
    pub policy: NxPolicy,
    pub fine_min: usize,
    pub fine_factor: usize,
    pub eval_cap: usize,
    pub eval_per_n: usize,
    pub compress: CompressMethod,
}

impl EuclidConfig {
    pub fn new(space: SpaceSpec, profile: &str, n_values: Vec<usize>) -> Self {
        EuclidConfig {
            space,
            profile: profile.to_string(),
            density: "const".to_string(),
            degree: 1,
            n_values,
            seeds: 10,
            master_seed: 7,
            policy: NxPolicy::Adaptive,
            fine_min: 20_000,
            fine_factor: 20,
            eval_cap: 20_000,
            eval_per_n: 50,
            compress: CompressMethod::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EuclidReport {
    pub config: EuclidConfig,
    pub n_values: Vec<usize>,
    pub n1: Vec<usize>,
    pub cells: Vec<usize>,
    pub eval_sizes: Vec<usize>,
    pub mesh_norms: Vec<f64>,
    pub lipschitz_scale: f64,
    pub series: MethodSeries,
    /// Largest `|Σλ f(y) - Σ w g f|` over the monomial basis and all runs.
    pub max_moment_error: f64,
    /// `n · MOMENT_TOL` for the largest `n`.
    pub moment_tolerance: f64,
    pub regime: RegimeRow,
    pub regime_table: Vec<RegimeRow>,
    pub rows: Vec<Row>,
}

fn global_moment_error(rule: &CubatureRule, cloud: &WeightedPointCloud, g: &[f64], basis: &BasisSet) -> f64 {
    let r = basis.r;
    let mut ev = basis.evaluator();
    let mut target = vec![Compensated::default(); r];
    for (i, p) in cloud.points().enumerate() {
        let w = cloud.weights()[i] * g[i];
        for (acc, v) in target.iter_mut().zip(ev.eval(p)) {
            acc.add(w * v);
        }
    }
    let mut got = vec![Compensated::default(); r];
    for (y, &w) in rule.nodes.iter().zip(&rule.weights) {
        for (acc, v) in got.iter_mut().zip(ev.eval(y)) {
            acc.add(w * v);
        }
    }
    target
        .iter()
        .zip(&got)
        .map(|(t, g)| (t.total() - g.total()).abs())
        .fold(0.0, f64::max)
}

/// Euclidean decay experiment over node budgets `n`.
pub fn euclidean_experiment(config: &EuclidConfig) -> Result<EuclidReport> {
    check_n_values(&config.n_values, 3)?;
    let space = config.space;
    if !matches!(space.kind, SpaceKind::Ball { .. }) {
        return Err(Error::invalid(MODULE, "the Euclidean experiment needs a ball"));
    }
    let (profile, scale) = KernelProfile::parse(&config.profile, &space)?.lipschitz_normalize();
    let basis = basis_for(&space, config.degree)?;
    let max_eval = config
        .n_values
        .iter()
        .map(|&n| config.eval_cap.min(config.eval_per_n * n))
        .max()
        .unwrap_or(1);
    let full_net = make_eval_net(&space, max_eval, seeds::derive(config.master_seed, &[0xe7a2]))?;
    let mut rows = Vec::new();
    let (mut n1s, mut cells, mut eval_sizes, mut mesh_norms) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut max_moment_error = 0.0f64;
    for &n in &config.n_values {
        let m = config.fine_min.max(config.fine_factor * n);
        let cloud = sample_uniform(&space, m, seeds::derive(config.master_seed, &[0xc10e, n as u64]))?;
        let g = DensityField::parse(&config.density, &cloud, NormKind::L1Normalized)?;
        let net = full_net.prefix(config.eval_cap.min(config.eval_per_n * n));
        let reference = reference_values(
            &profile,
            &net,
            Oracle::FineCloud {
                cloud: &cloud,
                g: Some(&g.values),
            },
        )?;
        let plan = plan_euclidean(&cloud, &g, n, basis.r, config.policy)?;
        n1s.push(plan.parts.first().map_or(0, |p| p.0.n1));
        cells.push(plan.cell_count());
        eval_sizes.push(net.len());
        mesh_norms.push(net.mesh_norm());
        for s in 0..config.seeds {
            let seed = seeds::derive(config.master_seed, &[n as u64, s as u64]);
            let rule = build_euclidean_with(&plan, &cloud, &basis, seed, config.compress)?;
            max_moment_error = max_moment_error.max(global_moment_error(&rule, &cloud, &g.values, &basis));
            let err = sup_error(&rule, &profile, &net, &reference)?;
            rows.push(Row {
                method: RuleMethod::Euclidean,
                d: space.dim(),
                n,
                seed: s,
                nodes: rule.len(),
                sup_error: err.value,
                mesh_norm: net.mesh_norm(),
            });
        }
    }
    let series = summarize(RuleMethod::Euclidean, &config.n_values, &rows)?;
    let max_n = *config.n_values.last().unwrap();
    Ok(EuclidReport {
        config: config.clone(),
        n_values: config.n_values.clone(),
        n1: n1s,
        cells,
        eval_sizes,
        mesh_norms,
        lipschitz_scale: scale,
        series,
        max_moment_error,
        moment_tolerance: max_n as f64 * MOMENT_TOL,
        regime: beta_regime(space.beta),
        regime_table: [1.0, 2.0, 3.0, 4.0, 5.0, 6.0].iter().map(|&b| beta_regime(b)).collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zonal_reference_values() {
        let s2 = SpaceSpec::sphere(2).unwrap();
        let abs = KernelProfile::parse("abs", &s2).unwrap();
        assert_abs_diff_eq!(zonal_exact(&abs, 2).unwrap(), 0.5, epsilon = 1e-12);
        let lin = KernelProfile::parse("linear", &s2).unwrap();
        assert_abs_diff_eq!(zonal_exact(&lin, 2).unwrap(), 0.0, epsilon = 1e-12);
        let c = KernelProfile::parse("const:1.7", &s2).unwrap();
        assert_abs_diff_eq!(zonal_exact(&c, 2).unwrap(), 1.7, epsilon = 1e-12);
    }

    #[test]
    fn line_fit_recovers_exact_slope() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 - 1.25 * x).collect();
        let fit = fit_line(&xs, &ys).unwrap();
        assert_abs_diff_eq!(fit.slope, -1.25, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
        assert!(fit.reliable);
    }

    #[test]
    fn constants_scale_with_ell() {
        let a = bound_constants(2, 1, 2.0);
        let b = bound_constants(2, 4, 2.0);
        assert_abs_diff_eq!(b.c3 / a.c3, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a.c1, 40.0 * PI);
        assert_abs_diff_eq!(a.c2, 1.5 * 2f64.sqrt());
    }

    #[test]
    fn eval_net_is_nested_and_mesh_shrinks() {
        let s2 = SpaceSpec::sphere(2).unwrap();
        let net = make_eval_net(&s2, 256, 3).unwrap();
        let small = net.prefix(64);
        assert_eq!(small.point(10), net.point(10));
        assert!(net.mesh_norm() < small.mesh_norm());
        assert_eq!(make_eval_net(&s2, 1, 3).unwrap().len(), 1);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
