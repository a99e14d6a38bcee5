//! Global cubature rules assembled from per-cell atomic rules, plus the
//! Monte Carlo baseline.
//!
//! * plain: `g ≡ 1`; each cell's atoms weighted by the cell mass.
//! * signed: bounded `g` with `‖g‖_∞ ≤ 1` through `h = b(2+g)`,
//!   `b = 1/∫(2+g)dμ`; the rule is `(1/b)·(τ-rule) − 2·(μ-rule)` with
//!   `dτ = h dμ`.
//! * euclidean: `g ∈ L¹` on a ball with variable-radius covering cells;
//!   signed `g` is split into `g⁺ − g⁻`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function_classes::{BasisSet, KernelProfile};
use crate::geometry::WeightedPointCloud;
use crate::moment_match::{compress, AtomicRule, CompressMethod};
use crate::net_partition::besicovitch::{besicovitch_cover, BesicovitchCover, NxPolicy};
use crate::net_partition::{partition_space, Cell, Partition, PartitionParams};
use crate::seeds;
use crate::summation::{compensated_sum, Compensated};

const MODULE: &str = "discretizer";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleMethod {
    Plain,
    Signed,
    Euclidean,
    MonteCarlo,
}

impl std::str::FromStr for RuleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plain" => Ok(RuleMethod::Plain),
            "signed" => Ok(RuleMethod::Signed),
            "euclidean" => Ok(RuleMethod::Euclidean),
            "mc" | "monte_carlo" | "montecarlo" => Ok(RuleMethod::MonteCarlo),
            other => Err(Error::invalid(MODULE, format!("unknown rule method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleMeta {
    pub method: RuleMethod,
    /// Number of cells `N` (or the node budget `n` for Euclidean and Monte
    /// Carlo rules).
    #[serde(rename = "N")]
    pub n: usize,
    pub r: usize,
    pub ell: Option<usize>,
    pub seed: u64,
    pub profile_id: Option<String>,
    pub space: crate::geometry::SpaceSpec,
    pub cloud_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubatureRule {
    pub meta: RuleMeta,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl CubatureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    /// Records the profile the rule is meant for.
    pub fn with_profile(mut self, k: &KernelProfile) -> Self {
        self.meta.profile_id = Some(k.id.clone());
        self.meta.ell = Some(k.ell());
        self
    }

    /// `Σ λ_j f(y_j)`.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        let mut acc = Compensated::default();
        for (y, &w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(y));
        }
        acc.total()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// `‖g‖_∞ ≤ 1`.
    SupNormalized,
    /// `∫|g| dμ = 1`.
    L1Normalized,
}

/// A density `g` sampled on the points of a cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub id: String,
    pub values: Vec<f64>,
    pub norm_kind: NormKind,
}

impl DensityField {
    pub fn new(id: impl Into<String>, values: Vec<f64>, norm_kind: NormKind, cloud: &WeightedPointCloud) -> Result<Self> {
        let g = DensityField {
            id: id.into(),
            values,
            norm_kind,
        };
        g.validate(cloud)?;
        Ok(g)
    }

    pub fn constant(cloud: &WeightedPointCloud, c: f64, norm_kind: NormKind) -> Result<Self> {
        DensityField::new(format!("const:{c}"), vec![c; cloud.len()], norm_kind, cloud)
    }

    /// Parses `const`, `const:c`, `zero` or `sign:k` (`sign(x_k)` with
    /// 1-based coordinate `k`).
    pub fn parse(spec: &str, cloud: &WeightedPointCloud, norm_kind: NormKind) -> Result<Self> {
        let values: Vec<f64> = match spec.trim() {
            "const" => vec![1.0; cloud.len()],
            "zero" => vec![0.0; cloud.len()],
            s if s.starts_with("const:") => {
                let c: f64 = s[6..]
                    .parse()
                    .map_err(|e| Error::invalid(MODULE, format!("bad constant in {s:?}: {e}")))?;
                vec![c; cloud.len()]
            }
            s if s.starts_with("sign:") => {
                let k: usize = s[5..]
                    .parse()
                    .map_err(|e| Error::invalid(MODULE, format!("bad coordinate in {s:?}: {e}")))?;
                if k == 0 || k > cloud.space.ambient_dim() {
                    return Err(Error::invalid(MODULE, format!("coordinate {k} out of range")));
                }
                cloud.points().map(|p| sign(p[k - 1])).collect()
            }
            s => return Err(Error::invalid(MODULE, format!("unknown density {s:?}"))),
        };
        DensityField::new(spec.trim(), values, norm_kind, cloud)
    }

    pub fn validate(&self, cloud: &WeightedPointCloud) -> Result<()> {
        if self.values.len() != cloud.len() {
            return Err(Error::DimensionMismatch {
                module: MODULE,
                expected: cloud.len(),
                got: self.values.len(),
            });
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(MODULE, "density values must be finite"));
        }
        match self.norm_kind {
            NormKind::SupNormalized => {
                let sup = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if sup > 1.0 + 1e-9 {
                    return Err(Error::invalid(MODULE, format!("sup-normalized density has sup {sup}")));
                }
            }
            NormKind::L1Normalized => {
                let l1 = self.l1_norm(cloud);
                if (l1 - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(MODULE, format!("L1-normalized density has norm {l1}")));
                }
            }
        }
        Ok(())
    }

    pub fn l1_norm(&self, cloud: &WeightedPointCloud) -> f64 {
        compensated_sum(cloud.weights().iter().zip(&self.values).map(|(w, g)| w * g.abs()))
    }

    pub fn integral(&self, cloud: &WeightedPointCloud) -> f64 {
        compensated_sum(cloud.weights().iter().zip(&self.values).map(|(w, g)| w * g))
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn meta(method: RuleMethod, n: usize, r: usize, seed: u64, cloud: &WeightedPointCloud) -> RuleMeta {
    RuleMeta {
        method,
        n,
        r,
        ell: None,
        seed,
        profile_id: None,
        space: cloud.space,
        cloud_ref: cloud.fingerprint(),
    }
}

/// Compresses every cell in parallel (per-cell seeds derived from `seed`).
pub fn compress_cells(
    cells: &[Cell],
    cloud: &WeightedPointCloud,
    basis: &BasisSet,
    seed: u64,
    method: CompressMethod,
) -> Result<Vec<AtomicRule>> {
    cells
        .par_iter()
        .enumerate()
        .map(|(j, c)| compress(c, j, cloud, basis, seeds::derive(seed, &[j as u64]), method))
        .collect()
}

fn assemble(cells: &[Cell], rules: &[AtomicRule], cloud: &WeightedPointCloud, scale: f64, nodes: &mut Vec<Vec<f64>>, weights: &mut Vec<f64>) {
    for (c, rule) in cells.iter().zip(rules) {
        for (&i, &w) in rule.indices.iter().zip(&rule.weights) {
            nodes.push(cloud.point(i).to_vec());
            weights.push(scale * c.mass * w);
        }
    }
}

/// Plain rule for `∫ Φ(ρ(x,y)) dμ(y)` from an equal-measure partition:
/// atom weights are the per-cell weights times the cell mass.
pub fn build_plain(
    partition: &Partition,
    cloud: &WeightedPointCloud,
    basis: &BasisSet,
    seed: u64,
    method: CompressMethod,
) -> Result<CubatureRule> {
    if partition.cloud_ref != cloud.fingerprint() {
        return Err(Error::invalid(MODULE, "partition was built on a different cloud"));
    }
    let rules = compress_cells(&partition.cells, cloud, basis, seed, method)?;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    assemble(&partition.cells, &rules, cloud, 1.0, &mut nodes, &mut weights);
    Ok(CubatureRule {
        meta: meta(RuleMethod::Plain, partition.n, basis.r, seed, cloud),
        nodes,
        weights,
    })
}

/// Partition + plain rule in one call.
pub fn plain_rule(cloud: &WeightedPointCloud, n: usize, basis: &BasisSet, seed: u64, method: CompressMethod) -> Result<CubatureRule> {
    let partition = partition_space(cloud, &PartitionParams::new(n))?;
    build_plain(&partition, cloud, basis, seed, method)
}

/// The combined signed rule together with its two plain sub-rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedBuild {
    pub rule: CubatureRule,
    /// Plain rule for `dτ = h dμ`.
    pub tau_rule: CubatureRule,
    /// Plain rule for `dμ`.
    pub mu_rule: CubatureRule,
    pub b: f64,
}

/// Signed rule for `∫ Φ(ρ(x,y)) g(y) dμ(y)` with `‖g‖_∞ ≤ 1`. The μ-rule
/// may be supplied pre-built (it does not depend on `g`).
pub fn build_signed(
    cloud: &WeightedPointCloud,
    g: &DensityField,
    n: usize,
    basis: &BasisSet,
    seed: u64,
    method: CompressMethod,
) -> Result<SignedBuild> {
    let mu_partition = partition_space(cloud, &PartitionParams::new(n))?;
    build_signed_with(cloud, g, &mu_partition, basis, seed, method)
}

/// [`build_signed`] reusing a partition of the unweighted cloud.
pub fn build_signed_with(
    cloud: &WeightedPointCloud,
    g: &DensityField,
    mu_partition: &Partition,
    basis: &BasisSet,
    seed: u64,
    method: CompressMethod,
) -> Result<SignedBuild> {
    if g.norm_kind != NormKind::SupNormalized {
        return Err(Error::invalid(MODULE, "signed rules need a sup-normalized density"));
    }
    g.validate(cloud)?;
    let n = mu_partition.n;
    let b = 1.0 / compensated_sum(cloud.weights().iter().zip(&g.values).map(|(w, v)| w * (2.0 + v)));
    let tau_weights: Vec<f64> = cloud
        .weights()
        .iter()
        .zip(&g.values)
        .map(|(w, v)| w * b * (2.0 + v))
        .collect();
    let tau_cloud = cloud.reweighted(tau_weights)?;
    let tau_partition = partition_space(&tau_cloud, &PartitionParams::new(n))?;
    let mut tau_rule = build_plain(&tau_partition, &tau_cloud, basis, seeds::derive(seed, &[1]), method)?;
    let mut mu_rule = build_plain(mu_partition, cloud, basis, seeds::derive(seed, &[2]), method)?;
    tau_rule.meta.seed = seed;
    mu_rule.meta.seed = seed;
    let mut nodes = tau_rule.nodes.clone();
    let mut weights: Vec<f64> = tau_rule.weights.iter().map(|a| a / b).collect();
    nodes.extend(mu_rule.nodes.iter().cloned());
    weights.extend(mu_rule.weights.iter().map(|w| -2.0 * w));
    let rule = CubatureRule {
        meta: meta(RuleMethod::Signed, n, basis.r, seed, cloud),
        nodes,
        weights,
    };
    Ok(SignedBuild {
        rule,
        tau_rule,
        mu_rule,
        b,
    })
}

/// Covering cells for each sign part of a Euclidean density, with the
/// factor (`±‖g^±‖₁`) reattached to that part's weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EuclideanPlan {
    pub n: usize,
    pub parts: Vec<(BesicovitchCover, f64)>,
}

impl EuclideanPlan {
    pub fn cell_count(&self) -> usize {
        self.parts.iter().map(|p| p.0.cells.len()).sum()
    }
}

/// Covering cells for the Euclidean rule with node budget `n`. A signed
/// `g` is split into positive and negative parts that share the budget in
/// proportion to their masses.
pub fn plan_euclidean(cloud: &WeightedPointCloud, g: &DensityField, n: usize, r: usize, policy: NxPolicy) -> Result<EuclideanPlan> {
    if g.norm_kind != NormKind::L1Normalized {
        return Err(Error::invalid(MODULE, "Euclidean rules need an L1-normalized density"));
    }
    g.validate(cloud)?;
    let w = cloud.weights();
    let pos: Vec<f64> = g.values.iter().map(|v| v.max(0.0)).collect();
    let neg: Vec<f64> = g.values.iter().map(|v| (-v).max(0.0)).collect();
    let mass = |part: &[f64]| compensated_sum(w.iter().zip(part).map(|(a, b)| a * b));
    let (mp, mn) = (mass(&pos), mass(&neg));
    let signed = mp > 0.0 && mn > 0.0;
    let mut parts = Vec::new();
    for (part, m, sgn) in [(pos, mp, 1.0), (neg, mn, -1.0)] {
        if m <= 0.0 {
            continue;
        }
        let budget = if signed { ((n as f64) * m).floor() as usize } else { n };
        let normalized: Vec<f64> = part.iter().map(|v| v / m).collect();
        let cover = besicovitch_cover(cloud, &normalized, budget, r, policy)?;
        parts.push((cover, sgn * m));
    }
    Ok(EuclideanPlan { n, parts })
}

/// Compresses the cells of a plan into a rule with at most `n` nodes.
pub fn build_euclidean_with(
    plan: &EuclideanPlan,
    cloud: &WeightedPointCloud,
    basis: &BasisSet,
    seed: u64,
    method: CompressMethod,
) -> Result<CubatureRule> {
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (k, (cover, scale)) in plan.parts.iter().enumerate() {
        let rules = compress_cells(&cover.cells, cloud, basis, seeds::derive(seed, &[k as u64]), method)?;
        assemble(&cover.cells, &rules, cloud, *scale, &mut nodes, &mut weights);
    }
    if nodes.len() > plan.n {
        return Err(Error::numerical(
            MODULE,
            format!("{} nodes exceed the budget {}", nodes.len(), plan.n),
        ));
    }
    Ok(CubatureRule {
        meta: meta(RuleMethod::Euclidean, plan.n, basis.r, seed, cloud),
        nodes,
        weights,
    })
}

/// Euclidean rule for `∫ Φ(‖x-y‖) g(y) dμ(y)` on a ball, `‖g‖_{L¹} = 1`,
/// with at most `n` nodes.
pub fn build_euclidean(
    cloud: &WeightedPointCloud,
    g: &DensityField,
    n: usize,
    basis: &BasisSet,
    policy: NxPolicy,
    seed: u64,
    method: CompressMethod,
) -> Result<CubatureRule> {
    let plan = plan_euclidean(cloud, g, n, basis.r, policy)?;
    build_euclidean_with(&plan, cloud, basis, seed, method)
}

/// Monte Carlo rule: `n` i.i.d. nodes from `|g| dμ / ‖g‖₁` (from μ when `g`
/// is absent) with weights `sign(g)·‖g‖₁/n`.
pub fn monte_carlo(cloud: &WeightedPointCloud, g: Option<&DensityField>, n: usize, seed: u64) -> Result<CubatureRule> {
    if n == 0 {
        return Err(Error::invalid(MODULE, "Monte Carlo rule needs n >= 1"));
    }
    let w = cloud.weights();
    let (probs, scale, signs): (Vec<f64>, f64, Option<&[f64]>) = match g {
        None => (w.to_vec(), 1.0, None),
        Some(g) => {
            g.validate(cloud)?;
            let l1 = g.l1_norm(cloud);
            if l1 == 0.0 {
                return Ok(CubatureRule {
                    meta: meta(RuleMethod::MonteCarlo, n, 0, seed, cloud),
                    nodes: vec![cloud.point(0).to_vec()],
                    weights: vec![0.0],
                });
            }
            (w.iter().zip(&g.values).map(|(a, b)| a * b.abs()).collect(), l1, Some(&g.values))
        }
    };
    let dist = WeightedIndex::new(&probs).map_err(|e| Error::numerical(MODULE, e.to_string()))?;
    let mut rng = seeds::rng(seed);
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for _ in 0..n {
        let i = dist.sample(&mut rng);
        nodes.push(cloud.point(i).to_vec());
        let s = signs.map_or(1.0, |v| sign(v[i]));
        weights.push(s * scale / n as f64);
    }
    Ok(CubatureRule {
        meta: meta(RuleMethod::MonteCarlo, n, 0, seed, cloud),
        nodes,
        weights,
    })
}

/// `Σ_j λ_j Φ(ρ(x, y_j))` with compensated summation.
pub fn apply(rule: &CubatureRule, k: &KernelProfile, x: &[f64]) -> Result<f64> {
    if !k.matches_space(&rule.meta.space) {
        return Err(Error::invalid(MODULE, "profile does not match the rule's space"));
    }
    if x.len() != rule.meta.space.ambient_dim() {
        return Err(Error::DimensionMismatch {
            module: MODULE,
            expected: rule.meta.space.ambient_dim(),
            got: x.len(),
        });
    }
    Ok(rule.integrate(|y| k.eval_pair(x, y)))
}

/// [`apply`] at many points in parallel.
pub fn apply_many(rule: &CubatureRule, k: &KernelProfile, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
    xs.par_iter().map(|x| apply(rule, k, x)).collect()
}
