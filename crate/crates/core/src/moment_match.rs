//! Per-cell atomic rules: at most `r + 2` nonnegative atoms drawn from a
//! cell's own points that reproduce every basis moment of the cell's
//! normalized measure.
//!
//! Two constructions are provided.
//!
//! * [`CompressMethod::RandomizedCaratheodory`] streams the cell's points in
//!   a seeded random order, keeping an active set of at most `r + 1` atoms.
//!   Whenever the set reaches `r + 2` atoms a null vector `c` of the moment
//!   matrix is found and the weights move to one of the two endpoints of the
//!   feasible segment `λ + t c`, chosen with the probabilities that make the
//!   step mean-preserving. The returned random rule therefore has the cell
//!   measure as its expectation.
//! * [`CompressMethod::CandidateNnls`] draws `K = max(4r, 64)` weighted
//!   candidates, solves a nonnegative least-squares moment problem and
//!   prunes the solution to a basic feasible support; `K` doubles up to
//!   three times on failure before falling back to the streaming method on
//!   the whole cell.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function_classes::BasisSet;
use crate::geometry::WeightedPointCloud;
use crate::net_partition::Cell;
use crate::nnls::nnls;
use crate::seeds;
use crate::summation::Compensated;

const MODULE: &str = "moment_match";

/// Absolute tolerance on normalized moments.
pub const MOMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressMethod {
    #[default]
    RandomizedCaratheodory,
    CandidateNnls,
}

impl std::str::FromStr for CompressMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "caratheodory" | "randomized_caratheodory" => Ok(CompressMethod::RandomizedCaratheodory),
            "nnls" | "candidate_nnls" => Ok(CompressMethod::CandidateNnls),
            _ => Err(Error::invalid(MODULE, format!("unknown compression method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicRule {
    pub cell_id: usize,
    /// Cloud indices of the atoms.
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    /// Largest moment mismatch, including `|Σλ - 1|`.
    pub residual: f64,
}

impl AtomicRule {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Rows of `[1, basis(p)]` for every member of a cell.
fn moment_vectors(cell: &Cell, cloud: &WeightedPointCloud, basis: &BasisSet) -> Vec<f64> {
    let k = basis.r + 1;
    let mut ev = basis.evaluator();
    let mut out = vec![0.0; cell.len() * k];
    for (row, &i) in out.chunks_exact_mut(k).zip(&cell.point_indices) {
        row[0] = 1.0;
        row[1..].copy_from_slice(ev.eval(cloud.point(i)));
    }
    out
}

fn weighted_mean(vectors: &[f64], k: usize, weights: &[f64]) -> Vec<f64> {
    let mass: f64 = {
        let mut c = Compensated::default();
        weights.iter().for_each(|&w| c.add(w));
        c.total()
    };
    (0..k)
        .map(|j| {
            let mut c = Compensated::default();
            for (row, &w) in vectors.chunks_exact(k).zip(weights) {
                c.add(w * row[j]);
            }
            c.total() / mass
        })
        .collect()
}

fn check_cell(cell: &Cell, cloud: &WeightedPointCloud, basis: &BasisSet) -> Result<()> {
    if basis.r == 0 {
        return Err(Error::invalid(MODULE, "basis must have r >= 1"));
    }
    if !basis.matches_space(&cloud.space) {
        return Err(Error::invalid(MODULE, "basis does not match the cloud's space"));
    }
    if cell.is_empty() {
        return Err(Error::invalid(MODULE, "empty cell"));
    }
    if !(cell.mass > 0.0) {
        return Err(Error::invalid(MODULE, "zero-mass cell"));
    }
    if cell.point_indices.iter().any(|&i| i >= cloud.len()) {
        return Err(Error::invalid(MODULE, "cell refers to points outside the cloud"));
    }
    Ok(())
}

/// Normalized discrete moments `(1/mass) Σ w_i basis(p_i)` of a cell.
pub fn cell_moments(cell: &Cell, cloud: &WeightedPointCloud, basis: &BasisSet) -> Result<Vec<f64>> {
    check_cell(cell, cloud, basis)?;
    let k = basis.r + 1;
    let v = moment_vectors(cell, cloud, basis);
    Ok(weighted_mean(&v, k, &cell.point_weights)[1..].to_vec())
}

/// A vector `c ≠ 0` with `Σ_j c_j col_j = 0` for a `rows × (rows+1)`
/// column-major matrix, by Gauss–Jordan elimination with full pivoting.
fn null_vector(cols: &[&[f64]], rows: usize) -> Vec<f64> {
    let n = cols.len();
    let mut a = vec![0.0; rows * n];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..rows {
            a[i * n + j] = c[i];
        }
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rank = 0;
    while rank < rows {
        let mut best = (0.0, rank, rank);
        for i in rank..rows {
            for j in rank..n {
                let v = a[i * n + perm[j]].abs();
                if v > best.0 {
                    best = (v, i, j);
                }
            }
        }
        if best.0 <= 1e-13 * scale {
            break;
        }
        let (_, pi, pj) = best;
        for j in 0..n {
            a.swap(rank * n + j, pi * n + j);
        }
        perm.swap(rank, pj);
        let pc = perm[rank];
        let pv = a[rank * n + pc];
        for j in 0..n {
            a[rank * n + j] /= pv;
        }
        for i in 0..rows {
            if i != rank {
                let f = a[i * n + pc];
                if f != 0.0 {
                    for j in 0..n {
                        a[i * n + j] -= f * a[rank * n + j];
                    }
                }
            }
        }
        rank += 1;
    }
    let free = perm[rank];
    let mut c = vec![0.0; n];
    c[free] = 1.0;
    for i in 0..rank {
        c[perm[i]] = -a[i * n + free];
    }
    c
}

/// Removes one atom from an active set of `r + 2` atoms. With `rng` the
/// step is the mean-preserving random endpoint, otherwise the positive
/// endpoint.
fn reduce<R: Rng>(active: &mut Vec<(usize, f64)>, vectors: &[f64], k: usize, rng: Option<&mut R>) {
    let cols: Vec<&[f64]> = active
        .iter()
        .map(|&(pos, _)| &vectors[pos * k..(pos + 1) * k])
        .collect();
    let c = null_vector(&cols, k);
    let (mut up, mut up_at) = (f64::INFINITY, usize::MAX);
    let (mut down, mut down_at) = (f64::INFINITY, usize::MAX);
    for (a, (&ci, &(_, lam))) in c.iter().zip(active.iter()).enumerate() {
        if ci < 0.0 && lam / -ci < up {
            up = lam / -ci;
            up_at = a;
        }
        if ci > 0.0 && lam / ci < down {
            down = lam / ci;
            down_at = a;
        }
    }
    let (t, zero_at) = match (up_at != usize::MAX, down_at != usize::MAX) {
        (true, true) => {
            let go_up = match rng {
                Some(rng) => rng.random::<f64>() * (up + down) < down,
                None => true,
            };
            if go_up {
                (up, up_at)
            } else {
                (-down, down_at)
            }
        }
        (true, false) => (up, up_at),
        (false, true) => (-down, down_at),
        // a degenerate null vector: drop the lightest atom
        (false, false) => {
            let lightest = (0..active.len())
                .min_by(|&a, &b| active[a].1.total_cmp(&active[b].1))
                .unwrap();
            let w = active.remove(lightest).1;
            let s: f64 = active.iter().map(|a| a.1).sum();
            active.iter_mut().for_each(|a| a.1 += w * a.1 / s);
            return;
        }
    };
    for (a, &ci) in active.iter_mut().zip(&c) {
        a.1 = (a.1 + t * ci).max(0.0);
    }
    active[zero_at].1 = 0.0;
    active.retain(|a| a.1 > 0.0);
}

/// Streams `(member position, normalized weight)` pairs through the
/// Carathéodory reduction.
fn caratheodory<R: Rng>(
    order: impl IntoIterator<Item = (usize, f64)>,
    vectors: &[f64],
    k: usize,
    mut rng: Option<&mut R>,
) -> Vec<(usize, f64)> {
    let mut active: Vec<(usize, f64)> = Vec::with_capacity(k + 2);
    for item in order {
        if item.1 <= 0.0 {
            continue;
        }
        active.push(item);
        while active.len() > k {
            reduce(&mut active, vectors, k, rng.as_deref_mut());
        }
    }
    active
}

fn residual_of(support: &[(usize, f64)], vectors: &[f64], k: usize, target: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..k {
        let mut c = Compensated::default();
        for &(pos, w) in support {
            c.add(w * vectors[pos * k + j]);
        }
        worst = worst.max((c.total() - target[j]).abs());
    }
    worst
}

/// Re-solves the weights on a fixed support against the target moments.
fn refit(support: &[(usize, f64)], vectors: &[f64], k: usize, target: &[f64]) -> Result<Vec<(usize, f64)>> {
    let a = DMatrix::from_fn(k, support.len(), |i, j| vectors[support[j].0 * k + i]);
    let b = DVector::from_column_slice(target);
    let sol = nnls(&a, &b, 3 * support.len() + 10)?;
    Ok(support
        .iter()
        .zip(sol.x.iter())
        .map(|(&(pos, _), &w)| (pos, w))
        .filter(|a| a.1 > 0.0)
        .collect())
}

fn finish_rule(cell: &Cell, cell_id: usize, mut support: Vec<(usize, f64)>, vectors: &[f64], k: usize, target: &[f64]) -> Result<AtomicRule> {
    let mut residual = residual_of(&support, vectors, k, target);
    if residual > MOMENT_TOL {
        support = refit(&support, vectors, k, target)?;
        residual = residual_of(&support, vectors, k, target);
    }
    if residual > MOMENT_TOL {
        return Err(Error::numerical(
            MODULE,
            format!("cell {cell_id}: moment residual {residual:e} above tolerance"),
        ));
    }
    support.sort_by_key(|a| cell.point_indices[a.0]);
    Ok(AtomicRule {
        cell_id,
        indices: support.iter().map(|a| cell.point_indices[a.0]).collect(),
        weights: support.iter().map(|a| a.1).collect(),
        residual,
    })
}

/// Compresses one cell into an atomic rule with at most `r + 2` atoms.
pub fn compress(
    cell: &Cell,
    cell_id: usize,
    cloud: &WeightedPointCloud,
    basis: &BasisSet,
    seed: u64,
    method: CompressMethod,
) -> Result<AtomicRule> {
    check_cell(cell, cloud, basis)?;
    let k = basis.r + 1;
    let vectors = moment_vectors(cell, cloud, basis);
    let target = weighted_mean(&vectors, k, &cell.point_weights);
    let lam: Vec<f64> = cell.point_weights.iter().map(|w| w / cell.mass).collect();
    if cell.len() <= k + 1 {
        let support = (0..cell.len()).map(|p| (p, lam[p])).filter(|a| a.1 > 0.0).collect();
        return finish_rule(cell, cell_id, support, &vectors, k, &target);
    }
    let mut rng = seeds::rng(seed);
    match method {
        CompressMethod::RandomizedCaratheodory => {
            let mut order: Vec<usize> = (0..cell.len()).collect();
            order.shuffle(&mut rng);
            let support = caratheodory(order.into_iter().map(|p| (p, lam[p])), &vectors, k, Some(&mut rng));
            finish_rule(cell, cell_id, support, &vectors, k, &target)
        }
        CompressMethod::CandidateNnls => {
            let mut draw = (4 * basis.r).max(64);
            for _ in 0..4 {
                if draw >= cell.len() {
                    break;
                }
                let picked = rand::seq::index::sample_weighted(&mut rng, cell.len(), |p| lam[p], draw)
                    .map_err(|e| Error::numerical(MODULE, e.to_string()))?;
                let mut cand: Vec<usize> = picked.into_iter().collect();
                cand.sort_unstable();
                let a = DMatrix::from_fn(k, cand.len(), |i, j| vectors[cand[j] * k + i]);
                let sol = nnls(&a, &DVector::from_column_slice(&target), 3 * cand.len())?;
                let support: Vec<(usize, f64)> = cand
                    .iter()
                    .zip(sol.x.iter())
                    .map(|(&p, &w)| (p, w))
                    .filter(|a| a.1 > 0.0)
                    .collect();
                if residual_of(&support, &vectors, k, &target) <= MOMENT_TOL {
                    let support = caratheodory::<rand_chacha::ChaCha8Rng>(support, &vectors, k, None);
                    return finish_rule(cell, cell_id, support, &vectors, k, &target);
                }
                draw *= 2;
            }
            let mut order: Vec<usize> = (0..cell.len()).collect();
            order.shuffle(&mut rng);
            let support = caratheodory(order.into_iter().map(|p| (p, lam[p])), &vectors, k, Some(&mut rng));
            finish_rule(cell, cell_id, support, &vectors, k, &target)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleCheck {
    /// Largest mismatch over `{1} ∪ basis`.
    pub residual: f64,
    pub min_weight: f64,
    pub support: usize,
    /// True when every atom is a point of the cell.
    pub atoms_in_cell: bool,
}

/// Recomputes every moment of `rule` and of the cell independently.
pub fn verify_rule(rule: &AtomicRule, cell: &Cell, cloud: &WeightedPointCloud, basis: &BasisSet) -> Result<RuleCheck> {
    check_cell(cell, cloud, basis)?;
    if rule.indices.len() != rule.weights.len() {
        return Err(Error::DimensionMismatch {
            module: MODULE,
            expected: rule.indices.len(),
            got: rule.weights.len(),
        });
    }
    let mut cell_m = vec![Compensated::default(); basis.r + 1];
    let mut rule_m = vec![Compensated::default(); basis.r + 1];
    let mut ev = basis.evaluator();
    for (&i, &w) in cell.point_indices.iter().zip(&cell.point_weights) {
        let v = ev.eval(cloud.point(i));
        cell_m[0].add(w);
        for (acc, &b) in cell_m[1..].iter_mut().zip(v) {
            acc.add(w * b);
        }
    }
    for (&i, &w) in rule.indices.iter().zip(&rule.weights) {
        let v = ev.eval(cloud.point(i));
        rule_m[0].add(w);
        for (acc, &b) in rule_m[1..].iter_mut().zip(v) {
            acc.add(w * b);
        }
    }
    let mass = cell_m[0].total();
    let residual = cell_m
        .iter()
        .zip(&rule_m)
        .map(|(c, r)| (c.total() / mass - r.total()).abs())
        .fold(0.0, f64::max);
    let members: std::collections::HashSet<usize> = cell.point_indices.iter().copied().collect();
    Ok(RuleCheck {
        residual,
        min_weight: rule.weights.iter().copied().fold(f64::INFINITY, f64::min),
        support: rule.len(),
        atoms_in_cell: rule.indices.iter().all(|i| members.contains(i)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_classes::sphere_basis;
    use crate::geometry::{sample_uniform, SpaceSpec};

    fn cell_of(cloud: &WeightedPointCloud, idx: Vec<usize>) -> Cell {
        let w: Vec<f64> = idx.iter().map(|&i| cloud.weights()[i]).collect();
        Cell {
            anchor: cloud.point(idx[0]).to_vec(),
            mass: w.iter().sum(),
            diameter_ub: 0.0,
            point_indices: idx,
            point_weights: w,
        }
    }

    #[test]
    fn null_vector_annihilates() {
        let cols: Vec<Vec<f64>> = vec![
            vec![1.0, 0.2, 0.3],
            vec![1.0, -0.4, 0.1],
            vec![1.0, 0.5, -0.6],
            vec![1.0, 0.0, 0.9],
        ];
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        let c = null_vector(&refs, 3);
        for i in 0..3 {
            let s: f64 = (0..4).map(|j| c[j] * cols[j][i]).sum();
            assert!(s.abs() < 1e-14);
        }
        assert!(c.iter().any(|v| v.abs() > 0.1));
    }

    #[test]
    fn small_cells_and_constants() {
        let space = SpaceSpec::sphere(2).unwrap();
        let cloud = sample_uniform(&space, 600, 1).unwrap();
        let b0 = sphere_basis(2, 0).unwrap();
        let single = cell_of(&cloud, vec![5]);
        let rule = compress(&single, 0, &cloud, &b0, 1, CompressMethod::default()).unwrap();
        assert_eq!(rule.indices, vec![5]);
        assert!((rule.weights[0] - 1.0).abs() < 1e-15);

        let big = cell_of(&cloud, (0..500).collect());
        for method in [CompressMethod::RandomizedCaratheodory, CompressMethod::CandidateNnls] {
            let rule = compress(&big, 0, &cloud, &b0, 2, method).unwrap();
            assert!(rule.len() <= 3);
            assert!(rule.residual <= 1e-12);
        }
    }

    #[test]
    fn degree_one_cell_of_500_points() {
        let space = SpaceSpec::sphere(2).unwrap();
        let cloud = sample_uniform(&space, 600, 1).unwrap();
        let basis = sphere_basis(2, 1).unwrap();
        let cell = cell_of(&cloud, (0..500).collect());
        let moments = cell_moments(&cell, &cloud, &basis).unwrap();
        for method in [CompressMethod::RandomizedCaratheodory, CompressMethod::CandidateNnls] {
            let rule = compress(&cell, 3, &cloud, &basis, 11, method).unwrap();
            assert!(rule.len() <= basis.r + 2);
            assert!(rule.weights.iter().all(|&w| w >= 0.0));
            let check = verify_rule(&rule, &cell, &cloud, &basis).unwrap();
            assert!(check.residual <= MOMENT_TOL);
            assert!(check.atoms_in_cell);
            // direct summation of the rule against the moments
            let mut ev = basis.evaluator();
            let mut acc = vec![0.0; basis.r];
            for (&i, &w) in rule.indices.iter().zip(&rule.weights) {
                for (a, v) in acc.iter_mut().zip(ev.eval(cloud.point(i))) {
                    *a += w * v;
                }
            }
            for (a, m) in acc.iter().zip(&moments) {
                assert!((a - m).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn perturbed_rule_is_caught() {
        let space = SpaceSpec::sphere(2).unwrap();
        let cloud = sample_uniform(&space, 300, 4).unwrap();
        let basis = sphere_basis(2, 1).unwrap();
        let cell = cell_of(&cloud, (0..300).collect());
        let mut rule = compress(&cell, 0, &cloud, &basis, 1, CompressMethod::default()).unwrap();
        rule.weights[0] += 1e-3;
        let check = verify_rule(&rule, &cell, &cloud, &basis).unwrap();
        assert!(check.residual >= 1e-4);
    }
}
