//! Equal-measure, small-diameter partitions of a weighted point cloud.
//!
//! The construction follows the classical argument: a greedy δ-net, Voronoi
//! cells with ties broken toward the smaller center index, reverse-order
//! mass transfers that make every cell mass an integer multiple of `1/N`,
//! and finally a weight-balanced bisection of each multiple-mass cell into
//! parts of mass exactly `1/N`.
//!
//! Cells hold *shares* of cloud points: `point_weights[k]` is the part of
//! the weight of `point_indices[k]` owned by the cell. A point is split
//! between two cells only where a transfer or a bisection boundary falls on
//! it, which lets cell masses hit `1/N` to rounding accuracy on a finite
//! cloud.

pub mod besicovitch;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{delta_for_n, dot, SpaceKind, SpaceSpec, WeightedPointCloud};
use crate::summation::compensated_sum;

const MODULE: &str = "net_partition";

pub const DEFAULT_NET_SLACK: f64 = 0.02;
pub const DEFAULT_MASS_TOL: f64 = 1e-3;
pub const DEFAULT_DIAM_TOL_FRAC: f64 = 0.01;

/// Cells up to this size get an exact pairwise diameter.
const EXACT_DIAMETER_MAX: usize = 8192;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub anchor: Vec<f64>,
    pub mass: f64,
    pub diameter_ub: f64,
    pub point_indices: Vec<usize>,
    pub point_weights: Vec<f64>,
}

impl Cell {
    pub fn len(&self) -> usize {
        self.point_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_indices.is_empty()
    }

    fn from_members(anchor: Vec<f64>, mut members: Vec<(usize, f64)>) -> Self {
        members.sort_by_key(|m| m.0);
        // merge shares of the same point
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(members.len());
        for (i, w) in members {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += w,
                _ => merged.push((i, w)),
            }
        }
        let mass = compensated_sum(merged.iter().map(|m| m.1));
        Cell {
            anchor,
            mass,
            diameter_ub: 0.0,
            point_indices: merged.iter().map(|m| m.0).collect(),
            point_weights: merged.iter().map(|m| m.1).collect(),
        }
    }

    fn members(&self) -> Vec<(usize, f64)> {
        self.point_indices
            .iter()
            .copied()
            .zip(self.point_weights.iter().copied())
            .collect()
    }
}

/// Upper bound on the diameter of a set of cloud points: exact for small
/// sets, twice the covering radius around `anchor` otherwise.
pub fn cell_diameter(cloud: &WeightedPointCloud, indices: &[usize], anchor: &[f64]) -> f64 {
    let space = &cloud.space;
    if indices.len() <= 1 {
        return 0.0;
    }
    if indices.len() <= EXACT_DIAMETER_MAX {
        let mut best = 0.0f64;
        for (a, &i) in indices.iter().enumerate() {
            let p = cloud.point(i);
            for &j in &indices[a + 1..] {
                best = best.max(space.proxy(p, cloud.point(j)));
            }
        }
        return space.dist_of_proxy(best);
    }
    let max_proxy = indices
        .iter()
        .map(|&i| space.proxy(anchor, cloud.point(i)))
        .fold(0.0, f64::max);
    (2.0 * space.dist_of_proxy(max_proxy)).min(space.diameter())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionParams {
    /// Target number of cells `N`.
    pub n: usize,
    /// Net radius; `None` selects [`default_delta`].
    pub delta: Option<f64>,
    pub net_slack: f64,
    pub mass_tol: f64,
    pub diam_tol_frac: f64,
}

impl PartitionParams {
    pub fn new(n: usize) -> Self {
        PartitionParams {
            n,
            delta: None,
            net_slack: DEFAULT_NET_SLACK,
            mass_tol: DEFAULT_MASS_TOL,
            diam_tol_frac: DEFAULT_DIAM_TOL_FRAC,
        }
    }
}

/// Net radius for which every ball of radius `δ/2` has mass at least `1/N`:
/// `2 δ_N` on the sphere, `4R N^{-1/d}` on a ball of radius `R` (a ball of
/// radius `t` centred in `B_R` contains a ball of radius `t/2` inside `B_R`).
pub fn default_delta(space: &SpaceSpec, n: usize) -> f64 {
    let n = n.max(1) as f64;
    match space.kind {
        SpaceKind::Sphere { d } => 2.0 * delta_for_n(d, n as usize),
        SpaceKind::Ball { d, radius } => 4.0 * radius * n.powf(-1.0 / d as f64),
    }
}

/// Greedy δ-net over a cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetResult {
    /// Cloud indices of the centers `a_1, …, a_M` in selection order.
    pub centers: Vec<usize>,
    pub delta: f64,
    /// For `j ≥ 1`, the earlier center nearest to `a_j` at selection time.
    pub parent: Vec<Option<usize>>,
    /// Distance from `a_j` to the earlier centers at selection time.
    pub link: Vec<f64>,
    pub slack: f64,
}

impl NetResult {
    /// `min_j link_j / δ`; equals 1 when every center sits exactly at
    /// distance δ from its predecessors, and is reported as the constant
    /// inflation caused by the discrete surrogate.
    pub fn min_link_ratio(&self) -> f64 {
        self.link
            .iter()
            .skip(1)
            .map(|l| l / self.delta)
            .fold(f64::INFINITY, f64::min)
            .min(1.0)
    }

    /// Smallest pairwise distance between centers.
    pub fn min_separation(&self, cloud: &WeightedPointCloud) -> f64 {
        let mut best = f64::INFINITY;
        for (a, &i) in self.centers.iter().enumerate() {
            for &j in &self.centers[a + 1..] {
                best = best.min(cloud.space.dist(cloud.point(i), cloud.point(j)));
            }
        }
        best
    }
}

/// Builds the greedy net. While some point lies at distance `≥ δ` from the
/// current centers, the next center is the point whose distance is closest
/// to δ from below within `[δ(1-slack), δ]`; when that band is empty it is
/// the nearest point at distance `≥ δ`. On termination every point lies
/// within distance `< δ` of a center.
pub fn greedy_net(cloud: &WeightedPointCloud, delta: f64, slack: f64) -> Result<NetResult> {
    if cloud.is_empty() {
        return Err(Error::invalid(MODULE, "empty cloud"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid(MODULE, format!("delta must be positive, got {delta}")));
    }
    if !(0.0..1.0).contains(&slack) {
        return Err(Error::invalid(MODULE, "net slack must lie in [0, 1)"));
    }
    let space = cloud.space;
    let m = cloud.len();
    // no point can be at distance ≥ δ when δ exceeds the diameter
    let reachable = delta <= space.diameter();
    let p_delta = space.proxy_of(delta);
    let p_band = space.proxy_of(delta * (1.0 - slack));

    let mut near = vec![f64::INFINITY; m];
    let mut owner = vec![0usize; m];
    let mut centers = Vec::new();
    let mut parent = Vec::new();
    let mut link = Vec::new();
    let mut next = Some(0usize);
    while let Some(c) = next {
        let j = centers.len();
        parent.push(if j == 0 { None } else { Some(owner[c]) });
        link.push(if j == 0 { 0.0 } else { space.dist_of_proxy(near[c]) });
        centers.push(c);
        let a = cloud.point(c);
        for (i, p) in cloud.points().enumerate() {
            let q = space.proxy(a, p);
            if q < near[i] {
                near[i] = q;
                owner[i] = j;
            }
        }
        near[c] = 0.0;
        if !reachable {
            break;
        }
        let mut band: Option<(f64, usize)> = None;
        let mut above: Option<(f64, usize)> = None;
        for (i, &q) in near.iter().enumerate() {
            if q >= p_delta {
                if q == p_delta && band.is_none_or(|b| q > b.0) {
                    band = Some((q, i));
                }
                if above.is_none_or(|b| q < b.0) {
                    above = Some((q, i));
                }
            } else if q >= p_band && band.is_none_or(|b| q > b.0) {
                band = Some((q, i));
            }
        }
        next = match above {
            None => None,
            Some(a) => Some(band.map_or(a.1, |b| b.1)),
        };
    }
    Ok(NetResult {
        centers,
        delta,
        parent,
        link,
        slack,
    })
}

/// Voronoi cells of the net; each point goes to its nearest center, ties
/// broken by the smallest center index.
pub fn voronoi_cells(cloud: &WeightedPointCloud, net: &NetResult) -> Result<Vec<Cell>> {
    let space = cloud.space;
    let mut members: Vec<Vec<(usize, f64)>> = vec![Vec::new(); net.centers.len()];
    let p_delta = space.proxy_of(net.delta);
    let covering = net.delta > space.diameter();
    for (i, p) in cloud.points().enumerate() {
        let mut best = (f64::INFINITY, 0usize);
        for (j, &c) in net.centers.iter().enumerate() {
            let q = space.proxy(p, cloud.point(c));
            if q < best.0 {
                best = (q, j);
            }
        }
        if !covering && best.0 >= p_delta {
            return Err(Error::numerical(
                MODULE,
                format!("point {i} is not covered by the net"),
            ));
        }
        members[best.1].push((i, cloud.weights()[i]));
    }
    Ok(members
        .into_iter()
        .zip(&net.centers)
        .map(|(mem, &c)| {
            let mut cell = Cell::from_members(cloud.point(c).to_vec(), mem);
            cell.diameter_ub = cell_diameter(cloud, &cell.point_indices, &cell.anchor);
            cell
        })
        .collect())
}

/// A mass transfer from the original members of cell `from` to cell `to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub from: usize,
    pub to: usize,
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

fn snap(f: f64) -> f64 {
    let r = f.round();
    if (f - r).abs() <= 1e-9 {
        r
    } else {
        f.floor()
    }
}

/// Makes every cell mass an integer multiple of `1/N`. Cells are processed
/// in reverse net order; cell `j` hands mass below `1/N` to its net parent,
/// drawn only from its own original Voronoi members, nearest to the
/// parent's anchor first (the last point may be split).
pub fn equalize_masses(
    cloud: &WeightedPointCloud,
    cells: &[Cell],
    net: &NetResult,
    n: usize,
) -> Result<(Vec<Cell>, Vec<Transfer>)> {
    if cells.len() != net.centers.len() {
        return Err(Error::DimensionMismatch {
            module: MODULE,
            expected: net.centers.len(),
            got: cells.len(),
        });
    }
    let nf = n as f64;
    let space = cloud.space;
    let mut original: Vec<Vec<(usize, f64)>> = cells.iter().map(Cell::members).collect();
    let mut received: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cells.len()];
    let mut transfers = Vec::new();
    for j in (1..cells.len()).rev() {
        let mass = compensated_sum(original[j].iter().chain(&received[j]).map(|m| m.1));
        if mass * nf < 1.0 - 1e-9 {
            return Err(Error::invalid(
                MODULE,
                format!("cell {j} has mass {mass:e} < 1/N; the cloud is too coarse or delta too small"),
            ));
        }
        let keep = snap(mass * nf) / nf;
        let mut need = mass - keep;
        if need <= 1e-15 {
            continue;
        }
        let k = net.parent[j].ok_or_else(|| Error::numerical(MODULE, format!("cell {j} has no net parent")))?;
        let target = &cells[k].anchor;
        let mut order: Vec<(f64, usize)> = original[j]
            .iter()
            .enumerate()
            .map(|(pos, &(i, _))| (space.proxy(target, cloud.point(i)), pos))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(original[j][a.1].0.cmp(&original[j][b.1].0)));
        let mut t = Transfer {
            from: j,
            to: k,
            indices: Vec::new(),
            weights: Vec::new(),
        };
        for (_, pos) in order {
            if need <= 0.0 {
                break;
            }
            let (i, w) = original[j][pos];
            let moved = w.min(need);
            original[j][pos].1 = w - moved;
            need -= moved;
            t.indices.push(i);
            t.weights.push(moved);
            received[k].push((i, moved));
        }
        if need > 1e-15 {
            return Err(Error::numerical(MODULE, format!("cell {j} could not shed its excess mass")));
        }
        transfers.push(t);
    }
    let out = original
        .into_iter()
        .zip(received)
        .zip(cells)
        .map(|((o, r), c)| {
            let mem: Vec<(usize, f64)> = o.into_iter().chain(r).filter(|m| m.1 > 0.0).collect();
            let mut cell = Cell::from_members(c.anchor.clone(), mem);
            cell.diameter_ub = cell_diameter(cloud, &cell.point_indices, &cell.anchor);
            cell
        })
        .collect();
    Ok((out, transfers))
}

fn bisect(cloud: &WeightedPointCloud, anchor: &[f64], members: Vec<(usize, f64)>, m: usize, out: &mut Vec<Cell>) {
    if m <= 1 {
        out.push(Cell::from_members(anchor.to_vec(), members));
        return;
    }
    let space = cloud.space;
    let total = compensated_sum(members.iter().map(|x| x.1));
    let m1 = m / 2;
    let target = total * m1 as f64 / m as f64;

    // approximate farthest pair by a double sweep
    let farthest = |from: &[f64]| {
        members
            .iter()
            .map(|&(i, _)| (space.proxy(from, cloud.point(i)), i))
            .fold((f64::NEG_INFINITY, usize::MAX), |a, b| if b.0 > a.0 { b } else { a })
    };
    let (_, a) = farthest(cloud.point(members[0].0));
    let (_, b) = farthest(cloud.point(a));
    let (pa, pb) = (cloud.point(a), cloud.point(b));
    let dir: Vec<f64> = pb.iter().zip(pa).map(|(x, y)| x - y).collect();
    let mut keyed: Vec<(f64, usize, f64)> = members
        .iter()
        .map(|&(i, w)| {
            let p = cloud.point(i);
            let rel: Vec<f64> = p.iter().zip(pa).map(|(x, y)| x - y).collect();
            (dot(&rel, &dir), i, w)
        })
        .collect();
    keyed.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut acc = 0.0;
    // shares within rounding of the remaining room are not split
    let eps = 1e-12 * total;
    for (_, i, w) in keyed {
        let room = target - acc;
        if room <= eps {
            right.push((i, w));
        } else if w <= room + eps {
            left.push((i, w));
            acc += w;
        } else {
            left.push((i, room));
            right.push((i, w - room));
            acc = target;
        }
    }
    bisect(cloud, anchor, left, m1, out);
    bisect(cloud, anchor, right, m - m1, out);
}

/// Splits every cell of mass `m_j/N` into `m_j` cells of mass `1/N` by
/// recursive weight-balanced bisection along approximate farthest pairs.
pub fn split_cells(cloud: &WeightedPointCloud, cells: &[Cell], n: usize) -> Result<Vec<Cell>> {
    let nf = n as f64;
    let mut out = Vec::with_capacity(n);
    for (j, c) in cells.iter().enumerate() {
        let f = c.mass * nf;
        let m = f.round();
        if (f - m).abs() > 1e-6 || m < 1.0 {
            return Err(Error::invalid(
                MODULE,
                format!("cell {j} has mass {} which is not a positive multiple of 1/N", c.mass),
            ));
        }
        bisect(cloud, &c.anchor, c.members(), m as usize, &mut out);
    }
    use rayon::prelude::*;
    out.par_iter_mut().for_each(|c| {
        c.diameter_ub = cell_diameter(cloud, &c.point_indices, &c.anchor);
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionStats {
    pub net_size: usize,
    pub min_link_ratio: f64,
    pub transfers: usize,
    pub max_diameter: f64,
    /// `max_j |N·mass_j - 1|`.
    pub max_mass_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub delta: f64,
    #[serde(rename = "N")]
    pub n: usize,
    /// Fingerprint of the source cloud.
    pub cloud_ref: String,
    pub stats: PartitionStats,
    pub cells: Vec<Cell>,
}

impl Partition {
    pub fn max_diameter(&self) -> f64 {
        self.cells.iter().map(|c| c.diameter_ub).fold(0.0, f64::max)
    }

    pub fn max_mass_deviation(&self) -> f64 {
        let nf = self.n as f64;
        self.cells
            .iter()
            .map(|c| (nf * c.mass - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest mismatch between a point's weight and the sum of its shares
    /// across cells (infinite if some point is missing).
    pub fn coverage_error(&self, cloud: &WeightedPointCloud) -> f64 {
        let mut got = vec![0.0; cloud.len()];
        let mut seen = vec![false; cloud.len()];
        for c in &self.cells {
            for (&i, &w) in c.point_indices.iter().zip(&c.point_weights) {
                if i >= cloud.len() {
                    return f64::INFINITY;
                }
                got[i] += w;
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return f64::INFINITY;
        }
        got.iter()
            .zip(cloud.weights())
            .map(|(g, w)| (g - w).abs())
            .fold(0.0, f64::max)
    }
}

fn finish(cloud: &WeightedPointCloud, params: &PartitionParams, delta: f64, net: Option<&NetResult>, transfers: usize, cells: Vec<Cell>) -> Result<Partition> {
    let mut p = Partition {
        delta,
        n: params.n,
        cloud_ref: cloud.fingerprint(),
        stats: PartitionStats {
            net_size: net.map_or(1, |n| n.centers.len()),
            min_link_ratio: net.map_or(1.0, NetResult::min_link_ratio),
            transfers,
            max_diameter: 0.0,
            max_mass_deviation: 0.0,
        },
        cells,
    };
    if p.cells.len() != params.n {
        return Err(Error::numerical(
            MODULE,
            format!("produced {} cells instead of {}", p.cells.len(), params.n),
        ));
    }
    p.stats.max_diameter = p.max_diameter();
    p.stats.max_mass_deviation = p.max_mass_deviation();
    if p.stats.max_mass_deviation > params.mass_tol {
        return Err(Error::numerical(
            MODULE,
            format!("cell mass deviation {:e} exceeds tolerance", p.stats.max_mass_deviation),
        ));
    }
    Ok(p)
}

/// Full pipeline: net, Voronoi cells, transfers, splitting. Produces exactly
/// `N` cells of mass `1/N`.
pub fn partition_space(cloud: &WeightedPointCloud, params: &PartitionParams) -> Result<Partition> {
    let n = params.n;
    if n == 0 {
        return Err(Error::invalid(MODULE, "N must be >= 1"));
    }
    if cloud.is_empty() {
        return Err(Error::invalid(MODULE, "empty cloud"));
    }
    let delta = params.delta.unwrap_or_else(|| default_delta(&cloud.space, n));
    if n == 1 {
        let mut cell = Cell::from_members(
            cloud.point(0).to_vec(),
            (0..cloud.len()).map(|i| (i, cloud.weights()[i])).collect(),
        );
        cell.diameter_ub = cell_diameter(cloud, &cell.point_indices, &cell.anchor);
        return finish(cloud, params, delta, None, 0, vec![cell]);
    }
    let net = greedy_net(cloud, delta, params.net_slack)?;
    let cells = voronoi_cells(cloud, &net)?;
    let (cells, transfers) = equalize_masses(cloud, &cells, &net, n)?;
    let cells = split_cells(cloud, &cells, n)?;
    finish(cloud, params, delta, Some(&net), transfers.len(), cells)
}
