//! Variable-radius covering cells for Euclidean domains.
//!
//! Every point `x` gets the largest closed ball `B[x, θ_x]` whose
//! `(1+g)dμ`-mass does not exceed `1/n₁`. Balls are then selected greedily,
//! largest radius first, among centers not yet covered, and each point is
//! assigned to the first selected ball containing it:
//! `Q_j = B_j \ ⋃_{i<j} B_i`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Cell;
use crate::error::{Error, Result};
use crate::geometry::{SpaceKind, WeightedPointCloud};
use crate::kdtree::KdTree;
use crate::summation::compensated_sum;

const MODULE: &str = "net_partition";

/// How the covering multiplicity `N(X)` enters `n₁`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NxPolicy {
    /// `n₁ = ⌊n / (2 N_X (r+2))⌋` with the given `N_X`.
    Fixed { nx: usize },
    /// Start from `n₁ = ⌊n / (2(r+2))⌋` and shrink until the number of
    /// cells `m` satisfies `m (r+2) ≤ n`.
    Adaptive,
}

impl NxPolicy {
    /// The covering bound `N(X) ≤ 6^d`.
    pub fn default_for(d: usize) -> Self {
        NxPolicy::Fixed {
            nx: 6usize.saturating_pow(d as u32),
        }
    }
}

impl std::str::FromStr for NxPolicy {
    type Err = Error;

    /// `adaptive` or `fixed:<nx>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "adaptive" {
            return Ok(NxPolicy::Adaptive);
        }
        match s.strip_prefix("fixed:").map(str::parse::<usize>) {
            Some(Ok(nx)) if nx >= 1 => Ok(NxPolicy::Fixed { nx }),
            _ => Err(Error::invalid(MODULE, format!("unknown covering policy {s:?}"))),
        }
    }
}

/// `⌊n / (2 N_X (r+2))⌋`.
const SHRINK_MARGIN: f64 = 0.97;

pub fn n1_for(n: usize, r: usize, nx: usize) -> usize {
    n / (2 * nx.max(1) * (r + 2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BesicovitchCover {
    pub cells: Vec<Cell>,
    pub n1: usize,
    /// Cloud indices of the selected ball centers, one per cell.
    pub centers: Vec<usize>,
    pub radii: Vec<f64>,
    pub policy: NxPolicy,
}

/// Largest radius around each point whose closed ball has mass `≤ cap`
/// under the point masses `mass`.
fn mass_radii(cloud: &WeightedPointCloud, tree: &KdTree<'_>, mass: &[f64], cap: f64) -> Vec<f64> {
    let m = cloud.len();
    let avg = 1.0 / m as f64;
    let guess = ((cap / (2.0 * avg)).ceil() as usize + 2).clamp(2, m);
    (0..m)
        .into_par_iter()
        .map(|i| {
            let q = cloud.point(i);
            let mut k = guess;
            loop {
                let nb = tree.nearest(q, k);
                let mut acc = 0.0;
                let mut radius2 = 0.0;
                let mut g = 0;
                let mut exceeded = false;
                // walk groups of equal distance so the closed ball is respected
                while g < nb.len() {
                    let d2 = nb[g].0;
                    let mut h = g;
                    let mut group = 0.0;
                    while h < nb.len() && nb[h].0 == d2 {
                        group += mass[nb[h].1];
                        h += 1;
                    }
                    if acc + group > cap * (1.0 + 1e-12) {
                        exceeded = true;
                        break;
                    }
                    acc += group;
                    radius2 = d2;
                    g = h;
                }
                if exceeded || k >= m {
                    return radius2.sqrt();
                }
                k = (2 * k).min(m);
            }
        })
        .collect()
}

/// Covering cells for a fixed `n₁`. `g` holds nonnegative density values
/// with `Σ w g = 1`; the returned cells carry the `w·g` shares of their
/// points, and cells of zero `g`-mass are dropped.
pub fn besicovitch_cells(cloud: &WeightedPointCloud, g: &[f64], n1: usize) -> Result<(Vec<Cell>, Vec<usize>, Vec<f64>)> {
    if !matches!(cloud.space.kind, SpaceKind::Ball { .. }) {
        return Err(Error::invalid(MODULE, "covering cells need a Euclidean ball"));
    }
    if g.len() != cloud.len() {
        return Err(Error::DimensionMismatch {
            module: MODULE,
            expected: cloud.len(),
            got: g.len(),
        });
    }
    if n1 < 1 {
        return Err(Error::invalid(MODULE, "n1 < 1: node budget too small for this basis"));
    }
    if g.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid(MODULE, "density values must be finite and nonnegative"));
    }
    let w = cloud.weights();
    let total = compensated_sum(w.iter().zip(g).map(|(a, b)| a * b));
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(MODULE, format!("density must integrate to 1, got {total}")));
    }
    let dim = cloud.dim();
    let tree = KdTree::new(cloud.coords(), dim);
    // (1+g)dμ, of total mass 2
    let mass: Vec<f64> = w.iter().zip(g).map(|(a, b)| a * (1.0 + b)).collect();
    let radii = mass_radii(cloud, &tree, &mass, 1.0 / n1 as f64);

    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.sort_by(|&a, &b| radii[b].total_cmp(&radii[a]).then(a.cmp(&b)));
    let mut assigned = vec![false; cloud.len()];
    let mut cells = Vec::new();
    let mut centers = Vec::new();
    let mut kept_radii = Vec::new();
    for &c in &order {
        if assigned[c] {
            continue;
        }
        let r = radii[c];
        let inside = tree.within(cloud.point(c), r * r);
        let mut members = Vec::new();
        for i in inside {
            if !assigned[i] {
                assigned[i] = true;
                members.push(i);
            }
        }
        if !assigned[c] {
            assigned[c] = true;
            members.push(c);
            members.sort_unstable();
        }
        let shares: Vec<f64> = members.iter().map(|&i| w[i] * g[i]).collect();
        let cell_mass = compensated_sum(shares.iter().copied());
        if cell_mass <= 0.0 {
            continue;
        }
        let (idx, sh): (Vec<usize>, Vec<f64>) = members
            .into_iter()
            .zip(shares)
            .filter(|m| m.1 > 0.0)
            .unzip();
        cells.push(Cell {
            anchor: cloud.point(c).to_vec(),
            mass: cell_mass,
            diameter_ub: (2.0 * r).min(cloud.space.diameter()),
            point_indices: idx,
            point_weights: sh,
        });
        centers.push(c);
        kept_radii.push(r);
    }
    Ok((cells, centers, kept_radii))
}

/// Covering cells for a node budget `n` and basis dimension `r`.
pub fn besicovitch_cover(
    cloud: &WeightedPointCloud,
    g: &[f64],
    n: usize,
    r: usize,
    policy: NxPolicy,
) -> Result<BesicovitchCover> {
    if n < 2 {
        return Err(Error::invalid(MODULE, "node budget n must be >= 2"));
    }
    let per = r + 2;
    let mut n1 = match policy {
        NxPolicy::Fixed { nx } => n1_for(n, r, nx),
        NxPolicy::Adaptive => n / (2 * per),
    };
    if n1 < 1 {
        return Err(Error::invalid(
            MODULE,
            format!("n1 < 1 for n = {n}, r = {r} under {policy:?}"),
        ));
    }
    let mut retried = false;
    loop {
        let (cells, centers, radii) = besicovitch_cells(cloud, g, n1)?;
        let m = cells.len();
        if m * per <= n {
            return Ok(BesicovitchCover {
                cells,
                n1,
                centers,
                radii,
                policy,
            });
        }
        if matches!(policy, NxPolicy::Fixed { .. }) || n1 == 1 {
            return Err(Error::numerical(
                MODULE,
                format!("{m} covering cells need {} nodes, budget is {n}", m * per),
            ));
        }
        // proportional step, with a small margin after the first retry;
        // stepping by one can take dozens of full passes when the overshoot
        // is slight
        let margin = if retried { SHRINK_MARGIN } else { 1.0 };
        retried = true;
        let shrunk = (margin * n1 as f64 * n as f64 / (m * per) as f64).floor() as usize;
        n1 = shrunk.clamp(1, n1 - 1);
    }
}
