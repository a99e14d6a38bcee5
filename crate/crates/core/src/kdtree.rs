//! Static kd-tree over row-major coordinates with runtime dimension.
//!
//! Supports k-nearest and fixed-radius queries under squared Euclidean
//! distance. Ties are ordered by point index so query results are
//! deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
struct Node {
    start: usize,
    end: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    children: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct KdTree<'a> {
    dim: usize,
    coords: &'a [f64],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(PartialEq)]
struct Cand(f64, usize);

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl<'a> KdTree<'a> {
    pub fn new(coords: &'a [f64], dim: usize) -> Self {
        assert!(dim > 0 && coords.len() % dim == 0);
        let n = coords.len() / dim;
        let mut tree = KdTree {
            dim,
            coords,
            order: (0..n).collect(),
            nodes: Vec::with_capacity(2 * n / LEAF_SIZE + 1),
        };
        if n > 0 {
            tree.build(0, n);
        }
        tree
    }

    #[inline]
    fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for &i in &self.order[start..end] {
            let p = &self.coords[i * self.dim..(i + 1) * self.dim];
            for k in 0..self.dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            start,
            end,
            lo: lo.clone(),
            hi: hi.clone(),
            children: None,
        });
        if end - start > LEAF_SIZE {
            let axis = (0..self.dim)
                .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
                .unwrap_or(0);
            let mid = start + (end - start) / 2;
            let (coords, dim) = (self.coords, self.dim);
            self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                coords[a * dim + axis]
                    .total_cmp(&coords[b * dim + axis])
                    .then(a.cmp(&b))
            });
            let left = self.build(start, mid);
            let right = self.build(mid, end);
            self.nodes[id].children = Some((left, right));
        }
        id
    }

    fn box_sq_dist(&self, node: &Node, q: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.dim {
            let v = q[k];
            let d = if v < node.lo[k] {
                node.lo[k] - v
            } else if v > node.hi[k] {
                v - node.hi[k]
            } else {
                0.0
            };
            s += d * d;
        }
        s
    }

    #[inline]
    fn sq_dist(&self, i: usize, q: &[f64]) -> f64 {
        self.point(i)
            .iter()
            .zip(q)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// The `k` nearest points to `q` as `(squared distance, index)`, sorted
    /// ascending.
    pub fn nearest(&self, q: &[f64], k: usize) -> Vec<(f64, usize)> {
        if self.nodes.is_empty() || k == 0 {
            return Vec::new();
        }
        let mut best: BinaryHeap<Cand> = BinaryHeap::with_capacity(k + 1);
        let mut frontier: BinaryHeap<std::cmp::Reverse<Cand>> = BinaryHeap::new();
        frontier.push(std::cmp::Reverse(Cand(self.box_sq_dist(&self.nodes[0], q), 0)));
        while let Some(std::cmp::Reverse(Cand(bound, id))) = frontier.pop() {
            if best.len() == k && bound > best.peek().map_or(f64::INFINITY, |c| c.0) {
                break;
            }
            let node = &self.nodes[id];
            match node.children {
                Some((l, r)) => {
                    for c in [l, r] {
                        let b = self.box_sq_dist(&self.nodes[c], q);
                        if best.len() < k || b <= best.peek().map_or(f64::INFINITY, |c| c.0) {
                            frontier.push(std::cmp::Reverse(Cand(b, c)));
                        }
                    }
                }
                None => {
                    for &i in &self.order[node.start..node.end] {
                        let cand = Cand(self.sq_dist(i, q), i);
                        if best.len() < k {
                            best.push(cand);
                        } else if cand < *best.peek().unwrap() {
                            best.pop();
                            best.push(cand);
                        }
                    }
                }
            }
        }
        let mut out: Vec<(f64, usize)> = best.into_iter().map(|c| (c.0, c.1)).collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }

    /// Indices of all points with squared distance `≤ r2` from `q`, in
    /// ascending index order.
    pub fn within(&self, q: &[f64], r2: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if self.box_sq_dist(node, q) > r2 {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(l);
                    stack.push(r);
                }
                None => out.extend(
                    self.order[node.start..node.end]
                        .iter()
                        .copied()
                        .filter(|&i| self.sq_dist(i, q) <= r2),
                ),
            }
        }
        out.sort_unstable();
        out
    }
}
