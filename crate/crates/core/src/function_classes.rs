//! Kernel profiles and the polynomial spaces they piecewise belong to.
//!
//! A profile is a piecewise polynomial `φ` composed with a change of
//! variable: `Φ(θ) = φ(cos θ)` on the sphere, so that `Φ(ρ(x,y)) = φ(x·y)`,
//! and `Φ(t) = φ(t²)` on the ball, so that `Φ(‖x-y‖) = φ(‖x-y‖²)`. On each
//! annulus between consecutive knots the slice `y ↦ Φ(ρ(x,y))` is then a
//! polynomial in `y` of degree `n₀` (sphere) or `2n₀` (ball).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, sample_uniform, sq_dist, SpaceKind, SpaceSpec, WeightedPointCloud};
use crate::seeds;

const MODULE: &str = "function_classes";

/// Maximum continuity jump accepted at interior knots.
pub const CONTINUITY_TOL: f64 = 1e-10;

/// Largest basis dimension a caller may request.
pub const MAX_BASIS_DIM: usize = 10_000;

/// Piecewise polynomial on `[s_0, s_ℓ]`; piece `j` lives on
/// `[s_j, s_{j+1}]` and holds ascending-power coefficients in `s`.
/// Outside the knot range the first/last piece is extended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePolynomial {
    pub knots: Vec<f64>,
    pub coeffs: Vec<Vec<f64>>,
    pub degree: usize,
}

fn horner(c: &[f64], s: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * s + a)
}

fn horner_derivative(c: &[f64], s: f64) -> f64 {
    c.iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, &a)| acc * s + k as f64 * a)
}

impl PiecewisePolynomial {
    pub fn new(knots: Vec<f64>, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::invalid(MODULE, "need at least two knots"));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid(MODULE, "knots must be strictly increasing"));
        }
        if coeffs.len() != knots.len() - 1 {
            return Err(Error::invalid(
                MODULE,
                format!("{} knots need {} pieces, got {}", knots.len(), knots.len() - 1, coeffs.len()),
            ));
        }
        if coeffs.iter().any(|c| c.is_empty() || c.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid(MODULE, "every piece needs finite coefficients"));
        }
        let degree = coeffs.iter().map(|c| c.len() - 1).max().unwrap_or(0);
        let p = PiecewisePolynomial {
            knots,
            coeffs,
            degree,
        };
        let jump = p.max_continuity_jump();
        if jump > CONTINUITY_TOL {
            return Err(Error::invalid(
                MODULE,
                format!("profile is discontinuous at a knot (jump {jump:e})"),
            ));
        }
        Ok(p)
    }

    pub fn pieces(&self) -> usize {
        self.coeffs.len()
    }

    fn piece_of(&self, s: f64) -> usize {
        let j = self.knots.partition_point(|&k| k <= s);
        j.saturating_sub(1).min(self.pieces() - 1)
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        horner(&self.coeffs[self.piece_of(s)], s)
    }

    pub fn derivative(&self, s: f64) -> f64 {
        horner_derivative(&self.coeffs[self.piece_of(s)], s)
    }

    pub fn max_continuity_jump(&self) -> f64 {
        (1..self.pieces())
            .map(|j| {
                let s = self.knots[j];
                (horner(&self.coeffs[j - 1], s) - horner(&self.coeffs[j], s)).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        PiecewisePolynomial {
            knots: self.knots.clone(),
            coeffs: self
                .coeffs
                .iter()
                .map(|c| c.iter().map(|v| v * factor).collect())
                .collect(),
            degree: self.degree,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().flatten().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileVariant {
    /// `Φ(θ) = φ(cos θ)` for `θ ∈ [0, π]`, `φ` on `[-1, 1]`.
    SphereZonal,
    /// `Φ(t) = φ(t²)` for `t ∈ [0, t_max]`, `φ` on `[0, ∞)`.
    BallRadial { t_max: f64 },
}

/// Kernel profile `Φ` in the metric variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelProfile {
    pub variant: ProfileVariant,
    #[serde(flatten)]
    pub phi: PiecewisePolynomial,
    /// Breakpoints `0 = t_0 < … < t_ℓ` of `Φ` in the metric variable.
    pub theta_knots: Vec<f64>,
    /// Short identifier carried into rule metadata.
    pub id: String,
}

fn collapse_knots(mut t: Vec<f64>) -> Vec<f64> {
    t.dedup_by(|b, a| (*b - *a).abs() <= 1e-12);
    t
}

impl KernelProfile {
    pub fn sphere_zonal(phi: PiecewisePolynomial, id: impl Into<String>) -> Result<Self> {
        let (a, b) = (phi.knots[0], *phi.knots.last().unwrap());
        if (a + 1.0).abs() > 1e-12 || (b - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(MODULE, "zonal profile knots must span [-1, 1]"));
        }
        // descending s gives ascending θ
        let theta_knots = collapse_knots(
            phi.knots
                .iter()
                .rev()
                .map(|&s| s.clamp(-1.0, 1.0).acos())
                .collect(),
        );
        Ok(KernelProfile {
            variant: ProfileVariant::SphereZonal,
            phi,
            theta_knots,
            id: id.into(),
        })
    }

    pub fn ball_radial(phi: PiecewisePolynomial, t_max: f64, id: impl Into<String>) -> Result<Self> {
        if phi.knots[0] != 0.0 {
            return Err(Error::invalid(MODULE, "radial profile knots must start at 0"));
        }
        if !(t_max > 0.0) {
            return Err(Error::invalid(MODULE, "radial profile needs t_max > 0"));
        }
        let mut t = vec![0.0];
        t.extend(
            phi.knots
                .iter()
                .filter(|&&s| s > 0.0 && s < t_max * t_max)
                .map(|s| s.sqrt()),
        );
        t.push(t_max);
        Ok(KernelProfile {
            variant: ProfileVariant::BallRadial { t_max },
            phi,
            theta_knots: collapse_knots(t),
            id: id.into(),
        })
    }

    /// Parses the command-line shorthand for a profile on `space`:
    ///
    /// * `abs`: `φ(t) = |t|` on the sphere, `φ(s) = |s - R²|` on the ball;
    /// * `linear`: `φ(t) = t` / `φ(s) = s`;
    /// * `const` or `const:c`;
    /// * `poly:knots=a,b,…;coeffs=c00,c01|c10,c11|…` (pieces separated by
    ///   `|`, ascending powers).
    pub fn parse(spec: &str, space: &SpaceSpec) -> Result<Self> {
        let spec = spec.trim();
        let (lo, hi, knot) = match space.kind {
            SpaceKind::Sphere { .. } => (-1.0, 1.0, 0.0),
            SpaceKind::Ball { radius, .. } => (0.0, 4.0 * radius * radius, radius * radius),
        };
        let phi = match spec {
            "abs" => PiecewisePolynomial::new(
                vec![lo, knot, hi],
                vec![vec![knot, -1.0], vec![-knot, 1.0]],
            )?,
            "linear" => PiecewisePolynomial::new(vec![lo, hi], vec![vec![0.0, 1.0]])?,
            _ if spec == "const" || spec.starts_with("const:") => {
                let c = match spec.strip_prefix("const:") {
                    Some(v) => v
                        .parse::<f64>()
                        .map_err(|e| Error::invalid(MODULE, format!("bad constant: {e}")))?,
                    None => 1.0,
                };
                PiecewisePolynomial::new(vec![lo, hi], vec![vec![c]])?
            }
            _ if spec.starts_with("poly:") => parse_poly(&spec[5..])?,
            _ => {
                return Err(Error::invalid(
                    MODULE,
                    format!("unknown profile shorthand {spec:?}"),
                ))
            }
        };
        let id = spec.to_string();
        match space.kind {
            SpaceKind::Sphere { .. } => KernelProfile::sphere_zonal(phi, id),
            SpaceKind::Ball { radius, .. } => KernelProfile::ball_radial(phi, 2.0 * radius, id),
        }
    }

    /// Number of pieces `ℓ` in the metric variable.
    pub fn ell(&self) -> usize {
        self.theta_knots.len() - 1
    }

    pub fn metric_max(&self) -> f64 {
        match self.variant {
            ProfileVariant::SphereZonal => PI,
            ProfileVariant::BallRadial { t_max } => t_max,
        }
    }

    /// `Φ(ρ)`; `ρ` must lie in the metric range of the profile.
    pub fn eval(&self, rho: f64) -> Result<f64> {
        let max = self.metric_max();
        if !(rho >= -1e-12 && rho <= max + 1e-12) {
            return Err(Error::invalid(
                MODULE,
                format!("metric value {rho} outside [0, {max}]"),
            ));
        }
        Ok(self.eval_metric(rho.clamp(0.0, max)))
    }

    #[inline]
    pub(crate) fn eval_metric(&self, rho: f64) -> f64 {
        match self.variant {
            ProfileVariant::SphereZonal => self.phi.eval(rho.cos()),
            ProfileVariant::BallRadial { .. } => self.phi.eval(rho * rho),
        }
    }

    /// `Φ(ρ(x, y))` evaluated without forming `ρ`: `φ(x·y)` on the sphere,
    /// `φ(‖x-y‖²)` on the ball.
    #[inline]
    pub fn eval_pair(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.variant {
            ProfileVariant::SphereZonal => self.phi.eval(dot(x, y).clamp(-1.0, 1.0)),
            ProfileVariant::BallRadial { .. } => self.phi.eval(sq_dist(x, y)),
        }
    }

    pub fn matches_space(&self, space: &SpaceSpec) -> bool {
        matches!(
            (self.variant, space.kind),
            (ProfileVariant::SphereZonal, SpaceKind::Sphere { .. })
                | (ProfileVariant::BallRadial { .. }, SpaceKind::Ball { .. })
        )
    }

    /// `|dΦ/dρ|` on piece interior points.
    fn metric_slope(&self, rho: f64) -> f64 {
        match self.variant {
            ProfileVariant::SphereZonal => (self.phi.derivative(rho.cos()) * rho.sin()).abs(),
            ProfileVariant::BallRadial { .. } => (self.phi.derivative(rho * rho) * 2.0 * rho).abs(),
        }
    }

    /// Sup-norm of `dΦ/dρ` over the metric range, computed piece by piece
    /// on a dense grid followed by golden-section refinement.
    pub fn lipschitz_constant(&self) -> f64 {
        let mut best = 0.0f64;
        for w in self.theta_knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            // nudge off the knots so the derivative comes from this piece
            let eps = 1e-12 * (b - a).max(1.0);
            let (a, b) = (a + eps, b - eps);
            if b <= a {
                continue;
            }
            let n = 2048;
            let h = (b - a) / n as f64;
            let (mut arg, mut val) = (a, self.metric_slope(a));
            for i in 1..=n {
                let x = a + h * i as f64;
                let v = self.metric_slope(x);
                if v > val {
                    arg = x;
                    val = v;
                }
            }
            let (mut lo, mut hi) = ((arg - h).max(a), (arg + h).min(b));
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..80 {
                let x1 = hi - g * (hi - lo);
                let x2 = lo + g * (hi - lo);
                if self.metric_slope(x1) >= self.metric_slope(x2) {
                    hi = x2;
                } else {
                    lo = x1;
                }
            }
            val = val.max(self.metric_slope(0.5 * (lo + hi)));
            best = best.max(val);
        }
        best
    }

    /// Rescales the profile to Lipschitz constant 1 in the metric variable.
    /// Returns the normalized profile and the factor `1/L` that was applied
    /// (1 for constant profiles).
    pub fn lipschitz_normalize(&self) -> (KernelProfile, f64) {
        let l = self.lipschitz_constant();
        if l <= 1e-300 {
            return (self.clone(), 1.0);
        }
        let scale = 1.0 / l;
        let mut out = self.clone();
        out.phi = self.phi.scaled(scale);
        (out, scale)
    }
}

fn parse_poly(body: &str) -> Result<PiecewisePolynomial> {
    let mut knots = None;
    let mut coeffs = None;
    for part in body.split(';') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::invalid(MODULE, format!("expected key=value, got {part:?}")))?;
        let nums = |s: &str| -> Result<Vec<f64>> {
            s.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::invalid(MODULE, format!("bad number {v:?}: {e}")))
                })
                .collect()
        };
        match key.trim() {
            "knots" => knots = Some(nums(value)?),
            "coeffs" => coeffs = Some(value.split('|').map(nums).collect::<Result<Vec<_>>>()?),
            other => return Err(Error::invalid(MODULE, format!("unknown key {other:?}"))),
        }
    }
    match (knots, coeffs) {
        (Some(k), Some(c)) => PiecewisePolynomial::new(k, c),
        _ => Err(Error::invalid(MODULE, "poly profile needs knots= and coeffs=")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisKind {
    /// Restrictions to `S^d` of polynomials of degree `≤ degree` in `d+1`
    /// variables.
    SpherePolynomials { d: usize, degree: usize },
    /// Monomials of total degree `≤ degree` in `d` variables.
    Monomials { d: usize, degree: usize },
}

/// Evaluable basis of an `r`-dimensional function space `V_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    pub r: usize,
    pub kind: BasisKind,
    pub description: String,
    exponents: Vec<Vec<u32>>,
    max_degree: usize,
    coord_scale: f64,
    // monomial -> basis coefficients (n_mono × r); identity when absent
    transform: Option<DMatrix<f64>>,
}

/// Number of monomials of total degree `≤ degree` in `vars` variables.
pub fn monomial_count(vars: usize, degree: usize) -> usize {
    binomial(vars + degree, vars)
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Dimension of the space of spherical polynomials of degree `≤ n` on
/// `S^d`: `C(n+d, d) + C(n+d-1, d)`.
pub fn sphere_polynomial_dim(d: usize, n: usize) -> usize {
    binomial(n + d, d) + if n == 0 { 0 } else { binomial(n + d - 1, d) }
}

fn exponents(vars: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=degree {
        let mut e = vec![0u32; vars];
        fill(&mut out, &mut e, 0, total as u32);
    }
    out
}

fn fill(out: &mut Vec<Vec<u32>>, e: &mut Vec<u32>, pos: usize, left: u32) {
    if pos + 1 == e.len() {
        e[pos] = left;
        out.push(e.clone());
        return;
    }
    for k in (0..=left).rev() {
        e[pos] = k;
        fill(out, e, pos + 1, left - k);
    }
}

impl BasisSet {
    fn monomials(kind: BasisKind, vars: usize, degree: usize, coord_scale: f64) -> Self {
        let exps = exponents(vars, degree);
        BasisSet {
            r: exps.len(),
            kind,
            description: String::new(),
            exponents: exps,
            max_degree: degree,
            coord_scale,
            transform: None,
        }
    }

    pub fn vars(&self) -> usize {
        self.exponents.first().map_or(0, |e| e.len())
    }

    pub fn matches_space(&self, space: &SpaceSpec) -> bool {
        match (self.kind, space.kind) {
            (BasisKind::SpherePolynomials { d, .. }, SpaceKind::Sphere { d: sd }) => d == sd,
            (BasisKind::Monomials { d, .. }, SpaceKind::Ball { d: bd, .. }) => d == bd,
            _ => false,
        }
    }

    /// Reusable evaluator holding scratch buffers.
    pub fn evaluator(&self) -> BasisEvaluator<'_> {
        BasisEvaluator {
            basis: self,
            powers: vec![0.0; self.vars() * (self.max_degree + 1)],
            mono: vec![0.0; self.exponents.len()],
            out: vec![0.0; self.r],
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.evaluator().eval(x).to_vec()
    }
}

pub struct BasisEvaluator<'a> {
    basis: &'a BasisSet,
    powers: Vec<f64>,
    mono: Vec<f64>,
    out: Vec<f64>,
}

impl BasisEvaluator<'_> {
    pub fn eval(&mut self, x: &[f64]) -> &[f64] {
        let b = self.basis;
        let stride = b.max_degree + 1;
        for (v, &xv) in x.iter().enumerate().take(b.vars()) {
            let xv = xv * b.coord_scale;
            let row = &mut self.powers[v * stride..(v + 1) * stride];
            row[0] = 1.0;
            for k in 1..stride {
                row[k] = row[k - 1] * xv;
            }
        }
        for (m, e) in self.mono.iter_mut().zip(&b.exponents) {
            *m = e
                .iter()
                .enumerate()
                .map(|(v, &k)| self.powers[v * stride + k as usize])
                .product();
        }
        match &b.transform {
            None => self.out.copy_from_slice(&self.mono),
            Some(t) => {
                for (j, o) in self.out.iter_mut().enumerate() {
                    *o = t.column(j).iter().zip(&self.mono).map(|(a, m)| a * m).sum();
                }
            }
        }
        &self.out
    }
}

/// Basis of spherical polynomials of degree `≤ n0` on `S^d`.
///
/// Built from the monomials in `d+1` variables restricted to the sphere,
/// reduced to a maximal independent set by column-pivoted Gram–Schmidt on a
/// fixed fine sample and orthonormalized against that sample's empirical
/// measure. The retained rank is checked against the closed-form dimension.
pub fn sphere_basis(d: usize, n0: usize) -> Result<BasisSet> {
    if d < 1 {
        return Err(Error::invalid(MODULE, "sphere dimension must be >= 1"));
    }
    let vars = d + 1;
    let n_mono = monomial_count(vars, n0);
    let expected = sphere_polynomial_dim(d, n0);
    if expected > MAX_BASIS_DIM || n_mono > 4 * MAX_BASIS_DIM {
        return Err(Error::invalid(MODULE, format!("basis dimension {expected} too large")));
    }
    let mut basis = BasisSet::monomials(BasisKind::SpherePolynomials { d, degree: n0 }, vars, n0, 1.0);
    let space = SpaceSpec::sphere(d)?;
    let m = (20 * n_mono).max(1000);
    let sample = sample_uniform(&space, m, 0x5eed_ba5e)?;
    let mut ev = basis.evaluator();
    let mut v = DMatrix::<f64>::zeros(m, n_mono);
    for (i, p) in sample.points().enumerate() {
        for (j, val) in ev.eval(p).iter().enumerate() {
            v[(i, j)] = *val;
        }
    }
    let (selected, r_factor) = pivoted_gram_schmidt(&v, 1e-8);
    let r = selected.len();
    if r != expected {
        return Err(Error::numerical(
            MODULE,
            format!("numerical rank {r} differs from dimension {expected}"),
        ));
    }
    let r_inv = r_factor
        .try_inverse()
        .ok_or_else(|| Error::numerical(MODULE, "singular triangular factor"))?;
    let mut t = DMatrix::<f64>::zeros(n_mono, r);
    let sqrt_m = (m as f64).sqrt();
    for (row, &mono) in selected.iter().enumerate() {
        for col in 0..r {
            t[(mono, col)] = r_inv[(row, col)] * sqrt_m;
        }
    }
    basis.r = r;
    basis.transform = Some(t);
    basis.description = format!("spherical polynomials of degree <= {n0} on S^{d} (orthonormalized monomials)");
    Ok(basis)
}

/// Monomial basis of total degree `≤ deg` in `d` variables, in coordinates
/// scaled by `1/coord_radius` (the span is unchanged).
pub fn ball_basis(d: usize, deg: usize, coord_radius: f64) -> Result<BasisSet> {
    if d < 1 {
        return Err(Error::invalid(MODULE, "dimension must be >= 1"));
    }
    if !(coord_radius > 0.0) {
        return Err(Error::invalid(MODULE, "coordinate radius must be positive"));
    }
    let r = monomial_count(d, deg);
    if r > MAX_BASIS_DIM {
        return Err(Error::invalid(
            MODULE,
            format!("basis dimension {r} exceeds the maximum {MAX_BASIS_DIM}"),
        ));
    }
    let mut basis = BasisSet::monomials(BasisKind::Monomials { d, degree: deg }, d, deg, 1.0 / coord_radius);
    basis.description = format!("monomials of total degree <= {deg} in {d} variables");
    Ok(basis)
}

/// The basis matching a profile of degree `n0` on `space`: spherical
/// polynomials of degree `n0`, or monomials of degree `2 n0` on the ball.
pub fn basis_for(space: &SpaceSpec, n0: usize) -> Result<BasisSet> {
    match space.kind {
        SpaceKind::Sphere { d } => sphere_basis(d, n0),
        SpaceKind::Ball { d, radius } => ball_basis(d, 2 * n0, radius),
    }
}

/// Column-pivoted modified Gram–Schmidt with one reorthogonalization pass.
/// Returns the selected column indices (in pivot order) and the upper
/// triangular factor `R` with `V[:, sel] = Q R`.
fn pivoted_gram_schmidt(v: &DMatrix<f64>, rel_tol: f64) -> (Vec<usize>, DMatrix<f64>) {
    let (m, n) = v.shape();
    let mut work = v.clone();
    let mut q: Vec<DVector<f64>> = Vec::new();
    let mut selected = Vec::new();
    let mut used = vec![false; n];
    let mut r = DMatrix::<f64>::zeros(n, n);
    let max_norm = (0..n).map(|j| work.column(j).norm()).fold(0.0, f64::max);
    for k in 0..n.min(m) {
        let (piv, norm) = (0..n)
            .filter(|&j| !used[j])
            .map(|j| (j, work.column(j).norm()))
            .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if piv == usize::MAX || norm <= rel_tol * max_norm {
            break;
        }
        used[piv] = true;
        let mut col = work.column(piv).into_owned();
        // reorthogonalize against the original column to recover R exactly
        let orig = v.column(piv);
        for (i, qi) in q.iter().enumerate() {
            let c = qi.dot(&col);
            col -= qi * c;
            r[(i, k)] = qi.dot(&orig);
        }
        let nrm = col.norm();
        let qk = col / nrm;
        r[(k, k)] = qk.dot(&orig);
        for j in 0..n {
            if !used[j] {
                let c = qk.dot(&work.column(j));
                let mut cj = work.column_mut(j);
                cj -= &qk * c;
            }
        }
        q.push(qk);
        selected.push(piv);
    }
    let k = selected.len();
    (selected, r.view((0, 0), (k, k)).into_owned())
}

/// Outcome of a numerical class-membership test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipReport {
    /// Largest least-squares residual over all fitted annuli.
    pub max_residual: f64,
    pub fitted_annuli: usize,
    /// Annuli skipped because they held fewer than `r` points.
    pub skipped_annuli: usize,
}

/// Checks numerically that on every knot annulus around random anchors the
/// slice `y ↦ Φ(ρ(x,y))` is reproduced by the basis: fits it by least
/// squares on the annulus points and reports the largest residual.
pub fn class_membership_check(
    k: &KernelProfile,
    basis: &BasisSet,
    cloud: &WeightedPointCloud,
    trials: usize,
    seed: u64,
) -> Result<MembershipReport> {
    if !basis.matches_space(&cloud.space) || !k.matches_space(&cloud.space) {
        return Err(Error::invalid(MODULE, "profile/basis do not match the cloud's space"));
    }
    const MAX_FIT_POINTS: usize = 2000;
    let mut rng = seeds::rng(seed);
    let mut ev = basis.evaluator();
    let mut report = MembershipReport {
        max_residual: 0.0,
        fitted_annuli: 0,
        skipped_annuli: 0,
    };
    let space = cloud.space;
    for _ in 0..trials {
        let x = cloud.point(rng.random_range(0..cloud.len()));
        for w in k.theta_knots.windows(2) {
            let (lo, hi) = (space.proxy_of(w[0]), space.proxy_of(w[1]));
            let members: Vec<usize> = (0..cloud.len())
                .filter(|&i| {
                    let p = space.proxy(x, cloud.point(i));
                    p >= lo && p <= hi
                })
                .take(MAX_FIT_POINTS)
                .collect();
            if members.len() < basis.r {
                report.skipped_annuli += 1;
                continue;
            }
            let mut a = DMatrix::<f64>::zeros(members.len(), basis.r);
            let mut b = DVector::<f64>::zeros(members.len());
            for (row, &i) in members.iter().enumerate() {
                let y = cloud.point(i);
                for (col, v) in ev.eval(y).iter().enumerate() {
                    a[(row, col)] = *v;
                }
                b[row] = k.eval_pair(x, y);
            }
            let svd = a.clone().svd(true, true);
            let coef = svd
                .solve(&b, 1e-12)
                .map_err(|e| Error::numerical(MODULE, e.to_string()))?;
            let resid = (&a * coef - &b).amax();
            report.max_residual = report.max_residual.max(resid);
            report.fitted_annuli += 1;
        }
    }
    Ok(report)
}
