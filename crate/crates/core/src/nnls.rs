//! Lawson–Hanson active-set solver for `min ‖Ax - b‖₂` subject to `x ≥ 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MODULE: &str = "moment_match";

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

fn passive_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[usize]) -> Result<DVector<f64>> {
    let sub = a.select_columns(passive);
    sub.svd(true, true)
        .solve(b, 1e-14)
        .map_err(|e| Error::numerical(MODULE, format!("least-squares subproblem: {e}")))
}

/// Solves the nonnegative least-squares problem. `max_iter` bounds the
/// number of outer iterations (3·columns is the usual choice).
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, max_iter: usize) -> Result<NnlsSolution> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            module: MODULE,
            expected: m,
            got: b.len(),
        });
    }
    let norm1 = (0..n).map(|j| a.column(j).abs().sum()).fold(0.0, f64::max);
    let tol = 10.0 * f64::EPSILON * norm1 * m.max(n) as f64;

    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let mut iterations = 0;
    loop {
        let w = a.transpose() * (b - a * &x);
        let pick = (0..n)
            .filter(|&j| !passive[j])
            .filter(|&j| w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]).then(j.cmp(&i)));
        let Some(t) = pick else { break };
        if iterations >= max_iter {
            break;
        }
        iterations += 1;
        passive[t] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let s_p = passive_lstsq(a, b, &idx)?;
            if s_p.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (k, &j) in idx.iter().enumerate() {
                    x[j] = s_p[k];
                }
                break;
            }
            // step back toward the feasible region
            let mut alpha = f64::INFINITY;
            for (k, &j) in idx.iter().enumerate() {
                if s_p[k] <= 0.0 {
                    let denom = x[j] - s_p[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (k, &j) in idx.iter().enumerate() {
                x[j] += alpha * (s_p[k] - x[j]);
            }
            let mut dropped = false;
            for &j in &idx {
                if x[j] <= tol {
                    x[j] = 0.0;
                    passive[j] = false;
                    dropped = true;
                }
            }
            if !dropped {
                // the minimizing coordinate hit zero only up to rounding
                let j = idx
                    .iter()
                    .copied()
                    .min_by(|&i, &j| x[i].total_cmp(&x[j]))
                    .unwrap();
                x[j] = 0.0;
                passive[j] = false;
            }
        }
    }
    let residual_norm = (b - a * &x).norm();
    Ok(NnlsSolution {
        x,
        residual_norm,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn recovers_feasible_nonnegative_solution() {
        let mut rng = crate::seeds::rng(3);
        let a = DMatrix::from_fn(6, 20, |_, _| rng.random::<f64>());
        let mut truth = DVector::zeros(20);
        truth[3] = 0.4;
        truth[11] = 1.3;
        truth[17] = 0.2;
        let b = &a * &truth;
        let sol = nnls(&a, &b, 60).unwrap();
        assert!(sol.residual_norm < 1e-12);
        assert!(sol.x.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn kkt_conditions_hold_when_infeasible() {
        let mut rng = crate::seeds::rng(5);
        let a = DMatrix::from_fn(8, 5, |_, _| rng.random::<f64>() - 0.5);
        let b = DVector::from_fn(8, |_, _| rng.random::<f64>() - 0.5);
        let sol = nnls(&a, &b, 50).unwrap();
        let w = a.transpose() * (&b - &a * &sol.x);
        for j in 0..5 {
            assert!(sol.x[j] >= 0.0);
            assert!(w[j] <= 1e-10, "dual feasibility at {j}: {}", w[j]);
            if sol.x[j] > 0.0 {
                assert!(w[j].abs() <= 1e-10);
            }
        }
    }
}
