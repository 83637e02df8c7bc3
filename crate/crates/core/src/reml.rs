//! Brute-force restricted-likelihood evaluation and optimization.
//!
//! This is a validation harness for small instances: it evaluates the
//! criterion through dense observation-space factorizations, a code path
//! deliberately disjoint from the fitting engine, and optimizes it by a
//! coarse log-grid scan followed by coordinate-wise golden-section
//! refinement.

use ndarray::{Array2, ArrayView1};

use crate::error::{Result, SopError};
use crate::linalg::{cholesky, cholesky_logdet, cholesky_solve_mat, cholesky_solve_vec,
                    spd_inverse};
use crate::mixed::{assemble_precision, PenaltyComponent, RandomLayout};

/// Hard cap on the observation count; the oracle is a test fixture.
const ORACLE_N_CAP: usize = 500;
/// Hard cap on the number of variance parameters searched.
const ORACLE_PARAM_CAP: usize = 6;

/// The best point found by the oracle search.
#[derive(Debug, Clone)]
pub struct RemlEvaluation {
    pub minus2_reml: f64,
    pub tau2: Vec<f64>,
    pub sigma2: f64,
}

/// `-2 log` restricted likelihood (constant omitted):
/// `log det V + log det(X'V^{-1}X) + y'Py` with `V = sigma2 I + Z G Z'`.
pub fn reml_value(
    tau2: &[f64],
    sigma2: f64,
    y: ArrayView1<f64>,
    x: &Array2<f64>,
    z: &Array2<f64>,
    components: &[PenaltyComponent],
    layout: &RandomLayout,
) -> Result<f64> {
    let n = y.len();
    if n > ORACLE_N_CAP {
        return Err(SopError::Config(format!(
            "oracle evaluations are capped at {ORACLE_N_CAP} observations, got {n}"
        )));
    }
    if x.nrows() != n || z.nrows() != n {
        return Err(SopError::Config("design row counts do not agree".into()));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(SopError::Domain("sigma2 must be positive and finite".into()));
    }
    let m = z.ncols();
    let ginv = assemble_precision(components, layout, tau2, m)?;
    let g = spd_inverse(&ginv.view())?;
    let zg = z.dot(&g);
    let mut v = zg.dot(&z.t());
    for i in 0..n {
        v[[i, i]] += sigma2;
    }
    let lv =
        cholesky(&v.view()).map_err(|_| SopError::Numeric("V is numerically singular".into()))?;
    let logdet_v = cholesky_logdet(&lv);

    let vinv_x = cholesky_solve_mat(&lv, &x.view());
    let xtvx = x.t().dot(&vinv_x);
    let lx = cholesky(&xtvx.view())
        .map_err(|_| SopError::Numeric("X'V^{-1}X is numerically singular".into()))?;
    let logdet_x = cholesky_logdet(&lx);

    let vinv_y = cholesky_solve_vec(&lv, &y);
    let xt_vinv_y = x.t().dot(&vinv_y);
    let inner = cholesky_solve_vec(&lx, &xt_vinv_y.view());
    let ypy = y.dot(&vinv_y) - xt_vinv_y.dot(&inner);

    Ok(logdet_v + logdet_x + ypy)
}

/// Golden-section minimization of a univariate function on `[a, b]`.
fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Coordinate-wise golden-section descent in a box; non-finite objective
/// values are treated as +infinity.
fn coordinate_search<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    start: &[f64],
    lo: f64,
    hi: f64,
    bracket: f64,
    tol: f64,
    max_sweeps: usize,
) -> (Vec<f64>, f64) {
    let k = start.len();
    let mut point = start.to_vec();
    let mut best = f(&point);
    if !best.is_finite() {
        best = f64::INFINITY;
    }
    for _ in 0..max_sweeps {
        let before = best;
        for j in 0..k {
            let center = point[j];
            let a = (center - bracket).max(lo);
            let b = (center + bracket).min(hi);
            let mut trial = point.clone();
            let (xj, fj) = golden_section(
                |v| {
                    trial[j] = v;
                    let val = f(&trial);
                    if val.is_finite() {
                        val
                    } else {
                        f64::INFINITY
                    }
                },
                a,
                b,
                tol,
            );
            if fj < best {
                point[j] = xj;
                best = fj;
            }
        }
        if before - best < 1e-9 * (1.0 + best.abs()) {
            break;
        }
    }
    (point, best)
}

/// Optimize the restricted likelihood over all variance parameters in log
/// space: a coarse factorial grid (when the dimension allows) seeds
/// coordinate-wise golden-section refinement from multiple starts.
pub fn optimize_reml(
    y: ArrayView1<f64>,
    x: &Array2<f64>,
    z: &Array2<f64>,
    components: &[PenaltyComponent],
    layout: &RandomLayout,
    starts: &[(Vec<f64>, f64)],
) -> Result<RemlEvaluation> {
    let p = components.len();
    let k = p + 1;
    if k > ORACLE_PARAM_CAP {
        return Err(SopError::Config(format!(
            "oracle searches are capped at {ORACLE_PARAM_CAP} variance parameters, got {k}"
        )));
    }
    let n = y.len() as f64;
    let mean = y.sum() / n;
    let vy = (y.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n).max(1e-12);
    let lo = (1e-8 * vy).ln();
    let hi = (1e8 * vy).ln();

    let mut objective = |logv: &[f64]| -> f64 {
        let tau2: Vec<f64> = logv[..p].iter().map(|&v| v.exp()).collect();
        let sigma2 = logv[p].exp();
        match reml_value(&tau2, sigma2, y, x, z, components, layout) {
            Ok(v) if v.is_finite() => v,
            _ => f64::INFINITY,
        }
    };

    // candidate starts: callers' points plus a coarse scan
    let mut candidates: Vec<Vec<f64>> = starts
        .iter()
        .map(|(t, s)| {
            t.iter()
                .map(|&v| v.max(1e-300).ln().clamp(lo, hi))
                .chain(std::iter::once(s.max(1e-300).ln().clamp(lo, hi)))
                .collect()
        })
        .collect();

    if k <= 3 {
        // full factorial over a 7-point log grid, keep the best few corners
        let grid: Vec<f64> = (0..7).map(|i| lo + (hi - lo) * i as f64 / 6.0).collect();
        let mut scored: Vec<(f64, Vec<f64>)> = Vec::new();
        let mut idx = vec![0usize; k];
        loop {
            let point: Vec<f64> = idx.iter().map(|&i| grid[i]).collect();
            scored.push((objective(&point), point));
            let mut carry = 0;
            loop {
                idx[carry] += 1;
                if idx[carry] < grid.len() {
                    break;
                }
                idx[carry] = 0;
                carry += 1;
                if carry == k {
                    break;
                }
            }
            if carry == k {
                break;
            }
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (_, point) in scored.into_iter().take(3) {
            candidates.push(point);
        }
    } else {
        let base = vy.ln();
        candidates.push(vec![base; k]);
        candidates.push(vec![base - 4.0; k]);
        candidates.push(vec![base + 4.0; k]);
    }
    if candidates.is_empty() {
        candidates.push(vec![vy.ln(); k]);
    }

    let mut best_point = candidates[0].clone();
    let mut best_value = f64::INFINITY;
    for cand in &candidates {
        let (point, value) =
            coordinate_search(&mut objective, cand, lo, hi, 3.0, 1e-8, 40);
        if value < best_value {
            best_value = value;
            best_point = point;
        }
    }

    Ok(RemlEvaluation {
        minus2_reml: best_value,
        tau2: best_point[..p].iter().map(|&v| v.exp()).collect(),
        sigma2: best_point[p].exp(),
    })
}
