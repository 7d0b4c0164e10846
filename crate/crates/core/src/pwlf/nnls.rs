//! Inner solver for the constrained least-squares problem at fixed
//! breakpoints.
//!
//! In the hinge parametrization the slope constraint is a set of
//! cumulative-sum inequalities; re-parametrizing by per-segment slopes
//! turns it into plain non-negativity. Each segment contributes a "tent"
//! regressor `clamp(x - b_t, 0, b_{t+1} - b_t)` and the model is
//!
//! ```text
//!   f(x) = intercept + sum_t slope_t * tent_t(x),   slope_t >= 0
//! ```
//!
//! The intercept is unconstrained and projected out by centering, leaving
//! a small non-negative least-squares problem solved exactly by the
//! Lawson-Hanson active-set iteration on the Gram matrix. For k interior
//! breakpoints the Gram is (k+1) x (k+1), so a solve is O(n k^2) to build
//! and O(1) in n afterwards.

/// Dense symmetric solve with partial pivoting and an escalating ridge
/// fall-back for (near-)singular systems from collinear tent columns.
fn solve_symmetric(g: &[Vec<f64>], rhs: &[f64], scale: f64) -> Option<Vec<f64>> {
    let m = rhs.len();
    for ridge_exp in [0.0, 1e-12, 1e-9, 1e-6] {
        let ridge = ridge_exp * scale;
        let mut a: Vec<Vec<f64>> = g.iter().map(|row| row.clone()).collect();
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += ridge;
        }
        let mut b = rhs.to_vec();
        let mut ok = true;
        for col in 0..m {
            let pivot_row = (col..m)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            if a[pivot_row][col].abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
                ok = false;
                break;
            }
            a.swap(col, pivot_row);
            b.swap(col, pivot_row);
            for row in col + 1..m {
                let factor = a[row][col] / a[col][col];
                for k in col..m {
                    a[row][k] -= factor * a[col][k];
                }
                b[row] -= factor * b[col];
            }
        }
        if !ok {
            continue;
        }
        for col in (0..m).rev() {
            let mut v = b[col];
            for k in col + 1..m {
                v -= a[col][k] * b[k];
            }
            b[col] = v / a[col][col];
        }
        if b.iter().all(|v| v.is_finite()) {
            return Some(b);
        }
    }
    None
}

/// Solution of the fixed-breakpoint problem.
#[derive(Debug, Clone)]
pub(crate) struct TentFit {
    /// Value of the fitted function at the first breakpoint.
    pub intercept: f64,
    /// Per-segment slopes, all >= 0. One per breakpoint gap.
    pub slopes: Vec<f64>,
    /// Sum of squared residuals from the Gram identity (fast, may carry
    /// cancellation dust; clamped at zero).
    pub ssr_gram: f64,
}

/// Fit `y ~ intercept + sum_t slope_t * tent_t(x)` with `slope_t >= 0`.
///
/// `breakpoints` must be sorted with at least two entries. Zero-width
/// segments get slope zero and contribute nothing.
pub(crate) fn solve_tents(x: &[f64], y: &[f64], breakpoints: &[f64]) -> TentFit {
    let n = x.len();
    let m = breakpoints.len() - 1;
    let nf = n as f64;

    // Column means and centered Gram.
    let tent = |t: usize, xi: f64| -> f64 {
        let lo = breakpoints[t];
        let hi = breakpoints[t + 1];
        (xi - lo).clamp(0.0, hi - lo)
    };
    let y_mean = y.iter().sum::<f64>() / nf;
    let mut col_mean = vec![0.0; m];
    for (t, cm) in col_mean.iter_mut().enumerate() {
        *cm = x.iter().map(|&xi| tent(t, xi)).sum::<f64>() / nf;
    }
    let mut gram = vec![vec![0.0; m]; m];
    let mut rhs = vec![0.0; m];
    let mut syy = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        let dy = y[i] - y_mean;
        syy += dy * dy;
        for t in 0..m {
            let dt = tent(t, xi) - col_mean[t];
            rhs[t] += dt * dy;
            for u in t..m {
                gram[t][u] += dt * (tent(u, xi) - col_mean[u]);
            }
        }
    }
    for t in 0..m {
        for u in 0..t {
            gram[t][u] = gram[u][t];
        }
    }

    let diag_max = (0..m).map(|t| gram[t][t]).fold(0.0f64, f64::max);
    let col_ok: Vec<bool> = (0..m).map(|t| gram[t][t] > 1e-12 * diag_max.max(f64::MIN_POSITIVE)).collect();
    let c_scale = rhs.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    let w_tol = 1e-12 * c_scale.max(f64::MIN_POSITIVE);

    let mut slopes = vec![0.0; m];
    let mut passive = vec![false; m];
    let gradient = |slopes: &[f64], t: usize| -> f64 {
        rhs[t] - (0..m).map(|u| gram[t][u] * slopes[u]).sum::<f64>()
    };

    let outer_cap = 4 * m + 8;
    'outer: for _ in 0..outer_cap {
        // Most violated KKT multiplier among inactive columns.
        let mut pick: Option<(usize, f64)> = None;
        for t in 0..m {
            if passive[t] || !col_ok[t] {
                continue;
            }
            let w = gradient(&slopes, t);
            if w > w_tol && pick.map_or(true, |(_, best)| w > best) {
                pick = Some((t, w));
            }
        }
        let Some((enter, _)) = pick else { break };
        passive[enter] = true;

        for _ in 0..=m {
            let active: Vec<usize> = (0..m).filter(|&t| passive[t]).collect();
            let sub_g: Vec<Vec<f64>> = active
                .iter()
                .map(|&t| active.iter().map(|&u| gram[t][u]).collect())
                .collect();
            let sub_c: Vec<f64> = active.iter().map(|&t| rhs[t]).collect();
            let Some(z) = solve_symmetric(&sub_g, &sub_c, diag_max) else {
                // Unsolvable subset; drop the entering column and give up on it.
                passive[enter] = false;
                continue 'outer;
            };
            if z.iter().all(|&v| v > 0.0) {
                slopes.iter_mut().for_each(|s| *s = 0.0);
                for (idx, &t) in active.iter().enumerate() {
                    slopes[t] = z[idx];
                }
                break;
            }
            // Step toward z until the first passive slope hits zero.
            let mut alpha = f64::INFINITY;
            for (idx, &t) in active.iter().enumerate() {
                if z[idx] <= 0.0 {
                    let denom = slopes[t] - z[idx];
                    if denom > 0.0 {
                        alpha = alpha.min(slopes[t] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            let alpha = alpha.clamp(0.0, 1.0);
            for (idx, &t) in active.iter().enumerate() {
                slopes[t] += alpha * (z[idx] - slopes[t]);
            }
            for &t in &active {
                if slopes[t] <= 1e-14 * slopes.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(f64::MIN_POSITIVE) {
                    slopes[t] = 0.0;
                    passive[t] = false;
                }
            }
        }
    }

    let fitted_dot_c: f64 = (0..m).map(|t| slopes[t] * rhs[t]).sum();
    let quad: f64 = (0..m)
        .map(|t| slopes[t] * (0..m).map(|u| gram[t][u] * slopes[u]).sum::<f64>())
        .sum();
    let ssr_gram = (syy - 2.0 * fitted_dot_c + quad).max(0.0);
    let intercept = y_mean - (0..m).map(|t| slopes[t] * col_mean[t]).sum::<f64>();
    TentFit {
        intercept,
        slopes,
        ssr_gram,
    }
}

/// Exact residual pass for the final reported fit.
pub(crate) fn direct_ssr(x: &[f64], y: &[f64], breakpoints: &[f64], fit: &TentFit) -> f64 {
    let mut ssr = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        let mut pred = fit.intercept;
        for (t, &s) in fit.slopes.iter().enumerate() {
            let lo = breakpoints[t];
            let hi = breakpoints[t + 1];
            pred += s * (xi - lo).clamp(0.0, hi - lo);
        }
        let r = y[i] - pred;
        ssr += r * r;
    }
    ssr
}
