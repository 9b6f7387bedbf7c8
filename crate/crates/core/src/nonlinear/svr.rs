//! Epsilon-insensitive support vector regression with an RBF kernel.
//!
//! The dual is solved by sequential minimal optimisation over the usual
//! doubled variable set `beta = (alpha, alpha*)`, selecting working pairs
//! with second-order information. Features are z-scored with training
//! statistics before the kernel is applied.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

/// `exp(-gamma * |x - x2|^2)`.
pub fn rbf_kernel(x: &[f64], x2: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(Error::Shape {
            expected: x.len(),
            got: x2.len(),
        });
    }
    if !(gamma > 0.0) {
        return Err(Error::param("gamma must be > 0"));
    }
    Ok(rbf(x, x2, gamma))
}

fn rbf(x: &[f64], x2: &[f64], gamma: f64) -> f64 {
    let d: f64 = x.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrParams {
    pub c: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// Maximal violating-pair gap accepted as optimal.
    pub tol: f64,
    /// Cap on pairwise updates.
    pub max_iter: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            c: 1.0,
            gamma: 0.1,
            epsilon: 0.01,
            tol: 1e-3,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SvrModel {
    /// Training rows with a nonzero dual coefficient.
    pub support_indices: Vec<usize>,
    /// `alpha_i - alpha*_i` for each support vector.
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    pub epsilon: f64,
    /// Support vectors in standardised coordinates, one row each.
    pub support_vectors: DMatrix<f64>,
    pub feature_means: Vec<f64>,
    pub feature_scales: Vec<f64>,
    pub converged: bool,
    /// Final maximal violating-pair gap.
    pub kkt_violation: f64,
    pub n_iter: usize,
}

impl SvrModel {
    pub fn n_features(&self) -> usize {
        self.feature_means.len()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let z: Vec<f64> = row
            .iter()
            .zip(self.feature_means.iter().zip(&self.feature_scales))
            .map(|(x, (m, s))| (x - m) / s)
            .collect();
        let mut sv = vec![0.0; z.len()];
        self.bias
            + self
                .dual_coefficients
                .iter()
                .enumerate()
                .map(|(k, a)| {
                    for (j, v) in sv.iter_mut().enumerate() {
                        *v = self.support_vectors[(k, j)];
                    }
                    a * rbf(&sv, &z, self.gamma)
                })
                .sum::<f64>()
    }
}

/// Dual coefficients for every training row plus the solver trace.
#[derive(Debug, Clone)]
pub struct SvrSolution {
    pub model: SvrModel,
    /// `alpha_i - alpha*_i` for all rows, including zeros.
    pub all_dual: Vec<f64>,
    /// Dual objective (maximisation form) after each update, when traced.
    pub dual_objective_trace: Vec<f64>,
}

fn standardise(x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
    let (n, p) = x.shape();
    let nf = n as f64;
    let mut means = vec![0.0; p];
    let mut scales = vec![1.0; p];
    for j in 0..p {
        let col = x.column(j);
        let m = col.sum() / nf;
        let sd = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / nf).sqrt();
        means[j] = m;
        if sd > 1e-10 * m.abs().max(1.0) {
            scales[j] = sd;
        }
    }
    let z = DMatrix::from_fn(n, p, |i, j| (x[(i, j)] - means[j]) / scales[j]);
    (z, means, scales)
}

/// Fits the model and returns it together with the full dual vector.
pub fn fit_svr_traced(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    params: &SvrParams,
    trace: bool,
) -> Result<SvrSolution> {
    let (l, p) = x.shape();
    if l == 0 || p == 0 {
        return Err(Error::param("svr needs a non-empty design"));
    }
    if y.len() != l {
        return Err(Error::Shape {
            expected: l,
            got: y.len(),
        });
    }
    let SvrParams {
        c,
        gamma,
        epsilon,
        tol,
        max_iter,
    } = *params;
    if !(c > 0.0 && gamma > 0.0 && epsilon >= 0.0 && tol > 0.0) {
        return Err(Error::param(
            "svr needs C > 0, gamma > 0, epsilon >= 0, tol > 0",
        ));
    }

    let (z, means, scales) = standardise(x);
    let rows: Vec<Vec<f64>> = (0..l).map(|i| z.row(i).iter().copied().collect()).collect();
    let mut k = DMatrix::<f64>::zeros(l, l);
    for i in 0..l {
        k[(i, i)] = 1.0;
        for j in 0..i {
            let v = rbf(&rows[i], &rows[j], gamma);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }

    // variable t < l is alpha_t (sign +1), t >= l is alpha*_{t-l} (sign -1)
    let m = 2 * l;
    let sign = |t: usize| if t < l { 1.0 } else { -1.0 };
    let base = |t: usize| if t < l { t } else { t - l };
    let q = |s: usize, t: usize| sign(s) * sign(t) * k[(base(s), base(t))];
    let lin: Vec<f64> = (0..m)
        .map(|t| {
            if t < l {
                epsilon - y[t]
            } else {
                epsilon + y[t - l]
            }
        })
        .collect();
    let mut beta = vec![0.0; m];
    let mut grad = lin.clone();
    let at_upper = |b: f64| b >= c;
    let at_lower = |b: f64| b <= 0.0;

    let dual_value = |beta: &[f64], grad: &[f64]| -> f64 {
        // f = 1/2 b'Qb + p'b = 1/2 sum b_t (G_t + p_t); the dual maximises -f
        -0.5 * (0..m).map(|t| beta[t] * (grad[t] + lin[t])).sum::<f64>()
    };
    let mut trace_values = Vec::new();
    if trace {
        trace_values.push(dual_value(&beta, &grad));
    }

    let mut n_iter = 0;
    let mut gap;
    let mut converged = false;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..m {
            let ok = if sign(t) > 0.0 {
                !at_upper(beta[t])
            } else {
                !at_lower(beta[t])
            };
            let v = -sign(t) * grad[t];
            if ok && v >= gmax {
                gmax = v;
                i_sel = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut best_obj = f64::INFINITY;
        if i_sel != usize::MAX {
            let i = i_sel;
            for t in 0..m {
                let ok = if sign(t) > 0.0 {
                    !at_lower(beta[t])
                } else {
                    !at_upper(beta[t])
                };
                if !ok {
                    continue;
                }
                let v = sign(t) * grad[t];
                if v >= gmax2 {
                    gmax2 = v;
                }
                let diff = gmax + v;
                if diff > 0.0 {
                    let quad = 2.0 - 2.0 * k[(base(i), base(t))];
                    let quad = if quad > 0.0 { quad } else { TAU };
                    let obj = -(diff * diff) / quad;
                    if obj <= best_obj {
                        best_obj = obj;
                        j_sel = t;
                    }
                }
            }
        }
        gap = gmax + gmax2;
        if i_sel == usize::MAX || j_sel == usize::MAX || gap < tol {
            converged = true;
            if !gap.is_finite() {
                gap = 0.0;
            }
            break;
        }
        if n_iter >= max_iter {
            break;
        }
        n_iter += 1;

        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (beta[i], beta[j]);
        let qij = q(i, j);
        if sign(i) != sign(j) {
            let quad = 2.0 + 2.0 * qij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = beta[i] - beta[j];
            beta[i] += delta;
            beta[j] += delta;
            if diff > 0.0 {
                if beta[j] < 0.0 {
                    beta[j] = 0.0;
                    beta[i] = diff;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = -diff;
            }
            if diff > 0.0 {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = c - diff;
                }
            } else if beta[j] > c {
                beta[j] = c;
                beta[i] = c + diff;
            }
        } else {
            let quad = 2.0 - 2.0 * qij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = beta[i] + beta[j];
            beta[i] -= delta;
            beta[j] += delta;
            if sum > c {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = sum - c;
                }
            } else if beta[j] < 0.0 {
                beta[j] = 0.0;
                beta[i] = sum;
            }
            if sum > c {
                if beta[j] > c {
                    beta[j] = c;
                    beta[i] = sum - c;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = sum;
            }
        }
        let (di, dj) = (beta[i] - old_i, beta[j] - old_j);
        if di != 0.0 || dj != 0.0 {
            for t in 0..m {
                grad[t] += q(i, t) * di + q(j, t) * dj;
            }
        }
        if trace {
            trace_values.push(dual_value(&beta, &grad));
        }
    }

    // bias from free variables, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut n_free) = (0.0, 0usize);
    for t in 0..m {
        let yg = sign(t) * grad[t];
        if at_upper(beta[t]) {
            if sign(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower(beta[t]) {
            if sign(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            free_sum += yg;
        }
    }
    let rho = if n_free > 0 {
        free_sum / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    let bias = -rho;

    let all_dual: Vec<f64> = (0..l).map(|i| beta[i] - beta[i + l]).collect();
    let support_indices: Vec<usize> = (0..l).filter(|&i| all_dual[i] != 0.0).collect();
    let dual_coefficients: Vec<f64> = support_indices.iter().map(|&i| all_dual[i]).collect();
    let support_vectors =
        DMatrix::from_fn(support_indices.len(), p, |r, j| z[(support_indices[r], j)]);
    Ok(SvrSolution {
        model: SvrModel {
            support_indices,
            dual_coefficients,
            bias,
            gamma,
            c,
            epsilon,
            support_vectors,
            feature_means: means,
            feature_scales: scales,
            converged,
            kkt_violation: gap.max(0.0),
            n_iter,
        },
        all_dual,
        dual_objective_trace: trace_values,
    })
}

pub fn fit_svr(x: &DMatrix<f64>, y: &DVector<f64>, params: &SvrParams) -> Result<SvrModel> {
    fit_svr_traced(x, y, params, false).map(|s| s.model)
}

/// Largest violation of the complementary-slackness conditions on the
/// training set, measured in target units:
///
/// - `a_i = 0` requires `|f(x_i) - y_i| <= epsilon`,
/// - `0 < |a_i| < C` requires the residual to sit on the tube edge,
/// - `|a_i| = C` requires `|f(x_i) - y_i| >= epsilon`.
///
/// Residual signs must agree with the sign of `a_i`.
pub fn svr_kkt_violation(solution: &SvrSolution, x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let model = &solution.model;
    let (c, eps) = (model.c, model.epsilon);
    let mut worst: f64 = 0.0;
    for (i, &a) in solution.all_dual.iter().enumerate() {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        // r > 0 means the point lies above the regression function
        let r = y[i] - model.predict_row(&row);
        let v = if a == 0.0 {
            (r.abs() - eps).max(0.0)
        } else if a.abs() >= c {
            (eps - r * a.signum()).max(0.0)
        } else {
            (r * a.signum() - eps).abs()
        };
        worst = worst.max(v);
    }
    worst
}
