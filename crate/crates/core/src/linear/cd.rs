//! Cyclic coordinate descent for the elastic net
//!
//! ```text
//! min_w  1/(2n) ||y - Z w||² + alpha * rho * ||w||₁ + alpha * (1 - rho) / 2 * ||w||²
//! ```

use nalgebra::{DMatrix, DVector};

use super::{soft_threshold, Design, LinearModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct CdSettings {
    /// Largest coefficient change in a sweep that counts as converged.
    pub tol: f64,
    /// Cap on sweeps.
    pub max_iter: usize,
}

impl Default for CdSettings {
    fn default() -> Self {
        CdSettings {
            tol: 1e-6,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CdOutcome {
    pub coef: DVector<f64>,
    pub n_iter: usize,
    pub converged: bool,
    /// Objective after each sweep, only filled when tracing was requested.
    pub objective_trace: Vec<f64>,
}

fn check_params(alpha: f64, l1_ratio: f64, settings: &CdSettings) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::param(format!("alpha must be >= 0, got {alpha}")));
    }
    if !(0.0..=1.0).contains(&l1_ratio) {
        return Err(Error::param(format!(
            "l1_ratio must lie in [0, 1], got {l1_ratio}"
        )));
    }
    if !(settings.tol > 0.0) {
        return Err(Error::param(format!(
            "tol must be > 0, got {}",
            settings.tol
        )));
    }
    Ok(())
}

pub fn en_objective(design: &Design, w: &DVector<f64>, alpha: f64, l1_ratio: f64) -> f64 {
    let n = design.n_samples() as f64;
    let r = design.residual(w);
    r.norm_squared() / (2.0 * n)
        + alpha * l1_ratio * w.lp_norm(1)
        + 0.5 * alpha * (1.0 - l1_ratio) * w.norm_squared()
}

/// Largest violation of the elastic-net optimality conditions at `w`.
///
/// With `g_j = z_jᵀ r / n - alpha (1 - rho) w_j`, optimality requires
/// `|g_j| <= alpha rho` where `w_j = 0` and `g_j = alpha rho sign(w_j)` elsewhere.
pub fn en_kkt_violation(design: &Design, w: &DVector<f64>, alpha: f64, l1_ratio: f64) -> f64 {
    let n = design.n_samples() as f64;
    let r = design.residual(w);
    let corr = design.z().transpose() * r / n;
    let l1 = alpha * l1_ratio;
    let l2 = alpha * (1.0 - l1_ratio);
    (0..w.len())
        .filter(|&j| !design.is_constant(j))
        .map(|j| {
            let g = corr[j] - l2 * w[j];
            if w[j] == 0.0 {
                (g.abs() - l1).max(0.0)
            } else {
                (g - l1 * w[j].signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Covariance form of a design: `Zᵀ Z / n` and `Zᵀ y / n`. Coordinate
/// updates then cost O(p) instead of O(n), and one Gram matrix serves a
/// whole path.
pub(crate) struct Gram {
    g: DMatrix<f64>,
    c: DVector<f64>,
}

impl Gram {
    pub(crate) fn new(design: &Design) -> Self {
        let nf = design.n_samples() as f64;
        let z = design.z();
        Gram {
            g: z.tr_mul(z) / nf,
            c: z.tr_mul(design.y()) / nf,
        }
    }
}

/// Runs sweeps from `warm` (or zero) until the largest coefficient change in a
/// full sweep is at most `tol` and the optimality conditions hold to `tol`.
/// Between full sweeps the nonzero coordinates are cycled on their own until
/// they settle. `max_iter` caps the total number of sweeps of either kind.
pub fn coordinate_descent(
    design: &Design,
    alpha: f64,
    l1_ratio: f64,
    settings: &CdSettings,
    warm: Option<&DVector<f64>>,
    trace: bool,
) -> CdOutcome {
    coordinate_descent_gram(
        design,
        &Gram::new(design),
        alpha,
        l1_ratio,
        settings,
        warm,
        trace,
    )
}

pub(crate) fn coordinate_descent_gram(
    design: &Design,
    gram: &Gram,
    alpha: f64,
    l1_ratio: f64,
    settings: &CdSettings,
    warm: Option<&DVector<f64>>,
    trace: bool,
) -> CdOutcome {
    let p = design.n_features();
    let g = &gram.g;
    let l1 = alpha * l1_ratio;
    let l2 = alpha * (1.0 - l1_ratio);

    let mut w = warm.cloned().unwrap_or_else(|| DVector::zeros(p));
    for j in 0..p {
        if g[(j, j)] == 0.0 {
            w[j] = 0.0;
        }
    }
    // q = G w, kept in step with w
    let mut q = g * &w;
    let mut objective_trace = Vec::new();
    let mut converged = false;
    let mut n_iter = 0;

    let sweep =
        |w: &mut DVector<f64>, q: &mut DVector<f64>, idx: &mut dyn Iterator<Item = usize>| {
            let mut max_delta = 0.0f64;
            for j in idx {
                let gjj = g[(j, j)];
                if gjj == 0.0 {
                    continue;
                }
                let rho_j = gram.c[j] - q[j] + gjj * w[j];
                let new = soft_threshold(rho_j, l1) / (gjj + l2);
                let delta = new - w[j];
                if delta != 0.0 {
                    q.axpy(delta, &g.column(j), 1.0);
                    w[j] = new;
                    max_delta = max_delta.max(delta.abs());
                }
            }
            max_delta
        };

    while n_iter < settings.max_iter {
        n_iter += 1;
        let full_delta = sweep(&mut w, &mut q, &mut (0..p));
        if trace {
            objective_trace.push(en_objective(design, &w, alpha, l1_ratio));
        }
        if full_delta <= settings.tol {
            if en_kkt_violation(design, &w, alpha, l1_ratio) <= settings.tol {
                converged = true;
                break;
            }
            // drop accumulated rounding before continuing
            q = g * &w;
        }
        let active: Vec<usize> = (0..p).filter(|&j| w[j] != 0.0).collect();
        while n_iter < settings.max_iter && !active.is_empty() {
            n_iter += 1;
            let d = sweep(&mut w, &mut q, &mut active.iter().copied());
            if trace {
                objective_trace.push(en_objective(design, &w, alpha, l1_ratio));
            }
            if d <= settings.tol {
                break;
            }
        }
    }
    CdOutcome {
        coef: w,
        n_iter,
        converged,
        objective_trace,
    }
}

pub fn solve_elastic_net(
    design: &Design,
    alpha: f64,
    l1_ratio: f64,
    settings: &CdSettings,
) -> Result<LinearModel> {
    check_params(alpha, l1_ratio, settings)?;
    if alpha == 0.0 {
        // no penalty left: the exact minimum-norm least-squares solution
        let mut model = super::solve_ols(design);
        model.l1_ratio = l1_ratio;
        return Ok(model);
    }
    let out = coordinate_descent(design, alpha, l1_ratio, settings, None, false);
    let mut model = design.model(out.coef, alpha, l1_ratio);
    model.converged = out.converged;
    model.n_iter = out.n_iter;
    Ok(model)
}

/// Elastic net on z-scored features. Non-convergence is reported through
/// [`LinearModel::converged`], not as an error.
pub fn fit_elastic_net(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    alpha: f64,
    l1_ratio: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LinearModel> {
    let design = Design::zscore(x, y)?;
    solve_elastic_net(&design, alpha, l1_ratio, &CdSettings { tol, max_iter })
}

pub fn fit_lasso(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    alpha: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LinearModel> {
    fit_elastic_net(x, y, alpha, 1.0, tol, max_iter)
}

/// Smallest alpha at which every coefficient is zero: `max_j |z_jᵀ y| / (n rho)`.
///
/// Inflated by a few ulps so that fitting exactly at the returned value
/// thresholds every coordinate to zero despite rounding in `alpha * rho`.
pub fn alpha_max(design: &Design, l1_ratio: f64) -> Result<f64> {
    if !(l1_ratio > 0.0 && l1_ratio <= 1.0) {
        return Err(Error::param(format!(
            "alpha grid needs l1_ratio in (0, 1], got {l1_ratio}"
        )));
    }
    let n = design.n_samples() as f64;
    let corr = design.z().transpose() * design.y();
    Ok(corr.amax() / (n * l1_ratio) * (1.0 + 4.0 * f64::EPSILON))
}

fn log_grid(top: f64, count: usize, eps: f64) -> Vec<f64> {
    (0..count)
        .map(|i| top * eps.powf(i as f64 / (count - 1) as f64))
        .collect()
}

pub(crate) fn alpha_grid_design(
    design: &Design,
    l1_ratio: f64,
    count: usize,
    eps: f64,
) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::param(format!(
            "alpha grid needs >= 2 points, got {count}"
        )));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::param(format!(
            "alpha grid eps must lie in (0, 1), got {eps}"
        )));
    }
    let top = alpha_max(design, l1_ratio)?;
    if top == 0.0 {
        // target is uncorrelated with every column: any penalty gives w = 0
        return Ok(log_grid(1.0, count, eps));
    }
    Ok(log_grid(top, count, eps))
}

/// Log-spaced descending grid from `alpha_max` down to `eps * alpha_max`.
pub fn alpha_grid(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    l1_ratio: f64,
    count: usize,
    eps: f64,
) -> Result<Vec<f64>> {
    alpha_grid_design(&Design::zscore(x, y)?, l1_ratio, count, eps)
}

/// Fits each alpha in order, warm-starting from the previous solution.
pub fn elastic_net_path(
    design: &Design,
    l1_ratio: f64,
    alphas: &[f64],
    settings: &CdSettings,
) -> Result<Vec<LinearModel>> {
    let gram = Gram::new(design);
    let mut warm: Option<DVector<f64>> = None;
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        check_params(alpha, l1_ratio, settings)?;
        let fit = coordinate_descent_gram(
            design,
            &gram,
            alpha,
            l1_ratio,
            settings,
            warm.as_ref(),
            false,
        );
        let mut model = design.model(fit.coef.clone(), alpha, l1_ratio);
        model.converged = fit.converged;
        model.n_iter = fit.n_iter;
        warm = Some(fit.coef);
        out.push(model);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{fit_ridge, Standardization};
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(n, |i, _| {
            x[(i, 0)] * 2.0 - x[(i, p - 1)] + rng.random_range(-0.3..0.3)
        });
        (x, y)
    }

    /// Golden-section minimisation of a unimodal 1-D function.
    fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        (a + b) / 2.0
    }

    #[test]
    fn one_feature_lasso_matches_brute_force() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let y = DVector::from_vec(vec![1.0, -1.0]);
        let m = fit_lasso(&x, &y, 0.25, 1e-12, 1000).unwrap();
        // grid oracle on the raw objective
        let obj = |w: f64| ((1.0 - w).powi(2) + (-1.0 + w).powi(2)) / 4.0 + 0.25 * w.abs();
        let best = (0..=400_000)
            .map(|i| -2.0 + i as f64 * 1e-5)
            .min_by(|a, b| obj(*a).total_cmp(&obj(*b)))
            .unwrap();
        assert_abs_diff_eq!(best, 0.75, epsilon = 1e-5);
        assert_abs_diff_eq!(m.coefficients[0], 0.75, epsilon = 1e-10);
    }

    #[test]
    fn orthonormal_design_lasso() {
        let x = DMatrix::<f64>::identity(2, 2);
        let y = DVector::from_vec(vec![3.0, 0.1]);
        let d = Design::new(&x, &y, Standardization::None).unwrap();
        let settings = CdSettings {
            tol: 1e-12,
            max_iter: 1000,
        };
        let m = solve_elastic_net(&d, 0.5, 1.0, &settings).unwrap();
        let obj = |w1: f64, w2: f64| {
            ((w1 - 3.0).powi(2) + (w2 - 0.1).powi(2)) / 4.0 + 0.5 * (w1.abs() + w2.abs())
        };
        // separable objective: minimise each coordinate independently
        let w1 = golden_min(|v| obj(v, 0.0), -5.0, 5.0);
        let w2 = golden_min(|v| obj(2.0, v), -5.0, 5.0);
        assert_abs_diff_eq!(w1, 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(w2, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(m.coefficients[0], 2.0, epsilon = 1e-10);
        assert_eq!(m.coefficients[1], 0.0);
    }

    #[test]
    fn rho_one_is_lasso() {
        let (x, y) = problem(1, 30, 5);
        let a = fit_elastic_net(&x, &y, 0.05, 1.0, 1e-10, 10_000).unwrap();
        let b = fit_lasso(&x, &y, 0.05, 1e-10, 10_000).unwrap();
        assert_eq!(a.coefficients, b.coefficients);
    }

    #[test]
    fn rho_zero_is_rescaled_ridge() {
        let (x, y) = problem(2, 30, 5);
        let alpha = 0.3;
        let en = fit_elastic_net(&x, &y, alpha, 0.0, 1e-12, 100_000).unwrap();
        let rr = fit_ridge(&x, &y, alpha * 30.0).unwrap();
        for (u, v) in en.coefficients.iter().zip(&rr.coefficients) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-6);
        }
    }

    #[test]
    fn zero_alpha_lasso_is_ols() {
        let (x, y) = problem(3, 40, 4);
        let a = fit_lasso(&x, &y, 0.0, 1e-12, 100_000).unwrap();
        let b = super::super::fit_ols(&x, &y).unwrap();
        for (u, v) in a.coefficients.iter().zip(&b.coefficients) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-6);
        }
        // the sweeps themselves also reach the least-squares solution
        let design = Design::zscore(&x, &y).unwrap();
        let settings = CdSettings {
            tol: 1e-12,
            max_iter: 100_000,
        };
        let cd = coordinate_descent(&design, 0.0, 1.0, &settings, None, false);
        assert!(cd.converged);
        for (u, v) in cd.coef.iter().zip(&b.coefficients) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-6);
        }
    }

    #[test]
    fn alpha_max_zeroes_everything() {
        let (x, y) = problem(4, 25, 6);
        for rho in [0.1, 0.5, 0.95, 1.0] {
            let grid = alpha_grid(&x, &y, rho, 3, 0.01).unwrap();
            assert_abs_diff_eq!(grid[1] / grid[0], 0.1, epsilon = 1e-12);
            assert_abs_diff_eq!(grid[2] / grid[0], 0.01, epsilon = 1e-12);
            let m = fit_elastic_net(&x, &y, grid[0], rho, 1e-8, 1000).unwrap();
            assert_eq!(m.nonzero_count(), 0, "rho {rho}");
            // slightly above alpha_max also zero
            let m = fit_elastic_net(&x, &y, grid[0] * 1.5, rho, 1e-8, 1000).unwrap();
            assert_eq!(m.nonzero_count(), 0);
        }
    }

    #[test]
    fn alpha_grid_hand_value_and_errors() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let y = DVector::from_vec(vec![1.0, -1.0]);
        let g = alpha_grid(&x, &y, 1.0, 2, 0.5).unwrap();
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-12);
        assert!(matches!(
            alpha_grid(&x, &y, 0.0, 3, 0.1),
            Err(Error::Parameter(_))
        ));
        assert!(alpha_grid(&x, &y, 1.0, 1, 0.1).is_err());
        assert!(alpha_grid(&x, &y, 1.0, 3, 1.0).is_err());
    }

    #[test]
    fn invalid_l1_ratio_rejected() {
        let (x, y) = problem(5, 10, 2);
        assert!(matches!(
            fit_elastic_net(&x, &y, 0.1, 1.5, 1e-6, 100),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn iteration_cap_sets_warning_flag() {
        let (x, y) = problem(6, 30, 6);
        let m = fit_elastic_net(&x, &y, 1e-4, 0.5, 1e-14, 1).unwrap();
        assert!(!m.converged);
        assert_eq!(m.n_iter, 1);
    }

    #[test]
    fn path_is_sparse_at_top() {
        let (x, y) = problem(8, 40, 6);
        let d = Design::zscore(&x, &y).unwrap();
        let grid = alpha_grid_design(&d, 0.5, 20, 1e-3).unwrap();
        let path = elastic_net_path(&d, 0.5, &grid, &CdSettings::default()).unwrap();
        assert_eq!(path[0].nonzero_count(), 0);
        assert!(path.last().unwrap().nonzero_count() > 0);
        assert!(grid.windows(2).all(|w| w[0] > w[1]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn sweeps_never_increase_objective(seed in 0u64..10_000, rho in 0.0f64..=1.0, frac in 0.001f64..0.9) {
            let (x, y) = problem(seed, 20, 5);
            let d = Design::zscore(&x, &y).unwrap();
            let alpha = frac * alpha_max(&d, rho.max(0.05)).unwrap();
            let settings = CdSettings { tol: 1e-10, max_iter: 5000 };
            let out = coordinate_descent(&d, alpha, rho, &settings, None, true);
            let start = en_objective(&d, &DVector::zeros(5), alpha, rho);
            let mut prev = start;
            for &v in &out.objective_trace {
                prop_assert!(v <= prev + 1e-12 * prev.abs().max(1.0));
                prev = v;
            }
            prop_assert!(out.converged);
            prop_assert!(en_kkt_violation(&d, &out.coef, alpha, rho) <= settings.tol);
        }
    }
}
