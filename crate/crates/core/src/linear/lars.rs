//! Least angle regression and its LASSO variant.
//!
//! The path is tracked in standardised space with the Gram matrix. Each step
//! moves the active coefficients along the equiangular direction until an
//! inactive column's correlation catches up with the active ones or, in
//! LASSO mode, an active coefficient hits zero and is dropped.

use nalgebra::{DMatrix, DVector};

use super::{Design, LinearModel};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LarsMode {
    Lars,
    Lasso,
}

/// Piecewise-linear coefficient path indexed by descending `alphas`.
///
/// `alphas[k]` is the common absolute correlation of the active set divided
/// by `n`, so in LASSO mode `models[k]` solves the LASSO at `alphas[k]`.
#[derive(Debug, Clone)]
pub struct RegPath {
    pub mode: LarsMode,
    pub alphas: Vec<f64>,
    pub models: Vec<LinearModel>,
    pub objective_values: Vec<f64>,
}

impl RegPath {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// Linear interpolation of the path at `alpha`; clamps outside the path range.
    pub fn model_at(&self, alpha: f64) -> LinearModel {
        let last = self.len() - 1;
        if alpha >= self.alphas[0] {
            let mut m = self.models[0].clone();
            m.alpha = alpha;
            return m;
        }
        if alpha <= self.alphas[last] {
            let mut m = self.models[last].clone();
            m.alpha = alpha;
            return m;
        }
        let k = self
            .alphas
            .windows(2)
            .position(|w| w[0] >= alpha && alpha >= w[1])
            .expect("alpha lies inside the path range");
        let (hi, lo) = (self.alphas[k], self.alphas[k + 1]);
        let t = (hi - alpha) / (hi - lo);
        let mut m = self.models[k].clone();
        for (c, next) in m
            .coefficients
            .iter_mut()
            .zip(&self.models[k + 1].coefficients)
        {
            *c = (1.0 - t) * *c + t * next;
        }
        m.alpha = alpha;
        m
    }
}

fn select_square(gram: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| gram[(idx[a], idx[b])])
}

/// Computes the breakpoints of the path on a prepared design.
pub fn lars_path_design(design: &Design, mode: LarsMode) -> RegPath {
    let z = design.z();
    let (n, p) = z.shape();
    let nf = n as f64;
    let gram = z.transpose() * z;
    let xty = z.transpose() * design.y();

    let mut excluded: Vec<bool> = (0..p).map(|j| design.is_constant(j)).collect();
    let usable = excluded.iter().filter(|e| !**e).count();
    let max_active = usable.min(n.saturating_sub(1));

    let mut beta = DVector::<f64>::zeros(p);
    let mut active: Vec<usize> = Vec::new();
    let mut alphas = Vec::new();
    let mut coefs = Vec::new();

    let c0 = (0..p)
        .filter(|&j| !excluded[j])
        .map(|j| xty[j].abs())
        .fold(0.0, f64::max);
    alphas.push(c0 / nf);
    coefs.push(beta.clone());

    let mut just_dropped = false;
    let max_steps = 8 * p + 16;
    for _ in 0..max_steps {
        if c0 == 0.0 {
            break;
        }
        let c = &xty - &gram * &beta;
        let big_c = (0..p)
            .filter(|&j| !excluded[j])
            .map(|j| c[j].abs())
            .fold(0.0, f64::max);
        if big_c <= 1e-13 * c0 {
            break;
        }

        if !just_dropped && active.len() < max_active {
            let candidate = (0..p)
                .filter(|&j| !excluded[j] && !active.contains(&j))
                .fold(None::<usize>, |best, j| match best {
                    Some(b) if c[b].abs() >= c[j].abs() => Some(b),
                    _ => Some(j),
                });
            if let Some(j) = candidate {
                let mut trial = active.clone();
                trial.push(j);
                let ok = select_square(&gram, &trial).cholesky().is_some_and(|ch| {
                    // reject columns (numerically) spanned by the active set
                    let l = ch.l();
                    let k = trial.len() - 1;
                    l[(k, k)].powi(2) > 1e-10 * gram[(j, j)]
                });
                if !ok {
                    excluded[j] = true;
                    continue;
                }
                active.push(j);
            }
        }
        just_dropped = false;
        if active.is_empty() {
            break;
        }

        let signs = DVector::from_iterator(active.len(), active.iter().map(|&j| c[j].signum()));
        let Some(ch) = select_square(&gram, &active).cholesky() else {
            break;
        };
        let q = ch.solve(&signs);
        let norm = 1.0 / signs.dot(&q).sqrt();
        let dir = q * norm;
        // a_j = z_jᵀ u for the equiangular vector u = Z_A dir
        let a = DVector::from_fn(p, |j, _| {
            active
                .iter()
                .zip(dir.iter())
                .map(|(&k, d)| gram[(j, k)] * d)
                .sum::<f64>()
        });

        let full_step = big_c / norm;
        let floor = 1e-12 * full_step;
        let mut gamma = full_step;
        if active.len() < max_active {
            for j in (0..p).filter(|&j| !excluded[j] && !active.contains(&j)) {
                for (num, den) in [(big_c - c[j], norm - a[j]), (big_c + c[j], norm + a[j])] {
                    if den > 1e-12 * norm {
                        let g = num / den;
                        if g > floor && g < gamma {
                            gamma = g;
                        }
                    }
                }
            }
        }
        let mut drop = None;
        if mode == LarsMode::Lasso {
            for (k, &j) in active.iter().enumerate() {
                if dir[k] != 0.0 {
                    let g = -beta[j] / dir[k];
                    if g > floor && g < gamma {
                        gamma = g;
                        drop = Some(k);
                    }
                }
            }
        }

        for (k, &j) in active.iter().enumerate() {
            beta[j] += gamma * dir[k];
        }
        if let Some(k) = drop {
            let j = active.remove(k);
            beta[j] = 0.0;
            just_dropped = true;
        }
        let reached_end = drop.is_none() && gamma == full_step;
        let new_c = if reached_end {
            0.0
        } else {
            (big_c - gamma * norm).max(0.0)
        };
        alphas.push(new_c / nf);
        coefs.push(beta.clone());
        if new_c == 0.0 {
            break;
        }
    }

    let models: Vec<LinearModel> = coefs
        .into_iter()
        .zip(&alphas)
        .map(|(w, &alpha)| design.model(w, alpha, 1.0))
        .collect();
    let objective_values = models
        .iter()
        .map(|m| {
            let w = DVector::from_vec(m.coefficients.clone());
            design.residual(&w).norm_squared() / (2.0 * nf) + m.alpha * w.lp_norm(1)
        })
        .collect();
    RegPath {
        mode,
        alphas,
        models,
        objective_values,
    }
}

/// LARS / LASSO-LARS path on z-scored features.
pub fn lars_path(x: &DMatrix<f64>, y: &DVector<f64>, mode: LarsMode) -> Result<RegPath> {
    Ok(lars_path_design(&Design::zscore(x, y)?, mode))
}

#[cfg(test)]
mod tests {
    use super::super::{fit_lasso, fit_ols};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = DVector::from_fn(n, |i, _| {
            (0..p).map(|j| beta[j] * x[(i, j)]).sum::<f64>() + rng.random_range(-0.5..0.5)
        });
        (x, y)
    }

    #[test]
    fn first_entry_is_most_correlated() {
        let (x, y) = problem(21, 30, 6);
        let path = lars_path(&x, &y, LarsMode::Lars).unwrap();
        let d = Design::zscore(&x, &y).unwrap();
        let corr = d.z().transpose() * d.y();
        let best = corr.iamax();
        let first = &path.models[1];
        assert_eq!(first.nonzero_count(), 1);
        assert!(first.coefficients[best] != 0.0);
        assert_eq!(path.models[0].nonzero_count(), 0);
    }

    #[test]
    fn lars_path_ends_at_ols() {
        for seed in 0..10 {
            let (x, y) = problem(seed, 30, 6);
            let path = lars_path(&x, &y, LarsMode::Lars).unwrap();
            let ols = fit_ols(&x, &y).unwrap();
            let end = path.models.last().unwrap();
            for (a, b) in end.coefficients.iter().zip(&ols.coefficients) {
                assert!((a - b).abs() < 1e-8, "seed {seed}: {a} vs {b}");
            }
            assert_eq!(*path.alphas.last().unwrap(), 0.0);
            assert!(path.alphas.windows(2).all(|w| w[0] > w[1]));
        }
    }

    #[test]
    fn lasso_mode_matches_coordinate_descent() {
        for seed in 0..8 {
            let (x, y) = problem(100 + seed, 30, 6);
            let path = lars_path(&x, &y, LarsMode::Lasso).unwrap();
            for (alpha, model) in path.alphas.iter().zip(&path.models) {
                let cd = fit_lasso(&x, &y, *alpha, 1e-12, 200_000).unwrap();
                for (a, b) in model.coefficients.iter().zip(&cd.coefficients) {
                    assert!(
                        (a - b).abs() < 1e-4,
                        "seed {seed} alpha {alpha}: {a} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn interpolation_between_breakpoints() {
        let (x, y) = problem(5, 25, 4);
        let path = lars_path(&x, &y, LarsMode::Lasso).unwrap();
        let mid = 0.5 * (path.alphas[1] + path.alphas[2]);
        let m = path.model_at(mid);
        for j in 0..4 {
            let expect = 0.5 * (path.models[1].coefficients[j] + path.models[2].coefficients[j]);
            assert!((m.coefficients[j] - expect).abs() < 1e-12);
        }
        assert_eq!(path.model_at(path.alphas[0] * 2.0).nonzero_count(), 0);
        let bottom = path.model_at(-1.0);
        assert_eq!(
            bottom.coefficients,
            path.models.last().unwrap().coefficients
        );
    }

    #[test]
    fn duplicate_column_is_skipped() {
        let (x, y) = problem(9, 20, 3);
        let dup = x.clone().insert_column(3, 0.0);
        let mut dup = dup;
        dup.set_column(3, &x.column(0).clone_owned());
        let path = lars_path(&dup, &y, LarsMode::Lars).unwrap();
        let end = path.models.last().unwrap();
        // one of the twins stays out
        assert!(end.coefficients[0] == 0.0 || end.coefficients[3] == 0.0);
        let pred = end.predict(&dup).unwrap();
        let ols = fit_ols(&dup, &y).unwrap().predict(&dup).unwrap();
        assert!((pred - ols).amax() < 1e-8);
    }
}
