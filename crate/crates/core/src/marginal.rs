//! Log-marginal likelihoods and posterior model probabilities for choosing
//! the neighbour count of a k-NN weight matrix.
//!
//! The score uses the homoscedastic model (`v = 1`). The coefficient vector is
//! integrated analytically under its `N(c, C)` prior; sigma^2 is integrated
//! numerically in `ln sigma^2` for every rho node, and rho by trapezoid
//! quadrature over the log-det grid under the uniform prior on (-1, 1).
//!
//! With `C = L L'` and `L'Z'Z L = U diag(lambda) U'`, the coefficient-integrated
//! log likelihood at `(rho, s2)` is
//!
//! ```text
//! T ln|I - rho w| - n/2 ln(2 pi s2) - 1/2 sum ln(1 + lambda_k / s2)
//!     - [r'r - sum g_k^2 / (s2 + lambda_k)] / (2 s2)
//! ```
//!
//! where `r = (I - rho W) y - Z c` and `g = U' L' Z' r`; both are affine in rho.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::logdet::{LogDetGrid, LogDetMethod};
use crate::mcmc::{PriorSpec, SdmProblem};
use crate::panel::PanelData;
use crate::scalar::{log_sum_exp, Scalar};
use crate::weights::{KnnOptions, WeightMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelScore {
    pub k: usize,
    pub log_marginal: f64,
    pub posterior_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Sorted by k.
    pub scores: Vec<ModelScore>,
    pub best_k: usize,
}

impl Selection {
    pub fn best(&self) -> &ModelScore {
        self.scores.iter().find(|s| s.k == self.best_k).expect("best k is among the scores")
    }
}

/// Rho-dependent pieces of the integrand, precomputed once per problem.
struct Integrand {
    n: f64,
    periods: f64,
    lambda: Vec<f64>,
    // r(rho)'r(rho) = rr0 - 2 rho rr1 + rho^2 rr2
    rr: [f64; 3],
    // g(rho) = g0 - rho g1
    g0: Vec<f64>,
    g1: Vec<f64>,
    a: f64,
    b: f64,
    log_prior_const: f64,
}

impl Integrand {
    fn new<T: Scalar>(problem: &SdmProblem<T>, prior: &PriorSpec<T>) -> Result<Self> {
        let k = problem.k();
        let to64 = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<f64>>();
        let zc = problem.z.mat_vec(&prior.mean);
        let u: Vec<T> = problem.y.iter().zip(&zc).map(|(&y, &f)| y - f).collect();
        let wy = &problem.wy;
        let rr = [
            dot(&u, &u).to_f64_lossy(),
            dot(&u, wy).to_f64_lossy(),
            dot(wy, wy).to_f64_lossy(),
        ];
        let chol = prior.cov.cholesky()?;
        let l = chol.factor();
        let ztz = problem.z.weighted_gram(None);
        let m = l.transpose().matmul(&ztz).matmul(l);
        let eig = m.symmetric_eigen();
        let project = |x: &[T]| -> Vec<f64> {
            // U' L' Z' x
            let ltz = l.transpose().mat_vec(&problem.z.tr_mat_vec(x));
            (0..k)
                .map(|j| (0..k).map(|i| eig.vectors[(i, j)] * ltz[i]).sum::<T>().to_f64_lossy())
                .collect()
        };
        let (a, b) = (prior.a.to_f64_lossy(), prior.b.to_f64_lossy());
        let log_prior_const = if a > 0.0 && b > 0.0 {
            a * b.ln() - libm::lgamma(a)
        } else {
            0.0
        };
        Ok(Self {
            n: problem.n_obs as f64,
            periods: problem.t as f64,
            lambda: to64(&eig.values).into_iter().map(|l| l.max(0.0)).collect(),
            rr,
            g0: project(&u),
            g1: project(wy),
            a,
            b,
            log_prior_const,
        })
    }

    /// Log of (coefficient-integrated likelihood x sigma^2 prior x d sigma^2 / d s)
    /// at `s = ln sigma^2`, without the log-determinant term.
    fn log_density_s(&self, rr: f64, g: &[f64], s: f64) -> f64 {
        let s2 = s.exp();
        let mut logdet = 0.0;
        let mut shrink = 0.0;
        for (l, gk) in self.lambda.iter().zip(g) {
            logdet += (l / s2).ln_1p();
            shrink += gk * gk / (s2 + l);
        }
        let quad = (rr - shrink).max(0.0);
        let loglik = -0.5 * self.n * ((2.0 * std::f64::consts::PI).ln() + s) - 0.5 * logdet - quad / (2.0 * s2);
        let log_prior = self.log_prior_const - (self.a + 1.0) * s - self.b / s2;
        loglik + log_prior + s
    }

    /// `ln of integral over sigma^2` at fixed rho.
    fn integrate_sigma2(&self, rho: f64) -> f64 {
        let rr = self.rr[0] - 2.0 * rho * self.rr[1] + rho * rho * self.rr[2];
        let g: Vec<f64> = self.g0.iter().zip(&self.g1).map(|(a, b)| a - rho * b).collect();
        let f = |s: f64| self.log_density_s(rr, &g, s);

        // Bracket: the quadratic form lies between the least-squares residual
        // (s2 -> 0) and r'r (s2 -> inf).
        let floor = g
            .iter()
            .zip(&self.lambda)
            .filter(|(_, l)| **l > 0.0)
            .fold(rr, |q, (gk, l)| q - gk * gk / l);
        let scale = rr.max(f64::MIN_POSITIVE);
        let lo = (floor.max(1e-12 * scale) + 2.0 * self.b).ln() - (self.n + 2.0 * self.a + 2.0).ln() - 2.0;
        let hi = (rr + 2.0 * self.b).max(f64::MIN_POSITIVE).ln() - self.n.max(1.0).ln() + 2.0;
        let mode = golden_max(&f, lo.min(hi - 1.0), hi, 1e-9);
        let fmax = f(mode);
        let h2 = 1e-3;
        let curv = (f(mode + h2) - 2.0 * fmax + f(mode - h2)) / (h2 * h2);
        let sd = if curv < 0.0 { (-1.0 / curv).sqrt() } else { 0.1 };
        let step = (sd / 12.0).max(1e-6);
        let mut terms = vec![fmax];
        for dir in [-1.0, 1.0] {
            for i in 1..=20_000 {
                let v = f(mode + dir * step * i as f64);
                terms.push(v);
                if !(v > fmax - 40.0) {
                    break;
                }
            }
        }
        // Trapezoid on a uniform mesh; the end points are negligible, so the
        // sum equals the rectangle rule up to ~e^-40.
        log_sum_exp(&terms) + step.ln()
    }
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Log-marginal likelihood of a prepared estimation problem.
pub fn log_marginal_for_problem<T: Scalar>(
    problem: &SdmProblem<T>,
    grid: &LogDetGrid<T>,
    prior: &PriorSpec<T>,
) -> Result<f64> {
    if grid.weights_hash() != problem.weights_hash {
        return Err(Error::GridMissing);
    }
    prior.validate()?;
    let integrand = Integrand::new(problem, prior)?;
    let rho: Vec<f64> = grid.rho().iter().map(|r| r.to_f64_lossy()).collect();
    let logdet: Vec<f64> = grid.values().iter().map(|v| v.to_f64_lossy()).collect();
    let log_f: Vec<f64> = rho
        .iter()
        .zip(&logdet)
        .map(|(&r, &ld)| integrand.periods * ld + integrand.integrate_sigma2(r))
        .collect();
    // Composite trapezoid in rho with the U(-1, 1) prior density 1/2.
    let m = rho.len();
    let terms: Vec<f64> = (0..m)
        .map(|i| {
            let left = if i > 0 { rho[i] - rho[i - 1] } else { 0.0 };
            let right = if i + 1 < m { rho[i + 1] - rho[i] } else { 0.0 };
            log_f[i] + (0.25 * (left + right)).ln()
        })
        .collect();
    let out = log_sum_exp(&terms);
    if out.is_finite() {
        Ok(out)
    } else {
        Err(Error::QuadratureUnderflow)
    }
}

/// Log-marginal likelihood of the model with weights `w` for a demeaned panel.
pub fn log_marginal_likelihood<T: Scalar>(
    p: &PanelData<T>,
    w: &WeightMatrix<T>,
    grid: &LogDetGrid<T>,
    prior: &PriorSpec<T>,
) -> Result<f64> {
    log_marginal_for_problem(&SdmProblem::from_panel(p, w)?, grid, prior)
}

/// Normalized `exp(s_j - max)`. Non-finite scores get probability zero.
pub fn posterior_model_probs(scores: &[f64]) -> Result<Vec<f64>> {
    let max = scores
        .iter()
        .copied()
        .filter(|s| s.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::AllInfinite);
    }
    let w: Vec<f64> = scores
        .iter()
        .map(|&s| if s.is_finite() { (s - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

#[derive(Debug, Clone)]
pub struct SelectOptions {
    pub grid_points: usize,
    pub method: LogDetMethod,
    pub knn: KnnOptions,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            grid_points: crate::logdet::DEFAULT_GRID_POINTS,
            method: LogDetMethod::SparseLu,
            knn: KnnOptions::default(),
        }
    }
}

/// Scores every `k` in `ks` with its own k-NN matrix and log-det grid.
pub fn select_k<T: Scalar>(
    coords: &[[T; 2]],
    p: &PanelData<T>,
    ks: impl IntoIterator<Item = usize>,
    prior: &PriorSpec<T>,
    opts: &SelectOptions,
) -> Result<Selection> {
    let mut ks: Vec<usize> = ks.into_iter().collect();
    ks.sort_unstable();
    ks.dedup();
    let n = p.n();
    if ks.is_empty() || ks[0] == 0 || *ks.last().unwrap() >= n {
        return Err(Error::InvalidConfig(format!("k range must lie within [1, {}]", n.saturating_sub(1))));
    }
    let scores: Vec<f64> = ks
        .par_iter()
        .map(|&k| {
            let w = WeightMatrix::knn(coords, k, &opts.knn)?;
            let grid = LogDetGrid::build(&w, opts.grid_points, opts.method)?;
            log_marginal_likelihood(p, &w, &grid, prior)
        })
        .collect::<Result<_>>()?;
    let probs = posterior_model_probs(&scores)?;
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    Ok(Selection {
        best_k: ks[best],
        scores: ks
            .into_iter()
            .zip(scores)
            .zip(probs)
            .map(|((k, log_marginal), posterior_prob)| ModelScore {
                k,
                log_marginal,
                posterior_prob,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_closed_forms() {
        assert_eq!(posterior_model_probs(&[-12.5]).unwrap(), vec![1.0]);
        assert_eq!(posterior_model_probs(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let p = posterior_model_probs(&[0.0, 3f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        assert!(matches!(
            posterior_model_probs(&[f64::NEG_INFINITY, f64::NAN]),
            Err(Error::AllInfinite)
        ));
        let p = posterior_model_probs(&[f64::NEG_INFINITY, 2.0]).unwrap();
        assert_eq!(p, vec![0.0, 1.0]);
    }

    #[test]
    fn probabilities_are_shift_invariant() {
        let s = [-1000.2, -1001.7, -998.4, -1003.0];
        let p = posterior_model_probs(&s).unwrap();
        let shifted: Vec<f64> = s.iter().map(|x| x + 777.3).collect();
        let q = posterior_model_probs(&shifted).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
        // Monotone in the score.
        assert!(p[2] > p[0] && p[0] > p[1] && p[1] > p[3]);
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let m = golden_max(&|x: f64| -(x - 1.3).powi(2), -5.0, 5.0, 1e-10);
        assert!((m - 1.3).abs() < 1e-8);
    }
}
