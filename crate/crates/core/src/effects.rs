//! Direct, indirect and total impacts of the spatial Durbin model.
//!
//! For regressor q the N x N partial-derivative matrix is
//! `S_q = (I - rho w)^{-1} (beta_q I + theta_q w)`. The direct effect is the
//! mean of its diagonal, the indirect effect the mean off-diagonal row sum.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Dense;
use crate::logdet::DENSE_MAX_N;
use crate::mcmc::McmcDraws;
use crate::scalar::{normal_cdf, Scalar};
use crate::weights::WeightMatrix;

/// Truncation tolerance for the power-series path.
pub const SERIES_TOL: f64 = 1e-10;
/// Default number of simulated parameter vectors for inference.
pub const DEFAULT_IMPACT_DRAWS: usize = 1000;
pub const MIN_IMPACT_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectsMethod {
    /// Explicit inverse of `I - rho w`.
    Dense,
    /// `sum_j rho^j w^j` truncated at `m`; `None` picks the smallest `m`
    /// meeting [`SERIES_TOL`].
    Series(Option<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectsAtPoint<T> {
    pub direct: Vec<T>,
    pub indirect: Vec<T>,
    pub total: Vec<T>,
}

/// Smallest `m` with `|rho|^(m+1) / (1 - |rho|) * scale < tol`.
pub fn required_series_order(rho: f64, scale: f64, tol: f64) -> usize {
    let a = rho.abs();
    if a == 0.0 || scale == 0.0 {
        return 1;
    }
    // (m + 1) ln a < ln(tol (1 - a) / scale)
    let bound = (tol * (1.0 - a) / scale).ln() / a.ln();
    (bound.floor() as usize).max(1)
}

/// `tr(w^j)` for `j = 0..=m`, by repeated sparse products on blocks of unit
/// vectors.
pub fn trace_vector<T: Scalar>(w: &WeightMatrix<T>, m: usize) -> Vec<T> {
    const BLOCK: usize = 64;
    let n = w.n();
    let blocks: Vec<(usize, usize)> = (0..n).step_by(BLOCK).map(|s| (s, (s + BLOCK).min(n))).collect();
    let partial: Vec<Vec<T>> = blocks
        .par_iter()
        .map(|&(c0, c1)| {
            let b = c1 - c0;
            // Row-major N x b slab holding w^j [e_c0 .. e_c1).
            let mut x = vec![T::zero(); n * b];
            for c in c0..c1 {
                x[c * b + (c - c0)] = T::one();
            }
            let mut next = vec![T::zero(); n * b];
            let mut tr = vec![T::zero(); m + 1];
            tr[0] = T::count(b);
            for tj in tr.iter_mut().skip(1) {
                for i in 0..n {
                    let out = &mut next[i * b..(i + 1) * b];
                    out.iter_mut().for_each(|v| *v = T::zero());
                    for (k, wik) in w.row(i) {
                        let src = &x[k * b..(k + 1) * b];
                        for (o, s) in out.iter_mut().zip(src) {
                            *o += wik * *s;
                        }
                    }
                }
                std::mem::swap(&mut x, &mut next);
                *tj = (c0..c1).map(|c| x[c * b + (c - c0)]).sum();
            }
            tr
        })
        .collect();
    let mut out = vec![T::zero(); m + 1];
    for p in partial {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}

fn check_inputs<T: Scalar>(beta: &[T], theta: &[T], rho: T) -> Result<()> {
    if beta.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: beta.len(),
            got: theta.len(),
        });
    }
    if !(rho.abs() < T::one()) {
        return Err(Error::OutOfSupport(rho.to_f64_lossy()));
    }
    Ok(())
}

fn assemble<T: Scalar>(direct: Vec<T>, total: Vec<T>) -> EffectsAtPoint<T> {
    let indirect: Vec<T> = total.iter().zip(&direct).map(|(&t, &d)| t - d).collect();
    // Total is rebuilt from its parts so additivity holds exactly.
    let total = direct.iter().zip(&indirect).map(|(&d, &i)| d + i).collect();
    EffectsAtPoint {
        direct,
        indirect,
        total,
    }
}

pub fn effects_at<T: Scalar>(
    beta: &[T],
    theta: &[T],
    rho: T,
    w: &WeightMatrix<T>,
    method: EffectsMethod,
) -> Result<EffectsAtPoint<T>> {
    check_inputs(beta, theta, rho)?;
    match method {
        EffectsMethod::Dense => effects_dense(beta, theta, rho, w),
        EffectsMethod::Series(m) => {
            let scale = beta
                .iter()
                .zip(theta)
                .map(|(b, t)| (b.abs() + t.abs()).to_f64_lossy())
                .fold(0.0, f64::max);
            let need = required_series_order(rho.to_f64_lossy(), scale, SERIES_TOL);
            let m = match m {
                Some(m) if m < need => return Err(Error::SeriesNotConverged { required: need }),
                Some(m) => m,
                None => need,
            };
            let traces = trace_vector(w, m + 1);
            Ok(effects_from_traces(beta, theta, rho, &traces, m))
        }
    }
}

fn effects_dense<T: Scalar>(beta: &[T], theta: &[T], rho: T, w: &WeightMatrix<T>) -> Result<EffectsAtPoint<T>> {
    let n = w.n();
    if n > DENSE_MAX_N {
        return Err(Error::MethodTooLarge {
            method: "dense",
            max: DENSE_MAX_N,
            n,
        });
    }
    let wd = w.to_dense();
    let inv = Dense::identity(n).add(&wd.scale(-rho)).lu()?.inverse();
    let inv_w = inv.matmul(&wd);
    let nn = T::count(n);
    let (tr0, tr1) = (inv.trace(), inv_w.trace());
    let (s0, s1) = (inv.sum(), inv_w.sum());
    let direct = beta.iter().zip(theta).map(|(&b, &t)| (b * tr0 + t * tr1) / nn).collect();
    let total = beta.iter().zip(theta).map(|(&b, &t)| (b * s0 + t * s1) / nn).collect();
    Ok(assemble(direct, total))
}

/// Series path from precomputed traces (`traces.len() >= m + 2`). Row sums
/// use the row-stochastic identity `w^j 1 = 1`.
pub fn effects_from_traces<T: Scalar>(beta: &[T], theta: &[T], rho: T, traces: &[T], m: usize) -> EffectsAtPoint<T> {
    let n = traces[0];
    // a = sum_j rho^j tr(w^j) / N, b = sum_j rho^j tr(w^(j+1)) / N
    let (mut a, mut b, mut p) = (T::zero(), T::zero(), T::one());
    for j in 0..=m {
        a += p * traces[j];
        b += p * traces[j + 1];
        p *= rho;
    }
    let (a, b) = (a / n, b / n);
    let mult = T::one() / (T::one() - rho);
    let direct = beta.iter().zip(theta).map(|(&bq, &tq)| bq * a + tq * b).collect();
    let total = beta.iter().zip(theta).map(|(&bq, &tq)| (bq + tq) * mult).collect();
    assemble(direct, total)
}

/// Linear interpolation between order statistics (type 7). `sorted` must be
/// ascending and nonempty.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], p: f64) -> T {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = T::lit(h - lo as f64);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectStats {
    pub mean: f64,
    pub sd: f64,
    /// `mean / sd`; NaN when `sd = 0`.
    pub t_stat: f64,
    /// Two-sided normal tail probability of `t_stat`.
    pub p_value: f64,
    pub lower_05: f64,
    pub upper_95: f64,
}

impl EffectStats {
    pub fn from_draws<T: Scalar>(xs: &[T]) -> Self {
        let mut sorted: Vec<f64> = xs.iter().map(|x| x.to_f64_lossy()).collect();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        if sorted.first() == sorted.last() {
            // A constant sample: summing identical floats may drift from the
            // value in the last bit, so report it exactly.
            let x = sorted.first().copied().unwrap_or(f64::NAN);
            return Self {
                mean: x,
                sd: 0.0,
                t_stat: f64::NAN,
                p_value: f64::NAN,
                lower_05: x,
                upper_95: x,
            };
        }
        let mean = sorted.iter().sum::<f64>() / n;
        let var = sorted.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        let t_stat = mean / sd;
        let p_value = 2.0 * normal_cdf(-t_stat.abs());
        let lower_05 = quantile_sorted(&sorted, 0.05);
        let upper_95 = quantile_sorted(&sorted, 0.95);
        Self {
            mean,
            sd,
            t_stat,
            p_value,
            lower_05,
            upper_95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImpactMode {
    /// Normal draws of (beta, theta) from the posterior mean and covariance.
    NormalApprox,
    /// Joint resampling of retained MCMC draws.
    Resample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoSource {
    /// rho taken from (resampled) posterior draws.
    Draws,
    /// rho fixed at its posterior mean.
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpactOptions {
    pub ndraws: usize,
    pub seed: u64,
    pub mode: ImpactMode,
    pub rho_source: RhoSource,
}

impl Default for ImpactOptions {
    fn default() -> Self {
        Self {
            ndraws: DEFAULT_IMPACT_DRAWS,
            seed: 0,
            mode: ImpactMode::NormalApprox,
            rho_source: RhoSource::Draws,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableImpacts {
    pub name: String,
    pub direct: EffectStats,
    pub indirect: EffectStats,
    pub total: EffectStats,
    /// `(beta_q + theta_q) / (1 - rho)` summarized over the raw MCMC draws;
    /// a cross-check of `total` that needs no simulation.
    pub total_from_coefficients: Option<EffectStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpactSummary {
    pub variables: Vec<VariableImpacts>,
    pub ndraws: usize,
    pub mode: ImpactMode,
    pub rho_source: RhoSource,
    /// Largest |direct + indirect - total| over all draws and variables.
    pub max_additivity_error: f64,
}

/// Symmetric square root via eigen-decomposition; tolerates singular
/// (e.g. all-zero) covariance matrices.
fn psd_sqrt<T: Scalar>(cov: &Dense<T>) -> Dense<T> {
    let eig = cov.symmetric_eigen();
    let k = cov.rows();
    Dense::from_fn(k, k, |i, j| eig.vectors[(i, j)] * eig.values[j].max(T::zero()).sqrt())
}

/// Per-draw effects computed from a shared trace vector.
struct Evaluator<T> {
    traces: Vec<T>,
    m: usize,
}

impl<T: Scalar> Evaluator<T> {
    fn new(w: &WeightMatrix<T>, max_abs_rho: f64, scale: f64) -> Result<Self> {
        if !(max_abs_rho < 1.0) {
            return Err(Error::OutOfSupport(max_abs_rho));
        }
        let m = required_series_order(max_abs_rho, scale.max(1e-300), SERIES_TOL);
        Ok(Self {
            traces: trace_vector(w, m + 1),
            m,
        })
    }

    fn eval(&self, beta: &[T], theta: &[T], rho: T) -> EffectsAtPoint<T> {
        effects_from_traces(beta, theta, rho, &self.traces, self.m)
    }
}

fn summarize<T: Scalar>(
    names: &[String],
    sims: &[EffectsAtPoint<T>],
    opts: &ImpactOptions,
    coefficient_totals: Option<Vec<Vec<T>>>,
) -> ImpactSummary {
    let q = names.len();
    let mut max_err = 0.0f64;
    for s in sims {
        for j in 0..q {
            let e = (s.direct[j] + s.indirect[j] - s.total[j]).abs().to_f64_lossy();
            max_err = max_err.max(e);
        }
    }
    let variables = (0..q)
        .map(|j| {
            let col = |f: fn(&EffectsAtPoint<T>) -> &Vec<T>| sims.iter().map(|s| f(s)[j]).collect::<Vec<T>>();
            VariableImpacts {
                name: names[j].clone(),
                direct: EffectStats::from_draws(&col(|s| &s.direct)),
                indirect: EffectStats::from_draws(&col(|s| &s.indirect)),
                total: EffectStats::from_draws(&col(|s| &s.total)),
                total_from_coefficients: coefficient_totals.as_ref().map(|c| EffectStats::from_draws(&c[j])),
            }
        })
        .collect();
    ImpactSummary {
        variables,
        ndraws: sims.len(),
        mode: opts.mode,
        rho_source: opts.rho_source,
        max_additivity_error: max_err,
    }
}

fn draw_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Simulation inference from a normal approximation.
///
/// With `mean.len() == 2Q` the normal covers (beta, theta) and rho is
/// resampled from `rho_values` per draw (a single value holds it fixed).
/// With `mean.len() == 2Q + 1` the last component is rho, drawn jointly with
/// the coefficients (redrawn until it lies in (-1, 1)); `rho_values` is then
/// ignored.
pub fn impact_inference_from_moments<T: Scalar>(
    names: &[String],
    mean: &[T],
    cov: &Dense<T>,
    rho_values: &[T],
    w: &WeightMatrix<T>,
    opts: &ImpactOptions,
) -> Result<ImpactSummary> {
    if opts.ndraws < MIN_IMPACT_DRAWS {
        return Err(Error::InsufficientDraws {
            min: MIN_IMPACT_DRAWS,
            got: opts.ndraws,
        });
    }
    let q = names.len();
    let dim = mean.len();
    let joint = dim == 2 * q + 1;
    if !(joint || dim == 2 * q) || cov.rows() != dim || cov.cols() != dim || (!joint && rho_values.is_empty()) {
        return Err(Error::DimensionMismatch {
            expected: 2 * q,
            got: dim,
        });
    }
    let root = psd_sqrt(cov);
    let params: Vec<(Vec<T>, T)> = (0..opts.ndraws)
        .into_par_iter()
        .map(|d| {
            let mut rng = draw_rng(opts.seed, d);
            for _ in 0..10_000 {
                let z: Vec<T> = (0..dim).map(|_| T::standard_normal(&mut rng)).collect();
                let mut x: Vec<T> = (0..dim)
                    .map(|i| mean[i] + (0..dim).map(|j| root[(i, j)] * z[j]).sum::<T>())
                    .collect();
                let rho = if joint {
                    x.pop().expect("joint draw has a rho component")
                } else if rho_values.len() == 1 {
                    rho_values[0]
                } else {
                    rho_values[rand::Rng::random_range(&mut rng, 0..rho_values.len())]
                };
                if rho.abs() < T::one() {
                    return Ok((x, rho));
                }
            }
            Err(Error::OutOfSupport(mean[dim - 1].to_f64_lossy()))
        })
        .collect::<Result<_>>()?;
    let sims = evaluate(w, &params, q)?;
    Ok(summarize(names, &sims, opts, None))
}

fn evaluate<T: Scalar>(w: &WeightMatrix<T>, params: &[(Vec<T>, T)], q: usize) -> Result<Vec<EffectsAtPoint<T>>> {
    let scale = params
        .iter()
        .flat_map(|(d, _)| (0..q).map(move |j| (d[j].abs() + d[q + j].abs()).to_f64_lossy()))
        .fold(0.0, f64::max);
    let max_rho = params.iter().map(|(_, r)| r.abs().to_f64_lossy()).fold(0.0, f64::max);
    let eval = Evaluator::new(w, max_rho, scale)?;
    Ok(params
        .par_iter()
        .map(|(d, rho)| eval.eval(&d[..q], &d[q..], *rho))
        .collect())
}

/// Simulation inference from retained MCMC draws.
pub fn impact_inference<T: Scalar>(draws: &McmcDraws<T>, w: &WeightMatrix<T>, opts: &ImpactOptions) -> Result<ImpactSummary> {
    if w.n() != draws.n {
        return Err(Error::DimensionMismatch {
            expected: draws.n,
            got: w.n(),
        });
    }
    let len = draws.len();
    if len == 0 {
        return Err(Error::InsufficientDraws {
            min: MIN_IMPACT_DRAWS,
            got: 0,
        });
    }
    let q = draws.q();
    let k = 2 * q;
    let rho_mean = draws.rho.iter().copied().sum::<T>() / T::count(len);
    let coefficient_totals: Vec<Vec<T>> = (0..q)
        .map(|j| {
            (0..len)
                .map(|i| (draws.delta[(i, j)] + draws.delta[(i, q + j)]) / (T::one() - draws.rho[i]))
                .collect()
        })
        .collect();
    let mut summary = match opts.mode {
        ImpactMode::NormalApprox => {
            // Under `RhoSource::Draws` rho joins the normal approximation so
            // its posterior correlation with beta + theta is kept; drawing it
            // independently overstates the spread of the total effect.
            let joint = opts.rho_source == RhoSource::Draws;
            let dim = if joint { k + 1 } else { k };
            let column = |c: usize| -> Vec<T> {
                if c < k {
                    draws.delta.column(c)
                } else {
                    draws.rho.clone()
                }
            };
            let cols: Vec<Vec<T>> = (0..dim).map(column).collect();
            let mean: Vec<T> = cols.iter().map(|c| c.iter().copied().sum::<T>() / T::count(len)).collect();
            let nm1 = T::count(len.saturating_sub(1).max(1));
            let cov = Dense::from_fn(dim, dim, |a, b| {
                cols[a]
                    .iter()
                    .zip(&cols[b])
                    .map(|(&x, &y)| (x - mean[a]) * (y - mean[b]))
                    .sum::<T>()
                    / nm1
            });
            impact_inference_from_moments(&draws.var_names, &mean, &cov, &[rho_mean], w, opts)?
        }
        ImpactMode::Resample => {
            if opts.ndraws < MIN_IMPACT_DRAWS {
                return Err(Error::InsufficientDraws {
                    min: MIN_IMPACT_DRAWS,
                    got: opts.ndraws,
                });
            }
            let params: Vec<(Vec<T>, T)> = (0..opts.ndraws)
                .into_par_iter()
                .map(|d| {
                    let mut rng = draw_rng(opts.seed, d);
                    let i = rand::Rng::random_range(&mut rng, 0..len);
                    let rho = match opts.rho_source {
                        RhoSource::Draws => draws.rho[i],
                        RhoSource::Fixed => rho_mean,
                    };
                    (draws.delta.row(i).to_vec(), rho)
                })
                .collect();
            summarize(&draws.var_names, &evaluate(w, &params, q)?, opts, None)
        }
    };
    for (v, totals) in summary.variables.iter_mut().zip(&coefficient_totals) {
        v.total_from_coefficients = Some(EffectStats::from_draws(totals));
    }
    Ok(summary)
}
