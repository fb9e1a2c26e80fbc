//! Gibbs / Metropolis-Hastings sampler for the heteroscedastic spatial Durbin
//! panel model
//!
//! ```text
//! y = rho W y + X beta + W X theta + e,   e ~ N(0, sigma^2 V),  V = diag(v_it)
//! delta = (beta, theta) ~ N(c, C),  r / v_it ~ chi2(r),  sigma^2 ~ IG(a, b),  rho ~ U(-1, 1)
//! ```
//!
//! One sweep updates, in order: `delta | .` (normal), `sigma^2 | .`
//! (inverse gamma), `v | .` (scaled inverse chi-square) and `rho | .`
//! (random-walk Metropolis, truncated to (-1, 1)).

use std::path::Path;

use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, Dense};
use crate::logdet::{LogDetGrid, LogDetMethod, DEFAULT_GRID_POINTS};
use crate::panel::{csv_io, demean_stacked, PanelData};
use crate::scalar::{normal_cdf, Scalar};
use crate::weights::WeightMatrix;

/// Prior hyperparameters. `mean` and `cov` are for `delta = (beta, theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec<T> {
    pub mean: Vec<T>,
    pub cov: Dense<T>,
    /// Degrees of freedom of the chi-square prior on `r / v_it`.
    pub r: T,
    /// Inverse-gamma shape.
    pub a: T,
    /// Inverse-gamma scale.
    pub b: T,
}

impl<T: Scalar> PriorSpec<T> {
    /// Prior mean one, prior variance 0.001, `r = 5`, `a = b = 0`.
    pub fn default_for(q: usize) -> Self {
        Self::diagonal(2 * q, T::one(), T::lit(0.001))
    }

    /// Independent `N(mean, var)` on every coefficient, other settings default.
    pub fn diagonal(k: usize, mean: T, var: T) -> Self {
        Self {
            mean: vec![mean; k],
            cov: Dense::from_diagonal(&vec![var; k]),
            r: T::lit(5.0),
            a: T::zero(),
            b: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.mean.len();
        if self.cov.rows() != k || self.cov.cols() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: self.cov.rows(),
            });
        }
        let tol = T::lit(1e-12) * self.cov.diagonal().into_iter().fold(T::one(), T::max);
        if !self.cov.is_symmetric(tol) {
            return Err(Error::InvalidConfig("prior covariance is not symmetric".into()));
        }
        self.cov
            .cholesky()
            .map_err(|_| Error::InvalidConfig("prior covariance is not positive definite".into()))?;
        if !(self.r > T::zero()) {
            return Err(Error::InvalidConfig("r must be positive".into()));
        }
        if !(self.a >= T::zero()) || !(self.b >= T::zero()) {
            return Err(Error::InvalidConfig("a and b must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcConfig {
    /// Total iterations, burn-in included.
    pub ndraw: usize,
    pub nburn: usize,
    pub seed: u64,
    /// Initial random-walk step for rho.
    pub rho_step: f64,
    /// Acceptance-rate band the step is tuned toward during burn-in.
    pub adapt_target: (f64, f64),
    pub heteroscedastic: bool,
    pub logdet_points: usize,
    pub logdet_method: LogDetMethod,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            ndraw: 4000,
            nburn: 500,
            seed: 0,
            rho_step: 0.1,
            adapt_target: (0.4, 0.6),
            heteroscedastic: true,
            logdet_points: DEFAULT_GRID_POINTS,
            logdet_method: LogDetMethod::SparseLu,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nburn >= self.ndraw {
            return Err(Error::InvalidConfig(format!(
                "nburn ({}) must be smaller than ndraw ({})",
                self.nburn, self.ndraw
            )));
        }
        if !(self.rho_step > 0.0) {
            return Err(Error::InvalidConfig("rho_step must be positive".into()));
        }
        let (lo, hi) = self.adapt_target;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return Err(Error::InvalidConfig("adapt_target must satisfy 0 < lo <= hi < 1".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        self.ndraw - self.nburn
    }
}

/// Data block seen by the sampler: `y`, `Wy` and `Z = [X, WX]`, all stacked
/// NT-vectors / NT-row matrices.
#[derive(Debug, Clone)]
pub struct SdmProblem<T> {
    pub n: usize,
    pub t: usize,
    pub y: Vec<T>,
    pub wy: Vec<T>,
    pub z: Dense<T>,
    /// Observation count entering the sigma^2 conditional.
    pub n_obs: usize,
    pub weights_hash: String,
}

impl<T: Scalar> SdmProblem<T> {
    /// Builds the estimation block from a two-way demeaned panel. Lags are
    /// taken of the demeaned data and demeaned again, which equals the
    /// demeaned lag of the raw data when `w` is row-stochastic.
    pub fn from_panel(p: &PanelData<T>, w: &WeightMatrix<T>) -> Result<Self> {
        if !p.is_demeaned() {
            return Err(Error::NotDemeaned);
        }
        if w.n() != p.n() {
            return Err(Error::DimensionMismatch {
                expected: p.n(),
                got: w.n(),
            });
        }
        let (n, t, q) = (p.n(), p.t(), p.q());
        let wy = demean_stacked(&w.spatial_lag(p.y())?, n, t);
        let wx = w.spatial_lag_columns(p.x())?;
        let mut z = Dense::zeros(n * t, 2 * q);
        for k in 0..q {
            let xcol = p.x().column(k);
            let lag = demean_stacked(&wx.column(k), n, t);
            for r in 0..n * t {
                z[(r, k)] = xcol[r];
                z[(r, q + k)] = lag[r];
            }
        }
        Ok(Self {
            n,
            t,
            y: p.y().to_vec(),
            wy,
            z,
            n_obs: p.effective_observations(),
            weights_hash: w.content_hash(),
        })
    }

    /// Model without fixed effects: `Z = [X, WX]` on the raw data.
    pub fn without_fixed_effects(
        w: &WeightMatrix<T>,
        t: usize,
        y: Vec<T>,
        x: &Dense<T>,
    ) -> Result<Self> {
        let n = w.n();
        if y.len() != n * t || x.rows() != n * t {
            return Err(Error::DimensionMismatch {
                expected: n * t,
                got: y.len(),
            });
        }
        let q = x.cols();
        let wx = w.spatial_lag_columns(x)?;
        let z = Dense::from_fn(n * t, 2 * q, |r, c| if c < q { x[(r, c)] } else { wx[(r, c - q)] });
        Ok(Self {
            n,
            t,
            wy: w.spatial_lag(&y)?,
            y,
            z,
            n_obs: n * t,
            weights_hash: w.content_hash(),
        })
    }

    pub fn nt(&self) -> usize {
        self.y.len()
    }

    pub fn k(&self) -> usize {
        self.z.cols()
    }

    /// `(I - rho W) y`.
    pub fn ay(&self, rho: T) -> Vec<T> {
        self.y.iter().zip(&self.wy).map(|(&y, &wy)| y - rho * wy).collect()
    }

    /// `(I - rho W) y - Z delta`.
    pub fn residual(&self, rho: T, delta: &[T]) -> Vec<T> {
        let fit = self.z.mat_vec(delta);
        self.ay(rho)
            .into_iter()
            .zip(fit)
            .map(|(a, f)| a - f)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState<T> {
    pub delta: Vec<T>,
    pub sigma2: T,
    pub rho: T,
    pub v: Vec<T>,
    /// Cached `(I - rho W) y - Z delta`.
    pub resid: Vec<T>,
}

impl<T: Scalar> SamplerState<T> {
    /// Least-squares warm start at `rho = 0`, `v = 1`. Falls back to the prior
    /// mean when `Z'Z` is singular.
    pub fn initial(problem: &SdmProblem<T>, prior: &PriorSpec<T>) -> Self {
        let nt = problem.nt();
        let delta = problem
            .z
            .weighted_gram(None)
            .cholesky()
            .map(|ch| ch.solve(&problem.z.tr_mat_vec(&problem.y)))
            .ok()
            .filter(|d| d.iter().all(|x| x.is_finite()))
            .unwrap_or_else(|| prior.mean.clone());
        let resid = problem.residual(T::zero(), &delta);
        let ss = dot(&resid, &resid);
        let sigma2 = if ss > T::zero() {
            ss / T::count(problem.n_obs.max(1))
        } else {
            T::one()
        };
        Self {
            delta,
            sigma2,
            rho: T::zero(),
            v: vec![T::one(); nt],
            resid,
        }
    }

    pub fn refresh_residual(&mut self, problem: &SdmProblem<T>) {
        self.resid = problem.residual(self.rho, &self.delta);
    }
}

/// Mean and Cholesky factor of the precision of `delta | rho, sigma^2, v, y`.
pub fn delta_conditional<T: Scalar>(
    problem: &SdmProblem<T>,
    rho: T,
    sigma2: T,
    v: &[T],
    prior: &PriorSpec<T>,
) -> Result<(Vec<T>, crate::linalg::Cholesky<T>)> {
    let inv_v: Vec<T> = v.iter().map(|&x| T::one() / x).collect();
    let prior_prec = prior.cov.cholesky()?.inverse();
    let gram = problem.z.weighted_gram(Some(&inv_v)).scale(T::one() / sigma2);
    let precision = gram.add(&prior_prec);
    let ay = problem.ay(rho);
    let weighted: Vec<T> = ay.iter().zip(&inv_v).map(|(&a, &w)| a * w / sigma2).collect();
    let mut rhs = problem.z.tr_mat_vec(&weighted);
    for (r, p) in rhs.iter_mut().zip(prior_prec.mat_vec(&prior.mean)) {
        *r += p;
    }
    let ch = precision.cholesky()?;
    Ok((ch.solve(&rhs), ch))
}

pub fn sample_delta<T: Scalar, R: Rng + ?Sized>(
    problem: &SdmProblem<T>,
    state: &SamplerState<T>,
    prior: &PriorSpec<T>,
    rng: &mut R,
) -> Result<Vec<T>> {
    let (mean, ch) = delta_conditional(problem, state.rho, state.sigma2, &state.v, prior)?;
    let z: Vec<T> = (0..mean.len()).map(|_| T::standard_normal(rng)).collect();
    // x = mean + L'^{-1} z has covariance (L L')^{-1}.
    let offset = ch.solve_upper(&z);
    Ok(mean.iter().zip(offset).map(|(&m, o)| m + o).collect())
}

/// Draws `sigma^2 ~ IG(a + n_obs/2, b + e'V^{-1}e/2)`.
pub fn sample_sigma2<T: Scalar, R: Rng + ?Sized>(
    resid: &[T],
    v: &[T],
    n_obs: usize,
    prior: &PriorSpec<T>,
    rng: &mut R,
) -> Result<T> {
    let ss: T = resid.iter().zip(v).map(|(&e, &v)| e * e / v).sum();
    let shape = prior.a + T::count(n_obs) / T::lit(2.0);
    let rate = prior.b + ss / T::lit(2.0);
    if !(rate > T::zero()) {
        return Err(Error::DegenerateResidual);
    }
    Ok(T::one() / T::gamma(shape, T::one() / rate, rng))
}

/// Draws every `v_it = (e_it^2 / sigma^2 + r) / q`, `q ~ chi2(r + 1)`.
pub fn sample_v<T: Scalar, R: Rng + ?Sized>(resid: &[T], sigma2: T, r: T, rng: &mut R) -> Vec<T> {
    let dof = r + T::one();
    resid
        .iter()
        .map(|&e| {
            let mut q = T::chi_squared(dof, rng);
            while q <= T::zero() {
                q = T::chi_squared(dof, rng);
            }
            (e * e / sigma2 + r) / q
        })
        .collect()
}

/// Sufficient statistics for `e(rho)' V^{-1} e(rho)` with `e(rho) = u - rho Wy`,
/// `u = y - Z delta`: the quadratic is `aa - 2 rho ab + rho^2 bb`.
#[derive(Debug, Clone, Copy)]
pub struct RhoQuadratic<T> {
    aa: T,
    ab: T,
    bb: T,
}

impl<T: Scalar> RhoQuadratic<T> {
    pub fn new(problem: &SdmProblem<T>, delta: &[T], v: &[T]) -> Self {
        let fit = problem.z.mat_vec(delta);
        let (mut aa, mut ab, mut bb) = (T::zero(), T::zero(), T::zero());
        for i in 0..problem.nt() {
            let u = problem.y[i] - fit[i];
            let wy = problem.wy[i];
            let iv = T::one() / v[i];
            aa += u * u * iv;
            ab += u * wy * iv;
            bb += wy * wy * iv;
        }
        Self { aa, ab, bb }
    }

    pub fn at(&self, rho: T) -> T {
        self.aa - T::lit(2.0) * rho * self.ab + rho * rho * self.bb
    }
}

/// Log full conditional of rho up to a constant:
/// `T ln|I - rho w| - e(rho)'V^{-1}e(rho) / (2 sigma^2)`.
pub fn rho_log_conditional<T: Scalar>(
    grid: &LogDetGrid<T>,
    periods: usize,
    quad: &RhoQuadratic<T>,
    sigma2: T,
    rho: T,
) -> Result<T> {
    Ok(grid.panel_logdet_at(rho, periods)? - quad.at(rho) / (T::lit(2.0) * sigma2))
}

/// Probability that `rho + step * N(0, 1)` lands in (-1, 1).
fn inside_mass(rho: f64, step: f64) -> f64 {
    normal_cdf((1.0 - rho) / step) - normal_cdf((-1.0 - rho) / step)
}

/// One random-walk Metropolis-Hastings update of rho. Proposals outside
/// (-1, 1) are redrawn; the acceptance ratio carries the resulting
/// normalizing-constant correction so the kernel stays reversible.
#[allow(clippy::too_many_arguments)]
pub fn sample_rho_mh<T: Scalar, R: Rng + ?Sized>(
    problem: &SdmProblem<T>,
    grid: &LogDetGrid<T>,
    delta: &[T],
    v: &[T],
    sigma2: T,
    rho: T,
    step: f64,
    rng: &mut R,
) -> Result<(T, bool)> {
    if grid.weights_hash() != problem.weights_hash {
        return Err(Error::GridMissing);
    }
    let proposal = loop {
        let cand = rho + T::lit(step) * T::standard_normal(rng);
        if cand.abs() < T::one() {
            break cand;
        }
    };
    let quad = RhoQuadratic::new(problem, delta, v);
    let accepted = rho_accept(grid, problem.t, &quad, sigma2, rho, proposal, step, rng)?;
    Ok(if accepted { (proposal, true) } else { (rho, false) })
}

/// Metropolis-Hastings accept/reject of `proposal` from `rho`, including the
/// truncated-proposal correction `Z(rho) / Z(proposal)`.
#[allow(clippy::too_many_arguments)]
pub fn rho_accept<T: Scalar, R: Rng + ?Sized>(
    grid: &LogDetGrid<T>,
    periods: usize,
    quad: &RhoQuadratic<T>,
    sigma2: T,
    rho: T,
    proposal: T,
    step: f64,
    rng: &mut R,
) -> Result<bool> {
    let current = rho_log_conditional(grid, periods, quad, sigma2, rho)?;
    let proposed = rho_log_conditional(grid, periods, quad, sigma2, proposal)?;
    let correction = T::lit(
        inside_mass(rho.to_f64_lossy(), step).ln() - inside_mass(proposal.to_f64_lossy(), step).ln(),
    );
    let log_ratio = proposed - current + correction;
    let u = T::unit_uniform(rng);
    Ok(log_ratio >= T::zero() || u.ln() < log_ratio)
}

/// One full sweep `delta -> sigma^2 -> v -> rho` in place. Returns whether
/// the rho proposal was accepted. With `heteroscedastic = false` the
/// variance scalars are left untouched.
pub fn sweep<T: Scalar, R: Rng + ?Sized>(
    problem: &SdmProblem<T>,
    grid: &LogDetGrid<T>,
    prior: &PriorSpec<T>,
    state: &mut SamplerState<T>,
    rho_step: f64,
    heteroscedastic: bool,
    rng: &mut R,
) -> Result<bool> {
    state.delta = sample_delta(problem, state, prior, rng)?;
    state.refresh_residual(problem);
    state.sigma2 = sample_sigma2(&state.resid, &state.v, problem.n_obs, prior, rng)?;
    if heteroscedastic {
        state.v = sample_v(&state.resid, state.sigma2, prior.r, rng);
    }
    let (rho, acc) = sample_rho_mh(
        problem,
        grid,
        &state.delta,
        &state.v,
        state.sigma2,
        state.rho,
        rho_step,
        rng,
    )?;
    if acc {
        state.rho = rho;
        state.refresh_residual(problem);
    }
    debug_assert!({
        let fresh = problem.residual(state.rho, &state.delta);
        fresh
            .iter()
            .zip(&state.resid)
            .all(|(a, b)| (*a - *b).abs() <= T::lit(1e-10) * (T::one() + a.abs()))
    });
    Ok(acc)
}

/// Retained posterior draws plus sampler metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcDraws<T> {
    /// Regressor names; coefficient `q` is `beta_q`, `Q + q` is `theta_q`.
    pub var_names: Vec<String>,
    /// `(ndraw - nburn) x 2Q`.
    pub delta: Dense<T>,
    pub rho: Vec<T>,
    pub sigma2: Vec<T>,
    /// Posterior mean of every `v_it`, stacked like the panel.
    pub v_mean: Vec<T>,
    /// Running rho acceptance rate after each iteration (burn-in included).
    pub rho_acceptance: Vec<T>,
    /// Random-walk step after burn-in tuning.
    pub rho_step: f64,
    pub config: McmcConfig,
    pub n: usize,
    pub t: usize,
    pub weights_hash: String,
}

impl<T: Scalar> McmcDraws<T> {
    pub fn q(&self) -> usize {
        self.var_names.len()
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    /// Acceptance rate over retained draws only.
    pub fn retained_acceptance(&self) -> T {
        let total = self.config.ndraw;
        let burn = self.config.nburn;
        let end = self.rho_acceptance[total - 1] * T::count(total);
        let start = if burn == 0 {
            T::zero()
        } else {
            self.rho_acceptance[burn - 1] * T::count(burn)
        };
        (end - start) / T::count(total - burn)
    }

    /// Labels in report order: `beta_1..beta_Q, theta_1..theta_Q, rho, sigma2`.
    pub fn parameter_labels(&self) -> Vec<String> {
        let mut out: Vec<String> = self.var_names.clone();
        out.extend(self.var_names.iter().map(|n| format!("W*{n}")));
        out.push("rho".into());
        out.push("sigma2".into());
        out
    }

    /// Every scalar chain in [`McmcDraws::parameter_labels`] order.
    pub fn parameter_chains(&self) -> Vec<Vec<T>> {
        let mut out: Vec<Vec<T>> = (0..self.delta.cols()).map(|c| self.delta.column(c)).collect();
        out.push(self.rho.clone());
        out.push(self.sigma2.clone());
        out
    }

    pub fn posterior_mean_delta(&self) -> Vec<T> {
        let n = T::count(self.len());
        (0..self.delta.cols())
            .map(|c| self.delta.column(c).into_iter().sum::<T>() / n)
            .collect()
    }
}

/// Runs the sampler on an already-built problem and grid. This is the
/// building block for [`run_chain`]; tests drive it directly on models
/// without fixed effects.
pub fn run_sampler<T: Scalar>(
    problem: &SdmProblem<T>,
    grid: &LogDetGrid<T>,
    prior: &PriorSpec<T>,
    cfg: &McmcConfig,
    var_names: Vec<String>,
) -> Result<McmcDraws<T>> {
    cfg.validate()?;
    prior.validate()?;
    if prior.mean.len() != problem.k() {
        return Err(Error::DimensionMismatch {
            expected: problem.k(),
            got: prior.mean.len(),
        });
    }
    if grid.weights_hash() != problem.weights_hash {
        return Err(Error::GridMissing);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = SamplerState::initial(problem, prior);
    let keep = cfg.retained();
    let k = problem.k();
    let nt = problem.nt();
    let mut delta_draws = Dense::zeros(keep, k);
    let mut rho_draws = Vec::with_capacity(keep);
    let mut sigma_draws = Vec::with_capacity(keep);
    let mut v_sum = vec![T::zero(); nt];
    let mut acceptance = Vec::with_capacity(cfg.ndraw);
    let mut accepted = 0usize;
    let mut log_step = cfg.rho_step.ln();
    let target = 0.5 * (cfg.adapt_target.0 + cfg.adapt_target.1);

    for iter in 0..cfg.ndraw {
        let step = log_step.exp();
        let acc = sweep(problem, grid, prior, &mut state, step, cfg.heteroscedastic, &mut rng)?;
        if acc {
            accepted += 1;
        }
        acceptance.push(T::count(accepted) / T::count(iter + 1));

        if iter < cfg.nburn {
            // Robbins-Monro on the log step toward the middle of the band.
            let gain = (iter as f64 + 1.0).powf(-0.6);
            let hit = if acc { 1.0 } else { 0.0 };
            log_step = (log_step + gain * (hit - target)).clamp((1e-4f64).ln(), 2f64.ln());
        } else {
            let row = iter - cfg.nburn;
            delta_draws.row_mut(row).copy_from_slice(&state.delta);
            rho_draws.push(state.rho);
            sigma_draws.push(state.sigma2);
            for (s, &v) in v_sum.iter_mut().zip(&state.v) {
                *s += v;
            }
        }
    }

    let keep_t = T::count(keep);
    Ok(McmcDraws {
        var_names,
        delta: delta_draws,
        rho: rho_draws,
        sigma2: sigma_draws,
        v_mean: v_sum.into_iter().map(|s| s / keep_t).collect(),
        rho_acceptance: acceptance,
        rho_step: log_step.exp(),
        config: cfg.clone(),
        n: problem.n,
        t: problem.t,
        weights_hash: problem.weights_hash.clone(),
    })
}

/// Estimates the model on a two-way demeaned panel, building the log-det grid
/// for `w` on the way.
pub fn run_chain<T: Scalar>(
    p: &PanelData<T>,
    w: &WeightMatrix<T>,
    prior: &PriorSpec<T>,
    cfg: &McmcConfig,
) -> Result<McmcDraws<T>> {
    let grid = LogDetGrid::build(w, cfg.logdet_points, cfg.logdet_method)?;
    run_chain_with_grid(p, w, &grid, prior, cfg)
}

pub fn run_chain_with_grid<T: Scalar>(
    p: &PanelData<T>,
    w: &WeightMatrix<T>,
    grid: &LogDetGrid<T>,
    prior: &PriorSpec<T>,
    cfg: &McmcConfig,
) -> Result<McmcDraws<T>> {
    let problem = SdmProblem::from_panel(p, w)?;
    run_sampler(&problem, grid, prior, cfg, p.var_names().to_vec())
}

// ---------------------------------------------------------------------------
// Draws files

const DRAWS_MAGIC: &str = "# sdm-draws v1";

impl McmcDraws<f64> {
    /// Writes retained draws, one column per scalar parameter, with metadata in
    /// leading `#` lines.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        text.push_str(DRAWS_MAGIC);
        text.push('\n');
        let c = &self.config;
        for (k, v) in [
            ("weights_hash", self.weights_hash.clone()),
            ("n", self.n.to_string()),
            ("t", self.t.to_string()),
            ("ndraw", c.ndraw.to_string()),
            ("nburn", c.nburn.to_string()),
            ("seed", c.seed.to_string()),
            ("rho_step_initial", format!("{:e}", c.rho_step)),
            ("rho_step_final", format!("{:e}", self.rho_step)),
            ("adapt_lo", format!("{:e}", c.adapt_target.0)),
            ("adapt_hi", format!("{:e}", c.adapt_target.1)),
            ("heteroscedastic", c.heteroscedastic.to_string()),
            ("logdet_points", c.logdet_points.to_string()),
            ("logdet_method", c.logdet_method.to_string()),
            ("rho_acceptance_retained", format!("{:e}", self.retained_acceptance())),
            ("rho_acceptance_burnin", {
                let b = c.nburn;
                if b == 0 {
                    "nan".to_string()
                } else {
                    format!("{:e}", self.rho_acceptance[b - 1])
                }
            }),
        ] {
            text.push_str(&format!("# {k}={v}\n"));
        }
        let mut wtr = csv::WriterBuilder::new().from_writer(Vec::new());
        let mut header: Vec<String> = self.var_names.iter().map(|n| format!("beta:{n}")).collect();
        header.extend(self.var_names.iter().map(|n| format!("theta:{n}")));
        header.push("rho".into());
        header.push("sigma2".into());
        wtr.write_record(&header).map_err(|e| csv_io(path, e))?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.delta.row(i).iter().map(|v| format!("{v:e}")).collect();
            rec.push(format!("{:e}", self.rho[i]));
            rec.push(format!("{:e}", self.sigma2[i]));
            wtr.write_record(&rec).map_err(|e| csv_io(path, e))?;
        }
        let body = wtr.into_inner().map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        text.push_str(&String::from_utf8_lossy(&body));
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Reads a draws file. The per-iteration acceptance trace is not stored, so
    /// it is reconstructed as flat at the recorded rates.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |m: String| Error::Format {
            path: path.to_path_buf(),
            message: m,
        };
        if !text.starts_with(DRAWS_MAGIC) {
            return Err(bad("not a draws file".into()));
        }
        let mut meta = std::collections::HashMap::new();
        for line in text.lines().skip(1).take_while(|l| l.starts_with('#')) {
            if let Some((k, v)) = line.trim_start_matches('#').trim().split_once('=') {
                meta.insert(k.to_owned(), v.to_owned());
            }
        }
        let get = |k: &str| meta.get(k).cloned().ok_or_else(|| bad(format!("missing `{k}`")));
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| bad(format!("bad `{k}`"))) };
        let int = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| bad(format!("bad `{k}`"))) };
        let config = McmcConfig {
            ndraw: int("ndraw")?,
            nburn: int("nburn")?,
            seed: get("seed")?.parse().map_err(|_| bad("bad `seed`".into()))?,
            rho_step: num("rho_step_initial")?,
            adapt_target: (num("adapt_lo")?, num("adapt_hi")?),
            heteroscedastic: get("heteroscedastic")? == "true",
            logdet_points: int("logdet_points")?,
            logdet_method: get("logdet_method")?.parse()?,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| csv_io(path, e))?
            .iter()
            .map(str::to_owned)
            .collect();
        let q = header.len().checked_sub(2).map(|c| c / 2).unwrap_or(0);
        if q == 0 || header.len() != 2 * q + 2 {
            return Err(bad("unexpected column layout".into()));
        }
        let var_names: Vec<String> = header[..q]
            .iter()
            .map(|h| h.trim_start_matches("beta:").to_owned())
            .collect();
        let mut rows = Vec::new();
        let (mut rho, mut sigma2) = (Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| csv_io(path, e))?;
            let vals: Vec<f64> = rec
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    s.parse::<f64>().map_err(|_| Error::NonNumericValue {
                        column: header[c].clone(),
                        line: line + 2,
                        value: s.to_owned(),
                    })
                })
                .collect::<Result<_>>()?;
            rows.extend_from_slice(&vals[..2 * q]);
            rho.push(vals[2 * q]);
            sigma2.push(vals[2 * q + 1]);
        }
        let keep = rho.len();
        let acc_b = num("rho_acceptance_burnin").unwrap_or(f64::NAN);
        let acc_r = num("rho_acceptance_retained")?;
        let mut acceptance = vec![if acc_b.is_finite() { acc_b } else { acc_r }; config.nburn];
        let burn_hits = acceptance.last().copied().unwrap_or(0.0) * config.nburn as f64;
        for i in 0..keep {
            let hits = burn_hits + acc_r * (i + 1) as f64;
            acceptance.push(hits / (config.nburn + i + 1) as f64);
        }
        Ok(Self {
            var_names,
            delta: Dense::from_row_major(keep, 2 * q, rows),
            rho,
            sigma2,
            v_mean: Vec::new(),
            rho_acceptance: acceptance,
            rho_step: num("rho_step_final")?,
            n: int("n")?,
            t: int("t")?,
            weights_hash: get("weights_hash")?,
            config,
        })
    }

    /// Writes `region_id, period, v_mean`.
    pub fn write_v_summary(&self, path: &Path, region_ids: &[String], period_ids: &[String]) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["region_id", "period", "v_mean"]).map_err(|e| csv_io(path, e))?;
        let n = region_ids.len();
        for (idx, v) in self.v_mean.iter().enumerate() {
            w.write_record(&[
                region_ids[idx % n].clone(),
                period_ids[idx / n].clone(),
                format!("{v:e}"),
            ])
            .map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
