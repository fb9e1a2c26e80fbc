//! Single-chain convergence diagnostics: Geweke mean comparison, integrated
//! autocorrelation time and effective sample size.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mcmc::McmcDraws;
use crate::scalar::{normal_cdf, Scalar};

/// Shortest chain any diagnostic accepts.
pub const MIN_CHAIN_LEN: usize = 100;
pub const DEFAULT_FRAC_FIRST: f64 = 0.1;
pub const DEFAULT_FRAC_LAST: f64 = 0.9;
/// Bartlett truncation lag as a fraction of the segment length.
pub const SPECTRAL_LAG_FRAC: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geweke<T> {
    pub z: T,
    /// `2 Phi(|z|) - 1`: the probability mass of `(-|z|, |z|)`.
    pub p: T,
    /// Conventional two-sided tail probability `2 (1 - Phi(|z|))`.
    pub p_two_sided: T,
}

fn check_len(n: usize) -> Result<()> {
    if n < MIN_CHAIN_LEN {
        return Err(Error::ChainTooShort {
            min: MIN_CHAIN_LEN,
            got: n,
        });
    }
    Ok(())
}

fn is_constant<T: Scalar>(x: &[T]) -> bool {
    x.iter().all(|&v| v == x[0])
}

fn mean<T: Scalar>(x: &[T]) -> T {
    x.iter().copied().sum::<T>() / T::count(x.len())
}

/// Biased autocovariance at `lag` around `m`.
fn autocov<T: Scalar>(x: &[T], m: T, lag: usize) -> T {
    let n = x.len();
    let s: T = x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(&a, &b)| (a - m) * (b - m))
        .sum();
    s / T::count(n)
}

/// Spectral density at frequency zero with Bartlett weights `1 - j/(L+1)`
/// and `L = max(1, round(0.04 n))`.
pub fn spectral_variance_at_zero<T: Scalar>(x: &[T]) -> Result<T> {
    if x.len() < 2 || is_constant(x) {
        return Err(Error::ZeroVariance);
    }
    let n = x.len();
    let lag = ((SPECTRAL_LAG_FRAC * n as f64).round() as usize).clamp(1, n - 1);
    let m = mean(x);
    let mut s = autocov(x, m, 0);
    for j in 1..=lag {
        let w = T::one() - T::count(j) / T::count(lag + 1);
        s += T::lit(2.0) * w * autocov(x, m, j);
    }
    if !(s > T::zero()) || !s.is_finite() {
        return Err(Error::ZeroVariance);
    }
    Ok(s)
}

/// Probability pair for a Geweke score.
pub fn geweke_probabilities(z: f64) -> (f64, f64) {
    let c = normal_cdf(z.abs());
    (2.0 * c - 1.0, 2.0 * (1.0 - c))
}

/// Compares the mean of the first `frac_first` of the chain with the mean of
/// the last `frac_last`. The segments may overlap.
pub fn geweke<T: Scalar>(chain: &[T], frac_first: f64, frac_last: f64) -> Result<Geweke<T>> {
    check_len(chain.len())?;
    for f in [frac_first, frac_last] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::InvalidConfig(format!("Geweke fraction {f} outside (0, 1)")));
        }
    }
    let n = chain.len();
    let n1 = ((frac_first * n as f64).floor() as usize).max(2);
    let n2 = ((frac_last * n as f64).floor() as usize).max(2);
    let first = &chain[..n1];
    let last = &chain[n - n2..];
    let s1 = spectral_variance_at_zero(first)?;
    let s2 = spectral_variance_at_zero(last)?;
    let z = (mean(first) - mean(last)) / (s1 / T::count(n1) + s2 / T::count(n2)).sqrt();
    let (p, p2) = geweke_probabilities(z.to_f64_lossy());
    Ok(Geweke {
        z,
        p: T::lit(p),
        p_two_sided: T::lit(p2),
    })
}

/// Integrated autocorrelation time by Geyer's initial monotone positive
/// sequence, and `ess = n / max(tau, 1)`.
pub fn ess<T: Scalar>(chain: &[T]) -> Result<(T, T)> {
    check_len(chain.len())?;
    if is_constant(chain) {
        return Err(Error::ZeroVariance);
    }
    let n = chain.len();
    let m = mean(chain);
    let g0 = autocov(chain, m, 0);
    if !(g0 > T::zero()) {
        return Err(Error::ZeroVariance);
    }
    let mut sum = T::zero();
    let mut prev = T::infinity();
    let mut k = 0;
    while k + 1 < n {
        let pair = (autocov(chain, m, k) + autocov(chain, m, k + 1)) / g0;
        if !(pair > T::zero()) {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        k += 2;
    }
    let tau = T::lit(2.0) * sum - T::one();
    let ess = T::count(n) / tau.max(T::one());
    Ok((tau, ess))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRow<T> {
    pub label: String,
    pub mean: T,
    pub sd: T,
    pub mc_error: T,
    pub tau: T,
    pub ess: T,
    pub geweke_z: T,
    pub geweke_p: T,
    pub geweke_p_two_sided: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport<T> {
    pub rows: Vec<DiagnosticsRow<T>>,
    pub draws: usize,
    pub frac_first: f64,
    pub frac_last: f64,
}

pub fn diagnose_chain<T: Scalar>(label: &str, chain: &[T], frac_first: f64, frac_last: f64) -> Result<DiagnosticsRow<T>> {
    check_len(chain.len())?;
    let n = chain.len();
    let m = mean(chain);
    let var = chain.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::count(n - 1);
    let sd = var.sqrt();
    let (tau, ess) = ess(chain)?;
    let g = geweke(chain, frac_first, frac_last)?;
    Ok(DiagnosticsRow {
        label: label.to_string(),
        mean: m,
        sd,
        mc_error: sd / ess.sqrt(),
        tau,
        ess,
        geweke_z: g.z,
        geweke_p: g.p,
        geweke_p_two_sided: g.p_two_sided,
    })
}

/// One row per scalar parameter, ordered `beta`, `theta`, `rho`, `sigma2`.
pub fn diagnostics_report<T: Scalar>(draws: &McmcDraws<T>, frac_first: f64, frac_last: f64) -> Result<DiagnosticsReport<T>> {
    check_len(draws.len())?;
    let labels = draws.parameter_labels();
    let chains = draws.parameter_chains();
    let rows = labels
        .par_iter()
        .zip(chains.par_iter())
        .map(|(l, c)| diagnose_chain(l, c, frac_first, frac_last))
        .collect::<Result<Vec<_>>>()?;
    Ok(DiagnosticsReport {
        rows,
        draws: draws.len(),
        frac_first,
        frac_last,
    })
}
