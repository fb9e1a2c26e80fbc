//! Tabulated `ln|I_N - rho w|` over a dense rho grid.
//!
//! The Metropolis step for rho and the marginal-likelihood quadrature evaluate
//! the log-determinant thousands of times, so it is computed once per grid node
//! and interpolated in between. The panel log-determinant is `T` times the
//! value stored here.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Dense;
use crate::scalar::Scalar;
use crate::weights::WeightMatrix;

pub const DEFAULT_GRID_POINTS: usize = 2001;
pub const MIN_GRID_POINTS: usize = 51;
/// Grid end points; rho is supported on the open interval (-1, 1).
pub const GRID_BOUND: f64 = 0.999;
/// Largest N for the dense and eigenvalue methods.
pub const DENSE_MAX_N: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogDetMethod {
    /// Dense LU factorization per grid node.
    Dense,
    /// Banded LU on a bandwidth-reducing reordering of `w`, per grid node.
    #[default]
    SparseLu,
    /// Eigenvalues of `w` once, then `sum ln|1 - rho lambda|` per node.
    Eigen,
}

impl LogDetMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            LogDetMethod::Dense => "dense",
            LogDetMethod::SparseLu => "sparse-lu",
            LogDetMethod::Eigen => "eigen",
        }
    }
}

impl fmt::Display for LogDetMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LogDetMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(LogDetMethod::Dense),
            "sparse-lu" | "sparse" => Ok(LogDetMethod::SparseLu),
            "eigen" => Ok(LogDetMethod::Eigen),
            other => Err(Error::InvalidConfig(format!("unknown log-det method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogDetGrid<T> {
    rho: Vec<T>,
    values: Vec<T>,
    method: LogDetMethod,
    weights_hash: String,
}

/// Grid nodes on `[-0.999, 0.999]` with `0` as an exact node.
pub fn rho_nodes<T: Scalar>(npoints: usize) -> Vec<T> {
    let left = (npoints - 1) / 2;
    let right = npoints - 1 - left;
    let b = T::lit(GRID_BOUND);
    let mut out = Vec::with_capacity(npoints);
    for i in 0..left {
        out.push(-(b * (T::count(left - i) / T::count(left))));
    }
    out.push(T::zero());
    for j in 1..=right {
        out.push(b * (T::count(j) / T::count(right)));
    }
    out
}

impl<T: Scalar> LogDetGrid<T> {
    pub fn build(w: &WeightMatrix<T>, npoints: usize, method: LogDetMethod) -> Result<Self> {
        if npoints < MIN_GRID_POINTS {
            return Err(Error::GridTooCoarse {
                min: MIN_GRID_POINTS,
                got: npoints,
            });
        }
        let n = w.n();
        if matches!(method, LogDetMethod::Dense | LogDetMethod::Eigen) && n > DENSE_MAX_N {
            return Err(Error::MethodTooLarge {
                method: method.as_str(),
                max: DENSE_MAX_N,
                n,
            });
        }
        let rho = rho_nodes::<T>(npoints);
        let values: Vec<T> = match method {
            LogDetMethod::Eigen => {
                let eig = eigenvalues(w)?;
                rho.iter().map(|&r| logdet_from_eigenvalues(&eig, r)).collect()
            }
            LogDetMethod::Dense => {
                let wd = w.to_dense();
                rho.par_iter()
                    .map(|&r| with_retry(r, |r| dense_logdet(&wd, r)))
                    .collect::<Result<_>>()?
            }
            LogDetMethod::SparseLu => {
                let band = BandedPattern::new(w);
                rho.par_iter()
                    .map(|&r| with_retry(r, |r| band.logdet(w, r)))
                    .collect::<Result<_>>()?
            }
        };
        let mut values = values;
        // ln|I| = 0 exactly.
        if let Some(z) = rho.iter().position(|&r| r == T::zero()) {
            values[z] = T::zero();
        }
        Ok(Self {
            rho,
            values,
            method,
            weights_hash: w.content_hash(),
        })
    }

    pub fn rho(&self) -> &[T] {
        &self.rho
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn method(&self) -> LogDetMethod {
        self.method
    }

    pub fn weights_hash(&self) -> &str {
        &self.weights_hash
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    /// `ln|I_N - rho w|` by four-point Lagrange interpolation; node values are
    /// returned unchanged.
    pub fn logdet_at(&self, rho: T) -> Result<T> {
        if !(rho.abs() < T::one()) {
            return Err(Error::OutOfSupport(rho.to_f64_lossy()));
        }
        let n = self.rho.len();
        let idx = self.rho.partition_point(|&r| r < rho);
        if idx < n && self.rho[idx] == rho {
            return Ok(self.values[idx]);
        }
        // rho lies in (rho[idx-1], rho[idx]); outside the grid we extrapolate
        // from the end stencil.
        let lo = idx.saturating_sub(2).min(n - 4);
        let xs = &self.rho[lo..lo + 4];
        let ys = &self.values[lo..lo + 4];
        let mut acc = T::zero();
        for a in 0..4 {
            let mut basis = T::one();
            for b in 0..4 {
                if a != b {
                    basis *= (rho - xs[b]) / (xs[a] - xs[b]);
                }
            }
            acc += basis * ys[a];
        }
        Ok(acc)
    }

    /// Panel log-determinant `ln|I_NT - rho (I_T ⊗ w)| = T ln|I_N - rho w|`.
    pub fn panel_logdet_at(&self, rho: T, periods: usize) -> Result<T> {
        Ok(T::count(periods) * self.logdet_at(rho)?)
    }
}

impl LogDetGrid<f64> {
    fn cache_file(dir: &Path, hash: &str, npoints: usize, method: LogDetMethod) -> PathBuf {
        dir.join(format!("logdet-{}-{}-{}.txt", &hash[..16], method, npoints))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = format!(
            "# logdet-grid hash={} method={} npoints={}\n",
            self.weights_hash,
            self.method,
            self.rho.len()
        );
        for (r, v) in self.rho.iter().zip(&self.values) {
            text.push_str(&format!("{r:e} {v:e}\n"));
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Loads a sidecar file; returns `Ok(None)` when its hash does not match `expected_hash`.
    pub fn load(path: &Path, expected_hash: &str) -> Result<Option<Self>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::Format {
            path: path.to_path_buf(),
            message: m.to_owned(),
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty grid file"))?;
        let field = |key: &str| {
            header
                .split_whitespace()
                .find_map(|tok| tok.strip_prefix(key))
                .map(str::to_owned)
                .ok_or_else(|| bad("grid header incomplete"))
        };
        if field("hash=")? != expected_hash {
            return Ok(None);
        }
        let method: LogDetMethod = field("method=")?.parse()?;
        let mut rho = Vec::new();
        let mut values = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let mut it = line.split_whitespace();
            let r: f64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(line))?;
            let v: f64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(line))?;
            rho.push(r);
            values.push(v);
        }
        if rho.len() < 4 || rho.windows(2).any(|p| p[0] >= p[1]) {
            return Err(bad("grid nodes not ascending"));
        }
        Ok(Some(Self {
            rho,
            values,
            method,
            weights_hash: expected_hash.to_owned(),
        }))
    }

    /// Reuses a cached grid from `dir` when one exists for this exact `w`,
    /// otherwise builds and stores it.
    pub fn load_or_build(
        w: &WeightMatrix<f64>,
        npoints: usize,
        method: LogDetMethod,
        dir: &Path,
    ) -> Result<Self> {
        let hash = w.content_hash();
        let path = Self::cache_file(dir, &hash, npoints, method);
        if path.exists() {
            if let Some(g) = Self::load(&path, &hash)? {
                if g.len() == npoints {
                    return Ok(g);
                }
            }
        }
        let g = Self::build(w, npoints, method)?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        g.save(&path)?;
        Ok(g)
    }
}

fn with_retry<T: Scalar>(rho: T, f: impl Fn(T) -> Option<T>) -> Result<T> {
    f(rho)
        .or_else(|| f(rho + T::lit(1e-8)))
        .ok_or(Error::SingularAtGridPoint(rho.to_f64_lossy()))
}

/// `ln|I - rho w|` from a dense LU factorization.
pub fn dense_logdet<T: Scalar>(w: &Dense<T>, rho: T) -> Option<T> {
    let n = w.rows();
    let a = Dense::from_fn(n, n, |i, j| {
        let id = if i == j { T::one() } else { T::zero() };
        id - rho * w[(i, j)]
    });
    let lu = a.lu().ok()?;
    let (sign, ld) = lu.log_abs_det();
    (sign > T::zero() && ld.is_finite()).then_some(ld)
}

fn eigenvalues<T: Scalar>(w: &WeightMatrix<T>) -> Result<Vec<(f64, f64)>> {
    let n = w.n();
    let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
    for (i, j, v) in w.triplets() {
        m[(i, j)] = v.to_f64_lossy();
    }
    let schur = nalgebra::linalg::Schur::try_new(m, 1e-14, 100_000)
        .ok_or(Error::SingularAtGridPoint(0.0))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|c| (c.re, c.im))
        .collect())
}

fn logdet_from_eigenvalues<T: Scalar>(eig: &[(f64, f64)], rho: T) -> T {
    let r = rho.to_f64_lossy();
    // Imaginary parts of the logs cancel across conjugate pairs.
    let s: f64 = eig
        .iter()
        .map(|&(re, im)| {
            let a = 1.0 - r * re;
            let b = -r * im;
            0.5 * (a * a + b * b).ln()
        })
        .sum();
    T::lit(s)
}

/// Reverse Cuthill-McKee ordering of `w + w'` and the resulting band widths.
#[derive(Debug, Clone)]
struct BandedPattern {
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// `inv[old] = new`.
    inv: Vec<usize>,
    lower: usize,
    upper: usize,
}

impl BandedPattern {
    fn new<T: Scalar>(w: &WeightMatrix<T>) -> Self {
        let n = w.n();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, j, _) in w.triplets() {
            adj[i].push(j);
            adj[j].push(i);
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        let perm = reverse_cuthill_mckee(&adj);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let (mut lower, mut upper) = (0, 0);
        for (i, j, _) in w.triplets() {
            let (a, b) = (inv[i], inv[j]);
            if a > b {
                lower = lower.max(a - b);
            } else {
                upper = upper.max(b - a);
            }
        }
        Self {
            perm,
            inv,
            lower,
            upper,
        }
    }

    /// LU without pivoting on the band of `P (I - rho w) P'`. For |rho| < 1 the
    /// matrix is strictly row diagonally dominant, which elimination preserves,
    /// so every pivot is positive.
    fn logdet<T: Scalar>(&self, w: &WeightMatrix<T>, rho: T) -> Option<T> {
        let n = self.perm.len();
        let (bl, bu) = (self.lower, self.upper);
        let width = bl + bu + 1;
        // band[i * width + (j + bl - i)] holds entry (i, j).
        let mut band = vec![T::zero(); n * width];
        for new_i in 0..n {
            band[new_i * width + bl] = T::one();
            for (j, v) in w.row(self.perm[new_i]) {
                let new_j = self.inv[j];
                band[new_i * width + (new_j + bl - new_i)] -= rho * v;
            }
        }
        let mut acc = T::zero();
        for k in 0..n {
            let pivot = band[k * width + bl];
            if !(pivot > T::zero()) || !pivot.is_finite() {
                return None;
            }
            acc += pivot.ln();
            let jmax = (k + bu).min(n - 1);
            let imax = (k + bl).min(n - 1);
            for i in k + 1..=imax {
                let lik = band[i * width + (k + bl - i)];
                if lik == T::zero() {
                    continue;
                }
                let f = lik / pivot;
                let (head, tail) = band.split_at_mut(i * width);
                let krow = &head[k * width..];
                let irow = &mut tail[..width];
                // Entry (k, j) sits at k*width + j + bl - k, (i, j) at i*width + j + bl - i.
                let kofs = bl; // j = k + 1 .. jmax
                let iofs = k + bl - i;
                for d in 1..=(jmax - k) {
                    irow[iofs + d] -= f * krow[kofs + d];
                }
            }
        }
        Some(acc)
    }
}

fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let degree = |i: usize| adj[i].len();
    while order.len() < n {
        // Start each component from a minimum-degree vertex.
        let start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree(i), i))
            .expect("unvisited vertex");
        visited[start] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nb.sort_by_key(|&u| (degree(u), u));
            for u in nb {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}
