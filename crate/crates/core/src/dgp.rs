//! Synthetic panels from a known spatial Durbin process
//!
//! ```text
//! y_t = (I - rho w)^{-1} (X_t beta + w X_t theta + mu + nu_t + e_t),  e_it ~ N(0, sigma^2 v_it)
//! ```

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{Dense, Lu};
use crate::logdet::DENSE_MAX_N;
use crate::panel::{csv_io, PanelData};
use crate::scalar::Scalar;
use crate::weights::WeightMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoordinateScheme {
    /// Independent uniform points on the unit square.
    UniformSquare,
    /// Normal scatter of standard deviation `spread` around `clusters`
    /// uniformly placed centres.
    Clustered { clusters: usize, spread: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig<T> {
    pub n: usize,
    pub t: usize,
    pub beta: Vec<T>,
    pub theta: Vec<T>,
    pub rho: T,
    /// Standard deviation of the region effects.
    pub mu_scale: T,
    /// Standard deviation of the period effects.
    pub nu_scale: T,
    pub sigma: T,
    /// Stacked `N*T` mask of cells whose disturbance sd is multiplied by
    /// `outlier_multiplier`. Empty means no outliers.
    pub outlier_mask: Vec<bool>,
    pub outlier_multiplier: T,
    pub coordinates: CoordinateScheme,
    pub seed: u64,
}

impl<T: Scalar> DgpConfig<T> {
    /// Q regressors with `beta = theta = 1`, `rho = 0.3`, unit noise and
    /// unit fixed-effect scales.
    pub fn new(n: usize, t: usize, q: usize) -> Self {
        Self {
            n,
            t,
            beta: vec![T::one(); q],
            theta: vec![T::one(); q],
            rho: T::lit(0.3),
            mu_scale: T::one(),
            nu_scale: T::one(),
            sigma: T::one(),
            outlier_mask: Vec::new(),
            outlier_multiplier: T::lit(10.0),
            coordinates: CoordinateScheme::UniformSquare,
            seed: 0,
        }
    }

    pub fn q(&self) -> usize {
        self.beta.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho.abs() < T::one()) {
            return Err(Error::OutOfSupport(self.rho.to_f64_lossy()));
        }
        if !(self.sigma > T::zero()) {
            return Err(Error::InvalidConfig("noise sd must be positive".into()));
        }
        if self.theta.len() != self.beta.len() || self.beta.is_empty() {
            return Err(Error::InvalidConfig("beta and theta must be nonempty and the same length".into()));
        }
        if !self.outlier_mask.is_empty() && self.outlier_mask.len() != self.n * self.t {
            return Err(Error::DimensionMismatch {
                expected: self.n * self.t,
                got: self.outlier_mask.len(),
            });
        }
        if self.n == 0 || self.t == 0 {
            return Err(Error::InvalidConfig("N and T must be positive".into()));
        }
        if let CoordinateScheme::Clustered { clusters, spread } = self.coordinates {
            if clusters == 0 || !(spread > 0.0) {
                return Err(Error::InvalidConfig("clustered coordinates need clusters > 0 and spread > 0".into()));
            }
        }
        Ok(())
    }

    /// Variance multiplier of every cell.
    pub fn variance_scales(&self) -> Vec<T> {
        let m2 = self.outlier_multiplier * self.outlier_multiplier;
        (0..self.n * self.t)
            .map(|i| {
                if self.outlier_mask.get(i).copied().unwrap_or(false) {
                    m2
                } else {
                    T::one()
                }
            })
            .collect()
    }
}

/// Exact parameter values behind a simulated panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth<T> {
    pub beta: Vec<T>,
    pub theta: Vec<T>,
    pub rho: T,
    pub sigma: T,
    pub mu: Vec<T>,
    pub nu: Vec<T>,
    pub v: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct Simulation<T> {
    pub panel: PanelData<T>,
    pub coords: Vec<[T; 2]>,
    pub truth: Truth<T>,
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Region coordinates for `cfg`; [`generate`] returns the same points, so a
/// weight matrix built from these matches the simulated panel.
pub fn generate_coordinates<T: Scalar>(cfg: &DgpConfig<T>) -> Vec<[T; 2]> {
    let mut rng = rng_stream(cfg.seed, 0);
    match cfg.coordinates {
        CoordinateScheme::UniformSquare => (0..cfg.n)
            .map(|_| [T::unit_uniform(&mut rng), T::unit_uniform(&mut rng)])
            .collect(),
        CoordinateScheme::Clustered { clusters, spread } => {
            let centres: Vec<[f64; 2]> = (0..clusters).map(|_| [rng.random(), rng.random()]).collect();
            let s = T::lit(spread);
            (0..cfg.n)
                .map(|i| {
                    let c = centres[i % clusters];
                    [
                        T::lit(c[0]) + s * T::standard_normal(&mut rng),
                        T::lit(c[1]) + s * T::standard_normal(&mut rng),
                    ]
                })
                .collect()
        }
    }
}

/// Solves `(I - rho w) y = s` for one period.
enum Solver<T> {
    Direct(Lu<T>),
    /// Fixed-point iteration `y <- s + rho w y`, a contraction with factor
    /// |rho| because w is row-stochastic; iterated to machine precision.
    Iterative,
}

impl<T: Scalar> Solver<T> {
    fn new(w: &WeightMatrix<T>, rho: T) -> Result<Self> {
        if w.n() <= DENSE_MAX_N {
            let a = Dense::identity(w.n()).add(&w.to_dense().scale(-rho));
            Ok(Solver::Direct(a.lu()?))
        } else {
            Ok(Solver::Iterative)
        }
    }

    fn solve(&self, w: &WeightMatrix<T>, rho: T, s: &[T]) -> Vec<T> {
        match self {
            Solver::Direct(lu) => lu.solve(s),
            Solver::Iterative => {
                let mut y = s.to_vec();
                let mut wy = vec![T::zero(); s.len()];
                let scale = s.iter().fold(T::zero(), |m, x| m.max(x.abs())).max(T::min_positive_value());
                for _ in 0..10_000 {
                    w.apply_into(&y, &mut wy);
                    let mut change = T::zero();
                    for i in 0..y.len() {
                        let next = s[i] + rho * wy[i];
                        change = change.max((next - y[i]).abs());
                        y[i] = next;
                    }
                    if change <= T::epsilon() * scale {
                        break;
                    }
                }
                y
            }
        }
    }
}

/// Simulates a balanced panel. X, the fixed effects and the disturbances
/// come from independent random streams, so changing e.g. the outlier mask
/// leaves X untouched.
pub fn generate<T: Scalar>(cfg: &DgpConfig<T>, w: &WeightMatrix<T>) -> Result<Simulation<T>> {
    cfg.validate()?;
    if w.n() != cfg.n {
        return Err(Error::DimensionMismatch {
            expected: cfg.n,
            got: w.n(),
        });
    }
    let (n, t, q) = (cfg.n, cfg.t, cfg.q());
    let nt = n * t;
    let coords = generate_coordinates(cfg);

    let mut x_rng = rng_stream(cfg.seed, 1);
    let x = Dense::from_fn(nt, q, |_, _| T::standard_normal(&mut x_rng));
    let mut fe_rng = rng_stream(cfg.seed, 2);
    let mu: Vec<T> = (0..n).map(|_| cfg.mu_scale * T::standard_normal(&mut fe_rng)).collect();
    let nu: Vec<T> = (0..t).map(|_| cfg.nu_scale * T::standard_normal(&mut fe_rng)).collect();
    let v = cfg.variance_scales();
    let mut e_rng = rng_stream(cfg.seed, 3);
    let eps: Vec<T> = v
        .iter()
        .map(|&vi| cfg.sigma * vi.sqrt() * T::standard_normal(&mut e_rng))
        .collect();

    let wx = w.spatial_lag_columns(&x)?;
    let solver = Solver::new(w, cfg.rho)?;
    let mut y = vec![T::zero(); nt];
    for p in 0..t {
        let signal: Vec<T> = (0..n)
            .map(|i| {
                let r = p * n + i;
                let mut s = mu[i] + nu[p] + eps[r];
                for k in 0..q {
                    s += x[(r, k)] * cfg.beta[k] + wx[(r, k)] * cfg.theta[k];
                }
                s
            })
            .collect();
        let yt = solver.solve(w, cfg.rho, &signal);
        y[p * n..(p + 1) * n].copy_from_slice(&yt);
    }

    let width = n.to_string().len();
    let region_ids = (0..n).map(|i| format!("R{:0width$}", i + 1)).collect();
    let period_ids = (1..=t).map(|p| p.to_string()).collect();
    let var_names = (1..=q).map(|k| format!("x{k}")).collect();
    let panel = PanelData::from_stacked(region_ids, period_ids, y, x, var_names)?;
    Ok(Simulation {
        panel,
        coords,
        truth: Truth {
            beta: cfg.beta.clone(),
            theta: cfg.theta.clone(),
            rho: cfg.rho,
            sigma: cfg.sigma,
            mu,
            nu,
            v,
        },
    })
}

impl Truth<f64> {
    /// Writes `parameter,value` rows: coefficients, `rho`, `sigma`, then the
    /// fixed effects and variance scales.
    pub fn write(&self, path: &Path, var_names: &[String], region_ids: &[String], period_ids: &[String]) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["parameter", "value"]).map_err(|e| csv_io(path, e))?;
        let mut put = |k: String, v: f64| w.write_record([k, format!("{v:e}")]).map_err(|e| csv_io(path, e));
        for (name, b) in var_names.iter().zip(&self.beta) {
            put(format!("beta:{name}"), *b)?;
        }
        for (name, th) in var_names.iter().zip(&self.theta) {
            put(format!("theta:{name}"), *th)?;
        }
        put("rho".into(), self.rho)?;
        put("sigma".into(), self.sigma)?;
        for (id, m) in region_ids.iter().zip(&self.mu) {
            put(format!("mu:{id}"), *m)?;
        }
        for (id, m) in period_ids.iter().zip(&self.nu) {
            put(format!("nu:{id}"), *m)?;
        }
        let n = region_ids.len();
        for (idx, v) in self.v.iter().enumerate() {
            put(format!("v:{}:{}", region_ids[idx % n], period_ids[idx / n]), *v)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::KnnOptions;

    fn knn_for(cfg: &DgpConfig<f64>, k: usize) -> WeightMatrix<f64> {
        WeightMatrix::knn(&generate_coordinates(cfg), k, &KnnOptions::default()).unwrap()
    }

    #[test]
    fn noiseless_no_spillover_reproduces_signal() {
        let mut cfg = DgpConfig::<f64>::new(30, 3, 2);
        cfg.rho = 0.0;
        cfg.theta = vec![0.0, 0.0];
        cfg.beta = vec![1.5, -0.5];
        cfg.mu_scale = 0.0;
        cfg.nu_scale = 0.0;
        cfg.sigma = 1e-300;
        let w = knn_for(&cfg, 4);
        let sim = generate(&cfg, &w).unwrap();
        let x = sim.panel.x();
        for (r, y) in sim.panel.y().iter().enumerate() {
            let want = 1.5 * x[(r, 0)] - 0.5 * x[(r, 1)];
            assert!((y - want).abs() < 1e-10);
        }
    }

    #[test]
    fn swap_matrix_closed_form() {
        let w = WeightMatrix::row_normalize(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let mut cfg = DgpConfig::<f64>::new(2, 1, 1);
        cfg.rho = 0.5;
        cfg.beta = vec![2.0];
        cfg.theta = vec![0.7];
        let sim = generate(&cfg, &w).unwrap();
        let x = sim.panel.x();
        let tr = &sim.truth;
        let eps: Vec<f64> = {
            let mut rng = rng_stream(cfg.seed, 3);
            (0..2).map(|_| f64::standard_normal(&mut rng)).collect()
        };
        let s: Vec<f64> = (0..2)
            .map(|i| 2.0 * x[(i, 0)] + 0.7 * x[(1 - i, 0)] + tr.mu[i] + tr.nu[0] + eps[i])
            .collect();
        let inv = [[1.0 / 0.75, 0.5 / 0.75], [0.5 / 0.75, 1.0 / 0.75]];
        for i in 0..2 {
            let want = inv[i][0] * s[0] + inv[i][1] * s[1];
            assert!((sim.panel.y()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let cfg = DgpConfig::<f64>::new(25, 4, 2);
        let w = knn_for(&cfg, 3);
        let a = generate(&cfg, &w).unwrap();
        let b = generate(&cfg, &w).unwrap();
        assert_eq!(a.panel, b.panel);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.coords, b.coords);
        let mut other = cfg.clone();
        other.seed = 1;
        assert_ne!(generate(&other, &knn_for(&other, 3)).unwrap().panel, a.panel);
    }

    #[test]
    fn demeaning_removes_fixed_effects() {
        let mut cfg = DgpConfig::<f64>::new(40, 5, 2);
        cfg.mu_scale = 5.0;
        cfg.nu_scale = 3.0;
        cfg.rho = 0.4;
        cfg.beta = vec![0.8, -1.2];
        cfg.theta = vec![0.3, 0.5];
        cfg.sigma = 1e-300;
        let w = knn_for(&cfg, 5);
        let sim = generate(&cfg, &w).unwrap();
        let d = sim.panel.demean_two_way().unwrap();
        let problem = crate::mcmc::SdmProblem::from_panel(&d, &w).unwrap();
        let ay = problem.ay(cfg.rho);
        let ztz = problem.z.transpose().matmul(&problem.z);
        let coef = ztz.lu().unwrap().solve(&problem.z.transpose().mat_vec(&ay));
        let want = [0.8, -1.2, 0.3, 0.5];
        for (c, w) in coef.iter().zip(want) {
            assert!((c - w).abs() < 1e-8, "{c} vs {w}");
        }
    }

    #[test]
    fn iterative_solver_matches_direct() {
        let cfg = DgpConfig::<f64>::new(60, 1, 1);
        let w = knn_for(&cfg, 4);
        let s: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).sin()).collect();
        let direct = Solver::new(&w, 0.9).unwrap().solve(&w, 0.9, &s);
        let iter = Solver::<f64>::Iterative.solve(&w, 0.9, &s);
        for (a, b) in direct.iter().zip(&iter) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn outliers_scale_variance() {
        let mut cfg = DgpConfig::<f64>::new(10, 2, 1);
        cfg.outlier_mask = vec![false; 20];
        cfg.outlier_mask[3] = true;
        let v = cfg.variance_scales();
        assert_eq!(v[3], 100.0);
        assert_eq!(v.iter().filter(|&&x| x == 1.0).count(), 19);
        cfg.outlier_mask = vec![true; 3];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = DgpConfig::<f64>::new(10, 2, 1);
        cfg.rho = 1.0;
        assert!(matches!(cfg.validate(), Err(Error::OutOfSupport(_))));
        let mut cfg = DgpConfig::<f64>::new(10, 2, 1);
        cfg.sigma = 0.0;
        assert!(cfg.validate().is_err());
        let cfg = DgpConfig::<f64>::new(10, 2, 1);
        let w = WeightMatrix::row_normalize(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(matches!(generate(&cfg, &w), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn clustered_coordinates_and_f32() {
        let mut cfg = DgpConfig::<f32>::new(50, 2, 1);
        cfg.coordinates = CoordinateScheme::Clustered {
            clusters: 5,
            spread: 0.02,
        };
        let coords = generate_coordinates(&cfg);
        assert_eq!(coords.len(), 50);
        let w = WeightMatrix::knn(&coords, 3, &KnnOptions::default()).unwrap();
        let sim = generate(&cfg, &w).unwrap();
        assert!(sim.panel.y().iter().all(|v| v.is_finite()));
    }
}
