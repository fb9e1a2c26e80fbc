//! Joint-distribution ("getting it right") check on a tiny model without
//! fixed effects: alternating y ~ p(y | params) with one posterior sweep must
//! leave the prior marginals invariant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use sdm_core::linalg::Dense;
use sdm_core::logdet::{LogDetGrid, LogDetMethod};
use sdm_core::mcmc::{sample_delta, sample_rho_mh, sample_sigma2, sample_v, sweep, PriorSpec, SamplerState, SdmProblem};
use sdm_core::weights::WeightMatrix;

use super::{batch_se, mean};

pub struct Gir {
    w: WeightMatrix<f64>,
    x: Dense<f64>,
    t: usize,
    prior: PriorSpec<f64>,
    grid: LogDetGrid<f64>,
}

impl Gir {
    pub fn new() -> Self {
        let coords = [[0.0, 0.0], [1.0, 0.1], [0.2, 1.3], [1.4, 1.1]];
        let w = WeightMatrix::knn(&coords, 2, &Default::default()).unwrap();
        let t = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x = Dense::from_fn(8, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let prior = PriorSpec {
            mean: vec![0.5, -0.3],
            cov: Dense::from_row_major(2, 2, vec![0.4, 0.1, 0.1, 0.3]),
            r: 5.0,
            a: 4.0,
            b: 3.0,
        };
        let grid = LogDetGrid::build(&w, 2001, LogDetMethod::Dense).unwrap();
        Self { w, x, t, prior, grid }
    }

    pub fn prior_draw(&self, rng: &mut ChaCha8Rng) -> SamplerState<f64> {
        let ch = self.prior.cov.cholesky().unwrap();
        let z: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
        let delta: Vec<f64> = ch.lower_mul(&z).iter().zip(&self.prior.mean).map(|(a, b)| a + b).collect();
        let sigma2 = 1.0 / Gamma::new(self.prior.a, 1.0 / self.prior.b).unwrap().sample(rng);
        let chi = ChiSquared::new(self.prior.r).unwrap();
        let v = (0..8).map(|_| self.prior.r / chi.sample(rng)).collect();
        let rho = rng.random_range(-1.0..1.0);
        SamplerState {
            delta,
            sigma2,
            rho,
            v,
            resid: Vec::new(),
        }
    }

    /// Draws y from the likelihood at `s` by dense solve per period.
    pub fn simulate_y(&self, s: &SamplerState<f64>, rng: &mut ChaCha8Rng) -> SdmProblem<f64> {
        let n = self.w.n();
        let wd = self.w.to_dense();
        let a = Dense::identity(n).add(&wd.scale(-s.rho));
        let lu = a.lu().unwrap();
        let wx = wd.mat_vec(&self.x.column(0)[..n]);
        let wx2 = wd.mat_vec(&self.x.column(0)[n..]);
        let mut y = Vec::with_capacity(8);
        for p in 0..self.t {
            let lag = if p == 0 { &wx } else { &wx2 };
            let rhs: Vec<f64> = (0..n)
                .map(|i| {
                    let r = p * n + i;
                    let e: f64 = rng.sample(StandardNormal);
                    s.delta[0] * self.x[(r, 0)] + s.delta[1] * lag[i] + (s.sigma2 * s.v[r]).sqrt() * e
                })
                .collect();
            y.extend(lu.solve(&rhs));
        }
        SdmProblem::without_fixed_effects(&self.w, self.t, y, &self.x).unwrap()
    }
}

pub struct Trace {
    pub d0: Vec<f64>,
    pub d1: Vec<f64>,
    pub rho: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub inv_v0: Vec<f64>,
}

/// Runs the alternating simulation. `mutate_sigma` swaps the sweep for one
/// that conditions sigma^2 on two phantom observations, a deliberately wrong
/// conditional the check must detect.
pub fn run_gir(iters: usize, mutate_sigma: bool) -> Trace {
    let g = Gir::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut state = g.prior_draw(&mut rng);
    let mut tr = Trace {
        d0: vec![],
        d1: vec![],
        rho: vec![],
        sigma2: vec![],
        inv_v0: vec![],
    };
    let step = 0.6;
    for _ in 0..iters {
        let problem = g.simulate_y(&state, &mut rng);
        state.refresh_residual(&problem);
        if mutate_sigma {
            state.delta = sample_delta(&problem, &state, &g.prior, &mut rng).unwrap();
            state.refresh_residual(&problem);
            state.sigma2 = sample_sigma2(&state.resid, &state.v, problem.n_obs + 2, &g.prior, &mut rng).unwrap();
            state.v = sample_v(&state.resid, state.sigma2, g.prior.r, &mut rng);
            let (rho, _) =
                sample_rho_mh(&problem, &g.grid, &state.delta, &state.v, state.sigma2, state.rho, step, &mut rng).unwrap();
            state.rho = rho;
        } else {
            sweep(&problem, &g.grid, &g.prior, &mut state, step, true, &mut rng).unwrap();
        }
        tr.d0.push(state.delta[0]);
        tr.d1.push(state.delta[1]);
        tr.rho.push(state.rho);
        tr.sigma2.push(state.sigma2);
        tr.inv_v0.push(1.0 / state.v[0]);
    }
    tr
}

fn normal_cdf(z: f64) -> f64 {
    sdm_core::scalar::normal_cdf(z)
}

/// Largest |z| over moment and quantile checks of the GIR marginals.
pub fn gir_worst_z(tr: &Trace) -> (f64, String) {
    let mut checks: Vec<(String, Vec<f64>, f64)> = Vec::new();
    let (m0, s0) = (0.5, 0.4f64.sqrt());
    let (m1, s1) = (-0.3, 0.3f64.sqrt());
    checks.push(("delta0 mean".into(), tr.d0.clone(), m0));
    checks.push(("delta1 mean".into(), tr.d1.clone(), m1));
    checks.push(("delta0 var".into(), tr.d0.iter().map(|d| (d - m0).powi(2)).collect(), 0.4));
    checks.push(("delta1 var".into(), tr.d1.iter().map(|d| (d - m1).powi(2)).collect(), 0.3));
    checks.push((
        "delta cov".into(),
        tr.d0.iter().zip(&tr.d1).map(|(a, b)| (a - m0) * (b - m1)).collect(),
        0.1,
    ));
    checks.push(("rho mean".into(), tr.rho.clone(), 0.0));
    checks.push(("rho^2 mean".into(), tr.rho.iter().map(|r| r * r).collect(), 1.0 / 3.0));
    // IG(4, 3): E[sigma2] = 1, E[1/sigma2] = 4/3.
    checks.push(("sigma2 mean".into(), tr.sigma2.clone(), 1.0));
    checks.push(("1/sigma2 mean".into(), tr.sigma2.iter().map(|s| 1.0 / s).collect(), 4.0 / 3.0));
    checks.push(("1/v mean".into(), tr.inv_v0.clone(), 1.0));
    // Quantile agreement through the prior CDFs.
    for p in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let ind = |u: Vec<f64>| u.into_iter().map(|u| if u < p { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        checks.push((format!("rho q{p}"), ind(tr.rho.iter().map(|r| (r + 1.0) / 2.0).collect()), p));
        checks.push((format!("delta0 q{p}"), ind(tr.d0.iter().map(|d| normal_cdf((d - m0) / s0)).collect()), p));
        checks.push((format!("delta1 q{p}"), ind(tr.d1.iter().map(|d| normal_cdf((d - m1) / s1)).collect()), p));
    }
    checks
        .into_iter()
        .map(|(name, xs, want)| {
            let z = (mean(&xs) - want) / batch_se(&xs, 100);
            (z.abs(), name)
        })
        .fold((0.0, String::new()), |a, b| if b.0 > a.0 { b } else { a })
}
