use sdm_core::diagnostics::diagnostics_report;
use sdm_core::dgp::{generate, generate_coordinates, DgpConfig};
use sdm_core::effects::{effects_at, EffectsMethod};
use sdm_core::logdet::{LogDetGrid, LogDetMethod};
use sdm_core::marginal::log_marginal_likelihood;
use sdm_core::mcmc::{run_chain_with_grid, McmcConfig, PriorSpec};
use sdm_core::weights::{KnnOptions, WeightMatrix};

/// k-NN weights on the same f64 coordinates, built in precision `T`.
fn weights<T: sdm_core::Scalar>(n: usize, k: usize) -> WeightMatrix<T> {
    let mut cfg = DgpConfig::<f64>::new(n, 1, 1);
    cfg.seed = 3;
    let coords: Vec<[T; 2]> = generate_coordinates(&cfg).iter().map(|c| [T::lit(c[0]), T::lit(c[1])]).collect();
    WeightMatrix::knn(&coords, k, &KnnOptions::default()).unwrap()
}

#[test]
fn logdet_grid_agrees_across_precisions() {
    let g32 = LogDetGrid::build(&weights::<f32>(80, 5), 2001, LogDetMethod::SparseLu).unwrap();
    let g64 = LogDetGrid::build(&weights::<f64>(80, 5), 2001, LogDetMethod::SparseLu).unwrap();
    for rho in [-0.9, -0.3, 0.0, 0.25, 0.8] {
        let a = g32.logdet_at(rho as f32).unwrap() as f64;
        let b = g64.logdet_at(rho).unwrap();
        assert!((a - b).abs() < 1e-3 * (1.0 + b.abs()), "rho {rho}: {a} vs {b}");
    }
}

#[test]
fn effects_agree_across_precisions() {
    let (beta, theta, rho) = ([1.0, -0.5], [0.5, 0.3], 0.4);
    let e32 = effects_at(
        &beta.map(|x| x as f32),
        &theta.map(|x| x as f32),
        rho as f32,
        &weights::<f32>(60, 4),
        EffectsMethod::Series(None),
    )
    .unwrap();
    let e64 = effects_at(&beta, &theta, rho, &weights::<f64>(60, 4), EffectsMethod::Dense).unwrap();
    for j in 0..2 {
        assert!((e32.direct[j] as f64 - e64.direct[j]).abs() < 1e-5);
        assert!((e32.indirect[j] as f64 - e64.indirect[j]).abs() < 1e-5);
        assert_eq!(e32.direct[j] + e32.indirect[j], e32.total[j]);
    }
}

#[test]
fn single_precision_fit_recovers_parameters() {
    let mut cfg = DgpConfig::<f32>::new(100, 5, 2);
    cfg.beta = vec![1.0, -0.5];
    cfg.theta = vec![0.5, 0.8];
    cfg.seed = 4;
    let w = WeightMatrix::knn(&generate_coordinates(&cfg), 5, &KnnOptions::default()).unwrap();
    let p = generate(&cfg, &w).unwrap().panel.demean_two_way().unwrap();
    let grid = LogDetGrid::build(&w, 2001, LogDetMethod::SparseLu).unwrap();
    let mc = McmcConfig {
        ndraw: 2500,
        nburn: 500,
        seed: 1,
        heteroscedastic: false,
        ..Default::default()
    };
    let prior = PriorSpec::<f32>::diagonal(4, 0.0, 1e4);
    let draws = run_chain_with_grid(&p, &w, &grid, &prior, &mc).unwrap();
    let report = diagnostics_report(&draws, 0.1, 0.9).unwrap();
    let truth = [1.0, -0.5, 0.5, 0.8, 0.3, 1.0];
    for (row, want) in report.rows.iter().zip(truth) {
        assert!((row.mean - want).abs() < 4.0 * row.sd, "{}: {} vs {want}", row.label, row.mean);
    }
    let lml = log_marginal_likelihood(&p, &w, &grid, &prior).unwrap();
    assert!(lml.is_finite());
}
