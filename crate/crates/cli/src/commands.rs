//! The five pipeline steps. Each takes the effective configuration, writes its
//! files into the output directory together with a run manifest, and returns
//! the report text for standard output.

use std::path::{Path, PathBuf};

use sdm_core::diagnostics::diagnostics_report;
use sdm_core::dgp::{generate, generate_coordinates};
use sdm_core::effects::impact_inference;
use sdm_core::logdet::LogDetGrid;
use sdm_core::marginal::{log_marginal_likelihood, select_k, SelectOptions};
use sdm_core::mcmc::{run_chain_with_grid, McmcDraws, SdmProblem};
use sdm_core::panel::PanelData;
use sdm_core::weights::{read_coordinates, write_coordinates, WeightMatrix};
use sdm_core::Error;

use crate::config::{ReportFormat, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;
use crate::report::{diagnostics_table, estimates_table, impacts_table, selection_table, Estimate, FitSummary, Table};

pub const PANEL_FILE: &str = "panel.csv";
pub const COORDINATES_FILE: &str = "coordinates.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const DRAWS_FILE: &str = "draws.csv";
pub const V_SUMMARY_FILE: &str = "v_summary.csv";

/// What a command printed and which files it wrote.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub stdout: String,
    pub files: Vec<PathBuf>,
}

fn out_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str, flag: &str) -> CliResult<&'a Path> {
    let p = p
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("no {what} given; set data.{what} in the config or pass --{flag}")))?;
    existing(p)
}

fn existing(p: &Path) -> CliResult<&Path> {
    if p.exists() {
        Ok(p)
    } else {
        Err(CliError::MissingInput(p.to_path_buf()))
    }
}

fn report_path(dir: &Path, stem: &str, format: ReportFormat) -> PathBuf {
    dir.join(match format {
        ReportFormat::Text => format!("{stem}.txt"),
        ReportFormat::Delimited => format!("{stem}.csv"),
    })
}

fn emit(table: &Table, cfg: &RunConfig, dir: &Path, stem: &str, files: &mut Vec<PathBuf>) -> CliResult<String> {
    let text = table.render(cfg.format());
    let path = report_path(dir, stem, cfg.format());
    std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    files.push(path);
    Ok(text)
}

fn finish(cfg: &RunConfig, dir: &Path, mut manifest: Manifest, stdout: String, files: Vec<PathBuf>) -> CliResult<Outcome> {
    manifest.outputs = files.clone();
    let m = manifest.write(cfg, dir)?;
    let mut files = files;
    files.push(m);
    Ok(Outcome { stdout, files })
}

fn load_panel(cfg: &RunConfig, manifest: &mut Manifest) -> CliResult<PanelData<f64>> {
    let path = require(&cfg.data.panel, "panel", "panel")?;
    manifest.inputs.push(path.to_path_buf());
    Ok(PanelData::load(path, &cfg.schema())?)
}

fn load_coordinates(cfg: &RunConfig, region_ids: &[String], manifest: &mut Manifest) -> CliResult<Vec<[f64; 2]>> {
    let path = require(&cfg.data.coordinates, "coordinates", "coords")?;
    manifest.inputs.push(path.to_path_buf());
    Ok(read_coordinates(path, region_ids)?)
}

/// Weights from a triplet file when one is configured, otherwise k-NN on the
/// coordinates.
fn load_weights(cfg: &RunConfig, p: &PanelData<f64>, manifest: &mut Manifest) -> CliResult<WeightMatrix<f64>> {
    if let Some(path) = &cfg.data.weights {
        let path = existing(path)?;
        manifest.inputs.push(path.to_path_buf());
        return Ok(WeightMatrix::read_triplets(path, p.n())?);
    }
    let coords = load_coordinates(cfg, p.region_ids(), manifest)?;
    Ok(WeightMatrix::knn(&coords, cfg.weights.k, &cfg.weights.knn_options())?)
}

pub fn simulate(cfg: &RunConfig) -> CliResult<Outcome> {
    let dir = out_dir(cfg)?;
    let dgp = cfg.simulate.to_dgp(cfg.seed())?;
    let coords = generate_coordinates(&dgp);
    let w = WeightMatrix::knn(&coords, cfg.weights.k, &cfg.weights.knn_options())?;
    let sim = generate(&dgp, &w)?;
    let p = &sim.panel;
    let mut files = vec![dir.join(PANEL_FILE), dir.join(COORDINATES_FILE), dir.join(TRUTH_FILE), dir.join(WEIGHTS_FILE)];
    p.write(&files[0])?;
    write_coordinates(&files[1], p.region_ids(), &sim.coords)?;
    sim.truth.write(&files[2], p.var_names(), p.region_ids(), p.period_ids())?;
    w.write_triplets(&files[3])?;
    let stdout = format!(
        "simulated N={} T={} Q={} rho={} with k={} nearest-neighbour weights\nwrote {}\n",
        dgp.n,
        dgp.t,
        dgp.q(),
        dgp.rho,
        cfg.weights.k,
        files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>().join(", ")
    );
    let out = finish(cfg, &dir, Manifest::new("simulate"), stdout, std::mem::take(&mut files))?;
    Ok(out)
}

pub fn select_k_cmd(cfg: &RunConfig) -> CliResult<Outcome> {
    let mut manifest = Manifest::new("select-k");
    let panel = load_panel(cfg, &mut manifest)?;
    let coords = load_coordinates(cfg, panel.region_ids(), &mut manifest)?;
    let dir = out_dir(cfg)?;
    let (lo, hi) = (cfg.weights.k_min, cfg.weights.k_max);
    if lo == 0 || lo > hi {
        return Err(CliError::Usage(format!("invalid k range {lo}..={hi}")));
    }
    let p = panel.demean_two_way()?;
    let prior = cfg.prior.to_spec(p.q())?;
    let opts = SelectOptions {
        grid_points: cfg.mcmc.logdet_points,
        method: cfg.mcmc.logdet_method()?,
        knn: cfg.weights.knn_options(),
    };
    let sel = select_k(&coords, &p, lo..=hi, &prior, &opts)?;
    let mut files = Vec::new();
    let stdout = emit(&selection_table(&sel), cfg, &dir, "select_k", &mut files)?;
    finish(cfg, &dir, manifest, stdout, files)
}

/// Squared correlation of `y` with `rho Wy + Z delta`.
pub fn r_squared(problem: &SdmProblem<f64>, rho: f64, delta: &[f64]) -> f64 {
    let zd = problem.z.mat_vec(delta);
    let fit: Vec<f64> = problem.wy.iter().zip(&zd).map(|(wy, z)| rho * wy + z).collect();
    let n = fit.len() as f64;
    let my = problem.y.iter().sum::<f64>() / n;
    let mf = fit.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (y, f) in problem.y.iter().zip(&fit) {
        sxy += (y - my) * (f - mf);
        syy += (y - my) * (y - my);
        sxx += (f - mf) * (f - mf);
    }
    sxy * sxy / (sxx * syy)
}

pub fn fit(cfg: &RunConfig) -> CliResult<Outcome> {
    let mut manifest = Manifest::new("fit");
    let panel = load_panel(cfg, &mut manifest)?;
    let w = load_weights(cfg, &panel, &mut manifest)?;
    let dir = out_dir(cfg)?;
    let p = panel.demean_two_way()?;
    let prior = cfg.prior.to_spec(p.q())?;
    let mc = cfg.mcmc.to_config(cfg.seed())?;
    let grid = LogDetGrid::load_or_build(&w, mc.logdet_points, mc.logdet_method, &dir.join("logdet-cache"))?;
    let draws = run_chain_with_grid(&p, &w, &grid, &prior, &mc)?;
    let log_marginal = log_marginal_likelihood(&p, &w, &grid, &prior)?;
    let problem = SdmProblem::from_panel(&p, &w)?;
    let delta_bar = draws.posterior_mean_delta();
    let rho = Estimate::from_chain(&draws.rho);
    let mut estimates: Vec<Estimate> = (0..draws.delta.cols())
        .map(|c| Estimate::from_chain(&draws.delta.column(c)))
        .collect();
    estimates.push(rho);
    let summary = FitSummary {
        var_names: draws.var_names.clone(),
        estimates,
        k: w.k().unwrap_or(cfg.weights.k),
        n: p.n(),
        t: p.t(),
        log_marginal,
        r_squared: r_squared(&problem, rho.mean, &delta_bar),
        sigma2: draws.sigma2.iter().sum::<f64>() / draws.len() as f64,
        draws: mc.ndraw,
        burn_in: mc.nburn,
        rho_acceptance: draws.retained_acceptance(),
    };
    let mut files = vec![dir.join(DRAWS_FILE), dir.join(V_SUMMARY_FILE), dir.join(WEIGHTS_FILE)];
    draws.write(&files[0])?;
    draws.write_v_summary(&files[1], p.region_ids(), p.period_ids())?;
    w.write_triplets(&files[2])?;
    let stdout = emit(&estimates_table(&summary), cfg, &dir, "estimates", &mut files)?;
    finish(cfg, &dir, manifest, stdout, files)
}

fn draws_path(cfg: &RunConfig) -> PathBuf {
    cfg.data.draws.clone().unwrap_or_else(|| cfg.out_dir().join(DRAWS_FILE))
}

fn load_draws(cfg: &RunConfig, manifest: &mut Manifest) -> CliResult<McmcDraws<f64>> {
    let path = draws_path(cfg);
    let path = existing(&path)?;
    manifest.inputs.push(path.to_path_buf());
    Ok(McmcDraws::read(path)?)
}

pub fn impacts(cfg: &RunConfig) -> CliResult<Outcome> {
    let mut manifest = Manifest::new("impacts");
    let draws = load_draws(cfg, &mut manifest)?;
    // Weights: explicit triplets, else k-NN from panel + coordinates, else
    // the triplets `fit` left in the output directory.
    let w = if let Some(path) = &cfg.data.weights {
        let path = existing(path)?;
        manifest.inputs.push(path.to_path_buf());
        WeightMatrix::read_triplets(path, draws.n)?
    } else if cfg.data.panel.is_some() && cfg.data.coordinates.is_some() {
        let panel = load_panel(cfg, &mut manifest)?;
        load_weights(cfg, &panel, &mut manifest)?
    } else {
        let path = cfg.out_dir().join(WEIGHTS_FILE);
        let path = existing(&path)?;
        manifest.inputs.push(path.to_path_buf());
        WeightMatrix::read_triplets(path, draws.n)?
    };
    let found = w.content_hash();
    if found != draws.weights_hash {
        return Err(Error::StaleDraws {
            expected: draws.weights_hash.clone(),
            found,
        }
        .into());
    }
    let dir = out_dir(cfg)?;
    let opts = cfg.impacts.to_options(cfg.seed())?;
    let summary = impact_inference(&draws, &w, &opts)?;
    let mut files = Vec::new();
    let stdout = emit(&impacts_table(&summary), cfg, &dir, "impacts", &mut files)?;
    finish(cfg, &dir, manifest, stdout, files)
}

pub fn diagnose(cfg: &RunConfig) -> CliResult<Outcome> {
    let mut manifest = Manifest::new("diagnose");
    let draws = load_draws(cfg, &mut manifest)?;
    let dir = out_dir(cfg)?;
    let report = diagnostics_report(&draws, cfg.diagnostics.frac_first, cfg.diagnostics.frac_last)?;
    let mut files = Vec::new();
    let stdout = emit(&diagnostics_table(&report, &draws.var_names), cfg, &dir, "diagnostics", &mut files)?;
    finish(cfg, &dir, manifest, stdout, files)
}
