//! Run configuration read from a TOML file. Every field has a default, so an
//! empty file (or no file) is a valid configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sdm_core::dgp::{CoordinateScheme, DgpConfig};
use sdm_core::effects::{ImpactMode, ImpactOptions, RhoSource, DEFAULT_IMPACT_DRAWS, MIN_IMPACT_DRAWS};
use sdm_core::mcmc::{McmcConfig, PriorSpec};
use sdm_core::panel::PanelSchema;
use sdm_core::weights::{DistanceMetric, KnnOptions};
use sdm_core::LogDetMethod;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    #[default]
    Text,
    Delimited,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<ReportFormat>,
    pub data: DataSection,
    pub weights: WeightsSection,
    pub prior: PriorSection,
    pub mcmc: McmcSection,
    pub impacts: ImpactsSection,
    pub diagnostics: DiagnosticsSection,
    pub simulate: SimulateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub panel: Option<PathBuf>,
    pub coordinates: Option<PathBuf>,
    /// Draws file read by `impacts` and `diagnose`.
    pub draws: Option<PathBuf>,
    /// Weight triplets; when absent, weights are rebuilt from coordinates.
    pub weights: Option<PathBuf>,
    pub region_column: String,
    pub period_column: String,
    pub dependent: String,
    pub regressors: Option<Vec<String>>,
}

impl Default for DataSection {
    fn default() -> Self {
        let s = PanelSchema::default();
        Self {
            panel: None,
            coordinates: None,
            draws: None,
            weights: None,
            region_column: s.region,
            period_column: s.period,
            dependent: s.dependent,
            regressors: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Euclidean,
    GreatCircle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsSection {
    /// Neighbour count for `fit`, `impacts` and `simulate`.
    pub k: usize,
    /// Candidate range for `select-k`, inclusive.
    pub k_min: usize,
    pub k_max: usize,
    pub metric: Metric,
}

impl Default for WeightsSection {
    fn default() -> Self {
        Self {
            k: 18,
            k_min: 1,
            k_max: 20,
            metric: Metric::Euclidean,
        }
    }
}

impl WeightsSection {
    pub fn knn_options(&self) -> KnnOptions {
        KnnOptions {
            metric: match self.metric {
                Metric::Euclidean => DistanceMetric::Euclidean,
                Metric::GreatCircle => DistanceMetric::GreatCircle,
            },
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    /// Prior mean of every coefficient, or one value per coefficient
    /// (`beta_1..beta_Q, theta_1..theta_Q`).
    pub mean: Vec<f64>,
    /// Prior variance of every coefficient (diagonal covariance), or one per coefficient.
    pub variance: Vec<f64>,
    pub r: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self {
            mean: vec![1.0],
            variance: vec![0.001],
            r: 5.0,
            a: 0.0,
            b: 0.0,
        }
    }
}

/// Invalid values in the configuration are usage errors, whatever the
/// library classifies them as.
fn usage(e: sdm_core::Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn broadcast(v: &[f64], k: usize, what: &str) -> CliResult<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; k]),
        n if n == k => Ok(v.to_vec()),
        n => Err(CliError::Usage(format!("prior {what} has {n} entries; expected 1 or {k}"))),
    }
}

impl PriorSection {
    pub fn to_spec(&self, q: usize) -> CliResult<PriorSpec<f64>> {
        let k = 2 * q;
        let mean = broadcast(&self.mean, k, "mean")?;
        let var = broadcast(&self.variance, k, "variance")?;
        let mut cov = sdm_core::Dense::zeros(k, k);
        for (i, v) in var.into_iter().enumerate() {
            cov[(i, i)] = v;
        }
        let spec = PriorSpec {
            mean,
            cov,
            r: self.r,
            a: self.a,
            b: self.b,
        };
        spec.validate().map_err(usage)?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSection {
    pub ndraw: usize,
    pub nburn: usize,
    pub rho_step: f64,
    pub adapt_low: f64,
    pub adapt_high: f64,
    pub heteroscedastic: bool,
    pub logdet_points: usize,
    pub logdet_method: String,
}

impl Default for McmcSection {
    fn default() -> Self {
        let d = McmcConfig::default();
        Self {
            ndraw: d.ndraw,
            nburn: d.nburn,
            rho_step: d.rho_step,
            adapt_low: d.adapt_target.0,
            adapt_high: d.adapt_target.1,
            heteroscedastic: d.heteroscedastic,
            logdet_points: d.logdet_points,
            logdet_method: d.logdet_method.to_string(),
        }
    }
}

impl McmcSection {
    pub fn logdet_method(&self) -> CliResult<LogDetMethod> {
        self.logdet_method.parse().map_err(usage)
    }

    pub fn to_config(&self, seed: u64) -> CliResult<McmcConfig> {
        let cfg = McmcConfig {
            ndraw: self.ndraw,
            nburn: self.nburn,
            seed,
            rho_step: self.rho_step,
            adapt_target: (self.adapt_low, self.adapt_high),
            heteroscedastic: self.heteroscedastic,
            logdet_points: self.logdet_points,
            logdet_method: self.logdet_method()?,
        };
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImpactModeName {
    #[default]
    Normal,
    Resample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoSourceName {
    #[default]
    Draws,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpactsSection {
    pub ndraws: usize,
    pub mode: ImpactModeName,
    pub rho: RhoSourceName,
}

impl Default for ImpactsSection {
    fn default() -> Self {
        Self {
            ndraws: DEFAULT_IMPACT_DRAWS,
            mode: ImpactModeName::Normal,
            rho: RhoSourceName::Draws,
        }
    }
}

impl ImpactsSection {
    pub fn to_options(&self, seed: u64) -> CliResult<ImpactOptions> {
        if self.ndraws < MIN_IMPACT_DRAWS {
            return Err(CliError::Usage(format!(
                "impacts.ndraws must be at least {MIN_IMPACT_DRAWS}, got {}",
                self.ndraws
            )));
        }
        Ok(ImpactOptions {
            ndraws: self.ndraws,
            seed,
            mode: match self.mode {
                ImpactModeName::Normal => ImpactMode::NormalApprox,
                ImpactModeName::Resample => ImpactMode::Resample,
            },
            rho_source: match self.rho {
                RhoSourceName::Draws => RhoSource::Draws,
                RhoSourceName::Fixed => RhoSource::Fixed,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub frac_first: f64,
    pub frac_last: f64,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            frac_first: sdm_core::diagnostics::DEFAULT_FRAC_FIRST,
            frac_last: sdm_core::diagnostics::DEFAULT_FRAC_LAST,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoordinateName {
    #[default]
    Uniform,
    Clustered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub n: usize,
    pub t: usize,
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
    pub rho: f64,
    pub sigma: f64,
    pub mu_scale: f64,
    pub nu_scale: f64,
    pub coordinates: CoordinateName,
    pub clusters: usize,
    pub spread: f64,
    /// Share of cells whose disturbance sd is multiplied by `outlier_multiplier`.
    pub outlier_fraction: f64,
    pub outlier_multiplier: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            n: 200,
            t: 6,
            beta: vec![1.0; 3],
            theta: vec![1.0; 3],
            rho: 0.3,
            sigma: 1.0,
            mu_scale: 1.0,
            nu_scale: 1.0,
            coordinates: CoordinateName::Uniform,
            clusters: 8,
            spread: 0.05,
            outlier_fraction: 0.0,
            outlier_multiplier: 10.0,
        }
    }
}

impl SimulateSection {
    /// Outlier cells are every `round(1/fraction)`-th stacked cell, so the
    /// mask is deterministic and independent of the seed.
    pub fn to_dgp(&self, seed: u64) -> CliResult<DgpConfig<f64>> {
        if self.beta.len() != self.theta.len() || self.beta.is_empty() {
            return Err(CliError::Usage("simulate.beta and simulate.theta must be non-empty and of equal length".into()));
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return Err(CliError::Usage("simulate.outlier_fraction must lie in [0, 1]".into()));
        }
        let nt = self.n * self.t;
        let outlier_mask = if self.outlier_fraction > 0.0 {
            let stride = (1.0 / self.outlier_fraction).round().max(1.0) as usize;
            (0..nt).map(|i| i % stride == stride / 2).collect()
        } else {
            Vec::new()
        };
        let cfg = DgpConfig {
            n: self.n,
            t: self.t,
            beta: self.beta.clone(),
            theta: self.theta.clone(),
            rho: self.rho,
            mu_scale: self.mu_scale,
            nu_scale: self.nu_scale,
            sigma: self.sigma,
            outlier_mask,
            outlier_multiplier: self.outlier_multiplier,
            coordinates: match self.coordinates {
                CoordinateName::Uniform => CoordinateScheme::UniformSquare,
                CoordinateName::Clustered => CoordinateScheme::Clustered {
                    clusters: self.clusters,
                    spread: self.spread,
                },
            },
            seed,
        };
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

impl RunConfig {
    /// Parses a TOML file. Relative paths inside it are resolved against the
    /// file's directory, and input files must exist.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| sdm_core::Error::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(q) = p.as_mut() {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        resolve(&mut cfg.out);
        resolve(&mut cfg.data.panel);
        resolve(&mut cfg.data.coordinates);
        resolve(&mut cfg.data.draws);
        resolve(&mut cfg.data.weights);
        for p in [&cfg.data.panel, &cfg.data.coordinates, &cfg.data.draws, &cfg.data.weights]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(CliError::MissingInput(p.clone()));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn schema(&self) -> PanelSchema {
        PanelSchema {
            region: self.data.region_column.clone(),
            period: self.data.period_column.clone(),
            dependent: self.data.dependent.clone(),
            regressors: self.data.regressors.clone(),
            delimiter: b',',
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn format(&self) -> ReportFormat {
        self.format.unwrap_or_default()
    }
}
