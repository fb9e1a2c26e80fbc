//! Bayesian estimation of heteroscedastic spatial Durbin panel models.
//!
//! Numerical routines are generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix the scalar to `f64`, which is what file I/O and the
//! command-line tool use.

pub mod dgp;
pub mod diagnostics;
pub mod effects;
pub mod error;
pub mod linalg;
pub mod logdet;
pub mod marginal;
pub mod mcmc;
pub mod panel;
pub mod scalar;
pub mod weights;

pub use error::{Error, ErrorKind, Result};
pub use logdet::LogDetMethod;
pub use scalar::Scalar;

pub type Dense = linalg::Dense<f64>;
pub type PanelData = panel::PanelData<f64>;
pub type WeightMatrix = weights::WeightMatrix<f64>;
pub type LogDetGrid = logdet::LogDetGrid<f64>;
pub type PriorSpec = mcmc::PriorSpec<f64>;
pub type SdmProblem = mcmc::SdmProblem<f64>;
pub type SamplerState = mcmc::SamplerState<f64>;
pub type McmcDraws = mcmc::McmcDraws<f64>;
pub type DgpConfig = dgp::DgpConfig<f64>;
pub type Simulation = dgp::Simulation<f64>;
pub type EffectsAtPoint = effects::EffectsAtPoint<f64>;
pub type DiagnosticsRow = diagnostics::DiagnosticsRow<f64>;
pub type DiagnosticsReport = diagnostics::DiagnosticsReport<f64>;
