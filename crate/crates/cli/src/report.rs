//! Report tables in the layouts of the estimate, impact and convergence
//! tables, rendered either as aligned text or as comma-delimited records.
//!
//! Both renderings print the same formatted strings, so a delimited report
//! re-parses to exactly the values shown in the text one.

use std::fmt::Write as _;

use sdm_core::diagnostics::DiagnosticsReport;
use sdm_core::effects::{EffectStats, ImpactSummary};
use sdm_core::marginal::Selection;
use sdm_core::scalar::normal_cdf;

use crate::config::ReportFormat;

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    /// Panel heading; `None` for single-panel tables.
    pub heading: Option<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    /// Header of every column, the label column included.
    pub columns: Vec<String>,
    pub sections: Vec<Section>,
    pub notes: Vec<String>,
}

impl Table {
    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Text => self.render_text(),
            ReportFormat::Delimited => self.render_delimited(),
        }
    }

    pub fn render_text(&self) -> String {
        let ncol = self.columns.len();
        let mut width: Vec<usize> = self.columns.iter().map(|c| c.chars().count()).collect();
        for row in self.sections.iter().flat_map(|s| &s.rows) {
            for (w, cell) in width.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let total: usize = width.iter().sum::<usize>() + 2 * (ncol - 1);
        let rule = "-".repeat(total);
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, (cell, w)) in cells.iter().zip(&width).enumerate() {
                if i == 0 {
                    let _ = write!(s, "{cell:<w$}");
                } else {
                    let _ = write!(s, "  {cell:>w$}");
                }
            }
            s.trim_end().to_string()
        };
        let mut out = String::new();
        out.push_str(&self.title);
        out.push('\n');
        out.push_str(&rule);
        out.push('\n');
        out.push_str(&line(&self.columns));
        out.push('\n');
        out.push_str(&rule);
        out.push('\n');
        for (i, sec) in self.sections.iter().enumerate() {
            if let Some(h) = &sec.heading {
                if i > 0 {
                    out.push('\n');
                }
                out.push_str(h);
                out.push('\n');
            }
            for row in &sec.rows {
                out.push_str(&line(row));
                out.push('\n');
            }
        }
        out.push_str(&rule);
        out.push('\n');
        for n in &self.notes {
            out.push_str(n);
            out.push('\n');
        }
        out
    }

    /// Header plus one record per row; multi-panel tables gain a leading
    /// `panel` column. Notes follow as `#` lines.
    pub fn render_delimited(&self) -> String {
        let panelled = self.sections.iter().any(|s| s.heading.is_some());
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = Vec::new();
        if panelled {
            header.push("panel".to_string());
        }
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for sec in &self.sections {
            for row in &sec.rows {
                let mut rec = Vec::new();
                if panelled {
                    rec.push(sec.heading.clone().unwrap_or_default());
                }
                rec.extend(row.iter().cloned());
                w.write_record(&rec).expect("in-memory write");
            }
        }
        let mut out = String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 input");
        for n in &self.notes {
            out.push_str("# ");
            out.push_str(n);
            out.push('\n');
        }
        out
    }
}

fn two_sided(t: f64) -> f64 {
    2.0 * (1.0 - normal_cdf(t.abs()))
}

fn f4(x: f64) -> String {
    format!("{x:.4}")
}

/// Row labels `name (beta_q)`, `W*name (theta_q)`, `rho`, `sigma2`.
pub fn parameter_labels(var_names: &[String]) -> Vec<String> {
    let mut out: Vec<String> = var_names
        .iter()
        .enumerate()
        .map(|(i, n)| format!("{n} (beta_{})", i + 1))
        .collect();
    out.extend(var_names.iter().enumerate().map(|(i, n)| format!("W*{n} (theta_{})", i + 1)));
    out.push("rho".into());
    out.push("sigma2".into());
    out
}

/// Posterior summary of one coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub sd: f64,
}

impl Estimate {
    pub fn from_chain(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        Self { mean, sd: var.sqrt() }
    }

    pub fn t_stat(&self) -> f64 {
        self.mean / self.sd
    }
}

/// Fit statistics printed beneath the estimate table.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub var_names: Vec<String>,
    /// `beta_1..beta_Q, theta_1..theta_Q, rho`.
    pub estimates: Vec<Estimate>,
    pub k: usize,
    pub n: usize,
    pub t: usize,
    pub log_marginal: f64,
    pub r_squared: f64,
    pub sigma2: f64,
    pub draws: usize,
    pub burn_in: usize,
    pub rho_acceptance: f64,
}

pub fn estimates_table(s: &FitSummary) -> Table {
    let labels = parameter_labels(&s.var_names);
    let rows = s
        .estimates
        .iter()
        .zip(&labels)
        .map(|(e, l)| vec![l.clone(), f4(e.mean), f4(e.t_stat()), f4(two_sided(e.t_stat()))])
        .collect();
    Table {
        title: "Posterior parameter estimates of the spatial Durbin panel data model".into(),
        columns: vec![
            "Variable (Parameter)".into(),
            "Posterior Mean".into(),
            "Asymp. t-stat.".into(),
            "z-prob.".into(),
        ],
        sections: vec![Section { heading: None, rows }],
        notes: vec![
            format!(
                "k-nearest neighbour weights with k={}; N={} regions, T={} periods, Q={} regressors.",
                s.k,
                s.n,
                s.t,
                s.var_names.len()
            ),
            format!(
                "{} draws, first {} discarded as burn-in; rho acceptance rate {:.3}.",
                s.draws, s.burn_in, s.rho_acceptance
            ),
            format!("log-marginal likelihood={:.2}", s.log_marginal),
            format!("R-square={:.4}", s.r_squared),
            format!("sigma-square={:.4}", s.sigma2),
            "t-stat. is posterior mean / posterior sd; z-prob. is its two-sided standard normal tail.".into(),
            "R-square is the squared correlation of demeaned y with rho*Wy + X*beta + WX*theta at posterior means.".into(),
        ],
    }
}

fn effect_row(name: &str, e: &EffectStats) -> Vec<String> {
    vec![
        name.to_string(),
        f4(e.mean),
        f4(e.t_stat),
        f4(e.p_value),
        f4(e.lower_05),
        f4(e.upper_95),
    ]
}

pub fn impacts_table(s: &ImpactSummary) -> Table {
    let panel = |heading: &str, pick: fn(&sdm_core::effects::VariableImpacts) -> &EffectStats| Section {
        heading: Some(heading.to_string()),
        rows: s.variables.iter().map(|v| effect_row(&v.name, pick(v))).collect(),
    };
    Table {
        title: "Direct, indirect, and total impact estimates".into(),
        columns: vec![
            "Impact Estimate".into(),
            "Posterior Mean".into(),
            "t-stat.".into(),
            "t-prob.".into(),
            "Lower 0.05".into(),
            "Upper 0.95".into(),
        ],
        sections: vec![
            panel("A. Direct Impact Estimates", |v| &v.direct),
            panel("B. Indirect Impact Estimates", |v| &v.indirect),
            panel("C. Total Impact Estimates", |v| &v.total),
        ],
        notes: vec![
            format!(
                "{} simulated parameter draws ({}, rho {}).",
                s.ndraws,
                match s.mode {
                    sdm_core::effects::ImpactMode::NormalApprox => "normal approximation",
                    sdm_core::effects::ImpactMode::Resample => "resampled MCMC draws",
                },
                match s.rho_source {
                    sdm_core::effects::RhoSource::Draws => "from the posterior",
                    sdm_core::effects::RhoSource::Fixed => "fixed at its posterior mean",
                }
            ),
            format!("Largest |direct + indirect - total| over draws: {:.1e}.", s.max_additivity_error),
        ],
    }
}

pub fn diagnostics_table(d: &DiagnosticsReport<f64>, var_names: &[String]) -> Table {
    let labels = parameter_labels(var_names);
    let rows = d
        .rows
        .iter()
        .zip(&labels)
        .map(|(r, l)| {
            vec![
                l.clone(),
                f4(r.mean),
                f4(r.sd),
                format!("{:.6}", r.mc_error),
                format!("{:.2}", r.tau),
                format!("{:.1}", r.ess),
                format!("{:.3}", r.geweke_z),
                format!("{:.3}", r.geweke_p),
                format!("{:.3}", r.geweke_p_two_sided),
            ]
        })
        .collect();
    Table {
        title: "MCMC convergence diagnostics for the spatial Durbin panel data model".into(),
        columns: vec![
            "Parameter".into(),
            "Mean".into(),
            "StdDev".into(),
            "MC Error".into(),
            "Tau".into(),
            "ESS".into(),
            "Geweke Z".into(),
            "Geweke p".into(),
            "p (two-sided)".into(),
        ],
        sections: vec![Section { heading: None, rows }],
        notes: vec![
            format!(
                "{} retained draws. Geweke compares the first {:.0}% with the last {:.0}% of the chain.",
                d.draws,
                100.0 * d.frac_first,
                100.0 * d.frac_last
            ),
            "Geweke p = 2*Phi(|Z|) - 1; p (two-sided) = 2*(1 - Phi(|Z|)).".into(),
            "Tau: initial-monotone-sequence autocorrelation time; ESS = draws / max(Tau, 1); MC Error = StdDev / sqrt(ESS).".into(),
        ],
    }
}

pub fn selection_table(s: &Selection) -> Table {
    let rows = s
        .scores
        .iter()
        .map(|m| vec![m.k.to_string(), format!("{:.4}", m.log_marginal), format!("{:.6}", m.posterior_prob)])
        .collect();
    Table {
        title: "Log-marginal likelihoods of k-nearest neighbour weight matrices".into(),
        columns: vec!["k".into(), "log_marginal".into(), "posterior_prob".into()],
        sections: vec![Section { heading: None, rows }],
        notes: vec![format!("selected k={}", s.best_k)],
    }
}
