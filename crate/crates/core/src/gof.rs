//! Goodness of fit: Kolmogorov–Smirnov statistic and critical values, AIC,
//! and the three-way comparison of marginal families.
//!
//! Note that the critical values are the classical ones for a fully
//! specified null. Here the parameters are estimated from the same sample,
//! so the test is conservative (a Lilliefors-type situation); the
//! comparison reproduces the usual practice regardless.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginals::{Family, MarginalConfig, MarginalModel};

/// Smallest sample for which the asymptotic critical value is used.
pub const MIN_ASYMPTOTIC_N: usize = 35;

/// Sup-distance between the model cdf and the empirical step cdf. Both sides
/// of every step are checked.
pub fn ks_statistic(model: &MarginalModel, samples: &[f64]) -> f64 {
    ks_statistic_with(|t| model.cdf(t), samples)
}

pub fn ks_statistic_with<F: Fn(f64) -> f64>(cdf: F, samples: &[f64]) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &t)| {
            let f = cdf(t);
            let above = (i as f64 + 1.0) / n - f;
            let below = f - i as f64 / n;
            above.abs().max(below.abs())
        })
        .fold(0.0, f64::max)
}

/// Limiting Kolmogorov distribution P(√n·D ≤ x).
pub fn kolmogorov_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < 0.3 {
        // The alternating series converges slowly here; use the dual form.
        let s: f64 = (1..=20)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (-(m * m) * std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp()
            })
            .sum();
        return (2.0 * std::f64::consts::PI).sqrt() / x * s;
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * (k * k) as f64 * x * x).exp()
        })
        .sum();
    1.0 - 2.0 * s
}

/// c(α) with K(c) = 1 − α. Tabulated for the common levels.
pub fn kolmogorov_constant(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Probability(alpha));
    }
    for (a, c) in [(0.10, 1.2238), (0.05, 1.3581), (0.01, 1.6276)] {
        if (alpha - a).abs() < 1e-12 {
            return Ok(c);
        }
    }
    let target = 1.0 - alpha;
    let (mut lo, mut hi) = (0.0f64, 10.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Asymptotic critical value c(α)/√n.
pub fn ks_critical_value(n: usize, alpha: f64) -> Result<f64> {
    if n < MIN_ASYMPTOTIC_N {
        return Err(Error::InsufficientSamples {
            needed: MIN_ASYMPTOTIC_N,
            got: n,
        });
    }
    Ok(kolmogorov_constant(alpha)? / (n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub alpha: f64,
    pub n: usize,
    pub reject: bool,
}

impl KsResult {
    pub fn new(statistic: f64, n: usize, alpha: f64) -> Result<Self> {
        let critical_value = ks_critical_value(n, alpha)?;
        Ok(Self {
            statistic,
            critical_value,
            alpha,
            n,
            reject: statistic > critical_value,
        })
    }
}

pub fn ks_test(model: &MarginalModel, samples: &[f64], alpha: f64) -> Result<KsResult> {
    KsResult::new(ks_statistic(model, samples), samples.len(), alpha)
}

/// Akaike information criterion 2P − 2·ln L, given ln L.
pub fn aic(log_likelihood: f64, n_params: usize) -> f64 {
    2.0 * n_params as f64 - 2.0 * log_likelihood
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofConfig {
    pub marginal: MarginalConfig,
    pub alpha: f64,
}

impl Default for GofConfig {
    fn default() -> Self {
        Self {
            marginal: MarginalConfig::default(),
            alpha: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyGof {
    pub family: Family,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks: Option<KsResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<MarginalModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub families: Vec<FamilyGof>,
    pub selected_family: Family,
}

impl GofReport {
    pub fn get(&self, family: Family) -> Option<&FamilyGof> {
        self.families.iter().find(|f| f.family == family)
    }

    pub fn ks(&self, family: Family) -> Option<f64> {
        self.get(family).and_then(|f| f.ks).map(|k| k.statistic)
    }

    pub fn aic(&self, family: Family) -> Option<f64> {
        self.get(family).and_then(|f| f.aic)
    }

    /// Families ordered by AIC, failed fits last.
    pub fn ranked(&self) -> Vec<&FamilyGof> {
        let mut rows: Vec<&FamilyGof> = self.families.iter().collect();
        rows.sort_by(|a, b| match (a.aic, b.aic) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.family.cmp(&b.family),
        });
        rows
    }

    /// Aligned text table, best AIC first.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:>6} {:>10} {:>10} {:>7} {:>12}",
            "family", "P", "KS", "critical", "reject", "AIC"
        );
        for row in self.ranked() {
            match (&row.ks, row.aic, &row.model) {
                (Some(ks), Some(aic), Some(m)) => {
                    let _ = writeln!(
                        out,
                        "{:<8} {:>6} {:>10.4} {:>10.4} {:>7} {:>12.1}",
                        row.family.as_str(),
                        m.diagnostics.n_params,
                        ks.statistic,
                        ks.critical_value,
                        if ks.reject { "yes" } else { "no" },
                        aic
                    );
                }
                _ => {
                    let _ = writeln!(
                        out,
                        "{:<8} fit failed: {}",
                        row.family.as_str(),
                        row.error.as_deref().unwrap_or("unknown")
                    );
                }
            }
        }
        let _ = writeln!(out, "selected: {}", self.selected_family);
        out
    }
}

/// Fits each listed family and scores it with K-S and AIC.
pub fn compare_families(samples: &[f64], families: &[Family], cfg: &GofConfig) -> Result<GofReport> {
    if samples.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    // Validates n against the asymptotic regime once for all families.
    ks_critical_value(samples.len(), cfg.alpha)?;
    let mut rows = vec![];
    for &family in families {
        let row = match MarginalModel::fit(family, samples, &cfg.marginal) {
            Ok(model) => FamilyGof {
                family,
                ks: Some(ks_test(&model, samples, cfg.alpha)?),
                aic: Some(aic(model.diagnostics.log_likelihood, model.diagnostics.n_params)),
                model: Some(model),
                error: None,
            },
            Err(e) => FamilyGof {
                family,
                ks: None,
                aic: None,
                model: None,
                error: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    let selected = rows
        .iter()
        .filter_map(|r| r.aic.map(|a| (r.family, a)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(f, _)| f)
        .ok_or_else(|| {
            Error::AllFitsFailed(
                rows.iter()
                    .filter_map(|r| r.error.as_ref().map(|e| format!("{}: {e}", r.family)))
                    .collect::<Vec<_>>()
                    .join("; "),
            )
        })?;
    Ok(GofReport {
        families: rows,
        selected_family: selected,
    })
}

/// Three-way comparison of Gaussian mixture, Gumbel and Weibull.
pub fn compare_marginals(samples: &[f64], cfg: &GofConfig) -> Result<GofReport> {
    compare_families(samples, &Family::ALL, cfg)
}
