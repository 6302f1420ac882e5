//! Candidate marginal distributions for wall-thickness readings.
//!
//! Three families are supported: a Gaussian mixture fitted by EM with the
//! component count chosen by AIC, and the single-component Gumbel and
//! Weibull laws fitted by maximum likelihood. [`MarginalModel`] wraps any of
//! them together with the fit diagnostics needed for model comparison.

mod extreme;
mod mixture;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use extreme::{fit_gumbel_mle, fit_weibull_mle, GumbelDist, Orientation, WeibullDist};
pub use mixture::{
    fit_gm_em, fit_gm_em_detailed, select_gm_by_aic, select_gm_by_aic_detailed, EmConfig, EmFit, GaussianMixture,
    GmComponent, GmSelection, DEFAULT_SD_FLOOR_MM,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gm,
    Gumbel,
    Weibull,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Gm, Family::Gumbel, Family::Weibull];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Gm => "gm",
            Family::Gumbel => "gumbel",
            Family::Weibull => "weibull",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gm" => Ok(Family::Gm),
            "gumbel" => Ok(Family::Gumbel),
            "weibull" => Ok(Family::Weibull),
            other => Err(Error::InvalidInput(format!("unknown family '{other}'"))),
        }
    }
}

/// A fitted law of one of the three families.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    Gm(GaussianMixture),
    Gumbel(GumbelDist),
    Weibull(WeibullDist),
}

impl Distribution {
    pub fn family(&self) -> Family {
        match self {
            Distribution::Gm(_) => Family::Gm,
            Distribution::Gumbel(_) => Family::Gumbel,
            Distribution::Weibull(_) => Family::Weibull,
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Distribution::Gm(g) => g.n_params(),
            Distribution::Gumbel(_) | Distribution::Weibull(_) => 2,
        }
    }

    pub fn pdf(&self, t: f64) -> f64 {
        match self {
            Distribution::Gm(d) => d.pdf(t),
            Distribution::Gumbel(d) => d.pdf(t),
            Distribution::Weibull(d) => d.pdf(t),
        }
    }

    pub fn ln_pdf(&self, t: f64) -> f64 {
        match self {
            Distribution::Gm(d) => d.ln_pdf(t),
            Distribution::Gumbel(d) => d.ln_pdf(t),
            Distribution::Weibull(d) => d.ln_pdf(t),
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            Distribution::Gm(d) => d.cdf(t),
            Distribution::Gumbel(d) => d.cdf(t),
            Distribution::Weibull(d) => d.cdf(t),
        }
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        match self {
            Distribution::Gm(d) => d.quantile(u),
            Distribution::Gumbel(d) => d.quantile(u),
            Distribution::Weibull(d) => d.quantile(u),
        }
    }

    pub fn in_support(&self, t: f64) -> bool {
        match self {
            Distribution::Weibull(_) => t > 0.0 && t.is_finite(),
            _ => t.is_finite(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub log_likelihood: f64,
    pub n_params: usize,
    pub sample_size: usize,
}

/// A fitted marginal and the numbers AIC needs.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalModel {
    pub dist: Distribution,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalConfig {
    pub em: EmConfig,
    /// Largest mixture size tried during AIC selection.
    pub max_components: usize,
    pub gumbel_orientation: Orientation,
}

impl Default for MarginalConfig {
    fn default() -> Self {
        Self {
            em: EmConfig::default(),
            max_components: 8,
            gumbel_orientation: Orientation::Max,
        }
    }
}

impl MarginalModel {
    /// Wraps `dist`, computing diagnostics against `samples`.
    pub fn from_fit(dist: Distribution, samples: &[f64]) -> Result<Self> {
        let ll = log_likelihood_of(&dist, samples)?;
        Ok(Self {
            diagnostics: Diagnostics {
                log_likelihood: ll,
                n_params: dist.n_params(),
                sample_size: samples.len(),
            },
            dist,
        })
    }

    /// Fits the requested family to `samples`.
    pub fn fit(family: Family, samples: &[f64], cfg: &MarginalConfig) -> Result<Self> {
        let dist = match family {
            Family::Gm => Distribution::Gm(select_gm_by_aic(samples, cfg.max_components, &cfg.em)?),
            Family::Gumbel => Distribution::Gumbel(fit_gumbel_mle(samples, cfg.gumbel_orientation)?),
            Family::Weibull => Distribution::Weibull(fit_weibull_mle(samples)?),
        };
        Self::from_fit(dist, samples)
    }

    /// Stand-in for a sample with no spread: a law of the requested family
    /// concentrated around `value` with spread `spread`.
    pub fn concentrated(family: Family, value: f64, spread: f64, cfg: &MarginalConfig) -> Result<Self> {
        let dist = match family {
            Family::Gm => Distribution::Gm(GaussianMixture::single(value, spread)?),
            Family::Gumbel => Distribution::Gumbel(GumbelDist::new(value, spread, cfg.gumbel_orientation)?),
            // Weibull sd is about 1.28 scale / shape for large shapes.
            Family::Weibull => Distribution::Weibull(WeibullDist::new(value, 1.2825 * value / spread)?),
        };
        Self::from_fit(dist, &[value])
    }

    pub fn family(&self) -> Family {
        self.dist.family()
    }

    pub fn pdf(&self, t: f64) -> f64 {
        self.dist.pdf(t)
    }

    pub fn cdf(&self, t: f64) -> f64 {
        self.dist.cdf(t)
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        self.dist.quantile(u)
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> Result<f64> {
        log_likelihood_of(&self.dist, samples)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Σ log pdf. Weibull rejects samples outside its support; a zero density
/// elsewhere gives −∞.
pub fn log_likelihood(model: &MarginalModel, samples: &[f64]) -> Result<f64> {
    model.log_likelihood(samples)
}

fn log_likelihood_of(dist: &Distribution, samples: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for &t in samples {
        if !dist.in_support(t) {
            return Err(Error::OutsideSupport { value: t });
        }
        total += dist.ln_pdf(t);
    }
    Ok(total)
}

#[derive(Serialize, Deserialize)]
struct MarginalJson {
    family: Family,
    params: serde_json::Value,
    diagnostics: Diagnostics,
}

impl Serialize for MarginalModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::Error as _;
        let params = match &self.dist {
            Distribution::Gm(d) => serde_json::to_value(d),
            Distribution::Gumbel(d) => serde_json::to_value(d),
            Distribution::Weibull(d) => serde_json::to_value(d),
        }
        .map_err(S::Error::custom)?;
        MarginalJson {
            family: self.family(),
            params,
            diagnostics: self.diagnostics,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MarginalModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = MarginalJson::deserialize(d)?;
        let dist = match raw.family {
            Family::Gm => {
                let g: GaussianMixture = serde_json::from_value(raw.params).map_err(D::Error::custom)?;
                Distribution::Gm(GaussianMixture::new(g.components().to_vec()).map_err(D::Error::custom)?)
            }
            Family::Gumbel => {
                let g: GumbelDist = serde_json::from_value(raw.params).map_err(D::Error::custom)?;
                Distribution::Gumbel(GumbelDist::new(g.location, g.scale, g.orientation).map_err(D::Error::custom)?)
            }
            Family::Weibull => {
                let w: WeibullDist = serde_json::from_value(raw.params).map_err(D::Error::custom)?;
                Distribution::Weibull(WeibullDist::new(w.scale, w.shape).map_err(D::Error::custom)?)
            }
        };
        Ok(MarginalModel {
            dist,
            diagnostics: raw.diagnostics,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_likelihood_closed_form() {
        let m = MarginalModel::from_fit(Distribution::Gm(GaussianMixture::single(4.0, 1.0).unwrap()), &[4.0]).unwrap();
        let expect = (1.0 / (2.0 * std::f64::consts::PI).sqrt()).ln();
        assert!((m.log_likelihood(&[4.0]).unwrap() - expect).abs() < 1e-15);
        let both = m.log_likelihood(&[4.0, 5.5]).unwrap();
        let parts = m.log_likelihood(&[4.0]).unwrap() + m.log_likelihood(&[5.5]).unwrap();
        assert!((both - parts).abs() < 1e-14);
    }

    #[test]
    fn log_likelihood_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let gm = GaussianMixture::new(vec![
            GmComponent {
                weight: 0.25,
                mean: 6.0,
                sd: 1.1,
            },
            GmComponent {
                weight: 0.75,
                mean: 11.0,
                sd: 0.6,
            },
        ])
        .unwrap();
        let data: Vec<f64> = (0..200).map(|_| rng.gen_range(2.0..15.0)).collect();
        for dist in [
            Distribution::Gm(gm.clone()),
            Distribution::Gumbel(GumbelDist::new(10.0, 1.5, Orientation::Max).unwrap()),
            Distribution::Weibull(WeibullDist::new(10.0, 4.0).unwrap()),
        ] {
            let direct: f64 = data.iter().map(|&t| dist.pdf(t).ln()).sum();
            let m = MarginalModel::from_fit(dist, &data).unwrap();
            let ll = log_likelihood(&m, &data).unwrap();
            assert!((ll - direct).abs() <= 1e-12 * direct.abs(), "{ll} vs {direct}");
        }
    }

    #[test]
    fn weibull_rejects_nonpositive() {
        let m = MarginalModel::from_fit(Distribution::Weibull(WeibullDist::new(3.0, 2.0).unwrap()), &[1.0]).unwrap();
        assert!(matches!(
            m.log_likelihood(&[1.0, -0.5]),
            Err(Error::OutsideSupport { .. })
        ));
    }

    #[test]
    fn parameter_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..300)
            .map(|i| {
                if i % 3 == 0 {
                    rng.gen_range(3.0..5.0)
                } else {
                    rng.gen_range(9.0..11.0)
                }
            })
            .collect();
        let cfg = MarginalConfig {
            max_components: 3,
            ..Default::default()
        };
        let gm = MarginalModel::fit(Family::Gm, &xs, &cfg).unwrap();
        let Distribution::Gm(g) = &gm.dist else { panic!() };
        assert_eq!(gm.diagnostics.n_params, 3 * g.n_components() - 1);
        assert_eq!(
            MarginalModel::fit(Family::Gumbel, &xs, &cfg)
                .unwrap()
                .diagnostics
                .n_params,
            2
        );
        assert_eq!(
            MarginalModel::fit(Family::Weibull, &xs, &cfg)
                .unwrap()
                .diagnostics
                .n_params,
            2
        );
        assert_eq!(gm.diagnostics.sample_size, 300);
    }

    #[test]
    fn json_shape_and_round_trip() {
        let gm = GaussianMixture::new(vec![
            GmComponent {
                weight: 0.1234567890123456,
                mean: 6.000000000000001,
                sd: 1.1,
            },
            GmComponent {
                weight: 1.0 - 0.1234567890123456,
                mean: 11.0,
                sd: 0.6,
            },
        ])
        .unwrap();
        let models = [
            MarginalModel::from_fit(Distribution::Gm(gm), &[7.0, 9.0]).unwrap(),
            MarginalModel::from_fit(
                Distribution::Gumbel(GumbelDist::new(10.0, 1.5, Orientation::Min).unwrap()),
                &[7.0],
            )
            .unwrap(),
            MarginalModel::from_fit(Distribution::Weibull(WeibullDist::new(10.0, 4.0).unwrap()), &[7.0]).unwrap(),
        ];
        for m in models {
            let text = m.to_json().unwrap();
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["family"], m.family().as_str());
            assert!(v["params"].is_object());
            assert!(v["diagnostics"]["log_likelihood"].is_number());
            assert_eq!(MarginalModel::from_json(&text).unwrap(), m);
        }
    }

    #[test]
    fn family_parsing() {
        assert_eq!("GM".parse::<Family>().unwrap(), Family::Gm);
        assert_eq!("weibull".parse::<Family>().unwrap(), Family::Weibull);
        assert!("frechet".parse::<Family>().is_err());
    }

    #[test]
    fn concentrated_models_round_trip_their_value() {
        let cfg = MarginalConfig::default();
        for fam in Family::ALL {
            let m = MarginalModel::concentrated(fam, 12.0, 1e-3, &cfg).unwrap();
            let u = m.cdf(12.0);
            assert!(u > 0.0 && u < 1.0);
            assert!((m.quantile(u).unwrap() - 12.0).abs() < 1e-9);
        }
    }
}
