//! Gaussian-process regression over the unrolled pipe surface.

pub mod kernel;
pub mod linalg;
pub mod optimize;

use serde::{Deserialize, Serialize};

pub use kernel::{kernel, warp_location, Hyperparams, WarpConfig, WarpedPoint};
pub use linalg::Cholesky;
pub use optimize::{fit_hyperparams, nll, nll_and_grad, FitOutcome, GpConfig};

use crate::error::{Error, Result};

/// Minimum training set size for [`train`].
pub const MIN_TRAIN_POINTS: usize = 4;

/// Posterior mean and (latent) variance at a query location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

/// A GP conditioned on training data. Immutable once built.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GpModelData", into = "GpModelData")]
pub struct GpModel {
    warp: WarpConfig,
    hyper: Hyperparams,
    locations: Vec<(f64, f64)>,
    points: Vec<WarpedPoint>,
    targets: Vec<f64>,
    mean_const: f64,
    chol: Cholesky,
    alpha: Vec<f64>,
    fit: Option<FitOutcome>,
}

/// On-disk form: the factorisation is recomputed on load.
#[derive(Serialize, Deserialize)]
struct GpModelData {
    warp: WarpConfig,
    hyper: Hyperparams,
    mean_const: f64,
    locations: Vec<(f64, f64)>,
    targets: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fit: Option<FitOutcome>,
}

impl From<GpModel> for GpModelData {
    fn from(m: GpModel) -> Self {
        Self {
            warp: m.warp,
            hyper: m.hyper,
            mean_const: m.mean_const,
            locations: m.locations,
            targets: m.targets,
            fit: m.fit,
        }
    }
}

impl TryFrom<GpModelData> for GpModel {
    type Error = Error;

    fn try_from(d: GpModelData) -> Result<Self> {
        let mut m = GpModel::condition(d.warp, d.hyper, d.locations, d.targets, d.mean_const)?;
        m.fit = d.fit;
        Ok(m)
    }
}

fn check_locations(locations: &[(f64, f64)]) -> Result<()> {
    match locations.iter().find(|(c, l)| !(c.is_finite() && l.is_finite())) {
        Some(loc) => Err(Error::InvalidInput(format!("non-finite location {loc:?}"))),
        None => Ok(()),
    }
}

impl GpModel {
    /// Conditions a GP with fixed hyperparameters on the given data.
    pub fn condition(
        warp: WarpConfig,
        hyper: Hyperparams,
        locations: Vec<(f64, f64)>,
        targets: Vec<f64>,
        mean_const: f64,
    ) -> Result<Self> {
        warp.validate()?;
        hyper.validate()?;
        check_locations(&locations)?;
        if locations.len() != targets.len() {
            return Err(Error::InvalidInput(format!(
                "{} locations but {} targets",
                locations.len(),
                targets.len()
            )));
        }
        if locations.is_empty() {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        if !mean_const.is_finite() || targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("non-finite target or mean".into()));
        }
        let points: Vec<WarpedPoint> = locations.iter().map(|&l| warp_location(l, &warp)).collect();
        let n = points.len();
        let chol = Cholesky::new(&optimize::covariance(&points, &hyper), n)?;
        let y: Vec<f64> = targets.iter().map(|t| t - mean_const).collect();
        let alpha = chol.solve(&y);
        Ok(Self {
            warp,
            hyper,
            locations,
            points,
            targets,
            mean_const,
            chol,
            alpha,
            fit: None,
        })
    }

    pub fn warp(&self) -> &WarpConfig {
        &self.warp
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn mean_const(&self) -> f64 {
        self.mean_const
    }

    pub fn locations(&self) -> &[(f64, f64)] {
        &self.locations
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn factorization(&self) -> &Cholesky {
        &self.chol
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Outcome of the hyperparameter search, when the model was trained.
    pub fn fit_outcome(&self) -> Option<&FitOutcome> {
        self.fit.as_ref()
    }

    /// Negative log marginal likelihood of the training data.
    pub fn nll(&self) -> f64 {
        let z = self
            .chol
            .solve_lower(&self.targets.iter().map(|t| t - self.mean_const).collect::<Vec<_>>());
        let n = self.points.len() as f64;
        0.5 * z.iter().map(|v| v * v).sum::<f64>()
            + 0.5 * self.chol.log_det()
            + 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    /// Posterior mean and variance of the latent field at each query.
    pub fn predict(&self, queries: &[(f64, f64)]) -> Vec<Prediction> {
        let prior = self.hyper.signal_sd * self.hyper.signal_sd;
        queries
            .iter()
            .map(|&q| {
                let p = warp_location(q, &self.warp);
                let k: Vec<f64> = self.points.iter().map(|t| kernel(&p, t, &self.hyper)).collect();
                let mean = self.mean_const + k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
                let v = self.chol.solve_lower(&k);
                let raw = prior - v.iter().map(|x| x * x).sum::<f64>();
                if raw < -1e-10 * prior.max(1.0) {
                    log::warn!("posterior variance {raw:e} below zero at {q:?}");
                }
                Prediction {
                    mean,
                    variance: raw.clamp(0.0, prior),
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Starting hyperparameters derived from the data: σ from the target
/// spread, length scales a fifth of each axis' chord extent, noise a tenth
/// of σ.
pub fn default_init(points: &[WarpedPoint], targets: &[f64], noise_floor: f64) -> Hyperparams {
    let n = targets.len().max(1) as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let sd = (targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 1e-6 { sd } else { 1.0 };
    let extent = |axis: usize| {
        let mut m: f64 = 0.0;
        for a in points {
            for b in points.iter().step_by((points.len() / 64).max(1)) {
                m = m.max(kernel::axis_sq_dists(a, b)[axis]);
            }
        }
        (0.2 * m.sqrt()).clamp(0.01, 10.0)
    };
    Hyperparams {
        signal_sd: sd,
        length_scales: [extent(0), extent(1)],
        noise_sd: (0.1 * sd).max(noise_floor),
    }
}

/// Warps the locations, sets the constant mean to the target average,
/// fits the hyperparameters and conditions on the data.
pub fn train(locations: &[(f64, f64)], targets: &[f64], warp: &WarpConfig, cfg: &GpConfig) -> Result<GpModel> {
    warp.validate()?;
    check_locations(locations)?;
    if locations.len() < MIN_TRAIN_POINTS {
        return Err(Error::InsufficientSamples {
            needed: MIN_TRAIN_POINTS,
            got: locations.len(),
        });
    }
    let points: Vec<WarpedPoint> = locations.iter().map(|&l| warp_location(l, warp)).collect();
    let init = cfg
        .init
        .unwrap_or_else(|| default_init(&points, targets, cfg.noise_floor));
    let outcome = fit_hyperparams(&points, targets, &init, cfg)?;
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let mut model = GpModel::condition(*warp, outcome.hyper, locations.to_vec(), targets.to_vec(), mean)?;
    model.fit = Some(outcome);
    Ok(model)
}
