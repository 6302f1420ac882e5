//! End-to-end mapping: marginal fit, Gaussianization, GP interpolation and
//! back-transform, plus the shifted single-run experiment.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{self, GpConfig, GpModel, Hyperparams, WarpConfig};
use crate::grid::{apply_scan, rmse, CellMask, PipeGrid, ScanPattern, DEFAULT_SENSOR_LINES};
use crate::marginals::{Family, MarginalConfig, MarginalModel};
use crate::normal;

/// Probabilities are kept in [ε, 1 − ε] on both sides of the transform.
pub const CDF_EPS: f64 = 1e-12;

/// Spread used for the stand-in marginal of a constant sample, in mm.
const CONSTANT_SPREAD_MM: f64 = 1e-3;

/// Back-transformed predictions are kept in [this, grid maximum].
pub const MIN_PREDICTED_MM: f64 = 0.01;

/// Fewest observed cells [`predict_unscanned`] accepts.
pub const MIN_OBSERVED_CELLS: usize = gp::MIN_TRAIN_POINTS;

fn clamp_probability(u: f64) -> f64 {
    if !(CDF_EPS..=1.0 - CDF_EPS).contains(&u) {
        log::debug!("probability {u:e} clamped to [{CDF_EPS:e}, 1 - {CDF_EPS:e}]");
    }
    u.clamp(CDF_EPS, 1.0 - CDF_EPS)
}

/// Map between thickness and standard-normal scores through a marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformPair {
    pub marginal: MarginalModel,
}

impl TransformPair {
    pub fn new(marginal: MarginalModel) -> Self {
        Self { marginal }
    }

    /// z = Φ⁻¹(F(t)).
    pub fn forward(&self, t: f64) -> f64 {
        let u = clamp_probability(self.marginal.cdf(t));
        normal::quantile(u)
    }

    /// t = F⁻¹(Φ(z)).
    pub fn inverse(&self, z: f64) -> Result<f64> {
        if z.is_nan() {
            return Err(Error::InvalidInput("NaN normal score".into()));
        }
        self.marginal.quantile(clamp_probability(normal::cdf(z)))
    }
}

pub fn gaussianize(marginal: &MarginalModel, samples: &[f64]) -> Vec<f64> {
    let tp = TransformPair::new(marginal.clone());
    samples.iter().map(|&t| tp.forward(t)).collect()
}

pub fn degaussianize(marginal: &MarginalModel, z: &[f64]) -> Result<Vec<f64>> {
    let tp = TransformPair::new(marginal.clone());
    z.iter().map(|&v| tp.inverse(v)).collect()
}

/// Thickness interval obtained by mapping mean ± k·sd of the latent
/// posterior through the inverse transform.
pub fn credible_interval(marginal: &MarginalModel, latent: &gp::Prediction, k: f64) -> Result<(f64, f64)> {
    let tp = TransformPair::new(marginal.clone());
    let sd = latent.variance.max(0.0).sqrt();
    Ok((tp.inverse(latent.mean - k * sd)?, tp.inverse(latent.mean + k * sd)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub marginal: MarginalConfig,
    pub gp: GpConfig,
    /// Periods of the surface warp; derived from the geometry when absent.
    pub warp: Option<WarpConfig>,
}

/// A filled map with the models behind it.
#[derive(Debug, Clone)]
pub struct MapPrediction {
    pub predicted: PipeGrid,
    pub marginal: MarginalModel,
    /// Absent when there was nothing to interpolate or the data were
    /// constant.
    pub gp: Option<GpModel>,
    /// Latent posterior at each predicted cell, as (row, col, posterior).
    pub latent: Vec<(usize, usize, gp::Prediction)>,
}

fn fit_marginal(family: Family, values: &[f64], cfg: &MarginalConfig) -> Result<(MarginalModel, bool)> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo <= 1e-9 * hi.abs().max(1.0) {
        let m = MarginalModel::concentrated(family, values[0], CONSTANT_SPREAD_MM, cfg)?;
        return Ok((m, true));
    }
    Ok((MarginalModel::fit(family, values, cfg)?, false))
}

/// Fills the unobserved cells of `partial` with back-transformed GP
/// posterior means, clamped to the grid's thickness range. Observed cells
/// are copied unchanged.
pub fn predict_unscanned(partial: &PipeGrid, family: Family, cfg: &PipelineConfig) -> Result<MapPrediction> {
    let observed: Vec<(usize, usize, f64)> = partial.observed().collect();
    if observed.len() < MIN_OBSERVED_CELLS {
        return Err(Error::InsufficientSamples {
            needed: MIN_OBSERVED_CELLS,
            got: observed.len(),
        });
    }
    let values: Vec<f64> = observed.iter().map(|c| c.2).collect();
    let (marginal, constant) = fit_marginal(family, &values, &cfg.marginal)?;
    let blanks: Vec<(usize, usize)> = partial.unobserved().collect();
    if blanks.is_empty() {
        return Ok(MapPrediction {
            predicted: partial.clone(),
            marginal,
            gp: None,
            latent: vec![],
        });
    }
    let geometry = partial.geometry();
    if constant {
        let fill = blanks.iter().map(|&(r, c)| (r, c, values[0]));
        return Ok(MapPrediction {
            predicted: partial.filled(fill)?,
            marginal,
            gp: None,
            latent: vec![],
        });
    }

    let z = gaussianize(&marginal, &values);
    let locations: Vec<(f64, f64)> = observed.iter().map(|&(r, c, _)| geometry.centroid(r, c)).collect();
    let warp = cfg.warp.unwrap_or_else(|| WarpConfig::for_geometry(geometry));
    let model = gp::train(&locations, &z, &warp, &cfg.gp)?;

    let queries: Vec<(f64, f64)> = blanks.iter().map(|&(r, c)| geometry.centroid(r, c)).collect();
    let posterior = model.predict(&queries);
    let tp = TransformPair::new(marginal.clone());
    let ceiling = partial.max_thickness_mm();
    let mut fill = Vec::with_capacity(blanks.len());
    for (&(r, c), p) in blanks.iter().zip(&posterior) {
        let t = tp.inverse(p.mean)?;
        if !(MIN_PREDICTED_MM..=ceiling).contains(&t) {
            log::debug!("prediction {t} at ({r}, {c}) clamped to the grid range");
        }
        fill.push((r, c, t.clamp(MIN_PREDICTED_MM, ceiling)));
    }
    let predicted = partial.filled(fill)?;
    let latent = blanks.iter().zip(posterior).map(|(&(r, c), p)| (r, c, p)).collect();
    Ok(MapPrediction {
        predicted,
        marginal,
        gp: Some(model),
        latent,
    })
}

/// Fills each blank with the reading from the circumferentially nearest
/// observed row in the same column (ties averaged). Columns without any
/// reading get the overall mean.
pub fn nearest_line_baseline(partial: &PipeGrid) -> Result<PipeGrid> {
    let g = partial.geometry();
    let values = partial.observed_values();
    if values.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let overall = values.iter().sum::<f64>() / values.len() as f64;
    let n = g.n_circ;
    let mut fill = vec![];
    for (row, col) in partial.unobserved() {
        let mut best: Option<(usize, f64, usize)> = None;
        for r in 0..n {
            let Some(v) = partial.get(r, col) else { continue };
            let diff = row.abs_diff(r);
            let dist = diff.min(n - diff);
            best = match best {
                Some((d, s, k)) if d == dist => Some((d, s + v, k + 1)),
                Some((d, _, _)) if d < dist => best,
                _ => Some((dist, v, 1)),
            };
        }
        let value = best.map_or(overall, |(_, s, k)| s / k as f64);
        fill.push((row, col, value));
    }
    partial.filled(fill)
}

/// A ground-truth pipe and the scan runs to simulate on it.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub truth: PipeGrid,
    pub families: Vec<Family>,
    pub scan_shifts: Vec<i64>,
    pub sensor_lines: usize,
    pub pipeline: PipelineConfig,
    pub rng_seed: u64,
}

impl ExperimentSpec {
    /// All three families, shifts 0, 1 and 2, six evenly spaced lines.
    pub fn new(truth: PipeGrid, rng_seed: u64) -> Self {
        Self {
            truth,
            families: Family::ALL.to_vec(),
            scan_shifts: vec![0, 1, 2],
            sensor_lines: DEFAULT_SENSOR_LINES,
            pipeline: PipelineConfig::default(),
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.truth.is_fully_observed() {
            return Err(Error::InvalidInput("experiment truth must be fully observed".into()));
        }
        if self.families.is_empty() || self.scan_shifts.is_empty() {
            return Err(Error::InvalidInput(
                "experiment needs at least one family and one shift".into(),
            ));
        }
        let n_circ = self.truth.geometry().n_circ;
        if self.sensor_lines == 0 || self.sensor_lines >= n_circ {
            return Err(Error::InvalidInput(format!(
                "{} sensor lines on a {n_circ}-row grid leaves nothing to predict",
                self.sensor_lines
            )));
        }
        Ok(())
    }
}

/// Outcome of one (shift, family) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub shift: i64,
    pub family: Family,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marginal: Option<MarginalModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hyperparams: Option<Hyperparams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineCell {
    pub shift: i64,
    pub rmse_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cells: Vec<EvalCell>,
    /// Nearest-line baseline per shift.
    pub baseline: Vec<BaselineCell>,
}

impl EvalReport {
    pub fn get(&self, shift: i64, family: Family) -> Option<&EvalCell> {
        self.cells.iter().find(|c| c.shift == shift && c.family == family)
    }

    /// Mean RMSE of a family over the shifts that succeeded.
    pub fn mean_rmse(&self, family: Family) -> Option<f64> {
        let v: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.family == family)
            .filter_map(|c| c.rmse_mm)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn mean_baseline_rmse(&self) -> Option<f64> {
        (!self.baseline.is_empty())
            .then(|| self.baseline.iter().map(|b| b.rmse_mm).sum::<f64>() / self.baseline.len() as f64)
    }

    /// `shift,family,rmse_mm`; failed runs leave the rmse field empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "shift,family,rmse_mm")?;
        for c in &self.cells {
            match c.rmse_mm {
                Some(r) => writeln!(w, "{},{},{}", c.shift, c.family, r)?,
                None => writeln!(w, "{},{},", c.shift, c.family)?,
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = vec![];
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Seed for one run, depending only on the base seed, the shift and the
/// family so that runs do not depend on evaluation order.
pub fn cell_seed(seed: u64, shift: i64, family: Family) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let tag = family
        .as_str()
        .bytes()
        .fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(b as u64));
    mix(mix(mix(seed) ^ shift as u64) ^ tag)
}

/// Scans the truth at each shift, predicts the blanks with each family and
/// scores the blanks. A failing run is recorded and the rest continue.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<EvalReport> {
    spec.validate()?;
    let n_circ = spec.truth.geometry().n_circ;
    let mut cells = vec![];
    let mut baseline = vec![];
    for &shift in &spec.scan_shifts {
        let pattern = ScanPattern::evenly_spaced(n_circ, spec.sensor_lines, shift);
        let partial = apply_scan(&spec.truth, &pattern)?;
        let blanks: CellMask = partial.mask().not();
        let base = nearest_line_baseline(&partial)?;
        baseline.push(BaselineCell {
            shift,
            rmse_mm: rmse(&base, &spec.truth, &blanks)?,
        });
        for &family in &spec.families {
            let seed = cell_seed(spec.rng_seed, shift, family);
            let mut cfg = spec.pipeline;
            cfg.gp.rng_seed = seed;
            cfg.marginal.em.rng_seed = seed;
            let outcome = predict_unscanned(&partial, family, &cfg)
                .and_then(|p| Ok((rmse(&p.predicted, &spec.truth, &blanks)?, p)));
            let cell = match outcome {
                Ok((r, p)) => EvalCell {
                    shift,
                    family,
                    rmse_mm: Some(r),
                    hyperparams: p.gp.as_ref().map(|m| *m.hyperparams()),
                    marginal: Some(p.marginal),
                    error: None,
                },
                Err(e) => {
                    log::warn!("shift {shift}, {family}: {e}");
                    EvalCell {
                        shift,
                        family,
                        rmse_mm: None,
                        marginal: None,
                        hyperparams: None,
                        error: Some(e.to_string()),
                    }
                }
            };
            cells.push(cell);
        }
    }
    Ok(EvalReport { cells, baseline })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PipeGeometry;
    use crate::marginals::{Distribution, GaussianMixture, GmComponent, GumbelDist, Orientation, WeibullDist};

    fn models() -> Vec<MarginalModel> {
        let gm = GaussianMixture::new(vec![
            GmComponent {
                weight: 0.7,
                mean: 12.0,
                sd: 0.5,
            },
            GmComponent {
                weight: 0.3,
                mean: 8.0,
                sd: 1.2,
            },
        ])
        .unwrap();
        [
            Distribution::Gm(gm),
            Distribution::Gumbel(GumbelDist::new(11.0, 0.8, Orientation::Max).unwrap()),
            Distribution::Weibull(WeibullDist::new(11.5, 9.0).unwrap()),
        ]
        .into_iter()
        .map(|d| MarginalModel::from_fit(d, &[10.0]).unwrap())
        .collect()
    }

    #[test]
    fn median_maps_to_zero() {
        for m in models() {
            let med = m.quantile(0.5).unwrap();
            assert!(gaussianize(&m, &[med])[0].abs() < 1e-9);
        }
    }

    #[test]
    fn transform_round_trip() {
        for m in models() {
            let ts: Vec<f64> = (1..100).map(|i| m.quantile(i as f64 / 100.0).unwrap()).collect();
            let back = degaussianize(&m, &gaussianize(&m, &ts)).unwrap();
            for (a, b) in ts.iter().zip(back) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn extreme_scores_are_clamped() {
        let m = &models()[0];
        let z = gaussianize(m, &[-1e6, 1e6]);
        assert!(z.iter().all(|v| v.is_finite()));
        assert!(degaussianize(m, &[40.0, -40.0]).unwrap().iter().all(|v| v.is_finite()));
    }

    fn small_truth() -> PipeGrid {
        let g = PipeGeometry::tiled(12, 10, 50.0).unwrap();
        PipeGrid::from_fn(g, 30.0, |r, c| {
            10.0 + (r as f64 * std::f64::consts::TAU / 12.0).sin() + 0.1 * c as f64
        })
        .unwrap()
    }

    #[test]
    fn fully_observed_input_is_returned_as_is() {
        let truth = small_truth();
        let p = predict_unscanned(&truth, Family::Gm, &PipelineConfig::default()).unwrap();
        assert_eq!(p.predicted, truth);
        assert!(p.gp.is_none());
    }

    #[test]
    fn constant_pipe_predicts_constant() {
        let g = PipeGeometry::tiled(12, 10, 50.0).unwrap();
        let truth = PipeGrid::from_fn(g, 30.0, |_, _| 9.5).unwrap();
        let partial = apply_scan(&truth, &ScanPattern::new(vec![3], 0)).unwrap();
        for fam in Family::ALL {
            let p = predict_unscanned(&partial, fam, &PipelineConfig::default()).unwrap();
            for (_, _, v) in p.predicted.observed() {
                assert!((v - 9.5).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn observed_cells_pass_through() {
        let truth = small_truth();
        let partial = apply_scan(&truth, &ScanPattern::evenly_spaced(12, 4, 1)).unwrap();
        let p = predict_unscanned(&partial, Family::Gumbel, &PipelineConfig::default()).unwrap();
        assert!(p.predicted.is_fully_observed());
        for (r, c, v) in partial.observed() {
            assert_eq!(p.predicted.get(r, c), Some(v));
        }
        assert!(p.latent.iter().all(|(_, _, q)| q.variance >= 0.0));
    }

    #[test]
    fn baseline_copies_nearest_row() {
        let truth = small_truth();
        let partial = apply_scan(&truth, &ScanPattern::new(vec![0, 6], 0)).unwrap();
        let b = nearest_line_baseline(&partial).unwrap();
        assert_eq!(b.get(2, 4), truth.get(0, 4));
        assert_eq!(b.get(11, 4), truth.get(0, 4));
        assert_eq!(b.get(7, 1), truth.get(6, 1));
        let tie = (truth.get(0, 2).unwrap() + truth.get(6, 2).unwrap()) / 2.0;
        assert_eq!(b.get(3, 2), Some(tie));
    }

    #[test]
    fn cell_seeds_differ_and_are_stable() {
        let a = cell_seed(42, 0, Family::Gm);
        assert_eq!(a, cell_seed(42, 0, Family::Gm));
        assert_ne!(a, cell_seed(42, 1, Family::Gm));
        assert_ne!(a, cell_seed(42, 0, Family::Weibull));
        assert_ne!(a, cell_seed(43, 0, Family::Gm));
    }

    #[test]
    fn experiment_on_flat_pipe_is_exact() {
        let g = PipeGeometry::tiled(12, 8, 50.0).unwrap();
        let truth = PipeGrid::from_fn(g, 30.0, |_, _| 11.0).unwrap();
        let report = run_experiment(&ExperimentSpec::new(truth, 7)).unwrap();
        assert_eq!(report.cells.len(), 9);
        for c in &report.cells {
            assert!(c.rmse_mm.unwrap() < 1e-3, "{c:?}");
        }
        assert!(report.to_csv_string().starts_with("shift,family,rmse_mm\n0,gm,"));
    }
}
