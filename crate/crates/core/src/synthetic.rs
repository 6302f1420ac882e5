//! Seeded ground-truth pipes: a nominal wall with Gaussian corrosion pits
//! and a smooth correlated thickness variation on top.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{PipeGeometry, PipeGrid, DEFAULT_MAX_THICKNESS_MM};

/// Thinnest wall the generator will emit.
pub const MIN_WALL_MM: f64 = 0.1;

/// Pits are cut off beyond this many radii.
const PIT_TRUNCATION: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub geometry: PipeGeometry,
    pub nominal_thickness_mm: f64,
    pub patch_count: usize,
    pub patch_depth_range_mm: (f64, f64),
    pub patch_radius_range_mm: (f64, f64),
    pub smooth_noise_sd_mm: f64,
    pub correlation_length_mm: (f64, f64),
    pub rng_seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if !(self.nominal_thickness_mm.is_finite() && self.nominal_thickness_mm > 0.0) {
            return bad("nominal thickness must be positive");
        }
        let (dlo, dhi) = self.patch_depth_range_mm;
        if !(dlo >= 0.0 && dhi >= dlo && dhi < self.nominal_thickness_mm) {
            return bad("patch depth range must satisfy 0 <= lo <= hi < nominal thickness");
        }
        let (rlo, rhi) = self.patch_radius_range_mm;
        if !(rlo > 0.0 && rhi >= rlo && rhi.is_finite()) {
            return bad("patch radius range must satisfy 0 < lo <= hi");
        }
        if !(self.smooth_noise_sd_mm >= 0.0 && self.smooth_noise_sd_mm.is_finite()) {
            return bad("smooth noise sd must be nonnegative");
        }
        let (lc, ll) = self.correlation_length_mm;
        if !(lc > 0.0 && ll > 0.0 && lc.is_finite() && ll.is_finite()) {
            return bad("correlation lengths must be positive");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// One corrosion pit, a Gaussian depression truncated at three radii.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pit {
    pub circ_mm: f64,
    pub long_mm: f64,
    pub depth_mm: f64,
    pub radius_mm: f64,
}

/// Total pit depth at every cell centroid, row-major. Circumferential
/// distances wrap around the pipe.
pub fn carve_pits(geometry: &PipeGeometry, pits: &[Pit]) -> Vec<f64> {
    let around = geometry.circumference_mm();
    let mut depth = vec![0.0; geometry.n_cells()];
    for pit in pits {
        let cutoff = PIT_TRUNCATION * pit.radius_mm;
        for row in 0..geometry.n_circ {
            for col in 0..geometry.n_long {
                let (x, y) = geometry.centroid(row, col);
                let dx = (x - pit.circ_mm).rem_euclid(around);
                let dx = dx.min(around - dx);
                let dy = y - pit.long_mm;
                let r2 = dx * dx + dy * dy;
                if r2 <= cutoff * cutoff {
                    depth[row * geometry.n_long + col] +=
                        pit.depth_mm * (-0.5 * r2 / (pit.radius_mm * pit.radius_mm)).exp();
                }
            }
        }
    }
    depth
}

/// Unit-variance Gaussian weights on integer lags, truncated at 4 lengths.
fn smoothing_weights(corr_cells: f64) -> Vec<f64> {
    let half = (4.0 * corr_cells).ceil().max(1.0) as i64;
    let w: Vec<f64> = (-half..=half)
        .map(|k| (-0.5 * (k as f64 / corr_cells).powi(2)).exp())
        .collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    w.into_iter().map(|v| v / norm).collect()
}

/// Stationary unit-variance field with Gaussian correlation: periodic around
/// the circumference, padded and cropped along the axis.
fn correlated_field(geometry: &PipeGeometry, corr_mm: (f64, f64), rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (nc, nl) = (geometry.n_circ, geometry.n_long);
    let wc = smoothing_weights(corr_mm.0 / geometry.sensor_pitch_mm);
    let wl = smoothing_weights(corr_mm.1 / geometry.sensor_pitch_mm);
    let hc = (wc.len() / 2) as i64;
    let hl = (wl.len() / 2) as i64;
    let pad = hl as usize;
    let wide = nl + 2 * pad;

    let white: Vec<f64> = (0..nc * wide).map(|_| rng.sample(StandardNormal)).collect();

    let mut along = vec![0.0; nc * nl];
    for r in 0..nc {
        for c in 0..nl {
            let centre = (c + pad) as i64;
            along[r * nl + c] = wl
                .iter()
                .enumerate()
                .map(|(k, w)| w * white[r * wide + (centre + k as i64 - hl) as usize])
                .sum();
        }
    }
    let mut out = vec![0.0; nc * nl];
    for r in 0..nc {
        for c in 0..nl {
            out[r * nl + c] = wc
                .iter()
                .enumerate()
                .map(|(k, w)| {
                    let rr = (r as i64 + k as i64 - hc).rem_euclid(nc as i64) as usize;
                    w * along[rr * nl + c]
                })
                .sum();
        }
    }
    out
}

/// Fully observed synthetic pipe. Identical specs give identical grids.
///
/// The smooth variation is centred three standard deviations below nominal
/// so that the upper clamp rarely binds.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<PipeGrid> {
    spec.validate()?;
    let g = spec.geometry;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);

    let around = g.circumference_mm();
    let along = g.n_long as f64 * g.sensor_pitch_mm;
    let pick = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        if hi > lo {
            rng.gen_range(lo..=hi)
        } else {
            lo
        }
    };
    let pits: Vec<Pit> = (0..spec.patch_count)
        .map(|_| Pit {
            circ_mm: rng.gen_range(0.0..around),
            long_mm: rng.gen_range(0.0..along),
            depth_mm: pick(&mut rng, spec.patch_depth_range_mm),
            radius_mm: pick(&mut rng, spec.patch_radius_range_mm),
        })
        .collect();
    let depth = carve_pits(&g, &pits);

    let sd = spec.smooth_noise_sd_mm;
    let noise = if sd > 0.0 {
        correlated_field(&g, spec.correlation_length_mm, &mut rng)
    } else {
        vec![0.0; g.n_cells()]
    };

    let nominal = spec.nominal_thickness_mm;
    let base = nominal - 3.0 * sd;
    let max = nominal.max(DEFAULT_MAX_THICKNESS_MM);
    PipeGrid::from_fn(g, max, |r, c| {
        let i = r * g.n_long + c;
        (base - depth[i] + sd * noise[i]).clamp(MIN_WALL_MM, nominal)
    })
}
