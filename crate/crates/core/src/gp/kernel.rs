use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PipeGeometry;

/// A location after periodic warping: `(sin, cos)` for the circumferential
/// axis followed by `(sin, cos)` for the longitudinal axis.
pub type WarpedPoint = [f64; 4];

/// Periods of the two surface axes, in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpConfig {
    pub periods: [f64; 2],
}

/// Longitudinal period as a multiple of the section length. Large enough
/// that the axis behaves as if it did not wrap.
pub const LONGITUDINAL_PERIOD_FACTOR: f64 = 4.0;

impl WarpConfig {
    pub fn new(circ_period_mm: f64, long_period_mm: f64) -> Result<Self> {
        let w = Self {
            periods: [circ_period_mm, long_period_mm],
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.periods.iter().all(|p| p.is_finite() && *p > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "warp periods must be positive, got {:?}",
                self.periods
            )))
        }
    }

    /// Circumferential period equal to the row circumference, longitudinal
    /// period a few section lengths.
    pub fn for_geometry(g: &PipeGeometry) -> Self {
        Self {
            periods: [
                g.circumference_mm(),
                LONGITUDINAL_PERIOD_FACTOR * g.length_mm.max(g.n_long as f64 * g.sensor_pitch_mm),
            ],
        }
    }
}

/// Maps `(circ_mm, long_mm)` onto two unit circles.
pub fn warp_location(loc: (f64, f64), warp: &WarpConfig) -> WarpedPoint {
    let angle = |x: f64, period: f64| {
        let a = std::f64::consts::TAU * x.rem_euclid(period) / period;
        a.sin_cos()
    };
    let (s0, c0) = angle(loc.0, warp.periods[0]);
    let (s1, c1) = angle(loc.1, warp.periods[1]);
    [s0, c0, s1, c1]
}

/// Hyperparameters of the Matérn-3/2 covariance plus observation noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub signal_sd: f64,
    /// Circumferential and longitudinal length scales in warped units.
    pub length_scales: [f64; 2],
    pub noise_sd: f64,
}

impl Hyperparams {
    pub fn new(signal_sd: f64, length_circ: f64, length_long: f64, noise_sd: f64) -> Result<Self> {
        let h = Self {
            signal_sd,
            length_scales: [length_circ, length_long],
            noise_sd,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if pos(self.signal_sd)
            && self.length_scales.iter().all(|&l| pos(l))
            && self.noise_sd.is_finite()
            && self.noise_sd >= 0.0
        {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid hyperparameters {self:?}")))
        }
    }

    pub(crate) fn to_array(self) -> [f64; 4] {
        [
            self.signal_sd,
            self.length_scales[0],
            self.length_scales[1],
            self.noise_sd,
        ]
    }

    pub(crate) fn from_array(a: [f64; 4]) -> Self {
        Self {
            signal_sd: a[0],
            length_scales: [a[1], a[2]],
            noise_sd: a[3],
        }
    }
}

/// Squared chord lengths per axis between two warped points.
#[inline]
pub(crate) fn axis_sq_dists(a: &WarpedPoint, b: &WarpedPoint) -> [f64; 2] {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    let d3 = a[3] - b[3];
    [d0 * d0 + d1 * d1, d2 * d2 + d3 * d3]
}

#[inline]
pub(crate) fn scaled_distance(sq: [f64; 2], hyper: &Hyperparams) -> f64 {
    let [l0, l1] = hyper.length_scales;
    (sq[0] / (l0 * l0) + sq[1] / (l1 * l1)).sqrt()
}

#[inline]
pub(crate) fn matern32(d: f64, variance: f64) -> f64 {
    let r = 3f64.sqrt() * d;
    variance * (1.0 + r) * (-r).exp()
}

/// Anisotropic Matérn-3/2 covariance σ²(1 + √3 d) e^{−√3 d}, with
/// d² = Σ_k ‖Δp_k‖² / η_k² over the two warped axis pairs.
pub fn kernel(a: &WarpedPoint, b: &WarpedPoint, hyper: &Hyperparams) -> f64 {
    let d = scaled_distance(axis_sq_dists(a, b), hyper);
    matern32(d, hyper.signal_sd * hyper.signal_sd)
}

/// Kernel value and its derivatives with respect to σ, η₁ and η₂.
#[inline]
pub(crate) fn kernel_with_grad(sq: [f64; 2], hyper: &Hyperparams) -> (f64, [f64; 3]) {
    let var = hyper.signal_sd * hyper.signal_sd;
    let d = scaled_distance(sq, hyper);
    let r = 3f64.sqrt() * d;
    let e = (-r).exp();
    let k = var * (1.0 + r) * e;
    let [l0, l1] = hyper.length_scales;
    // ∂k/∂η = 3σ² e^{−√3 d} s / η³, finite at d = 0
    (
        k,
        [
            2.0 * k / hyper.signal_sd,
            3.0 * var * e * sq[0] / (l0 * l0 * l0),
            3.0 * var * e * sq[1] / (l1 * l1 * l1),
        ],
    )
}
