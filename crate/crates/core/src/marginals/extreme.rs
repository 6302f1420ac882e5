//! Gumbel and Weibull marginals with maximum-likelihood fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ITER: usize = 200;

/// Which tail the Gumbel law describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Largest-extreme form, F(t) = exp(−exp(−(t − μ)/β)).
    #[default]
    Max,
    /// Smallest-extreme form, F(t) = 1 − exp(−exp((t − μ)/β)).
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GumbelDist {
    pub location: f64,
    pub scale: f64,
    #[serde(default)]
    pub orientation: Orientation,
}

impl GumbelDist {
    pub fn new(location: f64, scale: f64, orientation: Orientation) -> Result<Self> {
        if !(location.is_finite() && scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidInput(format!(
                "Gumbel needs finite location and positive scale, got ({location}, {scale})"
            )));
        }
        Ok(Self {
            location,
            scale,
            orientation,
        })
    }

    /// Standardised variable in the largest-extreme convention.
    fn z(&self, t: f64) -> f64 {
        match self.orientation {
            Orientation::Max => (t - self.location) / self.scale,
            Orientation::Min => -(t - self.location) / self.scale,
        }
    }

    pub fn ln_pdf(&self, t: f64) -> f64 {
        let z = self.z(t);
        -self.scale.ln() - z - (-z).exp()
    }

    pub fn pdf(&self, t: f64) -> f64 {
        self.ln_pdf(t).exp()
    }

    pub fn cdf(&self, t: f64) -> f64 {
        let z = self.z(t);
        match self.orientation {
            Orientation::Max => (-(-z).exp()).exp(),
            Orientation::Min => -(-(-z).exp()).exp_m1(),
        }
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Probability(u));
        }
        Ok(match self.orientation {
            Orientation::Max => self.location - self.scale * (-u.ln()).ln(),
            Orientation::Min => self.location + self.scale * (-(-u).ln_1p()).ln(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullDist {
    pub scale: f64,
    pub shape: f64,
}

impl WeibullDist {
    pub fn new(scale: f64, shape: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0 && shape.is_finite() && shape > 0.0) {
            return Err(Error::InvalidInput(format!(
                "Weibull needs positive scale and shape, got ({scale}, {shape})"
            )));
        }
        Ok(Self { scale, shape })
    }

    pub fn ln_pdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let y = t / self.scale;
        self.shape.ln() - self.scale.ln() + (self.shape - 1.0) * y.ln() - y.powf(self.shape)
    }

    pub fn pdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.ln_pdf(t).exp()
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        -(-(t / self.scale).powf(self.shape)).exp_m1()
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Probability(u));
        }
        Ok(self.scale * (-(-u).ln_1p()).powf(1.0 / self.shape))
    }
}

fn check_finite(samples: &[f64]) -> Result<()> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    if let Some(&bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite sample {bad}")));
    }
    Ok(())
}

fn range(samples: &[f64]) -> (f64, f64) {
    samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

/// Finds the root of an increasing function on (0, ∞) by Newton steps kept
/// inside a bisection bracket. `f` returns value and derivative; `start`
/// is the first guess.
fn increasing_root<F>(f: F, start: f64, what: &'static str) -> Result<f64>
where
    F: Fn(f64) -> (f64, f64),
{
    let mut lo = start;
    let mut hi = start;
    let mut iters = 0;
    while f(lo).0 > 0.0 {
        lo *= 0.5;
        iters += 1;
        if iters > MAX_ITER || lo < 1e-300 {
            return Err(Error::NoConvergence { what, iters });
        }
    }
    while f(hi).0 < 0.0 {
        hi *= 2.0;
        iters += 1;
        if iters > MAX_ITER || !hi.is_finite() {
            return Err(Error::NoConvergence { what, iters });
        }
    }
    let mut x = start.clamp(lo, hi);
    for _ in 0..MAX_ITER {
        let (g, dg) = f(x);
        if g.abs() < 1e-10 {
            return Ok(x);
        }
        if g < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - g / dg;
        x = if newton > lo && newton < hi && dg > 0.0 {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-15 * hi {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence { what, iters: MAX_ITER })
}

/// Maximum-likelihood Gumbel fit.
///
/// Profiling out the location leaves one score equation in the scale,
///   g(β) = β − mean(x) + Σ x e^{−x/β} / Σ e^{−x/β},
/// whose derivative 1 + Var_w(x)/β² is positive, so the root is unique.
pub fn fit_gumbel_mle(samples: &[f64], orientation: Orientation) -> Result<GumbelDist> {
    check_finite(samples)?;
    let xs: Vec<f64> = match orientation {
        Orientation::Max => samples.to_vec(),
        Orientation::Min => samples.iter().map(|v| -v).collect(),
    };
    let (lo, hi) = range(&xs);
    if hi - lo <= 0.0 {
        return Err(Error::Degenerate(
            "constant sample: Gumbel scale collapses to zero".into(),
        ));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    // Weights e^{−(x − min)/β} stay in (0, 1].
    let moments = |beta: f64| {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for &x in &xs {
            let w = (-(x - lo) / beta).exp();
            s0 += w;
            s1 += w * x;
            s2 += w * x * x;
        }
        (s0, s1 / s0, s2 / s0)
    };
    let score = |beta: f64| {
        let (_, m1, m2) = moments(beta);
        let var = (m2 - m1 * m1).max(0.0);
        (beta - mean + m1, 1.0 + var / (beta * beta))
    };
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let start = (sd * 6f64.sqrt() / std::f64::consts::PI).max(1e-12);
    let beta = increasing_root(score, start, "Gumbel scale")?;
    let (s0, _, _) = moments(beta);
    let loc = lo - beta * (s0 / n).ln();
    let loc = match orientation {
        Orientation::Max => loc,
        Orientation::Min => -loc,
    };
    GumbelDist::new(loc, beta, orientation)
}

/// Maximum-likelihood Weibull fit.
///
/// The shape solves Σ x^k ln x / Σ x^k − 1/k − mean(ln x) = 0, increasing in
/// k; the scale then follows in closed form. Data are divided by their
/// maximum first, which leaves the equation unchanged.
pub fn fit_weibull_mle(samples: &[f64]) -> Result<WeibullDist> {
    check_finite(samples)?;
    if let Some(&bad) = samples.iter().find(|&&v| v <= 0.0) {
        return Err(Error::OutsideSupport { value: bad });
    }
    let (lo, hi) = range(samples);
    if hi - lo <= 0.0 {
        return Err(Error::Degenerate("constant sample: Weibull shape diverges".into()));
    }
    let n = samples.len() as f64;
    let logs: Vec<f64> = samples.iter().map(|v| (v / hi).ln()).collect();
    let mean_log = logs.iter().sum::<f64>() / n;
    let moments = |k: f64| {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for &l in &logs {
            let w = (k * l).exp();
            s0 += w;
            s1 += w * l;
            s2 += w * l * l;
        }
        (s0, s1 / s0, s2 / s0)
    };
    let score = |k: f64| {
        let (_, m1, m2) = moments(k);
        let var = (m2 - m1 * m1).max(0.0);
        (m1 - 1.0 / k - mean_log, var + 1.0 / (k * k))
    };
    let sd_log = (logs.iter().map(|l| (l - mean_log).powi(2)).sum::<f64>() / n).sqrt();
    let start = (1.2825 / sd_log).clamp(1e-3, 1e6);
    let shape = increasing_root(score, start, "Weibull shape")?;
    let (s0, _, _) = moments(shape);
    let scale = hi * (s0 / n).powf(1.0 / shape);
    WeibullDist::new(scale, shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn draw(seed: u64, n: usize, inv: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| inv(rng.gen_range(f64::EPSILON..1.0))).collect()
    }

    #[test]
    fn weibull_cdf_at_scale() {
        let w = WeibullDist::new(7.0, 2.3).unwrap();
        assert!((w.cdf(7.0) - (1.0 - (-1f64).exp())).abs() < 1e-15);
        assert!((w.cdf(7.0) - 0.6321).abs() < 1e-4);
        assert_eq!(w.cdf(-1.0), 0.0);
        assert_eq!(w.pdf(0.0), 0.0);
    }

    #[test]
    fn gumbel_cdf_at_location() {
        let g = GumbelDist::new(3.0, 2.0, Orientation::Max).unwrap();
        assert!((g.cdf(3.0) - (-1f64).exp()).abs() < 1e-15);
        let m = GumbelDist::new(3.0, 2.0, Orientation::Min).unwrap();
        assert!((m.cdf(3.0) - (1.0 - (-1f64).exp())).abs() < 1e-15);
        // min form mirrors the max form
        for t in [-2.0, 0.5, 3.0, 7.0] {
            let mirrored = GumbelDist::new(-3.0, 2.0, Orientation::Max).unwrap();
            assert!((m.cdf(t) - (1.0 - mirrored.cdf(-t))).abs() < 1e-14);
            assert!((m.pdf(t) - mirrored.pdf(-t)).abs() < 1e-14);
        }
    }

    #[test]
    fn round_trips() {
        let dists = [
            GumbelDist::new(10.0, 2.0, Orientation::Max).unwrap(),
            GumbelDist::new(10.0, 2.0, Orientation::Min).unwrap(),
        ];
        let w = WeibullDist::new(10.0, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let u: f64 = rng.gen_range(1e-9..1.0 - 1e-9);
            for d in &dists {
                assert!((d.cdf(d.quantile(u).unwrap()) - u).abs() < 1e-12);
            }
            assert!((w.cdf(w.quantile(u).unwrap()) - u).abs() < 1e-12);
        }
        for t in [4.0, 8.0, 10.0, 12.0, 15.0] {
            for d in &dists {
                assert!((d.quantile(d.cdf(t)).unwrap() - t).abs() < 1e-8);
            }
            assert!((w.quantile(w.cdf(t)).unwrap() - t).abs() < 1e-8);
        }
    }

    #[test]
    fn pdfs_integrate_to_one() {
        let g = GumbelDist::new(10.0, 2.0, Orientation::Max).unwrap();
        let w = WeibullDist::new(10.0, 3.0).unwrap();
        let n = 200_000;
        let (a, b) = (-20.0, 80.0);
        let h = (b - a) / n as f64;
        let area = |f: &dyn Fn(f64) -> f64| (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h;
        assert!((area(&|t| g.pdf(t)) - 1.0).abs() < 1e-6);
        assert!((area(&|t| w.pdf(t)) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gumbel_mle_recovers_truth() {
        let truth = GumbelDist::new(10.0, 2.0, Orientation::Max).unwrap();
        let xs = draw(42, 100_000, |u| truth.quantile(u).unwrap());
        let fit = fit_gumbel_mle(&xs, Orientation::Max).unwrap();
        assert!((fit.location / 10.0 - 1.0).abs() < 0.02, "{fit:?}");
        assert!((fit.scale / 2.0 - 1.0).abs() < 0.02, "{fit:?}");
    }

    #[test]
    fn gumbel_min_mle_recovers_truth() {
        let truth = GumbelDist::new(15.0, 1.5, Orientation::Min).unwrap();
        let xs = draw(43, 50_000, |u| truth.quantile(u).unwrap());
        let fit = fit_gumbel_mle(&xs, Orientation::Min).unwrap();
        assert!((fit.location / 15.0 - 1.0).abs() < 0.02, "{fit:?}");
        assert!((fit.scale / 1.5 - 1.0).abs() < 0.02, "{fit:?}");
    }

    #[test]
    fn weibull_mle_recovers_truth() {
        let truth = WeibullDist::new(10.0, 3.0).unwrap();
        let xs = draw(7, 100_000, |u| truth.quantile(u).unwrap());
        let fit = fit_weibull_mle(&xs).unwrap();
        assert!((fit.scale / 10.0 - 1.0).abs() < 0.02, "{fit:?}");
        assert!((fit.shape / 3.0 - 1.0).abs() < 0.02, "{fit:?}");
    }

    #[test]
    fn mle_is_a_stationary_point() {
        // Nudging either parameter must not raise the log-likelihood.
        let truth = WeibullDist::new(5.0, 1.7).unwrap();
        let xs = draw(3, 2000, |u| truth.quantile(u).unwrap());
        let fit = fit_weibull_mle(&xs).unwrap();
        let ll = |d: WeibullDist| xs.iter().map(|&x| d.ln_pdf(x)).sum::<f64>();
        let base = ll(fit);
        for (ds, dk) in [(1e-4, 0.0), (-1e-4, 0.0), (0.0, 1e-4), (0.0, -1e-4)] {
            let nudged = WeibullDist::new(fit.scale * (1.0 + ds), fit.shape * (1.0 + dk)).unwrap();
            assert!(ll(nudged) <= base + 1e-9);
        }
        let g = GumbelDist::new(2.0, 0.7, Orientation::Max).unwrap();
        let ys = draw(4, 2000, |u| g.quantile(u).unwrap());
        let fit = fit_gumbel_mle(&ys, Orientation::Max).unwrap();
        let llg = |d: GumbelDist| ys.iter().map(|&x| d.ln_pdf(x)).sum::<f64>();
        let base = llg(fit);
        for (dl, ds) in [(1e-4, 0.0), (-1e-4, 0.0), (0.0, 1e-4), (0.0, -1e-4)] {
            let nudged = GumbelDist::new(fit.location + dl, fit.scale * (1.0 + ds), Orientation::Max).unwrap();
            assert!(llg(nudged) <= base + 1e-9);
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            fit_gumbel_mle(&[3.0; 10], Orientation::Max),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(fit_weibull_mle(&[3.0; 10]), Err(Error::Degenerate(_))));
        assert!(matches!(
            fit_weibull_mle(&[3.0, 0.0, 2.0]),
            Err(Error::OutsideSupport { .. })
        ));
        assert!(fit_gumbel_mle(&[1.0], Orientation::Max).is_err());
        assert!(fit_gumbel_mle(&[1.0, f64::NAN], Orientation::Max).is_err());
    }
}
