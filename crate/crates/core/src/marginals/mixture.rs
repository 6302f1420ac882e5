//! One-dimensional Gaussian mixtures and their EM fit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gof::aic;
use crate::normal;

/// Smallest component standard deviation EM is allowed to reach.
pub const DEFAULT_SD_FLOOR_MM: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Weighted sum of normal densities, components sorted by mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    components: Vec<GmComponent>,
}

impl GaussianMixture {
    pub fn new(mut components: Vec<GmComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("mixture needs at least one component".into()));
        }
        for c in &components {
            if !(c.weight > 0.0 && c.weight <= 1.0 && c.mean.is_finite() && c.sd > 0.0 && c.sd.is_finite()) {
                return Err(Error::InvalidInput(format!("invalid mixture component {c:?}")));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("mixture weights sum to {total}")));
        }
        components.sort_by(|a, b| a.mean.total_cmp(&b.mean).then(a.sd.total_cmp(&b.sd)));
        Ok(Self { components })
    }

    pub fn single(mean: f64, sd: f64) -> Result<Self> {
        Self::new(vec![GmComponent { weight: 1.0, mean, sd }])
    }

    pub fn components(&self) -> &[GmComponent] {
        &self.components
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// 3N − 1 free parameters.
    pub fn n_params(&self) -> usize {
        3 * self.components.len() - 1
    }

    pub fn pdf(&self, t: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * normal::pdf((t - c.mean) / c.sd) / c.sd)
            .sum()
    }

    /// Log density via log-sum-exp, finite far into the tails.
    pub fn ln_pdf(&self, t: f64) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|c| {
                let z = (t - c.mean) / c.sd;
                c.weight.ln() - c.sd.ln() - 0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln()
            })
            .collect();
        log_sum_exp(&terms)
    }

    pub fn cdf(&self, t: f64) -> f64 {
        let v: f64 = self
            .components
            .iter()
            .map(|c| c.weight * normal::cdf((t - c.mean) / c.sd))
            .sum();
        v.clamp(0.0, 1.0)
    }

    /// Inverse cdf by bracketed Newton iteration with bisection fallback.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Probability(u));
        }
        let z = normal::quantile(u).abs() + 1.0;
        let mut lo = self
            .components
            .iter()
            .map(|c| c.mean - z * c.sd)
            .fold(f64::INFINITY, f64::min);
        let mut hi = self
            .components
            .iter()
            .map(|c| c.mean + z * c.sd)
            .fold(f64::NEG_INFINITY, f64::max);
        // Every component cdf is <= u at lo and >= u at hi, so the bracket holds.
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.cdf(x) - u;
            if f == 0.0 {
                return Ok(x);
            }
            if f < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let step = f / self.pdf(x);
            let newton = x - step;
            if newton > lo && newton < hi {
                x = newton;
                if step.abs() <= 1e-15 * (1.0 + x.abs()) {
                    return Ok(x);
                }
            } else {
                x = 0.5 * (lo + hi);
            }
            if hi - lo <= 4.0 * f64::EPSILON * (1.0 + x.abs()) {
                break;
            }
        }
        Ok(x)
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Relative log-likelihood gain below which EM stops.
    pub tol: f64,
    pub restarts: usize,
    pub rng_seed: u64,
    pub sd_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
            restarts: 8,
            rng_seed: 0,
            sd_floor: DEFAULT_SD_FLOOR_MM,
        }
    }
}

/// Result of an EM fit together with its convergence record.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub mixture: GaussianMixture,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Log-likelihood after every EM step, one trace per uninterrupted run
    /// (each restart, and again after any component removal).
    pub traces: Vec<Vec<f64>>,
}

struct Params {
    weight: Vec<f64>,
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl Params {
    fn len(&self) -> usize {
        self.weight.len()
    }

    fn remove(&mut self, k: usize) {
        self.weight.remove(k);
        self.mean.remove(k);
        self.sd.remove(k);
        let total: f64 = self.weight.iter().sum();
        self.weight.iter_mut().for_each(|w| *w /= total);
    }
}

fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// Equal-count chunks of the sorted sample.
fn quantile_init(sorted: &[f64], k: usize, floor: f64) -> Params {
    let n = sorted.len();
    let mut p = Params {
        weight: vec![],
        mean: vec![],
        sd: vec![],
    };
    for j in 0..k {
        let chunk = &sorted[j * n / k..(j + 1) * n / k];
        p.weight.push(chunk.len() as f64 / n as f64);
        p.mean.push(chunk.iter().sum::<f64>() / chunk.len() as f64);
        p.sd.push(sample_sd(chunk).max(floor));
    }
    p
}

/// k-means++ seeding followed by hard assignment to the nearest centre.
fn kmeanspp_init(xs: &[f64], k: usize, floor: f64, rng: &mut ChaCha8Rng) -> Params {
    let mut centres = vec![xs[rng.gen_range(0..xs.len())]];
    let mut d2: Vec<f64> = xs.iter().map(|x| (x - centres[0]).powi(2)).collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut pick = xs.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            xs[pick]
        } else {
            xs[rng.gen_range(0..xs.len())]
        };
        centres.push(next);
        for (d, x) in d2.iter_mut().zip(xs) {
            *d = d.min((x - next).powi(2));
        }
    }
    let mut groups: Vec<Vec<f64>> = vec![vec![]; k];
    for &x in xs {
        let j = (0..k)
            .min_by(|&a, &b| (x - centres[a]).abs().total_cmp(&(x - centres[b]).abs()))
            .unwrap();
        groups[j].push(x);
    }
    let spread = sample_sd(xs).max(floor);
    let mut p = Params {
        weight: vec![],
        mean: vec![],
        sd: vec![],
    };
    for (j, g) in groups.iter().enumerate() {
        if g.is_empty() {
            p.weight.push(0.5 / xs.len() as f64);
            p.mean.push(centres[j]);
            p.sd.push(spread);
        } else {
            p.weight.push(g.len() as f64);
            p.mean.push(g.iter().sum::<f64>() / g.len() as f64);
            p.sd.push(sample_sd(g).max(floor));
        }
    }
    let total: f64 = p.weight.iter().sum();
    p.weight.iter_mut().for_each(|w| *w /= total);
    p
}

/// E-step: fills `resp` (row-major n × k) and returns the log-likelihood.
fn e_step(xs: &[f64], p: &Params, resp: &mut [f64]) -> f64 {
    let k = p.len();
    let log_norm = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let consts: Vec<f64> = (0..k).map(|j| p.weight[j].ln() - p.sd[j].ln() - log_norm).collect();
    let mut ll = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let row = &mut resp[i * k..(i + 1) * k];
        for j in 0..k {
            let z = (x - p.mean[j]) / p.sd[j];
            row[j] = consts[j] - 0.5 * z * z;
        }
        let lse = log_sum_exp(row);
        for r in row.iter_mut() {
            *r = (*r - lse).exp();
        }
        ll += lse;
    }
    ll
}

/// M-step. Returns the index of a component that lost all its mass, if any.
fn m_step(xs: &[f64], p: &mut Params, resp: &[f64], floor: f64) -> Option<usize> {
    let k = p.len();
    let n = xs.len() as f64;
    let mut dead = None;
    for j in 0..k {
        let mut nk = 0.0;
        let mut sx = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let r = resp[i * k + j];
            nk += r;
            sx += r * x;
        }
        // Under one effective sample the component has collapsed.
        if nk < 1.0 {
            dead.get_or_insert(j);
            continue;
        }
        let mean = sx / nk;
        let mut sv = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            sv += resp[i * k + j] * (x - mean).powi(2);
        }
        p.weight[j] = nk / n;
        p.mean[j] = mean;
        p.sd[j] = (sv / nk).sqrt().max(floor);
    }
    let total: f64 = p.weight.iter().sum();
    p.weight.iter_mut().for_each(|w| *w /= total);
    dead
}

struct RunResult {
    params: Params,
    ll: f64,
    iterations: usize,
    traces: Vec<Vec<f64>>,
}

fn run_em(xs: &[f64], mut p: Params, cfg: &EmConfig) -> RunResult {
    let mut traces = vec![];
    let mut iterations = 0;
    loop {
        let k = p.len();
        let mut resp = vec![0.0; xs.len() * k];
        let mut trace = vec![e_step(xs, &p, &mut resp)];
        let mut removed = false;
        while iterations < cfg.max_iter {
            iterations += 1;
            if let Some(j) = m_step(xs, &mut p, &resp, cfg.sd_floor) {
                p.remove(j);
                removed = true;
                break;
            }
            let ll = e_step(xs, &p, &mut resp);
            let prev = *trace.last().unwrap();
            debug_assert!(
                ll >= prev - 1e-9 * (1.0 + prev.abs()),
                "EM log-likelihood decreased: {prev} -> {ll}"
            );
            trace.push(ll);
            if ll - prev < cfg.tol * prev.abs().max(1.0) {
                break;
            }
        }
        traces.push(trace);
        if !removed || p.len() == 0 {
            let ll = *traces.last().unwrap().last().unwrap();
            return RunResult {
                params: p,
                ll,
                iterations,
                traces,
            };
        }
        log::debug!("EM dropped a collapsed component, continuing with {}", p.len());
    }
}

/// Fits an `n_components` mixture by EM, keeping the best of several
/// initialisations. Collapsed components are dropped, so the result may
/// have fewer components than requested.
pub fn fit_gm_em(samples: &[f64], n_components: usize, cfg: &EmConfig) -> Result<GaussianMixture> {
    fit_gm_em_detailed(samples, n_components, cfg).map(|f| f.mixture)
}

pub fn fit_gm_em_detailed(samples: &[f64], n_components: usize, cfg: &EmConfig) -> Result<EmFit> {
    if n_components == 0 {
        return Err(Error::InvalidInput("need at least one component".into()));
    }
    if samples.len() < 3 * n_components {
        return Err(Error::InsufficientSamples {
            needed: 3 * n_components,
            got: samples.len(),
        });
    }
    if let Some(&bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite sample {bad}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);

    let restarts = cfg.restarts.max(1);
    let mut best: Option<RunResult> = None;
    let mut all_traces = vec![];
    for restart in 0..restarts {
        let init = if restart == 0 || n_components == 1 {
            quantile_init(&sorted, n_components, cfg.sd_floor)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            rng.set_stream(restart as u64);
            kmeanspp_init(samples, n_components, cfg.sd_floor, &mut rng)
        };
        let run = run_em(samples, init, cfg);
        all_traces.extend(run.traces.iter().cloned());
        if best.as_ref().is_none_or(|b| run.ll > b.ll) {
            best = Some(run);
        }
        if n_components == 1 {
            // every start gives the same closed-form answer
            break;
        }
    }
    let best = best.expect("at least one restart");
    let comps = (0..best.params.len())
        .map(|j| GmComponent {
            weight: best.params.weight[j],
            mean: best.params.mean[j],
            sd: best.params.sd[j],
        })
        .collect();
    Ok(EmFit {
        mixture: GaussianMixture::new(comps)?,
        log_likelihood: best.ll,
        iterations: best.iterations,
        traces: all_traces,
    })
}

/// Outcome of choosing the component count by AIC.
#[derive(Debug, Clone)]
pub struct GmSelection {
    pub fit: EmFit,
    /// `(requested components, fitted components, AIC)` for every count tried.
    pub table: Vec<(usize, usize, f64)>,
}

/// Fits 1..=`max_components` mixtures and keeps the AIC-minimal one,
/// preferring fewer components on ties.
pub fn select_gm_by_aic(samples: &[f64], max_components: usize, cfg: &EmConfig) -> Result<GaussianMixture> {
    select_gm_by_aic_detailed(samples, max_components, cfg).map(|s| s.fit.mixture)
}

pub fn select_gm_by_aic_detailed(samples: &[f64], max_components: usize, cfg: &EmConfig) -> Result<GmSelection> {
    if max_components == 0 {
        return Err(Error::InvalidInput("max_components must be at least 1".into()));
    }
    let mut best: Option<(f64, EmFit)> = None;
    let mut table = vec![];
    for n in 1..=max_components {
        if n > 1 && samples.len() < 3 * n {
            break;
        }
        let fit = fit_gm_em_detailed(samples, n, cfg)?;
        let score = aic(fit.log_likelihood, fit.mixture.n_params());
        table.push((n, fit.mixture.n_components(), score));
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, fit));
        }
    }
    let (_, fit) = best.expect("n = 1 always fitted");
    Ok(GmSelection { fit, table })
}
