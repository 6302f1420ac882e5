//! Negative log marginal likelihood and its maximisation over the
//! hyperparameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::{axis_sq_dists, kernel_with_grad, Hyperparams, WarpedPoint};
use super::linalg::Cholesky;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Settings for [`fit_hyperparams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    /// Objective evaluations allowed per start.
    pub max_evals: usize,
    /// Number of starts: the initial guess plus perturbed copies of it.
    pub restarts: usize,
    pub rng_seed: u64,
    pub noise_floor: f64,
    /// Starting point; derived from the data when absent.
    pub init: Option<Hyperparams>,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            max_evals: 200,
            restarts: 4,
            rng_seed: 0,
            noise_floor: 1e-6,
            init: None,
        }
    }
}

/// Result of a hyperparameter search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub hyper: Hyperparams,
    pub nll: f64,
    /// False when no start improved on the initial guess, in which case
    /// `hyper` is the initial guess.
    pub improved: bool,
    pub evaluations: usize,
}

/// Builds K = Σ + σ_n² I for the given points.
pub(crate) fn covariance(points: &[WarpedPoint], hyper: &Hyperparams) -> Vec<f64> {
    let n = points.len();
    let var = hyper.signal_sd * hyper.signal_sd;
    let noise = hyper.noise_sd * hyper.noise_sd;
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = var + noise;
        for j in 0..i {
            let v = super::kernel::kernel(&points[i], &points[j], hyper);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

fn centered(targets: &[f64], mean_const: f64) -> Vec<f64> {
    targets.iter().map(|t| t - mean_const).collect()
}

fn check_inputs(points: &[WarpedPoint], targets: &[f64]) -> Result<()> {
    if points.len() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "{} locations but {} targets",
            points.len(),
            targets.len()
        )));
    }
    if points.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    if let Some(t) = targets.iter().find(|t| !t.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite target {t}")));
    }
    Ok(())
}

/// ½ yᵀK⁻¹y + ½ log det K + (n/2) log 2π with y = targets − mean_const.
pub fn nll(hyper: &Hyperparams, points: &[WarpedPoint], targets: &[f64], mean_const: f64) -> Result<f64> {
    hyper.validate()?;
    check_inputs(points, targets)?;
    let n = points.len();
    let chol = Cholesky::new(&covariance(points, hyper), n)?;
    let y = centered(targets, mean_const);
    let z = chol.solve_lower(&y);
    let quad: f64 = z.iter().map(|v| v * v).sum();
    Ok(0.5 * quad + 0.5 * chol.log_det() + 0.5 * n as f64 * LN_2PI)
}

/// nll and its gradient with respect to (σ, η₁, η₂, σ_n).
pub fn nll_and_grad(
    hyper: &Hyperparams,
    points: &[WarpedPoint],
    targets: &[f64],
    mean_const: f64,
) -> Result<(f64, [f64; 4])> {
    hyper.validate()?;
    check_inputs(points, targets)?;
    let n = points.len();
    let chol = Cholesky::new(&covariance(points, hyper), n)?;
    let y = centered(targets, mean_const);
    let alpha = chol.solve(&y);
    let quad: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let value = 0.5 * quad + 0.5 * chol.log_det() + 0.5 * n as f64 * LN_2PI;

    // ∂nll/∂θ = ½ tr((K⁻¹ − ααᵀ) ∂K/∂θ)
    let kinv = chol.inverse();
    let mut grad = [0.0; 4];
    let mut trace_w = 0.0;
    for i in 0..n {
        let w_ii = kinv[i * n + i] - alpha[i] * alpha[i];
        trace_w += w_ii;
        // diagonal: d = 0, only σ contributes
        grad[0] += 0.5 * w_ii * 2.0 * hyper.signal_sd;
        for j in 0..i {
            let w_ij = kinv[i * n + j] - alpha[i] * alpha[j];
            let (_, dk) = kernel_with_grad(axis_sq_dists(&points[i], &points[j]), hyper);
            // off-diagonal pairs appear twice
            grad[0] += w_ij * dk[0];
            grad[1] += w_ij * dk[1];
            grad[2] += w_ij * dk[2];
        }
    }
    grad[3] = trace_w * hyper.noise_sd;
    Ok((value, grad))
}

struct Bounds {
    lo: [f64; 4],
    hi: [f64; 4],
}

impl Bounds {
    fn new(noise_floor: f64) -> Self {
        Self {
            lo: [1e-4f64.ln(), 1e-3f64.ln(), 1e-3f64.ln(), noise_floor.ln()],
            hi: [1e3f64.ln(), 1e2f64.ln(), 1e2f64.ln(), 1e3f64.ln()],
        }
    }

    fn clamp(&self, x: [f64; 4]) -> [f64; 4] {
        std::array::from_fn(|i| x[i].clamp(self.lo[i], self.hi[i]))
    }
}

fn to_hyper(theta: [f64; 4]) -> Hyperparams {
    Hyperparams::from_array(theta.map(f64::exp))
}

/// Objective in log-parameter space.
fn log_objective(theta: [f64; 4], points: &[WarpedPoint], y: &[f64]) -> Option<(f64, [f64; 4])> {
    let h = to_hyper(theta);
    let (f, g) = nll_and_grad(&h, points, y, 0.0).ok()?;
    let raw = h.to_array();
    let g: [f64; 4] = std::array::from_fn(|i| g[i] * raw[i]);
    (f.is_finite() && g.iter().all(|v| v.is_finite())).then_some((f, g))
}

fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projected quasi-Newton (BFGS) descent with an Armijo backtracking line
/// search. Returns the best point, its value and the evaluations used.
fn minimize_box<F>(mut f: F, x0: [f64; 4], bounds: &Bounds, max_evals: usize) -> Option<([f64; 4], f64, usize)>
where
    F: FnMut([f64; 4]) -> Option<(f64, [f64; 4])>,
{
    const MAX_STEP: f64 = 2.0;
    let mut x = bounds.clamp(x0);
    let (mut fx, mut g) = f(x)?;
    let mut evals = 1;
    let mut h = [[0.0; 4]; 4];
    let reset = |h: &mut [[f64; 4]; 4]| {
        *h = [[0.0; 4]; 4];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = 1.0;
        }
    };
    reset(&mut h);
    let mut fresh = true;

    while evals < max_evals {
        let active: [bool; 4] = std::array::from_fn(|i| {
            (x[i] <= bounds.lo[i] + 1e-12 && g[i] > 0.0) || (x[i] >= bounds.hi[i] - 1e-12 && g[i] < 0.0)
        });
        let pg = (0..4).filter(|&i| !active[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg < 1e-7 {
            break;
        }
        let mut d: [f64; 4] = std::array::from_fn(|i| {
            if active[i] {
                0.0
            } else {
                -(0..4).filter(|&j| !active[j]).map(|j| h[i][j] * g[j]).sum::<f64>()
            }
        });
        if dot(&d, &g) >= 0.0 {
            reset(&mut h);
            fresh = true;
            d = std::array::from_fn(|i| if active[i] { 0.0 } else { -g[i] });
        }
        let longest = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if longest > MAX_STEP {
            d.iter_mut().for_each(|v| *v *= MAX_STEP / longest);
        }

        let mut t = 1.0;
        let mut accepted = None;
        while evals < max_evals && t > 1e-10 {
            let xn = bounds.clamp(std::array::from_fn(|i| x[i] + t * d[i]));
            let step: [f64; 4] = std::array::from_fn(|i| xn[i] - x[i]);
            let decrease = dot(&g, &step);
            if decrease >= 0.0 {
                break;
            }
            evals += 1;
            if let Some((fnew, gnew)) = f(xn) {
                if fnew <= fx + 1e-4 * decrease {
                    accepted = Some((xn, fnew, gnew));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            if fresh {
                break;
            }
            reset(&mut h);
            fresh = true;
            continue;
        };

        let s: [f64; 4] = std::array::from_fn(|i| xn[i] - x[i]);
        let yv: [f64; 4] = std::array::from_fn(|i| gnew[i] - g[i]);
        let sy = dot(&s, &yv);
        if sy > 1e-12 {
            if fresh {
                let scale = sy / dot(&yv, &yv);
                for (i, row) in h.iter_mut().enumerate() {
                    row[i] = scale;
                }
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy: [f64; 4] = std::array::from_fn(|i| dot(&h[i], &yv));
            let yhy = dot(&yv, &hy);
            for i in 0..4 {
                for j in 0..4 {
                    h[i][j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
        let change = fx - fnew;
        x = xn;
        fx = fnew;
        g = gnew;
        if change.abs() <= 1e-12 * (1.0 + fx.abs()) {
            break;
        }
    }
    Some((x, fx, evals))
}

/// Maximises the marginal likelihood over log-hyperparameters with box
/// constraints. Targets are centred on their mean. The first start is
/// `init` itself; the others perturb each log-parameter uniformly in ±1.
pub fn fit_hyperparams(
    points: &[WarpedPoint],
    targets: &[f64],
    init: &Hyperparams,
    cfg: &GpConfig,
) -> Result<FitOutcome> {
    check_inputs(points, targets)?;
    init.validate()?;
    if !(cfg.noise_floor > 0.0 && cfg.noise_floor.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise floor must be positive, got {}",
            cfg.noise_floor
        )));
    }
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let y = centered(targets, mean);
    let bounds = Bounds::new(cfg.noise_floor);

    let mut init = *init;
    init.noise_sd = init.noise_sd.max(cfg.noise_floor);
    let theta0 = bounds.clamp(init.to_array().map(f64::ln));
    let init_nll = log_objective(theta0, points, &y).map(|(f, _)| f);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut best: Option<([f64; 4], f64)> = None;
    let mut evaluations = 0;
    for start in 0..cfg.restarts.max(1) {
        let x0 = if start == 0 {
            theta0
        } else {
            std::array::from_fn(|i| theta0[i] + rng.gen_range(-1.0..=1.0))
        };
        match minimize_box(|t| log_objective(t, points, &y), x0, &bounds, cfg.max_evals.max(2)) {
            Some((x, fx, used)) => {
                evaluations += used;
                log::debug!("GP start {start}: nll {fx:.6} after {used} evaluations");
                if best.is_none_or(|(_, fb)| fx < fb) {
                    best = Some((x, fx));
                }
            }
            None => {
                evaluations += 1;
                log::debug!("GP start {start}: objective undefined at the starting point");
            }
        }
    }

    match (best, init_nll) {
        (Some((x, fx)), Some(f0)) if fx < f0 => Ok(FitOutcome {
            hyper: to_hyper(x),
            nll: fx,
            improved: true,
            evaluations,
        }),
        (Some((x, fx)), None) => Ok(FitOutcome {
            hyper: to_hyper(x),
            nll: fx,
            improved: true,
            evaluations,
        }),
        (_, Some(f0)) => {
            log::warn!("hyperparameter search did not improve on the initial guess");
            Ok(FitOutcome {
                hyper: to_hyper(theta0),
                nll: f0,
                improved: false,
                evaluations,
            })
        }
        (None, None) => Err(Error::NoConvergence {
            what: "hyperparameter search",
            iters: evaluations,
        }),
    }
}
