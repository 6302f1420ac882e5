//! Dense Cholesky factorisation and triangular solves on row-major storage.

use crate::error::{Error, Result};

/// Relative diagonal jitter tried, in order, when a plain factorisation
/// fails.
pub const JITTER_LADDER: [f64; 7] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Lower-triangular factor L with L·Lᵀ = A (+ jitter·I).
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
    jitter: f64,
}

fn factor_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let row_j = &a[j * n..j * n + j];
        let diag = a[j * n + j] - row_j.iter().map(|v| v * v).sum::<f64>();
        if !(diag > 0.0 && diag.is_finite()) {
            return false;
        }
        let ljj = diag.sqrt();
        a[j * n + j] = ljj;
        for i in (j + 1)..n {
            let (top, bottom) = a.split_at_mut(i * n);
            let row_j = &top[j * n..j * n + j];
            let row_i = &mut bottom[..n];
            let s = row_i[j] - row_i[..j].iter().zip(row_j).map(|(x, y)| x * y).sum::<f64>();
            row_i[j] = s / ljj;
        }
    }
    for i in 0..n {
        for v in &mut a[i * n + i + 1..i * n + n] {
            *v = 0.0;
        }
    }
    true
}

impl Cholesky {
    /// Factorises the symmetric matrix `a` (row-major n × n), escalating
    /// diagonal jitter relative to the mean diagonal if needed.
    pub fn new(a: &[f64], n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let mut work = a.to_vec();
        if factor_in_place(&mut work, n) {
            return Ok(Self {
                n,
                l: work,
                jitter: 0.0,
            });
        }
        let scale = (0..n).map(|i| a[i * n + i]).sum::<f64>() / n.max(1) as f64;
        let scale = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };
        let mut last = 0.0;
        for &rel in &JITTER_LADDER {
            let jitter = rel * scale;
            work.copy_from_slice(a);
            for i in 0..n {
                work[i * n + i] += jitter;
            }
            if factor_in_place(&mut work, n) {
                log::debug!("Cholesky needed jitter {jitter:e}");
                return Ok(Self { n, l: work, jitter });
            }
            last = jitter;
        }
        Err(Error::NotPositiveDefinite { jitter: last })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Absolute jitter that was added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn factor(&self) -> &[f64] {
        &self.l
    }

    /// Solves L x = b.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(l, v)| l * v).sum();
            x[i] = (x[i] - s) / self.l[i * n + i];
        }
        x
    }

    /// Solves Lᵀ x = b.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.l[i * n + i];
            let xi = x[i];
            for (xk, l) in x[..i].iter_mut().zip(&self.l[i * n..i * n + i]) {
                *xk -= l * xi;
            }
        }
        x
    }

    /// Solves A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// log det A.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>()
    }

    /// A⁻¹ as a dense row-major matrix.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        // M = L⁻¹, lower triangular, built column by column.
        let mut m = vec![0.0; n * n];
        for j in 0..n {
            m[j * n + j] = 1.0 / self.l[j * n + j];
            for i in (j + 1)..n {
                let mut s = 0.0;
                for k in j..i {
                    s += self.l[i * n + k] * m[k * n + j];
                }
                m[i * n + j] = -s / self.l[i * n + i];
            }
        }
        // A⁻¹ = Mᵀ M, symmetric.
        let mut inv = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in i..n {
                    s += m[k * n + i] * m[k * n + j];
                }
                inv[i * n + j] = s;
                inv[j * n + i] = s;
            }
        }
        inv
    }
}
