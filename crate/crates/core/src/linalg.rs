//! Small numerical kernels shared by the solvers: restarted GMRES for complex
//! systems and an in-place 3D FFT over `rustfft`.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::C64;

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Outcome of a converged GMRES run.
#[derive(Debug, Clone)]
pub struct GmresReport {
    pub iterations: usize,
    pub residual: f64,
}

/// Restarted GMRES for `A x = b`, starting from `x`. Stops once the relative
/// residual `|b - A x| / |b|` drops below `tol`.
pub fn gmres(
    apply: impl Fn(&[C64], &mut [C64]),
    b: &[C64],
    x: &mut [C64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<GmresReport> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        return Ok(GmresReport {
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut history = Vec::new();
    let mut total = 0;
    let mut ax = vec![C64::new(0.0, 0.0); n];
    loop {
        apply(x, &mut ax);
        let r: Vec<C64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        let rel = beta / bnorm;
        history.push(rel);
        if rel <= tol {
            return Ok(GmresReport {
                iterations: total,
                residual: rel,
            });
        }
        if total >= max_iter {
            return Err(Error::Solver {
                iterations: total,
                residual: rel,
                history,
            });
        }

        let m = restart.min(max_iter - total).max(1);
        let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut hess = vec![vec![C64::new(0.0, 0.0); m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![C64::new(0.0, 0.0); m];
        let mut g = vec![C64::new(0.0, 0.0); m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut used = 0;
        for j in 0..m {
            let mut w = vec![C64::new(0.0, 0.0); n];
            apply(&basis[j], &mut w);
            // modified Gram-Schmidt
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(v, &w);
                hess[i][j] = hij;
                w.iter_mut().zip(v).for_each(|(wk, vk)| *wk -= hij * vk);
            }
            let hn = norm(&w);
            hess[j + 1][j] = C64::new(hn, 0.0);
            for i in 0..j {
                let t = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                hess[i + 1][j] = -sn[i].conj() * hess[i][j] + cs[i] * hess[i + 1][j];
                hess[i][j] = t;
            }
            let (a, bb) = (hess[j][j], hess[j + 1][j]);
            let rho = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if rho == 0.0 {
                cs[j] = 1.0;
                sn[j] = C64::new(0.0, 0.0);
            } else if a.norm() == 0.0 {
                cs[j] = 0.0;
                sn[j] = (bb / rho).conj();
            } else {
                cs[j] = a.norm() / rho;
                sn[j] = (a / a.norm()) * bb.conj() / rho;
            }
            hess[j][j] = cs[j] * a + sn[j] * bb;
            hess[j + 1][j] = C64::new(0.0, 0.0);
            g[j + 1] = -sn[j].conj() * g[j];
            g[j] *= cs[j];
            used = j + 1;
            total += 1;
            let est = g[j + 1].norm() / bnorm;
            if est <= tol * 0.5 || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // back substitution
        let mut y = vec![C64::new(0.0, 0.0); used];
        for i in (0..used).rev() {
            let mut acc = g[i];
            for k in i + 1..used {
                acc -= hess[i][k] * y[k];
            }
            y[i] = acc / hess[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            x.iter_mut()
                .zip(&basis[i])
                .for_each(|(xk, vk)| *xk += yi * vk);
        }
    }
}

/// In-place forward/inverse 3D FFT on a row-major `[n0][n1][n2]` array.
pub struct Fft3 {
    dims: [usize; 3],
    fwd: [Arc<dyn Fft<f64>>; 3],
    inv: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = dims.map(|n| planner.plan_fft_forward(n));
        let inv = dims.map(|n| planner.plan_fft_inverse(n));
        Fft3 { dims, fwd, inv }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, data: &mut [C64]) {
        self.run(data, &self.fwd);
    }

    /// Inverse transform, normalised so `inverse(forward(x)) == x`.
    pub fn inverse(&self, data: &mut [C64]) {
        self.run(data, &self.inv);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }

    fn run(&self, data: &mut [C64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        let [n0, n1, n2] = self.dims;
        // axis 2 is contiguous
        plans[2].process(data);
        let mut line = vec![C64::new(0.0, 0.0); n0.max(n1)];
        for a in 0..n0 {
            for c in 0..n2 {
                for b in 0..n1 {
                    line[b] = data[(a * n1 + b) * n2 + c];
                }
                plans[1].process(&mut line[..n1]);
                for b in 0..n1 {
                    data[(a * n1 + b) * n2 + c] = line[b];
                }
            }
        }
        for b in 0..n1 {
            for c in 0..n2 {
                for a in 0..n0 {
                    line[a] = data[(a * n1 + b) * n2 + c];
                }
                plans[0].process(&mut line[..n0]);
                for a in 0..n0 {
                    data[(a * n1 + b) * n2 + c] = line[a];
                }
            }
        }
    }
}
