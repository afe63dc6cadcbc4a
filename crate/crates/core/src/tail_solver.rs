//! The tail function `V ≈ v(·, k̄)`: minimizer of the Carleman-weighted
//! quasi-reversibility functional `I_μ(W) = e^{2μd} Σ h² ∫ |Δʰ(W+Q)|² φ_μ dz`
//! over fields `W` with zero boundary conditions.
//!
//! The transverse part of `Δʰ` with zero Dirichlet columns is diagonalized by
//! a 2D discrete sine transform, which is orthonormal and commutes with the
//! z-dependent weight, so the least-squares problem splits into one small
//! weighted problem in z per transverse mode.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

use crate::carleman::{weighted_lap_layer, CarlemanWeight};
use crate::error::{Error, Result};
use crate::grid::{
    h0_defect, laplacian_layer, laplacian_layer_adjoint, norm_h2h, Field, GridSpec, C64,
};

/// Orthonormal DST-I matrix on `n` nodes (symmetric, its own inverse).
fn sine_matrix(n: usize) -> Vec<f64> {
    let scale = (2.0 / (n as f64 + 1.0)).sqrt();
    let mut s = vec![0.0; n * n];
    for a in 0..n {
        for p in 0..n {
            s[a * n + p] = scale * (PI * ((a + 1) * (p + 1)) as f64 / (n as f64 + 1.0)).sin();
        }
    }
    s
}

/// Transverse sine transform of the interior columns of a layer, returned as
/// `[p][r][m]` with `p, r` over the `n_h - 2` interior modes.
fn transverse_forward(grid: &GridSpec, sine: &[f64], f: &[C64]) -> Vec<C64> {
    let (ni, nz) = (grid.n_h - 2, grid.n_z);
    let zero = C64::new(0.0, 0.0);
    let mut tmp = vec![zero; ni * ni * nz];
    // along x
    for p in 0..ni {
        for b in 0..ni {
            let dst = &mut tmp[(p * ni + b) * nz..(p * ni + b + 1) * nz];
            for a in 0..ni {
                let w = sine[a * ni + p];
                let src = grid.col(a + 1, b + 1);
                for m in 0..nz {
                    dst[m] += w * f[src + m];
                }
            }
        }
    }
    let mut out = vec![zero; ni * ni * nz];
    // along y
    for p in 0..ni {
        for r in 0..ni {
            let dst = (p * ni + r) * nz;
            for b in 0..ni {
                let w = sine[b * ni + r];
                let src = (p * ni + b) * nz;
                for m in 0..nz {
                    out[dst + m] += w * tmp[src + m];
                }
            }
        }
    }
    out
}

/// Inverse of [`transverse_forward`]; boundary columns of `out` are zeroed.
fn transverse_inverse(grid: &GridSpec, sine: &[f64], modes: &[C64], out: &mut [C64]) {
    let (ni, nz) = (grid.n_h - 2, grid.n_z);
    out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
    let mut tmp = vec![C64::new(0.0, 0.0); ni * ni * nz];
    for a in 0..ni {
        for r in 0..ni {
            let dst = (a * ni + r) * nz;
            for p in 0..ni {
                let w = sine[a * ni + p];
                let src = (p * ni + r) * nz;
                for m in 0..nz {
                    tmp[dst + m] += w * modes[src + m];
                }
            }
        }
    }
    for a in 0..ni {
        for b in 0..ni {
            let dst = grid.col(a + 1, b + 1);
            for r in 0..ni {
                let w = sine[b * ni + r];
                let src = (a * ni + r) * nz;
                for m in 0..nz {
                    out[dst + m] += w * tmp[src + m];
                }
            }
        }
    }
}

struct ModeFactor {
    q: DMatrix<C64>,
    r: DMatrix<C64>,
}

/// Factorized weighted least-squares problem
/// `min_W Σ_{interior} ω_m |(Δʰ + c ∂_z) W + b|²` over `W` supported on
/// interior columns and z-nodes `first..n_z-1` (exclusive of the top node),
/// `∂_z` the centered difference and `c` a complex constant.
pub struct WeightedLaplaceLsq {
    grid: GridSpec,
    first: usize,
    sine: Vec<f64>,
    sqrt_w: Vec<f64>,
    modes: Vec<ModeFactor>,
}

impl WeightedLaplaceLsq {
    /// `row_weight[m]` for every z-node (only `1..n_z-1` are used); `first`
    /// is 2 for the `H₀` unknown set and 1 for plain Dirichlet unknowns.
    pub fn new(grid: &GridSpec, row_weight: &[f64], first: usize) -> Result<Self> {
        Self::with_drift(grid, row_weight, first, C64::new(0.0, 0.0))
    }

    pub fn with_drift(
        grid: &GridSpec,
        row_weight: &[f64],
        first: usize,
        drift: C64,
    ) -> Result<Self> {
        if row_weight.len() != grid.n_z || !(1..=2).contains(&first) {
            return Err(Error::structural(
                "weights must cover every z-node; first unknown layer is 1 or 2",
            ));
        }
        if row_weight[1..grid.n_z - 1]
            .iter()
            .any(|w| !(*w > 0.0) || !w.is_finite())
        {
            return Err(Error::domain(
                "least-squares weights must be positive and finite",
            ));
        }
        let (ni, nz) = (grid.n_h - 2, grid.n_z);
        let rows = nz - 2;
        let cols = nz - 1 - first;
        let idz2 = 1.0 / (grid.dz() * grid.dz());
        let c1 = drift / (2.0 * grid.dz());
        let sqrt_w: Vec<f64> = row_weight.iter().map(|w| w.abs().sqrt()).collect();
        let lam: Vec<f64> = (0..ni)
            .map(|p| {
                let t = (PI * (p + 1) as f64 / (2.0 * (ni as f64 + 1.0))).sin();
                -4.0 * t * t / (grid.h() * grid.h())
            })
            .collect();
        let mut modes = Vec::with_capacity(ni * ni);
        for p in 0..ni {
            for r in 0..ni {
                let ev = lam[p] + lam[r];
                let a = DMatrix::<C64>::from_fn(rows, cols, |i, c| {
                    let (mr, mc) = (i + 1, c + first);
                    let v = if mr == mc {
                        C64::new(-2.0 * idz2 + ev, 0.0)
                    } else if mc == mr + 1 {
                        idz2 + c1
                    } else if mc + 1 == mr {
                        idz2 - c1
                    } else {
                        C64::new(0.0, 0.0)
                    };
                    v * sqrt_w[mr]
                });
                let qr = a.qr();
                modes.push(ModeFactor {
                    q: qr.q(),
                    r: qr.r(),
                });
            }
        }
        Ok(WeightedLaplaceLsq {
            grid: *grid,
            first,
            sine: sine_matrix(ni),
            sqrt_w,
            modes,
        })
    }

    pub fn first_unknown_layer(&self) -> usize {
        self.first
    }

    /// Minimizer `W` of `Σ ω |(Δʰ + c∂_z) W + b|²`, `b` given on interior nodes.
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let g = &self.grid;
        let (nz, first) = (g.n_z, self.first);
        let cols = nz - 1 - first;
        let mut bh = transverse_forward(g, &self.sine, b);
        for (mode, f) in self.modes.iter().enumerate() {
            let col = &mut bh[mode * nz..(mode + 1) * nz];
            let rhs = DVector::<C64>::from_fn(nz - 2, |i, _| col[i + 1] * self.sqrt_w[i + 1]);
            let qtb = f.q.adjoint() * rhs;
            let x =
                f.r.solve_upper_triangular(&qtb)
                    .expect("weighted block has full column rank");
            col.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            for c in 0..cols {
                col[c + first] = -x[c];
            }
        }
        let mut out = vec![C64::new(0.0, 0.0); g.layer_len()];
        transverse_inverse(g, &self.sine, &bh, &mut out);
        out
    }

    /// `(AᴴA)⁻¹ g` with `A = diag(√ω)(Δʰ + c∂_z)` restricted to the unknowns;
    /// entries of `g` off the unknown set are ignored and returned as zero.
    pub fn apply_inverse_normal(&self, g_in: &[C64]) -> Vec<C64> {
        let g = &self.grid;
        let (nz, first) = (g.n_z, self.first);
        let cols = nz - 1 - first;
        let mut gh = transverse_forward(g, &self.sine, g_in);
        for (mode, f) in self.modes.iter().enumerate() {
            let col = &mut gh[mode * nz..(mode + 1) * nz];
            let rhs = DVector::<C64>::from_fn(cols, |c, _| col[c + first]);
            let y =
                f.r.adjoint()
                    .solve_lower_triangular(&rhs)
                    .expect("nonsingular");
            let x = f.r.solve_upper_triangular(&y).expect("nonsingular");
            col.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            for c in 0..cols {
                col[c + first] = x[c];
            }
        }
        let mut out = vec![C64::new(0.0, 0.0); g.layer_len()];
        transverse_inverse(g, &self.sine, &gh, &mut out);
        out
    }
}

/// `μ(δ) = -ln δ / (2(d+ξ))`, for `δ ∈ (0, δ₀)` with `δ₀ = e^{-2(d+ξ)λ₀}`.
pub fn choose_mu(delta: f64, d: f64, xi: f64, lambda0: f64) -> Result<f64> {
    let depth = d + xi;
    let delta0 = (-2.0 * depth * lambda0).exp();
    if !(delta > 0.0 && delta < delta0) {
        return Err(Error::Schedule(format!(
            "noise level {delta} outside (0, {delta0:.3e}) for lambda0 = {lambda0}"
        )));
    }
    Ok(-delta.ln() / (2.0 * depth))
}

/// How the tail problem treats the Neumann datum `ψ₁`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TailVariant {
    /// Both `ψ₀` and `ψ₁` imposed; `W = 0` on the first interior layer.
    #[default]
    Full,
    /// `ψ₁` dropped: Dirichlet Laplace problem with data `ψ₀` only.
    DirichletOnly,
}

/// Solver path for the tail problem.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum TailMethod {
    /// Exact mode-by-mode least-squares solve.
    #[default]
    Direct,
    /// Conjugate gradients on the normal equations from `start`, preconditioned
    /// by the unweighted (`μ = 0`) exact solve.
    ConjugateGradient {
        start: Option<Field>,
        tol: f64,
        max_iter: usize,
    },
}

#[derive(Debug, Clone)]
pub struct TailFunction {
    pub v: Field,
    pub mu: f64,
    /// `I_μ` at the minimizer.
    pub residual: f64,
    /// `I_μ(0) = e^{2μd} Σ h² ∫ |ΔʰQ|² φ_μ`.
    pub residual_at_zero: f64,
    /// Max defect of the zero boundary conditions of `V - Q`.
    pub boundary_defect: f64,
    pub iterations: usize,
}

/// `I_μ(W)` for single-layer fields `W` and `Q`.
pub fn tail_functional(w: &Field, q: &Field, mu: f64) -> Result<f64> {
    w.ensure_same_shape(q)?;
    if w.layers() != 1 {
        return Err(Error::structural(
            "tail functional takes single-layer fields",
        ));
    }
    let g = *w.grid();
    let cw = CarlemanWeight::new(&g, mu)?;
    let sum = w.add(q)?;
    let mut lap = vec![C64::new(0.0, 0.0); g.layer_len()];
    Ok(weighted_lap_layer(
        &g,
        sum.layer(0),
        &cw.balanced(&g),
        &mut lap,
    ))
}

fn row_weights(grid: &GridSpec, mu: f64) -> Result<Vec<f64>> {
    let cw = CarlemanWeight::new(grid, mu)?;
    let zw = grid.z_weights();
    let h2 = grid.h() * grid.h();
    Ok(cw
        .balanced(grid)
        .iter()
        .zip(&zw)
        .map(|(b, w)| b * w * h2)
        .collect())
}

fn restrict(grid: &GridSpec, first: usize, f: &mut [C64]) {
    for j in 0..grid.n_h {
        for s in 0..grid.n_h {
            let c = grid.col(j, s);
            for m in 0..grid.n_z {
                let free = !grid.is_boundary_column(j, s) && m >= first && m + 1 < grid.n_z;
                if !free {
                    f[c + m] = C64::new(0.0, 0.0);
                }
            }
        }
    }
}

fn dot_re(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Preconditioned CG on `AᵀΩA W = -AᵀΩ b`, `A = Δʰ` on the unknown set.
fn tail_cg(
    grid: &GridSpec,
    weights: &[f64],
    first: usize,
    b: &[C64],
    start: Option<&Field>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<C64>, usize)> {
    let n = grid.layer_len();
    let ones: Vec<f64> = {
        let zw = grid.z_weights();
        zw.iter().map(|w| w * grid.h() * grid.h()).collect()
    };
    let precond = WeightedLaplaceLsq::new(grid, &ones, first)?;
    let normal = |x: &[C64], out: &mut [C64]| {
        let mut lap = vec![C64::new(0.0, 0.0); n];
        laplacian_layer(grid, x, &mut lap);
        for j in 0..grid.n_h {
            for s in 0..grid.n_h {
                let c = grid.col(j, s);
                for m in 0..grid.n_z {
                    lap[c + m] *= weights[m];
                }
            }
        }
        out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        laplacian_layer_adjoint(grid, &lap, out);
        restrict(grid, first, out);
    };
    let mut rhs = vec![C64::new(0.0, 0.0); n];
    {
        let mut wb = b.to_vec();
        for j in 0..grid.n_h {
            for s in 0..grid.n_h {
                let c = grid.col(j, s);
                for m in 0..grid.n_z {
                    wb[c + m] *= -weights[m];
                }
            }
        }
        laplacian_layer_adjoint(grid, &wb, &mut rhs);
        restrict(grid, first, &mut rhs);
    }
    let mut x = match start {
        Some(f) => {
            let mut v = f.layer(0).to_vec();
            restrict(grid, first, &mut v);
            v
        }
        None => vec![C64::new(0.0, 0.0); n],
    };
    let rnorm0 = dot_re(&rhs, &rhs).sqrt();
    if rnorm0 == 0.0 {
        return Ok((vec![C64::new(0.0, 0.0); n], 0));
    }
    let mut ax = vec![C64::new(0.0, 0.0); n];
    normal(&x, &mut ax);
    let mut r: Vec<C64> = rhs.iter().zip(&ax).map(|(a, b)| a - b).collect();
    let mut z = precond.apply_inverse_normal(&r);
    let mut p = z.clone();
    let mut rz = dot_re(&r, &z);
    let mut history = Vec::new();
    for it in 0..max_iter {
        let rel = dot_re(&r, &r).sqrt() / rnorm0;
        history.push(rel);
        if rel <= tol {
            return Ok((x, it));
        }
        normal(&p, &mut ax);
        let alpha = rz / dot_re(&p, &ax);
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&ax).for_each(|(ri, ai)| *ri -= alpha * ai);
        z = precond.apply_inverse_normal(&r);
        let rz_new = dot_re(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut()
            .zip(&z)
            .for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    let residual = dot_re(&r, &r).sqrt() / rnorm0;
    if residual <= tol {
        return Ok((x, max_iter));
    }
    Err(Error::Solver {
        iterations: max_iter,
        residual,
        history,
    })
}

/// Minimizes `I_μ(W)` and returns `V = W_min + Q`.
pub fn minimize_tail(
    q: &Field,
    mu: f64,
    variant: TailVariant,
    method: &TailMethod,
) -> Result<TailFunction> {
    if q.layers() != 1 {
        return Err(Error::structural(
            "tail extension must be a single-layer field",
        ));
    }
    if !q.is_finite() {
        return Err(Error::domain("tail extension contains non-finite values"));
    }
    let g = *q.grid();
    let first = match variant {
        TailVariant::Full => 2,
        TailVariant::DirichletOnly => 1,
    };
    let weights = row_weights(&g, mu)?;
    let mut b = vec![C64::new(0.0, 0.0); g.layer_len()];
    laplacian_layer(&g, q.layer(0), &mut b);
    let (w, iterations) = match method {
        TailMethod::Direct => (WeightedLaplaceLsq::new(&g, &weights, first)?.solve(&b), 0),
        TailMethod::ConjugateGradient {
            start,
            tol,
            max_iter,
        } => tail_cg(&g, &weights, first, &b, start.as_ref(), *tol, *max_iter)?,
    };
    let w = Field::from_values(g, 1, w)?;
    let residual = tail_functional(&w, q, mu)?;
    let residual_at_zero = tail_functional(&Field::zeros(g), q, mu)?;
    let boundary_defect = if first == 2 {
        h0_defect(&w)
    } else {
        // the Dirichlet variant frees the first interior layer
        let mut shifted = w.clone();
        for j in 0..g.n_h {
            for s in 0..g.n_h {
                shifted.set(0, j, s, 1, C64::new(0.0, 0.0));
            }
        }
        h0_defect(&shifted)
    };
    Ok(TailFunction {
        v: w.add(q)?,
        mu,
        residual,
        residual_at_zero,
        boundary_defect,
        iterations,
    })
}

/// `‖V - V*‖_{H^{2,h}}` for each noise level and the fitted log-log slope.
#[derive(Debug, Clone, PartialEq)]
pub struct TailSweep {
    pub deltas: Vec<f64>,
    pub mus: Vec<f64>,
    pub errors: Vec<f64>,
    /// Error of the noiseless run at `floor_mu`, the smallest μ of the sweep.
    pub floor: f64,
    pub floor_mu: f64,
    pub slope: f64,
    pub oracle_norm: f64,
    /// `max ‖V_δ‖ / (1 + ‖V*‖)`.
    pub stability_constant: f64,
}

/// Least-squares slope of `ln e` against `ln δ`.
pub fn loglog_slope(deltas: &[f64], errors: &[f64]) -> f64 {
    let n = deltas.len() as f64;
    let xs: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Tail errors against `V*` over a noise sweep. `tail_for(δ, μ)` runs the
/// data pipeline up to the tail for one noise level.
pub fn tail_convergence_probe(
    deltas: &[f64],
    lambda0: f64,
    depth: (f64, f64),
    oracle: &Field,
    tail_for: impl Fn(f64, f64) -> Result<Field> + Sync,
) -> Result<TailSweep> {
    use rayon::prelude::*;
    if deltas.len() < 3 {
        return Err(Error::structural(
            "tail convergence probe needs at least 3 noise levels",
        ));
    }
    let (d, xi) = depth;
    let mus: Vec<f64> = deltas
        .iter()
        .map(|&dl| choose_mu(dl, d, xi, lambda0))
        .collect::<Result<_>>()?;
    let runs: Vec<Field> = deltas
        .par_iter()
        .zip(&mus)
        .map(|(&dl, &mu)| tail_for(dl, mu))
        .collect::<Result<_>>()?;
    let errors: Vec<f64> = runs
        .iter()
        .map(|v| v.sub(oracle).map(|e| norm_h2h(&e)))
        .collect::<Result<_>>()?;
    let floor_mu = mus.iter().cloned().fold(f64::INFINITY, f64::min);
    let floor = norm_h2h(&tail_for(0.0, floor_mu)?.sub(oracle)?);
    let oracle_norm = norm_h2h(oracle);
    let stability_constant = runs.iter().map(norm_h2h).fold(0.0, f64::max) / (1.0 + oracle_norm);
    Ok(TailSweep {
        slope: loglog_slope(deltas, &errors),
        deltas: deltas.to_vec(),
        mus,
        errors,
        floor,
        floor_mu,
        oracle_norm,
        stability_constant,
    })
}
