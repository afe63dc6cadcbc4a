//! Synthetic backscatter data from the forward Helmholtz scattering problem.
//!
//! The total field `u = e^{ikz} + u_s` solves the Lippmann-Schwinger equation
//!
//! ```text
//! u(x) = e^{ikz} + k² ∫ G_k(x - y) β(y) u(y) dy,   G_k(r) = e^{ik|r|} / (4π|r|)
//! ```
//!
//! discretized by midpoint collocation on a voxel box covering the scene
//! support. The self-cell integral of `G_k` is replaced by its integral over
//! the ball of equal volume. The convolution is applied with zero-padded FFTs
//! and the system is solved with restarted GMRES.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec, C64};
use crate::linalg::{gmres, Fft3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Axis-aligned box given by its center and half-widths.
    Box {
        center: [f64; 3],
        half: [f64; 3],
    },
    Ball {
        center: [f64; 3],
        radius: f64,
    },
}

impl Shape {
    fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match *self {
            Shape::Box { center, half } => (
                [
                    center[0] - half[0],
                    center[1] - half[1],
                    center[2] - half[2],
                ],
                [
                    center[0] + half[0],
                    center[1] + half[1],
                    center[2] + half[2],
                ],
            ),
            Shape::Ball { center, radius } => (
                [center[0] - radius, center[1] - radius, center[2] - radius],
                [center[0] + radius, center[1] + radius, center[2] + radius],
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inclusion {
    pub shape: Shape,
    /// Coefficient value `c_inc >= 1` inside the inclusion.
    pub contrast: f64,
}

/// Coefficient model `c = 1 + β` with `β >= 0` supported inside `Ω`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub inclusions: Vec<Inclusion>,
    /// Width of the mollified edge layer (length units).
    pub smoothing: f64,
}

/// C² ramp from 0 (outside) to 1 (inside) across `[-w/2, w/2]` of the signed
/// inside distance.
fn edge(dist_inside: f64, width: f64) -> f64 {
    if width <= 0.0 {
        return if dist_inside > 0.0 { 1.0 } else { 0.0 };
    }
    let t = (dist_inside / width + 0.5).clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

impl Scene {
    pub fn empty() -> Self {
        Scene::default()
    }

    pub fn single(shape: Shape, contrast: f64, smoothing: f64) -> Self {
        Scene {
            inclusions: vec![Inclusion { shape, contrast }],
            smoothing,
        }
    }

    pub fn beta(&self, x: f64, y: f64, z: f64) -> f64 {
        let w = self.smoothing;
        self.inclusions
            .iter()
            .map(|inc| {
                let profile = match inc.shape {
                    Shape::Box { center, half } => {
                        edge(half[0] - (x - center[0]).abs(), w)
                            * edge(half[1] - (y - center[1]).abs(), w)
                            * edge(half[2] - (z - center[2]).abs(), w)
                    }
                    Shape::Ball { center, radius } => {
                        let r = ((x - center[0]).powi(2)
                            + (y - center[1]).powi(2)
                            + (z - center[2]).powi(2))
                        .sqrt();
                        edge(radius - r, w)
                    }
                };
                (inc.contrast - 1.0) * profile
            })
            .fold(0.0, f64::max)
    }

    pub fn c(&self, x: f64, y: f64, z: f64) -> f64 {
        1.0 + self.beta(x, y, z)
    }

    pub fn max_contrast(&self) -> f64 {
        self.inclusions
            .iter()
            .map(|i| i.contrast)
            .fold(1.0, f64::max)
    }

    /// Bounding box of the support of `β`, including the edge layer.
    pub fn support(&self) -> Option<([f64; 3], [f64; 3])> {
        let pad = 0.5 * self.smoothing;
        self.inclusions
            .iter()
            .filter(|i| i.contrast > 1.0)
            .map(|i| i.shape.bounds())
            .fold(None, |acc: Option<([f64; 3], [f64; 3])>, (lo, hi)| {
                let lo = lo.map(|v| v - pad);
                let hi = hi.map(|v| v + pad);
                Some(match acc {
                    None => (lo, hi),
                    Some((a, b)) => (
                        [a[0].min(lo[0]), a[1].min(lo[1]), a[2].min(lo[2])],
                        [b[0].max(hi[0]), b[1].max(hi[1]), b[2].max(hi[2])],
                    ),
                })
            })
    }

    /// Checks `β >= 0` and that `c = 1` outside `Ω`.
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return Err(Error::domain("smoothing width must be finite and >= 0"));
        }
        for inc in &self.inclusions {
            if !(inc.contrast >= 1.0 && inc.contrast.is_finite()) {
                return Err(Error::domain(format!(
                    "inclusion contrast {} must be >= 1",
                    inc.contrast
                )));
            }
            let ok = match inc.shape {
                Shape::Box { half, .. } => half.iter().all(|h| *h > 0.0),
                Shape::Ball { radius, .. } => radius > 0.0,
            };
            if !ok {
                return Err(Error::domain("inclusion extents must be positive"));
            }
        }
        if let Some((lo, hi)) = self.support() {
            let inside = lo[0] >= -grid.b
                && lo[1] >= -grid.b
                && hi[0] <= grid.b
                && hi[1] <= grid.b
                && lo[2] > -grid.xi
                && hi[2] <= grid.d;
            if !inside {
                return Err(Error::domain("scene support must lie inside the domain"));
            }
        }
        Ok(())
    }

    /// `c(x)` sampled on the grid nodes (real, stored as complex).
    pub fn c_field(&self, grid: GridSpec) -> Field {
        Field::from_fn(grid, |x, y, z| C64::new(self.c(x, y, z), 0.0))
    }
}

/// Discretization and solver controls for the forward problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOptions {
    /// Voxel edge; `None` picks a tenth of the shortest interior wavelength,
    /// capped by half the smoothing width.
    pub cell: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions {
            cell: None,
            tol: 1e-8,
            max_iter: 4000,
            restart: 80,
        }
    }
}

impl ForwardOptions {
    fn resolve_cell(&self, scene: &Scene, k_max: f64) -> f64 {
        if let Some(c) = self.cell {
            return c;
        }
        let wavelength = 2.0 * PI / (k_max * scene.max_contrast().sqrt());
        let mut cell = wavelength / 10.0;
        if scene.smoothing > 0.0 {
            cell = cell.min(0.5 * scene.smoothing);
        }
        cell
    }
}

/// Voxel box carrying `β` at cell centers.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    pub origin: [f64; 3],
    pub cell: f64,
    pub dims: [usize; 3],
    pub beta: Vec<f64>,
}

impl VoxelGrid {
    pub fn new(scene: &Scene, cell: f64) -> Option<Self> {
        let (lo, hi) = scene.support()?;
        let mut dims = [0usize; 3];
        let mut origin = [0.0; 3];
        for a in 0..3 {
            let n = ((hi[a] - lo[a]) / cell).ceil().max(1.0) as usize;
            dims[a] = n;
            let mid = 0.5 * (lo[a] + hi[a]);
            origin[a] = mid - 0.5 * n as f64 * cell;
        }
        let mut vox = VoxelGrid {
            origin,
            cell,
            dims,
            beta: vec![0.0; dims.iter().product()],
        };
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let p = vox.center(i, j, k);
                    let id = vox.index(i, j, k);
                    vox.beta[id] = scene.beta(p[0], p[1], p[2]);
                }
            }
        }
        Some(vox)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.cell,
            self.origin[1] + (j as f64 + 0.5) * self.cell,
            self.origin[2] + (k as f64 + 0.5) * self.cell,
        ]
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    fn centers(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.dims[0] {
            for j in 0..self.dims[1] {
                for k in 0..self.dims[2] {
                    out.push(self.center(i, j, k));
                }
            }
        }
        out
    }

    /// Radius of the ball with the voxel's volume.
    pub fn equivalent_radius(&self) -> f64 {
        self.cell * (3.0 / (4.0 * PI)).cbrt()
    }
}

#[inline]
fn green(k: f64, r: f64) -> C64 {
    C64::new(0.0, k * r).exp() / (4.0 * PI * r)
}

/// `∫_{|y|<a} G_k(y) dy = ((1 - ika) e^{ika} - 1) / k²`.
pub fn self_cell_integral(k: f64, a: f64) -> C64 {
    let e = C64::new(0.0, k * a).exp();
    ((C64::new(1.0, -k * a)) * e - 1.0) / (k * k)
}

/// Collocation kernel between voxel centers separated by `r`.
fn kernel(k: f64, r: f64, cell: f64, self_term: C64) -> C64 {
    if r < 0.5 * cell {
        self_term
    } else {
        green(k, r) * cell.powi(3)
    }
}

/// The discretized operator `u ↦ u - k² K (β u)` with FFT convolution.
pub struct LippmannSchwinger {
    k: f64,
    vox: Arc<VoxelGrid>,
    fft: Fft3,
    pad: [usize; 3],
    kernel_hat: Vec<C64>,
}

impl LippmannSchwinger {
    pub fn new(vox: Arc<VoxelGrid>, k: f64) -> Self {
        let pad = vox.dims.map(|n| 2 * n);
        let fft = Fft3::new(pad);
        let self_term = self_cell_integral(k, vox.equivalent_radius());
        let mut kern = vec![C64::new(0.0, 0.0); fft.len()];
        let offset = |a: usize, n: usize| -> Option<f64> {
            if a < n {
                Some(a as f64)
            } else if a > n {
                Some(a as f64 - 2.0 * n as f64)
            } else {
                None
            }
        };
        for a in 0..pad[0] {
            for b in 0..pad[1] {
                for c in 0..pad[2] {
                    let (Some(oa), Some(ob), Some(oc)) = (
                        offset(a, vox.dims[0]),
                        offset(b, vox.dims[1]),
                        offset(c, vox.dims[2]),
                    ) else {
                        continue;
                    };
                    let r = vox.cell * (oa * oa + ob * ob + oc * oc).sqrt();
                    kern[(a * pad[1] + b) * pad[2] + c] = kernel(k, r, vox.cell, self_term);
                }
            }
        }
        fft.forward(&mut kern);
        LippmannSchwinger {
            k,
            vox,
            fft,
            pad,
            kernel_hat: kern,
        }
    }

    /// `K (β u)` evaluated at the voxel centers.
    pub fn convolve(&self, u: &[C64], out: &mut [C64]) {
        let [n0, n1, n2] = self.vox.dims;
        let [_, p1, p2] = self.pad;
        let mut buf = vec![C64::new(0.0, 0.0); self.fft.len()];
        for i in 0..n0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    let id = self.vox.index(i, j, k);
                    buf[(i * p1 + j) * p2 + k] = u[id] * self.vox.beta[id];
                }
            }
        }
        self.fft.forward(&mut buf);
        buf.iter_mut()
            .zip(&self.kernel_hat)
            .for_each(|(b, kh)| *b *= kh);
        self.fft.inverse(&mut buf);
        for i in 0..n0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    out[self.vox.index(i, j, k)] = buf[(i * p1 + j) * p2 + k];
                }
            }
        }
    }

    pub fn apply(&self, u: &[C64], out: &mut [C64]) {
        self.convolve(u, out);
        let k2 = self.k * self.k;
        out.iter_mut().zip(u).for_each(|(o, ui)| *o = ui - k2 * *o);
    }

    /// Dense matrix `K` of the collocation kernel (tiny instances only).
    pub fn dense_kernel(&self) -> Vec<Vec<C64>> {
        let centers = self.vox.centers();
        let self_term = self_cell_integral(self.k, self.vox.equivalent_radius());
        centers
            .iter()
            .map(|p| {
                centers
                    .iter()
                    .map(|q| kernel(self.k, dist(p, q), self.vox.cell, self_term))
                    .collect()
            })
            .collect()
    }
}

#[inline]
fn dist(p: &[f64; 3], q: &[f64; 3]) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
}

/// Solved scattering problem at one wavenumber; evaluates `u` anywhere.
#[derive(Debug, Clone)]
pub struct ScatteringSolution {
    pub k: f64,
    vox: Option<Arc<VoxelGrid>>,
    /// Total field at voxel centers.
    pub u: Vec<C64>,
    /// Sources `k² β u V_cell` on voxels with `β > 0`, with their centers.
    sources: Vec<([f64; 3], C64)>,
    pub iterations: usize,
    pub residual: f64,
}

impl ScatteringSolution {
    fn from_voxels(
        k: f64,
        vox: Option<Arc<VoxelGrid>>,
        u: Vec<C64>,
        iterations: usize,
        residual: f64,
    ) -> Self {
        let mut sources = Vec::new();
        if let Some(v) = &vox {
            let k2 = k * k;
            for i in 0..v.dims[0] {
                for j in 0..v.dims[1] {
                    for kk in 0..v.dims[2] {
                        let id = v.index(i, j, kk);
                        if v.beta[id] > 0.0 {
                            sources.push((v.center(i, j, kk), k2 * v.beta[id] * u[id]));
                        }
                    }
                }
            }
        }
        ScatteringSolution {
            k,
            vox,
            u,
            sources,
            iterations,
            residual,
        }
    }

    pub fn voxels(&self) -> Option<&VoxelGrid> {
        self.vox.as_deref()
    }

    /// Scattered field `u_s(x)` and its z-derivative.
    pub fn scattered_at(&self, p: [f64; 3]) -> (C64, C64) {
        let Some(vox) = &self.vox else {
            return (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        };
        let cell = vox.cell;
        let vol = cell.powi(3);
        let self_term = self_cell_integral(self.k, vox.equivalent_radius());
        let mut us = C64::new(0.0, 0.0);
        let mut usz = C64::new(0.0, 0.0);
        for (c, src) in &self.sources {
            let r = dist(&p, c);
            if r < 0.5 * cell {
                us += self_term / vol * src;
                continue;
            }
            let g = green(self.k, r);
            us += g * src;
            // dG/dz = G (ik - 1/r) (z - z')/r
            usz += g * C64::new(-1.0 / r, self.k) * ((p[2] - c[2]) / r) * src;
        }
        (us * vol, usz * vol)
    }

    /// Total field `u(x)` and `u_z(x)`.
    pub fn total_at(&self, p: [f64; 3]) -> (C64, C64) {
        let inc = C64::new(0.0, self.k * p[2]).exp();
        let (us, usz) = self.scattered_at(p);
        (inc + us, C64::new(0.0, self.k) * inc + usz)
    }

    /// First Born approximation of the scattered field at `p`.
    pub fn born_at(&self, p: [f64; 3]) -> C64 {
        let Some(vox) = &self.vox else {
            return C64::new(0.0, 0.0);
        };
        let self_term = self_cell_integral(self.k, vox.equivalent_radius());
        let k2 = self.k * self.k;
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..vox.dims[0] {
            for j in 0..vox.dims[1] {
                for kk in 0..vox.dims[2] {
                    let id = vox.index(i, j, kk);
                    if vox.beta[id] == 0.0 {
                        continue;
                    }
                    let c = vox.center(i, j, kk);
                    let inc = C64::new(0.0, self.k * c[2]).exp();
                    acc += kernel(self.k, dist(&p, &c), vox.cell, self_term) * vox.beta[id] * inc;
                }
            }
        }
        k2 * acc
    }

    /// `Im ∫ β conj(u) u_s`, nonnegative for real `β >= 0` (radiated power).
    pub fn radiated_power(&self) -> f64 {
        let Some(vox) = &self.vox else { return 0.0 };
        let vol = vox.cell.powi(3);
        let mut acc = 0.0;
        for i in 0..vox.dims[0] {
            for j in 0..vox.dims[1] {
                for kk in 0..vox.dims[2] {
                    let id = vox.index(i, j, kk);
                    let c = vox.center(i, j, kk);
                    let inc = C64::new(0.0, self.k * c[2]).exp();
                    let us = self.u[id] - inc;
                    acc += vox.beta[id] * (self.u[id].conj() * us).im * vol;
                }
            }
        }
        acc
    }

    /// `Σ β |u|² V_cell`, the normalisation for [`Self::radiated_power`].
    pub fn weighted_energy(&self) -> f64 {
        let Some(vox) = &self.vox else { return 0.0 };
        let vol = vox.cell.powi(3);
        vox.beta
            .iter()
            .zip(&self.u)
            .map(|(b, u)| b * u.norm_sqr() * vol)
            .sum()
    }
}

/// Solves the scattering problem at wavenumber `k`.
pub fn solve_scattering(
    scene: &Scene,
    k: f64,
    k_ref: f64,
    opts: &ForwardOptions,
) -> Result<ScatteringSolution> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::domain(format!(
            "wavenumber must be positive, got {k}"
        )));
    }
    let cell = opts.resolve_cell(scene, k_ref.max(k));
    let Some(vox) = VoxelGrid::new(scene, cell) else {
        return Ok(ScatteringSolution::from_voxels(k, None, Vec::new(), 0, 0.0));
    };
    let vox = Arc::new(vox);
    let op = LippmannSchwinger::new(vox.clone(), k);
    let rhs: Vec<C64> = vox
        .centers()
        .iter()
        .map(|c| C64::new(0.0, k * c[2]).exp())
        .collect();
    let mut u = rhs.clone();
    let report = gmres(
        |x, out| op.apply(x, out),
        &rhs,
        &mut u,
        opts.tol,
        opts.restart,
        opts.max_iter,
    )?;
    log::debug!(
        "forward solve k={k:.4}: {} voxels, {} GMRES iterations, residual {:.2e}",
        vox.len(),
        report.iterations,
        report.residual
    );
    Ok(ScatteringSolution::from_voxels(
        k,
        Some(vox),
        u,
        report.iterations,
        report.residual,
    ))
}

/// Total field `u` on every grid node of `Ω` at wavenumber `k`.
pub fn solve_forward(scene: &Scene, k: f64, grid: &GridSpec) -> Result<Field> {
    scene.validate(grid)?;
    let sol = solve_scattering(scene, k, grid.k_max, &ForwardOptions::default())?;
    Ok(sample_total(&sol, grid))
}

/// Samples a solution on the grid nodes.
pub fn sample_total(sol: &ScatteringSolution, grid: &GridSpec) -> Field {
    let cols: Vec<(usize, usize)> = (0..grid.n_h)
        .flat_map(|j| (0..grid.n_h).map(move |s| (j, s)))
        .collect();
    let values: Vec<Vec<C64>> = cols
        .par_iter()
        .map(|&(j, s)| {
            (0..grid.n_z)
                .map(|m| sol.total_at([grid.x(j), grid.y(s), grid.z(m)]).0)
                .collect()
        })
        .collect();
    let mut out = Field::zeros(*grid);
    for ((j, s), col) in cols.into_iter().zip(values) {
        let c = grid.col(j, s);
        out.values_mut()[c..c + grid.n_z].copy_from_slice(&col);
    }
    out
}

/// Total field on `Ω` for every k-node (oracle use).
pub fn solve_volumetric(scene: &Scene, grid: &GridSpec, opts: &ForwardOptions) -> Result<Field> {
    scene.validate(grid)?;
    let layers: Vec<Field> = grid
        .k_nodes()
        .par_iter()
        .map(|&k| solve_scattering(scene, k, grid.k_max, opts).map(|s| sample_total(&s, grid)))
        .collect::<Result<_>>()?;
    Field::stack(&layers)
}

/// Traces of `u` and `u_z` on `Γ`, indexed `(l * n_h + j) * n_h + s`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredBoundaryData {
    pub grid: GridSpec,
    pub delta: f64,
    pub seed: u64,
    pub g0: Vec<C64>,
    pub g1: Vec<C64>,
    /// Noiseless traces, kept for oracle comparisons.
    pub g0_clean: Vec<C64>,
    pub g1_clean: Vec<C64>,
}

impl MeasuredBoundaryData {
    #[inline]
    pub fn trace_index(&self, l: usize, j: usize, s: usize) -> usize {
        (l * self.grid.n_h + j) * self.grid.n_h + s
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.n_k * self.grid.n_h * self.grid.n_h;
        if [&self.g0, &self.g1, &self.g0_clean, &self.g1_clean]
            .iter()
            .any(|v| v.len() != n)
        {
            return Err(Error::structural("trace length does not match the grid"));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::domain(format!(
                "noise level {} not in [0, 1)",
                self.delta
            )));
        }
        Ok(())
    }

    /// The dataset with the noiseless traces promoted to measurements.
    pub fn clean(&self) -> MeasuredBoundaryData {
        MeasuredBoundaryData {
            delta: 0.0,
            g0: self.g0_clean.clone(),
            g1: self.g1_clean.clone(),
            ..self.clone()
        }
    }
}

fn noisy(v: C64, delta: f64, rng: &mut ChaCha8Rng) -> C64 {
    let r = rng.gen::<f64>().sqrt();
    let theta = 2.0 * PI * rng.gen::<f64>();
    v * (1.0 + delta * C64::from_polar(r, theta))
}

/// Applies multiplicative noise `(1 + δζ)`, `ζ` uniform on the unit disc.
pub fn apply_noise(g0: &[C64], g1: &[C64], delta: f64, seed: u64) -> (Vec<C64>, Vec<C64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n0 = Vec::with_capacity(g0.len());
    let mut n1 = Vec::with_capacity(g1.len());
    for (a, b) in g0.iter().zip(g1) {
        n0.push(noisy(*a, delta, &mut rng));
        n1.push(noisy(*b, delta, &mut rng));
    }
    (n0, n1)
}

/// Simulates `g0 = u|Γ` and `g1 = u_z|Γ` on every k-node and adds noise.
pub fn synthesize_dataset(
    scene: &Scene,
    grid: &GridSpec,
    delta: f64,
    seed: u64,
    opts: &ForwardOptions,
) -> Result<MeasuredBoundaryData> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::domain(format!("noise level {delta} not in [0, 1)")));
    }
    scene.validate(grid)?;
    let traces: Vec<(Vec<C64>, Vec<C64>)> = grid
        .k_nodes()
        .par_iter()
        .map(|&k| {
            let sol = solve_scattering(scene, k, grid.k_max, opts)?;
            let mut t0 = Vec::with_capacity(grid.n_h * grid.n_h);
            let mut t1 = Vec::with_capacity(grid.n_h * grid.n_h);
            for j in 0..grid.n_h {
                for s in 0..grid.n_h {
                    let (u, uz) = sol.total_at([grid.x(j), grid.y(s), -grid.xi]);
                    t0.push(u);
                    t1.push(uz);
                }
            }
            Ok((t0, t1))
        })
        .collect::<Result<_>>()?;
    let g0_clean: Vec<C64> = traces.iter().flat_map(|t| t.0.iter().copied()).collect();
    let g1_clean: Vec<C64> = traces.iter().flat_map(|t| t.1.iter().copied()).collect();
    let (g0, g1) = apply_noise(&g0_clean, &g1_clean, delta, seed);
    Ok(MeasuredBoundaryData {
        grid: *grid,
        delta,
        seed,
        g0,
        g1,
        g0_clean,
        g1_clean,
    })
}

/// Largest `|u - e^{ikz}|` on `∂Ω \ Γ` over the k-grid: the error of the
/// heuristic lateral/top Dirichlet condition.
pub fn heuristic_boundary_defect(
    scene: &Scene,
    grid: &GridSpec,
    opts: &ForwardOptions,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in grid.k_nodes() {
        let sol = solve_scattering(scene, k, grid.k_max, opts)?;
        for j in 0..grid.n_h {
            for s in 0..grid.n_h {
                for m in 1..grid.n_z {
                    if !grid.is_boundary_column(j, s) && m + 1 != grid.n_z {
                        continue;
                    }
                    let (us, _) = sol.scattered_at([grid.x(j), grid.y(s), grid.z(m)]);
                    worst = worst.max(us.norm());
                }
            }
        }
    }
    Ok(worst)
}
