//! The semidiscrete stage: domain geometry, grid-indexed complex fields,
//! partial finite-difference operators and the discrete function-space norms.
//!
//! The domain is `(-b, b)^2 x (-xi, d)` with the backscatter face `Gamma` at
//! `z = -xi`. Transverse directions use the uniform step `h = 2b / (n_h - 1)`;
//! `z` is sampled uniformly with `n_z` nodes, node 0 on `Gamma`.
//!
//! Differential operators are evaluated on interior nodes only; boundary
//! nodes carry data and their operator output is zero.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Geometry and sampling of the computational stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub b: f64,
    pub xi: f64,
    pub d: f64,
    pub n_h: usize,
    pub n_z: usize,
    pub k_min: f64,
    pub k_max: f64,
    pub n_k: usize,
}

impl GridSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        b: f64,
        xi: f64,
        d: f64,
        n_h: usize,
        n_z: usize,
        k_min: f64,
        k_max: f64,
        n_k: usize,
    ) -> Result<Self> {
        let g = GridSpec {
            b,
            xi,
            d,
            n_h,
            n_z,
            k_min,
            k_max,
            n_k,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.b, self.xi, self.d, self.k_min, self.k_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::structural("grid parameters must be finite"));
        }
        if !(self.b > 0.0 && self.xi > 0.0 && self.d > 0.0) {
            return Err(Error::structural("b, xi and d must be positive"));
        }
        if self.n_h < 3 {
            return Err(Error::structural(format!("n_h = {} < 3", self.n_h)));
        }
        if self.n_z < 5 {
            return Err(Error::structural(format!("n_z = {} < 5", self.n_z)));
        }
        if self.n_k < 3 {
            return Err(Error::structural(format!("n_k = {} < 3", self.n_k)));
        }
        if !(self.k_min > 0.0 && self.k_min < self.k_max) {
            return Err(Error::structural(format!(
                "wavenumber interval [{}, {}] must satisfy 0 < k_min < k_max",
                self.k_min, self.k_max
            )));
        }
        Ok(())
    }

    /// Transverse step, `2b / (n_h - 1)`.
    pub fn h(&self) -> f64 {
        2.0 * self.b / (self.n_h - 1) as f64
    }

    pub fn dz(&self) -> f64 {
        (self.d + self.xi) / (self.n_z - 1) as f64
    }

    pub fn dk(&self) -> f64 {
        (self.k_max - self.k_min) / (self.n_k - 1) as f64
    }

    pub fn depth(&self) -> f64 {
        self.d + self.xi
    }

    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        -self.b + j as f64 * self.h()
    }

    #[inline]
    pub fn y(&self, s: usize) -> f64 {
        -self.b + s as f64 * self.h()
    }

    #[inline]
    pub fn z(&self, m: usize) -> f64 {
        if m + 1 == self.n_z {
            self.d
        } else {
            -self.xi + m as f64 * self.dz()
        }
    }

    #[inline]
    pub fn k(&self, l: usize) -> f64 {
        if l + 1 == self.n_k {
            self.k_max
        } else {
            self.k_min + l as f64 * self.dk()
        }
    }

    pub fn k_nodes(&self) -> Vec<f64> {
        (0..self.n_k).map(|l| self.k(l)).collect()
    }

    pub fn z_nodes(&self) -> Vec<f64> {
        (0..self.n_z).map(|m| self.z(m)).collect()
    }

    /// Number of values in one `x`-layer.
    #[inline]
    pub fn layer_len(&self) -> usize {
        self.n_h * self.n_h * self.n_z
    }

    #[inline]
    pub fn col(&self, j: usize, s: usize) -> usize {
        (j * self.n_h + s) * self.n_z
    }

    #[inline]
    pub fn idx(&self, j: usize, s: usize, m: usize) -> usize {
        self.col(j, s) + m
    }

    #[inline]
    pub fn is_boundary_column(&self, j: usize, s: usize) -> bool {
        j == 0 || s == 0 || j + 1 == self.n_h || s + 1 == self.n_h
    }

    #[inline]
    pub fn is_interior(&self, j: usize, s: usize, m: usize) -> bool {
        !self.is_boundary_column(j, s) && m > 0 && m + 1 < self.n_z
    }

    /// Composite trapezoid weights on the z-nodes.
    pub fn z_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.n_z, self.dz())
    }

    /// Composite trapezoid weights on the k-nodes.
    pub fn k_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.n_k, self.dk())
    }
}

pub fn trapezoid_weights(n: usize, step: f64) -> Vec<f64> {
    let mut w = vec![step; n];
    w[0] *= 0.5;
    w[n - 1] *= 0.5;
    w
}

/// Complex field on the grid columns times z-nodes, optionally carrying a
/// wavenumber axis (one layer per k-node).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    layers: usize,
    values: Vec<C64>,
}

impl Field {
    pub fn zeros(grid: GridSpec) -> Self {
        Field {
            grid,
            layers: 1,
            values: vec![C64::new(0.0, 0.0); grid.layer_len()],
        }
    }

    /// Zero field with one layer per k-node.
    pub fn zeros_k(grid: GridSpec) -> Self {
        Field {
            grid,
            layers: grid.n_k,
            values: vec![C64::new(0.0, 0.0); grid.layer_len() * grid.n_k],
        }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64, f64) -> C64) -> Self {
        let mut out = Field::zeros(grid);
        for j in 0..grid.n_h {
            for s in 0..grid.n_h {
                for m in 0..grid.n_z {
                    out.values[grid.idx(j, s, m)] = f(grid.x(j), grid.y(s), grid.z(m));
                }
            }
        }
        out
    }

    /// Builds a k-field from `f(x, y, z, k)`.
    pub fn from_fn_k(grid: GridSpec, f: impl Fn(f64, f64, f64, f64) -> C64) -> Self {
        let mut out = Field::zeros_k(grid);
        let n = grid.layer_len();
        for l in 0..grid.n_k {
            let k = grid.k(l);
            for j in 0..grid.n_h {
                for s in 0..grid.n_h {
                    for m in 0..grid.n_z {
                        out.values[l * n + grid.idx(j, s, m)] =
                            f(grid.x(j), grid.y(s), grid.z(m), k);
                    }
                }
            }
        }
        out
    }

    pub fn from_values(grid: GridSpec, layers: usize, values: Vec<C64>) -> Result<Self> {
        if layers != 1 && layers != grid.n_k {
            return Err(Error::structural(format!(
                "field must have 1 or n_k = {} layers, got {layers}",
                grid.n_k
            )));
        }
        if values.len() != layers * grid.layer_len() {
            return Err(Error::structural(format!(
                "expected {} values, got {}",
                layers * grid.layer_len(),
                values.len()
            )));
        }
        Ok(Field {
            grid,
            layers,
            values,
        })
    }

    /// Stacks single-layer fields, one per k-node.
    pub fn stack(layers: &[Field]) -> Result<Self> {
        let grid = layers
            .first()
            .ok_or_else(|| Error::structural("cannot stack zero layers"))?
            .grid;
        let mut values = Vec::with_capacity(layers.len() * grid.layer_len());
        for f in layers {
            if f.grid != grid || f.layers != 1 {
                return Err(Error::structural("stacked layers must share a grid"));
            }
            values.extend_from_slice(&f.values);
        }
        Field::from_values(grid, layers.len(), values)
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn has_k_axis(&self) -> bool {
        self.layers > 1
    }

    #[inline]
    pub fn values(&self) -> &[C64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    #[inline]
    pub fn layer(&self, l: usize) -> &[C64] {
        let n = self.grid.layer_len();
        &self.values[l * n..(l + 1) * n]
    }

    #[inline]
    pub fn layer_mut(&mut self, l: usize) -> &mut [C64] {
        let n = self.grid.layer_len();
        &mut self.values[l * n..(l + 1) * n]
    }

    /// Copy of one layer as a single-layer field.
    pub fn layer_field(&self, l: usize) -> Field {
        Field {
            grid: self.grid,
            layers: 1,
            values: self.layer(l).to_vec(),
        }
    }

    #[inline]
    pub fn get(&self, l: usize, j: usize, s: usize, m: usize) -> C64 {
        self.values[l * self.grid.layer_len() + self.grid.idx(j, s, m)]
    }

    #[inline]
    pub fn set(&mut self, l: usize, j: usize, s: usize, m: usize, v: C64) {
        let n = self.grid.layer_len();
        self.values[l * n + self.grid.idx(j, s, m)] = v;
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.grid == other.grid && self.layers == other.layers
    }

    pub fn ensure_same_shape(&self, other: &Field) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::structural("field shapes differ"))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, a: C64) -> Field {
        self.map(|v| v * a)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Field {
        Field {
            grid: self.grid,
            layers: self.layers,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: C64, other: &Field) -> Result<Field> {
        self.ensure_same_shape(other)?;
        Ok(Field {
            grid: self.grid,
            layers: self.layers,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&x, &y)| x + a * y)
                .collect(),
        })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.axpy(C64::new(1.0, 0.0), other)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.axpy(C64::new(-1.0, 0.0), other)
    }

    /// Real inner product of the flattened (re, im) coefficient vectors.
    pub fn dot_re(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    /// Euclidean norm of the coefficient vector.
    pub fn coef_norm(&self) -> f64 {
        self.dot_re(self).sqrt()
    }

    /// Adds `other` (a single-layer field) to every layer.
    pub fn add_to_layers(&self, other: &Field) -> Result<Field> {
        if other.grid != self.grid || other.layers != 1 {
            return Err(Error::structural("broadcast operand must be one layer"));
        }
        let mut out = self.clone();
        for l in 0..self.layers {
            for (v, w) in out.layer_mut(l).iter_mut().zip(&other.values) {
                *v += w;
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Stencils

/// Second-order accurate first derivative on all nodes of a column
/// (centered inside, one-sided at both ends).
pub fn dz_column(col: &[C64], dz: f64, out: &mut [C64]) {
    let n = col.len();
    let inv = 1.0 / (2.0 * dz);
    out[0] = (-3.0 * col[0] + 4.0 * col[1] - col[2]) * inv;
    for m in 1..n - 1 {
        out[m] = (col[m + 1] - col[m - 1]) * inv;
    }
    out[n - 1] = (3.0 * col[n - 1] - 4.0 * col[n - 2] + col[n - 3]) * inv;
}

/// Second-order accurate second derivative on all nodes of a column.
pub fn dzz_column(col: &[C64], dz: f64, out: &mut [C64]) {
    let n = col.len();
    let inv = 1.0 / (dz * dz);
    out[0] = (2.0 * col[0] - 5.0 * col[1] + 4.0 * col[2] - col[3]) * inv;
    for m in 1..n - 1 {
        out[m] = (col[m - 1] - 2.0 * col[m] + col[m + 1]) * inv;
    }
    out[n - 1] = (2.0 * col[n - 1] - 5.0 * col[n - 2] + 4.0 * col[n - 3] - col[n - 4]) * inv;
}

/// `Δʰ` of one layer, written into `out` (interior nodes only, zero elsewhere).
pub fn laplacian_layer(grid: &GridSpec, f: &[C64], out: &mut [C64]) {
    let (nh, nz) = (grid.n_h, grid.n_z);
    let ih2 = 1.0 / (grid.h() * grid.h());
    let idz2 = 1.0 / (grid.dz() * grid.dz());
    out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
    for j in 1..nh - 1 {
        for s in 1..nh - 1 {
            let c = grid.col(j, s);
            let xm = grid.col(j - 1, s);
            let xp = grid.col(j + 1, s);
            let ym = grid.col(j, s - 1);
            let yp = grid.col(j, s + 1);
            for m in 1..nz - 1 {
                let f0 = f[c + m];
                out[c + m] = (f[c + m - 1] - 2.0 * f0 + f[c + m + 1]) * idz2
                    + (f[xm + m] - 2.0 * f0 + f[xp + m]) * ih2
                    + (f[ym + m] - 2.0 * f0 + f[yp + m]) * ih2;
            }
        }
    }
}

/// `∇ʰ` of one layer: centered `2h` differences across columns and centered
/// differences in z, interior nodes only.
pub fn gradient_layer(grid: &GridSpec, f: &[C64], gx: &mut [C64], gy: &mut [C64], gz: &mut [C64]) {
    let (nh, nz) = (grid.n_h, grid.n_z);
    let i2h = 1.0 / (2.0 * grid.h());
    let i2dz = 1.0 / (2.0 * grid.dz());
    let zero = C64::new(0.0, 0.0);
    gx.iter_mut().for_each(|v| *v = zero);
    gy.iter_mut().for_each(|v| *v = zero);
    gz.iter_mut().for_each(|v| *v = zero);
    for j in 1..nh - 1 {
        for s in 1..nh - 1 {
            let c = grid.col(j, s);
            let xm = grid.col(j - 1, s);
            let xp = grid.col(j + 1, s);
            let ym = grid.col(j, s - 1);
            let yp = grid.col(j, s + 1);
            for m in 1..nz - 1 {
                gx[c + m] = (f[xp + m] - f[xm + m]) * i2h;
                gy[c + m] = (f[yp + m] - f[ym + m]) * i2h;
                gz[c + m] = (f[c + m + 1] - f[c + m - 1]) * i2dz;
            }
        }
    }
}

/// Accumulates the transpose of [`laplacian_layer`] applied to `r` into `out`
/// (entries of `r` off the interior are ignored).
pub fn laplacian_layer_adjoint(grid: &GridSpec, r: &[C64], out: &mut [C64]) {
    let (nh, nz) = (grid.n_h, grid.n_z);
    let ih2 = 1.0 / (grid.h() * grid.h());
    let idz2 = 1.0 / (grid.dz() * grid.dz());
    for j in 1..nh - 1 {
        for s in 1..nh - 1 {
            let c = grid.col(j, s);
            let xm = grid.col(j - 1, s);
            let xp = grid.col(j + 1, s);
            let ym = grid.col(j, s - 1);
            let yp = grid.col(j, s + 1);
            for m in 1..nz - 1 {
                let v = r[c + m];
                let vz = v * idz2;
                let vh = v * ih2;
                out[c + m - 1] += vz;
                out[c + m + 1] += vz;
                out[c + m] -= 2.0 * vz + 4.0 * vh;
                out[xm + m] += vh;
                out[xp + m] += vh;
                out[ym + m] += vh;
                out[yp + m] += vh;
            }
        }
    }
}

/// Accumulates the transpose of [`gradient_layer`] applied to `(ax, ay, az)`.
pub fn gradient_layer_adjoint(
    grid: &GridSpec,
    ax: &[C64],
    ay: &[C64],
    az: &[C64],
    out: &mut [C64],
) {
    let (nh, nz) = (grid.n_h, grid.n_z);
    let i2h = 1.0 / (2.0 * grid.h());
    let i2dz = 1.0 / (2.0 * grid.dz());
    for j in 1..nh - 1 {
        for s in 1..nh - 1 {
            let c = grid.col(j, s);
            let xm = grid.col(j - 1, s);
            let xp = grid.col(j + 1, s);
            let ym = grid.col(j, s - 1);
            let yp = grid.col(j, s + 1);
            for m in 1..nz - 1 {
                let (vx, vy, vz) = (ax[c + m] * i2h, ay[c + m] * i2h, az[c + m] * i2dz);
                out[xp + m] += vx;
                out[xm + m] -= vx;
                out[yp + m] += vy;
                out[ym + m] -= vy;
                out[c + m + 1] += vz;
                out[c + m - 1] -= vz;
            }
        }
    }
}

/// `Δʰ f = f_zz + f_xx^h + f_yy^h` on interior nodes of every layer.
pub fn laplacian_h(f: &Field) -> Field {
    let grid = *f.grid();
    let mut out = Field {
        grid,
        layers: f.layers,
        values: vec![C64::new(0.0, 0.0); f.values.len()],
    };
    for l in 0..f.layers {
        let n = grid.layer_len();
        laplacian_layer(&grid, f.layer(l), &mut out.values[l * n..(l + 1) * n]);
    }
    out
}

/// `∇ʰ f = (∂ₓʰ f, ∂ᵧʰ f, ∂_z f)` on interior nodes of every layer.
pub fn gradient_h(f: &Field) -> (Field, Field, Field) {
    let mut gx = Field {
        grid: f.grid,
        layers: f.layers,
        values: vec![C64::new(0.0, 0.0); f.values.len()],
    };
    let mut gy = gx.clone();
    let mut gz = gx.clone();
    let n = f.grid.layer_len();
    for l in 0..f.layers {
        let r = l * n..(l + 1) * n;
        gradient_layer(
            &f.grid,
            f.layer(l),
            &mut gx.values[r.clone()],
            &mut gy.values[r.clone()],
            &mut gz.values[r],
        );
    }
    (gx, gy, gz)
}

// ---------------------------------------------------------------------------
// Norms

fn h2_layer_sq(grid: &GridSpec, f: &[C64], max_order: usize) -> f64 {
    let w = grid.z_weights();
    let dz = grid.dz();
    let h2 = grid.h() * grid.h();
    let mut d1 = vec![C64::new(0.0, 0.0); grid.n_z];
    let mut d2 = vec![C64::new(0.0, 0.0); grid.n_z];
    let mut total = 0.0;
    for j in 0..grid.n_h {
        for s in 0..grid.n_h {
            let c = grid.col(j, s);
            let col = &f[c..c + grid.n_z];
            let mut acc = 0.0;
            for (m, v) in col.iter().enumerate() {
                acc += w[m] * v.norm_sqr();
            }
            if max_order >= 1 {
                dz_column(col, dz, &mut d1);
                acc += d1
                    .iter()
                    .zip(&w)
                    .map(|(v, wm)| wm * v.norm_sqr())
                    .sum::<f64>();
            }
            if max_order >= 2 {
                dzz_column(col, dz, &mut d2);
                acc += d2
                    .iter()
                    .zip(&w)
                    .map(|(v, wm)| wm * v.norm_sqr())
                    .sum::<f64>();
            }
            total += h2 * acc;
        }
    }
    total
}

/// Squared `H^{2,h}` norm of a single layer.
pub fn norm_h2h_layer_sq(grid: &GridSpec, f: &[C64]) -> f64 {
    h2_layer_sq(grid, f, 2)
}

fn k_integrated(f: &Field, layer_sq: impl Fn(&[C64]) -> f64) -> f64 {
    let grid = f.grid();
    if f.layers == 1 {
        return layer_sq(f.layer(0));
    }
    let w = grid.k_weights();
    (0..f.layers).map(|l| w[l] * layer_sq(f.layer(l))).sum()
}

/// `L₂ʰ` norm; for a k-field the k-integral is included.
pub fn norm_l2h(f: &Field) -> f64 {
    k_integrated(f, |v| h2_layer_sq(f.grid(), v, 0)).sqrt()
}

/// `H^{2,h}` norm of a single-layer field.
pub fn norm_h2h(f: &Field) -> f64 {
    if f.layers != 1 {
        return norm_h2h_k(f);
    }
    h2_layer_sq(f.grid(), f.layer(0), 2).sqrt()
}

/// `H₂ʰ` norm: `H^{2,h}` norms integrated over the k-grid.
pub fn norm_h2h_k(f: &Field) -> f64 {
    k_integrated(f, |v| h2_layer_sq(f.grid(), v, 2)).sqrt()
}

/// Maximum boundary-condition defect of the `H₀` conditions (zero on `∂Ω`,
/// zero on the first interior z-layer as the first-order `f_z|Γ = 0`).
pub fn h0_defect(f: &Field) -> f64 {
    let g = f.grid();
    let mut defect: f64 = 0.0;
    for l in 0..f.layers {
        let v = f.layer(l);
        for j in 0..g.n_h {
            for s in 0..g.n_h {
                let c = g.col(j, s);
                if g.is_boundary_column(j, s) {
                    for m in 0..g.n_z {
                        defect = defect.max(v[c + m].norm());
                    }
                } else {
                    defect = defect
                        .max(v[c].norm())
                        .max(v[c + 1].norm())
                        .max(v[c + g.n_z - 1].norm());
                }
            }
        }
    }
    defect
}

/// Fails unless `f` satisfies the `H₀` boundary conditions to `1e-10`
/// relative to its largest value.
pub fn check_h0(f: &Field) -> Result<()> {
    let defect = h0_defect(f);
    let scale = f.max_abs().max(1.0);
    if defect > 1e-10 * scale {
        return Err(Error::Contract {
            what: "field violates zero boundary conditions of H0".into(),
            defect,
        });
    }
    Ok(())
}

/// Zeroes every entry constrained by the `H₀` conditions.
pub fn apply_h0(f: &mut Field) {
    let g = *f.grid();
    let zero = C64::new(0.0, 0.0);
    for l in 0..f.layers {
        let v = f.layer_mut(l);
        for j in 0..g.n_h {
            for s in 0..g.n_h {
                let c = g.col(j, s);
                if g.is_boundary_column(j, s) {
                    v[c..c + g.n_z].iter_mut().for_each(|x| *x = zero);
                } else {
                    v[c] = zero;
                    v[c + 1] = zero;
                    v[c + g.n_z - 1] = zero;
                }
            }
        }
    }
}

/// Weighted `Σ h² ∫ |Δʰ f|² ω(z) dz` for one layer.
pub fn weighted_laplacian_sq(grid: &GridSpec, f: &[C64], weight: &[f64]) -> f64 {
    let mut lap = vec![C64::new(0.0, 0.0); grid.layer_len()];
    laplacian_layer(grid, f, &mut lap);
    let w = grid.z_weights();
    let h2 = grid.h() * grid.h();
    let mut total = 0.0;
    for j in 1..grid.n_h - 1 {
        for s in 1..grid.n_h - 1 {
            let c = grid.col(j, s);
            let mut acc = 0.0;
            for m in 1..grid.n_z - 1 {
                acc += w[m] * weight[m] * lap[c + m].norm_sqr();
            }
            total += h2 * acc;
        }
    }
    total
}

/// The equivalent `H₀,₂ʰ` norm `(Σ h² ∫ |Δʰ f|² dz)^{1/2}`; requires the
/// `H₀` boundary conditions.
pub fn norm_h02h_equivalent(f: &Field) -> Result<f64> {
    check_h0(f)?;
    let g = f.grid();
    let ones = vec![1.0; g.n_z];
    Ok(k_integrated(f, |v| weighted_laplacian_sq(g, v, &ones)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(nh: usize, nz: usize) -> GridSpec {
        GridSpec::new(0.5, 0.4, 0.6, nh, nz, 1.0, 2.0, 5).unwrap()
    }

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn stencil_adjoints_satisfy_the_pairing_identity() {
        let g = grid(6, 9);
        let f = random_field(g, 21);
        let r = random_field(g, 22);
        let bil = |a: &[C64], b: &[C64]| -> C64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        let mut lf = vec![C64::new(0.0, 0.0); g.layer_len()];
        laplacian_layer(&g, f.layer(0), &mut lf);
        let mut lt = vec![C64::new(0.0, 0.0); g.layer_len()];
        laplacian_layer_adjoint(&g, r.layer(0), &mut lt);
        // only interior entries of r take part
        let mut ri = r.layer(0).to_vec();
        for j in 0..g.n_h {
            for s in 0..g.n_h {
                for m in 0..g.n_z {
                    if !g.is_interior(j, s, m) {
                        ri[g.idx(j, s, m)] = C64::new(0.0, 0.0);
                    }
                }
            }
        }
        let a = bil(&ri, &lf);
        let b = bil(&lt, f.layer(0));
        assert!((a - b).norm() <= 1e-12 * a.norm());

        let (r2, r3) = (random_field(g, 23), random_field(g, 24));
        let (mut gx, mut gy, mut gz) = (lf.clone(), lf.clone(), lf.clone());
        gradient_layer(&g, f.layer(0), &mut gx, &mut gy, &mut gz);
        let mut gt = vec![C64::new(0.0, 0.0); g.layer_len()];
        gradient_layer_adjoint(&g, r.layer(0), r2.layer(0), r3.layer(0), &mut gt);
        let a = bil(r.layer(0), &gx) + bil(r2.layer(0), &gy) + bil(r3.layer(0), &gz);
        let b = bil(&gt, f.layer(0));
        assert!((a - b).norm() <= 1e-12 * a.norm());
    }

    fn random_field(g: GridSpec, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Field::zeros(g);
        for v in f.values_mut() {
            *v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        f
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(0.5, 0.4, 0.6, 2, 9, 1.0, 2.0, 5).is_err());
        assert!(GridSpec::new(0.5, 0.4, 0.6, 5, 4, 1.0, 2.0, 5).is_err());
        assert!(GridSpec::new(0.5, 0.4, 0.6, 5, 9, 2.0, 1.0, 5).is_err());
        assert!(GridSpec::new(-0.5, 0.4, 0.6, 5, 9, 1.0, 2.0, 5).is_err());
        assert!(GridSpec::new(0.5, 0.4, 0.6, 5, 9, 1.0, 2.0, 2).is_err());
    }

    #[test]
    fn nodes_tile_the_domain() {
        let g = grid(5, 9);
        assert_eq!(g.x(0), -0.5);
        assert!((g.x(4) - 0.5).abs() < 1e-15);
        assert_eq!(g.z(0), -0.4);
        assert_eq!(g.z(8), 0.6);
        assert_eq!(g.k(4), 2.0);
    }

    #[test]
    fn laplacian_of_linear_and_quadratic() {
        let g = grid(5, 9);
        let lin = Field::from_fn(g, |x, _, _| c(x));
        let lap = laplacian_h(&lin);
        assert!(lap.max_abs() < 1e-12);

        let quad = Field::from_fn(g, |x, y, z| c(x * x + y * y + z * z));
        let lap = laplacian_h(&quad);
        for j in 1..4 {
            for s in 1..4 {
                for m in 1..8 {
                    assert!((lap.get(0, j, s, m) - c(6.0)).norm() < 1e-10);
                }
            }
        }
        // boundary entries are not evaluated
        assert_eq!(lap.get(0, 0, 2, 3), c(0.0));
    }

    #[test]
    fn laplacian_matches_direct_stencil_on_sine() {
        let g = GridSpec::new(0.5, 0.4, 0.6, 5, 5, 1.0, 2.0, 5).unwrap();
        let pi = std::f64::consts::PI;
        let f = |x: f64| (pi * x / 0.5).sin();
        let field = Field::from_fn(g, |x, _, _| c(f(x)));
        let lap = laplacian_h(&field);
        let h = g.h();
        for j in 1..4 {
            let x = g.x(j);
            let direct = (f(x - h) - 2.0 * f(x) + f(x + h)) / (h * h);
            for s in 1..4 {
                for m in 1..4 {
                    assert!((lap.get(0, j, s, m).re - direct).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn gradient_of_affine_field() {
        let g = grid(5, 9);
        let f = Field::from_fn(g, |x, y, z| c(2.0 * x - 3.0 * y + z));
        let (gx, gy, gz) = gradient_h(&f);
        for j in 1..4 {
            for s in 1..4 {
                for m in 1..8 {
                    assert!((gx.get(0, j, s, m) - c(2.0)).norm() < 1e-12);
                    assert!((gy.get(0, j, s, m) - c(-3.0)).norm() < 1e-12);
                    assert!((gz.get(0, j, s, m) - c(1.0)).norm() < 1e-12);
                }
            }
        }
        let (cx, cy, cz) = gradient_h(&Field::from_fn(g, |_, _, _| c(4.0)));
        assert!(cx.max_abs() == 0.0 && cy.max_abs() == 0.0 && cz.max_abs() == 0.0);
    }

    #[test]
    fn gradient_z_symbol_of_plane_wave() {
        let g = grid(5, 9);
        let k = 3.7;
        let f = Field::from_fn(g, |_, _, z| C64::new(0.0, k * z).exp());
        let (_, _, gz) = gradient_h(&f);
        let dz = g.dz();
        let symbol = C64::new(0.0, (k * dz).sin() / dz);
        for m in 1..8 {
            let expect = symbol * C64::new(0.0, k * g.z(m)).exp();
            assert!((gz.get(0, 2, 2, m) - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn norms_of_constants() {
        let g = grid(5, 9);
        assert_eq!(norm_h2h(&Field::zeros(g)), 0.0);
        let one = Field::from_fn(g, |_, _, _| c(1.0));
        let expect = g.h() * g.n_h as f64 * g.depth().sqrt();
        assert!((norm_h2h(&one) - expect).abs() < 1e-12);
        assert!((norm_l2h(&one) - expect).abs() < 1e-12);

        // unit k-interval: k-integral of a constant-in-k field is the layer norm
        let one_k = Field::from_fn_k(g, |_, _, _, _| c(1.0));
        assert!((norm_h2h_k(&one_k) - expect).abs() < 1e-12);
    }

    /// Independent summation: explicit loops with hand-written stencils.
    fn oracle_h2h(g: &GridSpec, f: &Field) -> f64 {
        let dz = g.dz();
        let n = g.n_z;
        let mut total = 0.0;
        for j in 0..g.n_h {
            for s in 0..g.n_h {
                let u: Vec<C64> = (0..n).map(|m| f.get(0, j, s, m)).collect();
                for m in 0..n {
                    let w = if m == 0 || m == n - 1 { dz / 2.0 } else { dz };
                    let d1 = if m == 0 {
                        (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * dz)
                    } else if m == n - 1 {
                        (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * dz)
                    } else {
                        (u[m + 1] - u[m - 1]) / (2.0 * dz)
                    };
                    let d2 = if m == 0 {
                        (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / (dz * dz)
                    } else if m == n - 1 {
                        (2.0 * u[n - 1] - 5.0 * u[n - 2] + 4.0 * u[n - 3] - u[n - 4]) / (dz * dz)
                    } else {
                        (u[m - 1] - 2.0 * u[m] + u[m + 1]) / (dz * dz)
                    };
                    total += g.h() * g.h() * w * (u[m].norm_sqr() + d1.norm_sqr() + d2.norm_sqr());
                }
            }
        }
        total.sqrt()
    }

    #[test]
    fn h2h_norm_matches_summation_oracle() {
        let g = grid(5, 9);
        let f = random_field(g, 7);
        let a = norm_h2h(&f);
        let b = oracle_h2h(&g, &f);
        assert!((a - b).abs() <= 1e-12 * b);
    }

    #[test]
    fn h2h_k_norm_matches_oracle() {
        let g = grid(5, 9);
        let layers: Vec<Field> = (0..g.n_k)
            .map(|l| random_field(g, 100 + l as u64))
            .collect();
        let f = Field::stack(&layers).unwrap();
        let w = g.k_weights();
        let expect: f64 = layers
            .iter()
            .zip(&w)
            .map(|(f, w)| w * oracle_h2h(&g, f).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((norm_h2h_k(&f) - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn h02_equivalent_norm() {
        let g = grid(5, 9);
        assert_eq!(norm_h02h_equivalent(&Field::zeros(g)).unwrap(), 0.0);

        let mut f = random_field(g, 3);
        assert!(norm_h02h_equivalent(&f).is_err());
        apply_h0(&mut f);
        let got = norm_h02h_equivalent(&f).unwrap();

        let (h, dz) = (g.h(), g.dz());
        let mut total = 0.0;
        for j in 1..4 {
            for s in 1..4 {
                for m in 1..8 {
                    let lap = (f.get(0, j, s, m - 1) - 2.0 * f.get(0, j, s, m)
                        + f.get(0, j, s, m + 1))
                        / (dz * dz)
                        + (f.get(0, j - 1, s, m) - 2.0 * f.get(0, j, s, m) + f.get(0, j + 1, s, m))
                            / (h * h)
                        + (f.get(0, j, s - 1, m) - 2.0 * f.get(0, j, s, m) + f.get(0, j, s + 1, m))
                            / (h * h);
                    total += h * h * dz * lap.norm_sqr();
                }
            }
        }
        assert!((got - total.sqrt()).abs() <= 1e-12 * got);
    }

    #[test]
    fn l2_below_h2() {
        let g = grid(5, 9);
        for seed in 0..10 {
            let f = random_field(g, seed);
            assert!(norm_l2h(&f) <= norm_h2h(&f));
        }
    }
}
