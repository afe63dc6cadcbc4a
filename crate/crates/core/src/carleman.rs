//! Carleman weight `φ_λ(z) = e^{-2λz}`, the weighted quadratic form
//! `B_h(u, λ) = Σ h² ∫ |Δʰu|² φ_λ dz` and an empirical check of the Carleman
//! estimate on random admissible fields.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{apply_h0, check_h0, laplacian_layer, Field, GridSpec, C64};

/// `e^{-2λz}`.
pub fn weight(z: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::domain(format!(
            "Carleman parameter must be positive, got {lambda}"
        )));
    }
    Ok((-2.0 * lambda * z).exp())
}

/// Node values of the weight on a grid, with the balancing factor `e^{2λd}`.
/// `λ = 0` is accepted and gives the unweighted form.
#[derive(Debug, Clone, PartialEq)]
pub struct CarlemanWeight {
    pub lambda: f64,
    pub nodes: Vec<f64>,
    pub balance: f64,
}

impl CarlemanWeight {
    pub fn new(grid: &GridSpec, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::domain(format!(
                "Carleman parameter must be nonnegative, got {lambda}"
            )));
        }
        Ok(CarlemanWeight {
            lambda,
            nodes: (0..grid.n_z)
                .map(|m| (-2.0 * lambda * grid.z(m)).exp())
                .collect(),
            balance: (2.0 * lambda * grid.d).exp(),
        })
    }

    /// `e^{2λd} φ_λ(z_m) = e^{2λ(d - z_m)}`, computed without overflow of
    /// the separate factors.
    pub fn balanced(&self, grid: &GridSpec) -> Vec<f64> {
        (0..grid.n_z)
            .map(|m| (2.0 * self.lambda * (grid.d - grid.z(m))).exp())
            .collect()
    }
}

/// Per-layer `Σ h² Σ_m w_m φ_m |Δʰu|²` over interior nodes.
pub(crate) fn weighted_lap_layer(grid: &GridSpec, u: &[C64], phi: &[f64], lap: &mut [C64]) -> f64 {
    laplacian_layer(grid, u, lap);
    let w = grid.z_weights();
    let h2 = grid.h() * grid.h();
    let mut total = 0.0;
    for j in 1..grid.n_h - 1 {
        for s in 1..grid.n_h - 1 {
            let c = grid.col(j, s);
            let acc: f64 = (1..grid.n_z - 1)
                .map(|m| w[m] * phi[m] * lap[c + m].norm_sqr())
                .sum();
            total += h2 * acc;
        }
    }
    total
}

/// `B_h(u, λ)`; for a k-field the k-integral is included. `u` must satisfy
/// the `H₀` boundary conditions.
pub fn carleman_quadratic(u: &Field, lambda: f64) -> Result<f64> {
    check_h0(u)?;
    let g = *u.grid();
    let cw = CarlemanWeight::new(&g, lambda)?;
    let mut lap = vec![C64::new(0.0, 0.0); g.layer_len()];
    if u.layers() == 1 {
        return Ok(weighted_lap_layer(&g, u.layer(0), &cw.nodes, &mut lap));
    }
    let kw = g.k_weights();
    Ok((0..u.layers())
        .map(|l| kw[l] * weighted_lap_layer(&g, u.layer(l), &cw.nodes, &mut lap))
        .sum())
}

/// The three weighted terms of the right-hand side, using centered z-stencils
/// on interior nodes: `(Σh²∫|u_zz|²φ, Σh²∫|u_z|²φ, Σh²∫|u|²φ)`.
pub fn carleman_denominator_terms(u: &Field, lambda: f64) -> Result<[f64; 3]> {
    if u.layers() != 1 {
        return Err(Error::structural(
            "Carleman ratio is defined for single-layer fields",
        ));
    }
    let g = *u.grid();
    let cw = CarlemanWeight::new(&g, lambda)?;
    let w = g.z_weights();
    let (dz, h2) = (g.dz(), g.h() * g.h());
    let f = u.layer(0);
    let mut terms = [0.0; 3];
    for j in 0..g.n_h {
        for s in 0..g.n_h {
            let c = g.col(j, s);
            for m in 0..g.n_z {
                terms[2] += h2 * w[m] * cw.nodes[m] * f[c + m].norm_sqr();
            }
            for m in 1..g.n_z - 1 {
                let uz = (f[c + m + 1] - f[c + m - 1]) / (2.0 * dz);
                let uzz = (f[c + m + 1] - 2.0 * f[c + m] + f[c + m - 1]) / (dz * dz);
                terms[0] += h2 * w[m] * cw.nodes[m] * uzz.norm_sqr();
                terms[1] += h2 * w[m] * cw.nodes[m] * uz.norm_sqr();
            }
        }
    }
    Ok(terms)
}

/// `R(u, λ) = B_h / (‖u_zz‖²_φ + λ‖u_z‖²_φ + λ³‖u‖²_φ)`.
pub fn carleman_ratio(u: &Field, lambda: f64) -> Result<f64> {
    let b = carleman_quadratic(u, lambda)?;
    let [zz, z, v] = carleman_denominator_terms(u, lambda)?;
    let den = zz + lambda * z + lambda.powi(3) * v;
    if den == 0.0 {
        return Err(Error::domain("Carleman ratio of the zero field"));
    }
    Ok(b / den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarlemanRow {
    pub lambda: f64,
    pub min_ratio: f64,
    pub lambda3_h2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarlemanReport {
    pub rows: Vec<CarlemanRow>,
    /// Smallest tested λ after which the minimum ratio no longer decreases.
    pub lambda0: f64,
}

impl CarlemanReport {
    pub fn all_positive(&self) -> bool {
        self.rows.iter().all(|r| r.min_ratio > 0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,min_ratio,lambda3_h2\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:e},{:e}\n",
                r.lambda, r.min_ratio, r.lambda3_h2
            ));
        }
        out
    }
}

/// Minimum of [`carleman_ratio`] over the samples, for each λ.
pub fn verify_carleman(samples: &[Field], lambdas: &[f64]) -> Result<CarlemanReport> {
    if samples.is_empty() || lambdas.is_empty() {
        return Err(Error::structural("need at least one sample and one lambda"));
    }
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("lambda list must be strictly increasing"));
    }
    let h2 = samples[0].grid().h().powi(2);
    let rows = lambdas
        .iter()
        .map(|&lambda| {
            let ratios: Result<Vec<f64>> = samples
                .par_iter()
                .map(|u| carleman_ratio(u, lambda))
                .collect();
            let min_ratio = ratios?.into_iter().fold(f64::INFINITY, f64::min);
            Ok(CarlemanRow {
                lambda,
                min_ratio,
                lambda3_h2: lambda.powi(3) * h2,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lambda0 = rows
        .windows(2)
        .find(|w| w[1].min_ratio >= w[0].min_ratio)
        .map(|w| w[0].lambda)
        .unwrap_or(rows[rows.len() - 1].lambda);
    Ok(CarlemanReport { rows, lambda0 })
}

/// Repeated 3-point averages along each axis, in place, on one layer.
/// End nodes of each line are left unchanged.
pub(crate) fn smooth_layer(grid: &GridSpec, f: &mut [C64], passes: usize) {
    let (nh, nz) = (grid.n_h, grid.n_z);
    // (stride, length) of lines along x, y, z
    let axes = [(nh * nz, nh), (nz, nh), (1, nz)];
    let mut tmp = f.to_vec();
    for _ in 0..passes {
        for &(stride, len) in &axes {
            tmp.copy_from_slice(f);
            for i in 0..f.len() {
                let pos = (i / stride) % len;
                if pos > 0 && pos + 1 < len {
                    f[i] = (tmp[i - stride] + tmp[i] + tmp[i + stride]) / 3.0;
                }
            }
        }
    }
}

/// A random field satisfying the `H₀` conditions: uniform interior
/// coefficients in `[-1, 1]²`, smoothed twice along every axis, then the
/// constrained entries zeroed.
pub fn random_admissible(grid: &GridSpec, rng: &mut impl Rng) -> Field {
    let mut f = Field::zeros(*grid);
    for v in f.values_mut() {
        *v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    smooth_layer(grid, f.layer_mut(0), 2);
    apply_h0(&mut f);
    f
}
