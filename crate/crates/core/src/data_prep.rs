//! From boundary traces to the transformed unknowns: `w = u / u_i`, the
//! unwrapped `log w`, `v = log w / k²`, `q = ∂_k v`, the boundary functions
//! `φ₀, φ₁` (for `q`) and `ψ₀, ψ₁` (for the tail), and smooth extensions
//! `Q` and `F` of those boundary functions into `Ω`.
//!
//! Traces on `Γ` are flat vectors indexed `(l * n_h + j) * n_h + s`; per-column
//! quantities without a k-axis are indexed `j * n_h + s`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::forward_sim::MeasuredBoundaryData;
use crate::grid::{Field, GridSpec, C64};

/// `w = u e^{-ikz}` for a single-layer field at wavenumber `k`.
pub fn compute_w(u: &Field, k: f64) -> Field {
    let g = *u.grid();
    let mut out = u.clone();
    let vals = out.values_mut();
    for j in 0..g.n_h {
        for s in 0..g.n_h {
            for m in 0..g.n_z {
                let i = g.idx(j, s, m);
                vals[i] *= C64::new(0.0, -k * g.z(m)).exp();
            }
        }
    }
    out
}

/// `w` for every layer of a k-field.
pub fn compute_w_k(u: &Field) -> Result<Field> {
    let g = *u.grid();
    if u.layers() != g.n_k {
        return Err(Error::structural("expected a field with a k-axis"));
    }
    let layers: Vec<Field> = (0..g.n_k)
        .map(|l| compute_w(&u.layer_field(l), g.k(l)))
        .collect();
    Field::stack(&layers)
}

/// `w` and `w_z` traces on `Γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct WTraces {
    pub w0: Vec<C64>,
    pub w1: Vec<C64>,
}

/// `w = g₀ e^{-ikz}`, `w_z = (g₁ - ik g₀) e^{-ikz}` at `z = -ξ`.
pub fn compute_w_traces(data: &MeasuredBoundaryData) -> Result<WTraces> {
    data.validate()?;
    let g = data.grid;
    let mut w0 = Vec::with_capacity(data.g0.len());
    let mut w1 = Vec::with_capacity(data.g0.len());
    for l in 0..g.n_k {
        let k = g.k(l);
        let phase = C64::new(0.0, k * g.xi).exp();
        for j in 0..g.n_h {
            for s in 0..g.n_h {
                let i = data.trace_index(l, j, s);
                w0.push(data.g0[i] * phase);
                w1.push((data.g1[i] - C64::new(0.0, k) * data.g0[i]) * phase);
            }
        }
    }
    Ok(WTraces { w0, w1 })
}

/// Unwrapped `log w` on `Γ` with the winding count of every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LogField {
    pub grid: GridSpec,
    pub values: Vec<C64>,
    /// `Im log w = arg w + 2π · winding`, `arg` the principal argument.
    pub winding: Vec<i64>,
}

impl LogField {
    #[inline]
    pub fn index(&self, l: usize, j: usize, s: usize) -> usize {
        (l * self.grid.n_h + j) * self.grid.n_h + s
    }
}

fn principal_log(w: C64) -> C64 {
    C64::new(w.norm().ln(), w.arg())
}

/// Branch of `log w` closest to `reference`.
fn unwrap_near(w: C64, reference: f64) -> (C64, i64) {
    let base = principal_log(w);
    let n = ((reference - base.im) / (2.0 * PI)).round();
    (C64::new(base.re, base.im + 2.0 * PI * n), n as i64)
}

/// Phase-unwrapped logarithm of the `w` traces.
///
/// The anchor is the `k̄` sample of column `(0, 0)` (the corner nearest
/// `(-b, -b)`), where the principal branch is taken. Each column is unwrapped
/// along k downward from `k̄`; the `k̄` sample of each column follows the
/// previous column in row-major order. Every adjacent pair (along k, and
/// between x/y neighbors at equal k) must then differ by less than π.
pub fn log_unwrapped(w0: &[C64], grid: &GridSpec) -> Result<LogField> {
    let (nh, nk) = (grid.n_h, grid.n_k);
    if w0.len() != nh * nh * nk {
        return Err(Error::structural("w-trace length does not match the grid"));
    }
    let idx = |l: usize, j: usize, s: usize| (l * nh + j) * nh + s;
    for l in 0..nk {
        for j in 0..nh {
            for s in 0..nh {
                let a = w0[idx(l, j, s)].norm();
                if !(a >= 1e-12) {
                    return Err(Error::DegenerateAmplitude {
                        amplitude: a,
                        k_index: l,
                        j,
                        s,
                    });
                }
            }
        }
    }
    let mut values = vec![C64::new(0.0, 0.0); w0.len()];
    let mut winding = vec![0i64; w0.len()];
    let top = nk - 1;
    let mut prev: Option<usize> = None;
    for j in 0..nh {
        for s in 0..nh {
            let anchor = idx(top, j, s);
            let (v, n) = match prev {
                None => (principal_log(w0[anchor]), 0),
                Some(p) => unwrap_near(w0[anchor], values[p].im),
            };
            values[anchor] = v;
            winding[anchor] = n;
            for l in (0..top).rev() {
                let i = idx(l, j, s);
                let (v, n) = unwrap_near(w0[i], values[idx(l + 1, j, s)].im);
                values[i] = v;
                winding[i] = n;
            }
            prev = Some(anchor);
        }
    }

    let check = |a: usize, b: usize, from: String, to: String| -> Result<()> {
        let jump = (values[a].im - values[b].im).abs();
        if jump >= PI {
            Err(Error::Unwrap { jump, from, to })
        } else {
            Ok(())
        }
    };
    for l in 0..nk {
        for j in 0..nh {
            for s in 0..nh {
                let here = idx(l, j, s);
                let name = |l: usize, j: usize, s: usize| format!("(k={l}, j={j}, s={s})");
                if l + 1 < nk {
                    check(here, idx(l + 1, j, s), name(l, j, s), name(l + 1, j, s))?;
                }
                if j + 1 < nh {
                    check(here, idx(l, j + 1, s), name(l, j, s), name(l, j + 1, s))?;
                }
                if s + 1 < nh {
                    check(here, idx(l, j, s + 1), name(l, j, s), name(l, j, s + 1))?;
                }
            }
        }
    }
    Ok(LogField {
        grid: *grid,
        values,
        winding,
    })
}

/// `∂_k` of samples on the uniform k-grid: centered inside, second-order
/// one-sided stencils at both ends.
pub fn k_derivative(series: &[C64], dk: f64) -> Result<Vec<C64>> {
    let n = series.len();
    if n < 3 {
        return Err(Error::structural(format!(
            "need at least 3 k-nodes, got {n}"
        )));
    }
    let inv = 1.0 / (2.0 * dk);
    let mut out = vec![C64::new(0.0, 0.0); n];
    out[0] = (-3.0 * series[0] + 4.0 * series[1] - series[2]) * inv;
    for l in 1..n - 1 {
        out[l] = (series[l + 1] - series[l - 1]) * inv;
    }
    out[n - 1] = (3.0 * series[n - 1] - 4.0 * series[n - 2] + series[n - 3]) * inv;
    Ok(out)
}

/// Applies [`k_derivative`] sample-wise to traces laid out `[l][column]`.
fn k_derivative_traces(values: &[C64], grid: &GridSpec) -> Result<Vec<C64>> {
    let cols = grid.n_h * grid.n_h;
    let mut out = vec![C64::new(0.0, 0.0); values.len()];
    let mut series = vec![C64::new(0.0, 0.0); grid.n_k];
    for c in 0..cols {
        for l in 0..grid.n_k {
            series[l] = values[l * cols + c];
        }
        let d = k_derivative(&series, grid.dk())?;
        for l in 0..grid.n_k {
            out[l * cols + c] = d[l];
        }
    }
    Ok(out)
}

/// `v = log w / k²` and `q = ∂_k v` traces.
#[derive(Debug, Clone, PartialEq)]
pub struct VqTraces {
    pub v: Vec<C64>,
    pub q: Vec<C64>,
}

pub fn compute_v_q(log: &LogField) -> Result<VqTraces> {
    let g = log.grid;
    let cols = g.n_h * g.n_h;
    let v: Vec<C64> = log
        .values
        .iter()
        .enumerate()
        .map(|(i, lw)| lw / g.k(i / cols).powi(2))
        .collect();
    let q = k_derivative_traces(&v, &g)?;
    Ok(VqTraces { v, q })
}

/// Boundary data for the two minimization problems.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFunctions {
    pub grid: GridSpec,
    /// `q|Γ` per k, indexed `[l][column]`.
    pub phi0: Vec<C64>,
    /// `q_z|Γ` per k.
    pub phi1: Vec<C64>,
    /// `V|Γ = v(·, k̄)|Γ`, indexed by column.
    pub psi0: Vec<C64>,
    /// `V_z|Γ`.
    pub psi1: Vec<C64>,
}

impl BoundaryFunctions {
    /// `q(·, k̄) ≈ -V/k̄` from the large-k tail ansatz, for comparison with
    /// the one-sided stencil value `φ₀(·, k̄)`.
    pub fn tail_q_estimate(&self) -> Vec<C64> {
        self.psi0.iter().map(|v| -v / self.grid.k_max).collect()
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let cols = grid.n_h * grid.n_h;
        let z = C64::new(0.0, 0.0);
        BoundaryFunctions {
            grid,
            phi0: vec![z; cols * grid.n_k],
            phi1: vec![z; cols * grid.n_k],
            psi0: vec![z; cols],
            psi1: vec![z; cols],
        }
    }
}

/// `φ₀ = q|Γ`, `φ₁ = ∂_k(v_z)|Γ`, `ψ₀ = v(k̄)|Γ`, `ψ₁ = v_z(k̄)|Γ`, where
/// `v_z = (w_z / w) / k²` on `Γ`.
pub fn boundary_functions(
    traces: &WTraces,
    vq: &VqTraces,
    grid: &GridSpec,
) -> Result<BoundaryFunctions> {
    let cols = grid.n_h * grid.n_h;
    if traces.w0.len() != cols * grid.n_k || vq.v.len() != traces.w0.len() {
        return Err(Error::structural("trace lengths do not match the grid"));
    }
    let vz: Vec<C64> = traces
        .w0
        .iter()
        .zip(&traces.w1)
        .enumerate()
        .map(|(i, (w, wz))| wz / w / grid.k(i / cols).powi(2))
        .collect();
    let qz = k_derivative_traces(&vz, grid)?;
    let top = (grid.n_k - 1) * cols;
    Ok(BoundaryFunctions {
        grid: *grid,
        phi0: vq.q.clone(),
        phi1: qz,
        psi0: vq.v[top..top + cols].to_vec(),
        psi1: vz[top..top + cols].to_vec(),
    })
}

/// Depth fraction of `(d + ξ)` over which the extension cutoff decays.
pub const CUTOFF_FRACTION: f64 = 0.3;

/// Cubic Hermite cutoff `χ` and `χ'`: `χ(-ξ) = 1`, `χ'(-ξ) = 0`,
/// `χ = χ' = 0` from `z* = -ξ + 0.3 (d + ξ)` on.
pub fn cutoff(z: f64, grid: &GridSpec) -> (f64, f64) {
    let len = CUTOFF_FRACTION * grid.depth();
    let t = (z + grid.xi) / len;
    if t >= 1.0 {
        return (0.0, 0.0);
    }
    let t = t.max(0.0);
    (
        (1.0 - t).powi(2) * (1.0 + 2.0 * t),
        6.0 * t * (t - 1.0) / len,
    )
}

/// Lateral taper on node index `j`: 0 on the face, ½ one node in, 1 beyond.
pub fn taper_1d(j: usize, n_h: usize) -> f64 {
    let dist = j.min(n_h - 1 - j);
    match dist {
        0 => 0.0,
        1 => (PI / 4.0).sin().powi(2),
        _ => 1.0,
    }
}

pub fn taper(j: usize, s: usize, n_h: usize) -> f64 {
    taper_1d(j, n_h) * taper_1d(s, n_h)
}

/// Extensions `Q` (tail) and `F` (per k) of the boundary functions.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionPair {
    pub q: Field,
    pub f: Field,
    /// `L₂` norm over `Γ` of what the taper removes from `ψ₀` and `φ₀`.
    pub taper_defect_q: f64,
    pub taper_defect_f: f64,
}

fn extend_layer(grid: &GridSpec, val: &[C64], slope: &[C64], out: &mut [C64]) {
    let profile: Vec<(f64, f64)> = (0..grid.n_z).map(|m| cutoff(grid.z(m), grid)).collect();
    for j in 0..grid.n_h {
        for s in 0..grid.n_h {
            let kappa = taper(j, s, grid.n_h);
            let c = j * grid.n_h + s;
            let col = grid.col(j, s);
            for m in 0..grid.n_z {
                let depth = grid.z(m) + grid.xi;
                out[col + m] = (val[c] + depth * slope[c]) * (profile[m].0 * kappa);
            }
        }
    }
}

/// Analytic `∂_z` at `Γ` of an extension built by [`extend_layer`].
fn extension_dz_at_gamma(grid: &GridSpec, val: C64, slope: C64, kappa: f64) -> C64 {
    let (chi, dchi) = cutoff(-grid.xi, grid);
    (slope * chi + val * dchi) * kappa
}

fn verify_layer(
    grid: &GridSpec,
    field: &[C64],
    val: &[C64],
    slope: &[C64],
    name: &str,
) -> Result<()> {
    let scale = val
        .iter()
        .chain(slope)
        .map(|v| v.norm())
        .fold(1.0, f64::max);
    let tol = 1e-10 * scale;
    let mut gamma: f64 = 0.0;
    let mut lateral: f64 = 0.0;
    let mut top: f64 = 0.0;
    for j in 0..grid.n_h {
        for s in 0..grid.n_h {
            let col = grid.col(j, s);
            let kappa = taper(j, s, grid.n_h);
            let c = j * grid.n_h + s;
            if kappa == 1.0 {
                let dz = extension_dz_at_gamma(grid, val[c], slope[c], kappa);
                gamma = gamma
                    .max((field[col] - val[c]).norm())
                    .max((dz - slope[c]).norm());
            }
            if grid.is_boundary_column(j, s) {
                for m in 0..grid.n_z {
                    lateral = lateral.max(field[col + m].norm());
                }
            }
            top = top.max(field[col + grid.n_z - 1].norm());
        }
    }
    for (face, defect) in [
        ("Gamma", gamma),
        ("lateral faces", lateral),
        ("top face", top),
    ] {
        if defect > tol {
            return Err(Error::Extension {
                face: format!("{name}: {face}"),
                defect,
            });
        }
    }
    Ok(())
}

fn taper_defect(grid: &GridSpec, val: &[C64]) -> f64 {
    let h2 = grid.h() * grid.h();
    let mut acc = 0.0;
    for j in 0..grid.n_h {
        for s in 0..grid.n_h {
            let c = j * grid.n_h + s;
            acc += h2 * ((1.0 - taper(j, s, grid.n_h)) * val[c]).norm_sqr();
        }
    }
    acc.sqrt()
}

/// `Q = [ψ₀ + (z+ξ) ψ₁] χ(z) κ(x,y)` and `F` likewise from `(φ₀, φ₁)` per k.
pub fn build_extensions(bf: &BoundaryFunctions) -> Result<ExtensionPair> {
    let grid = bf.grid;
    let cols = grid.n_h * grid.n_h;
    if bf.psi0.len() != cols || bf.psi1.len() != cols || bf.phi0.len() != cols * grid.n_k {
        return Err(Error::structural(
            "boundary function lengths do not match the grid",
        ));
    }
    let mut q = Field::zeros(grid);
    extend_layer(&grid, &bf.psi0, &bf.psi1, q.layer_mut(0));
    verify_layer(&grid, q.layer(0), &bf.psi0, &bf.psi1, "Q")?;

    let mut f = Field::zeros_k(grid);
    let mut defect_f = 0.0;
    let kw = grid.k_weights();
    for l in 0..grid.n_k {
        let r = l * cols..(l + 1) * cols;
        extend_layer(
            &grid,
            &bf.phi0[r.clone()],
            &bf.phi1[r.clone()],
            f.layer_mut(l),
        );
        verify_layer(
            &grid,
            f.layer(l),
            &bf.phi0[r.clone()],
            &bf.phi1[r.clone()],
            "F",
        )?;
        defect_f += kw[l] * taper_defect(&grid, &bf.phi0[r]).powi(2);
    }
    Ok(ExtensionPair {
        q,
        f,
        taper_defect_q: taper_defect(&grid, &bf.psi0),
        taper_defect_f: defect_f.sqrt(),
    })
}

/// Everything derived from one dataset before the minimizations.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub traces: WTraces,
    pub log: LogField,
    pub vq: VqTraces,
    pub boundary: BoundaryFunctions,
    pub extensions: ExtensionPair,
}

pub fn prepare(data: &MeasuredBoundaryData) -> Result<PreparedData> {
    let traces = compute_w_traces(data)?;
    let log = log_unwrapped(&traces.w0, &data.grid)?;
    let vq = compute_v_q(&log)?;
    let boundary = boundary_functions(&traces, &vq, &data.grid)?;
    let extensions = build_extensions(&boundary)?;
    Ok(PreparedData {
        traces,
        log,
        vq,
        boundary,
        extensions,
    })
}

// ---------------------------------------------------------------------------
// Volumetric oracles from interior fields

/// `log w` on all of `Ω` for a k-field `w`: each column is unwrapped upward
/// in z starting from the unwrapped `Γ` value.
pub fn volumetric_log(w: &Field, gamma: &LogField) -> Result<Field> {
    let g = *w.grid();
    if w.layers() != g.n_k || gamma.grid != g {
        return Err(Error::structural(
            "volumetric log needs a k-field on the same grid",
        ));
    }
    let mut out = Field::zeros_k(g);
    for l in 0..g.n_k {
        for j in 0..g.n_h {
            for s in 0..g.n_h {
                let mut reference = gamma.values[gamma.index(l, j, s)].im;
                for m in 0..g.n_z {
                    let wv = w.get(l, j, s, m);
                    if !(wv.norm() >= 1e-12) {
                        return Err(Error::DegenerateAmplitude {
                            amplitude: wv.norm(),
                            k_index: l,
                            j,
                            s,
                        });
                    }
                    let (lv, _) = unwrap_near(wv, reference);
                    reference = lv.im;
                    out.set(l, j, s, m, lv);
                }
            }
        }
    }
    Ok(out)
}

/// Volumetric `v` and `q` from a volumetric `log w`.
pub fn volumetric_v_q(log: &Field) -> Result<(Field, Field)> {
    let g = *log.grid();
    let mut v = log.clone();
    for l in 0..g.n_k {
        let k2 = g.k(l).powi(2);
        v.layer_mut(l).iter_mut().for_each(|x| *x /= k2);
    }
    let mut q = Field::zeros_k(g);
    let n = g.layer_len();
    let mut series = vec![C64::new(0.0, 0.0); g.n_k];
    for i in 0..n {
        for l in 0..g.n_k {
            series[l] = v.values()[l * n + i];
        }
        let d = k_derivative(&series, g.dk())?;
        for l in 0..g.n_k {
            q.values_mut()[l * n + i] = d[l];
        }
    }
    Ok((v, q))
}
