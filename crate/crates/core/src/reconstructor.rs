//! From `(q, V)` back to `v(·, k)` and the coefficient `c(x)`, plus the
//! summary rows (maximum, its location, relative error) and their CSV tables.

use crate::error::{Error, Result};
use crate::grid::{gradient_layer, laplacian_layer, Field, GridSpec, C64};

/// Index of the k-node at `k`, within a tolerance of `1e-9 dk`.
pub fn k_index(grid: &GridSpec, k: f64) -> Result<usize> {
    (0..grid.n_k)
        .find(|&l| (grid.k(l) - k).abs() <= 1e-9 * grid.dk())
        .ok_or_else(|| Error::domain(format!("k = {k} is not a node of the k-grid")))
}

/// `v(·, k) = -∫_k^{k̄} q dκ + V` by the trapezoid rule on the k-grid.
pub fn recover_v(q: &Field, tail: &Field, k_target: f64) -> Result<Field> {
    let g = *q.grid();
    if q.layers() != g.n_k || tail.layers() != 1 || tail.grid() != q.grid() {
        return Err(Error::structural(
            "recover_v needs a k-field q and a single-layer tail",
        ));
    }
    let l0 = k_index(&g, k_target)?;
    let mut v = tail.clone();
    let dk = g.dk();
    for l in l0..g.n_k - 1 {
        let (a, b) = (q.layer(l), q.layer(l + 1));
        for (i, x) in v.values_mut().iter_mut().enumerate() {
            *x -= 0.5 * dk * (a[i] + b[i]);
        }
    }
    Ok(v)
}

/// Which pointwise identity turns `v` into `β = c - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecoveryFormula {
    /// `β = -(Δv + k²∇v·∇v + 2ik v_z)`.
    #[default]
    Full,
    /// `β = -(Δv + k²∇v·∇v)`, without the `v_z` term.
    WithoutDrift,
}

/// `β` before truncation, on interior nodes (zero elsewhere).
pub fn beta_raw(v: &Field, k: f64, formula: RecoveryFormula) -> Result<Field> {
    if v.layers() != 1 {
        return Err(Error::structural(
            "coefficient recovery takes a single-layer v",
        ));
    }
    let g = *v.grid();
    let n = g.layer_len();
    let zero = C64::new(0.0, 0.0);
    let mut lap = vec![zero; n];
    let (mut gx, mut gy, mut gz) = (vec![zero; n], vec![zero; n], vec![zero; n]);
    laplacian_layer(&g, v.layer(0), &mut lap);
    gradient_layer(&g, v.layer(0), &mut gx, &mut gy, &mut gz);
    let drift = match formula {
        RecoveryFormula::Full => C64::new(0.0, 2.0 * k),
        RecoveryFormula::WithoutDrift => zero,
    };
    let mut out = Field::zeros(g);
    for j in 1..g.n_h - 1 {
        for s in 1..g.n_h - 1 {
            for m in 1..g.n_z - 1 {
                let i = g.idx(j, s, m);
                let dot = gx[i] * gx[i] + gy[i] * gy[i] + gz[i] * gz[i];
                out.values_mut()[i] = -(lap[i] + k * k * dot + drift * gz[i]);
            }
        }
    }
    Ok(out)
}

/// One pass of `[¼, ½, ¼]` along each axis over interior nodes, with the
/// boundary values held fixed.
fn smooth_interior(grid: &GridSpec, f: &mut [f64]) {
    let (nh, nz) = (grid.n_h, grid.n_z);
    let mut tmp = f.to_vec();
    for stride in [nh * nz, nz, 1] {
        tmp.copy_from_slice(f);
        for j in 1..nh - 1 {
            for s in 1..nh - 1 {
                for m in 1..nz - 1 {
                    let i = grid.idx(j, s, m);
                    f[i] = 0.25 * tmp[i - stride] + 0.5 * tmp[i] + 0.25 * tmp[i + stride];
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    /// `c` stored in the real part of a single-layer field.
    pub c: Field,
    pub c_comp: f64,
    pub location: [f64; 3],
    pub location_index: [usize; 3],
    /// `|c_comp - c_ref| / c_ref · 100`, when a reference is supplied.
    pub eps_comp: Option<f64>,
    /// `L₂ʰ` norm of the discarded `Im β`.
    pub imag_norm: f64,
    pub k: f64,
}

/// `|c_comp - c_ref| / c_ref · 100`.
pub fn eps_comp(c_comp: f64, c_ref: f64) -> f64 {
    (c_comp - c_ref).abs() / c_ref * 100.0
}

/// `c = 1 + max(Re β, 0)` smoothed once per axis, `c = 1` on `∂Ω`, with its
/// maximum and maximizer.
pub fn recover_c(
    v: &Field,
    k: f64,
    formula: RecoveryFormula,
    c_ref: Option<f64>,
) -> Result<ReconstructionResult> {
    let beta = beta_raw(v, k, formula)?;
    let g = *v.grid();
    let mut b: Vec<f64> = beta.values().iter().map(|x| x.re.max(0.0)).collect();
    let imag_norm = {
        let w = g.z_weights();
        let h2 = g.h() * g.h();
        beta.values()
            .iter()
            .enumerate()
            .map(|(i, x)| h2 * w[i % g.n_z] * x.im * x.im)
            .sum::<f64>()
            .sqrt()
    };
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("non-finite coefficient values"));
    }
    smooth_interior(&g, &mut b);
    let mut best = (1.0, [0usize; 3]);
    let mut c = Field::zeros(g);
    for j in 0..g.n_h {
        for s in 0..g.n_h {
            for m in 0..g.n_z {
                let i = g.idx(j, s, m);
                let val = if g.is_interior(j, s, m) {
                    1.0 + b[i]
                } else {
                    1.0
                };
                c.values_mut()[i] = C64::new(val, 0.0);
                if val > best.0 {
                    best = (val, [j, s, m]);
                }
            }
        }
    }
    let location_index = if best.0 > 1.0 {
        best.1
    } else {
        [g.n_h / 2, g.n_h / 2, g.n_z / 2]
    };
    let [j, s, m] = location_index;
    Ok(ReconstructionResult {
        c,
        c_comp: best.0,
        location: [g.x(j), g.y(s), g.z(m)],
        location_index,
        eps_comp: c_ref.map(|r| eps_comp(best.0, r)),
        imag_norm,
        k,
    })
}

/// Reference values of a reconstructed object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectReference {
    pub c_ref: f64,
    pub location: [f64; 3],
}

/// CSV analogs of the coefficient table and the location table.
pub fn report_tables(
    results: &[ReconstructionResult],
    refs: &[ObjectReference],
) -> Result<(String, String)> {
    if results.len() != refs.len() {
        return Err(Error::structural(format!(
            "{} results but {} references",
            results.len(),
            refs.len()
        )));
    }
    let mut coef = String::from("object,c_ref,c_comp,eps_comp_percent\n");
    let mut loc = String::from("object,ref_x,ref_y,ref_z,comp_x,comp_y,comp_z,dx,dy,dz\n");
    for (i, (r, o)) in results.iter().zip(refs).enumerate() {
        coef.push_str(&format!(
            "{},{:.2},{:.2},{:.2}\n",
            i + 1,
            o.c_ref,
            r.c_comp,
            eps_comp(r.c_comp, o.c_ref)
        ));
        let d: Vec<f64> = (0..3).map(|a| r.location[a] - o.location[a]).collect();
        loc.push_str(&format!(
            "{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
            i + 1,
            o.location[0],
            o.location[1],
            o.location[2],
            r.location[0],
            r.location[1],
            r.location[2],
            d[0],
            d[1],
            d[2]
        ));
    }
    Ok((coef, loc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(0.5, 0.5, 0.5, 9, 17, 6.0, 7.0, 11).unwrap()
    }

    #[test]
    fn recover_v_edge_cases() {
        let g = grid();
        let tail = Field::from_fn(g, |x, y, z| C64::new(x + y, z));
        let v = recover_v(&Field::zeros_k(g), &tail, g.k_min).unwrap();
        assert_eq!(v, tail);
        let q = Field::from_fn_k(g, |x, _, _, k| C64::new(x * k, 1.0));
        assert_eq!(recover_v(&q, &tail, g.k_max).unwrap(), tail);
        assert!(matches!(recover_v(&q, &tail, 6.05), Err(Error::Domain(_))));
    }

    #[test]
    fn recover_v_of_tail_ansatz() {
        // v = P/k has q = -P/k², so v(k̲) = P/k̲ up to trapezoid error
        let g = grid();
        let p = |x: f64, z: f64| C64::new(1.0 + x, 0.5 * z);
        let q = Field::from_fn_k(g, |x, _, z, k| -p(x, z) / (k * k));
        let tail = Field::from_fn(g, |x, _, z| p(x, z) / g.k_max);
        let v = recover_v(&q, &tail, g.k_min).unwrap();
        // trapezoid error bound: (b-a) dk² max|f''| / 12 with f = P/k²
        let bound = (g.k_max - g.k_min) * g.dk().powi(2) * 6.0 / g.k_min.powi(4) / 12.0 * 1.6;
        for j in 0..g.n_h {
            for m in 0..g.n_z {
                let expect = p(g.x(j), g.z(m)) / g.k_min;
                assert!((v.get(0, j, 3, m) - expect).norm() <= bound);
            }
        }
    }

    #[test]
    fn uniform_medium_gives_one() {
        let g = grid();
        let r = recover_c(&Field::zeros(g), 6.0, RecoveryFormula::Full, Some(1.0)).unwrap();
        assert!(r.c.values().iter().all(|c| *c == C64::new(1.0, 0.0)));
        assert_eq!(r.c_comp, 1.0);
        assert_eq!(r.eps_comp, Some(0.0));
        assert_eq!(r.imag_norm, 0.0);
    }

    #[test]
    fn beta_of_quadratic_field_matches_closed_form() {
        // v = a z² + b x: Δv = 2a, ∇v = (b, 0, 2az), exact for the stencils
        let g = grid();
        let (a, b, k) = (C64::new(-0.3, 0.1), C64::new(0.2, 0.0), 6.5);
        let v = Field::from_fn(g, |x, _, z| a * z * z + b * x);
        let beta = beta_raw(&v, k, RecoveryFormula::Full).unwrap();
        let no_drift = beta_raw(&v, k, RecoveryFormula::WithoutDrift).unwrap();
        for m in 1..g.n_z - 1 {
            let z = g.z(m);
            let vz = 2.0 * a * z;
            let expect = -(2.0 * a + k * k * (b * b + vz * vz) + C64::new(0.0, 2.0 * k) * vz);
            let got = beta.get(0, 4, 4, m);
            assert!((got - expect).norm() < 1e-10, "m={m}: {got} vs {expect}");
            let expect = -(2.0 * a + k * k * (b * b + vz * vz));
            assert!((no_drift.get(0, 4, 4, m) - expect).norm() < 1e-10);
        }
        assert_eq!(beta.get(0, 0, 4, 5), C64::new(0.0, 0.0));
    }

    #[test]
    fn truncation_smoothing_and_maximizer() {
        let g = grid();
        // v = -t (x²+y²+z²)/6 has Δv = -t exactly
        let t = 0.9;
        let v = Field::from_fn(g, |x, y, z| {
            C64::new(-t * (x * x + y * y + z * z) / 6.0, 0.0)
        });
        let r = recover_c(&v, 1e-8, RecoveryFormula::Full, Some(1.9)).unwrap();
        assert!((r.c_comp - (1.0 + t)).abs() < 1e-6);
        assert!(r.c.values().iter().all(|c| c.re >= 1.0));
        assert!(r.eps_comp.unwrap() < 1e-4);
        let [j, s, m] = r.location_index;
        assert!(g.is_interior(j, s, m));
        // running on its own output keeps c ≥ 1
        let again = recover_c(&r.c.map(|c| c - 1.0), 1e-8, RecoveryFormula::Full, None).unwrap();
        assert!(again.c.values().iter().all(|c| c.re >= 1.0));
    }

    #[test]
    fn eps_formula_and_tables() {
        assert!((eps_comp(4.72, 4.50) - 4.888888888888889).abs() < 1e-12);
        assert!((eps_comp(6.85, 7.58) - 9.630606860158312).abs() < 1e-12);
        assert_eq!(eps_comp(1.0, 1.0), 0.0);
        let g = grid();
        let mut r = recover_c(&Field::zeros(g), 6.0, RecoveryFormula::Full, None).unwrap();
        r.c_comp = 4.6;
        let refs = [ObjectReference {
            c_ref: 4.50,
            location: [0.0, 0.0, 0.1],
        }];
        let (t3, t4) = report_tables(&[r.clone()], &refs).unwrap();
        assert_eq!(t3.lines().nth(1).unwrap(), "1,4.50,4.60,2.22");
        assert!(t4
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("1,0.0000,0.0000,0.1000,"));
        let refs = [ObjectReference {
            c_ref: 7.58,
            location: [0.0; 3],
        }];
        r.c_comp = 7.58;
        let (t3, _) = report_tables(&[r.clone()], &refs).unwrap();
        assert_eq!(t3.lines().nth(1).unwrap(), "1,7.58,7.58,0.00");
        assert!(report_tables(&[r], &[]).is_err());
    }
}
