//! The Carleman-weighted functional
//! `J_λ(p) = e^{2λd} Σ h² ∫∫ |Lʰ(p + F)|² φ_λ dz dk` over `p` with zero
//! boundary conditions, its exact discrete gradient, projection onto the
//! ball `B(R)` of `H₂ʰ`, and the gradient-projection iteration.
//!
//! `Lʰ q = Δʰq + 2k(∇ʰV - I)·(k∇ʰq + ∇ʰV - I) + 2i(k q_z + V_z - I_z)` with
//! `I = ∫_k^{k̄} ∇ʰq dκ`, a reverse cumulative trapezoid on the k-grid, which
//! is `∂_k` of `Δv + k²∇v·∇v + 2ik v_z + β = 0` after substituting
//! `v = -∫_k^{k̄} q dκ + V`. [`OperatorForm::ScaledTail`] instead uses
//! `k∇ʰ(q+V) - I` as the second factor. Products of complex vectors are
//! bilinear (no conjugation).

use rand::Rng;
use rayon::prelude::*;

use crate::carleman::{random_admissible, CarlemanWeight};
use crate::error::{Error, Result};
use crate::grid::{
    apply_h0, check_h0, gradient_layer, gradient_layer_adjoint, laplacian_layer,
    laplacian_layer_adjoint, norm_h2h_k, Field, GridSpec, C64,
};
use crate::tail_solver::WeightedLaplaceLsq;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

type Vec3 = [Vec<C64>; 3];

fn zeros3(n: usize) -> Vec3 {
    [vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]]
}

fn interior_mask(grid: &GridSpec) -> Vec<bool> {
    let mut mask = vec![false; grid.layer_len()];
    for j in 0..grid.n_h {
        for s in 0..grid.n_h {
            for m in 0..grid.n_z {
                mask[grid.idx(j, s, m)] = grid.is_interior(j, s, m);
            }
        }
    }
    mask
}

fn gradient3(grid: &GridSpec, f: &[C64]) -> Vec3 {
    let mut g = zeros3(grid.layer_len());
    let [gx, gy, gz] = &mut g;
    gradient_layer(grid, f, gx, gy, gz);
    g
}

/// `I_l = ∫_{k_l}^{k̄} G dκ` by the trapezoid rule, for every layer.
fn reverse_cumulative(grads: &[Vec3], dk: f64) -> Vec<Vec3> {
    let nk = grads.len();
    let n = grads[0][0].len();
    let mut out = vec![zeros3(n); nk];
    for l in (0..nk - 1).rev() {
        let (lo, hi) = out.split_at_mut(l + 1);
        for c in 0..3 {
            let (cur, next) = (&mut lo[l][c], &hi[0][c]);
            for i in 0..n {
                cur[i] = next[i] + 0.5 * dk * (grads[l][c][i] + grads[l + 1][c][i]);
            }
        }
    }
    out
}

/// Coefficient of `∇ʰV` in the second factor of the quadratic term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OperatorForm {
    /// `k∇ʰq + ∇ʰV - I`, consistent with `v = -∫q + V`.
    #[default]
    Derived,
    /// `k∇ʰ(q + V) - I`.
    ScaledTail,
}

impl OperatorForm {
    fn tail_factor(self, k: f64) -> f64 {
        match self {
            OperatorForm::Derived => 1.0,
            OperatorForm::ScaledTail => k,
        }
    }
}

struct Forward {
    grads: Vec<Vec3>,
    integrals: Vec<Vec3>,
    residual: Vec<Vec<C64>>,
}

fn forward(
    grid: &GridSpec,
    q: &Field,
    grad_v: &Vec3,
    mask: &[bool],
    form: OperatorForm,
) -> Forward {
    let nk = q.layers();
    let grads: Vec<Vec3> = (0..nk)
        .into_par_iter()
        .map(|l| gradient3(grid, q.layer(l)))
        .collect();
    let integrals = reverse_cumulative(&grads, grid.dk());
    let residual: Vec<Vec<C64>> = (0..nk)
        .into_par_iter()
        .map(|l| {
            let k = grid.k(l);
            let kv = form.tail_factor(k);
            let mut r = vec![ZERO; grid.layer_len()];
            laplacian_layer(grid, q.layer(l), &mut r);
            let (gq, int) = (&grads[l], &integrals[l]);
            for i in 0..r.len() {
                if !mask[i] {
                    r[i] = ZERO;
                    continue;
                }
                let mut dot = ZERO;
                for c in 0..3 {
                    let a = grad_v[c][i] - int[c][i];
                    let b = k * gq[c][i] + kv * grad_v[c][i] - int[c][i];
                    dot += a * b;
                }
                r[i] +=
                    2.0 * k * dot + C64::new(0.0, 2.0) * (k * gq[2][i] + grad_v[2][i] - int[2][i]);
            }
            r
        })
        .collect();
    Forward {
        grads,
        integrals,
        residual,
    }
}

/// `Lʰ(q)` at every k-node for a k-field `q` and tail `V` (single layer).
pub fn apply_lh(q: &Field, v: &Field, form: OperatorForm) -> Result<Field> {
    let g = *q.grid();
    if q.layers() != g.n_k || v.layers() != 1 || v.grid() != q.grid() {
        return Err(Error::structural(
            "apply_lh needs a k-field q and a single-layer V on the same grid",
        ));
    }
    let grad_v = gradient3(&g, v.layer(0));
    let fw = forward(&g, q, &grad_v, &interior_mask(&g), form);
    Field::from_values(g, g.n_k, fw.residual.concat())
}

/// Settings of the minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct InversionConfig {
    pub lambda: f64,
    /// Ball radius in `H₂ʰ`; `None` selects `10‖F‖ + 1`.
    pub radius: Option<f64>,
    pub gamma: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Iterations during which an increase of `J` is tolerated.
    pub burn_in: usize,
    /// Scale the gradient by the inverse of the weighted `Δʰ` normal operator.
    pub precondition: bool,
    pub record_iterates: bool,
    /// Keep a copy of every N-th iterate.
    pub checkpoint_every: Option<usize>,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            lambda: 3.0,
            radius: None,
            gamma: 0.1,
            max_iter: 500,
            grad_tol: 1e-8,
            burn_in: 0,
            precondition: true,
            record_iterates: false,
            checkpoint_every: None,
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::domain(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return Err(Error::domain(format!(
                    "ball radius must be positive, got {r}"
                )));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::domain(format!(
                "step size must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.grad_tol > 0.0) || self.max_iter == 0 {
            return Err(Error::domain(
                "tolerance and iteration limit must be positive",
            ));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::domain("checkpoint interval must be positive"));
        }
        Ok(())
    }
}

/// `λ(δ) = -ln δ / (4(d+ξ))`, for `δ ∈ (0, δ₁)` with `δ₁ = e^{-4(d+ξ)λ₁}`.
pub fn choose_lambda(delta: f64, d: f64, xi: f64, lambda1: f64) -> Result<f64> {
    let depth = d + xi;
    let delta1 = (-4.0 * depth * lambda1).exp();
    if !(delta > 0.0 && delta < delta1) {
        return Err(Error::Schedule(format!(
            "noise level {delta} outside (0, {delta1:.3e}) for lambda1 = {lambda1}"
        )));
    }
    Ok(-delta.ln() / (4.0 * depth))
}

/// `J_λ` for fixed `F` and `V`, with its gradient.
pub struct Functional {
    grid: GridSpec,
    lambda: f64,
    form: OperatorForm,
    f: Field,
    v: Field,
    grad_v: Vec3,
    mask: Vec<bool>,
    /// `h² w_m e^{2λ(d - z_m)}`.
    row_weight: Vec<f64>,
    tau: Vec<f64>,
    /// Per-layer factorizations of the weighted `Δʰ + 2ik∂_z`.
    lsq: Vec<WeightedLaplaceLsq>,
}

impl Functional {
    pub fn new(f: Field, v: Field, lambda: f64) -> Result<Self> {
        Self::with_form(f, v, lambda, OperatorForm::Derived)
    }

    pub fn with_form(f: Field, v: Field, lambda: f64, form: OperatorForm) -> Result<Self> {
        let grid = *f.grid();
        if f.layers() != grid.n_k || v.layers() != 1 || v.grid() != f.grid() {
            return Err(Error::structural(
                "F must be a k-field and V a single layer on the same grid",
            ));
        }
        let cw = CarlemanWeight::new(&grid, lambda)?;
        let h2 = grid.h() * grid.h();
        let row_weight: Vec<f64> = cw
            .balanced(&grid)
            .iter()
            .zip(grid.z_weights())
            .map(|(b, w)| h2 * w * b)
            .collect();
        let lsq = (0..grid.n_k)
            .into_par_iter()
            .map(|l| {
                WeightedLaplaceLsq::with_drift(
                    &grid,
                    &row_weight,
                    2,
                    C64::new(0.0, 2.0 * grid.k(l)),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Functional {
            grad_v: gradient3(&grid, v.layer(0)),
            mask: interior_mask(&grid),
            tau: grid.k_weights(),
            grid,
            lambda,
            form,
            f,
            v,
            row_weight,
            lsq,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn extension(&self) -> &Field {
        &self.f
    }

    pub fn tail(&self) -> &Field {
        &self.v
    }

    fn check(&self, p: &Field) -> Result<()> {
        if p.grid() != &self.grid || p.layers() != self.grid.n_k {
            return Err(Error::structural("p must be a k-field on the problem grid"));
        }
        Ok(())
    }

    fn layer_sum(&self, l: usize, r: &[C64]) -> f64 {
        let nz = self.grid.n_z;
        let acc: f64 = r
            .iter()
            .enumerate()
            .map(|(i, v)| self.row_weight[i % nz] * v.norm_sqr())
            .sum();
        self.tau[l] * acc
    }

    /// Residual `Lʰ(p + F)` on every k-node.
    pub fn residual(&self, p: &Field) -> Result<Field> {
        self.check(p)?;
        let q = p.add(&self.f)?;
        let fw = forward(&self.grid, &q, &self.grad_v, &self.mask, self.form);
        Field::from_values(self.grid, self.grid.n_k, fw.residual.concat())
    }

    pub fn value(&self, p: &Field) -> Result<f64> {
        self.check(p)?;
        let q = p.add(&self.f)?;
        let fw = forward(&self.grid, &q, &self.grad_v, &self.mask, self.form);
        Ok((0..self.grid.n_k)
            .map(|l| self.layer_sum(l, &fw.residual[l]))
            .sum())
    }

    /// `J(p)` and its gradient with respect to the real and imaginary parts
    /// of `p`, packed as a complex field: `dJ = Re Σ conj(g) dp`.
    pub fn value_and_gradient(&self, p: &Field) -> Result<(f64, Field)> {
        self.check(p)?;
        let g = &self.grid;
        let (nk, n, dk) = (g.n_k, g.layer_len(), g.dk());
        let q = p.add(&self.f)?;
        let fw = forward(g, &q, &self.grad_v, &self.mask, self.form);
        let value = (0..nk).map(|l| self.layer_sum(l, &fw.residual[l])).sum();

        // seeds and the local adjoints of the pointwise terms
        let locals: Vec<(Vec<C64>, Vec3, Vec3)> = (0..nk)
            .into_par_iter()
            .map(|l| {
                let k = g.k(l);
                let kv = self.form.tail_factor(k);
                let mut seed = vec![ZERO; n];
                let mut gbar = zeros3(n);
                let mut ibar = zeros3(n);
                let (gq, int) = (&fw.grads[l], &fw.integrals[l]);
                for i in 0..n {
                    if !self.mask[i] {
                        continue;
                    }
                    let a_bar = 2.0 * self.tau[l] * self.row_weight[i % g.n_z] * fw.residual[l][i];
                    seed[i] = a_bar;
                    for c in 0..3 {
                        let a = self.grad_v[c][i] - int[c][i];
                        let b = k * gq[c][i] + kv * self.grad_v[c][i] - int[c][i];
                        let abar_vec = 2.0 * k * b.conj() * a_bar;
                        let bbar_vec = 2.0 * k * a.conj() * a_bar;
                        ibar[c][i] -= abar_vec + bbar_vec;
                        gbar[c][i] += k * bbar_vec;
                    }
                    gbar[2][i] += C64::new(0.0, -2.0 * k) * a_bar;
                    ibar[2][i] += C64::new(0.0, 2.0) * a_bar;
                }
                (seed, gbar, ibar)
            })
            .collect();

        // adjoint of the reverse cumulative trapezoid
        let mut gbar: Vec<Vec3> = locals.iter().map(|t| t.1.clone()).collect();
        let mut prefix = zeros3(n);
        let mut prev_prefix = zeros3(n);
        for l in 0..nk {
            for c in 0..3 {
                for i in 0..n {
                    prefix[c][i] += locals[l].2[c][i];
                }
            }
            for c in 0..3 {
                for i in 0..n {
                    let mut add = ZERO;
                    if l + 1 < nk {
                        add += prefix[c][i];
                    }
                    if l >= 1 {
                        add += prev_prefix[c][i];
                    }
                    gbar[l][c][i] += 0.5 * dk * add;
                }
            }
            prev_prefix.clone_from(&prefix);
        }

        let layers: Vec<Vec<C64>> = (0..nk)
            .into_par_iter()
            .map(|l| {
                let mut out = vec![ZERO; n];
                laplacian_layer_adjoint(g, &locals[l].0, &mut out);
                let [ax, ay, az] = &gbar[l];
                gradient_layer_adjoint(g, ax, ay, az, &mut out);
                out
            })
            .collect();
        let mut grad = Field::from_values(*g, nk, layers.concat())?;
        apply_h0(&mut grad);
        Ok((value, grad))
    }

    pub fn gradient(&self, p: &Field) -> Result<Field> {
        Ok(self.value_and_gradient(p)?.1)
    }

    /// Gradient scaled per k-layer by the inverse of `2τ_l AᴴA`, `A` the
    /// weighted `Δʰ + 2ik∂_z`: the Gauss-Newton block of the terms of `Lʰ`
    /// that are linear and local in `q`.
    pub fn precondition(&self, grad: &Field) -> Result<Field> {
        self.check(grad)?;
        let layers: Vec<Vec<C64>> = (0..self.grid.n_k)
            .into_par_iter()
            .map(|l| {
                let scale = 1.0 / (2.0 * self.tau[l]);
                self.lsq[l]
                    .apply_inverse_normal(grad.layer(l))
                    .into_iter()
                    .map(|v| v * scale)
                    .collect::<Vec<_>>()
            })
            .collect();
        Field::from_values(self.grid, self.grid.n_k, layers.concat())
    }

    /// `10‖F‖_{H₂ʰ} + 1`.
    pub fn default_radius(&self) -> f64 {
        10.0 * norm_h2h_k(&self.f) + 1.0
    }
}

/// Radial projection onto `{‖p‖_{H₂ʰ} ≤ R}`; returns whether it was active.
pub fn project_ball(p: &Field, radius: f64) -> (Field, bool) {
    let norm = norm_h2h_k(p);
    if norm <= radius {
        (p.clone(), false)
    } else {
        (p.scaled(C64::new(radius / norm, 0.0)), true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub n: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub step_norm: f64,
    pub projected: bool,
    pub gamma: f64,
}

#[derive(Debug, Clone)]
pub struct IterateState {
    pub p: Field,
    pub value: f64,
    pub grad_norm: f64,
    pub projection_active: bool,
    pub converged: bool,
    /// Stopped because `J` could no longer decrease beyond rounding.
    pub stalled: bool,
    pub radius: f64,
    pub history: Vec<IterationRecord>,
    pub iterates: Vec<Field>,
    pub checkpoints: Vec<(usize, Field)>,
}

impl IterateState {
    /// CSV iteration log: `n,J,grad_norm,step_norm,projected`.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("n,J,grad_norm,step_norm,projected\n");
        for r in &self.history {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{}\n",
                r.n, r.value, r.grad_norm, r.step_norm, r.projected as u8
            ));
        }
        out
    }
}

/// Relative increase of `J` attributed to rounding rather than divergence.
pub const STALL_TOL: f64 = 1e-12;

/// `p_n = P_B(p_{n-1} - γ D g(p_{n-1}))` with `D` the optional preconditioner.
pub fn gradient_projection(
    func: &Functional,
    p0: &Field,
    cfg: &InversionConfig,
) -> Result<IterateState> {
    cfg.validate()?;
    check_h0(p0)?;
    let radius = cfg.radius.unwrap_or_else(|| func.default_radius());
    if norm_h2h_k(p0) > radius * (1.0 + 1e-12) {
        return Err(Error::domain("starting point lies outside the ball"));
    }
    let mut gamma = cfg.gamma;
    let mut halvings = 0;
    let mut p = p0.clone();
    let (mut value, mut grad) = func.value_and_gradient(&p)?;
    let mut state = IterateState {
        p: p.clone(),
        value,
        grad_norm: grad.coef_norm(),
        projection_active: false,
        converged: false,
        radius,
        stalled: false,
        history: Vec::new(),
        iterates: Vec::new(),
        checkpoints: Vec::new(),
    };
    if cfg.record_iterates {
        state.iterates.push(p.clone());
    }
    let mut values = vec![value];
    for n in 1..=cfg.max_iter {
        let dir = if cfg.precondition {
            func.precondition(&grad)?
        } else {
            grad.clone()
        };
        let (cand, projected, cand_value, cand_grad) = loop {
            let (cand, projected) = project_ball(&p.axpy(C64::new(-gamma, 0.0), &dir)?, radius);
            let (cv, cg) = func.value_and_gradient(&cand)?;
            if n <= cfg.burn_in || cv <= value {
                break (cand, projected, cv, cg);
            }
            if cv <= value * (1.0 + STALL_TOL) {
                log::debug!("J stationary to rounding at iteration {n}");
                state.stalled = true;
                break (p.clone(), false, value, grad.clone());
            }
            if halvings >= 6 {
                values.push(cv);
                return Err(Error::Divergence {
                    iteration: n,
                    halvings,
                    history: values,
                });
            }
            halvings += 1;
            gamma *= 0.5;
            log::debug!("J increased at iteration {n}; step size halved to {gamma}");
        };
        if state.stalled {
            break;
        }
        let step_norm = norm_h2h_k(&cand.sub(&p)?);
        p = cand;
        value = cand_value;
        grad = cand_grad;
        values.push(value);
        state.projection_active |= projected;
        state.history.push(IterationRecord {
            n,
            value,
            grad_norm: grad.coef_norm(),
            step_norm,
            projected,
            gamma,
        });
        if cfg.record_iterates {
            state.iterates.push(p.clone());
        }
        if let Some(every) = cfg.checkpoint_every {
            if n % every == 0 {
                state.checkpoints.push((n, p.clone()));
            }
        }
        if step_norm <= cfg.grad_tol * gamma {
            state.converged = true;
            break;
        }
    }
    state.value = value;
    state.grad_norm = grad.coef_norm();
    state.p = p;
    Ok(state)
}

/// A random k-field satisfying the zero boundary conditions, smoothed as in
/// [`random_admissible`], scaled to `H₂ʰ` norm `norm`.
pub fn random_admissible_k(grid: &GridSpec, norm: f64, rng: &mut impl Rng) -> Field {
    let layers: Vec<Field> = (0..grid.n_k)
        .map(|_| random_admissible(grid, rng))
        .collect();
    let f = Field::stack(&layers).expect("layers share the grid");
    let current = norm_h2h_k(&f);
    f.scaled(C64::new(norm / current, 0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityReport {
    pub lambda: f64,
    pub min_ratio: f64,
    pub ratios: Vec<f64>,
}

/// `min [J(p+r) - J(p) - ⟨g(p), r⟩] / ‖r‖²` over random pairs with
/// `‖p‖, ‖r‖ ≤ R/2`, so that both points lie in the ball.
pub fn convexity_probe(
    func: &Functional,
    radius: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<ConvexityReport> {
    use rand::SeedableRng;
    if n_pairs == 0 {
        return Err(Error::structural("convexity probe needs at least one pair"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let g = *func.grid();
    let pairs: Vec<(Field, Field)> = (0..n_pairs)
        .map(|_| {
            let a = rng.gen_range(0.0..0.5) * radius;
            let b = rng.gen_range(0.05..0.5) * radius;
            (
                random_admissible_k(&g, a, &mut rng),
                random_admissible_k(&g, b, &mut rng),
            )
        })
        .collect();
    let ratios: Vec<f64> = pairs
        .iter()
        .map(|(p, r)| {
            let (jp, grad) = func.value_and_gradient(p)?;
            let jpr = func.value(&p.add(r)?)?;
            let gap = jpr - jp - grad.dot_re(r);
            Ok(gap / norm_h2h_k(r).powi(2))
        })
        .collect::<Result<_>>()?;
    Ok(ConvexityReport {
        lambda: func.lambda(),
        min_ratio: ratios.iter().cloned().fold(f64::INFINITY, f64::min),
        ratios,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub max_rel_error: f64,
    pub lipschitz: Vec<f64>,
}

impl GradientCheck {
    pub fn lipschitz_max(&self) -> f64 {
        self.lipschitz.iter().cloned().fold(0.0, f64::max)
    }

    pub fn lipschitz_median(&self) -> f64 {
        let mut v = self.lipschitz.clone();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    }
}

/// Central-difference check of the gradient along random admissible
/// directions at `p`, and gradient-difference ratios over random pairs in
/// the ball of radius `radius`.
pub fn gradient_check(
    func: &Functional,
    p: &Field,
    n_dirs: usize,
    n_pairs: usize,
    radius: f64,
    seed: u64,
) -> Result<GradientCheck> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let g = *func.grid();
    let grad = func.gradient(p)?;
    let scale = norm_h2h_k(p).max(norm_h2h_k(func.extension())).max(1.0);
    let mut max_rel: f64 = 0.0;
    for _ in 0..n_dirs {
        let d = random_admissible_k(&g, scale, &mut rng);
        let eps = 1e-4;
        let jp = func.value(&p.axpy(C64::new(eps, 0.0), &d)?)?;
        let jm = func.value(&p.axpy(C64::new(-eps, 0.0), &d)?)?;
        let fd = (jp - jm) / (2.0 * eps);
        let an = grad.dot_re(&d);
        max_rel = max_rel.max((fd - an).abs() / an.abs().max(fd.abs()).max(f64::MIN_POSITIVE));
    }
    let mut lipschitz = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let a = random_admissible_k(&g, rng.gen_range(0.0..radius), &mut rng);
        let b = random_admissible_k(&g, rng.gen_range(0.0..radius), &mut rng);
        let ga = func.gradient(&a)?;
        let gb = func.gradient(&b)?;
        lipschitz.push(ga.sub(&gb)?.coef_norm() / a.sub(&b)?.coef_norm());
    }
    Ok(GradientCheck {
        max_rel_error: max_rel,
        lipschitz,
    })
}

/// `max_n ‖p_{n+1} - p_N‖ / ‖p_n - p_N‖` over the last third of recorded
/// iterates, `p_N` the final one.
pub fn tail_contraction(iterates: &[Field]) -> Result<f64> {
    let n = iterates.len();
    if n < 6 {
        return Err(Error::structural(
            "need at least 6 iterates for a contraction estimate",
        ));
    }
    let last = &iterates[n - 1];
    let dist: Vec<f64> = iterates
        .iter()
        .map(|p| p.sub(last).map(|d| norm_h2h_k(&d)))
        .collect::<Result<_>>()?;
    let start = n - n / 3 - 1;
    let mut theta: f64 = 0.0;
    for i in start..n - 2 {
        if dist[i] > 0.0 {
            theta = theta.max(dist[i + 1] / dist[i]);
        }
    }
    Ok(theta)
}
