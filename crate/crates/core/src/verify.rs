//! Property suites for the Carleman estimate, convexity, gradient
//! exactness, tail convergence and the gradient-projection iteration. Each
//! returns a pass/fail outcome with a one-line summary.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::carleman::{random_admissible, verify_carleman, CarlemanReport};
use crate::convexifier::{
    convexity_probe, gradient_check, gradient_projection, random_admissible_k, tail_contraction,
    ConvexityReport, Functional, GradientCheck, InversionConfig, IterateState, OperatorForm,
};
use crate::data_prep::{compute_w_k, prepare, volumetric_log, volumetric_v_q};
use crate::error::Result;
use crate::forward_sim::{
    apply_noise, solve_volumetric, ForwardOptions, MeasuredBoundaryData, Scene,
};
use crate::grid::{norm_h2h_k, Field, GridSpec};
use crate::tail_solver::{
    minimize_tail, tail_convergence_probe, TailMethod, TailSweep, TailVariant,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub summary: String,
}

impl std::fmt::Display for SuiteOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.summary)
    }
}

/// `R(u, λ) > 0` at every λ and `min R` at the largest λ at least half of
/// that at the smallest.
pub fn carleman_suite(
    grid: &GridSpec,
    samples: usize,
    lambdas: &[f64],
    seed: u64,
) -> Result<(SuiteOutcome, CarlemanReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fields: Vec<Field> = (0..samples)
        .map(|_| random_admissible(grid, &mut rng))
        .collect();
    let report = verify_carleman(&fields, lambdas)?;
    let first = report.rows[0].min_ratio;
    let last = report.rows[report.rows.len() - 1].min_ratio;
    let passed = report.all_positive() && last >= 0.5 * first;
    let mins: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("λ={}: {:.4e}", r.lambda, r.min_ratio))
        .collect();
    let summary = format!(
        "{} fields, min ratio {}; last/first = {:.3}",
        samples,
        mins.join(", "),
        last / first
    );
    Ok((
        SuiteOutcome {
            name: "carleman",
            passed,
            summary,
        },
        report,
    ))
}

/// Extension `F` and tail `V` for a dataset.
#[derive(Debug, Clone)]
pub struct Problem {
    pub f: Field,
    pub v: Field,
}

impl Problem {
    pub fn from_data(
        data: &MeasuredBoundaryData,
        mu: f64,
        variant: TailVariant,
    ) -> Result<Problem> {
        let prep = prepare(data)?;
        let tail = minimize_tail(&prep.extensions.q, mu, variant, &TailMethod::Direct)?;
        Ok(Problem {
            f: prep.extensions.f,
            v: tail.v,
        })
    }

    pub fn functional(&self, lambda: f64, form: OperatorForm) -> Result<Functional> {
        Functional::with_form(self.f.clone(), self.v.clone(), lambda, form)
    }
}

/// Minimum convexity ratio over random pairs in the ball at `λ` is positive
/// and exceeds the same minimum at `λ = 0`.
pub fn convexity_suite(
    problem: &Problem,
    lambda: f64,
    form: OperatorForm,
    radius: Option<f64>,
    pairs: usize,
    seed: u64,
) -> Result<(SuiteOutcome, ConvexityReport, ConvexityReport)> {
    let func = problem.functional(lambda, form)?;
    let radius = radius.unwrap_or_else(|| func.default_radius());
    let at = convexity_probe(&func, radius, pairs, seed)?;
    let flat = convexity_probe(&problem.functional(0.0, form)?, radius, pairs, seed)?;
    let passed = at.min_ratio > 0.0 && (lambda == 0.0 || at.min_ratio > flat.min_ratio);
    let summary = format!(
        "{pairs} pairs, R = {radius:.4}: min ratio {:.4e} at λ={lambda}, {:.4e} at λ=0",
        at.min_ratio, flat.min_ratio
    );
    Ok((
        SuiteOutcome {
            name: "convexity",
            passed,
            summary,
        },
        at,
        flat,
    ))
}

/// Largest ratio of sampled gradient-difference quotients to their median
/// that still counts as a bounded Lipschitz constant.
pub const LIPSCHITZ_SPREAD: f64 = 10.0;

/// Central differences agree with the gradient to `1e-6` and the sampled
/// Lipschitz quotients stay within [`LIPSCHITZ_SPREAD`] of their median.
pub fn gradient_suite(
    func: &Functional,
    directions: usize,
    pairs: usize,
    radius: Option<f64>,
    seed: u64,
) -> Result<(SuiteOutcome, GradientCheck)> {
    let radius = radius.unwrap_or_else(|| func.default_radius());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let p = random_admissible_k(func.grid(), 0.25 * radius, &mut rng);
    let check = gradient_check(func, &p, directions, pairs, radius, seed)?;
    let (lmax, lmed) = (check.lipschitz_max(), check.lipschitz_median());
    let passed = check.max_rel_error <= 1e-6 && lmax.is_finite() && lmax <= LIPSCHITZ_SPREAD * lmed;
    let summary = format!(
        "{directions} directions: max rel error {:.3e}; {pairs} pairs: Lipschitz quotient max {:.4e}, median {:.4e}",
        check.max_rel_error, lmax, lmed
    );
    Ok((
        SuiteOutcome {
            name: "gradient",
            passed,
            summary,
        },
        check,
    ))
}

/// `V* = v*(·, k̄)` from the simulated interior field.
pub fn tail_oracle(
    scene: &Scene,
    data: &MeasuredBoundaryData,
    opts: &ForwardOptions,
) -> Result<Field> {
    let grid = data.grid;
    let prep = prepare(&data.clean())?;
    let u = solve_volumetric(scene, &grid, opts)?;
    let log = volumetric_log(&compute_w_k(&u)?, &prep.log)?;
    let (v, _) = volumetric_v_q(&log)?;
    Ok(v.layer_field(grid.n_k - 1))
}

/// Log-log slope of `‖V_δ - V*‖` over the noise sweep with `μ(δ)` is at
/// least 0.35.
pub fn tail_suite(
    data: &MeasuredBoundaryData,
    oracle: &Field,
    deltas: &[f64],
    lambda0: f64,
    variant: TailVariant,
    seed: u64,
) -> Result<(SuiteOutcome, TailSweep)> {
    let g = data.grid;
    let sweep = tail_convergence_probe(deltas, lambda0, (g.d, g.xi), oracle, |delta, mu| {
        let (g0, g1) = apply_noise(&data.g0_clean, &data.g1_clean, delta, seed);
        let noisy = MeasuredBoundaryData {
            g0,
            g1,
            delta,
            ..data.clone()
        };
        let prep = prepare(&noisy)?;
        Ok(minimize_tail(&prep.extensions.q, mu, variant, &TailMethod::Direct)?.v)
    })?;
    let passed = sweep.slope >= 0.35;
    let errs: Vec<String> = sweep
        .deltas
        .iter()
        .zip(&sweep.errors)
        .map(|(d, e)| format!("δ={d:e}: {e:.3e}"))
        .collect();
    let summary = format!(
        "errors {}; slope {:.3} (noiseless floor {:.3e}, ‖V*‖ {:.3e})",
        errs.join(", "),
        sweep.slope,
        sweep.floor,
        sweep.oracle_norm
    );
    Ok((
        SuiteOutcome {
            name: "tail convergence",
            passed,
            summary,
        },
        sweep,
    ))
}

#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    pub first: IterateState,
    pub second: IterateState,
    pub theta: f64,
    pub start_gap: f64,
    pub final_gap: f64,
    pub monotone: bool,
}

/// From `p₀ = 0` and from a random start in the ball: `J_n` nonincreasing
/// after burn-in, contraction ratio `θ ≤ 0.99` over the final third, and
/// final iterates within `10 grad_tol` of each other.
pub fn convergence_suite(
    func: &Functional,
    cfg: &InversionConfig,
    seed: u64,
) -> Result<(SuiteOutcome, ConvergenceRun)> {
    let grid = *func.grid();
    let radius = cfg.radius.unwrap_or_else(|| func.default_radius());
    let cfg = InversionConfig {
        record_iterates: true,
        radius: Some(radius),
        ..cfg.clone()
    };
    let first = gradient_projection(func, &Field::zeros_k(grid), &cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p0 = random_admissible_k(&grid, 0.25 * radius, &mut rng);
    let second = gradient_projection(func, &p0, &cfg)?;
    let theta = tail_contraction(&first.iterates)?;
    let start_gap = norm_h2h_k(&p0);
    let final_gap = norm_h2h_k(&first.p.sub(&second.p)?);
    let monotone = [&first, &second].iter().all(|s| {
        s.history
            .windows(2)
            .filter(|w| w[0].n >= cfg.burn_in)
            .all(|w| w[1].value <= w[0].value)
    });
    let passed = monotone
        && first.converged
        && second.converged
        && theta <= 0.99
        && final_gap <= 10.0 * cfg.grad_tol;
    let summary = format!(
        "iterations {} and {}, J {:.4e}; monotone {monotone}; θ = {theta:.4}; start gap {start_gap:.3e} -> final gap {final_gap:.3e} (bound {:.1e})",
        first.history.len(),
        second.history.len(),
        first.value,
        10.0 * cfg.grad_tol
    );
    Ok((
        SuiteOutcome {
            name: "gradient projection",
            passed,
            summary,
        },
        ConvergenceRun {
            first,
            second,
            theta,
            start_gap,
            final_gap,
            monotone,
        },
    ))
}
