//! The inversion chain: boundary data → tail `V` → minimizer of `J_λ` →
//! `v(·, k)` → `c(x)`.

use crate::convexifier::{
    gradient_projection, Functional, InversionConfig, IterateState, OperatorForm,
};
use crate::data_prep::{prepare, PreparedData};
use crate::error::Result;
use crate::forward_sim::MeasuredBoundaryData;
use crate::grid::Field;
use crate::reconstructor::{recover_c, recover_v, ReconstructionResult, RecoveryFormula};
use crate::tail_solver::{minimize_tail, TailFunction, TailMethod, TailVariant};

/// Everything the chain needs beyond the data.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mu: f64,
    pub tail_variant: TailVariant,
    pub inversion: InversionConfig,
    pub form: OperatorForm,
    pub formula: RecoveryFormula,
    /// Wavenumber at which `c` is recovered; `None` selects `k̲`.
    pub k_target: Option<f64>,
    pub c_ref: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mu: 3.0,
            tail_variant: TailVariant::Full,
            inversion: InversionConfig::default(),
            form: OperatorForm::Derived,
            formula: RecoveryFormula::Full,
            k_target: None,
            c_ref: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub prepared: PreparedData,
    pub tail: TailFunction,
    pub state: IterateState,
    /// `q = p_min + F`.
    pub q: Field,
    pub v: Field,
    pub result: ReconstructionResult,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Runs the whole chain from `p₀ = 0`.
pub fn invert(data: &MeasuredBoundaryData, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    stage("data", data.validate())?;
    let grid = data.grid;
    let prepared = stage("data_prep", prepare(data))?;
    let tail = stage(
        "tail",
        minimize_tail(
            &prepared.extensions.q,
            cfg.mu,
            cfg.tail_variant,
            &TailMethod::Direct,
        ),
    )?;
    let func = stage(
        "convexifier",
        Functional::with_form(
            prepared.extensions.f.clone(),
            tail.v.clone(),
            cfg.inversion.lambda,
            cfg.form,
        ),
    )?;
    let state = stage(
        "convexifier",
        gradient_projection(&func, &Field::zeros_k(grid), &cfg.inversion),
    )?;
    let q = stage("reconstructor", state.p.add(&prepared.extensions.f))?;
    let k = cfg.k_target.unwrap_or(grid.k_min);
    let v = stage("reconstructor", recover_v(&q, &tail.v, k))?;
    let result = stage("reconstructor", recover_c(&v, k, cfg.formula, cfg.c_ref))?;
    Ok(PipelineOutput {
        prepared,
        tail,
        state,
        q,
        v,
        result,
    })
}
