//! Run configuration: a sectioned `key = value` file (TOML syntax) with
//! unknown keys rejected and every value validated on load.
//!
//! ```toml
//! [grid]
//! b = 0.5
//! xi = 0.5
//! d = 0.5
//! n_h = 15
//! n_z = 31
//! k_min = 6.322
//! k_max = 6.638
//! n_k = 11
//!
//! [[scene.inclusion]]
//! shape = "box"
//! center = [0.0, 0.0, 0.1]
//! half = [0.15, 0.15, 0.1]
//! contrast = 4.5
//!
//! [noise]
//! delta = 0.05
//! seed = 1
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::convexifier::{choose_lambda, InversionConfig, OperatorForm};
use crate::error::{Error, Result};
use crate::forward_sim::{ForwardOptions, Inclusion, Scene, Shape};
use crate::grid::GridSpec;
use crate::pipeline::PipelineConfig;
use crate::reconstructor::{ObjectReference, RecoveryFormula};
use crate::tail_solver::{choose_mu, TailVariant};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: RawGrid,
    #[serde(default)]
    scene: RawScene,
    #[serde(default)]
    noise: RawNoise,
    #[serde(default)]
    forward: RawForward,
    #[serde(default)]
    solver: RawSolver,
    reference: Option<RawReference>,
    #[serde(default)]
    verify: RawVerify,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    b: f64,
    xi: f64,
    d: f64,
    n_h: Option<usize>,
    h: Option<f64>,
    n_z: usize,
    k_min: f64,
    k_max: f64,
    n_k: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    #[serde(default = "default_smoothing")]
    smoothing: f64,
    #[serde(default)]
    inclusion: Vec<RawInclusion>,
}

impl Default for RawScene {
    fn default() -> Self {
        RawScene {
            smoothing: default_smoothing(),
            inclusion: Vec::new(),
        }
    }
}

fn default_smoothing() -> f64 {
    0.05
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
enum ShapeKind {
    Box,
    Ball,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInclusion {
    shape: ShapeKind,
    center: [f64; 3],
    half: Option<[f64; 3]>,
    radius: Option<f64>,
    contrast: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawNoise {
    delta: f64,
    seed: u64,
}

impl Default for RawNoise {
    fn default() -> Self {
        RawNoise {
            delta: 0.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawForward {
    cell: Option<f64>,
    tol: f64,
    max_iter: usize,
    restart: usize,
}

impl Default for RawForward {
    fn default() -> Self {
        let d = ForwardOptions::default();
        RawForward {
            cell: d.cell,
            tol: d.tol,
            max_iter: d.max_iter,
            restart: d.restart,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawForm {
    Derived,
    ScaledTail,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawFormula {
    Full,
    WithoutDrift,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawTail {
    Full,
    DirichletOnly,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSolver {
    lambda: f64,
    mu: f64,
    #[serde(rename = "R")]
    radius: Option<f64>,
    gamma: f64,
    max_iter: usize,
    grad_tol: f64,
    burn_in: usize,
    precondition: bool,
    schedule: bool,
    lambda0: f64,
    lambda1: f64,
    operator: RawForm,
    formula: RawFormula,
    tail: RawTail,
    k_target: Option<f64>,
    checkpoint_every: Option<usize>,
}

impl Default for RawSolver {
    fn default() -> Self {
        let d = InversionConfig::default();
        RawSolver {
            lambda: d.lambda,
            mu: 3.0,
            radius: None,
            gamma: d.gamma,
            max_iter: d.max_iter,
            grad_tol: d.grad_tol,
            burn_in: d.burn_in,
            precondition: d.precondition,
            schedule: false,
            lambda0: 0.5,
            lambda1: 0.5,
            operator: RawForm::Derived,
            formula: RawFormula::Full,
            tail: RawTail::Full,
            k_target: None,
            checkpoint_every: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReference {
    c_ref: f64,
    location: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawVerify {
    carleman_samples: usize,
    carleman_lambdas: Vec<f64>,
    convexity_pairs: usize,
    gradient_directions: usize,
    lipschitz_pairs: usize,
    tail_deltas: Vec<f64>,
    seed: u64,
}

impl Default for RawVerify {
    fn default() -> Self {
        let d = VerifySettings::default();
        RawVerify {
            carleman_samples: d.carleman_samples,
            carleman_lambdas: d.carleman_lambdas,
            convexity_pairs: d.convexity_pairs,
            gradient_directions: d.gradient_directions,
            lipschitz_pairs: d.lipschitz_pairs,
            tail_deltas: d.tail_deltas,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    dir: PathBuf,
}

impl Default for RawOutput {
    fn default() -> Self {
        RawOutput {
            dir: PathBuf::from("out"),
        }
    }
}

/// Sizes of the verification suites.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifySettings {
    pub carleman_samples: usize,
    pub carleman_lambdas: Vec<f64>,
    pub convexity_pairs: usize,
    pub gradient_directions: usize,
    pub lipschitz_pairs: usize,
    pub tail_deltas: Vec<f64>,
    pub seed: u64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            carleman_samples: 100,
            carleman_lambdas: vec![5.0, 10.0, 20.0],
            convexity_pairs: 50,
            gradient_directions: 20,
            lipschitz_pairs: 50,
            tail_deltas: vec![1e-2, 1e-3, 1e-4],
            seed: 7,
        }
    }
}

/// A validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub scene: Scene,
    pub delta: f64,
    pub seed: u64,
    pub forward: ForwardOptions,
    pub pipeline: PipelineConfig,
    /// `μ` and `λ` follow the noise level when set.
    pub schedule: bool,
    pub lambda0: f64,
    pub lambda1: f64,
    pub reference: Option<ObjectReference>,
    pub verify: VerifySettings,
    pub out_dir: PathBuf,
}

/// Command-line overrides applied after parsing.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub radius: Option<f64>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn resolve_n_h(g: &RawGrid) -> Result<usize> {
    match (g.n_h, g.h) {
        (Some(n), None) => Ok(n),
        (None, Some(h)) => {
            if !(h > 0.0) {
                return Err(Error::domain(format!(
                    "grid step h must be positive, got {h}"
                )));
            }
            let cells = 2.0 * g.b / h;
            let n = cells.round();
            if (cells - n).abs() > 1e-9 * cells.max(1.0) {
                return Err(Error::domain(format!(
                    "h = {h} does not divide 2b = {}",
                    2.0 * g.b
                )));
            }
            Ok(n as usize + 1)
        }
        (Some(_), Some(_)) => Err(Error::domain("give either grid.n_h or grid.h, not both")),
        (None, None) => Err(Error::domain("grid.n_h or grid.h is required")),
    }
}

fn inclusion(raw: &RawInclusion) -> Result<Inclusion> {
    let shape = match (&raw.shape, raw.half, raw.radius) {
        (ShapeKind::Box, Some(half), None) => Shape::Box {
            center: raw.center,
            half,
        },
        (ShapeKind::Ball, None, Some(radius)) => Shape::Ball {
            center: raw.center,
            radius,
        },
        (ShapeKind::Box, _, _) => {
            return Err(Error::domain(
                "a box inclusion takes `half` and no `radius`",
            ))
        }
        (ShapeKind::Ball, _, _) => {
            return Err(Error::domain(
                "a ball inclusion takes `radius` and no `half`",
            ))
        }
    };
    Ok(Inclusion {
        shape,
        contrast: raw.contrast,
    })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
            Error::parse(line, e.message().to_string())
        })?;
        Self::from_raw(raw)
    }

    pub fn from_path(path: &Path) -> Result<RunConfig> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn from_raw(raw: RawConfig) -> Result<RunConfig> {
        let g = &raw.grid;
        let grid = GridSpec::new(
            g.b,
            g.xi,
            g.d,
            resolve_n_h(g)?,
            g.n_z,
            g.k_min,
            g.k_max,
            g.n_k,
        )?;
        let scene = Scene {
            inclusions: raw
                .scene
                .inclusion
                .iter()
                .map(inclusion)
                .collect::<Result<_>>()?,
            smoothing: raw.scene.smoothing,
        };
        let f = &raw.forward;
        let forward = ForwardOptions {
            cell: f.cell,
            tol: f.tol,
            max_iter: f.max_iter,
            restart: f.restart,
        };
        let s = &raw.solver;
        let pipeline = PipelineConfig {
            mu: s.mu,
            tail_variant: match s.tail {
                RawTail::Full => TailVariant::Full,
                RawTail::DirichletOnly => TailVariant::DirichletOnly,
            },
            inversion: InversionConfig {
                lambda: s.lambda,
                radius: s.radius,
                gamma: s.gamma,
                max_iter: s.max_iter,
                grad_tol: s.grad_tol,
                burn_in: s.burn_in,
                precondition: s.precondition,
                record_iterates: false,
                checkpoint_every: s.checkpoint_every,
            },
            form: match s.operator {
                RawForm::Derived => OperatorForm::Derived,
                RawForm::ScaledTail => OperatorForm::ScaledTail,
            },
            formula: match s.formula {
                RawFormula::Full => RecoveryFormula::Full,
                RawFormula::WithoutDrift => RecoveryFormula::WithoutDrift,
            },
            k_target: s.k_target,
            c_ref: raw.reference.as_ref().map(|r| r.c_ref),
        };
        let v = raw.verify;
        let cfg = RunConfig {
            grid,
            scene,
            delta: raw.noise.delta,
            seed: raw.noise.seed,
            forward,
            pipeline,
            schedule: s.schedule,
            lambda0: s.lambda0,
            lambda1: s.lambda1,
            reference: raw.reference.map(|r| ObjectReference {
                c_ref: r.c_ref,
                location: r.location,
            }),
            verify: VerifySettings {
                carleman_samples: v.carleman_samples,
                carleman_lambdas: v.carleman_lambdas,
                convexity_pairs: v.convexity_pairs,
                gradient_directions: v.gradient_directions,
                lipschitz_pairs: v.lipschitz_pairs,
                tail_deltas: v.tail_deltas,
                seed: v.seed,
            },
            out_dir: raw.output.dir,
        };
        cfg.with_schedule()
    }

    /// Re-derives scheduled parameters and re-validates after overrides.
    pub fn apply(mut self, o: &Overrides) -> Result<RunConfig> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(l) = o.lambda {
            self.pipeline.inversion.lambda = l;
        }
        if let Some(m) = o.mu {
            self.pipeline.mu = m;
        }
        if let Some(r) = o.radius {
            self.pipeline.inversion.radius = Some(r);
        }
        if o.lambda.is_some() || o.mu.is_some() {
            // explicit values take precedence over the schedule
            self.schedule = false;
        }
        self.with_schedule()
    }

    fn with_schedule(mut self) -> Result<RunConfig> {
        if self.schedule {
            let (d, xi) = (self.grid.d, self.grid.xi);
            self.pipeline.mu = choose_mu(self.delta, d, xi, self.lambda0)?;
            self.pipeline.inversion.lambda = choose_lambda(self.delta, d, xi, self.lambda1)?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.scene.validate(&self.grid)?;
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::domain(format!(
                "noise level {} not in [0, 1)",
                self.delta
            )));
        }
        let f = &self.forward;
        if !(f.tol > 0.0) || f.max_iter == 0 || f.restart == 0 || f.cell.is_some_and(|c| !(c > 0.0))
        {
            return Err(Error::domain("forward solver settings must be positive"));
        }
        if !(self.pipeline.mu >= 0.0 && self.pipeline.mu.is_finite()) {
            return Err(Error::domain(format!(
                "mu must be nonnegative, got {}",
                self.pipeline.mu
            )));
        }
        self.pipeline.inversion.validate()?;
        if let Some(k) = self.pipeline.k_target {
            crate::reconstructor::k_index(&self.grid, k)?;
        }
        if let Some(r) = &self.reference {
            if !(r.c_ref >= 1.0) {
                return Err(Error::domain(format!(
                    "reference coefficient must be >= 1, got {}",
                    r.c_ref
                )));
            }
        }
        let v = &self.verify;
        if v.carleman_samples == 0
            || v.carleman_lambdas.is_empty()
            || v.carleman_lambdas.iter().any(|l| !(*l > 0.0))
            || v.convexity_pairs == 0
            || v.gradient_directions == 0
            || v.lipschitz_pairs == 0
        {
            return Err(Error::domain(
                "verification suite sizes and lambdas must be positive",
            ));
        }
        if v.tail_deltas.len() < 3 || v.tail_deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
            return Err(Error::domain(
                "tail sweep needs at least three noise levels in (0, 1)",
            ));
        }
        Ok(())
    }
}
