//! The four commands behind the CLI. Each reads a validated [`RunConfig`]
//! and writes plain files into an output directory; nothing is written
//! before the computation it reports has finished.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::convexifier::IterateState;
use crate::error::{Error, Result};
use crate::forward_sim::synthesize_dataset;
use crate::grid::Field;
use crate::io::{read_dataset, read_field, write_dataset, write_field};
use crate::pipeline::{invert, PipelineOutput};
use crate::reconstructor::{
    k_index, recover_c, recover_v, report_tables, ObjectReference, ReconstructionResult,
};
use crate::tail_solver::TailFunction;
use crate::verify::{
    carleman_suite, convergence_suite, convexity_suite, gradient_suite, tail_oracle, tail_suite,
    Problem, SuiteOutcome,
};

pub const DATASET_FILE: &str = "dataset.txt";
pub const ORACLE_FILE: &str = "dataset_clean.txt";
pub const TRUTH_FILE: &str = "c_true.txt";
pub const TAIL_FILE: &str = "tail.txt";
pub const MINIMIZER_FILE: &str = "p_min.txt";
pub const LOG_FILE: &str = "iterations.csv";
pub const COEFFICIENT_FILE: &str = "c.txt";
pub const SUMMARY_FILE: &str = "result.txt";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const TABLE3_FILE: &str = "table3.csv";
pub const TABLE4_FILE: &str = "table4.csv";
pub const VERIFY_FILE: &str = "verify.txt";
pub const CARLEMAN_FILE: &str = "carleman.csv";

fn f64s(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFiles {
    pub dataset: PathBuf,
    pub oracle: PathBuf,
    pub truth: PathBuf,
}

/// Simulates the scene and writes the noisy dataset, its noiseless
/// counterpart and the true coefficient.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<SynthFiles> {
    let data = synthesize_dataset(&cfg.scene, &cfg.grid, cfg.delta, cfg.seed, &cfg.forward)
        .map_err(|e| e.in_stage("forward_sim"))?;
    let truth = cfg.scene.c_field(cfg.grid);
    std::fs::create_dir_all(out)?;
    let files = SynthFiles {
        dataset: out.join(DATASET_FILE),
        oracle: out.join(ORACLE_FILE),
        truth: out.join(TRUTH_FILE),
    };
    write_dataset(&files.dataset, &data)?;
    write_dataset(&files.oracle, &data.clean())?;
    write_field(&files.truth, &truth, &[])?;
    log::info!(
        "wrote {} k-samples of boundary data to {}",
        cfg.grid.n_k,
        out.display()
    );
    Ok(files)
}

fn tail_meta(t: &TailFunction) -> Vec<(&'static str, String)> {
    vec![
        ("mu", f64s(t.mu)),
        ("residual", f64s(t.residual)),
        ("residual_at_zero", f64s(t.residual_at_zero)),
        ("boundary_defect", f64s(t.boundary_defect)),
    ]
}

fn result_meta(
    r: &ReconstructionResult,
    reference: Option<&ObjectReference>,
) -> Vec<(&'static str, String)> {
    let mut meta = vec![
        ("k", f64s(r.k)),
        ("c_comp", f64s(r.c_comp)),
        ("loc_x", f64s(r.location[0])),
        ("loc_y", f64s(r.location[1])),
        ("loc_z", f64s(r.location[2])),
        ("imag_norm", f64s(r.imag_norm)),
    ];
    if let Some(o) = reference {
        meta.push(("c_ref", f64s(o.c_ref)));
        meta.push(("ref_x", f64s(o.location[0])));
        meta.push(("ref_y", f64s(o.location[1])));
        meta.push(("ref_z", f64s(o.location[2])));
    }
    meta
}

fn summary(out: &PipelineOutput, reference: Option<&ObjectReference>) -> String {
    let r = &out.result;
    let s: &IterateState = &out.state;
    let mut text = String::new();
    let _ = writeln!(text, "k {:?}", r.k);
    let _ = writeln!(text, "c_comp {:?}", r.c_comp);
    let _ = writeln!(
        text,
        "location {:?} {:?} {:?}",
        r.location[0], r.location[1], r.location[2]
    );
    let _ = writeln!(
        text,
        "location_index {} {} {}",
        r.location_index[0], r.location_index[1], r.location_index[2]
    );
    if let Some(o) = reference {
        let _ = writeln!(text, "c_ref {:?}", o.c_ref);
        let _ = writeln!(
            text,
            "eps_comp_percent {:?}",
            crate::reconstructor::eps_comp(r.c_comp, o.c_ref)
        );
        let _ = writeln!(
            text,
            "reference_location {:?} {:?} {:?}",
            o.location[0], o.location[1], o.location[2]
        );
    }
    let _ = writeln!(text, "imag_norm {:?}", r.imag_norm);
    let _ = writeln!(text, "tail_mu {:?}", out.tail.mu);
    let _ = writeln!(text, "tail_residual {:?}", out.tail.residual);
    let _ = writeln!(text, "iterations {}", s.history.len());
    let _ = writeln!(text, "converged {}", s.converged);
    let _ = writeln!(text, "stalled {}", s.stalled);
    let _ = writeln!(text, "J {:?}", s.value);
    let _ = writeln!(text, "radius {:?}", s.radius);
    let _ = writeln!(text, "projection_active {}", s.projection_active);
    let _ = writeln!(
        text,
        "taper_defect_q {:?}",
        out.prepared.extensions.taper_defect_q
    );
    let _ = writeln!(
        text,
        "taper_defect_f {:?}",
        out.prepared.extensions.taper_defect_f
    );
    text
}

/// Runs the inversion chain on a dataset file and writes the tail, the
/// iteration log, checkpoints, the minimizer and the coefficient.
pub fn cmd_invert(cfg: &RunConfig, dataset: &Path, out: &Path) -> Result<PipelineOutput> {
    let data = read_dataset(dataset).map_err(|e| e.in_stage("read dataset"))?;
    if data.grid != cfg.grid {
        return Err(
            Error::structural("dataset grid differs from the configured grid")
                .in_stage("read dataset"),
        );
    }
    let result = invert(&data, &cfg.pipeline)?;
    std::fs::create_dir_all(out)?;
    write_field(
        &out.join(TAIL_FILE),
        &result.tail.v,
        &tail_meta(&result.tail),
    )?;
    std::fs::write(out.join(LOG_FILE), result.state.log_csv())?;
    if !result.state.checkpoints.is_empty() {
        let dir = out.join(CHECKPOINT_DIR);
        std::fs::create_dir_all(&dir)?;
        for (n, p) in &result.state.checkpoints {
            write_field(
                &dir.join(format!("p_{n:06}.txt")),
                p,
                &[("iteration", n.to_string())],
            )?;
        }
    }
    write_field(&out.join(MINIMIZER_FILE), &result.state.p, &[])?;
    let reference = cfg.reference.as_ref();
    write_field(
        &out.join(COEFFICIENT_FILE),
        &result.result.c,
        &result_meta(&result.result, reference),
    )?;
    std::fs::write(out.join(SUMMARY_FILE), summary(&result, reference))?;
    if let Some(o) = reference {
        let (t3, t4) = report_tables(
            std::slice::from_ref(&result.result),
            std::slice::from_ref(o),
        )?;
        std::fs::write(out.join(TABLE3_FILE), t3)?;
        std::fs::write(out.join(TABLE4_FILE), t4)?;
    }
    log::info!(
        "c_comp = {:.4} at {:?} after {} iterations",
        result.result.c_comp,
        result.result.location,
        result.state.history.len()
    );
    Ok(result)
}

/// Recomputes the coefficient from files written by [`cmd_invert`]: the
/// dataset (for `F`), the minimizer and the tail.
pub fn reconstruct_from_files(
    cfg: &RunConfig,
    dataset: &Path,
    run: &Path,
) -> Result<ReconstructionResult> {
    let data = read_dataset(dataset)?;
    let prep = crate::data_prep::prepare(&data)?;
    let (p, _) = read_field(&run.join(MINIMIZER_FILE))?;
    let (tail, _) = read_field(&run.join(TAIL_FILE))?;
    let q = p.add(&prep.extensions.f)?;
    let k = cfg.pipeline.k_target.unwrap_or(cfg.grid.k_min);
    k_index(&cfg.grid, k)?;
    let v = recover_v(&q, &tail, k)?;
    recover_c(&v, k, cfg.pipeline.formula, cfg.pipeline.c_ref)
}

/// Runs the property suites on the configured grid and scene.
pub fn cmd_verify(cfg: &RunConfig, out: &Path) -> Result<Vec<SuiteOutcome>> {
    let v = &cfg.verify;
    let lambda = cfg.pipeline.inversion.lambda;
    let form = cfg.pipeline.form;
    let mut outcomes = Vec::new();

    let (o, carleman) = carleman_suite(&cfg.grid, v.carleman_samples, &v.carleman_lambdas, v.seed)?;
    log::info!("{o}");
    outcomes.push(o);

    let data = synthesize_dataset(&cfg.scene, &cfg.grid, 0.0, cfg.seed, &cfg.forward)?;
    let problem = Problem::from_data(&data, cfg.pipeline.mu, cfg.pipeline.tail_variant)?;
    let radius = cfg.pipeline.inversion.radius;
    let (o, _, _) = convexity_suite(&problem, lambda, form, radius, v.convexity_pairs, v.seed)?;
    log::info!("{o}");
    outcomes.push(o);

    let func = problem.functional(lambda, form)?;
    let (o, _) = gradient_suite(
        &func,
        v.gradient_directions,
        v.lipschitz_pairs,
        radius,
        v.seed,
    )?;
    log::info!("{o}");
    outcomes.push(o);

    let oracle = tail_oracle(&cfg.scene, &data, &cfg.forward)?;
    let (o, _) = tail_suite(
        &data,
        &oracle,
        &v.tail_deltas,
        cfg.lambda0,
        cfg.pipeline.tail_variant,
        v.seed,
    )?;
    log::info!("{o}");
    outcomes.push(o);

    let (o, _) = convergence_suite(&func, &cfg.pipeline.inversion, v.seed)?;
    log::info!("{o}");
    outcomes.push(o);

    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(CARLEMAN_FILE), carleman.to_csv())?;
    let text: String = outcomes.iter().map(|o| format!("{o}\n")).collect();
    std::fs::write(out.join(VERIFY_FILE), text)?;
    Ok(outcomes)
}

fn meta_f64(meta: &[(String, String)], key: &str, path: &Path) -> Result<f64> {
    meta.iter()
        .find(|(k, _)| k == key)
        .and_then(|(_, v)| v.parse().ok())
        .ok_or_else(|| Error::structural(format!("{} has no usable `{key}` entry", path.display())))
}

/// Reads a coefficient file written by [`cmd_invert`] with its reference.
pub fn load_result(path: &Path) -> Result<(ReconstructionResult, ObjectReference)> {
    let (c, meta) = read_field(path)?;
    let get = |key: &str| meta_f64(&meta, key, path);
    let g = *c.grid();
    let location = [get("loc_x")?, get("loc_y")?, get("loc_z")?];
    let nearest = |n: usize, x: f64, f: &dyn Fn(usize) -> f64| {
        (0..n)
            .min_by(|&a, &b| (f(a) - x).abs().total_cmp(&(f(b) - x).abs()))
            .unwrap_or(0)
    };
    let location_index = [
        nearest(g.n_h, location[0], &|j| g.x(j)),
        nearest(g.n_h, location[1], &|s| g.y(s)),
        nearest(g.n_z, location[2], &|m| g.z(m)),
    ];
    let reference = ObjectReference {
        c_ref: get("c_ref")?,
        location: [get("ref_x")?, get("ref_y")?, get("ref_z")?],
    };
    let c_comp = get("c_comp")?;
    Ok((
        ReconstructionResult {
            c: Field::from_values(g, 1, c.into_values())?,
            c_comp,
            location,
            location_index,
            eps_comp: Some(crate::reconstructor::eps_comp(c_comp, reference.c_ref)),
            imag_norm: get("imag_norm")?,
            k: get("k")?,
        },
        reference,
    ))
}

/// Collects the coefficient files of several inversion runs into the
/// coefficient and location tables.
pub fn cmd_report(runs: &[PathBuf], out: &Path) -> Result<(PathBuf, PathBuf)> {
    if runs.is_empty() {
        return Err(Error::structural("report needs at least one run directory"));
    }
    let mut results = Vec::with_capacity(runs.len());
    let mut refs = Vec::with_capacity(runs.len());
    for run in runs {
        let (r, o) = load_result(&run.join(COEFFICIENT_FILE))?;
        results.push(r);
        refs.push(o);
    }
    let (t3, t4) = report_tables(&results, &refs)?;
    std::fs::create_dir_all(out)?;
    let paths = (out.join(TABLE3_FILE), out.join(TABLE4_FILE));
    std::fs::write(&paths.0, t3)?;
    std::fs::write(&paths.1, t4)?;
    Ok(paths)
}
