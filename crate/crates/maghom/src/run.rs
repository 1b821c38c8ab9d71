//! Operation runner behind the command-line tool: executes a validated
//! configuration, writes all file outputs atomically (temp file + rename),
//! prints a JSON payload for stdout, and emits single-line JSON diagnostics
//! on stderr.
//!
//! Process exit codes: 0 success, 2 validation/configuration failure,
//! 3 solver non-convergence, 4 audit failure under `--strict`.

use std::path::{Path, PathBuf};

use crate::config::{Command, RunConfig};
use crate::fenchel::{
    audit_fenchel_bounds, builtin_theta, conjugate, ConjugateOpts,
};
use crate::fields::{divergence, GridVectorField, FieldSidecar, SpectralWorkspace};
use crate::material::audit_assumptions;
use crate::surface::{audit_growth_coercivity, audit_lipschitz, gamma_check, tabulate};
use crate::{cell, Error, Result};

/// Emit one diagnostic line on stderr: `{"level","stage","message"}`.
pub fn diag(level: &str, stage: &str, message: &str) {
    eprintln!(
        "{}",
        serde_json::json!({"level": level, "stage": stage, "message": message})
    );
}

/// Write bytes atomically: temp file in the destination directory, fsync,
/// then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let stem = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{stem}.{}.tmp", std::process::id()));
    {
        use std::io::Write;
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Result of one executed operation.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Payload printed to stdout as one JSON document.
    pub payload: serde_json::Value,
    /// False when an audit ran and failed (drives exit 4 under `--strict`).
    pub audits_passed: bool,
    /// Files written.
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    fn clean(payload: serde_json::Value, files: Vec<PathBuf>) -> Self {
        Self {
            payload,
            audits_passed: true,
            files,
        }
    }
}

/// Pin the global thread pool size; later calls with a different size are
/// ignored (the pool is process-global).
pub fn init_threads(threads: Option<usize>) {
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
}

/// Exit code for a failed run.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::NonConvergence { .. } => 3,
        _ => 2,
    }
}

fn out_path(cfg: &RunConfig, default_name: &str) -> PathBuf {
    cfg.output
        .clone()
        .unwrap_or_else(|| PathBuf::from(default_name))
}

/// Execute one operation on a validated configuration.
pub fn execute(cmd: Command, cfg: &RunConfig) -> Result<RunOutcome> {
    if let Some(declared) = cfg.command {
        if declared != cmd {
            return Err(Error::Config(format!(
                "config declares command '{}' but '{}' was requested",
                declared.as_str(),
                cmd.as_str()
            )));
        }
    }
    match cmd {
        Command::Eval => run_eval(cfg),
        Command::Table => run_table(cfg),
        Command::Gamma => run_gamma(cfg),
        Command::Project => run_project(cfg),
        Command::Fenchel => run_fenchel(cfg),
        Command::Audit => run_audit(cfg),
    }
}

fn run_eval(cfg: &RunConfig) -> Result<RunOutcome> {
    let model = cfg.build_model()?;
    let solver = cfg.solver_opts(&model);
    let g = cfg.g_matrices()[0];
    let b = cfg.b_vectors()[0];
    diag(
        "info",
        "eval",
        &format!(
            "model {} at n = {}, k_max = {}",
            model.name, cfg.numerics.n, cfg.numerics.k_max
        ),
    );
    let res = cell::f_hom(&model, &g, &b, &cfg.fhom_opts(), &solver)?;
    let payload = serde_json::json!({"fhom": res.value, "k_used": res.k_used});
    let mut files = Vec::new();
    if let Some(path) = &cfg.output {
        let full = serde_json::json!({
            "fhom": res.value,
            "k_used": res.k_used,
            "grad_norm": res.solution.grad_norm,
            "iterations": res.solution.iterations,
            "rigidity_residual": res.solution.rigidity_residual,
            "div_residual": res.solution.div_residual,
            "per_k": res.per_k,
            "extrapolated": res.extrapolated,
        });
        write_atomic(path, (serde_json::to_string_pretty(&full)? + "\n").as_bytes())?;
        files.push(path.clone());
    }
    Ok(RunOutcome::clean(payload, files))
}

fn run_table(cfg: &RunConfig) -> Result<RunOutcome> {
    let model = cfg.build_model()?;
    let solver = cfg.solver_opts(&model);
    let gs = cfg.g_matrices();
    let bs = cfg.b_vectors();
    diag(
        "info",
        "table",
        &format!("{} x {} = {} points", gs.len(), bs.len(), gs.len() * bs.len()),
    );
    let table = tabulate(&model, &gs, &bs, &cfg.fhom_opts(), &solver)?;
    for f in &table.failures {
        diag(
            "warn",
            "table",
            &format!("point {} failed: {}", f.index, f.message),
        );
    }
    let path = out_path(cfg, "fhom_table.csv");
    write_atomic(&path, table.to_csv().as_bytes())?;
    let json_path = path.with_extension("json");
    write_atomic(
        &json_path,
        (serde_json::to_string_pretty(&table)? + "\n").as_bytes(),
    )?;
    let payload = serde_json::json!({
        "points": table.points.len(),
        "failures": table.failures.len(),
        "config_digest": table.config_digest,
        "csv": path,
        "json": json_path,
    });
    Ok(RunOutcome::clean(payload, vec![path, json_path]))
}

fn run_gamma(cfg: &RunConfig) -> Result<RunOutcome> {
    let model = cfg.build_model()?;
    let solver = cfg.solver_opts(&model);
    let lambda = nalgebra::Matrix3::from_row_slice(&cfg.gamma.lambda);
    let b0 = nalgebra::Vector3::from_column_slice(&cfg.gamma.b0);
    diag(
        "info",
        "gamma",
        &format!("period denominators {:?}", cfg.gamma.denominators),
    );
    let report = gamma_check(&model, &lambda, &b0, &cfg.gamma.denominators, &solver)?;
    let path = out_path(cfg, "gamma_report.json");
    write_atomic(
        &path,
        (serde_json::to_string_pretty(&report)? + "\n").as_bytes(),
    )?;
    let payload = serde_json::to_value(&report)?;
    Ok(RunOutcome::clean(payload, vec![path]))
}

fn run_project(cfg: &RunConfig) -> Result<RunOutcome> {
    let input = cfg
        .project
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("project requires project.input".into()))?;
    let sidecar_path = PathBuf::from(format!("{}.json", input.display()));
    let sidecar: FieldSidecar = serde_json::from_str(&std::fs::read_to_string(&sidecar_path)?)
        .map_err(|e| Error::Config(format!("sidecar {}: {e}", sidecar_path.display())))?;
    let bytes = std::fs::read(input)?;
    let field = GridVectorField::import_raw(&bytes, &sidecar)?;
    let n = field.n;
    let mut ws = SpectralWorkspace::new(n);
    let div_before = divergence(&field, &mut ws)?.max_abs();
    let projected = if cfg.project.keep_mean {
        crate::fields::project_div_free(&field, &mut ws)?
    } else {
        crate::fields::project_div_free_zero_mean(&field, &mut ws)?
    };
    let div_after = divergence(&projected, &mut ws)?.max_abs();
    let path = out_path(cfg, "projected.raw");
    write_atomic(&path, &projected.export_raw())?;
    let out_sidecar = PathBuf::from(format!("{}.json", path.display()));
    write_atomic(
        &out_sidecar,
        (serde_json::to_string_pretty(&projected.sidecar())? + "\n").as_bytes(),
    )?;
    diag(
        "info",
        "project",
        &format!("divergence {div_before:.3e} -> {div_after:.3e}"),
    );
    let payload = serde_json::json!({
        "n": n,
        "div_before": div_before,
        "div_after": div_after,
        "l2_before": field.l2_norm(),
        "l2_after": projected.l2_norm(),
        "output": path,
    });
    Ok(RunOutcome::clean(payload, vec![path, out_sidecar]))
}

fn run_fenchel(cfg: &RunConfig) -> Result<RunOutcome> {
    let theta = builtin_theta(&cfg.fenchel.theta, &cfg.fenchel.theta_params)?;
    let dim = theta.param_dim();
    if cfg.fenchel.g.len() < dim {
        return Err(Error::InvalidParams(format!(
            "fenchel.g has {} entries, integrand '{}' needs {dim}",
            cfg.fenchel.g.len(),
            cfg.fenchel.theta
        )));
    }
    let g = &cfg.fenchel.g[..dim];
    let opts = ConjugateOpts::default();
    let mut csv = String::from("B1,B2,B3,theta_star,M1,M2,M3,kkt_residual\n");
    let mut worst_kkt: f64 = 0.0;
    for b in &cfg.fenchel.b {
        let r = conjugate(theta.as_ref(), g, b, &opts)?;
        worst_kkt = worst_kkt.max(r.kkt_residual);
        csv.push_str(&format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.3e}\n",
            b[0], b[1], b[2], r.value, r.argmax[0], r.argmax[1], r.argmax[2], r.kkt_residual
        ));
    }
    let path = out_path(cfg, "fenchel.csv");
    write_atomic(&path, csv.as_bytes())?;
    diag(
        "info",
        "fenchel",
        &format!(
            "{} conjugate points of '{}', worst KKT residual {worst_kkt:.3e}",
            cfg.fenchel.b.len(),
            cfg.fenchel.theta
        ),
    );
    let payload = serde_json::json!({
        "points": cfg.fenchel.b.len(),
        "theta": cfg.fenchel.theta,
        "worst_kkt_residual": worst_kkt,
        "csv": path,
    });
    Ok(RunOutcome::clean(payload, vec![path]))
}

fn run_audit(cfg: &RunConfig) -> Result<RunOutcome> {
    let model = cfg.build_model()?;
    diag(
        "info",
        "audit",
        &format!(
            "{} samples in a box of radius {}",
            cfg.audit.samples, cfg.audit.box_radius
        ),
    );
    let material = audit_assumptions(&model, cfg.audit.samples, cfg.audit.box_radius, cfg.audit.seed);
    let mut passed = material.all_pass();

    // Conjugate-bounds audit of the configured dual integrand.
    let theta = builtin_theta(&cfg.fenchel.theta, &cfg.fenchel.theta_params)?;
    let samples = cfg.audit.samples.min(200);
    let bounds = audit_fenchel_bounds(
        theta.as_ref(),
        samples,
        cfg.audit.box_radius,
        cfg.audit.box_radius,
        cfg.audit.seed,
    )?;
    passed &= bounds.lip_b_constant.is_finite() && bounds.lip_g_constant.is_finite();

    // Surface audits on a small diagonal probe table.
    let solver = cfg.solver_opts(&model);
    let gs = cfg.g_matrices();
    let bs = cfg.b_vectors();
    let table = tabulate(&model, &gs, &bs, &cfg.fhom_opts(), &solver)?;
    let growth = audit_growth_coercivity(&table, &model)?;
    passed &= growth.passes();
    let lipschitz = if table.points.len() >= 2 {
        let rep = audit_lipschitz(&table)?;
        passed &= rep.empirical_l.is_finite();
        Some(rep)
    } else {
        None
    };

    let doc = serde_json::json!({
        "material": material,
        "theta_bounds": bounds,
        "surface_growth": growth,
        "surface_lipschitz": lipschitz,
        "passed": passed,
    });
    let path = out_path(cfg, "audit_report.json");
    write_atomic(&path, (serde_json::to_string_pretty(&doc)? + "\n").as_bytes())?;
    if !passed {
        diag("warn", "audit", "at least one audited bound failed");
    }
    Ok(RunOutcome {
        payload: doc,
        audits_passed: passed,
        files: vec![path],
    })
}
