//! Run configuration: a strict JSON schema (unknown keys rejected at every
//! level) with dotted-path overrides applied to the raw document before
//! deserialization, plus constructors turning a validated configuration into
//! the model, solver, and grid objects the operations consume.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::cell::{FHomOpts, PhiBoundary, SolverMode, SolverOpts};
use crate::geometry::{InclusionMask, InclusionSpec};
use crate::linalg::ElasticityTensor;
use crate::material::{make_example1, make_example2, make_example3, MaterialModel, ModelParams};
use crate::{Error, Result};

/// Operation selected by a config file (the CLI subcommand takes precedence;
/// when both are present they must agree).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Eval,
    Table,
    Gamma,
    Project,
    Fenchel,
    Audit,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Eval => "eval",
            Command::Table => "table",
            Command::Gamma => "gamma",
            Command::Project => "project",
            Command::Fenchel => "fenchel",
            Command::Audit => "audit",
        }
    }
}

/// Elasticity tensor entry of the model configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ElasticConfig {
    /// Isotropic tensor from shear modulus and bulk modulus.
    Isotropic { mu: f64, kappa: f64 },
    /// Full symmetric 6x6 matrix in the orthonormal tensor basis, as 36
    /// row-major entries.
    Rows { rows: Vec<f64> },
}

impl Default for ElasticConfig {
    fn default() -> Self {
        ElasticConfig::Isotropic { mu: 1.0, kappa: 1.5 }
    }
}

impl ElasticConfig {
    pub fn build(&self) -> Result<ElasticityTensor> {
        match self {
            ElasticConfig::Isotropic { mu, kappa } => ElasticityTensor::isotropic(*mu, *kappa),
            ElasticConfig::Rows { rows } => ElasticityTensor::from_rows(rows),
        }
    }
}

/// Constitutive model section.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// One of `example1`, `example2`, `example3`.
    pub name: String,
    pub mu0: f64,
    pub mu_soft: f64,
    pub mu_rigid: f64,
    pub elastic: ElasticConfig,
    /// Magnetization regularization weight (coupled model only).
    pub alpha: f64,
    /// Magnetization growth exponent (coupled model only).
    pub p: f64,
    /// Volumetric prestrain weight.
    pub beta_pre: f64,
    /// Declared two-sided growth constant; fitted empirically when absent.
    pub growth_c: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let d = ModelParams::default();
        Self {
            name: "example1".into(),
            mu0: d.mu0,
            mu_soft: d.mu_soft,
            mu_rigid: d.mu_rigid,
            elastic: ElasticConfig::default(),
            alpha: d.alpha,
            p: d.p,
            beta_pre: d.beta_pre,
            growth_c: None,
        }
    }
}

impl ModelConfig {
    pub fn to_params(&self) -> Result<ModelParams> {
        let params = ModelParams {
            mu0: self.mu0,
            mu_soft: self.mu_soft,
            mu_rigid: self.mu_rigid,
            elastic: self.elastic.build()?,
            alpha: self.alpha,
            p: self.p,
            beta_pre: self.beta_pre,
            growth_c: self.growth_c,
        };
        params.validate()?;
        Ok(params)
    }
}

/// Discretization and solver section.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    /// Micro-cell grid resolution per edge.
    pub n: usize,
    /// Largest macro replication tried by the effective-energy evaluation.
    pub k_max: usize,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Optimization starts; 0 = pick automatically from the model class.
    pub multi_start: usize,
    /// `auto`, `cg`, or `lbfgs`.
    pub solver: SolverChoice,
    pub phi_boundary: PhiBoundary,
    pub penalty_fallback: bool,
    /// Also report the 1/k extrapolation of pinned-corrector values.
    pub richardson: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    Auto,
    Cg,
    Lbfgs,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            n: 16,
            k_max: 1,
            grad_tol: 1e-8,
            max_iters: 5000,
            seed: 0x6e5eed,
            multi_start: 0,
            solver: SolverChoice::Auto,
            phi_boundary: PhiBoundary::Periodic,
            penalty_fallback: false,
            richardson: false,
        }
    }
}

/// Macroscopic sample points for `eval` (first of each) and `table`
/// (full product grid).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PointsConfig {
    /// Row-major strains.
    pub g: Vec<[f64; 9]>,
    pub b: Vec<[f64; 3]>,
}

impl Default for PointsConfig {
    fn default() -> Self {
        Self {
            g: vec![[0.0; 9]],
            b: vec![[0.0; 3]],
        }
    }
}

/// Consistency-ladder section.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GammaConfig {
    /// Row-major macroscopic strain of the affine datum.
    pub lambda: [f64; 9],
    pub b0: [f64; 3],
    /// Period denominators m (the periods are 1/m).
    pub denominators: Vec<usize>,
}

impl Default for GammaConfig {
    fn default() -> Self {
        Self {
            lambda: [0.0; 9],
            b0: [0.0; 3],
            denominators: vec![1, 2],
        }
    }
}

/// Conjugation section.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FenchelConfig {
    /// Builtin integrand name (`prototype`, `quadratic`, `power`,
    /// `magnetostriction`, ...).
    pub theta: String,
    /// Integrand parameters, forwarded verbatim.
    pub theta_params: serde_json::Value,
    /// Frozen parameter vector; its leading `param_dim` entries are used.
    pub g: Vec<f64>,
    /// Dual points at which the conjugate is evaluated.
    pub b: Vec<[f64; 3]>,
}

impl Default for FenchelConfig {
    fn default() -> Self {
        Self {
            theta: "prototype".into(),
            theta_params: serde_json::json!({}),
            g: vec![0.0; 9],
            b: vec![[1.0, 0.0, 0.0]],
        }
    }
}

/// Projection section: raw vector-field input to be made divergence-free.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectConfig {
    pub input: Option<PathBuf>,
    /// Keep the cell mean instead of removing it.
    pub keep_mean: bool,
}

/// Assumption-audit section.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    pub samples: usize,
    pub box_radius: f64,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            samples: 200,
            box_radius: 3.0,
            seed: 0xa0d17,
        }
    }
}

/// The complete run configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub model: ModelConfig,
    pub geometry: InclusionSpec,
    pub numerics: NumericsConfig,
    pub points: PointsConfig,
    pub gamma: GammaConfig,
    pub fenchel: FenchelConfig,
    pub project: ProjectConfig,
    pub audit: AuditConfig,
    /// Primary output path (CSV for `table`/`fenchel`, JSON otherwise);
    /// overridable with `--out`.
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl RunConfig {
    /// Schema-level validation: parameter positivity, geometric separation,
    /// discretization sanity. No numerical work.
    pub fn validate(&self) -> Result<()> {
        match self.model.name.as_str() {
            "example1" | "example2" | "example3" => {}
            other => {
                return Err(Error::Config(format!(
                    "unknown model name '{other}' (expected example1, example2, or example3)"
                )))
            }
        }
        self.model.to_params()?;
        self.geometry.validate()?;
        let n = self.numerics.n;
        if n < 4 {
            return Err(Error::InvalidParams(format!(
                "grid resolution n = {n} is too coarse (need n >= 4)"
            )));
        }
        if self.numerics.k_max < 1 {
            return Err(Error::InvalidParams("k_max must be >= 1".into()));
        }
        if !(self.numerics.grad_tol > 0.0) || !self.numerics.grad_tol.is_finite() {
            return Err(Error::InvalidParams(format!(
                "grad_tol must be a positive finite number, got {}",
                self.numerics.grad_tol
            )));
        }
        if self.numerics.max_iters == 0 {
            return Err(Error::InvalidParams("max_iters must be >= 1".into()));
        }
        if let Some(t) = self.threads {
            if t == 0 {
                return Err(Error::InvalidParams("threads must be >= 1".into()));
            }
        }
        if self.points.g.is_empty() || self.points.b.is_empty() {
            return Err(Error::InvalidParams(
                "points.g and points.b must be nonempty".into(),
            ));
        }
        if self.gamma.denominators.is_empty() || self.gamma.denominators.iter().any(|&m| m < 1) {
            return Err(Error::InvalidParams(
                "gamma.denominators must be a nonempty list of integers >= 1".into(),
            ));
        }
        if self.audit.samples == 0 || !(self.audit.box_radius > 0.0) {
            return Err(Error::InvalidParams(
                "audit needs samples >= 1 and a positive box radius".into(),
            ));
        }
        Ok(())
    }

    /// Build the configured composite model (voxelizes the geometry).
    pub fn build_model(&self) -> Result<MaterialModel> {
        let params = self.model.to_params()?;
        let mask = Arc::new(InclusionMask::build(&self.geometry, self.numerics.n)?);
        match self.model.name.as_str() {
            "example1" => make_example1(params, mask),
            "example2" => make_example2(params, mask),
            "example3" => make_example3(params, mask),
            other => Err(Error::Config(format!("unknown model name '{other}'"))),
        }
    }

    /// Solver options for the given model, with explicit numerics overriding
    /// the automatic per-model choices.
    pub fn solver_opts(&self, model: &MaterialModel) -> SolverOpts {
        let mut o = SolverOpts::for_model(model);
        o.grad_tol = self.numerics.grad_tol;
        o.max_iters = self.numerics.max_iters;
        o.seed = self.numerics.seed;
        o.phi_boundary = self.numerics.phi_boundary;
        o.penalty_fallback = self.numerics.penalty_fallback;
        match self.numerics.solver {
            SolverChoice::Auto => {}
            SolverChoice::Cg => o.mode = SolverMode::QuadraticCg,
            SolverChoice::Lbfgs => o.mode = SolverMode::LbfgsProjected,
        }
        if self.numerics.multi_start > 0 {
            o.multi_start = self.numerics.multi_start;
        }
        o
    }

    pub fn fhom_opts(&self) -> FHomOpts {
        FHomOpts {
            k_max: self.numerics.k_max,
            richardson: self.numerics.richardson,
        }
    }

    pub fn g_matrices(&self) -> Vec<Matrix3<f64>> {
        self.points
            .g
            .iter()
            .map(|r| Matrix3::from_row_slice(r))
            .collect()
    }

    pub fn b_vectors(&self) -> Vec<Vector3<f64>> {
        self.points
            .b
            .iter()
            .map(|r| Vector3::from_column_slice(r))
            .collect()
    }
}

/// Set `dotted.path = value` inside a JSON document, creating intermediate
/// objects as needed; numeric segments index into arrays. The value string
/// is parsed as JSON when possible and falls back to a plain string.
pub fn apply_override(root: &mut serde_json::Value, dotted: &str, raw: &str) -> Result<()> {
    if dotted.is_empty() {
        return Err(Error::Config("override path must be nonempty".into()));
    }
    let leaf: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let parts: Vec<&str> = dotted.split('.').collect();
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        if let Ok(idx) = part.parse::<usize>() {
            match cur {
                serde_json::Value::Array(arr) => {
                    if idx >= arr.len() {
                        return Err(Error::Config(format!(
                            "override '{dotted}': index {idx} out of bounds (length {})",
                            arr.len()
                        )));
                    }
                    if last {
                        arr[idx] = leaf;
                        return Ok(());
                    }
                    cur = &mut arr[idx];
                    continue;
                }
                _ => {
                    return Err(Error::Config(format!(
                        "override '{dotted}': segment '{part}' indexes a non-array; \
                         set the whole list instead (e.g. points.b=[[0,0,1]])"
                    )))
                }
            }
        }
        match cur {
            serde_json::Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), leaf);
                    return Ok(());
                }
                cur = map
                    .entry(part.to_string())
                    .or_insert_with(|| serde_json::json!({}));
            }
            _ => {
                return Err(Error::Config(format!(
                    "override '{dotted}': segment '{part}' does not address an object or array"
                )))
            }
        }
    }
    Ok(())
}

/// Parse a `key=value` override argument.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    match arg.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(Error::Config(format!(
            "override '{arg}' must have the form key.path=value"
        ))),
    }
}

/// Load a configuration file, apply overrides, deserialize strictly, and
/// validate.
pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, overrides)
}

/// Same as [`load_config`] from an in-memory document.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut doc: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::Config(format!("configuration is not valid JSON: {e}")))?;
    if !doc.is_object() {
        return Err(Error::Config("configuration root must be a JSON object".into()));
    }
    for (key, val) in overrides {
        apply_override(&mut doc, key, val)?;
    }
    let cfg: RunConfig = serde_json::from_value(doc)
        .map_err(|e| Error::Config(format!("configuration schema: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_yields_validated_defaults() {
        let cfg = parse_config("{}", &[]).unwrap();
        assert_eq!(cfg.model.name, "example1");
        assert_eq!(cfg.numerics.n, 16);
        assert!(cfg.command.is_none());
        cfg.build_model().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        assert!(matches!(
            parse_config(r#"{"modle": {}}"#, &[]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            parse_config(r#"{"model": {"name": "example1", "mu_zero": 1.0}}"#, &[]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            parse_config(r#"{"numerics": {"nn": 8}}"#, &[]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn touching_ball_fails_with_separation_violated() {
        let text = r#"{"geometry": {"shapes": [{"kind": "ball", "center": [0.5, 0.5, 0.5], "radius": 0.5}]}}"#;
        assert!(matches!(
            parse_config(text, &[]),
            Err(Error::SeparationViolated { .. })
        ));
    }

    #[test]
    fn negative_permeability_fails_validation() {
        let text = r#"{"model": {"mu0": -1.0}}"#;
        assert!(matches!(
            parse_config(text, &[]),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn overrides_reach_nested_fields_and_arrays() {
        let overrides = vec![
            ("numerics.n".to_string(), "8".to_string()),
            ("model.name".to_string(), "example2".to_string()),
            ("points.b.0".to_string(), "[0, 0, 1]".to_string()),
            ("output".to_string(), "out.json".to_string()),
        ];
        let base = r#"{"points": {"b": [[9, 9, 9]]}}"#;
        let cfg = parse_config(base, &overrides).unwrap();
        assert_eq!(cfg.numerics.n, 8);
        assert_eq!(cfg.model.name, "example2");
        assert_eq!(cfg.points.b[0], [0.0, 0.0, 1.0]);
        assert_eq!(cfg.output.as_deref(), Some(Path::new("out.json")));
    }

    #[test]
    fn override_validation_still_applies() {
        let overrides = vec![("numerics.n".to_string(), "2".to_string())];
        assert!(parse_config("{}", &overrides).is_err());
        let bad = vec![("points.b.7".to_string(), "[0,0,1]".to_string())];
        assert!(matches!(parse_config("{}", &bad), Err(Error::Config(_))));
    }

    #[test]
    fn elastic_rows_round_trip_matches_isotropic() {
        let iso = ElasticConfig::Isotropic { mu: 1.0, kappa: 1.5 }.build().unwrap();
        let rows = iso.to_rows();
        let text = serde_json::json!({
            "model": {"elastic": {"kind": "rows", "rows": rows}}
        })
        .to_string();
        let cfg = parse_config(&text, &[]).unwrap();
        let rebuilt = cfg.model.to_params().unwrap().elastic.to_rows();
        for (a, b) in rebuilt.iter().zip(rows.iter()) {
            assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn command_names_parse_lowercase() {
        let cfg = parse_config(r#"{"command": "gamma"}"#, &[]).unwrap();
        assert_eq!(cfg.command, Some(Command::Gamma));
        assert_eq!(Command::Gamma.as_str(), "gamma");
    }

    #[test]
    fn solver_opts_respect_explicit_choices() {
        let cfg = parse_config(
            r#"{"numerics": {"solver": "lbfgs", "multi_start": 4, "grad_tol": 1e-6}}"#,
            &[],
        )
        .unwrap();
        let model = cfg.build_model().unwrap();
        let o = cfg.solver_opts(&model);
        assert_eq!(o.mode, SolverMode::LbfgsProjected);
        assert_eq!(o.multi_start, 4);
        assert!((o.grad_tol - 1e-6).abs() < 1e-18);
    }
}
