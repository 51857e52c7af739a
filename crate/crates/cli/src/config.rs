//! Experiment configuration: the schema, layering of defaults, presets and
//! user files, and validation.
//!
//! Layers are applied by deserializing each document on top of the result of
//! the previous ones: every table falls back to the value it had in the layer
//! below. Because each layer is parsed straight from its own text, type
//! errors and unknown keys are reported at their line and column.

use std::cell::RefCell;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub const DEFAULTS: &str = include_str!("../presets/defaults.toml");

/// Built-in presets by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("krrr-table", include_str!("../presets/krrr-table.toml")),
    ("r5-counterexample", include_str!("../presets/r5-counterexample.toml")),
];

thread_local! {
    static BASE: RefCell<Option<ExperimentConfig>> = const { RefCell::new(None) };
}

/// Fallback for a table missing from the document being parsed: its value
/// in the layer below, or an empty placeholder while the defaults file
/// itself is read.
fn from_base<T: Default>(pick: impl FnOnce(&ExperimentConfig) -> T) -> T {
    BASE.with(|b| b.borrow().as_ref().map(pick).unwrap_or_default())
}

macro_rules! base_fn {
    ($name:ident, $ty:ty, $($path:tt)+) => {
        fn $name() -> $ty {
            from_base(|c| c.$($path)+.clone())
        }
    };
}

base_fn!(base_all, ExperimentConfig, clone());
base_fn!(base_bodies, Bodies, bodies);
base_fn!(base_body_k, BodySpec, bodies.k);
base_fn!(base_body_l, BodySpec, bodies.l);

/// Which body table is being read, so that a partial `[bodies.k]` falls
/// back to the lower layer's `k` and a partial `[bodies.l]` to its `l`.
#[derive(Clone, Copy)]
enum BodySlot {
    K,
    L,
}

thread_local! {
    static SLOT: RefCell<BodySlot> = const { RefCell::new(BodySlot::K) };
}

fn base_body() -> BodySpec {
    match SLOT.with(|s| *s.borrow()) {
        BodySlot::K => base_body_k(),
        BodySlot::L => base_body_l(),
    }
}

fn read_body<'de, D: serde::Deserializer<'de>>(slot: BodySlot, de: D) -> Result<BodySpec, D::Error> {
    SLOT.with(|s| *s.borrow_mut() = slot);
    BodySpec::deserialize(de)
}

fn read_body_k<'de, D: serde::Deserializer<'de>>(de: D) -> Result<BodySpec, D::Error> {
    read_body(BodySlot::K, de)
}

fn read_body_l<'de, D: serde::Deserializer<'de>>(de: D) -> Result<BodySpec, D::Error> {
    read_body(BodySlot::L, de)
}

base_fn!(base_grid, GridConfig, grid);
base_fn!(base_volume, VolumeConfig, volume);
base_fn!(base_bp, BpConfig, bp);
base_fn!(base_transform, TransformConfig, transform);
base_fn!(base_sections, SectionsConfig, sections);
base_fn!(base_intersection, IntersectionConfig, intersection);
base_fn!(base_audit, AuditConfig, audit);

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default = "base_all", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub jobs: usize,
    pub out: Option<PathBuf>,
    pub d: usize,
    pub n: usize,
    pub bodies: Bodies,
    pub grid: GridConfig,
    pub volume: VolumeConfig,
    pub bp: BpConfig,
    pub transform: TransformConfig,
    pub sections: SectionsConfig,
    pub intersection: IntersectionConfig,
    pub audit: AuditConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default = "base_bodies", deny_unknown_fields)]
pub struct Bodies {
    #[serde(default = "base_body_k", deserialize_with = "read_body_k")]
    pub k: BodySpec,
    #[serde(default = "base_body_l", deserialize_with = "read_body_l")]
    pub l: BodySpec,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BodyKind {
    #[default]
    Ball,
    Harmonic,
    BlockLp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub degree: usize,
    pub coef: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default = "base_body", deny_unknown_fields)]
pub struct BodySpec {
    pub kind: BodyKind,
    pub radius: f64,
    pub power: f64,
    pub axis: Vec<f64>,
    pub terms: Vec<Term>,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default = "base_grid", deny_unknown_fields)]
pub struct GridConfig {
    pub size: usize,
    pub section_resolution: usize,
    pub section_samples: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default = "base_volume", deny_unknown_fields)]
pub struct VolumeConfig {
    pub resolution: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BpMode {
    #[default]
    Compare,
    Search,
    Table,
    Dm,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default = "base_bp", deny_unknown_fields)]
pub struct BpConfig {
    pub mode: BpMode,
    pub alpha: f64,
    pub eps_start: f64,
    pub eps_stop: f64,
    pub psi_degree: usize,
    pub psi_delta: f64,
    pub certificate_degree: usize,
    pub convexity_trials: usize,
    pub profile_samples: usize,
    pub m: usize,
    pub cases: Vec<[usize; 2]>,
    pub pairs: usize,
    pub table_grid: usize,
    pub require_conclusive: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformOp {
    #[default]
    Funk,
    Cosine,
    InverseFunk,
    Riesz,
    MultiplierTable,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default = "base_transform", deny_unknown_fields)]
pub struct TransformConfig {
    pub op: TransformOp,
    pub dim: usize,
    pub alpha: f64,
    pub m: usize,
    pub riesz_d: usize,
    pub max_degree: usize,
    pub points: usize,
    pub at: Vec<Vec<f64>>,
    pub axis: Vec<f64>,
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SectionMethodName {
    #[default]
    Auto,
    Design,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default = "base_sections", deny_unknown_fields)]
pub struct SectionsConfig {
    pub points: usize,
    pub method: SectionMethodName,
    pub identity: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default = "base_intersection", deny_unknown_fields)]
pub struct IntersectionConfig {
    pub lambdas: Vec<f64>,
    pub degrees: Vec<usize>,
    pub grid: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default = "base_audit", deny_unknown_fields)]
pub struct AuditConfig {
    pub random_trials: usize,
    pub tol: f64,
    pub inject_sign_flip: bool,
}

/// A configuration problem, rendered for the user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Parses `text` on top of `base` (or as the root layer when `base` is
/// `None`). `origin` names the document in error messages.
pub fn parse_layer(text: &str, base: Option<&ExperimentConfig>, origin: &str) -> Result<ExperimentConfig, ConfigError> {
    BASE.with(|b| *b.borrow_mut() = base.cloned());
    let parsed = toml::from_str::<ExperimentConfig>(text);
    BASE.with(|b| *b.borrow_mut() = None);
    parsed.map_err(|e| ConfigError(locate(text, origin, &e)))
}

/// Error text with a `origin:line:column` prefix when the parser knows the span.
fn locate(text: &str, origin: &str, err: &toml::de::Error) -> String {
    let message = err.message().trim_end();
    match err.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
            let source = text.lines().nth(line - 1).unwrap_or("");
            format!("{origin}:{line}:{column}: {message}\n  | {source}")
        }
        None => format!("{origin}: {message}"),
    }
}

pub fn preset(name: &str) -> Result<&'static str, ConfigError> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            ConfigError(format!("unknown preset {name:?}; available: {}", names.join(", ")))
        })
}

/// Defaults, then the preset, then the user file.
pub fn load(preset_name: Option<&str>, user: Option<(&str, &str)>) -> Result<ExperimentConfig, ConfigError> {
    let mut config = parse_layer(DEFAULTS, None, "defaults.toml")?;
    if let Some(name) = preset_name {
        config = parse_layer(preset(name)?, Some(&config), &format!("preset {name}"))?;
    }
    if let Some((text, origin)) = user {
        config = parse_layer(text, Some(&config), origin)?;
    }
    Ok(config)
}

impl ExperimentConfig {
    pub fn dim(&self) -> usize {
        self.d * self.n
    }

    /// Structural checks shared by every command.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError(msg));
        if ![1, 2, 4, 8].contains(&self.d) {
            return fail(format!("d = {} is not allowed: d must be 1, 2, 4 or 8", self.d));
        }
        if self.n < 2 {
            return fail(format!("n = {} is not allowed: n must be at least 2", self.n));
        }
        for (name, body) in [("bodies.k", &self.bodies.k), ("bodies.l", &self.bodies.l)] {
            if !body.axis.is_empty() && body.axis.len() != self.dim() {
                return fail(format!(
                    "{name}.axis has {} entries but N = d n = {}",
                    body.axis.len(),
                    self.dim()
                ));
            }
        }
        for &[d, n] in &self.bp.cases {
            if ![1, 2, 4, 8].contains(&d) || n < 2 {
                return fail(format!("bp.cases entry [{d}, {n}] needs d in {{1, 2, 4, 8}} and n >= 2"));
            }
        }
        if self.grid.size == 0 || self.intersection.grid == 0 || self.bp.table_grid == 0 {
            return fail("grid sizes must be positive".into());
        }
        if !(self.bp.eps_start > 0.0 && self.bp.eps_stop > 0.0 && self.bp.eps_stop <= self.bp.eps_start) {
            return fail("bp.eps_start and bp.eps_stop must satisfy 0 < eps_stop <= eps_start".into());
        }
        Ok(())
    }

    /// The root seed, which every stochastic command requires.
    pub fn require_seed(&self) -> Result<u64, ConfigError> {
        self.seed.ok_or_else(|| {
            ConfigError("no seed given: set `seed` in the config or pass --seed (runs must be reproducible)".into())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_validate() {
        let c = load(None, None).unwrap();
        assert_eq!(c.d, 1);
        assert_eq!(c.grid.size, 4096);
        assert_eq!(c.bodies.l.radius, 1.1);
        assert_eq!(c.seed, None);
        c.validate().unwrap();
    }

    #[test]
    fn defaults_file_names_every_key() {
        // Parsing the defaults with no fallback must not leave any
        // placeholder behind: compare with a parse on top of itself.
        let root = parse_layer(DEFAULTS, None, "defaults").unwrap();
        let again = parse_layer(DEFAULTS, Some(&root), "defaults").unwrap();
        assert_eq!(root, again);
        let empty = parse_layer("", Some(&root), "empty").unwrap();
        assert_eq!(empty, root);
    }

    #[test]
    fn partial_tables_keep_lower_layers() {
        let c = load(Some("r5-counterexample"), Some(("[bp]\neps_stop = 1e-6\n", "user.toml"))).unwrap();
        assert_eq!(c.n, 5);
        assert_eq!(c.bp.mode, BpMode::Search);
        assert_eq!(c.bp.eps_stop, 1e-6);
        assert_eq!(c.bp.eps_start, 0.2);
        assert_eq!(c.bodies.l.terms.len(), 2);
        assert_eq!(c.bodies.l.p, 4.0);
        assert_eq!(c.bodies.k.kind, BodyKind::Ball);
    }

    #[test]
    fn errors_point_at_the_line() {
        let text = "seed = 1\n\n[grid]\nsize = 10\nsise = 3\n";
        let err = load(None, Some((text, "cfg.toml"))).unwrap_err().0;
        assert!(err.starts_with("cfg.toml:5:1:"), "{err}");
        assert!(err.contains("sise"), "{err}");

        let err = load(None, Some(("d = \"two\"\n", "cfg.toml"))).unwrap_err().0;
        assert!(err.starts_with("cfg.toml:1:5:"), "{err}");

        let err = load(None, Some(("[bp]\nmode = \"serch\"\n", "cfg.toml"))).unwrap_err().0;
        assert!(err.starts_with("cfg.toml:2:"), "{err}");
    }

    #[test]
    fn validation_rejects_bad_structure() {
        let c = load(None, Some(("d = 3\n", "x"))).unwrap();
        assert!(c.validate().unwrap_err().0.contains("d = 3"));
        let c = load(None, Some(("n = 1\n", "x"))).unwrap();
        assert!(c.validate().is_err());
        assert!(c.require_seed().is_err());
        assert!(preset("nope").is_err());
    }
}
