//! Flat `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment. Values are typed and range
//! checked in line order, so the reported error is always the earliest one.
//! Command-line flags are applied on top of the document and validated with
//! it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use thiserror::Error;
use varexp_core::exponent::{ExponentField, SpaceTimeBox};
use varexp_core::inequalities::{bump_exponent, CounterexampleSpec, Suite};
use varexp_core::mesh::Domain;
use varexp_core::models::{default_lower_order, prototype_flux, LowerOrderMode};
use varexp_core::solver::{check_q_admissible, NewtonConfig};

/// Where a value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Origin {
    Line(usize),
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Flag => write!(f, "command line"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}: cannot parse `{text}` (expected `key = value`)")]
    Syntax { origin: Origin, text: String },

    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { origin: Origin, key: String },

    #[error("{origin}: key `{key}` given twice")]
    DuplicateKey { origin: Origin, key: String },

    #[error("{origin}: `{key}` expects {expected}, got `{value}`")]
    TypeMismatch {
        origin: Origin,
        key: String,
        value: String,
        expected: &'static str,
    },

    #[error("{origin}: `{key}` {reason}")]
    RangeViolation { origin: Origin, key: String, reason: String },

    #[error("{origin}: `{key}`: {source}")]
    Model {
        origin: Origin,
        key: String,
        source: varexp_core::Error,
    },
}

impl ConfigError {
    /// Name printed on standard error; model errors keep the core variant name.
    pub fn name(&self) -> &'static str {
        match self {
            ConfigError::Syntax { .. } => "ConfigSyntax",
            ConfigError::UnknownKey { .. } => "UnknownKey",
            ConfigError::DuplicateKey { .. } => "DuplicateKey",
            ConfigError::TypeMismatch { .. } => "TypeMismatch",
            ConfigError::RangeViolation { .. } => "RangeViolation",
            ConfigError::Model { source, .. } => source.name(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    VerifyStructure,
    Inequalities,
    Counterexample,
    Convergence,
}

impl Command {
    fn parse(s: &str) -> Option<Command> {
        Some(match s {
            "solve" => Command::Solve,
            "verify-structure" => Command::VerifyStructure,
            "inequalities" => Command::Inequalities,
            "counterexample" => Command::Counterexample,
            "convergence" => Command::Convergence,
            _ => return None,
        })
    }
}

/// `constant v`, `affine a b1 b2 bt` or `bump`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExponentSpec {
    Constant(f64),
    Affine { a: f64, b: [f64; 2], bt: f64 },
    Bump,
}

impl ExponentSpec {
    pub fn parse(s: &str) -> Option<ExponentSpec> {
        let words: Vec<&str> = s.split_whitespace().collect();
        let nums: Option<Vec<f64>> = words.iter().skip(1).map(|w| w.parse().ok()).collect();
        match (words.first().copied(), nums?.as_slice()) {
            (Some("constant"), &[v]) => Some(ExponentSpec::Constant(v)),
            (Some("affine"), &[a, b1, b2, bt]) => Some(ExponentSpec::Affine { a, b: [b1, b2], bt }),
            (Some("bump"), &[]) => Some(ExponentSpec::Bump),
            _ => None,
        }
    }

    pub fn build(&self, domain: Domain, t_final: f64) -> varexp_core::Result<ExponentField> {
        let bx = exponent_box(domain, t_final);
        match *self {
            ExponentSpec::Constant(v) => ExponentField::constant(v, bx),
            ExponentSpec::Affine { a, b, bt } => ExponentField::affine(a, b, bt, bx),
            ExponentSpec::Bump => bump_exponent(&CounterexampleSpec {
                time_horizon: t_final,
                ..CounterexampleSpec::default()
            }),
        }
    }
}

pub fn exponent_box(domain: Domain, t_final: f64) -> SpaceTimeBox {
    match domain {
        Domain::UnitSquare => SpaceTimeBox::unit_square(t_final),
        Domain::Disk { radius } => SpaceTimeBox::centered_square(radius, t_final),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxKind {
    Prototype,
    Adversarial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceSpec {
    Zero,
    /// Right-hand side of the manufactured linear problem.
    Manufactured,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialSpec {
    Zero,
    Manufactured,
    /// `amp · exp(−20|x − c|²) (1, −½)` centred in the domain.
    Gaussian(f64),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub domain: Domain,
    pub levels: usize,
    pub steps: usize,
    pub t_final: f64,
    pub exponent: ExponentSpec,
    pub flux: FluxKind,
    pub delta: f64,
    pub lower: LowerOrderMode,
    pub kappa: f64,
    pub source: SourceSpec,
    pub u0: InitialSpec,
    pub q: Option<ExponentSpec>,
    pub eps_star: Option<f64>,
    pub newton: NewtonConfig,
    pub tol_energy: f64,
    /// Snapshot every `stride` steps; the final step is always written.
    pub stride: usize,
    pub seed: u64,
    pub samples: usize,
    pub truncations: usize,
    pub profile_points: usize,
    pub suite: Suite,
    pub calibration: usize,
    pub validation: usize,
    pub output_dir: PathBuf,
}

const KEYS: &[&str] = &[
    "command",
    "domain",
    "levels",
    "steps",
    "T",
    "exponent",
    "flux",
    "delta",
    "lower",
    "kappa",
    "source",
    "u0",
    "q",
    "eps_star",
    "tol_res",
    "max_iter",
    "tol_energy",
    "stride",
    "seed",
    "samples",
    "truncations",
    "profile_points",
    "suite",
    "calibration",
    "validation",
    "output_dir",
];

/// Untyped assignments, each tagged with its origin.
#[derive(Debug, Clone, Default)]
pub struct ConfigDoc {
    entries: BTreeMap<String, (String, Origin)>,
}

impl ConfigDoc {
    pub fn parse(text: &str) -> Result<ConfigDoc, ConfigError> {
        let mut doc = ConfigDoc::default();
        for (i, raw) in text.lines().enumerate() {
            let origin = Origin::Line(i + 1);
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    origin,
                    text: line.to_string(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax {
                    origin,
                    text: line.to_string(),
                });
            }
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    origin,
                    key: key.to_string(),
                });
            }
            if doc.entries.contains_key(key) {
                return Err(ConfigError::DuplicateKey {
                    origin,
                    key: key.to_string(),
                });
            }
            doc.entries.insert(key.to_string(), (value.to_string(), origin));
        }
        Ok(doc)
    }

    /// Overrides `key` from the command line.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                origin: Origin::Flag,
                key: key.to_string(),
            });
        }
        self.entries.insert(key.to_string(), (value.into(), Origin::Flag));
        Ok(())
    }

    pub fn validate(&self) -> Result<RunConfig, ConfigError> {
        let mut ordered: Vec<(&str, &str, Origin)> =
            self.entries.iter().map(|(k, (v, o))| (k.as_str(), v.as_str(), *o)).collect();
        ordered.sort_by_key(|e| e.2);

        let mut c = RunConfig::default();
        for &(key, value, origin) in &ordered {
            let mismatch = |expected: &'static str| ConfigError::TypeMismatch {
                origin,
                key: key.to_string(),
                value: value.to_string(),
                expected,
            };
            let range = |reason: &str| ConfigError::RangeViolation {
                origin,
                key: key.to_string(),
                reason: reason.to_string(),
            };
            let real = || value.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| mismatch("a finite real"));
            let count = || value.parse::<usize>().map_err(|_| mismatch("a non-negative integer"));
            match key {
                "command" => c.command = Command::parse(value).ok_or_else(|| mismatch("a command name"))?,
                "domain" => {
                    let words: Vec<&str> = value.split_whitespace().collect();
                    c.domain = match words.as_slice() {
                        ["unit_square"] => Domain::UnitSquare,
                        ["disk", r] => {
                            let radius: f64 = r.parse().map_err(|_| mismatch("`unit_square` or `disk <radius>`"))?;
                            if !(radius.is_finite() && radius > 0.0) {
                                return Err(range("radius must be positive"));
                            }
                            Domain::Disk { radius }
                        }
                        _ => return Err(mismatch("`unit_square` or `disk <radius>`")),
                    };
                }
                "levels" => {
                    c.levels = count()?;
                    if !(1..=7).contains(&c.levels) {
                        return Err(range("must lie in 1..=7"));
                    }
                }
                "steps" => {
                    c.steps = count()?;
                    if c.steps == 0 {
                        return Err(range("must be at least 1"));
                    }
                }
                "T" => {
                    c.t_final = real()?;
                    if c.t_final <= 0.0 {
                        return Err(range("must be positive"));
                    }
                }
                "exponent" => c.exponent = ExponentSpec::parse(value).ok_or_else(|| mismatch(EXPONENT_FORMS))?,
                "q" => c.q = Some(ExponentSpec::parse(value).ok_or_else(|| mismatch(EXPONENT_FORMS))?),
                "flux" => {
                    c.flux = match value {
                        "prototype" => FluxKind::Prototype,
                        "adversarial" => FluxKind::Adversarial,
                        _ => return Err(mismatch("`prototype` or `adversarial`")),
                    }
                }
                "delta" => {
                    c.delta = real()?;
                    if c.delta < 0.0 {
                        return Err(range("must be ≥ 0"));
                    }
                }
                "lower" => {
                    c.lower = match value {
                        "zero" => LowerOrderMode::Zero,
                        "linear" => LowerOrderMode::LinearDamping,
                        "saturating" => LowerOrderMode::Saturating,
                        _ => return Err(mismatch("`zero`, `linear` or `saturating`")),
                    }
                }
                "kappa" => {
                    c.kappa = real()?;
                    if c.kappa < 0.0 {
                        return Err(range("must be ≥ 0"));
                    }
                }
                "source" => {
                    c.source = match value {
                        "zero" => SourceSpec::Zero,
                        "manufactured" => SourceSpec::Manufactured,
                        _ => return Err(mismatch("`zero` or `manufactured`")),
                    }
                }
                "u0" => {
                    let words: Vec<&str> = value.split_whitespace().collect();
                    c.u0 = match words.as_slice() {
                        ["zero"] => InitialSpec::Zero,
                        ["manufactured"] => InitialSpec::Manufactured,
                        ["gaussian", a] => InitialSpec::Gaussian(
                            a.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| mismatch(INITIAL_FORMS))?,
                        ),
                        _ => return Err(mismatch(INITIAL_FORMS)),
                    }
                }
                "eps_star" => {
                    let e = real()?;
                    if e <= 0.0 {
                        return Err(range("must be positive"));
                    }
                    c.eps_star = Some(e);
                }
                "tol_res" => {
                    c.newton.tol_res = real()?;
                    if c.newton.tol_res <= 0.0 {
                        return Err(range("must be positive"));
                    }
                }
                "max_iter" => {
                    c.newton.max_iter = count()?;
                    if c.newton.max_iter == 0 {
                        return Err(range("must be at least 1"));
                    }
                }
                "tol_energy" => {
                    c.tol_energy = real()?;
                    if c.tol_energy < 0.0 {
                        return Err(range("must be ≥ 0"));
                    }
                }
                "stride" => {
                    c.stride = count()?;
                    if c.stride == 0 {
                        return Err(range("must be at least 1"));
                    }
                }
                "seed" => c.seed = value.parse().map_err(|_| mismatch("an unsigned 64-bit integer"))?,
                "samples" | "truncations" | "profile_points" | "calibration" | "validation" => {
                    let n = count()?;
                    let min = if key == "profile_points" { 2 } else { 1 };
                    if n < min {
                        return Err(range(&format!("must be at least {min}")));
                    }
                    match key {
                        "samples" => c.samples = n,
                        "truncations" => c.truncations = n,
                        "profile_points" => c.profile_points = n,
                        "calibration" => c.calibration = n,
                        _ => c.validation = n,
                    }
                }
                "suite" => {
                    c.suite = Suite::parse(value).map_err(|_| mismatch("repair, interpolation, korn, gn or all"))?
                }
                "output_dir" => c.output_dir = PathBuf::from(value),
                _ => unreachable!("keys are checked on insertion"),
            }
        }
        self.check_models(&c)?;
        Ok(c)
    }

    fn origin(&self, key: &str) -> Origin {
        self.entries.get(key).map(|e| e.1).unwrap_or(Origin::Line(0))
    }

    /// Cross-key checks that need the core constructors.
    fn check_models(&self, c: &RunConfig) -> Result<(), ConfigError> {
        let model = |key: &str, source: varexp_core::Error| ConfigError::Model {
            origin: self.origin(key),
            key: key.to_string(),
            source,
        };
        let p = c.exponent.build(c.domain, c.t_final).map_err(|e| model("exponent", e))?;
        if c.flux == FluxKind::Prototype {
            prototype_flux(&p, c.delta).map_err(|e| model("delta", e))?;
        }
        let lower = default_lower_order(&p, c.eps_star, c.kappa, c.lower).map_err(|e| model("lower", e))?;
        if let Some(q) = c.q {
            let q = q.build(c.domain, c.t_final).map_err(|e| model("q", e))?;
            check_q_admissible(&q, &p, lower.eps_star()).map_err(|e| model("q", e))?;
        }
        if c.command == Command::Convergence {
            if c.levels < 3 {
                return Err(ConfigError::RangeViolation {
                    origin: self.origin("levels"),
                    key: "levels".into(),
                    reason: "must be at least 3 for a convergence study".into(),
                });
            }
            if c.steps % (1 << (c.levels - 1)) != 0 {
                return Err(ConfigError::RangeViolation {
                    origin: self.origin("steps"),
                    key: "steps".into(),
                    reason: format!("must be divisible by 2^(levels - 1) = {}", 1 << (c.levels - 1)),
                });
            }
        }
        Ok(())
    }
}

const EXPONENT_FORMS: &str = "`constant <v>`, `affine <a> <b1> <b2> <bt>` or `bump`";
const INITIAL_FORMS: &str = "`zero`, `manufactured` or `gaussian <amplitude>`";

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::Solve,
            domain: Domain::UnitSquare,
            levels: 3,
            steps: 32,
            t_final: 1.0,
            exponent: ExponentSpec::Constant(2.0),
            flux: FluxKind::Prototype,
            delta: 0.1,
            lower: LowerOrderMode::Zero,
            kappa: 1.0,
            source: SourceSpec::Zero,
            u0: InitialSpec::Gaussian(1.0),
            q: None,
            eps_star: None,
            newton: NewtonConfig::default(),
            tol_energy: varexp_core::solver::TOL_ENERGY,
            stride: 8,
            seed: 42,
            samples: 10_000,
            truncations: 5,
            profile_points: 281,
            suite: Suite::All,
            calibration: 200,
            validation: 200,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    ConfigDoc::parse(text)?.validate()
}
