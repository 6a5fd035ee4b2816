//! Experiment configuration: TOML sections of `key = value` lines.

use std::path::{Path, PathBuf};

use mgt_core::geometry::point_from_slice;
use mgt_core::{
    build_mesh, partition_boundary, derive_params, BoundaryPartition, DomainSpec, InitialPreset, MgtError,
    PhysicalParams, Point, Problem, ScalarField, Scheme,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainConfig,
    pub params: ParamsConfig,
    pub initial: InitialConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Interval,
    Rectangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    /// Γ0/Γ1 from the sign of `ν·(x - x0)`.
    Feedback,
    /// Dirichlet everywhere; `x0` is then only used for diagnostics.
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub kind: DomainKind,
    /// `[a, b]` for an interval, `[x_lo, x_hi, y_lo, y_hi]` for a rectangle.
    pub bounds: Vec<f64>,
    /// Cells per direction.
    pub resolution: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    pub boundary: BoundaryMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Constant(f64),
    PerCell(Vec<f64>),
}

impl AlphaSpec {
    pub fn field(&self) -> ScalarField {
        match self {
            AlphaSpec::Constant(a) => ScalarField::Constant(*a),
            AlphaSpec::PerCell(v) => ScalarField::PerCell(v.clone()),
        }
    }

    pub fn from_field(f: &ScalarField) -> Self {
        match f {
            ScalarField::Constant(a) => AlphaSpec::Constant(*a),
            ScalarField::PerCell(v) => AlphaSpec::PerCell(v.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub tau: f64,
    pub c: f64,
    pub delta: f64,
    pub eta: f64,
    pub alpha: AlphaSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetKind {
    Eigenmode,
    Bump,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub preset: PresetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final: f64,
    pub dt: f64,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_scheme() -> String {
    Scheme::ImplicitMidpoint.name().to_string()
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub identities: Vec<String>,
    pub spectrum: bool,
    pub decay_fit: bool,
    pub datko: bool,
    pub resolvent: Vec<f64>,
    /// Sweep points evaluated concurrently.
    pub workers: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<Vec<f64>>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            identities: Vec::new(),
            spectrum: true,
            decay_fit: true,
            datko: true,
            resolvent: Vec::new(),
            workers: 1,
            fit_window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub state_dump: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: PathBuf::from("mgt-output"), state_dump: false }
    }
}

/// Parse failures keep the TOML location; validation failures name the field.
#[derive(Debug)]
pub enum ConfigError {
    Parse(String),
    Invalid { field: String, message: String },
    Io(std::io::Error),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Parse(m) => write!(f, "config parse error: {m}"),
            ConfigError::Invalid { field, message } => write!(f, "invalid config field `{field}`: {message}"),
            ConfigError::Io(e) => write!(f, "cannot read config: {e}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), message: message.into() }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path).map_err(ConfigError::Io)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = &self.domain;
        let (nb, nr) = match d.kind {
            DomainKind::Interval => (2, 1),
            DomainKind::Rectangle => (4, 2),
        };
        if d.bounds.len() != nb {
            return Err(invalid("domain.bounds", format!("expected {nb} numbers, got {}", d.bounds.len())));
        }
        if d.bounds.iter().any(|v| !v.is_finite()) {
            return Err(invalid("domain.bounds", "all bounds must be finite"));
        }
        if d.bounds.chunks(2).any(|p| !(p[0] < p[1])) {
            return Err(invalid("domain.bounds", "each lower bound must be below its upper bound"));
        }
        if d.resolution.len() != nr {
            return Err(invalid("domain.resolution", format!("expected {nr} entries, got {}", d.resolution.len())));
        }
        if d.resolution.iter().any(|&r| r < 2) {
            return Err(invalid("domain.resolution", "every entry must be at least 2"));
        }
        match (&d.x0, d.boundary) {
            (None, BoundaryMode::Feedback) => {
                return Err(invalid("domain.x0", "required when boundary = \"feedback\""))
            }
            (Some(x), _) if x.len() != nr || x.iter().any(|v| !v.is_finite()) => {
                return Err(invalid("domain.x0", format!("expected {nr} finite coordinates")))
            }
            _ => {}
        }

        let p = &self.params;
        for (name, v) in [("params.tau", p.tau), ("params.c", p.c), ("params.delta", p.delta), ("params.eta", p.eta)] {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        match &p.alpha {
            AlphaSpec::Constant(a) if !a.is_finite() => return Err(invalid("params.alpha", "must be finite")),
            AlphaSpec::PerCell(v) => {
                if v.iter().any(|a| !a.is_finite()) {
                    return Err(invalid("params.alpha", "every entry must be finite"));
                }
                let cells: usize = d.resolution.iter().product::<usize>() * if nr == 2 { 2 } else { 1 };
                if v.len() != cells {
                    return Err(invalid("params.alpha", format!("{} values for {cells} cells", v.len())));
                }
            }
            _ => {}
        }

        match self.initial.preset {
            PresetKind::Eigenmode if self.initial.mode.is_none_or(|m| m == 0) => {
                return Err(invalid("initial.mode", "eigenmode preset needs a 1-based mode index"))
            }
            PresetKind::Bump if self.initial.seed.is_none() => {
                return Err(invalid("initial.seed", "bump preset needs an explicit seed"))
            }
            _ => {}
        }

        let t = &self.time;
        if !(t.dt.is_finite() && t.dt > 0.0) {
            return Err(invalid("time.dt", format!("must be positive and finite, got {}", t.dt)));
        }
        if !t.t_final.is_finite() || t.t_final < t.dt {
            return Err(invalid("time.t_final", format!("T = {} must be finite and at least dt = {}", t.t_final, t.dt)));
        }
        if t.stride == 0 {
            return Err(invalid("time.stride", "must be at least 1"));
        }
        t.scheme.parse::<Scheme>().map_err(|e| invalid("time.scheme", e.to_string()))?;

        let a = &self.analysis;
        for tag in &a.identities {
            tag.parse::<mgt_core::analysis::Identity>().map_err(|e| invalid("analysis.identities", e.to_string()))?;
        }
        if a.resolvent.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(invalid("analysis.resolvent", "every λ must be positive and finite"));
        }
        if a.workers == 0 {
            return Err(invalid("analysis.workers", "must be at least 1"));
        }
        if let Some(w) = &a.fit_window {
            if w.len() != 2 || !(w[0] < w[1]) {
                return Err(invalid("analysis.fit_window", "expected [start, end] with start < end"));
            }
        }
        Ok(())
    }

    pub fn domain_spec(&self) -> DomainSpec {
        let b = &self.domain.bounds;
        match self.domain.kind {
            DomainKind::Interval => DomainSpec::Interval { a: b[0], b: b[1] },
            DomainKind::Rectangle => DomainSpec::Rectangle { x: (b[0], b[1]), y: (b[2], b[3]) },
        }
    }

    pub fn x0(&self) -> Result<Option<Point>, MgtError> {
        let dim = self.domain.resolution.len();
        self.domain.x0.as_ref().map(|x| point_from_slice(dim, x)).transpose()
    }

    pub fn physical_params(&self) -> Result<PhysicalParams, MgtError> {
        let p = &self.params;
        derive_params(p.tau, p.c, p.delta, p.eta, p.alpha.field())
    }

    pub fn scheme(&self) -> Scheme {
        self.time.scheme.parse().expect("validated scheme")
    }

    pub fn preset(&self) -> InitialPreset {
        match self.initial.preset {
            PresetKind::Eigenmode => InitialPreset::Eigenmode(self.initial.mode.unwrap_or(1)),
            PresetKind::Bump => InitialPreset::Bump { seed: self.initial.seed.unwrap_or(0) },
            PresetKind::Zero => InitialPreset::Zero,
        }
    }

    pub fn fit_window(&self) -> Option<(f64, f64)> {
        self.analysis.fit_window.as_ref().map(|w| (w[0], w[1]))
    }

    /// Mesh, partition and assembled operators.
    pub fn build_problem(&self) -> Result<Problem, MgtError> {
        let mesh = build_mesh(&self.domain_spec(), &self.domain.resolution)?;
        let partition = match self.domain.boundary {
            BoundaryMode::Dirichlet => BoundaryPartition::all_dirichlet(&mesh),
            BoundaryMode::Feedback => {
                let x0 = self.x0()?.expect("validated x0");
                partition_boundary(&mesh, x0)?
            }
        };
        Problem::new(mesh, partition, self.physical_params()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
[domain]
kind = "interval"
bounds = [0.0, 1.0]
resolution = [20]
x0 = [-1.0]
boundary = "feedback"

[params]
tau = 1.0
c = 1.0
delta = 0.0
eta = 1.0
alpha = 1.0

[initial]
preset = "eigenmode"
mode = 1

[time]
t_final = 1.0
dt = 0.01
"#;

    #[test]
    fn minimal_config_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.time.stride, 1);
        assert_eq!(cfg.scheme(), Scheme::ImplicitMidpoint);
        assert!(cfg.analysis.spectrum && cfg.analysis.decay_fit && cfg.analysis.datko);
        assert_eq!(cfg.preset(), InitialPreset::Eigenmode(1));
    }

    #[test]
    fn round_trip_is_exact() {
        let mut cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        cfg.params.alpha = AlphaSpec::PerCell((0..20).map(|i| 1.0 + 0.1 * i as f64 / 3.0).collect());
        cfg.analysis.resolvent = vec![0.1, 1.0 / 3.0];
        cfg.time.dt = 1e-3;
        let again = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn parse_errors_carry_location() {
        let bad = MINIMAL.replace("tau = 1.0", "tau = \"one\"");
        let msg = ExperimentConfig::parse(&bad).unwrap_err().to_string();
        assert!(msg.contains("line") && msg.contains("tau"), "{msg}");
    }

    #[test]
    fn validation_names_the_field() {
        let cases = [
            (MINIMAL.replace("t_final = 1.0", "t_final = 0.001"), "time.t_final"),
            (MINIMAL.replace("resolution = [20]", "resolution = [1]"), "domain.resolution"),
            (MINIMAL.replace("preset = \"eigenmode\"", "preset = \"bump\""), "initial.seed"),
            (MINIMAL.replace("x0 = [-1.0]\n", ""), "domain.x0"),
            (MINIMAL.replace("[time]", "[analysis]\nidentities = [\"nope\"]\n\n[time]"), "analysis.identities"),
        ];
        for (text, field) in cases {
            match ExperimentConfig::parse(&text) {
                Err(ConfigError::Invalid { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected invalid {field}, got {other:?}"),
            }
        }
    }

    #[test]
    fn x0_inside_is_a_geometric_error() {
        let cfg = ExperimentConfig::parse(&MINIMAL.replace("x0 = [-1.0]", "x0 = [0.5]")).unwrap();
        assert!(matches!(cfg.build_problem(), Err(MgtError::GeometricCondition(_))));
    }
}
