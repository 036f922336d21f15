//! Strict JSON run configuration, embedded presets and `--set` overrides.

use std::path::PathBuf;

use bimembrane::diagnose::{DiagnoseOptions, CHECK_NAMES};
use bimembrane::presets::{BoundaryPreset, LinearPreset};
use bimembrane::solver::SolveOptions;
use bimembrane::thin_limits::LinearOptions;
use bimembrane::{Domain, GridSpec, Params, Vec2};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Configuration problem with the offending field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { path: path.into(), message: message.into() }
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.path.is_empty() {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config: {}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub h: f64,
    /// Square `[-half_width, half_width]²`; alternative to `nx`/`ny`/`origin`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Vec2>,
}

impl GridConfig {
    pub fn spec(&self) -> CResult<GridSpec> {
        let err = |p: &str, e: bimembrane::Error| ConfigError::new(format!("grid.{p}"), e.to_string());
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(ConfigError::new("grid.h", "must be positive"));
        }
        match (self.half_width, self.nx, self.ny, self.origin) {
            (Some(w), None, None, None) => GridSpec::centered(w, self.h).map_err(|e| err("half_width", e)),
            (None, Some(nx), Some(ny), Some(o)) => GridSpec::new(nx, ny, self.h, o).map_err(|e| err("nx", e)),
            _ => Err(ConfigError::new("grid", "give either half_width or all of nx, ny, origin")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub lambda_u: f64,
    pub lambda_v: f64,
    /// Enforce `Λ_u >= Λ_v` (existence regime); off accepts any positive pair.
    #[serde(default = "yes")]
    pub variational: bool,
}

fn yes() -> bool {
    true
}

impl ParamsConfig {
    pub fn params(&self) -> CResult<Params> {
        let (lu, lv) = (self.lambda_u, self.lambda_v);
        if !(lu > 0.0 && lu.is_finite()) {
            return Err(ConfigError::new("params.lambda_u", format!("must be positive, got {lu}")));
        }
        if !(lv > 0.0 && lv.is_finite()) {
            return Err(ConfigError::new("params.lambda_v", format!("must be positive, got {lv}")));
        }
        if ((lu + lv) - 1.0).abs() > 1e-12 {
            return Err(ConfigError::new(
                "params.lambda_u",
                format!("lambda_u + lambda_v must equal 1, got {}", lu + lv),
            ));
        }
        if self.variational && lu < lv {
            return Err(ConfigError::new(
                "params.lambda_u",
                "variational mode needs lambda_u >= lambda_v",
            ));
        }
        let p = if self.variational { Params::variational(lu, lv) } else { Params::new(lu, lv) };
        p.map_err(|e| ConfigError::new("params", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldFiles {
    pub u: PathBuf,
    pub v: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryConfig {
    Preset(BoundaryPreset),
    File(FieldFiles),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearizedConfig {
    pub preset: LinearPreset,
    #[serde(default = "default_lh")]
    pub lambda_h: f64,
    #[serde(default = "default_lw")]
    pub lambda_w: f64,
    /// Spacings of the refinement study written to `convergence.csv`.
    #[serde(default)]
    pub spacings: Vec<f64>,
    #[serde(default)]
    pub options: LinearOptions,
    #[serde(default = "default_audit_tol")]
    pub audit_tol: f64,
}

fn default_lh() -> f64 {
    0.7
}
fn default_lw() -> f64 {
    0.3
}
fn default_audit_tol() -> f64 {
    1e-6
}
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub domain: Domain,
    pub params: ParamsConfig,
    pub boundary: BoundaryConfig,
    /// Solver options overlaid on the spacing-based defaults.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<Value>,
    #[serde(default)]
    pub diagnostics: DiagnoseOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linearized: Option<LinearizedConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Everything validated and materialised.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub spec: GridSpec,
    pub params: Params,
    pub solve: SolveOptions,
}

impl RunConfig {
    /// Parses a JSON value, reporting the path of the first bad field.
    pub fn from_value(v: Value) -> CResult<Self> {
        serde_path_to_error::deserialize(v).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { String::new() } else { path };
            ConfigError::new(path, e.into_inner().to_string())
        })
    }

    pub fn validate(&self) -> CResult<Resolved> {
        let spec = self.grid.spec()?;
        match self.domain {
            Domain::Disk { radius } | Domain::HalfDisk { radius } if !(radius > 0.0 && radius.is_finite()) => {
                return Err(ConfigError::new("domain.radius", "must be positive"));
            }
            _ => {}
        }
        let params = self.params.params()?;
        let solve = self.solve_options(spec.h)?;
        solve
            .validate(1e-8)
            .map_err(|e| ConfigError::new("solve", e.to_string()))?;
        if let BoundaryConfig::Preset(BoundaryPreset::PerturbedPlane { amplitude }) = &self.boundary {
            if !amplitude.is_finite() {
                return Err(ConfigError::new("boundary.preset.amplitude", "must be finite"));
            }
        }
        self.validate_diagnostics()?;
        if let Some(l) = &self.linearized {
            for (p, v) in [("lambda_h", l.lambda_h), ("lambda_w", l.lambda_w)] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(ConfigError::new(format!("linearized.{p}"), "must be positive"));
                }
            }
            if l.spacings.iter().any(|&h| !(h > 0.0 && h < 1.0)) {
                return Err(ConfigError::new("linearized.spacings", "entries must lie in (0, 1)"));
            }
            if !(l.options.tol > 0.0) || l.options.max_sweeps == 0 {
                return Err(ConfigError::new("linearized.options", "tol and max_sweeps must be positive"));
            }
        }
        Ok(Resolved { spec, params, solve })
    }

    fn solve_options(&self, h: f64) -> CResult<SolveOptions> {
        let mut base = serde_json::to_value(SolveOptions::for_spacing(h)).expect("serializable");
        match &self.solve {
            None => {}
            Some(Value::Object(over)) => {
                let obj = base.as_object_mut().expect("object");
                for (k, v) in over {
                    obj.insert(k.clone(), v.clone());
                }
            }
            Some(_) => return Err(ConfigError::new("solve", "must be an object")),
        }
        serde_path_to_error::deserialize(base).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { "solve".to_string() } else { format!("solve.{path}") };
            ConfigError::new(path, e.into_inner().to_string())
        })
    }

    /// The config with every default made explicit.
    pub fn resolved(&self, r: &Resolved) -> Self {
        let mut out = self.clone();
        out.solve = Some(serde_json::to_value(&r.solve).expect("serializable"));
        out
    }

    fn validate_diagnostics(&self) -> CResult<()> {
        if let Some(i) = self.diagnostics.required.iter().position(|n| !CHECK_NAMES.contains(&n.as_str())) {
            return Err(ConfigError::new(
                format!("diagnostics.required[{i}]"),
                format!("unknown check `{}`; expected one of {}", self.diagnostics.required[i], CHECK_NAMES.join(", ")),
            ));
        }
        self.diagnostics
            .validate()
            .map_err(|e| ConfigError::new("diagnostics", e.to_string()))
    }
}

/// Applies `key.path=value`; the value is parsed as JSON, else taken as a string.
pub fn apply_set(root: &mut Value, assignment: &str) -> CResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::new("", format!("--set expects KEY=VALUE, got `{assignment}`")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::new("", "--set with empty key"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = root;
    for (n, part) in parts.iter().enumerate() {
        let here = parts[..=n].join(".");
        if !cur.is_object() {
            if cur.is_null() {
                *cur = Value::Object(Default::default());
            } else {
                return Err(ConfigError::new(here, "cannot set a field inside a non-object value"));
            }
        }
        let obj = cur.as_object_mut().expect("object");
        if n + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!()
}

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub json: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "plane",
        description: "plane pair, Λ_u=0.7, disk R=1, h=1/64",
        json: r#"{"grid":{"h":0.015625,"half_width":1.0},"domain":{"kind":"disk","radius":1.0},
"params":{"lambda_u":0.7,"lambda_v":0.3},"boundary":{"preset":{"name":"plane"}}}"#,
    },
    Preset {
        name: "one_phase",
        description: "u = √Λ_u y⁺, v ≡ 0 data, disk R=1, h=1/64",
        json: r#"{"grid":{"h":0.015625,"half_width":1.0},"domain":{"kind":"disk","radius":1.0},
"params":{"lambda_u":0.7,"lambda_v":0.3},"boundary":{"preset":{"name":"one_phase"}},
"diagnostics":{"required":["one_phase","nondegeneracy"]}}"#,
    },
    Preset {
        name: "perturbed_plane",
        description: "proportional data ψ⁺ with ψ = y + 0.2 (x² − y²), disk R=1, h=1/128",
        json: r#"{"grid":{"h":0.0078125,"half_width":1.0},"domain":{"kind":"disk","radius":1.0},
"params":{"lambda_u":0.7,"lambda_v":0.3},"boundary":{"preset":{"name":"perturbed_plane","amplitude":0.2}},
"diagnostics":{"required":["proportionality","nondegeneracy","flatness_decay","normal_drift","monotonicity"]}}"#,
    },
    Preset {
        name: "zero",
        description: "zero data; every boundary check is vacuous",
        json: r#"{"grid":{"h":0.03125,"half_width":1.0},"domain":{"kind":"disk","radius":1.0},
"params":{"lambda_u":0.7,"lambda_v":0.3},"boundary":{"preset":{"name":"zero"}}}"#,
    },
    Preset {
        name: "planted_1",
        description: "planted 1-homogeneous frequency profile, h=1/128",
        json: r#"{"grid":{"h":0.0078125,"half_width":1.0},"domain":{"kind":"disk","radius":1.0},
"params":{"lambda_u":0.7,"lambda_v":0.3},"boundary":{"preset":{"name":"zero"}},
"diagnostics":{"required":["frequency_calibration"],"frequency":{"planted":{"lambda":1.0,"amplitude":5.641895835477563}}}}"#,
    },
    Preset {
        name: "planted_1_5",
        description: "planted 3/2-homogeneous frequency profile, h=1/128",
        json: r#"{"grid":{"h":0.0078125,"half_width":1.0},"domain":{"kind":"disk","radius":1.0},
"params":{"lambda_u":0.7,"lambda_v":0.3},"boundary":{"preset":{"name":"zero"}},
"diagnostics":{"required":["frequency_calibration","frequency_lower_bound"],"frequency":{"planted":{"lambda":1.5,"amplitude":5.641895835477563}}}}"#,
    },
    Preset {
        name: "planted_2",
        description: "planted 2-homogeneous frequency profile, h=1/128",
        json: r#"{"grid":{"h":0.0078125,"half_width":1.0},"domain":{"kind":"disk","radius":1.0},
"params":{"lambda_u":0.7,"lambda_v":0.3},"boundary":{"preset":{"name":"zero"}},
"diagnostics":{"required":["frequency_calibration","frequency_lower_bound"],"frequency":{"planted":{"lambda":2.0,"amplitude":5.641895835477563}}}}"#,
    },
    Preset {
        name: "signorini",
        description: "two-membrane problem with Signorini reference data, h ∈ {1/32, 1/64, 1/128}",
        json: r#"{"grid":{"h":0.0078125,"half_width":1.0},"domain":{"kind":"half_disk","radius":1.0},
"params":{"lambda_u":0.7,"lambda_v":0.3},"boundary":{"preset":{"name":"zero"}},
"linearized":{"preset":"signorini","lambda_h":0.7,"lambda_w":0.3,"spacings":[0.03125,0.015625,0.0078125]}}"#,
    },
    Preset {
        name: "two_membrane_separated",
        description: "two-membrane problem with h ≡ 1, w ≡ 0 data",
        json: r#"{"grid":{"h":0.015625,"half_width":1.0},"domain":{"kind":"half_disk","radius":1.0},
"params":{"lambda_u":0.7,"lambda_v":0.3},"boundary":{"preset":{"name":"zero"}},
"linearized":{"preset":"separated","lambda_h":0.5,"lambda_w":0.5}}"#,
    },
    Preset {
        name: "transmission_symmetric",
        description: "transmission problem with equal data x² − y²",
        json: r#"{"grid":{"h":0.015625,"half_width":1.0},"domain":{"kind":"half_disk","radius":1.0},
"params":{"lambda_u":0.7,"lambda_v":0.3},"boundary":{"preset":{"name":"zero"}},
"linearized":{"preset":"transmission_symmetric","lambda_h":0.7,"lambda_w":0.3}}"#,
    },
    Preset {
        name: "transmission_mixed",
        description: "transmission problem with smooth mixed data, refinement h ∈ {1/16, 1/32, 1/64}",
        json: r#"{"grid":{"h":0.015625,"half_width":1.0},"domain":{"kind":"half_disk","radius":1.0},
"params":{"lambda_u":0.7,"lambda_v":0.3},"boundary":{"preset":{"name":"zero"}},
"linearized":{"preset":"transmission_mixed","lambda_h":0.7,"lambda_w":0.3,"spacings":[0.0625,0.03125,0.015625]}}"#,
    },
];

pub fn preset(name: &str) -> CResult<Value> {
    let p = PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
            ConfigError::new("", format!("unknown preset `{name}`; known: {}", names.join(", ")))
        })?;
    Ok(serde_json::from_str(p.json).expect("embedded preset is valid JSON"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for p in PRESETS {
            let cfg = RunConfig::from_value(preset(p.name).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.name));
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", p.name));
        }
    }

    #[test]
    fn lambda_sum_error_names_field() {
        let mut v = preset("plane").unwrap();
        apply_set(&mut v, "params.lambda_u=0.9").unwrap();
        let e = RunConfig::from_value(v).unwrap().validate().unwrap_err();
        assert_eq!(e.path, "params.lambda_u");
    }

    #[test]
    fn unknown_keys_rejected_with_path() {
        let mut v = preset("plane").unwrap();
        apply_set(&mut v, "params.lambda_x=0.1").unwrap();
        let e = RunConfig::from_value(v).unwrap_err();
        assert!(e.path.starts_with("params"), "{e}");
        assert!(e.message.contains("lambda_x"), "{e}");
        let mut v = preset("plane").unwrap();
        apply_set(&mut v, "diagnostics.frequency.sigmaa=0.1").unwrap();
        let e = RunConfig::from_value(v).unwrap_err();
        assert!(e.path.starts_with("diagnostics.frequency"), "{e}");
    }

    #[test]
    fn set_parses_json_and_creates_objects() {
        let mut v = serde_json::json!({});
        apply_set(&mut v, "a.b.c=3").unwrap();
        apply_set(&mut v, "a.s=hello").unwrap();
        apply_set(&mut v, "a.l=[1,2]").unwrap();
        assert_eq!(v, serde_json::json!({"a": {"b": {"c": 3}, "s": "hello", "l": [1, 2]}}));
        assert!(apply_set(&mut v, "a.b.c.d=1").is_err());
        assert!(apply_set(&mut v, "novalue").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::from_value(preset("perturbed_plane").unwrap()).unwrap();
        let back = RunConfig::from_value(serde_json::to_value(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_required_check_rejected() {
        let mut v = preset("plane").unwrap();
        apply_set(&mut v, r#"diagnostics.required=["bogus"]"#).unwrap();
        let e = RunConfig::from_value(v).unwrap().validate().unwrap_err();
        assert_eq!(e.path, "diagnostics.required[0]");
    }
}
