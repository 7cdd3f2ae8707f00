//! JSON component manifest.
//!
//! ```json
//! {"components": [
//!   {"name": "control", "enabled": true, "serve_period_ms": 10,
//!    "params": {"gain": 0.8}}
//! ]}
//! ```
//!
//! Unknown keys are rejected unless the manifest is loaded leniently.

use std::collections::HashSet;
use std::path::Path;
use std::time::Duration;

use fastcycle_core::{ParamStore, ParamValue};
use serde::Deserialize;
use serde_json::{Map, Number, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentDescriptor {
    pub name: String,
    pub params: ParamStore,
    pub enabled: bool,
    pub serve_period: Option<Duration>,
}

impl ComponentDescriptor {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            params: ParamStore::new(),
            enabled: true,
            serve_period: None,
        }
    }

    pub fn with_params(mut self, params: ParamStore) -> Self {
        self.params = params;
        self
    }

    pub fn with_serve_period(mut self, period: Duration) -> Self {
        self.serve_period = Some(period);
        self
    }

    /// Layers this descriptor's own params over `base`, typically the
    /// contents of a per-component configuration file.
    pub fn merged_over(mut self, base: &ParamStore) -> Self {
        let mut params = base.clone();
        params.merge(&self.params);
        self.params = params;
        self
    }
}

/// A loaded manifest. Disabled components are kept aside, not dropped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub active: Vec<ComponentDescriptor>,
    pub disabled: Vec<ComponentDescriptor>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ManifestOptions {
    /// Ignore unknown keys instead of failing.
    pub lenient: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("manifest parse error at line {line}, column {column}: {message}")]
    ParseError {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate component name `{0}`")]
    DuplicateComponentName(String),
    #[error("component #{index} is missing field `{field}`")]
    MissingField { index: usize, field: &'static str },
    #[error("component `{component}`: invalid `{field}`: {reason}")]
    InvalidValue {
        component: String,
        field: String,
        reason: String,
    },
    #[error("reading manifest: {0}")]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for ManifestError {
    fn from(err: serde_json::Error) -> Self {
        ManifestError::ParseError {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

fn default_enabled() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StrictManifest {
    components: Vec<StrictComponent>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StrictComponent {
    name: Option<String>,
    #[serde(default = "default_enabled")]
    enabled: bool,
    serve_period_ms: Option<f64>,
    #[serde(default)]
    params: Map<String, Value>,
}

#[derive(Deserialize)]
struct LenientManifest {
    components: Vec<LenientComponent>,
}

#[derive(Deserialize)]
struct LenientComponent {
    name: Option<String>,
    #[serde(default = "default_enabled")]
    enabled: bool,
    serve_period_ms: Option<f64>,
    #[serde(default)]
    params: Map<String, Value>,
}

struct RawComponent {
    name: Option<String>,
    enabled: bool,
    serve_period_ms: Option<f64>,
    params: Map<String, Value>,
}

pub fn load_manifest(text: &str) -> Result<Manifest, ManifestError> {
    load_manifest_with(text, ManifestOptions::default())
}

pub fn load_manifest_file(
    path: impl AsRef<Path>,
    options: ManifestOptions,
) -> Result<Manifest, ManifestError> {
    let text = std::fs::read_to_string(path)?;
    load_manifest_with(&text, options)
}

pub fn load_manifest_with(text: &str, options: ManifestOptions) -> Result<Manifest, ManifestError> {
    let raw: Vec<RawComponent> = if options.lenient {
        serde_json::from_str::<LenientManifest>(text)?
            .components
            .into_iter()
            .map(|c| RawComponent {
                name: c.name,
                enabled: c.enabled,
                serve_period_ms: c.serve_period_ms,
                params: c.params,
            })
            .collect()
    } else {
        serde_json::from_str::<StrictManifest>(text)?
            .components
            .into_iter()
            .map(|c| RawComponent {
                name: c.name,
                enabled: c.enabled,
                serve_period_ms: c.serve_period_ms,
                params: c.params,
            })
            .collect()
    };

    let mut seen = HashSet::new();
    let mut manifest = Manifest::default();
    for (index, component) in raw.into_iter().enumerate() {
        let name = match component.name {
            Some(name) if !name.is_empty() => name,
            _ => {
                return Err(ManifestError::MissingField {
                    index,
                    field: "name",
                })
            }
        };
        if !seen.insert(name.clone()) {
            return Err(ManifestError::DuplicateComponentName(name));
        }
        let serve_period = component
            .serve_period_ms
            .map(|ms| period_from_ms(&name, ms))
            .transpose()?;
        let params = params_from_json(&name, "params", component.params)?;
        let descriptor = ComponentDescriptor {
            name,
            params,
            enabled: component.enabled,
            serve_period,
        };
        if descriptor.enabled {
            manifest.active.push(descriptor);
        } else {
            manifest.disabled.push(descriptor);
        }
    }
    Ok(manifest)
}

/// Parses a per-component parameter document: a single JSON object.
pub fn load_component_params(component: &str, text: &str) -> Result<ParamStore, ManifestError> {
    let map: Map<String, Value> = serde_json::from_str(text)?;
    params_from_json(component, "params", map)
}

/// Serializes descriptors back into manifest JSON.
pub fn emit_manifest(descriptors: &[ComponentDescriptor]) -> String {
    let components: Vec<Value> = descriptors
        .iter()
        .map(|d| {
            let mut obj = Map::new();
            obj.insert("name".into(), Value::String(d.name.clone()));
            obj.insert("enabled".into(), Value::Bool(d.enabled));
            if let Some(period) = d.serve_period {
                obj.insert("serve_period_ms".into(), period_to_json(period));
            }
            obj.insert("params".into(), store_to_json(&d.params));
            Value::Object(obj)
        })
        .collect();
    let mut root = Map::new();
    root.insert("components".into(), Value::Array(components));
    serde_json::to_string_pretty(&Value::Object(root)).expect("manifest serializes")
}

fn period_from_ms(component: &str, ms: f64) -> Result<Duration, ManifestError> {
    if !(ms.is_finite() && ms > 0.0) {
        return Err(ManifestError::InvalidValue {
            component: component.into(),
            field: "serve_period_ms".into(),
            reason: format!("{ms} is not a positive period"),
        });
    }
    Ok(Duration::from_nanos((ms * 1e6).round() as u64))
}

fn period_to_json(period: Duration) -> Value {
    let ns = period.as_nanos();
    if ns.is_multiple_of(1_000_000) {
        Value::Number(Number::from((ns / 1_000_000) as u64))
    } else {
        Number::from_f64(ns as f64 / 1e6).map_or(Value::Null, Value::Number)
    }
}

fn params_from_json(
    component: &str,
    path: &str,
    map: Map<String, Value>,
) -> Result<ParamStore, ManifestError> {
    map.into_iter()
        .map(|(key, value)| {
            let field = format!("{path}.{key}");
            let value = param_from_json(component, &field, value)?;
            Ok((key, value))
        })
        .collect()
}

fn param_from_json(
    component: &str,
    field: &str,
    value: Value,
) -> Result<ParamValue, ManifestError> {
    Ok(match value {
        Value::Bool(b) => ParamValue::Bool(b),
        Value::Number(n) => match n.as_i64() {
            Some(i) => ParamValue::Int(i),
            None => ParamValue::Float(n.as_f64().unwrap_or(f64::NAN)),
        },
        Value::String(s) => ParamValue::Text(s),
        Value::Array(items) => ParamValue::List(
            items
                .into_iter()
                .enumerate()
                .map(|(i, v)| param_from_json(component, &format!("{field}[{i}]"), v))
                .collect::<Result<_, _>>()?,
        ),
        Value::Object(map) => ParamValue::Store(params_from_json(component, field, map)?),
        Value::Null => {
            return Err(ManifestError::InvalidValue {
                component: component.into(),
                field: field.into(),
                reason: "null is not a parameter value".into(),
            })
        }
    })
}

fn store_to_json(store: &ParamStore) -> Value {
    Value::Object(
        store
            .iter()
            .map(|(k, v)| (k.to_owned(), param_to_json(v)))
            .collect(),
    )
}

fn param_to_json(value: &ParamValue) -> Value {
    match value {
        ParamValue::Bool(b) => Value::Bool(*b),
        ParamValue::Int(i) => Value::Number(Number::from(*i)),
        ParamValue::Float(f) => Number::from_f64(*f).map_or(Value::Null, Value::Number),
        ParamValue::Text(s) => Value::String(s.clone()),
        ParamValue::List(items) => Value::Array(items.iter().map(param_to_json).collect()),
        ParamValue::Store(store) => store_to_json(store),
    }
}
