//! Typed component parameters.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
    List(Vec<ParamValue>),
    Store(ParamStore),
}

impl ParamValue {
    pub fn type_name(&self) -> &'static str {
        match self {
            ParamValue::Bool(_) => "boolean",
            ParamValue::Int(_) => "integer",
            ParamValue::Float(_) => "float",
            ParamValue::Text(_) => "text",
            ParamValue::List(_) => "list",
            ParamValue::Store(_) => "store",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParamError {
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("parameter `{key}` is {found}, expected {expected}")]
    TypeMismatch {
        key: String,
        expected: &'static str,
        found: &'static str,
    },
}

/// Rust types a parameter can be read as.
///
/// Only integer to float widening is allowed; everything else must match.
pub trait ParamType: Sized {
    const NAME: &'static str;

    fn from_param(value: &ParamValue) -> Option<Self>;
}

impl ParamType for bool {
    const NAME: &'static str = "boolean";

    fn from_param(value: &ParamValue) -> Option<Self> {
        match value {
            ParamValue::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

impl ParamType for i64 {
    const NAME: &'static str = "integer";

    fn from_param(value: &ParamValue) -> Option<Self> {
        match value {
            ParamValue::Int(i) => Some(*i),
            _ => None,
        }
    }
}

impl ParamType for f64 {
    const NAME: &'static str = "float";

    fn from_param(value: &ParamValue) -> Option<Self> {
        match value {
            ParamValue::Float(f) => Some(*f),
            ParamValue::Int(i) => Some(*i as f64),
            _ => None,
        }
    }
}

impl ParamType for String {
    const NAME: &'static str = "text";

    fn from_param(value: &ParamValue) -> Option<Self> {
        match value {
            ParamValue::Text(s) => Some(s.clone()),
            _ => None,
        }
    }
}

impl ParamType for Vec<ParamValue> {
    const NAME: &'static str = "list";

    fn from_param(value: &ParamValue) -> Option<Self> {
        match value {
            ParamValue::List(items) => Some(items.clone()),
            _ => None,
        }
    }
}

impl ParamType for ParamStore {
    const NAME: &'static str = "store";

    fn from_param(value: &ParamValue) -> Option<Self> {
        match value {
            ParamValue::Store(store) => Some(store.clone()),
            _ => None,
        }
    }
}

/// Key/value parameters of one component, possibly nested.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, ParamValue>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, value: ParamValue) -> Option<ParamValue> {
        self.entries.insert(key.into(), value)
    }

    pub fn raw(&self, key: &str) -> Option<&ParamValue> {
        self.entries.get(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamValue)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn get<T: ParamType>(&self, key: &str) -> Result<T, ParamError> {
        self.get_with(key, None)
    }

    /// Like [`get`](Self::get) but returns `default` when the key is absent.
    /// A present value of the wrong type is still an error.
    pub fn get_or<T: ParamType>(&self, key: &str, default: T) -> Result<T, ParamError> {
        self.get_with(key, Some(default))
    }

    pub fn get_with<T: ParamType>(&self, key: &str, default: Option<T>) -> Result<T, ParamError> {
        match self.entries.get(key) {
            Some(value) => T::from_param(value).ok_or_else(|| ParamError::TypeMismatch {
                key: key.to_string(),
                expected: T::NAME,
                found: value.type_name(),
            }),
            None => default.ok_or_else(|| ParamError::MissingParam(key.to_string())),
        }
    }

    /// Copies every entry of `other` into `self`, replacing existing keys.
    pub fn merge(&mut self, other: &ParamStore) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }
}

impl FromIterator<(String, ParamValue)> for ParamStore {
    fn from_iter<I: IntoIterator<Item = (String, ParamValue)>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}
