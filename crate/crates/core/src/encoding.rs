//! Canonical byte encoding used for every digest and signature.
//!
//! A value is a map of named fields. Fields are written in lexicographic
//! (byte-wise) order of their names, each as
//!
//! ```text
//! u32be(len(name)) ‖ name ‖ u32be(len(value)) ‖ value
//! ```
//!
//! Scalars render as follows: strings as UTF-8, integers as decimal ASCII
//! (leading `-` for negatives, no `+`, no leading zeros), byte strings raw.
//! A nested map is encoded recursively and the result is the value bytes.
//! A list is encoded as a nested map keyed by the zero-padded 8-digit
//! decimal index (`00000000`, `00000001`, ...). Absent optional fields are
//! omitted. The empty map encodes to the empty byte string.
//!
//! `docs/canonical-encoding.md` carries worked byte-level examples.

use std::collections::BTreeMap;

use serde_json::Value as Json;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("unsupported value for field `{field}`: {kind}")]
    UnsupportedValue { field: String, kind: &'static str },
    #[error("expected a JSON object of credential fields")]
    NotAMap,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("truncated input at offset {0}")]
    Truncated(usize),
    #[error("field names out of canonical order at `{0}`")]
    Unordered(String),
    #[error("field name is not UTF-8")]
    BadName,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Value {
    Int(i128),
    Str(String),
    Bytes(Vec<u8>),
    Map(Fields),
    List(Vec<Value>),
}

impl Value {
    pub fn is_scalar(&self) -> bool {
        matches!(self, Value::Int(_) | Value::Str(_) | Value::Bytes(_))
    }

    /// Rendered value bytes as they appear inside the encoding.
    pub fn encoded(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_value(&mut out);
        out
    }

    fn write_value(&self, out: &mut Vec<u8>) {
        match self {
            Value::Int(i) => out.extend_from_slice(i.to_string().as_bytes()),
            Value::Str(s) => out.extend_from_slice(s.as_bytes()),
            Value::Bytes(b) => out.extend_from_slice(b),
            Value::Map(m) => m.write(out),
            Value::List(items) => {
                let mut m = Fields::new();
                for (i, v) in items.iter().enumerate() {
                    m.insert(format!("{i:08}"), v.clone());
                }
                m.write(out);
            }
        }
    }

    /// Text form used by queries and repairs; matches the encoded bytes for scalars.
    pub fn render(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Str(s) => s.clone(),
            Value::Bytes(b) => hex::encode(b),
            Value::Map(_) | Value::List(_) => hex::encode(self.encoded()),
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i128> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_owned())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(s)
    }
}

impl From<u64> for Value {
    fn from(i: u64) -> Self {
        Value::Int(i as i128)
    }
}

impl From<u32> for Value {
    fn from(i: u32) -> Self {
        Value::Int(i as i128)
    }
}

impl From<u8> for Value {
    fn from(i: u8) -> Self {
        Value::Int(i as i128)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i as i128)
    }
}

impl From<Fields> for Value {
    fn from(m: Fields) -> Self {
        Value::Map(m)
    }
}

/// An encodable field map. Iteration order is the canonical order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Fields(BTreeMap<String, Value>);

impl Fields {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: impl Into<Value>) -> Self {
        self.insert(name, value);
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, value: impl Into<Value>) {
        self.0.insert(name.into(), value.into());
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Value> {
        self.0.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Value> {
        self.0.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write(&mut out);
        out
    }

    fn write(&self, out: &mut Vec<u8>) {
        for (name, value) in &self.0 {
            out.extend_from_slice(&(name.len() as u32).to_be_bytes());
            out.extend_from_slice(name.as_bytes());
            let v = value.encoded();
            out.extend_from_slice(&(v.len() as u32).to_be_bytes());
            out.extend_from_slice(&v);
        }
    }

    /// Builds a field map from a JSON object whose values are strings or integers.
    pub fn from_json_scalars(json: &Json) -> Result<Self, EncodeError> {
        let obj = json.as_object().ok_or(EncodeError::NotAMap)?;
        let mut out = Fields::new();
        for (k, v) in obj {
            let value = match v {
                Json::String(s) => Value::Str(s.clone()),
                Json::Number(n) => match n.as_i64().map(i128::from).or(n.as_u64().map(i128::from)) {
                    Some(i) => Value::Int(i),
                    None => return Err(unsupported(k, "non-integer number")),
                },
                Json::Null => return Err(unsupported(k, "null")),
                Json::Bool(_) => return Err(unsupported(k, "boolean")),
                Json::Array(_) => return Err(unsupported(k, "array")),
                Json::Object(_) => return Err(unsupported(k, "object")),
            };
            out.insert(k.clone(), value);
        }
        Ok(out)
    }

    /// Renders scalar fields back to JSON (integers as numbers, bytes as hex strings).
    pub fn to_json(&self) -> Json {
        let mut obj = serde_json::Map::new();
        for (k, v) in &self.0 {
            let j = match v {
                Value::Int(i) => i64::try_from(*i)
                    .map(Json::from)
                    .unwrap_or_else(|_| Json::String(i.to_string())),
                Value::Str(s) => Json::String(s.clone()),
                Value::Bytes(b) => Json::String(hex::encode(b)),
                Value::Map(m) => m.to_json(),
                Value::List(items) => Json::Array(
                    items
                        .iter()
                        .map(|i| match i {
                            Value::Map(m) => m.to_json(),
                            other => Json::String(other.render()),
                        })
                        .collect(),
                ),
            };
            obj.insert(k.clone(), j);
        }
        Json::Object(obj)
    }

    /// Splits an encoding back into (name, raw value bytes) pairs, checking canonical order.
    pub fn decode_raw(bytes: &[u8]) -> Result<Vec<(String, Vec<u8>)>, DecodeError> {
        let mut out: Vec<(String, Vec<u8>)> = Vec::new();
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8], DecodeError> {
            let end = pos.checked_add(n).ok_or(DecodeError::Truncated(*pos))?;
            let s = bytes.get(*pos..end).ok_or(DecodeError::Truncated(*pos))?;
            *pos = end;
            Ok(s)
        };
        while pos < bytes.len() {
            let nlen = u32::from_be_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(take(&mut pos, nlen)?)
                .map_err(|_| DecodeError::BadName)?
                .to_owned();
            let vlen = u32::from_be_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let value = take(&mut pos, vlen)?.to_vec();
            if let Some((prev, _)) = out.last() {
                if prev.as_bytes() >= name.as_bytes() {
                    return Err(DecodeError::Unordered(name));
                }
            }
            out.push((name, value));
        }
        Ok(out)
    }
}

fn unsupported(field: &str, kind: &'static str) -> EncodeError {
    EncodeError::UnsupportedValue {
        field: field.to_owned(),
        kind,
    }
}

impl FromIterator<(String, Value)> for Fields {
    fn from_iter<T: IntoIterator<Item = (String, Value)>>(iter: T) -> Self {
        Fields(iter.into_iter().collect())
    }
}

/// Types with a canonical field-map form.
pub trait Canonical {
    fn fields(&self) -> Fields;

    fn canonical_bytes(&self) -> Vec<u8> {
        self.fields().encode()
    }
}

pub fn canonical_encode<T: Canonical + ?Sized>(value: &T) -> Vec<u8> {
    value.canonical_bytes()
}

/// Canonical encoding of an externally supplied credential field map (JSON object of scalars).
pub fn canonical_encode_json(json: &Json) -> Result<Vec<u8>, EncodeError> {
    Ok(Fields::from_json_scalars(json)?.encode())
}
