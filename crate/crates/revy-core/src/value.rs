//! Runtime values for the concrete interpreter and assertion evaluator.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Addresses are opaque identities; modelled as integers with distinctness.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct Address(pub u64);

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}", self.0)
    }
}

/// Resource amounts: non-negative integers (unbounded in the logic; i128
/// with checked arithmetic at desk scale).
pub type Amount = i128;

/// Finitely-supported total map; entries equal to the default are not stored,
/// so structural equality is extensional equality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValueMap {
    pub default: Box<Value>,
    pub entries: BTreeMap<Value, Value>,
}

// JSON objects key on strings; maps serialize as entry lists.
impl Serialize for ValueMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("ValueMap", 2)?;
        st.serialize_field("default", &self.default)?;
        let entries: Vec<(&Value, &Value)> = self.entries.iter().collect();
        st.serialize_field("entries", &entries)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for ValueMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            default: Box<Value>,
            entries: Vec<(Value, Value)>,
        }
        let raw = Raw::deserialize(d)?;
        Ok(ValueMap {
            default: raw.default,
            entries: raw.entries.into_iter().collect(),
        })
    }
}

impl ValueMap {
    pub fn new(default: Value) -> Self {
        ValueMap {
            default: Box::new(default),
            entries: BTreeMap::new(),
        }
    }

    pub fn get(&self, key: &Value) -> Value {
        self.entries.get(key).cloned().unwrap_or(*self.default.clone())
    }

    pub fn set(&mut self, key: Value, value: Value) {
        if value == *self.default {
            self.entries.remove(&key);
        } else {
            self.entries.insert(key, value);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    Int(i128),
    Bool(bool),
    Addr(Address),
    Map(ValueMap),
}

impl Value {
    pub fn as_int(&self) -> Option<i128> {
        match self {
            Value::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_addr(&self) -> Option<Address> {
        match self {
            Value::Addr(a) => Some(*a),
            _ => None,
        }
    }

    /// Default value of a type: 0 / false / the zero address / empty map.
    pub fn default_of(ty: &crate::ast::Type) -> Value {
        use crate::ast::Type;
        match ty {
            Type::Bool => Value::Bool(false),
            Type::Int | Type::Uint => Value::Int(0),
            Type::Address | Type::Interface(_) => Value::Addr(Address(0)),
            Type::Map(_, v) => Value::Map(ValueMap::new(Value::default_of(v))),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Addr(a) => write!(f, "{a}"),
            Value::Map(m) => {
                write!(f, "{{")?;
                for (i, (k, v)) in m.entries.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                write!(f, "; _: {}}}", m.default)
            }
        }
    }
}
