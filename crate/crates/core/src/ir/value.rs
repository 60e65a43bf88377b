//! Constant values and their kinds.
//!
//! Floats keep their IEEE-754 bit pattern: two floats are the same value
//! only when their bits are identical, so `-0.0` and `0.0` are distinct
//! facts and a NaN equals itself.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

/// Attribute kind of a relation column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Number,
    Unsigned,
    Float,
    Symbol,
}

impl ValueKind {
    pub const ALL: [ValueKind; 4] = [ValueKind::Number, ValueKind::Unsigned, ValueKind::Float, ValueKind::Symbol];

    pub fn is_numeric(self) -> bool {
        !matches!(self, ValueKind::Symbol)
    }

    pub fn name(self) -> &'static str {
        match self {
            ValueKind::Number => "number",
            ValueKind::Unsigned => "unsigned",
            ValueKind::Float => "float",
            ValueKind::Symbol => "symbol",
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A constant appearing in a fact or a rule.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Number(i64),
    Unsigned(u64),
    Float(#[serde(with = "float_repr")] f64),
    Symbol(String),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Number(_) => ValueKind::Number,
            Value::Unsigned(_) => ValueKind::Unsigned,
            Value::Float(_) => ValueKind::Float,
            Value::Symbol(_) => ValueKind::Symbol,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Number(_) => 0,
            Value::Unsigned(_) => 1,
            Value::Float(_) => 2,
            Value::Symbol(_) => 3,
        }
    }

    /// Symbols may not carry characters that delimit fact files.
    pub fn is_well_formed(&self) -> bool {
        match self {
            Value::Symbol(s) => !s.contains(['\t', '\n', '\0']),
            _ => true,
        }
    }

    /// Text used in tab-separated fact files. Floats use the shortest
    /// representation that round-trips, so negative zero prints as `-0`.
    pub fn to_fact_token(&self) -> String {
        match self {
            Value::Number(v) => v.to_string(),
            Value::Unsigned(v) => v.to_string(),
            Value::Float(v) => v.to_string(),
            Value::Symbol(s) => s.clone(),
        }
    }

    /// Parse a fact-file token according to the column kind.
    pub fn parse_token(token: &str, kind: ValueKind) -> Option<Value> {
        let t = token.trim_end_matches('\r');
        match kind {
            ValueKind::Number => t.trim().parse().ok().map(Value::Number),
            ValueKind::Unsigned => t.trim().parse().ok().map(Value::Unsigned),
            ValueKind::Float => parse_float(t.trim()).map(Value::Float),
            ValueKind::Symbol => Some(Value::Symbol(t.to_string())),
        }
    }
}

fn parse_float(t: &str) -> Option<f64> {
    match t.to_ascii_lowercase().as_str() {
        "nan" | "+nan" => Some(f64::NAN),
        "-nan" => Some(-f64::NAN),
        "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        _ => t.parse().ok(),
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Number(v) => v.hash(state),
            Value::Unsigned(v) => v.hash(state),
            Value::Float(v) => v.to_bits().hash(state),
            Value::Symbol(s) => s.hash(state),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    // Kind first, then value. `total_cmp` orders floats consistently with
    // bitwise identity.
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Number(a), Value::Number(b)) => a.cmp(b),
            (Value::Unsigned(a), Value::Unsigned(b)) => a.cmp(b),
            (Value::Float(a), Value::Float(b)) => a.total_cmp(b),
            (Value::Symbol(a), Value::Symbol(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(v) => write!(f, "{v}"),
            Value::Unsigned(v) => write!(f, "{v}u"),
            Value::Float(v) => write!(f, "{}", float_literal(*v)),
            Value::Symbol(s) => write!(f, "\"{}\"", s.escape_default()),
        }
    }
}

/// Float literal for program text: always carries a decimal point so that
/// dialects do not read it back as an integer.
pub fn float_literal(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:?}")
    }
}

/// A tuple of constants; the row of a relation.
pub type Tuple = Vec<Value>;

mod float_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    // NaN payloads are kept as raw bits so reports replay exactly.
    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_str(&format!("nan:0x{:016x}", v.to_bits()))
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let text = String::deserialize(d)?;
        if let Some(bits) = text.strip_prefix("nan:0x") {
            return u64::from_str_radix(bits, 16).map(f64::from_bits).map_err(serde::de::Error::custom);
        }
        super::parse_float(&text).ok_or_else(|| serde::de::Error::custom(format!("bad float literal `{text}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn negative_zero_is_a_distinct_fact() {
        assert_ne!(Value::Float(-0.0), Value::Float(0.0));
        let set: BTreeSet<_> = [Value::Float(-0.0), Value::Float(0.0)].into_iter().collect();
        assert_eq!(set.len(), 2);
    }

    #[test]
    fn nan_equals_itself_bitwise() {
        let nan = f64::from_bits(0x7ff8_0000_0000_0001);
        assert_eq!(Value::Float(nan), Value::Float(nan));
        assert_ne!(Value::Float(nan), Value::Float(f64::NAN));
    }

    #[test]
    fn fact_tokens_keep_sign_of_zero() {
        assert_eq!(Value::Float(-0.0).to_fact_token(), "-0");
        let parsed = Value::parse_token("-0", ValueKind::Float).unwrap();
        assert_eq!(parsed, Value::Float(-0.0));
        assert_ne!(parsed, Value::Float(0.0));
    }

    #[test]
    fn float_serde_round_trip_is_bitwise() {
        for v in [-0.0, 0.0, 1.5, f64::from_bits(0xfff8_0000_0000_0000), f64::INFINITY] {
            let json = serde_json::to_string(&Value::Float(v)).unwrap();
            let back: Value = serde_json::from_str(&json).unwrap();
            assert_eq!(back, Value::Float(v), "{json}");
        }
    }

    #[test]
    fn symbols_reject_delimiters() {
        assert!(Value::Symbol("ab".into()).is_well_formed());
        assert!(!Value::Symbol("a\tb".into()).is_well_formed());
        assert!(!Value::Symbol("a\nb".into()).is_well_formed());
    }
}
