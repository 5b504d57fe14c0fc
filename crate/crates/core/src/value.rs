//! Scalar values and their ordering.
//!
//! Every non-null type has a total order: integers and floats compare
//! numerically (floats with NaN greater than everything, including +inf),
//! strings byte-wise, and `false < true`. `Null` never participates in
//! ordering; callers handle it explicitly.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column / expression data types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Int64,
    Float64,
    Utf8,
    Bool,
    /// Type of an untyped `NULL` literal; compatible with every other type.
    Null,
}

impl DataType {
    pub fn is_numeric(self) -> bool {
        matches!(self, DataType::Int64 | DataType::Float64)
    }

    /// Whether values of the two types may be compared with each other.
    pub fn comparable_with(self, other: DataType) -> bool {
        self == DataType::Null
            || other == DataType::Null
            || self == other
            || (self.is_numeric() && other.is_numeric())
    }

    pub fn parse(name: &str) -> Option<DataType> {
        match name.to_ascii_lowercase().as_str() {
            "int64" | "int" | "integer" | "bigint" => Some(DataType::Int64),
            "float64" | "float" | "double" => Some(DataType::Float64),
            "utf8" | "string" | "varchar" | "text" => Some(DataType::Utf8),
            "bool" | "boolean" => Some(DataType::Bool),
            _ => None,
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DataType::Int64 => "int64",
            DataType::Float64 => "float64",
            DataType::Utf8 => "utf8",
            DataType::Bool => "bool",
            DataType::Null => "null",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn data_type(&self) -> DataType {
        match self {
            Value::Null => DataType::Null,
            Value::Bool(_) => DataType::Bool,
            Value::Int(_) => DataType::Int64,
            Value::Float(_) => DataType::Float64,
            Value::Str(_) => DataType::Utf8,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Compares two non-null values of comparable types.
    ///
    /// Fails on `Null` operands and on cross-family comparisons (e.g. string
    /// vs integer). Int/float comparisons are exact, without rounding the
    /// integer through `f64`.
    pub fn try_cmp(&self, other: &Value) -> Result<Ordering> {
        use Value::*;
        match (self, other) {
            (Int(a), Int(b)) => Ok(a.cmp(b)),
            (Float(a), Float(b)) => Ok(cmp_f64(*a, *b)),
            (Int(a), Float(b)) => Ok(cmp_i64_f64(*a, *b)),
            (Float(a), Int(b)) => Ok(cmp_i64_f64(*b, *a).reverse()),
            (Str(a), Str(b)) => Ok(a.as_bytes().cmp(b.as_bytes())),
            (Bool(a), Bool(b)) => Ok(a.cmp(b)),
            _ => Err(Error::Type(format!(
                "cannot compare {} with {}",
                self.data_type(),
                other.data_type()
            ))),
        }
    }

    /// Total order used for sorting and deduplication: `Null` first, then
    /// bools, numbers, strings. Within a type family this agrees with
    /// [`Value::try_cmp`].
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        fn rank(v: &Value) -> u8 {
            match v {
                Value::Null => 0,
                Value::Bool(_) => 1,
                Value::Int(_) | Value::Float(_) => 2,
                Value::Str(_) => 3,
            }
        }
        match rank(self).cmp(&rank(other)) {
            Ordering::Equal if rank(self) == 0 => Ordering::Equal,
            Ordering::Equal => self.try_cmp(other).unwrap_or(Ordering::Equal),
            o => o,
        }
    }

    /// Smaller of two comparable values.
    pub fn min_of<'a>(&'a self, other: &'a Value) -> &'a Value {
        if self.total_cmp(other) == Ordering::Greater {
            other
        } else {
            self
        }
    }

    pub fn max_of<'a>(&'a self, other: &'a Value) -> &'a Value {
        if self.total_cmp(other) == Ordering::Less {
            other
        } else {
            self
        }
    }
}

/// Float order with every NaN greater than every other value. `-0.0 == 0.0`.
pub fn cmp_f64(a: f64, b: f64) -> Ordering {
    match (a.is_nan(), b.is_nan()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        (false, false) => a.partial_cmp(&b).expect("non-NaN floats are ordered"),
    }
}

fn cmp_i64_f64(i: i64, f: f64) -> Ordering {
    if f.is_nan() {
        return Ordering::Less;
    }
    // 2^63 is exactly representable; every i64 is below it.
    const TWO_63: f64 = 9_223_372_036_854_775_808.0;
    if f >= TWO_63 {
        return Ordering::Less;
    }
    if f < -TWO_63 {
        return Ordering::Greater;
    }
    let t = f.trunc();
    let ti = t as i64;
    match i.cmp(&ti) {
        Ordering::Equal => {
            let frac = f - t;
            if frac > 0.0 {
                Ordering::Less
            } else if frac < 0.0 {
                Ordering::Greater
            } else {
                Ordering::Equal
            }
        }
        o => o,
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.total_cmp(other) == Ordering::Equal && self.data_type_family() == other.data_type_family()
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_cmp(other)
    }
}

impl Value {
    fn data_type_family(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Bool(_) => 1,
            Value::Int(_) | Value::Float(_) => 2,
            Value::Str(_) => 3,
        }
    }
}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        // Equal values must hash equally, including Int(3) and Float(3.0).
        match self {
            Value::Null => 0u8.hash(state),
            Value::Bool(b) => {
                1u8.hash(state);
                b.hash(state)
            }
            Value::Int(i) => {
                2u8.hash(state);
                (*i as f64).to_bits().hash(state)
            }
            Value::Float(f) => {
                2u8.hash(state);
                let canon = if f.is_nan() {
                    f64::NAN
                } else if *f == 0.0 {
                    0.0
                } else {
                    *f
                };
                canon.to_bits().hash(state)
            }
            Value::Str(s) => {
                3u8.hash(state);
                s.hash(state)
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Bool(b) => write!(f, "{}", if *b { "TRUE" } else { "FALSE" }),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => {
                if x.is_finite() && x.fract() == 0.0 && x.abs() < 1e15 {
                    write!(f, "{x:.1}")
                } else {
                    write!(f, "{x}")
                }
            }
            Value::Str(s) => write!(f, "'{}'", s.replace('\'', "''")),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_string())
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_is_greatest() {
        assert_eq!(cmp_f64(f64::NAN, f64::INFINITY), Ordering::Greater);
        assert_eq!(cmp_f64(1.0, f64::NAN), Ordering::Less);
        assert_eq!(cmp_f64(-0.0, 0.0), Ordering::Equal);
    }

    #[test]
    fn int_float_exact() {
        let big = Value::Int(9_007_199_254_740_993); // 2^53 + 1
        let f = Value::Float(9_007_199_254_740_992.0);
        assert_eq!(big.try_cmp(&f).unwrap(), Ordering::Greater);
        assert_eq!(Value::Int(3).try_cmp(&Value::Float(3.5)).unwrap(), Ordering::Less);
        assert_eq!(Value::Int(-3).try_cmp(&Value::Float(-3.5)).unwrap(), Ordering::Greater);
        assert_eq!(Value::Int(i64::MAX).try_cmp(&Value::Float(f64::NAN)).unwrap(), Ordering::Less);
    }

    #[test]
    fn cross_type_is_error() {
        assert!(Value::Int(1).try_cmp(&Value::from("1")).is_err());
        assert!(Value::Null.try_cmp(&Value::Int(1)).is_err());
        assert!(Value::Bool(true).try_cmp(&Value::Int(1)).is_err());
    }

    #[test]
    fn strings_bytewise() {
        assert_eq!(Value::from("Alpine Goat").try_cmp(&Value::from("Alpine Ibex")).unwrap(), Ordering::Less);
        assert_eq!(Value::from("Z").try_cmp(&Value::from("a")).unwrap(), Ordering::Less);
    }

    #[test]
    fn equal_numbers_hash_equal() {
        use std::collections::hash_map::DefaultHasher;
        let h = |v: &Value| {
            let mut s = DefaultHasher::new();
            v.hash(&mut s);
            s.finish()
        };
        assert_eq!(Value::Int(3), Value::Float(3.0));
        assert_eq!(h(&Value::Int(3)), h(&Value::Float(3.0)));
        assert_eq!(h(&Value::Float(-0.0)), h(&Value::Float(0.0)));
    }
}
