//! Column types, runtime values and their fixed-width encoding.
//!
//! Every stored value is a `u64`: integers keep their two's-complement bits,
//! floats keep their IEEE bits (NaN rejected, `-0.0` folded to `0.0`) and
//! strings are interned into a process-wide dictionary.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, OnceLock};

use parking_lot::RwLock;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ty {
    Int,
    Float,
    Str,
}

impl Ty {
    pub fn name(self) -> &'static str {
        match self {
            Ty::Int => "Integer",
            Ty::Float => "Float",
            Ty::Str => "String",
        }
    }

    pub fn from_name(s: &str) -> Option<Ty> {
        match s {
            "Integer" | "Int" | "integer" => Some(Ty::Int),
            "Float" | "Double" | "float" => Some(Ty::Float),
            "String" | "string" => Some(Ty::Str),
            _ => None,
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, Ty::Int | Ty::Float)
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A decoded value. Equality and ordering are total: floats compare by
/// `total_cmp`, and values of different types order Int < Float < Str.
#[derive(Clone, Debug)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(Arc<str>),
}

impl Value {
    pub fn str(s: &str) -> Value {
        Value::Str(Arc::from(s))
    }

    pub fn ty(&self) -> Ty {
        match self {
            Value::Int(_) => Ty::Int,
            Value::Float(_) => Ty::Float,
            Value::Str(_) => Ty::Str,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(x) => Some(*x),
            Value::Str(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Int(_) => 0,
            Value::Float(_) => 1,
            Value::Str(_) => 2,
        }
    }
}

fn canon(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
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
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Float(a), Value::Float(b)) => canon(*a).total_cmp(&canon(*b)),
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Value::Int(i) => {
                0u8.hash(state);
                i.hash(state)
            }
            Value::Float(x) => {
                1u8.hash(state);
                canon(*x).to_bits().hash(state)
            }
            Value::Str(s) => {
                2u8.hash(state);
                s.hash(state)
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Str(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EncodeError {
    #[error("NaN is not a storable value")]
    NaN,
    #[error("expected {expected}, found {found}")]
    Mismatch { expected: Ty, found: Ty },
}

#[derive(Default)]
struct Interner {
    ids: HashMap<Arc<str>, u64>,
    names: Vec<Arc<str>>,
}

fn interner() -> &'static RwLock<Interner> {
    static INTERNER: OnceLock<RwLock<Interner>> = OnceLock::new();
    INTERNER.get_or_init(Default::default)
}

/// Returns the dictionary id of `s`, adding it on first sight.
pub fn intern(s: &str) -> u64 {
    if let Some(&id) = interner().read().ids.get(s) {
        return id;
    }
    let mut w = interner().write();
    if let Some(&id) = w.ids.get(s) {
        return id;
    }
    let id = w.names.len() as u64;
    let a: Arc<str> = Arc::from(s);
    w.names.push(a.clone());
    w.ids.insert(a, id);
    id
}

pub fn resolve(id: u64) -> Arc<str> {
    interner()
        .read()
        .names
        .get(id as usize)
        .cloned()
        .unwrap_or_else(|| Arc::from(format!("#{id}")))
}

/// Encodes `v` for a column of type `ty`. Integers widen into float columns.
pub fn encode(v: &Value, ty: Ty) -> Result<u64, EncodeError> {
    match (v, ty) {
        (Value::Int(i), Ty::Int) => Ok(*i as u64),
        (Value::Int(i), Ty::Float) => Ok(canon(*i as f64).to_bits()),
        (Value::Float(x), Ty::Float) => encode_f64(*x),
        (Value::Str(s), Ty::Str) => Ok(intern(s)),
        (v, ty) => Err(EncodeError::Mismatch {
            expected: ty,
            found: v.ty(),
        }),
    }
}

pub fn encode_f64(x: f64) -> Result<u64, EncodeError> {
    if x.is_nan() {
        Err(EncodeError::NaN)
    } else {
        Ok(canon(x).to_bits())
    }
}

pub fn decode(raw: u64, ty: Ty) -> Value {
    match ty {
        Ty::Int => Value::Int(raw as i64),
        Ty::Float => Value::Float(f64::from_bits(raw)),
        Ty::Str => Value::Str(resolve(raw)),
    }
}

/// Orders two encoded values of the same column type.
pub fn cmp_raw(a: u64, b: u64, ty: Ty) -> Ordering {
    match ty {
        Ty::Int => (a as i64).cmp(&(b as i64)),
        Ty::Float => f64::from_bits(a).total_cmp(&f64::from_bits(b)),
        Ty::Str => {
            if a == b {
                Ordering::Equal
            } else {
                resolve(a).cmp(&resolve(b))
            }
        }
    }
}

/// Parses a textual field for a column of type `ty` (used by fact loaders).
pub fn parse_field(text: &str, ty: Ty) -> Option<Value> {
    match ty {
        Ty::Int => text.trim().parse::<i64>().ok().map(Value::Int),
        Ty::Float => text
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|x| !x.is_nan())
            .map(Value::Float),
        Ty::Str => Some(Value::str(text)),
    }
}

/// Guesses the narrowest type of a field: Integer, then Float, then String.
pub fn guess_ty(text: &str) -> Ty {
    let t = text.trim();
    if t.parse::<i64>().is_ok() {
        Ty::Int
    } else if t.parse::<f64>().map(|x| !x.is_nan()).unwrap_or(false) {
        Ty::Float
    } else {
        Ty::Str
    }
}

/// Least upper bound of two column types under guessing.
pub fn join_ty(a: Ty, b: Ty) -> Ty {
    match (a, b) {
        (x, y) if x == y => x,
        (Ty::Int, Ty::Float) | (Ty::Float, Ty::Int) => Ty::Float,
        _ => Ty::Str,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_each_type() {
        for (v, ty) in [
            (Value::Int(-7), Ty::Int),
            (Value::Float(2.5), Ty::Float),
            (Value::str("overcast"), Ty::Str),
        ] {
            let raw = encode(&v, ty).unwrap();
            assert_eq!(decode(raw, ty), v);
        }
    }

    #[test]
    fn nan_rejected_and_negative_zero_folded() {
        assert_eq!(encode(&Value::Float(f64::NAN), Ty::Float), Err(EncodeError::NaN));
        assert_eq!(
            encode(&Value::Float(-0.0), Ty::Float).unwrap(),
            encode(&Value::Float(0.0), Ty::Float).unwrap()
        );
    }

    #[test]
    fn raw_order_matches_value_order() {
        assert_eq!(cmp_raw(encode(&Value::Int(-3), Ty::Int).unwrap(), 2, Ty::Int), Ordering::Less);
        let a = intern("apple");
        let b = intern("banana");
        assert_eq!(cmp_raw(b, a, Ty::Str), Ordering::Greater);
    }
}
