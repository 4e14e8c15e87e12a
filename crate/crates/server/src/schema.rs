//! Per-command argument schemas. Every command's arguments are checked
//! against its schema before the world is touched.

use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    Str,
    /// Inclusive integer range.
    Int(i64, i64),
    /// Inclusive range on a finite number.
    Num(f64, f64),
    /// Finite number strictly greater than the bound.
    Positive,
    /// Positive finite number, or null.
    PositiveOrNull,
    Bool,
    /// Three finite numbers.
    Triple,
    OneOf(&'static [&'static str]),
    IntList,
    StrList,
    Object,
}

#[derive(Debug, Clone, Copy)]
pub struct Arg {
    pub name: &'static str,
    pub kind: Kind,
    pub required: bool,
    pub doc: &'static str,
}

pub const fn req(name: &'static str, kind: Kind, doc: &'static str) -> Arg {
    Arg { name, kind, required: true, doc }
}

pub const fn opt(name: &'static str, kind: Kind, doc: &'static str) -> Arg {
    Arg { name, kind, required: false, doc }
}

fn finite(v: &Value) -> Option<f64> {
    v.as_f64().filter(|x| x.is_finite())
}

fn check(kind: Kind, v: &Value) -> Result<(), String> {
    let ok = match kind {
        Kind::Str => v.is_string(),
        Kind::Int(lo, hi) => v.as_i64().is_some_and(|x| (lo..=hi).contains(&x)),
        Kind::Num(lo, hi) => finite(v).is_some_and(|x| (lo..=hi).contains(&x)),
        Kind::Positive => finite(v).is_some_and(|x| x > 0.0),
        Kind::PositiveOrNull => v.is_null() || finite(v).is_some_and(|x| x > 0.0),
        Kind::Bool => v.is_boolean(),
        Kind::Triple => v.as_array().is_some_and(|a| a.len() == 3 && a.iter().all(|x| finite(x).is_some())),
        Kind::OneOf(options) => v.as_str().is_some_and(|s| options.contains(&s)),
        Kind::IntList => v.as_array().is_some_and(|a| a.iter().all(|x| x.as_u64().is_some_and(|n| n <= u32::MAX as u64))),
        Kind::StrList => v.as_array().is_some_and(|a| a.iter().all(Value::is_string)),
        Kind::Object => v.is_object(),
    };
    if ok {
        Ok(())
    } else {
        Err(match kind {
            Kind::OneOf(options) => format!("expected one of {options:?}"),
            Kind::Int(lo, hi) => format!("expected an integer in [{lo}, {hi}]"),
            Kind::Num(lo, hi) => format!("expected a number in [{lo}, {hi}]"),
            other => format!("expected {other:?}"),
        })
    }
}

pub fn validate(args: &[Arg], given: &Map<String, Value>) -> Result<(), String> {
    for key in given.keys() {
        if !args.iter().any(|a| a.name == key) {
            return Err(format!("unexpected argument {key:?}"));
        }
    }
    for a in args {
        match given.get(a.name) {
            None if a.required => return Err(format!("missing required argument {:?}", a.name)),
            None => {}
            Some(v) => check(a.kind, v).map_err(|e| format!("argument {:?}: {e}", a.name))?,
        }
    }
    Ok(())
}

/// JSON Schema document for an argument list.
pub fn json_schema(args: &[Arg]) -> Value {
    let mut props = Map::new();
    for a in args {
        let mut p = match a.kind {
            Kind::Str => json!({"type": "string"}),
            Kind::Int(lo, hi) => json!({"type": "integer", "minimum": lo, "maximum": hi}),
            Kind::Num(lo, hi) => json!({"type": "number", "minimum": lo, "maximum": hi}),
            Kind::Positive => json!({"type": "number", "exclusiveMinimum": 0}),
            Kind::PositiveOrNull => json!({"type": ["number", "null"], "exclusiveMinimum": 0}),
            Kind::Bool => json!({"type": "boolean"}),
            Kind::Triple => json!({"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}),
            Kind::OneOf(options) => json!({"type": "string", "enum": options}),
            Kind::IntList => json!({"type": "array", "items": {"type": "integer", "minimum": 0}}),
            Kind::StrList => json!({"type": "array", "items": {"type": "string"}}),
            Kind::Object => json!({"type": "object"}),
        };
        p["description"] = Value::String(a.doc.into());
        props.insert(a.name.into(), p);
    }
    let required: Vec<&str> = args.iter().filter(|a| a.required).map(|a| a.name).collect();
    json!({"type": "object", "properties": props, "required": required})
}
