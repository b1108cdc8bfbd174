//! Shared helpers for the CLI tests: running the binary and checking JSON
//! output against the repo's schema file.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn toxfair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toxfair"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn load_schema() -> Value {
    let text = std::fs::read_to_string(repo_root().join("schema/report.schema.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Validates `doc` against the root schema. Supports the keyword subset the
/// schema file uses and rejects any other keyword, so the two stay in step.
pub fn validate(root: &Value, doc: &Value) -> Result<(), String> {
    check(root, root, doc, "$")
}

fn resolve<'a>(root: &'a Value, reference: &str) -> Result<&'a Value, String> {
    let name = reference.strip_prefix("#/$defs/").ok_or_else(|| format!("unsupported $ref {reference}"))?;
    root["$defs"].get(name).ok_or_else(|| format!("unknown $ref {reference}"))
}

fn type_matches(name: &str, v: &Value) -> bool {
    match name {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "number" => v.is_number(),
        "integer" => v.is_u64() || v.is_i64(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        _ => false,
    }
}

fn check(root: &Value, schema: &Value, v: &Value, at: &str) -> Result<(), String> {
    let rules = schema.as_object().ok_or_else(|| format!("{at}: schema is not an object"))?;
    for (key, rule) in rules {
        match key.as_str() {
            "$schema" | "$id" | "title" | "$defs" => {}
            "$ref" => check(root, resolve(root, rule.as_str().unwrap_or_default())?, v, at)?,
            "type" => {
                let ok = match rule {
                    Value::String(t) => type_matches(t, v),
                    Value::Array(ts) => ts.iter().any(|t| type_matches(t.as_str().unwrap_or_default(), v)),
                    _ => false,
                };
                if !ok {
                    return Err(format!("{at}: expected type {rule}, found {v}"));
                }
            }
            "const" if v != rule => return Err(format!("{at}: expected {rule}, found {v}")),
            "const" => {}
            "enum" => {
                if !rule.as_array().is_some_and(|opts| opts.contains(v)) {
                    return Err(format!("{at}: {v} not in {rule}"));
                }
            }
            "minimum" | "maximum" => {
                if let Some(x) = v.as_f64() {
                    let bound = rule.as_f64().unwrap_or_default();
                    if (key == "minimum" && x < bound) || (key == "maximum" && x > bound) {
                        return Err(format!("{at}: {x} violates {key} {bound}"));
                    }
                }
            }
            "minLength" | "maxLength" => {
                if let Some(s) = v.as_str() {
                    let n = s.chars().count() as u64;
                    let bound = rule.as_u64().unwrap_or_default();
                    if (key == "minLength" && n < bound) || (key == "maxLength" && n > bound) {
                        return Err(format!("{at}: length {n} violates {key} {bound}"));
                    }
                }
            }
            "minItems" | "maxItems" => {
                if let Some(a) = v.as_array() {
                    let bound = rule.as_u64().unwrap_or_default() as usize;
                    if (key == "minItems" && a.len() < bound) || (key == "maxItems" && a.len() > bound) {
                        return Err(format!("{at}: {} items violates {key} {bound}", a.len()));
                    }
                }
            }
            "required" => {
                if let Some(obj) = v.as_object() {
                    for name in rule.as_array().into_iter().flatten().filter_map(Value::as_str) {
                        if !obj.contains_key(name) {
                            return Err(format!("{at}: missing `{name}`"));
                        }
                    }
                }
            }
            "properties" => {
                if let Some(obj) = v.as_object() {
                    for (name, sub) in rule.as_object().into_iter().flatten() {
                        if let Some(field) = obj.get(name) {
                            check(root, sub, field, &format!("{at}.{name}"))?;
                        }
                    }
                }
            }
            "additionalProperties" => {
                if let Some(obj) = v.as_object() {
                    let known = rules.get("properties").and_then(Value::as_object);
                    for (name, field) in obj {
                        if known.is_some_and(|k| k.contains_key(name)) {
                            continue;
                        }
                        match rule {
                            Value::Bool(false) => return Err(format!("{at}: unexpected `{name}`")),
                            Value::Bool(true) => {}
                            sub => check(root, sub, field, &format!("{at}.{name}"))?,
                        }
                    }
                }
            }
            "items" => {
                if let Some(a) = v.as_array() {
                    for (i, item) in a.iter().enumerate() {
                        check(root, rule, item, &format!("{at}[{i}]"))?;
                    }
                }
            }
            "oneOf" => {
                let options = rule.as_array().ok_or_else(|| format!("{at}: oneOf is not an array"))?;
                let errors: Vec<String> =
                    options.iter().filter_map(|s| check(root, s, v, at).err()).collect();
                let passed = options.len() - errors.len();
                if passed != 1 {
                    return Err(format!("{at}: {passed} oneOf branches matched; {}", errors.join(" / ")));
                }
            }
            other => return Err(format!("{at}: validator does not support `{other}`")),
        }
    }
    Ok(())
}
