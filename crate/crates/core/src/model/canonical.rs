//! Canonical JSON: UTF-8, object keys sorted lexicographically, reals in
//! shortest round-trip form, no insignificant whitespace.
//!
//! `serde_json::Value` keeps objects in a `BTreeMap` (the `preserve_order`
//! feature must stay off), so routing a value through it sorts every key.

use serde::Serialize;

pub fn to_value<T: Serialize + ?Sized>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("domain types serialize to JSON")
}

pub fn to_string<T: Serialize + ?Sized>(value: &T) -> String {
    to_value(value).to_string()
}
