//! Result records and their JSONL / CSV rendering.

use serde::Serialize;
use serde_json::{Map, Value};

use crate::manifest::{ExperimentManifest, Format};

/// A flat result object: `op`, `digest`, `seed`, then the values.
#[derive(Clone, Debug, PartialEq)]
pub struct Record(pub Map<String, Value>);

impl Record {
    pub fn new(op: &str, m: &ExperimentManifest) -> Record {
        let mut map = Map::new();
        map.insert("op".into(), op.into());
        map.insert("digest".into(), m.digest().into());
        map.insert("seed".into(), m.seed.into());
        Record(map)
    }

    /// Inserts any serializable value; non-finite floats become `null`.
    pub fn with(mut self, key: &str, v: impl Serialize) -> Record {
        let v = serde_json::to_value(v).expect("record values serialize");
        self.0.insert(key.into(), finite(v));
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(key)
    }
}

fn finite(v: Value) -> Value {
    match v {
        Value::Number(ref n) if n.as_f64().is_some_and(|x| !x.is_finite()) => Value::Null,
        Value::Array(a) => Value::Array(a.into_iter().map(finite).collect()),
        other => other,
    }
}

pub fn manifest_line(m: &ExperimentManifest) -> String {
    let mut head = Map::new();
    head.insert("manifest".into(), serde_json::to_value(m).expect("manifest serializes"));
    serde_json::to_string(&head).expect("manifest serializes")
}

/// The body lines only; identical for identical `(seed, params)`.
pub fn render_body(records: &[Record], format: Format) -> String {
    match format {
        Format::Jsonl => {
            let mut out = String::new();
            for r in records {
                out.push_str(&serde_json::to_string(&r.0).expect("record serializes"));
                out.push('\n');
            }
            out
        }
        Format::Csv => render_csv(records),
    }
}

/// Manifest header followed by the body. CSV files carry the manifest as a
/// `#` comment line.
pub fn render(m: &ExperimentManifest, records: &[Record]) -> String {
    let head = manifest_line(m);
    match m.format {
        Format::Jsonl => format!("{head}\n{}", render_body(records, Format::Jsonl)),
        Format::Csv => format!("# {head}\n{}", render_body(records, Format::Csv)),
    }
}

fn csv_cell(v: Option<&Value>) -> String {
    let s = match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(Value::Array(a)) => a.iter().map(|x| csv_cell(Some(x))).collect::<Vec<_>>().join(";"),
        Some(other) => other.to_string(),
    };
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s
    }
}

/// Columns are the union of keys in first-seen order.
fn render_csv(records: &[Record]) -> String {
    let mut cols: Vec<&str> = Vec::new();
    for r in records {
        for k in r.0.keys() {
            if !cols.contains(&k.as_str()) {
                cols.push(k);
            }
        }
    }
    let mut out = cols.join(",");
    out.push('\n');
    for r in records {
        let row: Vec<String> = cols.iter().map(|c| csv_cell(r.0.get(*c))).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn manifest() -> ExperimentManifest {
        ExperimentManifest::build("oracle", BTreeMap::new(), Format::Jsonl, None, None).unwrap()
    }

    #[test]
    fn records_are_flat_and_finite() {
        let m = manifest();
        let r = Record::new("x", &m).with("a", 1.5).with("b", f64::NAN).with("c", [1.0, f64::INFINITY]);
        let line = render_body(&[r], Format::Jsonl);
        let v: Value = serde_json::from_str(line.trim()).unwrap();
        assert_eq!(v["a"], 1.5);
        assert!(v["b"].is_null());
        assert!(v["c"][1].is_null());
        assert_eq!(v["op"], "x");
    }

    #[test]
    fn csv_union_of_columns() {
        let m = manifest();
        let a = Record::new("a", &m).with("x", 1);
        let b = Record::new("b", &m).with("y", "p,q");
        let csv = render_body(&[a, b], Format::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "op,digest,seed,x,y");
        assert!(lines[1].ends_with(",1,"));
        assert!(lines[2].ends_with(",,\"p,q\""));
    }
}
