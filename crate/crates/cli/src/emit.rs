//! Result rendering. Everything is assembled into a byte buffer on the
//! calling thread before anything is written.

use serde_json::{Map, Value};

use qtoolkit::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(n) => n.to_string(),
            Cell::Num(x) => fmt_f64(*x),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(n) => Value::from(*n),
            Cell::Num(x) => Value::from(*x),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as i64)
    }
}

/// Shortest round-trip decimal, `.` separator, exponent for extreme values.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    /// Rows of numbers. `meta` carries tolerances and bounds.
    Table {
        header: Vec<String>,
        rows: Vec<Vec<Cell>>,
        meta: Map<String, Value>,
    },
    /// A JSON document, optionally with a one-line text rendering that is
    /// printed when no format is requested.
    Record { value: Value, text: Option<String> },
}

impl Output {
    pub fn table(header: &[&str], rows: Vec<Vec<Cell>>) -> Self {
        Output::Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows,
            meta: Map::new(),
        }
    }

    pub fn record(value: impl serde::Serialize) -> Result<Self> {
        Ok(Output::Record {
            value: to_value(value)?,
            text: None,
        })
    }

    pub fn with_meta(mut self, key: &str, value: impl serde::Serialize) -> Result<Self> {
        let v = to_value(value)?;
        match &mut self {
            Output::Table { meta, .. } => {
                meta.insert(key.into(), v);
            }
            Output::Record { value, .. } => {
                if let Value::Object(m) = value {
                    m.insert(key.into(), v);
                }
            }
        }
        Ok(self)
    }
}

pub fn to_value(x: impl serde::Serialize) -> Result<Value> {
    serde_json::to_value(x).map_err(|e| Error::Parse(e.to_string()))
}

/// serde_json maps non-finite floats to `null`; no command emits `null`
/// otherwise, so any `null` marks a NaN or infinity.
fn first_null(v: &Value, path: &mut String) -> bool {
    match v {
        Value::Null => true,
        Value::Array(xs) => xs.iter().enumerate().any(|(i, x)| {
            let len = path.len();
            path.push_str(&format!("[{i}]"));
            let hit = first_null(x, path);
            if !hit {
                path.truncate(len);
            }
            hit
        }),
        Value::Object(m) => m.iter().any(|(k, x)| {
            let len = path.len();
            path.push('.');
            path.push_str(k);
            let hit = first_null(x, path);
            if !hit {
                path.truncate(len);
            }
            hit
        }),
        _ => false,
    }
}

/// Location of the first non-finite value, if any.
pub fn non_finite(out: &Output) -> Option<String> {
    match out {
        Output::Table { header, rows, meta } => {
            for (i, row) in rows.iter().enumerate() {
                for (j, c) in row.iter().enumerate() {
                    if let Cell::Num(x) = c {
                        if !x.is_finite() {
                            return Some(format!("row {i}, column {}", header.get(j).map_or("?", |s| s)));
                        }
                    }
                }
            }
            let mut path = String::from("meta");
            first_null(&Value::Object(meta.clone()), &mut path).then_some(path)
        }
        Output::Record { value, .. } => {
            let mut path = String::from("$");
            first_null(value, &mut path).then_some(path)
        }
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Invalid(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Invalid(format!("csv: {e}"))
}

fn leaves(v: &Value, prefix: &str, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, x)| leaves(x, &key(k), out)),
        Value::Array(xs) => xs.iter().enumerate().for_each(|(i, x)| leaves(x, &key(&i.to_string()), out)),
        Value::Number(n) => out.push((prefix.into(), n.as_f64().map_or_else(|| n.to_string(), |x| {
            if n.is_f64() { fmt_f64(x) } else { n.to_string() }
        }))),
        Value::String(s) => out.push((prefix.into(), s.clone())),
        Value::Bool(b) => out.push((prefix.into(), b.to_string())),
        Value::Null => out.push((prefix.into(), String::new())),
    }
}

/// Rendered body plus an optional metadata line destined for stderr.
pub struct Rendered {
    pub body: Vec<u8>,
    pub side: Option<String>,
}

pub fn render(out: &Output, format: Option<Format>) -> Result<Rendered> {
    match (out, format) {
        (Output::Table { header, rows, meta }, Some(Format::Csv) | None) => {
            let mut w = csv_writer();
            w.write_record(header).map_err(csv_err)?;
            for row in rows {
                w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
            }
            let side = (!meta.is_empty()).then(|| {
                let mut m = Map::new();
                m.insert("meta".into(), Value::Object(meta.clone()));
                Value::Object(m).to_string()
            });
            Ok(Rendered { body: finish(w)?, side })
        }
        (Output::Table { header, rows, meta }, Some(Format::Json)) => {
            let mut m = meta.clone();
            m.insert("columns".into(), Value::from(header.clone()));
            let rows: Vec<Value> = rows.iter().map(|r| Value::from(r.iter().map(Cell::to_json).collect::<Vec<_>>())).collect();
            m.insert("rows".into(), Value::from(rows));
            Ok(json_body(&Value::Object(m)))
        }
        (Output::Record { text: Some(t), .. }, None) => Ok(Rendered {
            body: format!("{t}\n").into_bytes(),
            side: None,
        }),
        (Output::Record { value, .. }, Some(Format::Json) | None) => Ok(json_body(value)),
        (Output::Record { value, .. }, Some(Format::Csv)) => {
            let mut pairs = Vec::new();
            leaves(value, "", &mut pairs);
            let mut w = csv_writer();
            w.write_record(["key", "value"]).map_err(csv_err)?;
            for (k, v) in pairs {
                w.write_record([k, v]).map_err(csv_err)?;
            }
            Ok(Rendered { body: finish(w)?, side: None })
        }
    }
}

fn json_body(v: &Value) -> Rendered {
    Rendered {
        body: format!("{v}\n").into_bytes(),
        side: None,
    }
}
