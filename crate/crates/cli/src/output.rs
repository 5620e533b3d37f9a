//! Deterministic writers: every float is printed with 17 significant digits.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent + 1);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&fmt_f64(n.as_f64().unwrap_or(f64::NAN)));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(a) if a.is_empty() => out.push_str("[]"),
        Value::Array(a) => {
            // numeric arrays on one line
            if a.iter().all(|x| x.is_number()) {
                out.push('[');
                for (i, x) in a.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(x, indent, out);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                out.push_str(&pad);
                write_value(x, indent + 1, out);
                out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            out.push_str(&"  ".repeat(indent));
            out.push(']');
        }
        Value::Object(m) if m.is_empty() => out.push_str("{}"),
        Value::Object(m) => {
            out.push_str("{\n");
            for (i, (k, x)) in m.iter().enumerate() {
                out.push_str(&pad);
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_value(x, indent + 1, out);
                out.push_str(if i + 1 < m.len() { ",\n" } else { "\n" });
            }
            out.push_str(&"  ".repeat(indent));
            out.push('}');
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut s = String::new();
    write_value(&v, 0, &mut s);
    s.push('\n');
    Ok(s)
}

/// Output directory of one task; records every file written.
pub struct TaskDir {
    pub dir: PathBuf,
    pub files: Vec<String>,
}

impl TaskDir {
    pub fn create(root: &Path, task: &str) -> Result<Self> {
        let dir = root.join(task);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(TaskDir { dir, files: Vec::new() })
    }

    fn put(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.put(name, &to_json(value)?)
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<Cell>>) -> Result<()> {
        let mut buf = Vec::new();
        writeln!(buf, "{}", header.join(","))?;
        for row in rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            writeln!(buf, "{}", cells.join(","))?;
        }
        self.put(name, &String::from_utf8(buf)?)
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<()> {
        self.put(name, body)
    }
}

pub enum Cell {
    F(f64),
    I(i64),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => fmt_f64(*x),
            Cell::I(i) => i.to_string(),
        }
    }
}

/// Bumped whenever an output file changes shape.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'a str,
    pub config_hash: &'a str,
    pub seed: u64,
    pub wall_time_s: f64,
    pub assertions_passed: bool,
    pub outputs: &'a [String],
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_text() {
        for x in [0.1, -2.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, 1.0 + f64::EPSILON] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(1.5), "1.5000000000000000e0");
    }

    #[test]
    fn json_keeps_integers_and_formats_floats() {
        let s = to_json(&serde_json::json!({"n": 3, "x": [0.5, 2.0], "ok": true})).unwrap();
        assert_eq!(s, "{\n  \"n\": 3,\n  \"ok\": true,\n  \"x\": [5.0000000000000000e-1, 2.0000000000000000e0]\n}\n");
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["x"][1].as_f64(), Some(2.0));
    }
}
