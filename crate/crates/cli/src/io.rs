use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value;

/// Reads a headerless comma-separated matrix, one sample per row.
pub fn read_matrix(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record =
            record.with_context(|| format!("{}: malformed row {}", path.display(), i + 1))?;
        if cols.is_some_and(|c| c != record.len()) {
            bail!(
                "{}: row {} has {} columns, expected {}",
                path.display(),
                i + 1,
                record.len(),
                cols.unwrap()
            );
        }
        cols = Some(record.len());
        for field in &record {
            let x: f64 = field.parse().with_context(|| {
                format!(
                    "{}: row {}: `{field}` is not a number",
                    path.display(),
                    i + 1
                )
            })?;
            values.push(x);
        }
        rows += 1;
    }
    match cols {
        Some(c) => Ok((rows, c, values)),
        None => bail!("{} is empty", path.display()),
    }
}

/// Reads one class index per line; blank lines are skipped.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().with_context(|| {
                format!(
                    "{}: line {}: `{}` is not a class index",
                    path.display(),
                    i + 1,
                    l.trim()
                )
            })
        })
        .collect()
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

/// Writes `bytes` to a temporary file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Rounds every float to 9 significant digits so reports are stable
/// across platforms and easy to diff.
pub fn round_floats(value: Value) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("checked f64");
            let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
            serde_json::Number::from_f64(rounded).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(round_floats).collect()),
        Value::Object(map) => {
            Value::Object(map.into_iter().map(|(k, v)| (k, round_floats(v))).collect())
        }
        other => other,
    }
}

pub fn to_rounded_json<T: Serialize>(value: &T) -> Result<Value> {
    Ok(round_floats(serde_json::to_value(value)?))
}

pub fn pretty(value: &Value) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut text = String::with_capacity(labels.len() * 3);
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

/// Provenance record written next to an output file.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub inputs: Vec<String>,
    pub config: Value,
    pub version: &'static str,
}

impl Manifest {
    pub fn new(command: &'static str, inputs: &[&Path], config: Value) -> Self {
        Self {
            command,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            config,
            version: env!("CARGO_PKG_VERSION"),
        }
    }

    /// Writes `<output>.manifest.json`.
    pub fn write_beside(&self, output: &Path) -> Result<()> {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        self.write_to(&PathBuf::from(name))
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        write_atomic(path, &pretty(&to_rounded_json(self)?)?)
    }
}
