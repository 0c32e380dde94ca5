use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Version string embedded in every artifact.
pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::InvalidInput(format!("format must be csv or json, got `{s}`"))),
        }
    }
}

/// A record type with a fixed CSV layout.
pub trait Tabular: Sized {
    /// Column names. Receives the records so variable-width rows can size
    /// their header.
    fn header(records: &[Self]) -> Vec<String>;
    fn row(&self) -> Vec<String>;
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn config_with_version(config: &impl Serialize) -> Result<Value> {
    let mut value = serde_json::to_value(config)?;
    match &mut value {
        Value::Object(map) => {
            map.insert("version".into(), Value::String(VERSION.into()));
        }
        other => {
            let inner = std::mem::take(other);
            *other = serde_json::json!({ "version": VERSION, "value": inner });
        }
    }
    Ok(value)
}

/// Path of the config sidecar written next to a CSV artifact.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// Writes `records` to `path`.
///
/// CSV: header plus one row per record, with the resolved config and version
/// in a `<path>.meta.json` sidecar. JSON: `{config, records}` with the version
/// inside `config`.
pub fn emit_results<R: Tabular + Serialize>(records: &[R], config: &impl Serialize, path: &Path, format: Format) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let config = config_with_version(config)?;
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(R::header(records))?;
            for r in records {
                w.write_record(r.row())?;
            }
            let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
            fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
            let meta = serde_json::to_string_pretty(&serde_json::json!({ "config": config }))? + "\n";
            let side = sidecar_path(path);
            fs::write(&side, meta).map_err(|e| Error::io(side, e))?;
        }
        Format::Json => {
            let doc = serde_json::json!({ "config": config, "records": records });
            fs::write(path, serde_json::to_string_pretty(&doc)? + "\n").map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

/// Reads back a JSON artifact written by [`emit_results`].
pub fn read_json_records<R: DeserializeOwned>(path: &Path) -> Result<(Value, Vec<R>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    #[derive(Deserialize)]
    struct Doc<R> {
        config: Value,
        records: Vec<R>,
    }
    let doc: Doc<R> = serde_json::from_str(&text)?;
    Ok((doc.config, doc.records))
}

/// Reads back the string cells of a CSV artifact (header excluded).
pub fn read_csv_records(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.map(|r| r.iter().map(String::from).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}
