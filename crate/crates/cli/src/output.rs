//! Output files: CSV and JSON with 17 significant digits, plus a manifest
//! recording the resolved config and the SHA-256 of every file written.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};

use crate::config::Settings;
use crate::CliError;

/// Float text that round-trips exactly. Non-finite values print as
/// `inf`, `-inf` and `NaN`.
pub fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// JSON number with 17 significant digits; non-finite values become `null`.
pub fn number(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    float(x).parse::<Number>().map(Value::Number).unwrap_or(Value::Null)
}

/// Rewrites every non-integer number in `v` with [`number`].
pub fn canonical(v: Value) -> Value {
    match v {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => n.as_f64().map(number).unwrap_or(Value::Null),
        Value::Array(items) => Value::Array(items.into_iter().map(canonical).collect()),
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, canonical(v))).collect()),
        other => other,
    }
}

/// Comma-separated table with a header row.
#[derive(Debug, Clone)]
pub struct Csv {
    text: String,
    width: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: format!("{}\n", header.join(",")),
            width: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.width);
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// Files produced by one command, keyed by name relative to the output
/// directory.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, contents: impl Into<Vec<u8>>) {
        self.files.push((name.into(), contents.into()));
    }

    pub fn add_json(&mut self, name: impl Into<String>, value: Value) {
        let mut text = serde_json::to_string_pretty(&canonical(value)).expect("JSON values serialize");
        text.push('\n');
        self.add(name, text);
    }

    /// Writes all files and `<name>.manifest.json`; returns the paths.
    pub fn write(
        self,
        dir: &Path,
        name: &str,
        command: &str,
        config: &Settings,
        started: &str,
    ) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let mut written = Vec::new();
        let mut hashes = Map::new();
        for (file, contents) in &self.files {
            let path = dir.join(file);
            std::fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            hashes.insert(file.clone(), Value::String(sha256_hex(contents)));
            written.push(path);
        }
        let seed = config.seed.map(Value::from).unwrap_or(Value::Null);
        let manifest = serde_json::json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config": config.to_json(),
            "seed": seed,
            "started": started,
            "finished": timestamp(),
            "outputs": Value::Object(hashes),
        });
        let path = dir.join(format!("{name}.manifest.json"));
        let mut text = serde_json::to_string_pretty(&manifest).expect("JSON values serialize");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        written.push(path);
        Ok(written)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 123456789.12345679, f64::MIN_POSITIVE, f64::MAX] {
            assert_eq!(float(x).parse::<f64>().unwrap(), x);
            let v = number(x);
            assert_eq!(v.as_f64().unwrap(), x);
            let text = serde_json::to_string(&v).unwrap();
            assert_eq!(text.parse::<f64>().unwrap(), x);
            let mantissa = text.split('e').next().unwrap();
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{text}");
        }
        assert_eq!(float(f64::INFINITY), "inf");
        assert_eq!(number(f64::NAN), Value::Null);
    }

    #[test]
    fn canonical_keeps_integers() {
        let v = canonical(serde_json::json!({"a": 3, "b": [0.5, -1], "c": "x"}));
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"{"a":3,"b":[5.0000000000000000e-1,-1],"c":"x"}"#);
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
