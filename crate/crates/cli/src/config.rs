//! Layered settings: flags (and `LAS_*` variables) over a config file over
//! built-in defaults.
//!
//! A config file is either flat `key = value` text or a JSON object. A run
//! manifest is also accepted, in which case its `config` object is used.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use las_core::Initializer;
use serde_json::{Map, Value};

use crate::CliError;

/// Which `verify` suite to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Lemma2,
    Theorem2,
    FixedPoint,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Lemma2 => "lemma2",
            Suite::Theorem2 => "theorem2",
            Suite::FixedPoint => "fixedpoint",
        })
    }
}

impl FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lemma2" => Ok(Suite::Lemma2),
            "theorem2" => Ok(Suite::Theorem2),
            "fixedpoint" => Ok(Suite::FixedPoint),
            other => Err(format!("unknown suite '{other}' (expected lemma2, theorem2 or fixedpoint)")),
        }
    }
}

/// Comma-separated list argument.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T> {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|item| item.trim().parse::<T>().map_err(|_| format!("bad list item '{}' in '{s}'", item.trim())))
            .collect::<Result<Vec<_>, _>>()
            .and_then(|v| if v.is_empty() { Err("empty list".into()) } else { Ok(List(v)) })
    }
}

/// Experiment settings; `None` means "not given at this layer".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub seed: Option<u64>,
    pub qam: Option<u32>,
    pub init: Option<Initializer>,
    pub ntx: Option<usize>,
    pub ntx_list: Option<Vec<usize>>,
    pub snr_grid: Option<Vec<f64>>,
    pub snr_db: Option<f64>,
    pub target_ber: Option<f64>,
    pub trials: Option<u64>,
    pub min_errors: Option<u64>,
    pub bins: Option<usize>,
    pub max_iters: Option<usize>,
    pub suite: Option<Suite>,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value '{value}' for '{key}'")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value.parse::<List<T>>().map(|l| l.0).map_err(|e| CliError::Usage(format!("{key}: {e}")))
}

impl Settings {
    /// Sets one field from its textual form. Keys may use `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim().replace('-', "_");
        match key.as_str() {
            "seed" => self.seed = Some(parse(&key, value)?),
            "qam" => self.qam = Some(parse(&key, value)?),
            "init" => self.init = Some(parse(&key, value)?),
            "ntx" => self.ntx = Some(parse(&key, value)?),
            "ntx_list" => self.ntx_list = Some(list(&key, value)?),
            "snr_grid" => self.snr_grid = Some(list(&key, value)?),
            "snr_db" => self.snr_db = Some(parse(&key, value)?),
            "target_ber" => self.target_ber = Some(parse(&key, value)?),
            "trials" => self.trials = Some(parse(&key, value)?),
            "min_errors" => self.min_errors = Some(parse(&key, value)?),
            "bins" => self.bins = Some(parse(&key, value)?),
            "max_iters" => self.max_iters = Some(parse(&key, value)?),
            "suite" => self.suite = Some(value.trim().parse().map_err(CliError::Usage)?),
            _ => return Err(CliError::Usage(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        if text.trim_start().starts_with('{') {
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
            Self::from_json(&value)
        } else {
            Self::from_flat(&text)
        }
    }

    pub fn from_flat(text: &str) -> Result<Self, CliError> {
        let mut s = Settings::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", n + 1)))?;
            s.set(k, v)?;
        }
        Ok(s)
    }

    pub fn from_json(value: &Value) -> Result<Self, CliError> {
        let obj = value
            .as_object()
            .ok_or_else(|| CliError::Usage("JSON config must be an object".into()))?;
        let obj = match obj.get("config") {
            Some(Value::Object(inner)) => inner,
            _ => obj,
        };
        let mut s = Settings::default();
        for (k, v) in obj {
            let text = match v {
                Value::Null => continue,
                Value::String(t) => t.clone(),
                Value::Array(items) => items.iter().map(scalar_text).collect::<Vec<_>>().join(","),
                other => scalar_text(other),
            };
            s.set(k, &text)?;
        }
        Ok(s)
    }

    /// Fields of `self`, falling back to `lower` where unset.
    pub fn over(self, lower: Settings) -> Settings {
        Settings {
            seed: self.seed.or(lower.seed),
            qam: self.qam.or(lower.qam),
            init: self.init.or(lower.init),
            ntx: self.ntx.or(lower.ntx),
            ntx_list: self.ntx_list.or(lower.ntx_list),
            snr_grid: self.snr_grid.or(lower.snr_grid),
            snr_db: self.snr_db.or(lower.snr_db),
            target_ber: self.target_ber.or(lower.target_ber),
            trials: self.trials.or(lower.trials),
            min_errors: self.min_errors.or(lower.min_errors),
            bins: self.bins.or(lower.bins),
            max_iters: self.max_iters.or(lower.max_iters),
            suite: self.suite.or(lower.suite),
        }
    }

    /// JSON form of the set fields, readable again by [`Settings::from_json`].
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        let mut put = |k: &str, v: Value| {
            m.insert(k.to_string(), v);
        };
        if let Some(v) = self.seed {
            put("seed", v.into());
        }
        if let Some(v) = self.qam {
            put("qam", v.into());
        }
        if let Some(v) = self.init {
            put("init", v.to_string().into());
        }
        if let Some(v) = self.ntx {
            put("ntx", v.into());
        }
        if let Some(v) = &self.ntx_list {
            put("ntx_list", v.clone().into());
        }
        if let Some(v) = &self.snr_grid {
            put("snr_grid", Value::Array(v.iter().map(|&x| exact_float(x)).collect()));
        }
        if let Some(v) = self.snr_db {
            put("snr_db", exact_float(v));
        }
        if let Some(v) = self.target_ber {
            put("target_ber", exact_float(v));
        }
        if let Some(v) = self.trials {
            put("trials", v.into());
        }
        if let Some(v) = self.min_errors {
            put("min_errors", v.into());
        }
        if let Some(v) = self.bins {
            put("bins", v.into());
        }
        if let Some(v) = self.max_iters {
            put("max_iters", v.into());
        }
        if let Some(v) = self.suite {
            put("suite", v.to_string().into());
        }
        Value::Object(m)
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(t) => t.clone(),
        other => other.to_string(),
    }
}

/// A float that survives a JSON round trip; infinities are kept as strings.
fn exact_float(x: f64) -> Value {
    if x.is_finite() {
        crate::output::number(x)
    } else {
        Value::String(x.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_and_json_agree() {
        let flat = Settings::from_flat("# comment\nseed = 7\nntx=4\nsnr-grid = -2, 0.5,inf\ninit = zf\n").unwrap();
        let json = Settings::from_json(&serde_json::json!({
            "seed": 7, "ntx": 4, "snr_grid": [-2, 0.5, "inf"], "init": "zf"
        }))
        .unwrap();
        assert_eq!(flat, json);
        assert_eq!(flat.snr_grid, Some(vec![-2.0, 0.5, f64::INFINITY]));
    }

    #[test]
    fn json_round_trip() {
        let s = Settings {
            seed: Some(u64::MAX),
            snr_grid: Some(vec![0.1, 1.0 / 3.0, f64::INFINITY]),
            target_ber: Some(1e-3),
            suite: Some(Suite::FixedPoint),
            ..Default::default()
        };
        let text = serde_json::to_string(&s.to_json()).unwrap();
        let back = Settings::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn manifest_config_is_unwrapped() {
        let s = Settings::from_json(&serde_json::json!({"version": "x", "config": {"ntx": 3}})).unwrap();
        assert_eq!(s.ntx, Some(3));
    }

    #[test]
    fn layering_prefers_upper() {
        let upper = Settings { seed: Some(1), ..Default::default() };
        let lower = Settings { seed: Some(2), ntx: Some(5), ..Default::default() };
        let s = upper.over(lower);
        assert_eq!((s.seed, s.ntx), (Some(1), Some(5)));
    }

    #[test]
    fn bad_input_is_usage_error() {
        assert!(matches!(Settings::from_flat("colour = red"), Err(CliError::Usage(_))));
        assert!(matches!(Settings::from_flat("seed = x"), Err(CliError::Usage(_))));
        assert!(matches!(Settings::from_flat("seed"), Err(CliError::Usage(_))));
        assert!(matches!(Settings::from_flat("suite = nope"), Err(CliError::Usage(_))));
    }
}
