//! The `metrics.json` document a candidate script leaves in its output dir.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{METRICS_FILE} not found")]
    FileMissing,
    #[error("malformed {METRICS_FILE}: {0}")]
    MalformedDocument(String),
    #[error("primary_metric {0} outside [0, 1] after normalization")]
    MetricOutOfRange(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Always in [0, 1]; already mapped through any declared normalization.
    pub primary_metric: f64,
    pub metric_name: String,
    #[serde(default)]
    pub auxiliary: BTreeMap<String, f64>,
    #[serde(default)]
    pub wall_seconds_reported: Option<f64>,
}

fn malformed(msg: impl Into<String>) -> MetricsError {
    MetricsError::MalformedDocument(msg.into())
}

fn number(v: &Value, what: &str) -> Result<f64, MetricsError> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| malformed(format!("`{what}` must be a finite number")))
}

/// Parses and validates a metrics document.
pub fn parse_metrics_str(text: &str) -> Result<MetricReport, MetricsError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    let obj = doc.as_object().ok_or_else(|| malformed("top level must be an object"))?;

    let metric_name = obj
        .get("metric_name")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("`metric_name` (string) is required"))?
        .to_string();
    let raw = number(obj.get("primary_metric").ok_or_else(|| malformed("`primary_metric` is required"))?, "primary_metric")?;

    let primary_metric = match obj.get("normalization") {
        None | Some(Value::Null) => raw,
        Some(Value::Object(n)) => {
            let lo = number(n.get("min").unwrap_or(&Value::Null), "normalization.min")?;
            let hi = number(n.get("max").unwrap_or(&Value::Null), "normalization.max")?;
            if hi <= lo {
                return Err(malformed("normalization requires max > min"));
            }
            (raw - lo) / (hi - lo)
        }
        Some(_) => return Err(malformed("`normalization` must be an object")),
    };
    if !(0.0..=1.0).contains(&primary_metric) {
        return Err(MetricsError::MetricOutOfRange(primary_metric));
    }

    let mut auxiliary = BTreeMap::new();
    match obj.get("auxiliary") {
        None | Some(Value::Null) => {}
        Some(Value::Object(aux)) => {
            for (k, v) in aux {
                auxiliary.insert(k.clone(), number(v, &format!("auxiliary.{k}"))?);
            }
        }
        Some(_) => return Err(malformed("`auxiliary` must be an object")),
    }
    let wall_seconds_reported = match obj.get("wall_seconds") {
        None | Some(Value::Null) => None,
        Some(v) => Some(number(v, "wall_seconds")?),
    };

    Ok(MetricReport { primary_metric, metric_name, auxiliary, wall_seconds_reported })
}

/// Reads `<dir>/metrics.json`.
pub fn parse_metrics(dir: &Path) -> Result<MetricReport, MetricsError> {
    match fs::read_to_string(dir.join(METRICS_FILE)) {
        Ok(text) => parse_metrics_str(&text),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Err(MetricsError::FileMissing),
        Err(e) => Err(malformed(e.to_string())),
    }
}
