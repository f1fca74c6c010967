//! Run outputs: every command writes its files through an [`OutDir`], which
//! records them and finishes by writing a manifest with a config digest so a
//! run can be reproduced from its output directory alone.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::Failure;

pub struct OutDir {
    root: PathBuf,
    outputs: Vec<String>,
    started_unix: u64,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    schema: &'a str,
    tool_version: &'a str,
    command: &'a str,
    config_hash: String,
    seed: u64,
    started_unix: u64,
    finished_unix: u64,
    outputs: &'a [String],
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(root)
            .map_err(|e| Failure::runtime(format!("cannot create {}: {e}", root.display())))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            outputs: Vec::new(),
            started_unix: unix_now(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, Failure> {
        let path = self.root.join(name);
        fs::write(&path, contents)
            .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(name.to_string());
        Ok(path)
    }

    /// Writes `manifest.json` and returns its path. Call last.
    pub fn finish<C: Serialize>(
        self,
        command: &str,
        config: &C,
        seed: u64,
    ) -> Result<PathBuf, Failure> {
        let manifest = RunManifest {
            schema: "covflow-manifest-v1",
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            config_hash: config_hash(config)?,
            seed,
            started_unix: self.started_unix,
            finished_unix: unix_now(),
            outputs: &self.outputs,
        };
        let body = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Failure::runtime(format!("manifest encoding failed: {e}")))?;
        let path = self.root.join("manifest.json");
        fs::write(&path, body)
            .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Stable digest of the canonicalized config: JSON with sorted object keys,
/// hashed with SHA-256. Two configs hash equal iff they serialize equal.
pub fn config_hash<C: Serialize>(config: &C) -> Result<String, Failure> {
    let value = serde_json::to_value(config)
        .map_err(|e| Failure::runtime(format!("config encoding failed: {e}")))?;
    let canonical = canonical_json(&value);
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// serde_json maps preserve insertion order by default, so re-emit with keys
/// sorted to make the digest independent of field declaration order.
fn canonical_json(value: &Value) -> String {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let fields: Vec<String> = keys
                .iter()
                .map(|k| {
                    format!(
                        "{}:{}",
                        serde_json::to_string(k).expect("string encodes"),
                        canonical_json(&map[*k])
                    )
                })
                .collect();
            format!("{{{}}}", fields.join(","))
        }
        Value::Array(items) => {
            let fields: Vec<String> = items.iter().map(canonical_json).collect();
            format!("[{}]", fields.join(","))
        }
        other => serde_json::to_string(other).expect("scalar encodes"),
    }
}

/// Honors SOURCE_DATE_EPOCH so archived runs can carry fixed timestamps.
fn unix_now() -> u64 {
    if let Ok(s) = std::env::var("SOURCE_DATE_EPOCH") {
        if let Ok(t) = s.parse() {
            return t;
        }
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// CSV assembly: a versioned schema comment, then the header, then rows.
/// Floats go through f64 `Display`, which prints the shortest decimal that
/// round-trips, so re-parsing a file reproduces the in-memory values exactly.
pub struct Csv {
    lines: Vec<String>,
    columns: usize,
}

impl Csv {
    pub fn new(schema: &str, header: &[&str]) -> Self {
        Csv {
            lines: vec![format!("# schema: {schema}"), header.join(",")],
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.columns, "csv row width mismatch");
        self.lines.push(cells.join(","));
    }

    pub fn to_string(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}

pub fn cell_f64(v: f64) -> String {
    format!("{v}")
}

pub fn cell_opt(v: Option<f64>, note: Option<&str>) -> String {
    match (v, note) {
        (Some(v), _) => cell_f64(v),
        (None, Some(slug)) => format!("n/a: {slug}"),
        (None, None) => "n/a".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn config_hash_is_order_independent_and_value_sensitive() {
        let a = json!({"dim": 16, "nested": {"x": 1, "y": 2}});
        let b = json!({"nested": {"y": 2, "x": 1}, "dim": 16});
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        let c = json!({"dim": 17, "nested": {"x": 1, "y": 2}});
        assert_ne!(config_hash(&a).unwrap(), config_hash(&c).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 64);
    }

    #[test]
    fn canonical_json_sorts_keys_recursively() {
        let v = json!({"b": [{"z": 1, "a": 2}], "a": true});
        assert_eq!(canonical_json(&v), r#"{"a":true,"b":[{"a":2,"z":1}]}"#);
    }

    #[test]
    fn csv_layout_and_cells() {
        let mut csv = Csv::new("covflow-test-v1", &["x", "y"]);
        csv.row(&[cell_f64(0.1 + 0.2), cell_opt(None, Some("degenerate-eigenvalues"))]);
        let text = csv.to_string();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# schema: covflow-test-v1");
        assert_eq!(lines[1], "x,y");
        assert_eq!(lines[2], "0.30000000000000004,n/a: degenerate-eigenvalues");
        assert_eq!(lines[2].split(',').next().unwrap().parse::<f64>().unwrap(), 0.1 + 0.2);
        assert_eq!(cell_opt(Some(1.5), Some("ignored")), "1.5");
        assert_eq!(cell_opt(None, None), "n/a");
    }

    #[test]
    #[should_panic(expected = "row width")]
    fn csv_rejects_ragged_rows() {
        let mut csv = Csv::new("covflow-test-v1", &["x", "y"]);
        csv.row(&["1".to_string()]);
    }
}
