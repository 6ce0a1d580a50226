//! Run manifests and report emission.

use std::io::Write;

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub params: Value,
    pub version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str, params: &impl Serialize) -> anyhow::Result<Self> {
        Ok(RunManifest {
            command: command.to_string(),
            params: serde_json::to_value(params)?,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        })
    }
}

/// `body` must serialise to a JSON object; the manifest is added under `"manifest"`.
pub fn with_manifest(body: &impl Serialize, manifest: &RunManifest) -> anyhow::Result<Value> {
    let mut value = serde_json::to_value(body)?;
    let Value::Object(map) = &mut value else {
        anyhow::bail!("report body is not a JSON object");
    };
    map.insert("manifest".into(), serde_json::to_value(manifest)?);
    Ok(value)
}

pub fn print_json(value: &Value) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Rounds to 6 significant digits and prints the shortest form of the result.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() || x == 0.0 {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

/// CSV with the manifest as a leading `#` comment line.
pub fn print_csv(header: &[&str], rows: &[Vec<String>], manifest: &RunManifest) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "# {}", serde_json::to_string(manifest)?)?;
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(2.0 / 3.0), "0.666667");
        assert_eq!(sig6(1234567.0), "1234570");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.5e-9), "0.0000000015");
    }

    #[test]
    fn manifest_is_embedded() {
        let m = RunManifest::new("metrics", &serde_json::json!({"k": 5})).unwrap();
        let v = with_manifest(&serde_json::json!({"density": 1.0}), &m).unwrap();
        assert_eq!(v["manifest"]["command"], "metrics");
        assert_eq!(v["manifest"]["params"]["k"], 5);
        assert_eq!(v["density"], 1.0);
    }
}
