use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::CliError;

/// Pretty JSON document followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, doc: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(doc)
        .map_err(|e| CliError::Runtime(format!("serializing output: {e}")))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// CSV table preceded by a `# config: <json>` comment line.
pub fn write_csv<C: Serialize, R: Serialize>(
    path: &Path,
    config: &C,
    rows: &[R],
) -> Result<(), CliError> {
    let header = serde_json::to_string(config)
        .map_err(|e| CliError::Runtime(format!("serializing config: {e}")))?;
    let mut buf = Vec::new();
    writeln!(buf, "# config: {header}")?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in rows {
            w.serialize(r)
                .map_err(|e| CliError::Runtime(format!("writing CSV: {e}")))?;
        }
        w.flush()?;
    }
    write_file(path, &buf)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Finite values only; NaN and infinities become empty CSV cells or JSON nulls.
pub fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}
