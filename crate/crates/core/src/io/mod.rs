//! File formats and on-disk artifacts: spec and sweep JSON, frontier CSVs,
//! plot TSVs and run manifests. All writes go through a temp file in the
//! destination directory followed by a rename.

mod frontier;
mod manifest;
mod run;

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::arch::{ensure_valid, ArchSpec, EvalConfig};
use crate::error::{Error, Result};
use crate::presets;
use crate::search::{Axis, SweepSpace, DEFAULT_CAP};

pub use frontier::{frontier_csv, metric_columns, plot_tsv, read_frontier_csv, series_name};
pub use manifest::{sha256_hex, RunManifest};
pub use run::{run_sweep, sweep_objectives, SweepOutput};

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses JSON text, reporting syntax and schema errors with line/column.
pub fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Reads and validates an architecture spec file.
pub fn read_spec(path: &Path) -> Result<ArchSpec> {
    let spec: ArchSpec = parse_json(&read_to_string(path)?, path)?;
    ensure_valid(&spec)?;
    Ok(spec)
}

/// Resolves `arg` as a spec file, falling back to a preset name when no
/// such file exists.
pub fn load_spec(arg: &str) -> Result<ArchSpec> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Ok(spec) = presets::by_name(arg) {
            return Ok(spec);
        }
    }
    read_spec(path)
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum BaseRef {
    Preset(String),
    Inline(ArchSpec),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    base: BaseRef,
    #[serde(default)]
    eval: Option<EvalConfig>,
    axes: Vec<Axis>,
    #[serde(default)]
    cap: Option<u128>,
}

/// Reads a sweep file: `{"base": <preset name or inline spec>, "eval": {...},
/// "axes": [{"kind": "N", "values": [9, 11]}, ...], "cap": 1000000}`.
pub fn read_sweep(path: &Path) -> Result<SweepSpace> {
    let file: SweepFile = parse_json(&read_to_string(path)?, path)?;
    let base = match file.base {
        BaseRef::Preset(name) => presets::by_name(&name)?,
        BaseRef::Inline(spec) => {
            ensure_valid(&spec)?;
            spec
        }
    };
    Ok(SweepSpace {
        base,
        eval: file.eval.unwrap_or_default(),
        axes: file.axes,
        cap: file.cap.unwrap_or(DEFAULT_CAP),
    })
}

/// Writes `bytes` to `path` via a sibling temp file and rename, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
