//! Output-path resolution and artifact writing shared by the subcommands.
//!
//! Everything a command writes is split in two: deterministic artifacts
//! (reports, CSVs, models) that depend only on the configuration, and a
//! `.run.json` sidecar holding the wall-clock stamp of the invocation.
//! Keeping time out of the main artifacts is what lets identical
//! configurations reproduce them byte for byte.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context as _;
use serde::Serialize;

use crate::CliError;

/// Environment variable naming the default directory for outputs.
pub const OUT_DIR_ENV: &str = "TABCAV_OUT_DIR";

/// Crate version, embedded in every artifact.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Version of the CLI-owned artifact layouts (meta, metrics and sweep
/// entry files). The core report layouts carry their own version.
pub const CLI_SCHEMA_VERSION: u32 = 1;

/// Resolve an output path: an explicit flag wins; otherwise `default_name`
/// goes under `$TABCAV_OUT_DIR`, or the working directory if unset.
pub fn resolve_out(explicit: Option<PathBuf>, default_name: &str) -> PathBuf {
    match explicit {
        Some(path) => path,
        None => match std::env::var_os(OUT_DIR_ENV) {
            Some(dir) => PathBuf::from(dir).join(default_name),
            None => PathBuf::from(default_name),
        },
    }
}

/// Create the parent directory of `path` when it is missing.
pub fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("cannot create directory `{}`", dir.display()))?;
        }
    }
    Ok(())
}

/// `report.json` + `"run"` → `report.json.run.json`, and so on. Appending
/// to the full file name keeps the association unambiguous even for
/// extension-less primaries.
pub fn sidecar_path(primary: &Path, tag: &str) -> PathBuf {
    let mut name = primary
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(format!(".{tag}.json"));
    primary.with_file_name(name)
}

/// Serialize `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)
        .with_context(|| format!("cannot serialize `{}`", path.display()))?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write `{}`", path.display()))?;
    Ok(())
}

/// Wall-clock stamp of a finished command. This is the one artifact allowed
/// to differ between identically configured runs.
#[derive(Serialize)]
struct RunStamp<'a> {
    tool_version: &'a str,
    command: &'a str,
    unix_time_seconds: u64,
    elapsed_seconds: f64,
}

/// Write the `.run.json` sidecar next to `primary`.
pub fn write_run_stamp(primary: &Path, command: &str, started: Instant) -> Result<(), CliError> {
    let stamp = RunStamp {
        tool_version: TOOL_VERSION,
        command,
        unix_time_seconds: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        elapsed_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&sidecar_path(primary, "run"), &stamp)
}

/// Top-level layout of a report file: the core report's fields flattened
/// in, plus the tool version and an echo of the invocation that produced it.
#[derive(Serialize)]
pub struct FileReport<'a, R: Serialize, C: Serialize> {
    pub tool_version: &'a str,
    pub invocation: C,
    #[serde(flatten)]
    pub report: &'a R,
}

/// Lowercase hex SHA-256 of the canonical JSON form of `value`; used to key
/// resumable sweep entries by their full configuration.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    use sha2::{Digest, Sha256};
    let bytes = serde_json::to_vec(value).expect("configs always serialize");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
