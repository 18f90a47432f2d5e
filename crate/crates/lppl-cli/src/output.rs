//! Report file writing. Every JSON output is wrapped in an envelope that
//! carries the schema version, the master seed, content hashes of the
//! inputs and config, and — in a separate trailing field so reruns stay
//! byte-comparable — a wall-clock timestamp.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use lppl::report::SCHEMA_VERSION;

/// Hashes identifying exactly what produced an output file.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub input_sha256: String,
    pub config_sha256: String,
}

#[derive(Debug, Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    seed: u64,
    input_sha256: &'a str,
    config_sha256: &'a str,
    payload: &'a T,
    metadata: Metadata,
}

#[derive(Debug, Serialize)]
struct Metadata {
    created_utc: String,
}

/// Sha-256 over the concatenated bytes of the given files (hex).
pub fn hash_files(paths: &[&Path]) -> std::io::Result<String> {
    let mut hasher = Sha256::new();
    for p in paths {
        hasher.update(fs::read(p)?);
    }
    Ok(hex_digest(hasher))
}

fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Write one enveloped JSON report; returns the path written.
pub fn write_json<T: Serialize>(
    dir: &Path,
    name: &str,
    seed: u64,
    prov: &Provenance,
    payload: &T,
) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let envelope = Envelope {
        schema_version: SCHEMA_VERSION,
        seed,
        input_sha256: &prov.input_sha256,
        config_sha256: &prov.config_sha256,
        payload,
        metadata: Metadata {
            created_utc: chrono::Utc::now().to_rfc3339(),
        },
    };
    let text = serde_json::to_string_pretty(&envelope).expect("report serialization");
    let path = dir.join(name);
    fs::write(&path, text + "\n")?;
    Ok(path)
}

/// Write a CSV with `# key: value` metadata comment lines (the loaders in
/// this toolkit skip them), a header row, then the body rows.
pub fn write_csv(
    dir: &Path,
    name: &str,
    seed: u64,
    prov: &Provenance,
    header: &str,
    rows: &[String],
) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut text = csv_preamble(seed, prov);
    text.push_str(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    fs::write(&path, text)?;
    Ok(path)
}

/// Start an incrementally-flushed CSV: preamble and header only.
pub fn start_csv(
    dir: &Path,
    name: &str,
    seed: u64,
    prov: &Provenance,
    header: &str,
) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut text = csv_preamble(seed, prov);
    text.push_str(header);
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

/// Append rows to an incrementally-flushed CSV.
pub fn append_csv(path: &Path, rows: &[String]) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = fs::OpenOptions::new().append(true).open(path)?;
    for r in rows {
        writeln!(f, "{r}")?;
    }
    f.flush()
}

fn csv_preamble(seed: u64, prov: &Provenance) -> String {
    format!(
        "# schema_version: {SCHEMA_VERSION}\n# seed: {seed}\n# input_sha256: {}\n# config_sha256: {}\n",
        prov.input_sha256, prov.config_sha256
    )
}
