//! Line-delimited artifact files. Every artifact starts with a header record
//! carrying the artifact kind and the pipeline config fingerprint, followed
//! by one JSON record per line. Evaluation refuses to mix artifacts whose
//! fingerprints disagree.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path} line {line}: {source}")]
    Parse {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error("{path} is empty (missing header)")]
    MissingHeader { path: String },
    #[error("{path} is a {found} artifact, expected {expected}")]
    KindMismatch {
        path: String,
        found: String,
        expected: String,
    },
    #[error("fingerprint mismatch: {path} has {found}, expected {expected}")]
    FingerprintMismatch {
        path: String,
        found: String,
        expected: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub kind: String,
    pub fingerprint: String,
}

fn io_err(path: &Path, source: std::io::Error) -> ArtifactError {
    ArtifactError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_artifact<T: Serialize>(
    path: &Path,
    kind: &str,
    fingerprint: &str,
    records: impl IntoIterator<Item = T>,
) -> Result<(), ArtifactError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    let header = ArtifactHeader {
        kind: kind.to_string(),
        fingerprint: fingerprint.to_string(),
    };
    let write_line = |out: &mut BufWriter<File>, value: String| -> Result<(), ArtifactError> {
        out.write_all(value.as_bytes()).map_err(|e| io_err(path, e))?;
        out.write_all(b"\n").map_err(|e| io_err(path, e))
    };
    write_line(&mut out, serde_json::to_string(&header).unwrap())?;
    for record in records {
        write_line(&mut out, serde_json::to_string(&record).unwrap())?;
    }
    out.flush().map_err(|e| io_err(path, e))
}

pub fn read_artifact<T: DeserializeOwned>(
    path: &Path,
    expected_kind: &str,
) -> Result<(ArtifactHeader, Vec<T>), ArtifactError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();
    let header: ArtifactHeader = match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(|e| io_err(path, e))?;
            serde_json::from_str(&line).map_err(|e| ArtifactError::Parse {
                path: path.display().to_string(),
                line: 1,
                source: e,
            })?
        }
        None => {
            return Err(ArtifactError::MissingHeader {
                path: path.display().to_string(),
            })
        }
    };
    if header.kind != expected_kind {
        return Err(ArtifactError::KindMismatch {
            path: path.display().to_string(),
            found: header.kind,
            expected: expected_kind.to_string(),
        });
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line).map_err(|e| ArtifactError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                source: e,
            })?,
        );
    }
    Ok((header, records))
}

pub fn check_fingerprint(
    header: &ArtifactHeader,
    expected: &str,
    path: &Path,
) -> Result<(), ArtifactError> {
    if header.fingerprint != expected {
        return Err(ArtifactError::FingerprintMismatch {
            path: path.display().to_string(),
            found: header.fingerprint.clone(),
            expected: expected.to_string(),
        });
    }
    Ok(())
}
