//! TEF frame-embedding files and JSONL corpus manifests.
//!
//! A TEF file is a fixed 24-byte little-endian header followed by a row-major
//! (frame-major) `float32` payload:
//!
//! | bytes   | field                       |
//! |---------|-----------------------------|
//! | 0..4    | magic `"TRCE"`              |
//! | 4..8    | `u32` version, always 1     |
//! | 8..12   | `u32` frame count `T`       |
//! | 12..16  | `u32` embedding dim `L`     |
//! | 16..20  | `f32` frame rate in Hz      |
//! | 20..24  | `u32` dtype code, 1 = f32   |
//! | 24..    | `T * L` `f32` values        |
//!
//! A manifest is UTF-8 text with one JSON object per line:
//! `{"id": "...", "path": "...", "label": "bonafide" | "spoof" | "unknown"}`.
//! Relative paths are resolved against the manifest's directory.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TraceError};

pub const TEF_MAGIC: [u8; 4] = *b"TRCE";
pub const TEF_VERSION: u32 = 1;
pub const TEF_DTYPE_F32: u32 = 1;
pub const TEF_HEADER_LEN: usize = 24;

/// A `T x L` matrix of frame embeddings for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    pub utterance_id: String,
    n_frames: usize,
    dim: usize,
    frame_rate_hz: f32,
    /// Row-major, `n_frames * dim` values.
    data: Vec<f32>,
}

impl EmbeddingSequence {
    /// Builds a sequence from row-major data, checking every invariant.
    pub fn new(
        utterance_id: impl Into<String>,
        n_frames: usize,
        dim: usize,
        frame_rate_hz: f32,
        data: Vec<f32>,
    ) -> Result<Self> {
        if n_frames == 0 || dim == 0 {
            return Err(TraceError::InvalidSequence(format!(
                "shape {n_frames}x{dim}: both dimensions must be at least 1"
            )));
        }
        if n_frames.checked_mul(dim) != Some(data.len()) {
            return Err(TraceError::InvalidSequence(format!(
                "shape {n_frames}x{dim} does not match {} values",
                data.len()
            )));
        }
        if !(frame_rate_hz.is_finite() && frame_rate_hz > 0.0) {
            return Err(TraceError::InvalidSequence(format!(
                "frame rate must be positive and finite, got {frame_rate_hz}"
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(TraceError::NonFiniteFrame {
                frame: pos / dim,
                dim: pos % dim,
            });
        }
        Ok(EmbeddingSequence {
            utterance_id: utterance_id.into(),
            n_frames,
            dim,
            frame_rate_hz,
            data,
        })
    }

    /// Builds a sequence from a list of equally sized rows.
    pub fn from_rows(
        utterance_id: impl Into<String>,
        frame_rate_hz: f32,
        rows: &[Vec<f32>],
    ) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(TraceError::InvalidSequence("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(utterance_id, rows.len(), dim, frame_rate_hz, data)
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_rate_hz(&self) -> f32 {
        self.frame_rate_hz
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    /// Serializes to the exact TEF byte layout.
    pub fn to_tef_bytes(&self) -> Result<Vec<u8>> {
        let t = u32::try_from(self.n_frames)
            .map_err(|_| TraceError::InvalidSequence("frame count exceeds u32".into()))?;
        let l = u32::try_from(self.dim)
            .map_err(|_| TraceError::InvalidSequence("dimension exceeds u32".into()))?;
        let mut out = Vec::with_capacity(TEF_HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(&TEF_MAGIC);
        out.extend_from_slice(&TEF_VERSION.to_le_bytes());
        out.extend_from_slice(&t.to_le_bytes());
        out.extend_from_slice(&l.to_le_bytes());
        out.extend_from_slice(&self.frame_rate_hz.to_le_bytes());
        out.extend_from_slice(&TEF_DTYPE_F32.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }
}

/// Writes `seq` to `path` in TEF layout.
///
/// Invariants are re-checked first so that a sequence mutated through unsafe
/// means never produces an unreadable file.
pub fn write_tef(seq: &EmbeddingSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(pos) = seq.data.iter().position(|v| !v.is_finite()) {
        return Err(TraceError::NonFiniteFrame {
            frame: pos / seq.dim,
            dim: pos % seq.dim,
        });
    }
    let bytes = seq.to_tef_bytes()?;
    let file = fs::File::create(path).map_err(|e| TraceError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| TraceError::io(path, e))?;
    w.flush().map_err(|e| TraceError::io(path, e))
}

/// Reads a TEF file; the utterance id is taken from the file stem.
pub fn read_tef(path: impl AsRef<Path>) -> Result<EmbeddingSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| TraceError::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_tef(id, &bytes)
}

/// Parses TEF bytes. Every header field and the exact payload length are
/// validated; no partial or reshaped result is ever returned.
pub fn decode_tef(utterance_id: impl Into<String>, bytes: &[u8]) -> Result<EmbeddingSequence> {
    if bytes.len() < 4 || bytes[..4] != TEF_MAGIC {
        return Err(TraceError::BadMagic);
    }
    if bytes.len() < TEF_HEADER_LEN {
        return Err(TraceError::TruncatedHeader(bytes.len()));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != TEF_VERSION {
        return Err(TraceError::UnsupportedVersion(version));
    }
    let n_frames = u32_at(8) as usize;
    let dim = u32_at(12) as usize;
    let frame_rate_hz = f32::from_le_bytes(bytes[16..20].try_into().unwrap());
    let dtype = u32_at(20);
    if dtype != TEF_DTYPE_F32 {
        return Err(TraceError::UnsupportedDtype(dtype));
    }

    let payload = &bytes[TEF_HEADER_LEN..];
    // saturates only for shapes no payload could match
    let expected = (n_frames as u64)
        .saturating_mul(dim as u64)
        .saturating_mul(4);
    if expected != payload.len() as u64 {
        return Err(TraceError::PayloadSizeMismatch {
            expected,
            found: payload.len() as u64,
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingSequence::new(utterance_id, n_frames, dim, frame_rate_hz, data)
}

/// Ground-truth class of a manifest entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Bonafide,
    Spoof,
    Unknown,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Bonafide => "bonafide",
            Label::Spoof => "spoof",
            Label::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "bonafide" => Ok(Label::Bonafide),
            "spoof" => Ok(Label::Spoof),
            "unknown" => Ok(Label::Unknown),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(rename = "id")]
    pub utterance_id: String,
    pub path: PathBuf,
    pub label: Label,
}

#[derive(Deserialize)]
struct RawEntry {
    id: String,
    path: String,
    label: String,
}

/// Reads a JSONL manifest. Relative paths are resolved against the manifest's
/// parent directory; blank lines are ignored. Line numbers are 1-based.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| TraceError::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    parse_manifest(&text, base)
}

pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Vec<ManifestEntry>> {
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawEntry = serde_json::from_str(line).map_err(|e| TraceError::Manifest {
            line: line_no,
            message: e.to_string(),
        })?;
        let label = raw
            .label
            .parse::<Label>()
            .map_err(|message| TraceError::Manifest {
                line: line_no,
                message,
            })?;
        if raw.id.is_empty() {
            return Err(TraceError::Manifest {
                line: line_no,
                message: "empty id".into(),
            });
        }
        if !seen.insert(raw.id.clone()) {
            return Err(TraceError::DuplicateId {
                line: line_no,
                id: raw.id,
            });
        }
        let p = PathBuf::from(&raw.path);
        let path = if p.is_relative() { base_dir.join(p) } else { p };
        entries.push(ManifestEntry {
            utterance_id: raw.id,
            path,
            label,
        });
    }
    Ok(entries)
}

/// Renders manifest lines. Paths are written as given.
pub fn manifest_line(id: &str, path: &str, label: Label) -> String {
    serde_json::json!({ "id": id, "path": path, "label": label.as_str() }).to_string()
}
