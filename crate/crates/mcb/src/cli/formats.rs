//! Versioned file formats: sketch parameter files, JSON-lines datasets,
//! result records, and the CSV dialect (comma separators, header row, Unix
//! newlines, no quoting needed by schema design).
//!
//! Determinism contract: report JSON and CSV content is a pure function of
//! the command inputs; wall-clock and timestamps go to a separate run-info
//! file. serde_json maps sort keys and floats serialize as their shortest
//! round-trip decimal form, so identical runs produce identical bytes.

use crate::error::{Error, Result};
use crate::sketch::CountSketchParams;
use crate::tasks::{ClassificationSample, GroundingItem};
use crate::util::fnv1a_bytes;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub const SKETCH_FORMAT_VERSION: u32 = 1;

/// On-disk form of one sketch: 1-based buckets, +/-1 signs, and a checksum
/// over the payload.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SketchParamsFile {
    pub format_version: u32,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub h: Vec<usize>,
    pub s: Vec<i8>,
    pub checksum: String,
}

impl SketchParamsFile {
    pub fn from_params(params: &CountSketchParams) -> Self {
        let h = params.h_one_based();
        let s = params.signs_i8();
        let checksum = sketch_checksum(params.input_dim(), params.output_dim(), params.seed(), &h, &s);
        SketchParamsFile {
            format_version: SKETCH_FORMAT_VERSION,
            n: params.input_dim(),
            d: params.output_dim(),
            seed: params.seed(),
            h,
            s,
            checksum,
        }
    }

    pub fn into_params(self) -> Result<CountSketchParams> {
        if self.format_version != SKETCH_FORMAT_VERSION {
            return Err(Error::CorruptFile(format!(
                "unknown sketch format version {}",
                self.format_version
            )));
        }
        if self.h.len() != self.n || self.s.len() != self.n {
            return Err(Error::CorruptFile(format!(
                "array lengths {}/{} do not match n={}",
                self.h.len(),
                self.s.len(),
                self.n
            )));
        }
        let expected = sketch_checksum(self.n, self.d, self.seed, &self.h, &self.s);
        if expected != self.checksum {
            return Err(Error::CorruptFile(format!(
                "checksum mismatch: file says {}, payload hashes to {expected}",
                self.checksum
            )));
        }
        CountSketchParams::from_parts(self.d, self.h, self.s, self.seed)
    }
}

fn sketch_checksum(n: usize, d: usize, seed: u64, h: &[usize], s: &[i8]) -> String {
    let mut payload = format!("{n}|{d}|{seed}|");
    for x in h {
        payload.push_str(&x.to_string());
        payload.push(',');
    }
    payload.push('|');
    for x in s {
        payload.push_str(&x.to_string());
        payload.push(',');
    }
    format!("{:016x}", fnv1a_bytes(payload.as_bytes()))
}

pub fn save_sketch(path: &Path, params: &CountSketchParams) -> Result<()> {
    let file = SketchParamsFile::from_params(params);
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::CorruptFile(format!("serialize failed: {e}")))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

pub fn load_sketch(path: &Path) -> Result<CountSketchParams> {
    let raw = std::fs::read_to_string(path)?;
    let file: SketchParamsFile = serde_json::from_str(&raw)
        .map_err(|e| Error::CorruptFile(format!("{}: {e}", path.display())))?;
    file.into_params()
}

pub const RESULT_FORMAT_VERSION: u32 = 1;
pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Deterministic part of a command's output: config snapshot and metrics.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResultRecord {
    pub format_version: u32,
    pub command: String,
    pub config: BTreeMap<String, serde_json::Value>,
    pub metrics: BTreeMap<String, f64>,
    pub seed: u64,
}

/// Volatile half of the record: wall clock and timestamp, written next to
/// the deterministic report so reruns can be byte-compared.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunInfo {
    pub format_version: u32,
    pub command: String,
    pub wall_clock_ms: u64,
    pub timestamp_unix_s: u64,
}

impl RunInfo {
    pub fn new(command: &str, wall_clock_ms: u64) -> Self {
        let timestamp_unix_s = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        RunInfo {
            format_version: RESULT_FORMAT_VERSION,
            command: command.to_string(),
            wall_clock_ms,
            timestamp_unix_s,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::CorruptFile(format!("serialize failed: {e}")))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

/// CSV with a header row; values must not contain commas or newlines.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonlHeader {
    format_version: u32,
    kind: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassificationLine {
    x: Vec<f64>,
    q: Vec<f64>,
    label: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct GroundingLine {
    phrase: Vec<f64>,
    proposals: Vec<Vec<f64>>,
    correct: usize,
}

fn write_jsonl_header(file: &mut std::fs::File, kind: &str) -> Result<()> {
    let header = JsonlHeader {
        format_version: DATASET_FORMAT_VERSION,
        kind: kind.to_string(),
    };
    let json = serde_json::to_string(&header)
        .map_err(|e| Error::CorruptFile(format!("serialize failed: {e}")))?;
    writeln!(file, "{json}")?;
    Ok(())
}

fn check_jsonl_header(line: &str, kind: &str) -> Result<()> {
    let header: JsonlHeader = serde_json::from_str(line)
        .map_err(|e| Error::CorruptFile(format!("missing dataset header line: {e}")))?;
    if header.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::CorruptFile(format!(
            "unknown dataset format version {}",
            header.format_version
        )));
    }
    if header.kind != kind {
        return Err(Error::CorruptFile(format!(
            "dataset kind '{}' where '{kind}' was expected",
            header.kind
        )));
    }
    Ok(())
}

/// Header line {"format_version":1,"kind":"classification"}, then one JSON
/// object per sample: {"x": [...], "q": [...], "label": k}.
pub fn write_classification_jsonl(path: &Path, data: &[ClassificationSample]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    write_jsonl_header(&mut file, "classification")?;
    for sample in data {
        let line = ClassificationLine {
            x: sample.x.clone(),
            q: sample.q.clone(),
            label: sample.label,
        };
        let json = serde_json::to_string(&line)
            .map_err(|e| Error::CorruptFile(format!("serialize failed: {e}")))?;
        writeln!(file, "{json}")?;
    }
    Ok(())
}

pub fn read_classification_jsonl(path: &Path) -> Result<Vec<ClassificationSample>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    let mut saw_header = false;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            check_jsonl_header(&line, "classification")?;
            saw_header = true;
            continue;
        }
        let parsed: ClassificationLine = serde_json::from_str(&line)
            .map_err(|e| Error::CorruptFile(format!("line {}: {e}", idx + 1)))?;
        out.push(ClassificationSample {
            x: parsed.x,
            q: parsed.q,
            label: parsed.label,
        });
    }
    if !saw_header {
        return Err(Error::CorruptFile("empty dataset file".into()));
    }
    Ok(out)
}

/// Header line, then one JSON object per item:
/// {"phrase": [...], "proposals": [[...]], "correct": k}.
pub fn write_grounding_jsonl(path: &Path, data: &[GroundingItem]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    write_jsonl_header(&mut file, "grounding")?;
    for item in data {
        let line = GroundingLine {
            phrase: item.phrase.clone(),
            proposals: item.proposals.clone(),
            correct: item.correct,
        };
        let json = serde_json::to_string(&line)
            .map_err(|e| Error::CorruptFile(format!("serialize failed: {e}")))?;
        writeln!(file, "{json}")?;
    }
    Ok(())
}

pub fn read_grounding_jsonl(path: &Path) -> Result<Vec<GroundingItem>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    let mut saw_header = false;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            check_jsonl_header(&line, "grounding")?;
            saw_header = true;
            continue;
        }
        let parsed: GroundingLine = serde_json::from_str(&line)
            .map_err(|e| Error::CorruptFile(format!("line {}: {e}", idx + 1)))?;
        out.push(GroundingItem {
            phrase: parsed.phrase,
            proposals: parsed.proposals,
            correct: parsed.correct,
        });
    }
    if !saw_header {
        return Err(Error::CorruptFile("empty dataset file".into()));
    }
    Ok(out)
}
