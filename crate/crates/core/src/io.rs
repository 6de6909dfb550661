//! File formats: binary frame streams, JSON-lines labels and detections, JSON models.
//!
//! A frame stream is one JSON header line terminated by `\n`, followed by the
//! frames as little-endian `f32` values, row-major, frame after frame. Missing
//! cells are stored as quiet NaN.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranging::{RangingModel, MODEL_FORMAT_VERSION};
use crate::types::{
    FrameDetections, GroundTruthRecord, RawFrame, SensorSpec, Subpage, DETECTION_SCHEMA_VERSION,
    LABEL_SCHEMA_VERSION,
};

pub const STREAM_FORMAT: &str = "thermal-frames";
pub const STREAM_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct StreamHeader {
    format: String,
    version: u32,
    spec: SensorSpec,
    frame_count: usize,
    frames: Vec<FrameMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameMeta {
    timestamp: f64,
    subpage: Subpage,
}

pub fn write_stream(path: impl AsRef<Path>, spec: &SensorSpec, frames: &[RawFrame]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    encode_stream(&mut out, spec, frames)?;
    out.flush()?;
    Ok(())
}

pub fn encode_stream(out: &mut impl Write, spec: &SensorSpec, frames: &[RawFrame]) -> Result<()> {
    spec.validate()?;
    for (i, f) in frames.iter().enumerate() {
        if f.spec() != spec {
            return Err(Error::DimensionMismatch(format!(
                "frame {i} was captured with a different sensor spec"
            )));
        }
    }
    let header = StreamHeader {
        format: STREAM_FORMAT.to_string(),
        version: STREAM_VERSION,
        spec: *spec,
        frame_count: frames.len(),
        frames: frames
            .iter()
            .map(|f| FrameMeta {
                timestamp: f.timestamp(),
                subpage: f.subpage(),
            })
            .collect(),
    };
    serde_json::to_writer(&mut *out, &header).map_err(|e| Error::Parse { line: 1, source: e })?;
    out.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(spec.pixel_count() * 4);
    for f in frames {
        buf.clear();
        for &v in f.values() {
            let v = if v.is_nan() { f32::NAN } else { v };
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_stream(path: impl AsRef<Path>) -> Result<(SensorSpec, Vec<RawFrame>)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_stream(&bytes)
}

pub fn decode_stream(bytes: &[u8]) -> Result<(SensorSpec, Vec<RawFrame>)> {
    if bytes.is_empty() {
        return Err(Error::TruncatedPayload {
            expected: 1,
            found: 0,
        });
    }
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedHeader("header line is not newline-terminated".into()))?;
    let header: StreamHeader = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    if header.format != STREAM_FORMAT {
        return Err(Error::MalformedHeader(format!(
            "unexpected format tag {:?}",
            header.format
        )));
    }
    if header.version != STREAM_VERSION {
        return Err(Error::SchemaVersion {
            what: "frame stream",
            found: header.version,
            expected: STREAM_VERSION,
        });
    }
    if header.frames.len() != header.frame_count {
        return Err(Error::MalformedHeader(format!(
            "frame_count {} disagrees with {} frame entries",
            header.frame_count,
            header.frames.len()
        )));
    }
    header
        .spec
        .validate()
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;

    let pixels = header.spec.pixel_count();
    let payload = &bytes[newline + 1..];
    let expected = (header.frame_count * pixels * 4) as u64;
    let found = payload.len() as u64;
    if found < expected {
        return Err(Error::TruncatedPayload { expected, found });
    }
    if found > expected {
        return Err(Error::DimensionMismatch(format!(
            "payload holds {found} bytes but {} frames of {}x{} need {expected}",
            header.frame_count, header.spec.width_px, header.spec.height_px
        )));
    }

    let frames = header
        .frames
        .iter()
        .zip(payload.chunks_exact(pixels * 4))
        .map(|(meta, chunk)| {
            let values = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            RawFrame::new(header.spec, values, meta.timestamp, meta.subpage)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header.spec, frames))
}

fn write_json_lines<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for (i, row) in rows.iter().enumerate() {
        serde_json::to_writer(&mut out, row).map_err(|e| Error::Parse {
            line: i + 1,
            source: e,
        })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn read_json_lines<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            source: e,
        })?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_labels(path: impl AsRef<Path>, records: &[GroundTruthRecord]) -> Result<()> {
    for r in records {
        r.validate()?;
    }
    write_json_lines(path, records)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<GroundTruthRecord>> {
    let records: Vec<GroundTruthRecord> = read_json_lines(path)?;
    for r in &records {
        if r.version != LABEL_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                what: "labels",
                found: r.version,
                expected: LABEL_SCHEMA_VERSION,
            });
        }
        r.validate()?;
    }
    Ok(records)
}

pub fn write_detections(path: impl AsRef<Path>, frames: &[FrameDetections]) -> Result<()> {
    write_json_lines(path, frames)
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<FrameDetections>> {
    let frames: Vec<FrameDetections> = read_json_lines(path)?;
    for f in &frames {
        if f.version != DETECTION_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                what: "detections",
                found: f.version,
                expected: DETECTION_SCHEMA_VERSION,
            });
        }
        for d in &f.detections {
            d.validate()?;
        }
    }
    Ok(frames)
}

pub fn write_model(path: impl AsRef<Path>, model: &RangingModel) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, model).map_err(|e| Error::Parse { line: 1, source: e })?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<RangingModel> {
    let text = std::fs::read_to_string(path)?;
    model_from_json(&text)
}

/// Parses a model document, reporting a version mismatch before any other schema error.
pub fn model_from_json(text: &str) -> Result<RangingModel> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Parse { line: 1, source: e })?;
    let found = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::MalformedHeader("model document lacks format_version".into()))?;
    if found != MODEL_FORMAT_VERSION as u64 {
        return Err(Error::SchemaVersion {
            what: "model",
            found: found as u32,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let model: RangingModel =
        serde_json::from_value(value).map_err(|e| Error::Parse { line: 1, source: e })?;
    model.validate()?;
    Ok(model)
}

/// Reads any JSON document (scene or configuration files).
pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        source: e,
    })
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Parse { line: 1, source: e })?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}
