//! Raw little-endian f64 arrays with JSON sidecars, and CSV event/code tables.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::csc::{CodeEvent, SparseCode, StopReason};
use crate::error::{Error, Result};
use crate::metrics::CodeLayout;
use crate::signal_model::{Dictionary, Event, EventTrain, Template};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayMeta {
    pub length: usize,
    pub fs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_sources: Option<usize>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Format { path: path.into(), message: e.to_string() })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format { path: path.into(), message: e.to_string() })
}

/// Writes `data` to `path` and its metadata to the `.json` sidecar.
pub fn write_f64_array(path: &Path, data: &[f64], meta: &ArrayMeta) -> Result<()> {
    if meta.length != data.len() {
        return Err(Error::InvalidArgument(format!("sidecar length {} for {} values", meta.length, data.len())));
    }
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    write_json(&sidecar_path(path), meta)
}

pub fn read_f64_array(path: &Path) -> Result<(Vec<f64>, ArrayMeta)> {
    let meta: ArrayMeta = read_json(&sidecar_path(path))?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != meta.length * 8 {
        return Err(Error::Format {
            path: path.into(),
            message: format!("{} bytes, sidecar declares {} values", bytes.len(), meta.length),
        });
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
    Ok((data, meta))
}

pub fn write_dictionary(path: &Path, dict: &Dictionary, fs: f64) -> Result<()> {
    let data: Vec<f64> = dict.templates().iter().flat_map(|t| t.samples().iter().copied()).collect();
    let meta = ArrayMeta {
        length: data.len(),
        fs,
        template_len: Some(dict.template_len()),
        num_sources: Some(dict.num_sources()),
    };
    write_f64_array(path, &data, &meta)
}

/// Reads templates (renormalized to unit norm) and their sampling rate.
pub fn read_dictionary(path: &Path) -> Result<(Dictionary, f64)> {
    let (data, meta) = read_f64_array(path)?;
    let bad = |message: &str| Error::Format { path: path.into(), message: message.into() };
    let len = meta.template_len.ok_or_else(|| bad("sidecar lacks template_len"))?;
    let c = meta.num_sources.ok_or_else(|| bad("sidecar lacks num_sources"))?;
    if len == 0 || c * len != data.len() {
        return Err(bad("template_len * num_sources does not match the data"));
    }
    let templates =
        data.chunks_exact(len).map(|s| Template::from_unnormalized(s.to_vec())).collect::<Result<Vec<_>>>()?;
    Ok((Dictionary::new(templates)?, meta.fs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct EventRow {
    source: usize,
    time_seconds: f64,
    time_samples: f64,
    amplitude: f64,
}

pub fn write_events_csv(path: &Path, train: &EventTrain, fs: f64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in &train.events {
        w.serialize(EventRow {
            source: e.source,
            time_seconds: e.time,
            time_samples: e.time * fs,
            amplitude: e.amplitude,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_events_csv(path: &Path, duration: f64) -> Result<EventTrain> {
    let mut r = csv::Reader::from_path(path)?;
    let events = r
        .deserialize::<EventRow>()
        .map(|row| row.map(|row| Event { source: row.source, time: row.time_seconds, amplitude: row.amplitude }))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(EventTrain { events, duration })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct CodeRow {
    window: usize,
    c: usize,
    k: usize,
    n: usize,
    time_samples: f64,
    amplitude: f64,
}

/// One row per code event; `time_samples` is the absolute template-center
/// position including the sub-grid part.
pub fn write_codes_csv(path: &Path, codes: &[SparseCode], layout: &CodeLayout) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for code in codes {
        for e in &code.events {
            w.serialize(CodeRow {
                window: code.window,
                c: e.c,
                k: e.k,
                n: e.n,
                time_samples: layout.event_position(code.window, e, true),
                amplitude: e.amplitude,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads codes back, one [`SparseCode`] per window in `0..num_windows`.
/// Residual norms and stop reasons are not stored and come back as NaN and
/// `MaxEvents`.
pub fn read_codes_csv(path: &Path, num_windows: usize) -> Result<Vec<SparseCode>> {
    let mut codes: Vec<SparseCode> = (0..num_windows)
        .map(|window| SparseCode { window, events: Vec::new(), residual_norm: f64::NAN, stop: StopReason::MaxEvents })
        .collect();
    let mut r = csv::Reader::from_path(path)?;
    for row in r.deserialize::<CodeRow>() {
        let row = row?;
        let code = codes.get_mut(row.window).ok_or_else(|| Error::Format {
            path: path.into(),
            message: format!("window {} out of range", row.window),
        })?;
        code.events.push(CodeEvent { c: row.c, k: row.k, n: row.n, amplitude: row.amplitude });
    }
    Ok(codes)
}
