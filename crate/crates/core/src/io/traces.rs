//! Trace-set files: a long-format CSV with one transmission value per row
//! and a JSON sidecar holding the configuration and ground truth.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{GridSection, LossSection, ParamsSection, SequenceSection};
use super::write_atomic;
use crate::error::{Error, Result};
use crate::sim::{Slot, TraceMeta, TraceSet};
use crate::units::{from_mhz, to_mhz};

pub const CSV_HEADER: [&str; 4] = ["detuning_MHz", "repetition", "slot", "transmission"];
pub const SIDECAR_FORMAT: &str = "rydfiber-traceset";
pub const SIDECAR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSidecar {
    pub format: String,
    pub version: u32,
    pub n_detunings: usize,
    pub n_reps: usize,
    pub slots: Vec<Slot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossSection>,
    /// Optical depth far from the loss peak, per repetition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub od_true: Option<Vec<f64>>,
}

impl TraceSidecar {
    pub fn describe(ts: &TraceSet) -> Self {
        let meta = ts.meta.as_ref();
        Self {
            format: SIDECAR_FORMAT.to_string(),
            version: SIDECAR_VERSION,
            n_detunings: ts.n_detunings(),
            n_reps: ts.n_reps(),
            slots: ts.slots().to_vec(),
            params: meta.map(|m| ParamsSection::from_params(&m.params)),
            sequence: meta.map(|m| SequenceSection::from_sequence(&m.sequence, GridSection::explicit(&m.sequence.detuning_grid))),
            loss: meta.map(|m| LossSection::from_loss(&m.loss, &m.params)),
            od_true: meta.map(|m| m.od_true.clone()),
        }
    }

    fn meta(&self) -> Result<Option<TraceMeta>> {
        match (&self.params, &self.sequence, &self.loss, &self.od_true) {
            (Some(p), Some(s), Some(l), Some(od)) => {
                let params = p.to_params();
                Ok(Some(TraceMeta {
                    sequence: s.to_sequence()?,
                    loss: l.to_loss(&params),
                    params,
                    od_true: od.clone(),
                }))
            }
            (None, None, None, None) => Ok(None),
            _ => Err(Error::Format("sidecar metadata is incomplete".into())),
        }
    }
}

/// Sidecar path for a CSV file: same stem, `.json` extension.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn traces_to_csv(ts: &TraceSet) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(CSV_HEADER).map_err(fmt)?;
    for (det, &d) in ts.grid().iter().enumerate() {
        let d = to_mhz(d).to_string();
        for rep in 0..ts.n_reps() {
            let r = (rep + 1).to_string();
            for &slot in ts.slots() {
                let v = ts.get(det, rep, slot).to_string();
                w.write_record([d.as_str(), r.as_str(), slot.name(), v.as_str()])
                    .map_err(fmt)?;
            }
        }
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub fn sidecar_to_json(ts: &TraceSet) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(&TraceSidecar::describe(ts)).map_err(|e| Error::Format(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Writes `<path>` and its sidecar atomically.
pub fn write_traces(ts: &TraceSet, path: &Path) -> Result<()> {
    write_atomic(path, &traces_to_csv(ts)?)?;
    write_atomic(&sidecar_path(path), &sidecar_to_json(ts)?)
}

fn parse_f64(field: &str, what: &str, line: u64) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("line {line}: bad {what} {field:?}")))
}

/// Parses the CSV body. Rows may come in any order but every
/// (detuning, repetition, slot) cell must appear exactly once.
pub fn traces_from_csv(text: &[u8]) -> Result<TraceSet> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text);
    let header = r.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    if header.iter().map(str::trim).ne(CSV_HEADER) {
        return Err(Error::Format(format!(
            "expected header {}, got {:?}",
            CSV_HEADER.join(","),
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let d = parse_f64(&rec[0], "detuning", line)?;
        let rep: usize = rec[1]
            .trim()
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::Format(format!("line {line}: bad repetition {:?}", &rec[1])))?;
        let slot = Slot::parse(rec[2].trim())
            .ok_or_else(|| Error::Format(format!("line {line}: bad slot {:?}", &rec[2])))?;
        let v = parse_f64(&rec[3], "transmission", line)?;
        rows.push((d, rep, slot, v));
    }
    if rows.is_empty() {
        return Err(Error::Format("no data rows".into()));
    }
    let mut grid_mhz: Vec<f64> = rows.iter().map(|r| r.0).collect();
    grid_mhz.sort_by(f64::total_cmp);
    grid_mhz.dedup();
    let n_reps = rows.iter().map(|r| r.1).max().unwrap_or(0);
    let n_slots = if rows.iter().any(|r| r.2 == Slot::Od) { 2 } else { 1 };
    let expected = grid_mhz.len() * n_reps * n_slots;
    if rows.len() != expected {
        return Err(Error::Format(format!(
            "{} rows for {} detunings x {n_reps} repetitions x {n_slots} slots",
            rows.len(),
            grid_mhz.len()
        )));
    }
    let mut data = vec![f64::NAN; expected];
    let mut seen = vec![false; expected];
    for (d, rep, slot, v) in rows {
        let det = grid_mhz.binary_search_by(|g| g.total_cmp(&d)).expect("detuning from rows");
        let i = (det * n_reps + rep - 1) * n_slots + slot.index();
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::Format(format!(
                "duplicate row for detuning {d} MHz, repetition {rep}, slot {}",
                slot.name()
            )));
        }
        data[i] = v;
    }
    let grid = grid_mhz.into_iter().map(from_mhz).collect();
    TraceSet::new(grid, n_reps, n_slots, data)
}

pub fn sidecar_from_json(text: &[u8]) -> Result<TraceSidecar> {
    let s: TraceSidecar = serde_json::from_slice(text).map_err(|e| Error::Format(format!("sidecar: {e}")))?;
    if s.format != SIDECAR_FORMAT || s.version != SIDECAR_VERSION {
        return Err(Error::Format(format!(
            "unsupported sidecar format {} v{}",
            s.format, s.version
        )));
    }
    Ok(s)
}

/// Reads a trace CSV and, if present, its sidecar.
pub fn read_traces(path: &Path) -> Result<TraceSet> {
    let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ts = traces_from_csv(&text)?;
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(ts);
    }
    let bytes = std::fs::read(&side).map_err(|e| Error::io(&side, e))?;
    let s = sidecar_from_json(&bytes)?;
    if s.n_detunings != ts.n_detunings() || s.n_reps != ts.n_reps() || s.slots.len() != ts.n_slots() {
        return Err(Error::Format("sidecar shape does not match the CSV".into()));
    }
    Ok(match s.meta()? {
        Some(meta) => ts.with_meta(meta),
        None => ts,
    })
}
