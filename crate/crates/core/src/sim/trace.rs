use serde::{Deserialize, Serialize};

use super::{LossModel, SequenceConfig};
use crate::error::{Error, Result};
use crate::model::EitParams;

/// Probe pulse within one repetition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    /// Control beam on.
    Eit,
    /// Control beam off.
    Od,
}

impl Slot {
    pub fn index(self) -> usize {
        match self {
            Slot::Eit => 0,
            Slot::Od => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Slot::Eit => "eit",
            Slot::Od => "od",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "eit" => Some(Slot::Eit),
            "od" => Some(Slot::Od),
            _ => None,
        }
    }
}

/// Everything needed to regenerate a trace set, plus its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub sequence: SequenceConfig,
    pub loss: LossModel,
    pub params: EitParams,
    /// Optical depth far from the loss peak, one entry per repetition.
    pub od_true: Vec<f64>,
}

/// Transmission indexed by (detuning, repetition, slot).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    grid: Vec<f64>,
    n_reps: usize,
    n_slots: usize,
    data: Vec<f64>,
    pub meta: Option<TraceMeta>,
}

impl TraceSet {
    pub fn new(grid: Vec<f64>, n_reps: usize, n_slots: usize, data: Vec<f64>) -> Result<Self> {
        if !(1..=2).contains(&n_slots) {
            return Err(Error::Format(format!("unsupported slot count {n_slots}")));
        }
        if grid.is_empty() || n_reps == 0 {
            return Err(Error::Format("empty trace set".into()));
        }
        if data.len() != grid.len() * n_reps * n_slots {
            return Err(Error::Format(format!(
                "expected {} samples, got {}",
                grid.len() * n_reps * n_slots,
                data.len()
            )));
        }
        Ok(Self {
            grid,
            n_reps,
            n_slots,
            data,
            meta: None,
        })
    }

    pub fn with_meta(mut self, meta: TraceMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn n_detunings(&self) -> usize {
        self.grid.len()
    }

    pub fn n_reps(&self) -> usize {
        self.n_reps
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn is_two_pulse(&self) -> bool {
        self.n_slots == 2
    }

    pub fn slots(&self) -> &'static [Slot] {
        if self.is_two_pulse() {
            &[Slot::Eit, Slot::Od]
        } else {
            &[Slot::Eit]
        }
    }

    pub fn has_slot(&self, slot: Slot) -> bool {
        slot.index() < self.n_slots
    }

    fn idx(&self, det: usize, rep: usize, slot: Slot) -> usize {
        (det * self.n_reps + rep) * self.n_slots + slot.index()
    }

    /// Transmission at detuning index `det`, 0-based repetition `rep`.
    pub fn get(&self, det: usize, rep: usize, slot: Slot) -> f64 {
        assert!(self.has_slot(slot), "slot {slot:?} absent");
        self.data[self.idx(det, rep, slot)]
    }

    pub fn set(&mut self, det: usize, rep: usize, slot: Slot, value: f64) {
        assert!(self.has_slot(slot), "slot {slot:?} absent");
        let i = self.idx(det, rep, slot);
        self.data[i] = value;
    }

    /// Repetition series at one detuning.
    pub fn series(&self, det: usize, slot: Slot) -> Vec<f64> {
        (0..self.n_reps).map(|r| self.get(det, r, slot)).collect()
    }

    /// Spectrum of a single repetition.
    pub fn spectrum(&self, rep: usize, slot: Slot) -> Vec<f64> {
        (0..self.grid.len()).map(|d| self.get(d, rep, slot)).collect()
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    /// Index of the grid point closest to `detuning`.
    pub fn nearest_index(&self, detuning: f64) -> usize {
        self.grid
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - detuning).abs().total_cmp(&(b.1 - detuning).abs()))
            .map(|(i, _)| i)
            .expect("non-empty grid")
    }

    /// Repetition period, if known from metadata.
    pub fn period(&self) -> Option<f64> {
        self.meta.as_ref().map(|m| m.sequence.period())
    }

    /// Same data with the EIT and OD slots exchanged.
    pub fn swapped_slots(&self) -> Result<Self> {
        if !self.is_two_pulse() {
            return Err(Error::domain("slot swap needs a two-pulse trace set"));
        }
        let mut out = self.clone();
        for pair in out.data.chunks_exact_mut(2) {
            pair.swap(0, 1);
        }
        Ok(out)
    }

    /// Rigidly shifts the detuning axis (and any metadata positions) by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        let mut out = self.clone();
        out.grid.iter_mut().for_each(|d| *d += delta);
        if let Some(meta) = out.meta.as_mut() {
            meta.params.offset += delta;
            meta.loss.loss_center += delta;
            meta.sequence.detuning_grid = out.grid.clone();
        }
        out
    }

    /// Replaces every sample with `f(det, rep, slot, value)`.
    pub fn map(&self, mut f: impl FnMut(usize, usize, Slot, f64) -> f64) -> Self {
        let mut out = self.clone();
        for det in 0..self.grid.len() {
            for rep in 0..self.n_reps {
                for &slot in self.slots() {
                    let i = self.idx(det, rep, slot);
                    out.data[i] = f(det, rep, slot, self.data[i]);
                }
            }
        }
        out
    }
}
