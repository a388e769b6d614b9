//! Run configuration. Files are TOML, frequencies in MHz (ω/2π), times in
//! seconds. A file may name a preset and override any subset of its
//! values; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::presets::Preset;
use crate::analysis::{Block, RegimeOptions};
use crate::error::{Error, FieldError, Result, Validator};
use crate::fit::{DecayOptions, FitConfig};
use crate::model::{EitParams, RydbergConstants};
use crate::sim::{LossModel, Mode, SequenceConfig};
use crate::units::{from_mhz, to_mhz};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    /// Initial optical depth.
    pub od: f64,
    pub gamma_mhz: f64,
    pub omega_c_mhz: f64,
    pub delta_c_mhz: f64,
    pub gamma_ryd_mhz: f64,
    pub offset_mhz: f64,
}

impl ParamsSection {
    pub fn from_params(p: &EitParams) -> Self {
        Self {
            od: p.od,
            gamma_mhz: to_mhz(p.gamma),
            omega_c_mhz: to_mhz(p.omega_c),
            delta_c_mhz: to_mhz(p.delta_c),
            gamma_ryd_mhz: to_mhz(p.gamma_ryd),
            offset_mhz: to_mhz(p.offset),
        }
    }

    pub fn to_params(&self) -> EitParams {
        EitParams {
            od: self.od,
            gamma: from_mhz(self.gamma_mhz),
            omega_c: from_mhz(self.omega_c_mhz),
            delta_c: from_mhz(self.delta_c_mhz),
            gamma_ryd: from_mhz(self.gamma_ryd_mhz),
            offset: from_mhz(self.offset_mhz),
        }
    }
}

/// Detuning grid: either an explicit list or `points` evenly spaced values
/// from `start_mhz` to `stop_mhz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values_mhz: Option<Vec<f64>>,
}

impl GridSection {
    pub fn uniform(start_mhz: f64, stop_mhz: f64, points: usize) -> Self {
        Self {
            start_mhz: Some(start_mhz),
            stop_mhz: Some(stop_mhz),
            points: Some(points),
            values_mhz: None,
        }
    }

    pub fn explicit(values: &[f64]) -> Self {
        Self {
            start_mhz: None,
            stop_mhz: None,
            points: None,
            values_mhz: Some(values.iter().map(|&v| to_mhz(v)).collect()),
        }
    }

    pub fn to_grid(&self) -> Result<Vec<f64>> {
        match (self, &self.values_mhz) {
            (
                GridSection {
                    start_mhz: None,
                    stop_mhz: None,
                    points: None,
                    ..
                },
                Some(v),
            ) => Ok(v.iter().map(|&x| from_mhz(x)).collect()),
            (
                GridSection {
                    start_mhz: Some(a),
                    stop_mhz: Some(b),
                    points: Some(n),
                    ..
                },
                None,
            ) => Ok(crate::sim::uniform_grid(*a, *b, *n)),
            _ => Err(Error::Validation(vec![FieldError::new(
                "sequence.grid",
                "give either values_mhz or all of start_mhz, stop_mhz, points",
            )])),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSection {
    pub n_reps: usize,
    pub t_probe_s: f64,
    pub t_hold_s: f64,
    pub mode: Mode,
    pub probe_power_w: f64,
    pub probe_rabi_mhz: f64,
    pub probe_wavelength_m: f64,
    pub detection_efficiency: f64,
    pub noise: bool,
    pub seed: u64,
    pub grid: GridSection,
}

impl SequenceSection {
    pub fn from_sequence(s: &SequenceConfig, grid: GridSection) -> Self {
        Self {
            n_reps: s.n_reps,
            t_probe_s: s.t_probe,
            t_hold_s: s.t_hold,
            mode: s.mode,
            probe_power_w: s.probe_power,
            probe_rabi_mhz: to_mhz(s.probe_rabi),
            probe_wavelength_m: s.probe_wavelength,
            detection_efficiency: s.detection_efficiency,
            noise: s.noise,
            seed: s.rng_seed,
            grid,
        }
    }

    pub fn to_sequence(&self) -> Result<SequenceConfig> {
        Ok(SequenceConfig {
            n_reps: self.n_reps,
            t_probe: self.t_probe_s,
            t_hold: self.t_hold_s,
            mode: self.mode,
            probe_power: self.probe_power_w,
            probe_rabi: from_mhz(self.probe_rabi_mhz),
            probe_wavelength: self.probe_wavelength_m,
            detection_efficiency: self.detection_efficiency,
            noise: self.noise,
            rng_seed: self.seed,
            detuning_grid: self.grid.to_grid()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    /// Master switch; `false` keeps the optical depth constant.
    pub enabled: bool,
    /// Regime-1 decay time, s. Omit for no decay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau1_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau2_s: Option<f64>,
    pub t_break_s: f64,
    /// Loss-peak position relative to the EIT peak.
    pub shift_mhz: f64,
    pub width_mhz: f64,
    pub amp: f64,
    pub eit_boost: f64,
}

impl LossSection {
    pub fn from_loss(l: &LossModel, p: &EitParams) -> Self {
        let finite = |x: f64| x.is_finite().then_some(x);
        Self {
            enabled: true,
            tau1_s: finite(l.tau1),
            tau2_s: finite(l.tau2),
            t_break_s: l.t_break,
            shift_mhz: to_mhz(l.loss_center - p.eit_peak()),
            width_mhz: to_mhz(l.loss_width),
            amp: l.loss_amp,
            eit_boost: l.eit_loss_boost,
        }
    }

    pub fn to_loss(&self, p: &EitParams) -> LossModel {
        if !self.enabled {
            return LossModel::disabled(p.od);
        }
        LossModel {
            od0: p.od,
            tau1: self.tau1_s.unwrap_or(f64::INFINITY),
            tau2: self.tau2_s.unwrap_or(f64::INFINITY),
            t_break: self.t_break_s,
            loss_center: p.eit_peak() + from_mhz(self.shift_mhz),
            loss_width: from_mhz(self.width_mhz),
            loss_amp: self.amp,
            eit_loss_boost: self.eit_boost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Moving-average window, repetitions.
    pub window: usize,
    /// Repetitions per averaged spectrum or decay point.
    pub block: usize,
    /// First repetition (1-based) of the spectrum used by `fit-od`/`fit-eit`.
    pub fit_start: usize,
    /// Cut detuning; defaults to the EIT peak of `params`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut_mhz: Option<f64>,
    /// Fixed regime boundary, ms. Searched when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub break_ms: Option<f64>,
    /// Repetitions averaged for the late loss-peak spectrum, capped at `n_reps`.
    pub late_count: usize,
    pub equality_k: f64,
    pub equality_run: usize,
    pub z_threshold: f64,
    pub min_points: usize,
    /// Fit the probe linewidth instead of holding it at `params.gamma_mhz`.
    pub fit_gamma: bool,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        let r = RegimeOptions::default();
        Self {
            window: r.window,
            block: r.block,
            fit_start: 1,
            cut_mhz: None,
            break_ms: None,
            late_count: 5 * r.block,
            equality_k: r.equality_k,
            equality_run: r.equality_run,
            z_threshold: r.decay.z_threshold,
            min_points: r.decay.min_points,
            fit_gamma: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Preset the file's values were merged onto.
    pub preset: Preset,
    pub params: ParamsSection,
    pub sequence: SequenceSection,
    pub loss: LossSection,
    pub analysis: AnalysisSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let p = preset.params();
        let s = preset.sequence();
        Self {
            schema_version: SCHEMA_VERSION,
            preset,
            params: ParamsSection::from_params(&p),
            sequence: SequenceSection::from_sequence(&s, GridSection::uniform(-20.0, 20.0, s.detuning_grid.len())),
            loss: LossSection::from_loss(&preset.loss(), &p),
            analysis: AnalysisSection::default(),
            output: OutputSection { dir: PathBuf::from("out") },
        }
    }

    /// Parses a TOML document, merging it onto the preset it names
    /// (`inside` when absent), and validates the result.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| format_error(e.message()))?;
        let preset = match doc.get("preset") {
            None => Preset::Inside,
            Some(v) => Preset::deserialize(v.clone()).map_err(|e| {
                Error::Validation(vec![FieldError::new("preset", e.to_string())])
            })?,
        };
        let mut base = toml::Table::try_from(Self::preset(preset))
            .map_err(|e| Error::Format(e.to_string()))?;
        merge(&mut base, doc);
        let cfg: Self = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| format_error(e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn eit_params(&self) -> EitParams {
        self.params.to_params()
    }

    pub fn sequence_config(&self) -> Result<SequenceConfig> {
        self.sequence.to_sequence()
    }

    pub fn loss_model(&self) -> LossModel {
        self.loss.to_loss(&self.eit_params())
    }

    /// Cut detuning in rad/s.
    pub fn cut_detuning(&self) -> f64 {
        self.analysis
            .cut_mhz
            .map_or_else(|| self.eit_params().eit_peak(), from_mhz)
    }

    pub fn fit_config(&self) -> FitConfig {
        let p = self.eit_params();
        FitConfig {
            gamma: p.gamma,
            fit_gamma: self.analysis.fit_gamma,
            constants: RydbergConstants::with_gamma(p.gamma).unwrap_or_default(),
            ..FitConfig::default()
        }
    }

    pub fn regime_options(&self) -> RegimeOptions {
        let a = &self.analysis;
        let n_reps = self.sequence.n_reps;
        RegimeOptions {
            window: a.window,
            block: a.block,
            equality_k: a.equality_k,
            equality_run: a.equality_run,
            breakpoint: a.break_ms.map(|ms| ms * 1e-3),
            early: Some(Block::new(1, a.block.min(n_reps))),
            late: Some(Block::tail(n_reps, a.late_count)),
            decay: DecayOptions {
                min_points: a.min_points,
                z_threshold: a.z_threshold,
                ..DecayOptions::default()
            },
        }
    }

    /// Checks every field, reporting all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut v = Validator::default();
        v.check(
            self.schema_version == SCHEMA_VERSION,
            "schema_version",
            "unsupported schema version",
        );
        let p = self.eit_params();
        v.extend(p.validate());
        match self.sequence_config() {
            Ok(s) => {
                v.extend(s.validate());
                let a = &self.analysis;
                v.check(a.window >= 1 && a.window <= s.n_reps, "analysis.window", "must be within 1..=n_reps");
                v.check(a.block >= 1 && a.block <= s.n_reps, "analysis.block", "must be within 1..=n_reps");
                v.check(
                    a.fit_start >= 1 && a.fit_start - 1 + a.block <= s.n_reps,
                    "analysis.fit_start",
                    "block must fit within the repetitions",
                );
                v.check(
                    a.late_count >= 1,
                    "analysis.late_count",
                    "must be at least 1",
                );
            }
            Err(e) => {
                v.extend(Err(e));
            }
        }
        if self.loss.enabled {
            v.extend(self.loss_model().validate());
        }
        let a = &self.analysis;
        v.check(a.cut_mhz.is_none_or(f64::is_finite), "analysis.cut_mhz", "must be finite");
        v.check(
            a.break_ms.is_none_or(|b| b.is_finite() && b >= 0.0),
            "analysis.break_ms",
            "must be finite and >= 0",
        );
        v.check(a.equality_k > 0.0, "analysis.equality_k", "must be > 0");
        v.check(a.equality_run >= 1, "analysis.equality_run", "must be >= 1");
        v.check(a.z_threshold > 0.0, "analysis.z_threshold", "must be > 0");
        v.check(a.min_points >= 3, "analysis.min_points", "must be >= 3");
        v.finish()
    }
}

fn format_error(msg: &str) -> Error {
    Error::Validation(vec![FieldError::new("config", msg.trim())])
}

/// Recursively overlays `over` onto `base`; tables merge, values replace.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if k != "grid" => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
