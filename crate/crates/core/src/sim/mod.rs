//! Forward simulation of the pulsed measurement sequence.
//!
//! Each probe detuning is an independent experimental run with a fresh atom
//! sample. Within a run the optical depth evolves over the repetitions
//! according to [`LossModel`]; every probe pulse is then detected with
//! Poisson photon statistics.

mod config;
mod detect;
mod trace;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{uniform_grid, LossModel, Mode, SequenceConfig};
pub use detect::{detect, photon_budget, photons_per_pulse, weak_probe_check};
pub use trace::{Slot, TraceMeta, TraceSet};

use crate::error::{Result, Validator};
use crate::model::EitParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

/// RNG for one detuning run. Streams are independent of scheduling, so
/// serial and parallel runs produce identical samples.
fn run_rng(seed: u64, det_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(det_index as u64);
    rng
}

pub fn validate_inputs(p: &EitParams, s: &SequenceConfig, l: &LossModel) -> Result<()> {
    Validator::default()
        .extend(p.validate())
        .extend(s.validate())
        .extend(l.validate())
        .finish()
}

/// Simulates the full trace set. `p.od` is ignored; the optical depth comes
/// from the loss model.
pub fn simulate(p: &EitParams, s: &SequenceConfig, l: &LossModel) -> Result<TraceSet> {
    simulate_with(p, s, l, Execution::default())
}

pub fn simulate_with(
    p: &EitParams,
    s: &SequenceConfig,
    l: &LossModel,
    exec: Execution,
) -> Result<TraceSet> {
    validate_inputs(p, s, l)?;
    if !weak_probe_check(p, s) {
        log::warn!("probe Rabi frequency is not small compared with γ; the steady-state lineshape may not apply");
    }
    let n_slots = s.mode.n_slots();
    let run = |(i, &d): (usize, &f64)| simulate_run(i, d, p, s, l);
    let runs: Vec<Vec<f64>> = match exec {
        Execution::Serial => s.detuning_grid.iter().enumerate().map(run).collect(),
        Execution::Parallel => s.detuning_grid.par_iter().enumerate().map(run).collect(),
    };
    let data = runs.concat();
    let period = s.period();
    let od_true = (0..s.n_reps).map(|n| l.od0 * l.amplitude(n as f64 * period)).collect();
    let meta = TraceMeta {
        sequence: s.clone(),
        loss: l.clone(),
        params: p.with_od(l.od0),
        od_true,
    };
    Ok(TraceSet::new(s.detuning_grid.clone(), s.n_reps, n_slots, data)?.with_meta(meta))
}

fn simulate_run(
    det_index: usize,
    detuning: f64,
    p: &EitParams,
    s: &SequenceConfig,
    l: &LossModel,
) -> Vec<f64> {
    let mut rng = run_rng(s.rng_seed, det_index);
    let n_slots = s.mode.n_slots();
    let control_on = p.omega_c > 0.0;
    let period = s.period();
    let mut out = Vec::with_capacity(s.n_reps * n_slots);
    for rep in 0..s.n_reps {
        let od = l.od_at(detuning, rep, period, control_on);
        let eit = p.with_od(od).transmission(detuning);
        out.push(detect(eit, s, &mut rng));
        if n_slots == 2 {
            let bare = (-od * EitParams { omega_c: 0.0, ..*p }.chi(detuning).im).exp();
            out.push(detect(bare, s, &mut rng));
        }
    }
    out
}
