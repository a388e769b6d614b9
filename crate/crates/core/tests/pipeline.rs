use proptest::prelude::*;

use rydfiber::analysis::{self, Block};
use rydfiber::io::pipeline::{self, SpectrumFit};
use rydfiber::io::traces::{read_traces, write_traces};
use rydfiber::io::{Preset, RunConfig};
use rydfiber::sim::{Execution, TraceSet};
use rydfiber::units::{from_mhz, to_mhz};

fn inside_with_shift(shift_mhz: f64, seed: u64) -> (RunConfig, TraceSet) {
    let mut cfg = RunConfig::preset(Preset::Inside);
    cfg.loss.shift_mhz = shift_mhz;
    cfg.sequence.seed = seed;
    let ts = pipeline::simulate_config(&cfg, Execution::Parallel).unwrap();
    (cfg, ts)
}

fn default_shift(cfg: &RunConfig, ts: &TraceSet) -> analysis::PeakShift {
    let n = ts.n_reps();
    analysis::peak_shift(ts, Block::new(1, cfg.analysis.block), Block::tail(n, cfg.analysis.late_count), None).unwrap()
}

#[test]
fn injected_loss_offsets_are_recovered_within_grid_resolution() {
    for injected in [0.0, 1.0, 2.5] {
        for seed in 1..=5 {
            let (cfg, ts) = inside_with_shift(injected, seed);
            let r = default_shift(&cfg, &ts);
            let got = to_mhz(r.shift.expect("both peaks found"));
            assert!(
                (got - injected).abs() <= to_mhz(r.resolution),
                "injected {injected}, seed {seed}: {got}"
            );
        }
    }
}

#[test]
fn file_round_trip_preserves_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, ts) = inside_with_shift(2.5, 3);
    let path = dir.path().join("t.csv");
    write_traces(&ts, &path).unwrap();
    let back = read_traces(&path).unwrap();
    assert_eq!(back.raw(), ts.raw());
    assert_eq!(back.n_reps(), ts.n_reps());
    let opts = cfg.regime_options();
    let a = analysis::detect_regimes(&ts, cfg.cut_detuning(), &opts).unwrap();
    let b = analysis::detect_regimes(&back, cfg.cut_detuning(), &opts).unwrap();
    assert_eq!(a.breakpoint.map(|b| b.rep), b.breakpoint.map(|b| b.rep));
    let fa = pipeline::fit_spectrum(&ts, SpectrumFit::Eit, &cfg).unwrap();
    let fb = pipeline::fit_spectrum(&back, SpectrumFit::Eit, &cfg).unwrap();
    assert!((fa.params.omega_c - fb.params.omega_c).abs() <= 1e-9 * fa.params.omega_c);
}

#[test]
fn absorption_fit_on_the_od_slot_recovers_initial_depth() {
    let mut cfg = RunConfig::preset(Preset::Inside);
    cfg.sequence.noise = false;
    cfg.loss.enabled = false;
    let ts = pipeline::simulate_config(&cfg, Execution::Serial).unwrap();
    let fit = pipeline::fit_spectrum(&ts, SpectrumFit::Od, &cfg).unwrap();
    assert!(fit.converged);
    assert!((fit.params.od - 19.0).abs() < 1e-6, "{}", fit.params.od);
    assert!((to_mhz(fit.params.offset) - 2.2).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn peak_shift_ignores_rigid_grid_shifts(offset in -5.0f64..5.0, seed in 1u64..50) {
        let (cfg, ts) = inside_with_shift(2.5, seed);
        let moved = ts.shifted(from_mhz(offset));
        let a = default_shift(&cfg, &ts);
        let b = default_shift(&cfg, &moved);
        match (a.shift, b.shift) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-6 * from_mhz(1.0), "{x} vs {y}"),
            (x, y) => prop_assert_eq!(x.is_some(), y.is_some()),
        }
    }
}
