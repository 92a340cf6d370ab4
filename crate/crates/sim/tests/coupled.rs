use plasmanet_core::field::mean_abs;
use plasmanet_core::GridSpec;
use plasmanet_sim::oscillation::{self, measure_period, plasma_frequency, OscillationConfig};
use plasmanet_sim::streamer::{self, StreamerConfig};
use plasmanet_sim::{PoissonBackend, PoissonSolver};

#[test]
fn coarse_oscillation_keeps_plasma_period() {
    let cfg = OscillationConfig {
        grid: GridSpec::square(31, 0.01).unwrap(),
        periods: 1.5,
        ..OscillationConfig::default()
    };
    let d = oscillation::run(&cfg, PoissonBackend::Cg { rtol: 1e-10 }).unwrap();
    let (_, tp) = plasma_frequency(cfg.n0).unwrap();
    let t = measure_period(&d.times, &d.mean_probe).unwrap();
    assert!((t - tp).abs() / tp < 0.03, "{t} vs {tp}");
    let m0 = d.final_state.total_mass();
    let init = cfg.initial_state().unwrap().total_mass();
    assert!((m0 - init).abs() / init < 1e-10);
}

#[test]
fn analytic_and_cg_backends_track_each_other() {
    let cfg = OscillationConfig {
        grid: GridSpec::square(31, 0.01).unwrap(),
        periods: 0.5,
        ..OscillationConfig::default()
    };
    let a = oscillation::run(&cfg, PoissonBackend::Analytic { modes: 30 }).unwrap();
    let c = oscillation::run(&cfg, PoissonBackend::Cg { rtol: 1e-10 }).unwrap();
    assert_eq!(a.times.len(), c.times.len());
    let scale = c.mean_probe.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (x, y) in a.mean_probe.iter().zip(&c.mean_probe) {
        assert!((x - y).abs() < 0.05 * scale, "{x} vs {y}");
    }
}

#[test]
fn short_streamer_run_is_well_behaved() {
    let cfg = StreamerConfig {
        grid: GridSpec::axisymmetric(161, 41, 4e-3, 1e-3).unwrap(),
        steps: 60,
        sample_every: 20,
        snapshot_steps: vec![60],
        ..StreamerConfig::default()
    };
    let mut solver = PoissonSolver::new(PoissonBackend::Cg { rtol: 1e-10 }, cfg.grid).unwrap();
    let d = streamer::run_with(&cfg, &mut solver).unwrap();
    assert_eq!(d.rows.len(), 4);
    assert!(d.min_density >= 0.0);
    assert!(d.rows.windows(2).all(|w| w[1].energy >= w[0].energy));
    assert!(d.rows.windows(2).all(|w| w[1].x_neg <= w[0].x_neg));
    assert_eq!(d.snapshots.len(), 1);
    assert!(mean_abs(&d.snapshots[0].e_norm) > 0.0);
    assert!(solver.solves >= 60);
}
