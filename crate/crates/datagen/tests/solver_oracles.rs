//! Solver checks against exact and empirical references.

use fcpinn_datagen::records::export_dataset;
use fcpinn_datagen::solver::{simulate_with_stats, InletProfile};
use fcpinn_datagen::spectrum::{dominant_frequency, probe_series, WAKE_PROBE};
use fcpinn_datagen::taylor_green::observed_order;
use fcpinn_datagen::{
    simulate, taylor_green_validation, ChannelGeometry, DesignPoint, FlowTable, RoiGrid, SolverConfig,
    TaylorGreenConfig,
};
use proptest::prelude::*;

fn small() -> SolverConfig {
    SolverConfig {
        nx: 72,
        ny: 16,
        dt: 2.5e-3,
        end_time: 0.5,
        roi_nx: 16,
        roi_ny: 4,
        ..SolverConfig::desk()
    }
}

#[test]
fn taylor_green_error_and_order() {
    let coarse = taylor_green_validation(&TaylorGreenConfig::default());
    let fine = taylor_green_validation(&TaylorGreenConfig {
        n: 128,
        ..Default::default()
    });
    assert!(coarse.max_rel_error < 0.02, "{coarse:?}");
    let order = observed_order(&coarse, &fine);
    assert!(order >= 1.5, "observed order {order}");
    assert!(coarse.max_divergence < 1e-10 && fine.max_divergence < 1e-10);
}

#[test]
fn wake_frequency_is_near_the_correlation() {
    let d = DesignPoint::new(1.0, 0.1);
    let g = ChannelGeometry::new(d.d_y);
    let cfg = SolverConfig::desk();
    let snaps = simulate(d, &g, &cfg).unwrap();
    let sig = probe_series(&snaps, &RoiGrid::new(cfg.roi_nx, cfg.roi_ny, &g), WAKE_PROBE.0, WAKE_PROBE.1);
    let f = dominant_frequency(&sig, cfg.output_cadence).unwrap();
    let expected = 0.21 * (1.0 - 21.0 / 100.0) * 10.0;
    assert!(((f - expected) / expected).abs() <= 0.25, "measured {f}, expected {expected}");
}

#[test]
fn export_is_byte_deterministic() {
    let d = DesignPoint::new(0.9, 0.09);
    let g = ChannelGeometry::new(d.d_y);
    let cfg = small();
    let roi = RoiGrid::new(cfg.roi_nx, cfg.roi_ny, &g);
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.fcds"), dir.path().join("b.fcds"));
    let n = export_dataset(&[(d, simulate(d, &g, &cfg).unwrap())], &roi, &a).unwrap();
    export_dataset(&[(d, simulate(d, &g, &cfg).unwrap())], &roi, &b).unwrap();
    assert_eq!(n, 11 * 64);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let table = FlowTable::read_binary(&a).unwrap();
    let csv = dir.path().join("a.csv");
    table.write_csv(&csv).unwrap();
    assert_eq!(FlowTable::read_csv(&csv).unwrap(), table);
}

#[test]
fn channel_run_stays_divergence_free_and_below_cfl() {
    let d = DesignPoint::new(1.0, 0.11);
    let g = ChannelGeometry::new(d.d_y);
    let cfg = small();
    let (snaps, stats) = simulate_with_stats(d, &g, &cfg).unwrap();
    // already scaled by h / u_ref
    assert!(stats.max_divergence < 1e-8, "{stats:?}");
    assert!(stats.max_cfl < 1.0);
    assert_eq!(snaps.len(), cfg.output_count());
    assert!(snaps.iter().all(|s| s.u.iter().chain(&s.v).chain(&s.p).all(|v| v.is_finite())));
}

#[test]
fn uniform_inlet_is_selectable() {
    let d = DesignPoint::new(0.8, 0.08);
    let g = ChannelGeometry::new(d.d_y);
    let cfg = SolverConfig {
        inlet: InletProfile::Uniform,
        end_time: 0.1,
        ..small()
    };
    let snaps = simulate(d, &g, &cfg).unwrap();
    assert_eq!(snaps.len(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn designs_in_the_box_run_cleanly(u in 0.8..1.0f64, dy in 0.08..0.11f64) {
        let d = DesignPoint::new(u, dy);
        let g = ChannelGeometry::new(dy);
        let cfg = SolverConfig { end_time: 0.1, ..small() };
        let (_, stats) = simulate_with_stats(d, &g, &cfg).unwrap();
        prop_assert!(stats.max_divergence < 1e-9);
    }
}
