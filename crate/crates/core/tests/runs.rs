use mcmflow_core::diagnose::{self, trace_identity};
use mcmflow_core::geometry::ContactAngle;
use mcmflow_core::planar::{self, PlanarConfig, PlanarState};
use mcmflow_core::radial::{self, RadialConfig, RadialState};
use mcmflow_core::seed::{lens_profile, radial_lens_seed, Cutoff};
use mcmflow_core::snapshot::{Snapshot, SnapshotData};
use mcmflow_core::trace::{ExitReason, RunTrace};

fn lens_trace(n: usize, t_end: f64) -> RunTrace {
    let prof = lens_profile(0.5, 1.0).unwrap();
    let seed = radial_lens_seed(&prof, n, Cutoff::default()).unwrap();
    let mut cfg = RadialConfig::new(0.5).unwrap();
    cfg.control.t_end = t_end;
    cfg.control.snapshot_every = 200;
    cfg.control.probe_times = vec![0.5 * t_end];
    radial::run(&cfg, seed).unwrap()
}

#[test]
fn lens_shrinks_and_stays_concave() {
    let tr = lens_trace(40, 0.05);
    assert_eq!(tr.exit, ExitReason::EndTime);
    let radii: Vec<f64> = tr.records.iter().map(|r| r.radius).collect();
    assert!(radii.windows(2).all(|w| w[1] <= w[0]), "contact radius must not grow");
    assert!(tr.summary.h_eig_max < 0.0);
    assert!(tr.summary.sup_v_max <= 2.0 * (1.0 + 1e-3));
    assert!(tr.records.iter().all(|r| r.h_max < 0.0));
}

#[test]
fn lens_reaches_extinction() {
    let tr = lens_trace(24, 1.0);
    assert_eq!(tr.exit, ExitReason::Extinction);
    let t = tr.summary.extinction_time.unwrap();
    assert!(t > 0.2 && t < 0.3, "extinction at {t}");
}

#[test]
fn stored_curvature_extremes_match_fields() {
    let tr = lens_trace(32, 0.02);
    for (snap, meta) in tr.snapshots.iter().zip(&tr.snapshot_index) {
        assert_eq!(snap.step, meta.step);
        let rep = trace_identity(snap, meta).unwrap();
        assert!(rep.pass, "{rep:?}");
    }
}

#[test]
fn corrupted_snapshot_fails_trace_identity() {
    let tr = lens_trace(32, 0.02);
    let mut snap = tr.snapshots.last().unwrap().clone();
    let meta = tr.snapshot_index.last().unwrap();
    if let SnapshotData::Radial { u, .. } = &mut snap.data {
        u[5] += 1e-3;
    }
    assert!(!trace_identity(&snap, meta).unwrap().pass);
    if let SnapshotData::Radial { u, .. } = &mut snap.data {
        u[5] = f64::NAN;
    }
    let rep = trace_identity(&snap, meta).unwrap();
    assert!(!rep.pass && rep.max_residual.is_infinite());
}

#[test]
fn snapshots_survive_json_bit_for_bit() {
    let tr = lens_trace(32, 0.01);
    for snap in &tr.snapshots {
        let back = Snapshot::from_json(&snap.to_json().unwrap()).unwrap();
        assert_eq!(&back, snap);
    }
}

#[test]
fn probe_states_are_equally_spaced_around_probe_time() {
    let tr = lens_trace(32, 0.02);
    let p = &tr.probes[0];
    let [a, m, b] = &p.snapshots;
    assert!((m.t - 0.01).abs() < 1e-14);
    assert!(((m.t - a.t) - (b.t - m.t)).abs() < 1e-14);
    assert!((p.dt - (m.t - a.t)).abs() < 1e-15);
    assert!(a.step < m.step && m.step < b.step);
}

#[test]
fn embedded_planar_run_tracks_radial_run() {
    let prof = lens_profile(0.5, 1.0).unwrap();
    let n = 16;
    let seed = radial_lens_seed(&prof, n, Cutoff::default()).unwrap();
    let mut rc = RadialConfig::new(0.5).unwrap();
    rc.control.t_end = 0.02;
    let rt = radial::run(&rc, seed.clone()).unwrap();
    let mut pc = PlanarConfig::new(0.5).unwrap();
    pc.control.t_end = 0.02;
    let pt = planar::run(&pc, planar::radial_embedding(&seed, 32).unwrap()).unwrap();
    let rs = RadialState::from_snapshot(rt.snapshots.last().unwrap()).unwrap();
    let ps = PlanarState::from_snapshot(pt.snapshots.last().unwrap()).unwrap();
    let dr = ps.grid.dr;
    assert!((rs.contact_radius() - ps.mean_radius()).abs() < 5.0 * dr * dr);
    assert!((pt.summary.t_final - rt.summary.t_final).abs() < 1e-12);
}

#[test]
fn catenoid_is_stationary_with_exact_boundary_identities() {
    let a = ContactAngle::new(0.5).unwrap();
    let state = radial::catenoid_state(a, 60, 3.0).unwrap();
    let mut cfg = RadialConfig::new(0.5).unwrap();
    cfg.control.t_end = 0.05;
    let tr = radial::run(&cfg, state).unwrap();
    let last = RadialState::from_snapshot(tr.snapshots.last().unwrap()).unwrap();
    assert!(radial::catenoid_drift(&last, a) < 1e-2);
    let exact = diagnose::boundary_residuals(&diagnose::catenoid_jet(a).frame(), a);
    assert!(exact.iter().all(|r| r.abs() < 1e-12), "{exact:?}");
}
