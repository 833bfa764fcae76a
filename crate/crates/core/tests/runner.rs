use std::fs;

use serde_json::{json, Value};

use atomlens::config::Scenario;
use atomlens::runner::{resume, run_scenario, sweep, write_sweep, RunOptions, RunReport};
use atomlens::Error;

/// A focus run small enough for a test: 64×128 cells, 180 steps.
fn small_doc() -> Value {
    json!({
        "kind": "focus",
        "species": { "g_accel_m_s2": 90.0 },
        "trap": {
            "omega_x_rad_s": 2513.2741228718346,
            "omega_y_rad_s": 359.03916041026207,
            "omega_z_rad_s": 2513.2741228718346,
            "atom_number": 1000.0,
            "a_s_bec_m": 5.29e-9
        },
        "beam": { "a_s_laser_m": -5.29e-9 },
        "bragg": { "lambda_m": 780.027e-9, "alpha_rad": std::f64::consts::PI, "order": 1, "rabi_rad_s": 3000.0, "resonance_z_m": 4e-6 },
        "focus": { "detuning_hz": 200e9, "lambda_m": 312e-6, "sigma_z_m": 2e-6, "center_z_m": -4e-6, "xi": 5.37 },
        "grid": { "points": [64, 128], "extent_m": [6e-6, 20e-6], "center_m": [0.0, -1e-6] },
        "outputs": { "slice_refine": 16 },
        "stepper": { "dt_s": 2e-6, "t_end_s": 3.6e-4, "steps_per_diagnostic": 10, "stop_at_focus": false, "frame": "midway" }
    })
}

fn scenario(doc: Value) -> Scenario {
    Scenario::from_value(doc).unwrap()
}

fn last_row(r: &RunReport) -> [f64; 5] {
    let row = r.rows.last().unwrap();
    [row.t_s, row.dx_m, row.dvx_m_s, row.m2, row.n_beam]
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

#[test]
fn resumed_run_matches_the_uninterrupted_one() {
    let scn = scenario(small_doc());
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions { out_dir: Some(dir.path().to_path_buf()), snapshot_every: Some(90) };
    let full = run_scenario(&scn, &opts).unwrap();
    let snap = dir.path().join("snapshots/step_000000090.alfs");
    assert!(snap.exists());
    let resumed = resume(&snap, &scn, &RunOptions::default()).unwrap();
    assert_eq!(resumed.stats.resumed_from_step, Some(90));
    for (a, b) in last_row(&full).iter().zip(last_row(&resumed)) {
        assert!(close(*a, b), "{a} vs {b}");
    }
    let (f, g) = (full.focus.unwrap(), resumed.focus.unwrap());
    assert!(f.fwhm_m > 0.0, "{f:?}");
    assert!(close(f.fwhm_m, g.fwhm_m) && close(f.peak_density_per_um2, g.peak_density_per_um2));
}

#[test]
fn damaged_or_mismatched_snapshots_are_rejected() {
    let scn = scenario(small_doc());
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions { out_dir: Some(dir.path().to_path_buf()), snapshot_every: Some(90) };
    run_scenario(&scn, &opts).unwrap();
    let snap = dir.path().join("snapshots/step_000000090.alfs");
    let bytes = fs::read(&snap).unwrap();

    let bad_magic = dir.path().join("magic.alfs");
    let mut b = bytes.clone();
    b[0] = b'X';
    fs::write(&bad_magic, &b).unwrap();
    let err = resume(&bad_magic, &scn, &RunOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Snapshot { .. }), "{err}");
    assert!(err.to_string().contains("magic"));

    let truncated = dir.path().join("short.alfs");
    fs::write(&truncated, &bytes[..bytes.len() - 8]).unwrap();
    assert!(matches!(resume(&truncated, &scn, &RunOptions::default()), Err(Error::Snapshot { .. })));

    let mut other = small_doc();
    other["grid"]["points"] = json!([64, 256]);
    let err = resume(&snap, &scenario(other), &RunOptions::default()).unwrap_err();
    assert!(matches!(err, Error::GridMismatch(_)), "{err}");
}

#[test]
fn single_point_sweep_equals_run() {
    let mut doc = small_doc();
    let run = run_scenario(&scenario(doc.clone()), &RunOptions::default()).unwrap();
    doc["sweep"] = json!({ "axes": [{ "path": "beam.a_s_laser_m", "values": [-5.29e-9] }] });
    let rows = sweep(&scenario(doc), &RunOptions::default(), 1).unwrap();
    assert_eq!(rows.len(), 1);
    let swept = rows[0].outcome.as_ref().unwrap();
    assert_eq!(last_row(&run), last_row(swept));
    assert_eq!(run.focus.unwrap().fwhm_m, swept.focus.as_ref().unwrap().fwhm_m);
}

#[test]
fn sweep_rows_do_not_depend_on_worker_count() {
    let mut doc = small_doc();
    doc["stepper"]["t_end_s"] = json!(6e-5);
    doc["sweep"] = json!({ "axes": [{ "path": "beam.a_s_laser_m", "values": [5.29e-9, 0.0, -5.29e-9] }] });
    let scn = scenario(doc);
    let csv = |workers| {
        let rows = sweep(&scn, &RunOptions::default(), workers).unwrap();
        let mut out = Vec::new();
        write_sweep(&mut out, ["beam.a_s_laser_m"].into_iter(), &rows).unwrap();
        String::from_utf8(out).unwrap()
    };
    let one = csv(1);
    assert_eq!(one, csv(3));
    assert_eq!(one.lines().count(), 4);
    assert!(one.starts_with("beam.a_s_laser_m,fwhm_m,peak_density_per_um2,n_beam"));
}

#[test]
fn failed_points_are_recorded_and_the_sweep_continues() {
    let mut doc = small_doc();
    doc["stepper"]["t_end_s"] = json!(2e-5);
    doc["sweep"] = json!({ "axes": [{ "path": "focus.sigma_z_m", "values": [-1e-6, 2e-6] }] });
    let rows = sweep(&scenario(doc), &RunOptions::default(), 1).unwrap();
    assert!(rows[0].outcome.is_err());
    assert!(rows[1].outcome.is_ok());
    let mut out = Vec::new();
    write_sweep(&mut out, ["focus.sigma_z_m"].into_iter(), &rows).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.lines().nth(1).unwrap().contains("sigma_z"), "{text}");
}

#[test]
fn no_coupling_means_no_beam() {
    let mut doc = small_doc();
    let b = doc["bragg"].as_object_mut().unwrap();
    b.insert("rabi_rad_s".into(), json!(0.0));
    doc["stepper"]["t_end_s"] = json!(4e-5);
    let r = run_scenario(&scenario(doc), &RunOptions::default()).unwrap();
    let f = r.focus.unwrap();
    assert_eq!(f.n_beam, 0.0);
    assert!(f.fwhm_m.is_nan() && f.fit_error.is_some());
    assert!(r.rows.iter().all(|row| row.n_beam == 0.0));
}
