//! Scenario orchestration: builds the Hamiltonian from a scenario, prepares
//! the condensate, evolves, summarises the beam and writes the result files.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;
use serde_json::Value;

use crate::classical::{calibrate_xi, BeamEntry, FocusSearchResult};
use crate::config::{FrameSpec, RunSection, Scenario, ScenarioKind};
use crate::diagnostics::{
    beam_atoms, beam_momentum_width, beam_width, column_density, divergence_in, fit_gaussian, half_max_width,
    quality_factor, width_profile, BeamSlice, DiagnosticRow, PER_UM2,
};
use crate::engine::{
    ground_state, reduced_interaction, reduced_three_body, reduction_width, BeamFrame, Evolver, GroundState,
    GroundStateConfig, LossModel, Physics, TwoStateSystem,
};
use crate::error::{Error, Result};
use crate::field::{atom_number, ComplexField, SimGrid, SpectralPlan};
use crate::params::interaction_strength;
use crate::potentials::{FocusStrength, FocusTerm, GravityTerm, PotentialStack, TrapTerm};
use crate::snapshot::{read_snapshot, write_snapshot};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Where result files go; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    /// Overrides `outputs.snapshot_every`.
    pub snapshot_every: Option<u64>,
}

/// Focused-profile summary on the focal plane.
#[derive(Debug, Clone, Serialize)]
pub struct FocusSummary {
    pub fwhm_m: f64,
    pub peak_density_per_um2: f64,
    pub n_beam: f64,
    pub fit_residual: f64,
    /// Direct half-maximum crossing width, for auditing the fit.
    pub half_max_width_m: f64,
    pub fit_center_m: f64,
    /// Plane actually sampled.
    pub focal_z_m: f64,
    /// Row of smallest rms width within ±2σ_z of the lens center.
    pub waist_z_m: f64,
    pub waist_dx_m: f64,
    pub fit_error: Option<String>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProfileRow {
    pub z_m: f64,
    pub dx_m: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PlaneRow {
    pub z_m: f64,
    pub dx_m: f64,
    pub dvx_m_s: f64,
    pub m2: f64,
    pub n_atoms: f64,
}

/// Width profile along the fall, per-plane momentum widths and divergence fits.
#[derive(Debug, Clone, Serialize)]
pub struct BeamSummary {
    pub profile: Vec<ProfileRow>,
    pub planes: Vec<PlaneRow>,
    pub divergence_kirchhoff_rad: Option<f64>,
    pub divergence_paraxial_rad: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunStats {
    pub steps: u64,
    pub dt_s: f64,
    pub t_final_s: f64,
    pub points: Vec<usize>,
    pub extent_m: Vec<f64>,
    pub wall_time_s: f64,
    pub stopped_at_focus: bool,
    pub resumed_from_step: Option<u64>,
    pub ground_state_iterations: usize,
    pub mu_j: f64,
    pub rabi_rad_s: f64,
    pub sigma_y_m: f64,
    pub focus_power_w: Option<f64>,
    pub xi: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    /// Fully resolved scenario document.
    pub echo: Value,
    pub rows: Vec<DiagnosticRow>,
    pub focus: Option<FocusSummary>,
    pub beam: BeamSummary,
    pub stats: RunStats,
}

/// A scenario turned into solver inputs.
pub struct Prepared {
    pub physics: Physics,
    pub run: RunSection,
    pub condensate: Arc<GroundState>,
    pub sigma_y: f64,
    /// Stop once the beam's leading edge is below this height.
    pub stop_z: Option<f64>,
    pub last_step: u64,
}

type GroundStateCache = Mutex<HashMap<String, Arc<GroundState>>>;

fn cache() -> &'static GroundStateCache {
    static CACHE: OnceLock<GroundStateCache> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Ground states are shared between runs in one process (sweeps vary the
/// beam, rarely the condensate). Debug formatting of f64 round-trips, so
/// the key is exact.
fn cached_ground_state(
    grid: &SimGrid,
    term: &TrapTerm,
    u: f64,
    scn: &Scenario,
    cfg: &GroundStateConfig,
) -> Result<Arc<GroundState>> {
    let key = format!("{:?}|{:?}|{:?}|{:?}|{:?}", grid, term, u, scn.species, cfg);
    if let Some(gs) = cache().lock().expect("ground state cache").get(&key) {
        return Ok(gs.clone());
    }
    let started = Instant::now();
    let gs = Arc::new(match condensate_window(grid, term, u, scn) {
        Some((sub, offset)) => {
            log::debug!("ground state on a {:?} window", sub.points());
            let gs = ground_state(&sub, term, u, &scn.species, cfg)?;
            GroundState { psi: embed(&gs.psi, grid, &offset)?, ..gs }
        }
        None => ground_state(grid, term, u, &scn.species, cfg)?,
    });
    log::info!(
        "ground state: {} iterations, mu/h = {:.1} Hz, {:.1} s",
        gs.iterations,
        gs.mu / (2.0 * std::f64::consts::PI * scn.species.hbar),
        started.elapsed().as_secs_f64()
    );
    cache().lock().expect("ground state cache").insert(key, gs.clone());
    Ok(gs)
}

/// A sub-grid with the full grid's spacing that holds the condensate with
/// room to spare, and its index offset. The ground state decays to nothing
/// well inside it, so embedding it in the full grid leaves it stationary.
fn condensate_window(grid: &SimGrid, term: &TrapTerm, u: f64, scn: &Scenario) -> Option<(SimGrid, Vec<usize>)> {
    let sp = &scn.species;
    let t = &term.trap;
    let dims = grid.dims();
    let mu = if u <= 0.0 {
        0.0
    } else if dims == 2 {
        (t.atom_number * u * sp.mass * t.omega_x * t.omega_z / PI).sqrt()
    } else {
        let w3 = t.omega_x * t.omega_y * t.omega_z;
        (15.0 * t.atom_number * u * w3 * sp.mass.powf(1.5) / (8.0 * PI * 2f64.powf(1.5))).powf(0.4)
    };
    let (omegas, centers): (Vec<f64>, Vec<f64>) = if dims == 2 {
        (vec![t.omega_x, t.omega_z], vec![term.center_x, term.center_z])
    } else {
        (vec![t.omega_x, t.omega_y, t.omega_z], vec![term.center_x, 0.0, term.center_z])
    };
    let mut points = Vec::with_capacity(dims);
    let mut extent = Vec::with_capacity(dims);
    let mut center = Vec::with_capacity(dims);
    let mut offset = Vec::with_capacity(dims);
    for a in 0..dims {
        let n = grid.points()[a];
        let h = grid.spacing(a);
        let r_tf = (2.0 * mu / (sp.mass * omegas[a] * omegas[a])).sqrt();
        let a_ho = (sp.hbar / (sp.mass * omegas[a])).sqrt();
        let half = 1.3 * r_tf + 4.0 * a_ho;
        let ns = ((2.0 * half / h).ceil() as usize).next_power_of_two().min(n);
        let lo = grid.center()[a] - 0.5 * grid.extent()[a];
        let i0 = ((centers[a] - 0.5 * ns as f64 * h - lo) / h).round().clamp(0.0, (n - ns) as f64) as usize;
        points.push(ns);
        extent.push(ns as f64 * h);
        center.push(lo + (i0 as f64 + 0.5 * ns as f64) * h);
        offset.push(i0);
    }
    if points.as_slice() == grid.points() {
        return None;
    }
    Some((SimGrid::new(&points, &extent, &center).ok()?, offset))
}

fn embed(sub: &ComplexField, grid: &SimGrid, offset: &[usize]) -> Result<ComplexField> {
    let sg = sub.grid();
    let mut data = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut idx = vec![0usize; sg.dims()];
    for &v in &sub.data {
        let flat: usize = (0..sg.dims()).map(|a| (idx[a] + offset[a]) * grid.stride(a)).sum();
        data[flat] = v;
        for a in 0..sg.dims() {
            idx[a] += 1;
            if idx[a] < sg.points()[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    ComplexField::from_data(grid, data)
}

/// Speed at height `z` of an atom kicked at the resonance surface.
fn fall_speed(scn: &Scenario, z: f64) -> f64 {
    let v_i = scn.bragg.recoil_velocity(&scn.species);
    (v_i * v_i + 2.0 * scn.species.g_accel * (scn.bragg.resonance_z - z)).max(0.0).sqrt()
}

pub fn prepare(scn: &Scenario) -> Result<Prepared> {
    let run = scn
        .run
        .clone()
        .ok_or_else(|| Error::config("kind", "a calibrate-xi scenario has nothing to evolve"))?;
    let sp = scn.species;
    let grid = &run.grid;
    let dims = grid.dims();
    let sigma_y = run.sigma_y.unwrap_or_else(|| reduction_width(&run.trap, &sp));
    let u_condensate = reduced_interaction(interaction_strength(run.trap.a_s_bec, &sp), dims, sigma_y);
    let u_beam = reduced_interaction(run.beam.interaction_u(&sp), dims, sigma_y);
    let k = if run.three_body { reduced_three_body(sp.three_body_k, dims, sigma_y) } else { 0.0 };

    let trap = TrapTerm { trap: run.trap, center_x: 0.0, center_z: scn.bragg.resonance_z };
    let condensate = cached_ground_state(grid, &trap, u_condensate, scn, &run.ground_state)?;

    let focus = match (&scn.focus, scn.kind) {
        (Some(f), ScenarioKind::Focus) => {
            let v = fall_speed(scn, f.center_z);
            let e0 = 0.5 * sp.mass * v * v;
            Some(FocusTerm { potential: f.resolve(e0, &sp)?, z_window: scn.focus_window })
        }
        _ => None,
    };
    let z_axis = dims - 1;
    let bottom = grid.center()[z_axis] - 0.5 * grid.extent()[z_axis];
    let frame = match run.frame {
        FrameSpec::Envelope => BeamFrame::Envelope,
        FrameSpec::Lab => BeamFrame::Lab,
        FrameSpec::Carrier { velocity_m_s } => BeamFrame::Carrier { velocity_m_s },
        FrameSpec::Midway => {
            let v_launch = scn.bragg.kick_wavenumber_z() * sp.hbar_over_m();
            BeamFrame::Carrier { velocity_m_s: 0.5 * (v_launch - fall_speed(scn, bottom)) }
        }
    };
    let absorber = run.absorber.resolve(grid, fall_speed(scn, bottom));
    let physics = Physics {
        species: sp,
        u_condensate,
        u_beam,
        loss: LossModel { k, convention: run.loss_convention },
        bragg: scn.bragg,
        frame,
        potentials: PotentialStack {
            trap: Some(trap),
            gravity: Some(GravityTerm { reference_z: scn.bragg.resonance_z }),
            focus,
            absorber,
        },
        mu: condensate.mu,
        atom_number: run.trap.atom_number,
    };

    let stop_z = match (&physics.potentials.focus, run.stop_at_focus) {
        (Some(f), true) => {
            let z = f.potential.cfg.center_z - f.potential.cfg.sigma_z;
            if let Some(a) = absorber {
                if z < bottom + a.fraction * grid.extent()[z_axis] {
                    log::warn!("focal plane minus one waist lies in the absorbing layer; running to t_end");
                }
            }
            Some(z)
        }
        _ => None,
    };
    let last_step = (run.t_end / run.stepper.dt).round() as u64;
    Ok(Prepared { physics, run, condensate, sigma_y, stop_z, last_step })
}

/// Lowest z whose line density reaches `fraction` of the densest row.
fn leading_edge(field: &ComplexField, fraction: f64) -> Option<f64> {
    let lines = line_densities(field);
    let max = lines.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return None;
    }
    let zs = field.grid().coords(field.grid().dims() - 1);
    lines.iter().position(|&l| l >= fraction * max).map(|k| zs[k])
}

/// Σ_x column density·dx per z row, atoms/m.
fn line_densities(field: &ComplexField) -> Vec<f64> {
    let grid = field.grid();
    let nx = grid.points()[0];
    let dx = grid.spacing(0);
    column_density(field).chunks_exact(nx).map(|row| row.iter().sum::<f64>() * dx).collect()
}

fn summarize_focus(psin: &ComplexField, scn: &Scenario) -> Option<FocusSummary> {
    let f = scn.focus.as_ref().filter(|_| scn.kind == ScenarioKind::Focus)?;
    let slice = BeamSlice::refined(psin, f.center_z, scn.outputs.slice_refine);
    let n_beam = atom_number(psin);
    let (waist_z_m, waist_dx_m) = width_profile(psin, (f.center_z - 2.0 * f.sigma_z, f.center_z + 2.0 * f.sigma_z), 0.0)
        .into_iter()
        .fold((f64::NAN, f64::NAN), |best, (z, w)| if !(best.1 <= w) { (z, w) } else { best });
    let mut out = FocusSummary {
        fwhm_m: f64::NAN,
        peak_density_per_um2: 0.0,
        n_beam,
        fit_residual: f64::NAN,
        half_max_width_m: f64::NAN,
        fit_center_m: f64::NAN,
        focal_z_m: slice.z,
        waist_z_m,
        waist_dx_m,
        fit_error: None,
    };
    let Some((x_peak, d_peak)) = slice.peak().filter(|p| p.1 > 0.0) else {
        out.fit_error = Some("empty beam on the focal plane".into());
        return Some(out);
    };
    out.peak_density_per_um2 = d_peak * PER_UM2;
    let hmw = half_max_width(&slice.x, &slice.density);
    if let Ok(w) = hmw {
        out.half_max_width_m = w;
    }
    let window = match hmw {
        Ok(w) => slice.window(x_peak, 1.5 * w),
        Err(_) => slice,
    };
    match fit_gaussian(&window) {
        Ok(fit) => {
            out.fwhm_m = fit.fwhm;
            out.fit_residual = fit.residual_rms;
            out.fit_center_m = fit.center;
        }
        Err(e) => out.fit_error = Some(e.to_string()),
    }
    Some(out)
}

fn summarize_beam(psin: &ComplexField, scn: &Scenario, absorber_fraction: f64, plan: &mut SpectralPlan) -> BeamSummary {
    let grid = psin.grid();
    let a = grid.dims() - 1;
    let lo = grid.center()[a] - 0.5 * grid.extent()[a];
    let layer = absorber_fraction * grid.extent()[a];
    let range = (lo + layer, lo + grid.extent()[a] - layer);
    let max_line = line_densities(psin).into_iter().fold(0.0, f64::max);
    let out = &scn.outputs;
    let profile: Vec<(f64, f64)> = if max_line > 0.0 {
        width_profile(psin, range, out.profile_min_fraction * max_line)
    } else {
        Vec::new()
    };
    let hm = scn.species.hbar_over_m();
    let planes = out
        .measure_z_m
        .iter()
        .map(|&z| {
            let w = (z - out.measure_half_thickness_m, z + out.measure_half_thickness_m);
            let dx = beam_width(psin, w).unwrap_or(f64::NAN);
            let dvx = beam_momentum_width(psin, w, hm, plan).unwrap_or(f64::NAN);
            PlaneRow { z_m: z, dx_m: dx, dvx_m_s: dvx, m2: quality_factor(dx, dvx, hm), n_atoms: beam_atoms(psin, w) }
        })
        .collect();
    let zone = |[lo, hi]: [f64; 2]| divergence_in(&profile, lo, hi).ok();
    BeamSummary {
        divergence_kirchhoff_rad: zone(out.kirchhoff_zone_m),
        divergence_paraxial_rad: zone(out.paraxial_zone_m),
        profile: profile.iter().map(|&(z_m, dx_m)| ProfileRow { z_m, dx_m }).collect(),
        planes,
    }
}

/// Runs a free or focus scenario from its prepared condensate.
pub fn run_scenario(scn: &Scenario, opts: &RunOptions) -> Result<RunReport> {
    let prep = prepare(scn)?;
    let sys = TwoStateSystem::new(prep.condensate.psi.clone());
    evolve(scn, prep, sys, opts, None)
}

/// Continues a run from a snapshot written by [`run_scenario`].
pub fn resume(snapshot: &Path, scn: &Scenario, opts: &RunOptions) -> Result<RunReport> {
    let prep = prepare(scn)?;
    let sys = read_snapshot(snapshot)?.into_system(&prep.run.grid, prep.run.stepper.dt)?;
    let from = sys.step_index;
    evolve(scn, prep, sys, opts, Some(from))
}

fn evolve(
    scn: &Scenario,
    prep: Prepared,
    mut sys: TwoStateSystem,
    opts: &RunOptions,
    resumed_from_step: Option<u64>,
) -> Result<RunReport> {
    let started = Instant::now();
    let Prepared { physics, run, condensate, sigma_y, stop_z, last_step } = prep;
    let dt = run.stepper.dt;
    let every = run.stepper.steps_per_diagnostic as u64;
    let rabi = physics.bragg.rabi;
    let focus_power = physics.potentials.focus.map(|f| f.potential.power);
    let xi = scn.focus.as_ref().and_then(|f| match f.strength {
        FocusStrength::Xi(xi) => Some(xi),
        FocusStrength::Power(_) => None,
    });
    let absorber_fraction = physics.potentials.absorber.map_or(0.0, |a| a.fraction);
    let hm = scn.species.hbar_over_m();
    let snapshot_every = opts.snapshot_every.or(scn.outputs.snapshot_every);
    let snapshot_dir = match (&opts.out_dir, snapshot_every) {
        (Some(d), Some(_)) => {
            let dir = d.join("snapshots");
            fs::create_dir_all(&dir)?;
            Some(dir)
        }
        _ => None,
    };

    let mut ev = Evolver::new(physics, run.stepper, &run.grid)?;
    let mut plan = SpectralPlan::new(&run.grid);
    let mut rows = Vec::new();
    let mut stopped_at_focus = false;
    let mut next_snapshot = snapshot_every.map(|n| (sys.step_index / n + 1) * n);
    ev.check(&sys)?;
    rows.push(DiagnosticRow::of(&sys.psin, sys.time(dt), hm, &mut plan));
    while sys.step_index < last_step {
        ev.step(&mut sys);
        if sys.step_index % every != 0 && sys.step_index != last_step {
            continue;
        }
        ev.check(&sys)?;
        let t = sys.time(dt);
        let row = DiagnosticRow::of(&sys.psin, t, hm, &mut plan);
        log::info!("step {} t = {:.4e} s, beam atoms {:.1}, dx {:.3e} m", sys.step_index, t, row.n_beam, row.dx_m);
        rows.push(row);
        if let (Some(dir), Some(next)) = (&snapshot_dir, next_snapshot) {
            if sys.step_index >= next {
                write_snapshot(&dir.join(format!("step_{:09}.alfs", sys.step_index)), &sys, t)?;
                next_snapshot = snapshot_every.map(|n| (sys.step_index / n + 1) * n);
            }
        }
        if let Some(z) = stop_z {
            if leading_edge(&sys.psin, scn.outputs.profile_min_fraction).is_some_and(|edge| edge < z) {
                stopped_at_focus = true;
                break;
            }
        }
    }

    let report = RunReport {
        echo: scn.echo.clone(),
        focus: summarize_focus(&sys.psin, scn),
        beam: summarize_beam(&sys.psin, scn, absorber_fraction, &mut plan),
        rows,
        stats: RunStats {
            steps: sys.step_index,
            dt_s: dt,
            t_final_s: sys.time(dt),
            points: run.grid.points().to_vec(),
            extent_m: run.grid.extent().to_vec(),
            wall_time_s: started.elapsed().as_secs_f64(),
            stopped_at_focus,
            resumed_from_step,
            ground_state_iterations: condensate.iterations,
            mu_j: condensate.mu,
            rabi_rad_s: rabi,
            sigma_y_m: sigma_y,
            focus_power_w: focus_power,
            xi,
        },
    };
    if let Some(dir) = &opts.out_dir {
        write_report(dir, &report)?;
    }
    Ok(report)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

/// timeseries.csv, focus.csv, profile.csv, planes.csv and report.json.
pub fn write_report(dir: &Path, report: &RunReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv_writer(&dir.join("timeseries.csv"))?;
    for row in &report.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    if let Some(f) = &report.focus {
        let mut w = csv_writer(&dir.join("focus.csv"))?;
        w.write_record(["fwhm_m", "peak_density_per_um2", "n_beam", "fit_residual", "half_max_width_m", "focal_z_m"])?;
        w.write_record(
            [f.fwhm_m, f.peak_density_per_um2, f.n_beam, f.fit_residual, f.half_max_width_m, f.focal_z_m]
                .map(|v| v.to_string()),
        )?;
        w.flush()?;
    }
    let mut w = csv_writer(&dir.join("profile.csv"))?;
    w.write_record(["z_m", "dx_m"])?;
    for r in &report.beam.profile {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = csv_writer(&dir.join("planes.csv"))?;
    w.write_record(["z_m", "dx_m", "dvx_m_s", "m2", "n_atoms"])?;
    for r in &report.beam.planes {
        w.serialize(r)?;
    }
    w.flush()?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;
    Ok(())
}

/// One row of a sweep's combined table.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub point: Vec<(String, f64)>,
    pub outcome: std::result::Result<RunReport, String>,
}

pub const SWEEP_COLUMNS: [&str; 6] = ["fwhm_m", "peak_density_per_um2", "n_beam", "fit_residual", "m2_final", "error"];

/// Runs every point of the sweep block on at most `workers` threads. A
/// failing point is recorded in its row and the sweep goes on.
pub fn sweep(scn: &Scenario, opts: &RunOptions, workers: usize) -> Result<Vec<SweepRow>> {
    use rayon::prelude::*;
    let spec = scn.sweep.as_ref().ok_or_else(|| Error::config("sweep", "required for the sweep command"))?;
    let points = spec.points();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid("workers", e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(i, point)| {
                let sub = RunOptions {
                    out_dir: opts.out_dir.as_ref().map(|d| d.join(format!("point_{i:03}"))),
                    snapshot_every: opts.snapshot_every,
                };
                let outcome = scn
                    .with_overrides(point)
                    .and_then(|s| run_scenario(&s, &sub))
                    .map_err(|e| e.to_string());
                if let Err(e) = &outcome {
                    log::error!("sweep point {i} {point:?} failed: {e}");
                }
                SweepRow { point: point.clone(), outcome }
            })
            .collect()
    });
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir)?;
        let file = fs::File::create(dir.join("sweep.csv"))?;
        write_sweep(file, spec.axes.iter().map(|a| a.path.as_str()), &rows)?;
    }
    Ok(rows)
}

/// The combined table: one column per swept path, then [`SWEEP_COLUMNS`].
pub fn write_sweep<'a>(out: impl std::io::Write, axes: impl Iterator<Item = &'a str>, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = axes.map(String::from).collect();
    header.extend(SWEEP_COLUMNS.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for row in rows {
        let mut rec: Vec<String> = row.point.iter().map(|(_, v)| v.to_string()).collect();
        match &row.outcome {
            Ok(r) => {
                let f = r.focus.as_ref();
                let m2 = r.rows.last().map_or(f64::NAN, |d| d.m2);
                let n_beam = r.rows.last().map_or(f64::NAN, |d| d.n_beam);
                rec.extend(
                    [
                        f.map_or(f64::NAN, |f| f.fwhm_m),
                        f.map_or(f64::NAN, |f| f.peak_density_per_um2),
                        n_beam,
                        f.map_or(f64::NAN, |f| f.fit_residual),
                        m2,
                    ]
                    .map(|v| v.to_string()),
                );
                rec.push(f.and_then(|f| f.fit_error.clone()).unwrap_or_default());
            }
            Err(e) => {
                rec.extend(std::iter::repeat("NaN".to_string()).take(SWEEP_COLUMNS.len() - 1));
                rec.push(e.clone());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Classical ξ search for the scenario's lens and beam.
pub fn calibrate(scn: &Scenario) -> Result<FocusSearchResult> {
    let focus = scn.focus.as_ref().ok_or_else(|| Error::config("focus", "required for calibrate-xi"))?;
    let cal = scn
        .calibrate
        .as_ref()
        .ok_or_else(|| Error::config("calibrate", "required for calibrate-xi"))?;
    let entry = BeamEntry {
        initial_speed: scn.bragg.recoil_velocity(&scn.species),
        source_z: scn.bragg.resonance_z,
        half_width: cal.half_width,
        kinematics: cal.kinematics,
    };
    calibrate_xi(cal.target_z, focus, &entry, &scn.species)
}

pub fn write_calibration(out: impl std::io::Write, result: &FocusSearchResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["xi", "focal_z_m", "rms_spot_m"])?;
    w.write_record([result.xi, result.focal_z, result.rms_spot].map(|v| v.to_string()))?;
    w.flush()?;
    Ok(())
}
