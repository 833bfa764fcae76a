//! Scenario files.
//!
//! A scenario is a JSON document with unit-suffixed keys. Physics values have
//! no defaults apart from the species constants; numerical settings that have
//! one say so below. Errors name the dotted key path that caused them.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bragg::{rabi_for_width, BraggConfig};
use crate::classical::LensKinematics;
use crate::engine::{GroundStateConfig, LossConvention, StepperConfig};
use crate::error::{Error, Result};
use crate::field::SimGrid;
use crate::params::{BeamParams, SpeciesParams, TrapParams};
use crate::potentials::{Absorber, FocusConfig, FocusStrength};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Outcoupling and free fall, no focusing potential.
    Free,
    /// Outcoupling, fall and focusing.
    Focus,
    /// Classical ξ calibration only.
    CalibrateXi,
}

/// How a `focus.detuning_hz` value is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetuningHzReading {
    /// Δ = 2π·value.
    #[default]
    Cycles,
    /// Δ = value, already angular.
    Angular,
}

/// Frame of the beam field as written in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameSpec {
    #[default]
    Envelope,
    Lab,
    Carrier { velocity_m_s: f64 },
    /// Carrier moving at the mean of the launch velocity and the free-fall
    /// velocity at the bottom of the grid, so the z grid covers both ends
    /// of the fall whatever the kick.
    Midway,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: ScenarioKind,
    #[serde(default)]
    species: SpeciesParams,
    trap: Option<TrapParams>,
    beam: Option<BeamParams>,
    bragg: RawBragg,
    focus: Option<RawFocus>,
    grid: Option<RawGrid>,
    stepper: Option<RawStepper>,
    #[serde(default)]
    outputs: Outputs,
    calibrate: Option<RawCalibrate>,
    sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBragg {
    lambda_m: f64,
    alpha_rad: Option<f64>,
    order: Option<u32>,
    /// Total kick in units of ħk, replacing `order` and `alpha_rad`.
    kick_hbar_k: Option<f64>,
    rabi_rad_s: Option<f64>,
    delta_z_m: Option<f64>,
    #[serde(default = "default_resonance_z")]
    resonance_z_m: f64,
}

fn default_resonance_z() -> f64 {
    150e-6
}

fn default_focus_center() -> f64 {
    -150e-6
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFocus {
    detuning_rad_s: Option<f64>,
    detuning_hz: Option<f64>,
    #[serde(default)]
    detuning_hz_reading: DetuningHzReading,
    lambda_m: f64,
    sigma_z_m: f64,
    #[serde(default = "default_focus_center")]
    center_z_m: f64,
    power_w: Option<f64>,
    xi: Option<f64>,
    z_window_m: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    points: Vec<usize>,
    extent_m: Vec<f64>,
    center_m: Vec<f64>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStepper {
    dt_s: f64,
    t_end_s: f64,
    steps_per_diagnostic: usize,
    #[serde(default = "yes")]
    pump_renormalize: bool,
    #[serde(default)]
    ramp_time_s: f64,
    #[serde(default)]
    frame: FrameSpec,
    #[serde(default)]
    loss_convention: LossConvention,
    #[serde(default = "yes")]
    three_body: bool,
    #[serde(default)]
    absorber: AbsorberSpec,
    sigma_y_m: Option<f64>,
    #[serde(default = "yes")]
    stop_at_focus: bool,
    #[serde(default)]
    ground_state: RawGroundState,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawGroundState {
    tolerance: Option<f64>,
    dtau: Option<f64>,
    dtau_final: Option<f64>,
    max_steps: Option<usize>,
}

/// Absorbing layer. Without `max_rate_s` the rate is set from the fastest
/// beam speed on the grid, see [`AbsorberSpec::resolve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AbsorberSpec {
    pub enabled: bool,
    pub fraction: f64,
    pub max_rate_s: Option<f64>,
}

impl Default for AbsorberSpec {
    fn default() -> Self {
        Self { enabled: true, fraction: Absorber::DEFAULT_FRACTION, max_rate_s: None }
    }
}

/// Amplitude attenuation exp(−∫W dt) aimed at for one pass through the layer
/// at the fastest beam speed.
pub const ABSORBER_PASS_DECAY: f64 = 10.0;

impl AbsorberSpec {
    /// With `max_rate_s` unset, W_max is chosen so that an atom crossing the
    /// z layer (thickness L) at speed v sees ∫W dt = W_max·L/(2v) equal to
    /// [`ABSORBER_PASS_DECAY`].
    pub fn resolve(&self, grid: &SimGrid, fastest_speed: f64) -> Option<Absorber> {
        if !self.enabled {
            return None;
        }
        let layer = self.fraction * grid.extent()[grid.dims() - 1];
        let max_rate = self
            .max_rate_s
            .unwrap_or(2.0 * ABSORBER_PASS_DECAY * fastest_speed / layer);
        Some(Absorber { fraction: self.fraction, max_rate })
    }
}

/// Output options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    /// Steps between snapshots; none when unset.
    pub snapshot_every: Option<u64>,
    /// Planes where the free-propagation run reports Δx, Δv_x and M².
    pub measure_z_m: Vec<f64>,
    /// Half thickness of the slab around each measurement plane.
    pub measure_half_thickness_m: f64,
    /// Rows of the width profile are kept when their line density is at
    /// least this fraction of the densest row.
    pub profile_min_fraction: f64,
    /// z ranges of the two divergence fits, [lo, hi].
    pub kirchhoff_zone_m: [f64; 2],
    pub paraxial_zone_m: [f64; 2],
    /// Fourier refinement of the focal slice along x before the fit.
    pub slice_refine: usize,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            snapshot_every: None,
            measure_z_m: Vec::new(),
            measure_half_thickness_m: 2e-6,
            profile_min_fraction: 1e-3,
            kirchhoff_zone_m: [0.0, 140e-6],
            paraxial_zone_m: [-140e-6, 0.0],
            slice_refine: 8,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCalibrate {
    target_z_m: Option<f64>,
    half_width_m: f64,
    #[serde(default)]
    kinematics: LensKinematics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Dotted config path, e.g. `beam.a_s_laser_m`.
    pub path: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axes: Vec<SweepAxis>,
}

impl SweepSpec {
    fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::config("sweep.axes", format!("need one or two axes, got {}", self.axes.len())));
        }
        for (i, a) in self.axes.iter().enumerate() {
            if a.values.is_empty() {
                return Err(Error::config(format!("sweep.axes[{i}].values"), "must not be empty"));
            }
            if a.path.starts_with("sweep") || a.path == "kind" {
                return Err(Error::config(format!("sweep.axes[{i}].path"), format!("`{}` cannot be swept", a.path)));
            }
        }
        Ok(())
    }

    /// Cartesian product of the axes; the last axis varies fastest.
    pub fn points(&self) -> Vec<Vec<(String, f64)>> {
        let mut out: Vec<Vec<(String, f64)>> = vec![Vec::new()];
        for axis in &self.axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push((axis.path.clone(), v));
                        p
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrateSection {
    pub target_z: f64,
    pub half_width: f64,
    pub kinematics: LensKinematics,
}

/// Settings of a time-dependent run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub trap: TrapParams,
    pub beam: BeamParams,
    pub grid: SimGrid,
    pub stepper: StepperConfig,
    pub t_end: f64,
    pub stop_at_focus: bool,
    pub frame: FrameSpec,
    pub loss_convention: LossConvention,
    pub three_body: bool,
    pub absorber: AbsorberSpec,
    pub sigma_y: Option<f64>,
    pub ground_state: GroundStateConfig,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub species: SpeciesParams,
    pub bragg: BraggConfig,
    pub focus: Option<FocusConfig>,
    pub focus_window: Option<(f64, f64)>,
    pub run: Option<RunSection>,
    pub calibrate: Option<CalibrateSection>,
    pub outputs: Outputs,
    pub sweep: Option<SweepSpec>,
    /// The document this scenario was built from, with overrides applied.
    pub echo: Value,
}

fn exactly_one<T>(section: &str, a: (&str, Option<T>), b: (&str, Option<T>)) -> Result<(bool, T)> {
    match (a.1, b.1) {
        (Some(v), None) => Ok((true, v)),
        (None, Some(v)) => Ok((false, v)),
        (Some(_), Some(_)) => Err(Error::config(
            format!("{section}.{}", a.0),
            format!("give exactly one of `{}` and `{}`, not both", a.0, b.0),
        )),
        (None, None) => Err(Error::config(
            format!("{section}.{}", a.0),
            format!("missing: give exactly one of `{}` and `{}`", a.0, b.0),
        )),
    }
}

fn require<T>(v: Option<T>, path: &str, kind: ScenarioKind) -> Result<T> {
    v.ok_or_else(|| Error::config(path, format!("required for a `{kind:?}` scenario")))
}

fn parse_error(err: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let path = err.path().to_string();
    let inner = err.into_inner().to_string();
    // Missing fields are reported at the parent; name the field itself.
    if let Some(rest) = inner.strip_prefix("missing field `") {
        if let Some(field) = rest.split('`').next() {
            let full = if path == "." { field.to_string() } else { format!("{path}.{field}") };
            return Error::config(full, "missing required key");
        }
    }
    Error::config(path, inner)
}

/// Sets `path` in `doc`, dropping keys that the new value replaces.
pub fn apply_override(doc: &mut Value, path: &str, value: f64) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    let (last, parents) = parts.split_last().ok_or_else(|| Error::config(path, "empty path"))?;
    let mut node = doc;
    for p in parents {
        node = node
            .get_mut(*p)
            .ok_or_else(|| Error::config(path, format!("section `{p}` is not in the config")))?;
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| Error::config(path, "parent is not an object"))?;
    let replaced: &[&str] = match (parents.last().copied(), *last) {
        (Some("bragg"), "kick_hbar_k") => &["order", "alpha_rad"],
        (Some("bragg"), "order") | (Some("bragg"), "alpha_rad") => &["kick_hbar_k"],
        (Some("bragg"), "rabi_rad_s") => &["delta_z_m"],
        (Some("bragg"), "delta_z_m") => &["rabi_rad_s"],
        (Some("focus"), "power_w") => &["xi"],
        (Some("focus"), "xi") => &["power_w"],
        (Some("focus"), "detuning_rad_s") => &["detuning_hz"],
        (Some("focus"), "detuning_hz") => &["detuning_rad_s"],
        _ => &[],
    };
    for k in replaced {
        obj.remove(*k);
    }
    // Integer keys (order, step counts) stay integers.
    let integer = *last == "order" || obj.get(*last).is_some_and(Value::is_u64);
    let v = if integer {
        if !(value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
            return Err(Error::config(path, format!("must be a positive integer, got {value}")));
        }
        Value::from(value as u64)
    } else {
        serde_json::Number::from_f64(value)
            .map(Value::Number)
            .ok_or_else(|| Error::config(path, "value must be finite"))?
    };
    obj.insert(last.to_string(), v);
    Ok(())
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| Error::config("<file>", format!("not valid JSON: {e}")))?;
        Self::from_value(doc)
    }

    pub fn from_value(doc: Value) -> Result<Self> {
        let raw: RawConfig = serde_path_to_error::deserialize(&doc).map_err(parse_error)?;
        Self::resolve(raw, doc)
    }

    /// The same scenario with `overrides` applied and the sweep block removed.
    pub fn with_overrides(&self, overrides: &[(String, f64)]) -> Result<Self> {
        let mut doc = self.echo.clone();
        if let Some(obj) = doc.as_object_mut() {
            obj.remove("sweep");
        }
        for (p, v) in overrides {
            apply_override(&mut doc, p, *v)?;
        }
        Self::from_value(doc)
    }

    fn resolve(raw: RawConfig, echo: Value) -> Result<Self> {
        let kind = raw.kind;
        let species = raw.species;
        species.validate()?;

        let (order, alpha) = match (raw.bragg.kick_hbar_k, raw.bragg.order, raw.bragg.alpha_rad) {
            (Some(p), None, None) => {
                if !(p.is_finite() && p > 0.0) {
                    return Err(Error::config("bragg.kick_hbar_k", "must be > 0"));
                }
                BraggConfig::order_and_angle_for_kick(p)?
            }
            (Some(_), _, _) => {
                return Err(Error::config("bragg.kick_hbar_k", "replaces `order` and `alpha_rad`; give one form only"))
            }
            (None, Some(n), Some(a)) => (n, a),
            (None, None, _) => return Err(Error::config("bragg.order", "missing required key")),
            (None, Some(_), None) => return Err(Error::config("bragg.alpha_rad", "missing required key")),
        };

        let trap = raw.trap;
        if let Some(t) = &trap {
            t.validate()?;
        }
        let rabi = if kind == ScenarioKind::CalibrateXi {
            raw.bragg.rabi_rad_s.unwrap_or(0.0)
        } else {
            let (is_rabi, v) = exactly_one(
                "bragg",
                ("rabi_rad_s", raw.bragg.rabi_rad_s),
                ("delta_z_m", raw.bragg.delta_z_m),
            )?;
            if is_rabi {
                v
            } else {
                let t = require(trap, "trap", kind)?;
                rabi_for_width(v, &t, &species).map_err(|e| Error::config("bragg.delta_z_m", e.to_string()))?
            }
        };
        let bragg = BraggConfig {
            wavelength: raw.bragg.lambda_m,
            alpha,
            order,
            rabi,
            resonance_z: raw.bragg.resonance_z_m,
        };
        bragg.validate()?;

        let (focus, focus_window) = match raw.focus {
            Some(f) => {
                let (is_rad, d) = exactly_one("focus", ("detuning_rad_s", f.detuning_rad_s), ("detuning_hz", f.detuning_hz))?;
                let detuning = if is_rad {
                    d
                } else {
                    match f.detuning_hz_reading {
                        DetuningHzReading::Cycles => 2.0 * std::f64::consts::PI * d,
                        DetuningHzReading::Angular => d,
                    }
                };
                let (is_power, s) = exactly_one("focus", ("power_w", f.power_w), ("xi", f.xi))?;
                let cfg = FocusConfig {
                    detuning,
                    wavelength: f.lambda_m,
                    sigma_z: f.sigma_z_m,
                    center_z: f.center_z_m,
                    strength: if is_power { FocusStrength::Power(s) } else { FocusStrength::Xi(s) },
                };
                cfg.validate()?;
                let window = match f.z_window_m {
                    Some([lo, hi]) if lo < hi => Some((lo, hi)),
                    Some(_) => return Err(Error::config("focus.z_window_m", "need [lo, hi] with lo < hi")),
                    None => None,
                };
                (Some(cfg), window)
            }
            None => (None, None),
        };
        if matches!(kind, ScenarioKind::Focus | ScenarioKind::CalibrateXi) && focus.is_none() {
            return Err(Error::config("focus", format!("required for a `{kind:?}` scenario")));
        }

        let run = if kind == ScenarioKind::CalibrateXi {
            None
        } else {
            let trap = require(trap, "trap", kind)?;
            let beam = require(raw.beam, "beam", kind)?;
            beam.validate(&species)?;
            let g = require(raw.grid, "grid", kind)?;
            let grid = SimGrid::new(&g.points, &g.extent_m, &g.center_m)?;
            let s = require(raw.stepper, "stepper", kind)?;
            let stepper = StepperConfig {
                dt: s.dt_s,
                steps_per_diagnostic: s.steps_per_diagnostic,
                pump_renormalize: s.pump_renormalize,
                ramp_time: s.ramp_time_s,
            };
            stepper.validate()?;
            if !(s.t_end_s.is_finite() && s.t_end_s > 0.0) {
                return Err(Error::config("stepper.t_end_s", "must be > 0"));
            }
            if !(s.absorber.fraction > 0.0 && s.absorber.fraction < 0.5) {
                return Err(Error::config("stepper.absorber.fraction", "must lie in (0, 0.5)"));
            }
            if let Some(r) = s.absorber.max_rate_s {
                if !(r.is_finite() && r >= 0.0) {
                    return Err(Error::config("stepper.absorber.max_rate_s", "must be >= 0"));
                }
            }
            if let Some(sy) = s.sigma_y_m {
                if !(sy.is_finite() && sy > 0.0) {
                    return Err(Error::config("stepper.sigma_y_m", "must be > 0"));
                }
            }
            let d = GroundStateConfig::default();
            let ground_state = GroundStateConfig {
                tolerance: s.ground_state.tolerance.unwrap_or(d.tolerance),
                dtau: s.ground_state.dtau.unwrap_or(d.dtau),
                dtau_final: s.ground_state.dtau_final.unwrap_or(d.dtau_final),
                max_steps: s.ground_state.max_steps.unwrap_or(d.max_steps),
            };
            Some(RunSection {
                trap,
                beam,
                grid,
                stepper,
                t_end: s.t_end_s,
                stop_at_focus: s.stop_at_focus,
                frame: s.frame,
                loss_convention: s.loss_convention,
                three_body: s.three_body,
                absorber: s.absorber,
                sigma_y: s.sigma_y_m,
                ground_state,
            })
        };

        let calibrate = match (kind, raw.calibrate) {
            (ScenarioKind::CalibrateXi, None) => {
                return Err(Error::config("calibrate", "required for a `CalibrateXi` scenario"))
            }
            (_, Some(c)) => {
                if !(c.half_width_m.is_finite() && c.half_width_m > 0.0) {
                    return Err(Error::config("calibrate.half_width_m", "must be > 0"));
                }
                let center = focus.map(|f| f.center_z).unwrap_or(0.0);
                Some(CalibrateSection {
                    target_z: c.target_z_m.unwrap_or(center),
                    half_width: c.half_width_m,
                    kinematics: c.kinematics,
                })
            }
            (_, None) => None,
        };

        if let Some(sw) = &raw.sweep {
            sw.validate()?;
        }
        for (key, [lo, hi]) in [
            ("outputs.kirchhoff_zone_m", raw.outputs.kirchhoff_zone_m),
            ("outputs.paraxial_zone_m", raw.outputs.paraxial_zone_m),
        ] {
            if !(lo < hi) {
                return Err(Error::config(key, "need [lo, hi] with lo < hi"));
            }
        }
        if !(1..=64).contains(&raw.outputs.slice_refine) {
            return Err(Error::config("outputs.slice_refine", "must lie in 1..=64"));
        }
        if raw.outputs.snapshot_every == Some(0) {
            return Err(Error::config("outputs.snapshot_every", "must be >= 1"));
        }

        Ok(Self {
            kind,
            species,
            bragg,
            focus,
            focus_window,
            run,
            calibrate,
            outputs: raw.outputs,
            sweep: raw.sweep,
            echo,
        })
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use serde_json::json;

    fn base() -> Value {
        json!({
            "kind": "focus",
            "trap": {
                "omega_x_rad_s": 439.822971502571,
                "omega_y_rad_s": 62.83185307179586,
                "omega_z_rad_s": 439.822971502571,
                "atom_number": 100000.0,
                "a_s_bec_m": 5.29e-9
            },
            "beam": { "a_s_laser_m": -1.587e-8 },
            "bragg": { "lambda_m": 780.027e-9, "alpha_rad": PI, "order": 1, "delta_z_m": 40e-9 },
            "focus": { "detuning_hz": 200e9, "lambda_m": 312e-6, "sigma_z_m": 25e-6, "xi": 5.37 },
            "grid": { "points": [256, 1024], "extent_m": [40e-6, 360e-6], "center_m": [0.0, 0.0] },
            "stepper": { "dt_s": 1e-6, "t_end_s": 0.01, "steps_per_diagnostic": 100 }
        })
    }

    fn err_path(doc: Value) -> String {
        match Scenario::from_value(doc) {
            Err(Error::Config { path, .. }) => path,
            Err(Error::InvalidParameter { name, .. }) => name,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn parses_and_resolves() {
        let s = Scenario::from_value(base()).unwrap();
        assert_eq!(s.kind, ScenarioKind::Focus);
        assert!((s.bragg.rabi - 524.2).abs() < 0.5);
        let f = s.focus.unwrap();
        assert_eq!(f.detuning, 2.0 * PI * 200e9);
        assert_eq!(f.center_z, -150e-6);
        assert_eq!(s.bragg.resonance_z, 150e-6);
        let run = s.run.unwrap();
        assert!(run.stepper.pump_renormalize && run.three_body && run.absorber.enabled);
        assert_eq!(run.frame, FrameSpec::Envelope);
        assert_eq!(s.species, SpeciesParams::default());
    }

    #[test]
    fn missing_order_names_the_key() {
        let mut d = base();
        d["bragg"].as_object_mut().unwrap().remove("order");
        assert_eq!(err_path(d), "bragg.order");
        let mut d = base();
        d["stepper"].as_object_mut().unwrap().remove("dt_s");
        assert_eq!(err_path(d), "stepper.dt_s");
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut d = base();
        d["focus"]["sigma_z"] = json!(1.0);
        assert!(err_path(d).starts_with("focus"));
        let mut d = base();
        d["beam"]["a_s_laser_m"] = json!(600.0 * 5.29e-11);
        assert_eq!(err_path(d), "beam.a_s_laser_m");
        let mut d = base();
        d["grid"]["points"] = json!([256, 1000]);
        assert_eq!(err_path(d), "grid.points");
    }

    #[test]
    fn exactly_one_of_rabi_and_width() {
        let mut d = base();
        d["bragg"]["rabi_rad_s"] = json!(669.0);
        assert_eq!(err_path(d.clone()), "bragg.rabi_rad_s");
        d["bragg"].as_object_mut().unwrap().remove("delta_z_m");
        assert_eq!(Scenario::from_value(d).unwrap().bragg.rabi, 669.0);
        let mut d = base();
        d["bragg"].as_object_mut().unwrap().remove("delta_z_m");
        assert_eq!(err_path(d), "bragg.rabi_rad_s");
    }

    #[test]
    fn detuning_readings() {
        let mut d = base();
        d["focus"]["detuning_hz_reading"] = json!("angular");
        assert_eq!(Scenario::from_value(d).unwrap().focus.unwrap().detuning, 200e9);
        let mut d = base();
        d["focus"].as_object_mut().unwrap().remove("detuning_hz");
        d["focus"]["detuning_rad_s"] = json!(1e12);
        assert_eq!(Scenario::from_value(d).unwrap().focus.unwrap().detuning, 1e12);
    }

    #[test]
    fn kick_pseudo_key() {
        let s = Scenario::from_value(base()).unwrap();
        let k = s.with_overrides(&[("bragg.kick_hbar_k".into(), 12.0)]).unwrap();
        assert_eq!(k.bragg.order, 6);
        assert!((k.bragg.alpha - PI).abs() < 1e-12);
        let half = s.with_overrides(&[("bragg.kick_hbar_k".into(), 0.5)]).unwrap();
        assert_eq!(half.bragg.order, 1);
        assert!((half.bragg.kick_hbar_k() - 0.5).abs() < 1e-12);
        let mut d = base();
        d["bragg"]["kick_hbar_k"] = json!(2.0);
        assert_eq!(err_path(d), "bragg.kick_hbar_k");
    }

    #[test]
    fn overrides_replace_exclusive_keys() {
        let s = Scenario::from_value(base()).unwrap();
        let p = s.with_overrides(&[("focus.power_w".into(), 2e-3)]).unwrap();
        assert_eq!(p.focus.unwrap().strength, FocusStrength::Power(2e-3));
        let r = s.with_overrides(&[("bragg.rabi_rad_s".into(), 700.0)]).unwrap();
        assert_eq!(r.bragg.rabi, 700.0);
        assert!(s.with_overrides(&[("nosuch.key".into(), 1.0)]).is_err());
        let o = s.with_overrides(&[("bragg.order".into(), 2.0)]).unwrap();
        assert_eq!(o.bragg.order, 2);
    }

    #[test]
    fn sweep_points_are_cartesian() {
        let mut d = base();
        d["sweep"] = json!({ "axes": [
            { "path": "beam.a_s_laser_m", "values": [1.0e-9, 0.0, -1.0e-9] },
            { "path": "focus.sigma_z_m", "values": [1e-4, 5e-5] }
        ]});
        let s = Scenario::from_value(d).unwrap();
        let pts = s.sweep.as_ref().unwrap().points();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1], vec![("beam.a_s_laser_m".to_string(), 1.0e-9), ("focus.sigma_z_m".to_string(), 5e-5)]);
        let one = s.with_overrides(&pts[5]).unwrap();
        assert!(one.sweep.is_none());
        assert_eq!(one.focus.unwrap().sigma_z, 5e-5);
        let mut bad = base();
        bad["sweep"] = json!({ "axes": [] });
        assert_eq!(err_path(bad), "sweep.axes");
    }

    #[test]
    fn calibrate_kind_needs_only_optics() {
        let d = json!({
            "kind": "calibrate-xi",
            "bragg": { "lambda_m": 780.027e-9, "alpha_rad": PI, "order": 1 },
            "focus": { "detuning_hz": 200e9, "lambda_m": 312e-6, "sigma_z_m": 25e-6, "xi": 1.0 },
            "calibrate": { "half_width_m": 3e-6 }
        });
        let s = Scenario::from_value(d.clone()).unwrap();
        let c = s.calibrate.unwrap();
        assert_eq!(c.target_z, -150e-6);
        assert_eq!(c.kinematics, LensKinematics::Paraxial);
        assert!(s.run.is_none());
        let mut no_cal = d;
        no_cal.as_object_mut().unwrap().remove("calibrate");
        assert_eq!(err_path(no_cal), "calibrate");
    }

    #[test]
    fn free_kind_without_focus() {
        let mut d = base();
        d["kind"] = json!("free");
        d.as_object_mut().unwrap().remove("focus");
        assert!(Scenario::from_value(d.clone()).unwrap().focus.is_none());
        d["kind"] = json!("focus");
        assert_eq!(err_path(d), "focus");
    }

    #[test]
    fn default_absorber_rate() {
        let grid = SimGrid::new(&[16, 64], &[1e-5, 1e-4], &[0.0, 0.0]).unwrap();
        let a = AbsorberSpec::default().resolve(&grid, 0.08).unwrap();
        // ∫W dt across the layer at speed v: W_max·L/(2v).
        let layer = 0.08 * 1e-4;
        assert!((a.max_rate * layer / (2.0 * 0.08) - ABSORBER_PASS_DECAY).abs() < 1e-9);
        assert!(AbsorberSpec { enabled: false, ..Default::default() }.resolve(&grid, 1.0).is_none());
    }
}
