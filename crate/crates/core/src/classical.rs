//! Classical point-particle trajectories through gravity and the focusing
//! potential, and the ray-fan calibration of the power factor ξ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::SpeciesParams;
use crate::potentials::{FocusConfig, FocusPotential, FocusStrength};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub t: f64,
    pub x: f64,
    pub z: f64,
    pub vx: f64,
    pub vz: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub samples: Vec<ParticleState>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&ParticleState> {
        self.samples.last()
    }

    /// Transverse position where the trajectory crosses height `z`, by linear
    /// interpolation between samples. `None` if it never reaches `z`.
    pub fn x_at_z(&self, z: f64) -> Option<f64> {
        self.samples.windows(2).find_map(|w| {
            let (a, b) = (&w[0], &w[1]);
            if (a.z - z) * (b.z - z) <= 0.0 && a.z != b.z {
                let f = (z - a.z) / (b.z - a.z);
                Some(a.x + f * (b.x - a.x))
            } else {
                None
            }
        })
    }
}

/// Acceleration field for point particles.
pub trait ForceField {
    fn acceleration(&self, x: f64, z: f64) -> (f64, f64);
    fn potential_energy(&self, x: f64, z: f64) -> f64;
}

/// Gravity plus an optional focusing potential.
#[derive(Debug, Clone, Copy)]
pub struct LensField {
    pub mass: f64,
    /// Gravitational acceleration; 0 switches gravity off.
    pub g: f64,
    pub focus: Option<FocusPotential>,
}

impl ForceField for LensField {
    fn acceleration(&self, x: f64, z: f64) -> (f64, f64) {
        let (gx, gz) = self.focus.map_or((0.0, 0.0), |f| f.gradient(x, z));
        (-gx / self.mass, -gz / self.mass - self.g)
    }

    fn potential_energy(&self, x: f64, z: f64) -> f64 {
        self.mass * self.g * z + self.focus.map_or(0.0, |f| f.value(x, z))
    }
}

/// U = k x²/2, independent of z.
#[derive(Debug, Clone, Copy)]
pub struct HarmonicWell {
    pub mass: f64,
    pub k: f64,
}

impl ForceField for HarmonicWell {
    fn acceleration(&self, x: f64, _z: f64) -> (f64, f64) {
        (-self.k * x / self.mass, 0.0)
    }

    fn potential_energy(&self, x: f64, _z: f64) -> f64 {
        0.5 * self.k * x * x
    }
}

fn checked_acceleration(field: &dyn ForceField, x: f64, z: f64) -> Result<(f64, f64)> {
    let (ax, az) = field.acceleration(x, z);
    if !(ax.is_finite() && az.is_finite()) {
        return Err(Error::NonFinite(format!("force at x={x:e} m, z={z:e} m")));
    }
    Ok((ax, az))
}

/// Velocity-Verlet integration from `initial` until `t_end`, or until `stop`
/// returns true for a sample.
pub fn integrate_until(
    initial: ParticleState,
    field: &dyn ForceField,
    dt: f64,
    t_end: f64,
    mut stop: impl FnMut(&ParticleState) -> bool,
) -> Result<Trajectory> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", "must be > 0"));
    }
    let mut s = initial;
    let mut traj = Trajectory { samples: vec![s] };
    let (mut ax, mut az) = checked_acceleration(field, s.x, s.z)?;
    let steps = ((t_end - initial.t) / dt).ceil().max(0.0) as usize;
    for i in 1..=steps {
        let vxh = s.vx + 0.5 * dt * ax;
        let vzh = s.vz + 0.5 * dt * az;
        s.x += dt * vxh;
        s.z += dt * vzh;
        (ax, az) = checked_acceleration(field, s.x, s.z)?;
        s.vx = vxh + 0.5 * dt * ax;
        s.vz = vzh + 0.5 * dt * az;
        s.t = initial.t + i as f64 * dt;
        traj.samples.push(s);
        if stop(&s) {
            break;
        }
    }
    Ok(traj)
}

pub fn integrate_trajectory(initial: ParticleState, field: &dyn ForceField, dt: f64, t_end: f64) -> Result<Trajectory> {
    integrate_until(initial, field, dt, t_end, |_| false)
}

/// How the beam moves through the lens during calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LensKinematics {
    /// Gravity off inside the lens; atoms cross it at the free-fall speed
    /// they have at the lens center.
    #[default]
    Paraxial,
    /// Gravity on; atoms enter with their free-fall speed at the entry height.
    FreeFall,
}

/// Where and how the beam reaches the lens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamEntry {
    /// Speed right after the kick.
    pub initial_speed: f64,
    /// Height of the outcoupling surface.
    pub source_z: f64,
    /// Half-width of the ray fan, Δx_beam.
    pub half_width: f64,
    pub kinematics: LensKinematics,
}

impl BeamEntry {
    /// Free-fall speed at height `z`.
    pub fn speed_at(&self, z: f64, g: f64) -> f64 {
        (self.initial_speed.powi(2) + 2.0 * g * (self.source_z - z)).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocusSearchResult {
    pub xi: f64,
    pub focal_z: f64,
    pub rms_spot: f64,
    pub iterations: usize,
}

pub const FAN_SIZE: usize = 21;
const XI_MAX: f64 = 20.0;
const SCAN_POINTS: usize = 80;

/// Ray-fan model of one lens geometry; ξ is the free variable.
pub struct RayFan<'a> {
    geometry: FocusConfig,
    entry: BeamEntry,
    species: &'a SpeciesParams,
    /// Beam kinetic energy at the lens center.
    e0: f64,
    z_entry: f64,
    v_entry: f64,
    g: f64,
    dt: f64,
}

impl<'a> RayFan<'a> {
    pub fn new(geometry: &FocusConfig, entry: &BeamEntry, species: &'a SpeciesParams) -> Result<Self> {
        geometry.validate()?;
        if !(entry.half_width.is_finite() && entry.half_width > 0.0) {
            return Err(Error::invalid("beam half width", "must be > 0"));
        }
        let g_full = species.g_accel;
        let v_center = entry.speed_at(geometry.center_z, g_full);
        if !(v_center > 0.0) {
            return Err(Error::invalid("focus.center_z_m", "the beam never reaches the lens"));
        }
        let z_entry = geometry.center_z + 3.0 * geometry.sigma_z;
        let (v_entry, g) = match entry.kinematics {
            LensKinematics::Paraxial => (v_center, 0.0),
            LensKinematics::FreeFall => (entry.speed_at(z_entry, g_full), g_full),
        };
        // 10³ steps across the potential waist at the slowest speed in the lens.
        let dt = geometry.sigma_z / v_entry.min(v_center).max(1e-12) / 1000.0;
        Ok(Self {
            geometry: *geometry,
            entry: *entry,
            species,
            e0: 0.5 * species.mass * v_center * v_center,
            z_entry,
            v_entry,
            g,
            dt,
        })
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.e0
    }

    fn field(&self, xi: f64) -> Result<LensField> {
        let cfg = FocusConfig { strength: FocusStrength::Xi(xi), ..self.geometry };
        Ok(LensField {
            mass: self.species.mass,
            g: self.g,
            focus: Some(cfg.resolve(self.e0, self.species)?),
        })
    }

    pub fn offsets(&self) -> Vec<f64> {
        let w = self.entry.half_width;
        (0..FAN_SIZE)
            .map(|i| -w + 2.0 * w * i as f64 / (FAN_SIZE - 1) as f64)
            .collect()
    }

    /// Trajectories of the fan, integrated down to `z_stop`.
    pub fn trace(&self, xi: f64, z_stop: f64) -> Result<Vec<Trajectory>> {
        let field = self.field(xi)?;
        // Generous time budget: the slowest admissible fall to z_stop.
        let drop = (self.z_entry - z_stop).max(0.0);
        let t_end = 4.0 * drop / self.v_entry + 1e-6;
        self.offsets()
            .into_iter()
            .map(|x0| {
                let start = ParticleState { t: 0.0, x: x0, z: self.z_entry, vx: 0.0, vz: -self.v_entry };
                integrate_until(start, &field, self.dt, t_end, |s| s.z < z_stop)
            })
            .collect()
    }

    /// rms transverse spread of the fan where it crosses `target_z`.
    pub fn spread_at(&self, xi: f64, target_z: f64) -> Result<f64> {
        let fan = self.trace(xi, target_z)?;
        let xs = fan
            .iter()
            .map(|t| t.x_at_z(target_z).ok_or_else(|| Error::Degenerate("ray never reached the target plane".into())))
            .collect::<Result<Vec<_>>>()?;
        Ok(rms(&xs))
    }

    /// Height at which the fan's rms spread is smallest.
    pub fn focal_z(&self, xi: f64) -> Result<f64> {
        let s = self.geometry.sigma_z;
        let z_lo = self.geometry.center_z - 6.0 * s;
        let fan = self.trace(xi, z_lo)?;
        let planes = 1200;
        let dz = (self.z_entry - z_lo) / planes as f64;
        // Rays fall monotonically here, so each keeps a cursor into its samples.
        let mut cursors = vec![0usize; fan.len()];
        let mut best = (f64::INFINITY, self.z_entry);
        let mut xs = vec![0.0; fan.len()];
        'planes: for p in 0..planes {
            let z = self.z_entry - p as f64 * dz;
            for (k, t) in fan.iter().enumerate() {
                let smp = &t.samples;
                while cursors[k] + 1 < smp.len() && smp[cursors[k] + 1].z > z {
                    cursors[k] += 1;
                }
                let i = cursors[k];
                if i + 1 >= smp.len() {
                    break 'planes;
                }
                let (a, b) = (&smp[i], &smp[i + 1]);
                xs[k] = a.x + (z - a.z) / (b.z - a.z) * (b.x - a.x);
            }
            let r = rms(&xs);
            if r < best.0 {
                best = (r, z);
            }
        }
        Ok(best.1)
    }
}

fn rms(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Finds the ξ ∈ (0, 20] whose ray fan has the smallest rms spread at `target_z`.
/// The search is a fixed scan followed by golden-section refinement, so it is
/// deterministic for fixed inputs.
pub fn calibrate_xi(
    target_z: f64,
    geometry: &FocusConfig,
    entry: &BeamEntry,
    species: &SpeciesParams,
) -> Result<FocusSearchResult> {
    let s = geometry.sigma_z;
    if (target_z - geometry.center_z).abs() > 3.0 * s {
        return Err(Error::invalid("target_z", "must lie within 3σ_z of the potential center"));
    }
    let fan = RayFan::new(geometry, entry, species)?;
    let mut iterations = 0;
    let mut eval = |xi: f64| -> Result<f64> {
        iterations += 1;
        fan.spread_at(xi, target_z)
    };

    let h = XI_MAX / SCAN_POINTS as f64;
    let mut values = Vec::with_capacity(SCAN_POINTS);
    for i in 1..=SCAN_POINTS {
        values.push((i as f64 * h, eval(i as f64 * h)?));
    }
    let (ib, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("scan is non-empty");
    if ib == SCAN_POINTS - 1 {
        return Err(Error::NonConvergence {
            what: "ξ search: spread still falling at ξ = 20".into(),
            iterations,
            residual: values[ib].1,
        });
    }
    let mut lo = if ib == 0 { 1e-9 } else { values[ib - 1].0 };
    let mut hi = values[ib + 1].0;
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    while hi - lo > 1e-7 * hi {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = eval(c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = eval(d)?;
        }
    }
    let xi = 0.5 * (lo + hi);
    let rms_spot = eval(xi)?;
    Ok(FocusSearchResult {
        xi,
        focal_z: fan.focal_z(xi)?,
        rms_spot,
        iterations,
    })
}
