//! Harmonic trap, gravity, the optical focusing potential and the absorbing layer.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SimGrid;
use crate::params::{SpeciesParams, TrapParams};

/// m(ω_x²x² + ω_y²y² + ω_z²z²)/2 with `r` = (x, z) or (x, y, z) relative to the trap center.
/// On a 2D grid the y term is absent.
pub fn trap_potential(r: &[f64], trap: &TrapParams, species: &SpeciesParams) -> f64 {
    let (x, y, z) = match r.len() {
        2 => (r[0], 0.0, r[1]),
        _ => (r[0], r[1], r[2]),
    };
    let w = &trap;
    0.5 * species.mass * (w.omega_x.powi(2) * x * x + w.omega_y.powi(2) * y * y + w.omega_z.powi(2) * z * z)
}

/// m·g·z; the beam falls toward decreasing z.
pub fn gravity_potential(z: f64, species: &SpeciesParams) -> f64 {
    species.mass * species.g_accel * z
}

/// I(x, z) = I₀·exp(−2z²/σ_z²)·(k_f x)² with z measured from the potential center.
pub fn intensity(x: f64, z: f64, i0: f64, sigma_z: f64, wavelength: f64) -> f64 {
    let kf = 2.0 * PI / wavelength;
    i0 * (-2.0 * z * z / (sigma_z * sigma_z)).exp() * (kf * x).powi(2)
}

/// I₀ = 8P₀/(πσ_z²).
pub fn peak_intensity(power: f64, sigma_z: f64) -> f64 {
    8.0 * power / (PI * sigma_z * sigma_z)
}

/// P₀ = ξ(π/4)(E₀/ħ|Δ|)((γ² + 4Δ²)/γ²)(I_s/k_f²).
pub fn optimal_power(e0: f64, detuning: f64, kf: f64, xi: f64, species: &SpeciesParams) -> Result<f64> {
    if detuning == 0.0 || !detuning.is_finite() {
        return Err(Error::invalid("focus.detuning_rad_s", "must be finite and nonzero"));
    }
    let g2 = species.gamma * species.gamma;
    let sat = (g2 + 4.0 * detuning * detuning) / g2;
    Ok(xi * 0.25 * PI * e0 / (species.hbar * detuning.abs()) * sat * species.saturation_intensity / (kf * kf))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FocusStrength {
    /// Laser power in watts.
    Power(f64),
    /// Dimensionless multiplier of the optimal-power relation.
    Xi(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocusConfig {
    /// Signed angular detuning. Positive values push atoms out of the light and
    /// toward the intensity node at x = 0, which focuses the beam.
    pub detuning: f64,
    pub wavelength: f64,
    pub sigma_z: f64,
    pub center_z: f64,
    pub strength: FocusStrength,
}

impl FocusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.detuning == 0.0 || !self.detuning.is_finite() {
            return Err(Error::invalid("focus.detuning_rad_s", "must be finite and nonzero"));
        }
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return Err(Error::invalid("focus.lambda_m", "must be > 0"));
        }
        if !(self.sigma_z.is_finite() && self.sigma_z > 0.0) {
            return Err(Error::invalid("focus.sigma_z_m", "must be > 0"));
        }
        if !self.center_z.is_finite() {
            return Err(Error::invalid("focus.center_z_m", "must be finite"));
        }
        match self.strength {
            FocusStrength::Power(p) if !(p.is_finite() && p >= 0.0) => {
                Err(Error::invalid("focus.power_w", "must be >= 0"))
            }
            FocusStrength::Xi(x) if !(x.is_finite() && x >= 0.0) => Err(Error::invalid("focus.xi", "must be >= 0")),
            _ => Ok(()),
        }
    }

    pub fn kf(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Distance between neighbouring intensity maxima, λ_f/2.
    pub fn slit(&self) -> f64 {
        0.5 * self.wavelength
    }

    /// Laser power; `e0` is the beam kinetic energy at the potential center
    /// and is only used when the strength is given as ξ.
    pub fn power(&self, e0: f64, species: &SpeciesParams) -> Result<f64> {
        match self.strength {
            FocusStrength::Power(p) => Ok(p),
            FocusStrength::Xi(xi) => optimal_power(e0, self.detuning, self.kf(), xi, species),
        }
    }

    pub fn resolve(&self, e0: f64, species: &SpeciesParams) -> Result<FocusPotential> {
        self.validate()?;
        let power = self.power(e0, species)?;
        Ok(FocusPotential::new(self, power, species))
    }
}

/// A focusing potential with its power fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocusPotential {
    pub cfg: FocusConfig,
    pub power: f64,
    pub i0: f64,
    hbar_delta_half: f64,
    /// γ²/(γ² + 4Δ²)/I_s
    sat_over_is: f64,
}

impl FocusPotential {
    pub fn new(cfg: &FocusConfig, power: f64, species: &SpeciesParams) -> Self {
        let g2 = species.gamma * species.gamma;
        Self {
            cfg: *cfg,
            power,
            i0: peak_intensity(power, cfg.sigma_z),
            hbar_delta_half: 0.5 * species.hbar * cfg.detuning,
            sat_over_is: g2 / (g2 + 4.0 * cfg.detuning * cfg.detuning) / species.saturation_intensity,
        }
    }

    pub fn intensity(&self, x: f64, z: f64) -> f64 {
        intensity(x, z - self.cfg.center_z, self.i0, self.cfg.sigma_z, self.cfg.wavelength)
    }

    /// (ħΔ/2)·ln(1 + γ²/(γ² + 4Δ²)·I/I_s).
    pub fn value(&self, x: f64, z: f64) -> f64 {
        self.hbar_delta_half * (self.sat_over_is * self.intensity(x, z)).ln_1p()
    }

    /// (∂U/∂x, ∂U/∂z).
    pub fn gradient(&self, x: f64, z: f64) -> (f64, f64) {
        let s = self.cfg.sigma_z;
        let dz = z - self.cfg.center_z;
        let kf = self.cfg.kf();
        let envelope = self.i0 * (-2.0 * dz * dz / (s * s)).exp() * kf * kf;
        let i = envelope * x * x;
        let du_di = self.hbar_delta_half * self.sat_over_is / (1.0 + self.sat_over_is * i);
        let di_dx = 2.0 * envelope * x;
        let di_dz = -4.0 * dz / (s * s) * i;
        (du_di * di_dx, du_di * di_dz)
    }
}

/// Smooth damping layer: rate W(r) = W_max·cos²(π/2·d/L) where d is the
/// distance from the outer edge and L is the layer thickness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Absorber {
    /// Layer thickness as a fraction of each axis extent.
    pub fraction: f64,
    /// Peak damping rate, s⁻¹.
    pub max_rate: f64,
}

impl Absorber {
    pub const DEFAULT_FRACTION: f64 = 0.08;

    pub fn rate(&self, grid: &SimGrid, r: &[f64]) -> f64 {
        let mut w: f64 = 0.0;
        for (a, &x) in r.iter().enumerate() {
            let half = 0.5 * grid.extent()[a];
            let layer = self.fraction * grid.extent()[a];
            let d = half - (x - grid.center()[a]).abs();
            if layer > 0.0 && d < layer {
                let c = (0.5 * PI * d.max(0.0) / layer).cos();
                w = w.max(c * c);
            }
        }
        self.max_rate * w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapTerm {
    pub trap: TrapParams,
    /// Trap center (x, z).
    pub center_x: f64,
    pub center_z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GravityTerm {
    /// Height at which the gravitational energy is zero.
    pub reference_z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocusTerm {
    pub potential: FocusPotential,
    /// Optional (z_min, z_max) outside of which the term is switched off.
    pub z_window: Option<(f64, f64)>,
}

/// The potential terms of a run. The trap acts on ψ₀ only; gravity and the
/// focusing potential act on ψ_n only.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PotentialStack {
    pub trap: Option<TrapTerm>,
    pub gravity: Option<GravityTerm>,
    pub focus: Option<FocusTerm>,
    pub absorber: Option<Absorber>,
}

impl PotentialStack {
    /// Potential felt by the condensate at `r`.
    pub fn condensate(&self, r: &[f64], species: &SpeciesParams) -> f64 {
        match &self.trap {
            Some(t) => {
                let mut rel = r.to_vec();
                rel[0] -= t.center_x;
                let last = rel.len() - 1;
                rel[last] -= t.center_z;
                trap_potential(&rel, &t.trap, species)
            }
            None => 0.0,
        }
    }

    /// Potential felt by the beam at `r`.
    pub fn beam(&self, r: &[f64], species: &SpeciesParams) -> f64 {
        let x = r[0];
        let z = r[r.len() - 1];
        let mut v = 0.0;
        if let Some(g) = &self.gravity {
            v += gravity_potential(z - g.reference_z, species);
        }
        if let Some(f) = &self.focus {
            let inside = f.z_window.map_or(true, |(lo, hi)| z >= lo && z <= hi);
            if inside {
                v += f.potential.value(x, z);
            }
        }
        v
    }

    pub fn absorber_rate(&self, grid: &SimGrid, r: &[f64]) -> f64 {
        self.absorber.map_or(0.0, |a| a.rate(grid, r))
    }
}
