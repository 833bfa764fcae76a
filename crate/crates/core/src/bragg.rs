//! Bragg kinematics and the outcoupling resonance calibration.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{SpeciesParams, TrapParams};

/// q = 2(2π/λ)sin(α/2).
pub fn bragg_wavenumber(wavelength: f64, alpha: f64) -> f64 {
    2.0 * (2.0 * PI / wavelength) * (0.5 * alpha).sin()
}

/// ω_res = nħq²/2m. ħω_res equals the recoil energy (nħq)²/2m only for n = 1;
/// for higher orders this is the per-photon-pair frequency difference.
pub fn resonance_frequency(order: u32, q: f64, species: &SpeciesParams) -> f64 {
    order as f64 * species.hbar * q * q / (2.0 * species.mass)
}

/// v = nħq/m.
pub fn recoil_velocity(order: u32, q: f64, species: &SpeciesParams) -> f64 {
    order as f64 * species.hbar * q / species.mass
}

/// Resonance width for Rabi frequency Ω in a trap of axial frequency ω_z:
/// Δz = −2g/ω_z² + 2√(g²/ω_z⁴ + ħΩ/(mω_z²)).
pub fn calibrate_outcoupling(rabi: f64, trap: &TrapParams, species: &SpeciesParams) -> Result<f64> {
    if !(rabi.is_finite() && rabi >= 0.0) {
        return Err(Error::invalid("bragg.rabi_rad_s", format!("must be >= 0, got {rabi}")));
    }
    let w2 = trap.omega_z * trap.omega_z;
    let g = species.g_accel;
    let a = g / w2;
    let b = species.hbar * rabi / (species.mass * w2);
    // Written as 2b/(a + √(a² + b)) to avoid cancelling two nearly equal terms.
    Ok(2.0 * b / (a + (a * a + b).sqrt()))
}

/// Inverse of [`calibrate_outcoupling`]:
/// Ω = (mω_z²/ħ)·[((Δz + 2g/ω_z²)/2)² − g²/ω_z⁴].
pub fn rabi_for_width(delta_z: f64, trap: &TrapParams, species: &SpeciesParams) -> Result<f64> {
    if !(delta_z.is_finite() && delta_z >= 0.0) {
        return Err(Error::invalid(
            "bragg.delta_z_m",
            format!("resonance width must be >= 0, got {delta_z}"),
        ));
    }
    let w2 = trap.omega_z * trap.omega_z;
    let a = species.g_accel / w2;
    // ((Δz+2a)/2)² − a² expanded so that small Δz keeps full precision.
    let bracket = 0.25 * delta_z * delta_z + a * delta_z;
    Ok(species.mass * w2 / species.hbar * bracket)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BraggConfig {
    pub wavelength: f64,
    pub alpha: f64,
    pub order: u32,
    pub rabi: f64,
    /// Height of the outcoupling surface (the condensate center).
    pub resonance_z: f64,
}

impl BraggConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return Err(Error::invalid("bragg.lambda_m", "must be > 0"));
        }
        if !(0.0..=PI).contains(&self.alpha) {
            return Err(Error::invalid("bragg.alpha_rad", format!("must lie in [0, π], got {}", self.alpha)));
        }
        if self.order < 1 {
            return Err(Error::invalid("bragg.order", "must be >= 1"));
        }
        if !(self.rabi.is_finite() && self.rabi >= 0.0) {
            return Err(Error::invalid("bragg.rabi_rad_s", "must be >= 0"));
        }
        if !self.resonance_z.is_finite() {
            return Err(Error::invalid("bragg.resonance_z_m", "must be finite"));
        }
        Ok(())
    }

    pub fn q(&self) -> f64 {
        bragg_wavenumber(self.wavelength, self.alpha)
    }

    /// nq along the beam axis. The beam is kicked toward −z, the direction of gravity.
    pub fn kick_wavenumber_z(&self) -> f64 {
        -(self.order as f64) * self.q()
    }

    pub fn omega(&self, species: &SpeciesParams) -> f64 {
        resonance_frequency(self.order, self.q(), species)
    }

    /// Initial beam speed (magnitude).
    pub fn recoil_velocity(&self, species: &SpeciesParams) -> f64 {
        recoil_velocity(self.order, self.q(), species)
    }

    /// Kick in units of ħk with k = 2π/λ.
    pub fn kick_hbar_k(&self) -> f64 {
        self.order as f64 * 2.0 * (0.5 * self.alpha).sin()
    }

    /// Order and beam angle realising a kick of `p` ħk with the smallest order.
    pub fn order_and_angle_for_kick(p: f64) -> Result<(u32, f64)> {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::invalid("bragg.kick_hbar_k", format!("must be > 0, got {p}")));
        }
        let order = (p / 2.0).ceil().max(1.0) as u32;
        let alpha = 2.0 * (p / (2.0 * order as f64)).min(1.0).asin();
        Ok((order, alpha))
    }

    /// e^{in(q·r − ωt)} with q pointing along −z; `position` is (x, z) or (x, y, z).
    /// The reverse coupling uses the conjugate.
    pub fn coupling_phase(&self, position: &[f64], time: f64, species: &SpeciesParams) -> Complex64 {
        let z = position[position.len() - 1];
        let phase = self.kick_wavenumber_z() * z - self.order as f64 * self.omega(species) * time;
        Complex64::cis(phase)
    }
}
