//! Coupled condensate / atom-laser solver.

pub mod ground_state;
mod stepper;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bragg::BraggConfig;
use crate::error::{Error, Result};
use crate::field::{ComplexField, SimGrid};
use crate::params::{SpeciesParams, TrapParams};
use crate::potentials::PotentialStack;

pub use ground_state::{ground_state, GroundState, GroundStateConfig};
pub use stepper::Evolver;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossConvention {
    /// Amplitude term −i(ħK/2)F, so a lone component obeys dn/dt = −K n³.
    #[default]
    StandardHalfHbar,
    /// Amplitude term −iK·F inside iħ∂ψ/∂t, i.e. dn/dt = −(2K/ħ) n³.
    AsWritten,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    /// Three-body coefficient in the grid dimension (m⁶/s in 3D, m⁴/s in 2D).
    pub k: f64,
    pub convention: LossConvention,
}

impl LossModel {
    /// Amplitude decay rate per unit of F = |ψ₀|⁴ + |ψ_n|⁴ + 4|ψ₀|²|ψ_n|².
    pub fn amplitude_rate(&self, hbar: f64) -> f64 {
        match self.convention {
            LossConvention::StandardHalfHbar => 0.5 * self.k,
            LossConvention::AsWritten => self.k / hbar,
        }
    }

    /// C in dn/dt = −C·K·n³ for a lone uniform component.
    pub fn density_prefactor(&self, hbar: f64) -> f64 {
        match self.convention {
            LossConvention::StandardHalfHbar => 1.0,
            LossConvention::AsWritten => 2.0 / hbar,
        }
    }
}

/// Representation used for ψ_n.
///
/// ψ_n is stored as the lab-frame beam field multiplied by
/// e^{−i k_c z}·e^{i n ω_res t} when `rotating`, or as the lab-frame field
/// itself otherwise. Its kinetic factor is then ħ²(k + k_c)²/2m, offset by
/// −nħω_res when rotating, and the Bragg coupling carries the residual
/// phase e^{i(nq_z − k_c)z}, times e^{−inω_res t} in the lab frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamFrame {
    /// k_c = nq_z: the carrier of the kick is removed and the coupling has no phase.
    Envelope,
    /// k_c = 0: the full carrier lives on the grid and the coupling carries e^{in(q·r−ωt)}.
    Lab,
    /// Envelope-type frame moving with a chosen velocity along z (m/s, signed).
    /// Centering the carrier between the launch and final speeds halves the
    /// wavenumber range the z grid must resolve.
    Carrier { velocity_m_s: f64 },
}

impl Default for BeamFrame {
    fn default() -> Self {
        BeamFrame::Envelope
    }
}

impl BeamFrame {
    /// (k_c along z, rotating).
    pub fn carrier(&self, bragg: &BraggConfig, species: &SpeciesParams) -> (f64, bool) {
        match *self {
            BeamFrame::Envelope => (bragg.kick_wavenumber_z(), true),
            BeamFrame::Lab => (0.0, false),
            BeamFrame::Carrier { velocity_m_s } => (velocity_m_s * species.mass / species.hbar, true),
        }
    }
}

/// Width of the Gaussian that replaces the y direction in a 2D run:
/// the larger of the y oscillator length and √(2/7)·R_y, where R_y is the
/// 3D Thomas-Fermi radius along y. The y amplitude is taken ∝ exp(−y²/2σ_y²).
pub fn reduction_width(trap: &TrapParams, species: &SpeciesParams) -> f64 {
    let a_ho = (species.hbar / (species.mass * trap.omega_y)).sqrt();
    if trap.a_s_bec <= 0.0 {
        return a_ho;
    }
    let abar = (species.hbar / (species.mass * trap.omega_bar())).sqrt();
    let mu = 0.5 * species.hbar * trap.omega_bar() * (15.0 * trap.atom_number * trap.a_s_bec / abar).powf(0.4);
    let r_y = (2.0 * mu / (species.mass * trap.omega_y * trap.omega_y)).sqrt();
    a_ho.max((2.0f64 / 7.0).sqrt() * r_y)
}

/// Contact interaction reduced to the grid dimension.
pub fn reduced_interaction(u: f64, dims: usize, sigma_y: f64) -> f64 {
    if dims == 2 {
        u / ((2.0 * PI).sqrt() * sigma_y)
    } else {
        u
    }
}

/// Three-body coefficient reduced to the grid dimension: ∫|φ(y)|⁶dy = 1/(√3·π·σ_y²).
pub fn reduced_three_body(k: f64, dims: usize, sigma_y: f64) -> f64 {
    if dims == 2 {
        k / (3f64.sqrt() * PI * sigma_y * sigma_y)
    } else {
        k
    }
}

/// Everything that defines the Hamiltonian of a real-time run.
#[derive(Debug, Clone, PartialEq)]
pub struct Physics {
    pub species: SpeciesParams,
    /// Condensate interaction, already reduced to the grid dimension.
    pub u_condensate: f64,
    /// Beam interaction, already reduced to the grid dimension.
    pub u_beam: f64,
    pub loss: LossModel,
    pub bragg: BraggConfig,
    pub frame: BeamFrame,
    pub potentials: PotentialStack,
    /// Condensate chemical potential; ψ₀'s energy zero.
    pub mu: f64,
    /// Target condensate atom number for pump renormalisation.
    pub atom_number: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    pub steps_per_diagnostic: usize,
    pub pump_renormalize: bool,
    /// Linear ramp-on time of Ω; 0 switches it on at once.
    pub ramp_time: f64,
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("stepper.dt_s", "must be > 0"));
        }
        if self.steps_per_diagnostic == 0 {
            return Err(Error::invalid("stepper.steps_per_diagnostic", "must be >= 1"));
        }
        if !(self.ramp_time.is_finite() && self.ramp_time >= 0.0) {
            return Err(Error::invalid("stepper.ramp_time_s", "must be >= 0"));
        }
        Ok(())
    }
}

/// The two fields and the clock of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStateSystem {
    pub psi0: ComplexField,
    pub psin: ComplexField,
    /// Completed steps; time is `step_index·dt` so checkpoints resume exactly.
    pub step_index: u64,
}

impl TwoStateSystem {
    /// Condensate in `psi0`, empty beam.
    pub fn new(psi0: ComplexField) -> Self {
        let psin = ComplexField::zeros(psi0.grid());
        Self { psi0, psin, step_index: 0 }
    }

    pub fn from_parts(psi0: ComplexField, psin: ComplexField, step_index: u64) -> Result<Self> {
        psi0.grid().check_same(psin.grid())?;
        Ok(Self { psi0, psin, step_index })
    }

    pub fn grid(&self) -> &SimGrid {
        self.psi0.grid()
    }

    pub fn time(&self, dt: f64) -> f64 {
        self.step_index as f64 * dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_prefactors() {
        let hbar = 1.054571817e-34;
        let std = LossModel { k: 4e-41, convention: LossConvention::StandardHalfHbar };
        let lit = LossModel { k: 4e-41, convention: LossConvention::AsWritten };
        assert_eq!(std.density_prefactor(hbar), 1.0);
        assert_eq!(2.0 * std.amplitude_rate(hbar), std.k * std.density_prefactor(hbar));
        assert!((2.0 * lit.amplitude_rate(hbar) - lit.k * lit.density_prefactor(hbar)).abs() < 1e-12 * lit.k / hbar);
    }

    #[test]
    fn reduction_of_couplings() {
        let sigma = 3e-6;
        let u = 5e-51;
        assert_eq!(reduced_interaction(u, 3, sigma), u);
        // ∫|φ|⁴dy for φ ∝ exp(−y²/2σ²), evaluated by quadrature.
        let n = 20001;
        let h = 20.0 * sigma / n as f64;
        let norm = 1.0 / (PI.sqrt() * sigma).sqrt();
        let (mut i4, mut i6) = (0.0, 0.0);
        for j in 0..n {
            let y = -10.0 * sigma + j as f64 * h;
            let p = (norm * (-y * y / (2.0 * sigma * sigma)).exp()).powi(2);
            i4 += p * p * h;
            i6 += p * p * p * h;
        }
        assert!((reduced_interaction(u, 2, sigma) - u * i4).abs() / (u * i4) < 1e-9);
        assert!((reduced_three_body(1.0, 2, sigma) - i6).abs() / i6 < 1e-9);
    }

    #[test]
    fn reduction_width_floor() {
        let s = SpeciesParams::default();
        let t = TrapParams { a_s_bec: 0.0, ..Default::default() };
        let a_ho = (s.hbar / (s.mass * t.omega_y)).sqrt();
        assert_eq!(reduction_width(&t, &s), a_ho);
        assert!(reduction_width(&TrapParams::default(), &s) > a_ho);
    }
}
