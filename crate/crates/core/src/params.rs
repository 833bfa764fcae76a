//! Physical constants and experiment parameters, SI units throughout.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BOHR_RADIUS: f64 = 5.29e-11;
pub const HBAR: f64 = 1.054571817e-34;

/// Largest |a_s| accepted for the beam, in units of the Bohr radius.
pub const MAX_LASER_SCATTERING_BOHR: f64 = 500.0;

/// Atomic species constants. Defaults are for ⁸⁵Rb.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeciesParams {
    #[serde(rename = "mass_kg")]
    pub mass: f64,
    /// Natural linewidth, angular.
    #[serde(rename = "gamma_s")]
    pub gamma: f64,
    #[serde(rename = "saturation_intensity_w_m2")]
    pub saturation_intensity: f64,
    #[serde(rename = "d2_wavelength_m")]
    pub d2_wavelength: f64,
    #[serde(rename = "three_body_k_m6_s")]
    pub three_body_k: f64,
    #[serde(rename = "bohr_radius_m")]
    pub bohr_radius: f64,
    #[serde(rename = "hbar_j_s")]
    pub hbar: f64,
    #[serde(rename = "g_accel_m_s2")]
    pub g_accel: f64,
}

impl Default for SpeciesParams {
    fn default() -> Self {
        Self {
            mass: 1.40999e-25,
            gamma: 38e6,
            saturation_intensity: 16.7,
            d2_wavelength: 780.027e-9,
            three_body_k: 4e-41,
            bohr_radius: BOHR_RADIUS,
            hbar: HBAR,
            g_accel: 9.8,
        }
    }
}

impl SpeciesParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("species.mass_kg", self.mass),
            ("species.gamma_s", self.gamma),
            ("species.saturation_intensity_w_m2", self.saturation_intensity),
            ("species.d2_wavelength_m", self.d2_wavelength),
            ("species.three_body_k_m6_s", self.three_body_k),
            ("species.bohr_radius_m", self.bohr_radius),
            ("species.hbar_j_s", self.hbar),
            ("species.g_accel_m_s2", self.g_accel),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// ħ/m, which sets every kinetic phase in the solver.
    pub fn hbar_over_m(&self) -> f64 {
        self.hbar / self.mass
    }
}

/// 4πħ²a_s/m.
pub fn interaction_strength(a_s: f64, species: &SpeciesParams) -> f64 {
    4.0 * PI * species.hbar * species.hbar * a_s / species.mass
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapParams {
    #[serde(rename = "omega_x_rad_s")]
    pub omega_x: f64,
    #[serde(rename = "omega_y_rad_s")]
    pub omega_y: f64,
    #[serde(rename = "omega_z_rad_s")]
    pub omega_z: f64,
    pub atom_number: f64,
    #[serde(rename = "a_s_bec_m")]
    pub a_s_bec: f64,
}

impl Default for TrapParams {
    fn default() -> Self {
        Self {
            omega_x: 2.0 * PI * 70.0,
            omega_y: 2.0 * PI * 10.0,
            omega_z: 2.0 * PI * 70.0,
            atom_number: 1e5,
            a_s_bec: 100.0 * BOHR_RADIUS,
        }
    }
}

impl TrapParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("trap.omega_x_rad_s", self.omega_x),
            ("trap.omega_y_rad_s", self.omega_y),
            ("trap.omega_z_rad_s", self.omega_z),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.atom_number.is_finite() && self.atom_number >= 1.0) {
            return Err(Error::invalid(
                "trap.atom_number",
                format!("must be >= 1, got {}", self.atom_number),
            ));
        }
        if !self.a_s_bec.is_finite() {
            return Err(Error::invalid("trap.a_s_bec_m", "must be finite"));
        }
        Ok(())
    }

    /// Geometric mean trap frequency.
    pub fn omega_bar(&self) -> f64 {
        (self.omega_x * self.omega_y * self.omega_z).cbrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamParams {
    #[serde(rename = "a_s_laser_m")]
    pub a_s_laser: f64,
}

impl BeamParams {
    pub fn validate(&self, species: &SpeciesParams) -> Result<()> {
        let limit = MAX_LASER_SCATTERING_BOHR * species.bohr_radius;
        if !self.a_s_laser.is_finite() || self.a_s_laser.abs() > limit {
            return Err(Error::invalid(
                "beam.a_s_laser_m",
                format!("|a_s| must be <= {limit:e} m (500 a0), got {:e}", self.a_s_laser),
            ));
        }
        Ok(())
    }

    pub fn interaction_u(&self, species: &SpeciesParams) -> f64 {
        interaction_strength(self.a_s_laser, species)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_scattering_length_gives_zero() {
        assert_eq!(interaction_strength(0.0, &SpeciesParams::default()), 0.0);
    }

    #[test]
    fn hundred_bohr_matches_hand_value() {
        let s = SpeciesParams::default();
        let a = 100.0 * BOHR_RADIUS;
        // 4π (1.054571817e-34)² (5.29e-9) / 1.40999e-25
        let hbar2 = 1.054571817e-34_f64 * 1.054571817e-34;
        let expected = 4.0 * 3.141592653589793 * hbar2 * 5.29e-9 / 1.40999e-25;
        let u = interaction_strength(a, &s);
        assert!(((u - expected) / expected).abs() < 1e-14);
        assert!((u - 5.2433e-51).abs() / 5.2433e-51 < 1e-3);
        assert_eq!(interaction_strength(-a, &s), -u);
    }

    #[test]
    fn laser_scattering_guard() {
        let s = SpeciesParams::default();
        assert!(BeamParams { a_s_laser: -300.0 * BOHR_RADIUS }.validate(&s).is_ok());
        assert!(BeamParams { a_s_laser: 501.0 * BOHR_RADIUS }.validate(&s).is_err());
    }

    #[test]
    fn defaults_are_valid() {
        SpeciesParams::default().validate().unwrap();
        TrapParams::default().validate().unwrap();
        let bad = SpeciesParams { mass: -1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn defaults_round_trip_through_json_bit_exact() {
        let s = SpeciesParams::default();
        let text = serde_json::to_string(&s).unwrap();
        let back: SpeciesParams = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
        let t = TrapParams::default();
        let back: TrapParams = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(t, back);
        // Decimal literals written by hand parse to the same bits as the defaults.
        let literal: SpeciesParams =
            serde_json::from_str(r#"{"mass_kg": 1.40999e-25, "three_body_k_m6_s": 4e-41}"#).unwrap();
        assert_eq!(literal, s);
    }

    proptest! {
        #[test]
        fn interaction_is_linear(a in -1e-8f64..1e-8, c in -10.0f64..10.0) {
            let s = SpeciesParams::default();
            let lhs = interaction_strength(c * a, &s);
            let rhs = c * interaction_strength(a, &s);
            prop_assert!((lhs - rhs).abs() <= 1e-14 * rhs.abs().max(1e-70));
        }
    }
}
