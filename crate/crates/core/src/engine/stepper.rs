//! Real-time Strang-split stepping of the coupled fields.

use num_complex::Complex64;

use super::{Physics, StepperConfig, TwoStateSystem};
use crate::error::{Error, Result};
use crate::field::{atom_number, SimGrid, SpectralPlan};

/// Largest nonlinear phase (or loss exponent) allowed per step.
pub const STABILITY_LIMIT_RAD: f64 = 0.1;

pub struct Evolver {
    physics: Physics,
    cfg: StepperConfig,
    grid: SimGrid,
    plan: SpectralPlan,
    kin0: Vec<Complex64>,
    kinn: Vec<Complex64>,
    /// (V_T − μ)/ħ
    v0: Vec<f64>,
    /// (gravity + U_f)/ħ
    vn: Vec<f64>,
    /// exp(−W·dt) of the absorbing layer.
    damping: Option<Vec<f64>>,
    /// Residual spatial phase of the coupling, e^{i(nq_z − k_c)z}.
    coupling: Option<Vec<Complex64>>,
    /// nω_res when the coupling carries its time phase (lab frame), else 0.
    coupling_time_rate: f64,
    g0: f64,
    gn: f64,
    loss_rate: f64,
}

/// ħ|k + k_c ẑ|²/2m − the constant part, written so that k_c = 0 reproduces
/// the unshifted factor bit for bit.
fn kinetic_rate(k: &[f64], k_c: f64, hbar_over_2m: f64) -> f64 {
    let kz = k[k.len() - 1];
    hbar_over_2m * (k.iter().map(|v| v * v).sum::<f64>() + 2.0 * kz * k_c)
}

impl Evolver {
    pub fn new(physics: Physics, cfg: StepperConfig, grid: &SimGrid) -> Result<Self> {
        cfg.validate()?;
        let sp = &physics.species;
        let hbar = sp.hbar;
        let h2m = 0.5 * sp.hbar / sp.mass;
        let n = grid.len();
        let inv_n = 1.0 / n as f64;
        let half = 0.5 * cfg.dt;

        let (k_c, rotating) = physics.frame.carrier(&physics.bragg, sp);
        let nq = physics.bragg.kick_wavenumber_z();
        let offset = if rotating { h2m * (k_c * k_c - nq * nq) } else { h2m * k_c * k_c };

        let mut kin0 = vec![Complex64::new(0.0, 0.0); n];
        let mut kinn = vec![Complex64::new(0.0, 0.0); n];
        grid.for_each_wavevector(|i, k| {
            kin0[i] = Complex64::cis(-kinetic_rate(k, 0.0, h2m) * half) * inv_n;
            kinn[i] = Complex64::cis(-(kinetic_rate(k, k_c, h2m) + offset) * half) * inv_n;
        });

        let mut v0 = vec![0.0; n];
        let mut vn = vec![0.0; n];
        let mut w = vec![0.0; n];
        grid.for_each_point(|i, r| {
            v0[i] = (physics.potentials.condensate(r, sp) - physics.mu) / hbar;
            vn[i] = physics.potentials.beam(r, sp) / hbar;
            w[i] = physics.potentials.absorber_rate(grid, r);
        });
        let damping = physics
            .potentials
            .absorber
            .map(|_| w.iter().map(|rate| (-rate * cfg.dt).exp()).collect());

        let residual = nq - k_c;
        let coupling = (residual != 0.0).then(|| {
            let mut c = vec![Complex64::new(0.0, 0.0); n];
            let last = grid.dims() - 1;
            grid.for_each_point(|i, r| c[i] = Complex64::cis(residual * r[last]));
            c
        });
        let coupling_time_rate = if rotating { 0.0 } else { physics.bragg.order as f64 * physics.bragg.omega(sp) };

        Ok(Self {
            g0: physics.u_condensate / hbar,
            gn: physics.u_beam / hbar,
            loss_rate: physics.loss.amplitude_rate(hbar),
            plan: SpectralPlan::new(grid),
            grid: grid.clone(),
            physics,
            cfg,
            kin0,
            kinn,
            v0,
            vn,
            damping,
            coupling,
            coupling_time_rate,
        })
    }

    pub fn physics(&self) -> &Physics {
        &self.physics
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }

    /// Ω at time `t`, including the ramp.
    pub fn rabi_at(&self, t: f64) -> f64 {
        let om = self.physics.bragg.rabi;
        if self.cfg.ramp_time > 0.0 {
            om * (t / self.cfg.ramp_time).clamp(0.0, 1.0)
        } else {
            om
        }
    }

    /// Largest per-step nonlinear phase or loss exponent on the current state.
    pub fn nonlinear_step_phase(&self, sys: &TwoStateSystem) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, b) in sys.psi0.data.iter().zip(&sys.psin.data) {
            let (n0, nn) = (a.norm_sqr(), b.norm_sqr());
            let f = n0 * n0 + nn * nn + 4.0 * n0 * nn;
            let rate = (self.g0.abs().max(self.gn.abs()) * (n0 + nn)).max(self.loss_rate * f);
            worst = worst.max(rate);
        }
        worst * self.cfg.dt
    }

    pub fn check(&self, sys: &TwoStateSystem) -> Result<()> {
        if !(sys.psi0.is_finite() && sys.psin.is_finite()) {
            return Err(Error::NonFinite(format!("amplitude at step {}", sys.step_index)));
        }
        let phase = self.nonlinear_step_phase(sys);
        if phase >= STABILITY_LIMIT_RAD {
            return Err(Error::Unstable(format!(
                "nonlinear phase per step {phase:.3} rad exceeds {STABILITY_LIMIT_RAD} rad; reduce dt"
            )));
        }
        Ok(())
    }

    fn kinetic_half(&mut self, sys: &mut TwoStateSystem) {
        self.plan.forward_raw(&mut sys.psi0.data);
        sys.psi0.data.iter_mut().zip(&self.kin0).for_each(|(c, k)| *c *= *k);
        self.plan.inverse_raw(&mut sys.psi0.data);
        self.plan.forward_raw(&mut sys.psin.data);
        sys.psin.data.iter_mut().zip(&self.kinn).for_each(|(c, k)| *c *= *k);
        self.plan.inverse_raw(&mut sys.psin.data);
    }

    /// Potential, mean-field and loss terms over `h` at cell `i`.
    #[inline]
    fn diagonal(&self, a: &mut Complex64, b: &mut Complex64, i: usize, h: f64) {
        let n0 = a.norm_sqr();
        let nn = b.norm_sqr();
        let c = self.loss_rate;
        let (amp, nn_mid) = if c > 0.0 && nn > 0.0 {
            // Midpoint evaluation of F keeps the decay second order.
            let f = n0 * n0 + nn * nn + 4.0 * n0 * nn;
            let nn_half = nn * (-c * f * h).exp();
            let f_mid = n0 * n0 + nn_half * nn_half + 4.0 * n0 * nn_half;
            ((-c * f_mid * h).exp(), nn * (-c * f_mid * h).exp())
        } else {
            (1.0, nn)
        };
        let total = n0 + nn_mid;
        *a *= Complex64::cis(-(self.v0[i] + self.g0 * total) * h);
        *b *= Complex64::cis(-(self.vn[i] + self.gn * total) * h) * amp;
    }

    fn local(&self, sys: &mut TwoStateSystem, t_mid: f64) {
        let dt = self.cfg.dt;
        let h = 0.5 * dt;
        let om = self.rabi_at(t_mid);
        let (cos, sin) = ((om * dt).cos(), (om * dt).sin());
        let time_phase = Complex64::cis(-self.coupling_time_rate * t_mid);
        let minus_i_sin = Complex64::new(0.0, -sin);
        let psi0 = &mut sys.psi0.data;
        let psin = &mut sys.psin.data;
        for i in 0..psi0.len() {
            let mut a = psi0[i];
            let mut b = psin[i];
            self.diagonal(&mut a, &mut b, i, h);
            if om != 0.0 {
                let p = match &self.coupling {
                    Some(c) => c[i] * time_phase,
                    None => time_phase,
                };
                let a2 = cos * a + minus_i_sin * p.conj() * b;
                let b2 = cos * b + minus_i_sin * p * a;
                a = a2;
                b = b2;
            }
            self.diagonal(&mut a, &mut b, i, h);
            psi0[i] = a;
            psin[i] = b;
        }
    }

    /// One Strang step: K/2, local terms, K/2, absorber, pump renormalisation.
    pub fn step(&mut self, sys: &mut TwoStateSystem) {
        let dt = self.cfg.dt;
        let t_mid = sys.time(dt) + 0.5 * dt;
        self.kinetic_half(sys);
        self.local(sys, t_mid);
        self.kinetic_half(sys);
        if let Some(d) = &self.damping {
            for ((a, b), w) in sys.psi0.data.iter_mut().zip(sys.psin.data.iter_mut()).zip(d) {
                *a *= *w;
                *b *= *w;
            }
        }
        if self.cfg.pump_renormalize {
            let n = atom_number(&sys.psi0);
            if n > 0.0 {
                sys.psi0.scale((self.physics.atom_number / n).sqrt());
            }
        }
        sys.step_index += 1;
    }

    /// Steps until `step_index` reaches `last_step`, calling `on_diagnostic`
    /// every `steps_per_diagnostic` steps (and at the end). The state is
    /// checked for finiteness and the stability guard at each call.
    pub fn run(
        &mut self,
        sys: &mut TwoStateSystem,
        last_step: u64,
        mut on_diagnostic: impl FnMut(&TwoStateSystem) -> Result<()>,
    ) -> Result<()> {
        self.check(sys)?;
        let every = self.cfg.steps_per_diagnostic as u64;
        while sys.step_index < last_step {
            self.step(sys);
            if sys.step_index % every == 0 || sys.step_index == last_step {
                self.check(sys)?;
                on_diagnostic(sys)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::bragg::BraggConfig;
    use crate::engine::{BeamFrame, LossConvention, LossModel};
    use crate::field::{centroid_and_rms, Axis, ComplexField};
    use crate::params::SpeciesParams;
    use crate::params::TrapParams;
    use crate::potentials::{GravityTerm, PotentialStack, TrapTerm};

    fn bragg(order: u32, rabi: f64) -> BraggConfig {
        BraggConfig { wavelength: 780.027e-9, alpha: PI, order, rabi, resonance_z: 0.0 }
    }

    fn physics(order: u32, rabi: f64) -> Physics {
        Physics {
            species: SpeciesParams::default(),
            u_condensate: 0.0,
            u_beam: 0.0,
            loss: LossModel { k: 0.0, convention: LossConvention::StandardHalfHbar },
            bragg: bragg(order, rabi),
            frame: BeamFrame::Envelope,
            potentials: PotentialStack::default(),
            mu: 0.0,
            atom_number: 1.0,
        }
    }

    fn stepper(dt: f64) -> StepperConfig {
        StepperConfig { dt, steps_per_diagnostic: 10, pump_renormalize: false, ramp_time: 0.0 }
    }

    fn gaussian(grid: &SimGrid, x0: f64, z0: f64, s: f64) -> ComplexField {
        let norm = 1.0 / (2.0 * PI * s * s).sqrt();
        ComplexField::from_fn(grid, |r| {
            let e = -((r[0] - x0).powi(2) + (r[1] - z0).powi(2)) / (4.0 * s * s);
            Complex64::new(norm * e.exp(), 0.0)
        })
    }

    #[test]
    fn zero_order_shift_is_bit_identical_to_unshifted() {
        let grid = SimGrid::new(&[32, 64], &[10e-6, 20e-6], &[0.0, 0.0]).unwrap();
        let f = gaussian(&grid, 0.0, 0.0, 1e-6);
        let mut ev = Evolver::new(physics(0, 0.0), stepper(1e-5), &grid).unwrap();
        let mut sys = TwoStateSystem::from_parts(f.clone(), f, 0).unwrap();
        for _ in 0..20 {
            ev.step(&mut sys);
        }
        assert_eq!(sys.psi0.data, sys.psin.data);
    }

    #[test]
    fn empty_coupling_leaves_beam_zero() {
        let grid = SimGrid::new(&[32, 32], &[10e-6, 10e-6], &[0.0, 0.0]).unwrap();
        let f = gaussian(&grid, 0.0, 0.0, 1e-6);
        let mut ev = Evolver::new(physics(1, 0.0), stepper(1e-5), &grid).unwrap();
        let mut sys = TwoStateSystem::new(f);
        ev.run(&mut sys, 50, |_| Ok(())).unwrap();
        assert!(sys.psin.data.iter().all(|c| *c == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn stationary_ground_state_stays_put() {
        let s = SpeciesParams::default();
        let trap = TrapParams { omega_x: 2.0 * PI * 200.0, omega_z: 2.0 * PI * 200.0, atom_number: 1e4, ..Default::default() };
        let grid = SimGrid::new(&[64, 64], &[12e-6, 12e-6], &[0.0, 0.0]).unwrap();
        let term = TrapTerm { trap, center_x: 0.0, center_z: 0.0 };
        let u = crate::engine::reduced_interaction(crate::params::interaction_strength(trap.a_s_bec, &s), 2, 3e-6);
        let gs = crate::engine::ground_state(&grid, &term, u, &s, &Default::default()).unwrap();
        let mut p = physics(1, 0.0);
        p.u_condensate = u;
        p.mu = gs.mu;
        p.atom_number = 1e4;
        p.potentials.trap = Some(term);
        let mut ev = Evolver::new(p, stepper(2e-6), &grid).unwrap();
        let start = gs.psi.density();
        let mut sys = TwoStateSystem::new(gs.psi);
        ev.run(&mut sys, 1000, |_| Ok(())).unwrap();
        let peak = start.iter().cloned().fold(0.0, f64::max);
        let change = sys.psi0.density().iter().zip(&start).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(change / peak < 1e-6, "{}", change / peak);
    }

    #[test]
    fn envelope_and_lab_frames_agree() {
        // The same outcoupling run in both representations; the lab field is
        // the envelope times the carrier and the rotating phase. Step by step
        // the two splittings are the same map, so they agree to rounding as
        // long as nothing reaches the box edge, where the two k windows alias
        // differently.
        let s = SpeciesParams::default();
        let mut pe = physics(1, 3000.0);
        // The z extent holds a whole number of carrier periods so that the
        // lab-frame field is periodic on the grid.
        let lz = 2.0 * PI * 64.0 / pe.bragg.kick_wavenumber_z().abs();
        let grid = SimGrid::new(&[16, 512], &[4e-6, lz], &[0.0, 0.0]).unwrap();
        let f = gaussian(&grid, 0.0, 0.0, 1e-6);
        pe.potentials.gravity = Some(GravityTerm { reference_z: 0.0 });
        let mut pl = pe.clone();
        pl.frame = BeamFrame::Lab;
        let nq = pe.bragg.kick_wavenumber_z();
        let w = pe.bragg.omega(&s);
        let gap = |dt: f64| {
            let steps = (8e-5 / dt).round() as u64;
            let mut ee = Evolver::new(pe.clone(), stepper(dt), &grid).unwrap();
            let mut el = Evolver::new(pl.clone(), stepper(dt), &grid).unwrap();
            let mut se = TwoStateSystem::new(f.clone());
            let mut sl = TwoStateSystem::new(f.clone());
            ee.run(&mut se, steps, |_| Ok(())).unwrap();
            el.run(&mut sl, steps, |_| Ok(())).unwrap();
            let t = se.time(dt);
            let mut max_diff: f64 = 0.0;
            let mut max_amp: f64 = 0.0;
            grid.for_each_point(|i, r| {
                let lab_from_env = se.psin.data[i] * Complex64::cis(nq * r[1] - w * t);
                max_diff = max_diff.max((lab_from_env - sl.psin.data[i]).norm());
                max_amp = max_amp.max(sl.psin.data[i].norm());
            });
            assert!(max_amp > 0.0);
            let n_e = atom_number(&se.psin);
            let n_l = atom_number(&sl.psin);
            (max_diff / max_amp, (n_e - n_l).abs() / n_l)
        };
        for dt in [4e-7, 1e-7] {
            let (field, norm) = gap(dt);
            assert!(field < 1e-10, "dt {dt}: {field}");
            assert!(norm < 1e-12, "dt {dt}: {norm}");
        }
    }

    #[test]
    fn free_gaussian_disperses_analytically() {
        let s = SpeciesParams::default();
        let s0 = 0.5e-6;
        let grid = SimGrid::new(&[256, 256], &[20e-6, 20e-6], &[0.0, 0.0]).unwrap();
        let f = gaussian(&grid, 0.0, 0.0, s0);
        let mut ev = Evolver::new(physics(1, 0.0), stepper(1e-5), &grid).unwrap();
        let mut sys = TwoStateSystem::from_parts(ComplexField::zeros(&grid), f, 0).unwrap();
        let t_double = 2.0 * 3f64.sqrt() * s.mass * s0 * s0 / s.hbar;
        let steps = (t_double / 1e-5).ceil() as u64;
        ev.run(&mut sys, steps, |_| Ok(())).unwrap();
        let t = sys.time(1e-5);
        let expect = s0 * (1.0 + (s.hbar * t / (2.0 * s.mass * s0 * s0)).powi(2)).sqrt();
        let (_, wx) = centroid_and_rms(&sys.psin, Axis::X).unwrap();
        assert!((wx - expect).abs() / expect < 5e-3, "{wx} vs {expect}");
    }
}
