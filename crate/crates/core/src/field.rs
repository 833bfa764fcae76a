//! Uniform Cartesian grids, complex fields and their spectral transforms.
//!
//! Storage is x-fastest. A 2D grid spans (x, z); a 3D grid spans (x, y, z).

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimGrid {
    points: Vec<usize>,
    extent: Vec<f64>,
    center: Vec<f64>,
}

impl SimGrid {
    /// `points`, `extent` and `center` are listed as (x, z) for 2D or (x, y, z) for 3D.
    pub fn new(points: &[usize], extent: &[f64], center: &[f64]) -> Result<Self> {
        let dims = points.len();
        if dims != 2 && dims != 3 {
            return Err(Error::invalid("grid.points", format!("need 2 or 3 axes, got {dims}")));
        }
        if extent.len() != dims || center.len() != dims {
            return Err(Error::invalid(
                "grid",
                "points, extent and center must have the same number of axes",
            ));
        }
        for (&n, &l) in points.iter().zip(extent) {
            if n < 2 || !n.is_power_of_two() {
                return Err(Error::invalid("grid.points", format!("{n} is not a power of two >= 2")));
            }
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::invalid("grid.extent_m", format!("must be > 0, got {l}")));
            }
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("grid.center_m", "must be finite"));
        }
        Ok(Self {
            points: points.to_vec(),
            extent: extent.to_vec(),
            center: center.to_vec(),
        })
    }

    pub fn dims(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axes(&self) -> &'static [Axis] {
        if self.dims() == 2 {
            &[Axis::X, Axis::Z]
        } else {
            &[Axis::X, Axis::Y, Axis::Z]
        }
    }

    pub fn axis_index(&self, axis: Axis) -> Option<usize> {
        self.axes().iter().position(|&a| a == axis)
    }

    fn require(&self, axis: Axis) -> Result<usize> {
        self.axis_index(axis)
            .ok_or_else(|| Error::invalid("axis", format!("{axis:?} is not on a {}D grid", self.dims())))
    }

    pub fn spacing(&self, a: usize) -> f64 {
        self.extent[a] / self.points[a] as f64
    }

    /// Volume element of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dims()).map(|a| self.spacing(a)).product()
    }

    /// Memory stride of axis `a`.
    pub fn stride(&self, a: usize) -> usize {
        self.points[..a].iter().product()
    }

    /// Cell coordinates along axis `a`; index n/2 sits on the axis center.
    pub fn coords(&self, a: usize) -> Vec<f64> {
        let n = self.points[a];
        let h = self.spacing(a);
        let lo = self.center[a] - 0.5 * self.extent[a];
        (0..n).map(|i| lo + i as f64 * h).collect()
    }

    pub fn coords_of(&self, axis: Axis) -> Result<Vec<f64>> {
        Ok(self.coords(self.require(axis)?))
    }

    /// Angular wavenumbers along axis `a` in standard FFT ordering.
    pub fn wavenumbers(&self, a: usize) -> Vec<f64> {
        let n = self.points[a];
        let dk = 2.0 * PI / self.extent[a];
        (0..n)
            .map(|j| {
                let j = if j < n / 2 { j as isize } else { j as isize - n as isize };
                j as f64 * dk
            })
            .collect()
    }

    /// Index of the cell nearest to `value` on axis `a`, clamped to the grid.
    pub fn nearest_index(&self, a: usize, value: f64) -> usize {
        let lo = self.center[a] - 0.5 * self.extent[a];
        let i = ((value - lo) / self.spacing(a)).round();
        i.clamp(0.0, (self.points[a] - 1) as f64) as usize
    }

    /// Calls `f(flat_index, coordinates)` for every cell in storage order.
    pub fn for_each_point(&self, mut f: impl FnMut(usize, &[f64])) {
        let axes: Vec<Vec<f64>> = (0..self.dims()).map(|a| self.coords(a)).collect();
        let mut r = vec![0.0; self.dims()];
        let mut idx = vec![0usize; self.dims()];
        for flat in 0..self.len() {
            for a in 0..self.dims() {
                r[a] = axes[a][idx[a]];
            }
            f(flat, &r);
            for a in 0..self.dims() {
                idx[a] += 1;
                if idx[a] < self.points[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
    }

    /// Same traversal as [`for_each_point`](Self::for_each_point) over wavevectors.
    pub fn for_each_wavevector(&self, mut f: impl FnMut(usize, &[f64])) {
        let axes: Vec<Vec<f64>> = (0..self.dims()).map(|a| self.wavenumbers(a)).collect();
        let mut k = vec![0.0; self.dims()];
        let mut idx = vec![0usize; self.dims()];
        for flat in 0..self.len() {
            for a in 0..self.dims() {
                k[a] = axes[a][idx[a]];
            }
            f(flat, &k);
            for a in 0..self.dims() {
                idx[a] += 1;
                if idx[a] < self.points[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
    }

    pub fn check_same(&self, other: &SimGrid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "{:?}/{:?} vs {:?}/{:?}",
                self.points, self.extent, other.points, other.extent
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Position,
    Spectral,
}

/// Complex amplitude on a grid, normalised so that Σ|ψ|²·dV is the atom number.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: SimGrid,
    domain: Domain,
    pub data: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(grid: &SimGrid) -> Self {
        Self {
            grid: grid.clone(),
            domain: Domain::Position,
            data: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_fn(grid: &SimGrid, mut f: impl FnMut(&[f64]) -> Complex64) -> Self {
        let mut field = Self::zeros(grid);
        grid.for_each_point(|i, r| field.data[i] = f(r));
        field
    }

    pub fn from_data(grid: &SimGrid, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} cells",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            domain: Domain::Position,
            data,
        })
    }

    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn density(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn scale(&mut self, s: f64) {
        for c in &mut self.data {
            *c *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Reusable FFT plans for one grid shape.
pub struct SpectralPlan {
    points: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    scratch: Vec<Complex64>,
    line: Vec<Complex64>,
}

impl SpectralPlan {
    pub fn new(grid: &SimGrid) -> Self {
        let mut planner = FftPlanner::new();
        let forward: Vec<_> = grid.points().iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse: Vec<_> = grid.points().iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        let scratch_len = forward
            .iter()
            .chain(&inverse)
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            points: grid.points().to_vec(),
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            line: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Unnormalised forward transform over all axes, in place.
    pub fn forward_raw(&mut self, data: &mut [Complex64]) {
        for a in 0..self.points.len() {
            self.axis_pass(a, data, true);
        }
    }

    /// Unnormalised inverse transform; `inverse_raw(forward_raw(f)) = N·f`.
    pub fn inverse_raw(&mut self, data: &mut [Complex64]) {
        for a in 0..self.points.len() {
            self.axis_pass(a, data, false);
        }
    }

    /// Unnormalised forward transform along axis `a` only, in place.
    pub fn forward_axis_raw(&mut self, a: usize, data: &mut [Complex64]) {
        self.axis_pass(a, data, true);
    }

    fn axis_pass(&mut self, a: usize, data: &mut [Complex64], forward: bool) {
        let n = self.points[a];
        let plan = if forward { &self.forward[a] } else { &self.inverse[a] };
        if a == 0 {
            plan.process_with_scratch(data, &mut self.scratch);
            return;
        }
        // Gather each block [n][stride] into [stride][n] so the lines are
        // contiguous, transform, and scatter back.
        let stride: usize = self.points[..a].iter().product();
        let block = n * stride;
        let buf = &mut self.line[..block];
        for chunk in data.chunks_exact_mut(block) {
            transpose(chunk, buf, n, stride);
            plan.process_with_scratch(buf, &mut self.scratch);
            transpose(buf, chunk, stride, n);
        }
    }

    /// Unitary forward transform.
    pub fn transform_forward(&mut self, field: &ComplexField) -> Result<ComplexField> {
        self.check(field, Domain::Position)?;
        let mut out = field.clone();
        self.forward_raw(&mut out.data);
        out.scale(1.0 / (field.grid.len() as f64).sqrt());
        out.domain = Domain::Spectral;
        Ok(out)
    }

    /// Unitary inverse transform.
    pub fn transform_inverse(&mut self, field: &ComplexField) -> Result<ComplexField> {
        self.check(field, Domain::Spectral)?;
        let mut out = field.clone();
        self.inverse_raw(&mut out.data);
        out.scale(1.0 / (field.grid.len() as f64).sqrt());
        out.domain = Domain::Position;
        Ok(out)
    }

    fn check(&self, field: &ComplexField, domain: Domain) -> Result<()> {
        if field.grid.points() != self.points.as_slice() {
            return Err(Error::GridMismatch(format!(
                "plan built for {:?}, field has {:?}",
                self.points,
                field.grid.points()
            )));
        }
        if field.domain != domain {
            return Err(Error::invalid("field", format!("expected a {domain:?}-domain field")));
        }
        Ok(())
    }
}

/// `src` is `rows × cols` row-major; `dst` receives `cols × rows`.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const TILE: usize = 16;
    for r0 in (0..rows).step_by(TILE) {
        for c0 in (0..cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows) {
                for c in c0..(c0 + TILE).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Σ|ψ|²·dV. For a spectral field from the unitary transform this equals the
/// position-space value.
pub fn atom_number(field: &ComplexField) -> f64 {
    let sum: f64 = field.data.iter().map(|c| c.norm_sqr()).sum();
    sum * field.grid.cell_volume()
}

/// Density integrated over every axis except `a`.
pub fn marginal(grid: &SimGrid, density: &[f64], a: usize) -> Vec<f64> {
    let n = grid.points()[a];
    let stride = grid.stride(a);
    let mut out = vec![0.0; n];
    for (flat, &d) in density.iter().enumerate() {
        out[(flat / stride) % n] += d;
    }
    let dv = grid.cell_volume() / grid.spacing(a);
    out.iter_mut().for_each(|v| *v *= dv);
    out
}

/// Mean and rms width of `weights` over `coords`.
pub fn moments(coords: &[f64], weights: &[f64]) -> Option<(f64, f64)> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mean = coords.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / total;
    let var = coords
        .iter()
        .zip(weights)
        .map(|(x, w)| (x - mean) * (x - mean) * w)
        .sum::<f64>()
        / total;
    Some((mean, var.max(0.0).sqrt()))
}

/// First moment and rms width of |ψ|² along `axis`.
pub fn centroid_and_rms(field: &ComplexField, axis: Axis) -> Result<(f64, f64)> {
    let grid = field.grid();
    let a = grid.require(axis)?;
    let m = marginal(grid, &field.density(), a);
    moments(&grid.coords(a), &m).ok_or_else(|| Error::Degenerate("field has zero norm".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid2() -> SimGrid {
        SimGrid::new(&[64, 32], &[20e-6, 10e-6], &[0.0, 1e-6]).unwrap()
    }

    fn gaussian(grid: &SimGrid, x0: f64, z0: f64, sx: f64, sz: f64) -> ComplexField {
        let norm = 1.0 / (2.0 * PI * sx * sz).sqrt();
        ComplexField::from_fn(grid, |r| {
            let e = -((r[0] - x0).powi(2) / (4.0 * sx * sx) + (r[1] - z0).powi(2) / (4.0 * sz * sz));
            Complex64::new(norm * e.exp(), 0.0)
        })
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(SimGrid::new(&[60, 32], &[1.0, 1.0], &[0.0, 0.0]).is_err());
        assert!(SimGrid::new(&[64], &[1.0], &[0.0]).is_err());
        assert!(SimGrid::new(&[64, 32], &[1.0, -1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn wavenumber_axis_spans_nyquist() {
        let g = grid2();
        let k = g.wavenumbers(0);
        let h = g.spacing(0);
        assert_eq!(k[0], 0.0);
        assert!((k[32] + PI / h).abs() < 1e-6 * PI / h);
        assert!(k.iter().all(|v| v.abs() <= PI / h * (1.0 + 1e-12)));
        let x = g.coords(0);
        assert!((x[32] - 0.0).abs() < 1e-18);
    }

    #[test]
    fn constant_field_goes_to_zero_bin() {
        let g = grid2();
        let mut plan = SpectralPlan::new(&g);
        let f = ComplexField::from_fn(&g, |_| Complex64::new(2.0, 0.0));
        let s = plan.transform_forward(&f).unwrap();
        let n = g.len() as f64;
        assert!((s.data[0] - Complex64::new(2.0 * n.sqrt(), 0.0)).norm() < 1e-9);
        assert!(s.data[1..].iter().all(|c| c.norm() < 1e-9));
    }

    #[test]
    fn plane_wave_lands_in_one_bin() {
        let g = grid2();
        let mut plan = SpectralPlan::new(&g);
        let kx = g.wavenumbers(0)[5];
        let kz = g.wavenumbers(1)[30];
        let f = ComplexField::from_fn(&g, |r| Complex64::from_polar(1.0, kx * r[0] + kz * r[1]));
        let s = plan.transform_forward(&f).unwrap();
        let target = 30 * 64 + 5;
        for (i, c) in s.data.iter().enumerate() {
            if i == target {
                assert!((c.norm() - (g.len() as f64).sqrt()).abs() < 1e-9);
            } else {
                assert!(c.norm() < 1e-9, "bin {i} = {c}");
            }
        }
    }

    #[test]
    fn random_round_trip_3d() {
        let g = SimGrid::new(&[16, 8, 32], &[1.0, 2.0, 3.0], &[0.0; 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = ComplexField::from_fn(&g, |_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let mut plan = SpectralPlan::new(&g);
        let spectral = plan.transform_forward(&f).unwrap();
        let back = plan.transform_inverse(&spectral).unwrap();
        let err = f.data.iter().zip(&back.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "max round-trip error {err}");
    }

    #[test]
    fn transform_rejects_other_grid() {
        let mut plan = SpectralPlan::new(&grid2());
        let other = SimGrid::new(&[32, 32], &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!(plan.transform_forward(&ComplexField::zeros(&other)).is_err());
    }

    #[test]
    fn atom_number_of_zero_and_unit_gaussian() {
        let g = SimGrid::new(&[128, 128], &[40e-6, 40e-6], &[0.0, 0.0]).unwrap();
        assert_eq!(atom_number(&ComplexField::zeros(&g)), 0.0);
        let f = gaussian(&g, 1e-6, -2e-6, 2e-6, 3e-6);
        assert!((atom_number(&f) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gaussian_moments() {
        let g = SimGrid::new(&[256, 64], &[40e-6, 10e-6], &[0.0, 0.0]).unwrap();
        let f = gaussian(&g, 0.0, 0.0, 2e-6, 1e-6);
        let (c, w) = centroid_and_rms(&f, Axis::X).unwrap();
        assert!(c.abs() < g.spacing(0) / 100.0);
        assert!((w - 2e-6).abs() / 2e-6 < 1e-3);
        assert!(centroid_and_rms(&f, Axis::Y).is_err());
        assert!(centroid_and_rms(&ComplexField::zeros(&g), Axis::X).is_err());
    }

    #[test]
    fn mixture_moments_match_closed_form() {
        let g = SimGrid::new(&[512, 32], &[80e-6, 10e-6], &[0.0, 0.0]).unwrap();
        let (w1, m1, s1) = (0.3, -6e-6, 1.5e-6);
        let (w2, m2, s2) = (0.7, 5e-6, 2.5e-6);
        // Density is a weighted Gaussian mixture along x, Gaussian along z.
        let f = ComplexField::from_fn(&g, |r| {
            let px = |m: f64, s: f64| (-(r[0] - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt());
            let pz = (-(r[1]).powi(2) / (2.0 * 1e-12)).exp() / (1e-6 * (2.0 * PI).sqrt());
            Complex64::new(((w1 * px(m1, s1) + w2 * px(m2, s2)) * pz).sqrt(), 0.0)
        });
        let mean = w1 * m1 + w2 * m2;
        let var = w1 * (s1 * s1 + m1 * m1) + w2 * (s2 * s2 + m2 * m2) - mean * mean;
        let (c, w) = centroid_and_rms(&f, Axis::X).unwrap();
        assert!((c - mean).abs() < 1e-3 * var.sqrt());
        assert!((w - var.sqrt()).abs() / var.sqrt() < 1e-4);
    }

    #[test]
    fn centroid_shifts_by_one_cell() {
        let g = SimGrid::new(&[128, 32], &[40e-6, 10e-6], &[0.0, 0.0]).unwrap();
        let f = gaussian(&g, 0.3e-6, 0.0, 3e-6, 1e-6);
        let mut shifted = ComplexField::zeros(&g);
        for iz in 0..32 {
            for ix in 1..128 {
                shifted.data[iz * 128 + ix] = f.data[iz * 128 + ix - 1];
            }
        }
        let (c0, _) = centroid_and_rms(&f, Axis::X).unwrap();
        let (c1, _) = centroid_and_rms(&shifted, Axis::X).unwrap();
        assert!((c1 - c0 - g.spacing(0)).abs() < 1e-9 * g.spacing(0) + 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn parseval_holds(seed in any::<u64>()) {
            let g = SimGrid::new(&[32, 16], &[5e-6, 7e-6], &[0.0, 0.0]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = ComplexField::from_fn(&g, |_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let mut plan = SpectralPlan::new(&g);
            let s = plan.transform_forward(&f).unwrap();
            let (a, b) = (atom_number(&f), atom_number(&s));
            prop_assert!(((a - b) / a).abs() < 1e-10);
        }
    }
}
