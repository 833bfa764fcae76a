//! Beam observables: widths, momentum widths, M², Gaussian fits of focused
//! profiles, peak density, atom counts and divergence fits.
//!
//! Densities are column densities: |ψ|² on a 2D (x, z) grid, or |ψ|²
//! integrated over y on a 3D grid, in atoms/m².

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{moments, ComplexField, SimGrid, SpectralPlan};

/// Converts atoms/m² to atoms/μm².
pub const PER_UM2: f64 = 1e-12;

/// Column density on the (x, z) plane, x-fastest, atoms/m².
pub fn column_density(field: &ComplexField) -> Vec<f64> {
    let grid = field.grid();
    let p = grid.points();
    if grid.dims() == 2 {
        return field.density();
    }
    let (nx, ny, nz) = (p[0], p[1], p[2]);
    let dy = grid.spacing(1);
    let mut out = vec![0.0; nx * nz];
    for k in 0..nz {
        for j in 0..ny {
            let row = &field.data[(k * ny + j) * nx..(k * ny + j + 1) * nx];
            for (o, c) in out[k * nx..(k + 1) * nx].iter_mut().zip(row) {
                *o += c.norm_sqr() * dy;
            }
        }
    }
    out
}

fn z_axis(grid: &SimGrid) -> usize {
    grid.dims() - 1
}

/// Transverse profile at one z plane.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamSlice {
    /// Plane actually sampled (the grid row nearest to the request), m.
    pub z: f64,
    pub x: Vec<f64>,
    /// Column density along x, atoms/m².
    pub density: Vec<f64>,
}

impl BeamSlice {
    pub fn at(field: &ComplexField, z: f64) -> Self {
        let grid = field.grid();
        let a = z_axis(grid);
        let k = grid.nearest_index(a, z);
        let nx = grid.points()[0];
        let col = column_density(field);
        Self {
            z: grid.coords(a)[k],
            x: grid.coords(0),
            density: col[k * nx..(k + 1) * nx].to_vec(),
        }
    }

    /// Like [`BeamSlice::at`], but sampled `factor` times more finely along x
    /// by zero-padding each row's x spectrum. The samples lie on the field's
    /// own trigonometric interpolant, so no shape is assumed.
    pub fn refined(field: &ComplexField, z: f64, factor: usize) -> Self {
        let grid = field.grid();
        let a = z_axis(grid);
        let k = grid.nearest_index(a, z);
        let nx = grid.points()[0];
        let factor = factor.max(1);
        let m = nx * factor;
        let mut planner = rustfft::FftPlanner::new();
        let fwd = planner.plan_fft_forward(nx);
        let inv = planner.plan_fft_inverse(m);
        let (rows, weight) = if grid.dims() == 2 { (1, 1.0) } else { (grid.points()[1], grid.spacing(1)) };
        let mut density = vec![0.0; m];
        let mut padded = vec![Complex64::new(0.0, 0.0); m];
        for j in 0..rows {
            let start = (k * rows + j) * nx;
            let mut row = field.data[start..start + nx].to_vec();
            fwd.process(&mut row);
            padded.fill(Complex64::new(0.0, 0.0));
            for (i, c) in row.iter().enumerate() {
                if 2 * i < nx {
                    padded[i] = *c;
                } else if 2 * i > nx {
                    padded[m - (nx - i)] = *c;
                } else {
                    padded[i] = 0.5 * c;
                    padded[m - i] = 0.5 * c;
                }
            }
            inv.process(&mut padded);
            let s = 1.0 / nx as f64;
            for (d, c) in density.iter_mut().zip(&padded) {
                *d += (c * s).norm_sqr() * weight;
            }
        }
        let x0 = grid.coords(0)[0];
        let h = grid.spacing(0) / factor as f64;
        Self { z: grid.coords(a)[k], x: (0..m).map(|i| x0 + i as f64 * h).collect(), density }
    }

    /// The part of the slice with |x − center| ≤ half_width.
    pub fn window(&self, center: f64, half_width: f64) -> Self {
        let keep: Vec<usize> = (0..self.x.len()).filter(|&i| (self.x[i] - center).abs() <= half_width).collect();
        Self {
            z: self.z,
            x: keep.iter().map(|&i| self.x[i]).collect(),
            density: keep.iter().map(|&i| self.density[i]).collect(),
        }
    }

    pub fn peak(&self) -> Option<(f64, f64)> {
        self.x
            .iter()
            .zip(&self.density)
            .fold(None, |best: Option<(f64, f64)>, (&x, &d)| match best {
                Some((_, b)) if b >= d => best,
                _ => Some((x, d)),
            })
    }
}

/// Density summed over the z rows inside `[lo, hi]`, as a function of x.
fn window_marginal(field: &ComplexField, z_window: (f64, f64)) -> Vec<f64> {
    let grid = field.grid();
    let nx = grid.points()[0];
    let zs = grid.coords(z_axis(grid));
    let col = column_density(field);
    let mut out = vec![0.0; nx];
    for (k, z) in zs.iter().enumerate() {
        if *z >= z_window.0 && *z <= z_window.1 {
            for (o, d) in out.iter_mut().zip(&col[k * nx..(k + 1) * nx]) {
                *o += d;
            }
        }
    }
    out
}

/// rms width along x of |ψ|² restricted to z ∈ [lo, hi].
pub fn beam_width(field: &ComplexField, z_window: (f64, f64)) -> Result<f64> {
    let m = window_marginal(field, z_window);
    moments(&field.grid().coords(0), &m)
        .map(|(_, w)| w)
        .ok_or_else(|| Error::Degenerate(format!("no beam in z window [{}, {}] m", z_window.0, z_window.1)))
}

/// Centroid of |ψ|² along z.
pub fn centroid_z(field: &ComplexField) -> Option<f64> {
    let grid = field.grid();
    let a = z_axis(grid);
    let m = crate::field::marginal(grid, &field.density(), a);
    moments(&grid.coords(a), &m).map(|(c, _)| c)
}

/// (ħ/m)·rms(k_x) of the part of the field with z ∈ [lo, hi]. The x
/// transform acts row by row, so the window does not mix z rows.
pub fn beam_momentum_width(
    field: &ComplexField,
    z_window: (f64, f64),
    hbar_over_m: f64,
    plan: &mut SpectralPlan,
) -> Result<f64> {
    let grid = field.grid();
    let nx = grid.points()[0];
    let zs = grid.coords(z_axis(grid));
    let row_len = grid.len() / zs.len();
    let mut work = field.data.clone();
    for (k, z) in zs.iter().enumerate() {
        if !(*z >= z_window.0 && *z <= z_window.1) {
            work[k * row_len..(k + 1) * row_len].fill(Complex64::new(0.0, 0.0));
        }
    }
    plan.forward_axis_raw(0, &mut work);
    let mut weights = vec![0.0; nx];
    for (i, c) in work.iter().enumerate() {
        weights[i % nx] += c.norm_sqr();
    }
    moments(&grid.wavenumbers(0), &weights)
        .map(|(_, w)| hbar_over_m * w)
        .ok_or_else(|| Error::Degenerate(format!("no beam in z window [{}, {}] m", z_window.0, z_window.1)))
}

/// M² = (2/ħ)·Δx·m·Δv_x = 2·Δx·Δv_x/(ħ/m).
pub fn quality_factor(dx: f64, dvx: f64, hbar_over_m: f64) -> f64 {
    2.0 * dx * dvx / hbar_over_m
}

/// Peak column density on the plane nearest `focal_z`, atoms/μm².
pub fn peak_density(field: &ComplexField, focal_z: f64) -> f64 {
    BeamSlice::at(field, focal_z).peak().map_or(0.0, |(_, d)| d.max(0.0)) * PER_UM2
}

/// Atoms with z ∈ [lo, hi].
pub fn beam_atoms(field: &ComplexField, z_range: (f64, f64)) -> f64 {
    let grid = field.grid();
    let dxz = grid.spacing(0) * grid.spacing(z_axis(grid));
    window_marginal(field, z_range).iter().sum::<f64>() * dxz
}

/// (z, rms width) for each grid row in `z_range` whose line density
/// Σ|ψ|²dx is at least `min_line_density` atoms/m.
pub fn width_profile(field: &ComplexField, z_range: (f64, f64), min_line_density: f64) -> Vec<(f64, f64)> {
    let grid = field.grid();
    let nx = grid.points()[0];
    let x = grid.coords(0);
    let dx = grid.spacing(0);
    let col = column_density(field);
    let mut out = Vec::new();
    for (k, z) in grid.coords(z_axis(grid)).into_iter().enumerate() {
        if z < z_range.0 || z > z_range.1 {
            continue;
        }
        let row = &col[k * nx..(k + 1) * nx];
        if row.iter().sum::<f64>() * dx < min_line_density {
            continue;
        }
        if let Some((_, w)) = moments(&x, row) {
            out.push((z, w));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub center: f64,
    pub sigma: f64,
    pub fwhm: f64,
    /// rms of the fit residual divided by the fitted amplitude.
    pub residual_rms: f64,
    pub iterations: usize,
}

pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Full width at half maximum from linear interpolation of the two
/// half-maximum crossings around the highest sample.
pub fn half_max_width(x: &[f64], y: &[f64]) -> Result<f64> {
    let (imax, &ymax) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::Degenerate("empty profile".into()))?;
    if !(ymax > 0.0) {
        return Err(Error::Degenerate("profile has no positive maximum".into()));
    }
    let half = 0.5 * ymax;
    let cross = |i: usize, j: usize| x[i] + (half - y[i]) * (x[j] - x[i]) / (y[j] - y[i]);
    let left = (1..=imax).rev().find(|&i| y[i - 1] < half).map(|i| cross(i - 1, i));
    let right = (imax..y.len() - 1).find(|&i| y[i + 1] < half).map(|i| cross(i, i + 1));
    match (left, right) {
        (Some(l), Some(r)) => Ok(r - l),
        _ => Err(Error::Degenerate("profile does not fall below half maximum on both sides".into())),
    }
}

fn gaussian_model(p: &[f64; 3], x: f64) -> (f64, [f64; 3]) {
    let [a, c, s] = *p;
    let u = (x - c) / s;
    let e = (-0.5 * u * u).exp();
    (a * e, [e, a * e * u / s, a * e * u * u / s])
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    if !(d.abs() > 0.0) || !d.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, o) in out.iter_mut().enumerate() {
        let mut mc = m;
        for r in 0..3 {
            mc[r][col] = b[r];
        }
        *o = det(&mc) / d;
    }
    Some(out)
}

pub const MIN_POINTS_ABOVE_HALF: usize = 8;
const FIT_MAX_ITERATIONS: usize = 500;

/// Least-squares fit of A·exp(−(x−c)²/2σ²) with Levenberg–Marquardt damping,
/// started from the half-maximum width and the moments of the upper half.
pub fn fit_gaussian(slice: &BeamSlice) -> Result<GaussianFit> {
    let (x, y) = (&slice.x, &slice.density);
    if x.len() != y.len() {
        return Err(Error::invalid("slice", "x and density lengths differ"));
    }
    let ymax = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ymin = y.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(ymax > 0.0) || !(ymax > ymin) {
        return Err(Error::Degenerate("flat or empty profile".into()));
    }
    let above = y.iter().filter(|&&v| v >= 0.5 * ymax).count();
    if above < MIN_POINTS_ABOVE_HALF {
        return Err(Error::TooFewPoints { what: "samples above half maximum".into(), needed: MIN_POINTS_ABOVE_HALF, got: above });
    }
    let upper: Vec<f64> = y.iter().map(|&v| if v >= 0.5 * ymax { v } else { 0.0 }).collect();
    let (c0, w0) = moments(x, &upper).expect("positive weights");
    let s0 = half_max_width(x, y).map(|w| w / FWHM_PER_SIGMA).unwrap_or(w0 / 0.6);
    let mut p = [ymax, c0, s0];

    let cost = |p: &[f64; 3]| x.iter().zip(y).map(|(&xi, &yi)| (yi - gaussian_model(p, xi).0).powi(2)).sum::<f64>();
    let mut current = cost(&p);
    let mut lambda = 1e-3;
    for it in 1..=FIT_MAX_ITERATIONS {
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (&xi, &yi) in x.iter().zip(y) {
            let (f, g) = gaussian_model(&p, xi);
            let r = yi - f;
            for a in 0..3 {
                jtr[a] += g[a] * r;
                for b in 0..3 {
                    jtj[a][b] += g[a] * g[b];
                }
            }
        }
        loop {
            let mut m = jtj;
            for (a, row) in m.iter_mut().enumerate() {
                row[a] *= 1.0 + lambda;
            }
            let Some(step) = solve3(m, jtr) else {
                return Err(Error::Degenerate("singular normal equations in Gaussian fit".into()));
            };
            let trial = [p[0] + step[0], p[1] + step[1], (p[2] + step[2]).abs()];
            let c = cost(&trial);
            if c <= current {
                let rel = (step[0] / p[0]).abs().max((step[1] / p[2]).abs()).max((step[2] / p[2]).abs());
                p = trial;
                current = c;
                lambda = (lambda / 10.0).max(1e-12);
                if rel < 1e-6 {
                    let residual_rms = (current / x.len() as f64).sqrt() / p[0].abs();
                    return Ok(GaussianFit {
                        amplitude: p[0],
                        center: p[1],
                        sigma: p[2],
                        fwhm: FWHM_PER_SIGMA * p[2],
                        residual_rms,
                        iterations: it,
                    });
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                // No descent direction left: the parameters are at the minimum
                // to machine precision.
                let residual_rms = (current / x.len() as f64).sqrt() / p[0].abs();
                return Ok(GaussianFit {
                    amplitude: p[0],
                    center: p[1],
                    sigma: p[2],
                    fwhm: FWHM_PER_SIGMA * p[2],
                    residual_rms,
                    iterations: it,
                });
            }
        }
    }
    Err(Error::NonConvergence { what: "Gaussian fit".into(), iterations: FIT_MAX_ITERATIONS, residual: current })
}

/// Fit zones along the path, in the coordinates where the beam leaves the
/// condensate at z = +150 μm and falls toward −z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DivergenceZone {
    /// 0 ≤ z ≤ 140 μm, just below the condensate.
    Kirchhoff,
    /// −140 μm ≤ z < 0.
    Paraxial,
}

impl DivergenceZone {
    pub fn contains(&self, z: f64) -> bool {
        match self {
            DivergenceZone::Kirchhoff => (0.0..=140e-6).contains(&z),
            DivergenceZone::Paraxial => (-140e-6..0.0).contains(&z),
        }
    }
}

pub const MIN_DIVERGENCE_POINTS: usize = 5;

/// Least-squares slope of y against x.
pub fn linear_slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Divergence angle from a (z, Δx) series restricted to `zone`.
///
/// The beam travels toward −z, so the angle is arctan of the width growth
/// per unit distance fallen, −dΔx/dz: positive for a spreading beam,
/// negative for a converging one.
pub fn divergence_fit(series: &[(f64, f64)], zone: DivergenceZone) -> Result<f64> {
    let pts: Vec<(f64, f64)> = series.iter().cloned().filter(|p| zone.contains(p.0)).collect();
    divergence_of(&pts, &format!("{zone:?} zone"))
}

/// As [`divergence_fit`] over an explicit z range.
pub fn divergence_in(series: &[(f64, f64)], z_lo: f64, z_hi: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = series.iter().cloned().filter(|p| p.0 >= z_lo && p.0 <= z_hi).collect();
    divergence_of(&pts, &format!("z in [{z_lo}, {z_hi}]"))
}

fn divergence_of(pts: &[(f64, f64)], what: &str) -> Result<f64> {
    if pts.len() < MIN_DIVERGENCE_POINTS {
        return Err(Error::TooFewPoints { what: what.into(), needed: MIN_DIVERGENCE_POINTS, got: pts.len() });
    }
    let slope = linear_slope(pts).ok_or_else(|| Error::Degenerate("all points share one z".into()))?;
    Ok((-slope).atan())
}

/// One row of the diagnostic time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub t_s: f64,
    pub z_center_m: f64,
    pub dx_m: f64,
    pub dvx_m_s: f64,
    pub m2: f64,
    pub n_beam: f64,
}

impl DiagnosticRow {
    /// Whole-beam diagnostics of `psin` at time `t`; widths are NaN for an empty beam.
    pub fn of(psin: &ComplexField, t: f64, hbar_over_m: f64, plan: &mut SpectralPlan) -> Self {
        let all = (f64::NEG_INFINITY, f64::INFINITY);
        let n_beam = crate::field::atom_number(psin);
        let dx = beam_width(psin, all).unwrap_or(f64::NAN);
        let dvx = beam_momentum_width(psin, all, hbar_over_m, plan).unwrap_or(f64::NAN);
        Self {
            t_s: t,
            z_center_m: centroid_z(psin).unwrap_or(f64::NAN),
            dx_m: dx,
            dvx_m_s: dvx,
            m2: quality_factor(dx, dvx, hbar_over_m),
            n_beam,
        }
    }
}
