//! Binary checkpoints of the two fields.
//!
//! Layout, little-endian: magic `ALFS`, version u16, dims u8, one u32 point
//! count per axis, one f64 extent per axis, time f64, then ψ₀ and ψ_n as
//! interleaved (re, im) f64 pairs in x-fastest order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::engine::TwoStateSystem;
use crate::error::{Error, Result};
use crate::field::{ComplexField, SimGrid};

pub const MAGIC: &[u8; 4] = b"ALFS";
pub const VERSION: u16 = 1;

/// Decoded snapshot contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub points: Vec<usize>,
    pub extent: Vec<f64>,
    pub time: f64,
    pub psi0: Vec<Complex64>,
    pub psin: Vec<Complex64>,
}

impl Snapshot {
    /// Checks the stored geometry against `grid` and rebuilds the system,
    /// taking the step index as time/dt.
    pub fn into_system(self, grid: &SimGrid, dt: f64) -> Result<TwoStateSystem> {
        if self.points != grid.points() {
            return Err(Error::GridMismatch(format!(
                "snapshot has points {:?}, config grid has {:?}",
                self.points,
                grid.points()
            )));
        }
        for (a, (&s, &g)) in self.extent.iter().zip(grid.extent()).enumerate() {
            if s.to_bits() != g.to_bits() {
                return Err(Error::GridMismatch(format!("axis {a} extent {s} in snapshot, {g} in config")));
            }
        }
        let steps = self.time / dt;
        let step_index = steps.round();
        if !(step_index >= 0.0) || (steps - step_index).abs() > 1e-6 {
            return Err(Error::invalid(
                "stepper.dt_s",
                format!("snapshot time {} is not a whole number of steps of {dt}", self.time),
            ));
        }
        let psi0 = ComplexField::from_data(grid, self.psi0)?;
        let psin = ComplexField::from_data(grid, self.psin)?;
        TwoStateSystem::from_parts(psi0, psin, step_index as u64)
    }
}

pub fn encode(sys: &TwoStateSystem, time: f64, out: &mut impl Write) -> std::io::Result<()> {
    let grid = sys.grid();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&[grid.dims() as u8])?;
    for &n in grid.points() {
        out.write_all(&(n as u32).to_le_bytes())?;
    }
    for &l in grid.extent() {
        out.write_all(&l.to_le_bytes())?;
    }
    out.write_all(&time.to_le_bytes())?;
    for field in [&sys.psi0, &sys.psin] {
        for c in &field.data {
            out.write_all(&c.re.to_le_bytes())?;
            out.write_all(&c.im.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const N: usize>(input: &mut impl Read, what: &str) -> std::result::Result<[u8; N], String> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf).map_err(|e| format!("truncated while reading {what}: {e}"))?;
    Ok(buf)
}

fn read_f64(input: &mut impl Read, what: &str) -> std::result::Result<f64, String> {
    read_array::<8>(input, what).map(f64::from_le_bytes)
}

pub fn decode(input: &mut impl Read) -> std::result::Result<Snapshot, String> {
    let magic = read_array::<4>(input, "magic")?;
    if &magic != MAGIC {
        return Err(format!("bad magic {magic:?}, expected {MAGIC:?}"));
    }
    let version = u16::from_le_bytes(read_array::<2>(input, "version")?);
    if version != VERSION {
        return Err(format!("format version {version}, this build reads {VERSION}"));
    }
    let dims = read_array::<1>(input, "dims")?[0] as usize;
    if dims != 2 && dims != 3 {
        return Err(format!("dims {dims} is neither 2 nor 3"));
    }
    let mut points = Vec::with_capacity(dims);
    for _ in 0..dims {
        points.push(u32::from_le_bytes(read_array::<4>(input, "point count")?) as usize);
    }
    let mut extent = Vec::with_capacity(dims);
    for _ in 0..dims {
        extent.push(read_f64(input, "extent")?);
    }
    let time = read_f64(input, "time")?;
    let len = points.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n)).ok_or("point counts overflow")?;
    let mut fields = [Vec::new(), Vec::new()];
    for field in &mut fields {
        field.reserve_exact(len);
        for _ in 0..len {
            let re = read_f64(input, "field data")?;
            let im = read_f64(input, "field data")?;
            field.push(Complex64::new(re, im));
        }
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest).map_err(|e| e.to_string())? != 0 {
        return Err("trailing bytes after field data".into());
    }
    let [psi0, psin] = fields;
    Ok(Snapshot { points, extent, time, psi0, psin })
}

pub fn write_snapshot(path: &Path, sys: &TwoStateSystem, time: f64) -> Result<()> {
    let wrap = |e: std::io::Error| Error::Snapshot { path: path.to_path_buf(), reason: e.to_string() };
    let mut out = BufWriter::new(File::create(path).map_err(wrap)?);
    encode(sys, time, &mut out).map_err(wrap)?;
    out.flush().map_err(wrap)
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let wrap = |reason: String| Error::Snapshot { path: path.to_path_buf(), reason };
    let mut input = BufReader::new(File::open(path).map_err(|e| wrap(e.to_string()))?);
    decode(&mut input).map_err(wrap)
}
