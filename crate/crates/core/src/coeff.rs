//! Element-wise constant diffusion coefficients: sampling families, analytic
//! test fields, prolongation between levels and restriction to patches.
//!
//! Random fields draw from ChaCha8 streams. A stream is identified by
//! `(master seed, family code, sample index, level)`; the last three are
//! packed into the 64-bit ChaCha stream id as `family << 56 | sample << 8 | level`.
//! Uniform draws use `lo + (hi - lo) * u` with `u` the standard 53-bit
//! `[0, 1)` float, so every interval is sampled half-open.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{LeReader, LeWriter};
use crate::error::{Error, Result};
use crate::mesh::{CartesianMesh, Patch};

const MAGIC: &[u8; 4] = b"LODC";
const VERSION: u32 = 1;

/// Family code reserved for the multiscale family in stream ids.
pub const MULTISCALE_FAMILY_CODE: u8 = 0xFF;
/// Family code used for crack fields.
pub const CRACK_FAMILY_CODE: u8 = 0xFE;

/// Scalar coefficient, one value per cell of the mesh at `level`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficient {
    level: u32,
    values: Vec<f64>,
    alpha: f64,
    beta: f64,
}

impl Coefficient {
    /// Wraps cell values after checking `0 < alpha <= v <= beta`.
    pub fn new(level: u32, values: Vec<f64>, alpha: f64, beta: f64) -> Result<Self> {
        let mesh = CartesianMesh::new(level)?;
        if values.len() != mesh.num_elements() {
            return Err(Error::config(format!(
                "coefficient has {} values, level {level} needs {}",
                values.len(),
                mesh.num_elements()
            )));
        }
        if !(alpha > 0.0 && alpha <= beta && beta.is_finite()) {
            return Err(Error::config(format!("invalid bounds [{alpha}, {beta}]")));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, &v)| !(v >= alpha && v <= beta)) {
            return Err(Error::config(format!(
                "coefficient value {v} in cell {i} outside [{alpha}, {beta}]"
            )));
        }
        Ok(Self {
            level,
            values,
            alpha,
            beta,
        })
    }

    /// Uses the observed min and max as bounds.
    pub fn from_values(level: u32, values: Vec<f64>) -> Result<Self> {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(level, values, lo, hi)
    }

    /// `value` on every cell.
    pub fn constant(level: u32, value: f64) -> Result<Self> {
        let n = CartesianMesh::new(level)?.num_elements();
        Self::new(level, vec![value; n], value, value)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mesh(&self) -> CartesianMesh {
        CartesianMesh::new(self.level).expect("level validated on construction")
    }

    /// Multiplies every value by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::config(format!("scale factor {c} must be positive")));
        }
        Self::new(
            self.level,
            self.values.iter().map(|v| v * c).collect(),
            self.alpha * c,
            self.beta * c,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = LeWriter::new(BufWriter::new(File::create(path)?));
        w.bytes(MAGIC)?;
        w.u32(VERSION)?;
        w.u32(self.level)?;
        w.u32(self.values.len() as u32)?;
        w.f64s(&self.values)?;
        w.into_inner().flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = LeReader::new(BufReader::new(File::open(path)?));
        r.magic(MAGIC)?;
        let off = r.offset();
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::format(off, format!("unsupported version {version}")));
        }
        let off = r.offset();
        let level = r.u32("level")?;
        let mesh = CartesianMesh::new(level).map_err(|_| Error::format(off, "level out of range"))?;
        let off = r.offset();
        let count = r.u32("count")? as usize;
        if count != mesh.num_elements() {
            return Err(Error::format(
                off,
                format!("count {count} does not match level {level}"),
            ));
        }
        let mut values = vec![0.0; count];
        r.f64s(&mut values, "values")?;
        r.expect_eof()?;
        Self::from_values(level, values)
    }
}

/// Closed sampling interval `[lo, hi]` (sampled half-open).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo <= self.hi) || !(self.lo > 0.0) || !self.hi.is_finite() {
            return Err(Error::config(format!(
                "invalid sampling interval [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        self.lo + (self.hi - self.lo) * rng.gen::<f64>()
    }
}

/// The default sampling interval `[1, 5]`.
pub const UNIT_FIVE: Interval = Interval::new(1.0, 5.0);

/// Identifies the random streams belonging to one sampled coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamSeed {
    pub master: u64,
    pub family: u8,
    pub sample: u64,
}

impl StreamSeed {
    pub fn new(master: u64, family: u8, sample: u64) -> Self {
        Self { master, family, sample }
    }

    /// Child stream for `level`.
    pub fn level_rng(&self, level: u32) -> ChaCha8Rng {
        assert!(self.sample < (1 << 48), "sample index exceeds stream id space");
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        let stream = (self.family as u64) << 56 | self.sample << 8 | (level as u64 & 0xFF);
        rng.set_stream(stream);
        rng
    }
}

/// Copies each level-`from` value to its `4^(to - from)` descendants.
pub fn prolongate(values: &[f64], from: u32, to: u32) -> Vec<f64> {
    assert!(from <= to);
    let n_from = 1usize << from;
    assert_eq!(values.len(), n_from * n_from);
    let n_to = 1usize << to;
    let shift = to - from;
    let mut out = Vec::with_capacity(n_to * n_to);
    for fy in 0..n_to {
        let row = (fy >> shift) * n_from;
        for fx in 0..n_to {
            out.push(values[row + (fx >> shift)]);
        }
    }
    out
}

/// Cell averages on the coarser level `to`.
pub fn average_to_level(values: &[f64], from: u32, to: u32) -> Vec<f64> {
    assert!(to <= from);
    let n_from = 1usize << from;
    let n_to = 1usize << to;
    let shift = from - to;
    let mut out = vec![0.0; n_to * n_to];
    for fy in 0..n_from {
        for fx in 0..n_from {
            out[(fy >> shift) * n_to + (fx >> shift)] += values[fy * n_from + fx];
        }
    }
    let w = 1.0 / (1usize << (2 * shift)) as f64;
    out.iter_mut().for_each(|v| *v *= w);
    out
}

/// A draw from the level-`k` family, prolongated to `eps_level`.
pub fn sample_level<R: Rng>(k: u32, eps_level: u32, interval: Interval, rng: &mut R) -> Result<Coefficient> {
    interval.validate()?;
    if k > eps_level {
        return Err(Error::config(format!(
            "family level {k} exceeds fine level {eps_level}"
        )));
    }
    CartesianMesh::new(eps_level)?;
    let n = 1usize << k;
    let coarse: Vec<f64> = (0..n * n).map(|_| interval.draw(rng)).collect();
    Coefficient::new(eps_level, prolongate(&coarse, k, eps_level), interval.lo, interval.hi)
}

/// Cell-wise mean of independent level-`k` draws for `k = 0..=max_level`.
pub fn sample_multiscale(max_level: u32, eps_level: u32, interval: Interval, seed: &StreamSeed) -> Result<Coefficient> {
    interval.validate()?;
    if max_level > eps_level {
        return Err(Error::config(format!(
            "multiscale level {max_level} exceeds fine level {eps_level}"
        )));
    }
    let mut acc = vec![0.0; CartesianMesh::new(eps_level)?.num_elements()];
    for k in 0..=max_level {
        let layer = sample_level(k, eps_level, interval, &mut seed.level_rng(k))?;
        acc.iter_mut().zip(layer.values()).for_each(|(a, v)| *a += v);
    }
    let w = 1.0 / (max_level + 1) as f64;
    let values = acc
        .into_iter()
        .map(|a| (a * w).clamp(interval.lo, interval.hi))
        .collect();
    Coefficient::new(eps_level, values, interval.lo, interval.hi)
}

/// `2 + sin(2 pi x) sin(2 pi y)` evaluated at cell midpoints.
pub fn smooth_sine(eps_level: u32) -> Result<Coefficient> {
    use std::f64::consts::PI;
    let mesh = CartesianMesh::new(eps_level)?;
    let n = mesh.n();
    let mut values = Vec::with_capacity(n * n);
    for cy in 0..n {
        for cx in 0..n {
            let (x, y) = mesh.cell_center(cx, cy);
            values.push(2.0 + (2.0 * PI * x).sin() * (2.0 * PI * y).sin());
        }
    }
    Coefficient::new(eps_level, values, 1.0, 3.0)
}

/// Axis-aligned rectangle in domain coordinates; a cell belongs to it when its
/// midpoint does.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrackRect {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl CrackRect {
    pub const fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self {
            x: [x0, x1],
            y: [y0, y1],
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x[0] && x < self.x[1] && y >= self.y[0] && y < self.y[1]
    }
}

/// Crack layout used by the crack experiment: two long thin channels and a short
/// diagonal staircase.
pub fn default_cracks() -> Vec<CrackRect> {
    vec![
        CrackRect::new(0.08, 0.72, 0.30, 0.33),
        CrackRect::new(0.60, 0.63, 0.40, 0.92),
        CrackRect::new(0.15, 0.30, 0.60, 0.63),
        CrackRect::new(0.27, 0.42, 0.66, 0.69),
        CrackRect::new(0.39, 0.54, 0.72, 0.75),
    ]
}

/// Background cells drawn from `background`, cells inside any crack from `crack`.
/// Cells are visited row-major with one draw each; overlapping cracks are allowed.
pub fn cracks<R: Rng>(
    eps_level: u32,
    background: Interval,
    crack: Interval,
    rects: &[CrackRect],
    rng: &mut R,
) -> Result<Coefficient> {
    background.validate()?;
    crack.validate()?;
    for r in rects {
        let ok = |v: [f64; 2]| 0.0 <= v[0] && v[0] < v[1] && v[1] <= 1.0;
        if !ok(r.x) || !ok(r.y) {
            return Err(Error::config(format!("crack rectangle {r:?} outside the domain")));
        }
    }
    let mesh = CartesianMesh::new(eps_level)?;
    let n = mesh.n();
    let mut values = Vec::with_capacity(n * n);
    for cy in 0..n {
        for cx in 0..n {
            let (x, y) = mesh.cell_center(cx, cy);
            let v = if rects.iter().any(|r| r.contains(x, y)) {
                crack.draw(rng)
            } else {
                background.draw(rng)
            };
            values.push(v);
        }
    }
    let lo = background.lo.min(crack.lo);
    let hi = background.hi.max(crack.hi);
    Coefficient::new(eps_level, values, lo, hi)
}

/// Fine-cell values of `coeff` on the patch, row-major, zero on exterior cells.
pub fn restrict(coeff: &Coefficient, patch: &Patch) -> Result<Vec<f64>> {
    let sub = patch.fine_submesh(coeff.level())?;
    let n_fine = coeff.mesh().n() as i64;
    let side = sub.cells_per_side();
    let (ox, oy) = sub.origin();
    let vals = coeff.values();
    let mut out = Vec::with_capacity(side * side);
    for fy in 0..side {
        let gy = oy + fy as i64;
        for fx in 0..side {
            let gx = ox + fx as i64;
            if gx >= 0 && gy >= 0 && gx < n_fine && gy < n_fine {
                out.push(vals[(gy * n_fine + gx) as usize]);
            } else {
                out.push(0.0);
            }
        }
    }
    Ok(out)
}
