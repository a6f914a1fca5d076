//! Uniform grids and trilinear grid fields.
//!
//! Binary layout of a grid file (little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 24 | `dims` as 3 × `i64` |
//! | 24 | `origin` as 3 × `f64` |
//! | 8  | `spacing` as `f64` |
//! | 8·n | samples as `f64`, row-major (`x` slowest, `z` fastest) |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

use super::{FieldKind, ScalarField};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("i/o error on grid file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid grid header: {0}")]
    Header(String),
    #[error("grid has {got} samples, expected {expected}")]
    SampleCount { got: usize, expected: usize },
    #[error("non-finite grid sample at index {0}")]
    NonFinite(usize),
}

/// Node lattice `origin + spacing · (i, j, k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub dims: [usize; 3],
    pub origin: Vector3<f64>,
    pub spacing: f64,
}

impl UniformGrid {
    pub fn new(dims: [usize; 3], origin: Vector3<f64>, spacing: f64) -> Self {
        Self {
            dims,
            origin,
            spacing,
        }
    }

    /// Grid of spacing `h` covering the cube `[-half, half]³` (nodes at cell centres).
    pub fn centered_cube(half: f64, spacing: f64) -> Self {
        let n = (2.0 * half / spacing).round().max(1.0) as usize;
        let origin = Vector3::repeat(-half + 0.5 * spacing);
        Self::new([n, n, n], origin, spacing)
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin + Vector3::new(i as f64, j as f64, k as f64) * self.spacing
    }

    /// Node position for a flat row-major index.
    pub fn point_at(&self, flat: usize) -> Vector3<f64> {
        let k = flat % self.dims[2];
        let j = (flat / self.dims[2]) % self.dims[1];
        let i = flat / (self.dims[1] * self.dims[2]);
        self.point(i, j, k)
    }

    pub fn points(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        (0..self.len()).map(|f| self.point_at(f))
    }

    /// Upper corner of the node box.
    pub fn upper(&self) -> Vector3<f64> {
        self.point(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }

    /// Whether `x` lies in the closed node box.
    pub fn contains(&self, x: &Vector3<f64>) -> bool {
        let hi = self.upper();
        (0..3).all(|i| x[i] >= self.origin[i] && x[i] <= hi[i])
    }

    /// Whether the closed ball `B(x, r)` lies in the node box.
    pub fn contains_ball(&self, x: &Vector3<f64>, r: f64) -> bool {
        let hi = self.upper();
        (0..3).all(|i| x[i] - r >= self.origin[i] && x[i] + r <= hi[i])
    }
}

/// Samples on a [`UniformGrid`], read as a trilinear interpolant that vanishes
/// outside the node box.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField3 {
    grid: UniformGrid,
    samples: Vec<f64>,
}

impl GridField3 {
    pub fn new(grid: UniformGrid, samples: Vec<f64>) -> Result<Self, GridError> {
        if grid.spacing <= 0.0 || !grid.spacing.is_finite() {
            return Err(GridError::Header(format!(
                "spacing must be positive, got {}",
                grid.spacing
            )));
        }
        if grid.dims.iter().any(|&d| d < 2) {
            return Err(GridError::Header(format!(
                "each dimension needs at least 2 nodes, got {:?}",
                grid.dims
            )));
        }
        if samples.len() != grid.len() {
            return Err(GridError::SampleCount {
                got: samples.len(),
                expected: grid.len(),
            });
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(Self { grid, samples })
    }

    /// Samples `g` at the nodes of `grid`.
    pub fn sample<F: ScalarField + ?Sized>(grid: UniformGrid, g: &F) -> Result<Self, GridError> {
        let samples = grid.points().map(|x| g.value(&x)).collect();
        Self::new(grid, samples)
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Pointwise map of the samples.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self {
            grid: self.grid,
            samples: self.samples.iter().map(|&s| f(s)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &Self, f: F) -> Option<Self> {
        (self.grid == other.grid).then(|| Self {
            grid: self.grid,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    #[inline]
    fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.samples[(i * self.grid.dims[1] + j) * self.grid.dims[2] + k]
    }

    /// Cell index and local coordinates in `[0, 1]³`, or `None` outside the box.
    #[inline]
    fn locate(&self, x: &Vector3<f64>) -> Option<([usize; 3], [f64; 3])> {
        let mut cell = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let u = (x[a] - self.grid.origin[a]) / self.grid.spacing;
            let last = (self.grid.dims[a] - 1) as f64;
            if !(0.0..=last).contains(&u) {
                return None;
            }
            let c = (u.floor() as usize).min(self.grid.dims[a] - 2);
            cell[a] = c;
            frac[a] = u - c as f64;
        }
        Some((cell, frac))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for d in self.grid.dims {
            w.write_all(&(d as i64).to_le_bytes())?;
        }
        for a in 0..3 {
            w.write_all(&self.grid.origin[a].to_le_bytes())?;
        }
        w.write_all(&self.grid.spacing.to_le_bytes())?;
        for s in &self.samples {
            w.write_all(&s.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, GridError> {
        let io = |source| GridError::Io {
            path: "<stream>".into(),
            source,
        };
        let mut b8 = [0u8; 8];
        let mut dims = [0usize; 3];
        for d in &mut dims {
            r.read_exact(&mut b8).map_err(io)?;
            let v = i64::from_le_bytes(b8);
            if v < 2 {
                return Err(GridError::Header(format!("dimension {v} < 2")));
            }
            *d = v as usize;
        }
        let mut origin = Vector3::zeros();
        for a in 0..3 {
            r.read_exact(&mut b8).map_err(io)?;
            origin[a] = f64::from_le_bytes(b8);
        }
        r.read_exact(&mut b8).map_err(io)?;
        let spacing = f64::from_le_bytes(b8);
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| GridError::Header("dimensions overflow".into()))?;
        let mut raw = Vec::new();
        r.read_to_end(&mut raw).map_err(io)?;
        if raw.len() != 8 * n {
            return Err(GridError::SampleCount {
                got: raw.len() / 8,
                expected: n,
            });
        }
        let samples = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::new(UniformGrid::new(dims, origin, spacing), samples)
    }

    pub fn load(path: &Path) -> Result<Self, GridError> {
        let f = File::open(path).map_err(|source| GridError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_from(BufReader::new(f)).map_err(|e| match e {
            GridError::Io { source, .. } => GridError::Io {
                path: path.display().to_string(),
                source,
            },
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), GridError> {
        let io = |source| GridError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        self.write_to(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }

    /// Riemann-sum `L^p` norm over the nodes (`p = ∞` allowed).
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.samples.iter().fold(0.0, |m, s| m.max(s.abs()));
        }
        let sum: f64 = self.samples.iter().map(|s| s.abs().powf(p)).sum();
        (sum * self.grid.spacing.powi(3)).powf(1.0 / p)
    }
}

impl ScalarField for GridField3 {
    fn value(&self, x: &Vector3<f64>) -> f64 {
        let Some(([i, j, k], [u, v, w])) = self.locate(x) else {
            return 0.0;
        };
        let c00 = self.at(i, j, k) * (1.0 - u) + self.at(i + 1, j, k) * u;
        let c01 = self.at(i, j, k + 1) * (1.0 - u) + self.at(i + 1, j, k + 1) * u;
        let c10 = self.at(i, j + 1, k) * (1.0 - u) + self.at(i + 1, j + 1, k) * u;
        let c11 = self.at(i, j + 1, k + 1) * (1.0 - u) + self.at(i + 1, j + 1, k + 1) * u;
        let c0 = c00 * (1.0 - v) + c10 * v;
        let c1 = c01 * (1.0 - v) + c11 * v;
        c0 * (1.0 - w) + c1 * w
    }

    /// Exact gradient of the trilinear interpolant inside the containing cell.
    /// On a cell face the upper cell is used, i.e. a one-sided difference.
    fn gradient(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let Some(([i, j, k], [u, v, w])) = self.locate(x) else {
            return Vector3::zeros();
        };
        let f = |a: usize, b: usize, c: usize| self.at(i + a, j + b, k + c);
        let lerp2 = |f00: f64, f10: f64, f01: f64, f11: f64, s: f64, t: f64| {
            (f00 * (1.0 - s) + f10 * s) * (1.0 - t) + (f01 * (1.0 - s) + f11 * s) * t
        };
        let dx = lerp2(
            f(1, 0, 0) - f(0, 0, 0),
            f(1, 1, 0) - f(0, 1, 0),
            f(1, 0, 1) - f(0, 0, 1),
            f(1, 1, 1) - f(0, 1, 1),
            v,
            w,
        );
        let dy = lerp2(
            f(0, 1, 0) - f(0, 0, 0),
            f(1, 1, 0) - f(1, 0, 0),
            f(0, 1, 1) - f(0, 0, 1),
            f(1, 1, 1) - f(1, 0, 1),
            u,
            w,
        );
        let dz = lerp2(
            f(0, 0, 1) - f(0, 0, 0),
            f(1, 0, 1) - f(1, 0, 0),
            f(0, 1, 1) - f(0, 1, 0),
            f(1, 1, 1) - f(1, 1, 0),
            u,
            v,
        );
        Vector3::new(dx, dy, dz) / self.grid.spacing
    }

    fn support_radius(&self) -> f64 {
        let lo = self.grid.origin;
        let hi = self.grid.upper();
        let far = Vector3::new(
            lo.x.abs().max(hi.x.abs()),
            lo.y.abs().max(hi.y.abs()),
            lo.z.abs().max(hi.z.abs()),
        );
        far.norm()
    }

    fn kind(&self) -> FieldKind {
        FieldKind::GridInterpolated
    }
}
