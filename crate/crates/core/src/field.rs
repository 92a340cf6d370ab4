//! Uniform structured grids and node-centered fields.
//!
//! Values are stored row-major with `j` (the y or r direction) as the outer
//! index: node `(i, j)` lives at `j * nx + i` and sits at `x = i·dx`,
//! `y = j·dy`. On axisymmetric grids `y` is the radius and `j = 0` is the
//! axis.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const FIELD_MAGIC: &[u8; 5] = b"PFLD1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Geometry {
    Cartesian,
    /// `y` is the radius, with the axis at `j = 0`.
    Axisymmetric,
}

impl Geometry {
    pub fn name(self) -> &'static str {
        match self {
            Geometry::Cartesian => "cartesian",
            Geometry::Axisymmetric => "axisymmetric",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "cartesian" => Ok(Geometry::Cartesian),
            "axisymmetric" => Ok(Geometry::Axisymmetric),
            other => Err(Error::InvalidArgument(format!("unknown geometry '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub geometry: Geometry,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64, geometry: Geometry) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::GridTooSmall { nx, ny });
        }
        if !(lx > 0.0 && lx.is_finite() && ly > 0.0 && ly.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "domain lengths must be positive, got {lx} x {ly}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            geometry,
        })
    }

    pub fn cartesian(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        Self::new(nx, ny, lx, ly, Geometry::Cartesian)
    }

    /// Square Cartesian grid with `n` nodes per direction.
    pub fn square(n: usize, length: f64) -> Result<Self> {
        Self::cartesian(n, n, length, length)
    }

    pub fn axisymmetric(nx: usize, nr: usize, lx: f64, lr: f64) -> Result<Self> {
        Self::new(nx, nr, lx, lr, Geometry::Axisymmetric)
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.lx / (self.nx - 1) as f64
    }

    #[inline]
    pub fn dy(&self) -> f64 {
        self.ly / (self.ny - 1) as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.dy()
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }

    /// Same domain, different node counts.
    pub fn with_nodes(&self, nx: usize, ny: usize) -> Result<Self> {
        Self::new(nx, ny, self.lx, self.ly, self.geometry)
    }

    fn same_shape(&self, other: &GridSpec) -> bool {
        self.nx == other.nx && self.ny == other.ny
    }

    fn require_geometry(&self, geometry: Geometry) -> Result<()> {
        if self.geometry != geometry {
            return Err(Error::GeometryMismatch {
                expected: geometry.name(),
                found: self.geometry.name(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {}x{} grid",
                values.len(),
                grid.nx,
                grid.ny
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            let y = grid.y(j);
            for i in 0..grid.nx {
                values.push(f(grid.x(i), y));
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.idx(i, j);
        self.values[k] = v;
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Linear combination `a·self + b·other`.
    pub fn axpby(&self, a: f64, other: &ScalarField, b: f64) -> Result<Self> {
        check_shapes(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: GridSpec,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            x: vec![0.0; grid.len()],
            y: vec![0.0; grid.len()],
        }
    }

    pub fn norm_at(&self, k: usize) -> f64 {
        self.x[k].hypot(self.y[k])
    }

    pub fn magnitude(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: (0..self.grid.len()).map(|k| self.norm_at(k)).collect(),
        }
    }
}

/// Field-like containers whose components can be compared entry by entry.
pub trait FieldData {
    fn grid(&self) -> &GridSpec;
    fn components(&self) -> Vec<&[f64]>;
}

impl FieldData for ScalarField {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn components(&self) -> Vec<&[f64]> {
        vec![&self.values]
    }
}

impl FieldData for VectorField {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn components(&self) -> Vec<&[f64]> {
        vec![&self.x, &self.y]
    }
}

fn check_shapes(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.nx, a.ny, b.nx, b.ny
        )));
    }
    Ok(())
}

fn paired<'a, F: FieldData>(a: &'a F, b: &'a F) -> Result<Vec<(&'a [f64], &'a [f64])>> {
    check_shapes(a.grid(), b.grid())?;
    let (ca, cb) = (a.components(), b.components());
    if ca.len() != cb.len() {
        return Err(Error::ShapeMismatch("component count differs".into()));
    }
    Ok(ca.into_iter().zip(cb).collect())
}

/// Mean absolute difference over every entry of every component.
pub fn norm_1<F: FieldData>(a: &F, b: &F) -> Result<f64> {
    let pairs = paired(a, b)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (pa, pb) in pairs {
        for (x, y) in pa.iter().zip(pb) {
            sum += (x - y).abs();
        }
        count += pa.len();
    }
    Ok(sum / count as f64)
}

/// Maximum absolute difference over every entry of every component.
pub fn norm_inf<F: FieldData>(a: &F, b: &F) -> Result<f64> {
    let pairs = paired(a, b)?;
    Ok(pairs
        .into_iter()
        .flat_map(|(pa, pb)| pa.iter().zip(pb).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max))
}

/// Mean absolute value of a field, the scale used for relative norms.
pub fn mean_abs<F: FieldData>(a: &F) -> f64 {
    let comps = a.components();
    let count: usize = comps.iter().map(|c| c.len()).sum();
    comps.iter().flat_map(|c| c.iter()).map(|v| v.abs()).sum::<f64>() / count as f64
}

/// Five-point Laplacian on interior nodes; boundary entries are 0.
pub fn laplacian_cartesian(phi: &ScalarField) -> Result<ScalarField> {
    let g = phi.grid;
    g.require_geometry(Geometry::Cartesian)?;
    let (idx2, idy2) = (1.0 / (g.dx() * g.dx()), 1.0 / (g.dy() * g.dy()));
    let p = &phi.values;
    let mut out = vec![0.0; g.len()];
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            let k = g.idx(i, j);
            out[k] = (p[k - 1] - 2.0 * p[k] + p[k + 1]) * idx2
                + (p[k - g.nx] - 2.0 * p[k] + p[k + g.nx]) * idy2;
        }
    }
    Ok(ScalarField { grid: g, values: out })
}

/// `(1/r)∂r(r ∂rφ) + ∂²xφ` with face radii `r ± dr/2`. On-axis nodes use the
/// regularized limit `4(φ₁ − φ₀)/dr²`. Entries on `x = 0`, `x = Lx` and
/// `r = Lr` are 0.
pub fn laplacian_axisymmetric(phi: &ScalarField) -> Result<ScalarField> {
    let g = phi.grid;
    g.require_geometry(Geometry::Axisymmetric)?;
    let (dx, dr) = (g.dx(), g.dy());
    let (idx2, idr2) = (1.0 / (dx * dx), 1.0 / (dr * dr));
    let p = &phi.values;
    let mut out = vec![0.0; g.len()];
    for j in 0..g.ny - 1 {
        for i in 1..g.nx - 1 {
            let k = g.idx(i, j);
            let axial = (p[k - 1] - 2.0 * p[k] + p[k + 1]) * idx2;
            let radial = if j == 0 {
                4.0 * (p[k + g.nx] - p[k]) * idr2
            } else {
                let r = j as f64;
                ((r + 0.5) * (p[k + g.nx] - p[k]) - (r - 0.5) * (p[k] - p[k - g.nx])) * idr2 / r
            };
            out[k] = axial + radial;
        }
    }
    Ok(ScalarField { grid: g, values: out })
}

/// Geometry-dispatching Laplacian.
pub fn laplacian(phi: &ScalarField) -> Result<ScalarField> {
    match phi.grid.geometry {
        Geometry::Cartesian => laplacian_cartesian(phi),
        Geometry::Axisymmetric => laplacian_axisymmetric(phi),
    }
}

#[inline]
fn derivative(values: &[f64], k: usize, stride: usize, pos: usize, n: usize, h: f64) -> f64 {
    if pos == 0 {
        (-3.0 * values[k] + 4.0 * values[k + stride] - values[k + 2 * stride]) / (2.0 * h)
    } else if pos == n - 1 {
        (3.0 * values[k] - 4.0 * values[k - stride] + values[k - 2 * stride]) / (2.0 * h)
    } else {
        (values[k + stride] - values[k - stride]) / (2.0 * h)
    }
}

/// `E = −∇φ`: central differences inside, second-order one-sided differences
/// on the boundary. On the axis of an axisymmetric grid the mirror condition
/// `φ(−r) = φ(r)` makes the central radial difference, hence `E_r`, zero.
pub fn gradient_to_efield(phi: &ScalarField) -> VectorField {
    let g = phi.grid;
    let (dx, dy) = (g.dx(), g.dy());
    let p = &phi.values;
    let mut e = VectorField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.idx(i, j);
            e.x[k] = -derivative(p, k, 1, i, g.nx, dx);
            e.y[k] = if j == 0 && g.geometry == Geometry::Axisymmetric {
                0.0
            } else {
                -derivative(p, k, g.nx, j, g.ny, dy)
            };
        }
    }
    e
}

/// Trapezoid weights for `n` uniformly spaced nodes with spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

/// Sine-mode projection `4/(LxLy) ∫∫ sin(nπx/Lx) sin(mπy/Ly) f dx dy`,
/// trapezoid rule.
pub fn mode_amplitude(field: &ScalarField, n: usize, m: usize) -> Result<f64> {
    let g = field.grid;
    g.require_geometry(Geometry::Cartesian)?;
    if n < 1 || m < 1 {
        return Err(Error::InvalidArgument(format!(
            "mode indices must be >= 1, got ({n}, {m})"
        )));
    }
    let wx = trapezoid_weights(g.nx, g.dx());
    let wy = trapezoid_weights(g.ny, g.dy());
    let kx = n as f64 * std::f64::consts::PI / g.lx;
    let ky = m as f64 * std::f64::consts::PI / g.ly;
    let mut total = 0.0;
    for j in 0..g.ny {
        let sy = (ky * g.y(j)).sin() * wy[j];
        let mut row = 0.0;
        for i in 0..g.nx {
            row += wx[i] * (kx * g.x(i)).sin() * field.at(i, j);
        }
        total += sy * row;
    }
    Ok(4.0 / (g.lx * g.ly) * total)
}

/// Writes the binary field format: `PFLD1`, `u32 nx`, `u32 ny`, `f64 Lx`,
/// `f64 Ly`, `u8 geometry`, then `nx·ny` little-endian `f64` values.
pub fn write_field(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_field_to(&mut w, field)?;
    w.flush()?;
    Ok(())
}

pub fn write_field_to(w: &mut impl Write, field: &ScalarField) -> Result<()> {
    let g = &field.grid;
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&(g.nx as u32).to_le_bytes())?;
    w.write_all(&(g.ny as u32).to_le_bytes())?;
    w.write_all(&g.lx.to_le_bytes())?;
    w.write_all(&g.ly.to_le_bytes())?;
    w.write_all(&[match g.geometry {
        Geometry::Cartesian => 0u8,
        Geometry::Axisymmetric => 1u8,
    }])?;
    for v in &field.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    let mut r = BufReader::new(File::open(path)?);
    read_field_from(&mut r)
}

fn read_exact_or(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

pub fn read_field_from(r: &mut impl Read) -> Result<ScalarField> {
    let mut magic = [0u8; 5];
    read_exact_or(r, &mut magic, "header")?;
    if &magic != FIELD_MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    read_exact_or(r, &mut b4, "header")?;
    let nx = u32::from_le_bytes(b4) as usize;
    read_exact_or(r, &mut b4, "header")?;
    let ny = u32::from_le_bytes(b4) as usize;
    read_exact_or(r, &mut b8, "header")?;
    let lx = f64::from_le_bytes(b8);
    read_exact_or(r, &mut b8, "header")?;
    let ly = f64::from_le_bytes(b8);
    let mut b1 = [0u8; 1];
    read_exact_or(r, &mut b1, "header")?;
    let geometry = match b1[0] {
        0 => Geometry::Cartesian,
        1 => Geometry::Axisymmetric,
        other => return Err(Error::Format(format!("unknown geometry tag {other}"))),
    };
    let grid = GridSpec::new(nx, ny, lx, ly, geometry)
        .map_err(|e| Error::Format(format!("invalid header: {e}")))?;
    let mut payload = vec![0u8; grid.len() * 8];
    read_exact_or(r, &mut payload, "payload")?;
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(k) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::Format(format!("NaN entry at index {k}")));
    }
    ScalarField::from_values(grid, values)
}

/// CSV export with header `i,j,x,y,value`, one row per node.
pub fn write_csv(w: &mut impl Write, field: &ScalarField) -> Result<()> {
    let g = &field.grid;
    writeln!(w, "i,j,x,y,value")?;
    for j in 0..g.ny {
        for i in 0..g.nx {
            writeln!(w, "{},{},{},{},{}", i, j, g.x(i), g.y(j), field.at(i, j))?;
        }
    }
    Ok(())
}
