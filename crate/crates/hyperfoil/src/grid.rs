//! Uniform 2D grid, scalar fields, finite-difference stencils, cone masking,
//! deterministic reductions, and snapshot I/O.
//!
//! Conventions used throughout the crate:
//!
//! * Nodes are indexed row-major, `data[i * ny + j]`, with `i` the x index
//!   (axis 0) and `j` the y index (axis 1).
//! * Node coordinates are centered: `x_i = (i - (nx-1)/2) h`.
//! * Stencils wrap periodically. Evolved fields are compactly supported well
//!   inside the domain, so wrapping is equivalent to an infinite grid there,
//!   while summation-by-parts identities hold *exactly* for arbitrary fields.
//! * At the origin the radial unit vector `x_a / r` is defined as 0.

use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

/// Spatial axis selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Finite-difference accuracy order. All stencils are centered.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    Two,
    Four,
}

/// Geometry of a uniform, centered 2D grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    h: f64,
}

impl Grid {
    /// Minimum node count per axis; below this the wrap-around stencils of a
    /// 5-point kernel would overlap themselves in a confusing way.
    pub const MIN_NODES: usize = 16;

    pub fn new(nx: usize, ny: usize, h: f64) -> Result<Self> {
        if nx < Self::MIN_NODES || ny < Self::MIN_NODES {
            return Err(Error::InvalidGrid(format!(
                "need at least {} nodes per axis, got {nx} x {ny}",
                Self::MIN_NODES
            )));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidGrid(format!("spacing h must be positive, got {h}")));
        }
        Ok(Grid { nx, ny, h })
    }

    /// Square grid helper.
    pub fn square(n: usize, h: f64) -> Result<Self> {
        Self::new(n, n, h)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Half-extent of the x axis: `h (nx - 1) / 2`.
    pub fn extent_x(&self) -> f64 {
        self.h * (self.nx as f64 - 1.0) / 2.0
    }
    pub fn extent_y(&self) -> f64 {
        self.h * (self.ny as f64 - 1.0) / 2.0
    }

    /// x coordinate of column `i`.
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - (self.nx as f64 - 1.0) / 2.0) * self.h
    }

    /// y coordinate of row `j`.
    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        (j as f64 - (self.ny as f64 - 1.0) / 2.0) * self.h
    }

    /// Check that the light cone `r <= t - 1` plus a safety cell stays inside
    /// the domain up to `t_final`.
    pub fn check_covers_cone(&self, t_final: f64) -> Result<()> {
        let required = t_final + 1.0;
        let extent = self.extent_x().min(self.extent_y());
        if extent < required {
            return Err(Error::DomainTooSmall { extent, required });
        }
        Ok(())
    }
}

/// A scalar field sampled on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Field { grid, data: vec![0.0; grid.len()] }
    }

    /// Sample `f(x, y)` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for i in 0..grid.nx {
            let x = grid.x(i);
            for j in 0..grid.ny {
                data.push(f(x, grid.y(j)));
            }
        }
        Field { grid, data }
    }

    /// Wrap an existing row-major data vector.
    pub fn from_data(grid: Grid, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), grid.len(), "data length must match the grid");
        Field { grid, data }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.grid.ny + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.grid.ny + j] = v;
    }

    /// Largest absolute value over all nodes.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Index (i, j) of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|k| (k / self.grid.ny, k % self.grid.ny))
    }

    pub fn assert_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Stencils
// ---------------------------------------------------------------------------

/// Apply a centered 1D tap stencil along `axis` with periodic wrap,
/// accumulating `out += Σ w_k f(shift k)`. `out` must be zeroed by the caller
/// if plain assignment is wanted.
fn axis_stencil_acc(f: &Field, axis: Axis, taps: &[(isize, f64)], out: &mut Field) {
    debug_assert_eq!(f.grid, out.grid);
    let (nx, ny) = (f.grid.nx, f.grid.ny);
    let src = &f.data;
    let dst = &mut out.data;
    match axis {
        Axis::X => {
            for i in 0..nx {
                let dst_row = &mut dst[i * ny..(i + 1) * ny];
                for &(k, w) in taps {
                    let si = (i as isize + k).rem_euclid(nx as isize) as usize;
                    let src_row = &src[si * ny..(si + 1) * ny];
                    for (d, s) in dst_row.iter_mut().zip(src_row) {
                        *d += w * s;
                    }
                }
            }
        }
        Axis::Y => {
            for i in 0..nx {
                let src_row = &src[i * ny..(i + 1) * ny];
                let dst_row = &mut dst[i * ny..(i + 1) * ny];
                for &(k, w) in taps {
                    if k >= 0 {
                        let k = k as usize;
                        // j + k < ny : contiguous; j + k >= ny : wrapped
                        for j in 0..ny - k {
                            dst_row[j] += w * src_row[j + k];
                        }
                        for j in ny - k..ny {
                            dst_row[j] += w * src_row[j + k - ny];
                        }
                    } else {
                        let k = (-k) as usize;
                        for j in 0..k {
                            dst_row[j] += w * src_row[j + ny - k];
                        }
                        for j in k..ny {
                            dst_row[j] += w * src_row[j - k];
                        }
                    }
                }
            }
        }
    }
}

fn dx_taps(order: Order, h: f64) -> Vec<(isize, f64)> {
    match order {
        Order::Two => vec![(1, 0.5 / h), (-1, -0.5 / h)],
        Order::Four => {
            let c = 1.0 / (12.0 * h);
            vec![(2, -c), (1, 8.0 * c), (-1, -8.0 * c), (-2, c)]
        }
    }
}

fn dxx_taps(order: Order, h: f64) -> Vec<(isize, f64)> {
    let h2 = h * h;
    match order {
        Order::Two => vec![(1, 1.0 / h2), (0, -2.0 / h2), (-1, 1.0 / h2)],
        Order::Four => {
            let c = 1.0 / (12.0 * h2);
            vec![
                (2, -c),
                (1, 16.0 * c),
                (0, -30.0 * c),
                (-1, 16.0 * c),
                (-2, -c),
            ]
        }
    }
}

/// First derivative along `axis`, centered, periodic wrap.
pub fn dx(f: &Field, axis: Axis, order: Order) -> Field {
    let mut out = Field::zeros(f.grid);
    axis_stencil_acc(f, axis, &dx_taps(order, f.grid.h), &mut out);
    out
}

/// Second derivative along one axis.
pub fn dxx(f: &Field, axis: Axis, order: Order) -> Field {
    let mut out = Field::zeros(f.grid);
    axis_stencil_acc(f, axis, &dxx_taps(order, f.grid.h), &mut out);
    out
}

/// 2D Laplacian: `dxx(X) + dxx(Y)`.
pub fn laplacian(f: &Field, order: Order) -> Field {
    let mut out = Field::zeros(f.grid);
    laplacian_into(f, order, &mut out);
    out
}

/// Laplacian writing into an existing buffer (overwrites `out`).
pub fn laplacian_into(f: &Field, order: Order, out: &mut Field) {
    out.data.iter_mut().for_each(|v| *v = 0.0);
    let taps = dxx_taps(order, f.grid.h);
    axis_stencil_acc(f, Axis::X, &taps, out);
    axis_stencil_acc(f, Axis::Y, &taps, out);
}

// ---------------------------------------------------------------------------
// Cone masking
// ---------------------------------------------------------------------------

/// Zero every node with `r > radius`. A negative radius clears the field.
/// Idempotent by construction.
pub fn mask_outside_radius(f: &mut Field, radius: f64) {
    let grid = f.grid;
    if radius < 0.0 {
        f.data.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let r2max = radius * radius;
    for i in 0..grid.nx {
        let x2 = grid.x(i) * grid.x(i);
        let row = &mut f.data[i * grid.ny..(i + 1) * grid.ny];
        for (j, v) in row.iter_mut().enumerate() {
            let y = grid.y(j);
            if x2 + y * y > r2max {
                *v = 0.0;
            }
        }
    }
}

/// Zero every node outside the light cone at time `t`, i.e. with `r > t - 1`.
pub fn apply_cone_mask(f: &mut Field, t: f64) {
    mask_outside_radius(f, t - 1.0);
}

/// Zero every node outside the guard band `r <= t - 1 + margin`. The margin
/// keeps the hard cut away from the support edge so the cut itself does not
/// seed high-frequency noise at the rim.
pub fn apply_cone_mask_with_margin(f: &mut Field, t: f64, margin: f64) {
    mask_outside_radius(f, t - 1.0 + margin);
}

// ---------------------------------------------------------------------------
// Deterministic reductions
// ---------------------------------------------------------------------------

/// Sum with a fixed pairwise reduction tree. The tree shape depends only on
/// the slice length, so results are bit-reproducible and far more accurate
/// than a naive running sum on long inputs.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// `h^2`-weighted quadrature of a node-function over the whole grid,
/// using the deterministic pairwise tree.
pub fn quadrature(f: &Field) -> f64 {
    pairwise_sum(&f.data) * f.grid.h * f.grid.h
}

// ---------------------------------------------------------------------------
// Snapshot I/O
// ---------------------------------------------------------------------------

const SNAPSHOT_MAGIC: &[u8; 4] = b"HYPF";
const SNAPSHOT_VERSION: u32 = 1;

/// Write a field snapshot: magic `HYPF`, version u32, then `nx, ny, h, t`
/// as little-endian f64, then the row-major f64 payload.
pub fn write_snapshot(path: &Path, f: &Field, t: f64) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    for v in [f.grid.nx as f64, f.grid.ny as f64, f.grid.h, t] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in &f.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read a snapshot written by [`write_snapshot`]. Returns the field and its
/// time stamp.
pub fn read_snapshot(path: &Path) -> Result<(Field, f64)> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot(format!("bad magic {magic:?}")));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != SNAPSHOT_VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let mut f64buf = [0u8; 8];
    let mut header = [0.0f64; 4];
    for v in header.iter_mut() {
        r.read_exact(&mut f64buf)?;
        *v = f64::from_le_bytes(f64buf);
    }
    let [nxf, nyf, h, t] = header;
    if nxf.fract() != 0.0 || nyf.fract() != 0.0 || nxf < 1.0 || nyf < 1.0 {
        return Err(Error::Snapshot(format!("bad node counts {nxf} x {nyf}")));
    }
    let grid = Grid::new(nxf as usize, nyf as usize, h)?;
    let mut data = vec![0.0f64; grid.len()];
    for v in data.iter_mut() {
        r.read_exact(&mut f64buf)?;
        *v = f64::from_le_bytes(f64buf);
    }
    // Must be at EOF now.
    if r.read(&mut f64buf)? != 0 {
        return Err(Error::Snapshot("trailing bytes after payload".into()));
    }
    Ok((Field { grid, data }, t))
}

// ---------------------------------------------------------------------------
// Small arithmetic helpers used by the integrators
// ---------------------------------------------------------------------------

/// `y += a * x`, elementwise.
pub fn axpy(y: &mut Field, a: f64, x: &Field) {
    debug_assert_eq!(y.grid, x.grid);
    for (yv, xv) in y.data.iter_mut().zip(&x.data) {
        *yv += a * xv;
    }
}

/// `out = x + a * y`, elementwise.
pub fn add_scaled(x: &Field, a: f64, y: &Field) -> Field {
    debug_assert_eq!(x.grid, y.grid);
    let mut out = x.clone();
    axpy(&mut out, a, y);
    out
}
