//! Masked regular-grid fields standing in for BV functions on the domain.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geometry::{t0_of, BBox, Domain, Point2};
use crate::io::write_pgm;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub bbox: BBox,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn new(bbox: BBox, nx: usize, ny: usize) -> Self {
        Grid { bbox, nx, ny }
    }

    /// Square `n x n` grid over the domain's bounding box.
    pub fn square(domain: &Domain, n: usize) -> Self {
        Grid::new(domain.bbox, n, n)
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.bbox.width() / self.nx as f64
    }

    #[inline]
    pub fn dy(&self) -> f64 {
        self.bbox.height() / self.ny as f64
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
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
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> Point2 {
        Point2::new(
            self.bbox.min.x + (i as f64 + 0.5) * self.dx(),
            self.bbox.min.y + (j as f64 + 0.5) * self.dy(),
        )
    }

    #[inline]
    pub fn center_of(&self, k: usize) -> Point2 {
        self.center(k % self.nx, k / self.nx)
    }

    /// Cell containing `p`, if any.
    #[inline]
    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        let fx = (p.x - self.bbox.min.x) / self.dx();
        let fy = (p.y - self.bbox.min.y) / self.dy();
        if fx < 0.0 || fy < 0.0 || !fx.is_finite() || !fy.is_finite() {
            return None;
        }
        let (i, j) = (fx as usize, fy as usize);
        (i < self.nx && j < self.ny).then_some((i, j))
    }
}

#[repr(u8)]
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellKind {
    Exterior = 0,
    Interior = 1,
    StopCollar = 2,
}

impl CellKind {
    #[inline]
    pub fn in_domain(self) -> bool {
        !matches!(self, CellKind::Exterior)
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(CellKind::Exterior),
            1 => Some(CellKind::Interior),
            2 => Some(CellKind::StopCollar),
            _ => None,
        }
    }
}

/// A grid laid over a domain: cell classification plus `T0` at every cell centre.
#[derive(Clone, Debug)]
pub struct DomainGrid {
    pub grid: Grid,
    pub mask: Vec<CellKind>,
    pub t0: Vec<f64>,
    pub eps_stop: f64,
}

impl DomainGrid {
    pub fn new(domain: &Domain, grid: Grid, eps_stop: f64) -> Self {
        let mut mask = Vec::with_capacity(grid.len());
        let mut t0 = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let p = grid.center_of(k);
            let t = t0_of(domain.time.as_ref(), p);
            t0.push(t);
            mask.push(if !(domain.inside)(p) {
                CellKind::Exterior
            } else if t > 1.0 - eps_stop {
                CellKind::StopCollar
            } else {
                CellKind::Interior
            });
        }
        DomainGrid {
            grid,
            mask,
            t0,
            eps_stop,
        }
    }

    pub fn interior_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, m)| **m == CellKind::Interior)
            .map(|(k, _)| k)
    }

    /// Measure of the domain as a masked Riemann sum.
    pub fn area(&self) -> f64 {
        self.mask.iter().filter(|m| m.in_domain()).count() as f64 * self.grid.cell_area()
    }

    /// In-domain cells whose centre lies in the past `{T0 < lambda}`.
    pub fn past_flags(&self, lambda: f64) -> Vec<bool> {
        self.mask
            .iter()
            .zip(&self.t0)
            .map(|(m, t)| m.in_domain() && *t < lambda)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldNorms {
    pub l1: f64,
    pub linf: f64,
    pub tv: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarGridField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub mask: Vec<CellKind>,
}

const FIELD_MAGIC: &[u8; 4] = b"CTSF";
pub(crate) const TIME_MAGIC: &[u8; 4] = b"CTGT";
pub(crate) const FORMAT_VERSION: u32 = 1;
pub(crate) const HEADER_LEN: usize = 56;

impl ScalarGridField {
    pub fn constant(dg: &DomainGrid, value: f64) -> Self {
        ScalarGridField {
            grid: dg.grid,
            values: vec![value; dg.grid.len()],
            mask: dg.mask.clone(),
        }
    }

    pub fn zeros(dg: &DomainGrid) -> Self {
        Self::constant(dg, 0.0)
    }

    pub fn from_fn(dg: &DomainGrid, f: impl Fn(Point2) -> f64) -> Self {
        let values = (0..dg.grid.len()).map(|k| f(dg.grid.center_of(k))).collect();
        ScalarGridField {
            grid: dg.grid,
            values,
            mask: dg.mask.clone(),
        }
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.grid.cell_area()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Piecewise-constant evaluation; zero outside the grid.
    pub fn value_at(&self, p: Point2) -> f64 {
        self.grid.cell_of(p).map(|(i, j)| self.get(i, j)).unwrap_or(0.0)
    }

    pub fn same_layout(&self, other: &ScalarGridField) -> bool {
        self.grid == other.grid && self.mask == other.mask
    }

    /// `v * 1_{T0 < lambda}`: cells whose centre is not in the past are zeroed.
    pub fn mask_past(&self, t0: &[f64], lambda: f64) -> ScalarGridField {
        let values = self
            .values
            .iter()
            .zip(t0)
            .map(|(v, t)| if *t < lambda { *v } else { 0.0 })
            .collect();
        ScalarGridField {
            grid: self.grid,
            values,
            mask: self.mask.clone(),
        }
    }

    pub fn norms(&self) -> FieldNorms {
        field_norms(self)
    }

    /// `L1` norm over the in-domain cells flagged by `cells`.
    pub fn l1_where(&self, cells: &[bool]) -> f64 {
        self.values
            .iter()
            .zip(cells)
            .filter(|(_, c)| **c)
            .map(|(v, _)| v.abs())
            .sum::<f64>()
            * self.cell_area()
    }

    /// `||self - other||_{L1(Omega_lambda)}`.
    pub fn l1_distance_on(&self, other: &ScalarGridField, dg: &DomainGrid, lambda: f64) -> f64 {
        let area = self.cell_area();
        let mut s = 0.0;
        for k in 0..self.values.len() {
            if dg.mask[k].in_domain() && dg.t0[k] < lambda {
                s += (self.values[k] - other.values[k]).abs();
            }
        }
        s * area
    }

    pub fn l1_distance(&self, other: &ScalarGridField) -> f64 {
        let area = self.cell_area();
        self.values
            .iter()
            .zip(&other.values)
            .zip(&self.mask)
            .filter(|(_, m)| m.in_domain())
            .map(|((a, b), _)| (a - b).abs())
            .sum::<f64>()
            * area
    }

    pub fn sub(&self, other: &ScalarGridField) -> ScalarGridField {
        ScalarGridField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            mask: self.mask.clone(),
        }
    }

    /// Binary layout (little-endian): magic `CTSF`, u32 version, u32 nx,
    /// u32 ny, f64 xmin, ymin, xmax, ymax, f64 reserved (0), nx*ny f64
    /// values row-major, then nx*ny mask bytes.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        write_header(&mut w, FIELD_MAGIC, &self.grid, 0.0)?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        let mask: Vec<u8> = self.mask.iter().map(|m| *m as u8).collect();
        w.write_all(&mask)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let (grid, _) = read_header(&mut r, FIELD_MAGIC)?;
        let values = read_f64s(&mut r, grid.len())?;
        let mut bytes = vec![0u8; grid.len()];
        r.read_exact(&mut bytes)
            .map_err(|e| Error::GridFormat(format!("truncated mask: {e}")))?;
        let mask = bytes
            .iter()
            .enumerate()
            .map(|(k, b)| {
                CellKind::from_byte(*b).ok_or_else(|| Error::GridFormat(format!("bad mask byte {b} at cell {k}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ScalarGridField { grid, values, mask })
    }

    /// 8-bit grey rendering: in-domain values mapped affinely onto 0..=255,
    /// exterior cells black. Row 0 of the image is `j = 0`.
    pub fn write_pgm<W: Write>(&self, w: W) -> Result<()> {
        let (lo, hi) = self
            .values
            .iter()
            .zip(&self.mask)
            .filter(|(_, m)| m.in_domain())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| {
                (lo.min(*v), hi.max(*v))
            });
        let span = if hi > lo { hi - lo } else { 1.0 };
        let pixels: Vec<u8> = self
            .values
            .iter()
            .zip(&self.mask)
            .map(|(v, m)| {
                if m.in_domain() && lo.is_finite() {
                    (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8
                } else {
                    0
                }
            })
            .collect();
        write_pgm(w, self.grid.nx, self.grid.ny, &pixels)
    }
}

/// `L1`, `L-infinity` and total variation of a masked grid field.
///
/// The total variation sums forward-difference gradient magnitudes times the
/// cell area over cells whose forward neighbours are also in the domain.
pub fn field_norms(u: &ScalarGridField) -> FieldNorms {
    let g = u.grid;
    let (dx, dy, area) = (g.dx(), g.dy(), g.cell_area());
    let mut l1 = 0.0;
    let mut linf: f64 = 0.0;
    let mut tv = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.index(i, j);
            if !u.mask[k].in_domain() {
                continue;
            }
            let v = u.values[k];
            l1 += v.abs();
            linf = linf.max(v.abs());
            let gx = if i + 1 < g.nx && u.mask[k + 1].in_domain() {
                (u.values[k + 1] - v) / dx
            } else {
                0.0
            };
            let gy = if j + 1 < g.ny && u.mask[k + g.nx].in_domain() {
                (u.values[k + g.nx] - v) / dy
            } else {
                0.0
            };
            tv += gx.hypot(gy);
        }
    }
    FieldNorms {
        l1: l1 * area,
        linf,
        tv: tv * area,
    }
}

pub(crate) fn write_header<W: Write>(w: &mut W, magic: &[u8; 4], grid: &Grid, q: f64) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(grid.nx as u32).to_le_bytes())?;
    w.write_all(&(grid.ny as u32).to_le_bytes())?;
    for v in [grid.bbox.min.x, grid.bbox.min.y, grid.bbox.max.x, grid.bbox.max.y, q] {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<(Grid, f64)> {
    let mut head = [0u8; HEADER_LEN];
    r.read_exact(&mut head)
        .map_err(|e| Error::GridFormat(format!("truncated header: {e}")))?;
    if &head[0..4] != magic {
        return Err(Error::GridFormat(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&head[0..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    let u32_at = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(head[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != FORMAT_VERSION {
        return Err(Error::GridFormat(format!("unsupported version {version}")));
    }
    let (nx, ny) = (u32_at(8) as usize, u32_at(12) as usize);
    if nx == 0 || ny == 0 {
        return Err(Error::GridFormat(format!("empty grid {nx}x{ny}")));
    }
    let bbox = BBox::new(Point2::new(f64_at(16), f64_at(24)), Point2::new(f64_at(32), f64_at(40)));
    if !(bbox.width() > 0.0 && bbox.height() > 0.0) {
        return Err(Error::GridFormat("degenerate bounding box".into()));
    }
    Ok((Grid::new(bbox, nx, ny), f64_at(48)))
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)
        .map_err(|e| Error::GridFormat(format!("truncated values: {e}")))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DEFAULT_EPS_STOP;
    use std::f64::consts::PI;

    fn disk_grid(n: usize) -> DomainGrid {
        let d = Domain::unit_disk(4.0);
        DomainGrid::new(&d, Grid::square(&d, n), DEFAULT_EPS_STOP)
    }

    #[test]
    fn zero_field_has_zero_norms() {
        let n = ScalarGridField::zeros(&disk_grid(32)).norms();
        assert_eq!((n.l1, n.linf, n.tv), (0.0, 0.0, 0.0));
    }

    #[test]
    fn unit_field_l1_approaches_disk_area() {
        let u = ScalarGridField::constant(&disk_grid(256), 1.0);
        let n = u.norms();
        assert!((n.l1 - PI).abs() / PI < 0.02, "l1 = {}", n.l1);
        assert_eq!(n.tv, 0.0);
    }

    #[test]
    fn half_disk_indicator_tv_approaches_diameter() {
        let dg = disk_grid(256);
        let u = ScalarGridField::from_fn(&dg, |p| if p.y > 0.0 { 1.0 } else { 0.0 });
        let tv = u.norms().tv;
        assert!((tv - 2.0).abs() < 0.03, "tv = {tv}");
    }

    #[test]
    fn mask_past_is_idempotent() {
        let dg = disk_grid(48);
        let u = ScalarGridField::from_fn(&dg, |p| p.x * 3.0 + p.y.sin());
        let once = u.mask_past(&dg.t0, 0.4);
        assert_eq!(once.mask_past(&dg.t0, 0.4), once);
    }

    #[test]
    fn binary_round_trip() {
        let dg = disk_grid(17);
        let u = ScalarGridField::from_fn(&dg, |p| p.x - 2.0 * p.y);
        let mut buf = Vec::new();
        u.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 17 * 17 * 9);
        assert_eq!(&buf[0..4], b"CTSF");
        let back = ScalarGridField::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, u);
        assert!(ScalarGridField::read_binary(&buf[..40]).is_err());
    }
}
