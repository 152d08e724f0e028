//! Spatial substrate: an "odd-r" offset hexagonal grid plus a normalized
//! planar coordinate system.
//!
//! Cells are addressed row-major, `index = row * cols + col`. Odd rows are
//! shifted half a cell to the right. Cell centers live in the unit square so
//! that grid and coordinate modes share one embedding space.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub x: f64,
    pub y: f64,
}

impl Coord {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(domain(format!("coordinate ({x}, {y}) outside the unit square")));
        }
        Ok(Self { x, y })
    }

    /// Clamps into the unit square.
    pub fn clamped(x: f64, y: f64) -> Self {
        Self {
            x: x.clamp(0.0, 1.0),
            y: y.clamp(0.0, 1.0),
        }
    }

    pub fn euclid(&self, other: &Coord) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// A position in either simulator mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Location {
    Cell(GridId),
    Point(Coord),
}

impl Location {
    pub fn is_cell(&self) -> bool {
        matches!(self, Location::Cell(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexGrid {
    rows: usize,
    cols: usize,
    cell_km: f64,
}

const EVEN_ROW_OFFSETS: [(isize, isize); 6] = [(-1, -1), (-1, 0), (0, -1), (0, 1), (1, -1), (1, 0)];
const ODD_ROW_OFFSETS: [(isize, isize); 6] = [(-1, 0), (-1, 1), (0, -1), (0, 1), (1, 0), (1, 1)];

impl HexGrid {
    pub const DEFAULT_CELL_KM: f64 = 1.2;

    pub fn new(rows: usize, cols: usize, cell_km: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(domain("hex grid needs at least one row and one column"));
        }
        if !(cell_km.is_finite() && cell_km > 0.0) {
            return Err(domain(format!("invalid cell size {cell_km} km")));
        }
        Ok(Self { rows, cols, cell_km })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_km(&self) -> f64 {
        self.cell_km
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cells(&self) -> impl Iterator<Item = GridId> {
        (0..self.len()).map(GridId)
    }

    pub fn check(&self, cell: GridId) -> Result<()> {
        if cell.0 >= self.len() {
            return Err(domain(format!(
                "cell {} out of range for {}x{} grid",
                cell.0, self.rows, self.cols
            )));
        }
        Ok(())
    }

    pub fn row_col(&self, cell: GridId) -> (usize, usize) {
        (cell.0 / self.cols, cell.0 % self.cols)
    }

    pub fn id(&self, row: usize, col: usize) -> GridId {
        GridId(row * self.cols + col)
    }

    /// Adjacent cells, in a fixed direction order.
    pub fn neighbors(&self, cell: GridId) -> Result<Vec<GridId>> {
        self.check(cell)?;
        let (row, col) = self.row_col(cell);
        let offsets = if row % 2 == 0 { &EVEN_ROW_OFFSETS } else { &ODD_ROW_OFFSETS };
        let mut out = Vec::with_capacity(6);
        for &(dr, dc) in offsets {
            let r = row as isize + dr;
            let c = col as isize + dc;
            if r >= 0 && c >= 0 && (r as usize) < self.rows && (c as usize) < self.cols {
                out.push(self.id(r as usize, c as usize));
            }
        }
        Ok(out)
    }

    fn cube(&self, cell: GridId) -> (isize, isize, isize) {
        let (row, col) = self.row_col(cell);
        let (row, col) = (row as isize, col as isize);
        let x = col - (row - (row & 1)) / 2;
        let z = row;
        (x, -x - z, z)
    }

    /// Number of hex steps between two cells.
    pub fn hex_steps(&self, a: GridId, b: GridId) -> Result<usize> {
        self.check(a)?;
        self.check(b)?;
        let (ax, ay, az) = self.cube(a);
        let (bx, by, bz) = self.cube(b);
        Ok((ax - bx).abs().max((ay - by).abs()).max((az - bz).abs()) as usize)
    }

    /// Center of a cell in the unit square.
    pub fn center(&self, cell: GridId) -> Coord {
        let (row, col) = self.row_col(cell);
        let shift = if row % 2 == 1 { 0.5 } else { 0.0 };
        Coord {
            x: (col as f64 + 0.5 + shift) / (self.cols as f64 + 0.5),
            y: (row as f64 + 0.5) / self.rows as f64,
        }
    }

    /// Smallest distance between two distinct cell centers (normalized units).
    pub fn min_center_spacing(&self) -> f64 {
        let dx = 1.0 / (self.cols as f64 + 0.5);
        let dy = 1.0 / self.rows as f64;
        let mut best = f64::INFINITY;
        if self.cols > 1 {
            best = best.min(dx);
        }
        if self.rows > 1 {
            best = best.min((0.25 * dx * dx + dy * dy).sqrt());
        }
        if self.rows > 2 {
            best = best.min(2.0 * dy);
        }
        best
    }

    /// Cell whose center is nearest to `c`; ties go to the lower id.
    pub fn cell_of(&self, c: Coord) -> GridId {
        let row_guess = ((c.y * self.rows as f64).floor() as isize).clamp(0, self.rows as isize - 1);
        let col_guess =
            ((c.x * (self.cols as f64 + 0.5)).floor() as isize).clamp(0, self.cols as isize - 1);
        let mut best = (f64::INFINITY, GridId(0));
        for r in (row_guess - 2).max(0)..=(row_guess + 2).min(self.rows as isize - 1) {
            for col in (col_guess - 2).max(0)..=(col_guess + 2).min(self.cols as isize - 1) {
                let id = self.id(r as usize, col as usize);
                let d = self.center(id).euclid(&c);
                if d < best.0 || (d == best.0 && id < best.1) {
                    best = (d, id);
                }
            }
        }
        best.1
    }
}

/// Distance model shared by both simulator modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub grid: HexGrid,
    /// Physical width of the unit square, in kilometers.
    pub map_width_km: f64,
}

impl Geometry {
    pub fn new(grid: HexGrid, map_width_km: f64) -> Self {
        Self { grid, map_width_km }
    }

    /// Kilometers between two locations of the same mode.
    pub fn distance(&self, a: &Location, b: &Location) -> Result<f64> {
        match (a, b) {
            (Location::Cell(x), Location::Cell(y)) => {
                Ok(self.grid.hex_steps(*x, *y)? as f64 * self.grid.cell_km())
            }
            (Location::Point(p), Location::Point(q)) => Ok(p.euclid(q) * self.map_width_km),
            _ => Err(domain("distance between locations of different modes")),
        }
    }

    /// Cell that buckets a location.
    pub fn cell(&self, loc: &Location) -> GridId {
        match loc {
            Location::Cell(id) => *id,
            Location::Point(c) => self.grid.cell_of(*c),
        }
    }

    /// Normalized 2-D position of a location.
    pub fn position(&self, loc: &Location) -> Coord {
        match loc {
            Location::Cell(id) => self.grid.center(*id),
            Location::Point(c) => *c,
        }
    }
}
