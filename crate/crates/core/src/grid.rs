//! Hexagonal lattice topology in axial coordinates, the wedge domain the
//! automaton runs on, and reconstruction of whole crystals from a wedge.
//!
//! Axial coordinate `(i, j)` sits at Cartesian `(i + j/2, j·√3/2)`: the `i`
//! axis points east and the `j` axis 60° counter-clockwise from it. The
//! simulated wedge is the sector `i ≥ 0, j ≥ 0` truncated to a `side × side`
//! rhombus, with the seed at `(0, 0)`. Whole crystals are the images of the
//! wedge under the hexagonal symmetry group.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("coordinate ({i}, {j}) is more than one step outside a wedge of side {side}")]
    OutsideWedge { i: i32, j: i32, side: usize },
    #[error("wedge copies disagree at cell ({i}, {j})")]
    SymmetryViolation { i: i32, j: i32 },
    #[error("render scale must be positive and finite, got {0}")]
    InvalidScale(f64),
}

/// Position on the hexagonal lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct AxialCoord {
    pub i: i32,
    pub j: i32,
}

/// Neighbor offsets in the canonical order E, W, N, S, NE, SW.
///
/// "N" is the `+j` direction (60° from east) and "NE"/"SW" are the
/// `(1, -1)` / `(-1, 1)` diagonals. Serialized neighbor-indexed data relies on
/// this order.
pub const NEIGHBOR_OFFSETS: [(i32, i32); 6] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)];

impl AxialCoord {
    pub const ORIGIN: AxialCoord = AxialCoord { i: 0, j: 0 };

    pub const fn new(i: i32, j: i32) -> Self {
        AxialCoord { i, j }
    }

    pub fn neighbors(self) -> [AxialCoord; 6] {
        NEIGHBOR_OFFSETS.map(|(di, dj)| AxialCoord::new(self.i + di, self.j + dj))
    }

    /// Counter-clockwise rotation by 60° about the origin.
    pub fn rotate60(self) -> Self {
        AxialCoord::new(-self.j, self.i + self.j)
    }

    /// Clockwise rotation by 60° about the origin.
    pub fn rotate_neg60(self) -> Self {
        AxialCoord::new(self.i + self.j, -self.i)
    }

    /// Mirror across the `i` axis (the wedge edge `j = 0`).
    pub fn reflect_i_axis(self) -> Self {
        AxialCoord::new(self.i + self.j, -self.j)
    }

    /// Mirror across the `j` axis (the wedge edge `i = 0`).
    pub fn reflect_j_axis(self) -> Self {
        AxialCoord::new(-self.i, self.i + self.j)
    }

    /// Mirror across the wedge bisector `i = j`.
    pub fn swap(self) -> Self {
        AxialCoord::new(self.j, self.i)
    }

    pub fn hex_distance(self, other: AxialCoord) -> i32 {
        let di = self.i - other.i;
        let dj = self.j - other.j;
        (di.abs() + dj.abs() + (di + dj).abs()) / 2
    }

    /// Cartesian position in lattice units.
    pub fn to_cartesian(self) -> (f64, f64) {
        let (i, j) = (self.i as f64, self.j as f64);
        (i + 0.5 * j, j * (3f64.sqrt() / 2.0))
    }
}

/// The six hex-adjacent cells of `c`, in [`NEIGHBOR_OFFSETS`] order.
pub fn hex_neighbors(c: AxialCoord) -> [AxialCoord; 6] {
    c.neighbors()
}

/// How the two straight wedge edges are glued to the rest of the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WedgeSymmetry {
    /// Reflect across both edges; whole crystals carry the full 12-element
    /// dihedral symmetry.
    #[default]
    Mirror,
    /// Wrap each edge onto the other by a 60° rotation; whole crystals are only
    /// rotation-symmetric.
    Rotational,
}

impl WedgeSymmetry {
    /// All images of `c` under the symmetry group (with repeats for cells on
    /// symmetry axes).
    pub fn images(self, c: AxialCoord) -> Vec<AxialCoord> {
        let mut out = Vec::with_capacity(12);
        let mut r = c;
        for _ in 0..6 {
            out.push(r);
            if self == WedgeSymmetry::Mirror {
                out.push(r.reflect_i_axis());
            }
            r = r.rotate60();
        }
        out
    }

    /// Representative of `c`'s orbit inside the wedge that all members of the
    /// orbit share. Wedge cells that are copies of each other map to the same
    /// representative.
    pub fn canonical(self, c: AxialCoord) -> AxialCoord {
        match self {
            WedgeSymmetry::Mirror => {
                if c.i >= c.j {
                    c
                } else {
                    c.swap()
                }
            }
            WedgeSymmetry::Rotational => {
                if c.i == 0 && c.j > 0 {
                    AxialCoord::new(c.j, 0)
                } else {
                    c
                }
            }
        }
    }

    /// Number of whole-crystal cells a wedge cell stands for: the seed counts
    /// once and every other orbit of six or twelve cells is split evenly among
    /// its wedge copies.
    pub fn multiplicity(self, c: AxialCoord) -> f64 {
        if c == AxialCoord::ORIGIN {
            return 1.0;
        }
        match self {
            WedgeSymmetry::Mirror => {
                if c.i == 0 || c.j == 0 {
                    3.0
                } else {
                    6.0
                }
            }
            WedgeSymmetry::Rotational => {
                if c.i == 0 {
                    0.0
                } else {
                    6.0
                }
            }
        }
    }
}

/// Result of folding a neighbor coordinate into the wedge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Folded {
    Cell(AxialCoord),
    /// Beyond the far edges; the domain boundary rule applies.
    Exterior,
}

/// Maps a coordinate adjacent to the wedge back into it.
///
/// Coordinates with an index of `-1` are carried across the nearer straight
/// edge (mirror reflection or 60° rotation, per `symmetry`), repeatedly for
/// the two cells next to the seed. Anything that then lies past the far edges
/// is [`Folded::Exterior`].
pub fn fold_into_wedge(c: AxialCoord, side: usize, symmetry: WedgeSymmetry) -> Result<Folded, GridError> {
    let s = side as i32;
    let err = GridError::OutsideWedge { i: c.i, j: c.j, side };
    if c.i < -1 || c.j < -1 || c.i > s || c.j > s {
        return Err(err);
    }
    // (-1,-1) and (side,side) are two steps from every wedge cell.
    if (c.i == -1 && c.j == -1) || (c.i == s && c.j == s) {
        return Err(err);
    }
    let mut f = c;
    for _ in 0..3 {
        if f.i >= 0 && f.j >= 0 {
            break;
        }
        f = match (symmetry, f.i < 0) {
            (WedgeSymmetry::Mirror, true) => f.reflect_j_axis(),
            (WedgeSymmetry::Mirror, false) => f.reflect_i_axis(),
            (WedgeSymmetry::Rotational, true) => f.rotate_neg60(),
            (WedgeSymmetry::Rotational, false) => f.rotate60(),
        };
    }
    debug_assert!(f.i >= 0 && f.j >= 0);
    if f.i >= s || f.j >= s {
        Ok(Folded::Exterior)
    } else {
        Ok(Folded::Cell(f))
    }
}

/// Binary field over the `side × side` wedge, row-major in `(i, j)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WedgeGrid {
    side: usize,
    cells: Vec<bool>,
}

impl WedgeGrid {
    pub fn new(side: usize) -> Self {
        WedgeGrid { side, cells: vec![false; side * side] }
    }

    pub fn from_cells(side: usize, cells: Vec<bool>) -> Self {
        assert_eq!(cells.len(), side * side, "wedge cell count must be side²");
        WedgeGrid { side, cells }
    }

    /// Wedge with only the seed attached.
    pub fn seed_only(side: usize) -> Self {
        let mut g = WedgeGrid::new(side);
        g.set(0, 0, true);
        g
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.side + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.side + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        let k = self.index(i, j);
        self.cells[k] = value;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// True when every set cell here is also set in `other`.
    pub fn is_subset_of(&self, other: &WedgeGrid) -> bool {
        self.side == other.side && self.cells.iter().zip(&other.cells).all(|(&a, &b)| !a || b)
    }

    pub fn coords(&self) -> impl Iterator<Item = (AxialCoord, bool)> + '_ {
        let side = self.side;
        self.cells
            .iter()
            .enumerate()
            .map(move |(k, &v)| (AxialCoord::new((k / side) as i32, (k % side) as i32), v))
    }
}

/// Binary mask over the whole lattice, stored densely for `|i|, |j| ≤ radius`.
/// Cells outside the stored window read as unattached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HexMask {
    radius: i32,
    cells: Vec<bool>,
}

impl HexMask {
    pub fn new(radius: usize) -> Self {
        let r = radius as i32;
        let w = (2 * r + 1) as usize;
        HexMask { radius: r, cells: vec![false; w * w] }
    }

    pub fn from_coords(coords: impl IntoIterator<Item = AxialCoord>) -> Self {
        let coords: Vec<AxialCoord> = coords.into_iter().collect();
        let radius = coords.iter().map(|c| c.i.abs().max(c.j.abs())).max().unwrap_or(0);
        let mut m = HexMask::new(radius as usize);
        for c in coords {
            m.set(c, true);
        }
        m
    }

    pub fn radius(&self) -> usize {
        self.radius as usize
    }

    fn slot(&self, c: AxialCoord) -> Option<usize> {
        let r = self.radius;
        if c.i.abs() > r || c.j.abs() > r {
            return None;
        }
        let w = 2 * r + 1;
        Some(((c.i + r) * w + (c.j + r)) as usize)
    }

    #[inline]
    pub fn get(&self, c: AxialCoord) -> bool {
        self.slot(c).is_some_and(|k| self.cells[k])
    }

    /// Panics if `c` lies outside the stored window.
    pub fn set(&mut self, c: AxialCoord, value: bool) {
        let k = self.slot(c).expect("coordinate outside mask window");
        self.cells[k] = value;
    }

    pub fn attached(&self) -> impl Iterator<Item = AxialCoord> + '_ {
        let r = self.radius;
        let w = 2 * r + 1;
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(k, _)| AxialCoord::new(k as i32 / w - r, k as i32 % w - r))
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Rotates the mask by 60° counter-clockwise about the origin.
    pub fn rotated60(&self) -> HexMask {
        let mut out = HexMask::new(2 * self.radius as usize);
        for c in self.attached() {
            out.set(c.rotate60(), true);
        }
        out.shrink()
    }

    /// Same attached set, smallest window that holds it.
    pub fn shrink(&self) -> HexMask {
        HexMask::from_coords(self.attached())
    }

    /// Attached-set equality independent of window size.
    pub fn same_cells(&self, other: &HexMask) -> bool {
        self.count() == other.count() && self.attached().all(|c| other.get(c))
    }
}

/// Tiles the whole lattice with images of the wedge.
///
/// Every image of a wedge cell under the symmetry group receives that cell's
/// value. Cells reached from several wedge cells must agree, which always
/// holds for engine output but not necessarily for external masks.
pub fn reconstruct_full(w: &WedgeGrid, symmetry: WedgeSymmetry) -> Result<HexMask, GridError> {
    let side = w.side();
    let radius = 2 * side.saturating_sub(1);
    let r = radius as i32;
    let width = (2 * r + 1) as usize;
    // 0 = uncovered, 1 = unattached, 2 = attached
    let mut seen = vec![0u8; width * width];
    let mut mask = HexMask::new(radius);
    for (c, v) in w.coords() {
        let tag = if v { 2 } else { 1 };
        for img in symmetry.images(c) {
            let k = ((img.i + r) as usize) * width + (img.j + r) as usize;
            match seen[k] {
                0 => {
                    seen[k] = tag;
                    if v {
                        mask.set(img, true);
                    }
                }
                t if t != tag => return Err(GridError::SymmetryViolation { i: img.i, j: img.j }),
                _ => {}
            }
        }
    }
    Ok(mask)
}

/// Grayscale raster, row-major, top row first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Raster {
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Binary PGM (`P5`, maxval 255).
    pub fn write_pgm<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.pixels)
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.pixels.len() + 20);
        self.write_pgm(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }
}

/// Pixel size that shows a whole crystal reconstructed from a wedge of `side`.
pub fn raster_extent(side: usize, scale: f64) -> usize {
    (2.0 * 3f64.sqrt() * side as f64 * scale).ceil() as usize + 2
}

/// Rasterizes attached cells as filled hexagons.
///
/// The lattice origin maps to the image center and Cartesian `y` points up.
/// Each pixel takes the value of the lattice cell whose hexagon contains the
/// pixel center.
pub fn render_cartesian(mask: &HexMask, scale: f64, width: usize, height: usize) -> Result<Raster, GridError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(GridError::InvalidScale(scale));
    }
    let mut pixels = vec![0u8; width * height];
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let row_height = 3f64.sqrt() / 2.0;
    for py in 0..height {
        let y = (cy - (py as f64 + 0.5)) / scale;
        for px in 0..width {
            let x = (px as f64 + 0.5 - cx) / scale;
            let fj = y / row_height;
            let fi = x - 0.5 * fj;
            if mask.get(axial_round(fi, fj)) {
                pixels[py * width + px] = 255;
            }
        }
    }
    Ok(Raster { width, height, pixels })
}

/// Nearest lattice cell to a fractional axial position (cube rounding).
fn axial_round(fi: f64, fj: f64) -> AxialCoord {
    let fk = -fi - fj;
    let (mut ri, mut rj, rk) = (fi.round(), fj.round(), fk.round());
    let (di, dj, dk) = ((ri - fi).abs(), (rj - fj).abs(), (rk - fk).abs());
    if di > dj && di > dk {
        ri = -rj - rk;
    } else if dj > dk {
        rj = -ri - rk;
    }
    AxialCoord::new(ri as i32, rj as i32)
}
