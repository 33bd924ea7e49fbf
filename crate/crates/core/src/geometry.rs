//! Unit cell, grain boundary classification and the perforated domain.
//!
//! Everything lives on structured square grids. A cell `(i, j)` has center
//! `((i + 0.5) h, (j + 0.5) h)`; flat indices are row-major, `j * n + i`.
//! The grain is the set of cells whose center lies strictly inside the
//! shape, so its boundary is a staircase of grid faces. Interface length is
//! measured with marching squares on the shape's level set, and each
//! staircase face carries a length weight so that the weights add up to that
//! measured perimeter.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest grid side accepted for a tiled domain.
pub const MAX_GRID_SIDE: usize = 4096;

/// Smallest unit-cell resolution.
pub const MIN_CELL_RESOLUTION: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

/// Side of a cell, named by the outward direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    East,
    West,
    North,
    South,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::East, Side::West, Side::North, Side::South];

    pub fn offset(self) -> (isize, isize) {
        match self {
            Side::East => (1, 0),
            Side::West => (-1, 0),
            Side::North => (0, 1),
            Side::South => (0, -1),
        }
    }

    pub fn normal(self) -> [f64; 2] {
        let (dx, dy) = self.offset();
        [dx as f64, dy as f64]
    }
}

/// Heat boundary condition carried by a grain-boundary face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryClass {
    Robin,
    Neumann,
}

/// Shape of the solid grain inside the unit cell `(0,1)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GrainShape {
    None,
    Disc { center: [f64; 2], radius: f64 },
    Rectangle { min: [f64; 2], max: [f64; 2] },
}

impl GrainShape {
    pub fn disc(center: [f64; 2], radius: f64) -> Self {
        GrainShape::Disc { center, radius }
    }

    /// Signed distance (negative inside the grain). `None` is +inf everywhere.
    pub fn level_set(&self, p: [f64; 2]) -> f64 {
        match *self {
            GrainShape::None => f64::INFINITY,
            GrainShape::Disc { center, radius } => {
                ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt() - radius
            }
            GrainShape::Rectangle { min, max } => {
                let c = [(min[0] + max[0]) / 2.0, (min[1] + max[1]) / 2.0];
                let half = [(max[0] - min[0]) / 2.0, (max[1] - min[1]) / 2.0];
                let q = [(p[0] - c[0]).abs() - half[0], (p[1] - c[1]).abs() - half[1]];
                let outside = (q[0].max(0.0).powi(2) + q[1].max(0.0).powi(2)).sqrt();
                outside + q[0].max(q[1]).min(0.0)
            }
        }
    }

    fn centroid(&self) -> [f64; 2] {
        match *self {
            GrainShape::None => [0.5, 0.5],
            GrainShape::Disc { center, .. } => center,
            GrainShape::Rectangle { min, max } => [(min[0] + max[0]) / 2.0, (min[1] + max[1]) / 2.0],
        }
    }

    /// Unit normal of the level set, by central differences.
    fn normal(&self, p: [f64; 2]) -> [f64; 2] {
        let s = 1e-7;
        let gx = self.level_set([p[0] + s, p[1]]) - self.level_set([p[0] - s, p[1]]);
        let gy = self.level_set([p[0], p[1] + s]) - self.level_set([p[0], p[1] - s]);
        let norm = (gx * gx + gy * gy).sqrt();
        if norm > 0.0 {
            [gx / norm, gy / norm]
        } else {
            [1.0, 0.0]
        }
    }

    /// Mirror image under `y -> 1 - y` in both coordinates.
    pub fn reflected(&self) -> Self {
        match *self {
            GrainShape::None => GrainShape::None,
            GrainShape::Disc { center, radius } => GrainShape::Disc { center: [1.0 - center[0], 1.0 - center[1]], radius },
            GrainShape::Rectangle { min, max } => GrainShape::Rectangle {
                min: [1.0 - max[0], 1.0 - max[1]],
                max: [1.0 - min[0], 1.0 - min[1]],
            },
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            GrainShape::None => Ok(()),
            GrainShape::Disc { center, radius } => {
                if !(radius > 0.0 && radius < 0.5) {
                    return Err(Error::Geometry(format!("disc radius {radius} outside (0, 0.5)")));
                }
                for c in center {
                    if !(c - radius > 0.0 && c + radius < 1.0) {
                        return Err(Error::Geometry(format!(
                            "disc at {center:?} with radius {radius} touches the cell boundary"
                        )));
                    }
                }
                Ok(())
            }
            GrainShape::Rectangle { min, max } => {
                for k in 0..2 {
                    if !(min[k] > 0.0 && max[k] < 1.0 && min[k] < max[k]) {
                        return Err(Error::Geometry(format!(
                            "rectangle {min:?}..{max:?} is empty or touches the cell boundary"
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

/// A staircase face between a pore cell and a grain cell of the unit cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrainFace {
    /// Pore cell `(i, j)` owning the face.
    pub cell: (usize, usize),
    /// Side of the pore cell the grain lies on.
    pub side: Side,
    pub class: BoundaryClass,
    /// Interface length carried by this face, in cell units (cell side = 1).
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMeasures {
    /// |Y1|, by cell counting.
    pub pore_area: f64,
    pub grain_area: f64,
    /// |Γ|, marching-squares length of the grain interface.
    pub perimeter: f64,
    /// |Γ_R|.
    pub robin_perimeter: f64,
    /// Raw length of the staircase faces.
    pub staircase_perimeter: f64,
}

/// Reference periodicity cell with its grain.
#[derive(Debug, Clone)]
pub struct UnitCell {
    resolution: usize,
    shape: GrainShape,
    robin_fraction: f64,
    pore_mask: Vec<bool>,
    faces: Vec<GrainFace>,
    measures: CellMeasures,
}

/// Builds the unit cell: grain mask, boundary faces and measures.
pub fn build_unit_cell(shape: GrainShape, resolution: usize, robin_fraction: f64) -> Result<UnitCell> {
    if resolution < MIN_CELL_RESOLUTION {
        return Err(Error::param("resolution", format!("must be at least {MIN_CELL_RESOLUTION}, got {resolution}")));
    }
    if !(0.0..=1.0).contains(&robin_fraction) {
        return Err(Error::param("robin_fraction", format!("must lie in [0, 1], got {robin_fraction}")));
    }
    shape.validate()?;

    let r = resolution;
    let h = 1.0 / r as f64;
    let pore_mask: Vec<bool> = (0..r * r)
        .map(|k| {
            let (i, j) = (k % r, k / r);
            shape.level_set([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]) >= 0.0
        })
        .collect();

    for k in 0..r {
        for (i, j) in [(k, 0), (k, r - 1), (0, k), (r - 1, k)] {
            if !pore_mask[j * r + i] {
                return Err(Error::Geometry(format!(
                    "grain covers boundary cell ({i}, {j}) at resolution {r}"
                )));
            }
        }
    }

    let pore_count = pore_mask.iter().filter(|&&p| p).count();
    let pore_area = pore_count as f64 * h * h;
    let perimeter = marching_squares_length(&shape, r);

    // Staircase faces. Boundary cells are pore, so wrapped neighbours are too.
    let centroid = shape.centroid();
    let mut faces = Vec::new();
    for j in 0..r {
        for i in 0..r {
            if !pore_mask[j * r + i] {
                continue;
            }
            for side in Side::ALL {
                let (dx, dy) = side.offset();
                let ni = (i as isize + dx).rem_euclid(r as isize) as usize;
                let nj = (j as isize + dy).rem_euclid(r as isize) as usize;
                if pore_mask[nj * r + ni] {
                    continue;
                }
                let mid = [(i as f64 + 0.5 + 0.5 * dx as f64) * h, (j as f64 + 0.5 + 0.5 * dy as f64) * h];
                let n = shape.normal(mid);
                let local = h / (n[0].abs() + n[1].abs());
                let mut angle = (mid[1] - centroid[1]).atan2(mid[0] - centroid[0]);
                if angle < 0.0 {
                    angle += 2.0 * PI;
                }
                let class = if robin_fraction >= 1.0 || angle < 2.0 * PI * robin_fraction {
                    BoundaryClass::Robin
                } else {
                    BoundaryClass::Neumann
                };
                faces.push(GrainFace { cell: (i, j), side, class, weight: local });
            }
        }
    }
    let staircase_perimeter = faces.len() as f64 * h;
    let local_sum: f64 = faces.iter().map(|f| f.weight).sum();
    if local_sum > 0.0 {
        let scale = perimeter / local_sum;
        for f in &mut faces {
            f.weight *= scale;
        }
    }
    let robin_perimeter = faces.iter().filter(|f| f.class == BoundaryClass::Robin).fold(0.0, |acc, f| acc + f.weight);

    Ok(UnitCell {
        resolution: r,
        shape,
        robin_fraction,
        pore_mask,
        faces,
        measures: CellMeasures {
            pore_area,
            grain_area: 1.0 - pore_area,
            perimeter,
            robin_perimeter,
            staircase_perimeter,
        },
    })
}

/// Length of the zero contour of the shape's level set sampled at grid nodes.
fn marching_squares_length(shape: &GrainShape, r: usize) -> f64 {
    if matches!(shape, GrainShape::None) {
        return 0.0;
    }
    let h = 1.0 / r as f64;
    let node = |i: usize, j: usize| shape.level_set([i as f64 * h, j as f64 * h]);
    let values: Vec<f64> = (0..(r + 1) * (r + 1)).map(|k| node(k % (r + 1), k / (r + 1))).collect();
    let at = |i: usize, j: usize| values[j * (r + 1) + i];

    let mut length = 0.0;
    for j in 0..r {
        for i in 0..r {
            // corners counter-clockwise from the lower left
            let p = [
                [i as f64 * h, j as f64 * h],
                [(i + 1) as f64 * h, j as f64 * h],
                [(i + 1) as f64 * h, (j + 1) as f64 * h],
                [i as f64 * h, (j + 1) as f64 * h],
            ];
            let v = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
            let inside = v.map(|x| x < 0.0);
            if inside.iter().all(|&b| b) || inside.iter().all(|&b| !b) {
                continue;
            }
            // edge k joins corner k and corner k+1
            let crossing = |k: usize| -> Option<[f64; 2]> {
                let (a, b) = (k, (k + 1) % 4);
                if inside[a] == inside[b] {
                    return None;
                }
                let t = v[a] / (v[a] - v[b]);
                Some([p[a][0] + t * (p[b][0] - p[a][0]), p[a][1] + t * (p[b][1] - p[a][1])])
            };
            let seg = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            let cuts: Vec<[f64; 2]> = (0..4).filter_map(crossing).collect();
            if cuts.len() == 2 {
                length += seg(cuts[0], cuts[1]);
            } else {
                // saddle: cut off the corners whose class differs from the center
                let center_inside = (v.iter().sum::<f64>() / 4.0) < 0.0;
                for k in 0..4 {
                    if inside[k] != center_inside {
                        let before = crossing((k + 3) % 4).expect("saddle edge");
                        let after = crossing(k).expect("saddle edge");
                        length += seg(before, after);
                    }
                }
            }
        }
    }
    length
}

impl UnitCell {
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn shape(&self) -> GrainShape {
        self.shape
    }

    pub fn robin_fraction(&self) -> f64 {
        self.robin_fraction
    }

    pub fn pore_mask(&self) -> &[bool] {
        &self.pore_mask
    }

    pub fn is_pore(&self, i: usize, j: usize) -> bool {
        self.pore_mask[j * self.resolution + i]
    }

    pub fn faces(&self) -> &[GrainFace] {
        &self.faces
    }

    pub fn measures(&self) -> CellMeasures {
        self.measures
    }

    /// Cell rebuilt with the grain mirrored through the cell center.
    pub fn reflected(&self) -> Result<UnitCell> {
        build_unit_cell(self.shape.reflected(), self.resolution, self.robin_fraction)
    }

    /// Number of periodic connected components of the pore space.
    pub fn pore_components(&self) -> usize {
        let r = self.resolution;
        let mut label = vec![usize::MAX; r * r];
        let mut components = 0;
        let mut stack = Vec::new();
        for start in 0..r * r {
            if !self.pore_mask[start] || label[start] != usize::MAX {
                continue;
            }
            label[start] = components;
            stack.push(start);
            while let Some(k) = stack.pop() {
                let (i, j) = (k % r, k / r);
                let neighbours = [
                    j * r + (i + 1) % r,
                    j * r + (i + r - 1) % r,
                    ((j + 1) % r) * r + i,
                    ((j + r - 1) % r) * r + i,
                ];
                for nb in neighbours {
                    if self.pore_mask[nb] && label[nb] == usize::MAX {
                        label[nb] = components;
                        stack.push(nb);
                    }
                }
            }
            components += 1;
        }
        components
    }
}

/// Structured grid over `(0,1)^2` with a pore mask and pore-cell numbering.
#[derive(Debug, Clone)]
pub struct Grid {
    n: usize,
    h: f64,
    mask: Vec<bool>,
    pore_of: Vec<u32>,
    cells: Vec<usize>,
}

const NOT_PORE: u32 = u32::MAX;

impl Grid {
    pub fn new(n: usize, mask: Vec<bool>) -> Self {
        assert_eq!(mask.len(), n * n, "mask size");
        let mut pore_of = vec![NOT_PORE; n * n];
        let mut cells = Vec::new();
        for (k, &p) in mask.iter().enumerate() {
            if p {
                pore_of[k] = cells.len() as u32;
                cells.push(k);
            }
        }
        Grid { n, h: 1.0 / n as f64, mask, pore_of, cells }
    }

    /// Grid with every cell in the pore space.
    pub fn full(n: usize) -> Self {
        Grid::new(n, vec![true; n * n])
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Number of pore cells (unknowns per field).
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Flat grid index of pore cell `p`.
    pub fn flat(&self, p: usize) -> usize {
        self.cells[p]
    }

    pub fn ij(&self, p: usize) -> (usize, usize) {
        let k = self.cells[p];
        (k % self.n, k / self.n)
    }

    pub fn pore_at(&self, i: usize, j: usize) -> Option<usize> {
        let v = self.pore_of[j * self.n + i];
        (v != NOT_PORE).then_some(v as usize)
    }

    pub fn pore_at_flat(&self, k: usize) -> Option<usize> {
        let v = self.pore_of[k];
        (v != NOT_PORE).then_some(v as usize)
    }

    pub fn center(&self, p: usize) -> [f64; 2] {
        let (i, j) = self.ij(p);
        [(i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h]
    }

    /// Neighbour of pore cell `p` across `side`: `None` outside the domain,
    /// `Some(None)` for a grain cell, `Some(Some(q))` for pore cell `q`.
    pub fn neighbour(&self, p: usize, side: Side) -> Option<Option<usize>> {
        let (i, j) = self.ij(p);
        let (dx, dy) = side.offset();
        let (ni, nj) = (i as isize + dx, j as isize + dy);
        if ni < 0 || nj < 0 || ni >= self.n as isize || nj >= self.n as isize {
            return None;
        }
        Some(self.pore_at(ni as usize, nj as usize))
    }

    /// Faces between two pore cells, as `(low, high, axis)` with `low` the
    /// cell with the smaller coordinate along `axis`.
    pub fn interior_faces(&self) -> Vec<(usize, usize, Axis)> {
        let mut out = Vec::new();
        for p in 0..self.len() {
            if let Some(Some(q)) = self.neighbour(p, Side::East) {
                out.push((p, q, Axis::X));
            }
            if let Some(Some(q)) = self.neighbour(p, Side::North) {
                out.push((p, q, Axis::Y));
            }
        }
        out
    }

    /// L2 norm over pore cells, weighted by cell area.
    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        (f.iter().map(|x| x * x).sum::<f64>() * self.h * self.h).sqrt()
    }

    pub fn integral(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.h * self.h
    }
}

/// A grain-boundary face of the perforated domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainFace {
    /// Pore-cell index in the domain grid.
    pub pore: usize,
    pub side: Side,
    pub class: BoundaryClass,
    /// Physical interface length (cell weight scaled by ε).
    pub length: f64,
}

/// Ω^ε: the unit square minus the ε-periodic array of grains.
#[derive(Debug, Clone)]
pub struct PerforatedDomain {
    cell: UnitCell,
    periods: usize,
    grid: Grid,
    faces: Vec<DomainFace>,
}

/// Tiles `cell` over the unit square with period `epsilon = 1/ℓ`.
pub fn tile_domain(cell: &UnitCell, epsilon: f64) -> Result<PerforatedDomain> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::param("epsilon", format!("must lie in (0, 1], got {epsilon}")));
    }
    let periods = (1.0 / epsilon).round();
    if (periods * epsilon - 1.0).abs() > 1e-9 {
        return Err(Error::param("epsilon", format!("1/epsilon must be an integer, got 1/{}", 1.0 / epsilon)));
    }
    let periods = periods as usize;
    let r = cell.resolution;
    let n = periods * r;
    if n > MAX_GRID_SIDE {
        return Err(Error::param("epsilon", format!("grid side {n} exceeds the budget {MAX_GRID_SIDE}")));
    }
    let mask: Vec<bool> = (0..n * n).map(|k| cell.pore_mask[((k / n) % r) * r + (k % n) % r]).collect();
    let grid = Grid::new(n, mask);
    let eps = 1.0 / periods as f64;

    let mut faces = Vec::with_capacity(cell.faces.len() * periods * periods);
    for by in 0..periods {
        for bx in 0..periods {
            for f in &cell.faces {
                let (i, j) = (bx * r + f.cell.0, by * r + f.cell.1);
                let pore = grid.pore_at(i, j).expect("face owner is a pore cell");
                faces.push(DomainFace { pore, side: f.side, class: f.class, length: f.weight * eps });
            }
        }
    }
    Ok(PerforatedDomain { cell: cell.clone(), periods, grid, faces })
}

impl PerforatedDomain {
    pub fn cell(&self) -> &UnitCell {
        &self.cell
    }

    pub fn epsilon(&self) -> f64 {
        1.0 / self.periods as f64
    }

    /// ℓ = 1/ε.
    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn faces(&self) -> &[DomainFace] {
        &self.faces
    }

    /// Index into the unit-cell grid of the cell that pore cell `p` samples.
    pub fn cell_index(&self, p: usize) -> usize {
        let (i, j) = self.grid.ij(p);
        let r = self.cell.resolution;
        (j % r) * r + i % r
    }

    pub fn pore_area(&self) -> f64 {
        let h = self.grid.spacing();
        self.grid.len() as f64 * h * h
    }

    /// |Γ^ε|.
    pub fn boundary_length(&self) -> f64 {
        self.faces.iter().fold(0.0, |acc, f| acc + f.length)
    }

    pub fn grain_count(&self) -> usize {
        if matches!(self.cell.shape, GrainShape::None) {
            0
        } else {
            self.periods * self.periods
        }
    }
}

/// 0/1 mask as CSV, one grid row per line, top row first.
pub fn mask_csv(n: usize, mask: &[bool]) -> String {
    let mut s = String::with_capacity(2 * n * n);
    for j in (0..n).rev() {
        let row: Vec<&str> = (0..n).map(|i| if mask[j * n + i] { "1" } else { "0" }).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Plain (ASCII) PGM image of the mask: pore white, grain black.
pub fn mask_pgm(n: usize, mask: &[bool]) -> String {
    let mut s = format!("P2\n{n} {n}\n255\n");
    for j in (0..n).rev() {
        for i in 0..n {
            let _ = write!(s, "{}{}", if mask[j * n + i] { 255 } else { 0 }, if i + 1 == n { '\n' } else { ' ' });
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(r: f64) -> GrainShape {
        GrainShape::disc([0.5, 0.5], r)
    }

    #[test]
    fn empty_cell_is_all_pore() {
        let cell = build_unit_cell(GrainShape::None, 64, 1.0).unwrap();
        assert_eq!(cell.measures().pore_area, 1.0);
        assert_eq!(cell.measures().perimeter, 0.0);
        assert!(cell.faces().is_empty());
    }

    #[test]
    fn disc_area_matches_analytic() {
        let cell = build_unit_cell(disc(0.25), 256, 1.0).unwrap();
        let exact = 1.0 - PI * 0.0625;
        let m = cell.measures();
        assert!((m.pore_area - exact).abs() / exact < 0.01, "{}", m.pore_area);
        assert!((m.pore_area + m.grain_area - 1.0).abs() < 1e-15);
    }

    #[test]
    fn disc_perimeter_corrects_staircase() {
        let cell = build_unit_cell(disc(0.25), 256, 1.0).unwrap();
        let m = cell.measures();
        let exact = 2.0 * PI * 0.25;
        assert!((m.perimeter - exact).abs() / exact < 1e-3, "{}", m.perimeter);
        // raw staircase length approaches 4/pi times the true length
        assert!((m.staircase_perimeter / exact - 4.0 / PI).abs() < 0.02);
        let sum: f64 = cell.faces().iter().map(|f| f.weight).sum();
        assert!((sum - m.perimeter).abs() < 1e-12);
    }

    #[test]
    fn robin_sector_splits_perimeter() {
        let half = build_unit_cell(disc(0.25), 256, 0.5).unwrap().measures();
        assert!((half.robin_perimeter - half.perimeter / 2.0).abs() / (half.perimeter / 2.0) < 0.02);
        let none = build_unit_cell(disc(0.25), 64, 0.0).unwrap().measures();
        assert_eq!(none.robin_perimeter, 0.0);
        let all = build_unit_cell(disc(0.25), 64, 1.0).unwrap().measures();
        assert!((all.robin_perimeter - all.perimeter).abs() < 1e-12);
    }

    #[test]
    fn rectangle_perimeter() {
        let shape = GrainShape::Rectangle { min: [0.25, 0.375], max: [0.75, 0.625] };
        let cell = build_unit_cell(shape, 64, 1.0).unwrap();
        let m = cell.measures();
        assert!((m.pore_area - (1.0 - 0.5 * 0.25)).abs() < 1e-12);
        // marching squares cuts each corner by (2 - √2) h
        let corner_cut = 4.0 * (2.0 - 2f64.sqrt()) / 64.0;
        assert!((m.perimeter - (1.5 - corner_cut)).abs() < 1e-3, "{}", m.perimeter);
    }

    #[test]
    fn rejects_grain_touching_boundary() {
        assert!(build_unit_cell(GrainShape::disc([0.3, 0.5], 0.3), 64, 1.0).is_err());
        assert!(build_unit_cell(disc(0.5), 64, 1.0).is_err());
        // continuous gap too thin for the grid
        assert!(matches!(build_unit_cell(disc(0.49), 16, 1.0), Err(Error::Geometry(_))));
        assert!(build_unit_cell(disc(0.25), 8, 1.0).is_err());
        assert!(build_unit_cell(disc(0.25), 32, 1.5).is_err());
    }

    #[test]
    fn disc_pore_space_connected() {
        for r in [0.1, 0.25, 0.4, 0.45] {
            let cell = build_unit_cell(disc(r), 64, 1.0).unwrap();
            assert_eq!(cell.pore_components(), 1);
        }
    }

    #[test]
    fn reflection_preserves_measures() {
        let cell = build_unit_cell(GrainShape::disc([0.4, 0.55], 0.2), 128, 1.0).unwrap();
        let m = cell.measures();
        let r = cell.reflected().unwrap().measures();
        assert!((m.pore_area - r.pore_area).abs() < 1e-12);
        assert!((m.perimeter - r.perimeter).abs() < 1e-12);
        assert!((m.robin_perimeter - r.robin_perimeter).abs() < 1e-12);
    }

    #[test]
    fn tiling_without_grain() {
        let cell = build_unit_cell(GrainShape::None, 16, 1.0).unwrap();
        let dom = tile_domain(&cell, 0.25).unwrap();
        assert_eq!(dom.grid().len(), 64 * 64);
        assert!(dom.faces().is_empty());
        assert_eq!(dom.grain_count(), 0);
    }

    #[test]
    fn tiling_preserves_porosity_and_scales_perimeter() {
        let cell = build_unit_cell(disc(0.25), 32, 1.0).unwrap();
        let m = cell.measures();
        let half = tile_domain(&cell, 0.5).unwrap();
        assert_eq!(half.grain_count(), 4);
        assert!((1.0 - half.pore_area() - m.grain_area).abs() < 1e-12);
        let d4 = tile_domain(&cell, 0.25).unwrap();
        let d8 = tile_domain(&cell, 0.125).unwrap();
        assert!((d4.boundary_length() - 4.0 * m.perimeter).abs() < 1e-9);
        assert!((d8.boundary_length() - 8.0 * m.perimeter).abs() < 1e-9);
        assert!((d8.pore_area() - m.pore_area).abs() < 1e-12);
    }

    #[test]
    fn tiling_is_periodic() {
        let cell = build_unit_cell(GrainShape::disc([0.4, 0.6], 0.2), 16, 1.0).unwrap();
        let dom = tile_domain(&cell, 0.25).unwrap();
        let n = dom.grid().side();
        let mask = dom.grid().mask();
        for j in 0..n {
            for i in 0..n - 16 {
                assert_eq!(mask[j * n + i], mask[j * n + i + 16]);
                assert_eq!(mask[i * n + j], mask[(i + 16) * n + j]);
            }
        }
    }

    #[test]
    fn tiling_rejects_non_integer_period() {
        let cell = build_unit_cell(disc(0.25), 16, 1.0).unwrap();
        assert!(tile_domain(&cell, 0.3).is_err());
        assert!(tile_domain(&cell, 0.0).is_err());
        assert!(tile_domain(&cell, 1.0 / 512.0).is_err());
    }

    #[test]
    fn mask_exports() {
        let mask = vec![true, false, true, true];
        assert_eq!(mask_csv(2, &mask), "1,1\n1,0\n");
        assert_eq!(mask_pgm(2, &mask), "P2\n2 2\n255\n255 255\n255 0\n");
    }
}
