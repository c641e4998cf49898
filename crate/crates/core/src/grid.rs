//! Computational grids and the discrete L² inner product.
//!
//! A [`Grid`] carries its points, an optional cell connectivity and one
//! lumped quadrature weight per point. All integrals on the grid are weighted
//! sums, so the inner product of two fields is `Σ wᵢ (aᵢ · bᵢ)` where the dot
//! contracts the components stored at point `i`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// VTK cell type codes understood by the measure computation.
pub mod cell_type {
    pub const VERTEX: u8 = 1;
    pub const POLY_VERTEX: u8 = 2;
    pub const LINE: u8 = 3;
    pub const POLY_LINE: u8 = 4;
    pub const TRIANGLE: u8 = 5;
    pub const TRIANGLE_STRIP: u8 = 6;
    pub const POLYGON: u8 = 7;
    pub const PIXEL: u8 = 8;
    pub const QUAD: u8 = 9;
    pub const TETRA: u8 = 10;
    pub const VOXEL: u8 = 11;
    pub const HEXAHEDRON: u8 = 12;
    pub const WEDGE: u8 = 13;
    pub const PYRAMID: u8 = 14;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub kind: u8,
    pub nodes: Vec<usize>,
}

impl Cell {
    pub fn new(kind: u8, nodes: Vec<usize>) -> Self {
        Self { kind, nodes }
    }

    /// Topological dimension of the cell, `None` for unsupported types.
    pub fn dimension(&self) -> Option<usize> {
        use cell_type::*;
        match self.kind {
            VERTEX | POLY_VERTEX => Some(0),
            LINE | POLY_LINE => Some(1),
            TRIANGLE | TRIANGLE_STRIP | POLYGON | PIXEL | QUAD => Some(2),
            TETRA | VOXEL | HEXAHEDRON | WEDGE | PYRAMID => Some(3),
            _ => None,
        }
    }

    /// Length, area or volume of the cell.
    pub fn measure(&self, points: &[[f64; 3]]) -> Result<f64> {
        use cell_type::*;
        let p = |k: usize| points[self.nodes[k]];
        let need = |n: usize| -> Result<()> {
            if self.nodes.len() < n {
                return Err(Error::invalid(format!(
                    "cell of type {} needs {n} nodes, has {}",
                    self.kind,
                    self.nodes.len()
                )));
            }
            Ok(())
        };
        let m = match self.kind {
            VERTEX | POLY_VERTEX => 0.0,
            LINE => {
                need(2)?;
                dist(p(0), p(1))
            }
            POLY_LINE => self.nodes.windows(2).map(|w| dist(points[w[0]], points[w[1]])).sum(),
            TRIANGLE => {
                need(3)?;
                tri_area(p(0), p(1), p(2))
            }
            TRIANGLE_STRIP => {
                need(3)?;
                self.nodes
                    .windows(3)
                    .map(|w| tri_area(points[w[0]], points[w[1]], points[w[2]]))
                    .sum()
            }
            POLYGON => {
                need(3)?;
                (1..self.nodes.len() - 1).map(|k| tri_area(p(0), p(k), p(k + 1))).sum()
            }
            PIXEL => {
                need(4)?;
                dist(p(0), p(1)) * dist(p(0), p(2))
            }
            QUAD => {
                need(4)?;
                0.5 * norm3(cross(sub(p(2), p(0)), sub(p(3), p(1))))
            }
            TETRA => {
                need(4)?;
                tet_volume(p(0), p(1), p(2), p(3)).abs()
            }
            VOXEL => {
                need(8)?;
                dist(p(0), p(1)) * dist(p(0), p(2)) * dist(p(0), p(4))
            }
            HEXAHEDRON => {
                need(8)?;
                // six tetrahedra sharing the 0-6 diagonal
                const TETS: [[usize; 4]; 6] = [
                    [0, 1, 2, 6],
                    [0, 2, 3, 6],
                    [0, 3, 7, 6],
                    [0, 7, 4, 6],
                    [0, 4, 5, 6],
                    [0, 5, 1, 6],
                ];
                TETS.iter()
                    .map(|t| tet_volume(p(t[0]), p(t[1]), p(t[2]), p(t[3])))
                    .sum::<f64>()
                    .abs()
            }
            WEDGE => {
                need(6)?;
                tet_volume(p(0), p(1), p(2), p(3)).abs()
                    + tet_volume(p(1), p(2), p(3), p(4)).abs()
                    + tet_volume(p(2), p(3), p(4), p(5)).abs()
            }
            PYRAMID => {
                need(5)?;
                tet_volume(p(0), p(1), p(2), p(4)).abs() + tet_volume(p(0), p(2), p(3), p(4)).abs()
            }
            other => return Err(Error::Unsupported(format!("VTK cell type {other}"))),
        };
        Ok(m)
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Extent {
    pub const UNIT: Extent = Extent {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    };

    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<[f64; 3]>,
    cells: Vec<Cell>,
    weights: Vec<f64>,
    gdim: usize,
}

impl Grid {
    /// Builds a grid from explicit weights. Cells may be empty.
    pub fn new(points: Vec<[f64; 3]>, cells: Vec<Cell>, weights: Vec<f64>, gdim: usize) -> Result<Self> {
        if !(1..=3).contains(&gdim) {
            return Err(Error::invalid(format!("gdim must be 1, 2 or 3, got {gdim}")));
        }
        check_len("grid weights", points.len(), weights.len())?;
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid(format!("grid weight {w} is not a nonnegative real")));
        }
        for (c, cell) in cells.iter().enumerate() {
            if let Some(&bad) = cell.nodes.iter().find(|&&i| i >= points.len()) {
                return Err(Error::invalid(format!(
                    "cell {c} references point {bad}, grid has {} points",
                    points.len()
                )));
            }
        }
        Ok(Self {
            points,
            cells,
            weights,
            gdim,
        })
    }

    /// Builds a grid whose weights come from scattering each cell's measure
    /// equally onto its vertices. Only cells of the highest topological
    /// dimension present contribute, so boundary lines in a surface mesh do
    /// not pollute the area weights.
    pub fn from_cells(points: Vec<[f64; 3]>, cells: Vec<Cell>, gdim: usize) -> Result<Self> {
        let n = points.len();
        let top = cells.iter().filter_map(Cell::dimension).max().unwrap_or(0);
        let mut weights = vec![0.0; n];
        for (c, cell) in cells.iter().enumerate() {
            if let Some(&bad) = cell.nodes.iter().find(|&&i| i >= n) {
                return Err(Error::invalid(format!("cell {c} references point {bad}, grid has {n} points")));
            }
            if cell.dimension() != Some(top) || cell.nodes.is_empty() {
                continue;
            }
            let share = cell.measure(&points)? / cell.nodes.len() as f64;
            for &i in &cell.nodes {
                weights[i] += share;
            }
        }
        Self::new(points, cells, weights, gdim)
    }

    /// Uniform lattice of `nx × ny` elements with tensor-product trapezoidal
    /// weights. Points are ordered with x varying fastest.
    pub fn image(nx: usize, ny: usize, extent: Extent) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::invalid(format!("element counts must be positive, got {nx}×{ny}")));
        }
        if !(extent.x1 > extent.x0 && extent.y1 > extent.y0) {
            return Err(Error::invalid("extent must have positive width and height"));
        }
        let hx = (extent.x1 - extent.x0) / nx as f64;
        let hy = (extent.y1 - extent.y0) / ny as f64;
        let trapezoid = |i: usize, n: usize, h: f64| if i == 0 || i == n { 0.5 * h } else { h };

        let mut points = Vec::with_capacity((nx + 1) * (ny + 1));
        let mut weights = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                points.push([extent.x0 + i as f64 * hx, extent.y0 + j as f64 * hy, 0.0]);
                weights.push(trapezoid(i, nx, hx) * trapezoid(j, ny, hy));
            }
        }
        let mut cells = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let a = j * (nx + 1) + i;
                let b = a + nx + 1;
                cells.push(Cell::new(cell_type::QUAD, vec![a, a + 1, b + 1, b]));
            }
        }
        Self::new(points, cells, weights, 2)
    }

    /// Uniform 1D grid of `n` elements on `[a, b]` with trapezoidal weights.
    pub fn line(n: usize, a: f64, b: f64) -> Result<Self> {
        if n == 0 || !(b > a) {
            return Err(Error::invalid("line grid needs n ≥ 1 and b > a"));
        }
        let h = (b - a) / n as f64;
        let points = (0..=n).map(|i| [a + i as f64 * h, 0.0, 0.0]).collect();
        let weights = (0..=n).map(|i| if i == 0 || i == n { 0.5 * h } else { h }).collect();
        let cells = (0..n).map(|i| Cell::new(cell_type::LINE, vec![i, i + 1])).collect();
        Self::new(points, cells, weights, 1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn gdim(&self) -> usize {
        self.gdim
    }

    /// Domain measure `Σ wᵢ`.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        check_len("grid weights", self.points.len(), weights.len())?;
        self.weights = weights;
        Self::new(self.points, self.cells, self.weights, self.gdim)
    }

    /// Number of components a field with `dofs` entries carries on this grid.
    pub fn components(&self, dofs: usize) -> Result<usize> {
        let n = self.len();
        if n == 0 || dofs == 0 || !dofs.is_multiple_of(n) {
            return Err(Error::DimensionMismatch {
                what: "field dofs (must be a multiple of the grid size)",
                expected: n,
                found: dofs,
            });
        }
        Ok(dofs / n)
    }

    /// Quadrature weight of every dof: point weights repeated per component.
    pub fn dof_weights(&self, components: usize) -> Vec<f64> {
        self.weights
            .iter()
            .flat_map(|&w| std::iter::repeat_n(w, components))
            .collect()
    }

    /// Discrete L² inner product.
    pub fn inner_product(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_len("inner product operands", a.len(), b.len())?;
        let comps = self.components(a.len())?;
        Ok(weighted_dot(&self.weights, comps, a, b))
    }

    pub fn norm(&self, a: &[f64]) -> Result<f64> {
        Ok(self.inner_product(a, a)?.max(0.0).sqrt())
    }

    /// Smallest distance between two distinct points connected by a cell edge
    /// (or between any two points when there are no cells).
    pub fn min_spacing(&self) -> f64 {
        let mut h = f64::INFINITY;
        if self.cells.is_empty() {
            for i in 0..self.len() {
                for j in i + 1..self.len() {
                    h = h.min(dist(self.points[i], self.points[j]));
                }
            }
        } else {
            for cell in &self.cells {
                let k = cell.nodes.len();
                for a in 0..k {
                    let d = dist(self.points[cell.nodes[a]], self.points[cell.nodes[(a + 1) % k]]);
                    if d > 0.0 {
                        h = h.min(d);
                    }
                }
            }
        }
        h
    }

    /// Index of the grid point closest to `x` (lowest index on ties).
    pub fn nearest_point(&self, x: [f64; 3]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, p) in self.points.iter().enumerate() {
            let d = dist2(*p, x);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

pub(crate) fn weighted_dot(weights: &[f64], comps: usize, a: &[f64], b: &[f64]) -> f64 {
    weights
        .iter()
        .zip(a.chunks_exact(comps).zip(b.chunks_exact(comps)))
        .map(|(w, (ai, bi))| w * ai.iter().zip(bi).map(|(x, y)| x * y).sum::<f64>())
        .sum()
}

pub(crate) fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    dist2(a, b).sqrt()
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

fn tri_area(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    0.5 * norm3(cross(sub(b, a), sub(c, a)))
}

fn tet_volume(a: [f64; 3], b: [f64; 3], c: [f64; 3], d: [f64; 3]) -> f64 {
    dot3(sub(b, a), cross(sub(c, a), sub(d, a))) / 6.0
}
