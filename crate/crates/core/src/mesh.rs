//! Nested quadrilateral mesh hierarchies.
//!
//! Two geometries are supported: the axis-aligned square background domain
//! `[-a, a]^2`, stored as a structured grid, and the immersed disk, built from
//! a five-cell coarse layout and refined uniformly with radial projection of
//! new boundary vertices.
//!
//! Levels are numbered from 1 (coarsest). Cell vertices are stored
//! counterclockwise and correspond to the reference corners
//! `(0,0), (1,0), (1,1), (0,1)`.

use std::collections::HashMap;
use std::io::Write;

use crate::elements::gauss_rule;
use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Reference coordinates of the four cell corners, in local vertex order.
pub const REFERENCE_CORNERS: [Point; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainKind {
    Square { half_width: f64 },
    Disk { radius: f64 },
}

/// Position of a child cell inside its parent.
///
/// `quadrant = [a, b]` means the child occupies `[a/2, (a+1)/2] x [b/2, (b+1)/2]`
/// of the parent reference square, with the same orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParentLink {
    pub cell: usize,
    pub quadrant: [u8; 2],
}

impl ParentLink {
    /// Maps a point of the child reference square into the parent reference square.
    pub fn to_parent(&self, child_ref: Point) -> Point {
        [
            0.5 * (f64::from(self.quadrant[0]) + child_ref[0]),
            0.5 * (f64::from(self.quadrant[1]) + child_ref[1]),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct MeshLevel {
    pub vertices: Vec<Point>,
    pub cells: Vec<[usize; 4]>,
    pub boundary_vertex: Vec<bool>,
    /// Parent of every cell on the next coarser level; empty on the coarsest level.
    pub parents: Vec<ParentLink>,
}

impl MeshLevel {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_map(&self, cell: usize) -> BilinearMap {
        let c = self.cells[cell];
        BilinearMap {
            corners: [
                self.vertices[c[0]],
                self.vertices[c[1]],
                self.vertices[c[2]],
                self.vertices[c[3]],
            ],
        }
    }

    /// Sum of Jacobian-weighted quadrature weights over all cells.
    pub fn area(&self) -> f64 {
        let rule = gauss_rule(2).expect("order 2 is supported");
        (0..self.n_cells())
            .map(|c| {
                let map = self.cell_map(c);
                rule.iter().map(|(p, w)| w * map.det(p)).sum::<f64>()
            })
            .sum()
    }

    /// Edges as sorted vertex pairs with the number of cells sharing them.
    pub fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut edges = HashMap::new();
        for cell in &self.cells {
            for k in 0..4 {
                let (a, b) = (cell[k], cell[(k + 1) % 4]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// Boundary edges oriented as they appear in their (unique) cell.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let counts = self.edge_counts();
        let mut out = Vec::new();
        for cell in &self.cells {
            for k in 0..4 {
                let (a, b) = (cell[k], cell[(k + 1) % 4]);
                if counts[&(a.min(b), a.max(b))] == 1 {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Plain-text listing: one `x y` line per vertex, then one `v0 v1 v2 v3` line per cell.
    pub fn write_listing<W: Write>(&self, mut out: W) -> Result<()> {
        for v in &self.vertices {
            writeln!(out, "{} {}", v[0], v[1])?;
        }
        for c in &self.cells {
            writeln!(out, "{} {} {} {}", c[0], c[1], c[2], c[3])?;
        }
        Ok(())
    }
}

/// Bilinear map from the reference square onto a quadrilateral cell.
#[derive(Debug, Clone, Copy)]
pub struct BilinearMap {
    pub corners: [Point; 4],
}

impl BilinearMap {
    pub fn map(&self, r: &Point) -> Point {
        let (s, t) = (r[0], r[1]);
        let w = [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t];
        let mut p = [0.0; 2];
        for (wk, c) in w.iter().zip(&self.corners) {
            p[0] += wk * c[0];
            p[1] += wk * c[1];
        }
        p
    }

    /// `J[i][j] = d x_i / d r_j`.
    pub fn jacobian(&self, r: &Point) -> [[f64; 2]; 2] {
        let (s, t) = (r[0], r[1]);
        let ds = [-(1.0 - t), 1.0 - t, t, -t];
        let dt = [-(1.0 - s), -s, s, 1.0 - s];
        let mut j = [[0.0; 2]; 2];
        for k in 0..4 {
            for i in 0..2 {
                j[i][0] += ds[k] * self.corners[k][i];
                j[i][1] += dt[k] * self.corners[k][i];
            }
        }
        j
    }

    pub fn det(&self, r: &Point) -> f64 {
        let j = self.jacobian(r);
        j[0][0] * j[1][1] - j[0][1] * j[1][0]
    }

    /// Pushes a reference gradient to physical space: `J^{-T} g`.
    pub fn physical_gradient(&self, r: &Point, g: [f64; 2]) -> [f64; 2] {
        let j = self.jacobian(r);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        [
            (j[1][1] * g[0] - j[1][0] * g[1]) / det,
            (-j[0][1] * g[0] + j[0][0] * g[1]) / det,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    levels: Vec<MeshLevel>,
    domain: DomainKind,
}

impl MeshHierarchy {
    pub fn domain(&self) -> DomainKind {
        self.domain
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// Level `level` (1-based). Panics if the level does not exist.
    pub fn level(&self, level: usize) -> &MeshLevel {
        assert!(
            level >= 1 && level <= self.levels.len(),
            "mesh level {level} out of range 1..={}",
            self.levels.len()
        );
        &self.levels[level - 1]
    }

    pub fn levels(&self) -> &[MeshLevel] {
        &self.levels
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level == 0 || level > self.levels.len() {
            return Err(Error::InvalidArgument(format!(
                "level {level} not in 1..={}",
                self.levels.len()
            )));
        }
        Ok(())
    }

    /// Cells per side of a square level.
    pub fn cells_per_side(level: usize) -> usize {
        1 << (level - 1)
    }

    /// Cell containing `p` on a square level, with reference coordinates.
    ///
    /// Points on shared edges go to the cell with the smaller index.
    pub fn locate_point(&self, level: usize, p: Point) -> Result<(usize, Point)> {
        self.check_level(level)?;
        let DomainKind::Square { half_width } = self.domain else {
            return Err(Error::InvalidArgument(
                "point location requires a square hierarchy".into(),
            ));
        };
        let n = Self::cells_per_side(level);
        let h = 2.0 * half_width / n as f64;
        let snap = 1e-12 * n as f64;
        let axis = |x: f64| -> Option<(usize, f64)> {
            let mut t = (x + half_width) / h;
            let r = t.round();
            if (t - r).abs() < snap {
                t = r;
            }
            if !(0.0..=n as f64).contains(&t) {
                return None;
            }
            let i = (t.ceil() as usize).saturating_sub(1).min(n - 1);
            Some((i, t - i as f64))
        };
        match (axis(p[0]), axis(p[1])) {
            (Some((i, s)), Some((j, t))) => Ok((j * n + i, [s, t])),
            _ => Err(Error::OutOfDomain { x: p[0], y: p[1] }),
        }
    }
}

pub fn build_square_hierarchy(half_width: f64, n_levels: usize) -> Result<MeshHierarchy> {
    if n_levels == 0 {
        return Err(Error::InvalidArgument("n_levels must be at least 1".into()));
    }
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "half_width must be positive, got {half_width}"
        )));
    }
    let levels = (1..=n_levels)
        .map(|level| square_level(half_width, level))
        .collect();
    Ok(MeshHierarchy {
        levels,
        domain: DomainKind::Square { half_width },
    })
}

fn square_level(half_width: f64, level: usize) -> MeshLevel {
    let n = MeshHierarchy::cells_per_side(level);
    // (2a*i)/n keeps coarse coordinates bit-identical on finer levels.
    let coord = |i: usize| -half_width + (2.0 * half_width * i as f64) / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    let mut boundary_vertex = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([coord(i), coord(j)]);
            boundary_vertex.push(i == 0 || j == 0 || i == n || j == n);
        }
    }
    let vid = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::with_capacity(n * n);
    let mut parents = Vec::new();
    for j in 0..n {
        for i in 0..n {
            cells.push([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]);
            if level > 1 {
                parents.push(ParentLink {
                    cell: (j / 2) * (n / 2) + i / 2,
                    quadrant: [(i % 2) as u8, (j % 2) as u8],
                });
            }
        }
    }
    MeshLevel {
        vertices,
        cells,
        boundary_vertex,
        parents,
    }
}

/// Ratio of the inner-square corner distance to the radius in the coarse disk layout.
pub const DISK_INNER_FRACTION: f64 = 0.7;

pub fn build_disk_hierarchy(radius: f64, n_levels: usize) -> Result<MeshHierarchy> {
    if n_levels == 0 {
        return Err(Error::InvalidArgument("n_levels must be at least 1".into()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "radius must be positive, got {radius}"
        )));
    }
    let outer = radius * std::f64::consts::FRAC_1_SQRT_2;
    let inner = DISK_INNER_FRACTION * outer;
    let vertices = vec![
        [-inner, -inner],
        [inner, -inner],
        [inner, inner],
        [-inner, inner],
        [-outer, -outer],
        [outer, -outer],
        [outer, outer],
        [-outer, outer],
    ];
    let cells = vec![
        [0, 1, 2, 3],
        [4, 5, 1, 0],
        [1, 5, 6, 2],
        [3, 2, 6, 7],
        [4, 0, 3, 7],
    ];
    let boundary_vertex = (0..8).map(|v| v >= 4).collect();
    let mut levels = vec![MeshLevel {
        vertices,
        cells,
        boundary_vertex,
        parents: Vec::new(),
    }];
    while levels.len() < n_levels {
        let next = refine_disk_level(levels.last().unwrap(), radius);
        levels.push(next);
    }
    Ok(MeshHierarchy {
        levels,
        domain: DomainKind::Disk { radius },
    })
}

fn refine_disk_level(coarse: &MeshLevel, radius: f64) -> MeshLevel {
    let edge_counts = coarse.edge_counts();
    let mut vertices = coarse.vertices.clone();
    let mut boundary_vertex = coarse.boundary_vertex.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();

    let mut cells = Vec::with_capacity(4 * coarse.n_cells());
    let mut parents = Vec::with_capacity(4 * coarse.n_cells());
    for (p, cell) in coarse.cells.iter().enumerate() {
        let mut mids = [0usize; 4];
        for k in 0..4 {
            let (a, b) = (cell[k], cell[(k + 1) % 4]);
            let key = (a.min(b), a.max(b));
            mids[k] = *midpoint.entry(key).or_insert_with(|| {
                let (pa, pb) = (coarse.vertices[a], coarse.vertices[b]);
                let mut m = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
                let on_boundary = edge_counts[&key] == 1;
                if on_boundary {
                    let norm = m[0].hypot(m[1]);
                    m = [m[0] * radius / norm, m[1] * radius / norm];
                }
                vertices.push(m);
                boundary_vertex.push(on_boundary);
                vertices.len() - 1
            });
        }
        let center = coarse.cell_map(p).map(&[0.5, 0.5]);
        vertices.push(center);
        boundary_vertex.push(false);
        let c = vertices.len() - 1;
        let [v0, v1, v2, v3] = *cell;
        let [m01, m12, m23, m30] = mids;
        let children = [
            ([v0, m01, c, m30], [0, 0]),
            ([m01, v1, m12, c], [1, 0]),
            ([c, m12, v2, m23], [1, 1]),
            ([m30, c, m23, v3], [0, 1]),
        ];
        for (child, quadrant) in children {
            cells.push(child);
            parents.push(ParentLink { cell: p, quadrant });
        }
    }
    MeshLevel {
        vertices,
        cells,
        boundary_vertex,
        parents,
    }
}
