//! Reference elements, Gauss rules and DoF enumeration.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{MeshHierarchy, MeshLevel, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    /// Continuous bilinear.
    Q1,
    /// Continuous bilinear enriched with one biquadratic cell bubble.
    Q1PlusBubble,
    /// Piecewise constant.
    P0,
}

impl ElementKind {
    pub fn n_local_dofs(self) -> usize {
        match self {
            ElementKind::Q1 => 4,
            ElementKind::Q1PlusBubble => 5,
            ElementKind::P0 => 1,
        }
    }

    pub fn has_bubble(self) -> bool {
        self == ElementKind::Q1PlusBubble
    }

    fn check(self, local_dof: usize) -> Result<()> {
        if local_dof >= self.n_local_dofs() {
            return Err(Error::InvalidArgument(format!(
                "local dof {local_dof} out of range for {self:?}"
            )));
        }
        Ok(())
    }
}

/// Bubble `16 s(1-s) t(1-t)`, equal to 1 at the cell center.
pub fn bubble(r: &Point) -> f64 {
    16.0 * r[0] * (1.0 - r[0]) * r[1] * (1.0 - r[1])
}

fn q1_value(k: usize, r: &Point) -> f64 {
    let (s, t) = (r[0], r[1]);
    match k {
        0 => (1.0 - s) * (1.0 - t),
        1 => s * (1.0 - t),
        2 => s * t,
        _ => (1.0 - s) * t,
    }
}

fn q1_gradient(k: usize, r: &Point) -> [f64; 2] {
    let (s, t) = (r[0], r[1]);
    match k {
        0 => [-(1.0 - t), -(1.0 - s)],
        1 => [1.0 - t, -s],
        2 => [t, s],
        _ => [-t, 1.0 - s],
    }
}

pub fn shape_value(element: ElementKind, local_dof: usize, r: &Point) -> Result<f64> {
    element.check(local_dof)?;
    Ok(match (element, local_dof) {
        (ElementKind::P0, _) => 1.0,
        (ElementKind::Q1PlusBubble, 4) => bubble(r),
        (_, k) => q1_value(k, r),
    })
}

pub fn shape_gradient(element: ElementKind, local_dof: usize, r: &Point) -> Result<[f64; 2]> {
    element.check(local_dof)?;
    Ok(match (element, local_dof) {
        (ElementKind::P0, _) => [0.0, 0.0],
        (ElementKind::Q1PlusBubble, 4) => {
            let (s, t) = (r[0], r[1]);
            [
                16.0 * (1.0 - 2.0 * s) * t * (1.0 - t),
                16.0 * s * (1.0 - s) * (1.0 - 2.0 * t),
            ]
        }
        (_, k) => q1_gradient(k, r),
    })
}

/// All local shape values at one reference point.
pub(crate) fn shape_values(element: ElementKind, r: &Point) -> Vec<f64> {
    (0..element.n_local_dofs())
        .map(|k| shape_value(element, k, r).expect("local dof in range"))
        .collect()
}

pub(crate) fn shape_gradients(element: ElementKind, r: &Point) -> Vec<[f64; 2]> {
    (0..element.n_local_dofs())
        .map(|k| shape_gradient(element, k, r).expect("local dof in range"))
        .collect()
}

/// Tensor-product quadrature on the reference square `[0,1]^2`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn iter(&self) -> impl Iterator<Item = (&Point, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre_1d(order: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let (x, w): (&[f64], &[f64]) = match order {
        1 => (&[0.0], &[2.0]),
        2 => (
            &[-0.577_350_269_189_625_8, 0.577_350_269_189_625_8],
            &[1.0, 1.0],
        ),
        3 => (
            &[-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4],
            &[5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0],
        ),
        4 => (
            &[
                -0.861_136_311_594_052_6,
                -0.339_981_043_584_856_3,
                0.339_981_043_584_856_3,
                0.861_136_311_594_052_6,
            ],
            &[
                0.347_854_845_137_453_9,
                0.652_145_154_862_546_1,
                0.652_145_154_862_546_1,
                0.347_854_845_137_453_9,
            ],
        ),
        5 => (
            &[
                -0.906_179_845_938_664,
                -0.538_469_310_105_683,
                0.0,
                0.538_469_310_105_683,
                0.906_179_845_938_664,
            ],
            &[
                0.236_926_885_056_189_1,
                0.478_628_670_499_366_5,
                0.568_888_888_888_888_9,
                0.478_628_670_499_366_5,
                0.236_926_885_056_189_1,
            ],
        ),
        _ => return None,
    };
    Some((x.to_vec(), w.to_vec()))
}

/// `order`-point tensor Gauss-Legendre rule on the unit square, `order` in 1..=5.
pub fn gauss_rule(order: usize) -> Result<QuadratureRule> {
    let (x, w) = gauss_legendre_1d(order).ok_or_else(|| {
        Error::InvalidArgument(format!("Gauss rule order {order} not in 1..=5"))
    })?;
    let mut points = Vec::with_capacity(order * order);
    let mut weights = Vec::with_capacity(order * order);
    for j in 0..order {
        for i in 0..order {
            points.push([0.5 * (x[i] + 1.0), 0.5 * (x[j] + 1.0)]);
            weights.push(0.25 * w[i] * w[j]);
        }
    }
    Ok(QuadratureRule { points, weights })
}

/// Which vertex DoFs are constrained (homogeneous Dirichlet).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryRule {
    /// No constrained DoFs.
    Free,
    /// Vertex DoFs on the mesh boundary are constrained.
    MeshBoundary,
}

/// A finite element space on one level of a mesh hierarchy.
#[derive(Debug, Clone)]
pub struct FeSpace {
    element: ElementKind,
    mesh: Arc<MeshHierarchy>,
    level: usize,
    dof_map: Vec<usize>,
    n_dofs: usize,
    boundary_dofs: Vec<usize>,
}

impl FeSpace {
    pub fn element(&self) -> ElementKind {
        self.element
    }

    pub fn mesh(&self) -> &Arc<MeshHierarchy> {
        &self.mesh
    }

    pub fn level_index(&self) -> usize {
        self.level
    }

    pub fn level(&self) -> &MeshLevel {
        self.mesh.level(self.level)
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    /// Global DoFs of `cell` in local order.
    pub fn cell_dofs(&self, cell: usize) -> &[usize] {
        let k = self.element.n_local_dofs();
        &self.dof_map[cell * k..(cell + 1) * k]
    }

    /// Sorted constrained DoFs.
    pub fn boundary_dofs(&self) -> &[usize] {
        &self.boundary_dofs
    }

    /// Number of vertex-attached DoFs (zero for P0).
    pub fn n_vertex_dofs(&self) -> usize {
        match self.element {
            ElementKind::P0 => 0,
            _ => self.level().n_vertices(),
        }
    }
}

/// Numbers vertex DoFs first (in vertex order), then bubble DoFs (in cell
/// order); P0 numbers cells directly.
pub fn enumerate_dofs(
    mesh: Arc<MeshHierarchy>,
    level: usize,
    element: ElementKind,
    rule: BoundaryRule,
) -> FeSpace {
    let lvl = mesh.level(level);
    let (nv, nc) = (lvl.n_vertices(), lvl.n_cells());
    let k = element.n_local_dofs();
    let mut dof_map = Vec::with_capacity(nc * k);
    for (c, cell) in lvl.cells.iter().enumerate() {
        match element {
            ElementKind::P0 => dof_map.push(c),
            ElementKind::Q1 => dof_map.extend_from_slice(cell),
            ElementKind::Q1PlusBubble => {
                dof_map.extend_from_slice(cell);
                dof_map.push(nv + c);
            }
        }
    }
    let n_dofs = match element {
        ElementKind::P0 => nc,
        ElementKind::Q1 => nv,
        ElementKind::Q1PlusBubble => nv + nc,
    };
    let boundary_dofs = match (rule, element) {
        (BoundaryRule::MeshBoundary, ElementKind::Q1 | ElementKind::Q1PlusBubble) => (0..nv)
            .filter(|&v| lvl.boundary_vertex[v])
            .collect(),
        _ => Vec::new(),
    };
    FeSpace {
        element,
        mesh,
        level,
        dof_map,
        n_dofs,
        boundary_dofs,
    }
}
