//! Assembly of the fictitious-domain saddle-point system
//!
//! ```text
//! [ A1   0    C1^T ] [u  ]   [F1]
//! [ 0    A2  -C2^T ] [u2 ] = [F2]
//! [ C1  -C2   0    ] [lam]   [0 ]
//! ```
//!
//! with `A1 = (beta grad u, grad v)` on the square, `A2 = ((beta2 - beta)
//! grad u2, grad v2)` on the disk and `C1`, `C2` the L2 or H1 coupling between
//! the multiplier and the background / immersed fields.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::elements::{
    enumerate_dofs, gauss_rule, shape_gradients, shape_values, BoundaryRule, ElementKind, FeSpace,
};
use crate::error::{Error, Result};
use crate::linalg::csr::CsrMatrix;
use crate::mesh::{build_disk_hierarchy, build_square_hierarchy, MeshHierarchy};

/// Quadrature order used for the unfitted coupling block.
pub const C1_QUADRATURE_ORDER: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CouplingMode {
    /// Multiplier paired through the L2 product.
    L2,
    /// Multiplier paired through the full H1 product (mass + stiffness).
    H1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElementChoice {
    /// Q1 / Q1 / Q1.
    Element1,
    /// Q1 / Q1 + bubble / P0.
    Element2,
}

impl ElementChoice {
    pub fn v2_element(self) -> ElementKind {
        match self {
            Self::Element1 => ElementKind::Q1,
            Self::Element2 => ElementKind::Q1PlusBubble,
        }
    }

    pub fn lambda_element(self) -> ElementKind {
        match self {
            Self::Element1 => ElementKind::Q1,
            Self::Element2 => ElementKind::P0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub beta: f64,
    pub beta2: f64,
    pub f: f64,
    pub f2: f64,
    pub coupling: CouplingMode,
    pub element_choice: ElementChoice,
    /// Accept `beta2 <= beta` with a warning instead of an error.
    pub allow_relaxed_beta: bool,
    pub square_half_width: f64,
    pub disk_radius: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            beta2: 10.0,
            f: 1.0,
            f2: 1.0,
            coupling: CouplingMode::L2,
            element_choice: ElementChoice::Element1,
            allow_relaxed_beta: false,
            square_half_width: 1.4,
            disk_radius: 1.0,
        }
    }
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta", self.beta),
            ("beta2", self.beta2),
            ("f", self.f),
            ("f2", self.f2),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite")));
            }
        }
        if self.beta <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if self.beta2 <= self.beta {
            if self.allow_relaxed_beta {
                log::warn!(
                    "beta2 = {} <= beta = {}: the discrete problem may be ill-posed",
                    self.beta2,
                    self.beta
                );
            } else {
                return Err(Error::InvalidArgument(format!(
                    "beta2 = {} must exceed beta = {} (set allow_relaxed_beta to override)",
                    self.beta2, self.beta
                )));
            }
        }
        if !(self.disk_radius > 0.0 && self.disk_radius < self.square_half_width) {
            return Err(Error::InvalidArgument(format!(
                "disk of radius {} must lie strictly inside the square of half width {}",
                self.disk_radius, self.square_half_width
            )));
        }
        check_pairing(self.element_choice.lambda_element(), self.coupling)
    }
}

fn check_pairing(lambda: ElementKind, mode: CouplingMode) -> Result<()> {
    if lambda == ElementKind::P0 && mode == CouplingMode::H1 {
        return Err(Error::UnsupportedPairing(
            "H1 coupling needs a continuous multiplier space, P0 is not in H1".into(),
        ));
    }
    Ok(())
}

/// The three discrete spaces: background V, immersed V2 and multiplier space.
#[derive(Debug, Clone)]
pub struct Spaces {
    pub v: FeSpace,
    pub v2: FeSpace,
    pub lambda: FeSpace,
}

impl Spaces {
    pub fn new(
        config: &ProblemConfig,
        square: Arc<MeshHierarchy>,
        background_level: usize,
        disk: Arc<MeshHierarchy>,
        disk_level: usize,
    ) -> Self {
        let ec = config.element_choice;
        Self {
            v: enumerate_dofs(square, background_level, ElementKind::Q1, BoundaryRule::MeshBoundary),
            v2: enumerate_dofs(disk.clone(), disk_level, ec.v2_element(), BoundaryRule::Free),
            lambda: enumerate_dofs(disk, disk_level, ec.lambda_element(), BoundaryRule::Free),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub a1: CsrMatrix,
    pub a2: CsrMatrix,
    pub c1: CsrMatrix,
    pub c2: CsrMatrix,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub coupling: CouplingMode,
    pub spaces: Spaces,
    pub config: ProblemConfig,
}

impl BlockSystem {
    pub fn n_v(&self) -> usize {
        self.a1.n_rows()
    }

    pub fn n_v2(&self) -> usize {
        self.a2.n_rows()
    }

    pub fn n_lambda(&self) -> usize {
        self.c2.n_rows()
    }

    pub fn n_total(&self) -> usize {
        self.n_v() + self.n_v2() + self.n_lambda()
    }

    /// Start offsets of the u, u2 and lambda blocks in the full vector.
    pub fn offsets(&self) -> [usize; 3] {
        [0, self.n_v(), self.n_v() + self.n_v2()]
    }

    pub fn full_matrix(&self) -> CsrMatrix {
        let c1t = self.c1.transpose();
        let c2t = self.c2.transpose();
        CsrMatrix::from_blocks(
            &[self.n_v(), self.n_v2(), self.n_lambda()],
            &[self.n_v(), self.n_v2(), self.n_lambda()],
            &[
                &[Some((&self.a1, 1.0)), None, Some((&c1t, 1.0))],
                &[None, Some((&self.a2, 1.0)), Some((&c2t, -1.0))],
                &[Some((&self.c1, 1.0)), Some((&self.c2, -1.0)), None],
            ],
        )
        .expect("block sizes are consistent by construction")
    }

    pub fn full_rhs(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.n_total());
        b.extend_from_slice(&self.f1);
        b.extend_from_slice(&self.f2);
        b.extend(std::iter::repeat_n(0.0, self.n_lambda()));
        b
    }

    /// `B = [[A2, -C2^T], [-C2, 0]]`.
    pub fn b_matrix(&self) -> CsrMatrix {
        b_matrix(&self.a2, &self.c2)
    }

    /// Splits a full vector into `(u, u2, lambda)`.
    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let [_, o2, o3] = self.offsets();
        (&x[..o2], &x[o2..o3], &x[o3..])
    }
}

pub fn b_matrix(a2: &CsrMatrix, c2: &CsrMatrix) -> CsrMatrix {
    let c2t = c2.transpose();
    CsrMatrix::from_blocks(
        &[a2.n_rows(), c2.n_rows()],
        &[a2.n_cols(), c2.n_rows()],
        &[&[Some((a2, 1.0)), Some((&c2t, -1.0))], &[Some((c2, -1.0)), None]],
    )
    .expect("block sizes are consistent by construction")
}

fn default_order(a: ElementKind, b: ElementKind) -> usize {
    if a.has_bubble() || b.has_bubble() {
        3
    } else {
        2
    }
}

/// `mass * (phi_j, psi_i) + stiff * (grad phi_j, grad psi_i)` for two spaces
/// on the same mesh level; rows follow `test`, columns follow `trial`.
pub fn assemble_bilinear(
    test: &FeSpace,
    trial: &FeSpace,
    mass: f64,
    stiff: f64,
) -> Result<CsrMatrix> {
    if !Arc::ptr_eq(test.mesh(), trial.mesh()) || test.level_index() != trial.level_index() {
        return Err(Error::InvalidArgument(
            "test and trial spaces must live on the same mesh level".into(),
        ));
    }
    let order = default_order(test.element(), trial.element());
    let rule = gauss_rule(order)?;
    let level = test.level();
    let (et, es) = (test.element(), trial.element());
    let (kt, ks) = (et.n_local_dofs(), es.n_local_dofs());
    let mut triplets = Vec::with_capacity(level.n_cells() * kt * ks);
    let mut local = vec![0.0; kt * ks];
    for c in 0..level.n_cells() {
        let map = level.cell_map(c);
        local.fill(0.0);
        for (r, w) in rule.iter() {
            let jw = w * map.det(r);
            if mass != 0.0 {
                let vt = shape_values(et, r);
                let vs = shape_values(es, r);
                for a in 0..kt {
                    for b in 0..ks {
                        local[a * ks + b] += mass * jw * vt[a] * vs[b];
                    }
                }
            }
            if stiff != 0.0 {
                let gt: Vec<[f64; 2]> = shape_gradients(et, r)
                    .into_iter()
                    .map(|g| map.physical_gradient(r, g))
                    .collect();
                let gs: Vec<[f64; 2]> = shape_gradients(es, r)
                    .into_iter()
                    .map(|g| map.physical_gradient(r, g))
                    .collect();
                for a in 0..kt {
                    for b in 0..ks {
                        local[a * ks + b] +=
                            stiff * jw * (gt[a][0] * gs[b][0] + gt[a][1] * gs[b][1]);
                    }
                }
            }
        }
        let (dt, ds) = (test.cell_dofs(c), trial.cell_dofs(c));
        for a in 0..kt {
            for b in 0..ks {
                triplets.push((dt[a], ds[b], local[a * ks + b]));
            }
        }
    }
    CsrMatrix::from_triplets(test.n_dofs(), trial.n_dofs(), triplets)
}

/// Galerkin stiffness matrix `coefficient * (grad phi_j, grad phi_i)`.
pub fn assemble_stiffness(space: &FeSpace, coefficient: f64) -> Result<CsrMatrix> {
    if !coefficient.is_finite() {
        return Err(Error::InvalidArgument("coefficient must be finite".into()));
    }
    assemble_bilinear(space, space, 0.0, coefficient)
}

pub fn assemble_mass(space: &FeSpace) -> Result<CsrMatrix> {
    assemble_bilinear(space, space, 1.0, 0.0)
}

/// Symmetric elimination of homogeneous Dirichlet DoFs.
pub fn apply_dirichlet(
    matrix: &CsrMatrix,
    rhs: &[f64],
    boundary_dofs: &[usize],
) -> Result<(CsrMatrix, Vec<f64>)> {
    let zeros = vec![0.0; boundary_dofs.len()];
    apply_dirichlet_with_values(matrix, rhs, boundary_dofs, &zeros)
}

/// Symmetric elimination with prescribed boundary values: boundary rows and
/// columns become identity, column contributions move to the right-hand side.
pub fn apply_dirichlet_with_values(
    matrix: &CsrMatrix,
    rhs: &[f64],
    boundary_dofs: &[usize],
    values: &[f64],
) -> Result<(CsrMatrix, Vec<f64>)> {
    let n = matrix.n_rows();
    if matrix.n_cols() != n || rhs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rhs.len(),
        });
    }
    if values.len() != boundary_dofs.len() {
        return Err(Error::DimensionMismatch {
            expected: boundary_dofs.len(),
            found: values.len(),
        });
    }
    let mut g = vec![0.0; n];
    let mut is_bd = vec![false; n];
    for (&d, &v) in boundary_dofs.iter().zip(values) {
        if d >= n {
            return Err(Error::InvalidArgument(format!("boundary dof {d} out of range")));
        }
        is_bd[d] = true;
        g[d] = v;
    }
    let mut b = rhs.to_vec();
    let mut triplets = Vec::with_capacity(matrix.nnz());
    for (i, j, v) in matrix.triplets() {
        match (is_bd[i], is_bd[j]) {
            (false, false) => triplets.push((i, j, v)),
            (false, true) => b[i] -= v * g[j],
            _ => {}
        }
    }
    for (i, bd) in is_bd.iter().enumerate() {
        if *bd {
            triplets.push((i, i, 1.0));
            b[i] = g[i];
        }
    }
    Ok((CsrMatrix::from_triplets(n, n, triplets)?, b))
}

/// Coupling between multiplier and immersed field on the same disk level.
pub fn assemble_c2(lambda_space: &FeSpace, v2_space: &FeSpace, mode: CouplingMode) -> Result<CsrMatrix> {
    check_pairing(lambda_space.element(), mode)?;
    let stiff = match mode {
        CouplingMode::L2 => 0.0,
        CouplingMode::H1 => 1.0,
    };
    assemble_bilinear(lambda_space, v2_space, 1.0, stiff)
}

/// Coupling between the multiplier and the background field restricted to
/// the immersed domain. Integration runs over the disk cells; quadrature
/// points are located in the background mesh. Returned before boundary
/// treatment.
pub fn assemble_c1(lambda_space: &FeSpace, v_space: &FeSpace, mode: CouplingMode) -> Result<CsrMatrix> {
    check_pairing(lambda_space.element(), mode)?;
    if v_space.element() != ElementKind::Q1 {
        return Err(Error::InvalidArgument("background space must be Q1".into()));
    }
    let rule = gauss_rule(C1_QUADRATURE_ORDER)?;
    let disk = lambda_space.level();
    let bg_mesh = v_space.mesh();
    let bg_level = v_space.level();
    let el = lambda_space.element();
    let kl = el.n_local_dofs();
    let mut triplets = Vec::new();
    for c in 0..disk.n_cells() {
        let map = disk.cell_map(c);
        let ldofs = lambda_space.cell_dofs(c);
        for (r, w) in rule.iter() {
            let jw = w * map.det(r);
            let x = map.map(r);
            let (bc, s) = bg_mesh.locate_point(v_space.level_index(), x)?;
            let bmap = bg_level.cell_map(bc);
            let vdofs = v_space.cell_dofs(bc);
            let lv = shape_values(el, r);
            let bv = shape_values(ElementKind::Q1, &s);
            let grads = match mode {
                CouplingMode::L2 => None,
                CouplingMode::H1 => {
                    let lg: Vec<[f64; 2]> = shape_gradients(el, r)
                        .into_iter()
                        .map(|g| map.physical_gradient(r, g))
                        .collect();
                    let bg: Vec<[f64; 2]> = shape_gradients(ElementKind::Q1, &s)
                        .into_iter()
                        .map(|g| bmap.physical_gradient(&s, g))
                        .collect();
                    Some((lg, bg))
                }
            };
            for a in 0..kl {
                for b in 0..4 {
                    let mut v = lv[a] * bv[b];
                    if let Some((lg, bg)) = &grads {
                        v += lg[a][0] * bg[b][0] + lg[a][1] * bg[b][1];
                    }
                    triplets.push((ldofs[a], vdofs[b], jw * v));
                }
            }
        }
    }
    CsrMatrix::from_triplets(lambda_space.n_dofs(), v_space.n_dofs(), triplets)
}

/// `coefficient * (1, phi_i)` over the space's mesh level.
pub fn assemble_load(space: &FeSpace, coefficient: f64) -> Result<Vec<f64>> {
    let rule = gauss_rule(default_order(space.element(), space.element()))?;
    let level = space.level();
    let el = space.element();
    let mut b = vec![0.0; space.n_dofs()];
    for c in 0..level.n_cells() {
        let map = level.cell_map(c);
        let dofs = space.cell_dofs(c);
        for (r, w) in rule.iter() {
            let jw = w * map.det(r);
            for (d, v) in dofs.iter().zip(shape_values(el, r)) {
                b[*d] += coefficient * jw * v;
            }
        }
    }
    Ok(b)
}

/// `(F1, F2)` with `F1 = (f, v)` over the square (boundary entries zeroed)
/// and `F2 = (f2 - f, v2)` over the disk.
pub fn assemble_rhs(config: &ProblemConfig, spaces: &Spaces) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut f1 = assemble_load(&spaces.v, config.f)?;
    for &d in spaces.v.boundary_dofs() {
        f1[d] = 0.0;
    }
    let f2 = assemble_load(&spaces.v2, config.f2 - config.f)?;
    Ok((f1, f2))
}

/// Dirichlet-reduced `A1` for a background space.
pub fn assemble_a1(config: &ProblemConfig, v_space: &FeSpace) -> Result<CsrMatrix> {
    let k = assemble_stiffness(v_space, config.beta)?;
    let zero = vec![0.0; k.n_rows()];
    Ok(apply_dirichlet(&k, &zero, v_space.boundary_dofs())?.0)
}

/// `(A2, C2)` on one disk level.
pub fn assemble_b_blocks(
    config: &ProblemConfig,
    v2_space: &FeSpace,
    lambda_space: &FeSpace,
) -> Result<(CsrMatrix, CsrMatrix)> {
    let a2 = assemble_stiffness(v2_space, config.beta2 - config.beta)?;
    let c2 = assemble_c2(lambda_space, v2_space, config.coupling)?;
    Ok((a2, c2))
}

/// Assembles every block on the given hierarchies.
pub fn assemble_system_on(
    config: &ProblemConfig,
    square: Arc<MeshHierarchy>,
    background_level: usize,
    disk: Arc<MeshHierarchy>,
    disk_level: usize,
) -> Result<BlockSystem> {
    config.validate()?;
    if background_level == 0 || background_level > square.n_levels() {
        return Err(Error::InvalidArgument(format!(
            "background level {background_level} not available"
        )));
    }
    if disk_level == 0 || disk_level > disk.n_levels() {
        return Err(Error::InvalidArgument(format!("disk level {disk_level} not available")));
    }
    let spaces = Spaces::new(config, square, background_level, disk, disk_level);
    let a1 = assemble_a1(config, &spaces.v)?;
    let (a2, c2) = assemble_b_blocks(config, &spaces.v2, &spaces.lambda)?;
    let mut mask = vec![false; spaces.v.n_dofs()];
    for &d in spaces.v.boundary_dofs() {
        mask[d] = true;
    }
    let c1 = assemble_c1(&spaces.lambda, &spaces.v, config.coupling)?.drop_columns(&mask);
    let (f1, f2) = assemble_rhs(config, &spaces)?;
    Ok(BlockSystem {
        a1,
        a2,
        c1,
        c2,
        f1,
        f2,
        coupling: config.coupling,
        spaces,
        config: *config,
    })
}

/// Builds fresh hierarchies and assembles on their finest levels.
pub fn assemble_system(
    config: &ProblemConfig,
    background_level: usize,
    disk_level: usize,
) -> Result<BlockSystem> {
    config.validate()?;
    let square = Arc::new(build_square_hierarchy(config.square_half_width, background_level)?);
    let disk = Arc::new(build_disk_hierarchy(config.disk_radius, disk_level)?);
    assemble_system_on(config, square, background_level, disk, disk_level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::direct::DenseLu;
    use crate::mesh::build_square_hierarchy;

    fn space(mesh: &Arc<MeshHierarchy>, level: usize, el: ElementKind, rule: BoundaryRule) -> FeSpace {
        enumerate_dofs(mesh.clone(), level, el, rule)
    }

    #[test]
    fn q1_reference_element_matrix() {
        let sq = Arc::new(build_square_hierarchy(0.5, 1).unwrap());
        let v = space(&sq, 1, ElementKind::Q1, BoundaryRule::Free);
        let k = assemble_stiffness(&v, 1.0).unwrap();
        let d = v.cell_dofs(0);
        let e = |i: usize, j: usize| k.get(d[i % 4], d[j % 4]);
        for i in 0..4 {
            assert!((e(i, i) - 2.0 / 3.0).abs() < 1e-14);
            assert!((e(i, i + 2) + 1.0 / 3.0).abs() < 1e-14);
            assert!((e(i, i + 1) + 1.0 / 6.0).abs() < 1e-14);
            assert!((e(i, i + 3) + 1.0 / 6.0).abs() < 1e-14);
        }
    }

    #[test]
    fn stiffness_rows_sum_to_zero_and_scale_linearly() {
        let sq = Arc::new(build_square_hierarchy(1.4, 3).unwrap());
        let disk = Arc::new(build_disk_hierarchy(1.0, 3).unwrap());
        let spaces = [
            space(&sq, 3, ElementKind::Q1, BoundaryRule::Free),
            space(&disk, 3, ElementKind::Q1, BoundaryRule::Free),
            space(&disk, 3, ElementKind::Q1PlusBubble, BoundaryRule::Free),
        ];
        for s in &spaces {
            let k = assemble_stiffness(s, 1.0).unwrap();
            let ones = vec![1.0; s.n_vertex_dofs()];
            let mut x = ones.clone();
            x.resize(s.n_dofs(), 0.0);
            let y = k.spmv(&x).unwrap();
            assert!(y.iter().all(|v| v.abs() < 1e-12), "{:?}", y.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            assert!(k.is_symmetric(1e-12));
            let k10 = assemble_stiffness(s, 10.0).unwrap();
            for ((_, _, a), (_, _, b)) in k.triplets().zip(k10.triplets()) {
                assert!((10.0 * a - b).abs() <= 1e-13 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn dirichlet_edge_cases() {
        let a = CsrMatrix::from_triplets(
            3,
            3,
            vec![(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (2, 2, 3.0), (1, 2, 0.5), (2, 1, 0.5)],
        )
        .unwrap();
        let b = vec![1.0, 2.0, 3.0];
        let (m, r) = apply_dirichlet(&a, &b, &[]).unwrap();
        assert_eq!(m, a);
        assert_eq!(r, b);
        let (m, r) = apply_dirichlet(&a, &b, &[0, 1, 2]).unwrap();
        assert_eq!(m, CsrMatrix::identity(3));
        assert_eq!(r, vec![0.0; 3]);
        // inhomogeneous values move into the rhs
        let (m, r) = apply_dirichlet_with_values(&a, &b, &[0], &[4.0]).unwrap();
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(r, vec![4.0, 6.0, 3.0]);
    }

    #[test]
    fn poisson_8x8_matches_dense_oracle() {
        let sq = Arc::new(build_square_hierarchy(1.0, 4).unwrap());
        let v = space(&sq, 4, ElementKind::Q1, BoundaryRule::MeshBoundary);
        let k = assemble_stiffness(&v, 1.0).unwrap();
        let f = assemble_load(&v, 1.0).unwrap();
        let (m, b) = apply_dirichlet(&k, &f, v.boundary_dofs()).unwrap();
        let x = crate::linalg::direct::lu_factor(&m).unwrap().solve(&b).unwrap();

        // oracle: solve the interior-only system independently, then embed
        let interior: Vec<usize> = (0..v.n_dofs()).filter(|d| !v.boundary_dofs().contains(d)).collect();
        let dense = k.to_dense();
        let sub: Vec<Vec<f64>> = interior
            .iter()
            .map(|&i| interior.iter().map(|&j| dense[i][j]).collect())
            .collect();
        let lu = DenseLu::factor(sub).unwrap();
        let mut y: Vec<f64> = interior.iter().map(|&i| f[i]).collect();
        lu.solve_in_place(&mut y);
        let mut full = vec![0.0; v.n_dofs()];
        for (k, &i) in interior.iter().enumerate() {
            full[i] = y[k];
        }
        for (a, b) in x.iter().zip(&full) {
            assert!((a - b).abs() < 1e-12);
        }
        // center value is positive and boundary values vanish
        assert!(x[40] > 0.0);
        assert!(v.boundary_dofs().iter().all(|&d| x[d] == 0.0));
    }

    #[test]
    fn p0_h1_pairing_rejected() {
        let disk = Arc::new(build_disk_hierarchy(1.0, 2).unwrap());
        let lam = space(&disk, 2, ElementKind::P0, BoundaryRule::Free);
        let v2 = space(&disk, 2, ElementKind::Q1PlusBubble, BoundaryRule::Free);
        assert!(matches!(
            assemble_c2(&lam, &v2, CouplingMode::H1),
            Err(Error::UnsupportedPairing(_))
        ));
        let cfg = ProblemConfig {
            element_choice: ElementChoice::Element2,
            coupling: CouplingMode::H1,
            ..Default::default()
        };
        assert!(matches!(assemble_system(&cfg, 2, 2), Err(Error::UnsupportedPairing(_))));
    }

    #[test]
    fn beta_condition_enforced_unless_relaxed() {
        let cfg = ProblemConfig {
            beta2: 0.5,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidArgument(_))));
        let relaxed = ProblemConfig {
            allow_relaxed_beta: true,
            ..cfg
        };
        assert!(relaxed.validate().is_ok());
        let bad = ProblemConfig {
            beta: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn c2_element2_rows_and_area() {
        let disk = Arc::new(build_disk_hierarchy(1.0, 3).unwrap());
        let lam = space(&disk, 3, ElementKind::P0, BoundaryRule::Free);
        let v2 = space(&disk, 3, ElementKind::Q1PlusBubble, BoundaryRule::Free);
        let c2 = assemble_c2(&lam, &v2, CouplingMode::L2).unwrap();
        let level = disk.level(3);
        assert_eq!(c2.n_rows(), level.n_cells());
        for i in 0..c2.n_rows() {
            assert_eq!(c2.row(i).0.len(), 5);
        }
        let mut x = vec![1.0; level.n_vertices()];
        x.resize(v2.n_dofs(), 0.0);
        let y = c2.spmv(&x).unwrap();
        let total: f64 = y.iter().sum();
        assert!((total - level.area()).abs() < 1e-12);
        // each row: area of its cell
        let rule = gauss_rule(5).unwrap();
        for (c, yc) in y.iter().enumerate() {
            let map = level.cell_map(c);
            let a: f64 = rule.iter().map(|(r, w)| w * map.det(r)).sum();
            assert!((yc - a).abs() < 1e-12);
        }
    }

    #[test]
    fn c2_pairs_constant_multiplier_with_integral() {
        let disk = Arc::new(build_disk_hierarchy(1.0, 3).unwrap());
        let level = disk.level(3);
        let rule = gauss_rule(5).unwrap();
        for (ec, mode) in [
            (ElementChoice::Element1, CouplingMode::L2),
            (ElementChoice::Element1, CouplingMode::H1),
            (ElementChoice::Element2, CouplingMode::L2),
        ] {
            let lam = space(&disk, 3, ec.lambda_element(), BoundaryRule::Free);
            let v2 = space(&disk, 3, ec.v2_element(), BoundaryRule::Free);
            let c2 = assemble_c2(&lam, &v2, mode).unwrap();
            // v2 = x^2 + y at vertices plus arbitrary bubble coefficients
            let mut coeffs: Vec<f64> = level.vertices.iter().map(|p| p[0] * p[0] + p[1]).collect();
            coeffs.extend((coeffs.len()..v2.n_dofs()).map(|i| 0.1 * (i % 5) as f64));
            let mu_one = vec![1.0; lam.n_dofs()];
            let mut ct = vec![0.0; v2.n_dofs()];
            c2.mul_transpose_into(&mu_one, &mut ct);
            let paired: f64 = ct.iter().zip(&coeffs).map(|(a, b)| a * b).sum();

            let mut direct = 0.0;
            for c in 0..level.n_cells() {
                let map = level.cell_map(c);
                let dofs = v2.cell_dofs(c);
                for (r, w) in rule.iter() {
                    let vals = shape_values(v2.element(), r);
                    let u: f64 = dofs.iter().zip(&vals).map(|(d, v)| coeffs[*d] * v).sum();
                    direct += w * map.det(r) * u;
                }
            }
            assert!((paired - direct).abs() < 1e-12, "{ec:?} {mode:?}: {paired} vs {direct}");
        }
    }

    #[test]
    fn c1_reproduces_constants_and_linears() {
        let sq = Arc::new(build_square_hierarchy(1.4, 4).unwrap());
        let disk = Arc::new(build_disk_hierarchy(1.0, 3).unwrap());
        let v = space(&sq, 4, ElementKind::Q1, BoundaryRule::MeshBoundary);
        for (ec, mode) in [
            (ElementChoice::Element1, CouplingMode::L2),
            (ElementChoice::Element1, CouplingMode::H1),
            (ElementChoice::Element2, CouplingMode::L2),
        ] {
            let lam = space(&disk, 3, ec.lambda_element(), BoundaryRule::Free);
            let v2 = space(&disk, 3, ec.v2_element(), BoundaryRule::Free);
            let c1 = assemble_c1(&lam, &v, mode).unwrap();
            let c2 = assemble_c2(&lam, &v2, mode).unwrap();
            let ones_v = vec![1.0; v.n_dofs()];
            let mut ones_v2 = vec![1.0; v2.n_vertex_dofs()];
            ones_v2.resize(v2.n_dofs(), 0.0);
            let r1 = c1.spmv(&ones_v).unwrap();
            let r2 = c2.spmv(&ones_v2).unwrap();
            for (a, b) in r1.iter().zip(&r2) {
                assert!((a - b).abs() < 1e-12, "{ec:?} {mode:?}");
            }
        }

        // (mu_i, x) by direct quadrature on the disk mesh
        let lam = space(&disk, 3, ElementKind::Q1, BoundaryRule::Free);
        let c1 = assemble_c1(&lam, &v, CouplingMode::L2).unwrap();
        let xs: Vec<f64> = sq.level(4).vertices.iter().map(|p| p[0]).collect();
        let got = c1.spmv(&xs).unwrap();
        let level = disk.level(3);
        let rule = gauss_rule(5).unwrap();
        let mut want = vec![0.0; lam.n_dofs()];
        for c in 0..level.n_cells() {
            let map = level.cell_map(c);
            for (r, w) in rule.iter() {
                let p = map.map(r);
                for (d, s) in lam.cell_dofs(c).iter().zip(shape_values(ElementKind::Q1, r)) {
                    want[*d] += w * map.det(r) * s * p[0];
                }
            }
        }
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn c1_outside_background_is_an_error() {
        let sq = Arc::new(build_square_hierarchy(0.9, 2).unwrap());
        let disk = Arc::new(build_disk_hierarchy(1.0, 2).unwrap());
        let v = space(&sq, 2, ElementKind::Q1, BoundaryRule::MeshBoundary);
        let lam = space(&disk, 2, ElementKind::Q1, BoundaryRule::Free);
        assert!(matches!(
            assemble_c1(&lam, &v, CouplingMode::L2),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn rhs_properties() {
        let cfg = ProblemConfig::default();
        let sys = assemble_system(&cfg, 3, 3).unwrap();
        assert!(sys.f2.iter().all(|v| *v == 0.0));

        let sq = Arc::new(build_square_hierarchy(1.4, 3).unwrap());
        let v = space(&sq, 3, ElementKind::Q1, BoundaryRule::MeshBoundary);
        let load: f64 = assemble_load(&v, 1.0).unwrap().iter().sum();
        assert!((load - 7.84).abs() < 1e-12);

        let cfg2 = ProblemConfig {
            f2: 3.5,
            element_choice: ElementChoice::Element2,
            ..Default::default()
        };
        let sys2 = assemble_system(&cfg2, 3, 3).unwrap();
        let level = sys2.spaces.v2.level();
        let rule = gauss_rule(5).unwrap();
        for c in 0..level.n_cells() {
            let map = level.cell_map(c);
            let want: f64 = 2.5 * rule.iter().map(|(r, w)| w * map.det(r) * crate::elements::bubble(r)).sum::<f64>();
            let got = sys2.f2[level.n_vertices() + c];
            assert!((got - want).abs() < 1e-12);
            // affine cells: c * 4/9 * |cell|
            let area: f64 = rule.iter().map(|(r, w)| w * map.det(r)).sum();
            let dets: Vec<f64> = rule.points.iter().map(|r| map.det(r)).collect();
            if dets.iter().all(|d| (d - dets[0]).abs() < 1e-14) {
                assert!((got - 2.5 * 4.0 / 9.0 * area).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn full_system_symmetric_with_expected_shape() {
        for (ec, mode) in [
            (ElementChoice::Element1, CouplingMode::L2),
            (ElementChoice::Element1, CouplingMode::H1),
            (ElementChoice::Element2, CouplingMode::L2),
        ] {
            let cfg = ProblemConfig {
                element_choice: ec,
                coupling: mode,
                ..Default::default()
            };
            let sys = assemble_system(&cfg, 3, 3).unwrap();
            assert!(sys.a1.is_symmetric(1e-12));
            assert!(sys.a2.is_symmetric(1e-12));
            let full = sys.full_matrix();
            assert_eq!(full.n_rows(), sys.n_total());
            assert!(full.is_symmetric(1e-12));
            for &d in sys.spaces.v.boundary_dofs() {
                let (cols, vals) = sys.a1.row(d);
                assert_eq!(cols, &[d]);
                assert_eq!(vals, &[1.0]);
                assert_eq!(sys.f1[d], 0.0);
                let (fc, _) = full.row(d);
                assert_eq!(fc, &[d]);
            }
        }
    }
}
