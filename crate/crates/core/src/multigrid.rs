//! Geometric multigrid: inter-level transfers, SOR and Vanka smoothers and
//! the V-cycle.
//!
//! Level operators are assembled on every mesh level. Transfers evaluate the
//! coarse finite element function at the fine degrees of freedom, using the
//! parent/child reference-coordinate relation of the hierarchy.

use std::sync::Arc;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_a1, assemble_b_blocks, b_matrix, ProblemConfig};
use crate::elements::{enumerate_dofs, shape_values, BoundaryRule, ElementKind, FeSpace};
use crate::error::{Error, Result};
use crate::linalg::csr::CsrMatrix;
use crate::linalg::direct::{lu_factor, DenseLu, LuFactorization};
use crate::linalg::operator::LinearOperator;
use crate::mesh::{MeshHierarchy, MeshLevel, Point, REFERENCE_CORNERS};

/// Entries below this magnitude are dropped from transfer matrices.
const TRANSFER_DROP: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MgConfig {
    /// Pre- and post-smoothing passes.
    pub smooth_steps: usize,
    /// Passes used for the B cycle with the bubble/P0 pairing.
    pub element2_vanka_smooth_steps: usize,
    pub sor_omega: f64,
    /// V-cycles per preconditioner application.
    pub cycles: usize,
}

impl Default for MgConfig {
    fn default() -> Self {
        Self {
            smooth_steps: 2,
            element2_vanka_smooth_steps: 5,
            sor_omega: 1.0,
            cycles: 1,
        }
    }
}

/// Prolongation `P` (fine x coarse) and restriction `P^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferOperator {
    pub prolongation: CsrMatrix,
    pub restriction: CsrMatrix,
}

impl TransferOperator {
    pub fn new(prolongation: CsrMatrix) -> Self {
        let restriction = prolongation.transpose();
        Self {
            prolongation,
            restriction,
        }
    }

    pub fn prolongate(&self, coarse: &[f64]) -> Vec<f64> {
        self.prolongation.apply(coarse)
    }

    pub fn restrict(&self, fine: &[f64]) -> Vec<f64> {
        self.restriction.apply(fine)
    }

    /// Zeroes rows of constrained fine DoFs and columns of constrained coarse DoFs.
    pub fn masked(&self, fine_fixed: &[usize], coarse_fixed: &[usize]) -> Self {
        let mut fr = vec![false; self.prolongation.n_rows()];
        let mut cc = vec![false; self.prolongation.n_cols()];
        fine_fixed.iter().for_each(|&d| fr[d] = true);
        coarse_fixed.iter().for_each(|&d| cc[d] = true);
        let t = self
            .prolongation
            .triplets()
            .filter(|&(i, j, _)| !fr[i] && !cc[j])
            .collect();
        let p = CsrMatrix::from_triplets(self.prolongation.n_rows(), self.prolongation.n_cols(), t)
            .expect("indices in range");
        Self::new(p)
    }
}

fn check_nested(coarse: &MeshLevel, fine: &MeshLevel) -> Result<()> {
    if fine.parents.len() != fine.n_cells() {
        return Err(Error::InvalidArgument(
            "fine level has no parent links".into(),
        ));
    }
    let mut children = vec![0u8; coarse.n_cells()];
    for link in &fine.parents {
        if link.cell >= coarse.n_cells() {
            return Err(Error::InvalidArgument(format!(
                "parent cell {} out of range",
                link.cell
            )));
        }
        children[link.cell] += 1;
    }
    if children.iter().any(|&c| c != 4) || fine.n_cells() != 4 * coarse.n_cells() {
        return Err(Error::InvalidArgument(
            "fine level is not a uniform refinement of the coarse level".into(),
        ));
    }
    Ok(())
}

/// Evaluates the coarse function at the fine DoF functionals: point values
/// at vertices, center value minus corner average for bubbles, and the value
/// at the cell center for P0.
#[allow(clippy::too_many_arguments)]
fn interpolation_matrix<'a>(
    coarse: &MeshLevel,
    fine: &MeshLevel,
    element: ElementKind,
    coarse_dofs: impl Fn(usize) -> &'a [usize],
    fine_dofs: impl Fn(usize) -> &'a [usize],
    n_coarse: usize,
    n_fine: usize,
) -> Result<CsrMatrix> {
    check_nested(coarse, fine)?;
    let mut done = vec![false; n_fine];
    let mut triplets = Vec::new();
    let push_row = |row: usize, cd: &[usize], w: &[f64], out: &mut Vec<(usize, usize, f64)>| {
        for (c, v) in cd.iter().zip(w) {
            if v.abs() > TRANSFER_DROP {
                out.push((row, *c, *v));
            }
        }
    };
    for (fc, link) in fine.parents.iter().enumerate() {
        let cd = coarse_dofs(link.cell);
        let fd = fine_dofs(fc);
        let eval = |r: Point| shape_values(element, &link.to_parent(r));
        match element {
            ElementKind::P0 => {
                if !done[fd[0]] {
                    push_row(fd[0], cd, &eval([0.5, 0.5]), &mut triplets);
                    done[fd[0]] = true;
                }
            }
            ElementKind::Q1 | ElementKind::Q1PlusBubble => {
                let corner_vals: Vec<Vec<f64>> =
                    REFERENCE_CORNERS.iter().map(|&r| eval(r)).collect();
                for k in 0..4 {
                    if !done[fd[k]] {
                        push_row(fd[k], cd, &corner_vals[k], &mut triplets);
                        done[fd[k]] = true;
                    }
                }
                if element == ElementKind::Q1PlusBubble {
                    let center = eval([0.5, 0.5]);
                    let w: Vec<f64> = (0..center.len())
                        .map(|a| center[a] - 0.25 * corner_vals.iter().map(|v| v[a]).sum::<f64>())
                        .collect();
                    push_row(fd[4], cd, &w, &mut triplets);
                    done[fd[4]] = true;
                }
            }
        }
    }
    if let Some(missing) = done.iter().position(|d| !d) {
        return Err(Error::InvalidArgument(format!(
            "fine DoF {missing} not reached by any child cell"
        )));
    }
    CsrMatrix::from_triplets(n_fine, n_coarse, triplets)
}

/// Q1 nodal transfer between consecutive levels.
pub fn build_q1_transfer(coarse: &MeshLevel, fine: &MeshLevel) -> Result<TransferOperator> {
    let p = interpolation_matrix(
        coarse,
        fine,
        ElementKind::Q1,
        |c| &coarse.cells[c][..],
        |c| &fine.cells[c][..],
        coarse.n_vertices(),
        fine.n_vertices(),
    )?;
    Ok(TransferOperator::new(p))
}

/// Transfer for one finite element space between consecutive levels.
pub fn build_space_transfer(coarse: &FeSpace, fine: &FeSpace) -> Result<TransferOperator> {
    if !Arc::ptr_eq(coarse.mesh(), fine.mesh())
        || fine.level_index() != coarse.level_index() + 1
        || coarse.element() != fine.element()
    {
        return Err(Error::InvalidArgument(
            "transfer needs the same element on consecutive levels of one hierarchy".into(),
        ));
    }
    let p = interpolation_matrix(
        coarse.level(),
        fine.level(),
        coarse.element(),
        |c| coarse.cell_dofs(c),
        |c| fine.cell_dofs(c),
        coarse.n_dofs(),
        fine.n_dofs(),
    )?;
    Ok(TransferOperator::new(p))
}

/// Block-diagonal transfer over `(V2, Lambda)`.
pub fn build_mixed_transfer(
    coarse_v2: &FeSpace,
    fine_v2: &FeSpace,
    coarse_lambda: &FeSpace,
    fine_lambda: &FeSpace,
) -> Result<TransferOperator> {
    let pv = build_space_transfer(coarse_v2, fine_v2)?;
    let pl = build_space_transfer(coarse_lambda, fine_lambda)?;
    let p = CsrMatrix::from_blocks(
        &[fine_v2.n_dofs(), fine_lambda.n_dofs()],
        &[coarse_v2.n_dofs(), coarse_lambda.n_dofs()],
        &[
            &[Some((&pv.prolongation, 1.0)), None],
            &[None, Some((&pl.prolongation, 1.0))],
        ],
    )?;
    Ok(TransferOperator::new(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepDirection {
    Forward,
    Backward,
}

/// One SOR sweep on `A x = b`.
pub fn sor_sweep(
    a: &CsrMatrix,
    x: &mut [f64],
    b: &[f64],
    omega: f64,
    direction: SweepDirection,
) -> Result<()> {
    let diag = checked_diagonal(a)?;
    sor_sweep_with_diag(a, &diag, x, b, omega, direction);
    Ok(())
}

fn checked_diagonal(a: &CsrMatrix) -> Result<Vec<f64>> {
    let d = a.diagonal();
    match d.iter().position(|v| *v == 0.0) {
        Some(row) => Err(Error::SmootherInapplicable { row }),
        None => Ok(d),
    }
}

fn sor_sweep_with_diag(
    a: &CsrMatrix,
    diag: &[f64],
    x: &mut [f64],
    b: &[f64],
    omega: f64,
    direction: SweepDirection,
) {
    let mut step = |i: usize| {
        let (cols, vals) = a.row(i);
        let s: f64 = cols.iter().zip(vals).map(|(j, v)| v * x[*j]).sum();
        x[i] += omega * (b[i] - s) / diag[i];
    };
    match direction {
        SweepDirection::Forward => (0..a.n_rows()).for_each(&mut step),
        SweepDirection::Backward => (0..a.n_rows()).rev().for_each(&mut step),
    }
}

/// One Vanka patch: a multiplier DoF with its coupled primal DoFs.
#[derive(Debug, Clone)]
pub struct VankaPatch {
    /// Global indices into the saddle-point matrix, primal DoFs first and the
    /// multiplier DoF last.
    pub dofs: Vec<usize>,
    lu: DenseLu,
}

/// Patches for `B = [[A2, -C2^T], [-C2, 0]]`.
pub fn build_vanka_patches(a2: &CsrMatrix, c2: &CsrMatrix) -> Result<Vec<VankaPatch>> {
    build_vanka_patches_from_b(&b_matrix(a2, c2), a2.n_rows())
}

/// Patches of a saddle-point matrix whose first `n_primal` unknowns are primal.
pub fn build_vanka_patches_from_b(b: &CsrMatrix, n_primal: usize) -> Result<Vec<VankaPatch>> {
    let n = b.n_rows();
    let mut patches = Vec::with_capacity(n - n_primal);
    let mut covered = vec![false; n_primal];
    for i in n_primal..n {
        let (cols, vals) = b.row(i);
        let mut dofs: Vec<usize> = cols
            .iter()
            .zip(vals)
            .filter(|(j, v)| **j < n_primal && **v != 0.0)
            .map(|(j, _)| *j)
            .collect();
        dofs.iter().for_each(|&j| covered[j] = true);
        dofs.push(i);
        let local: Vec<Vec<f64>> = dofs
            .iter()
            .map(|&r| dofs.iter().map(|&c| b.get(r, c)).collect())
            .collect();
        let lu = DenseLu::factor(local).map_err(|_| Error::SingularPatch { dof: i - n_primal })?;
        patches.push(VankaPatch { dofs, lu });
    }
    let uncovered = covered.iter().filter(|c| !**c).count();
    if uncovered > 0 {
        log::warn!("{uncovered} primal DoFs belong to no Vanka patch and are never smoothed");
    }
    Ok(patches)
}

/// One multiplicative Vanka pass in ascending multiplier order.
pub fn vanka_sweep(b: &CsrMatrix, patches: &[VankaPatch], x: &mut [f64], rhs: &[f64]) {
    let mut r = Vec::new();
    for p in patches {
        r.clear();
        r.extend(p.dofs.iter().map(|&d| {
            let (cols, vals) = b.row(d);
            rhs[d] - cols.iter().zip(vals).map(|(j, v)| v * x[*j]).sum::<f64>()
        }));
        p.lu.solve_in_place(&mut r);
        for (d, delta) in p.dofs.iter().zip(&r) {
            x[*d] += delta;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SmootherKind {
    /// Forward plus backward SOR sweep per pass.
    Sor { omega: f64 },
    /// Multiplicative Vanka; `n_primal` is taken per level.
    Vanka,
}

#[derive(Debug)]
enum LevelSmoother {
    Sor { diag: Vec<f64>, omega: f64 },
    Vanka { patches: Vec<VankaPatch> },
}

#[derive(Debug)]
struct MgLevel {
    op: CsrMatrix,
    smoother: LevelSmoother,
    /// Transfer from the next coarser level; `None` on the coarsest.
    transfer: Option<TransferOperator>,
}

enum CoarseSolver {
    Lu(LuFactorization),
    PseudoInverse(Mat<f64>),
}

impl std::fmt::Debug for CoarseSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Lu(lu) => write!(f, "Lu({})", lu.dim()),
            Self::PseudoInverse(m) => write!(f, "PseudoInverse({})", m.nrows()),
        }
    }
}

/// A multigrid hierarchy; as an operator it applies `cycles` V-cycles to
/// `A x = b` from a zero initial guess.
#[derive(Debug)]
pub struct MgHierarchy {
    levels: Vec<MgLevel>,
    coarse: CoarseSolver,
    pre_smooth: usize,
    post_smooth: usize,
    cycles: usize,
}

/// Level data for [`MgHierarchy::new`].
#[derive(Debug, Clone)]
pub struct LevelInput {
    pub op: CsrMatrix,
    /// Number of primal unknowns (Vanka only).
    pub n_primal: usize,
    /// Transfer from the previous (coarser) level; ignored on the first.
    pub transfer: Option<TransferOperator>,
}

impl MgHierarchy {
    /// Builds from level data ordered coarsest first.
    pub fn new(
        inputs: Vec<LevelInput>,
        smoother: SmootherKind,
        pre_smooth: usize,
        post_smooth: usize,
    ) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("multigrid needs at least one level".into()));
        }
        let coarse_op = &inputs[0].op;
        let coarse = match lu_factor(coarse_op) {
            Ok(lu) => CoarseSolver::Lu(lu),
            Err(Error::SingularMatrix(msg)) => {
                log::warn!("coarse operator singular ({msg}), using an SVD pseudo-inverse");
                let d = coarse_op.to_dense();
                let m = Mat::<f64>::from_fn(d.len(), d.len(), |i, j| d[i][j]);
                let svd = m
                    .svd()
                    .map_err(|e| Error::SingularMatrix(format!("coarse SVD failed: {e:?}")))?;
                CoarseSolver::PseudoInverse(svd.pseudoinverse())
            }
            Err(e) => return Err(e),
        };
        let mut levels = Vec::with_capacity(inputs.len());
        let mut prev_dim = None;
        for (k, input) in inputs.into_iter().enumerate() {
            let n = input.op.n_rows();
            let transfer = if k == 0 { None } else { input.transfer };
            if k > 0 {
                let t = transfer.as_ref().ok_or_else(|| {
                    Error::InvalidArgument(format!("level {k} has no transfer"))
                })?;
                if t.prolongation.n_rows() != n || Some(t.prolongation.n_cols()) != prev_dim {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: t.prolongation.n_rows(),
                    });
                }
            }
            let smoother = match smoother {
                SmootherKind::Sor { omega } => LevelSmoother::Sor {
                    diag: if k == 0 { input.op.diagonal() } else { checked_diagonal(&input.op)? },
                    omega,
                },
                SmootherKind::Vanka => LevelSmoother::Vanka {
                    patches: if k == 0 {
                        Vec::new()
                    } else {
                        build_vanka_patches_from_b(&input.op, input.n_primal)?
                    },
                },
            };
            prev_dim = Some(n);
            levels.push(MgLevel {
                op: input.op,
                smoother,
                transfer,
            });
        }
        Ok(Self {
            levels,
            coarse,
            pre_smooth,
            post_smooth,
            cycles: 1,
        })
    }

    pub fn with_cycles(mut self, cycles: usize) -> Self {
        self.cycles = cycles.max(1);
        self
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn dim(&self) -> usize {
        self.levels.last().map(|l| l.op.n_rows()).unwrap_or(0)
    }

    pub fn finest_operator(&self) -> &CsrMatrix {
        &self.levels.last().expect("nonempty").op
    }

    pub fn cycles(&self) -> usize {
        self.cycles
    }

    /// One V-cycle on the finest level, updating `x` in place.
    pub fn v_cycle(&self, x: &mut [f64], b: &[f64]) {
        self.v_cycle_at(self.levels.len() - 1, x, b);
    }

    /// One V-cycle starting at level index `level` (0 = coarsest).
    pub fn v_cycle_at(&self, level: usize, x: &mut [f64], b: &[f64]) {
        let lvl = &self.levels[level];
        if level == 0 {
            let mut r = lvl.op.residual(b, x);
            match &self.coarse {
                CoarseSolver::Lu(lu) => lu.solve_in_place(&mut r),
                CoarseSolver::PseudoInverse(m) => {
                    let rc = r.clone();
                    for (i, ri) in r.iter_mut().enumerate() {
                        *ri = (0..rc.len()).map(|j| m[(i, j)] * rc[j]).sum();
                    }
                }
            }
            x.iter_mut().zip(&r).for_each(|(xi, ri)| *xi += ri);
            return;
        }
        for _ in 0..self.pre_smooth {
            self.smooth(lvl, x, b);
        }
        let t = lvl.transfer.as_ref().expect("non-coarsest level has a transfer");
        let r = lvl.op.residual(b, x);
        let rc = t.restrict(&r);
        let mut ec = vec![0.0; rc.len()];
        self.v_cycle_at(level - 1, &mut ec, &rc);
        let ef = t.prolongate(&ec);
        x.iter_mut().zip(&ef).for_each(|(xi, ei)| *xi += ei);
        for _ in 0..self.post_smooth {
            self.smooth(lvl, x, b);
        }
    }

    fn smooth(&self, lvl: &MgLevel, x: &mut [f64], b: &[f64]) {
        match &lvl.smoother {
            LevelSmoother::Sor { diag, omega } => {
                sor_sweep_with_diag(&lvl.op, diag, x, b, *omega, SweepDirection::Forward);
                sor_sweep_with_diag(&lvl.op, diag, x, b, *omega, SweepDirection::Backward);
            }
            LevelSmoother::Vanka { patches } => vanka_sweep(&lvl.op, patches, x, b),
        }
    }
}

impl LinearOperator for MgHierarchy {
    fn nrows(&self) -> usize {
        self.dim()
    }

    fn ncols(&self) -> usize {
        self.dim()
    }

    fn apply_into(&self, b: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for _ in 0..self.cycles {
            self.v_cycle(y, b);
        }
    }
}

/// SOR V-cycle for the Dirichlet-reduced `A1` on square levels `1..=finest`.
pub fn build_a1_hierarchy(
    config: &ProblemConfig,
    square: &Arc<MeshHierarchy>,
    finest: usize,
    mg: &MgConfig,
) -> Result<MgHierarchy> {
    let spaces: Vec<FeSpace> = (1..=finest)
        .map(|l| enumerate_dofs(square.clone(), l, ElementKind::Q1, BoundaryRule::MeshBoundary))
        .collect();
    let mut inputs = Vec::with_capacity(finest);
    for (k, s) in spaces.iter().enumerate() {
        let transfer = if k == 0 {
            None
        } else {
            let c = &spaces[k - 1];
            Some(build_space_transfer(c, s)?.masked(s.boundary_dofs(), c.boundary_dofs()))
        };
        inputs.push(LevelInput {
            op: assemble_a1(config, s)?,
            n_primal: s.n_dofs(),
            transfer,
        });
    }
    Ok(MgHierarchy::new(
        inputs,
        SmootherKind::Sor {
            omega: mg.sor_omega,
        },
        mg.smooth_steps,
        mg.smooth_steps,
    )?
    .with_cycles(mg.cycles))
}

/// Vanka V-cycle for `B` on disk levels `1..=finest`.
pub fn build_b_hierarchy(
    config: &ProblemConfig,
    disk: &Arc<MeshHierarchy>,
    finest: usize,
    smooth_steps: usize,
    cycles: usize,
) -> Result<MgHierarchy> {
    let ec = config.element_choice;
    let mut inputs = Vec::with_capacity(finest);
    let mut prev: Option<(FeSpace, FeSpace)> = None;
    for l in 1..=finest {
        let v2 = enumerate_dofs(disk.clone(), l, ec.v2_element(), BoundaryRule::Free);
        let lam = enumerate_dofs(disk.clone(), l, ec.lambda_element(), BoundaryRule::Free);
        let (a2, c2) = assemble_b_blocks(config, &v2, &lam)?;
        let transfer = match &prev {
            None => None,
            Some((cv2, clam)) => Some(build_mixed_transfer(cv2, &v2, clam, &lam)?),
        };
        inputs.push(LevelInput {
            op: b_matrix(&a2, &c2),
            n_primal: v2.n_dofs(),
            transfer,
        });
        prev = Some((v2, lam));
    }
    Ok(MgHierarchy::new(inputs, SmootherKind::Vanka, smooth_steps, smooth_steps)?.with_cycles(cycles))
}
