//! Block preconditioners over the grouping `{u} x {u2, lambda}`:
//!
//! ```text
//! P1 = [[A1, Ct], [0, B]]    P2 = [[A1, 0], [Cb, B]]    P3 = [[A1, 0], [0, B]]
//! ```
//!
//! with `Ct = [0 | C1^T]` and `Cb = [0; C1]`. Each application performs one
//! solve with each diagonal block plus at most one coupling product.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assembly::{BlockSystem, ElementChoice};
use crate::error::{Error, Result};
use crate::linalg::csr::CsrMatrix;
use crate::linalg::direct::lu_factor;
use crate::linalg::operator::LinearOperator;
use crate::multigrid::{build_a1_hierarchy, build_b_hierarchy, MgConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Shape {
    /// Block upper triangular.
    P1,
    /// Block lower triangular.
    P2,
    /// Block diagonal.
    P3,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::P1, Shape::P2, Shape::P3];

    pub fn label(self) -> &'static str {
        match self {
            Shape::P1 => "P1",
            Shape::P2 => "P2",
            Shape::P3 => "P3",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p1" => Ok(Shape::P1),
            "p2" => Ok(Shape::P2),
            "p3" => Ok(Shape::P3),
            _ => Err(Error::Parse(format!("unknown preconditioner shape '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlockInverse {
    /// LU factorization.
    Direct,
    /// Zero-initial-guess multigrid V-cycle(s).
    Multigrid,
}

impl BlockInverse {
    fn letter(self) -> char {
        match self {
            BlockInverse::Direct => 'd',
            BlockInverse::Multigrid => 'm',
        }
    }

    fn from_letter(c: char) -> Option<Self> {
        match c {
            'd' => Some(BlockInverse::Direct),
            'm' => Some(BlockInverse::Multigrid),
            _ => None,
        }
    }
}

/// Variant label: first letter for the `A1` inverse, second for `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Variant {
    pub a1: BlockInverse,
    pub b: BlockInverse,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::new(BlockInverse::Direct, BlockInverse::Direct),
        Variant::new(BlockInverse::Direct, BlockInverse::Multigrid),
        Variant::new(BlockInverse::Multigrid, BlockInverse::Direct),
        Variant::new(BlockInverse::Multigrid, BlockInverse::Multigrid),
    ];

    pub const fn new(a1: BlockInverse, b: BlockInverse) -> Self {
        Self { a1, b }
    }

    pub fn label(self) -> String {
        [self.a1.letter(), self.b.letter()].iter().collect()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let mut chars = lower.chars();
        match (
            chars.next().and_then(BlockInverse::from_letter),
            chars.next().and_then(BlockInverse::from_letter),
            chars.next(),
        ) {
            (Some(a1), Some(b), None) => Ok(Variant { a1, b }),
            _ => Err(Error::Parse(format!("unknown variant '{s}', expected dd, dm, md or mm"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PrecondSpec {
    pub shape: Shape,
    pub variant: Variant,
}

impl PrecondSpec {
    pub fn new(shape: Shape, variant: Variant) -> Self {
        Self { shape, variant }
    }

    /// Parses e.g. `("p1", "md")`.
    pub fn parse(shape: &str, variant: &str) -> Result<Self> {
        Ok(Self {
            shape: shape.parse()?,
            variant: variant.parse()?,
        })
    }
}

impl fmt::Display for PrecondSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.shape, self.variant)
    }
}

/// Approximate inverse of one of the block preconditioners.
pub struct BlockPreconditioner {
    spec: PrecondSpec,
    a1_solver: Box<dyn LinearOperator + Send + Sync>,
    b_solver: Box<dyn LinearOperator + Send + Sync>,
    c1: CsrMatrix,
    n_v: usize,
    n_v2: usize,
    n_lambda: usize,
}

impl fmt::Debug for BlockPreconditioner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlockPreconditioner")
            .field("spec", &self.spec)
            .field("n_v", &self.n_v)
            .field("n_v2", &self.n_v2)
            .field("n_lambda", &self.n_lambda)
            .finish()
    }
}

impl BlockPreconditioner {
    /// Assembles a preconditioner from given block inverses; `c1` is the
    /// `n_lambda x n_v` coupling block.
    pub fn from_parts(
        spec: PrecondSpec,
        a1_solver: Box<dyn LinearOperator + Send + Sync>,
        b_solver: Box<dyn LinearOperator + Send + Sync>,
        c1: CsrMatrix,
        n_v2: usize,
    ) -> Result<Self> {
        let n_v = c1.n_cols();
        let n_lambda = c1.n_rows();
        if a1_solver.nrows() != n_v || a1_solver.ncols() != n_v {
            return Err(Error::DimensionMismatch {
                expected: n_v,
                found: a1_solver.nrows(),
            });
        }
        if b_solver.nrows() != n_v2 + n_lambda || b_solver.ncols() != n_v2 + n_lambda {
            return Err(Error::DimensionMismatch {
                expected: n_v2 + n_lambda,
                found: b_solver.nrows(),
            });
        }
        Ok(Self {
            spec,
            a1_solver,
            b_solver,
            c1,
            n_v,
            n_v2,
            n_lambda,
        })
    }

    pub fn spec(&self) -> PrecondSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.n_v + self.n_v2 + self.n_lambda
    }

    pub fn apply_preconditioner(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: r.len(),
            });
        }
        let mut z = vec![0.0; self.dim()];
        self.apply_into(r, &mut z);
        Ok(z)
    }
}

impl LinearOperator for BlockPreconditioner {
    fn nrows(&self) -> usize {
        self.dim()
    }

    fn ncols(&self) -> usize {
        self.dim()
    }

    fn apply_into(&self, r: &[f64], z: &mut [f64]) {
        let nv = self.n_v;
        let lam0 = self.n_v2;
        let (r_u, r_b) = r.split_at(nv);
        let (z_u, z_b) = z.split_at_mut(nv);
        match self.spec.shape {
            Shape::P3 => {
                self.a1_solver.apply_into(r_u, z_u);
                self.b_solver.apply_into(r_b, z_b);
            }
            Shape::P1 => {
                self.b_solver.apply_into(r_b, z_b);
                let mut t = vec![0.0; nv];
                self.c1.mul_transpose_into(&z_b[lam0..], &mut t);
                t.iter_mut().zip(r_u).for_each(|(ti, ri)| *ti = ri - *ti);
                self.a1_solver.apply_into(&t, z_u);
            }
            Shape::P2 => {
                self.a1_solver.apply_into(r_u, z_u);
                let mut s = r_b.to_vec();
                let c1z = self.c1.apply(z_u);
                s[lam0..].iter_mut().zip(&c1z).for_each(|(si, ci)| *si -= ci);
                self.b_solver.apply_into(&s, z_b);
            }
        }
    }
}

/// Builds the block inverses for `system`: LU for `d`, V-cycles for `m`.
pub fn build_preconditioner(
    system: &BlockSystem,
    spec: PrecondSpec,
    mg: &MgConfig,
) -> Result<BlockPreconditioner> {
    let config = &system.config;
    let a1_solver: Box<dyn LinearOperator + Send + Sync> = match spec.variant.a1 {
        BlockInverse::Direct => Box::new(lu_factor(&system.a1).map_err(|e| e.in_block("A1"))?),
        BlockInverse::Multigrid => {
            let square = system.spaces.v.mesh();
            Box::new(
                build_a1_hierarchy(config, square, system.spaces.v.level_index(), mg)
                    .map_err(|e| e.in_block("A1"))?,
            )
        }
    };
    let b_solver: Box<dyn LinearOperator + Send + Sync> = match spec.variant.b {
        BlockInverse::Direct => match lu_factor(&system.b_matrix()) {
            Ok(lu) => Box::new(lu),
            Err(e @ Error::SingularMatrix(_)) if config.beta2 <= config.beta => {
                return Err(Error::SingularMatrix(format!(
                    "B is singular with beta2 = {} <= beta = {}; invertibility is only \
                     guaranteed for beta2 > beta ({e})",
                    config.beta2, config.beta
                ))
                .in_block("B"))
            }
            Err(e) => return Err(e.in_block("B")),
        },
        BlockInverse::Multigrid => {
            let steps = b_smooth_steps(config.element_choice, mg);
            let disk = system.spaces.v2.mesh();
            Box::new(
                build_b_hierarchy(config, disk, system.spaces.v2.level_index(), steps, mg.cycles)
                    .map_err(|e| e.in_block("B"))?,
            )
        }
    };
    BlockPreconditioner::from_parts(spec, a1_solver, b_solver, system.c1.clone(), system.n_v2())
}

/// Smoothing passes of the B cycle.
pub fn b_smooth_steps(element_choice: ElementChoice, mg: &MgConfig) -> usize {
    match element_choice {
        ElementChoice::Element1 => mg.smooth_steps,
        ElementChoice::Element2 => mg.element2_vanka_smooth_steps,
    }
}
