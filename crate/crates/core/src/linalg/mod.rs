pub mod condition;
pub mod csr;
pub mod direct;
pub mod gmres;
pub mod operator;

pub use condition::{estimate_condition_number, CondEstimate, CondMode, CondOptions};
pub use csr::CsrMatrix;
pub use direct::{lu_factor, LuFactorization};
pub use gmres::{gmres, GmresSettings, SolveReport};
pub use operator::{materialize, Composed, IdentityOperator, LinearOperator};
