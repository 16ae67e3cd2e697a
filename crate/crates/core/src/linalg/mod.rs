//! Linear algebra backing the potential theory and the samplers.

mod cg;
mod cholesky;
mod dst;
mod sparse;

pub use cg::{pcg, CgOutcome};
pub use cholesky::{dense_cholesky_solve, EnvelopeCholesky};
pub use dst::BoxSpectral;
pub use sparse::{reverse_cuthill_mckee, SymmetricCsr};
