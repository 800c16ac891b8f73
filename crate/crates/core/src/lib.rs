//! Numerical decomposition of unitary representations into irreducible
//! blocks: finite groups from their Cayley tables or explicit matrices,
//! and tensor products of SU(2) spins with their Clebsch–Gordan tables.

pub mod cli;
pub mod decompose;
pub mod groups;
pub mod linalg;
pub mod states;
pub mod su2;
pub mod verify;

pub use decompose::{smily_decompose, BlockSpec, DecompositionResult, SmilyConfig, SmilyError};
pub use groups::{FiniteRep, GroupTable};
pub use linalg::{CMatrix, C64};
