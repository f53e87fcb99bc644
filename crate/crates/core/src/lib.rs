//! Matrix-free geometric multigrid for the Poisson problem on the unit
//! square and cube, with multiplicative vertex-patch smoothers.
//!
//! Continuous `Q_p` elements on uniform Cartesian meshes; level `ℓ` has
//! `2^(ℓ+1)` cells per direction. Patch-local problems are solved exactly by
//! fast diagonalization, and smoother variants differ only in how patch
//! updates are scheduled.

pub mod error;
pub mod linalg;
mod tensor;
pub mod reference_element;
pub mod mesh;
pub mod dof_map;
pub mod instrument;
pub mod laplace;
pub mod fdm;
pub mod smoothers;
pub mod multigrid;
pub mod traffic;
pub mod dense_oracle;
pub mod bench;
pub mod validate;

pub use error::{Error, Result};

