//! Free material optimization in 2D plane stress under a hierarchy of
//! realizability bounds: zeroth-order (trace), Voigt and Hashin–Shtrikman.
//!
//! Tensors are stored as 3×3 Kelvin–Mandel matrices, see [`tensor_core`].

pub mod error;
pub mod fem2d;
pub mod hs_bounds;
pub mod laminate_am;
pub mod setgeom;
pub mod sgp_solver;
pub mod tensor_core;

pub use error::{Error, Result};
