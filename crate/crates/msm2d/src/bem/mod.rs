//! Boundary-element machinery: closed-form segment integrals, the scalar
//! (Laplace) solvers for stray-field potentials, and the vector
//! (plane-strain elasticity) solver for the matrix.

pub mod elasticity;
pub mod laplace;
pub mod seg;
