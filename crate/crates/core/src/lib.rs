//! Finite-difference solver and estimate checks for mixed Hessian equations
//! `σ_k(D²u) = Σ_{l<k} α_l σ_l(D²u)` with a Neumann condition.

pub mod exprs;
pub mod grid;
pub mod hessop;
pub mod sampling;
pub mod solver;
pub mod symfun;
pub mod verify;
