//! h-adaptive spectral-element solver for advection-diffusion and Burgers problems
//! on quadtree meshes with nonconforming interfaces.

pub mod basis;
pub mod linalg;
pub mod mesh;
pub mod assembly;
pub mod operators;
pub mod solver;
pub mod timestepping;
pub mod problems;
pub mod estimator;
pub mod harness;
