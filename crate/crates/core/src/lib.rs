//! Symmetry reductions of the inverse heat-conduction problem
//! `-div(E grad w) = 1`.

pub mod catalog;
pub mod detsys;
pub mod jetprolong;
pub mod odesolve;
pub mod plot;
pub mod preset;
pub mod reduction;
pub mod symkernel;
