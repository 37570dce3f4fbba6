#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod cell;
pub mod error;
pub mod estimates;
pub mod experiments;
pub mod grid;
pub mod hamiltonian;
pub mod linalg;
pub mod potential;
pub mod sde;
pub mod testfn;

pub use error::{Error, Result};
