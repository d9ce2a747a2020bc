//! Two-player zero-sum differential games whose state is a probability
//! measure. Laws are represented by weighted particle ensembles.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments
)]

pub mod config;
pub mod dpp;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod game;
pub mod hamiltonian;
pub mod hji;
pub mod lifted;
pub mod measure;
mod transport;

pub use error::{Error, Result};
