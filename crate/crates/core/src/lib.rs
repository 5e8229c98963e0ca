#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;

pub mod block;
pub mod bounds;
pub mod cone;
pub mod error;
pub mod riccati;
pub mod sim;
pub mod state_space;

pub use error::{Error, ErrorKind, Result};
