//! Exact construction of a doubling measure on `[0,1]²` whose mass
//! concentrates on the graph of a function.
//!
//! The measure is a 4-adic weighted distribution: at step `i` every level-`i`
//! square gets a weight `p`, `q = 2 − p` or `1`, and the density on a level-`L`
//! square is the product of its first `L` weights. All values are exact
//! rationals.

pub mod construction;
pub mod doubling;
pub mod error;
pub mod graph;
pub mod grid;
pub mod lattice;
pub mod measure;
pub mod rat;
pub mod schedule;

pub use error::{Error, Result};
pub use grid::{Cell, RectQ};
pub use rat::Rat;
pub use schedule::Params;
