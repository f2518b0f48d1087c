//! Multi-view stereo with bimodal Laplacian depth distributions and
//! geometric edge maps.

// Negated float comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bimodal;
pub mod discontinuity;
pub mod geometry;
pub mod grid;
pub mod image;
pub mod losses;
pub mod patchmatch;
pub mod refine;
pub mod eval;
pub mod fusion;
pub mod io;
pub mod synth;
pub mod cli;
