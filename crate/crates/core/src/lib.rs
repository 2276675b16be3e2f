//! Steady two-layer capillary-gravity waves driven by wind: laminar flows,
//! the interface spectral problem, the transmission/Wentzell elliptic
//! operator, local bifurcation and numerical continuation.

// `!(x > 0.0)` is used on purpose so NaN fails the test; stencils index by position.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bifurcation;
pub mod cli;
pub mod elliptic2d;
pub mod fourier;
pub mod laminar;
pub mod linalg;
pub mod model;
pub mod quad;
pub mod spectral1d;
pub mod verify;
