//! Square-function laboratory on the discrete periodic grid.
//!
//! Everything here lives on `Z_N` (N a power of two) seen as an N-point
//! sampling of a circle of circumference `domain_length`.  The central object
//! is the square function built from a family of frequency intervals: split
//! the spectrum of a signal into bands, project onto each band, and take the
//! pointwise `l^2` norm of the projections.  Around it the crate provides
//!
//! * exact discrete norms, averages and Fourier transforms ([`signal`]),
//! * frequency-interval families and Whitney decompositions ([`family`]),
//! * band projections, square functions and dual pairings ([`square`]),
//! * shifted dyadic grids, maximal functions, stopping times and sparse
//!   collections ([`dyadic`]),
//! * time-frequency tiles, wave packets and tree decompositions ([`tiles`],
//!   [`packet`], [`tree`]),
//! * Muckenhoupt weight characteristics and operator-norm probes
//!   ([`weights`]),
//! * reproducible numerical experiments behind the `rlplab` binary
//!   ([`experiments`]).
//!
//! All randomness is seeded explicitly and every reduction uses a fixed
//! summation order, so outputs are bit-stable across runs and thread counts.

pub mod dyadic;
pub mod error;
pub mod experiments;
pub mod family;
pub mod packet;
pub mod signal;
pub mod square;
pub mod tiles;
pub mod tree;
pub mod weights;

pub use error::{Error, Result};
