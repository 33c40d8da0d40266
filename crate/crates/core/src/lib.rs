//! Stochastic-geometry model of Walker-delta satellite constellations.
//!
//! The constellation is a doubly shifted lattice: orbit longitudes are evenly
//! spaced with a common random offset, and in-plane satellite phases are
//! evenly spaced with a second independent offset. Everything downstream is a
//! function of that offset pair, so ensemble statistics reduce to integrals
//! over a two-dimensional torus and the motion of the constellation reduces
//! to a linear flow on the same torus.
//!
//! - [`geometry`] materializes satellite positions and the visibility and
//!   nearest-satellite predicates.
//! - [`dynamics`] propagates the offsets in time, classifies the flow as
//!   periodic or ergodic, and computes long-horizon time averages.
//! - [`link`] holds the radio-link primitives: two-level antenna gain,
//!   power-law path loss, unit-mean fading models, thermal noise.
//! - [`analysis`] evaluates the nearest-distance CCDF, the interference
//!   Laplace transform and mean, and the downlink coverage probability by
//!   midpoint quadrature over the offset torus.
//! - [`montecarlo`] is the independent sampling oracle used to cross-validate
//!   every quadrature result, plus the ergodic time-vs-ensemble experiment.
//! - [`suite`] bundles the end-to-end verification criteria behind both the
//!   `acceptance` test target and the CLI `--self-test` flag.

pub mod analysis;
pub mod dynamics;
pub mod geometry;
pub mod link;
pub mod montecarlo;
pub mod suite;

mod numeric;
mod stats;
mod stream;
