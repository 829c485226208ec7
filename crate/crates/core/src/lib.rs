//! Boundary-control toolkit for the acoustic wave equation.
//!
//! The crate studies the wave equation `u_tt = c(x)^2 Δu` on an interval,
//! rectangle, or disk, driven through a weighted Neumann boundary source and
//! observed through its boundary trace (a Neumann-to-Dirichlet map). Around
//! that map it builds the classical boundary-control machinery:
//!
//! * [`geometry`] — grids, sound-speed fields, travel times (1-D quadrature,
//!   2-D fast marching), and volumes in the natural measure `c^{-2} dx`.
//! * [`influence`] — domains of influence `M(Γ, τ)` of a boundary subset `Γ`
//!   under a time budget `τ`, and the signed arrival-margin field that
//!   describes them.
//! * [`forward`] — a leapfrog solver for the weighted Neumann problem and a
//!   measurement device abstraction (simulated, recorded, or replayed).
//! * [`control`] — the time-axis operators `R`, `J`, `I`, `I^+` and the
//!   two-measurement connecting operator `K` that evaluates interior inner
//!   products of wave fields from boundary data alone
//!   (a Blagovestchenskii-type identity).
//! * [`minimize`] — the regularized quadratic program whose minimizer focuses
//!   the wave field onto the indicator of a domain of influence, solved by
//!   matrix-free conjugate gradients intertwined with measurements, with a
//!   continuation loop in the regularization strength.
//! * [`reconstruct`] — the semilattice of influence volumes, coordinate
//!   ascent to its maximal elements (boundary distance functions `r_x`), and
//!   the travel-time diameter they determine in one dimension.
//!
//! All state is immutable after construction and all operations are pure up
//! to measurement counters, so values can be shared freely across threads.

pub mod control;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod influence;
pub mod io;
pub mod minimize;
pub mod reconstruct;

pub use error::{Error, Result};
