//! Domains, grids, speed fields, travel times, and weighted volumes.
//!
//! The metric of interest is the travel-time metric `c^{-2} dx^2` induced by
//! a positive sound speed `c`. Its geodesic distance is computed by slowness
//! quadrature on the interval and by fast marching on the rectangle and
//! disk; its natural volume measure has interior density `c^{-2}` and
//! boundary density `c^{1-n}`.

mod fields;
pub mod fmm;
mod grid;
mod speed;
mod travel;

pub use fields::{BoundaryProfile, InteriorField};
pub use grid::{build_grids, BoundaryGrid, DomainSpec, Grids, InteriorGrid, Shape};
pub(crate) use grid::Layout;
pub use speed::{SpeedField, SpeedProfile};
pub use travel::{
    boundary_distance_function, mu_inner, mu_norm, natural_volume, travel_time_1d,
    travel_time_field_2d, DistanceAtlas,
};
