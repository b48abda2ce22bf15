//! Navigation grid, any-angle planning and social-force locomotion.

pub mod grid;
pub mod planner;
pub mod social_force;

pub use grid::{build_nav_grid, GridError, NavGrid};
pub use planner::{plan_on_grid, Path, PlanError, Planner, SearchMode, Waypoint, SNAP_DISTANCE};
pub use social_force::{social_force_step, Body, SocialForceParams};
