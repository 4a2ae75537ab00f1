//! The two evaluation tasks: packing into a one-sided cabinet and navigation
//! among movable obstacles, with exact 2D feasibility and seeded generators.

pub mod generate;
pub mod geometry;
pub mod namo;
pub mod packing;

pub use generate::{gen_problem, gen_problem_with, GenConfig};
pub use geometry::{rect_overlap, Rect};
pub use namo::{namo_feasible, NamoLayout, NamoParams};
pub use packing::{packing_feasible, PackingLayout};
