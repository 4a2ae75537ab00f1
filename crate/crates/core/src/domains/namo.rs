//! Navigation among movable obstacles.
//!
//! Blockers sit on the straight corridor between the robot and the target.
//! The robot walks along the corridor centerline, stops in front of each
//! blocker, and sets it down somewhere on an arc around its standing pose.
//! Finally it picks up the target and walks back to the goal region carrying
//! it. A blocker dropped back onto the corridor only shows up as a failure at
//! that last step.

use serde::{Deserialize, Serialize};

use crate::domains::geometry::{capsule_overlaps, rect_overlap, Rect};
use crate::problem::{wrap_angle, GroundedOperator, ObjectKind, ObjectSpec, Pose2, Problem, Region, WorldState};

pub const FLOOR: &str = "floor";
pub const GOAL: &str = "goal";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamoParams {
    pub robot_radius: f64,
    /// Radius of the placement arc around the robot's standing pose.
    pub arc_radius: f64,
    /// Arc extent in radians, measured from the +x heading; `arc_start < arc_end`.
    pub arc_start: f64,
    pub arc_end: f64,
    pub corridor_y: f64,
    /// Gap between the robot disc and the object it is about to pick up.
    pub standoff: f64,
}

impl Default for NamoParams {
    fn default() -> Self {
        Self {
            robot_radius: 0.1,
            arc_radius: 0.4,
            arc_start: std::f64::consts::FRAC_PI_3,
            arc_end: 5.0 * std::f64::consts::FRAC_PI_3,
            corridor_y: 1.0,
            standoff: 0.02,
        }
    }
}

/// Geometry of a NAMO instance, viewed from a [`Problem`].
#[derive(Clone, Debug)]
pub struct NamoLayout {
    pub room: Rect,
    pub fixed_boxes: Vec<Rect>,
    pub blockers: Vec<ObjectSpec>,
    pub target: ObjectSpec,
    pub goal_region: Region,
    pub robot_radius: f64,
}

impl NamoLayout {
    pub fn from_problem(problem: &Problem, params: &NamoParams) -> Option<Self> {
        Some(Self {
            room: Rect::from_region(problem.region_named(FLOOR)?),
            fixed_boxes: problem.fixed().map(|o| Rect::from_object(o, o.pose)).collect(),
            blockers: problem.movable().iter().filter(|o| o.kind == ObjectKind::Movable).copied().collect(),
            target: *problem.target()?,
            goal_region: problem.region_named(GOAL)?.clone(),
            robot_radius: params.robot_radius,
        })
    }
}

/// Where the robot stands to pick up `object` from its initial pose.
pub fn standing_pose(object: &ObjectSpec, params: &NamoParams) -> Pose2 {
    let (lo, _) = Rect::from_object(object, object.pose).bounds();
    Pose2::xy(lo[0] - params.robot_radius - params.standoff, params.corridor_y)
}

/// Offset along +x from the robot center to a carried object's center.
pub fn carry_offset(object: &ObjectSpec, params: &NamoParams) -> f64 {
    object.pose.x - standing_pose(object, params).x
}

/// Robot base after executing `op` with `placement`.
pub fn robot_pose_after(op: &GroundedOperator, placement: Pose2, problem: &Problem, params: &NamoParams) -> Pose2 {
    let o = problem.object(op.object);
    match o.kind {
        ObjectKind::Target => Pose2::xy(placement.x - carry_offset(o, params), params.corridor_y),
        _ => standing_pose(o, params),
    }
}

/// Is `placement` on the sampling arc around `center`?
pub fn on_arc(center: Pose2, placement: Pose2, params: &NamoParams) -> bool {
    let dx = placement.x - center.x;
    let dy = placement.y - center.y;
    if (dx.hypot(dy) - params.arc_radius).abs() > 1e-7 {
        return false;
    }
    let rel = (dy.atan2(dx) - params.arc_start).rem_euclid(std::f64::consts::TAU);
    rel <= params.arc_end - params.arc_start + 1e-9
}

struct Obstacles {
    fixed: Vec<Rect>,
    movable: Vec<Rect>,
}

impl Obstacles {
    fn gather(state: &WorldState, problem: &Problem, skip: usize) -> Self {
        let fixed = problem.fixed().map(|o| Rect::from_object(o, o.pose)).collect();
        let movable = problem
            .movable()
            .iter()
            .zip(&state.object_poses)
            .filter(|(o, _)| o.id != skip)
            .map(|(o, &p)| Rect::from_object(o, p))
            .collect();
        Self { fixed, movable }
    }

    fn iter(&self) -> impl Iterator<Item = &Rect> {
        self.fixed.iter().chain(&self.movable)
    }

    fn overlaps(&self, r: &Rect) -> bool {
        self.iter().any(|o| rect_overlap(r, o))
    }

    fn blocks_path(&self, a: Pose2, b: Pose2, radius: f64) -> bool {
        self.iter().any(|o| capsule_overlaps([a.x, a.y], [b.x, b.y], radius, o))
    }
}

/// Feasibility of a blocker relocation or of the final target-to-goal move.
pub fn namo_feasible(state: &WorldState, op: &GroundedOperator, placement: Pose2, problem: &Problem, params: &NamoParams) -> bool {
    let object = problem.object(op.object);
    let obstacles = Obstacles::gather(state, problem, op.object);
    let stand = standing_pose(object, params);
    let r = params.robot_radius;
    let footprint = Rect::from_object(object, placement);

    match object.kind {
        ObjectKind::Movable => {
            let Some(room) = problem.region_named(FLOOR) else {
                return false;
            };
            on_arc(stand, placement, params)
                && footprint.inside_region(room)
                && !obstacles.overlaps(&footprint)
                && !obstacles.blocks_path(state.robot_base, stand, r)
        }
        ObjectKind::Target => {
            let Some(goal) = problem.region_named(GOAL) else {
                return false;
            };
            if !footprint.inside_region(goal) || !(placement.theta == 0.0 && object.pose.theta == 0.0) {
                return false;
            }
            if obstacles.blocks_path(state.robot_base, stand, r) {
                return false;
            }
            let drop = Pose2::xy(placement.x - carry_offset(object, params), params.corridor_y);
            if obstacles.blocks_path(stand, drop, r) {
                return false;
            }
            let start = Rect::from_object(object, state.object_poses[op.object]);
            let (a_lo, a_hi) = start.bounds();
            let (b_lo, b_hi) = footprint.bounds();
            let swept = Rect::aabb(
                [a_lo[0].min(b_lo[0]), a_lo[1].min(b_lo[1])],
                [a_hi[0].max(b_hi[0]), a_hi[1].max(b_hi[1])],
            );
            !obstacles.overlaps(&swept)
        }
        ObjectKind::Fixed => false,
    }
}

/// Pose on the placement arc at angle `phi`; the object turns with the arc.
pub fn arc_pose(center: Pose2, phi: f64, params: &NamoParams) -> Pose2 {
    Pose2::new(
        center.x + params.arc_radius * phi.cos(),
        center.y + params.arc_radius * phi.sin(),
        wrap_angle(phi),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{ground_skeleton, ContinuousValue, DomainKind, DomainParams, GoalPair};
    use std::f64::consts::PI;

    /// One blocker on the corridor, one fixed box off to the side.
    pub(crate) fn toy() -> Problem {
        let params = NamoParams::default();
        Problem {
            id: 0,
            domain: DomainKind::Namo,
            seed: 0,
            objects: vec![
                ObjectSpec { id: 0, w: 0.16, h: 0.16, kind: ObjectKind::Movable, pose: Pose2::xy(1.6, 1.0) },
                ObjectSpec { id: 1, w: 0.16, h: 0.16, kind: ObjectKind::Target, pose: Pose2::xy(3.5, 1.0) },
                ObjectSpec { id: 2, w: 0.3, h: 0.3, kind: ObjectKind::Fixed, pose: Pose2::xy(1.5, 1.6) },
            ],
            regions: vec![
                Region { id: 0, name: FLOOR.into(), min: [0.0, 0.0], max: [4.0, 2.0], entrance: None },
                Region { id: 1, name: GOAL.into(), min: [0.45, 0.8], max: [1.05, 1.2], entrance: None },
            ],
            goal: vec![GoalPair { object: 1, region: 1 }],
            robot: Pose2::xy(0.25, 1.0),
            params: DomainParams::Namo(params),
        }
    }

    fn value(p: Pose2) -> ContinuousValue {
        ContinuousValue { placement: p, epoch: 0, level: 0, sample_id: 0 }
    }

    #[test]
    fn relocating_off_corridor_then_returning_succeeds() {
        let p = toy();
        let DomainParams::Namo(params) = &p.params else { unreachable!() };
        let sk = ground_skeleton(&p);
        let s0 = p.initial_state();
        let stand = standing_pose(p.object(0), params);
        // Straight down, away from the fixed box and the corridor.
        let q = arc_pose(stand, 1.5 * PI, params);
        assert!(namo_feasible(&s0, &sk.steps[0], q, &p, params));
        let s1 = crate::problem::apply_transition(&s0, &sk.steps[0], &value(q), &p);
        assert_eq!(s1.robot_base, stand);
        let drop = Pose2::xy(0.8, 1.0);
        assert!(namo_feasible(&s1, &sk.steps[1], drop, &p, params));
    }

    #[test]
    fn blocker_dropped_on_return_corridor_dooms_last_step() {
        let p = toy();
        let DomainParams::Namo(params) = &p.params else { unreachable!() };
        let sk = ground_skeleton(&p);
        let s0 = p.initial_state();
        let stand = standing_pose(p.object(0), params);
        let q = arc_pose(stand, PI, params);
        assert!(namo_feasible(&s0, &sk.steps[0], q, &p, params));
        let s1 = crate::problem::apply_transition(&s0, &sk.steps[0], &value(q), &p);
        for x in [0.6, 0.75, 0.9] {
            assert!(!namo_feasible(&s1, &sk.steps[1], Pose2::xy(x, 1.0), &p, params));
        }
    }

    #[test]
    fn placement_on_fixed_box_is_infeasible() {
        let p = toy();
        let DomainParams::Namo(params) = &p.params else { unreachable!() };
        let sk = ground_skeleton(&p);
        let stand = standing_pose(p.object(0), params);
        // Up and slightly back lands on the fixed box at (1.5, 1.6).
        let q = arc_pose(stand, 0.5 * PI, params);
        assert!(rect_overlap(&Rect::from_object(p.object(0), q), &Rect::from_object(p.object(2), p.object(2).pose)));
        assert!(!namo_feasible(&p.initial_state(), &sk.steps[0], q, &p, params));
    }

    #[test]
    fn arc_membership() {
        let params = NamoParams::default();
        let c = Pose2::xy(1.0, 1.0);
        assert!(on_arc(c, arc_pose(c, PI, &params), &params));
        assert!(on_arc(c, arc_pose(c, params.arc_start, &params), &params));
        assert!(!on_arc(c, arc_pose(c, 0.0, &params), &params));
        assert!(!on_arc(c, Pose2::xy(1.2, 1.0), &params));
    }
}
