//! Packing: move every object from the tables into a cabinet that is open on
//! one side only.
//!
//! A placement is feasible when the object fits inside the cabinet and the
//! straight insertion corridor (the footprint swept from the entrance edge to
//! the placement) is clear of objects already inside.

use crate::domains::geometry::{rect_overlap, Rect};
use crate::problem::{ObjectSpec, Pose2, Problem, Region, Side, WorldState};

pub const CABINET: &str = "cabinet";
pub const TABLE: &str = "table";

/// Geometry of a packing instance, viewed from a [`Problem`].
#[derive(Clone, Debug)]
pub struct PackingLayout {
    pub cabinet: Region,
    pub spawn_tables: Vec<Rect>,
    pub objects: Vec<ObjectSpec>,
}

impl PackingLayout {
    pub fn from_problem(problem: &Problem) -> Option<Self> {
        let cabinet = problem.region_named(CABINET)?.clone();
        cabinet.entrance?;
        let spawn_tables = problem
            .regions
            .iter()
            .filter(|r| r.name == TABLE)
            .map(Rect::from_region)
            .collect();
        Some(Self { cabinet, spawn_tables, objects: problem.movable().to_vec() })
    }

    pub fn fill_ratio(&self) -> f64 {
        self.objects.iter().map(|o| o.w * o.h).sum::<f64>() / self.cabinet.area()
    }
}

/// The footprint swept from `footprint` out to the entrance edge of `cabinet`.
pub fn insertion_corridor(footprint: &Rect, cabinet: &Region) -> Rect {
    let (lo, hi) = footprint.bounds();
    let (min, max) = match cabinet.entrance.unwrap_or(Side::MaxX) {
        Side::MaxX => (lo, [cabinet.max[0], hi[1]]),
        Side::MinX => ([cabinet.min[0], lo[1]], hi),
        Side::MaxY => (lo, [hi[0], cabinet.max[1]]),
        Side::MinY => ([lo[0], cabinet.min[1]], hi),
    };
    Rect::aabb(min, max)
}

/// Is the object's center inside the cabinet footprint?
pub fn in_cabinet(pose: Pose2, cabinet: &Region) -> bool {
    pose.x > cabinet.min[0] && pose.x < cabinet.max[0] && pose.y > cabinet.min[1] && pose.y < cabinet.max[1]
}

/// Containment, non-overlap, and straight-corridor accessibility.
pub fn packing_feasible(state: &WorldState, object: &ObjectSpec, placement: Pose2, problem: &Problem) -> bool {
    let Some(cabinet) = problem.region_named(CABINET) else {
        return false;
    };
    feasible_in(state, object, placement, problem.movable(), cabinet)
}

pub(crate) fn feasible_in(
    state: &WorldState,
    object: &ObjectSpec,
    placement: Pose2,
    movable: &[ObjectSpec],
    cabinet: &Region,
) -> bool {
    let footprint = Rect::new(placement.x, placement.y, object.half_w(), object.half_h(), 0.0);
    if !footprint.inside_region(cabinet) {
        return false;
    }
    let corridor = insertion_corridor(&footprint, cabinet);
    for (other, &pose) in movable.iter().zip(&state.object_poses) {
        if other.id == object.id || !in_cabinet(pose, cabinet) {
            continue;
        }
        if rect_overlap(&corridor, &Rect::from_object(other, pose)) {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{DomainKind, DomainParams, GoalPair, ObjectKind};

    fn toy(n: usize) -> Problem {
        let objects = (0..n)
            .map(|id| ObjectSpec {
                id,
                w: 0.2,
                h: 0.2,
                kind: ObjectKind::Movable,
                pose: Pose2::xy(2.0 + 0.3 * id as f64, 0.5),
            })
            .collect();
        Problem {
            id: 0,
            domain: DomainKind::Packing,
            seed: 0,
            objects,
            regions: vec![Region {
                id: 0,
                name: CABINET.into(),
                min: [0.0, 0.0],
                max: [1.0, 0.6],
                entrance: Some(Side::MaxX),
            }],
            goal: (0..n).map(|object| GoalPair { object, region: 0 }).collect(),
            robot: Pose2::xy(3.0, 0.3),
            params: DomainParams::Packing,
        }
    }

    #[test]
    fn first_object_anywhere_inside_is_feasible() {
        let p = toy(2);
        let s = p.initial_state();
        assert!(packing_feasible(&s, p.object(0), Pose2::xy(0.5, 0.3), &p));
        assert!(packing_feasible(&s, p.object(0), Pose2::xy(0.1, 0.1), &p));
    }

    #[test]
    fn wall_overlap_is_infeasible() {
        let p = toy(1);
        let s = p.initial_state();
        assert!(!packing_feasible(&s, p.object(0), Pose2::xy(0.05, 0.3), &p));
        assert!(!packing_feasible(&s, p.object(0), Pose2::xy(0.5, 0.55), &p));
    }

    #[test]
    fn object_near_entrance_blocks_deeper_placement() {
        let p = toy(2);
        let mut s = p.initial_state();
        s.object_poses[0] = Pose2::xy(0.85, 0.35);
        // Directly behind object 0 along the insertion direction.
        assert!(!packing_feasible(&s, p.object(1), Pose2::xy(0.3, 0.3), &p));
        // Beside it, in a free lane.
        assert!(packing_feasible(&s, p.object(1), Pose2::xy(0.3, 0.12), &p));
        // Overlapping it.
        assert!(!packing_feasible(&s, p.object(1), Pose2::xy(0.8, 0.35), &p));
    }

    fn close(a: ([f64; 2], [f64; 2]), b: ([f64; 2], [f64; 2])) -> bool {
        [a.0[0] - b.0[0], a.0[1] - b.0[1], a.1[0] - b.1[0], a.1[1] - b.1[1]].iter().all(|d| d.abs() < 1e-12)
    }

    #[test]
    fn corridor_for_each_side() {
        let mut cab = Region { id: 0, name: CABINET.into(), min: [0.0, 0.0], max: [1.0, 1.0], entrance: Some(Side::MinY) };
        let f = Rect::new(0.5, 0.5, 0.1, 0.1, 0.0);
        assert!(close(insertion_corridor(&f, &cab).bounds(), ([0.4, 0.0], [0.6, 0.6])));
        cab.entrance = Some(Side::MinX);
        assert!(close(insertion_corridor(&f, &cab).bounds(), ([0.0, 0.4], [0.6, 0.6])));
        cab.entrance = Some(Side::MaxY);
        assert!(close(insertion_corridor(&f, &cab).bounds(), ([0.4, 0.4], [0.6, 1.0])));
        cab.entrance = Some(Side::MaxX);
        assert!(close(insertion_corridor(&f, &cab).bounds(), ([0.4, 0.4], [1.0, 0.6])));
    }
}
