//! The hybrid-CSP view of a geometric task-and-motion planning instance.
//!
//! A [`Problem`] bundles movable objects, regions, fixed geometry, a goal, and
//! the initial state. A [`PlanSkeleton`] fixes the discrete choice at every
//! level (which object goes to which region); search then refines one
//! [`ContinuousValue`] per level. Feasibility and transition are pure functions
//! of `(state, operator, value)` and dispatch to the domain implementations.

use std::cell::Cell;
use std::f64::consts::PI;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::domains::{namo, packing};
use crate::error::{contract, input, Result};

/// Planar pose. `theta` is kept in `[-pi, pi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn xy(x: f64, y: f64) -> Self {
        Self { x, y, theta: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if t >= PI {
        -PI
    } else {
        t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Packing,
    Namo,
}

impl std::fmt::Display for DomainKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DomainKind::Packing => "packing",
            DomainKind::Namo => "namo",
        })
    }
}

impl std::str::FromStr for DomainKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "packing" => Ok(DomainKind::Packing),
            "namo" => Ok(DomainKind::Namo),
            other => input(format!("unknown domain `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Movable,
    Fixed,
    Target,
}

/// An object in the scene. `w`/`h` are full extents along the object's local
/// x/y axes; `pose` is the initial pose.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: usize,
    pub w: f64,
    pub h: f64,
    pub kind: ObjectKind,
    pub pose: Pose2,
}

impl ObjectSpec {
    pub fn half_w(&self) -> f64 {
        0.5 * self.w
    }

    pub fn half_h(&self) -> f64 {
        0.5 * self.h
    }

    pub fn is_movable(&self) -> bool {
        !matches!(self.kind, ObjectKind::Fixed)
    }
}

/// Side of an axis-aligned region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    MinX,
    MaxX,
    MinY,
    MaxY,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: usize,
    pub name: String,
    pub min: [f64; 2],
    pub max: [f64; 2],
    /// The open edge, for regions that can only be entered from one side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entrance: Option<Side>,
}

impl Region {
    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalPair {
    pub object: usize,
    pub region: usize,
}

/// Domain constants that are not objects or regions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DomainParams {
    Packing,
    Namo(namo::NamoParams),
}

/// A geometric TAMP instance. Immutable after construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: u64,
    pub domain: DomainKind,
    pub seed: u64,
    /// Movable objects (ids `0..n_movable`) followed by fixed objects.
    pub objects: Vec<ObjectSpec>,
    pub regions: Vec<Region>,
    pub goal: Vec<GoalPair>,
    pub robot: Pose2,
    pub params: DomainParams,
}

/// Robot base plus one pose per movable object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub robot_base: Pose2,
    pub object_poses: Vec<Pose2>,
}

impl WorldState {
    /// Poses-only projection used by the learned models.
    pub fn poses(&self) -> &[Pose2] {
        &self.object_poses
    }
}

/// Discrete half of a refined operator: move `object` into `region` at `step`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundedOperator {
    pub step: usize,
    pub object: usize,
    pub region: usize,
}

/// Identity of a sampled value. Two values are the same value iff tags match.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ValueTag {
    pub epoch: u64,
    pub level: usize,
    pub sample_id: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousValue {
    pub placement: Pose2,
    pub epoch: u64,
    pub level: usize,
    pub sample_id: usize,
}

impl ContinuousValue {
    pub fn tag(&self) -> ValueTag {
        ValueTag { epoch: self.epoch, level: self.level, sample_id: self.sample_id }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanSkeleton {
    pub steps: Vec<GroundedOperator>,
}

impl PlanSkeleton {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn object_at(&self, level: usize) -> usize {
        self.steps[level].object
    }
}

/// A refined prefix: values for levels `0..k` and the induced states `s_0..s_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialPlan {
    assigned: Vec<ContinuousValue>,
    states: Vec<WorldState>,
}

impl PartialPlan {
    pub fn new(initial: WorldState) -> Self {
        Self { assigned: Vec::new(), states: vec![initial] }
    }

    /// Rebuilds a plan by replaying `values` from the initial state, checking
    /// every refinement on the way.
    pub fn replay(problem: &Problem, skeleton: &PlanSkeleton, values: &[ContinuousValue]) -> Result<Self> {
        let mut plan = Self::new(problem.initial_state());
        for (level, value) in values.iter().enumerate() {
            let Some(op) = skeleton.steps.get(level) else {
                return input(format!("{} values for a skeleton of length {}", values.len(), skeleton.len()));
            };
            let next = apply_transition_checked(plan.state(), op, value, problem)?;
            plan.push(*value, next);
        }
        Ok(plan)
    }

    /// Number of assigned levels.
    pub fn depth(&self) -> usize {
        self.assigned.len()
    }

    /// Current (deepest) state.
    pub fn state(&self) -> &WorldState {
        self.states.last().expect("a plan always holds the initial state")
    }

    pub fn state_at(&self, k: usize) -> &WorldState {
        &self.states[k]
    }

    pub fn states(&self) -> &[WorldState] {
        &self.states
    }

    pub fn assigned(&self) -> &[ContinuousValue] {
        &self.assigned
    }

    pub fn tags(&self) -> Vec<ValueTag> {
        self.assigned.iter().map(ContinuousValue::tag).collect()
    }

    pub fn push(&mut self, value: ContinuousValue, next: WorldState) {
        self.assigned.push(value);
        self.states.push(next);
    }

    /// Drops every assignment at level `k` and above.
    pub fn truncate(&mut self, k: usize) {
        self.assigned.truncate(k);
        self.states.truncate(k + 1);
    }
}

impl Problem {
    pub fn n_movable(&self) -> usize {
        self.objects.iter().filter(|o| o.is_movable()).count()
    }

    pub fn object(&self, id: usize) -> &ObjectSpec {
        &self.objects[id]
    }

    pub fn movable(&self) -> &[ObjectSpec] {
        &self.objects[..self.n_movable()]
    }

    pub fn fixed(&self) -> impl Iterator<Item = &ObjectSpec> {
        self.objects.iter().filter(|o| !o.is_movable())
    }

    pub fn region(&self, id: usize) -> &Region {
        &self.regions[id]
    }

    pub fn region_named(&self, name: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn target(&self) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.kind == ObjectKind::Target)
    }

    pub fn initial_state(&self) -> WorldState {
        WorldState {
            robot_base: self.robot,
            object_poses: self.movable().iter().map(|o| o.pose).collect(),
        }
    }

    /// Checks the structural invariants of the instance.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_movable();
        for (i, o) in self.objects.iter().enumerate() {
            if o.id != i {
                return input(format!("object ids must be dense and ordered; found {} at index {i}", o.id));
            }
            if !(o.w > 0.0 && o.h > 0.0) {
                return input(format!("object {} has non-positive extent", o.id));
            }
            if o.is_movable() != (i < n) {
                return input("movable objects must precede fixed objects");
            }
            if !o.pose.is_finite() {
                return input(format!("object {} has a non-finite pose", o.id));
            }
        }
        for (i, r) in self.regions.iter().enumerate() {
            if r.id != i {
                return input(format!("region ids must be dense; found {} at index {i}", r.id));
            }
            if !(r.area() > 0.0) {
                return input(format!("region {} has no area", r.name));
            }
        }
        for g in &self.goal {
            if g.object >= n || g.region >= self.regions.len() {
                return input(format!("goal pair {g:?} references unknown ids"));
            }
        }
        match (&self.domain, &self.params) {
            (DomainKind::Packing, DomainParams::Packing) => {
                if self.region_named(packing::CABINET).and_then(|r| r.entrance).is_none() {
                    return input("packing problems need a cabinet region with an entrance");
                }
            }
            (DomainKind::Namo, DomainParams::Namo(_)) => {
                if self.target().is_none() {
                    return input("namo problems need a target object");
                }
            }
            _ => return input("domain and params disagree"),
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let p: Problem = serde_json::from_str(line)?;
        p.validate()?;
        Ok(p)
    }
}

/// Writes problems as JSON Lines.
pub fn write_problems<W: Write>(mut out: W, problems: &[Problem]) -> Result<()> {
    for p in problems {
        writeln!(out, "{}", p.to_json_line()?)?;
    }
    Ok(())
}

pub fn read_problems<R: BufRead>(reader: R) -> Result<Vec<Problem>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(Problem::from_json_line(&line)?);
    }
    Ok(out)
}

/// Builds the templated skeleton for a problem.
///
/// Packing moves every movable object into the cabinet in id order. NAMO
/// relocates every blocker in id order onto the floor, then carries the target
/// to the goal region.
pub fn ground_skeleton(problem: &Problem) -> PlanSkeleton {
    let steps = match problem.domain {
        DomainKind::Packing => {
            let cabinet = problem.region_named(packing::CABINET).map_or(0, |r| r.id);
            problem
                .movable()
                .iter()
                .enumerate()
                .map(|(step, o)| GroundedOperator { step, object: o.id, region: cabinet })
                .collect()
        }
        DomainKind::Namo => {
            let floor = problem.region_named(namo::FLOOR).map_or(0, |r| r.id);
            let goal = problem.region_named(namo::GOAL).map_or(0, |r| r.id);
            let mut steps: Vec<GroundedOperator> = problem
                .movable()
                .iter()
                .filter(|o| o.kind == ObjectKind::Movable)
                .enumerate()
                .map(|(step, o)| GroundedOperator { step, object: o.id, region: floor })
                .collect();
            if let Some(t) = problem.target() {
                steps.push(GroundedOperator { step: steps.len(), object: t.id, region: goal });
            }
            steps
        }
    };
    PlanSkeleton { steps }
}

thread_local! {
    static FEASIBILITY_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of [`check_feasible`] invocations made on the current thread.
pub fn feasibility_calls() -> u64 {
    FEASIBILITY_CALLS.with(Cell::get)
}

/// Is refining `op` with `value` in `state` geometrically feasible?
///
/// A non-finite placement is an input error, not a `false`.
pub fn check_feasible(state: &WorldState, op: &GroundedOperator, value: &ContinuousValue, problem: &Problem) -> Result<bool> {
    FEASIBILITY_CALLS.with(|c| c.set(c.get() + 1));
    if !value.placement.is_finite() {
        return input(format!("non-finite placement {:?}", value.placement));
    }
    if op.object >= state.object_poses.len() {
        return input(format!("object {} is not movable in this state", op.object));
    }
    Ok(match &problem.params {
        DomainParams::Packing => packing::packing_feasible(state, problem.object(op.object), value.placement, problem),
        DomainParams::Namo(params) => namo::namo_feasible(state, op, value.placement, problem, params),
    })
}

/// Deterministic effect of a feasible refinement.
///
/// The caller is trusted to have checked feasibility; [`apply_transition_checked`]
/// re-verifies and reports a contract violation otherwise.
pub fn apply_transition(state: &WorldState, op: &GroundedOperator, value: &ContinuousValue, problem: &Problem) -> WorldState {
    let mut next = state.clone();
    next.object_poses[op.object] = value.placement;
    if let DomainParams::Namo(params) = &problem.params {
        next.robot_base = namo::robot_pose_after(op, value.placement, problem, params);
    }
    next
}

pub fn apply_transition_checked(state: &WorldState, op: &GroundedOperator, value: &ContinuousValue, problem: &Problem) -> Result<WorldState> {
    if !check_feasible(state, op, value, problem)? {
        return contract(format!("transition requested for infeasible refinement of step {}", op.step));
    }
    Ok(apply_transition(state, op, value, problem))
}

/// True iff every goal predicate `InRegion(object, region)` holds.
pub fn goal_satisfied(state: &WorldState, problem: &Problem) -> bool {
    problem.goal.iter().all(|g| {
        let o = problem.object(g.object);
        let pose = state.object_poses[g.object];
        crate::domains::geometry::Rect::from_object(o, pose).inside_region(problem.region(g.region))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        for t in [-7.0, -PI, -1.0, 0.0, 1.0, PI, 3.5 * PI, 1e3] {
            let w = wrap_angle(t);
            assert!((-PI..PI).contains(&w), "{t} -> {w}");
        }
        assert_eq!(wrap_angle(PI), -PI);
    }

    #[test]
    fn partial_plan_truncate_keeps_initial_state() {
        let s0 = WorldState { robot_base: Pose2::xy(0.0, 0.0), object_poses: vec![Pose2::xy(1.0, 1.0)] };
        let mut plan = PartialPlan::new(s0.clone());
        let v = ContinuousValue { placement: Pose2::xy(0.5, 0.5), epoch: 0, level: 0, sample_id: 0 };
        let mut s1 = s0.clone();
        s1.object_poses[0] = v.placement;
        plan.push(v, s1);
        assert_eq!(plan.depth(), 1);
        plan.truncate(0);
        assert_eq!(plan.depth(), 0);
        assert_eq!(plan.state(), &s0);
    }
}
