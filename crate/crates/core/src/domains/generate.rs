//! Seeded instance generators.
//!
//! Every instance is certified solvable before it is returned: plain
//! backtracking with a generous per-level sample count must find a plan within
//! a node budget. The witness plan itself is thrown away.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domains::geometry::{rect_overlap, Rect};
use crate::domains::namo::{NamoParams, FLOOR, GOAL};
use crate::domains::packing::{CABINET, TABLE};
use crate::error::{Error, Result};
use crate::problem::{
    ground_skeleton, DomainKind, DomainParams, GoalPair, ObjectKind, ObjectSpec, Pose2, Problem, Region, Side,
};
use crate::sampling::{mix, StreamKey};
use crate::search::{backtrack_solve, SearchBudget, TraceOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    /// Cabinet interior size (packing).
    pub cabinet: [f64; 2],
    /// Total object area as a fraction of the cabinet area (packing).
    pub fill_ratio: f64,
    /// Relative spread of object sizes around the mean (packing).
    pub size_spread: f64,
    /// Number of fixed boxes (NAMO).
    pub n_fixed: usize,
    pub namo: NamoParams,
    /// Samples per level for the solvability witness.
    pub witness_n: usize,
    pub witness_nodes: u64,
    pub max_retries: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            cabinet: [1.0, 0.6],
            fill_ratio: 0.45,
            size_spread: 0.5,
            n_fixed: 10,
            namo: NamoParams::default(),
            witness_n: 30,
            witness_nodes: 200_000,
            max_retries: 50,
        }
    }
}

/// [`gen_problem_with`] under the default configuration, with `id = seed`.
pub fn gen_problem(domain: DomainKind, n_objects: usize, seed: u64) -> Result<Problem> {
    gen_problem_with(&GenConfig::default(), domain, n_objects, seed, seed)
}

pub fn gen_problem_with(cfg: &GenConfig, domain: DomainKind, n_objects: usize, seed: u64, id: u64) -> Result<Problem> {
    if n_objects == 0 {
        return Err(Error::Input("problems need at least one object".into()));
    }
    for attempt in 0..cfg.max_retries {
        let mut rng = StreamKey::new(mix(&[seed, attempt as u64, 0x6e6e]), 0).rng(0);
        let candidate = match domain {
            DomainKind::Packing => packing_candidate(cfg, n_objects, &mut rng),
            DomainKind::Namo => namo_candidate(cfg, n_objects, &mut rng),
        };
        let Some(mut problem) = candidate else { continue };
        problem.id = id;
        problem.seed = seed;
        problem.validate()?;
        if certify(cfg, &problem, mix(&[seed, attempt as u64]))? {
            return Ok(problem);
        }
    }
    Err(Error::Generation(format!(
        "no certified {domain} instance with {n_objects} objects after {} attempts (seed {seed})",
        cfg.max_retries
    )))
}

fn certify(cfg: &GenConfig, problem: &Problem, seed: u64) -> Result<bool> {
    let skeleton = ground_skeleton(problem);
    let budget = SearchBudget::nodes(cfg.witness_nodes, cfg.witness_n);
    Ok(backtrack_solve(problem, &skeleton, &budget, seed, TraceOptions::NONE)?.outcome.is_solved())
}

fn packing_candidate<R: Rng>(cfg: &GenConfig, n: usize, rng: &mut R) -> Option<Problem> {
    let [cw, ch] = cfg.cabinet;
    let mean_area = cfg.fill_ratio * cw * ch / n as f64;
    let s = cfg.size_spread;
    let mut dims: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            let aspect: f64 = rng.gen_range(0.6..1.6);
            let area = mean_area * rng.gen_range(1.0 - 0.5 * s..1.0 + 0.5 * s);
            [(area * aspect).sqrt(), (area / aspect).sqrt()]
        })
        .collect();
    let total: f64 = dims.iter().map(|d| d[0] * d[1]).sum();
    let scale = (cfg.fill_ratio * cw * ch / total).sqrt();
    for d in &mut dims {
        d[0] = (d[0] * scale).min(0.9 * cw);
        d[1] = (d[1] * scale).min(0.9 * ch);
    }
    // Objects wait in a row on the table beside the cabinet.
    let table_x0 = cw + 0.3;
    let gap = 0.05;
    let mut x = table_x0 + gap;
    let mut objects = Vec::with_capacity(n);
    for (id, d) in dims.iter().enumerate() {
        objects.push(ObjectSpec {
            id,
            w: d[0],
            h: d[1],
            kind: ObjectKind::Movable,
            pose: Pose2::xy(x + 0.5 * d[0], 0.5 * ch),
        });
        x += d[0] + gap;
    }
    let regions = vec![
        Region { id: 0, name: CABINET.into(), min: [0.0, 0.0], max: [cw, ch], entrance: Some(Side::MaxX) },
        Region { id: 1, name: TABLE.into(), min: [table_x0, 0.0], max: [x, ch], entrance: None },
    ];
    Some(Problem {
        id: 0,
        domain: DomainKind::Packing,
        seed: 0,
        goal: (0..n).map(|object| GoalPair { object, region: 0 }).collect(),
        objects,
        regions,
        robot: Pose2::xy(x + 0.3, 0.5 * ch),
        params: DomainParams::Packing,
    })
}

fn namo_candidate<R: Rng>(cfg: &GenConfig, n_blockers: usize, rng: &mut R) -> Option<Problem> {
    let p = &cfg.namo;
    let cy = p.corridor_y;
    let mut objects = Vec::new();
    let mut x = 1.4;
    for id in 0..n_blockers {
        let w = rng.gen_range(0.12..0.2);
        let h = rng.gen_range(0.12..0.2);
        let y = cy + rng.gen_range(-0.05..0.05);
        objects.push(ObjectSpec { id, w, h, kind: ObjectKind::Movable, pose: Pose2::xy(x, y) });
        x += 0.5 + rng.gen_range(0.0..0.05);
    }
    let target = ObjectSpec { id: n_blockers, w: 0.16, h: 0.16, kind: ObjectKind::Target, pose: Pose2::xy(x + 0.05, cy) };
    objects.push(target);
    let room_max = [target.pose.x + 0.45, 2.0 * cy];

    // Fixed boxes stay clear of the corridor band the robot and the carried
    // target sweep, but crowd the placement arcs.
    let clearance = p.robot_radius.max(target.half_h()) + 0.05;
    let mut fixed: Vec<Rect> = Vec::new();
    let mut tries = 0;
    while fixed.len() < cfg.n_fixed && tries < 200 * cfg.n_fixed.max(1) {
        tries += 1;
        let hw = rng.gen_range(0.075..0.15);
        let hh = rng.gen_range(0.075..0.15);
        let rx = rng.gen_range(1.0..target.pose.x);
        let ry = rng.gen_range(hh..room_max[1] - hh);
        let r = Rect::new(rx, ry, hw, hh, 0.0);
        if (ry - cy).abs() - hh < clearance {
            continue;
        }
        if fixed.iter().any(|f| rect_overlap(f, &r))
            || objects.iter().any(|o| rect_overlap(&Rect::from_object(o, o.pose), &r))
        {
            continue;
        }
        fixed.push(r);
    }
    for r in fixed {
        let id = objects.len();
        objects.push(ObjectSpec {
            id,
            w: 2.0 * r.half_w,
            h: 2.0 * r.half_h,
            kind: ObjectKind::Fixed,
            pose: Pose2::xy(r.cx, r.cy),
        });
    }
    let regions = vec![
        Region { id: 0, name: FLOOR.into(), min: [0.0, 0.0], max: room_max, entrance: None },
        Region { id: 1, name: GOAL.into(), min: [0.45, cy - 0.25], max: [1.05, cy + 0.25], entrance: None },
    ];
    Some(Problem {
        id: 0,
        domain: DomainKind::Namo,
        seed: 0,
        goal: vec![GoalPair { object: n_blockers, region: 1 }],
        objects,
        regions,
        robot: Pose2::xy(0.25, cy),
        params: DomainParams::Namo(p.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_valid() {
        for domain in [DomainKind::Packing, DomainKind::Namo] {
            let a = gen_problem(domain, 4, 7).unwrap();
            let b = gen_problem(domain, 4, 7).unwrap();
            assert_eq!(a.to_json_line().unwrap(), b.to_json_line().unwrap());
            a.validate().unwrap();
        }
    }

    #[test]
    fn zero_objects_is_an_error() {
        assert!(matches!(gen_problem(DomainKind::Packing, 0, 1), Err(Error::Input(_))));
    }
}
