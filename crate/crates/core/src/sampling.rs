//! Seeded continuous-value sampling.
//!
//! Every batch is drawn from its own ChaCha8 stream whose seed is a hash of
//! `(problem seed, epoch, level)`. A batch can therefore be regenerated from
//! its tags alone, which is what lets the forgetting search redraw at every
//! level visit and still replay bit-identically.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domains::namo::{self, NamoParams};
use crate::domains::packing::CABINET;
use crate::problem::{ContinuousValue, DomainParams, ObjectKind, PlanSkeleton, Pose2, Problem};

/// Identity of one batch stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub epoch: u64,
}

impl StreamKey {
    pub fn new(seed: u64, epoch: u64) -> Self {
        Self { seed, epoch }
    }

    pub fn rng(&self, level: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix(&[self.seed, self.epoch, level as u64]))
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive 64-bit hash of a word sequence.
pub fn mix(words: &[u64]) -> u64 {
    words.iter().fold(0x51_7cc1_b727_220a, |h, &w| splitmix(h ^ splitmix(w)))
}

/// The set a level's values are drawn from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SamplingDomain {
    /// Object centers, axis-aligned, uniform over a box.
    Box { min: [f64; 2], max: [f64; 2] },
    /// Uniform arc angle; the pose sits on the arc and faces along the radius.
    Arc { center: Pose2, radius: f64, start: f64, end: f64 },
    /// Uniform x on a horizontal segment, axis-aligned.
    Segment { x0: f64, x1: f64, y: f64 },
}

impl SamplingDomain {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Pose2 {
        match *self {
            SamplingDomain::Box { min, max } => {
                Pose2::xy(uniform(rng, min[0], max[0]), uniform(rng, min[1], max[1]))
            }
            SamplingDomain::Arc { center, radius, start, end } => {
                let phi = uniform(rng, start, end);
                Pose2::new(center.x + radius * phi.cos(), center.y + radius * phi.sin(), phi)
            }
            SamplingDomain::Segment { x0, x1, y } => Pose2::xy(uniform(rng, x0, x1), y),
        }
    }

    pub fn contains(&self, p: Pose2) -> bool {
        const EPS: f64 = 1e-9;
        match *self {
            SamplingDomain::Box { min, max } => {
                p.theta == 0.0
                    && (min[0] - EPS..=max[0] + EPS).contains(&p.x)
                    && (min[1] - EPS..=max[1] + EPS).contains(&p.y)
            }
            SamplingDomain::Arc { center, radius, start, end } => {
                let params = NamoParams { arc_radius: radius, arc_start: start, arc_end: end, ..Default::default() };
                namo::on_arc(center, p, &params)
            }
            SamplingDomain::Segment { x0, x1, y } => {
                p.theta == 0.0 && p.y == y && (x0 - EPS..=x1 + EPS).contains(&p.x)
            }
        }
    }
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// The sampling domain of `level`.
///
/// Packing draws centers over the cabinet floor where the object fits. NAMO
/// draws blocker placements on the arc around the standing pose and target
/// drops along the corridor inside the goal region.
pub fn level_domain(problem: &Problem, skeleton: &PlanSkeleton, level: usize) -> SamplingDomain {
    let object = problem.object(skeleton.object_at(level));
    match &problem.params {
        DomainParams::Packing => {
            let cab = problem.region_named(CABINET).expect("validated packing problem has a cabinet");
            SamplingDomain::Box {
                min: [cab.min[0] + object.half_w(), cab.min[1] + object.half_h()],
                max: [cab.max[0] - object.half_w(), cab.max[1] - object.half_h()],
            }
        }
        DomainParams::Namo(params) => match object.kind {
            ObjectKind::Target => {
                let goal = problem.region_named(namo::GOAL).expect("validated namo problem has a goal");
                SamplingDomain::Segment {
                    x0: goal.min[0] + object.half_w(),
                    x1: goal.max[0] - object.half_w(),
                    y: params.corridor_y,
                }
            }
            _ => SamplingDomain::Arc {
                center: namo::standing_pose(object, params),
                radius: params.arc_radius,
                start: params.arc_start,
                end: params.arc_end,
            },
        },
    }
}

/// Draws `n` values for `level` from the stream `key`; `sample_id`s are `0..n`
/// in draw order.
pub fn sample_values(problem: &Problem, skeleton: &PlanSkeleton, level: usize, n: usize, key: StreamKey) -> Vec<ContinuousValue> {
    let domain = level_domain(problem, skeleton, level);
    let mut rng = key.rng(level);
    (0..n)
        .map(|sample_id| ContinuousValue { placement: domain.sample(&mut rng), epoch: key.epoch, level, sample_id })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_is_order_sensitive() {
        assert_ne!(mix(&[1, 2, 3]), mix(&[1, 3, 2]));
        assert_ne!(mix(&[0, 0]), mix(&[0]));
        assert_eq!(mix(&[7, 8]), mix(&[7, 8]));
    }

    #[test]
    fn arc_samples_lie_on_arc() {
        let d = SamplingDomain::Arc { center: Pose2::xy(1.0, 1.0), radius: 0.4, start: 1.0, end: 5.0 };
        let mut rng = StreamKey::new(3, 0).rng(0);
        for _ in 0..10_000 {
            assert!(d.contains(d.sample(&mut rng)));
        }
    }
}
