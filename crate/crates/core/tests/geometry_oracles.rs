//! Feasibility checks against independent discretized oracles: a millimetre
//! raster for packing, and a sampled disc sweep plus boundary-sampled overlap
//! for NAMO. Each oracle runs twice, with obstacles shrunk and grown by a
//! small margin; cases where the two disagree are too close to touching to
//! call and are skipped.

use backjump::domains::gen_problem;
use backjump::problem::{
    apply_transition, check_feasible, ground_skeleton, ContinuousValue, DomainKind, DomainParams, ObjectKind,
    ObjectSpec, Pose2, Problem, WorldState,
};
use backjump::sampling::{level_domain, sample_values, StreamKey};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random state with levels `0..k` refined by unchecked samples.
fn random_state(p: &Problem, k: usize, rng: &mut ChaCha8Rng) -> WorldState {
    let sk = ground_skeleton(p);
    let mut s = p.initial_state();
    for level in 0..k {
        let v = sample_values(p, &sk, level, 1, StreamKey::new(rng.gen(), 0))[0];
        s = apply_transition(&s, &sk.steps[level], &v, p);
    }
    s
}

const MARGIN: f64 = 2e-3;

fn value(level: usize, placement: Pose2) -> ContinuousValue {
    ContinuousValue { placement, epoch: 0, level, sample_id: 0 }
}

/// Cell index range `[lo, hi)` of centers strictly inside `(a, b)` on a grid of
/// pitch `h` offset by `off`.
fn cells(a: f64, b: f64, h: f64, off: f64) -> (i64, i64) {
    let lo = ((a - off) / h - 0.5).floor() as i64 + 1;
    let hi = ((b - off) / h - 0.5).ceil() as i64;
    (lo, hi.max(lo))
}

fn packing_raster(state: &WorldState, p: &Problem, obj: &ObjectSpec, q: Pose2, grow: f64) -> bool {
    let (h, off) = (1e-3, 0.0);
    let cab = p.regions.iter().find(|r| r.name == "cabinet").unwrap();
    let (lx, hx) = (q.x - obj.w / 2.0, q.x + obj.w / 2.0);
    let (ly, hy) = (q.y - obj.h / 2.0, q.y + obj.h / 2.0);
    if lx < cab.min[0] || hx > cab.max[0] || ly < cab.min[1] || hy > cab.max[1] {
        return false;
    }
    let corridor_x = cells(lx, cab.max[0], h, off);
    let corridor_y = cells(ly, hy, h, off);
    for (o, &pose) in p.movable().iter().zip(&state.object_poses) {
        let inside = pose.x > cab.min[0] && pose.x < cab.max[0] && pose.y > cab.min[1] && pose.y < cab.max[1];
        if o.id == obj.id || !inside {
            continue;
        }
        let ox = cells(pose.x - o.w / 2.0 - grow, pose.x + o.w / 2.0 + grow, h, off);
        let oy = cells(pose.y - o.h / 2.0 - grow, pose.y + o.h / 2.0 + grow, h, off);
        let wx = corridor_x.1.min(ox.1) - corridor_x.0.max(ox.0);
        let wy = corridor_y.1.min(oy.1) - corridor_y.0.max(oy.0);
        if wx > 0 && wy > 0 {
            return false;
        }
    }
    true
}

#[test]
fn packing_matches_millimetre_raster() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut checked, mut skipped, mut feasible) = (0, 0, 0);
    for seed in 0..20 {
        let p = gen_problem(DomainKind::Packing, 6, seed).unwrap();
        let sk = ground_skeleton(&p);
        for _ in 0..100 {
            let k = rng.gen_range(0..sk.len());
            let s = random_state(&p, k, &mut rng);
            let obj = *p.object(sk.object_at(k));
            let q = if rng.gen_bool(0.8) {
                level_domain(&p, &sk, k).sample(&mut rng)
            } else {
                Pose2::xy(rng.gen_range(-0.2..1.2), rng.gen_range(-0.2..0.8))
            };
            let coarse = packing_raster(&s, &p, &obj, q, -MARGIN);
            let fine = packing_raster(&s, &p, &obj, q, MARGIN);
            if coarse != fine {
                skipped += 1;
                continue;
            }
            let got = check_feasible(&s, &sk.steps[k], &value(k, q), &p).unwrap();
            assert_eq!(got, coarse, "problem {seed} level {k} placement {q:?}");
            checked += 1;
            feasible += usize::from(got);
        }
    }
    assert!(checked >= 1900, "only {checked} decidable cases ({skipped} skipped)");
    assert!(feasible > 100 && feasible < checked - 100, "degenerate corpus: {feasible}/{checked} feasible");
}

/// Independent rotated-rectangle helpers.
#[derive(Clone, Copy)]
struct Box2 {
    c: [f64; 2],
    hw: f64,
    hh: f64,
    th: f64,
}

impl Box2 {
    fn of(o: &ObjectSpec, pose: Pose2) -> Self {
        Self { c: [pose.x, pose.y], hw: o.w / 2.0, hh: o.h / 2.0, th: pose.theta }
    }

    fn world(&self, u: f64, v: f64) -> [f64; 2] {
        let (s, c) = self.th.sin_cos();
        [self.c[0] + c * u - s * v, self.c[1] + s * u + c * v]
    }

    fn local(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.th.sin_cos();
        let (dx, dy) = (p[0] - self.c[0], p[1] - self.c[1]);
        [c * dx + s * dy, -s * dx + c * dy]
    }

    fn strictly_contains(&self, p: [f64; 2]) -> bool {
        let l = self.local(p);
        l[0].abs() < self.hw && l[1].abs() < self.hh
    }

    fn distance(&self, p: [f64; 2]) -> f64 {
        let l = self.local(p);
        let dx = (l[0].abs() - self.hw).max(0.0);
        let dy = (l[1].abs() - self.hh).max(0.0);
        dx.hypot(dy)
    }

    fn grown(&self, d: f64) -> Self {
        Self { hw: (self.hw + d).max(0.0), hh: (self.hh + d).max(0.0), ..*self }
    }

    /// Center plus boundary points spaced at most `step` apart.
    fn samples(&self, step: f64) -> Vec<[f64; 2]> {
        let nu = (2.0 * self.hw / step).ceil() as usize + 1;
        let nv = (2.0 * self.hh / step).ceil() as usize + 1;
        let mut out = vec![self.c];
        for i in 0..=nu {
            let u = -self.hw + 2.0 * self.hw * i as f64 / nu as f64;
            out.push(self.world(u, -self.hh));
            out.push(self.world(u, self.hh));
        }
        for j in 0..=nv {
            let v = -self.hh + 2.0 * self.hh * j as f64 / nv as f64;
            out.push(self.world(-self.hw, v));
            out.push(self.world(self.hw, v));
        }
        out
    }

    fn corners(&self) -> [[f64; 2]; 4] {
        [self.world(-self.hw, -self.hh), self.world(self.hw, -self.hh), self.world(self.hw, self.hh), self.world(-self.hw, self.hh)]
    }
}

/// Open rectangles overlap iff one contains the other's center or a boundary
/// point of one lies inside the other.
fn sampled_overlap(a: &Box2, b: &Box2) -> bool {
    let step = 0.5e-3;
    a.samples(step).iter().any(|&p| b.strictly_contains(p)) || b.samples(step).iter().any(|&p| a.strictly_contains(p))
}

fn disc_sweep_blocked(from: [f64; 2], to: [f64; 2], r: f64, obstacles: &[Box2], step: f64) -> Option<bool> {
    let len = (to[0] - from[0]).hypot(to[1] - from[1]);
    let n = (len / step).ceil().max(1.0) as usize;
    let mut min_gap = f64::INFINITY;
    for i in 0..=n {
        let t = i as f64 / n as f64;
        let p = [from[0] + t * (to[0] - from[0]), from[1] + t * (to[1] - from[1])];
        for o in obstacles {
            min_gap = min_gap.min(o.distance(p) - r);
        }
    }
    // Within a millimetre of grazing: undecidable by sampling.
    if min_gap.abs() < 1e-3 {
        None
    } else {
        Some(min_gap < 0.0)
    }
}

fn namo_oracle(state: &WorldState, p: &Problem, obj: &ObjectSpec, q: Pose2, grow: f64) -> Option<bool> {
    let DomainParams::Namo(params) = &p.params else { unreachable!() };
    let r = params.robot_radius;
    let room = p.regions.iter().find(|x| x.name == "floor").unwrap();
    let goal = p.regions.iter().find(|x| x.name == "goal").unwrap();
    let mut obstacles: Vec<Box2> = p.objects.iter().filter(|o| o.kind == ObjectKind::Fixed).map(|o| Box2::of(o, o.pose)).collect();
    for (o, &pose) in p.movable().iter().zip(&state.object_poses) {
        if o.id != obj.id {
            obstacles.push(Box2::of(o, pose));
        }
    }
    let grown: Vec<Box2> = obstacles.iter().map(|b| b.grown(grow)).collect();
    let stand = [obj.pose.x - obj.w / 2.0 - r - params.standoff, params.corridor_y];
    let base = [state.robot_base.x, state.robot_base.y];
    let fp = Box2::of(obj, q);
    let within = |b: &Box2, min: [f64; 2], max: [f64; 2]| {
        b.corners().iter().all(|c| c[0] >= min[0] - 1e-12 && c[0] <= max[0] + 1e-12 && c[1] >= min[1] - 1e-12 && c[1] <= max[1] + 1e-12)
    };
    match obj.kind {
        ObjectKind::Movable => {
            let d = (q.x - stand[0]).hypot(q.y - stand[1]);
            let ang = (q.y - stand[1]).atan2(q.x - stand[0]).rem_euclid(std::f64::consts::TAU);
            let on_arc = (d - params.arc_radius).abs() < 1e-6 && ang >= params.arc_start - 1e-9 && ang <= params.arc_end + 1e-9;
            if !on_arc || !within(&fp, room.min, room.max) {
                return Some(false);
            }
            if grown.iter().any(|o| sampled_overlap(&fp, o)) {
                return Some(false);
            }
            disc_sweep_blocked(base, stand, r, &obstacles, 1e-3).map(|b| !b)
        }
        ObjectKind::Target => {
            if q.theta != 0.0 || !within(&fp, goal.min, goal.max) {
                return Some(false);
            }
            let offset = obj.pose.x - stand[0];
            let drop = [q.x - offset, params.corridor_y];
            let start = Box2::of(obj, state.object_poses[obj.id]);
            let lo = [start.c[0].min(q.x) - obj.w / 2.0, start.c[1].min(q.y) - obj.h / 2.0];
            let hi = [start.c[0].max(q.x) + obj.w / 2.0, start.c[1].max(q.y) + obj.h / 2.0];
            let swept = Box2 { c: [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0], hw: (hi[0] - lo[0]) / 2.0, hh: (hi[1] - lo[1]) / 2.0, th: 0.0 };
            let approach = disc_sweep_blocked(base, stand, r, &obstacles, 1e-3)?;
            let back = disc_sweep_blocked(stand, drop, r, &obstacles, 1e-3)?;
            let swept_hit = grown.iter().any(|o| sampled_overlap(&swept, o));
            Some(!approach && !back && !swept_hit)
        }
        ObjectKind::Fixed => Some(false),
    }
}

#[test]
fn namo_matches_disc_sweep_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut checked, mut skipped, mut feasible) = (0, 0, 0);
    for seed in 0..8 {
        let p = gen_problem(DomainKind::Namo, 3, seed).unwrap();
        let sk = ground_skeleton(&p);
        for _ in 0..100 {
            let k = rng.gen_range(0..sk.len());
            let s = random_state(&p, k, &mut rng);
            let obj = *p.object(sk.object_at(k));
            let q = level_domain(&p, &sk, k).sample(&mut rng);
            let coarse = namo_oracle(&s, &p, &obj, q, -MARGIN);
            let fine = namo_oracle(&s, &p, &obj, q, MARGIN);
            let (Some(a), Some(b)) = (coarse, fine) else {
                skipped += 1;
                continue;
            };
            if a != b {
                skipped += 1;
                continue;
            }
            let got = check_feasible(&s, &sk.steps[k], &value(k, q), &p).unwrap();
            assert_eq!(got, a, "problem {seed} level {k} placement {q:?}");
            checked += 1;
            feasible += usize::from(got);
        }
    }
    assert!(checked >= 700, "only {checked} decidable cases ({skipped} skipped)");
    assert!(feasible > 50 && feasible < checked - 50, "degenerate corpus: {feasible}/{checked} feasible");
}
