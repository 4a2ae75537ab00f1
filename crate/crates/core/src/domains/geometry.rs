//! Exact 2D primitives backing the feasibility predicates.
//!
//! Overlap uses the open-interior convention: rectangles that only share an
//! edge or a corner do not overlap.

use serde::{Deserialize, Serialize};

use crate::problem::{ObjectSpec, Pose2, Region};

/// Oriented rectangle given by its center, half extents, and heading.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub cx: f64,
    pub cy: f64,
    pub half_w: f64,
    pub half_h: f64,
    pub theta: f64,
}

impl Rect {
    pub fn new(cx: f64, cy: f64, half_w: f64, half_h: f64, theta: f64) -> Self {
        Self { cx, cy, half_w, half_h, theta }
    }

    pub fn aabb(min: [f64; 2], max: [f64; 2]) -> Self {
        Self {
            cx: 0.5 * (min[0] + max[0]),
            cy: 0.5 * (min[1] + max[1]),
            half_w: 0.5 * (max[0] - min[0]),
            half_h: 0.5 * (max[1] - min[1]),
            theta: 0.0,
        }
    }

    pub fn from_object(o: &ObjectSpec, pose: Pose2) -> Self {
        Self::new(pose.x, pose.y, o.half_w(), o.half_h(), pose.theta)
    }

    pub fn from_region(r: &Region) -> Self {
        Self::aabb(r.min, r.max)
    }

    pub fn is_axis_aligned(&self) -> bool {
        self.theta == 0.0
    }

    /// Unit vectors of the local x and y axes.
    fn axes(&self) -> ([f64; 2], [f64; 2]) {
        let (s, c) = self.theta.sin_cos();
        ([c, s], [-s, c])
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (u, v) = self.axes();
        let mut out = [[0.0; 2]; 4];
        for (i, (a, b)) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)].into_iter().enumerate() {
            out[i] = [
                self.cx + a * self.half_w * u[0] + b * self.half_h * v[0],
                self.cy + a * self.half_w * u[1] + b * self.half_h * v[1],
            ];
        }
        out
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        if self.is_axis_aligned() {
            return (
                [self.cx - self.half_w, self.cy - self.half_h],
                [self.cx + self.half_w, self.cy + self.half_h],
            );
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for c in self.corners() {
            for d in 0..2 {
                lo[d] = lo[d].min(c[d]);
                hi[d] = hi[d].max(c[d]);
            }
        }
        (lo, hi)
    }

    /// Closed containment in an axis-aligned box.
    pub fn inside(&self, min: [f64; 2], max: [f64; 2]) -> bool {
        let (lo, hi) = self.bounds();
        lo[0] >= min[0] && lo[1] >= min[1] && hi[0] <= max[0] && hi[1] <= max[1]
    }

    pub fn inside_region(&self, r: &Region) -> bool {
        self.inside(r.min, r.max)
    }

    /// Point expressed in this rectangle's local frame.
    pub fn to_local(&self, p: [f64; 2]) -> [f64; 2] {
        let (u, v) = self.axes();
        let d = [p[0] - self.cx, p[1] - self.cy];
        [d[0] * u[0] + d[1] * u[1], d[0] * v[0] + d[1] * v[1]]
    }

    /// Closed point membership.
    pub fn contains_point(&self, p: [f64; 2]) -> bool {
        let l = self.to_local(p);
        l[0].abs() <= self.half_w && l[1].abs() <= self.half_h
    }

    /// Euclidean distance from a point to the (closed) rectangle.
    pub fn point_distance(&self, p: [f64; 2]) -> f64 {
        let l = self.to_local(p);
        let dx = (l[0].abs() - self.half_w).max(0.0);
        let dy = (l[1].abs() - self.half_h).max(0.0);
        dx.hypot(dy)
    }

    /// Distance from segment `a`-`b` to the rectangle; zero when they meet.
    pub fn segment_distance(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let la = self.to_local(a);
        let lb = self.to_local(b);
        if segment_hits_box(la, lb, self.half_w, self.half_h) {
            return 0.0;
        }
        let mut best = self.point_distance(a).min(self.point_distance(b));
        for c in [
            [self.half_w, self.half_h],
            [-self.half_w, self.half_h],
            [-self.half_w, -self.half_h],
            [self.half_w, -self.half_h],
        ] {
            best = best.min(point_segment_distance(c, la, lb));
        }
        best
    }
}

/// Liang-Barsky test of segment `a`-`b` against the closed box `[-hw,hw]x[-hh,hh]`.
fn segment_hits_box(a: [f64; 2], b: [f64; 2], hw: f64, hh: f64) -> bool {
    let d = [b[0] - a[0], b[1] - a[1]];
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-d[0], a[0] + hw),
        (d[0], hw - a[0]),
        (-d[1], a[1] + hh),
        (d[1], hh - a[1]),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

pub fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    };
    let q = [a[0] + t * d[0], a[1] + t * d[1]];
    (p[0] - q[0]).hypot(p[1] - q[1])
}

fn project(r: &Rect, axis: [f64; 2]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in r.corners() {
        let v = c[0] * axis[0] + c[1] * axis[1];
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// True iff the open interiors of `a` and `b` intersect.
pub fn rect_overlap(a: &Rect, b: &Rect) -> bool {
    if a.is_axis_aligned() && b.is_axis_aligned() {
        return (a.cx - b.cx).abs() < a.half_w + b.half_w && (a.cy - b.cy).abs() < a.half_h + b.half_h;
    }
    let (au, av) = a.axes();
    let (bu, bv) = b.axes();
    for axis in [au, av, bu, bv] {
        let (amin, amax) = project(a, axis);
        let (bmin, bmax) = project(b, axis);
        if amax <= bmin || bmax <= amin {
            return false;
        }
    }
    true
}

/// Does a disc of `radius` swept along segment `a`-`b` overlap the rectangle's interior?
pub fn capsule_overlaps(a: [f64; 2], b: [f64; 2], radius: f64, r: &Rect) -> bool {
    r.segment_distance(a, b) < radius
}
