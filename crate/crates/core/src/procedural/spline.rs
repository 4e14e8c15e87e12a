//! Centripetal Catmull-Rom splines with arc-length parameterization.

use crate::error::{Result, SimError};
use crate::geometry::Vec3;

/// Chord-table resolution per span.
pub const SEGMENTS_PER_SPAN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Spline {
    /// Anchors with the first and last duplicated as phantom endpoints.
    points: Vec<Vec3>,
    /// Centripetal knot value of each entry of `points`.
    knots: Vec<f64>,
    /// Cumulative arc length at each table sample, spans concatenated.
    table: Vec<f64>,
}

/// Linear interpolation over a knot interval and its derivative in `t`.
/// A zero-length interval yields `a` with zero derivative.
#[inline]
fn lerp(a: (Vec3, Vec3), b: (Vec3, Vec3), t0: f64, t1: f64, t: f64) -> (Vec3, Vec3) {
    let dt = t1 - t0;
    if dt <= 0.0 {
        return a;
    }
    let (wa, wb) = ((t1 - t) / dt, (t - t0) / dt);
    let p = a.0 * wa + b.0 * wb;
    let d = (b.0 - a.0) / dt + a.1 * wa + b.1 * wb;
    (p, d)
}

impl Spline {
    /// Spline through `anchors`. Consecutive duplicates are dropped; all
    /// anchors equal is an error.
    pub fn new(anchors: &[Vec3]) -> Result<Spline> {
        let mut pts: Vec<Vec3> = Vec::with_capacity(anchors.len() + 2);
        for &a in anchors {
            if !a.is_finite() {
                return Err(SimError::invalid("spline anchors must be finite"));
            }
            if pts.last().is_none_or(|&l: &Vec3| l.distance(a) > 1e-9) {
                pts.push(a);
            }
        }
        if pts.len() < 2 {
            return Err(SimError::Degenerate("spline needs at least two distinct anchors".into()));
        }
        pts.insert(0, pts[0]);
        pts.push(*pts.last().expect("nonempty"));
        let mut knots = vec![0.0; pts.len()];
        for i in 1..pts.len() {
            knots[i] = knots[i - 1] + pts[i].distance(pts[i - 1]).sqrt();
        }
        let mut s = Spline { points: pts, knots, table: Vec::new() };
        let spans = s.span_count();
        let mut table = Vec::with_capacity(spans * SEGMENTS_PER_SPAN + 1);
        table.push(0.0);
        let mut acc = 0.0;
        for span in 0..spans {
            let mut prev = s.eval_span(span, 0.0).0;
            for k in 1..=SEGMENTS_PER_SPAN {
                let p = s.eval_span(span, k as f64 / SEGMENTS_PER_SPAN as f64).0;
                acc += p.distance(prev);
                prev = p;
                table.push(acc);
            }
        }
        s.table = table;
        Ok(s)
    }

    /// Number of spans between real anchors.
    pub fn span_count(&self) -> usize {
        self.points.len() - 3
    }

    pub fn anchors(&self) -> &[Vec3] {
        &self.points[1..self.points.len() - 1]
    }

    /// Approximate arc length from the chord table.
    pub fn length(&self) -> f64 {
        *self.table.last().expect("table nonempty")
    }

    /// Position and derivative (with respect to the knot parameter) on
    /// `span` at local fraction `f` in [0, 1].
    pub fn eval_span(&self, span: usize, f: f64) -> (Vec3, Vec3) {
        let i = span + 1;
        let (p0, p1, p2, p3) = (self.points[i - 1], self.points[i], self.points[i + 1], self.points[i + 2]);
        let (t0, t1, t2, t3) = (self.knots[i - 1], self.knots[i], self.knots[i + 1], self.knots[i + 2]);
        let t = t1 + (t2 - t1) * f.clamp(0.0, 1.0);
        let z = Vec3::ZERO;
        let a1 = lerp((p0, z), (p1, z), t0, t1, t);
        let a2 = lerp((p1, z), (p2, z), t1, t2, t);
        let a3 = lerp((p2, z), (p3, z), t2, t3, t);
        let b1 = lerp(a1, a2, t0, t2, t);
        let b2 = lerp(a2, a3, t1, t3, t);
        lerp(b1, b2, t1, t2, t)
    }

    /// Point and unit tangent at arc-length fraction `s` in [0, 1].
    pub fn point(&self, s: f64) -> (Vec3, Vec3) {
        self.point_at_length(s.clamp(0.0, 1.0) * self.length())
    }

    /// Point and unit tangent at arc length `len` from the start.
    pub fn point_at_length(&self, len: f64) -> (Vec3, Vec3) {
        let len = len.clamp(0.0, self.length());
        let k = self.table.partition_point(|&x| x < len).clamp(1, self.table.len() - 1);
        let (a, b) = (self.table[k - 1], self.table[k]);
        let frac = if b > a { (len - a) / (b - a) } else { 0.0 };
        let seg = k - 1;
        let span = seg / SEGMENTS_PER_SPAN;
        let f = ((seg % SEGMENTS_PER_SPAN) as f64 + frac) / SEGMENTS_PER_SPAN as f64;
        let (p, d) = self.eval_span(span, f);
        let tangent = d.try_normalize().unwrap_or_else(|| {
            (self.points[span + 2] - self.points[span + 1]).normalize()
        });
        (p, tangent)
    }

    /// Distance from `p` to the densely sampled curve.
    pub fn distance_to(&self, p: Vec3) -> f64 {
        let n = self.span_count() * SEGMENTS_PER_SPAN * 4;
        let mut best = f64::INFINITY;
        let mut prev = self.eval_span(0, 0.0).0;
        for k in 1..=n {
            let g = k as f64 / (SEGMENTS_PER_SPAN * 4) as f64;
            let span = (g.floor() as usize).min(self.span_count() - 1);
            let q = self.eval_span(span, g - span as f64).0;
            best = best.min(point_segment_distance(p, prev, q));
            prev = q;
        }
        best
    }
}

pub(crate) fn point_segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = b - a;
    let l2 = ab.length_squared();
    let t = if l2 > 0.0 { ((p - a).dot(ab) / l2).clamp(0.0, 1.0) } else { 0.0 };
    p.distance(a + ab * t)
}

/// Position and unit tangent at arc-length fraction `s` of the spline
/// through `anchors`.
pub fn spline_point(anchors: &[Vec3], s: f64) -> Result<(Vec3, Vec3)> {
    Ok(Spline::new(anchors)?.point(s))
}
