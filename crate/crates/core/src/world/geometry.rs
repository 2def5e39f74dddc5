//! Polyline geometry with arc-length parameterization and lane-frame
//! (arc length, signed lateral offset) projection.

use crate::scalar::Real;

/// Piecewise-linear centerline with cached cumulative arc lengths.
#[derive(Clone, Debug)]
pub struct Polyline {
    points: Vec<[f64; 2]>,
    cum_len: Vec<f64>,
}

/// Result of projecting a point onto a polyline.
#[derive(Clone, Copy, Debug)]
pub struct Projection {
    /// Arc length of the closest centerline point, clamped to the ends.
    pub s: f64,
    /// Signed lateral offset, positive to the left of the travel direction.
    pub d: f64,
    /// Index of the segment the projection landed on.
    pub segment: usize,
}

impl Polyline {
    /// Builds a polyline; requires at least two points with distinct
    /// consecutive vertices.
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self, String> {
        if points.len() < 2 {
            return Err("polyline needs at least 2 points".into());
        }
        let mut cum_len = Vec::with_capacity(points.len());
        cum_len.push(0.0);
        for w in points.windows(2) {
            let d = dist(w[0], w[1]);
            if d == 0.0 {
                return Err("consecutive polyline points must be distinct".into());
            }
            cum_len.push(cum_len.last().unwrap() + d);
        }
        Ok(Polyline { points, cum_len })
    }

    pub fn len(&self) -> f64 {
        *self.cum_len.last().unwrap()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Point at arc length `s` (clamped to the ends).
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let (i, t) = self.locate(s);
        let a = self.points[i];
        let b = self.points[i + 1];
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    /// Unit tangent of the segment containing arc length `s`.
    pub fn tangent_at(&self, s: f64) -> [f64; 2] {
        let (i, _) = self.locate(s);
        self.segment_tangent(i)
    }

    /// Heading (radians) of the segment containing arc length `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        let t = self.tangent_at(s);
        t[1].atan2(t[0])
    }

    /// Embeds lane-frame coordinates back to Cartesian using the left normal.
    pub fn embed(&self, s: f64, d: f64) -> [f64; 2] {
        let p = self.point_at(s);
        let t = self.tangent_at(s);
        [p[0] - d * t[1], p[1] + d * t[0]]
    }

    /// Projects a Cartesian point; always defined, ends clamp `s`.
    pub fn project(&self, p: [f64; 2]) -> Projection {
        let mut best = Projection {
            s: 0.0,
            d: f64::INFINITY,
            segment: 0,
        };
        let mut best_d2 = f64::INFINITY;
        for i in 0..self.points.len() - 1 {
            let a = self.points[i];
            let b = self.points[i + 1];
            let ab = [b[0] - a[0], b[1] - a[1]];
            let seg_len = dist(a, b);
            let t = ((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / (seg_len * seg_len);
            let tc = t.clamp(0.0, 1.0);
            let q = [a[0] + tc * ab[0], a[1] + tc * ab[1]];
            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
            if d2 < best_d2 {
                let tangent = [ab[0] / seg_len, ab[1] / seg_len];
                // signed offset: positive on the left of travel
                let d = -(p[0] - q[0]) * tangent[1] + (p[1] - q[1]) * tangent[0];
                best_d2 = d2;
                best = Projection {
                    s: self.cum_len[i] + tc * seg_len,
                    d,
                    segment: i,
                };
            }
        }
        best
    }

    /// Arc length of a point, computed generically on the segment found by
    /// the primal projection. Also returns `d arc / d point`, which is the
    /// segment's unit tangent (zero when the projection clamps at a segment
    /// end, matching the clamp's projection semantics).
    pub fn project_arc_generic<S: Real>(&self, p: [S; 2]) -> (S, [f64; 2]) {
        let prim = self.project([p[0].value(), p[1].value()]);
        let i = prim.segment;
        let a = self.points[i];
        let t = self.segment_tangent(i);
        let along = (p[0] - S::constant(a[0])) * S::constant(t[0])
            + (p[1] - S::constant(a[1])) * S::constant(t[1]);
        let seg_len = self.cum_len[i + 1] - self.cum_len[i];
        let clamped = along.value() <= 0.0 || along.value() >= seg_len;
        let s = S::constant(self.cum_len[i]) + along.clamp_value(0.0, seg_len);
        (s, if clamped { [0.0, 0.0] } else { t })
    }

    fn segment_tangent(&self, i: usize) -> [f64; 2] {
        let a = self.points[i];
        let b = self.points[i + 1];
        let l = dist(a, b);
        [(b[0] - a[0]) / l, (b[1] - a[1]) / l]
    }

    /// Segment index and local interpolation factor for arc length `s`.
    fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.clamp(0.0, self.len());
        // binary search over cumulative lengths
        let i = match self
            .cum_len
            .binary_search_by(|c| c.partial_cmp(&s).unwrap())
        {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => i - 1,
        };
        let seg = self.cum_len[i + 1] - self.cum_len[i];
        (i, (s - self.cum_len[i]) / seg)
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn straight() -> Polyline {
        Polyline::new(vec![[0.0, 0.0], [10.0, 0.0], [20.0, 0.0]]).unwrap()
    }

    #[test]
    fn straight_lane_projection() {
        let p = straight().project([5.0, 1.0]);
        assert_relative_eq!(p.s, 5.0);
        assert_relative_eq!(p.d, 1.0);
    }

    #[test]
    fn on_centerline_zero_offset() {
        let p = straight().project([7.5, 0.0]);
        assert_relative_eq!(p.d, 0.0);
    }

    #[test]
    fn endpoints_clamp_arc_length() {
        let p = straight().project([25.0, -2.0]);
        assert_relative_eq!(p.s, 20.0);
        assert_relative_eq!(p.d, -2.0);
    }

    #[test]
    fn quarter_circle_projection_matches_dense_oracle() {
        // quarter circle of radius 10, CCW from (10, 0) to (0, 10)
        let n = 400;
        let pts: Vec<[f64; 2]> = (0..=n)
            .map(|i| {
                let a = std::f64::consts::FRAC_PI_2 * i as f64 / n as f64;
                [10.0 * a.cos(), 10.0 * a.sin()]
            })
            .collect();
        let line = Polyline::new(pts).unwrap();
        let a45 = std::f64::consts::FRAC_PI_4;
        let query = [10.5 * a45.cos(), 10.5 * a45.sin()];
        let p = line.project(query);
        assert_relative_eq!(p.s, 10.0 * a45, epsilon = 1e-2);

        // dense-sampling oracle over 10^4 samples
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..10_000 {
            let s = line.len() * i as f64 / 9_999.0;
            let q = line.point_at(s);
            let d2 = (q[0] - query[0]).powi(2) + (q[1] - query[1]).powi(2);
            if d2 < best.0 {
                best = (d2, s);
            }
        }
        assert!((p.s - best.1).abs() < 1e-3);
        assert!((p.d.abs() - best.0.sqrt()).abs() < 1e-3);
        // point is outside a CCW curve: right of travel
        assert!(p.d < 0.0);
    }

    #[test]
    fn embed_then_project_round_trips() {
        let line = straight();
        let p = line.embed(12.0, -1.5);
        let pr = line.project(p);
        assert_relative_eq!(pr.s, 12.0, epsilon = 1e-9);
        assert_relative_eq!(pr.d, -1.5, epsilon = 1e-9);
    }
}
