//! Line-segment geometry: center-angle-length conversion, centerness,
//! homography warps, structural distance and correspondence labeling.
//!
//! Coordinate convention used throughout the crate: `x` grows rightward,
//! `y` grows downward, and the origin sits at the center of the top-left
//! pixel. Dense maps are indexed `(row = y, col = x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Denominator guard for projective division.
pub const W_EPS: f64 = 1e-9;

/// A 2D point in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        self.dist_sq(other).sqrt()
    }

    pub fn dist_sq(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// An undirected line segment given by its two endpoints.
///
/// Operations on segments are invariant under endpoint exchange.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSegment {
    pub p1: Point2,
    pub p2: Point2,
}

impl LineSegment {
    pub fn new(p1: Point2, p2: Point2) -> Self {
        Self { p1, p2 }
    }

    pub fn from_coords(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self::new(Point2::new(x1, y1), Point2::new(x2, y2))
    }

    pub fn midpoint(&self) -> Point2 {
        Point2::new((self.p1.x + self.p2.x) * 0.5, (self.p1.y + self.p2.y) * 0.5)
    }

    pub fn length(&self) -> f64 {
        self.p1.dist(&self.p2)
    }

    /// Endpoint-swapped copy (represents the same undirected segment).
    pub fn swapped(&self) -> Self {
        Self::new(self.p2, self.p1)
    }

    /// Copy with `p1` the lexicographically smaller endpoint by `(y, x)`.
    ///
    /// Descriptor pooling walks the segment from `p1` to `p2`; fixing the
    /// direction makes descriptors reproducible for undirected segments.
    pub fn canonical(&self) -> Self {
        if (self.p2.y, self.p2.x) < (self.p1.y, self.p1.x) {
            self.swapped()
        } else {
            *self
        }
    }

    /// Project `p` onto the segment, clamped to the endpoint range.
    pub fn project(&self, p: &Point2) -> Point2 {
        let dx = self.p2.x - self.p1.x;
        let dy = self.p2.y - self.p1.y;
        let len_sq = dx * dx + dy * dy;
        if len_sq == 0.0 {
            return self.p1;
        }
        let t = ((p.x - self.p1.x) * dx + (p.y - self.p1.y) * dy) / len_sq;
        let t = t.clamp(0.0, 1.0);
        Point2::new(self.p1.x + t * dx, self.p1.y + t * dy)
    }
}

/// Center-angle-length parameterization of a line segment.
///
/// `theta` is canonicalized into `[0, pi)`; an undirected segment and its
/// swap map to the same `CalLine`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalLine {
    pub center: Point2,
    /// Rotation angle in radians, in `[0, pi)`.
    pub theta: f64,
    /// Total length in pixels, strictly positive.
    pub rho: f64,
}

/// Recover the two endpoints from a center-angle-length line.
pub fn cal_to_endpoints(c: &CalLine) -> LineSegment {
    let half = 0.5 * c.rho;
    let (sin_t, cos_t) = c.theta.sin_cos();
    LineSegment::new(
        Point2::new(c.center.x + half * cos_t, c.center.y + half * sin_t),
        Point2::new(c.center.x - half * cos_t, c.center.y - half * sin_t),
    )
}

/// Convert endpoints to the center-angle-length form.
///
/// Fails on zero-length segments. The angle is folded into `[0, pi)` so the
/// result does not depend on endpoint order.
pub fn endpoints_to_cal(s: &LineSegment) -> Result<CalLine> {
    let rho = s.length();
    if rho <= 0.0 {
        return Err(Error::DegenerateSegment);
    }
    let mut theta = (s.p2.y - s.p1.y).atan2(s.p2.x - s.p1.x);
    if theta < 0.0 {
        theta += std::f64::consts::PI;
    }
    if theta >= std::f64::consts::PI {
        theta = 0.0;
    }
    Ok(CalLine {
        center: s.midpoint(),
        theta,
        rho,
    })
}

/// Line-centerness of an on-segment point: `sqrt(min(d1,d2)/max(d1,d2))`
/// where `d1`, `d2` are the distances to the two endpoints.
///
/// Equals 1 at the midpoint and falls to 0 at the endpoints.
pub fn centerness(p: &Point2, s: &LineSegment) -> f64 {
    let d1 = p.dist(&s.p1);
    let d2 = p.dist(&s.p2);
    let max = d1.max(d2);
    if max == 0.0 {
        return 1.0;
    }
    (d1.min(d2) / max).sqrt()
}

/// A plane projective transform with `m[2][2]` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    pub m: [[f64; 3]; 3],
}

impl Homography {
    /// Build from a raw matrix, normalizing so `m[2][2] = 1`.
    ///
    /// Fails when the matrix is (near-)singular or cannot be normalized.
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        let det = det3(&m);
        if det.abs() <= W_EPS {
            return Err(Error::SingularHomography(det.abs()));
        }
        let s = m[2][2];
        if s.abs() <= W_EPS {
            return Err(Error::SingularHomography(s.abs()));
        }
        let mut out = m;
        for row in &mut out {
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        Ok(Self { m: out })
    }

    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    /// Matrix product `self * other` (apply `other` first).
    pub fn compose(&self, other: &Homography) -> Result<Self> {
        let a = &self.m;
        let b = &other.m;
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        Self::new(m)
    }

    pub fn inverse(&self) -> Result<Self> {
        let m = &self.m;
        let det = det3(m);
        if det.abs() <= W_EPS {
            return Err(Error::SingularHomography(det.abs()));
        }
        let mut adj = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                // cofactor of (j, i), transposed into (i, j)
                let r = [(j + 1) % 3, (j + 2) % 3];
                let c = [(i + 1) % 3, (i + 2) % 3];
                adj[i][j] = (m[r[0]][c[0]] * m[r[1]][c[1]] - m[r[0]][c[1]] * m[r[1]][c[0]])
                    / det;
            }
        }
        Self::new(adj)
    }

    /// Apply the transform to a point.
    ///
    /// Fails when the point maps (near) infinity.
    pub fn warp_point(&self, p: &Point2) -> Result<Point2> {
        let m = &self.m;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        if w.abs() <= W_EPS {
            return Err(Error::PointAtInfinity(W_EPS));
        }
        let x = (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w;
        let y = (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w;
        let out = Point2::new(x, y);
        if !out.is_finite() {
            return Err(Error::PointAtInfinity(W_EPS));
        }
        Ok(out)
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Warp both endpoints of a segment, preserving endpoint order.
///
/// Returns an error when an endpoint lands at infinity; callers should
/// discard such segments.
pub fn warp_segment(h: &Homography, s: &LineSegment) -> Result<LineSegment> {
    Ok(LineSegment::new(
        h.warp_point(&s.p1)?,
        h.warp_point(&s.p2)?,
    ))
}

/// Structural distance: minimum over the two endpoint pairings of the sum
/// of squared endpoint distances (squared-pixel units).
pub fn structural_distance(a: &LineSegment, b: &LineSegment) -> f64 {
    let direct = a.p1.dist_sq(&b.p1) + a.p2.dist_sq(&b.p2);
    let crossed = a.p1.dist_sq(&b.p2) + a.p2.dist_sq(&b.p1);
    direct.min(crossed)
}

/// Maximum endpoint deviation between two segments under the best pairing.
pub fn max_endpoint_distance(a: &LineSegment, b: &LineSegment) -> f64 {
    let direct = a.p1.dist(&b.p1).max(a.p2.dist(&b.p2));
    let crossed = a.p1.dist(&b.p2).max(a.p2.dist(&b.p1));
    direct.min(crossed)
}

/// A labeled pairing between segment `index_a` of one set and `index_b` of
/// another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correspondence {
    pub index_a: usize,
    pub index_b: usize,
    pub is_match: bool,
}

/// Label one-to-one correspondences between two segment sets related by a
/// homography.
///
/// Segment `a_i` is warped by `h`; the pair `(i, j)` is a candidate match
/// when the maximum endpoint distance to `b_j` (best pairing) is at most
/// `tol` pixels. Candidates are committed greedily by ascending distance so
/// every segment participates in at most one match.
pub fn label_correspondences(
    set_a: &[LineSegment],
    set_b: &[LineSegment],
    h: &Homography,
    tol: f64,
) -> Vec<Correspondence> {
    let warped: Vec<Option<LineSegment>> = set_a
        .iter()
        .map(|s| warp_segment(h, s).ok())
        .collect();

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, wa) in warped.iter().enumerate() {
        let Some(wa) = wa else { continue };
        for (j, b) in set_b.iter().enumerate() {
            let d = max_endpoint_distance(wa, b);
            if d <= tol {
                candidates.push((d, i, j));
            }
        }
    }
    candidates.sort_by(|l, r| {
        l.0.partial_cmp(&r.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(l.1.cmp(&r.1))
            .then(l.2.cmp(&r.2))
    });

    let mut used_a = vec![false; set_a.len()];
    let mut used_b = vec![false; set_b.len()];
    let mut out = Vec::new();
    for (_, i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            out.push(Correspondence {
                index_a: i,
                index_b: j,
                is_match: true,
            });
        }
    }
    out.sort_by_key(|c| (c.index_a, c.index_b));
    out
}

/// Clip a segment to the axis-aligned rectangle `[0, xmax] x [0, ymax]`
/// (Liang-Barsky). Returns `None` when nothing remains in view.
pub fn clip_segment(s: &LineSegment, xmax: f64, ymax: f64) -> Option<LineSegment> {
    let dx = s.p2.x - s.p1.x;
    let dy = s.p2.y - s.p1.y;
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    let checks = [
        (-dx, s.p1.x),        // x >= 0
        (dx, xmax - s.p1.x),  // x <= xmax
        (-dy, s.p1.y),        // y >= 0
        (dy, ymax - s.p1.y),  // y <= ymax
    ];
    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                if r > t1 {
                    return None;
                }
                t0 = t0.max(r);
            } else {
                if r < t0 {
                    return None;
                }
                t1 = t1.min(r);
            }
        }
    }
    if t0 >= t1 {
        return None;
    }
    Some(LineSegment::new(
        Point2::new(s.p1.x + t0 * dx, s.p1.y + t0 * dy),
        Point2::new(s.p1.x + t1 * dx, s.p1.y + t1 * dy),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn seg(x1: f64, y1: f64, x2: f64, y2: f64) -> LineSegment {
        LineSegment::from_coords(x1, y1, x2, y2)
    }

    #[test]
    fn cal_to_endpoints_axis_aligned() {
        let c = CalLine {
            center: Point2::new(10.0, 10.0),
            theta: 0.0,
            rho: 4.0,
        };
        let s = cal_to_endpoints(&c);
        assert_eq!(s.p1, Point2::new(12.0, 10.0));
        assert_eq!(s.p2, Point2::new(8.0, 10.0));
    }

    #[test]
    fn cal_to_endpoints_vertical() {
        let c = CalLine {
            center: Point2::new(5.0, 5.0),
            theta: PI / 2.0,
            rho: 2.0,
        };
        let s = cal_to_endpoints(&c);
        assert!((s.p1.x - 5.0).abs() < 1e-12 && (s.p1.y - 6.0).abs() < 1e-12);
        assert!((s.p2.x - 5.0).abs() < 1e-12 && (s.p2.y - 4.0).abs() < 1e-12);
    }

    #[test]
    fn cal_to_endpoints_diagonal() {
        let c = CalLine {
            center: Point2::new(0.0, 0.0),
            theta: PI / 4.0,
            rho: 2.0 * 2.0f64.sqrt(),
        };
        let s = cal_to_endpoints(&c);
        assert!((s.p1.x - 1.0).abs() < 1e-12 && (s.p1.y - 1.0).abs() < 1e-12);
        assert!((s.p2.x + 1.0).abs() < 1e-12 && (s.p2.y + 1.0).abs() < 1e-12);
    }

    #[test]
    fn endpoints_to_cal_inverse() {
        let c = endpoints_to_cal(&seg(12.0, 10.0, 8.0, 10.0)).unwrap();
        assert_eq!(c.center, Point2::new(10.0, 10.0));
        assert_eq!(c.theta, 0.0);
        assert_eq!(c.rho, 4.0);

        let c = endpoints_to_cal(&seg(1.0, 1.0, -1.0, -1.0)).unwrap();
        assert!((c.theta - PI / 4.0).abs() < 1e-12);
        assert!((c.rho - 2.0 * 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn endpoints_to_cal_degenerate() {
        assert!(matches!(
            endpoints_to_cal(&seg(3.0, 3.0, 3.0, 3.0)),
            Err(Error::DegenerateSegment)
        ));
    }

    #[test]
    fn centerness_values() {
        let s = seg(0.0, 0.0, 10.0, 0.0);
        assert_eq!(centerness(&Point2::new(5.0, 0.0), &s), 1.0);
        assert_eq!(centerness(&Point2::new(0.0, 0.0), &s), 0.0);
        assert_eq!(centerness(&Point2::new(10.0, 0.0), &s), 0.0);
        // d1 = 1, d2 = 4 -> sqrt(0.25)
        let p = Point2::new(1.0, 0.0);
        let s = seg(0.0, 0.0, 5.0, 0.0);
        assert!((centerness(&p, &s) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn centerness_degenerate_point() {
        let s = seg(1.0, 1.0, 1.0, 1.0);
        assert_eq!(centerness(&Point2::new(1.0, 1.0), &s), 1.0);
    }

    #[test]
    fn warp_identity_and_translation() {
        let s = seg(0.0, 0.0, 2.0, 0.0);
        let id = Homography::identity();
        assert_eq!(warp_segment(&id, &s).unwrap(), s);

        let t = Homography::translation(3.0, 5.0);
        let w = warp_segment(&t, &s).unwrap();
        assert_eq!(w, seg(3.0, 5.0, 5.0, 5.0));
    }

    #[test]
    fn warp_rotation_90deg() {
        // 90 degree counter-clockwise rotation in (x right, y down) coords:
        // (x, y) -> (-y, x). Hand matrix multiply on ((1,0),(2,0)).
        let h = Homography::new([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let w = warp_segment(&h, &seg(1.0, 0.0, 2.0, 0.0)).unwrap();
        assert_eq!(w, seg(0.0, 1.0, 0.0, 2.0));
    }

    #[test]
    fn warp_point_at_infinity() {
        let h = Homography::new([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 1.0]]).unwrap();
        // w = 1 - x vanishes at x = 1
        let s = seg(1.0, 0.0, 2.0, 0.0);
        assert!(warp_segment(&h, &s).is_err());
    }

    #[test]
    fn structural_distance_cases() {
        let a = seg(0.0, 0.0, 1.0, 0.0);
        assert_eq!(structural_distance(&a, &a), 0.0);
        let b = seg(0.0, 1.0, 1.0, 1.0);
        assert_eq!(structural_distance(&a, &b), 2.0);
        let swapped = seg(1.0, 0.0, 0.0, 0.0);
        assert_eq!(structural_distance(&a, &swapped), 0.0);
    }

    #[test]
    fn label_correspondences_identity() {
        let set: Vec<_> = (0..4)
            .map(|i| seg(i as f64 * 5.0, 0.0, i as f64 * 5.0 + 3.0, 4.0))
            .collect();
        let cs = label_correspondences(&set, &set, &Homography::identity(), 1.0);
        assert_eq!(cs.len(), 4);
        for (i, c) in cs.iter().enumerate() {
            assert_eq!((c.index_a, c.index_b, c.is_match), (i, i, true));
        }
    }

    #[test]
    fn label_correspondences_tolerance_boundary() {
        let a = vec![seg(0.0, 0.0, 10.0, 0.0)];
        let b = vec![seg(0.0, 1.5, 10.0, 1.5)];
        let id = Homography::identity();
        assert!(label_correspondences(&a, &b, &id, 1.4).is_empty());
        assert_eq!(label_correspondences(&a, &b, &id, 1.6).len(), 1);
    }

    #[test]
    fn label_correspondences_no_match() {
        let a = vec![seg(0.0, 0.0, 10.0, 0.0)];
        let b = vec![seg(0.0, 30.0, 10.0, 30.0)];
        assert!(label_correspondences(&a, &b, &Homography::identity(), 2.0).is_empty());
    }

    #[test]
    fn homography_inverse_roundtrip() {
        let h = Homography::new([
            [1.1, 0.02, 3.0],
            [-0.03, 0.95, -2.0],
            [1e-4, -2e-4, 1.0],
        ])
        .unwrap();
        let inv = h.inverse().unwrap();
        let p = Point2::new(17.0, 23.0);
        let q = inv.warp_point(&h.warp_point(&p).unwrap()).unwrap();
        assert!(p.dist(&q) < 1e-6);
    }

    #[test]
    fn clip_segment_cases() {
        let inside = seg(1.0, 1.0, 5.0, 5.0);
        assert_eq!(clip_segment(&inside, 10.0, 10.0), Some(inside));
        let crossing = seg(-2.0, 3.0, 4.0, 3.0);
        let c = clip_segment(&crossing, 10.0, 10.0).unwrap();
        assert_eq!(c, seg(0.0, 3.0, 4.0, 3.0));
        let outside = seg(-5.0, -5.0, -1.0, -2.0);
        assert_eq!(clip_segment(&outside, 10.0, 10.0), None);
    }
}
