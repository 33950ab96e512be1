//! Oriented-box overlap on the ground plane and in 3D.
//!
//! Boxes only rotate about the vertical axis, so a 3D overlap factors
//! exactly into a bird's-eye-view polygon overlap times a vertical interval
//! overlap.

use crate::error::{invalid, Result};
use crate::scalar::Real;
use crate::types::BBox3D;

/// Clipped polygons smaller than this (m²) count as empty.
pub const MIN_AREA: f64 = 1e-12;

/// Convex counter-clockwise ground-plane polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct BevPolygon<T> {
    vertices: Vec<[T; 2]>,
}

impl<T: Real> BevPolygon<T> {
    pub fn new(vertices: Vec<[T; 2]>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(invalid("polygon needs at least 3 vertices"));
        }
        let n = vertices.len();
        for i in 0..n {
            let c = cross(vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]);
            if c < T::zero() {
                return Err(invalid("polygon must be convex and counter-clockwise"));
            }
        }
        let p = Self { vertices };
        if p.area() <= T::lit(MIN_AREA) {
            return Err(invalid("polygon has zero area"));
        }
        Ok(p)
    }

    pub fn vertices(&self) -> &[[T; 2]] {
        &self.vertices
    }

    pub fn area(&self) -> T {
        polygon_area(&self.vertices)
    }

    /// Point-in-polygon test, boundary inclusive.
    pub fn contains(&self, p: [T; 2]) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| cross(self.vertices[i], self.vertices[(i + 1) % n], p) >= T::zero())
    }
}

/// `(b - a) × (c - a)`; positive when `c` lies left of `a → b`.
#[inline]
fn cross<T: Real>(a: [T; 2], b: [T; 2], c: [T; 2]) -> T {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Shoelace area; positive for counter-clockwise input.
pub fn polygon_area<T: Real>(pts: &[[T; 2]]) -> T {
    if pts.len() < 3 {
        return T::zero();
    }
    let mut s = T::zero();
    for i in 0..pts.len() {
        let a = pts[i];
        let b = pts[(i + 1) % pts.len()];
        s += a[0] * b[1] - a[1] * b[0];
    }
    s / T::lit(2.0)
}

/// Corners of the box footprint, counter-clockwise, starting front-left.
pub fn bev_footprint<T: Real>(b: &BBox3D<T>) -> BevPolygon<T> {
    BevPolygon {
        vertices: footprint_corners(b).to_vec(),
    }
}

fn footprint_corners<T: Real>(b: &BBox3D<T>) -> [[T; 2]; 4] {
    let two = T::lit(2.0);
    let (hl, hw) = (b.l / two, b.w / two);
    let (s, c) = b.theta.sin_cos();
    let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
    local.map(|[u, v]| [b.x + c * u - s * v, b.y + s * u + c * v])
}

/// Area of the intersection of two convex polygons (Sutherland-Hodgman).
pub fn convex_intersection_area<T: Real>(a: &BevPolygon<T>, b: &BevPolygon<T>) -> T {
    clipped_area(&a.vertices, &b.vertices)
}

fn clipped_area<T: Real>(subject: &[[T; 2]], clip: &[[T; 2]]) -> T {
    let mut out: Vec<[T; 2]> = subject.to_vec();
    let mut input: Vec<[T; 2]> = Vec::with_capacity(subject.len() + clip.len());
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let e0 = clip[i];
        let e1 = clip[(i + 1) % clip.len()];
        std::mem::swap(&mut input, &mut out);
        out.clear();
        for k in 0..input.len() {
            let cur = input[k];
            let prev = input[(k + input.len() - 1) % input.len()];
            let cur_in = cross(e0, e1, cur) >= T::zero();
            let prev_in = cross(e0, e1, prev) >= T::zero();
            if cur_in {
                if !prev_in {
                    out.push(line_intersection(prev, cur, e0, e1));
                }
                out.push(cur);
            } else if prev_in {
                out.push(line_intersection(prev, cur, e0, e1));
            }
        }
    }
    let area = polygon_area(&out);
    if area < T::lit(MIN_AREA) {
        T::zero()
    } else {
        area
    }
}

/// Intersection of segment `p → q` with the infinite line through `a → b`.
fn line_intersection<T: Real>(p: [T; 2], q: [T; 2], a: [T; 2], b: [T; 2]) -> [T; 2] {
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let denom = dp - dq;
    if denom == T::zero() {
        return q;
    }
    let t = dp / denom;
    [p[0] + (q[0] - p[0]) * t, p[1] + (q[1] - p[1]) * t]
}

/// Convex hull by monotone chain, counter-clockwise, collinear points dropped.
pub fn convex_hull<T: Real>(points: &[[T; 2]]) -> Vec<[T; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| {
        a[0].partial_cmp(&b[0])
            .unwrap()
            .then(a[1].partial_cmp(&b[1]).unwrap())
    });
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[T; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[T; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= T::zero()
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn vertical_span<T: Real>(b: &BBox3D<T>) -> (T, T) {
    let half = b.h / T::lit(2.0);
    (b.z - half, b.z + half)
}

fn half_diagonal<T: Real>(b: &BBox3D<T>) -> T {
    (b.l * b.l + b.w * b.w).sqrt() / T::lit(2.0)
}

/// Intersection volume of two yaw-only boxes. Exactly symmetric: the
/// arguments are put in a fixed order before clipping.
pub fn intersection_volume<T: Real>(a: &BBox3D<T>, b: &BBox3D<T>) -> T {
    let swap = a
        .to_array()
        .iter()
        .zip(b.to_array())
        .map(|(x, y)| x.partial_cmp(&y).unwrap_or(std::cmp::Ordering::Equal))
        .find(|o| o.is_ne())
        .is_some_and(|o| o.is_gt());
    let (a, b) = if swap { (b, a) } else { (a, b) };
    let (a0, a1) = vertical_span(a);
    let (b0, b1) = vertical_span(b);
    let dz = a1.min(b1) - a0.max(b0);
    if dz <= T::zero() {
        return T::zero();
    }
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let reach = half_diagonal(a) + half_diagonal(b);
    if dx * dx + dy * dy > reach * reach {
        return T::zero();
    }
    clipped_area(&footprint_corners(a), &footprint_corners(b)) * dz
}

/// Intersection over union of the two box volumes.
pub fn iou_3d<T: Real>(a: &BBox3D<T>, b: &BBox3D<T>) -> T {
    let inter = intersection_volume(a, b);
    if inter <= T::zero() {
        return T::zero();
    }
    let union = a.volume() + b.volume() - inter;
    (inter / union).min(T::one())
}

/// Generalized IoU against the enclosing prism: BEV convex hull of both
/// footprints times the union of the vertical extents.
pub fn giou_3d<T: Real>(a: &BBox3D<T>, b: &BBox3D<T>) -> T {
    let inter = intersection_volume(a, b);
    let union = a.volume() + b.volume() - inter;
    let iou = (inter / union).min(T::one());

    let mut pts = footprint_corners(a).to_vec();
    pts.extend_from_slice(&footprint_corners(b));
    let hull_area = polygon_area(&convex_hull(&pts));
    let (a0, a1) = vertical_span(a);
    let (b0, b1) = vertical_span(b);
    let enclosing = hull_area * (a1.max(b1) - a0.min(b0));
    if enclosing <= union {
        return iou;
    }
    iou - (enclosing - union) / enclosing
}
