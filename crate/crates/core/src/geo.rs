//! Planar geometry and local coordinate projection.
//!
//! All metric work happens in a local east/north plane (meters) obtained by an
//! equirectangular projection about a scenario origin. Community footprints are
//! convex hulls dilated outward by a standoff distance; the dilation rounds each
//! corner with a short run of tangent segments so the result always contains the
//! exact Minkowski dilation.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius used by the local projection.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Tolerance for orientation predicates, in square meters.
pub const ORIENT_EPS: f64 = 1e-9;

/// Tolerance for on-boundary point tests, in meters.
pub const BOUNDARY_EPS: f64 = 1e-9;

/// Minimum vertices emitted per rounded corner of an offset polygon.
pub const CORNER_ARC_VERTICES: usize = 8;

/// Vertices of the disk that stands in for a one-point community.
pub const DISK_VERTICES: usize = 16;

/// Widest angle one tangent segment of a rounded corner may span.
pub const MAX_ARC_STEP: f64 = PI / 16.0;

/// Smallest dilation radius applied to zero-area hulls, so every footprint
/// keeps a positive area even when the configured offset is zero.
pub const MIN_DEGENERATE_RADIUS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("invalid coordinate: lat {lat}, lon {lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("cannot build a footprint from an empty point set")]
    EmptyCommunity,
    #[error("degenerate polygon: {distinct} distinct vertices")]
    DegeneratePolygon { distinct: usize },
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("offsetting requires a convex polygon")]
    NotConvex,
    #[error("invalid parameter {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

/// WGS84 latitude/longitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        let p = GeoPoint { lat, lon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        let ok = self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon);
        if ok {
            Ok(())
        } else {
            Err(GeoError::InvalidCoordinate {
                lat: self.lat,
                lon: self.lon,
            })
        }
    }
}

/// Meters east (`x`) and north (`y`) of the scenario origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanePoint {
    pub x: f64,
    pub y: f64,
}

impl PlanePoint {
    pub const fn new(x: f64, y: f64) -> Self {
        PlanePoint { x, y }
    }

    pub fn dot(self, o: PlanePoint) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: PlanePoint) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: PlanePoint) -> f64 {
        (self - o).norm()
    }

    pub fn lerp(self, o: PlanePoint, t: f64) -> PlanePoint {
        PlanePoint::new(self.x + (o.x - self.x) * t, self.y + (o.y - self.y) * t)
    }
}

impl Add for PlanePoint {
    type Output = PlanePoint;
    fn add(self, o: PlanePoint) -> PlanePoint {
        PlanePoint::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for PlanePoint {
    type Output = PlanePoint;
    fn sub(self, o: PlanePoint) -> PlanePoint {
        PlanePoint::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for PlanePoint {
    type Output = PlanePoint;
    fn mul(self, s: f64) -> PlanePoint {
        PlanePoint::new(self.x * s, self.y * s)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn of<'a>(points: impl IntoIterator<Item = &'a PlanePoint>) -> Option<Bounds> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = Bounds {
            min_x: first.x,
            min_y: first.y,
            max_x: first.x,
            max_y: first.y,
        };
        for p in it {
            b.min_x = b.min_x.min(p.x);
            b.min_y = b.min_y.min(p.y);
            b.max_x = b.max_x.max(p.x);
            b.max_y = b.max_y.max(p.y);
        }
        Some(b)
    }

    pub fn intersects(&self, o: &Bounds) -> bool {
        self.min_x <= o.max_x && o.min_x <= self.max_x && self.min_y <= o.max_y && o.min_y <= self.max_y
    }

    pub fn expanded(&self, margin: f64) -> Bounds {
        Bounds {
            min_x: self.min_x - margin,
            min_y: self.min_y - margin,
            max_x: self.max_x + margin,
            max_y: self.max_y + margin,
        }
    }

    pub fn contains(&self, p: PlanePoint) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }
}

/// Counter-clockwise simple polygon, closed implicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplePolygon {
    vertices: Vec<PlanePoint>,
}

impl SimplePolygon {
    /// Validates the ring and normalizes clockwise input to counter-clockwise.
    pub fn new(mut vertices: Vec<PlanePoint>) -> Result<Self, GeoError> {
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        let distinct = count_distinct(&vertices);
        if distinct < 3 {
            return Err(GeoError::DegeneratePolygon { distinct });
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(GeoError::InvalidPolygon("non-finite vertex".into()));
        }
        let area = signed_area(&vertices);
        if area.abs() <= ORIENT_EPS {
            return Err(GeoError::InvalidPolygon("zero area".into()));
        }
        if has_self_intersection(&vertices) {
            return Err(GeoError::InvalidPolygon("self-intersecting ring".into()));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        Ok(SimplePolygon { vertices })
    }

    // Callers guarantee a CCW, simple ring.
    fn from_ccw(vertices: Vec<PlanePoint>) -> Self {
        debug_assert!(vertices.len() >= 3);
        SimplePolygon { vertices }
    }

    pub fn vertices(&self) -> &[PlanePoint] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (PlanePoint, PlanePoint)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::of(&self.vertices).expect("polygon has vertices")
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.distance(b)).sum()
    }

    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[(i + n - 1) % n];
            let b = self.vertices[i];
            let c = self.vertices[(i + 1) % n];
            orient(a, b, c) >= -ORIENT_EPS
        })
    }

    /// Point-in-polygon test; points on the boundary count as inside.
    pub fn contains(&self, p: PlanePoint) -> bool {
        point_in_polygon(p, self)
    }
}

/// Result of a convex hull computation, keeping zero-area cases explicit.
#[derive(Debug, Clone, PartialEq)]
pub enum Hull {
    Point(PlanePoint),
    Segment(PlanePoint, PlanePoint),
    Polygon(SimplePolygon),
}

/// Twice the signed area of triangle `abc`; positive for a left turn.
pub fn orient(a: PlanePoint, b: PlanePoint, c: PlanePoint) -> f64 {
    (b - a).cross(c - a)
}

/// Shoelace signed area, positive for counter-clockwise rings.
pub fn signed_area(ring: &[PlanePoint]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        acc += ring[i].cross(ring[(i + 1) % n]);
    }
    acc / 2.0
}

fn count_distinct(ring: &[PlanePoint]) -> usize {
    let mut pts: Vec<(f64, f64)> = ring.iter().map(|p| (p.x, p.y)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    pts.len()
}

fn has_self_intersection(ring: &[PlanePoint]) -> bool {
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in (i + 1)..n {
            // adjacent edges share a vertex by construction
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return true;
            }
        }
    }
    false
}

/// Local equirectangular projection about `origin`.
pub fn project(origin: GeoPoint, p: GeoPoint) -> Result<PlanePoint, GeoError> {
    origin.validate()?;
    p.validate()?;
    let mut dlon = p.lon - origin.lon;
    if dlon > 180.0 {
        dlon -= 360.0;
    } else if dlon < -180.0 {
        dlon += 360.0;
    }
    let x = EARTH_RADIUS_M * origin.lat.to_radians().cos() * dlon.to_radians();
    let y = EARTH_RADIUS_M * (p.lat - origin.lat).to_radians();
    Ok(PlanePoint::new(x, y))
}

/// Inverse of [`project`].
pub fn unproject(origin: GeoPoint, q: PlanePoint) -> GeoPoint {
    let lat = origin.lat + (q.y / EARTH_RADIUS_M).to_degrees();
    let coslat = origin.lat.to_radians().cos();
    let mut lon = origin.lon + (q.x / (EARTH_RADIUS_M * coslat)).to_degrees();
    if lon > 180.0 {
        lon -= 360.0;
    } else if lon < -180.0 {
        lon += 360.0;
    }
    GeoPoint { lat, lon }
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: PlanePoint, a: PlanePoint, b: PlanePoint) -> f64 {
    let ab = b - a;
    let len_sq = ab.dot(ab);
    if len_sq == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.distance(a.lerp(b, t))
}

/// Distance from `p` to the nearest point of a polyline.
pub fn point_polyline_distance(p: PlanePoint, line: &[PlanePoint]) -> f64 {
    match line {
        [] => f64::INFINITY,
        [only] => p.distance(*only),
        _ => line
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

fn on_segment(p: PlanePoint, a: PlanePoint, b: PlanePoint) -> bool {
    p.x >= a.x.min(b.x) - BOUNDARY_EPS
        && p.x <= a.x.max(b.x) + BOUNDARY_EPS
        && p.y >= a.y.min(b.y) - BOUNDARY_EPS
        && p.y <= a.y.max(b.y) + BOUNDARY_EPS
}

fn sign(v: f64) -> i8 {
    if v > ORIENT_EPS {
        1
    } else if v < -ORIENT_EPS {
        -1
    } else {
        0
    }
}

/// Closed-segment intersection test, including touching and collinear overlap.
pub fn segments_intersect(a: PlanePoint, b: PlanePoint, c: PlanePoint, d: PlanePoint) -> bool {
    let o1 = sign(orient(a, b, c));
    let o2 = sign(orient(a, b, d));
    let o3 = sign(orient(c, d, a));
    let o4 = sign(orient(c, d, b));
    if o1 * o2 < 0 && o3 * o4 < 0 {
        return true;
    }
    (o1 == 0 && on_segment(c, a, b))
        || (o2 == 0 && on_segment(d, a, b))
        || (o3 == 0 && on_segment(a, c, d))
        || (o4 == 0 && on_segment(b, c, d))
}

/// Crossing-number point-in-polygon; boundary points are inside.
pub fn point_in_polygon(p: PlanePoint, poly: &SimplePolygon) -> bool {
    let mut inside = false;
    for (a, b) in poly.edges() {
        if point_segment_distance(p, a, b) <= BOUNDARY_EPS {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// True iff the closed segment `[a, b]` touches the polygon boundary or interior.
pub fn segment_intersects_polygon(a: PlanePoint, b: PlanePoint, poly: &SimplePolygon) -> bool {
    let seg = Bounds::of(&[a, b]).expect("two points");
    if !seg.intersects(&poly.bounds().expanded(BOUNDARY_EPS)) {
        return false;
    }
    if point_in_polygon(a, poly) || point_in_polygon(b, poly) {
        return true;
    }
    poly.edges().any(|(c, d)| segments_intersect(a, b, c, d))
}

/// Polyline variant of [`segment_intersects_polygon`].
pub fn polyline_intersects_polygon(line: &[PlanePoint], poly: &SimplePolygon) -> bool {
    match line {
        [] => false,
        [only] => point_in_polygon(*only, poly),
        _ => line
            .windows(2)
            .any(|w| segment_intersects_polygon(w[0], w[1], poly)),
    }
}

/// Andrew's monotone chain. Collinear boundary points are dropped.
pub fn convex_hull(points: &[PlanePoint]) -> Result<Hull, GeoError> {
    if points.is_empty() {
        return Err(GeoError::EmptyCommunity);
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() == 1 {
        return Ok(Hull::Point(pts[0]));
    }

    let mut lower: Vec<PlanePoint> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while lower.len() >= 2 && orient(lower[lower.len() - 2], lower[lower.len() - 1], p) <= ORIENT_EPS {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<PlanePoint> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && orient(upper[upper.len() - 2], upper[upper.len() - 1], p) <= ORIENT_EPS {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);

    if lower.len() < 3 || signed_area(&lower) <= ORIENT_EPS {
        let first = pts[0];
        let last = pts[pts.len() - 1];
        return Ok(Hull::Segment(first, last));
    }
    Ok(Hull::Polygon(SimplePolygon::from_ccw(lower)))
}

fn outward_normal(d: PlanePoint) -> PlanePoint {
    let len = d.norm();
    PlanePoint::new(d.y / len, -d.x / len)
}

/// Rounds a corner at `v` from outward normal angle `start` sweeping `sweep`
/// radians counter-clockwise, using `steps` tangent segments of radius `rho`.
fn push_corner(out: &mut Vec<PlanePoint>, v: PlanePoint, start: f64, sweep: f64, rho: f64, steps: usize) {
    if sweep < 1e-12 {
        out.push(v + PlanePoint::new(start.cos(), start.sin()) * rho);
        return;
    }
    let step = sweep / steps as f64;
    let r = rho / (step / 2.0).cos();
    for k in 0..steps {
        let a = start + (k as f64 + 0.5) * step;
        out.push(v + PlanePoint::new(a.cos(), a.sin()) * r);
    }
}

/// Dilates a convex ring (CCW; two vertices allowed for a segment) by `rho`.
fn dilate_convex_ring(ring: &[PlanePoint], rho: f64) -> SimplePolygon {
    let n = ring.len();
    let mut out = Vec::with_capacity(n * CORNER_ARC_VERTICES);
    for i in 0..n {
        let prev = ring[(i + n - 1) % n];
        let v = ring[i];
        let next = ring[(i + 1) % n];
        let n_in = outward_normal(v - prev);
        let n_out = outward_normal(next - v);
        let a_in = n_in.y.atan2(n_in.x);
        let a_out = n_out.y.atan2(n_out.x);
        let mut sweep = a_out - a_in;
        while sweep < 0.0 {
            sweep += 2.0 * PI;
        }
        while sweep >= 2.0 * PI {
            sweep -= 2.0 * PI;
        }
        // a two-vertex ring has antiparallel normals: a half-turn cap
        if n == 2 {
            sweep = PI;
        }
        let steps = CORNER_ARC_VERTICES.max((sweep / MAX_ARC_STEP).ceil() as usize);
        push_corner(&mut out, v, a_in, sweep, rho, steps);
    }
    SimplePolygon::from_ccw(out)
}

fn disk(center: PlanePoint, rho: f64) -> SimplePolygon {
    let mut out = Vec::with_capacity(DISK_VERTICES);
    push_corner(&mut out, center, 0.0, 2.0 * PI, rho, DISK_VERTICES);
    SimplePolygon::from_ccw(out)
}

fn check_rho(rho: f64) -> Result<(), GeoError> {
    if !rho.is_finite() || rho < 0.0 {
        return Err(GeoError::InvalidParameter { name: "rho", value: rho });
    }
    Ok(())
}

/// Outward dilation of a convex polygon by `rho`.
///
/// Corners are rounded with [`CORNER_ARC_VERTICES`] tangent segments, so the
/// result is the intersection of half-planes `d·x ≤ h(d) + rho` over a fixed
/// direction set: it contains the exact dilation and grows monotonically in `rho`.
pub fn offset_polygon(poly: &SimplePolygon, rho: f64) -> Result<SimplePolygon, GeoError> {
    check_rho(rho)?;
    if rho == 0.0 {
        return Ok(poly.clone());
    }
    if !poly.is_convex() {
        return Err(GeoError::NotConvex);
    }
    Ok(dilate_convex_ring(poly.vertices(), rho))
}

/// Dilates any hull to a positive-area polygon. Zero-area hulls (one point,
/// or collinear points) use a radius of at least [`MIN_DEGENERATE_RADIUS`].
pub fn dilate_hull(hull: &Hull, rho: f64) -> Result<SimplePolygon, GeoError> {
    check_rho(rho)?;
    match hull {
        Hull::Point(p) => Ok(disk(*p, rho.max(MIN_DEGENERATE_RADIUS))),
        Hull::Segment(a, b) => Ok(dilate_convex_ring(&[*a, *b], rho.max(MIN_DEGENERATE_RADIUS))),
        Hull::Polygon(poly) => offset_polygon(poly, rho),
    }
}

/// Convex hull of `points` dilated by `rho`.
pub fn footprint_polygon(points: &[PlanePoint], rho: f64) -> Result<SimplePolygon, GeoError> {
    dilate_hull(&convex_hull(points)?, rho)
}

/// Shoelace area of a polygon, in square meters.
pub fn polygon_area(poly: &SimplePolygon) -> Result<f64, GeoError> {
    let distinct = count_distinct(poly.vertices());
    if distinct < 3 {
        return Err(GeoError::DegeneratePolygon { distinct });
    }
    Ok(signed_area(poly.vertices()).abs())
}
