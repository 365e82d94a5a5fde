//! Planar primitives and the kinematic kernel.
//!
//! Everything here is a pure function of its inputs. Detection and coverage
//! are computed from closed-form contact times on straight constant-speed
//! legs, so no time stepping happens anywhere in the crate.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance for kinematic identities (leg length vs speed * duration).
pub const KINEMATIC_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("erosion by {margin} leaves an empty region of a {width} x {height} rectangle")]
    EmptyErosion { margin: f64, width: f64, height: f64 },
    #[error("domain sides must be positive and finite, got {width} x {height}")]
    InvalidDomain { width: f64, height: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Plain Euclidean distance, ignoring any domain wrapping.
    pub fn dist(self, other: Point2) -> f64 {
        (self - other).norm()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

/// Axis-aligned rectangle `[min.x, max.x] x [min.y, max.y]`.
///
/// Degenerate rectangles (zero width or height) are allowed; they stand in
/// for segments and single points when covering regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub fn new(min: Point2, max: Point2) -> Self {
        debug_assert!(min.x <= max.x && min.y <= max.y);
        Rect { min, max }
    }

    pub fn point(p: Point2) -> Self {
        Rect { min: p, max: p }
    }

    /// Square of side `side` centered on `center`.
    pub fn centered_square(center: Point2, side: f64) -> Self {
        let h = side / 2.0;
        Rect::new(
            Point2::new(center.x - h, center.y - h),
            Point2::new(center.x + h, center.y + h),
        )
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point2 {
        Point2::new(
            0.5 * (self.min.x + self.max.x),
            0.5 * (self.min.y + self.max.y),
        )
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.contains(other.min) && self.contains(other.max)
    }

    /// Shrinks the rectangle by `margin` on all four sides.
    pub fn erode(&self, margin: f64) -> Result<Rect, GeometryError> {
        if 2.0 * margin >= self.width().min(self.height()) || margin < 0.0 {
            return Err(GeometryError::EmptyErosion {
                margin,
                width: self.width(),
                height: self.height(),
            });
        }
        Ok(Rect::new(
            Point2::new(self.min.x + margin, self.min.y + margin),
            Point2::new(self.max.x - margin, self.max.y - margin),
        ))
    }

    /// Grows the rectangle by `margin` on all sides.
    pub fn inflate(&self, margin: f64) -> Rect {
        Rect::new(
            Point2::new(self.min.x - margin, self.min.y - margin),
            Point2::new(self.max.x + margin, self.max.y + margin),
        )
    }

    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let min = Point2::new(self.min.x.max(other.min.x), self.min.y.max(other.min.y));
        let max = Point2::new(self.max.x.min(other.max.x), self.max.y.min(other.max.y));
        (min.x <= max.x && min.y <= max.y).then(|| Rect::new(min, max))
    }

    /// Distance from `p` to the closest point of the rectangle (0 inside).
    pub fn distance_to(&self, p: Point2) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        dx.hypot(dy)
    }

    /// Distance from `p` to the farthest corner.
    pub fn farthest_distance(&self, p: Point2) -> f64 {
        let dx = (p.x - self.min.x).abs().max((self.max.x - p.x).abs());
        let dy = (p.y - self.min.y).abs().max((self.max.y - p.y).abs());
        dx.hypot(dy)
    }

    /// Bounding box of two points.
    pub fn spanning(a: Point2, b: Point2) -> Rect {
        Rect::new(
            Point2::new(a.x.min(b.x), a.y.min(b.y)),
            Point2::new(a.x.max(b.x), a.y.max(b.y)),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    #[default]
    Bounded,
    /// Periodic wrapping; emulates an unbounded plane locally.
    Torus,
}

/// The simulation window `[0, width] x [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectDomain {
    pub width: f64,
    pub height: f64,
    pub boundary: BoundaryMode,
}

impl RectDomain {
    pub fn new(width: f64, height: f64, boundary: BoundaryMode) -> Result<Self, GeometryError> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(GeometryError::InvalidDomain { width, height });
        }
        Ok(RectDomain { width, height, boundary })
    }

    pub fn square(a: f64) -> Self {
        RectDomain::new(a, a, BoundaryMode::Bounded).expect("square side must be positive")
    }

    pub fn torus(a: f64) -> Self {
        RectDomain::new(a, a, BoundaryMode::Torus).expect("torus side must be positive")
    }

    pub fn is_torus(&self) -> bool {
        self.boundary == BoundaryMode::Torus
    }

    pub fn rect(&self) -> Rect {
        Rect::new(Point2::ORIGIN, Point2::new(self.width, self.height))
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// Rectangle diagonal; the longest straight leg inside the window.
    pub fn diameter(&self) -> f64 {
        self.width.hypot(self.height)
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.width / 2.0, self.height / 2.0)
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.rect().contains(p)
    }

    /// Maps a point into the fundamental cell in torus mode; identity otherwise.
    pub fn wrap(&self, p: Point2) -> Point2 {
        match self.boundary {
            BoundaryMode::Bounded => p,
            BoundaryMode::Torus => Point2::new(p.x.rem_euclid(self.width), p.y.rem_euclid(self.height)),
        }
    }

    /// Displacement `to - from`, replaced by the shortest periodic image on a torus.
    pub fn displacement(&self, from: Point2, to: Point2) -> Point2 {
        let d = to - from;
        match self.boundary {
            BoundaryMode::Bounded => d,
            BoundaryMode::Torus => Point2::new(
                d.x - self.width * (d.x / self.width).round(),
                d.y - self.height * (d.y / self.height).round(),
            ),
        }
    }

    /// Periodic shifts to try when comparing positions: only the zero shift
    /// when bounded, the 3 x 3 neighbourhood on a torus.
    pub fn image_shifts(&self) -> &'static [(f64, f64)] {
        const ZERO: [(f64, f64); 1] = [(0.0, 0.0)];
        const NINE: [(f64, f64); 9] = [
            (0.0, 0.0),
            (-1.0, -1.0),
            (-1.0, 0.0),
            (-1.0, 1.0),
            (0.0, -1.0),
            (0.0, 1.0),
            (1.0, -1.0),
            (1.0, 0.0),
            (1.0, 1.0),
        ];
        match self.boundary {
            BoundaryMode::Bounded => &ZERO,
            BoundaryMode::Torus => &NINE,
        }
    }

    pub fn shifted(&self, p: Point2, shift: (f64, f64)) -> Point2 {
        Point2::new(p.x + shift.0 * self.width, p.y + shift.1 * self.height)
    }
}

/// Euclidean distance; the minimum over periodic images in torus mode.
pub fn distance(p: Point2, q: Point2, dom: &RectDomain) -> f64 {
    dom.displacement(p, q).norm()
}

/// `dom` shrunk by `margin` on every side.
pub fn erode(dom: &RectDomain, margin: f64) -> Result<Rect, GeometryError> {
    dom.rect().erode(margin)
}

/// A regular grid of ball centers covering a rectangle.
///
/// Each center owns a cell of at most `eps * sqrt(2)` per side, so every point
/// of the region lies within `eps` of its cell's center.
#[derive(Debug, Clone, PartialEq)]
pub struct BallCover {
    pub region: Rect,
    pub eps: f64,
    pub nx: usize,
    pub ny: usize,
}

impl BallCover {
    pub fn new(region: Rect, eps: f64) -> Self {
        assert!(eps > 0.0, "cover radius must be positive");
        let spacing = eps * std::f64::consts::SQRT_2;
        let count = |len: f64| ((len / spacing).ceil() as usize).max(1);
        BallCover { region, eps, nx: count(region.width()), ny: count(region.height()) }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn step(&self) -> (f64, f64) {
        (self.region.width() / self.nx as f64, self.region.height() / self.ny as f64)
    }

    pub fn center(&self, ix: usize, iy: usize) -> Point2 {
        let (dx, dy) = self.step();
        Point2::new(
            self.region.min.x + (ix as f64 + 0.5) * dx,
            self.region.min.y + (iy as f64 + 0.5) * dy,
        )
    }

    /// Centers in row-major order (`index = iy * nx + ix`).
    pub fn centers(&self) -> Vec<Point2> {
        (0..self.ny)
            .flat_map(|iy| (0..self.nx).map(move |ix| (ix, iy)))
            .map(|(ix, iy)| self.center(ix, iy))
            .collect()
    }

    /// Index ranges of centers whose coordinates fall inside `bbox`.
    pub fn index_range(&self, bbox: &Rect) -> Option<(std::ops::Range<usize>, std::ops::Range<usize>)> {
        let (dx, dy) = self.step();
        let axis = |lo: f64, hi: f64, origin: f64, d: f64, n: usize| {
            if d == 0.0 {
                return if lo <= origin && origin <= hi { Some(0..n) } else { None };
            }
            let first = ((lo - origin) / d - 0.5).ceil().max(0.0);
            let last = ((hi - origin) / d - 0.5).floor().min(n as f64 - 1.0);
            (first <= last).then(|| first as usize..last as usize + 1)
        };
        let xs = axis(bbox.min.x, bbox.max.x, self.region.min.x, dx, self.nx)?;
        let ys = axis(bbox.min.y, bbox.max.y, self.region.min.y, dy, self.ny)?;
        Some((xs, ys))
    }
}

/// Centers of an `eps`-ball cover of `region`; the count is the covering number
/// used in the coverage bound.
pub fn cover_with_balls(region: &Rect, eps: f64) -> Vec<Point2> {
    BallCover::new(*region, eps).centers()
}

/// One straight constant-speed leg of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: Point2,
    pub end: Point2,
    pub t_start: f64,
    pub t_end: f64,
    pub speed: f64,
}

impl Segment {
    /// Leg from `start` to `end` departing at `t_start` with the given speed.
    pub fn from_speed(start: Point2, end: Point2, t_start: f64, speed: f64) -> Self {
        let len = start.dist(end);
        Segment { start, end, t_start, t_end: t_start + len / speed, speed }
    }

    /// A walker standing still over `[t_start, t_end]`.
    pub fn stationary(at: Point2, t_start: f64, t_end: f64) -> Self {
        Segment { start: at, end: at, t_start, t_end, speed: 0.0 }
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn length(&self) -> f64 {
        self.start.dist(self.end)
    }

    /// Velocity vector; zero for degenerate legs.
    pub fn velocity(&self) -> Point2 {
        let dt = self.duration();
        if dt > 0.0 {
            (self.end - self.start) * (1.0 / dt)
        } else {
            Point2::ORIGIN
        }
    }

    /// Position at `t`, clamped to the leg's time window.
    pub fn position_at(&self, t: f64) -> Point2 {
        let dt = self.duration();
        if dt <= 0.0 || t <= self.t_start {
            return self.start;
        }
        if t >= self.t_end {
            return self.end;
        }
        let u = (t - self.t_start) / dt;
        self.start + (self.end - self.start) * u
    }

    /// Whether `|end - start| = speed * duration` within [`KINEMATIC_TOL`].
    pub fn is_consistent(&self) -> bool {
        let len = self.length();
        let expected = self.speed * self.duration();
        (len - expected).abs() <= KINEMATIC_TOL * len.max(expected).max(1.0)
    }

    pub fn bbox(&self) -> Rect {
        Rect::spanning(self.start, self.end)
    }
}

/// Minimum distance from the moving point to `p` over the leg, and the
/// earliest time it is attained.
pub fn min_distance_point_segment(seg: &Segment, p: Point2) -> (f64, f64) {
    let d = seg.end - seg.start;
    let len_sq = d.norm_sq();
    if len_sq == 0.0 {
        return (seg.start.dist(p), seg.t_start);
    }
    let u = ((p - seg.start).dot(d) / len_sq).clamp(0.0, 1.0);
    let foot = seg.start + d * u;
    (foot.dist(p), seg.t_start + u * seg.duration())
}

/// Smallest `tau` in `[0, horizon]` with `|rel0 + vel * tau| <= rho`.
///
/// The squared distance is a quadratic in `tau`; the entry root is taken in
/// the citardauq form `c / q`, which stays accurate when `b^2 >> ac`.
pub fn first_entry(rel0: Point2, vel: Point2, rho: f64, horizon: f64) -> Option<f64> {
    let c = rel0.norm_sq() - rho * rho;
    if c <= 0.0 {
        return Some(0.0);
    }
    let a = vel.norm_sq();
    let half_b = rel0.dot(vel);
    if a == 0.0 || half_b >= 0.0 {
        return None;
    }
    let disc = half_b * half_b - a * c;
    if disc < 0.0 {
        return None;
    }
    let q = -half_b + disc.sqrt();
    let tau = c / q;
    (tau <= horizon).then_some(tau)
}

/// Earliest time within the legs' common window at which the two moving
/// points are within `rho` of each other.
pub fn first_contact_two_moving(a: &Segment, b: &Segment, rho: f64) -> Option<f64> {
    first_contact_in(a, b, rho, None)
}

/// [`first_contact_two_moving`] with torus-aware periodic images.
pub fn first_contact_in(a: &Segment, b: &Segment, rho: f64, dom: Option<&RectDomain>) -> Option<f64> {
    let t0 = a.t_start.max(b.t_start);
    let t1 = a.t_end.min(b.t_end);
    if t0 > t1 {
        return None;
    }
    let rel0 = a.position_at(t0) - b.position_at(t0);
    let vel = a.velocity() - b.velocity();
    match dom.filter(|d| d.is_torus()) {
        None => first_entry(rel0, vel, rho, t1 - t0).map(|tau| t0 + tau),
        Some(d) => {
            let rel0 = d.displacement(Point2::ORIGIN, rel0);
            d.image_shifts()
                .iter()
                .filter_map(|&s| first_entry(d.shifted(rel0, s), vel, rho, t1 - t0))
                .min_by(f64::total_cmp)
                .map(|tau| t0 + tau)
        }
    }
}

/// Earliest time the moving point on `seg` comes within `rho` of the fixed
/// point `p`.
pub fn first_contact_static(seg: &Segment, p: Point2, rho: f64, dom: Option<&RectDomain>) -> Option<f64> {
    first_contact_in(seg, &Segment::stationary(p, seg.t_start, seg.t_end), rho, dom)
}

/// Length of the part of segment `a -> b` lying inside the disk `B(center, radius)`.
pub fn clip_length_disk(a: Point2, b: Point2, center: Point2, radius: f64) -> f64 {
    let d = b - a;
    let len_sq = d.norm_sq();
    if len_sq == 0.0 {
        return 0.0;
    }
    let f = a - center;
    let half_b = f.dot(d);
    let c = f.norm_sq() - radius * radius;
    let disc = half_b * half_b - len_sq * c;
    if disc <= 0.0 {
        return 0.0;
    }
    let sq = disc.sqrt();
    let u0 = ((-half_b - sq) / len_sq).max(0.0);
    let u1 = ((-half_b + sq) / len_sq).min(1.0);
    (u1 - u0).max(0.0) * len_sq.sqrt()
}

/// Length of the part of segment `a -> b` inside the closed rectangle
/// (Liang-Barsky clipping).
pub fn clip_length_rect(a: Point2, b: Point2, rect: &Rect) -> f64 {
    let d = b - a;
    let (mut u0, mut u1) = (0.0_f64, 1.0_f64);
    for (p, q) in [
        (-d.x, a.x - rect.min.x),
        (d.x, rect.max.x - a.x),
        (-d.y, a.y - rect.min.y),
        (d.y, rect.max.y - a.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return 0.0;
            }
        } else {
            let u = q / p;
            if p < 0.0 {
                u0 = u0.max(u);
            } else {
                u1 = u1.min(u);
            }
        }
    }
    if u1 <= u0 {
        return 0.0;
    }
    (u1 - u0) * d.norm()
}
