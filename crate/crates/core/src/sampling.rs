//! Seeded random sampling: Poisson point processes, the waypoint / velocity /
//! alarm measures of the mobility model, independent thinning, and
//! deterministic quadrature of waypoint-measure masses.

use std::f64::consts::{PI, TAU};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point2, Rect, RectDomain};

/// Rejection loops give up after this many proposals.
const MAX_REJECTIONS: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("waypoint measure support does not intersect the domain (home at ({x}, {y}))")]
    SupportOutsideDomain { x: f64, y: f64 },
    #[error("invalid measure parameter: {0}")]
    InvalidMeasure(String),
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A counter-based random stream.
///
/// Backed by ChaCha8 keyed with `seed` and positioned on the 64-bit stream
/// `stream_id`, so every `(seed, stream_id)` pair yields its own reproducible
/// sequence without any coordination between workers.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// An independent child stream, e.g. one per walker inside a replication.
    ///
    /// The child key mixes this stream's `(seed, stream_id)`; `index` selects
    /// the ChaCha stream under that key. The parent's position is not used,
    /// so children are stable no matter how much the parent has drawn.
    pub fn substream(&self, index: u64) -> RngStream {
        let key = splitmix64(self.seed ^ splitmix64(self.stream_id ^ 0x5352_575f_7375_6273));
        RngStream::new(key, index)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// A disk-shaped popularity spot inside a hotspot mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hotspot {
    pub center: Point2,
    pub radius: f64,
    pub weight: f64,
}

/// Waypoint distribution. All kinds except `UniformDomain` and `Hotspots` are
/// anchored at the walker's home. Draws are clipped to the domain by rejection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WaypointMeasure {
    UniformDomain,
    /// Uniform on the disk of the given radius around home.
    BallUniform { radius: f64 },
    /// Uniform on the domain minus the disk of the given radius around home.
    AnnulusUniform { radius: f64 },
    /// Uniform direction, Pareto distance: `P(d > s) = (s / scale)^(-beta)` for `s >= scale`.
    PowerTail { beta: f64, scale: f64 },
    Hotspots { spots: Vec<Hotspot>, background_weight: f64 },
}

impl WaypointMeasure {
    pub fn validate(&self) -> Result<(), SamplingError> {
        let bad = |msg: &str| Err(SamplingError::InvalidMeasure(msg.to_string()));
        match self {
            WaypointMeasure::UniformDomain => Ok(()),
            WaypointMeasure::BallUniform { radius } | WaypointMeasure::AnnulusUniform { radius } => {
                if *radius > 0.0 && radius.is_finite() {
                    Ok(())
                } else {
                    bad("radius must be positive")
                }
            }
            WaypointMeasure::PowerTail { beta, scale } => {
                if !(*beta > 1.0) {
                    bad("power tail exponent must exceed 1")
                } else if !(*scale > 0.0) {
                    bad("power tail scale must be positive")
                } else {
                    Ok(())
                }
            }
            WaypointMeasure::Hotspots { spots, background_weight } => {
                if *background_weight < 0.0 || spots.iter().any(|s| !(s.radius > 0.0) || s.weight < 0.0) {
                    return bad("hotspot radii must be positive and weights non-negative");
                }
                let total: f64 = background_weight + spots.iter().map(|s| s.weight).sum::<f64>();
                if total > 0.0 {
                    Ok(())
                } else {
                    bad("hotspot weights sum to zero")
                }
            }
        }
    }

    /// Whether the support clipped to `dom` has positive area.
    pub fn intersects(&self, home: Point2, dom: &RectDomain) -> bool {
        if dom.is_torus() {
            return true;
        }
        let rect = dom.rect();
        match self {
            WaypointMeasure::UniformDomain => true,
            WaypointMeasure::BallUniform { radius } => rect.distance_to(home) < *radius,
            WaypointMeasure::AnnulusUniform { radius } => rect.farthest_distance(home) > *radius,
            WaypointMeasure::PowerTail { scale, .. } => rect.farthest_distance(home) > *scale,
            WaypointMeasure::Hotspots { spots, background_weight } => {
                *background_weight > 0.0
                    || spots.iter().any(|s| s.weight > 0.0 && rect.distance_to(s.center) < s.radius)
            }
        }
    }
}

fn uniform_in<R: Rng + ?Sized>(rect: &Rect, rng: &mut R) -> Point2 {
    Point2::new(
        rect.min.x + rect.width() * rng.random::<f64>(),
        rect.min.y + rect.height() * rng.random::<f64>(),
    )
}

fn uniform_disk_offset<R: Rng + ?Sized>(radius: f64, rng: &mut R) -> Point2 {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = TAU * rng.random::<f64>();
    Point2::new(r * theta.cos(), r * theta.sin())
}

/// Draws around `anchor` with `offset` until the point lands in the domain
/// (or wraps it on a torus).
fn anchored<R: Rng + ?Sized>(
    anchor: Point2,
    dom: &RectDomain,
    rng: &mut R,
    mut offset: impl FnMut(&mut R) -> Point2,
) -> Option<Point2> {
    if dom.is_torus() {
        return Some(dom.wrap(anchor + offset(rng)));
    }
    let rect = dom.rect();
    (0..MAX_REJECTIONS).map(|_| anchor + offset(rng)).find(|p| rect.contains(*p))
}

/// Draws a waypoint for a walker living at `home`.
pub fn sample_waypoint<R: Rng + ?Sized>(
    m: &WaypointMeasure,
    home: Point2,
    dom: &RectDomain,
    rng: &mut R,
) -> Result<Point2, SamplingError> {
    let outside = || SamplingError::SupportOutsideDomain { x: home.x, y: home.y };
    if !m.intersects(home, dom) {
        return Err(outside());
    }
    let drawn = match m {
        WaypointMeasure::UniformDomain => Some(uniform_in(&dom.rect(), rng)),
        WaypointMeasure::BallUniform { radius } => {
            let radius = *radius;
            anchored(home, dom, rng, |r| uniform_disk_offset(radius, r))
        }
        WaypointMeasure::AnnulusUniform { radius } => {
            let rect = dom.rect();
            (0..MAX_REJECTIONS)
                .map(|_| uniform_in(&rect, rng))
                .find(|p| crate::geometry::distance(*p, home, dom) > *radius)
        }
        WaypointMeasure::PowerTail { beta, scale } => {
            let (beta, scale) = (*beta, *scale);
            anchored(home, dom, rng, |r| {
                // 1 - U lies in (0, 1], so the distance is finite
                let u: f64 = 1.0 - r.random::<f64>();
                let s = scale * u.powf(-1.0 / beta);
                let theta = TAU * r.random::<f64>();
                Point2::new(s * theta.cos(), s * theta.sin())
            })
        }
        WaypointMeasure::Hotspots { spots, background_weight } => {
            let rect = dom.rect();
            let usable: Vec<&Hotspot> = spots
                .iter()
                .filter(|s| s.weight > 0.0 && (dom.is_torus() || rect.distance_to(s.center) < s.radius))
                .collect();
            let total = background_weight + usable.iter().map(|s| s.weight).sum::<f64>();
            let mut pick = rng.random::<f64>() * total;
            let mut chosen = None;
            for s in &usable {
                if pick < s.weight {
                    chosen = Some(*s);
                    break;
                }
                pick -= s.weight;
            }
            match chosen {
                Some(s) => {
                    let radius = s.radius;
                    anchored(s.center, dom, rng, |r| uniform_disk_offset(radius, r))
                }
                None if *background_weight > 0.0 => Some(uniform_in(&rect, rng)),
                None => {
                    let s = usable.last().ok_or_else(outside)?;
                    let radius = s.radius;
                    anchored(s.center, dom, rng, |r| uniform_disk_offset(radius, r))
                }
            }
        }
    };
    drawn.ok_or_else(outside)
}

/// Speed distribution supported on `[v_minus, v_plus]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocityMeasure {
    Uniform { min: f64, max: f64 },
    /// Piecewise-linear density through `(speed, density)` knots, sorted by speed.
    Table { knots: Vec<(f64, f64)> },
}

impl VelocityMeasure {
    pub fn v_minus(&self) -> f64 {
        match self {
            VelocityMeasure::Uniform { min, .. } => *min,
            VelocityMeasure::Table { knots } => knots.first().map_or(f64::NAN, |k| k.0),
        }
    }

    pub fn v_plus(&self) -> f64 {
        match self {
            VelocityMeasure::Uniform { max, .. } => *max,
            VelocityMeasure::Table { knots } => knots.last().map_or(f64::NAN, |k| k.0),
        }
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        let bad = |msg: &str| Err(SamplingError::InvalidMeasure(msg.to_string()));
        match self {
            VelocityMeasure::Uniform { min, max } => {
                if !(*min > 0.0 && max >= min && max.is_finite()) {
                    return bad("velocity support must satisfy 0 < v_minus <= v_plus < inf");
                }
            }
            VelocityMeasure::Table { knots } => {
                if knots.len() < 2 || !(knots[0].0 > 0.0) {
                    return bad("velocity table needs at least two knots with positive speeds");
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0) || knots.iter().any(|k| k.1 < 0.0) {
                    return bad("velocity table speeds must increase and densities be non-negative");
                }
                if knots.iter().all(|k| k.1 == 0.0) {
                    return bad("velocity table density is identically zero");
                }
            }
        }
        Ok(())
    }
}

pub fn sample_velocity<R: Rng + ?Sized>(m: &VelocityMeasure, rng: &mut R) -> f64 {
    match m {
        VelocityMeasure::Uniform { min, max } => {
            if min == max {
                *min
            } else {
                min + (max - min) * rng.random::<f64>()
            }
        }
        VelocityMeasure::Table { knots } => {
            let peak = knots.iter().map(|k| k.1).fold(0.0, f64::max);
            let (lo, hi) = (knots[0].0, knots[knots.len() - 1].0);
            loop {
                let v = lo + (hi - lo) * rng.random::<f64>();
                if rng.random::<f64>() * peak <= table_density(knots, v) {
                    return v;
                }
            }
        }
    }
}

fn table_density(knots: &[(f64, f64)], v: f64) -> f64 {
    let i = knots.partition_point(|k| k.0 <= v);
    if i == 0 || i == knots.len() {
        return if i == knots.len() && v == knots[i - 1].0 { knots[i - 1].1 } else { 0.0 };
    }
    let (v0, d0) = knots[i - 1];
    let (v1, d1) = knots[i];
    d0 + (d1 - d0) * (v - v0) / (v1 - v0)
}

/// Distribution of the time between homecomings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlarmMeasure {
    /// Fixed duration; `f64::INFINITY` disables homecomings.
    Deterministic { value: f64 },
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl AlarmMeasure {
    pub fn validate(&self) -> Result<(), SamplingError> {
        let ok = match self {
            AlarmMeasure::Deterministic { value } => *value > 0.0,
            AlarmMeasure::Exponential { rate } => *rate > 0.0 && rate.is_finite(),
            AlarmMeasure::Uniform { lo, hi } => *lo > 0.0 && hi >= lo && hi.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(SamplingError::InvalidMeasure("alarm support must lie in (0, inf)".into()))
        }
    }
}

/// Draws an alarm duration. Deterministic alarms consume no randomness.
pub fn sample_alarm<R: Rng + ?Sized>(m: &AlarmMeasure, rng: &mut R) -> f64 {
    match m {
        AlarmMeasure::Deterministic { value } => *value,
        AlarmMeasure::Exponential { rate } => {
            let exp = Exp::new(*rate).expect("validated rate");
            loop {
                let z: f64 = exp.sample(rng);
                if z > 0.0 {
                    return z;
                }
            }
        }
        AlarmMeasure::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
    }
}

/// Homogeneous Poisson point process of intensity `lambda` on the domain.
pub fn sample_ppp<R: Rng + ?Sized>(dom: &RectDomain, lambda: f64, rng: &mut R) -> Vec<Point2> {
    assert!(lambda >= 0.0, "intensity must be non-negative");
    let mean = lambda * dom.area();
    if mean == 0.0 {
        return Vec::new();
    }
    let n = Poisson::new(mean).expect("positive Poisson mean").sample(rng) as usize;
    let rect = dom.rect();
    (0..n).map(|_| uniform_in(&rect, rng)).collect()
}

/// Independent Bernoulli(`keep`) retention of every point.
pub fn thin(points: &[Point2], keep: f64, rng: &mut impl Rng) -> Vec<Point2> {
    assert!((0.0..=1.0).contains(&keep), "retention probability must be in [0, 1]");
    thin_with(points, |_| keep, rng)
}

/// Location-dependent independent thinning: point `p` survives with
/// probability `keep(p)`.
pub fn thin_with(points: &[Point2], keep: impl Fn(&Point2) -> f64, rng: &mut impl Rng) -> Vec<Point2> {
    points
        .iter()
        .filter(|p| {
            let k = keep(p);
            // a draw is consumed for every point so streams stay aligned
            let u = rng.random::<f64>();
            k >= 1.0 || u < k
        })
        .copied()
        .collect()
}

/// Midpoint rule on an `n x n` grid over `rect`.
fn midpoint(rect: &Rect, n: usize, f: &impl Fn(Point2) -> f64) -> f64 {
    let dx = rect.width() / n as f64;
    let dy = rect.height() / n as f64;
    let mut sum = 0.0;
    for j in 0..n {
        let y = rect.min.y + (j as f64 + 0.5) * dy;
        for i in 0..n {
            sum += f(Point2::new(rect.min.x + (i as f64 + 0.5) * dx, y));
        }
    }
    sum * dx * dy
}

const MASS_TOL: f64 = 1e-4;
const MIN_GRID: usize = 32;
const MAX_GRID: usize = 2048;

/// Refines `ratio(n)` by doubling `n` until two successive values agree
/// within [`MASS_TOL`].
fn refine(ratio: impl Fn(usize) -> f64) -> f64 {
    let mut n = MIN_GRID;
    let mut prev = ratio(n);
    while n < MAX_GRID {
        n *= 2;
        let next = ratio(n);
        if (next - prev).abs() < MASS_TOL {
            return next;
        }
        prev = next;
    }
    prev
}

/// Mass of `B(center, rho)` for a single-component measure, normalized over the domain.
///
/// Home-anchored radial kinds are integrated in polar coordinates around the
/// home with the radius pushed through its CDF, which turns the density into
/// a bounded indicator on the unit square. Flat kinds use the Cartesian grid.
fn component_mass(m: &WaypointMeasure, home: Point2, center: Point2, rho: f64, dom: &RectDomain) -> f64 {
    let rect = dom.rect();
    let in_ball = |x: Point2| x.dist(center) <= rho;
    let radial = |inv_cdf: &dyn Fn(f64) -> f64| {
        refine(|n| {
            let (mut inside, mut hit) = (0usize, 0usize);
            for i in 0..n {
                let s = inv_cdf((i as f64 + 0.5) / n as f64);
                for j in 0..n {
                    let theta = TAU * (j as f64 + 0.5) / n as f64;
                    let x = dom.wrap(home + Point2::new(s * theta.cos(), s * theta.sin()));
                    if rect.contains(x) {
                        inside += 1;
                        hit += usize::from(in_ball(x));
                    }
                }
            }
            if inside == 0 {
                0.0
            } else {
                hit as f64 / inside as f64
            }
        })
    };
    match m {
        WaypointMeasure::BallUniform { radius } => radial(&|u| radius * u.sqrt()),
        WaypointMeasure::PowerTail { beta, scale } => radial(&|u| scale * (1.0 - u).powf(-1.0 / beta)),
        WaypointMeasure::UniformDomain | WaypointMeasure::AnnulusUniform { .. } => {
            let support = |x: Point2| match m {
                WaypointMeasure::AnnulusUniform { radius } => crate::geometry::distance(x, home, dom) > *radius,
                _ => true,
            };
            let Some(window) = Rect::centered_square(center, 2.0 * rho).intersect(&rect) else {
                return 0.0;
            };
            let ind = |ok: bool| f64::from(u8::from(ok));
            refine(|n| {
                let den = midpoint(&rect, n, &|x| ind(support(x)));
                if den > 0.0 {
                    midpoint(&window, n, &|x| ind(support(x) && in_ball(x))) / den
                } else {
                    0.0
                }
            })
        }
        WaypointMeasure::Hotspots { .. } => unreachable!("mixtures are split into components"),
    }
}

/// Mass the waypoint measure of a walker at `home` puts on `B(center, rho)`
/// intersected with the domain, by refined midpoint quadrature (two
/// successive refinements within 1e-4).
pub fn measure_mass_on_ball(
    m: &WaypointMeasure,
    home: Point2,
    center: Point2,
    rho: f64,
    dom: &RectDomain,
) -> f64 {
    assert!(rho > 0.0, "ball radius must be positive");
    match m {
        WaypointMeasure::UniformDomain if dom.rect().contains_rect(&Rect::centered_square(center, 2.0 * rho)) => {
            PI * rho * rho / dom.area()
        }
        WaypointMeasure::Hotspots { spots, background_weight } => {
            let rect = dom.rect();
            let mut parts = vec![(*background_weight, component_mass(&WaypointMeasure::UniformDomain, home, center, rho, dom))];
            for s in spots.iter().filter(|s| s.weight > 0.0 && rect.distance_to(s.center) < s.radius) {
                let ball = WaypointMeasure::BallUniform { radius: s.radius };
                parts.push((s.weight, component_mass(&ball, s.center, center, rho, dom)));
            }
            let total: f64 = parts.iter().map(|p| p.0).sum();
            parts.iter().map(|(w, m)| w * m).sum::<f64>() / total
        }
        _ => component_mass(m, home, center, rho, dom),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dom10() -> RectDomain {
        RectDomain::square(10.0)
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let mut c = RngStream::new(7, 4);
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        let mut s1 = a.substream(1);
        let mut s1_again = RngStream::new(7, 3).substream(1);
        assert_eq!(s1.next_u64(), s1_again.next_u64());
        assert_ne!(a.substream(1).next_u64(), a.substream(2).next_u64());
    }

    #[test]
    fn ppp_mean_count() {
        let dom = dom10();
        let reps = 2000;
        let total: usize = (0..reps).map(|i| sample_ppp(&dom, 2.0, &mut RngStream::new(1, i)).len()).sum();
        let mean = total as f64 / reps as f64;
        // SE of the mean is sqrt(200/2000) ~ 0.32
        assert!((mean - 200.0).abs() < 1.5, "mean {mean}");
        let pts = sample_ppp(&dom, 2.0, &mut RngStream::new(1, 0));
        assert!(pts.iter().all(|p| dom.contains(*p)));
    }

    #[test]
    fn waypoint_supports() {
        let dom = dom10();
        let home = Point2::new(5.0, 5.0);
        let mut rng = RngStream::new(3, 0);
        let ball = WaypointMeasure::BallUniform { radius: 1.0 };
        let annulus = WaypointMeasure::AnnulusUniform { radius: 1.0 };
        let mut mean = Point2::ORIGIN;
        for _ in 0..20_000 {
            assert!(sample_waypoint(&ball, home, &dom, &mut rng).unwrap().dist(home) <= 1.0);
            assert!(sample_waypoint(&annulus, home, &dom, &mut rng).unwrap().dist(home) > 1.0);
            let u = sample_waypoint(&WaypointMeasure::UniformDomain, home, &dom, &mut rng).unwrap();
            mean = mean + u * (1.0 / 20_000.0);
        }
        // per-coordinate SE ~ 2.89 / sqrt(2e4) ~ 0.02
        assert!(mean.dist(home) < 0.1, "mean {mean:?}");
    }

    #[test]
    fn waypoint_support_outside_domain() {
        let ball = WaypointMeasure::BallUniform { radius: 1.0 };
        let err = sample_waypoint(&ball, Point2::new(20.0, 20.0), &dom10(), &mut RngStream::new(0, 0));
        assert!(matches!(err, Err(SamplingError::SupportOutsideDomain { .. })));
    }

    #[test]
    fn clipped_ball_stays_in_domain() {
        let ball = WaypointMeasure::BallUniform { radius: 2.0 };
        let mut rng = RngStream::new(5, 0);
        for _ in 0..1000 {
            let p = sample_waypoint(&ball, Point2::new(0.5, 9.9), &dom10(), &mut rng).unwrap();
            assert!(dom10().contains(p));
        }
    }

    #[test]
    fn torus_ball_wraps() {
        let dom = RectDomain::torus(10.0);
        let ball = WaypointMeasure::BallUniform { radius: 2.0 };
        let mut rng = RngStream::new(5, 1);
        for _ in 0..1000 {
            let p = sample_waypoint(&ball, Point2::new(0.5, 9.9), &dom, &mut rng).unwrap();
            assert!(dom.contains(p));
            assert!(crate::geometry::distance(p, Point2::new(0.5, 9.9), &dom) <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn velocity_samples() {
        let mut rng = RngStream::new(9, 0);
        let fixed = VelocityMeasure::Uniform { min: 1.0, max: 1.0 };
        assert!((0..100).all(|_| sample_velocity(&fixed, &mut rng) == 1.0));
        let u = VelocityMeasure::Uniform { min: 1.0, max: 2.0 };
        let draws: Vec<f64> = (0..20_000).map(|_| sample_velocity(&u, &mut rng)).collect();
        assert!(draws.iter().all(|v| (1.0..=2.0).contains(v)));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 1.5).abs() < 0.01);
        let table = VelocityMeasure::Table { knots: vec![(1.0, 0.0), (3.0, 1.0)] };
        table.validate().unwrap();
        let draws: Vec<f64> = (0..20_000).map(|_| sample_velocity(&table, &mut rng)).collect();
        assert!(draws.iter().all(|v| (1.0..=3.0).contains(v)));
        // triangular density on [1, 3] peaking at 3 has mean 7/3
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 7.0 / 3.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn alarm_samples() {
        let mut rng = RngStream::new(11, 0);
        assert_eq!(sample_alarm(&AlarmMeasure::Deterministic { value: 5.0 }, &mut rng), 5.0);
        let exp = AlarmMeasure::Exponential { rate: 1.0 };
        let mean = (0..40_000).map(|_| sample_alarm(&exp, &mut rng)).sum::<f64>() / 40_000.0;
        assert!((mean - 1.0).abs() < 0.02);
        let uni = AlarmMeasure::Uniform { lo: 2.0, hi: 4.0 };
        assert!((0..1000).all(|_| (2.0..=4.0).contains(&sample_alarm(&uni, &mut rng))));
    }

    #[test]
    fn thinning_extremes() {
        let pts = sample_ppp(&dom10(), 1.0, &mut RngStream::new(2, 0));
        let mut rng = RngStream::new(2, 1);
        assert_eq!(thin(&pts, 1.0, &mut rng), pts);
        assert!(thin(&pts, 0.0, &mut rng).is_empty());
    }

    #[test]
    fn masses() {
        let dom = dom10();
        let c = Point2::new(5.0, 5.0);
        let uni = measure_mass_on_ball(&WaypointMeasure::UniformDomain, c, c, 1.0, &dom);
        assert!((uni - PI / 100.0).abs() < 1e-12);
        let ball = WaypointMeasure::BallUniform { radius: 2.0 };
        assert!((measure_mass_on_ball(&ball, c, c, 2.0, &dom) - 1.0).abs() < 1e-3);
        assert!((measure_mass_on_ball(&ball, c, c, 1.0, &dom) - 0.25).abs() < 1e-3);
        // clipped at the boundary the quadrature path is used
        let corner = measure_mass_on_ball(&WaypointMeasure::UniformDomain, c, Point2::ORIGIN, 1.0, &dom);
        assert!((corner - PI / 400.0).abs() < 2e-4, "corner {corner}");
        let full = measure_mass_on_ball(&WaypointMeasure::UniformDomain, c, c, 10.0, &dom);
        assert!((full - 1.0).abs() < 1e-4, "full {full}");
    }

    #[test]
    fn hotspot_mass_mixes_components() {
        let dom = dom10();
        let spot = Hotspot { center: Point2::new(2.0, 2.0), radius: 1.0, weight: 1.0 };
        let m = WaypointMeasure::Hotspots { spots: vec![spot], background_weight: 1.0 };
        m.validate().unwrap();
        let mass = measure_mass_on_ball(&m, Point2::ORIGIN, spot.center, 1.0, &dom);
        let expected = 0.5 * 1.0 + 0.5 * PI / 100.0;
        assert!((mass - expected).abs() < 2e-3, "mass {mass}");
    }

    #[test]
    fn power_tail_mass_consistent_with_tail() {
        let dom = RectDomain::square(200.0);
        let home = Point2::new(100.0, 100.0);
        let m = WaypointMeasure::PowerTail { beta: 1.5, scale: 1.0 };
        // P(d <= 4) = 1 - 4^-1.5 = 0.875 before clipping; clipping removes
        // the tiny mass beyond ~100
        let mass = measure_mass_on_ball(&m, home, home, 4.0, &dom);
        assert!((mass - 0.875).abs() < 5e-3, "mass {mass}");
    }
}
