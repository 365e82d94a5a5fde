//! Gilbert graphs over point snapshots and the percolation experiments built
//! on them: crossing probabilities, critical intensity, near-home thinning of
//! the interpolation model and displaced Poisson processes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point2, Rect, RectDomain};
use crate::mobility::{init_walker, next_leg, MobilityError, MobilityModel, ModelVariant, Walker, WalkerTrajectory};
use crate::sampling::{sample_ppp, sample_waypoint, RngStream, SamplingError, WaypointMeasure};
use crate::stats::{chi_square_sf, isotonic_increasing, logistic_fit, max_decrease};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PercolationError {
    #[error("communication radius {r} does not exceed half the home radius {big_r}")]
    RadiusUnderflow { r: f64, big_r: f64 },
    #[error("phase experiment needs the interpolation variant")]
    NotInterpolation,
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

/// Points joined whenever they are at most `connect_radius` apart.
#[derive(Debug, Clone, PartialEq)]
pub struct GilbertGraph {
    pub points: Vec<Point2>,
    pub connect_radius: f64,
    pub domain: RectDomain,
    pub neighbors: Vec<Vec<usize>>,
}

impl GilbertGraph {
    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Sorted `(i, j)` pairs with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect();
        out.sort_unstable();
        out
    }
}

/// Builds the graph with a uniform bucket grid whose cells are at least
/// `connect_radius` wide, so only the 3 x 3 block around a cell is searched.
pub fn build_graph(points: &[Point2], connect_radius: f64, dom: &RectDomain) -> GilbertGraph {
    assert!(connect_radius > 0.0, "connection radius must be positive");
    let nx = ((dom.width / connect_radius).floor() as usize).max(1);
    let ny = ((dom.height / connect_radius).floor() as usize).max(1);
    let cell_of = |p: Point2| {
        let ix = ((p.x / dom.width * nx as f64).floor().max(0.0) as usize).min(nx - 1);
        let iy = ((p.y / dom.height * ny as f64).floor().max(0.0) as usize).min(ny - 1);
        (ix, iy)
    };
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); nx * ny];
    for (i, p) in points.iter().enumerate() {
        let (ix, iy) = cell_of(*p);
        buckets[iy * nx + ix].push(i);
    }
    let torus = dom.is_torus();
    let axis = |c: usize, n: usize| -> Vec<usize> {
        let mut v: Vec<usize> = if torus {
            [n - 1, 0, 1].iter().map(|d| (c + d) % n).collect()
        } else {
            (c.saturating_sub(1)..=(c + 1).min(n - 1)).collect()
        };
        v.sort_unstable();
        v.dedup();
        v
    };
    let r2 = connect_radius * connect_radius;
    let mut neighbors = vec![Vec::new(); points.len()];
    for (i, p) in points.iter().enumerate() {
        let (ix, iy) = cell_of(*p);
        for cy in axis(iy, ny) {
            for cx in axis(ix, nx) {
                for &j in &buckets[cy * nx + cx] {
                    if j != i && dom.displacement(*p, points[j]).norm_sq() <= r2 {
                        neighbors[i].push(j);
                    }
                }
            }
        }
        neighbors[i].sort_unstable();
    }
    GilbertGraph { points: points.to_vec(), connect_radius, domain: *dom, neighbors }
}

/// Disjoint-set forest with path compression and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    /// Component label of each point, numbered by first appearance.
    pub component: Vec<usize>,
    pub sizes: Vec<usize>,
    pub largest: usize,
    pub crossing_lr: bool,
    pub crossing_tb: bool,
}

impl ClusterReport {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}

pub fn clusters(g: &GilbertGraph) -> ClusterReport {
    let n = g.points.len();
    let mut uf = UnionFind::new(n);
    for (i, ns) in g.neighbors.iter().enumerate() {
        for &j in ns {
            uf.union(i, j);
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut component = Vec::with_capacity(n);
    let mut sizes = Vec::new();
    for i in 0..n {
        let root = uf.find(i);
        if label[root] == usize::MAX {
            label[root] = sizes.len();
            sizes.push(0);
        }
        component.push(label[root]);
        sizes[label[root]] += 1;
    }
    let w = g.domain.rect();
    let cr = g.connect_radius;
    let k = sizes.len();
    let (mut left, mut right, mut bottom, mut top) = (vec![false; k], vec![false; k], vec![false; k], vec![false; k]);
    for (p, &c) in g.points.iter().zip(&component) {
        left[c] |= p.x <= w.min.x + cr;
        right[c] |= p.x >= w.max.x - cr;
        bottom[c] |= p.y <= w.min.y + cr;
        top[c] |= p.y >= w.max.y - cr;
    }
    ClusterReport {
        largest: sizes.iter().copied().max().unwrap_or(0),
        crossing_lr: (0..k).any(|c| left[c] && right[c]),
        crossing_tb: (0..k).any(|c| bottom[c] && top[c]),
        component,
        sizes,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingPoint {
    pub lambda: f64,
    pub crossings: usize,
    pub reps: usize,
}

impl CrossingPoint {
    pub fn probability(&self) -> f64 {
        self.crossings as f64 / self.reps as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaCEstimate {
    pub lambda_c: f64,
    pub curve: Vec<CrossingPoint>,
}

impl LambdaCEstimate {
    /// Largest gap between the raw crossing curve and its isotonic fit
    /// (0 when already non-decreasing).
    pub fn monotonicity_violation(&self) -> f64 {
        let probs: Vec<f64> = self.curve.iter().map(CrossingPoint::probability).collect();
        let weights: Vec<f64> = self.curve.iter().map(|c| c.reps as f64).collect();
        let fit = isotonic_increasing(&probs, &weights);
        probs.iter().zip(&fit).map(|(p, f)| (p - f).abs()).fold(0.0, f64::max)
    }

    /// Largest drop between consecutive grid points of the raw curve.
    pub fn max_drop(&self) -> f64 {
        max_decrease(&self.curve.iter().map(CrossingPoint::probability).collect::<Vec<_>>())
    }
}

/// Stream id of replication `rep` at grid index `idx`.
pub fn grid_stream(idx: usize, rep: usize) -> u64 {
    ((idx as u64) << 32) | rep as u64
}

/// Left-right crossing probability of Poisson Gilbert graphs on `[0, a]^2`
/// for each intensity, and the intensity where the logistic fit crosses 1/2.
pub fn estimate_lambda_c(
    connect_radius: f64,
    a: f64,
    lambda_grid: &[f64],
    reps: usize,
    seed: u64,
) -> LambdaCEstimate {
    assert!(reps >= 1, "need at least one replication");
    assert!(lambda_grid.windows(2).all(|w| w[0] < w[1]), "intensity grid must increase");
    let dom = RectDomain::square(a);
    let curve: Vec<CrossingPoint> = lambda_grid
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let crossings = (0..reps)
                .into_par_iter()
                .filter(|&rep| {
                    let mut rng = RngStream::new(seed, grid_stream(i, rep));
                    let pts = sample_ppp(&dom, lambda, &mut rng);
                    clusters(&build_graph(&pts, connect_radius, &dom)).crossing_lr
                })
                .count();
            CrossingPoint { lambda, crossings, reps }
        })
        .collect();
    let xs: Vec<f64> = curve.iter().map(|c| c.lambda).collect();
    let ks: Vec<usize> = curve.iter().map(|c| c.crossings).collect();
    let ns: Vec<usize> = curve.iter().map(|c| c.reps).collect();
    let (b0, b1) = logistic_fit(&xs, &ks, &ns);
    LambdaCEstimate { lambda_c: -b0 / b1, curve }
}

/// What "time s" means for near-home thinning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThinningClock {
    /// Continuous time: positions at times `s - 1` and `s`.
    Time,
    /// Step count of the chain: waypoints `W_{s-1}` and `W_s`.
    Leg,
}

/// Position of a walker at instant `s` of the given clock.
fn position_at_clock(w: &WalkerTrajectory, s: f64, clock: ThinningClock) -> Result<Point2, MobilityError> {
    match clock {
        ThinningClock::Time => w.position_at(s),
        ThinningClock::Leg => {
            let n = s as usize;
            if s < 0.0 || s.fract() != 0.0 || w.pruned > 0 || n > w.legs.len() {
                return Err(MobilityError::HorizonExceeded { t: s, from: 0.0, horizon: w.legs.len() as f64 });
            }
            Ok(if n == 0 { w.home } else { w.domain.wrap(w.legs[n - 1].end) })
        }
    }
}

/// Positions at `s` of the walkers that are within `big_r` of home both at
/// `s - 1` and at `s`.
pub fn near_home_thinning(
    walkers: &[WalkerTrajectory],
    s: f64,
    big_r: f64,
    clock: ThinningClock,
) -> Result<Vec<Point2>, MobilityError> {
    assert!(s >= 1.0, "thinning instant must be at least 1");
    let mut out = Vec::new();
    for w in walkers {
        let near = |p: Point2| w.domain.displacement(w.home, p).norm() <= big_r;
        let now = position_at_clock(w, s, clock)?;
        if near(now) && near(position_at_clock(w, s - 1.0, clock)?) {
            out.push(now);
        }
    }
    Ok(out)
}

/// Connection distance of the thinned graph, `2 (r - R/2)`.
pub fn thinned_connect_radius(r: f64, big_r: f64) -> Result<f64, PercolationError> {
    if r <= big_r / 2.0 {
        return Err(PercolationError::RadiusUnderflow { r, big_r });
    }
    Ok(2.0 * (r - big_r / 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSetup {
    pub lambda: f64,
    pub r: f64,
    pub s: f64,
    pub clock: ThinningClock,
    pub p_grid: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub p: f64,
    pub replication: usize,
    pub homes: usize,
    pub retained: usize,
    /// `None` when the thinned radius underflows.
    pub thinned: Option<GraphSummary>,
    pub full: GraphSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub points: usize,
    pub largest: usize,
    pub crossing_lr: bool,
    pub crossing_tb: bool,
}

impl GraphSummary {
    pub fn of(points: &[Point2], connect_radius: f64, dom: &RectDomain) -> Self {
        let rep = clusters(&build_graph(points, connect_radius, dom));
        GraphSummary { points: points.len(), largest: rep.largest, crossing_lr: rep.crossing_lr, crossing_tb: rep.crossing_tb }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub rows: Vec<PhaseRow>,
    /// Connection distance of the thinned graph, absent after an underflow.
    pub thinned_radius: Option<f64>,
    pub full_radius: f64,
}

impl PhaseReport {
    pub fn rows_for(&self, p: f64) -> impl Iterator<Item = &PhaseRow> {
        self.rows.iter().filter(move |r| r.p == p)
    }

    /// Pooled retained fraction at `p` and its binomial standard error.
    pub fn retained_fraction(&self, p: f64) -> (f64, f64) {
        let (kept, total) = self.rows_for(p).fold((0, 0), |(k, n), r| (k + r.retained, n + r.homes));
        let f = kept as f64 / total.max(1) as f64;
        (f, (f * (1.0 - f) / total.max(1) as f64).sqrt())
    }

    /// Fraction of replications at `p` whose thinned graph crosses left to right.
    pub fn thinned_crossing(&self, p: f64) -> Option<f64> {
        let rows: Vec<_> = self.rows_for(p).collect();
        let hits = rows.iter().map(|r| r.thinned.map(|g| g.crossing_lr)).collect::<Option<Vec<bool>>>()?;
        Some(hits.iter().filter(|&&h| h).count() as f64 / rows.len().max(1) as f64)
    }

    pub fn full_crossing(&self, p: f64) -> f64 {
        let rows: Vec<_> = self.rows_for(p).collect();
        rows.iter().filter(|r| r.full.crossing_lr).count() as f64 / rows.len().max(1) as f64
    }
}

/// Walkers at Poisson homes, each observed at the thinning instant `s` and
/// at `s - 1`.
fn simulate_snapshot(
    model: &MobilityModel,
    lambda: f64,
    s: f64,
    clock: ThinningClock,
    rng: &mut RngStream,
) -> Result<Vec<WalkerTrajectory>, MobilityError> {
    let homes = sample_ppp(&model.domain, lambda, rng);
    let base = rng.clone();
    homes
        .par_iter()
        .enumerate()
        .map(|(i, &h)| {
            let mut r = base.substream(i as u64 + 1);
            match clock {
                ThinningClock::Time => Walker::simulate(h, model, s, &mut r),
                ThinningClock::Leg => {
                    let mut state = init_walker(h, model, &mut r)?;
                    let mut traj = WalkerTrajectory::start(&state, &model.domain);
                    for _ in 1..(s as usize) {
                        state = next_leg(&state, model, &mut r)?;
                        let seg = state.segment(&model.domain);
                        traj.waypoint_times.push(seg.t_end);
                        traj.home_arrivals.push(state.going_home);
                        traj.legs.push(seg);
                    }
                    Ok(traj)
                }
            }
        })
        .collect()
}

/// Crossing behaviour of the near-home thinned walkers as the long-trip
/// probability `p` varies, alongside the untouched snapshot at distance `2r`.
pub fn phase_experiment(model: &MobilityModel, setup: &PhaseSetup) -> Result<PhaseReport, PercolationError> {
    let ModelVariant::Interpolation { radius: big_r, .. } = model.variant else {
        return Err(PercolationError::NotInterpolation);
    };
    let thinned_radius = thinned_connect_radius(setup.r, big_r).ok();
    let full_radius = 2.0 * setup.r;
    let dom = model.domain;
    let mut rows = Vec::with_capacity(setup.p_grid.len() * setup.reps);
    for (pi, &p) in setup.p_grid.iter().enumerate() {
        let m = MobilityModel { variant: ModelVariant::Interpolation { p, radius: big_r }, ..model.clone() };
        m.validate()?;
        let block: Vec<PhaseRow> = (0..setup.reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = RngStream::new(setup.seed, grid_stream(pi, rep));
                let walkers = simulate_snapshot(&m, setup.lambda, setup.s, setup.clock, &mut rng)?;
                let kept = near_home_thinning(&walkers, setup.s, big_r, setup.clock)?;
                let all: Vec<Point2> = walkers
                    .iter()
                    .map(|w| position_at_clock(w, setup.s, setup.clock))
                    .collect::<Result<_, _>>()?;
                Ok(PhaseRow {
                    p,
                    replication: rep,
                    homes: walkers.len(),
                    retained: kept.len(),
                    thinned: thinned_radius.map(|cr| GraphSummary::of(&kept, cr, &dom)),
                    full: GraphSummary::of(&all, full_radius, &dom),
                })
            })
            .collect::<Result<_, PercolationError>>()?;
        rows.extend(block);
    }
    Ok(PhaseReport { rows, thinned_radius, full_radius })
}

/// Point intensity in a region with its Poisson standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intensity {
    pub value: f64,
    pub se: f64,
    pub area: f64,
    pub count: usize,
}

impl Intensity {
    fn from_count(count: usize, area: f64) -> Self {
        Intensity { value: count as f64 / area, se: (count as f64).sqrt() / area, area, count }
    }

    /// Pools several snapshots of the same region.
    pub fn pooled(parts: &[Intensity]) -> Self {
        let count = parts.iter().map(|p| p.count).sum();
        let area = parts.iter().map(|p| p.area).sum();
        Intensity::from_count(count, area)
    }
}

/// Intensities in the border frame (points within `stripe` of any side of
/// `[0, a]^2`) and in the central square of half-width `core_half`.
pub fn border_center_densities(snapshot: &[Point2], a: f64, stripe: f64, core_half: f64) -> (Intensity, Intensity) {
    assert!(stripe > 0.0 && 2.0 * stripe < a && core_half > 0.0 && 2.0 * core_half <= a);
    let core = Rect::centered_square(Point2::new(a / 2.0, a / 2.0), 2.0 * core_half);
    let in_border =
        |p: &Point2| p.x <= stripe || p.x >= a - stripe || p.y <= stripe || p.y >= a - stripe;
    let border = snapshot.iter().filter(|p| in_border(p)).count();
    let center = snapshot.iter().filter(|p| core.contains(**p)).count();
    let border_area = a * a - (a - 2.0 * stripe).powi(2);
    (Intensity::from_count(border, border_area), Intensity::from_count(center, core.area()))
}

/// How each home is moved before the homogeneity test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Displacement {
    Identity,
    Shift(Point2),
    /// A fresh draw from the measure anchored at the home.
    Measure(WaypointMeasure),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityTest {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Chi-square test of `cells x cells` counts of the displaced points against
/// Poisson counts of intensity `lambda`.
pub fn displaced_homogeneity_check(
    homes: &[Point2],
    displacement: &Displacement,
    dom: &RectDomain,
    cells: usize,
    lambda: f64,
    rng: &mut RngStream,
) -> Result<HomogeneityTest, SamplingError> {
    assert!(dom.is_torus(), "displacement test runs on a torus");
    assert!(cells >= 1 && lambda > 0.0);
    let mut counts = vec![0usize; cells * cells];
    for &h in homes {
        let p = match displacement {
            Displacement::Identity => h,
            Displacement::Shift(d) => dom.wrap(h + *d),
            Displacement::Measure(m) => sample_waypoint(m, h, dom, rng)?,
        };
        let ix = ((p.x / dom.width * cells as f64) as usize).min(cells - 1);
        let iy = ((p.y / dom.height * cells as f64) as usize).min(cells - 1);
        counts[iy * cells + ix] += 1;
    }
    let expected = lambda * dom.area() / (cells * cells) as f64;
    let statistic: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let df = (cells * cells) as f64;
    Ok(HomogeneityTest { statistic, df, p_value: chi_square_sf(statistic, df) })
}
