//! Time-stationary behaviour of the walkers.
//!
//! Positions are sampled after a burn-in at snapshot times spaced by the
//! longest possible leg time. Occupation times are exact: a leg's time inside
//! a region is its clipped length divided by its speed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{clip_length_disk, clip_length_rect, Point2, Rect, RectDomain, Segment};
use crate::mobility::{init_walker, next_leg, MobilityError, MobilityModel, Walker};
use crate::sampling::RngStream;
use crate::stats::{mean, std_error};

/// Legs discarded before a walker's trips enter the Palm estimators.
pub const PALM_BURN_IN_LEGS: usize = 100;
/// Consecutive trips contributed by each walker to the Palm estimators.
pub const TRIPS_PER_WALKER: usize = 100;

/// A measurable set of positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Region {
    All,
    Empty,
    Rect(Rect),
    Disk { center: Point2, radius: f64 },
    /// Union of pairwise disjoint regions.
    Union(Vec<Region>),
}

impl Region {
    pub fn contains(&self, p: Point2) -> bool {
        match self {
            Region::All => true,
            Region::Empty => false,
            Region::Rect(r) => r.contains(p),
            Region::Disk { center, radius } => p.dist(*center) <= *radius,
            Region::Union(parts) => parts.iter().any(|r| r.contains(p)),
        }
    }

    /// Length of the straight path `a -> b` inside the region, counting every
    /// periodic image on a torus.
    pub fn clip_length(&self, a: Point2, b: Point2, dom: &RectDomain) -> f64 {
        match self {
            Region::All => a.dist(b),
            Region::Empty => 0.0,
            Region::Union(parts) => parts.iter().map(|r| r.clip_length(a, b, dom)).sum(),
            Region::Rect(r) => dom
                .image_shifts()
                .iter()
                .map(|&s| {
                    let o = dom.shifted(Point2::ORIGIN, s);
                    clip_length_rect(a, b, &Rect::new(r.min + o, r.max + o))
                })
                .sum(),
            Region::Disk { center, radius } => dom
                .image_shifts()
                .iter()
                .map(|&s| clip_length_disk(a, b, dom.shifted(*center, s), *radius))
                .sum(),
        }
    }
}

/// Time the leg spends inside `region` during `[t0, t1]`.
pub fn occupation_time(seg: &Segment, region: &Region, dom: &RectDomain, t0: f64, t1: f64) -> f64 {
    let from = seg.t_start.max(t0);
    let to = seg.t_end.min(t1);
    if to <= from {
        return 0.0;
    }
    if seg.speed == 0.0 || seg.duration() == 0.0 {
        return if region.contains(dom.wrap(seg.start)) { to - from } else { 0.0 };
    }
    region.clip_length(seg.position_at(from), seg.position_at(to), dom) / seg.speed
}

fn uniform_home(dom: &RectDomain, rng: &mut RngStream) -> Point2 {
    use rand::Rng;
    Point2::new(dom.width * rng.random::<f64>(), dom.height * rng.random::<f64>())
}

/// Long-run fraction of time spent in a (possibly home-dependent) region.
///
/// Each of `n_walkers` walkers gets a uniform home and is observed over
/// `[burn_in, burn_in + horizon]`; returns the mean fraction and its
/// standard error across walkers.
pub fn occupation_fraction(
    model: &MobilityModel,
    region_for: impl Fn(Point2) -> Region + Sync,
    n_walkers: usize,
    burn_in: f64,
    horizon: f64,
    rng: &RngStream,
) -> Result<(f64, f64), MobilityError> {
    let dom = model.domain;
    let fractions: Vec<f64> = (0..n_walkers)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.substream(i as u64);
            let home = uniform_home(&dom, &mut r);
            let region = region_for(home);
            let traj = Walker::simulate(home, model, burn_in + horizon, &mut r)?;
            let t1 = burn_in + horizon;
            let occ: f64 = traj.legs.iter().map(|l| occupation_time(l, &region, &dom, burn_in, t1)).sum();
            Ok(occ / horizon)
        })
        .collect::<Result<_, MobilityError>>()?;
    Ok((mean(&fractions), if n_walkers > 1 { std_error(&fractions) } else { f64::NAN }))
}

/// Snapshot offsets `0, spacing, 2 spacing, ...` with spacing equal to the
/// longest leg time, so every walker changes direction between snapshots.
pub fn default_sample_times(count: usize, model: &MobilityModel) -> Vec<f64> {
    let spacing = model.max_leg_time();
    (0..count).map(|k| k as f64 * spacing).collect()
}

/// Default burn-in: fifty longest-leg times.
pub fn default_burn_in(model: &MobilityModel) -> f64 {
    50.0 * model.max_leg_time()
}

/// Walks one walker through the snapshot times, handing each position to `visit`.
fn walk_snapshots(
    model: &MobilityModel,
    burn_in: f64,
    sample_times: &[f64],
    rng: &mut RngStream,
    mut visit: impl FnMut(usize, Point2),
) -> Result<(), MobilityError> {
    let home = uniform_home(&model.domain, rng);
    let mut w = Walker::new(home, model, rng)?;
    for (k, &dt) in sample_times.iter().enumerate() {
        let t = burn_in + dt;
        w.advance_to(t, model, rng)?;
        visit(k, w.traj.position_at(t)?);
        w.traj.prune_before(t);
    }
    Ok(())
}

/// Walker positions at `burn_in + s` for every `s` in `sample_times`, one
/// snapshot per sample time. Walkers start at uniform homes.
pub fn stationary_positions(
    model: &MobilityModel,
    n_walkers: usize,
    burn_in: f64,
    sample_times: &[f64],
    rng: &RngStream,
) -> Result<Vec<Vec<Point2>>, MobilityError> {
    assert!(burn_in > 0.0, "burn-in must be positive");
    let per_walker: Vec<Vec<Point2>> = (0..n_walkers)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.substream(i as u64);
            let mut out = Vec::with_capacity(sample_times.len());
            walk_snapshots(model, burn_in, sample_times, &mut r, |_, p| out.push(p))?;
            Ok(out)
        })
        .collect::<Result<_, MobilityError>>()?;
    if n_walkers == 0 {
        return Ok(Vec::new());
    }
    Ok((0..sample_times.len()).map(|k| per_walker.iter().map(|w| w[k]).collect()).collect())
}

/// Counts of stationary positions on an `nx x ny` grid over the domain,
/// accumulated without storing the snapshots.
pub fn stationary_histogram(
    model: &MobilityModel,
    n_walkers: usize,
    burn_in: f64,
    sample_times: &[f64],
    nx: usize,
    ny: usize,
    rng: &RngStream,
) -> Result<SpatialHistogram, MobilityError> {
    let dom = model.domain;
    (0..n_walkers)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.substream(i as u64);
            let mut h = SpatialHistogram::new(nx, ny, &dom);
            walk_snapshots(model, burn_in, sample_times, &mut r, |_, p| h.add(p))?;
            Ok(h)
        })
        .try_reduce(|| SpatialHistogram::new(nx, ny, &dom), |a, b| Ok(a.merge(&b)))
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

/// Per-walker sums of (occupation time, trip duration) over its trips.
fn trip_blocks(
    model: &MobilityModel,
    region: &Region,
    n_trips: usize,
    rng: &RngStream,
) -> Result<Vec<(f64, f64, usize)>, MobilityError> {
    let dom = model.domain;
    let walkers = n_trips.div_ceil(TRIPS_PER_WALKER);
    (0..walkers)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.substream(i as u64);
            let home = uniform_home(&dom, &mut r);
            let mut state = init_walker(home, model, &mut r)?;
            for _ in 0..PALM_BURN_IN_LEGS {
                state = next_leg(&state, model, &mut r)?;
            }
            let trips = TRIPS_PER_WALKER.min(n_trips - i * TRIPS_PER_WALKER);
            let (mut occ, mut dur) = (0.0, 0.0);
            for _ in 0..trips {
                let seg = state.segment(&dom);
                occ += occupation_time(&seg, region, &dom, seg.t_start, seg.t_end);
                dur += seg.duration();
                state = next_leg(&state, model, &mut r)?;
            }
            Ok((occ, dur, trips))
        })
        .collect()
}

/// Ratio estimator of the stationary probability of `region`: expected time
/// spent in the region during one trip over the expected trip duration, with
/// trips taken at transition instants after a burn-in.
pub fn palm_ratio_estimate(
    model: &MobilityModel,
    region: &Region,
    n_trips: usize,
    rng: &RngStream,
) -> Result<Estimate, MobilityError> {
    assert!(n_trips >= 1, "need at least one trip");
    let blocks = trip_blocks(model, region, n_trips, rng)?;
    let occ: f64 = blocks.iter().map(|b| b.0).sum();
    let dur: f64 = blocks.iter().map(|b| b.1).sum();
    let ratio = if dur > 0.0 { occ / dur } else { 0.0 };
    // delta-method SE with walkers as independent clusters
    let k = blocks.len() as f64;
    let se = if blocks.len() > 1 && dur > 0.0 {
        let mean_dur = dur / k;
        let ss: f64 = blocks.iter().map(|b| (b.0 - ratio * b.1).powi(2)).sum();
        (ss / (k * (k - 1.0))).sqrt() / mean_dur
    } else {
        f64::NAN
    };
    Ok(Estimate { value: ratio, se })
}

/// Mean trip duration after burn-in, with its standard error.
pub fn mean_leg_duration(model: &MobilityModel, n_trips: usize, rng: &RngStream) -> Result<Estimate, MobilityError> {
    assert!(n_trips >= 1, "need at least one trip");
    let blocks = trip_blocks(model, &Region::Empty, n_trips, rng)?;
    let total: f64 = blocks.iter().map(|b| b.1).sum();
    let count: usize = blocks.iter().map(|b| b.2).sum();
    let value = total / count as f64;
    let k = blocks.len() as f64;
    let se = if blocks.len() > 1 {
        let mean_n = count as f64 / k;
        let ss: f64 = blocks.iter().map(|b| (b.1 - value * b.2 as f64).powi(2)).sum();
        (ss / (k * (k - 1.0))).sqrt() / mean_n
    } else {
        f64::NAN
    };
    Ok(Estimate { value, se })
}

/// Polynomial approximation `36/a^6 (x^2 - a x)(y^2 - a y)` of the classical
/// random waypoint position density on `[0, a]^2`.
pub fn rwp_density(x: f64, y: f64, a: f64) -> f64 {
    36.0 / a.powi(6) * (x * x - a * x) * (y * y - a * y)
}

/// Bin counts over the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialHistogram {
    pub nx: usize,
    pub ny: usize,
    pub width: f64,
    pub height: f64,
    /// Row-major counts, `index = iy * nx + ix`.
    pub counts: Vec<u64>,
    pub total: u64,
}

impl SpatialHistogram {
    pub fn new(nx: usize, ny: usize, dom: &RectDomain) -> Self {
        assert!(nx > 0 && ny > 0);
        SpatialHistogram { nx, ny, width: dom.width, height: dom.height, counts: vec![0; nx * ny], total: 0 }
    }

    pub fn bin_area(&self) -> f64 {
        self.width * self.height / (self.nx * self.ny) as f64
    }

    pub fn bin_of(&self, p: Point2) -> Option<usize> {
        if !(0.0..=self.width).contains(&p.x) || !(0.0..=self.height).contains(&p.y) {
            return None;
        }
        let ix = ((p.x / self.width * self.nx as f64) as usize).min(self.nx - 1);
        let iy = ((p.y / self.height * self.ny as f64) as usize).min(self.ny - 1);
        Some(iy * self.nx + ix)
    }

    pub fn add(&mut self, p: Point2) {
        if let Some(i) = self.bin_of(p) {
            self.counts[i] += 1;
            self.total += 1;
        }
    }

    pub fn merge(mut self, other: &SpatialHistogram) -> Self {
        assert_eq!((self.nx, self.ny), (other.nx, other.ny));
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        self
    }

    pub fn bin_rect(&self, ix: usize, iy: usize) -> Rect {
        let dx = self.width / self.nx as f64;
        let dy = self.height / self.ny as f64;
        Rect::new(
            Point2::new(ix as f64 * dx, iy as f64 * dy),
            Point2::new((ix + 1) as f64 * dx, (iy + 1) as f64 * dy),
        )
    }

    /// Mass of `f` in each bin by the composite midpoint rule (4 x 4 points per bin).
    pub fn expected_masses(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        const SUB: usize = 4;
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let r = self.bin_rect(ix, iy);
                let (hx, hy) = (r.width() / SUB as f64, r.height() / SUB as f64);
                let mut sum = 0.0;
                for j in 0..SUB {
                    for i in 0..SUB {
                        sum += f(r.min.x + (i as f64 + 0.5) * hx, r.min.y + (j as f64 + 0.5) * hy);
                    }
                }
                out.push(sum * hx * hy);
            }
        }
        out
    }

    /// Rows `bin_x,bin_y,count,expected` with expected counts under `f`.
    pub fn to_csv(&self, f: impl Fn(f64, f64) -> f64) -> String {
        let masses = self.expected_masses(f);
        let mut out = String::from("bin_x,bin_y,count,expected\n");
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let i = iy * self.nx + ix;
                out.push_str(&format!("{ix},{iy},{},{:.6}\n", self.counts[i], masses[i] * self.total as f64));
            }
        }
        out
    }
}

/// Total-variation distance between the empirical bin masses and those of `f`.
pub fn density_distance(hist: &SpatialHistogram, f: impl Fn(f64, f64) -> f64) -> f64 {
    assert!(hist.total > 0, "empty histogram");
    let total = hist.total as f64;
    hist.expected_masses(f)
        .iter()
        .zip(&hist.counts)
        .map(|(m, &c)| (c as f64 / total - m).abs())
        .sum::<f64>()
        / 2.0
}
