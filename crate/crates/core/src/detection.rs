//! Detection and coverage times.
//!
//! Contact times are computed leg by leg from the closed-form kinematics in
//! [`crate::geometry`]; Monte Carlo replications are fanned out with rayon
//! on per-replication [`RngStream`]s so results do not depend on the number
//! of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    erode, first_contact_in, first_contact_static, min_distance_point_segment, BallCover, Point2, Rect, RectDomain,
    Segment,
};
use crate::mobility::{init_walker, MobilityError, MobilityModel, Walker, WalkerTrajectory};
use crate::sampling::{measure_mass_on_ball, sample_ppp, RngStream};
use crate::stationary::{occupation_fraction, Region};
use crate::stats::{linear_fit, wilson_interval, Z95};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("target ({x}, {y}) lies closer than {rho} to the domain boundary")]
    TargetOutsideErodedDomain { x: f64, y: f64, rho: f64 },
    #[error("coverage needs 0 < eps < r (eps = {eps}, r = {r})")]
    EpsNotLessThanR { eps: f64, r: f64 },
    #[error("bound is degenerate: q = {q}, q_star = {q_star}")]
    DegenerateBound { q: f64, q_star: f64 },
    #[error(transparent)]
    Mobility(#[from] MobilityError),
}

/// Checks that `w` sits in the domain eroded by `rho`, as the tail bound
/// assumes. Callers may treat the error as a warning.
pub fn check_target(dom: &RectDomain, w: Point2, rho: f64) -> Result<(), DetectionError> {
    let outside = DetectionError::TargetOutsideErodedDomain { x: w.x, y: w.y, rho };
    match erode(dom, rho) {
        Ok(inner) if inner.contains(w) => Ok(()),
        _ => Err(outside),
    }
}

fn leg_distance(leg: &Segment, w: Point2, dom: &RectDomain) -> f64 {
    dom.image_shifts()
        .iter()
        .map(|&s| min_distance_point_segment(leg, dom.shifted(w, s)).0)
        .fold(f64::INFINITY, f64::min)
}

/// First time a walker comes within `rho` of the fixed target `w`, or `None`
/// if that does not happen by `t_max`.
pub fn detect_static(walkers: &[WalkerTrajectory], w: Point2, rho: f64, t_max: f64) -> Option<f64> {
    let mut best = f64::INFINITY;
    for traj in walkers {
        let dom = traj.domain;
        for leg in &traj.legs {
            if leg.t_start > t_max.min(best) {
                break;
            }
            if leg_distance(leg, w, &dom) > rho {
                continue;
            }
            if let Some(t) = first_contact_static(leg, w, rho, Some(&dom)) {
                best = best.min(t);
            }
        }
    }
    (best <= t_max).then_some(best)
}

/// Uniform grid over leg bounding boxes for mobile contact queries.
struct LegGrid {
    origin: Point2,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<(u32, u32)>>,
}

impl LegGrid {
    fn build(walkers: &[WalkerTrajectory], dom: &RectDomain, cell: f64, t_max: f64) -> Self {
        let nx = ((dom.width / cell).ceil() as usize).max(1);
        let ny = ((dom.height / cell).ceil() as usize).max(1);
        let mut grid = LegGrid { origin: Point2::ORIGIN, cell, nx, ny, buckets: vec![Vec::new(); nx * ny] };
        for (wi, traj) in walkers.iter().enumerate() {
            for (li, leg) in traj.legs.iter().enumerate() {
                if leg.t_start > t_max {
                    break;
                }
                let (xs, ys) = grid.cells(&leg.bbox());
                for iy in ys {
                    for ix in xs.clone() {
                        grid.buckets[iy * nx + ix].push((wi as u32, li as u32));
                    }
                }
            }
        }
        grid
    }

    fn cells(&self, bbox: &Rect) -> (std::ops::RangeInclusive<usize>, std::ops::RangeInclusive<usize>) {
        let clamp = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n - 1);
        let x0 = clamp((bbox.min.x - self.origin.x) / self.cell, self.nx);
        let x1 = clamp((bbox.max.x - self.origin.x) / self.cell, self.nx);
        let y0 = clamp((bbox.min.y - self.origin.y) / self.cell, self.ny);
        let y1 = clamp((bbox.max.y - self.origin.y) / self.cell, self.ny);
        (x0..=x1, y0..=y1)
    }
}

/// First time the additional walker `extra` comes within `rho` of any walker,
/// or `None` if that does not happen by `t_max`.
pub fn detect_mobile(walkers: &[WalkerTrajectory], extra: &WalkerTrajectory, rho: f64, t_max: f64) -> Option<f64> {
    let dom = extra.domain;
    let mut best = f64::INFINITY;
    let consider = |a: &Segment, b: &Segment, best: &mut f64| {
        if b.t_start > *best || b.t_end < a.t_start || b.t_start > a.t_end {
            return;
        }
        if let Some(t) = first_contact_in(a, b, rho, Some(&dom)) {
            *best = best.min(t);
        }
    };

    if dom.is_torus() {
        for leg in &extra.legs {
            if leg.t_start > t_max.min(best) {
                break;
            }
            for traj in walkers {
                let from = traj.legs.partition_point(|l| l.t_end < leg.t_start);
                for other in traj.legs[from..].iter().take_while(|l| l.t_start <= leg.t_end) {
                    consider(leg, other, &mut best);
                }
            }
        }
    } else {
        let cell = (2.0 * rho).max(dom.diameter() / 16.0);
        let grid = LegGrid::build(walkers, &dom, cell, t_max);
        let mut stamp: Vec<Vec<u32>> = walkers.iter().map(|w| vec![u32::MAX; w.legs.len()]).collect();
        for (qi, leg) in extra.legs.iter().enumerate() {
            if leg.t_start > t_max.min(best) {
                break;
            }
            let (xs, ys) = grid.cells(&leg.bbox().inflate(rho));
            for iy in ys {
                for ix in xs.clone() {
                    for &(wi, li) in &grid.buckets[iy * grid.nx + ix] {
                        let seen = &mut stamp[wi as usize][li as usize];
                        if *seen == qi as u32 {
                            continue;
                        }
                        *seen = qi as u32;
                        consider(leg, &walkers[wi as usize].legs[li as usize], &mut best);
                    }
                }
            }
        }
    }
    (best <= t_max).then_some(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    /// Coverage time, `None` if some ball is still undiscovered at `t_max`.
    pub time: Option<f64>,
    pub centers: Vec<Point2>,
    /// First hit time per center, same order as `centers`.
    pub hits: Vec<Option<f64>>,
}

/// Time until every `eps`-ball of a cover of `region` has been entered to
/// depth `r - eps` by some walker.
pub fn coverage_time(
    walkers: &[WalkerTrajectory],
    region: &Rect,
    r: f64,
    eps: f64,
    t_max: f64,
) -> Result<Coverage, DetectionError> {
    if !(eps > 0.0 && eps < r) {
        return Err(DetectionError::EpsNotLessThanR { eps, r });
    }
    let rho = r - eps;
    let cover = BallCover::new(*region, eps);
    let centers = cover.centers();
    let mut first = vec![f64::INFINITY; centers.len()];
    for traj in walkers {
        let dom = traj.domain;
        for leg in &traj.legs {
            if leg.t_start > t_max {
                break;
            }
            let mut visit = |idx: usize| {
                if leg.t_start > first[idx] {
                    return;
                }
                if let Some(t) = first_contact_static(leg, centers[idx], rho, Some(&dom)) {
                    first[idx] = first[idx].min(t);
                }
            };
            if dom.is_torus() {
                (0..centers.len()).for_each(&mut visit);
            } else if let Some((xs, ys)) = cover.index_range(&leg.bbox().inflate(rho)) {
                for iy in ys {
                    for ix in xs.clone() {
                        visit(iy * cover.nx + ix);
                    }
                }
            }
        }
    }
    let hits: Vec<Option<f64>> = first.iter().map(|&t| (t <= t_max).then_some(t)).collect();
    let time = hits.iter().try_fold(0.0_f64, |acc, h| h.map(|t| acc.max(t)));
    Ok(Coverage { time, centers, hits })
}

/// Empirical `P(T > t)` on a grid with Wilson 95% bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub t_grid: Vec<f64>,
    pub survival: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub censored_frac: f64,
    pub reps: usize,
    pub bound: Option<Vec<f64>>,
}

impl SurvivalCurve {
    /// Censored samples (`None`) count as survivors at every grid point.
    pub fn from_samples(samples: &[Option<f64>], t_grid: &[f64]) -> Self {
        let n = samples.len();
        let mut finite: Vec<f64> = samples.iter().flatten().copied().collect();
        finite.sort_by(f64::total_cmp);
        let censored = n - finite.len();
        let mut survival = Vec::with_capacity(t_grid.len());
        let mut ci_lo = Vec::with_capacity(t_grid.len());
        let mut ci_hi = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            let alive = censored + finite.len() - finite.partition_point(|&x| x <= t);
            let (lo, hi) = wilson_interval(alive, n, Z95);
            survival.push(if n == 0 { 1.0 } else { alive as f64 / n as f64 });
            ci_lo.push(lo);
            ci_hi.push(hi);
        }
        SurvivalCurve {
            t_grid: t_grid.to_vec(),
            survival,
            ci_lo,
            ci_hi,
            censored_frac: if n == 0 { 0.0 } else { censored as f64 / n as f64 },
            reps: n,
            bound: None,
        }
    }

    /// Attaches the overlay `c1 * exp(-c2 * t)`.
    pub fn with_bound(mut self, c1: f64, c2: f64) -> Self {
        self.bound = Some(self.t_grid.iter().map(|t| c1 * (-c2 * t).exp()).collect());
        self
    }

    /// Least-squares slope of `log S(t)` over grid points `t >= t_from` with `S(t) > 0`.
    pub fn log_slope(&self, t_from: f64) -> Option<f64> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .t_grid
            .iter()
            .zip(&self.survival)
            .filter(|(&t, &s)| t >= t_from && s > 0.0)
            .map(|(&t, &s)| (t, s.ln()))
            .unzip();
        linear_fit(&xs, &ys).map(|(slope, _)| slope)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,survival,ci_lo,ci_hi,bound\n");
        for i in 0..self.t_grid.len() {
            let bound = self.bound.as_ref().map_or(String::new(), |b| format!("{:.9e}", b[i]));
            out.push_str(&format!(
                "{},{:.9},{:.9},{:.9},{}\n",
                self.t_grid[i], self.survival[i], self.ci_lo[i], self.ci_hi[i], bound
            ));
        }
        out
    }
}

/// Runs `reps` independent replications of `sampler` on the streams
/// `(seed, 0..reps)` and returns the raw samples in replication order.
pub fn replicate<T, E, F>(reps: usize, seed: u64, sampler: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize, &mut RngStream) -> Result<T, E> + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|rep| sampler(rep, &mut RngStream::new(seed, rep as u64)))
        .collect()
}

/// Monte Carlo estimate of `P(T > t)` from a replication procedure that
/// returns `None` for runs censored at `t_max`.
pub fn estimate_survival<E, F>(
    sampler: F,
    reps: usize,
    t_grid: &[f64],
    seed: u64,
) -> Result<(SurvivalCurve, Vec<Option<f64>>), E>
where
    E: Send,
    F: Fn(usize, &mut RngStream) -> Result<Option<f64>, E> + Sync,
{
    assert!(reps >= 1, "need at least one replication");
    let samples = replicate(reps, seed, sampler)?;
    Ok((SurvivalCurve::from_samples(&samples, t_grid), samples))
}

/// One network: walkers at the points of a home PPP, simulated past `t_max`.
pub fn simulate_network(
    model: &MobilityModel,
    lambda: f64,
    t_max: f64,
    rng: &mut RngStream,
) -> Result<Vec<WalkerTrajectory>, MobilityError> {
    let homes = sample_ppp(&model.domain, lambda, rng);
    homes
        .iter()
        .enumerate()
        .map(|(i, &h)| Walker::simulate(h, model, t_max, &mut rng.substream(i as u64 + 1)))
        .collect()
}

/// Constants of the exponential tail bounds for a homogeneous configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// Prefactor with the home-free probability `exp(-lambda * pi * rho^2)`.
    pub c1: f64,
    pub c2: f64,
    /// Waypoint mass of the detection ball around the target.
    pub q: f64,
    /// Probability that the first leg ends before the alarm.
    pub q_star: f64,
    pub q_star_se: f64,
    /// Prefactor with the positive exponent `exp(lambda * pi * r^2)`.
    pub c1_as_printed: f64,
    pub c_mobile: f64,
    /// Long-run fraction of time a walker spends within `r` of home.
    pub p_home: f64,
}

/// Settings for [`compute_bound_constants`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSetup {
    pub lambda: f64,
    /// Communication radius.
    pub r: f64,
    /// Detection radius (2r for static detection).
    pub rho: f64,
    pub target: Point2,
    pub mc_reps: usize,
}

/// Walkers and horizon (in units of the longest leg time) used for the
/// home-occupation estimate.
const OCCUPATION_WALKERS: usize = 200;
const OCCUPATION_HORIZON_LEGS: f64 = 100.0;

pub fn compute_bound_constants(
    model: &MobilityModel,
    setup: &BoundSetup,
    rng: &mut RngStream,
) -> Result<BoundConstants, DetectionError> {
    let dom = &model.domain;
    let q = measure_mass_on_ball(&model.waypoint, setup.target, setup.target, setup.rho, dom);

    let reps = setup.mc_reps.max(1);
    let mut first_leg_completes = 0usize;
    let mut q_rng = rng.substream(1);
    for _ in 0..reps {
        let home = Point2::new(
            dom.width * rand::Rng::random::<f64>(&mut q_rng),
            dom.height * rand::Rng::random::<f64>(&mut q_rng),
        );
        let s = init_walker(home, model, &mut q_rng)?;
        if s.leg_duration(dom) < s.alarm_rem {
            first_leg_completes += 1;
        }
    }
    let q_star = first_leg_completes as f64 / reps as f64;
    let q_star_se = (q_star * (1.0 - q_star) / reps as f64).sqrt();

    if !(q > 0.0 && q < 1.0 && q_star > 0.0) {
        return Err(DetectionError::DegenerateBound { q, q_star });
    }
    let v_minus = model.v_minus();
    let diam = dom.diameter();
    let c2 = -(v_minus / diam) * (1.0 - q_star).ln().max((1.0 - q).ln());

    let empty = (-setup.lambda * std::f64::consts::PI * setup.rho * setup.rho).exp();
    let c1 = (1.0 - empty).max(empty) / (1.0 - q);
    let printed = (setup.lambda * std::f64::consts::PI * setup.r * setup.r).exp();
    let c1_as_printed = (1.0 - printed).max(printed) / (1.0 - q);

    let burn_in = 10.0 * model.max_leg_time();
    let horizon = OCCUPATION_HORIZON_LEGS * model.max_leg_time();
    let p_home = occupation_fraction(
        model,
        |home| Region::Disk { center: home, radius: setup.r },
        OCCUPATION_WALKERS,
        burn_in,
        horizon,
        &rng.substream(2),
    )?
    .0;
    let c_mobile = setup.lambda * v_minus * p_home / diam;

    Ok(BoundConstants { c1, c2, q, q_star, q_star_se, c1_as_printed, c_mobile, p_home })
}
