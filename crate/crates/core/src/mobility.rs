//! The sedentary random waypoint chain and its trajectories.
//!
//! A walker's state is the leg it is currently travelling: previous waypoint,
//! next waypoint, speed and remaining alarm time. [`next_leg`] applies the
//! update rule at the arrival instant; [`WalkerTrajectory`] is the
//! append-only log of legs that answers exact position queries.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point2, RectDomain, Segment};
use crate::sampling::{
    sample_alarm, sample_velocity, sample_waypoint, AlarmMeasure, SamplingError, VelocityMeasure, WaypointMeasure,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MobilityError {
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("time {t} is outside the simulated window [{from}, {horizon}]")]
    HorizonExceeded { t: f64, from: f64, horizon: f64 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelVariant {
    /// Alarm counts down across legs; a ring sends the walker home next.
    SrwCarryover,
    /// A fresh alarm is drawn at every waypoint and compared with the leg.
    SrwReset,
    /// Long trip off the home disk with probability `p`, otherwise a trip
    /// inside the disk of radius `radius` around home. No alarm.
    Interpolation { p: f64, radius: f64 },
    ClassicalRwp,
}

/// Everything that drives a single walker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityModel {
    pub domain: RectDomain,
    pub waypoint: WaypointMeasure,
    pub velocity: VelocityMeasure,
    pub alarm: AlarmMeasure,
    pub variant: ModelVariant,
}

impl MobilityModel {
    pub fn v_minus(&self) -> f64 {
        self.velocity.v_minus()
    }

    /// Time needed for the longest possible leg at the slowest speed.
    pub fn max_leg_time(&self) -> f64 {
        self.domain.diameter() / self.v_minus()
    }

    pub fn validate(&self) -> Result<(), MobilityError> {
        self.waypoint.validate()?;
        self.velocity.validate()?;
        self.alarm.validate()?;
        if let ModelVariant::Interpolation { p, radius } = self.variant {
            if !(0.0..=1.0).contains(&p) {
                return Err(MobilityError::InvalidModel(format!("p = {p} is not a probability")));
            }
            if !(radius > 0.0) {
                return Err(MobilityError::InvalidModel("interpolation radius must be positive".into()));
            }
        }
        Ok(())
    }

    fn draw_waypoint<R: Rng + ?Sized>(&self, home: Point2, rng: &mut R) -> Result<Point2, MobilityError> {
        let p = match self.variant {
            ModelVariant::Interpolation { p, radius } => {
                let measure = if rng.random::<f64>() < p {
                    WaypointMeasure::AnnulusUniform { radius }
                } else {
                    WaypointMeasure::BallUniform { radius }
                };
                sample_waypoint(&measure, home, &self.domain, rng)?
            }
            _ => sample_waypoint(&self.waypoint, home, &self.domain, rng)?,
        };
        Ok(p)
    }
}

/// The leg a walker is currently travelling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkerState {
    pub home: Point2,
    pub prev_wp: Point2,
    pub next_wp: Point2,
    pub speed: f64,
    /// Remaining alarm time measured from the start of this leg.
    pub alarm_rem: f64,
    pub leg_start: f64,
    /// Index `n` of the leg ending at waypoint `W_n`.
    pub leg_count: u64,
    pub going_home: bool,
}

impl WalkerState {
    pub fn leg_length(&self, dom: &RectDomain) -> f64 {
        dom.displacement(self.prev_wp, self.next_wp).norm()
    }

    pub fn leg_duration(&self, dom: &RectDomain) -> f64 {
        self.leg_length(dom) / self.speed
    }

    pub fn arrival_time(&self, dom: &RectDomain) -> f64 {
        self.leg_start + self.leg_duration(dom)
    }

    /// The leg as a segment; on a torus the end point is unwrapped so the
    /// motion is a straight line.
    pub fn segment(&self, dom: &RectDomain) -> Segment {
        let end = self.prev_wp + dom.displacement(self.prev_wp, self.next_wp);
        Segment::from_speed(self.prev_wp, end, self.leg_start, self.speed)
    }
}

/// Places the walker at home at time 0 and draws its first leg.
pub fn init_walker<R: Rng + ?Sized>(home: Point2, model: &MobilityModel, rng: &mut R) -> Result<WalkerState, MobilityError> {
    let next_wp = model.draw_waypoint(home, rng)?;
    let speed = sample_velocity(&model.velocity, rng);
    let s1 = model.domain.displacement(home, next_wp).norm() / speed;
    let alarm_rem = match model.variant {
        ModelVariant::SrwCarryover => sample_alarm(&model.alarm, rng) + s1,
        ModelVariant::SrwReset => sample_alarm(&model.alarm, rng),
        ModelVariant::Interpolation { .. } | ModelVariant::ClassicalRwp => f64::INFINITY,
    };
    Ok(WalkerState {
        home,
        prev_wp: home,
        next_wp,
        speed,
        alarm_rem,
        leg_start: 0.0,
        leg_count: 1,
        going_home: false,
    })
}

/// Applies the update rule at the end of the current leg.
pub fn next_leg<R: Rng + ?Sized>(state: &WalkerState, model: &MobilityModel, rng: &mut R) -> Result<WalkerState, MobilityError> {
    let dom = &model.domain;
    let leg = state.leg_duration(dom);
    let here = state.next_wp;
    let home = state.home;
    let home_trip = |speed: f64| dom.displacement(here, home).norm() / speed;

    let (next_wp, speed, alarm_rem, going_home) = match model.variant {
        ModelVariant::SrwCarryover => {
            let rem = state.alarm_rem - leg;
            if rem > 0.0 {
                let wp = model.draw_waypoint(home, rng)?;
                (wp, sample_velocity(&model.velocity, rng), rem, false)
            } else {
                let speed = sample_velocity(&model.velocity, rng);
                let z = sample_alarm(&model.alarm, rng);
                let s_home = home_trip(speed);
                if s_home > 0.0 {
                    (home, speed, z + s_home, true)
                } else {
                    // already home: the new alarm starts now and a fresh waypoint is drawn
                    (model.draw_waypoint(home, rng)?, speed, z, false)
                }
            }
        }
        ModelVariant::SrwReset => {
            let ring = state.alarm_rem <= leg;
            let at_home = dom.displacement(here, home).norm() == 0.0;
            let (wp, going_home) = if ring && !at_home {
                (home, true)
            } else {
                (model.draw_waypoint(home, rng)?, false)
            };
            let speed = sample_velocity(&model.velocity, rng);
            (wp, speed, sample_alarm(&model.alarm, rng), going_home)
        }
        ModelVariant::Interpolation { .. } | ModelVariant::ClassicalRwp => {
            let wp = model.draw_waypoint(home, rng)?;
            (wp, sample_velocity(&model.velocity, rng), f64::INFINITY, false)
        }
    };
    Ok(WalkerState {
        home,
        prev_wp: here,
        next_wp,
        speed,
        alarm_rem,
        leg_start: state.leg_start + leg,
        leg_count: state.leg_count + 1,
        going_home,
    })
}

/// Sample path of one walker: contiguous legs starting at home at time 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkerTrajectory {
    pub home: Point2,
    pub domain: RectDomain,
    pub legs: Vec<Segment>,
    /// Arrival time `T_n` at the end of each stored leg.
    pub waypoint_times: Vec<f64>,
    /// Whether each stored leg ends at home.
    pub home_arrivals: Vec<bool>,
    /// Number of legs discarded by [`WalkerTrajectory::prune_before`].
    pub pruned: u64,
}

impl WalkerTrajectory {
    /// A trajectory holding just the walker's first leg.
    pub fn start(state: &WalkerState, dom: &RectDomain) -> Self {
        let mut traj = WalkerTrajectory {
            home: state.home,
            domain: *dom,
            legs: Vec::new(),
            waypoint_times: Vec::new(),
            home_arrivals: Vec::new(),
            pruned: 0,
        };
        traj.push(state);
        traj
    }

    /// Builds a trajectory from explicit legs (used for imported traces).
    pub fn from_legs(home: Point2, domain: RectDomain, legs: Vec<Segment>, home_arrivals: Vec<bool>) -> Self {
        let waypoint_times = legs.iter().map(|l| l.t_end).collect();
        WalkerTrajectory { home, domain, legs, waypoint_times, home_arrivals, pruned: 0 }
    }

    fn push(&mut self, state: &WalkerState) {
        let seg = state.segment(&self.domain);
        self.waypoint_times.push(seg.t_end);
        self.home_arrivals.push(state.going_home);
        self.legs.push(seg);
    }

    /// Time up to which the path is known.
    pub fn horizon(&self) -> f64 {
        self.legs.last().map_or(0.0, |l| l.t_end)
    }

    /// Earliest time still answerable after pruning.
    pub fn earliest(&self) -> f64 {
        self.legs.first().map_or(0.0, |l| l.t_start)
    }

    fn check(&self, t: f64) -> Result<(), MobilityError> {
        if t < self.earliest() || t > self.horizon() || t.is_nan() {
            return Err(MobilityError::HorizonExceeded { t, from: self.earliest(), horizon: self.horizon() });
        }
        Ok(())
    }

    /// Index of the leg active at time `t` (the first leg with `t_end >= t`).
    fn leg_index(&self, t: f64) -> usize {
        self.legs.partition_point(|l| l.t_end < t).min(self.legs.len() - 1)
    }

    /// Exact position at time `t` by linear interpolation along the active leg.
    pub fn position_at(&self, t: f64) -> Result<Point2, MobilityError> {
        self.check(t)?;
        Ok(self.domain.wrap(self.legs[self.leg_index(t)].position_at(t)))
    }

    /// `M(t)`: number of waypoints reached by time `t` (arrivals with `T_n <= t`).
    pub fn waypoint_count(&self, t: f64) -> Result<u64, MobilityError> {
        if t > self.horizon() || t.is_nan() {
            return Err(MobilityError::HorizonExceeded { t, from: self.earliest(), horizon: self.horizon() });
        }
        Ok(self.pruned + self.waypoint_times.partition_point(|&tn| tn <= t) as u64)
    }

    /// Arrival times at home among the stored legs.
    pub fn homecoming_times(&self) -> Vec<f64> {
        self.waypoint_times
            .iter()
            .zip(&self.home_arrivals)
            .filter(|(_, &h)| h)
            .map(|(&t, _)| t)
            .collect()
    }

    /// Drives the chain until the last waypoint time exceeds `t_target`.
    /// Only appends legs.
    pub fn advance_to<R: Rng + ?Sized>(
        &mut self,
        state: &mut WalkerState,
        t_target: f64,
        model: &MobilityModel,
        rng: &mut R,
    ) -> Result<(), MobilityError> {
        while self.horizon() <= t_target {
            *state = next_leg(state, model, rng)?;
            self.push(state);
        }
        Ok(())
    }

    /// Drops legs that end before `t`, keeping the leg active at `t`.
    pub fn prune_before(&mut self, t: f64) {
        let keep_from = self.legs.partition_point(|l| l.t_end < t);
        if keep_from > 0 {
            self.legs.drain(..keep_from);
            self.waypoint_times.drain(..keep_from);
            self.home_arrivals.drain(..keep_from);
            self.pruned += keep_from as u64;
        }
    }
}

/// A walker's chain state together with its recorded path.
#[derive(Debug, Clone, PartialEq)]
pub struct Walker {
    pub state: WalkerState,
    pub traj: WalkerTrajectory,
}

impl Walker {
    pub fn new<R: Rng + ?Sized>(home: Point2, model: &MobilityModel, rng: &mut R) -> Result<Self, MobilityError> {
        let state = init_walker(home, model, rng)?;
        let traj = WalkerTrajectory::start(&state, &model.domain);
        Ok(Walker { state, traj })
    }

    pub fn advance_to<R: Rng + ?Sized>(&mut self, t: f64, model: &MobilityModel, rng: &mut R) -> Result<(), MobilityError> {
        self.traj.advance_to(&mut self.state, t, model, rng)
    }

    /// A walker started at `home` and simulated past `t_max`.
    pub fn simulate<R: Rng + ?Sized>(
        home: Point2,
        model: &MobilityModel,
        t_max: f64,
        rng: &mut R,
    ) -> Result<WalkerTrajectory, MobilityError> {
        let mut w = Walker::new(home, model, rng)?;
        w.advance_to(t_max, model, rng)?;
        Ok(w.traj)
    }
}
