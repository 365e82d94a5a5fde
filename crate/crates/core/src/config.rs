//! Flat `key = value` experiment configuration.
//!
//! Sections are spelled with dotted keys (`domain.a_x = 10`). Blank lines and
//! `#` comments are ignored; unknown and duplicate keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{BoundaryMode, Point2, Rect, RectDomain};
use crate::mobility::{MobilityModel, ModelVariant};
use crate::percolation::ThinningClock;
use crate::sampling::{AlarmMeasure, Hotspot, VelocityMeasure, WaypointMeasure};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation { field: field.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceOutput {
    Native,
    Bonnmotion,
    Both,
}

/// Every knob of an experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityConfig {
    pub domain: RectDomain,
    /// Intensity of the home process.
    pub lambda: f64,
    /// Communication radius.
    pub r: f64,
    pub rho_detect: f64,
    pub eps: f64,
    pub variant: ModelVariant,
    pub waypoint: WaypointMeasure,
    pub velocity: VelocityMeasure,
    pub alarm: AlarmMeasure,
    pub t_max: f64,
    pub reps: usize,
    pub seed: u64,
    pub t_grid_step: f64,
    pub target: Point2,
    pub region: Rect,
    pub mc_reps: usize,
    pub percolation: PercolationConfig,
    pub stationary: StationaryConfig,
    pub trace: TraceConfig,
    pub output_dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercolationConfig {
    pub p_grid: Vec<f64>,
    /// Intensities swept for the critical-intensity estimate; empty skips the sweep.
    pub lambda_grid: Vec<f64>,
    pub s: f64,
    pub clock: ThinningClock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryConfig {
    pub walkers: usize,
    pub samples: usize,
    /// Burn-in time; 0 selects the default of fifty longest-leg times.
    pub burn_in: f64,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub walkers: usize,
    pub format: TraceOutput,
}

const KEYS: &[&str] = &[
    "domain.a_x",
    "domain.a_y",
    "domain.boundary",
    "lambda",
    "r",
    "rho_detect",
    "eps",
    "variant",
    "p",
    "R",
    "waypoint.kind",
    "waypoint.radius",
    "waypoint.beta",
    "waypoint.scale",
    "waypoint.hotspots",
    "waypoint.background_weight",
    "velocity.kind",
    "velocity.min",
    "velocity.max",
    "velocity.knots",
    "alarm.kind",
    "alarm.value",
    "alarm.rate",
    "alarm.lo",
    "alarm.hi",
    "t_max",
    "reps",
    "seed",
    "t_grid.step",
    "target.x",
    "target.y",
    "region.x0",
    "region.y0",
    "region.x1",
    "region.y1",
    "mc_reps",
    "percolation.p_grid",
    "percolation.lambda_grid",
    "percolation.s",
    "percolation.clock",
    "stationary.walkers",
    "stationary.samples",
    "stationary.burn_in",
    "stationary.bins",
    "trace.walkers",
    "trace.format",
    "output.dir",
];

/// Raw entries with the line each came from.
struct Entries {
    map: BTreeMap<String, (String, usize)>,
    used: std::cell::RefCell<Vec<String>>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<&(String, usize)> {
        self.used.borrow_mut().push(key.to_string());
        self.map.get(key)
    }

    fn parsed<T>(&self, key: &str, default: T, parse: impl Fn(&str) -> Option<T>) -> Result<T, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, line)) => parse(v).ok_or_else(|| ConfigError::Parse {
                line: *line,
                message: format!("cannot read `{v}` as a value for {key}"),
            }),
        }
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        self.parsed(key, default, parse_f64)
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        self.parsed(key, default, |v| v.parse().ok())
    }

    fn text(&self, key: &str, default: &str) -> String {
        self.raw(key).map_or_else(|| default.to_string(), |(v, _)| v.clone())
    }

    fn list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        self.parsed(key, default.to_vec(), |v| {
            if v.trim().is_empty() {
                return Some(Vec::new());
            }
            v.split(',').map(|x| parse_f64(x.trim())).collect()
        })
    }

    /// Keys that were given but never consulted for the chosen kinds.
    fn unused(&self) -> Option<(String, usize)> {
        let used = self.used.borrow();
        self.map.iter().find(|(k, _)| !used.contains(k)).map(|(k, (_, line))| (k.clone(), *line))
    }
}

fn parse_f64(v: &str) -> Option<f64> {
    match v {
        "inf" | "+inf" => Some(f64::INFINITY),
        _ => v.parse::<f64>().ok().filter(|x| x.is_finite()),
    }
}

fn fmt_f64(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else {
        format!("{x:?}")
    }
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",")
}

fn tokenize(text: &str) -> Result<BTreeMap<String, (String, usize)>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Parse { line, message: format!("expected `key = value`, found `{content}`") });
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(ConfigError::Parse { line, message: format!("unknown key `{key}`") });
        }
        if let Some((_, first)) = map.get(key) {
            return Err(ConfigError::Parse { line, message: format!("duplicate key `{key}` (first set on line {first})") });
        }
        map.insert(key.to_string(), (value.to_string(), line));
    }
    Ok(map)
}

fn parse_pairs(v: &str, arity: usize) -> Option<Vec<Vec<f64>>> {
    if v.trim().is_empty() {
        return Some(Vec::new());
    }
    v.split(';')
        .map(|item| {
            let xs: Option<Vec<f64>> = item.split(':').map(|x| parse_f64(x.trim())).collect();
            xs.filter(|xs| xs.len() == arity)
        })
        .collect()
}

/// Parses and validates a configuration, filling in defaults.
pub fn parse_config(text: &str) -> Result<MobilityConfig, ConfigError> {
    let e = Entries { map: tokenize(text)?, used: Default::default() };

    let a_x = e.f64("domain.a_x", 10.0)?;
    let a_y = e.f64("domain.a_y", a_x)?;
    let boundary = match e.text("domain.boundary", "bounded").as_str() {
        "bounded" => BoundaryMode::Bounded,
        "torus" => BoundaryMode::Torus,
        other => return Err(invalid("domain.boundary", format!("unknown mode `{other}`"))),
    };
    let domain = RectDomain::new(a_x, a_y, boundary).map_err(|_| invalid("domain", "sides must be positive"))?;

    let lambda = e.f64("lambda", 0.5)?;
    let r = e.f64("r", 0.5)?;
    let rho_detect = e.f64("rho_detect", 2.0 * r)?;
    let eps = e.f64("eps", 0.1)?;

    let variant = match e.text("variant", "srw_carryover").as_str() {
        "srw_carryover" => ModelVariant::SrwCarryover,
        "srw_reset" => ModelVariant::SrwReset,
        "classical_rwp" => ModelVariant::ClassicalRwp,
        "interpolation" => ModelVariant::Interpolation { p: e.f64("p", 0.5)?, radius: e.f64("R", 1.0)? },
        other => return Err(invalid("variant", format!("unknown variant `{other}`"))),
    };

    let waypoint = match e.text("waypoint.kind", "uniform_domain").as_str() {
        "uniform_domain" => WaypointMeasure::UniformDomain,
        "ball_uniform" => WaypointMeasure::BallUniform { radius: e.f64("waypoint.radius", 1.0)? },
        "annulus_uniform" => WaypointMeasure::AnnulusUniform { radius: e.f64("waypoint.radius", 1.0)? },
        "power_tail" => {
            WaypointMeasure::PowerTail { beta: e.f64("waypoint.beta", 1.5)?, scale: e.f64("waypoint.scale", 1.0)? }
        }
        "hotspots" => {
            let spots = e
                .parsed("waypoint.hotspots", Vec::new(), |v| parse_pairs(v, 4))?
                .into_iter()
                .map(|s| Hotspot { center: Point2::new(s[0], s[1]), radius: s[2], weight: s[3] })
                .collect();
            WaypointMeasure::Hotspots { spots, background_weight: e.f64("waypoint.background_weight", 0.0)? }
        }
        other => return Err(invalid("waypoint.kind", format!("unknown kind `{other}`"))),
    };

    let velocity = match e.text("velocity.kind", "uniform").as_str() {
        "uniform" => VelocityMeasure::Uniform { min: e.f64("velocity.min", 1.0)?, max: e.f64("velocity.max", 2.0)? },
        "table" => {
            let knots = e
                .parsed("velocity.knots", Vec::new(), |v| parse_pairs(v, 2))?
                .into_iter()
                .map(|k| (k[0], k[1]))
                .collect();
            VelocityMeasure::Table { knots }
        }
        other => return Err(invalid("velocity.kind", format!("unknown kind `{other}`"))),
    };

    let alarm = match e.text("alarm.kind", "deterministic").as_str() {
        "deterministic" => AlarmMeasure::Deterministic { value: e.f64("alarm.value", 20.0)? },
        "exponential" => AlarmMeasure::Exponential { rate: e.f64("alarm.rate", 0.05)? },
        "uniform" => AlarmMeasure::Uniform { lo: e.f64("alarm.lo", 10.0)?, hi: e.f64("alarm.hi", 30.0)? },
        other => return Err(invalid("alarm.kind", format!("unknown kind `{other}`"))),
    };

    let center = domain.center();
    let target = Point2::new(e.f64("target.x", center.x)?, e.f64("target.y", center.y)?);
    let region = Rect::new(
        Point2::new(e.f64("region.x0", center.x - 1.0)?, e.f64("region.y0", center.y - 1.0)?),
        Point2::new(e.f64("region.x1", center.x + 1.0)?, e.f64("region.y1", center.y + 1.0)?),
    );

    let clock = match e.text("percolation.clock", "leg").as_str() {
        "leg" => ThinningClock::Leg,
        "time" => ThinningClock::Time,
        other => return Err(invalid("percolation.clock", format!("unknown clock `{other}`"))),
    };
    let format = match e.text("trace.format", "native").as_str() {
        "native" => TraceOutput::Native,
        "bonnmotion" => TraceOutput::Bonnmotion,
        "both" => TraceOutput::Both,
        other => return Err(invalid("trace.format", format!("unknown format `{other}`"))),
    };

    let cfg = MobilityConfig {
        domain,
        lambda,
        r,
        rho_detect,
        eps,
        variant,
        waypoint,
        velocity,
        alarm,
        t_max: e.f64("t_max", 200.0)?,
        reps: e.usize("reps", 100)?,
        seed: e.parsed("seed", 1, |v| v.parse().ok())?,
        t_grid_step: e.f64("t_grid.step", 1.0)?,
        target,
        region,
        mc_reps: e.usize("mc_reps", 100_000)?,
        percolation: PercolationConfig {
            p_grid: e.list("percolation.p_grid", &[0.0, 0.2, 0.4, 0.6, 0.8, 1.0])?,
            lambda_grid: e.list("percolation.lambda_grid", &[])?,
            s: e.f64("percolation.s", 10.0)?,
            clock,
        },
        stationary: StationaryConfig {
            walkers: e.usize("stationary.walkers", 1000)?,
            samples: e.usize("stationary.samples", 100)?,
            burn_in: e.f64("stationary.burn_in", 0.0)?,
            bins: e.usize("stationary.bins", 20)?,
        },
        trace: TraceConfig { walkers: e.usize("trace.walkers", 5)?, format },
        output_dir: e.text("output.dir", "out"),
    };
    if let Some((key, line)) = e.unused() {
        return Err(ConfigError::Parse { line, message: format!("`{key}` does not apply to the selected kinds") });
    }
    cfg.validate()?;
    Ok(cfg)
}

impl MobilityConfig {
    pub fn default_config() -> Self {
        parse_config("").expect("defaults are valid")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, format!("{x} must be positive and finite")))
            }
        };
        positive("lambda", self.lambda)?;
        positive("r", self.r)?;
        positive("rho_detect", self.rho_detect)?;
        positive("eps", self.eps)?;
        if self.eps >= self.r {
            return Err(invalid("eps", format!("{} must be smaller than r = {}", self.eps, self.r)));
        }
        positive("t_max", self.t_max)?;
        positive("t_grid.step", self.t_grid_step)?;
        if let ModelVariant::Interpolation { p, radius } = self.variant {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid("p", format!("{p} is not a probability")));
            }
            positive("R", radius)?;
        }
        self.waypoint.validate().map_err(|e| invalid("waypoint", e.to_string()))?;
        self.velocity.validate().map_err(|e| invalid("velocity", e.to_string()))?;
        self.alarm.validate().map_err(|e| invalid("alarm", e.to_string()))?;
        if self.reps == 0 {
            return Err(invalid("reps", "need at least one replication"));
        }
        if self.mc_reps == 0 {
            return Err(invalid("mc_reps", "need at least one draw"));
        }
        let dom = self.domain.rect();
        if !dom.contains(self.target) {
            return Err(invalid("target", "outside the domain"));
        }
        if !(self.region.width() >= 0.0 && self.region.height() >= 0.0) || !dom.contains_rect(&self.region) {
            return Err(invalid("region", "must be a rectangle inside the domain"));
        }
        if self.percolation.p_grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("percolation.p_grid", "entries must be probabilities"));
        }
        if self.percolation.lambda_grid.windows(2).any(|w| w[0] >= w[1])
            || self.percolation.lambda_grid.iter().any(|l| *l < 0.0)
        {
            return Err(invalid("percolation.lambda_grid", "must be non-negative and increasing"));
        }
        if !(self.percolation.s >= 1.0) {
            return Err(invalid("percolation.s", "must be at least 1"));
        }
        if self.percolation.clock == ThinningClock::Leg && self.percolation.s.fract() != 0.0 {
            return Err(invalid("percolation.s", "must be a whole number of legs"));
        }
        if !(self.stationary.burn_in >= 0.0) {
            return Err(invalid("stationary.burn_in", "must be non-negative"));
        }
        if self.stationary.bins == 0 {
            return Err(invalid("stationary.bins", "need at least one bin"));
        }
        if self.output_dir.is_empty() {
            return Err(invalid("output.dir", "must not be empty"));
        }
        Ok(())
    }

    pub fn model(&self) -> MobilityModel {
        MobilityModel {
            domain: self.domain,
            waypoint: self.waypoint.clone(),
            velocity: self.velocity.clone(),
            alarm: self.alarm.clone(),
            variant: self.variant,
        }
    }

    /// Survival grid `0, step, 2 step, ...` up to `t_max`.
    pub fn t_grid(&self) -> Vec<f64> {
        let n = (self.t_max / self.t_grid_step).floor() as usize;
        (0..=n).map(|k| k as f64 * self.t_grid_step).collect()
    }

    /// Canonical text with every key spelled out; `parse_config` inverts it.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("domain.a_x", fmt_f64(self.domain.width));
        put("domain.a_y", fmt_f64(self.domain.height));
        put("domain.boundary", if self.domain.is_torus() { "torus" } else { "bounded" }.into());
        put("lambda", fmt_f64(self.lambda));
        put("r", fmt_f64(self.r));
        put("rho_detect", fmt_f64(self.rho_detect));
        put("eps", fmt_f64(self.eps));
        match self.variant {
            ModelVariant::SrwCarryover => put("variant", "srw_carryover".into()),
            ModelVariant::SrwReset => put("variant", "srw_reset".into()),
            ModelVariant::ClassicalRwp => put("variant", "classical_rwp".into()),
            ModelVariant::Interpolation { p, radius } => {
                put("variant", "interpolation".into());
                put("p", fmt_f64(p));
                put("R", fmt_f64(radius));
            }
        }
        match &self.waypoint {
            WaypointMeasure::UniformDomain => put("waypoint.kind", "uniform_domain".into()),
            WaypointMeasure::BallUniform { radius } => {
                put("waypoint.kind", "ball_uniform".into());
                put("waypoint.radius", fmt_f64(*radius));
            }
            WaypointMeasure::AnnulusUniform { radius } => {
                put("waypoint.kind", "annulus_uniform".into());
                put("waypoint.radius", fmt_f64(*radius));
            }
            WaypointMeasure::PowerTail { beta, scale } => {
                put("waypoint.kind", "power_tail".into());
                put("waypoint.beta", fmt_f64(*beta));
                put("waypoint.scale", fmt_f64(*scale));
            }
            WaypointMeasure::Hotspots { spots, background_weight } => {
                put("waypoint.kind", "hotspots".into());
                let items: Vec<String> = spots
                    .iter()
                    .map(|s| fmt_list(&[s.center.x, s.center.y, s.radius, s.weight]).replace(',', ":"))
                    .collect();
                put("waypoint.hotspots", items.join(";"));
                put("waypoint.background_weight", fmt_f64(*background_weight));
            }
        }
        match &self.velocity {
            VelocityMeasure::Uniform { min, max } => {
                put("velocity.kind", "uniform".into());
                put("velocity.min", fmt_f64(*min));
                put("velocity.max", fmt_f64(*max));
            }
            VelocityMeasure::Table { knots } => {
                put("velocity.kind", "table".into());
                let items: Vec<String> = knots.iter().map(|k| format!("{}:{}", fmt_f64(k.0), fmt_f64(k.1))).collect();
                put("velocity.knots", items.join(";"));
            }
        }
        match &self.alarm {
            AlarmMeasure::Deterministic { value } => {
                put("alarm.kind", "deterministic".into());
                put("alarm.value", fmt_f64(*value));
            }
            AlarmMeasure::Exponential { rate } => {
                put("alarm.kind", "exponential".into());
                put("alarm.rate", fmt_f64(*rate));
            }
            AlarmMeasure::Uniform { lo, hi } => {
                put("alarm.kind", "uniform".into());
                put("alarm.lo", fmt_f64(*lo));
                put("alarm.hi", fmt_f64(*hi));
            }
        }
        put("t_max", fmt_f64(self.t_max));
        put("reps", self.reps.to_string());
        put("seed", self.seed.to_string());
        put("t_grid.step", fmt_f64(self.t_grid_step));
        put("target.x", fmt_f64(self.target.x));
        put("target.y", fmt_f64(self.target.y));
        put("region.x0", fmt_f64(self.region.min.x));
        put("region.y0", fmt_f64(self.region.min.y));
        put("region.x1", fmt_f64(self.region.max.x));
        put("region.y1", fmt_f64(self.region.max.y));
        put("mc_reps", self.mc_reps.to_string());
        put("percolation.p_grid", fmt_list(&self.percolation.p_grid));
        put("percolation.lambda_grid", fmt_list(&self.percolation.lambda_grid));
        put("percolation.s", fmt_f64(self.percolation.s));
        put(
            "percolation.clock",
            match self.percolation.clock {
                ThinningClock::Leg => "leg",
                ThinningClock::Time => "time",
            }
            .into(),
        );
        put("stationary.walkers", self.stationary.walkers.to_string());
        put("stationary.samples", self.stationary.samples.to_string());
        put("stationary.burn_in", fmt_f64(self.stationary.burn_in));
        put("stationary.bins", self.stationary.bins.to_string());
        put("trace.walkers", self.trace.walkers.to_string());
        put(
            "trace.format",
            match self.trace.format {
                TraceOutput::Native => "native",
                TraceOutput::Bonnmotion => "bonnmotion",
                TraceOutput::Both => "both",
            }
            .into(),
        );
        put("output.dir", self.output_dir.clone());
        out
    }

    /// Canonical text without the output location, which does not affect results.
    pub fn emit_settings(&self) -> String {
        self.emit().lines().filter(|l| !l.starts_with("output.dir ")).map(|l| format!("{l}\n")).collect()
    }

    /// SHA-256 of [`MobilityConfig::emit_settings`], in hex.
    pub fn hash(&self) -> String {
        Sha256::digest(self.emit_settings().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
