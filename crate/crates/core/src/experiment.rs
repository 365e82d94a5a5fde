//! Orchestration of the headline experiments behind the `srw` subcommands.
//!
//! Every run computes its results in memory first and only then writes the
//! files, so a failing run leaves nothing behind. Outputs depend only on the
//! configuration and seed, never on the number of worker threads.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{MobilityConfig, TraceOutput};
use crate::detection::{
    check_target, compute_bound_constants, coverage_time, detect_mobile, detect_static, estimate_survival,
    simulate_network, BoundConstants, BoundSetup, DetectionError, SurvivalCurve,
};
use crate::geometry::Point2;
use crate::mobility::{MobilityError, ModelVariant, Walker, WalkerTrajectory};
use crate::percolation::{
    estimate_lambda_c, phase_experiment, thinned_connect_radius, GraphSummary, PercolationError,
    PhaseSetup, ThinningClock,
};
use crate::sampling::{sample_ppp, RngStream};
use crate::stationary::{
    default_burn_in, default_sample_times, density_distance, mean_leg_duration, rwp_density, stationary_histogram,
    SpatialHistogram, TRIPS_PER_WALKER,
};
use crate::trace::{export_trace, TraceError, TraceFormat};

/// Stream id reserved for the bound constants, away from replication ids.
const BOUND_STREAM: u64 = 1 << 62;
/// Stream id of the extra walker in mobile detection.
const EXTRA_WALKER: u64 = 0;
/// Seed shift separating the critical-intensity sweep from the phase runs.
const LAMBDA_C_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error(transparent)]
    Percolation(#[from] PercolationError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Detect,
    MobileDetect,
    Cover,
    Stationary,
    Percolate,
    Trace,
}

impl Subcommand {
    pub const ALL: [Subcommand; 6] = [
        Subcommand::Detect,
        Subcommand::MobileDetect,
        Subcommand::Cover,
        Subcommand::Stationary,
        Subcommand::Percolate,
        Subcommand::Trace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Detect => "detect",
            Subcommand::MobileDetect => "mobile-detect",
            Subcommand::Cover => "cover",
            Subcommand::Stationary => "stationary",
            Subcommand::Percolate => "percolate",
            Subcommand::Trace => "trace",
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subcommand {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Subcommand::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| format!("unknown subcommand `{s}`"))
    }
}

/// Files produced by a run, in write order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub files: Vec<(String, String)>,
}

impl RunOutput {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }
}

/// Runs `f` on a dedicated pool of `workers` threads (all cores when `None`).
pub fn with_workers<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, ExperimentError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| ExperimentError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Worker cap from `SRW_WORKERS`, if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var("SRW_WORKERS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Computes every output of `cmd` without touching the file system.
pub fn compute(cfg: &MobilityConfig, cmd: Subcommand) -> Result<RunOutput, ExperimentError> {
    let hash = cfg.hash();
    let (mut files, results) = match cmd {
        Subcommand::Detect => run_detect(cfg)?,
        Subcommand::MobileDetect => run_mobile(cfg)?,
        Subcommand::Cover => run_cover(cfg)?,
        Subcommand::Stationary => run_stationary(cfg)?,
        Subcommand::Percolate => run_percolate(cfg)?,
        Subcommand::Trace => run_trace(cfg)?,
    };
    for (name, content) in files.iter_mut() {
        if name.ends_with(".csv") {
            *content = format!("# config_hash={hash}\n{content}");
        }
    }
    let metadata = json!({
        "subcommand": cmd.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": hash,
        "seed": cfg.seed,
        "reps": cfg.reps,
        "config": cfg.emit_settings(),
        "results": results,
    });
    let mut text = serde_json::to_string_pretty(&metadata).expect("metadata serializes");
    text.push('\n');
    files.push(("metadata.json".into(), text));
    Ok(RunOutput { files })
}

/// Computes the outputs of `cmd` and writes them into `out_dir`. Files
/// already written are removed again if a later write fails.
pub fn run_experiment(cfg: &MobilityConfig, cmd: Subcommand, out_dir: &Path) -> Result<RunOutput, ExperimentError> {
    let output = compute(cfg, cmd)?;
    let io = |path: &Path, source| ExperimentError::Io { path: path.to_path_buf(), source };
    std::fs::create_dir_all(out_dir).map_err(|e| io(out_dir, e))?;
    let mut written: Vec<PathBuf> = Vec::new();
    for (name, content) in &output.files {
        let path = out_dir.join(name);
        if let Err(e) = std::fs::write(&path, content) {
            for p in written.iter().chain(std::iter::once(&path)) {
                let _ = std::fs::remove_file(p);
            }
            return Err(io(&path, e));
        }
        written.push(path);
    }
    Ok(output)
}

type Produced = (Vec<(String, String)>, Value);

fn samples_csv(samples: &[Option<f64>]) -> String {
    let mut out = String::from("replication,time\n");
    for (i, s) in samples.iter().enumerate() {
        match s {
            Some(t) => out.push_str(&format!("{i},{t:.9}\n")),
            None => out.push_str(&format!("{i},inf\n")),
        }
    }
    out
}

fn survival_summary(curve: &SurvivalCurve, t0: f64) -> Value {
    json!({
        "censored_frac": curve.censored_frac,
        "log_slope": curve.log_slope(0.0),
        "log_slope_tail": curve.log_slope(t0),
        "tail_from": t0,
    })
}

fn bounds(cfg: &MobilityConfig, rho: f64, target: Point2) -> Result<BoundConstants, DetectionError> {
    let setup = BoundSetup { lambda: cfg.lambda, r: cfg.r, rho, target, mc_reps: cfg.mc_reps };
    compute_bound_constants(&cfg.model(), &setup, &mut RngStream::new(cfg.seed, BOUND_STREAM))
}

fn bound_json(b: &Result<BoundConstants, DetectionError>) -> Value {
    match b {
        Ok(c) => serde_json::to_value(c).expect("constants serialize"),
        Err(e) => json!({ "unavailable": e.to_string() }),
    }
}

fn run_detect(cfg: &MobilityConfig) -> Result<Produced, ExperimentError> {
    let model = cfg.model();
    let warning = check_target(&cfg.domain, cfg.target, cfg.rho_detect).err().map(|e| e.to_string());
    let (curve, samples) = estimate_survival(
        |_, rng| -> Result<_, ExperimentError> {
            let walkers = simulate_network(&model, cfg.lambda, cfg.t_max, rng)?;
            Ok(detect_static(&walkers, cfg.target, cfg.rho_detect, cfg.t_max))
        },
        cfg.reps,
        &cfg.t_grid(),
        cfg.seed,
    )?;
    let b = bounds(cfg, cfg.rho_detect, cfg.target);
    let curve = match &b {
        Ok(c) => curve.with_bound(c.c1.max(1.0), c.c2),
        Err(_) => curve,
    };
    let t0 = model.max_leg_time();
    let results = json!({
        "rho": cfg.rho_detect,
        "target": [cfg.target.x, cfg.target.y],
        "target_warning": warning,
        "bound_constants": bound_json(&b),
        "bound_form": "max(1, c1) * exp(-c2 * t)",
        "survival": survival_summary(&curve, t0),
    });
    Ok((vec![("survival.csv".into(), curve.to_csv()), ("samples.csv".into(), samples_csv(&samples))], results))
}

fn run_mobile(cfg: &MobilityConfig) -> Result<Produced, ExperimentError> {
    let model = cfg.model();
    let dom = cfg.domain;
    let (curve, samples) = estimate_survival(
        |_, rng| -> Result<_, ExperimentError> {
            let walkers = simulate_network(&model, cfg.lambda, cfg.t_max, rng)?;
            let mut er = rng.substream(EXTRA_WALKER);
            let home = Point2::new(dom.width * er.random::<f64>(), dom.height * er.random::<f64>());
            let extra = Walker::simulate(home, &model, cfg.t_max, &mut er)?;
            Ok(detect_mobile(&walkers, &extra, cfg.r, cfg.t_max))
        },
        cfg.reps,
        &cfg.t_grid(),
        cfg.seed,
    )?;
    let b = bounds(cfg, 2.0 * cfg.r, dom.center());
    let curve = match &b {
        Ok(c) => curve.with_bound(1.0, c.c_mobile),
        Err(_) => curve,
    };
    let results = json!({
        "rho": cfg.r,
        "bound_constants": bound_json(&b),
        "bound_form": "exp(-c_mobile * t)",
        "survival": survival_summary(&curve, model.max_leg_time()),
    });
    Ok((vec![("survival.csv".into(), curve.to_csv()), ("samples.csv".into(), samples_csv(&samples))], results))
}

fn run_cover(cfg: &MobilityConfig) -> Result<Produced, ExperimentError> {
    let model = cfg.model();
    let (curve, samples) = estimate_survival(
        |_, rng| -> Result<_, ExperimentError> {
            let walkers = simulate_network(&model, cfg.lambda, cfg.t_max, rng)?;
            Ok(coverage_time(&walkers, &cfg.region, cfg.r, cfg.eps, cfg.t_max)?.time)
        },
        cfg.reps,
        &cfg.t_grid(),
        cfg.seed,
    )?;
    let b = bounds(cfg, cfg.rho_detect, cfg.region.center());
    let curve = match &b {
        Ok(c) => curve.with_bound(c.c1.max(1.0), c.c2),
        Err(_) => curve,
    };
    let r = &cfg.region;
    let results = json!({
        "region": [r.min.x, r.min.y, r.max.x, r.max.y],
        "eps": cfg.eps,
        "rho": cfg.r - cfg.eps,
        "bound_constants": bound_json(&b),
        "survival": survival_summary(&curve, model.max_leg_time()),
    });
    Ok((vec![("survival.csv".into(), curve.to_csv()), ("samples.csv".into(), samples_csv(&samples))], results))
}

fn run_stationary(cfg: &MobilityConfig) -> Result<Produced, ExperimentError> {
    let model = cfg.model();
    let st = &cfg.stationary;
    let burn_in = if st.burn_in > 0.0 { st.burn_in } else { default_burn_in(&model) };
    let times = default_sample_times(st.samples, &model);
    let rng = RngStream::new(cfg.seed, 0);
    let hist: SpatialHistogram = stationary_histogram(&model, st.walkers, burn_in, &times, st.bins, st.bins, &rng)?;
    let (a_x, a_y) = (cfg.domain.width, cfg.domain.height);
    let square = a_x == a_y;
    let reference = move |x: f64, y: f64| if square { rwp_density(x, y, a_x) } else { 1.0 / (a_x * a_y) };
    let tv = (hist.total > 0).then(|| density_distance(&hist, reference));
    let trips = (st.walkers * TRIPS_PER_WALKER).max(1);
    let legs = mean_leg_duration(&model, trips, &RngStream::new(cfg.seed, 1))?;
    let results = json!({
        "burn_in": burn_in,
        "spacing": model.max_leg_time(),
        "samples": hist.total,
        "reference_density": if square { "rwp_polynomial" } else { "uniform" },
        "tv_distance": tv,
        "mean_leg_duration": legs.value,
        "mean_leg_duration_se": legs.se,
        "trips": trips,
    });
    Ok((vec![("histogram.csv".into(), hist.to_csv(reference))], results))
}

fn cluster_row(rep: usize, lambda: f64, p: Option<f64>, g: &GraphSummary) -> String {
    let p = p.map_or(String::new(), |p| p.to_string());
    format!("{rep},{lambda},{p},{},{},{},{}\n", g.points, g.largest, g.crossing_lr, g.crossing_tb)
}

const CLUSTER_HEADER: &str = "replication,lambda,p,points,largest,crossing_lr,crossing_tb\n";

fn run_percolate(cfg: &MobilityConfig) -> Result<Produced, ExperimentError> {
    let model = cfg.model();
    let pc = &cfg.percolation;
    let mut files = Vec::new();
    let mut results = serde_json::Map::new();

    if let ModelVariant::Interpolation { radius: big_r, .. } = cfg.variant {
        let setup = PhaseSetup {
            lambda: cfg.lambda,
            r: cfg.r,
            s: pc.s,
            clock: pc.clock,
            p_grid: pc.p_grid.clone(),
            reps: cfg.reps,
            seed: cfg.seed,
        };
        let report = phase_experiment(&model, &setup)?;
        let mut thinned = String::from(CLUSTER_HEADER);
        let mut full = String::from(CLUSTER_HEADER);
        for row in &report.rows {
            if let Some(g) = &row.thinned {
                thinned.push_str(&cluster_row(row.replication, cfg.lambda, Some(row.p), g));
            }
            full.push_str(&cluster_row(row.replication, cfg.lambda, Some(row.p), &row.full));
        }
        let per_p: Vec<Value> = pc
            .p_grid
            .iter()
            .map(|&p| {
                let (f, se) = report.retained_fraction(p);
                json!({
                    "p": p,
                    "retained_fraction": f,
                    "retained_se": se,
                    "thinned_crossing": report.thinned_crossing(p),
                    "full_crossing": report.full_crossing(p),
                })
            })
            .collect();
        results.insert("home_radius".into(), json!(big_r));
        results.insert("thinned_connect_radius".into(), json!(report.thinned_radius));
        results.insert(
            "thinned_radius_note".into(),
            json!(thinned_connect_radius(cfg.r, big_r).err().map(|e| e.to_string())),
        );
        results.insert("full_connect_radius".into(), json!(report.full_radius));
        results.insert("radius_convention".into(), json!("connection distance = 2 * argument of lambda_c"));
        results.insert(
            "clock".into(),
            json!(match pc.clock {
                ThinningClock::Leg => "leg",
                ThinningClock::Time => "time",
            }),
        );
        results.insert("s".into(), json!(pc.s));
        results.insert("per_p".into(), Value::Array(per_p));
        if report.thinned_radius.is_some() {
            files.push(("clusters.csv".into(), thinned));
        }
        files.push(("clusters_full.csv".into(), full));
    } else {
        let dom = cfg.domain;
        let rows: Vec<GraphSummary> = crate::detection::replicate(cfg.reps, cfg.seed, |_, rng| {
            let homes = sample_ppp(&dom, cfg.lambda, rng);
            let pts = homes
                .iter()
                .enumerate()
                .map(|(i, &h)| Walker::simulate(h, &model, pc.s, &mut rng.substream(i as u64 + 1))?.position_at(pc.s))
                .collect::<Result<Vec<Point2>, MobilityError>>()?;
            Ok::<_, ExperimentError>(GraphSummary::of(&pts, 2.0 * cfg.r, &dom))
        })?;
        let mut csv = String::from(CLUSTER_HEADER);
        for (rep, g) in rows.iter().enumerate() {
            csv.push_str(&cluster_row(rep, cfg.lambda, None, g));
        }
        let crossing = rows.iter().filter(|g| g.crossing_lr).count() as f64 / rows.len() as f64;
        results.insert("connect_radius".into(), json!(2.0 * cfg.r));
        results.insert("snapshot_time".into(), json!(pc.s));
        results.insert("crossing_probability".into(), json!(crossing));
        files.push(("clusters.csv".into(), csv));
    }

    if !pc.lambda_grid.is_empty() {
        let cr = match cfg.variant {
            ModelVariant::Interpolation { radius, .. } => thinned_connect_radius(cfg.r, radius)?,
            _ => 2.0 * cfg.r,
        };
        let a = cfg.domain.width.min(cfg.domain.height);
        let est = estimate_lambda_c(cr, a, &pc.lambda_grid, cfg.reps, cfg.seed.wrapping_add(LAMBDA_C_SEED_OFFSET));
        let mut csv = String::from("lambda,crossings,reps,probability\n");
        for c in &est.curve {
            csv.push_str(&format!("{},{},{},{:.6}\n", c.lambda, c.crossings, c.reps, c.probability()));
        }
        results.insert("lambda_c_connect_radius".into(), json!(cr));
        results.insert("lambda_c".into(), json!(est.lambda_c));
        results.insert("lambda_c_window".into(), json!(a));
        files.push(("lambda_c.csv".into(), csv));
    }
    Ok((files, Value::Object(results)))
}

fn run_trace(cfg: &MobilityConfig) -> Result<Produced, ExperimentError> {
    let model = cfg.model();
    let dom = cfg.domain;
    let trajs: Vec<WalkerTrajectory> = crate::detection::replicate(cfg.trace.walkers.max(1), cfg.seed, |_, rng| {
        let home = Point2::new(dom.width * rng.random::<f64>(), dom.height * rng.random::<f64>());
        Walker::simulate(home, &model, cfg.t_max, rng)
    })?;
    let mut files = Vec::new();
    if matches!(cfg.trace.format, TraceOutput::Native | TraceOutput::Both) {
        let text = export_trace(&trajs, TraceFormat::Native)?;
        // the hash goes right after the fixed header line
        let (head, body) = text.split_once('\n').expect("header line");
        files.push(("trace.native".into(), format!("{head}\n# config_hash={}\n{body}", cfg.hash())));
    }
    if matches!(cfg.trace.format, TraceOutput::Bonnmotion | TraceOutput::Both) {
        files.push(("trace.bonnmotion".into(), export_trace(&trajs, TraceFormat::BonnMotion)?));
    }
    let legs: usize = trajs.iter().map(|t| t.legs.len()).sum();
    let homecomings: usize = trajs.iter().map(|t| t.homecoming_times().len()).sum();
    let results = json!({
        "walkers": trajs.len(),
        "horizon": cfg.t_max,
        "legs": legs,
        "homecomings": homecomings,
        "bonnmotion_dialect": "one line per node of `t x y` waypoint triples",
    });
    Ok((files, results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn small() -> MobilityConfig {
        parse_config("reps = 20\nt_max = 40\nmc_reps = 2000\nstationary.walkers = 20\nstationary.samples = 5\n").unwrap()
    }

    #[test]
    fn names_round_trip() {
        for c in Subcommand::ALL {
            assert_eq!(c.name().parse::<Subcommand>().unwrap(), c);
        }
        assert!("bogus".parse::<Subcommand>().is_err());
    }

    #[test]
    fn detect_is_deterministic_across_pools() {
        let cfg = small();
        let a = with_workers(Some(1), || compute(&cfg, Subcommand::Detect)).unwrap().unwrap();
        let b = with_workers(Some(4), || compute(&cfg, Subcommand::Detect)).unwrap().unwrap();
        assert_eq!(a, b);
        let survival = a.get("survival.csv").unwrap();
        assert!(survival.starts_with("# config_hash="));
        assert!(survival.lines().nth(1) == Some("t,survival,ci_lo,ci_hi,bound"));
        assert_eq!(a.get("samples.csv").unwrap().lines().count(), 2 + 20);
        let meta: Value = serde_json::from_str(a.get("metadata.json").unwrap()).unwrap();
        assert_eq!(meta["config_hash"], cfg.hash());
        assert!(meta["results"]["bound_constants"]["c2"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn trace_writes_one_native_file() {
        let out = compute(&small(), Subcommand::Trace).unwrap();
        let names: Vec<&str> = out.files.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["trace.native", "metadata.json"]);
        let text = out.get("trace.native").unwrap();
        let back = crate::trace::import_native(text, crate::geometry::BoundaryMode::Bounded).unwrap();
        assert_eq!(back.len(), 5);
    }

    #[test]
    fn percolate_rows_per_p_and_replication() {
        let cfg = parse_config(
            "variant = interpolation\nr = 1\neps = 0.1\nR = 1\nlambda = 1\ndomain.a_x = 12\nreps = 3\npercolation.p_grid = 0,0.5,1\n",
        )
        .unwrap();
        let out = compute(&cfg, Subcommand::Percolate).unwrap();
        assert_eq!(out.get("clusters.csv").unwrap().lines().count(), 2 + 9);
        assert_eq!(out.get("clusters_full.csv").unwrap().lines().count(), 2 + 9);
    }

    #[test]
    fn failed_runs_leave_no_files() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("out");
        std::fs::write(&blocker, "not a directory").unwrap();
        let err = run_experiment(&small(), Subcommand::Trace, &blocker).unwrap_err();
        assert!(matches!(err, ExperimentError::Io { .. }));
        let out = dir.path().join("ok");
        run_experiment(&small(), Subcommand::Trace, &out).unwrap();
        assert!(out.join("trace.native").exists() && out.join("metadata.json").exists());
    }
}
