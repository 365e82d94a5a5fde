//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any criterion fails.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use srw_core::config::parse_config;
use srw_core::detection::{
    compute_bound_constants, coverage_time, detect_mobile, detect_static, estimate_survival, replicate,
    simulate_network, BoundSetup,
};
use srw_core::experiment::{compute, with_workers, Subcommand};
use srw_core::geometry::{distance, Point2, Rect, RectDomain};
use srw_core::mobility::{MobilityModel, ModelVariant, Walker, WalkerTrajectory};
use srw_core::percolation::{
    border_center_densities, build_graph, displaced_homogeneity_check, estimate_lambda_c, phase_experiment,
    thinned_connect_radius, Displacement, Intensity, PhaseSetup, ThinningClock,
};
use srw_core::sampling::{sample_ppp, thin, AlarmMeasure, RngStream, VelocityMeasure, WaypointMeasure};
use srw_core::stationary::{default_burn_in, default_sample_times, density_distance, mean_leg_duration, rwp_density, stationary_histogram};
use srw_core::stats::{ks_two_sample, mean, variance};

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn model(a: f64, waypoint: WaypointMeasure, velocity: VelocityMeasure, alarm: AlarmMeasure, variant: ModelVariant) -> MobilityModel {
    MobilityModel { domain: RectDomain::square(a), waypoint, velocity, alarm, variant }
}

fn uniform_point(dom: &RectDomain, rng: &mut impl Rng) -> Point2 {
    Point2::new(dom.width * rng.random::<f64>(), dom.height * rng.random::<f64>())
}

// 1: event-driven contact times against a fixed-step oracle

const STEP: f64 = 1e-3;

fn stepped_first_hit(t_max: f64, hit: impl Fn(f64) -> bool) -> Option<f64> {
    let steps = (t_max / STEP).floor() as usize;
    (0..=steps).map(|k| k as f64 * STEP).find(|&t| hit(t))
}

fn agrees(event: Option<f64>, oracle: Option<f64>, t_max: f64) -> bool {
    match (event, oracle) {
        (None, None) => true,
        (Some(e), Some(o)) => e <= o + 1e-9 && o - e <= STEP,
        (Some(e), None) => e > t_max - STEP,
        (None, Some(_)) => false,
    }
}

fn random_model(rng: &mut RngStream) -> MobilityModel {
    let variant = match rng.random_range(0..4) {
        0 => ModelVariant::SrwCarryover,
        1 => ModelVariant::SrwReset,
        2 => ModelVariant::ClassicalRwp,
        _ => ModelVariant::Interpolation { p: rng.random(), radius: rng.random_range(0.5..3.0) },
    };
    let waypoint = if rng.random::<bool>() {
        WaypointMeasure::UniformDomain
    } else {
        WaypointMeasure::BallUniform { radius: rng.random_range(1.0..4.0) }
    };
    model(
        10.0,
        waypoint,
        VelocityMeasure::Uniform { min: 0.5, max: 2.0 },
        AlarmMeasure::Exponential { rate: 0.2 },
        variant,
    )
}

fn criterion_1() -> Outcome {
    const CONFIGS: usize = 100;
    const T_MAX: f64 = 20.0;
    let results: Vec<(bool, bool)> = (0..CONFIGS)
        .into_par_iter()
        .map(|c| {
            let mut rng = RngStream::new(SEED, c as u64);
            let m = random_model(&mut rng);
            let dom = m.domain;
            let n = rng.random_range(1..=10);
            let rho = rng.random_range(0.1..1.0);
            let walkers: Vec<WalkerTrajectory> = (0..n)
                .map(|i| Walker::simulate(uniform_point(&dom, &mut rng), &m, T_MAX, &mut rng.substream(i as u64 + 1)).unwrap())
                .collect();
            let target = uniform_point(&dom, &mut rng);
            let extra = Walker::simulate(uniform_point(&dom, &mut rng), &m, T_MAX, &mut rng.substream(0)).unwrap();

            let at = |w: &WalkerTrajectory, t: f64| w.position_at(t).unwrap();
            let static_oracle =
                stepped_first_hit(T_MAX, |t| walkers.iter().any(|w| distance(at(w, t), target, &dom) <= rho));
            let mobile_oracle =
                stepped_first_hit(T_MAX, |t| walkers.iter().any(|w| distance(at(w, t), at(&extra, t), &dom) <= rho));
            (
                agrees(detect_static(&walkers, target, rho, T_MAX), static_oracle, T_MAX),
                agrees(detect_mobile(&walkers, &extra, rho, T_MAX), mobile_oracle, T_MAX),
            )
        })
        .collect();
    let s = results.iter().filter(|r| r.0).count();
    let m = results.iter().filter(|r| r.1).count();
    outcome(
        s == CONFIGS && m == CONFIGS,
        format!("static {s}/{CONFIGS}, mobile {m}/{CONFIGS} configs agree with the {STEP} step oracle"),
    )
}

// 2 and 3 share the detection configuration

const A: f64 = 10.0;
const LAMBDA: f64 = 0.5;
const R: f64 = 0.5;
const T_MAX: f64 = 200.0;
const REPS: usize = 2000;

fn detection_model() -> MobilityModel {
    model(
        A,
        WaypointMeasure::UniformDomain,
        VelocityMeasure::Uniform { min: 1.0, max: 2.0 },
        AlarmMeasure::Deterministic { value: 20.0 },
        ModelVariant::SrwCarryover,
    )
}

fn t_grid() -> Vec<f64> {
    (0..=T_MAX as usize).map(|t| t as f64).collect()
}

fn detection_bounds(m: &MobilityModel) -> (f64, f64) {
    let setup = BoundSetup { lambda: LAMBDA, r: R, rho: 2.0 * R, target: m.domain.center(), mc_reps: 100_000 };
    let b = compute_bound_constants(m, &setup, &mut RngStream::new(SEED, 1 << 40)).unwrap();
    (b.c1, b.c2)
}

fn criterion_2() -> Outcome {
    let m = detection_model();
    let target = m.domain.center();
    let (c1, c2) = detection_bounds(&m);
    let (curve, _) = estimate_survival(
        |_, rng| -> Result<_, srw_core::mobility::MobilityError> {
            let walkers = simulate_network(&m, LAMBDA, T_MAX, rng)?;
            Ok(detect_static(&walkers, target, 2.0 * R, T_MAX))
        },
        REPS,
        &t_grid(),
        SEED,
    )
    .unwrap();
    let t0 = m.max_leg_time();
    let amp = c1.max(1.0);
    let worst = curve
        .t_grid
        .iter()
        .zip(&curve.ci_hi)
        .filter(|(&t, _)| t >= t0)
        .map(|(&t, &hi)| hi - amp * (-c2 * t).exp())
        .fold(f64::NEG_INFINITY, f64::max);
    // survival vanishes long before t0, so the slope uses every positive grid point
    let slope = curve.log_slope(0.0);
    let decays = slope.is_some_and(|s| s <= -0.5 * c2);
    outcome(
        worst <= 0.0 && decays,
        format!(
            "c1 = {c1:.4}, c2 = {c2:.5}; max(upper band - bound) for t >= {t0:.2} is {worst:.4}; log slope {} vs {:.5}",
            slope.map_or("n/a".into(), |s| format!("{s:.5}")),
            -0.5 * c2
        ),
    )
}

fn criterion_3() -> Outcome {
    const CROSS_CHECKED: usize = 100;
    let m = detection_model();
    let (_, c2) = detection_bounds(&m);
    let region = Rect::centered_square(m.domain.center(), 2.0);
    let eps = 0.1;
    let rows = replicate(REPS, SEED ^ 0x3, |rep, rng| -> Result<_, srw_core::mobility::MobilityError> {
        let walkers = simulate_network(&m, LAMBDA, T_MAX, rng)?;
        let cov = coverage_time(&walkers, &region, R, eps, T_MAX).unwrap();
        let all_hit: Option<Vec<f64>> = cov.hits.iter().copied().collect();
        let max_ok = match (&all_hit, cov.time) {
            (Some(h), Some(t)) => h.iter().copied().fold(f64::NEG_INFINITY, f64::max) == t,
            (None, None) => true,
            _ => false,
        };
        let per_center_ok = rep >= CROSS_CHECKED
            || cov.centers.iter().zip(&cov.hits).all(|(&c, &h)| {
                match (detect_static(&walkers, c, R - eps, T_MAX), h) {
                    (Some(a), Some(b)) => (a - b).abs() <= 1e-9,
                    (None, None) => true,
                    _ => false,
                }
            });
        Ok((cov.time, max_ok, per_center_ok))
    })
    .unwrap();
    let samples: Vec<Option<f64>> = rows.iter().map(|r| r.0).collect();
    let curve = srw_core::detection::SurvivalCurve::from_samples(&samples, &t_grid());
    let slope = curve.log_slope(0.0);
    let max_ok = rows.iter().filter(|r| r.1).count();
    let center_ok = rows.iter().filter(|r| r.2).count();
    let decays = slope.is_some_and(|s| s <= -0.5 * c2);
    outcome(
        decays && max_ok == REPS && center_ok == REPS,
        format!(
            "log slope {} vs {:.5}; max structure {max_ok}/{REPS}; per-center hits match point detection {center_ok}/{REPS}",
            slope.map_or("n/a".into(), |s| format!("{s:.5}")),
            -0.5 * c2
        ),
    )
}

// 4: Poisson machinery

fn criterion_4() -> Outcome {
    const N: usize = 10_000;
    let dom = RectDomain::square(A);
    let window = Rect::new(Point2::new(2.0, 1.0), Point2::new(7.0, 4.0));
    let counts: Vec<f64> = (0..N)
        .into_par_iter()
        .map(|i| {
            let pts = sample_ppp(&dom, LAMBDA, &mut RngStream::new(SEED, i as u64));
            pts.iter().filter(|p| window.contains(**p)).count() as f64
        })
        .collect();
    let dispersion = variance(&counts) / mean(&counts);

    let keep = 0.3;
    let thinned: Vec<f64> = (0..N)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(SEED ^ 0x4, i as u64);
            let pts = sample_ppp(&dom, LAMBDA, &mut rng);
            thin(&pts, keep, &mut rng).len() as f64
        })
        .collect();
    let direct: Vec<f64> = (0..N)
        .into_par_iter()
        .map(|i| sample_ppp(&dom, keep * LAMBDA, &mut RngStream::new(SEED ^ 0x5, i as u64)).len() as f64)
        .collect();
    let (_, ks_p) = ks_two_sample(&thinned, &direct);

    const RUNS: usize = 1000;
    let torus = RectDomain::torus(A);
    let lambda = 4.0;
    let shift = WaypointMeasure::BallUniform { radius: 2.0 };
    let rejections = (0..RUNS)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = RngStream::new(SEED ^ 0x6, i as u64);
            let homes = sample_ppp(&torus, lambda, &mut rng);
            let t = displaced_homogeneity_check(&homes, &Displacement::Measure(shift.clone()), &torus, 5, lambda, &mut rng)
                .unwrap();
            t.p_value < 0.01
        })
        .count();
    let rate = rejections as f64 / RUNS as f64;
    outcome(
        (0.9..=1.1).contains(&dispersion) && ks_p > 0.01 && rate <= 0.02,
        format!("variance/mean {dispersion:.4}; thinning KS p = {ks_p:.3}; displaced chi-square rejection rate {rate:.3}"),
    )
}

// 5: stationary density of the classical model

fn criterion_5() -> Outcome {
    let m = model(
        A,
        WaypointMeasure::UniformDomain,
        VelocityMeasure::Uniform { min: 1.0, max: 1.0 },
        AlarmMeasure::Deterministic { value: f64::INFINITY },
        ModelVariant::ClassicalRwp,
    );
    let times = default_sample_times(100, &m);
    let hist = stationary_histogram(&m, 10_000, default_burn_in(&m), &times, 20, 20, &RngStream::new(SEED, 5)).unwrap();
    let tv = density_distance(&hist, |x, y| rwp_density(x, y, A));
    outcome(tv < 0.05, format!("{} samples, total variation {tv:.4} (limit 0.05)", hist.total))
}

// 6: mean leg duration

/// Mean distance between two independent uniform points of the unit square.
fn unit_square_mean_distance() -> f64 {
    let s2 = 2f64.sqrt();
    (2.0 + s2 + 5.0 * (1.0 + s2).ln()) / 15.0
}

fn criterion_6() -> Outcome {
    let unit = MobilityModel {
        domain: RectDomain::square(1.0),
        waypoint: WaypointMeasure::UniformDomain,
        velocity: VelocityMeasure::Uniform { min: 1.0, max: 1.0 },
        alarm: AlarmMeasure::Deterministic { value: f64::INFINITY },
        variant: ModelVariant::ClassicalRwp,
    };
    let oracle = unit_square_mean_distance();
    let est = mean_leg_duration(&unit, 1_000_000, &RngStream::new(SEED, 6)).unwrap();
    let z = (est.value - oracle) / est.se;

    let tail = model(
        A,
        WaypointMeasure::PowerTail { beta: 1.5, scale: 1.0 },
        VelocityMeasure::Uniform { min: 1.0, max: 1.0 },
        AlarmMeasure::Deterministic { value: f64::INFINITY },
        ModelVariant::ClassicalRwp,
    );
    let scaled: Vec<(f64, f64)> = [10_000usize, 100_000, 1_000_000]
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let e = mean_leg_duration(&tail, n, &RngStream::new(SEED ^ 0x7, k as u64)).unwrap();
            (e.value, e.se * (n as f64).sqrt())
        })
        .collect();
    let finite = scaled.iter().all(|(v, s)| v.is_finite() && s.is_finite());
    let lo = scaled.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let hi = scaled.iter().map(|s| s.1).fold(0.0, f64::max);
    let stable = finite && hi / lo <= 1.5;
    outcome(
        z.abs() <= 3.0 && stable,
        format!(
            "uniform square {:.5} +/- {:.5} vs {oracle:.5} (z = {z:.2}); power tail means {:?}, se*sqrt(n) spread {:.3}",
            est.value,
            est.se,
            scaled.iter().map(|s| (s.0 * 1e4).round() / 1e4).collect::<Vec<_>>(),
            hi / lo
        ),
    )
}

// 7: graph builder and critical intensity

fn lambda_grid() -> Vec<f64> {
    (0..=20).map(|i| 1.0 + 0.05 * i as f64).collect()
}

fn lambda_c_hat() -> srw_core::percolation::LambdaCEstimate {
    estimate_lambda_c(1.0, 32.0, &lambda_grid(), 200, SEED)
}

fn brute_edges(points: &[Point2], cr: f64, dom: &RectDomain) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if distance(points[i], points[j], dom) <= cr {
                out.push((i, j));
            }
        }
    }
    out
}

fn criterion_7(est: &srw_core::percolation::LambdaCEstimate) -> Outcome {
    const INSTANCES: usize = 60;
    let matching = (0..INSTANCES)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = RngStream::new(SEED ^ 0x8, i as u64);
            let a = rng.random_range(5.0..40.0);
            let dom = if i % 2 == 0 { RectDomain::square(a) } else { RectDomain::torus(a) };
            let n = rng.random_range(0..=2000);
            let pts: Vec<Point2> = (0..n).map(|_| uniform_point(&dom, &mut rng)).collect();
            let cr = rng.random_range(0.05..2.0);
            let mut edges = build_graph(&pts, cr, &dom).edges();
            edges.sort_unstable();
            edges == brute_edges(&pts, cr, &dom)
        })
        .count();
    let violation = est.monotonicity_violation();
    outcome(
        matching == INSTANCES && (1.3..=1.6).contains(&est.lambda_c) && violation <= 0.1,
        format!(
            "builder matches brute force on {matching}/{INSTANCES} instances; lambda_c = {:.4}; isotonic gap {violation:.3}",
            est.lambda_c
        ),
    )
}

// 8: phase transition of the interpolation model

fn criterion_8(lambda_c: f64) -> Outcome {
    let (r, big_r, a) = (1.0, 1.0, 20.0);
    // lambda_c at connection distance 1 is the critical intensity for the thinned graph
    let cr = thinned_connect_radius(r, big_r).unwrap();
    let lambda = 3.0 * lambda_c / (cr * cr);
    let m = model(
        a,
        WaypointMeasure::UniformDomain,
        VelocityMeasure::Uniform { min: 1.0, max: 2.0 },
        AlarmMeasure::Deterministic { value: f64::INFINITY },
        ModelVariant::Interpolation { p: 0.0, radius: big_r },
    );
    let p_grid = vec![0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 1.0];
    let setup = PhaseSetup { lambda, r, s: 10.0, clock: ThinningClock::Leg, p_grid: p_grid.clone(), reps: 100, seed: SEED };
    let report = phase_experiment(&m, &setup).unwrap();
    let worst_z = p_grid
        .iter()
        .map(|&p| {
            let (f, se) = report.retained_fraction(p);
            let expect = (1.0 - p) * (1.0 - p);
            if se > 0.0 {
                (f - expect).abs() / se
            } else if f == expect {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    let cross0 = report.thinned_crossing(0.0).unwrap_or(0.0);
    let cross9 = report.thinned_crossing(0.9).unwrap_or(1.0);

    // time-stationary snapshot of the classical limit p = 1
    let classic = MobilityModel { variant: ModelVariant::Interpolation { p: 1.0, radius: big_r }, ..m.clone() };
    let t_snap = default_burn_in(&classic);
    let stripe = a.sqrt();
    let parts: Vec<(Intensity, Intensity)> = replicate(50, SEED ^ 0x9, |_, rng| -> Result<_, srw_core::mobility::MobilityError> {
        let homes = sample_ppp(&classic.domain, lambda, rng);
        let pts = homes
            .iter()
            .enumerate()
            .map(|(i, &h)| Walker::simulate(h, &classic, t_snap, &mut rng.substream(i as u64 + 1))?.position_at(t_snap))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(border_center_densities(&pts, a, stripe, stripe))
    })
    .unwrap();
    let border = Intensity::pooled(&parts.iter().map(|p| p.0).collect::<Vec<_>>());
    let center = Intensity::pooled(&parts.iter().map(|p| p.1).collect::<Vec<_>>());
    let border_bound = 9.0 * lambda / a.sqrt();
    let center_bound = 2.25 * lambda - 18.0 * lambda / a;
    let border_ok = border.value <= border_bound + 3.0 * border.se;
    let center_ok = center.value >= center_bound - 3.0 * center.se;
    outcome(
        worst_z <= 3.0 && cross0 >= 0.9 && cross9 <= 0.1 && border_ok && center_ok,
        format!(
            "lambda = {lambda:.3}; retained fraction worst |z| {worst_z:.2}; thinned crossing {cross0:.2} at p=0, {cross9:.2} at p=0.9; \
             border {:.3} <= {border_bound:.3}; center {:.3} >= {center_bound:.3}",
            border.value, center.value
        ),
    )
}

// 9: determinism across worker counts

const SMALL: &str = "reps = 6\nt_max = 30\nmc_reps = 2000\nstationary.walkers = 12\nstationary.samples = 4\n\
trace.walkers = 3\ntrace.format = both\npercolation.s = 3\n";

fn criterion_9() -> Outcome {
    let interpolation = format!("{SMALL}variant = interpolation\np = 0.3\nR = 0.8\nr = 0.6\npercolation.lambda_grid = 0.5,1,1.5\n");
    let mut runs: Vec<(String, &str, Subcommand)> =
        Subcommand::ALL.iter().map(|&c| (c.name().to_string(), SMALL, c)).collect();
    runs.push(("percolate (interpolation)".into(), &interpolation, Subcommand::Percolate));
    let mut differing = Vec::new();
    for (label, text, cmd) in &runs {
        let cfg = parse_config(text).unwrap();
        let one = with_workers(Some(1), || compute(&cfg, *cmd)).unwrap().unwrap();
        let many = with_workers(Some(4), || compute(&cfg, *cmd)).unwrap().unwrap();
        if one.files != many.files {
            differing.push(label.clone());
        }
    }
    outcome(
        differing.is_empty(),
        format!("{} runs compared at 1 and 4 workers; differing: {:?}", runs.len(), differing),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("[{status}] {n} {name}: {} ({:.1}s)", o.detail, start.elapsed().as_secs_f64());
        if !o.pass {
            failed += 1;
        }
    };
    report(1, "kinematics oracle", &criterion_1);
    report(2, "static detection tail", &criterion_2);
    report(3, "coverage tail", &criterion_3);
    report(4, "Poisson machinery", &criterion_4);
    report(5, "classical stationary density", &criterion_5);
    report(6, "mean leg duration", &criterion_6);
    let est = lambda_c_hat();
    report(7, "percolation", &|| criterion_7(&est));
    report(8, "phase transition in p", &|| criterion_8(est.lambda_c));
    report(9, "determinism", &criterion_9);
    drop(report);
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}
