use proptest::prelude::*;
use srw_core::detection::SurvivalCurve;
use srw_core::geometry::{first_contact_static, min_distance_point_segment, Point2, RectDomain, Segment};
use srw_core::mobility::{MobilityModel, ModelVariant, Walker};
use srw_core::percolation::{build_graph, clusters};
use srw_core::sampling::{sample_ppp, thin, AlarmMeasure, RngStream, VelocityMeasure, WaypointMeasure};

fn point(lo: f64, hi: f64) -> impl Strategy<Value = Point2> {
    (lo..hi, lo..hi).prop_map(|(x, y)| Point2::new(x, y))
}

fn variant() -> impl Strategy<Value = ModelVariant> {
    prop_oneof![
        Just(ModelVariant::SrwCarryover),
        Just(ModelVariant::SrwReset),
        Just(ModelVariant::ClassicalRwp),
        (0.0f64..=1.0, 0.2f64..3.0).prop_map(|(p, radius)| ModelVariant::Interpolation { p, radius }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn contact_exists_iff_closest_approach_within_rho(
        a in point(0.0, 10.0), b in point(0.0, 10.0), p in point(0.0, 10.0),
        speed in 0.1f64..3.0, rho in 0.05f64..2.0,
    ) {
        let seg = Segment::from_speed(a, b, 1.0, speed);
        let (dmin, _) = min_distance_point_segment(&seg, p);
        let hit = first_contact_static(&seg, p, rho, None);
        prop_assume!((dmin - rho).abs() > 1e-9);
        prop_assert_eq!(hit.is_some(), dmin < rho);
        if let Some(t) = hit {
            prop_assert!(t >= seg.t_start && t <= seg.t_end);
            let d = seg.position_at(t).dist(p);
            if t > seg.t_start {
                prop_assert!((d - rho).abs() < 1e-7);
            } else {
                prop_assert!(d <= rho + 1e-9);
            }
        }
    }

    #[test]
    fn trajectories_are_continuous_and_stay_in_the_domain(
        v in variant(), torus in any::<bool>(), seed in any::<u64>(), home in point(0.0, 8.0),
    ) {
        let domain = if torus { RectDomain::torus(8.0) } else { RectDomain::square(8.0) };
        let m = MobilityModel {
            domain,
            waypoint: WaypointMeasure::BallUniform { radius: 3.0 },
            velocity: VelocityMeasure::Uniform { min: 0.5, max: 2.0 },
            alarm: AlarmMeasure::Exponential { rate: 0.3 },
            variant: v,
        };
        let traj = Walker::simulate(home, &m, 40.0, &mut RngStream::new(seed, 0)).unwrap();
        prop_assert!(traj.horizon() >= 40.0);
        for w in traj.legs.windows(2) {
            prop_assert!((w[0].t_end - w[1].t_start).abs() < 1e-9);
            prop_assert!(domain.displacement(domain.wrap(w[0].end), domain.wrap(w[1].start)).norm() < 1e-9);
        }
        for k in 0..=400 {
            let t = k as f64 * 0.1;
            prop_assert!(domain.contains(traj.position_at(t).unwrap()));
            let floor = (t / m.max_leg_time()).floor() as u64;
            prop_assert!(traj.waypoint_count(t).unwrap() >= floor);
        }
    }

    #[test]
    fn survival_curve_is_monotone_and_inside_its_band(
        raw in prop::collection::vec(prop::option::of(0.0f64..50.0), 1..200),
    ) {
        let grid: Vec<f64> = (0..=50).map(|t| t as f64).collect();
        let c = SurvivalCurve::from_samples(&raw, &grid);
        for w in c.survival.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        for i in 0..grid.len() {
            prop_assert!(c.ci_lo[i] <= c.survival[i] + 1e-12 && c.survival[i] <= c.ci_hi[i] + 1e-12);
        }
        let censored = raw.iter().filter(|s| s.is_none()).count() as f64 / raw.len() as f64;
        prop_assert!((c.survival[50] - censored).abs() < 1e-12);
    }

    #[test]
    fn cluster_sizes_partition_the_points(seed in any::<u64>(), lambda in 0.1f64..3.0, torus in any::<bool>()) {
        let dom = if torus { RectDomain::torus(6.0) } else { RectDomain::square(6.0) };
        let pts = sample_ppp(&dom, lambda, &mut RngStream::new(seed, 0));
        let g = build_graph(&pts, 1.0, &dom);
        let rep = clusters(&g);
        prop_assert_eq!(rep.sizes.iter().sum::<usize>(), pts.len());
        prop_assert_eq!(rep.largest, rep.sizes.iter().copied().max().unwrap_or(0));
        for (i, j) in g.edges() {
            prop_assert_eq!(rep.component[i], rep.component[j]);
        }
    }

    #[test]
    fn thinning_keeps_a_subset(seed in any::<u64>(), keep in 0.0f64..=1.0) {
        let dom = RectDomain::square(5.0);
        let mut rng = RngStream::new(seed, 0);
        let pts = sample_ppp(&dom, 2.0, &mut rng);
        let kept = thin(&pts, keep, &mut rng);
        prop_assert!(kept.len() <= pts.len());
        prop_assert!(kept.iter().all(|k| pts.contains(k)));
        if keep == 1.0 {
            prop_assert_eq!(kept, pts);
        }
    }
}
