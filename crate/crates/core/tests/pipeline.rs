use hermloc::detect::detect;
use hermloc::group::group_report;
use hermloc::moments::{moments_from_density_on, moments_from_masses, perturb, DensityFn};
use hermloc::pio::{kernel_eval, pio_eval, PioConfig};
use hermloc::verify::{run_suite, CheckName, CheckReport, SuiteOptions};
use hermloc::*;
use proptest::prelude::*;

fn masses(q: usize, list: &[(Vec<f64>, f64)]) -> Vec<PointMass> {
    list.iter()
        .map(|(x, a)| {
            assert_eq!(x.len(), q);
            PointMass::real(x.clone(), *a).unwrap()
        })
        .collect()
}

#[test]
fn operator_is_a_superposition_of_kernels() {
    let n = 6;
    let list = [(vec![-0.7, 0.4], 1.0), (vec![1.1, -0.3], -0.5)];
    let s = Scenario::new(2, masses(2, &list), Region::cube(2, -3.0, 3.0).unwrap()).unwrap();
    let m = moments_from_masses(&s, n).unwrap();
    let cfg = PioConfig::new(n, 2).unwrap();
    for x in [[0.0, 0.0], [-0.7, 0.4], [2.0, -1.5]] {
        let x = Point::new(x.to_vec()).unwrap();
        let t = pio_eval(&cfg, &m, &x).unwrap();
        let oracle: f64 = list
            .iter()
            .map(|(y, a)| a * kernel_eval(&cfg, &x, &Point::new(y.clone()).unwrap()).unwrap())
            .sum();
        assert!((t.re - oracle).abs() < 1e-13, "{} vs {oracle}", t.re);
        assert!(t.im.abs() < 1e-15);
    }
}

#[test]
fn complex_amplitudes_are_recovered() {
    let n = 8;
    let s = Scenario::new(
        1,
        vec![
            PointMass::new(Point::new(vec![-1.2]).unwrap(), Complex64::new(0.6, 0.8)),
            PointMass::new(Point::new(vec![1.3]).unwrap(), Complex64::new(0.0, -1.0)),
        ],
        Region::cube(1, -4.0, 4.0).unwrap(),
    )
    .unwrap();
    let m = moments_from_masses(&s, n).unwrap();
    let cfg = DetectConfig::new(n, Region::cube(1, -4.0, 4.0).unwrap(), 0.1, Threshold::Relative(0.3));
    let r = detect(&cfg, &m).unwrap();
    assert_eq!(r.count(), 2);
    let a0 = r.spikes[0].amplitude.unwrap();
    let a1 = r.spikes[1].amplitude.unwrap();
    assert!((a0 - Complex64::new(0.6, 0.8)).norm() < 5e-2, "{a0}");
    assert!((a1 - Complex64::new(0.0, -1.0)).norm() < 5e-2, "{a1}");
}

#[test]
fn narrow_density_looks_like_a_point_mass() {
    // A bump of width 0.05 at 0.8 with unit mass.
    let width: f64 = 0.05;
    let norm = 1.0 / (width * (2.0 * std::f64::consts::PI).sqrt());
    let f = DensityFn::new(1, move |x: &[f64]| norm * (-(x[0] - 0.8).powi(2) / (2.0 * width * width)).exp()).with_feature_scale(width);
    let n = 6;
    let region = Region::cube(1, -2.0, 2.0).unwrap();
    let m = moments_from_density_on(&f, &region, n).unwrap();
    let cfg = DetectConfig::new(n, region, 0.1, Threshold::Relative(0.5));
    let r = detect(&cfg, &m).unwrap();
    assert_eq!(r.count(), 1);
    assert!((r.spikes[0].location.coords()[0] - 0.8).abs() < 0.05);
    let a = r.spikes[0].amplitude.unwrap();
    assert!((a.re - 1.0).abs() < 0.1, "{a}");
}

#[test]
fn noisy_moments_carry_their_bound_into_diagnostics() {
    let n = 6;
    let s = Scenario::new(1, masses(1, &[(vec![0.0], 1.0)]), Region::cube(1, -3.0, 3.0).unwrap()).unwrap();
    let m = perturb(&moments_from_masses(&s, n).unwrap(), &PerturbationSpec::uniform_disk(1e-3, 5)).unwrap();
    let cfg = DetectConfig::new(n, Region::cube(1, -3.0, 3.0).unwrap(), 0.1, Threshold::Absolute(0.1));
    let r = detect(&cfg, &m).unwrap();
    assert_eq!(r.count(), 1);
    assert!(r.diagnostics.noise_max_abs > 0.0 && r.diagnostics.noise_max_abs <= 1e-3);
    assert!(r.diagnostics.noise_bound > r.diagnostics.noise_max_abs);
    assert!(!r.diagnostics.noise_dominated);
}

#[test]
fn groups_partition_the_detections() {
    let n = 8;
    let list = [(vec![-2.6], 1.0), (vec![-1.3], 0.7), (vec![1.2], -0.9), (vec![2.5], 0.8)];
    let s = Scenario::new(1, masses(1, &list), Region::cube(1, -4.0, 4.0).unwrap()).unwrap();
    let m = moments_from_masses(&s, n).unwrap();
    let cfg = DetectConfig::new(n, Region::cube(1, -4.0, 4.0).unwrap(), 0.1, Threshold::Relative(0.3));
    let r = detect(&cfg, &m).unwrap();
    let xs: Vec<f64> = r.spikes.iter().map(|s| s.location.coords()[0]).collect();
    assert_eq!(r.count(), 4, "{xs:?}");
    let report = group_report(&r.spikes, 1.5).unwrap();
    assert_eq!(report.groups.len(), 2);
    assert_eq!(report.total_members(), r.count());
}

#[test]
fn suite_reports_round_trip_and_repeat() {
    let options = SuiteOptions {
        q: 1,
        only: Some(vec![CheckName::Mehler, CheckName::Growth]),
        tolerance: None,
    };
    let a = run_suite(&options).unwrap();
    let b = run_suite(&options).unwrap();
    assert_eq!(a, b);
    for r in &a {
        let back: CheckReport = serde_json::from_str(&r.to_json_string()).unwrap();
        assert_eq!(&back, r);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mass_order_does_not_change_moments(
        pts in proptest::collection::vec((-3.0f64..3.0, -2.0f64..2.0), 1..6),
        rot in 0usize..6,
    ) {
        let region = Region::cube(1, -3.0, 3.0).unwrap();
        let list: Vec<PointMass> = pts.iter().map(|&(x, a)| PointMass::real(vec![x], if a == 0.0 { 1.0 } else { a }).unwrap()).collect();
        let mut rotated = list.clone();
        let k = rot % rotated.len();
        rotated.rotate_left(k);
        let a = moments_from_masses(&Scenario::new(1, list, region.clone()).unwrap(), 5).unwrap();
        let b = moments_from_masses(&Scenario::new(1, rotated, region).unwrap(), 5).unwrap();
        prop_assert_eq!(a.to_json_string(), b.to_json_string());
    }

    #[test]
    fn detection_ignores_worker_count(x in -2.5f64..2.5, a in 0.3f64..2.0, workers in 1usize..5) {
        let region = Region::cube(1, -3.0, 3.0).unwrap();
        let s = Scenario::new(1, vec![PointMass::real(vec![x], a).unwrap()], region.clone()).unwrap();
        let m = moments_from_masses(&s, 6).unwrap();
        let cfg = DetectConfig::new(6, region, 0.1, Threshold::Relative(0.5));
        let one = detect(&cfg.clone().with_workers(1), &m).unwrap();
        let many = detect(&cfg.with_workers(workers), &m).unwrap();
        prop_assert_eq!(one.to_json_string(), many.to_json_string());
        prop_assert_eq!(one.count(), 1);
        prop_assert!((one.spikes[0].location.coords()[0] - x).abs() < 0.1);
    }
}
