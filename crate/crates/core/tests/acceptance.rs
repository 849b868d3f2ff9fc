//! Acceptance run: every criterion prints one PASS/FAIL line with its
//! measurement and wall time. Runs sequentially so the timings are honest.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use hermloc::detect::{detect, noise_bound};
use hermloc::group::group_spikes;
use hermloc::moments::{moments_from_masses, perturb};
use hermloc::pio::{kernel_eval, PioConfig};
use hermloc::verify::{
    check_diag_floor, check_fourier_invariance, check_localization, check_mehler, check_orthonormality, DiagFloorParams, FourierParams,
    LocalizationParams, MehlerParams, OrthonormalityParams, Status,
};
use hermloc::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn scenario_1d(spikes: &[(f64, f64)], half: f64) -> Scenario {
    let masses = spikes.iter().map(|&(x, a)| PointMass::real(vec![x], a).unwrap()).collect();
    Scenario::new(1, masses, Region::cube(1, -half, half).unwrap()).unwrap()
}

/// Largest distance from a detected spike to its ground-truth partner, both
/// lists sorted by location.
fn location_error(found: &[DetectedSpike], truth: &[f64]) -> f64 {
    found
        .iter()
        .zip(truth)
        .map(|(s, x)| (s.location.coords()[0] - x).abs())
        .fold(0.0, f64::max)
}

const TWO_SPIKES: [(f64, f64); 2] = [(-1.0, 1.0), (1.0, -0.8)];

fn two_spike_config(n: usize) -> DetectConfig {
    DetectConfig::new(n, Region::cube(1, -4.0, 4.0).unwrap(), 0.1, Threshold::Absolute(0.1)).with_refine_factor(8)
}

fn c1_orthonormality() -> Outcome {
    let r = check_orthonormality(&OrthonormalityParams::default()).unwrap();
    let worst = r.worst_discrepancy.unwrap();
    outcome(worst < 1e-8, format!("max |G - I| = {worst:.2e} over j, k <= 50"))
}

fn c2_mehler() -> Outcome {
    let mut worst: f64 = 0.0;
    for q in [1, 2] {
        let r = check_mehler(&MehlerParams {
            q,
            r_values: vec![0.2, 0.5, 0.8],
            ..Default::default()
        })
        .unwrap();
        worst = worst.max(r.worst_discrepancy.unwrap());
    }
    outcome(worst < 1e-10, format!("max |series - closed form| = {worst:.2e}, q in {{1,2}}"))
}

fn c3_fourier() -> Outcome {
    let mut worst: f64 = 0.0;
    for q in [1, 2] {
        let r = check_fourier_invariance(&FourierParams {
            q,
            max_total_degree: 8,
            ..Default::default()
        })
        .unwrap();
        worst = worst.max(r.worst_discrepancy.unwrap());
    }
    outcome(worst < 1e-6, format!("max |F psi_k - (-i)^|k| psi_k| = {worst:.2e}, |k| <= 8, q in {{1,2}}"))
}

fn c4_localization() -> Outcome {
    let loc = check_localization(&LocalizationParams {
        q: 1,
        n_values: vec![4, 6, 8],
        ..Default::default()
    })
    .unwrap();
    let floor = check_diag_floor(&DiagFloorParams {
        q: 1,
        n_values: vec![4, 6, 8],
        ..Default::default()
    })
    .unwrap();
    let decays: Vec<String> = [4, 6, 8]
        .iter()
        .map(|n| format!("n={n}: {:.1}x", loc.constants[&format!("n={n}:decay_factor")]))
        .collect();
    let floors: Vec<String> = [4, 6, 8]
        .iter()
        .map(|n| format!("{:.3}", floor.constants[&format!("n={n}:floor")]))
        .collect();
    let floor_positive = [4, 6, 8].iter().all(|n| floor.constants[&format!("n={n}:floor")] > 0.0);
    outcome(
        loc.status == Status::Pass && floor_positive,
        format!("envelope decay {} ; diagonal floor {}", decays.join(", "), floors.join(", ")),
    )
}

/// Local maxima of `|sum_l a_l Phi_n(x, x_l)|` above `level` on a dense grid.
fn dense_oracle_peaks(n: usize, spikes: &[(f64, f64)], level: f64) -> Vec<f64> {
    let cfg = PioConfig::new(n, 1).unwrap();
    let step = 1e-3;
    let xs: Vec<f64> = (0..=8000).map(|i| -4.0 + i as f64 * step).collect();
    let values: Vec<f64> = xs
        .iter()
        .map(|&x| {
            spikes
                .iter()
                .map(|&(y, a)| a * kernel_eval(&cfg, &Point::new(vec![x]).unwrap(), &Point::new(vec![y]).unwrap()).unwrap())
                .sum::<f64>()
                .abs()
        })
        .collect();
    (1..values.len() - 1)
        .filter(|&i| values[i] >= level && values[i] > values[i - 1] && values[i] >= values[i + 1])
        .map(|i| xs[i])
        .collect()
}

fn c5_exact_recovery() -> Outcome {
    let n = 8;
    let s = scenario_1d(&TWO_SPIKES, 4.0);
    let m = moments_from_masses(&s, n).unwrap();
    let cfg = two_spike_config(n);
    let r = detect(&cfg, &m).unwrap();
    if r.count() != 2 {
        return outcome(false, format!("L = {} (expected 2)", r.count()));
    }
    let err = location_error(&r.spikes, &[-1.0, 1.0]);
    let amp_err = r
        .spikes
        .iter()
        .zip(TWO_SPIKES)
        .map(|(s, (_, a))| (s.amplitude.unwrap() - Complex64::new(a, 0.0)).norm())
        .fold(0.0, f64::max);
    let oracle = dense_oracle_peaks(n, &TWO_SPIKES, 0.1);
    let oracle_gap = r
        .spikes
        .iter()
        .zip(&oracle)
        .map(|(s, x)| (s.location.coords()[0] - x).abs())
        .fold(0.0, f64::max);
    let fine = cfg.fine_spacing();
    let pass = err <= fine && amp_err < 5e-2 && oracle.len() == 2 && oracle_gap <= fine;
    outcome(
        pass,
        format!("L = 2, location error {err:.4} (<= {fine}), amplitude error {amp_err:.4}, gap to dense oracle {oracle_gap:.4}"),
    )
}

fn c6_convergence() -> Outcome {
    let s = scenario_1d(&TWO_SPIKES, 4.0);
    let mut errors = Vec::new();
    for n in [4, 6, 8, 10] {
        let m = moments_from_masses(&s, n).unwrap();
        let r = detect(&two_spike_config(n), &m).unwrap();
        if r.count() != 2 {
            return outcome(false, format!("n = {n}: L = {}", r.count()));
        }
        errors.push(location_error(&r.spikes, &[-1.0, 1.0]));
    }
    let monotone = errors.windows(2).all(|w| w[1] <= w[0]);
    let halved = errors[3] <= errors[0] / 2.0;
    outcome(monotone && halved, format!("location errors for n = 4, 6, 8, 10: {errors:.4?}"))
}

fn c7_noise() -> Outcome {
    let n = 8;
    let theta = 0.1;
    // off the fine lattice, so the noise-free error is not zero
    let spikes = [(-1.0037, 1.0), (0.9521, -0.8)];
    let truth = [-1.0037, 0.9521];
    let s = scenario_1d(&spikes, 4.0);
    let m = moments_from_masses(&s, n).unwrap();
    let cfg = two_spike_config(n);
    let clean = detect(&cfg, &m).unwrap();
    if clean.count() != 2 {
        return outcome(false, format!("noise-free L = {}", clean.count()));
    }
    let e0 = location_error(&clean.spikes, &truth);
    let eps = 0.99 * (theta / 4.0) / noise_bound(n, 1, &FilterSpec::default(), 1.0);
    let mut worst: f64 = 0.0;
    let mut bound_seen: f64 = 0.0;
    for seed in 0..20 {
        let noisy = perturb(&m, &PerturbationSpec::uniform_disk(eps, seed)).unwrap();
        let r = detect(&cfg, &noisy).unwrap();
        bound_seen = bound_seen.max(r.diagnostics.noise_bound);
        if r.count() != 2 || r.diagnostics.noise_bound >= theta / 4.0 {
            return outcome(false, format!("seed {seed}: L = {}, bound {:.4}", r.count(), r.diagnostics.noise_bound));
        }
        worst = worst.max(location_error(&r.spikes, &truth));
    }
    outcome(
        worst <= 2.0 * e0,
        format!("eps = {eps:.3e}, reported bound {bound_seen:.4} < {:.4}; worst error {worst:.4} vs noise-free {e0:.4}", theta / 4.0),
    )
}

fn c8_side_equivalence() -> Outcome {
    let n = 8;
    let s = scenario_1d(&TWO_SPIKES, 4.0);
    let m = moments_from_masses(&s, n).unwrap();
    let fourier = MomentSet::from_json_str(&m.convert_side().to_json_string()).unwrap();
    let cfg = two_spike_config(n);
    let a = detect(&cfg, &m).unwrap();
    let b = detect(&cfg, &fourier).unwrap();
    let same = a == b && a.to_json_string() == b.to_json_string();
    outcome(same && fourier.side() == Side::Fourier, format!("fourier-side result identical: {same}"))
}

fn c9_two_d() -> Outcome {
    let n = 8;
    let region = Region::cube(2, -3.0, 3.0).unwrap();
    let spikes = [(vec![-1.7, 1.2], 1.0), (vec![1.4, 1.6], -0.9), (vec![0.3, -1.9], 0.7)];
    let masses = spikes.iter().map(|(x, a)| PointMass::real(x.clone(), *a).unwrap()).collect();
    let s = Scenario::new(2, masses, region.clone()).unwrap();
    let m = moments_from_masses(&s, n).unwrap();
    // 200 nodes per axis over [-3, 3]
    let cfg = DetectConfig::new(n, region, 6.0 / 199.0, Threshold::Relative(0.3));
    let start = Instant::now();
    let single = detect(&cfg.clone().with_workers(1), &m).unwrap();
    let elapsed = start.elapsed();
    let shape_ok = single.diagnostics.grid_shape == vec![200, 200];
    let same = [2, 4].iter().all(|&w| {
        let r = detect(&cfg.clone().with_workers(w), &m).unwrap();
        r == single && r.to_json_string() == single.to_json_string()
    });
    let pass = single.count() == 3 && shape_ok && elapsed < Duration::from_secs(60) && same;
    outcome(
        pass,
        format!(
            "L = {}, grid {:?}, single-threaded {:.2} s, identical at 1/2/4 workers: {same}",
            single.count(),
            single.diagnostics.grid_shape,
            elapsed.as_secs_f64()
        ),
    )
}

fn c10_grouping() -> Outcome {
    let n = 10;
    let region = Region::cube(2, -4.0, 4.0).unwrap();
    let blob = |cx: f64, cy: f64| vec![(vec![cx - 0.6, cy], 1.0), (vec![cx + 0.6, cy], 0.8), (vec![cx, cy + 1.0], 0.6)];
    let mut spikes = blob(-2.0, -0.5);
    spikes.extend(blob(2.0, -0.5));
    let masses = spikes.iter().map(|(x, a)| PointMass::real(x.clone(), *a).unwrap()).collect();
    let s = Scenario::new(2, masses, region.clone()).unwrap();
    let m = moments_from_masses(&s, n).unwrap();
    let cfg = DetectConfig::new(n, region, 0.1, Threshold::Relative(0.3));
    let r = detect(&cfg, &m).unwrap();
    let groups = group_spikes(&r.spikes, 2.0).unwrap();
    let total: usize = groups.iter().map(|g| g.stats.cardinality).sum();
    let sizes: Vec<usize> = groups.iter().map(|g| g.stats.cardinality).collect();
    outcome(
        total == r.count() && groups.len() == 2 && r.count() == 6,
        format!("L = {}, N = {} groups of sizes {sizes:?}, sum L_k = {total}", r.count(), groups.len()),
    )
}

type Criterion = (&'static str, fn() -> Outcome, u64);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("1 orthonormality", c1_orthonormality, 5),
        ("2 mehler identity", c2_mehler, 5),
        ("3 fourier invariance", c3_fourier, 30),
        ("4 kernel localization", c4_localization, 60),
        ("5 exact recovery", c5_exact_recovery, 10),
        ("6 convergence rate", c6_convergence, 60),
        ("7 noise robustness", c7_noise, 120),
        ("8 side equivalence", c8_side_equivalence, 10),
        ("9 2-d scale", c9_two_d, 60),
        ("10 grouping", c10_grouping, 5),
    ];
    let mut failures = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let o = run();
        let secs = start.elapsed().as_secs_f64();
        let in_time = secs < budget as f64;
        let pass = o.pass && in_time;
        if !pass {
            failures += 1;
        }
        println!(
            "[{}] {name}: {} ({secs:.2} s of {budget} s)",
            if pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} of 10 passed", 10 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
