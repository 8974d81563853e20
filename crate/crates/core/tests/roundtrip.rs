mod common;

use impulsive_noise::baselines::{generate_bg_labeled, BgMemoryParams};
use impulsive_noise::chain::{build_chain, generate, ChainConfig, StatesPerSystem, SystemConfig};
use impulsive_noise::detect::{detect_impulses, ThresholdRule};
use impulsive_noise::fit::{fit_chain, FitOptions};

const N: usize = 10_000_000;

#[test]
fn detection_matches_the_true_state_path() {
    let chain = build_chain(common::detectable_config()).unwrap();
    let (trace, path) = generate(&chain, N, 11);
    let truth = path.impulses();
    let detected = detect_impulses(&trace, ThresholdRule::default()).unwrap();
    let n_true = truth.len() as f64;
    let n_det = detected.events.len() as f64;
    assert!(
        (n_det - n_true).abs() <= 0.1 * n_true,
        "{n_det} vs {n_true}"
    );

    // Group-1 impulses open on a half-amplitude state below the threshold, so
    // a detected start may lag by up to one loop.
    let starts: Vec<usize> = detected.events.iter().map(|e| e.start).collect();
    let matched = truth
        .iter()
        .filter(|t| {
            let i = starts.partition_point(|&s| s < t.start);
            starts.get(i).is_some_and(|&s| s - t.start <= 6)
        })
        .count() as f64;
    assert!(
        matched >= 0.95 * n_true,
        "{matched} of {n_true} starts matched"
    );

    let true_fraction = path.impulsive_count() as f64 / N as f64;
    let f = detected.impulse_sample_fraction();
    assert!(
        (f - true_fraction).abs() <= 0.1 * true_fraction,
        "{f} vs {true_fraction}"
    );
}

#[test]
fn fit_recovers_the_generating_config() {
    let truth = common::detectable_config();
    let chain = build_chain(truth.clone()).unwrap();
    let (trace, path) = generate(&chain, N, 3);
    let report = fit_chain(&trace, &FitOptions::default()).unwrap();
    let fitted = &report.config;

    assert!(
        report.diagnostics.warnings.is_empty(),
        "{:?}",
        report.diagnostics.warnings
    );
    assert!((fitted.stay_prob - truth.stay_prob).abs() <= 0.02);
    assert!((fitted.background_variance - 1.0).abs() < 0.05);

    let background = (N - path.impulsive_count()) as f64;
    for i in 0..3 {
        let (t, f) = (&truth.systems[i], &fitted.systems[i]);
        assert!(
            (f.amplitude_mean - t.amplitude_mean).abs() <= 0.1 * t.amplitude_mean,
            "system {}: mean {} vs {}",
            i + 1,
            f.amplitude_mean,
            t.amplitude_mean
        );
        assert!(
            (f.exit_prob - t.exit_prob).abs() <= 0.3 * t.exit_prob,
            "system {}: exit {} vs {}",
            i + 1,
            f.exit_prob,
            t.exit_prob
        );
        let p = truth.entry_probs[i];
        let se = (p * (1.0 - p) / background).sqrt();
        assert!(
            (fitted.entry_probs[i] - p).abs() <= 3.0 * se,
            "group {}: entry {} vs {p} (se {se})",
            i + 1,
            fitted.entry_probs[i]
        );
    }

    // An impulse entering system i runs through systems i, ..., 1.
    let mut expected = 0.0;
    for (i, g) in report.groups.iter().enumerate() {
        expected += 1.0 / truth.systems[i].exit_prob;
        assert!(
            (g.mean_duration - expected).abs() <= 0.15 * expected,
            "group {}: duration {} vs {expected}",
            g.group,
            g.mean_duration
        );
    }
}

#[test]
fn four_state_fit_round_trip() {
    let mut truth = common::detectable_config();
    truth.states_per_system = StatesPerSystem::Four;
    // 0.24 cycles per sample with four states.
    truth.stay_prob = 1.0 - 4.0 * 0.24;
    let (trace, _) = generate(&build_chain(truth.clone()).unwrap(), N, 8);
    let options = FitOptions {
        states_per_system: StatesPerSystem::Four,
        ..FitOptions::default()
    };
    let fitted = fit_chain(&trace, &options).unwrap().config;
    assert_eq!(fitted.states_per_system, StatesPerSystem::Four);
    assert!(
        (fitted.stay_prob - truth.stay_prob).abs() <= 0.02,
        "{}",
        fitted.stay_prob
    );
}

#[test]
fn two_state_baseline_matches_a_single_system_chain() {
    // Entering only system 1, leaving it with probability q, gives the same
    // impulse-occupancy law as the two-state chain with impulse stay 1 - q.
    let (entry, q) = (2e-4, 0.04);
    let config = ChainConfig {
        states_per_system: StatesPerSystem::Six,
        background_variance: 1.0,
        stay_prob: 0.1,
        entry_probs: [entry, 0.0, 0.0],
        sampling_rate_hz: 1.0,
        systems: [10.0, 20.0, 30.0].map(|m| SystemConfig {
            amplitude_mean: m,
            amplitude_variance: 1.0,
            exit_prob: q,
        }),
    };
    let chain = build_chain(config).unwrap();
    let bg = BgMemoryParams {
        background_stay_prob: 1.0 - entry,
        impulse_stay_prob: 1.0 - q,
        background_variance: 1.0,
        impulse_variance: 100.0,
        sampling_rate_hz: 1.0,
    };
    let analytic = chain.impulse_sample_fraction();
    assert!((analytic - bg.stationary_impulse_fraction()).abs() < 1e-12 * analytic.max(1.0));

    let (_, path) = generate(&chain, N, 21);
    let (_, labels) = generate_bg_labeled(&bg, N, 22).unwrap();
    let chain_frac = path.impulsive_count() as f64 / N as f64;
    let bg_frac = labels.iter().filter(|&&l| l).count() as f64 / N as f64;
    // Impulse runs average 25 samples: ~2000 runs, relative sd ~2.2%.
    for f in [chain_frac, bg_frac] {
        assert!((f - analytic).abs() < 0.08 * analytic, "{f} vs {analytic}");
    }
}
