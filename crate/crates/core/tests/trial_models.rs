use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use trialoc_core::design::ParamPoint;
use trialoc_core::rng;
use trialoc_core::trial_models::{
    binary_posterior_pi, po_posterior_pi, sampling_distribution, simulate_ordinal_trial, BinaryData,
    BinarySpec, OrdinalData, OrdinalSpec, PriorSpec, Theta, TrialConfig,
};

const BASE: [f64; 4] = [0.75, 0.22, 0.01, 0.02];

#[test]
fn ordinal_counts_sum_per_arm_and_follow_p() {
    let spec = OrdinalSpec::new(BASE, 0.75).unwrap();
    let mut cfg = TrialConfig::ordinal(1);
    cfg.n_total = 2_000_000;
    let data = simulate_ordinal_trial(&spec, &cfg, &mut rng::stream(1, &[0])).unwrap();
    assert_eq!(data.counts[0].iter().sum::<u32>(), 1_000_000);
    assert_eq!(data.counts[1].iter().sum::<u32>(), 1_000_000);
    for k in 0..4 {
        let f = f64::from(data.counts[0][k]) / 1e6;
        let se = (BASE[k] * (1.0 - BASE[k]) / 1e6).sqrt();
        assert!((f - BASE[k]).abs() < 3.0 * se, "level {k}: {f}");
    }
    // treatment tail P(Y >= 2) = 0.2 at OR = 0.75
    let tail = 1.0 - f64::from(data.counts[1][0]) / 1e6;
    assert!((tail - 0.2).abs() < 3.0 * (0.16f64 / 1e6).sqrt());
}

#[test]
fn null_odds_ratio_gives_identical_arm_distributions() {
    let spec = OrdinalSpec::new(BASE, 1.0).unwrap();
    let mut cfg = TrialConfig::ordinal(2);
    cfg.n_total = 400_000;
    let data = simulate_ordinal_trial(&spec, &cfg, &mut rng::stream(2, &[0])).unwrap();
    for k in 0..4 {
        let diff = f64::from(data.counts[0][k]) - f64::from(data.counts[1][k]);
        let sd = (2.0 * 200_000.0 * BASE[k] * (1.0 - BASE[k])).sqrt();
        assert!(diff.abs() < 4.0 * sd);
    }
}

#[test]
fn po_symmetric_data_gives_half() {
    let data = OrdinalData {
        counts: [[375, 110, 5, 10], [375, 110, 5, 10]],
    };
    let cfg = TrialConfig::ordinal(3);
    let post = po_posterior_pi(&data, &cfg, &mut rng::stream(3, &[0])).unwrap();
    assert!((post.pi - 0.5).abs() < 0.05, "pi = {}", post.pi);
    assert!(!post.warning, "acceptance {}", post.acceptance_rate);
}

#[test]
fn po_overwhelming_benefit() {
    let data = OrdinalData {
        counts: [[0, 0, 0, 500], [500, 0, 0, 0]],
    };
    let cfg = TrialConfig::ordinal(4);
    let post = po_posterior_pi(&data, &cfg, &mut rng::stream(4, &[0])).unwrap();
    assert!(post.pi > 0.999, "pi = {}", post.pi);
}

#[test]
fn po_label_swap_reflects_pi() {
    let data = OrdinalData {
        counts: [[370, 115, 5, 10], [390, 98, 4, 8]],
    };
    let swapped = OrdinalData {
        counts: [data.counts[1], data.counts[0]],
    };
    let cfg = TrialConfig::ordinal(5);
    let a = po_posterior_pi(&data, &cfg, &mut rng::stream(5, &[0])).unwrap().pi;
    let b = po_posterior_pi(&swapped, &cfg, &mut rng::stream(5, &[1])).unwrap().pi;
    assert!((a + b - 1.0).abs() < 0.08, "{a} + {b}");
}

#[test]
fn po_pi_tracks_wald_approximation() {
    // All patients sit in levels 1-2 except a few, so the PO fit is close to
    // the binary collapse "level >= 2"; its Wald posterior gives π ≈ Φ(-β̂/se).
    let data = OrdinalData {
        counts: [[375, 125, 0, 0], [400, 100, 0, 0]],
    };
    let cfg = TrialConfig::ordinal(6);
    let pi = po_posterior_pi(&data, &cfg, &mut rng::stream(6, &[0])).unwrap().pi;
    let log_or = ((100.0f64 / 400.0) / (125.0 / 375.0)).ln();
    let se = (1.0f64 / 100.0 + 1.0 / 400.0 + 1.0 / 125.0 + 1.0 / 375.0).sqrt();
    let wald = 0.5 * libm::erfc(log_or / se / std::f64::consts::SQRT_2);
    assert!((pi - wald).abs() < 0.03, "pi {pi} vs wald {wald}");
}

#[test]
fn beta_binomial_conjugacy_mean() {
    // prior Beta(1,1), 3 of 10 → Beta(4, 8); check the posterior mean of the
    // control draws via a one-arm comparison against a point mass.
    let prior = PriorSpec::default();
    let data = BinaryData { y0: 3, n0: 10, y1: 3, n1: 10 };
    let d = 40_000;
    let pi = binary_posterior_pi(&data, &prior, d, &mut rng::stream(7, &[0])).unwrap();
    assert!((pi - 0.5).abs() < 3.0 * (0.25 / d as f64).sqrt());
}

#[test]
fn beta_binomial_strong_effect_matches_brute_force() {
    let prior = PriorSpec::default();
    let data = BinaryData { y0: 350, n0: 500, y1: 250, n1: 500 };
    let pi = binary_posterior_pi(&data, &prior, 4000, &mut rng::stream(8, &[0])).unwrap();
    // Oracle: 10^6 draws through gamma ratios.
    let mut r = ChaCha8Rng::seed_from_u64(99);
    let g = |a: f64| Gamma::new(a, 1.0).unwrap();
    let (a0, b0, a1, b1) = (g(351.0), g(151.0), g(251.0), g(251.0));
    let n = 1_000_000;
    let mut below = 0;
    for _ in 0..n {
        let (x0, z0) = (a0.sample(&mut r), b0.sample(&mut r));
        let (x1, z1) = (a1.sample(&mut r), b1.sample(&mut r));
        // odds = x/z for r = x/(x+z)
        if (x1 / z1) / (x0 / z0) < 1.0 {
            below += 1;
        }
    }
    let oracle = below as f64 / n as f64;
    assert!(oracle > 0.99 && pi > 0.99, "oracle {oracle}, pi {pi}");
}

// Independent Monte Carlo of P(π > u): Bernoulli sums for the data and
// gamma ratios for the posterior draws.
fn exceedance_oracle(p0: f64, or: f64, n_arm: u32, draws: usize, reps: usize, u: f64, seed: u64) -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let p1 = {
        let odds = p0 / (1.0 - p0) * or;
        odds / (1.0 + odds)
    };
    let mut hits = 0;
    for _ in 0..reps {
        let y0 = (0..n_arm).filter(|_| r.random::<f64>() < p0).count() as f64;
        let y1 = (0..n_arm).filter(|_| r.random::<f64>() < p1).count() as f64;
        let n = f64::from(n_arm);
        let g = |a: f64| Gamma::new(a, 1.0).unwrap();
        let (a0, b0, a1, b1) = (g(1.0 + y0), g(1.0 + n - y0), g(1.0 + y1), g(1.0 + n - y1));
        let mut below = 0;
        for _ in 0..draws {
            let o0 = a0.sample(&mut r) / b0.sample(&mut r);
            let o1 = a1.sample(&mut r) / b1.sample(&mut r);
            if o1 < o0 {
                below += 1;
            }
        }
        if below as f64 / draws as f64 > u {
            hits += 1;
        }
    }
    hits as f64 / reps as f64
}

#[test]
fn binary_exceedance_matches_independent_oracle() {
    let theta = Theta::Binary(BinarySpec::new(0.45, 0.75).unwrap());
    let mut cfg = TrialConfig::binary(10);
    cfg.replicates = 1000;
    let sample = sampling_distribution(&theta, 0, &cfg).unwrap();
    assert_eq!(sample.draws.len(), 1000);
    let phi = sample.draws.iter().filter(|&&v| v > 0.95).count() as f64 / 1000.0;
    let oracle = exceedance_oracle(0.45, 0.75, 250, 4000, 4000, 0.95, 123);
    let tol = 3.0 * (oracle * (1.0 - oracle) / 1000.0).sqrt();
    assert!((phi - oracle).abs() < tol, "phi {phi} oracle {oracle} tol {tol}");
}

#[test]
fn binary_null_exceedance_near_five_percent() {
    let theta = Theta::Binary(BinarySpec::new(0.5, 1.0).unwrap());
    let mut cfg = TrialConfig::binary(11);
    cfg.replicates = 2000;
    let s = sampling_distribution(&theta, 0, &cfg).unwrap();
    let phi = s.draws.iter().filter(|&&v| v > 0.95).count() as f64 / 2000.0;
    assert!((phi - 0.05).abs() < 3.0 * (0.05f64 * 0.95 / 2000.0).sqrt(), "phi {phi}");
}

#[test]
fn sampling_distribution_is_reproducible_and_single_replicate_works() {
    let theta = Theta::Ordinal(ParamPoint::new(BASE, 0.8).unwrap());
    let mut cfg = TrialConfig::ordinal(12);
    cfg.replicates = 3;
    let a = sampling_distribution(&theta, 4, &cfg).unwrap();
    let b = sampling_distribution(&theta, 4, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.draws.iter().all(|v| (0.0..=1.0).contains(v)));
    cfg.replicates = 1;
    assert_eq!(sampling_distribution(&theta, 4, &cfg).unwrap().draws.len(), 1);
}

#[test]
fn invalid_config_rejected() {
    let theta = Theta::Binary(BinarySpec::new(0.5, 1.0).unwrap());
    let mut cfg = TrialConfig::binary(0);
    cfg.posterior_draws = 10;
    assert!(sampling_distribution(&theta, 0, &cfg).is_err());
}
