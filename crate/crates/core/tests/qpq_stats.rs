mod common;

use std::f64::consts::FRAC_PI_2;

use diqpq::analytics::{biased_success_probability, honest_success_probability};
use diqpq::qpq::{run_keygen, AliceStrategy};
use diqpq::quantum::SourceModel;
use diqpq::StreamKey;
use rand::Rng;

use common::{sigma, within_sigmas};

#[test]
fn conclusive_guesses_are_always_correct() {
    let mut params = StreamKey::new(20).rng();
    let key = StreamKey::new(21);
    let mut conclusive = 0;
    for t in 0..10 {
        let theta = params.random_range(0.0..=FRAC_PI_2);
        let eps = params.random_range(-0.49..0.49);
        let bias = params.random_range(-0.49..0.49);
        let r = run_keygen(
            100_000,
            0.0,
            &SourceModel::new(theta, eps).unwrap(),
            &AliceStrategy::biased(bias).unwrap(),
            &key.child(t),
        )
        .unwrap();
        assert_eq!(r.conclusive_count, r.correct_count, "θ={theta} ε={eps} bias={bias}");
        conclusive += r.conclusive_count;
    }
    assert!(conclusive > 100_000);
}

#[test]
fn honest_rate_on_theta_grid() {
    let key = StreamKey::new(22);
    let n = 1_000_000;
    for i in 0..9 {
        let theta = FRAC_PI_2 * i as f64 / 8.0;
        let r = run_keygen(n, 0.0, &SourceModel::honest(theta).unwrap(), &AliceStrategy::Honest, &key.child(i)).unwrap();
        let p = honest_success_probability(theta);
        if p == 0.0 {
            assert_eq!(r.conclusive_count, 0);
        } else {
            assert!(within_sigmas(r.success_rate(), p, n as f64, 3.0), "θ={theta}: {} vs {p}", r.success_rate());
        }
    }
}

#[test]
fn biased_basis_gains_nothing_on_honest_source() {
    let key = StreamKey::new(23);
    let n = 1_000_000;
    for (i, theta) in [FRAC_PI_2, 1.0].into_iter().enumerate() {
        for (j, eps) in [0.1, 0.25, 0.4].into_iter().enumerate() {
            let r = run_keygen(
                n,
                0.0,
                &SourceModel::honest(theta).unwrap(),
                &AliceStrategy::biased(eps).unwrap(),
                &key.child(10 * i as u64 + j as u64),
            )
            .unwrap();
            let p = honest_success_probability(theta);
            assert!(within_sigmas(r.success_rate(), p, n as f64, 3.0), "θ={theta} ε={eps}");
        }
    }
}

#[test]
fn attack_on_skewed_source() {
    let key = StreamKey::new(24);
    let n = 1_000_000;
    for (i, theta) in [FRAC_PI_2, 1.0].into_iter().enumerate() {
        for (j, eps) in [0.1, 0.25, 0.4].into_iter().enumerate() {
            let r = run_keygen(
                n,
                0.0,
                &SourceModel::new(theta, eps).unwrap(),
                &AliceStrategy::biased(eps).unwrap(),
                &key.child(10 * i as u64 + j as u64),
            )
            .unwrap();
            let p = biased_success_probability(theta, eps);
            assert!(within_sigmas(r.success_rate(), p, n as f64, 3.0), "θ={theta} ε={eps}");
        }
    }
}

#[test]
fn loss_thins_the_key_binomially() {
    let source = SourceModel::honest(FRAC_PI_2).unwrap();
    let n = 100_000;
    let r = run_keygen(n, 0.3, &source, &AliceStrategy::Honest, &StreamKey::new(25)).unwrap();
    assert_eq!(r.len() as u64 + r.lost_count, n as u64);
    let kept = r.len() as f64 / n as f64;
    assert!(within_sigmas(kept, 0.7, n as f64, 3.0), "{kept}");

    let none = run_keygen(n, 0.0, &source, &AliceStrategy::Honest, &StreamKey::new(25)).unwrap();
    assert_eq!(none.len(), n);
}

#[test]
fn loss_does_not_bias_surviving_rounds() {
    let source = SourceModel::honest(FRAC_PI_2).unwrap();
    let n = 400_000;
    let lossy = run_keygen(n, 0.5, &source, &AliceStrategy::Honest, &StreamKey::new(26)).unwrap();
    let clean = run_keygen(n, 0.0, &source, &AliceStrategy::Honest, &StreamKey::new(27)).unwrap();
    let rate = |r: &diqpq::qpq::KeyGenResult| r.conclusive_count as f64 / r.len() as f64;
    let diff_sigma = (sigma(0.5, lossy.len() as f64).powi(2) + sigma(0.5, clean.len() as f64).powi(2)).sqrt();
    assert!((rate(&lossy) - rate(&clean)).abs() <= 3.0 * diff_sigma);
}

#[test]
fn dilution_leaves_alice_about_one_bit_in_two_to_the_k() {
    let k = 4;
    let final_len = 10_000;
    let r = run_keygen(
        k * final_len,
        0.0,
        &SourceModel::honest(FRAC_PI_2).unwrap(),
        &AliceStrategy::Honest,
        &StreamKey::new(28),
    )
    .unwrap();
    let d = r.dilute(k).unwrap();
    assert_eq!(d.len(), final_len);
    let p = 0.5f64.powi(k as i32);
    let known = d.known_positions().len() as f64;
    assert!((known - 625.0).abs() <= 3.0 * (final_len as f64 * p * (1.0 - p)).sqrt(), "{known}");
    for t in d.known_positions() {
        assert_eq!(d.alice_knowledge[t], Some(d.bob_key.as_slice()[t]));
    }
}

#[test]
fn bob_key_is_unbiased() {
    let n = 1_000_000;
    let r = run_keygen(n, 0.0, &SourceModel::honest(1.2).unwrap(), &AliceStrategy::Honest, &StreamKey::new(29)).unwrap();
    let ones = r.bob_raw_key.count_ones() as f64 / n as f64;
    assert!(within_sigmas(ones, 0.5, n as f64, 3.0), "{ones}");
}
