//! Self-check suite: simulation against closed forms at a chosen scale.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::{
    all_cells, biased_success_probability, chsh_win_probability, conditional_table, honest_success_probability,
    strategy_success_probability, ProtocolAngles,
};
use crate::bounds::{
    chernoff_delta, chernoff_tail_bound, counterfactual_transfer, empirical_chernoff_tail,
    empirical_partition_deviation, serfling_nu, BoundsParams,
};
use crate::chsh::run_local_test;
use crate::error::Result;
use crate::qpq::{run_keygen, AliceStrategy};
use crate::quantum::{basis_from_angle, MeasurementBasis, SourceModel};
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// Rounds per Monte Carlo estimate.
    pub rounds: usize,
    pub seed: u64,
    /// Width of the acceptance band in binomial standard errors.
    pub sigmas: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { rounds: 200_000, seed: 0, sigmas: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// `|measured − expected| ≤ tolerance`
    TwoSided,
    /// `measured ≤ expected + tolerance`
    UpperBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub kind: CheckKind,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn two_sided(name: impl Into<String>, measured: f64, expected: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            kind: CheckKind::TwoSided,
            measured,
            expected,
            tolerance,
            passed: (measured - expected).abs() <= tolerance,
        }
    }

    fn upper_bound(name: impl Into<String>, measured: f64, bound: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            kind: CheckKind::UpperBound,
            measured,
            expected: bound,
            tolerance,
            passed: measured <= bound + tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub config: VerifyConfig,
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn binomial_sigma(p: f64, n: f64) -> f64 {
    (p * (1.0 - p) / n).sqrt()
}

pub fn run_verification(config: &VerifyConfig) -> Result<VerifyReport> {
    let root = StreamKey::new(config.seed);
    let n = config.rounds.max(1);
    let nf = n as f64;
    let k = config.sigmas;
    let mut checks = Vec::new();

    let standard = ProtocolAngles::new(FRAC_PI_2, FRAC_PI_4, 3.0 * FRAC_PI_4)?;
    let honest_pi2 = SourceModel::honest(FRAC_PI_2)?;

    // Born rule against the closed-form table on a few random angle triples.
    let mut rng = root.child(0).rng();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let a = ProtocolAngles::new(rng.random_range(0.0..FRAC_PI_2), rng.random_range(0.0..PI), rng.random_range(0.0..PI))?;
        let table = conditional_table(&a);
        let state = SourceModel::honest(a.theta())?.state();
        for x in [false, true] {
            let first = if x { MeasurementBasis::hadamard() } else { MeasurementBasis::computational() };
            for y in [false, true] {
                let p = state.joint_probabilities(&first, &basis_from_angle(a.psi(y))?);
                for (i, &v) in p.iter().enumerate() {
                    worst = worst.max((v - table.entries()[8 * x as usize + 4 * y as usize + i]).abs());
                }
            }
        }
    }
    checks.push(Check::upper_bound("table_vs_born_rule_max_error", worst, 0.0, 1e-10));

    // CHSH win rate and the sixteen conditional frequencies.
    let chsh = run_local_test(n, &honest_pi2, &standard, 0.0, &root.child(1))?;
    let p = chsh_win_probability(&standard);
    checks.push(Check::two_sided("chsh_win_rate", chsh.win_rate, p, k * binomial_sigma(p, nf)));
    let table = conditional_table(&standard);
    for (x, y, a, b) in all_cells() {
        let q = table.get(x, y, a, b);
        let m = chsh.input_count(x, y) as f64;
        checks.push(Check::two_sided(
            format!("table1_x{}y{}a{}b{}", x as u8, y as u8, a as u8, b as u8),
            chsh.conditional_frequency(x, y, a, b).unwrap_or(f64::NAN),
            q,
            k * binomial_sigma(q, m),
        ));
    }

    // Raw-key success rates.
    for (i, theta) in [FRAC_PI_8, FRAC_PI_4, 3.0 * FRAC_PI_8, FRAC_PI_2].into_iter().enumerate() {
        let r = run_keygen(n, 0.0, &SourceModel::honest(theta)?, &AliceStrategy::Honest, &root.child(10 + i as u64))?;
        let q = honest_success_probability(theta);
        checks.push(Check::two_sided(format!("honest_success_theta_{theta:.4}"), r.success_rate(), q, k * binomial_sigma(q, nf)));
        checks.push(Check::upper_bound(
            format!("incorrect_conclusive_theta_{theta:.4}"),
            (r.conclusive_count - r.correct_count) as f64,
            0.0,
            0.0,
        ));
    }
    for (i, eps) in [0.1, 0.25, 0.4].into_iter().enumerate() {
        let strategy = AliceStrategy::biased(eps)?;
        let skewed = SourceModel::new(FRAC_PI_2, eps)?;
        let r = run_keygen(n, 0.0, &skewed, &strategy, &root.child(20 + i as u64))?;
        let q = biased_success_probability(FRAC_PI_2, eps);
        checks.push(Check::two_sided(format!("attack_skewed_source_eps_{eps}"), r.success_rate(), q, k * binomial_sigma(q, nf)));

        let r = run_keygen(n, 0.0, &honest_pi2, &strategy, &root.child(30 + i as u64))?;
        let q = strategy_success_probability(FRAC_PI_2, 0.0, eps);
        checks.push(Check::two_sided(format!("attack_honest_source_eps_{eps}"), r.success_rate(), q, k * binomial_sigma(q, nf)));
    }

    // Concentration bounds.
    let trials = (n / 200).clamp(100, 2_000);
    let delta = 0.05;
    let tail = empirical_chernoff_tail(trials, 1_000, p, delta, &honest_pi2, &standard, &root.child(40))?;
    let bound = chernoff_tail_bound(delta, 1_000.0);
    checks.push(Check::upper_bound("chernoff_tail_rounds_1000_delta_0.05", tail.tail, bound, k * tail.sigma_at(bound)));

    let mut rng = root.child(41).rng();
    let flags: Vec<bool> = (0..1_000).map(|_| rng.random_bool(0.85)).collect();
    let tail = empirical_partition_deviation(&flags, 0.5, 0.01, trials * 5, &root.child(42))?;
    checks.push(Check::upper_bound("split_tail_n_1000_eps_0.01", tail.tail, 0.01, k * tail.sigma_at(0.01)));

    let params = BoundsParams::new(0.5, 2_000, 1e-3, 1e-2)?;
    let mut exceed = 0usize;
    let transfer_trials = (n / 1_000).clamp(50, 500);
    for t in 0..transfer_trials {
        let s = counterfactual_transfer(&params, &honest_pi2, &standard, &root.child(43).child(t as u64))?;
        if s.split_deviation() >= s.nu {
            exceed += 1;
        }
    }
    let frac = exceed as f64 / transfer_trials as f64;
    checks.push(Check::upper_bound(
        "transfer_test_to_key_set_tail",
        frac,
        params.epsilon_qpq,
        k * binomial_sigma(params.epsilon_qpq, transfer_trials as f64),
    ));

    let at = |n: u64| BoundsParams::new(0.5, n, 1e-6, 1e-6).map(|p| (chernoff_delta(&p), serfling_nu(&p)));
    let (d8, nu8) = at(100_000_000)?;
    checks.push(Check::upper_bound("delta_at_n_1e8", d8, 1e-3, 0.0));
    checks.push(Check::upper_bound("nu_at_n_1e8", nu8, 1e-3, 0.0));

    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { config: *config, passed, checks })
}
