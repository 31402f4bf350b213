//! Finite-sample deviations for the certification step and empirical
//! harnesses that check them by sampling.
//!
//! Two bounds are used. Chernoff-Hoeffding: the mean of `m` independent
//! `[0, 1]` variables deviates from its expectation by `δ` or more with
//! probability at most `exp(−2δ²m)`. Serfling, for sampling `k` of `n` values
//! in `[a, b]` without replacement: `exp(−2δ²kn / ((n−k+1)(b−a)))`. Only its
//! corollary for the two halves of a random split is harnessed here: for a
//! test subset of size `t` out of `n`, the test and remaining averages differ
//! by at least `√(n(t+1)/(2t²(n−t)) · ln(1/ε))` with probability at most `ε`.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{chsh_win_probability, ProtocolAngles};
use crate::chsh::{check_split, partition_indices, ChshGame};
use crate::error::{invalid, Result};
use crate::quantum::{check_finite, SourceModel};
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsParams {
    pub gamma: f64,
    pub n: u64,
    pub epsilon_chsh: f64,
    pub epsilon_qpq: f64,
}

impl BoundsParams {
    pub fn new(gamma: f64, n: u64, epsilon_chsh: f64, epsilon_qpq: f64) -> Result<Self> {
        for (name, v) in [("gamma", gamma), ("epsilon_chsh", epsilon_chsh), ("epsilon_qpq", epsilon_qpq)] {
            check_finite(name, v)?;
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid(format!("{name} = {v} outside (0, 1)")));
            }
        }
        let nf = n as f64;
        if gamma * nf < 1.0 || (1.0 - gamma) * nf < 1.0 {
            return Err(invalid(format!("gamma = {gamma}, n = {n} leave a set with fewer than one pair")));
        }
        Ok(BoundsParams { gamma, n, epsilon_chsh, epsilon_qpq })
    }

    fn test_size(&self) -> f64 {
        self.gamma * self.n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub gamma: f64,
    pub n: u64,
    pub epsilon_chsh: f64,
    pub epsilon_qpq: f64,
    pub delta: f64,
    pub nu: f64,
}

impl BoundsReport {
    pub fn new(params: &BoundsParams) -> Self {
        BoundsReport {
            gamma: params.gamma,
            n: params.n,
            epsilon_chsh: params.epsilon_chsh,
            epsilon_qpq: params.epsilon_qpq,
            delta: chernoff_delta(params),
            nu: serfling_nu(params),
        }
    }
}

/// Chernoff-Hoeffding tail `exp(−2δ²m)` for the mean of `m` variables.
pub fn chernoff_tail_bound(delta: f64, m: f64) -> f64 {
    (-2.0 * delta * delta * m).exp()
}

/// Deviation `δ = √(ln(1/ε_CHSH) / (2γn))` at which the Chernoff tail over
/// the `γn` test rounds equals `ε_CHSH`.
pub fn chernoff_delta(params: &BoundsParams) -> f64 {
    ((1.0 / params.epsilon_chsh).ln() / (2.0 * params.test_size())).sqrt()
}

/// Split-sample deviation for a test subset of size `t` out of `n`:
/// `√(n(t+1)/(2t²(n−t)) · ln(1/ε))`.
pub fn subset_deviation_bound(n: f64, t: f64, epsilon: f64) -> f64 {
    (n * (t + 1.0) / (2.0 * t * t * (n - t)) * (1.0 / epsilon).ln()).sqrt()
}

/// `ν = √((γn+1)/(2γ²(1−γ)n²) · ln(1/ε_QPQ))`, the split-sample deviation
/// with `t = γn`.
pub fn serfling_nu(params: &BoundsParams) -> f64 {
    let g = params.gamma;
    let n = params.n as f64;
    ((g * n + 1.0) / (2.0 * g * g * (1.0 - g) * n * n) * (1.0 / params.epsilon_qpq).ln()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub trials: u64,
    pub exceedances: u64,
    pub tail: f64,
    /// Threshold used (`δ` or `ν`).
    pub deviation: f64,
}

impl TailEstimate {
    fn new(trials: u64, exceedances: u64, deviation: f64) -> Self {
        TailEstimate {
            trials,
            exceedances,
            tail: exceedances as f64 / trials as f64,
            deviation,
        }
    }

    /// Binomial standard error of [`Self::tail`] were the true tail `p`.
    pub fn sigma_at(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// Runs `trials` independent CHSH campaigns of `rounds_per_trial` rounds and
/// returns the fraction whose win rate deviates from `expected` by at least
/// `delta`.
pub fn empirical_chernoff_tail(
    trials: usize,
    rounds_per_trial: usize,
    expected: f64,
    delta: f64,
    source: &SourceModel,
    angles: &ProtocolAngles,
    key: &StreamKey,
) -> Result<TailEstimate> {
    if trials < 1 || rounds_per_trial < 1 {
        return Err(invalid("need at least one trial and one round per trial"));
    }
    check_finite("expected", expected)?;
    check_finite("delta", delta)?;
    let game = ChshGame::new(source, angles);
    let exceed = (0..trials as u64)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = key.child(t).rng();
            let wins = (0..rounds_per_trial).filter(|_| game.play_round(&mut rng).win).count();
            let rate = wins as f64 / rounds_per_trial as f64;
            (rate - expected).abs() >= delta
        })
        .count();
    Ok(TailEstimate::new(trials as u64, exceed as u64, delta))
}

/// `|μ_test − μ_rest|` when the test subset of size `t` holds `test_ones` ones.
fn split_deviation(total_ones: usize, n: usize, test_ones: usize, t: usize) -> f64 {
    let mu_test = test_ones as f64 / t as f64;
    let mu_rest = (total_ones - test_ones) as f64 / (n - t) as f64;
    (mu_rest - mu_test).abs()
}

/// Repeatedly splits the fixed `win_flags` into a random test subset of size
/// `⌈γn⌉` and the rest, and returns the fraction of splits whose averages
/// differ by at least the split-sample deviation at `epsilon`.
pub fn empirical_partition_deviation(
    win_flags: &[bool],
    gamma: f64,
    epsilon: f64,
    trials: usize,
    key: &StreamKey,
) -> Result<TailEstimate> {
    let n = win_flags.len();
    let t = check_split(n, gamma)?;
    check_finite("epsilon", epsilon)?;
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(invalid(format!("epsilon = {epsilon} outside (0, 1]")));
    }
    if trials < 1 {
        return Err(invalid("need at least one trial"));
    }
    let nu = subset_deviation_bound(n as f64, t as f64, epsilon);
    let total_ones = win_flags.iter().filter(|&&w| w).count();
    let exceed = (0..trials as u64)
        .into_par_iter()
        .filter(|&trial| {
            let mut rng = key.child(trial).rng();
            let test_ones = index::sample(&mut rng, n, t).iter().filter(|&i| win_flags[i]).count();
            split_deviation(total_ones, n, test_ones, t) >= nu
        })
        .count();
    Ok(TailEstimate::new(trials as u64, exceed as u64, nu))
}

/// `exceeding / total` is a probability over all test subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactTail {
    pub exceeding: u128,
    pub total: u128,
}

impl ExactTail {
    pub fn probability(&self) -> f64 {
        self.exceeding as f64 / self.total as f64
    }
}

pub const MAX_EXACT_N: usize = 120;

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exact probability, over a uniformly random test subset of size
/// `test_size`, that the split averages of `win_flags` differ by at least
/// `deviation`. Counts subsets by how many ones they contain.
pub fn exact_partition_tail(win_flags: &[bool], test_size: usize, deviation: f64) -> Result<ExactTail> {
    let n = win_flags.len();
    if n > MAX_EXACT_N {
        return Err(invalid(format!("exact enumeration supports n <= {MAX_EXACT_N}, got {n}")));
    }
    if test_size < 1 || test_size >= n {
        return Err(invalid(format!("test size {test_size} must be in [1, {})", n)));
    }
    let ones = win_flags.iter().filter(|&&w| w).count();
    let zeros = n - ones;
    let exceeding = (0..=test_size.min(ones))
        .filter(|&s| test_size - s <= zeros)
        .filter(|&s| split_deviation(ones, n, s, test_size) >= deviation)
        .map(|s| binomial(ones, s) * binomial(zeros, test_size - s))
        .sum();
    Ok(ExactTail { exceeding, total: binomial(n, test_size) })
}

/// One sample of the transfer from test set to key set: all `n` pairs are
/// CHSH-measured (counterfactually, for the key set) and split at random.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferSample {
    pub expected: f64,
    pub test_win_rate: f64,
    pub key_set_win_rate: f64,
    pub delta: f64,
    pub nu: f64,
}

impl TransferSample {
    pub fn split_deviation(&self) -> f64 {
        (self.test_win_rate - self.key_set_win_rate).abs()
    }
}

pub fn counterfactual_transfer(
    params: &BoundsParams,
    source: &SourceModel,
    angles: &ProtocolAngles,
    key: &StreamKey,
) -> Result<TransferSample> {
    let n = usize::try_from(params.n).map_err(|_| invalid("n too large"))?;
    let partition = partition_indices(n, params.gamma, &mut key.child(0).rng())?;
    let game = ChshGame::new(source, angles);
    let mut rng = key.child(1).rng();
    let wins: Vec<bool> = (0..n).map(|_| game.play_round(&mut rng).win).collect();
    let rate = |idx: &[usize]| idx.iter().filter(|&&i| wins[i]).count() as f64 / idx.len() as f64;
    Ok(TransferSample {
        expected: chsh_win_probability(angles),
        test_win_rate: rate(&partition.chsh_indices),
        key_set_win_rate: rate(&partition.qpq_indices),
        delta: chernoff_delta(params),
        nu: serfling_nu(params),
    })
}
