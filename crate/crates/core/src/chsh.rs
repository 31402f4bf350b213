//! The local CHSH certification game Bob plays on his test subset.
//!
//! Per round Bob draws inputs `x, y` uniformly, measures the first particle
//! in `{|0⟩,|1⟩}` (x = 0) or `{|+⟩,|−⟩}` (x = 1) and the second in
//! `{|ψ₁⟩,|ψ₁^⊥⟩}` (y = 0) or `{|ψ₂⟩,|ψ₂^⊥⟩}` (y = 1). Outcome bits are 0 for
//! `|0⟩, |+⟩, |ψ₁⟩, |ψ₂⟩` and 1 for their complements. The round is won when
//! `a ⊕ b = x ∧ y`.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{cell_index, chsh_win_probability, is_winning, ProtocolAngles};
use crate::error::{invalid, Result};
use crate::quantum::{check_finite, BasisLabel, MeasurementBasis, SourceModel, TwoQubitState};
use crate::rng::{chunks, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChshRecord {
    pub x: bool,
    pub y: bool,
    pub a: bool,
    pub b: bool,
    pub win: bool,
}

impl ChshRecord {
    pub fn new(x: bool, y: bool, a: bool, b: bool) -> Self {
        ChshRecord { x, y, a, b, win: is_winning(x, y, a, b) }
    }
}

/// Split of pair indices `0..n` into Bob's test set and the key-generation
/// set. Both lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub chsh_indices: Vec<usize>,
    pub qpq_indices: Vec<usize>,
}

/// `⌈γn⌉`. A relative slack absorbs representation error so that, e.g.,
/// γ = 0.3, n = 10 gives 3 rather than 4.
pub fn test_set_size(n: usize, gamma: f64) -> usize {
    let raw = gamma * n as f64;
    (raw - 1e-9 * raw.abs().max(1.0)).ceil().max(0.0) as usize
}

pub(crate) fn check_split(n: usize, gamma: f64) -> Result<usize> {
    check_finite("gamma", gamma)?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid(format!("gamma = {gamma} outside (0, 1)")));
    }
    if n < 2 {
        return Err(invalid(format!("need at least 2 pairs, got {n}")));
    }
    let t = test_set_size(n, gamma);
    if t < 1 || t >= n {
        return Err(invalid(format!(
            "gamma = {gamma} with n = {n} leaves an empty set (test set size {t})"
        )));
    }
    Ok(t)
}

/// Draws a uniformly random test subset of size `⌈γn⌉`.
pub fn partition_indices<R: Rng + ?Sized>(n: usize, gamma: f64, rng: &mut R) -> Result<Partition> {
    let t = check_split(n, gamma)?;
    let mut chsh_indices = index::sample(rng, n, t).into_vec();
    chsh_indices.sort_unstable();
    let mut in_test = vec![false; n];
    for &i in &chsh_indices {
        in_test[i] = true;
    }
    let qpq_indices = (0..n).filter(|&i| !in_test[i]).collect();
    Ok(Partition { chsh_indices, qpq_indices })
}

/// The source state and the four measurement bases, fixed for a campaign.
#[derive(Debug, Clone)]
pub struct ChshGame {
    state: TwoQubitState,
    first: [MeasurementBasis; 2],
    second: [MeasurementBasis; 2],
    threshold: f64,
}

impl ChshGame {
    pub fn new(source: &SourceModel, angles: &ProtocolAngles) -> Self {
        let second = |psi: f64, label| {
            MeasurementBasis::from_angle(psi)
                .expect("angles validated")
                .with_label(label)
        };
        ChshGame {
            state: source.state(),
            first: [MeasurementBasis::computational(), MeasurementBasis::hadamard()],
            second: [
                second(angles.psi1(), BasisLabel::Psi1),
                second(angles.psi2(), BasisLabel::Psi2),
            ],
            threshold: chsh_win_probability(angles),
        }
    }

    /// The abort threshold, equal to the expected win probability on the
    /// balanced source.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn play_round<R: Rng + ?Sized>(&self, rng: &mut R) -> ChshRecord {
        let x = rng.random_bool(0.5);
        let y = rng.random_bool(0.5);
        let (a, b) = self
            .state
            .measure_pair(&self.first[x as usize], &self.second[y as usize], rng);
        ChshRecord::new(x, y, a, b)
    }
}

pub fn play_round<R: Rng + ?Sized>(source: &SourceModel, angles: &ProtocolAngles, rng: &mut R) -> ChshRecord {
    ChshGame::new(source, angles).play_round(rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshTestResult {
    pub rounds: u64,
    pub wins: u64,
    pub win_rate: f64,
    pub threshold: f64,
    pub slack_delta: f64,
    pub aborted: bool,
    /// Round counts per `(x, y, a, b)` cell, indexed by
    /// [`analytics::cell_index`](crate::analytics::cell_index).
    #[serde(skip)]
    pub cell_counts: [u64; 16],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub records: Option<Vec<ChshRecord>>,
}

impl ChshTestResult {
    /// Empirical `Pr[(a, b) | (x, y)]`; `None` when `(x, y)` never occurred.
    pub fn conditional_frequency(&self, x: bool, y: bool, a: bool, b: bool) -> Option<f64> {
        let base = cell_index(x, y, false, false);
        let total: u64 = self.cell_counts[base..base + 4].iter().sum();
        (total > 0).then(|| self.cell_counts[cell_index(x, y, a, b)] as f64 / total as f64)
    }

    pub fn input_count(&self, x: bool, y: bool) -> u64 {
        let base = cell_index(x, y, false, false);
        self.cell_counts[base..base + 4].iter().sum()
    }
}

struct Tally {
    counts: [u64; 16],
    records: Option<Vec<ChshRecord>>,
}

fn run_campaign(
    n_test: usize,
    game: &ChshGame,
    slack_delta: f64,
    key: &StreamKey,
    keep_records: bool,
) -> Result<ChshTestResult> {
    if n_test < 1 {
        return Err(invalid("local test needs at least one round"));
    }
    check_finite("slack_delta", slack_delta)?;
    if slack_delta < 0.0 {
        return Err(invalid(format!("slack_delta = {slack_delta} is negative")));
    }

    let tallies: Vec<Tally> = chunks(n_test)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = key.child(c).rng();
            let mut counts = [0u64; 16];
            let mut records = keep_records.then(|| Vec::with_capacity(len));
            for _ in 0..len {
                let r = game.play_round(&mut rng);
                counts[cell_index(r.x, r.y, r.a, r.b)] += 1;
                if let Some(rs) = records.as_mut() {
                    rs.push(r);
                }
            }
            Tally { counts, records }
        })
        .collect();

    let mut cell_counts = [0u64; 16];
    let mut records = keep_records.then(|| Vec::with_capacity(n_test));
    for t in tallies {
        for (acc, c) in cell_counts.iter_mut().zip(t.counts) {
            *acc += c;
        }
        if let (Some(all), Some(part)) = (records.as_mut(), t.records) {
            all.extend(part);
        }
    }
    let wins: u64 = crate::analytics::all_cells()
        .filter(|&(x, y, a, b)| is_winning(x, y, a, b))
        .map(|(x, y, a, b)| cell_counts[cell_index(x, y, a, b)])
        .sum();
    let rounds = n_test as u64;
    let win_rate = wins as f64 / rounds as f64;
    let threshold = game.threshold();
    Ok(ChshTestResult {
        rounds,
        wins,
        win_rate,
        threshold,
        slack_delta,
        aborted: win_rate < threshold - slack_delta,
        cell_counts,
        records,
    })
}

/// Plays `n_test` rounds and decides whether Bob aborts. The threshold is
/// the expected win probability at `angles`; `slack_delta = 0` compares
/// against it literally, a Chernoff deviation tolerates honest fluctuation.
pub fn run_local_test(
    n_test: usize,
    source: &SourceModel,
    angles: &ProtocolAngles,
    slack_delta: f64,
    key: &StreamKey,
) -> Result<ChshTestResult> {
    run_campaign(n_test, &ChshGame::new(source, angles), slack_delta, key, false)
}

/// [`run_local_test`] that also keeps every round.
pub fn run_local_test_recorded(
    n_test: usize,
    source: &SourceModel,
    angles: &ProtocolAngles,
    slack_delta: f64,
    key: &StreamKey,
) -> Result<ChshTestResult> {
    run_campaign(n_test, &ChshGame::new(source, angles), slack_delta, key, true)
}
