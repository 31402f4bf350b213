//! Key generation, key dilution and the shift-and-encrypt private query,
//! plus the full protocol run (CHSH certification followed by the query).
//!
//! In key generation Bob measures his qubit in `{|0⟩,|1⟩}` to obtain a raw
//! key bit. Alice measures hers in `{|φ₀⟩,|φ₀^⊥⟩}` or `{|φ₁⟩,|φ₁^⊥⟩}`. An
//! orthogonal outcome is conclusive: `φ₀^⊥` rules out Bob's bit 0, `φ₁^⊥`
//! rules out bit 1.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::ProtocolAngles;
use crate::bits::Bits;
use crate::chsh::{check_split, partition_indices, run_local_test, ChshTestResult, Partition};
use crate::error::{invalid, Result};
use crate::quantum::{check_finite, MeasurementBasis, SourceModel};
use crate::rng::{chunks, StreamKey};

/// How Alice picks her basis. A biased Alice uses `{φ₁}` with probability
/// `½ + ε` and `{φ₀}` with probability `½ − ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AliceStrategy {
    Honest,
    Biased { basis_bias_epsilon: f64 },
}

impl AliceStrategy {
    pub fn biased(epsilon: f64) -> Result<Self> {
        check_finite("basis bias", epsilon)?;
        if epsilon <= -0.5 || epsilon >= 0.5 {
            return Err(invalid(format!("basis bias {epsilon} outside (-1/2, 1/2)")));
        }
        Ok(if epsilon == 0.0 {
            AliceStrategy::Honest
        } else {
            AliceStrategy::Biased { basis_bias_epsilon: epsilon }
        })
    }

    pub fn basis_bias(&self) -> f64 {
        match self {
            AliceStrategy::Honest => 0.0,
            AliceStrategy::Biased { basis_bias_epsilon } => *basis_bias_epsilon,
        }
    }

    pub fn phi1_probability(&self) -> f64 {
        0.5 + self.basis_bias()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AliceBasis {
    Phi0,
    Phi1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawKeyRecord {
    pub bob_bit: bool,
    pub alice_basis: AliceBasis,
    pub alice_outcome_orthogonal: bool,
    pub alice_guess: Option<bool>,
}

impl RawKeyRecord {
    pub fn new(bob_bit: bool, alice_basis: AliceBasis, alice_outcome_orthogonal: bool) -> Self {
        let alice_guess = alice_outcome_orthogonal.then_some(match alice_basis {
            AliceBasis::Phi0 => true,
            AliceBasis::Phi1 => false,
        });
        RawKeyRecord { bob_bit, alice_basis, alice_outcome_orthogonal, alice_guess }
    }

    pub fn is_correct(&self) -> bool {
        self.alice_guess == Some(self.bob_bit)
    }
}

/// Source-dependent pieces of a key-generation round, built once per run.
#[derive(Debug, Clone)]
struct KeygenSetup {
    state: crate::quantum::TwoQubitState,
    bob: MeasurementBasis,
    phi0: MeasurementBasis,
    phi1: MeasurementBasis,
    phi1_probability: f64,
}

impl KeygenSetup {
    fn new(source: &SourceModel, strategy: &AliceStrategy) -> Self {
        KeygenSetup {
            state: source.state(),
            bob: MeasurementBasis::computational(),
            phi0: source.phi0_basis(),
            phi1: source.phi1_basis(),
            phi1_probability: strategy.phi1_probability(),
        }
    }

    fn round<R: Rng + ?Sized>(&self, rng: &mut R) -> RawKeyRecord {
        let basis = if rng.random_bool(self.phi1_probability) {
            AliceBasis::Phi1
        } else {
            AliceBasis::Phi0
        };
        let alice = match basis {
            AliceBasis::Phi0 => &self.phi0,
            AliceBasis::Phi1 => &self.phi1,
        };
        let (bob_bit, orthogonal) = self.state.measure_pair(&self.bob, alice, rng);
        RawKeyRecord::new(bob_bit, basis, orthogonal)
    }
}

pub fn keygen_round<R: Rng + ?Sized>(
    source: &SourceModel,
    strategy: &AliceStrategy,
    rng: &mut R,
) -> RawKeyRecord {
    KeygenSetup::new(source, strategy).round(rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyGenResult {
    pub bob_raw_key: Bits,
    /// Alice's conclusive guess per surviving position.
    pub alice_knowledge: Vec<Option<bool>>,
    pub conclusive_count: u64,
    pub correct_count: u64,
    pub lost_count: u64,
    #[serde(skip)]
    pub records: Vec<RawKeyRecord>,
}

impl KeyGenResult {
    pub fn len(&self) -> usize {
        self.bob_raw_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bob_raw_key.is_empty()
    }

    /// Fraction of surviving rounds where Alice's guess was conclusive and
    /// correct.
    pub fn success_rate(&self) -> f64 {
        self.correct_count as f64 / self.len() as f64
    }

    pub fn summary(&self) -> KeyGenSummary {
        KeyGenSummary {
            raw_key_length: self.len() as u64,
            conclusive_count: self.conclusive_count,
            correct_count: self.correct_count,
            lost_count: self.lost_count,
            success_rate: if self.is_empty() { 0.0 } else { self.success_rate() },
        }
    }

    pub fn dilute(&self, k: usize) -> Result<DilutedKey> {
        dilute_key(self, k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyGenSummary {
    pub raw_key_length: u64,
    pub conclusive_count: u64,
    pub correct_count: u64,
    pub lost_count: u64,
    pub success_rate: f64,
}

/// Runs `rounds` key-generation rounds. Each pair is independently lost in
/// transit with `loss_probability`; lost pairs are discarded before anyone
/// measures.
pub fn run_keygen(
    rounds: usize,
    loss_probability: f64,
    source: &SourceModel,
    strategy: &AliceStrategy,
    key: &StreamKey,
) -> Result<KeyGenResult> {
    if rounds < 1 {
        return Err(invalid("key generation needs at least one round"));
    }
    check_finite("loss probability", loss_probability)?;
    if !(0.0..1.0).contains(&loss_probability) {
        return Err(invalid(format!("loss probability {loss_probability} outside [0, 1)")));
    }
    let setup = KeygenSetup::new(source, strategy);

    let parts: Vec<(Vec<RawKeyRecord>, u64)> = chunks(rounds)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = key.child(c).rng();
            let mut kept = Vec::with_capacity(len);
            let mut lost = 0;
            for _ in 0..len {
                if loss_probability > 0.0 && rng.random_bool(loss_probability) {
                    lost += 1;
                    continue;
                }
                kept.push(setup.round(&mut rng));
            }
            (kept, lost)
        })
        .collect();

    let mut records = Vec::with_capacity(rounds);
    let mut lost_count = 0;
    for (kept, lost) in parts {
        records.extend(kept);
        lost_count += lost;
    }
    let bob_raw_key: Bits = records.iter().map(|r| r.bob_bit).collect();
    let alice_knowledge: Vec<Option<bool>> = records.iter().map(|r| r.alice_guess).collect();
    let conclusive_count = records.iter().filter(|r| r.alice_guess.is_some()).count() as u64;
    let correct_count = records.iter().filter(|r| r.is_correct()).count() as u64;
    Ok(KeyGenResult {
        bob_raw_key,
        alice_knowledge,
        conclusive_count,
        correct_count,
        lost_count,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilutedKey {
    pub bob_key: Bits,
    pub alice_knowledge: Vec<Option<bool>>,
}

impl DilutedKey {
    pub fn len(&self) -> usize {
        self.bob_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bob_key.is_empty()
    }

    pub fn known_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.alice_knowledge[i].is_some()).collect()
    }
}

/// Shrinks Alice's knowledge by block XOR: the raw key is cut into `k`
/// blocks of `N = ⌊len/k⌋` bits (the remainder is dropped) and final bit `t`
/// is the XOR of bit `t` of every block. Alice knows a final bit only if she
/// knew all `k` raw bits feeding it.
pub fn dilute_key(result: &KeyGenResult, k: usize) -> Result<DilutedKey> {
    dilute_bits(&result.bob_raw_key, &result.alice_knowledge, k)
}

pub fn dilute_bits(raw: &Bits, knowledge: &[Option<bool>], k: usize) -> Result<DilutedKey> {
    if raw.len() != knowledge.len() {
        return Err(invalid("raw key and knowledge mask lengths differ"));
    }
    if k < 1 || k > raw.len() {
        return Err(invalid(format!("dilution factor k = {k} not in [1, {}]", raw.len())));
    }
    let n = raw.len() / k;
    let raw = raw.as_slice();
    let mut bob_key = Vec::with_capacity(n);
    let mut alice_knowledge = Vec::with_capacity(n);
    for t in 0..n {
        let positions = (0..k).map(|block| block * n + t);
        bob_key.push(positions.clone().fold(false, |acc, p| acc ^ raw[p]));
        alice_knowledge.push(
            positions
                .map(|p| knowledge[p])
                .try_fold(false, |acc, bit| bit.map(|b| acc ^ b)),
        );
    }
    Ok(DilutedKey { bob_key: Bits(bob_key), alice_knowledge })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTranscript {
    pub database_size: usize,
    pub target_index: usize,
    pub known_key_index: usize,
    pub announced_shift: i64,
    pub shifted_key: Bits,
    pub ciphertext: Bits,
    pub recovered_bit: bool,
}

/// One private query. Alice, knowing final key bit `j` with value
/// `alice_value` and wanting entry `i`, announces `s = j − i`; Bob encrypts
/// the database with `K₀[t] = K[(t + s) mod N]`, so `K₀[i] = K[j]`.
pub fn private_query(
    database: &Bits,
    final_key: &Bits,
    (known_key_index, alice_value): (usize, bool),
    target_index: usize,
) -> Result<QueryTranscript> {
    let n = database.len();
    if n == 0 {
        return Err(invalid("database is empty"));
    }
    if final_key.len() != n {
        return Err(invalid(format!(
            "key length {} does not match database length {n}",
            final_key.len()
        )));
    }
    if known_key_index >= n || target_index >= n {
        return Err(invalid(format!(
            "query indices (i = {target_index}, j = {known_key_index}) out of range for N = {n}"
        )));
    }
    let announced_shift = known_key_index as i64 - target_index as i64;
    let shift = announced_shift.rem_euclid(n as i64) as usize;
    let shifted_key: Bits = (0..n).map(|t| final_key.as_slice()[(t + shift) % n]).collect();
    let ciphertext = database.xor(&shifted_key);
    let recovered_bit = ciphertext.as_slice()[target_index] ^ alice_value;
    Ok(QueryTranscript {
        database_size: n,
        target_index,
        known_key_index,
        announced_shift,
        shifted_key,
        ciphertext,
        recovered_bit,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub n: usize,
    pub gamma: f64,
    pub source: SourceModel,
    pub angles: ProtocolAngles,
    pub strategy: AliceStrategy,
    pub k: usize,
    pub loss_probability: f64,
    pub slack_delta: f64,
}

impl ProtocolConfig {
    /// Length of the diluted key when no pair is lost.
    pub fn max_final_key_length(&self) -> Result<usize> {
        let t = check_split(self.n, self.gamma)?;
        Ok((self.n - t) / self.k.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncompleteReason {
    /// Fewer final key bits survived than database entries.
    KeyTooShort,
    /// Alice does not know any final key bit.
    NoKnownBit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ProtocolOutcome {
    Aborted {
        test_set_size: usize,
        key_set_size: usize,
        chsh: ChshTestResult,
    },
    Incomplete {
        test_set_size: usize,
        key_set_size: usize,
        chsh: ChshTestResult,
        keygen: KeyGenSummary,
        final_key_length: usize,
        alice_known_final_bits: usize,
        reason: IncompleteReason,
    },
    Completed {
        test_set_size: usize,
        key_set_size: usize,
        chsh: ChshTestResult,
        keygen: KeyGenSummary,
        final_key_length: usize,
        alice_known_final_bits: usize,
        alice_bit_correct: bool,
        query: QueryTranscript,
    },
}

impl ProtocolOutcome {
    pub fn is_aborted(&self) -> bool {
        matches!(self, ProtocolOutcome::Aborted { .. })
    }

    pub fn chsh(&self) -> &ChshTestResult {
        match self {
            ProtocolOutcome::Aborted { chsh, .. }
            | ProtocolOutcome::Incomplete { chsh, .. }
            | ProtocolOutcome::Completed { chsh, .. } => chsh,
        }
    }
}

/// Runs the whole protocol: partition the `n` pairs, certify the source with
/// the local CHSH test on the test set, and if it passes generate, dilute and
/// use the key for one private query of a uniformly random database entry.
///
/// The final key is truncated to the database length. Substreams: `key.child(0)`
/// partitions, `child(1)` drives the CHSH test, `child(2)` key generation and
/// `child(3)` the query choices.
pub fn run_full_protocol(config: &ProtocolConfig, database: &Bits, key: &StreamKey) -> Result<ProtocolOutcome> {
    if config.k < 1 {
        return Err(invalid("dilution factor k must be at least 1"));
    }
    let max_len = config.max_final_key_length()?;
    if database.is_empty() || database.len() > max_len {
        return Err(invalid(format!(
            "database length {} must be in [1, {max_len}] for n = {}, gamma = {}, k = {}",
            database.len(),
            config.n,
            config.gamma,
            config.k
        )));
    }

    let Partition { chsh_indices, qpq_indices } =
        partition_indices(config.n, config.gamma, &mut key.child(0).rng())?;
    let (test_set_size, key_set_size) = (chsh_indices.len(), qpq_indices.len());

    let chsh = run_local_test(
        test_set_size,
        &config.source,
        &config.angles,
        config.slack_delta,
        &key.child(1),
    )?;
    if chsh.aborted {
        return Ok(ProtocolOutcome::Aborted { test_set_size, key_set_size, chsh });
    }

    let keygen = run_keygen(
        key_set_size,
        config.loss_probability,
        &config.source,
        &config.strategy,
        &key.child(2),
    )?;
    let summary = keygen.summary();
    let n_db = database.len();
    let diluted = if keygen.len() >= config.k {
        Some(keygen.dilute(config.k)?)
    } else {
        None
    };
    let final_key_length = diluted.as_ref().map_or(0, DilutedKey::len);
    if final_key_length < n_db {
        return Ok(ProtocolOutcome::Incomplete {
            test_set_size,
            key_set_size,
            chsh,
            keygen: summary,
            final_key_length,
            alice_known_final_bits: diluted.as_ref().map_or(0, |d| d.known_positions().len()),
            reason: IncompleteReason::KeyTooShort,
        });
    }
    let diluted = diluted.expect("final key is non-empty");
    let bob_key: Bits = diluted.bob_key.as_slice()[..n_db].iter().copied().collect();
    let known: Vec<usize> = (0..n_db).filter(|&i| diluted.alice_knowledge[i].is_some()).collect();
    if known.is_empty() {
        return Ok(ProtocolOutcome::Incomplete {
            test_set_size,
            key_set_size,
            chsh,
            keygen: summary,
            final_key_length: n_db,
            alice_known_final_bits: 0,
            reason: IncompleteReason::NoKnownBit,
        });
    }

    let mut rng = key.child(3).rng();
    let target = rng.random_range(0..n_db);
    let j = known[rng.random_range(0..known.len())];
    let alice_value = diluted.alice_knowledge[j].expect("position is known");
    let query = private_query(database, &bob_key, (j, alice_value), target)?;
    Ok(ProtocolOutcome::Completed {
        test_set_size,
        key_set_size,
        chsh,
        keygen: summary,
        final_key_length: n_db,
        alice_known_final_bits: known.len(),
        alice_bit_correct: alice_value == bob_key.as_slice()[j],
        query,
    })
}
