//! Exact two-qubit pure states, single-qubit measurement bases and Born-rule
//! sampling.
//!
//! The first qubit of a [`TwoQubitState`] is the one Bob keeps (measured in
//! the computational or Hadamard basis); the second is the one that travels
//! to Alice or is measured in a `{ψ, ψ^⊥}` basis during the local CHSH test.
//! Amplitudes are stored in the order `00, 01, 10, 11` with the first qubit as
//! the high bit.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub type Amplitude = Complex64;

/// Tolerance for normalization and orthogonality of constructed objects.
pub const CONSTRUCTION_TOL: f64 = 1e-12;
/// Tolerance for sums of derived probabilities.
pub const PROBABILITY_TOL: f64 = 1e-10;
/// How far an angle may sit outside its nominal range. Rounded user input
/// such as `1.5708` for π/2 must still be accepted.
pub const ANGLE_RANGE_SLACK: f64 = 1e-4;

pub(crate) fn check_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite, got {value}")))
    }
}

pub(crate) fn check_angle(name: &str, value: f64, lo: f64, hi: f64) -> Result<()> {
    check_finite(name, value)?;
    if value < lo - ANGLE_RANGE_SLACK || value > hi + ANGLE_RANGE_SLACK {
        return Err(invalid(format!("{name} = {value} outside [{lo}, {hi}]")));
    }
    Ok(())
}

fn is_finite_amp(a: &Amplitude) -> bool {
    a.re.is_finite() && a.im.is_finite()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureQubit {
    amps: [Amplitude; 2],
}

impl PureQubit {
    pub fn new(amp0: Amplitude, amp1: Amplitude) -> Result<Self> {
        if !is_finite_amp(&amp0) || !is_finite_amp(&amp1) {
            return Err(invalid("qubit amplitudes must be finite"));
        }
        let norm = amp0.norm_sqr() + amp1.norm_sqr();
        if (norm - 1.0).abs() > CONSTRUCTION_TOL {
            return Err(invalid(format!("qubit not normalized: |a0|^2 + |a1|^2 = {norm}")));
        }
        Ok(PureQubit { amps: [amp0, amp1] })
    }

    fn real(a0: f64, a1: f64) -> Self {
        PureQubit {
            amps: [Amplitude::new(a0, 0.0), Amplitude::new(a1, 0.0)],
        }
    }

    pub fn zero() -> Self {
        Self::real(1.0, 0.0)
    }

    pub fn one() -> Self {
        Self::real(0.0, 1.0)
    }

    pub fn plus() -> Self {
        Self::real(FRAC_1_SQRT_2, FRAC_1_SQRT_2)
    }

    pub fn minus() -> Self {
        Self::real(FRAC_1_SQRT_2, -FRAC_1_SQRT_2)
    }

    /// `cos(angle/2)|0⟩ + sin(angle/2)|1⟩`.
    pub fn from_angle(angle: f64) -> Result<Self> {
        check_finite("angle", angle)?;
        let half = angle / 2.0;
        Ok(Self::real(half.cos(), half.sin()))
    }

    /// `sin(angle/2)|0⟩ − cos(angle/2)|1⟩`, the orthogonal complement of
    /// [`PureQubit::from_angle`].
    pub fn complement_from_angle(angle: f64) -> Result<Self> {
        check_finite("angle", angle)?;
        let half = angle / 2.0;
        Ok(Self::real(half.sin(), -half.cos()))
    }

    pub fn amp0(&self) -> Amplitude {
        self.amps[0]
    }

    pub fn amp1(&self) -> Amplitude {
        self.amps[1]
    }

    pub fn amplitudes(&self) -> [Amplitude; 2] {
        self.amps
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureQubit) -> Amplitude {
        self.amps[0].conj() * other.amps[0] + self.amps[1].conj() * other.amps[1]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps[0].norm_sqr() + self.amps[1].norm_sqr()
    }

    /// The same ray multiplied by `e^{i·phase}`.
    pub fn with_global_phase(&self, phase: f64) -> Self {
        let u = Amplitude::from_polar(1.0, phase);
        PureQubit {
            amps: [self.amps[0] * u, self.amps[1] * u],
        }
    }
}

pub fn qubit_from_angle(angle: f64) -> Result<PureQubit> {
    PureQubit::from_angle(angle)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisLabel {
    Computational,
    Hadamard,
    Phi0,
    Phi1,
    Psi1,
    Psi2,
    Custom(f64),
}

/// An orthonormal single-qubit measurement basis. Outcome bit 0 is `plus`,
/// outcome bit 1 is `minus`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementBasis {
    plus: PureQubit,
    minus: PureQubit,
    label: BasisLabel,
}

impl MeasurementBasis {
    pub fn new(plus: PureQubit, minus: PureQubit, label: BasisLabel) -> Result<Self> {
        let overlap = plus.inner(&minus).norm();
        if overlap > CONSTRUCTION_TOL {
            return Err(invalid(format!("basis elements not orthogonal: |<+|->| = {overlap}")));
        }
        Ok(MeasurementBasis { plus, minus, label })
    }

    pub fn computational() -> Self {
        MeasurementBasis {
            plus: PureQubit::zero(),
            minus: PureQubit::one(),
            label: BasisLabel::Computational,
        }
    }

    pub fn hadamard() -> Self {
        MeasurementBasis {
            plus: PureQubit::plus(),
            minus: PureQubit::minus(),
            label: BasisLabel::Hadamard,
        }
    }

    /// `{cos(a/2)|0⟩ + sin(a/2)|1⟩, sin(a/2)|0⟩ − cos(a/2)|1⟩}`.
    pub fn from_angle(angle: f64) -> Result<Self> {
        Ok(MeasurementBasis {
            plus: PureQubit::from_angle(angle)?,
            minus: PureQubit::complement_from_angle(angle)?,
            label: BasisLabel::Custom(angle),
        })
    }

    pub fn with_label(mut self, label: BasisLabel) -> Self {
        self.label = label;
        self
    }

    pub fn plus(&self) -> &PureQubit {
        &self.plus
    }

    pub fn minus(&self) -> &PureQubit {
        &self.minus
    }

    pub fn label(&self) -> BasisLabel {
        self.label
    }

    pub fn element(&self, bit: bool) -> &PureQubit {
        if bit {
            &self.minus
        } else {
            &self.plus
        }
    }
}

pub fn basis_from_angle(angle: f64) -> Result<MeasurementBasis> {
    MeasurementBasis::from_angle(angle)
}

/// A normalized pure state of two qubits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitState {
    amps: [Amplitude; 4],
}

impl TwoQubitState {
    pub fn new(amps: [Amplitude; 4]) -> Result<Self> {
        if !amps.iter().all(is_finite_amp) {
            return Err(invalid("state amplitudes must be finite"));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > CONSTRUCTION_TOL {
            return Err(invalid(format!("state not normalized: sum |a|^2 = {norm}")));
        }
        Ok(TwoQubitState { amps })
    }

    pub fn product(first: &PureQubit, second: &PureQubit) -> Self {
        let [a0, a1] = first.amps;
        let [b0, b1] = second.amps;
        TwoQubitState {
            amps: [a0 * b0, a0 * b1, a1 * b0, a1 * b1],
        }
    }

    pub fn amplitudes(&self) -> &[Amplitude; 4] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `(⟨e| ⊗ I)|state⟩`, the unnormalized state left on the second qubit.
    fn project_first(&self, e: &PureQubit) -> [Amplitude; 2] {
        let c0 = e.amps[0].conj();
        let c1 = e.amps[1].conj();
        [
            c0 * self.amps[0] + c1 * self.amps[2],
            c0 * self.amps[1] + c1 * self.amps[3],
        ]
    }

    /// Born-rule probabilities `p(u, v) = |⟨e_u ⊗ f_v|state⟩|²`, indexed
    /// `2·u + v`.
    pub fn joint_probabilities(
        &self,
        first: &MeasurementBasis,
        second: &MeasurementBasis,
    ) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (u, e) in [first.plus(), first.minus()].into_iter().enumerate() {
            let rest = self.project_first(e);
            for (v, f) in [second.plus(), second.minus()].into_iter().enumerate() {
                let amp = f.amps[0].conj() * rest[0] + f.amps[1].conj() * rest[1];
                out[2 * u + v] = amp.norm_sqr();
            }
        }
        out
    }

    /// Samples both outcomes at once from [`Self::joint_probabilities`].
    pub fn measure_pair<R: Rng + ?Sized>(
        &self,
        first: &MeasurementBasis,
        second: &MeasurementBasis,
        rng: &mut R,
    ) -> (bool, bool) {
        let probs = self.joint_probabilities(first, second);
        let idx = sample_index(&probs, rng.random::<f64>());
        (idx & 2 != 0, idx & 1 != 0)
    }

    /// Measures only the first qubit and returns the outcome together with
    /// the collapsed state of the second qubit.
    pub fn measure_first<R: Rng + ?Sized>(
        &self,
        basis: &MeasurementBasis,
        rng: &mut R,
    ) -> (bool, PureQubit) {
        let rest0 = self.project_first(basis.plus());
        let p0 = rest0[0].norm_sqr() + rest0[1].norm_sqr();
        let bit = rng.random::<f64>() >= p0;
        let rest = if bit {
            self.project_first(basis.minus())
        } else {
            rest0
        };
        let norm = (rest[0].norm_sqr() + rest[1].norm_sqr()).sqrt();
        let post = PureQubit {
            amps: [rest[0] / norm, rest[1] / norm],
        };
        (bit, post)
    }
}

/// Born-rule outcome probabilities of a single qubit in `basis`.
pub fn qubit_probabilities(qubit: &PureQubit, basis: &MeasurementBasis) -> [f64; 2] {
    [
        basis.plus().inner(qubit).norm_sqr(),
        basis.minus().inner(qubit).norm_sqr(),
    ]
}

/// Samples a single-qubit measurement outcome.
pub fn measure_qubit<R: Rng + ?Sized>(qubit: &PureQubit, basis: &MeasurementBasis, rng: &mut R) -> bool {
    let p = qubit_probabilities(qubit, basis);
    rng.random::<f64>() >= p[0] / (p[0] + p[1])
}

/// Inverse-CDF draw over a finite distribution. Rounding slack in the tail
/// falls on the last index with non-zero mass.
fn sample_index(probs: &[f64], u: f64) -> usize {
    let total: f64 = probs.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last = i;
        }
        acc += p;
        if target < acc && p > 0.0 {
            return i;
        }
    }
    last
}

pub fn joint_outcome_probabilities(
    state: &TwoQubitState,
    first: &MeasurementBasis,
    second: &MeasurementBasis,
) -> [f64; 4] {
    state.joint_probabilities(first, second)
}

pub fn measure_pair<R: Rng + ?Sized>(
    state: &TwoQubitState,
    first: &MeasurementBasis,
    second: &MeasurementBasis,
    rng: &mut R,
) -> (bool, bool) {
    state.measure_pair(first, second, rng)
}

/// An entangled-pair source emitting `α|0⟩|φ₀⟩ + β|1⟩|φ₁⟩` with
/// `|α|² = ½ + ε`, `|β|² = ½ − ε` and `|φ₀⟩, |φ₁⟩` at angles `±θ`.
/// `ε = 0` is the balanced state the protocol expects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    theta: f64,
    epsilon: f64,
}

impl SourceModel {
    pub fn new(theta: f64, epsilon: f64) -> Result<Self> {
        check_angle("theta", theta, 0.0, std::f64::consts::FRAC_PI_2)?;
        check_finite("epsilon", epsilon)?;
        if epsilon <= -0.5 || epsilon >= 0.5 {
            return Err(invalid(format!("source bias epsilon = {epsilon} outside (-1/2, 1/2)")));
        }
        Ok(SourceModel { theta, epsilon })
    }

    pub fn honest(theta: f64) -> Result<Self> {
        Self::new(theta, 0.0)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn alpha(&self) -> f64 {
        (0.5 + self.epsilon).sqrt()
    }

    pub fn beta(&self) -> f64 {
        (0.5 - self.epsilon).sqrt()
    }

    /// `|φ₀⟩ = cos(θ/2)|0⟩ + sin(θ/2)|1⟩`.
    pub fn phi0(&self) -> PureQubit {
        PureQubit::real((self.theta / 2.0).cos(), (self.theta / 2.0).sin())
    }

    /// `|φ₁⟩ = cos(θ/2)|0⟩ − sin(θ/2)|1⟩`.
    pub fn phi1(&self) -> PureQubit {
        PureQubit::real((self.theta / 2.0).cos(), -(self.theta / 2.0).sin())
    }

    pub fn phi0_basis(&self) -> MeasurementBasis {
        MeasurementBasis::from_angle(self.theta)
            .expect("theta validated")
            .with_label(BasisLabel::Phi0)
    }

    pub fn phi1_basis(&self) -> MeasurementBasis {
        MeasurementBasis::from_angle(-self.theta)
            .expect("theta validated")
            .with_label(BasisLabel::Phi1)
    }

    pub fn state(&self) -> TwoQubitState {
        let (a, b) = (self.alpha(), self.beta());
        let p0 = self.phi0().amps;
        let p1 = self.phi1().amps;
        TwoQubitState {
            amps: [p0[0] * a, p0[1] * a, p1[0] * b, p1[1] * b],
        }
    }
}

pub fn entangled_source_state(source: &SourceModel) -> TwoQubitState {
    source.state()
}
