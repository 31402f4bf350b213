//! Closed-form probabilities of the protocol.
//!
//! These are the analytic oracles every Monte Carlo estimate in the crate is
//! checked against, and the data behind the win-probability curves.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quantum::{check_angle, check_finite};

/// θ of the source and the angles ψ₁, ψ₂ of Bob's two second-particle bases
/// in the local CHSH test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolAngles {
    theta: f64,
    psi1: f64,
    psi2: f64,
}

impl ProtocolAngles {
    pub fn new(theta: f64, psi1: f64, psi2: f64) -> Result<Self> {
        check_angle("theta", theta, 0.0, FRAC_PI_2)?;
        check_angle("psi1", psi1, 0.0, PI)?;
        check_angle("psi2", psi2, 0.0, PI)?;
        Ok(ProtocolAngles { theta, psi1, psi2 })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn psi1(&self) -> f64 {
        self.psi1
    }

    pub fn psi2(&self) -> f64 {
        self.psi2
    }

    /// ψ for the second-particle basis selected by input `y`.
    pub fn psi(&self, y: bool) -> f64 {
        if y {
            self.psi2
        } else {
            self.psi1
        }
    }
}

/// `(x, y, a, b) ↦ 8x + 4y + 2a + b`.
pub fn cell_index(x: bool, y: bool, a: bool, b: bool) -> usize {
    8 * x as usize + 4 * y as usize + 2 * a as usize + b as usize
}

/// The CHSH winning condition `a ⊕ b = x ∧ y`.
pub fn is_winning(x: bool, y: bool, a: bool, b: bool) -> bool {
    (a ^ b) == (x & y)
}

/// All sixteen `(x, y, a, b)` cells in index order.
pub fn all_cells() -> impl Iterator<Item = (bool, bool, bool, bool)> {
    (0..16usize).map(|i| (i & 8 != 0, i & 4 != 0, i & 2 != 0, i & 1 != 0))
}

/// `Pr[(a, b) | (x, y)]` on the balanced source, for all sixteen cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalTable {
    entries: [f64; 16],
}

impl ConditionalTable {
    pub fn get(&self, x: bool, y: bool, a: bool, b: bool) -> f64 {
        self.entries[cell_index(x, y, a, b)]
    }

    pub fn entries(&self) -> &[f64; 16] {
        &self.entries
    }

    /// CSV with header `x,y,a,b,probability`, probabilities to 12 decimals.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y,a,b,probability")?;
        for (x, y, a, b) in all_cells() {
            writeln!(
                out,
                "{},{},{},{},{:.12}",
                x as u8,
                y as u8,
                a as u8,
                b as u8,
                self.get(x, y, a, b)
            )?;
        }
        Ok(())
    }
}

pub fn conditional_table(angles: &ProtocolAngles) -> ConditionalTable {
    let t = angles.theta;
    let (ct2, st2) = ((t / 2.0).cos().powi(2), (t / 2.0).sin().powi(2));
    let mut entries = [0.0; 16];
    for y in [false, true] {
        let psi = angles.psi(y);
        let (cp2, sp2) = ((psi / 2.0).cos().powi(2), (psi / 2.0).sin().powi(2));
        let minus = (t - psi) / 2.0;
        let plus = (t + psi) / 2.0;
        // x = 0: Bob's first particle in {|0⟩, |1⟩}
        entries[cell_index(false, y, false, false)] = 0.5 * minus.cos().powi(2);
        entries[cell_index(false, y, false, true)] = 0.5 * minus.sin().powi(2);
        entries[cell_index(false, y, true, false)] = 0.5 * plus.cos().powi(2);
        entries[cell_index(false, y, true, true)] = 0.5 * plus.sin().powi(2);
        // x = 1: first particle in {|+⟩, |−⟩}
        entries[cell_index(true, y, false, false)] = ct2 * cp2;
        entries[cell_index(true, y, false, true)] = ct2 * sp2;
        entries[cell_index(true, y, true, false)] = st2 * sp2;
        entries[cell_index(true, y, true, true)] = st2 * cp2;
    }
    ConditionalTable { entries }
}

/// Expected probability of winning the local CHSH game on the balanced
/// source:
///
/// `(1/8)[sin θ (sin ψ₁ + sin ψ₂) + cos ψ₁ − cos ψ₂] + 1/2`.
///
/// The same expression is Bob's abort threshold: a test campaign whose win
/// rate falls below it (less any statistical slack) rejects the source.
pub fn chsh_win_probability(angles: &ProtocolAngles) -> f64 {
    let ProtocolAngles { theta, psi1, psi2 } = *angles;
    (theta.sin() * (psi1.sin() + psi2.sin()) + psi1.cos() - psi2.cos()) / 8.0 + 0.5
}

/// Probability that honest Alice learns a raw key bit: `sin²θ / 2`.
pub fn honest_success_probability(theta: f64) -> f64 {
    theta.sin().powi(2) / 2.0
}

/// Success probability of Alice biasing her basis choice by `epsilon` against
/// a source skewed by the same `epsilon`: `(1/2 + 2ε²) sin²θ`.
pub fn biased_success_probability(theta: f64, epsilon: f64) -> f64 {
    (0.5 + 2.0 * epsilon * epsilon) * theta.sin().powi(2)
}

/// Success probability of a basis bias `bias` against a source skewed by
/// `source_epsilon`. Reduces to [`biased_success_probability`] when the two
/// match and to [`honest_success_probability`] when the source is balanced.
pub fn strategy_success_probability(theta: f64, source_epsilon: f64, bias: f64) -> f64 {
    // Bob's bit 0 (prob ½+ε_s) is learned only via the φ₁ basis (prob ½+b),
    // bit 1 only via the φ₀ basis (prob ½−b); either way with prob sin²θ.
    ((0.5 + source_epsilon) * (0.5 + bias) + (0.5 - source_epsilon) * (0.5 - bias)) * theta.sin().powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub theta: f64,
    pub win_probability: f64,
}

/// `n` uniformly spaced θ values covering `[0, π/2]` inclusive.
pub fn uniform_theta_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n).map(|i| FRAC_PI_2 * i as f64 / (n - 1) as f64).collect(),
    }
}

pub const DEFAULT_GRID_POINTS: usize = 256;

/// The CHSH win probability as a function of θ for fixed `(ψ₁, ψ₂)`.
pub fn figure1_curve(psi1: f64, psi2: f64, theta_grid: &[f64]) -> Result<Vec<CurvePoint>> {
    if theta_grid.is_empty() {
        return Err(invalid("theta grid is empty"));
    }
    theta_grid
        .iter()
        .map(|&theta| {
            check_finite("theta", theta)?;
            let angles = ProtocolAngles::new(theta, psi1, psi2)?;
            Ok(CurvePoint {
                theta,
                win_probability: chsh_win_probability(&angles),
            })
        })
        .collect()
}

/// CSV with header `theta,win_probability`, six decimals per value.
pub fn write_curve_csv<W: Write>(points: &[CurvePoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "theta,win_probability")?;
    for p in points {
        writeln!(out, "{:.6},{:.6}", p.theta, p.win_probability)?;
    }
    Ok(())
}
