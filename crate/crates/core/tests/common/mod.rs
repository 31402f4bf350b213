#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn sigma(p: f64, n: f64) -> f64 {
    (p * (1.0 - p) / n).sqrt()
}

/// `|measured − p| ≤ k·σ` with σ the binomial standard error at `p`.
pub fn within_sigmas(measured: f64, p: f64, n: f64, k: f64) -> bool {
    (measured - p).abs() <= k * sigma(p, n)
}

/// Pearson chi-square goodness-of-fit p-value; cells with zero expected mass
/// must also be empty.
pub fn chi_square_p_value(observed: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut dof = 0usize;
    for (&o, &p) in observed.iter().zip(probs) {
        let e = p * total as f64;
        if e < 1e-9 {
            assert_eq!(o, 0, "observed {o} in a cell with zero probability");
            continue;
        }
        stat += (o as f64 - e).powi(2) / e;
        dof += 1;
    }
    if dof <= 1 {
        return 1.0;
    }
    1.0 - ChiSquared::new((dof - 1) as f64).unwrap().cdf(stat)
}
