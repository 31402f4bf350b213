//! Angle arguments: raw radians (`0.7854`) or multiples of π (`pi`, `3pi/4`,
//! `-pi/2`, `3*pi/16`, `π/8`).

use std::f64::consts::PI;

pub fn parse_angle(input: &str) -> Result<f64, String> {
    let text: String = input
        .trim()
        .to_ascii_lowercase()
        .replace('π', "pi")
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect();
    let value = match text.find("pi") {
        None => text.parse::<f64>().map_err(|e| format!("bad angle {input:?}: {e}"))?,
        Some(pos) => {
            let coef = text[..pos].trim_end_matches('*');
            let coef = match coef {
                "" | "+" => 1.0,
                "-" => -1.0,
                c => c.parse::<f64>().map_err(|e| format!("bad coefficient in {input:?}: {e}"))?,
            };
            let rest = &text[pos + 2..];
            let denom = if rest.is_empty() {
                1.0
            } else {
                rest.strip_prefix('/')
                    .ok_or_else(|| format!("bad angle {input:?}: expected '/' after pi"))?
                    .parse::<f64>()
                    .map_err(|e| format!("bad denominator in {input:?}: {e}"))?
            };
            if denom == 0.0 {
                return Err(format!("bad angle {input:?}: zero denominator"));
            }
            coef * PI / denom
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("angle {input:?} is not finite"))
    }
}

/// `psi1:psi2` pairs separated by commas.
pub fn parse_pairs(input: &str) -> Result<Vec<(f64, f64)>, String> {
    input
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (a, b) = pair
                .split_once(':')
                .ok_or_else(|| format!("expected psi1:psi2, got {pair:?}"))?;
            Ok((parse_angle(a)?, parse_angle(b)?))
        })
        .collect()
}
