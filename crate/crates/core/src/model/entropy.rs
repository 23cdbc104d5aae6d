//! Normalized Shannon entropy of a transition row.

use super::TransitionRow;
use crate::error::{Error, Result};

/// `-sum p log_b p / log_b n`, clamped to `[0, 1]`.
///
/// Rows whose probabilities are all bitwise equal use the closed form
/// `log_b(len)` for the numerator, so a uniform row over the whole location
/// set evaluates to exactly 1.
pub fn normalized_entropy_base(probs: &[f64], n_locations: usize, base: f64) -> Result<f64> {
    if n_locations < 2 {
        return Err(Error::Degenerate(n_locations));
    }
    if !(base > 0.0 && base != 1.0) {
        return Err(Error::invalid(format!("logarithm base {base}")));
    }
    let natural = base == std::f64::consts::E;
    let log = |x: f64| if natural { x.ln() } else { x.ln() / base.ln() };
    let probs: Vec<f64> = probs.iter().copied().filter(|&p| p > 0.0).collect();
    let numerator = match probs.first() {
        None => return Ok(0.0),
        Some(&first) if probs.iter().all(|&p| p == first) => log(probs.len() as f64),
        Some(_) => -probs.iter().map(|&p| p * log(p)).sum::<f64>(),
    };
    let denom = log(n_locations as f64);
    Ok((numerator / denom).clamp(0.0, 1.0))
}

/// Natural-log normalized entropy.
pub fn normalized_entropy(probs: &[f64], n_locations: usize) -> Result<f64> {
    normalized_entropy_base(probs, n_locations, std::f64::consts::E)
}

/// Entropy `S_i` of a row, normalized by `ln |L|` for a location set of size `visited_count`.
pub fn entropy(row: &TransitionRow, visited_count: usize) -> Result<f64> {
    let probs: Vec<f64> = row.probs().iter().map(|&(_, p)| p).collect();
    normalized_entropy(&probs, visited_count)
}
