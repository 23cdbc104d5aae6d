//! Global Moran's I over tile values with a permutation significance test.

use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{tile_distance_km, TileId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightScheme {
    /// Cells sharing an edge or a corner.
    Queen,
    /// Cells sharing an edge.
    Rook,
    /// `1 / d` for centroid distances within the cutoff.
    InverseDistance { cutoff_km: f64 },
}

impl Default for WeightScheme {
    fn default() -> Self {
        WeightScheme::Queen
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightScheme::Queen => f.write_str("queen"),
            WeightScheme::Rook => f.write_str("rook"),
            WeightScheme::InverseDistance { cutoff_km } => write!(f, "inverse-distance({cutoff_km} km)"),
        }
    }
}

/// Sparse spatial weights `w_ij` over an indexed set of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    neighbours: Vec<Vec<(usize, f64)>>,
}

impl SpatialWeights {
    pub fn from_triples(n: usize, triples: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut neighbours = vec![Vec::new(); n];
        for (i, j, w) in triples {
            if i >= n || j >= n {
                return Err(Error::invalid(format!("weight ({i}, {j}) outside {n} observations")));
            }
            if i != j && w != 0.0 {
                neighbours[i].push((j, w));
            }
        }
        Ok(SpatialWeights { neighbours })
    }

    /// Builds weights between `tiles` under `scheme`.
    pub fn for_tiles(tiles: &[TileId], scheme: WeightScheme) -> Self {
        let index: HashMap<TileId, usize> = tiles.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        let neighbours = tiles
            .iter()
            .enumerate()
            .map(|(i, t)| match scheme {
                WeightScheme::Queen | WeightScheme::Rook => {
                    let adj = if scheme == WeightScheme::Queen {
                        t.queen_neighbors()
                    } else {
                        t.rook_neighbors()
                    };
                    adj.iter().filter_map(|n| index.get(n)).map(|&j| (j, 1.0)).collect()
                }
                WeightScheme::InverseDistance { cutoff_km } => tiles
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .filter_map(|(j, &u)| {
                        let d = tile_distance_km(*t, u);
                        (d > 0.0 && d <= cutoff_km).then(|| (j, 1.0 / d))
                    })
                    .collect(),
            })
            .collect();
        SpatialWeights { neighbours }
    }

    /// Scales each row to sum to one; rows without neighbours stay empty.
    pub fn row_standardized(mut self) -> Self {
        for row in &mut self.neighbours {
            let s: f64 = row.iter().map(|&(_, w)| w).sum();
            if s > 0.0 {
                for e in row.iter_mut() {
                    e.1 /= s;
                }
            }
        }
        self
    }

    pub fn len(&self) -> usize {
        self.neighbours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbours.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.neighbours.iter().flatten().map(|&(_, w)| w).sum()
    }
}

fn cross_product(z: &[f64], w: &SpatialWeights) -> f64 {
    w.neighbours
        .iter()
        .enumerate()
        .map(|(i, row)| z[i] * row.iter().map(|&(j, wij)| wij * z[j]).sum::<f64>())
        .sum()
}

/// Global Moran's I, `(n / S0) * sum_ij w_ij z_i z_j / sum_i z_i^2`.
pub fn moran_i(values: &[f64], weights: &SpatialWeights) -> Result<f64> {
    let n = values.len();
    if n != weights.len() {
        return Err(Error::invalid(format!("{n} values for {} weight rows", weights.len())));
    }
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1.0) {
        return Err(Error::UndefinedStatistic("Moran's I: zero variance".into()));
    }
    let s0 = weights.total();
    if s0 <= 0.0 {
        return Err(Error::UndefinedStatistic("Moran's I: no neighbour pairs".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let z: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let m2: f64 = z.iter().map(|v| v * v).sum();
    Ok(n as f64 / s0 * cross_product(&z, weights) / m2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranResult {
    pub statistic: f64,
    /// Expectation under spatial randomness, `-1 / (n - 1)`.
    pub expected: f64,
    /// Two-sided permutation p-value, `(1 + #extreme) / (1 + permutations)`.
    pub p_value: f64,
    pub permutations: usize,
    pub n: usize,
}

/// Moran's I with a two-sided permutation test around `-1 / (n - 1)`.
pub fn moran_test(values: &[f64], weights: &SpatialWeights, permutations: usize, seed: u64) -> Result<MoranResult> {
    let statistic = moran_i(values, weights)?;
    let n = values.len();
    let expected = -1.0 / (n as f64 - 1.0);
    let observed = (statistic - expected).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = values.to_vec();
    let mut extreme = 0usize;
    for _ in 0..permutations {
        shuffled.shuffle(&mut rng);
        let i = moran_i(&shuffled, weights)?;
        // tolerance guards against float noise on exact ties
        if (i - expected).abs() >= observed - 1e-12 {
            extreme += 1;
        }
    }
    Ok(MoranResult {
        statistic,
        expected,
        p_value: (1 + extreme) as f64 / (1 + permutations) as f64,
        permutations,
        n,
    })
}
