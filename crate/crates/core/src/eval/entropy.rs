use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geo::TileId;
use crate::model::{normalized_entropy, CollectiveModel};

/// Normalized entropy of every collective row, using the number of distinct
/// tiles appearing anywhere in the collective model as the normalizer.
pub fn collective_entropy(c: &CollectiveModel) -> Result<BTreeMap<TileId, f64>> {
    let n = c.counts.tiles().len();
    if n < 2 {
        return Err(Error::Degenerate(n));
    }
    c.rows
        .iter()
        .map(|(&o, row)| {
            let probs: Vec<f64> = row.probs().iter().map(|&(_, p)| p).collect();
            normalized_entropy(&probs, n).map(|s| (o, s))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OdCounts;
    use proptest::prelude::*;

    fn t(s: &str) -> TileId {
        s.parse().unwrap()
    }

    fn model(pairs: &[(&str, &str, u64)]) -> CollectiveModel {
        let mut c = OdCounts::new();
        for &(o, d, n) in pairs {
            c.add(t(o), t(d), n);
        }
        CollectiveModel::from_counts(c)
    }

    #[test]
    fn reference_values() {
        // tiles b, c, d, e -> |L| = 4
        let c = model(&[("b", "c", 1), ("c", "d", 1), ("c", "e", 1), ("d", "b", 1), ("d", "c", 1), ("d", "d", 1), ("d", "e", 1)]);
        let s = collective_entropy(&c).unwrap();
        assert_eq!(s[&t("b")], 0.0);
        // {0.5, 0.5}: ln 2 / ln 4
        assert!((s[&t("c")] - 0.5).abs() < 1e-12);
        assert_eq!(s[&t("d")], 1.0);
    }

    #[test]
    fn degenerate() {
        let c = model(&[("b", "b", 3)]);
        assert!(matches!(collective_entropy(&c), Err(Error::Degenerate(1))));
    }

    fn shannon(p: &[f64]) -> f64 {
        -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
    }

    proptest! {
        #[test]
        fn concentration_never_raises_entropy(raw in prop::collection::vec(1u32..100, 2..12), frac in 0.0f64..=1.0) {
            let total: u32 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|&x| x as f64 / total as f64).collect();
            let n = p.len() + 3;
            let top = (0..p.len()).max_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap()).unwrap();
            let low = (0..p.len()).min_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap()).unwrap();
            prop_assume!(top != low);
            let mut q = p.clone();
            let moved = q[low] * frac;
            q[low] -= moved;
            q[top] += moved;
            let before = normalized_entropy(&p, n).unwrap();
            let after = normalized_entropy(&q.iter().copied().filter(|&x| x > 0.0).collect::<Vec<_>>(), n).unwrap();
            prop_assert!(after <= before + 1e-12);
            prop_assert!((before - shannon(&p) / (n as f64).ln()).abs() < 1e-12);
        }
    }
}
