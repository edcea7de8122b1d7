use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// Random patch mask for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSpec {
    pub mask_ratio: f64,
    pub n_patch: usize,
    /// Sorted, unique.
    pub masked_indices: Vec<usize>,
    pub rng_seed: u64,
}

impl MaskSpec {
    pub fn count(&self) -> usize {
        self.masked_indices.len()
    }

    pub fn visible_indices(&self) -> Vec<usize> {
        let mut hidden = vec![false; self.n_patch];
        for &i in &self.masked_indices {
            hidden[i] = true;
        }
        (0..self.n_patch).filter(|&i| !hidden[i]).collect()
    }

    pub fn is_masked(&self, patch: usize) -> bool {
        self.masked_indices.binary_search(&patch).is_ok()
    }

    /// Mask with explicitly chosen indices.
    pub fn from_indices(n_patch: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() || indices.len() >= n_patch {
            return Err(Error::invalid(
                "mask",
                format!("{} masked of {n_patch} patches", indices.len()),
            ));
        }
        if indices.last().is_some_and(|&i| i >= n_patch) {
            return Err(Error::invalid("mask", "index out of range"));
        }
        Ok(Self {
            mask_ratio: indices.len() as f64 / n_patch as f64,
            n_patch,
            masked_indices: indices,
            rng_seed: 0,
        })
    }
}

/// Number of masked patches for a ratio: `round(ratio · n_patch)`.
pub fn mask_count(n_patch: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid("make_mask", format!("ratio {ratio} not in (0, 1)")));
    }
    let count = (ratio * n_patch as f64).round() as usize;
    if count == 0 || count >= n_patch {
        return Err(Error::invalid(
            "make_mask",
            format!("ratio {ratio} masks {count} of {n_patch} patches"),
        ));
    }
    Ok(count)
}

/// Uniform random subset of patches, drawn by a seeded shuffle.
pub fn make_mask(n_patch: usize, ratio: f64, seed: u64, sample_index: u64) -> Result<MaskSpec> {
    let count = mask_count(n_patch, ratio)?;
    let mut order: Vec<usize> = (0..n_patch).collect();
    let mut r = rng::stream(seed, &[0x6d61_736b, sample_index]);
    order.shuffle(&mut r);
    let mut masked = order[..count].to_vec();
    masked.sort_unstable();
    Ok(MaskSpec {
        mask_ratio: ratio,
        n_patch,
        masked_indices: masked,
        rng_seed: seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_count_for_three_quarters() {
        let m = make_mask(64, 0.75, 1, 0).unwrap();
        assert_eq!(m.count(), 48);
        assert_eq!(m.visible_indices().len(), 16);
        assert!(m.masked_indices.windows(2).all(|w| w[0] < w[1]));
        assert!(m.masked_indices.iter().all(|&i| i < 64));
    }

    #[test]
    fn deterministic_per_seed_and_index() {
        assert_eq!(make_mask(64, 0.75, 7, 3).unwrap(), make_mask(64, 0.75, 7, 3).unwrap());
        assert_ne!(make_mask(64, 0.75, 7, 3).unwrap(), make_mask(64, 0.75, 7, 4).unwrap());
    }

    #[test]
    fn degenerate_ratios_rejected() {
        assert!(make_mask(64, 0.0, 1, 0).is_err());
        assert!(make_mask(64, 1.0, 1, 0).is_err());
        assert!(make_mask(4, 0.05, 1, 0).is_err()); // rounds to 0
        assert!(make_mask(4, 0.95, 1, 0).is_err()); // rounds to 4
    }

    #[test]
    fn monte_carlo_marginals_are_uniform() {
        let n = 64;
        let draws = 10_000u64;
        let mut hits = vec![0usize; n];
        for i in 0..draws {
            for &p in &make_mask(n, 0.75, 2024, i).unwrap().masked_indices {
                hits[p] += 1;
            }
        }
        for (p, &h) in hits.iter().enumerate() {
            let f = h as f64 / draws as f64;
            assert!((f - 0.75).abs() <= 0.02, "patch {p} masked with frequency {f}");
        }
    }
}
