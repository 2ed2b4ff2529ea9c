use super::terms::Term;
use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-literal keep/drop vector over the basis, fixed before training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropoutMask {
    pub keep: Vec<bool>,
    pub seed: u64,
}

impl DropoutMask {
    pub fn all_keep(len: usize, seed: u64) -> Self {
        DropoutMask {
            keep: vec![true; len],
            seed,
        }
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        self.keep
            .iter()
            .enumerate()
            .filter(|(_, &k)| k)
            .map(|(i, _)| i)
            .collect()
    }
}

/// One mask per equality literal: each non-constant term is kept with
/// probability `1 - p`, independently; the constant term is never dropped.
/// Masks are drawn once from the seed and never change during training.
pub fn make_dropout_masks(
    basis: &[Term],
    p: f64,
    literal_count: usize,
    seed: u64,
) -> Vec<DropoutMask> {
    assert!((0.0..1.0).contains(&p), "dropout probability must be in [0, 1)");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..literal_count)
        .map(|_| DropoutMask {
            keep: basis
                .iter()
                .map(|t| t.is_constant() || rng.gen::<f64>() >= p)
                .collect(),
            seed,
        })
        .collect()
}

/// Masks for inequality literals: instead of random dropout, enumerate every
/// combination of non-constant terms up to `max_terms` terms and degree
/// `max_degree`, each mask keeping the constant term plus the combination.
pub fn enumerate_inequality_masks(
    basis: &[Term],
    max_terms: usize,
    max_degree: u32,
) -> Vec<DropoutMask> {
    let eligible: Vec<usize> = basis
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.is_constant() && t.degree() <= max_degree)
        .map(|(i, _)| i)
        .collect();
    let constant = basis.iter().position(|t| t.is_constant());
    let mut out = Vec::new();
    for size in 1..=max_terms.min(eligible.len()) {
        for combo in eligible.iter().combinations(size) {
            let mut keep = vec![false; basis.len()];
            for &&i in &combo {
                keep[i] = true;
            }
            if let Some(c) = constant {
                keep[c] = true;
            }
            out.push(DropoutMask { keep, seed: 0 });
        }
    }
    out
}
