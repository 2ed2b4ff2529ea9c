use super::model::Activation;
use super::train::{single_literal_model, train, TrainConfig};
use crate::dlogic::RelaxationConfig;
use crate::features::{enumerate_inequality_masks, SampleMatrix};
use crate::rat::to_f64;
use serde::{Deserialize, Serialize};

/// Configuration of the inequality-bound sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundsConfig {
    pub enabled: bool,
    /// Largest number of (non-constant) terms per bound.
    pub max_terms: usize,
    /// Largest term degree considered.
    pub max_degree: u32,
    /// Degree cap for terms inside 3-term combinations; 1 keeps the
    /// octahedral-style bounds over plain variables without the
    /// combinatorial blowup of cubic-many degree-2 triples.
    pub triple_max_degree: u32,
    /// Mean-activation pruning threshold: bounds below it are loose fits.
    pub activation_threshold: f64,
    /// Cap on bounds kept after deduplication, best activations first.
    pub max_kept: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            enabled: true,
            max_terms: 3,
            max_degree: 2,
            triple_max_degree: 1,
            activation_threshold: 0.8,
            max_kept: 20,
            max_epochs: 600,
            patience: 40,
        }
    }
}

/// A fitted inequality bound `sum_i weights[i] * basis[term_indices[i]] +
/// bias >= 0` over raw-scale data, with its mean PBQU activation.
#[derive(Debug, Clone)]
pub struct BoundCandidate {
    pub term_indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub mean_activation: f64,
}

/// Fits tight inequality bounds over every combination of basis terms up to
/// the configured size and degree (the inequality form of term dropout).
///
/// Each combination is trained as an independent single-literal PBQU model
/// on the raw-scale data, restarted from axis and pairwise-difference
/// directions so both bound orientations are explored; loosely fitting
/// results (mean activation below the threshold) are pruned. Bounds use the
/// raw scale because the PBQU constants calibrate distance-to-bound in data
/// units; the caller still rationalizes and data-filters the survivors.
pub fn fit_bounds(
    matrix: &SampleMatrix,
    relax: &RelaxationConfig,
    cfg: &BoundsConfig,
    seed: u64,
) -> Vec<BoundCandidate> {
    if !cfg.enabled {
        return Vec::new();
    }
    let mut masks =
        enumerate_inequality_masks(&matrix.basis, cfg.max_terms.min(2), cfg.max_degree);
    if cfg.max_terms >= 3 {
        let triples = enumerate_inequality_masks(&matrix.basis, 3, cfg.triple_max_degree);
        let pair_count = |m: &crate::features::DropoutMask| {
            m.kept_indices()
                .iter()
                .filter(|&&i| !matrix.basis[i].is_constant())
                .count()
        };
        masks.extend(triples.into_iter().filter(|m| pair_count(m) == 3));
    }
    let raw_f64: Vec<Vec<f64>> = matrix
        .raw
        .iter()
        .map(|row| row.iter().map(to_f64).collect())
        .collect();

    let mut out = Vec::new();
    for mask in &masks {
        let combo: Vec<usize> = mask
            .kept_indices()
            .into_iter()
            .filter(|&i| !matrix.basis[i].is_constant())
            .collect();
        let rows: Vec<Vec<f64>> = raw_f64
            .iter()
            .map(|r| combo.iter().map(|&i| r[i]).collect())
            .collect();
        if rows.is_empty() {
            continue;
        }
        for init in direction_inits(combo.len()) {
            if let Some(cand) = fit_single_bound(&rows, &init, relax, cfg, seed) {
                out.push(BoundCandidate {
                    term_indices: combo.clone(),
                    weights: cand.0,
                    bias: cand.1,
                    mean_activation: cand.2,
                });
            }
        }
    }
    out
}

/// Axis directions and pairwise differences, both orientations.
fn direction_inits(dim: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..dim {
        for sign in [1.0, -1.0] {
            let mut w = vec![0.0; dim];
            w[i] = sign;
            out.push(w);
        }
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..dim {
        for j in (i + 1)..dim {
            for sign in [1.0, -1.0] {
                let mut w = vec![0.0; dim];
                w[i] = sign * s;
                w[j] = -sign * s;
                out.push(w);
            }
        }
    }
    out
}

/// Trains one PBQU literal from the given direction; returns
/// (weights, bias, mean_activation) when it clears the pruning threshold.
fn fit_single_bound(
    rows: &[Vec<f64>],
    init: &[f64],
    relax: &RelaxationConfig,
    cfg: &BoundsConfig,
    seed: u64,
) -> Option<(Vec<f64>, f64, f64)> {
    let dim = init.len();
    let mask = crate::features::DropoutMask::all_keep(dim, 0);
    let mut model = single_literal_model(dim, Activation::PbquGe, &mask, relax.clone(), true);
    {
        let lit = &mut model.clauses[0].literals[0];
        lit.weights = init.to_vec();
        // start at the tight valid bound for this direction
        let min_z = rows
            .iter()
            .map(|r| init.iter().zip(r).map(|(w, x)| w * x).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        lit.bias = -min_z;
    }
    let train_cfg = TrainConfig {
        max_epochs: cfg.max_epochs,
        patience: cfg.patience,
        sigma_start: None,
        freeze_gates: true,
        seed,
        ..TrainConfig::default()
    };
    train(&mut model, rows, &train_cfg).ok()?;
    let lit = &model.clauses[0].literals[0];
    let mean = rows
        .iter()
        .map(|r| lit.activate(lit.linear(r), relax, relax.sigma))
        .sum::<f64>()
        / rows.len() as f64;
    if mean < cfg.activation_threshold {
        return None;
    }
    Some((lit.weights.clone(), lit.bias, mean))
}
