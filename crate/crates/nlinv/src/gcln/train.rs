use super::model::{Clause, GclnModel};
use crate::dlogic::{products_excluding, RelaxationConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Geometric gate-regularization schedule: `value` is multiplied by `factor`
/// each epoch until it reaches `bound` (a floor for decaying schedules, a
/// ceiling for growing ones).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    pub init: f64,
    pub factor: f64,
    pub bound: f64,
}

impl LambdaSchedule {
    pub fn value_at(&self, epoch: usize) -> f64 {
        let v = self.init * self.factor.powi(epoch as i32);
        if self.factor <= 1.0 {
            v.max(self.bound)
        } else {
            v.min(self.bound)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Learning-rate decay per epoch.
    pub lr_decay: f64,
    pub max_epochs: usize,
    /// AND-gate regularization (pressure toward 1), decaying to its floor.
    pub lambda1: LambdaSchedule,
    /// OR-gate regularization (pressure toward 0), growing to its ceiling.
    pub lambda2: LambdaSchedule,
    pub seed: u64,
    /// Minimum loss improvement that counts as progress.
    pub convergence_tol: f64,
    /// Epochs without progress before stopping (counted only once the
    /// Gaussian width has reached its floor).
    pub patience: usize,
    /// Initial Gaussian width for annealing; `None` trains at the configured
    /// sigma throughout. Annealing is needed from random initialization:
    /// at sigma = 0.1 with row norm 10 every equality literal starts with
    /// an essentially zero gradient.
    pub sigma_start: Option<f64>,
    /// Per-epoch decay of the annealed width toward the configured sigma.
    pub sigma_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Project each literal's weights to unit L2 norm after every step.
    pub project_weights: bool,
    /// Freeze all gates at 1 and drop the gate regularizers (the ungated
    /// baseline used in the stability comparison).
    pub freeze_gates: bool,
    /// Snap half-open gates to {0, 1} at convergence by picking the pole
    /// with the lower full-batch loss. Gates can otherwise stall where the
    /// keep-alive regularization exactly balances the data pressure.
    pub snap_gates: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            lr_decay: 0.9996,
            max_epochs: 5000,
            lambda1: LambdaSchedule {
                init: 1.0,
                factor: 0.999,
                bound: 0.1,
            },
            lambda2: LambdaSchedule {
                init: 0.001,
                factor: 1.001,
                bound: 0.1,
            },
            seed: 0,
            convergence_tol: 1e-6,
            patience: 100,
            sigma_start: Some(2.5),
            sigma_decay: 0.9975,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            project_weights: true,
            freeze_gates: false,
            snap_gates: true,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}: {diagnostics}")]
    NonFiniteLoss { epoch: usize, diagnostics: String },
    #[error("training data is empty")]
    EmptyData,
}

/// Training summary; serializes to the JSON training-report format.
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub seed: u64,
    pub epochs_run: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub and_gates: Vec<f64>,
    pub or_gates: Vec<Vec<f64>>,
    /// Pre-rationalization coefficients, one entry per literal in
    /// clause-major order.
    pub literal_coefficients: Vec<Vec<f64>>,
    pub literal_biases: Vec<f64>,
    /// Mean activation over the data per literal (PBQU literals use the
    /// final sigma; meaningful for bound pruning).
    pub mean_activations: Vec<f64>,
    pub weight_reinits: usize,
    pub stop_reason: String,
    pub max_gate_distance: f64,
}

/// Projects to the unit sphere; an all-zero vector is reported back to the
/// caller for reinitialization.
pub fn weight_project(w: &[f64]) -> Option<Vec<f64>> {
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        None
    } else {
        Some(w.iter().map(|v| v / norm).collect())
    }
}

struct Grads {
    w: Vec<Vec<Vec<f64>>>,
    b: Vec<Vec<f64>>,
    or_g: Vec<Vec<f64>>,
    and_g: Vec<f64>,
}

impl Grads {
    fn zeros(model: &GclnModel) -> Self {
        Grads {
            w: model
                .clauses
                .iter()
                .map(|c| c.literals.iter().map(|l| vec![0.0; l.weights.len()]).collect())
                .collect(),
            b: model
                .clauses
                .iter()
                .map(|c| vec![0.0; c.literals.len()])
                .collect(),
            or_g: model
                .clauses
                .iter()
                .map(|c| vec![0.0; c.or_gates.len()])
                .collect(),
            and_g: vec![0.0; model.and_gates.len()],
        }
    }
}

/// Full-batch loss and its gradient at an explicit Gaussian width.
///
/// `loss = sum_rows (1 - M(x)) + lambda1 * sum_and (1 - g) + lambda2 * sum_or g`.
pub fn loss_value(model: &GclnModel, rows: &[Vec<f64>], lambda1: f64, lambda2: f64) -> f64 {
    loss_sigma(model, rows, lambda1, lambda2, model.relax.sigma)
}

pub(crate) fn loss_sigma(
    model: &GclnModel,
    rows: &[Vec<f64>],
    lambda1: f64,
    lambda2: f64,
    sigma: f64,
) -> f64 {
    let data: f64 = rows
        .iter()
        .map(|r| 1.0 - model.forward_sigma(r, sigma))
        .sum();
    data + reg_terms(model, lambda1, lambda2)
}

fn reg_terms(model: &GclnModel, lambda1: f64, lambda2: f64) -> f64 {
    let and_pen: f64 = model.and_gates.iter().map(|g| 1.0 - g).sum();
    let or_pen: f64 = model
        .clauses
        .iter()
        .flat_map(|c| c.or_gates.iter())
        .sum();
    lambda1 * and_pen + lambda2 * or_pen
}

fn loss_and_grads(
    model: &GclnModel,
    rows: &[Vec<f64>],
    lambda1: f64,
    lambda2: f64,
    sigma: f64,
) -> (f64, Grads) {
    let relax = &model.relax;
    let mut grads = Grads::zeros(model);
    let mut loss = 0.0;

    let m = model.clauses.len();
    let mut zs: Vec<Vec<f64>> = model
        .clauses
        .iter()
        .map(|c| vec![0.0; c.literals.len()])
        .collect();
    let mut vs = zs.clone();
    let mut clause_vals = vec![0.0; m];

    for row in rows {
        for (j, clause) in model.clauses.iter().enumerate() {
            for (k, lit) in clause.literals.iter().enumerate() {
                let z = lit.linear(row);
                zs[j][k] = z;
                vs[j][k] = lit.activate(z, relax, sigma);
            }
            clause_vals[j] = crate::dlogic::gated_tconorm(&vs[j], &clause.or_gates);
        }
        let out = crate::dlogic::gated_tnorm(&clause_vals, &model.and_gates);
        loss += 1.0 - out;

        // d loss / d out = -1; push through the AND layer
        let and_factors: Vec<f64> = clause_vals
            .iter()
            .zip(&model.and_gates)
            .map(|(&c, &g)| 1.0 + g * (c - 1.0))
            .collect();
        let and_rest = products_excluding(&and_factors);
        for (j, clause) in model.clauses.iter().enumerate() {
            let g_and = model.and_gates[j];
            let d_out_d_cj = g_and * and_rest[j];
            let d_out_d_gj = (clause_vals[j] - 1.0) * and_rest[j];
            grads.and_g[j] += -d_out_d_gj;
            if d_out_d_cj == 0.0 {
                continue;
            }
            // OR layer
            let or_factors: Vec<f64> = vs[j]
                .iter()
                .zip(&clause.or_gates)
                .map(|(&v, &g)| 1.0 - g * v)
                .collect();
            let or_rest = products_excluding(&or_factors);
            for (k, lit) in clause.literals.iter().enumerate() {
                let g_or = clause.or_gates[k];
                let d_cj_d_v = g_or * or_rest[k];
                let d_cj_d_g = vs[j][k] * or_rest[k];
                grads.or_g[j][k] += -d_out_d_cj * d_cj_d_g;
                let d_loss_d_v = -d_out_d_cj * d_cj_d_v;
                if d_loss_d_v == 0.0 {
                    continue;
                }
                let dv_dz = lit.activate_grad(zs[j][k], relax, sigma);
                let d_loss_d_z = d_loss_d_v * dv_dz;
                if d_loss_d_z == 0.0 {
                    continue;
                }
                for &i in &lit.kept {
                    grads.w[j][k][i] += d_loss_d_z * row[i];
                }
                grads.b[j][k] += d_loss_d_z;
            }
        }
    }

    loss += reg_terms(model, lambda1, lambda2);
    for g in grads.and_g.iter_mut() {
        *g += -lambda1;
    }
    for row in grads.or_g.iter_mut() {
        for g in row.iter_mut() {
            *g += lambda2;
        }
    }
    (loss, grads)
}

struct Adam {
    m: Grads,
    v: Grads,
    t: usize,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

#[allow(clippy::too_many_arguments)]
fn adam_update(
    m: &mut f64,
    v: &mut f64,
    g: f64,
    lr: f64,
    t: usize,
    beta1: f64,
    beta2: f64,
    eps: f64,
    theta: &mut f64,
) {
    *m = beta1 * *m + (1.0 - beta1) * g;
    *v = beta2 * *v + (1.0 - beta2) * g * g;
    let mhat = *m / (1.0 - beta1.powi(t as i32));
    let vhat = *v / (1.0 - beta2.powi(t as i32));
    *theta -= lr * mhat / (vhat.sqrt() + eps);
}

impl Adam {
    fn new(model: &GclnModel, cfg: &TrainConfig) -> Self {
        Adam {
            m: Grads::zeros(model),
            v: Grads::zeros(model),
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
        }
    }

    fn step(&mut self, model: &mut GclnModel, grads: &Grads, lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let (t, b1, b2, eps) = (self.t, self.beta1, self.beta2, self.eps);
        let learn_bias = model.learn_bias;
        for (j, clause) in model.clauses.iter_mut().enumerate() {
            for (k, lit) in clause.literals.iter_mut().enumerate() {
                for &i in &lit.kept {
                    adam_update(
                        &mut self.m.w[j][k][i],
                        &mut self.v.w[j][k][i],
                        grads.w[j][k][i],
                        lr,
                        t,
                        b1,
                        b2,
                        eps,
                        &mut lit.weights[i],
                    );
                }
                if learn_bias {
                    adam_update(
                        &mut self.m.b[j][k],
                        &mut self.v.b[j][k],
                        grads.b[j][k],
                        lr,
                        t,
                        b1,
                        b2,
                        eps,
                        &mut lit.bias,
                    );
                }
            }
            if !cfg.freeze_gates {
                for (k, g) in clause.or_gates.iter_mut().enumerate() {
                    adam_update(
                        &mut self.m.or_g[j][k],
                        &mut self.v.or_g[j][k],
                        grads.or_g[j][k],
                        lr,
                        t,
                        b1,
                        b2,
                        eps,
                        g,
                    );
                }
            }
        }
        if !cfg.freeze_gates {
            for (j, g) in model.and_gates.iter_mut().enumerate() {
                adam_update(
                    &mut self.m.and_g[j],
                    &mut self.v.and_g[j],
                    grads.and_g[j],
                    lr,
                    t,
                    b1,
                    b2,
                    eps,
                    g,
                );
            }
        }
    }
}

/// Trains the model in place by full-batch adaptive-moment gradient descent.
///
/// After every step each literal's weights are re-zeroed on masked terms and
/// projected back to the unit sphere (reinitialized randomly if they
/// collapsed to zero), and all gates are clamped to `[0, 1]`. The gate
/// regularization weights advance per epoch on their schedules; the Gaussian
/// width anneals down to the configured sigma. Training stops at
/// `max_epochs` or when the loss has not improved by `convergence_tol` for
/// `patience` epochs (after annealing has finished).
pub fn train(
    model: &mut GclnModel,
    rows: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    if rows.is_empty() {
        return Err(TrainError::EmptyData);
    }
    if cfg.freeze_gates {
        for g in model.and_gates.iter_mut() {
            *g = 1.0;
        }
        for c in model.clauses.iter_mut() {
            for g in c.or_gates.iter_mut() {
                *g = 1.0;
            }
        }
    }

    let sigma_floor = model.relax.sigma;
    let sigma_at = |epoch: usize| -> f64 {
        match cfg.sigma_start {
            Some(s0) if s0 > sigma_floor => {
                (s0 * cfg.sigma_decay.powi(epoch as i32)).max(sigma_floor)
            }
            _ => sigma_floor,
        }
    };
    let (l1_0, l2_0) = if cfg.freeze_gates {
        (0.0, 0.0)
    } else {
        (cfg.lambda1.value_at(0), cfg.lambda2.value_at(0))
    };

    let initial_loss = loss_sigma(model, rows, l1_0, l2_0, sigma_at(0));
    let mut adam = Adam::new(model, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_1e55);
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut reinits = 0usize;
    let mut final_loss = initial_loss;
    let mut stop_reason = "max epochs".to_string();
    let mut epochs_run = 0usize;

    for epoch in 0..cfg.max_epochs {
        epochs_run = epoch + 1;
        let sigma = sigma_at(epoch);
        let (lambda1, lambda2) = if cfg.freeze_gates {
            (0.0, 0.0)
        } else {
            (cfg.lambda1.value_at(epoch), cfg.lambda2.value_at(epoch))
        };
        let (loss, grads) = loss_and_grads(model, rows, lambda1, lambda2, sigma);
        final_loss = loss;
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                diagnostics: format!(
                    "sigma={sigma:.4}, lambda1={lambda1:.4}, lambda2={lambda2:.4}, \
                     max|w|={:.3e}",
                    model
                        .clauses
                        .iter()
                        .flat_map(|c| c.literals.iter())
                        .flat_map(|l| l.weights.iter())
                        .fold(0.0f64, |a, w| a.max(w.abs()))
                ),
            });
        }

        let lr = cfg.lr * cfg.lr_decay.powi(epoch as i32);
        adam.step(model, &grads, lr, cfg);

        // projection: masked terms stay zero, weights stay on the unit
        // sphere, gates stay in [0, 1]
        for clause in model.clauses.iter_mut() {
            for lit in clause.literals.iter_mut() {
                let mut masked = vec![0.0; lit.weights.len()];
                for &i in &lit.kept {
                    masked[i] = lit.weights[i];
                }
                lit.weights = masked;
                if cfg.project_weights {
                    match weight_project(&lit.weights) {
                        Some(w) => lit.weights = w,
                        None => {
                            lit.randomize(&mut rng);
                            reinits += 1;
                        }
                    }
                }
            }
            for g in clause.or_gates.iter_mut() {
                *g = g.clamp(0.0, 1.0);
            }
        }
        for g in model.and_gates.iter_mut() {
            *g = g.clamp(0.0, 1.0);
        }

        // convergence tracking only once sigma has reached its floor (the
        // loss is not comparable across widths)
        if sigma <= sigma_floor {
            if loss < best_loss - cfg.convergence_tol {
                best_loss = loss;
                best_epoch = epoch;
            } else if epoch - best_epoch >= cfg.patience {
                stop_reason = format!("converged (no progress for {} epochs)", cfg.patience);
                break;
            }
        }
    }

    if cfg.snap_gates && !cfg.freeze_gates {
        let l1 = cfg.lambda1.value_at(epochs_run);
        let l2 = cfg.lambda2.value_at(epochs_run);
        snap_gates(model, rows, l1, l2, sigma_floor);
        final_loss = loss_sigma(model, rows, l1, l2, sigma_floor);
    }

    let final_sigma = sigma_floor;
    let mean_activations: Vec<f64> = model
        .clauses
        .iter()
        .flat_map(|c| c.literals.iter())
        .map(|lit| {
            rows.iter()
                .map(|r| lit.activate(lit.linear(r), &model.relax, final_sigma))
                .sum::<f64>()
                / rows.len() as f64
        })
        .collect();

    Ok(TrainReport {
        seed: cfg.seed,
        epochs_run,
        initial_loss,
        final_loss,
        and_gates: model.and_gates.clone(),
        or_gates: model.clauses.iter().map(|c| c.or_gates.clone()).collect(),
        literal_coefficients: model
            .clauses
            .iter()
            .flat_map(|c| c.literals.iter())
            .map(|l| l.weights.clone())
            .collect(),
        literal_biases: model
            .clauses
            .iter()
            .flat_map(|c| c.literals.iter())
            .map(|l| l.bias)
            .collect(),
        mean_activations,
        weight_reinits: reinits,
        stop_reason,
        max_gate_distance: model.max_gate_distance(),
    })
}

/// Resolves every gate to the pole with the lower full-batch loss, working
/// outward from the most saturated gates (their choices are settled first).
fn snap_gates(model: &mut GclnModel, rows: &[Vec<f64>], l1: f64, l2: f64, sigma: f64) {
    #[derive(Clone, Copy)]
    enum GateRef {
        And(usize),
        Or(usize, usize),
    }
    let mut refs: Vec<(f64, GateRef)> = Vec::new();
    for (j, &g) in model.and_gates.iter().enumerate() {
        refs.push((g.min(1.0 - g), GateRef::And(j)));
    }
    for (j, c) in model.clauses.iter().enumerate() {
        for (k, &g) in c.or_gates.iter().enumerate() {
            refs.push((g.min(1.0 - g), GateRef::Or(j, k)));
        }
    }
    refs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for (_, r) in refs {
        let try_pole = |model: &mut GclnModel, v: f64| {
            match r {
                GateRef::And(j) => model.and_gates[j] = v,
                GateRef::Or(j, k) => model.clauses[j].or_gates[k] = v,
            }
            loss_sigma(model, rows, l1, l2, sigma)
        };
        let lo = try_pole(model, 0.0);
        let hi = try_pole(model, 1.0);
        if lo < hi {
            try_pole(model, 0.0);
        }
    }
}

/// One-clause helper used by the bound-fitting sweep and tests.
pub(crate) fn single_literal_model(
    dim: usize,
    activation: super::Activation,
    mask: &crate::features::DropoutMask,
    relax: RelaxationConfig,
    learn_bias: bool,
) -> GclnModel {
    let lit = super::model::Literal::new(dim, activation, mask);
    GclnModel {
        clauses: vec![Clause {
            literals: vec![lit],
            or_gates: vec![1.0],
        }],
        and_gates: vec![1.0],
        relax,
        learn_bias,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dlogic::RelaxationConfig;
    use crate::features::DropoutMask;
    use crate::gcln::Activation;
    use rand::Rng;

    fn tiny_model(seed: u64, acts: &[Activation]) -> GclnModel {
        // 2 clauses x 2 literals x 3 basis columns
        let masks: Vec<DropoutMask> = (0..4).map(|_| DropoutMask::all_keep(3, 0)).collect();
        let mut m = GclnModel::new_cnf(
            2,
            2,
            3,
            Activation::GaussEq,
            &masks,
            RelaxationConfig {
                sigma: 0.7,
                ..RelaxationConfig::default()
            },
            0.8,
            0.55,
            seed,
        );
        let mut it = acts.iter().cycle();
        for c in m.clauses.iter_mut() {
            for l in c.literals.iter_mut() {
                l.activation = *it.next().unwrap();
                l.bias = 0.05;
            }
        }
        m.learn_bias = true;
        m
    }

    #[test]
    fn loss_examples() {
        // model output 1 on all rows, AND gates 1, OR gates 0 -> loss 0
        let mut m = tiny_model(3, &[Activation::GaussEq]);
        for c in m.clauses.iter_mut() {
            for l in c.literals.iter_mut() {
                l.weights = vec![0.0; 3];
                l.bias = 0.0; // gauss(0) = 1
            }
            c.or_gates = vec![1.0, 1.0];
        }
        m.and_gates = vec![1.0, 1.0];
        // or-gates at 1 incur lambda2 penalties; with lambda2 = 0 the loss
        // is exactly the data term
        let rows = vec![vec![1.0, 2.0, 3.0]];
        assert!(loss_value(&m, &rows, 0.0, 0.0).abs() < 1e-12);
        // with all OR gates at 0 every clause value is 0 but AND gates at 0
        // make the output 1 again; loss = lambda2 * 0 + lambda1 * 2
        for c in m.clauses.iter_mut() {
            c.or_gates = vec![0.0, 0.0];
        }
        m.and_gates = vec![0.0, 0.0];
        let l = loss_value(&m, &rows, 0.5, 0.25);
        assert!((l - 0.5 * 2.0).abs() < 1e-12, "{l}");
    }

    #[test]
    fn model_gradients_match_finite_differences() {
        // criterion: 1e-4 relative agreement away from PBQU breakpoints
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut checked = 0usize;
        let mut models_tried = 0u64;
        while checked < 1000 {
            models_tried += 1;
            let m0 = tiny_model(
                models_tried,
                &[Activation::GaussEq, Activation::PbquGe, Activation::PbquLe],
            );
            let row: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            // skip PBQU breakpoint neighborhoods
            let near_break = m0.clauses.iter().flat_map(|c| c.literals.iter()).any(|l| {
                l.activation != Activation::GaussEq && l.linear(&row).abs() < 1e-3
            });
            if near_break {
                continue;
            }
            let rows = vec![row];
            let (l1, l2) = (0.3, 0.07);
            let (_, grads) = loss_and_grads(&m0, &rows, l1, l2, m0.relax.sigma);

            let h = 1e-5;
            let close = |a: f64, f: f64| (a - f).abs() <= 1e-4 * a.abs().max(f.abs()).max(1.0);

            // weights, bias, gates: probe one coordinate of each kind
            for (j, k, i) in [(0usize, 0usize, 0usize), (1, 1, 2)] {
                let mut up = m0.clone();
                up.clauses[j].literals[k].weights[i] += h;
                let mut dn = m0.clone();
                dn.clauses[j].literals[k].weights[i] -= h;
                let fd = (loss_value(&up, &rows, l1, l2) - loss_value(&dn, &rows, l1, l2))
                    / (2.0 * h);
                assert!(close(grads.w[j][k][i], fd), "w[{j}][{k}][{i}]: {} vs {fd}", grads.w[j][k][i]);

                let mut up = m0.clone();
                up.clauses[j].literals[k].bias += h;
                let mut dn = m0.clone();
                dn.clauses[j].literals[k].bias -= h;
                let fd = (loss_value(&up, &rows, l1, l2) - loss_value(&dn, &rows, l1, l2))
                    / (2.0 * h);
                assert!(close(grads.b[j][k], fd), "b[{j}][{k}]");

                let mut up = m0.clone();
                up.clauses[j].or_gates[k] += h;
                let mut dn = m0.clone();
                dn.clauses[j].or_gates[k] -= h;
                let fd = (loss_value(&up, &rows, l1, l2) - loss_value(&dn, &rows, l1, l2))
                    / (2.0 * h);
                assert!(close(grads.or_g[j][k], fd), "or_g[{j}][{k}]");

                let mut up = m0.clone();
                up.and_gates[j] += h;
                let mut dn = m0.clone();
                dn.and_gates[j] -= h;
                let fd = (loss_value(&up, &rows, l1, l2) - loss_value(&dn, &rows, l1, l2))
                    / (2.0 * h);
                assert!(close(grads.and_g[j], fd), "and_g[{j}]");
                checked += 4;
            }
        }
    }

    #[test]
    fn hyperplane_data_trains_a_single_equality_literal() {
        // data exactly on the hyperplane x0 - 2*x1 = 0, embedded in 3 dims
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| {
                let t: f64 = rng.gen_range(-4.0..4.0);
                let u: f64 = rng.gen_range(-4.0..4.0);
                vec![2.0 * t, t, u]
            })
            .collect();
        let mask = DropoutMask::all_keep(3, 0);
        let mut model = single_literal_model(
            3,
            Activation::GaussEq,
            &mask,
            RelaxationConfig::default(),
            false,
        );
        let mut rng2 = ChaCha8Rng::seed_from_u64(11);
        model.clauses[0].literals[0].randomize(&mut rng2);
        let cfg = TrainConfig {
            max_epochs: 4000,
            seed: 11,
            ..TrainConfig::default()
        };
        let report = train(&mut model, &rows, &cfg).unwrap();
        assert!(report.final_loss < report.initial_loss);
        // gate stayed on and the fit is sharp: |w . row| < sigma / 10
        assert!(model.and_gates[0] > 0.95);
        let lit = &model.clauses[0].literals[0];
        for r in &rows {
            assert!(
                lit.linear(r).abs() < model.relax.sigma / 10.0,
                "loose fit: {}",
                lit.linear(r)
            );
        }
        // learned direction is the hyperplane normal (1, -2, 0) / sqrt(5)
        // up to sign
        let w = &lit.weights;
        let scale = 5f64.sqrt();
        let target = [1.0 / scale, -2.0 / scale, 0.0];
        let sign = if w[0] > 0.0 { 1.0 } else { -1.0 };
        for (got, want) in w.iter().zip(target) {
            assert!((got * sign - want).abs() < 0.02, "{w:?}");
        }
    }

    #[test]
    fn dead_masks_deactivate_their_clause() {
        // clause 0 can only see the constant column: no equality through the
        // origin fits rows with constant 1 there, so its AND gate must close
        let masks = vec![
            DropoutMask {
                keep: vec![true, false, false],
                seed: 0,
            },
            DropoutMask {
                keep: vec![true, false, false],
                seed: 0,
            },
            DropoutMask::all_keep(3, 0),
            DropoutMask::all_keep(3, 0),
        ];
        let mut model = GclnModel::new_cnf(
            2,
            2,
            3,
            Activation::GaussEq,
            &masks,
            RelaxationConfig::default(),
            0.95,
            0.5,
            21,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let t: f64 = rng.gen_range(-4.0..4.0);
                vec![1.0, t, t] // x1 - x2 = 0 available to clause 1
            })
            .collect();
        let cfg = TrainConfig {
            max_epochs: 4000,
            seed: 3,
            ..TrainConfig::default()
        };
        train(&mut model, &rows, &cfg).unwrap();
        assert!(
            model.and_gates[0] < 0.1,
            "dead clause should be gated off: {:?}",
            model.and_gates
        );
        assert!(model.and_gates[1] > 0.9);
    }

    #[test]
    fn empty_data_is_an_error() {
        let mask = DropoutMask::all_keep(2, 0);
        let mut model = single_literal_model(
            2,
            Activation::GaussEq,
            &mask,
            RelaxationConfig::default(),
            false,
        );
        assert!(matches!(
            train(&mut model, &[], &TrainConfig::default()),
            Err(TrainError::EmptyData)
        ));
    }

    #[test]
    fn lambda_schedules_move_toward_their_bounds() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lambda1.value_at(0), 1.0);
        assert!(cfg.lambda1.value_at(5000) >= 0.1);
        assert!((cfg.lambda1.value_at(5000) - 0.1).abs() < 1e-9);
        assert_eq!(cfg.lambda2.value_at(0), 0.001);
        assert!((cfg.lambda2.value_at(5000) - 0.1).abs() < 1e-9);
        // monotone toward the bound
        assert!(cfg.lambda1.value_at(10) < cfg.lambda1.value_at(5));
        assert!(cfg.lambda2.value_at(10) > cfg.lambda2.value_at(5));
    }
}
