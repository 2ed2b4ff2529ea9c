use crate::dlogic::{
    gated_tconorm, gated_tnorm, gauss_eq, pbqu_ge, pbqu_le, RelaxationConfig,
};
use crate::features::DropoutMask;
use crate::rat::{from_f64, Rat};
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Activation kind of a literal: how its linear form maps to a truth value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    /// Gaussian bump: relaxes `w·x + b = 0`.
    GaussEq,
    /// PBQU: relaxes `w·x + b >= 0`.
    PbquGe,
    /// Mirrored PBQU: relaxes `w·x + b <= 0`.
    PbquLe,
}

/// One atomic literal: a linear form over the kept basis terms plus an
/// activation. Masked-out terms keep weight exactly 0 at all times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Literal {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub activation: Activation,
    pub kept: Vec<usize>,
}

impl Literal {
    pub fn new(dim: usize, activation: Activation, mask: &DropoutMask) -> Self {
        Literal {
            weights: vec![0.0; dim],
            bias: 0.0,
            activation,
            kept: mask.kept_indices(),
        }
    }

    pub fn linear(&self, row: &[f64]) -> f64 {
        let mut z = self.bias;
        for &i in &self.kept {
            z += self.weights[i] * row[i];
        }
        z
    }

    pub fn activate(&self, z: f64, cfg: &RelaxationConfig, sigma: f64) -> f64 {
        match self.activation {
            Activation::GaussEq => gauss_eq(z, sigma).get(),
            Activation::PbquGe => pbqu_ge(z, cfg).get(),
            Activation::PbquLe => pbqu_le(z, cfg).get(),
        }
    }

    /// d(activation)/dz.
    pub fn activate_grad(&self, z: f64, cfg: &RelaxationConfig, sigma: f64) -> f64 {
        match self.activation {
            Activation::GaussEq => crate::dlogic::gauss_eq_grad(z, sigma),
            Activation::PbquGe => crate::dlogic::pbqu_ge_grad(z, cfg),
            Activation::PbquLe => crate::dlogic::pbqu_le_grad(z, cfg),
        }
    }

    /// Random unit-norm weights on the kept support.
    pub fn randomize(&mut self, rng: &mut impl Rng) {
        for w in self.weights.iter_mut() {
            *w = 0.0;
        }
        loop {
            let mut norm = 0.0;
            for &i in &self.kept {
                let v: f64 = rng.sample(rand_distr_standard_normal());
                self.weights[i] = v;
                norm += v * v;
            }
            if norm.sqrt() > 1e-9 {
                for &i in &self.kept {
                    self.weights[i] /= norm.sqrt();
                }
                return;
            }
        }
    }
}

// Box-Muller, to avoid pulling in rand_distr for one sampler.
fn rand_distr_standard_normal() -> impl rand::distributions::Distribution<f64> {
    struct StdNormal;
    impl rand::distributions::Distribution<f64> for StdNormal {
        fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        }
    }
    StdNormal
}

/// A disjunction of literals behind per-literal OR gates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Clause {
    pub literals: Vec<Literal>,
    pub or_gates: Vec<f64>,
}

/// Gated CNF model: `and_gates[j]` gates clause `j` into the conjunction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GclnModel {
    pub clauses: Vec<Clause>,
    pub and_gates: Vec<f64>,
    pub relax: RelaxationConfig,
    /// When false (the default for normalized data), biases stay frozen at
    /// their initial value and the constant basis column carries offsets.
    pub learn_bias: bool,
}

impl GclnModel {
    /// Fresh CNF model of `m` clauses by `n` literals over a `dim`-wide
    /// basis. `masks` supplies one dropout mask per literal (clause-major
    /// order); weights start uniform on the unit sphere of the kept support,
    /// biases at 0, AND gates at `gate_init_and`, OR gates at
    /// `gate_init_or`.
    #[allow(clippy::too_many_arguments)]
    pub fn new_cnf(
        m: usize,
        n: usize,
        dim: usize,
        activation: Activation,
        masks: &[DropoutMask],
        relax: RelaxationConfig,
        gate_init_and: f64,
        gate_init_or: f64,
        seed: u64,
    ) -> Self {
        assert_eq!(masks.len(), m * n, "need one mask per literal");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clauses = (0..m)
            .map(|j| {
                let literals = (0..n)
                    .map(|k| {
                        let mut lit = Literal::new(dim, activation, &masks[j * n + k]);
                        lit.randomize(&mut rng);
                        lit
                    })
                    .collect();
                Clause {
                    literals,
                    or_gates: vec![gate_init_or; n],
                }
            })
            .collect();
        GclnModel {
            clauses,
            and_gates: vec![gate_init_and; m],
            relax,
            learn_bias: false,
        }
    }

    pub fn literal_count(&self) -> usize {
        self.clauses.iter().map(|c| c.literals.len()).sum()
    }

    /// Model output for one sample row, at the configured sigma.
    pub fn forward(&self, row: &[f64]) -> f64 {
        self.forward_sigma(row, self.relax.sigma)
    }

    /// Model output with an explicit Gaussian width (used while annealing).
    pub fn forward_sigma(&self, row: &[f64], sigma: f64) -> f64 {
        let clause_vals: Vec<f64> = self
            .clauses
            .iter()
            .map(|c| {
                let vs: Vec<f64> = c
                    .literals
                    .iter()
                    .map(|l| l.activate(l.linear(row), &self.relax, sigma))
                    .collect();
                gated_tconorm(&vs, &c.or_gates)
            })
            .collect();
        gated_tnorm(&clause_vals, &self.and_gates)
    }

    /// All gates within `tol` of {0, 1}?
    pub fn gates_saturated(&self, tol: f64) -> bool {
        self.max_gate_distance() <= tol
    }

    /// Largest distance of any gate from the set {0, 1}.
    pub fn max_gate_distance(&self) -> f64 {
        let dist = |g: f64| g.min(1.0 - g);
        let mut d = 0.0f64;
        for &g in &self.and_gates {
            d = d.max(dist(g));
        }
        for c in &self.clauses {
            for &g in &c.or_gates {
                d = d.max(dist(g));
            }
        }
        d
    }

    /// View of the model as a gated tree for extraction and limit-semantics
    /// evaluation.
    pub fn to_tree(&self) -> GatedNode {
        GatedNode::TNorm {
            children: self
                .clauses
                .iter()
                .map(|c| GatedNode::TConorm {
                    children: c.literals.iter().cloned().map(GatedNode::Literal).collect(),
                    gates: c.or_gates.clone(),
                })
                .collect(),
            gates: self.and_gates.clone(),
        }
    }
}

/// A gated model as a tree. The trained architecture is the two-level CNF
/// produced by [`GclnModel::to_tree`], but extraction and its soundness
/// tests also cover negation nodes and deeper nestings.
#[derive(Debug, Clone)]
pub enum GatedNode {
    TNorm {
        children: Vec<GatedNode>,
        gates: Vec<f64>,
    },
    TConorm {
        children: Vec<GatedNode>,
        gates: Vec<f64>,
    },
    Negation(Box<GatedNode>),
    Literal(Literal),
}

impl GatedNode {
    /// Continuous evaluation (matches [`GclnModel::forward`] on CNF trees).
    pub fn eval(&self, row: &[f64], relax: &RelaxationConfig) -> f64 {
        match self {
            GatedNode::TNorm { children, gates } => {
                let vs: Vec<f64> = children.iter().map(|c| c.eval(row, relax)).collect();
                gated_tnorm(&vs, gates)
            }
            GatedNode::TConorm { children, gates } => {
                let vs: Vec<f64> = children.iter().map(|c| c.eval(row, relax)).collect();
                gated_tconorm(&vs, gates)
            }
            GatedNode::Negation(inner) => 1.0 - inner.eval(row, relax),
            GatedNode::Literal(lit) => lit.activate(lit.linear(row), relax, relax.sigma),
        }
    }

    /// Limit semantics: the model value as the relaxation constants approach
    /// their sharp limits (`c1 -> 0`, `c2 -> inf`, `sigma -> 0`,
    /// `epsilon -> 0`). Literals become exact indicator functions of their
    /// linear atoms, evaluated in exact rational arithmetic over the row;
    /// with hard {0, 1} gates the whole tree evaluates to 0 or 1.
    pub fn eval_limit(&self, row: &[Rat]) -> Rat {
        match self {
            GatedNode::TNorm { children, gates } => {
                let mut acc = Rat::from_integer(1.into());
                for (c, g) in children.iter().zip(gates) {
                    let g = hard_gate(*g);
                    let v = c.eval_limit(row);
                    // 1 + g(v - 1)
                    let one = Rat::from_integer(1.into());
                    acc *= one.clone() + g * (v - one);
                }
                acc
            }
            GatedNode::TConorm { children, gates } => {
                let one = Rat::from_integer(1.into());
                let mut acc = one.clone();
                for (c, g) in children.iter().zip(gates) {
                    let g = hard_gate(*g);
                    let v = c.eval_limit(row);
                    acc *= one.clone() - g * v;
                }
                one - acc
            }
            GatedNode::Negation(inner) => Rat::from_integer(1.into()) - inner.eval_limit(row),
            GatedNode::Literal(lit) => {
                let mut z = from_f64(lit.bias).expect("finite bias");
                for &i in &lit.kept {
                    if lit.weights[i] != 0.0 {
                        let w = from_f64(lit.weights[i]).expect("finite weight");
                        z += w * &row[i];
                    }
                }
                let holds = match lit.activation {
                    Activation::GaussEq => z.is_zero(),
                    Activation::PbquGe => z >= Rat::zero(),
                    Activation::PbquLe => z <= Rat::zero(),
                };
                if holds {
                    Rat::from_integer(1.into())
                } else {
                    Rat::zero()
                }
            }
        }
    }
}

fn hard_gate(g: f64) -> Rat {
    assert!(
        g == 0.0 || g == 1.0,
        "limit semantics requires hard {{0,1}} gates, got {g}"
    );
    if g == 1.0 {
        Rat::from_integer(1.into())
    } else {
        Rat::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::DropoutMask;
    use crate::rat::rat;

    pub(crate) fn literal_with(
        dim: usize,
        weights: &[(usize, f64)],
        bias: f64,
        activation: Activation,
    ) -> Literal {
        let mut lit = Literal::new(dim, activation, &DropoutMask::all_keep(dim, 0));
        for &(i, w) in weights {
            lit.weights[i] = w;
        }
        lit.bias = bias;
        lit
    }

    #[test]
    fn all_gates_zero_outputs_one() {
        let masks: Vec<DropoutMask> = (0..4).map(|_| DropoutMask::all_keep(3, 0)).collect();
        let mut m = GclnModel::new_cnf(
            2,
            2,
            3,
            Activation::GaussEq,
            &masks,
            RelaxationConfig::default(),
            0.0,
            0.5,
            1,
        );
        m.and_gates = vec![0.0, 0.0];
        assert_eq!(m.forward(&[3.0, -1.0, 2.0]), 1.0);
    }

    #[test]
    fn single_equality_literal_peaks_on_its_hyperplane() {
        // literal: x0 - x1 = 0, gate 1
        let lit = literal_with(2, &[(0, 1.0), (1, -1.0)], 0.0, Activation::GaussEq);
        let m = GclnModel {
            clauses: vec![Clause {
                literals: vec![lit],
                or_gates: vec![1.0],
            }],
            and_gates: vec![1.0],
            relax: RelaxationConfig::default(),
            learn_bias: false,
        };
        assert_eq!(m.forward(&[0.7, 0.7]), 1.0);
        assert!(m.forward(&[0.7, 0.2]) < 1e-4);
    }

    #[test]
    fn two_level_formula_evaluates_by_hand() {
        // (3y - 3z - 2 = 0) AND ((x - 3z = 0) OR (x + y + z = 0))
        // basis columns: [1, x, y, z]
        let a1 = literal_with(4, &[(0, -2.0), (2, 3.0), (3, -3.0)], 0.0, Activation::GaussEq);
        let a2 = literal_with(4, &[(1, 1.0), (3, -3.0)], 0.0, Activation::GaussEq);
        let a3 = literal_with(4, &[(1, 1.0), (2, 1.0), (3, 1.0)], 0.0, Activation::GaussEq);
        let m = GclnModel {
            clauses: vec![
                Clause {
                    literals: vec![a1, literal_with(4, &[], 0.0, Activation::GaussEq)],
                    or_gates: vec![1.0, 0.0],
                },
                Clause {
                    literals: vec![a2, a3],
                    or_gates: vec![1.0, 1.0],
                },
            ],
            and_gates: vec![1.0, 1.0],
            relax: RelaxationConfig::default(),
            learn_bias: false,
        };
        // point satisfying 3y - 3z - 2 = 0 and x - 3z = 0:
        // z = 1/3, y = 1, x = 1 -> row (1, x, y, z)
        let row = [1.0, 1.0, 1.0, 1.0 / 3.0];
        assert!((m.forward(&row) - 1.0).abs() < 1e-12);
        // and in the exact limit semantics
        let tree = m.to_tree();
        let exact = [rat(1), rat(1), rat(1), crate::rat::ratio(1, 3)];
        assert_eq!(tree.eval_limit(&exact), rat(1));
        // breaking the first conjunct sends the limit value to 0
        let bad = [rat(1), rat(1), rat(2), crate::rat::ratio(1, 3)];
        assert_eq!(tree.eval_limit(&bad), rat(0));
    }

    #[test]
    fn mask_zeroes_are_preserved_by_randomize() {
        let mask = DropoutMask {
            keep: vec![true, false, true],
            seed: 0,
        };
        let mut lit = Literal::new(3, Activation::GaussEq, &mask);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        lit.randomize(&mut rng);
        assert_eq!(lit.weights[1], 0.0);
        let norm: f64 = lit.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }
}
