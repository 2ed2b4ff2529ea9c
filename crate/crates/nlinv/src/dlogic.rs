//! Differentiable logic kernel: t-norm algebra, gated connectives, and the
//! relaxed predicate activations, each with analytic first derivatives.
//!
//! Conjunction is a t-norm on `[0, 1]` truth values and disjunction the
//! De Morgan dual t-conorm. The gated variants take one gate parameter per
//! operand; a gate of 1 passes the operand through, a gate of 0 removes it
//! (the operand degenerates to the connective's identity element).
//!
//! Comparisons relax to smooth activations of the signed slack `d`:
//! equalities use a Gaussian bump, inequalities the piecewise biased
//! quadratic unit (PBQU), which decays fast on the violating side (`c1`
//! small) and slowly on the satisfying side (`c2` large) so that training
//! prefers bounds that stay close to the data.

use serde::{Deserialize, Serialize};

/// A continuous truth value in `[0, 1]`.
///
/// Every primitive in this module maps truth values to truth values by
/// construction; the constructor only absorbs floating-point dust.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TruthValue(f64);

impl TruthValue {
    pub fn new(v: f64) -> Self {
        debug_assert!(
            (-1e-9..=1.0 + 1e-9).contains(&v),
            "truth value out of range: {v}"
        );
        TruthValue(v.clamp(0.0, 1.0))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// A t-norm: the continuous stand-in for boolean conjunction.
///
/// Implementations must be consistent (`t ⊗ 1 = t`, `t ⊗ 0 = 0`),
/// commutative, associative, and monotone. The model always runs on
/// [`Product`]; the other instances exist so the axiom suite can exercise
/// the algebra generically.
pub trait TNorm {
    fn combine(a: f64, b: f64) -> f64;

    /// De Morgan dual t-conorm.
    fn dual(a: f64, b: f64) -> f64 {
        1.0 - Self::combine(1.0 - a, 1.0 - b)
    }
}

/// Product t-norm `x ⊗ y = x·y`. Satisfies `t > 0 ∧ u > 0 ⟹ t ⊗ u > 0`.
pub struct Product;

impl TNorm for Product {
    fn combine(a: f64, b: f64) -> f64 {
        a * b
    }
}

/// Gödel t-norm `min(x, y)`.
pub struct Godel;

impl TNorm for Godel {
    fn combine(a: f64, b: f64) -> f64 {
        a.min(b)
    }
}

/// Łukasiewicz t-norm `max(0, x + y - 1)`.
pub struct Lukasiewicz;

impl TNorm for Lukasiewicz {
    fn combine(a: f64, b: f64) -> f64 {
        (a + b - 1.0).max(0.0)
    }
}

pub fn tnorm(x: TruthValue, y: TruthValue) -> TruthValue {
    TruthValue::new(Product::combine(x.get(), y.get()))
}

pub fn tconorm(x: TruthValue, y: TruthValue) -> TruthValue {
    TruthValue::new(Product::dual(x.get(), y.get()))
}

pub fn negate(x: TruthValue) -> TruthValue {
    TruthValue::new(1.0 - x.get())
}

/// ∂(x⊗y) with respect to (x, y).
pub fn tnorm_grad(x: f64, y: f64) -> (f64, f64) {
    (y, x)
}

/// ∂(x⊕y) with respect to (x, y).
pub fn tconorm_grad(x: f64, y: f64) -> (f64, f64) {
    (1.0 - y, 1.0 - x)
}

/// Gated conjunction: `Π_i (1 + g_i(x_i - 1))` under the product t-norm.
///
/// With all gates 0 the result is 1 regardless of the inputs; a gate of 1
/// passes its operand into the product unchanged.
pub fn gated_tnorm(xs: &[f64], gs: &[f64]) -> f64 {
    assert_eq!(xs.len(), gs.len());
    assert!(!xs.is_empty());
    xs.iter()
        .zip(gs)
        .map(|(&x, &g)| 1.0 + g * (x - 1.0))
        .product()
}

/// Gated disjunction: `1 - Π_i (1 - g_i·x_i)`.
///
/// With all gates 0 the result is 0; a gate of 1 passes its operand through.
pub fn gated_tconorm(xs: &[f64], gs: &[f64]) -> f64 {
    assert_eq!(xs.len(), gs.len());
    assert!(!xs.is_empty());
    1.0 - xs
        .iter()
        .zip(gs)
        .map(|(&x, &g)| 1.0 - g * x)
        .product::<f64>()
}

/// For each index i, the product of all entries except i.
///
/// Uses prefix/suffix sweeps so zeros are handled without division.
pub fn products_excluding(vals: &[f64]) -> Vec<f64> {
    let n = vals.len();
    let mut out = vec![1.0; n];
    let mut acc = 1.0;
    for i in 0..n {
        out[i] = acc;
        acc *= vals[i];
    }
    acc = 1.0;
    for i in (0..n).rev() {
        out[i] *= acc;
        acc *= vals[i];
    }
    out
}

/// Partials of [`gated_tnorm`]: returns (∂/∂x_i, ∂/∂g_i) per operand.
pub fn gated_tnorm_grad(xs: &[f64], gs: &[f64]) -> Vec<(f64, f64)> {
    let factors: Vec<f64> = xs
        .iter()
        .zip(gs)
        .map(|(&x, &g)| 1.0 + g * (x - 1.0))
        .collect();
    let rest = products_excluding(&factors);
    xs.iter()
        .zip(gs)
        .zip(rest)
        .map(|((&x, &g), r)| (g * r, (x - 1.0) * r))
        .collect()
}

/// Partials of [`gated_tconorm`]: returns (∂/∂x_i, ∂/∂g_i) per operand.
pub fn gated_tconorm_grad(xs: &[f64], gs: &[f64]) -> Vec<(f64, f64)> {
    let factors: Vec<f64> = xs.iter().zip(gs).map(|(&x, &g)| 1.0 - g * x).collect();
    let rest = products_excluding(&factors);
    xs.iter()
        .zip(gs)
        .zip(rest)
        .map(|((&x, &g), r)| (g * r, x * r))
        .collect()
}

/// Constants of the relaxed predicate activations.
///
/// `c1`/`c2` shape the PBQU (violating and satisfying side respectively),
/// `sigma` the equality Gaussian, and `epsilon` the shift that turns strict
/// comparisons into non-strict ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelaxationConfig {
    pub c1: f64,
    pub c2: f64,
    pub sigma: f64,
    pub epsilon: f64,
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        RelaxationConfig {
            c1: 1.0,
            c2: 50.0,
            sigma: 0.1,
            epsilon: 0.5,
        }
    }
}

impl RelaxationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.c1 > 0.0 && self.c2 > 0.0 && self.sigma > 0.0 && self.epsilon > 0.0) {
            return Err("relaxation constants must be positive".into());
        }
        if self.c1 >= self.c2 {
            return Err("c1 must be smaller than c2".into());
        }
        Ok(())
    }
}

/// Relaxed `t ≥ u` as a function of the slack `d = t - u`.
///
/// Peaks at exactly 1 when `d = 0`; decays as `c1²/(d²+c1²)` on the
/// violating side and `c2²/(d²+c2²)` on the satisfying side.
pub fn pbqu_ge(d: f64, cfg: &RelaxationConfig) -> TruthValue {
    let c = if d < 0.0 { cfg.c1 } else { cfg.c2 };
    TruthValue::new(c * c / (d * d + c * c))
}

/// Relaxed `t ≤ u`: the mirror image of [`pbqu_ge`].
pub fn pbqu_le(d: f64, cfg: &RelaxationConfig) -> TruthValue {
    pbqu_ge(-d, cfg)
}

/// Relaxed `t > u`, i.e. `t ≥ u + ε`.
pub fn pbqu_gt(d: f64, cfg: &RelaxationConfig) -> TruthValue {
    pbqu_ge(d - cfg.epsilon, cfg)
}

/// Relaxed `t < u`, i.e. `t ≤ u - ε`.
pub fn pbqu_lt(d: f64, cfg: &RelaxationConfig) -> TruthValue {
    pbqu_le(d + cfg.epsilon, cfg)
}

/// d(pbqu_ge)/dd. Both one-sided derivatives vanish at the breakpoint
/// `d = 0`, so the activation is C¹ there; the `d ≥ 0` branch is used.
pub fn pbqu_ge_grad(d: f64, cfg: &RelaxationConfig) -> f64 {
    let c = if d < 0.0 { cfg.c1 } else { cfg.c2 };
    let c2 = c * c;
    let den = d * d + c2;
    -2.0 * c2 * d / (den * den)
}

pub fn pbqu_le_grad(d: f64, cfg: &RelaxationConfig) -> f64 {
    -pbqu_ge_grad(-d, cfg)
}

pub fn pbqu_gt_grad(d: f64, cfg: &RelaxationConfig) -> f64 {
    pbqu_ge_grad(d - cfg.epsilon, cfg)
}

pub fn pbqu_lt_grad(d: f64, cfg: &RelaxationConfig) -> f64 {
    pbqu_le_grad(d + cfg.epsilon, cfg)
}

/// Relaxed `t = u` as a Gaussian bump in the slack `d = t - u`.
pub fn gauss_eq(d: f64, sigma: f64) -> TruthValue {
    TruthValue::new((-d * d / (2.0 * sigma * sigma)).exp())
}

/// d(gauss_eq)/dd.
pub fn gauss_eq_grad(d: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    -d / s2 * (-d * d / (2.0 * s2)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CFG: RelaxationConfig = RelaxationConfig {
        c1: 1.0,
        c2: 50.0,
        sigma: 0.1,
        epsilon: 0.5,
    };

    fn tv(v: f64) -> TruthValue {
        TruthValue::new(v)
    }

    #[test]
    fn tnorm_identity_annihilator_product() {
        assert_eq!(tnorm(tv(0.3), tv(1.0)).get(), 0.3);
        assert_eq!(tnorm(tv(0.3), tv(0.0)).get(), 0.0);
        assert_eq!(tnorm(tv(0.5), tv(0.5)).get(), 0.25);
    }

    #[test]
    fn tconorm_identity_absorption_demorgan() {
        assert!((tconorm(tv(0.3), tv(0.0)).get() - 0.3).abs() < 1e-15);
        assert_eq!(tconorm(tv(0.3), tv(1.0)).get(), 1.0);
        assert_eq!(tconorm(tv(0.5), tv(0.5)).get(), 0.75);
    }

    #[test]
    fn gated_tnorm_case_table() {
        // all gates 0 -> 1 regardless of inputs
        assert_eq!(gated_tnorm(&[0.13, 0.87], &[0.0, 0.0]), 1.0);
        // g = (1, 0) -> first input passes through
        assert_eq!(gated_tnorm(&[0.4, 0.7], &[1.0, 0.0]), 0.4);
        // g = (1, 1) -> plain t-norm
        assert_eq!(gated_tnorm(&[0.4, 0.7], &[1.0, 1.0]), 0.4 * 0.7);
    }

    #[test]
    fn gated_tconorm_case_table() {
        assert_eq!(gated_tconorm(&[0.9, 0.2], &[0.0, 0.0]), 0.0);
        assert!((gated_tconorm(&[0.9, 0.2], &[0.0, 1.0]) - 0.2).abs() < 1e-15);
        assert!((gated_tconorm(&[0.5, 0.5], &[1.0, 1.0]) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn pbqu_anchor_points() {
        assert_eq!(pbqu_ge(0.0, &CFG).get(), 1.0);
        assert!((pbqu_ge(-CFG.c1, &CFG).get() - 0.5).abs() < 1e-15);
        assert!((pbqu_ge(CFG.c2, &CFG).get() - 0.5).abs() < 1e-15);
        assert_eq!(pbqu_le(0.0, &CFG).get(), 1.0);
        assert_eq!(pbqu_gt(CFG.epsilon, &CFG).get(), 1.0);
        assert_eq!(pbqu_lt(-CFG.epsilon, &CFG).get(), 1.0);
    }

    #[test]
    fn pbqu_limit_behavior() {
        // c1 -> 0 sends the violating side to 0, c2 -> inf sends the
        // satisfying side to 1; checked at a concrete small/large pair.
        let cfg = RelaxationConfig {
            c1: 1e-6,
            c2: 1e6,
            sigma: 0.1,
            epsilon: 0.5,
        };
        for k in 1..=100 {
            let d = k as f64 * 10.0; // d in (0, 1000]: within c2*1e-3
            assert!(pbqu_ge(-d, &cfg).get() < 1e-6);
            assert!(pbqu_ge(d, &cfg).get() > 1.0 - 1e-6);
        }
    }

    #[test]
    fn gauss_anchor_points() {
        assert_eq!(gauss_eq(0.0, 0.1).get(), 1.0);
        let want = (-0.5f64).exp();
        assert!((gauss_eq(0.1, 0.1).get() - want).abs() < 1e-15);
    }

    #[test]
    fn simple_grads_are_analytic() {
        assert_eq!(tnorm_grad(0.3, 0.8), (0.8, 0.3));
        assert_eq!(gauss_eq_grad(0.0, 0.1), 0.0);
        assert_eq!(pbqu_ge_grad(0.0, &CFG), 0.0);
        assert_eq!(pbqu_ge_grad(-1e-12, &CFG).signum(), 1.0);
    }

    fn central_diff(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-5;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn primitive_grads_match_finite_differences() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut checked = 0;
        while checked < 1000 {
            let d = (next() - 0.5) * 20.0;
            // skip a neighborhood of the PBQU breakpoint and the strict-shift
            // breakpoints, where the one-sided forms differ
            if d.abs() < 1e-4
                || (d - CFG.epsilon).abs() < 1e-4
                || (d + CFG.epsilon).abs() < 1e-4
            {
                continue;
            }
            checked += 1;
            let fd = central_diff(|z| pbqu_ge(z, &CFG).get(), d);
            assert!(close(pbqu_ge_grad(d, &CFG), fd, 1e-5), "pbqu_ge at {d}");
            let fd = central_diff(|z| pbqu_le(z, &CFG).get(), d);
            assert!(close(pbqu_le_grad(d, &CFG), fd, 1e-5), "pbqu_le at {d}");
            let fd = central_diff(|z| pbqu_gt(z, &CFG).get(), d);
            assert!(close(pbqu_gt_grad(d, &CFG), fd, 1e-5), "pbqu_gt at {d}");
            let fd = central_diff(|z| pbqu_lt(z, &CFG).get(), d);
            assert!(close(pbqu_lt_grad(d, &CFG), fd, 1e-5), "pbqu_lt at {d}");
            let fd = central_diff(|z| gauss_eq(z, 1.3).get(), d);
            assert!(close(gauss_eq_grad(d, 1.3), fd, 1e-5), "gauss at {d}");

            let x = next();
            let y = next();
            let g1 = next();
            let g2 = next();
            let fd = central_diff(|z| gated_tnorm(&[z, y], &[g1, g2]), x);
            assert!(close(gated_tnorm_grad(&[x, y], &[g1, g2])[0].0, fd, 1e-5));
            let fd = central_diff(|z| gated_tnorm(&[x, y], &[g1, z]), g2);
            assert!(close(gated_tnorm_grad(&[x, y], &[g1, g2])[1].1, fd, 1e-5));
            let fd = central_diff(|z| gated_tconorm(&[z, y], &[g1, g2]), x);
            assert!(close(gated_tconorm_grad(&[x, y], &[g1, g2])[0].0, fd, 1e-5));
            let fd = central_diff(|z| gated_tconorm(&[x, y], &[g1, z]), g2);
            assert!(close(gated_tconorm_grad(&[x, y], &[g1, g2])[1].1, fd, 1e-5));
        }
    }

    #[test]
    fn products_excluding_handles_zeros() {
        assert_eq!(products_excluding(&[2.0, 0.0, 3.0]), vec![0.0, 6.0, 0.0]);
        assert_eq!(products_excluding(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(products_excluding(&[5.0]), vec![1.0]);
    }

    fn axiom_suite<T: TNorm>(a: f64, b: f64, c: f64) {
        let tol = 1e-12;
        assert!((T::combine(a, 1.0) - a).abs() < tol, "identity");
        assert!(T::combine(a, 0.0).abs() < tol, "annihilator");
        assert!((T::combine(a, b) - T::combine(b, a)).abs() < tol, "comm");
        let lhs = T::combine(a, T::combine(b, c));
        let rhs = T::combine(T::combine(a, b), c);
        assert!((lhs - rhs).abs() < 1e-9, "assoc");
        // monotone: a <= b implies a⊗c <= b⊗c
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        assert!(T::combine(lo, c) <= T::combine(hi, c) + tol, "monotone");
    }

    proptest! {
        #[test]
        fn tnorm_axioms(a in 0.0f64..=1.0, b in 0.0f64..=1.0, c in 0.0f64..=1.0) {
            axiom_suite::<Product>(a, b, c);
            axiom_suite::<Godel>(a, b, c);
            axiom_suite::<Lukasiewicz>(a, b, c);
        }

        #[test]
        fn product_has_positivity_property(a in 1e-100f64..=1.0, b in 1e-100f64..=1.0) {
            // Property 1: t > 0 and u > 0 imply t ⊗ u > 0.
            prop_assert!(Product::combine(a, b) > 0.0);
        }

        #[test]
        fn negation_involution(t in 0.0f64..=1.0) {
            prop_assert!((negate(negate(TruthValue::new(t))).get() - t).abs() < 1e-15);
        }

        #[test]
        fn gauss_is_symmetric(d in -50.0f64..=50.0) {
            prop_assert_eq!(gauss_eq(d, 0.7).get(), gauss_eq(-d, 0.7).get());
        }

        #[test]
        fn gated_demorgan_consistency(
            xs in proptest::collection::vec(0.0f64..=1.0, 1..5),
            seed in 0u64..1000,
        ) {
            let mut s = seed.wrapping_mul(0x2545F4914F6CDD1D).wrapping_add(1);
            let gs: Vec<f64> = (0..xs.len()).map(|_| {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                (s >> 11) as f64 / (1u64 << 53) as f64
            }).collect();
            let flipped: Vec<f64> = xs.iter().map(|x| 1.0 - x).collect();
            let lhs = gated_tconorm(&xs, &gs);
            let rhs = 1.0 - gated_tnorm(&flipped, &gs);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn gated_tnorm_monotone_in_inputs(
            x in 0.0f64..=1.0, dx in 0.0f64..=1.0, y in 0.0f64..=1.0,
            g1 in 0.0f64..=1.0, g2 in 0.0f64..=1.0,
        ) {
            let hi = (x + dx).min(1.0);
            let a = gated_tnorm(&[x, y], &[g1, g2]);
            let b = gated_tnorm(&[hi, y], &[g1, g2]);
            prop_assert!(a <= b + 1e-12);
        }

        #[test]
        fn pbqu_shape(d in -100.0f64..=100.0) {
            let v = pbqu_ge(d, &CFG).get();
            prop_assert!(v > 0.0 && v <= 1.0);
            // decreasing in |d| on each side
            let farther = if d < 0.0 { d - 0.5 } else { d + 0.5 };
            prop_assert!(pbqu_ge(farther, &CFG).get() <= v);
            // mirrored pair
            prop_assert_eq!(pbqu_le(d, &CFG).get(), pbqu_ge(-d, &CFG).get());
        }
    }
}
