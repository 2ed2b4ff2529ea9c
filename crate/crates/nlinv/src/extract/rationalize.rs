use crate::rat::{from_f64, Rat};
use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

/// Maximum denominators tried when rounding learned coefficients, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RationalizationConfig {
    pub max_denominators: Vec<u32>,
}

impl Default for RationalizationConfig {
    fn default() -> Self {
        RationalizationConfig {
            max_denominators: vec![10, 15, 30],
        }
    }
}

impl RationalizationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_denominators.is_empty() {
            return Err("need at least one maximum denominator".into());
        }
        if self.max_denominators.windows(2).any(|w| w[0] >= w[1]) || self.max_denominators[0] == 0
        {
            return Err("maximum denominators must be positive and increasing".into());
        }
        Ok(())
    }
}

/// Best rational approximation of `x` with denominator at most `max_den`,
/// by the continued-fraction/semiconvergent construction.
pub fn best_rational(x: f64, max_den: u32) -> Rat {
    assert!(max_den >= 1);
    assert!(x.is_finite());
    let negative = x < 0.0;
    let x_abs = x.abs();

    // convergents p/q of the continued fraction of x_abs
    let (mut p0, mut q0) = (BigInt::from(1), BigInt::from(0)); // p_{-1}/q_{-1}
    let (mut p1, mut q1) = (
        BigInt::from(x_abs.floor() as i64),
        BigInt::from(1),
    ); // p_0/q_0
    let mut frac = x_abs - x_abs.floor();
    let bound = BigInt::from(max_den);

    loop {
        if frac.abs() < 1e-15 {
            break;
        }
        let recip = 1.0 / frac;
        let a = recip.floor();
        if !a.is_finite() || a >= 1e18 {
            break;
        }
        let a_int = BigInt::from(a as i64);
        let p2 = &a_int * &p1 + &p0;
        let q2 = &a_int * &q1 + &q0;
        if q2 > bound {
            // best semiconvergent: largest k with q0 + k*q1 <= max_den
            let k = (&bound - &q0) / &q1;
            if k > BigInt::zero() {
                let sp = &k * &p1 + &p0;
                let sq = &k * &q1 + &q0;
                // take whichever of p1/q1 and the semiconvergent is closer
                let conv = Rat::new(p1.clone(), q1.clone());
                let semi = Rat::new(sp, sq);
                let xr = from_f64(x_abs).unwrap();
                let better = if (xr.clone() - &semi).abs() < (xr.clone() - &conv).abs() {
                    semi
                } else {
                    conv
                };
                return finish(better, negative);
            }
            break;
        }
        (p0, q0) = (p1, q1);
        (p1, q1) = (p2, q2);
        frac = recip - a;
    }
    finish(Rat::new(p1, q1), negative)
}

fn finish(r: Rat, negative: bool) -> Rat {
    if negative {
        -r
    } else {
        r
    }
}

/// Rounds learned real coefficients to integer-coefficient candidates.
///
/// The vector `(w, b)` is divided by the largest weight magnitude, each
/// entry is replaced by its best rational approximation with denominator at
/// most `D`, and the shared denominators are cleared, yielding one integer
/// candidate per configured `D` (in order). Returns an empty list for an
/// all-zero weight vector.
pub fn rationalize(w: &[f64], b: f64, cfg: &RationalizationConfig) -> Vec<(Vec<Rat>, Rat)> {
    let max_mag = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if max_mag < 1e-12 {
        return Vec::new();
    }
    let scaled: Vec<f64> = w.iter().map(|v| v / max_mag).collect();
    let scaled_b = b / max_mag;

    let mut out = Vec::new();
    for &d in &cfg.max_denominators {
        let approx: Vec<Rat> = scaled.iter().map(|&v| best_rational(v, d)).collect();
        let approx_b = best_rational(scaled_b, d);
        // clear shared denominators
        let mut lcm = BigInt::from(1);
        for v in approx.iter().chain(std::iter::once(&approx_b)) {
            lcm = num_integer::Integer::lcm(&lcm, v.denom());
        }
        let scale = Rat::from_integer(lcm);
        let ints: Vec<Rat> = approx.iter().map(|v| v * &scale).collect();
        let int_b = approx_b * &scale;
        out.push((ints, int_b));
    }
    out
}
