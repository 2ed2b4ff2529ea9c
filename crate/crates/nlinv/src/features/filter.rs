use super::matrix::RawMatrix;
use super::terms::Term;
use crate::dsl::{LoopProgram, Trace};
use crate::rat::{to_f64, Rat};
use num_traits::Zero;
use std::collections::BTreeSet;

#[derive(Debug, Clone)]
pub struct FilterConfig {
    /// Relative slack over the fastest degree-1 slope before a term counts
    /// as dominating.
    pub rel_margin: f64,
    /// Absolute slack in log-growth units per row.
    pub abs_margin: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            rel_margin: 0.10,
            abs_margin: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub kept: Vec<Term>,
    pub dropped: Vec<Term>,
    pub warnings: Vec<String>,
}

/// Growth-rate term filter.
///
/// Along the longest trace, a term whose log-magnitude slope strictly
/// exceeds the slope of every degree-1 term cannot be balanced by the other
/// terms in a linear relation, so it is a candidate for removal. A candidate
/// is only actually removed if it does not participate in any exact linear
/// relation of the full raw matrix (rank test over the rationals, run modulo
/// a large prime, which can only err toward keeping a term). With fewer than
/// 3 rows, or when the matrix has full column rank (no relations to
/// protect), the filter is the identity.
pub fn growth_rate_filter(
    program: &LoopProgram,
    traces: &[Trace],
    basis: &[Term],
    matrix: &RawMatrix,
    cfg: &FilterConfig,
) -> FilterOutcome {
    let mut warnings = Vec::new();
    let longest = traces.iter().max_by_key(|t| t.rows.len());
    let longest = match longest {
        Some(t) if t.rows.len() >= 3 => t,
        _ => {
            warnings.push("fewer than 3 rows in every trace; growth filter disabled".into());
            return FilterOutcome {
                kept: basis.to_vec(),
                dropped: Vec::new(),
                warnings,
            };
        }
    };

    // per-term log-magnitude slope over the longest trace
    let slopes: Vec<f64> = basis
        .iter()
        .map(|term| {
            let vals: Vec<f64> = (0..longest.rows.len())
                .map(|i| {
                    let row = longest.augmented_row_with_defaults(program, i);
                    term.eval(&row).map(|r| to_f64(&r).abs()).unwrap_or(0.0)
                })
                .collect();
            log_slope(&vals)
        })
        .collect();

    let base_slope = basis
        .iter()
        .zip(&slopes)
        .filter(|(t, _)| t.degree() <= 1)
        .map(|(_, s)| *s)
        .fold(0.0f64, f64::max);
    let threshold = base_slope * (1.0 + cfg.rel_margin) + cfg.abs_margin;

    let candidates: Vec<usize> = basis
        .iter()
        .enumerate()
        .filter(|(i, t)| t.degree() >= 2 && slopes[*i] > threshold)
        .map(|(i, _)| i)
        .collect();

    if candidates.is_empty() {
        return FilterOutcome {
            kept: basis.to_vec(),
            dropped: Vec::new(),
            warnings,
        };
    }

    let participants = relation_participants_modp(&matrix.rows);
    if participants.is_empty() {
        // full column rank: no exact linear relation exists at all, so there
        // is nothing for the filter to protect or to gain
        warnings.push("matrix has full column rank; growth filter disabled".into());
        return FilterOutcome {
            kept: basis.to_vec(),
            dropped: Vec::new(),
            warnings,
        };
    }

    let dropped_set: BTreeSet<usize> = candidates
        .into_iter()
        .filter(|i| !participants.contains(i))
        .collect();

    let kept = basis
        .iter()
        .enumerate()
        .filter(|(i, _)| !dropped_set.contains(i))
        .map(|(_, t)| t.clone())
        .collect();
    let dropped = dropped_set.iter().map(|&i| basis[i].clone()).collect();
    FilterOutcome {
        kept,
        dropped,
        warnings,
    }
}

impl Trace {
    /// Like [`Trace::augmented_row`], but fills frozen columns a term might
    /// need from this trace's own initial values.
    pub(crate) fn augmented_row_with_defaults(
        &self,
        program: &LoopProgram,
        i: usize,
    ) -> crate::dsl::Valuation {
        let mut row = self.augmented_row(i);
        if !self.fractional {
            if let Ok(init) = program.init_state(&self.init_values) {
                for var in &program.vars {
                    let name = program.frozen_name(var);
                    if let Some(v) = init.get(var) {
                        row.entry(name).or_insert_with(|| v.clone());
                    }
                }
            }
        }
        row
    }
}

/// Least-squares slope of `log1p(v)` against the row index.
fn log_slope(vals: &[f64]) -> f64 {
    let n = vals.len() as f64;
    if vals.len() < 2 {
        return 0.0;
    }
    let ys: Vec<f64> = vals.iter().map(|v| v.abs().ln_1p()).collect();
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mean_x;
        num += dx * (y - mean_y);
        den += dx * dx;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

// ---- exact linear-relation machinery ----

const P: u128 = (1u128 << 61) - 1; // Mersenne prime

fn subm(a: u64, b: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        (a as u128 + P - b as u128) as u64
    }
}

fn mulm(a: u64, b: u64) -> u64 {
    (a as u128 * b as u128 % P) as u64
}

fn powm(mut a: u64, mut e: u128) -> u64 {
    let mut acc = 1u64;
    while e > 0 {
        if e & 1 == 1 {
            acc = mulm(acc, a);
        }
        a = mulm(a, a);
        e >>= 1;
    }
    acc
}

fn invm(a: u64) -> u64 {
    powm(a, P - 2)
}

fn rat_modp(r: &Rat) -> u64 {
    let p = num_bigint::BigInt::from(P);
    let num = ((r.numer() % &p) + &p) % &p;
    let den = ((r.denom() % &p) + &p) % &p;
    let num: u64 = num.try_into().unwrap();
    let den: u64 = den.try_into().unwrap();
    mulm(num, invm(den))
}

/// Column indices that participate in at least one exact linear relation of
/// the matrix (nonzero entry in some null-space vector), computed modulo a
/// 61-bit prime. A modular coincidence can only create a spurious relation,
/// i.e. only report *more* participants, which keeps the filter safe.
pub(crate) fn relation_participants_modp(rows: &[Vec<Rat>]) -> BTreeSet<usize> {
    if rows.is_empty() {
        return BTreeSet::new();
    }
    let ncols = rows[0].len();
    let mut m: Vec<Vec<u64>> = rows
        .iter()
        .map(|r| r.iter().map(rat_modp).collect())
        .collect();

    // reduced row echelon form
    let nrows = m.len();
    let mut pivot_cols = Vec::new();
    let mut r = 0usize;
    for c in 0..ncols {
        let Some(pr) = (r..nrows).find(|&i| m[i][c] != 0) else {
            continue;
        };
        m.swap(r, pr);
        let inv = invm(m[r][c]);
        for x in m[r].iter_mut() {
            *x = mulm(*x, inv);
        }
        for i in 0..nrows {
            if i != r && m[i][c] != 0 {
                let f = m[i][c];
                let (head, tail) = m.split_at_mut(i.max(r));
                let (row_i, row_r) = if i < r {
                    (&mut head[i], &tail[0])
                } else {
                    (&mut tail[0], &head[r])
                };
                for (x, y) in row_i.iter_mut().zip(row_r.iter()) {
                    *x = subm(*x, mulm(f, *y));
                }
            }
        }
        pivot_cols.push(c);
        r += 1;
        if r == nrows {
            break;
        }
    }

    // each free column yields a null vector supported on itself plus the
    // pivot columns with nonzero coefficients in its column of the RREF
    let pivot_set: BTreeSet<usize> = pivot_cols.iter().copied().collect();
    let mut participants = BTreeSet::new();
    for c in 0..ncols {
        if pivot_set.contains(&c) {
            continue;
        }
        participants.insert(c);
        for (ri, &pc) in pivot_cols.iter().enumerate() {
            if m[ri][c] != 0 {
                participants.insert(pc);
            }
        }
    }
    participants
}

/// Exact rank over the rationals; used as the oracle in tests and available
/// for small matrices.
pub fn rank_exact(rows: &[Vec<Rat>]) -> usize {
    let mut m: Vec<Vec<Rat>> = rows.to_vec();
    let nrows = m.len();
    let ncols = if nrows == 0 { 0 } else { m[0].len() };
    let mut rank = 0usize;
    for c in 0..ncols {
        let Some(pr) = (rank..nrows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(rank, pr);
        let pivot = m[rank][c].clone();
        for x in m[rank].iter_mut() {
            *x /= pivot.clone();
        }
        for i in 0..nrows {
            if i != rank && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                let base = m[rank].clone();
                for (x, y) in m[i].iter_mut().zip(base.iter()) {
                    *x -= &f * y;
                }
            }
        }
        rank += 1;
        if rank == nrows {
            break;
        }
    }
    rank
}
