use super::terms::Term;
use super::FeatureError;
use crate::dsl::{LoopProgram, Trace, Valuation};
use crate::rat::{to_f64, Rat};
use num_traits::Zero;

/// Exact term-value matrix: one row per logged state across all traces.
#[derive(Debug, Clone)]
pub struct RawMatrix {
    pub basis: Vec<Term>,
    pub rows: Vec<Vec<Rat>>,
}

impl RawMatrix {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// CSV dump with basis names as the header row.
    pub fn to_csv(&self) -> String {
        let mut out = self
            .basis
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(",");
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(crate::rat::fmt_rat).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Appends the rows of `other` (same basis).
    pub fn extend(&mut self, other: &RawMatrix) {
        debug_assert_eq!(self.basis, other.basis);
        self.rows.extend(other.rows.iter().cloned());
    }
}

/// Evaluates the basis on every row of every trace.
///
/// Rows of aborted traces up to the abort marker are kept. For
/// non-fractional traces, any frozen initial-value variables required by the
/// basis take the trace's own initial values (the instantiation that turns a
/// relaxed invariant back into one for the original program).
pub fn build_raw_matrix(
    program: &LoopProgram,
    traces: &[Trace],
    basis: &[Term],
) -> Result<RawMatrix, FeatureError> {
    if basis.is_empty() {
        return Err(FeatureError::EmptyBasis);
    }
    let needs_frozen: Vec<&str> = {
        let mut vars: Vec<&str> = basis.iter().flat_map(|t| t.vars()).collect();
        vars.sort_unstable();
        vars.dedup();
        vars.into_iter()
            .filter(|v| !program.vars.iter().any(|pv| pv == v))
            .collect()
    };

    let mut rows = Vec::new();
    for trace in traces {
        let mut frozen = trace.frozen_inits.clone();
        if !needs_frozen.is_empty() {
            let init = program
                .init_state(&trace.init_values)
                .map_err(|source| FeatureError::TermEval {
                    term: "<init>".into(),
                    source,
                })?;
            for var in &program.vars {
                let name = program.frozen_name(var);
                if needs_frozen.iter().any(|n| *n == name) && !frozen.contains_key(&name) {
                    if let Some(v) = init.get(var) {
                        frozen.insert(name.clone(), v.clone());
                    }
                }
            }
        }
        for i in 0..trace.rows.len() {
            let mut row_vals: Valuation = trace.rows[i].clone();
            for (k, v) in &frozen {
                row_vals.insert(k.clone(), v.clone());
            }
            let mut row = Vec::with_capacity(basis.len());
            for term in basis {
                let v = term.eval(&row_vals).map_err(|source| FeatureError::TermEval {
                    term: term.to_string(),
                    source,
                })?;
                row.push(v);
            }
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Err(FeatureError::NoRows);
    }
    Ok(RawMatrix {
        basis: basis.to_vec(),
        rows,
    })
}

/// Raw matrix plus its row-normalized floating-point image.
#[derive(Debug, Clone)]
pub struct SampleMatrix {
    pub basis: Vec<Term>,
    pub raw: Vec<Vec<Rat>>,
    pub normalized: Vec<Vec<f64>>,
    /// Target L2 norm of each normalized row; `None` when normalization is
    /// disabled (ablation mode), in which case `normalized` is the plain
    /// floating-point image of `raw`.
    pub norm_target: Option<f64>,
}

/// Rescales each row to L2 norm `l`.
///
/// The scale factor is a positive per-row scalar, so the sign of any linear
/// form over a row is unchanged; zero rows cannot occur because the basis
/// contains the constant term.
pub fn normalize_rows(raw: &RawMatrix, l: Option<f64>) -> SampleMatrix {
    let normalized = raw
        .rows
        .iter()
        .map(|row| {
            let vals: Vec<f64> = row.iter().map(to_f64).collect();
            match l {
                None => vals,
                Some(l) => {
                    let norm = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
                    assert!(
                        norm > 0.0,
                        "all-zero row cannot be normalized (missing constant term?)"
                    );
                    let scale = l / norm;
                    vals.iter().map(|v| v * scale).collect()
                }
            }
        })
        .collect();
    SampleMatrix {
        basis: raw.basis.clone(),
        raw: raw.rows.clone(),
        normalized,
        norm_target: l,
    }
}

impl SampleMatrix {
    /// Column index of the constant term, if present.
    pub fn constant_column(&self) -> Option<usize> {
        self.basis.iter().position(|t| t.is_constant())
    }

    /// Exact sign of `w . raw_row + c` for a rational weight vector.
    pub fn raw_sign(&self, row: usize, weights: &[Rat], constant: &Rat) -> std::cmp::Ordering {
        let mut acc = constant.clone();
        for (w, v) in weights.iter().zip(&self.raw[row]) {
            if !w.is_zero() {
                acc += w * v;
            }
        }
        acc.cmp(&Rat::zero())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;
    use crate::features::enumerate_terms;
    use crate::rat::rat;

    #[test]
    fn sqrt_matrix_layout_matches_trace() {
        let p = parse_program(
            "//pre: n >= 0\na = 0; s = 1; t = 1;\nwhile (s <= n) { a += 1; t += 2; s += t; }",
        )
        .unwrap();
        let t = p
            .execute_trace(&[("n".to_string(), rat(15))].into(), 50)
            .unwrap();
        let basis = enumerate_terms(&p.vars, 2, &[], &[]);
        let m = build_raw_matrix(&p, &[t], &basis).unwrap();
        // header starts with the constant and the degree-1 terms in var order
        let csv = m.to_csv();
        assert!(csv.starts_with("1,a,s,t,n,"));
        // second row: a=1, s=4, t=3, n=15 and a*s = 4, s*t = 12, t^2 = 9
        let names: Vec<String> = basis.iter().map(|t| t.to_string()).collect();
        let col = |n: &str| names.iter().position(|x| x == n).unwrap();
        assert_eq!(m.rows[1][col("a*s")], rat(4));
        assert_eq!(m.rows[1][col("s*t")], rat(12));
        assert_eq!(m.rows[1][col("t^2")], rat(9));
    }

    #[test]
    fn normalized_rows_hit_the_target_norm() {
        let p = parse_program(
            "//pre: n >= 0\na = 0; s = 1; t = 1;\nwhile (s <= n) { a += 1; t += 2; s += t; }",
        )
        .unwrap();
        let t = p
            .execute_trace(&[("n".to_string(), rat(24))].into(), 50)
            .unwrap();
        let basis = enumerate_terms(&p.vars, 2, &[], &[]);
        let m = build_raw_matrix(&p, &[t], &basis).unwrap();
        let sm = normalize_rows(&m, Some(10.0));
        for (raw, scaled) in m.rows.iter().zip(&sm.normalized) {
            let norm = scaled.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 10.0).abs() < 1e-9 * 10.0);
            // positive scaling: signs and zero-sets match the raw row
            for (r, n) in raw.iter().zip(scaled) {
                let rf = to_f64(r);
                assert_eq!(rf > 0.0, *n > 0.0, "sign flip");
                assert_eq!(rf < 0.0, *n < 0.0, "sign flip");
            }
        }
        // a row already at norm l is unchanged
        let unit = RawMatrix {
            basis: vec![Term::one(), Term::var("x")],
            rows: vec![vec![rat(6), rat(8)]],
        };
        let sm = normalize_rows(&unit, Some(10.0));
        assert_eq!(sm.normalized[0], vec![6.0, 8.0]);
    }
}
