use super::data_filter::atom_holds_on_matrix;
use super::extraction::finalize_atom;
use super::rationalize::RationalizationConfig;
use crate::features::{RawMatrix, Term};
use crate::gcln::{Activation, GclnModel};
use std::collections::BTreeSet;

/// Harvests equality atoms from every Gaussian literal of a trained model by
/// rounding with support refinement.
///
/// A trained literal converges to some direction of the data's null space,
/// often a mixture of several exact relations; direct rounding then fails or
/// lands on an unhelpfully wide combination. Starting from the literal's
/// kept support, coordinates are deleted one at a time (weakest learned
/// weight first) as long as the remaining support still carries an exact
/// relation; whenever the relation on a support is unique, it is refit as
/// the smallest eigenvector of the restricted Gram matrix, rationalized, and
/// kept if it holds exactly on the raw data. The result is deduplicated and
/// ordered simplest-first.
pub fn harvest_equalities(
    model: &GclnModel,
    basis: &[Term],
    rows_norm: &[Vec<f64>],
    rat_cfg: &RationalizationConfig,
    raw: &RawMatrix,
    max_atoms: usize,
) -> Vec<super::Atom> {
    let mut atoms: BTreeSet<super::Atom> = BTreeSet::new();
    for clause in &model.clauses {
        for lit in &clause.literals {
            if lit.activation != Activation::GaussEq {
                continue;
            }
            polish_literal(&lit.weights, rows_norm, basis, rat_cfg, raw, &mut atoms);
        }
    }
    let mut out: Vec<super::Atom> = atoms.into_iter().collect();
    out.sort_by_key(|a| {
        let width: usize = a.coeffs.len();
        let magnitude = a
            .coeffs
            .values()
            .map(|c| c.numer().magnitude().bits())
            .max()
            .unwrap_or(0);
        (width, magnitude, a.clone())
    });
    out.truncate(max_atoms);
    out
}

/// Per-literal budget on explored supports.
const MAX_NODES: usize = 60;

fn polish_literal(
    weights: &[f64],
    rows_norm: &[Vec<f64>],
    basis: &[Term],
    rat_cfg: &RationalizationConfig,
    raw: &RawMatrix,
    atoms: &mut BTreeSet<super::Atom>,
) {
    let root: Vec<usize> = weights
        .iter()
        .enumerate()
        .filter(|(_, w)| w.abs() > 1e-7)
        .map(|(i, _)| i)
        .collect();
    if root.len() < 2 {
        return;
    }
    let mut queue: Vec<Vec<usize>> = vec![root];
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut visited = 0usize;

    while let Some(support) = queue.pop() {
        if !seen.insert(support.clone()) {
            continue;
        }
        visited += 1;
        if visited > MAX_NODES {
            break;
        }
        let gram = gram_matrix(rows_norm, &support);
        let scale: f64 = (0..gram.len()).map(|i| gram[i][i]).sum::<f64>().max(1e-12);
        let Some(eigen) = eigedecompose(&gram) else {
            continue;
        };
        let zero_tol = 1e-9 * scale;
        let lambda1 = eigen[0].0;
        if lambda1 > zero_tol {
            continue; // no exact relation on this support
        }
        let unique = eigen.len() < 2 || eigen[1].0 > zero_tol.max(1e-6 * scale);
        if unique {
            let mut full = vec![0.0; weights.len()];
            for (&i, &v) in support.iter().zip(&eigen[0].1) {
                full[i] = v;
            }
            if let Some(atom) =
                finalize_atom(&full, 0.0, Activation::GaussEq, basis, rat_cfg, raw, false)
            {
                if atom_holds_on_matrix(&atom, raw) {
                    atoms.insert(atom);
                }
            }
        }
        if support.len() <= 2 {
            continue;
        }
        // children: drop one coordinate, weakest learned weight first so the
        // literal's own direction is explored before its alternatives
        let mut order: Vec<usize> = (0..support.len()).collect();
        order.sort_by(|&a, &b| {
            weights[support[a]]
                .abs()
                .partial_cmp(&weights[support[b]].abs())
                .unwrap()
        });
        for pos in order.into_iter().rev() {
            let mut child = support.clone();
            child.remove(pos);
            if !seen.contains(&child) {
                queue.push(child);
            }
        }
    }
}

fn gram_matrix(rows: &[Vec<f64>], support: &[usize]) -> Vec<Vec<f64>> {
    let k = support.len();
    let mut g = vec![vec![0.0; k]; k];
    for row in rows {
        for (a, &i) in support.iter().enumerate() {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            for (b, &j) in support.iter().enumerate().skip(a) {
                g[a][b] += ri * row[j];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            g[a][b] = g[b][a];
        }
    }
    g
}

/// Eigenpairs of a small symmetric matrix by cyclic Jacobi rotations,
/// ascending by eigenvalue.
fn eigedecompose(matrix: &[Vec<f64>]) -> Option<Vec<(f64, Vec<f64>)>> {
    let n = matrix.len();
    if n == 0 {
        return None;
    }
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..60 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p][q] * a[p][q];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-18 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|i| (a[i][i], (0..n).map(|k| v[k][i]).collect()))
        .collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    Some(pairs)
}
