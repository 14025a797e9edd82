//! Behavior matrices and their pivot decomposition.
//!
//! Row `i` of the behavior matrix is tree `H_i`; column `j` is a distinct
//! full-length behavior sequence `h_j`; the entry is 1 iff `h_j` is a path of
//! `H_i`. Leftmost-pivot Gaussian elimination over exact rationals picks the
//! linearly independent columns `F` and a coefficient matrix `U` with
//! `P = P[:, F] × U`.

use std::collections::HashMap;
use std::io::Write;

use num::{BigRational, One, Zero};

use crate::error::{Error, Result};
use crate::tree::{BehaviorSequence, PolicyTree};

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<BehaviorSequence>,
    /// `entries[row][column]`, each 0 or 1.
    pub entries: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PivotResult {
    /// Column indices of the pivots, increasing.
    pub pivot_columns: Vec<usize>,
    pub pivot_sequences: Vec<BehaviorSequence>,
    /// `P` restricted to the pivot columns (rows × rank).
    pub f_matrix: Vec<Vec<u8>>,
    /// Nonzero rows of the reduced row echelon form (rank × columns).
    pub u_matrix: Vec<Vec<BigRational>>,
    pub rank: usize,
}

/// Checks that all trees share depth and branching.
pub fn check_uniform(trees: &[PolicyTree]) -> Result<()> {
    let Some(first) = trees.first() else {
        return Ok(());
    };
    for (index, t) in trees.iter().enumerate().skip(1) {
        if t.depth() != first.depth() {
            return Err(Error::MixedTrees {
                index,
                reason: format!("depth {} vs {}", t.depth(), first.depth()),
            });
        }
        if t.branching() != first.branching() {
            return Err(Error::MixedTrees {
                index,
                reason: format!(
                    "{} observations vs {}",
                    t.branching(),
                    first.branching()
                ),
            });
        }
    }
    Ok(())
}

/// Columns appear in first-appearance order over trees, then paths.
pub fn build_matrix(trees: &[PolicyTree]) -> Result<BehaviorMatrix> {
    check_uniform(trees)?;
    let mut index: HashMap<BehaviorSequence, usize> = HashMap::new();
    let mut columns = Vec::new();
    let per_tree: Vec<Vec<usize>> = trees
        .iter()
        .map(|t| {
            t.sequences()
                .into_iter()
                .map(|seq| {
                    *index.entry(seq.clone()).or_insert_with(|| {
                        columns.push(seq);
                        columns.len() - 1
                    })
                })
                .collect()
        })
        .collect();
    let entries = per_tree
        .iter()
        .map(|cols| {
            let mut row = vec![0u8; columns.len()];
            cols.iter().for_each(|&c| row[c] = 1);
            row
        })
        .collect();
    Ok(BehaviorMatrix {
        rows: (1..=trees.len()).map(|k| format!("H{k}")).collect(),
        columns,
        entries,
    })
}

/// Reduced row echelon form with leftmost pivots. Returns the pivot
/// columns and the nonzero rows.
pub fn rref(matrix: &[Vec<u8>]) -> (Vec<usize>, Vec<Vec<BigRational>>) {
    let cols = matrix.first().map_or(0, Vec::len);
    let mut m: Vec<Vec<BigRational>> = matrix
        .iter()
        .map(|r| r.iter().map(|&x| BigRational::from_integer(x.into())).collect())
        .collect();
    let mut pivots = Vec::new();
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..m.len()).find(|&r| !m[r][c].is_zero()) else {
            continue;
        };
        m.swap(rank, p);
        let inv = m[rank][c].recip();
        if !inv.is_one() {
            m[rank].iter_mut().for_each(|x| *x *= &inv);
        }
        let pivot_row = m[rank].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r == rank || row[c].is_zero() {
                continue;
            }
            let factor = row[c].clone();
            for (x, y) in row.iter_mut().zip(&pivot_row).skip(c) {
                if !y.is_zero() {
                    *x -= &factor * y;
                }
            }
        }
        pivots.push(c);
        rank += 1;
    }
    m.truncate(rank);
    (pivots, m)
}

pub fn pivot_decompose(p: &BehaviorMatrix) -> PivotResult {
    let (pivot_columns, u_matrix) = rref(&p.entries);
    let f_matrix = p
        .entries
        .iter()
        .map(|row| pivot_columns.iter().map(|&c| row[c]).collect())
        .collect();
    PivotResult {
        pivot_sequences: pivot_columns.iter().map(|&c| p.columns[c].clone()).collect(),
        rank: pivot_columns.len(),
        pivot_columns,
        f_matrix,
        u_matrix,
    }
}

/// The representative behavioral features of a tree set.
pub fn extract_features(trees: &[PolicyTree]) -> Result<Vec<BehaviorSequence>> {
    Ok(pivot_decompose(&build_matrix(trees)?).pivot_sequences)
}

/// `F × U` over the rationals.
pub fn reconstruct(f: &[Vec<u8>], u: &[Vec<BigRational>], cols: usize) -> Vec<Vec<BigRational>> {
    f.iter()
        .map(|frow| {
            (0..cols)
                .map(|c| {
                    frow.iter()
                        .zip(u)
                        .filter(|(&x, _)| x != 0)
                        .fold(BigRational::zero(), |acc, (&x, urow)| {
                            acc + BigRational::from_integer(x.into()) * &urow[c]
                        })
                })
                .collect()
        })
        .collect()
}

impl PivotResult {
    /// True when `F × U` reproduces `p` exactly.
    pub fn reproduces(&self, p: &BehaviorMatrix) -> bool {
        let back = reconstruct(&self.f_matrix, &self.u_matrix, p.columns.len());
        back.iter().zip(&p.entries).all(|(r, e)| {
            r.iter()
                .zip(e)
                .all(|(x, &y)| *x == BigRational::from_integer(y.into()))
        })
    }
}

impl BehaviorMatrix {
    pub fn write_csv<W: Write>(&self, out: W, actions: &[String], observations: &[String]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["tree".to_string()];
        header.extend(self.columns.iter().map(|c| c.to_compact(actions, observations)));
        w.write_record(&header)?;
        for (id, row) in self.rows.iter().zip(&self.entries) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(u8::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}
