//! Set diversity of policy trees.
//!
//! `Diff(h_t)` counts distinct length-`t` behavior sequences across a set and
//! `Diff(H_t)` counts distinct depth-`t` frames. Both measures weight depth
//! `t` by `1 / |Ω|^(t-1)`:
//!
//! ```text
//! MDP = Σ_t  Diff(h_t)              / |Ω|^(t-1)
//! MDF = Σ_t (Diff(h_t) + Diff(H_t)) / |Ω|^(t-1)
//! ```

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{BehaviorSequence, PolicyTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Mdp,
    Mdf,
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Measure::Mdp => "mdp",
            Measure::Mdf => "mdf",
        })
    }
}

impl FromStr for Measure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mdp" => Ok(Measure::Mdp),
            "mdf" => Ok(Measure::Mdf),
            other => Err(Error::InvalidConfig(format!("unknown measure {other:?}"))),
        }
    }
}

fn check_depth(set: &[PolicyTree], t: usize) -> Result<()> {
    for tree in set {
        if t == 0 || t > tree.depth() {
            return Err(Error::DepthMismatch {
                expected: tree.depth(),
                found: t,
            });
        }
    }
    Ok(())
}

pub fn diff_sequences(set: &[PolicyTree], t: usize) -> Result<usize> {
    check_depth(set, t)?;
    let mut seen = HashSet::new();
    for tree in set {
        seen.extend(tree.prefixes(t)?);
    }
    Ok(seen.len())
}

pub fn diff_frames(set: &[PolicyTree], t: usize) -> Result<usize> {
    check_depth(set, t)?;
    let mut seen = HashSet::new();
    for tree in set {
        seen.insert(tree.frame(t)?.canonical_encode());
    }
    Ok(seen.len())
}

fn common_depth(set: &[PolicyTree]) -> Result<usize> {
    crate::features::check_uniform(set)?;
    Ok(set.first().map_or(0, PolicyTree::depth))
}

fn weighted(counts: impl Iterator<Item = usize>, omega: usize) -> f64 {
    let mut scale = 1.0;
    let mut total = 0.0;
    for c in counts {
        total += c as f64 / scale;
        scale *= omega as f64;
    }
    total
}

pub fn mdp(set: &[PolicyTree], omega: usize) -> Result<f64> {
    Ok(report(set, omega)?.mdp_value)
}

pub fn mdf(set: &[PolicyTree], omega: usize) -> Result<f64> {
    Ok(report(set, omega)?.mdf_value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    /// `(Diff(h_t), Diff(H_t))` for `t = 1..=T`.
    pub per_depth: Vec<(usize, usize)>,
    pub omega: usize,
    pub mdp_value: f64,
    pub mdf_value: f64,
}

impl DiversityReport {
    pub fn from_counts(per_depth: Vec<(usize, usize)>, omega: usize) -> Self {
        let mdp_value = weighted(per_depth.iter().map(|c| c.0), omega);
        let mdf_value = weighted(per_depth.iter().map(|c| c.0 + c.1), omega);
        DiversityReport {
            per_depth,
            omega,
            mdp_value,
            mdf_value,
        }
    }

    pub fn value(&self, measure: Measure) -> f64 {
        match measure {
            Measure::Mdp => self.mdp_value,
            Measure::Mdf => self.mdf_value,
        }
    }

    /// One row per depth, then a `total` row carrying both measures.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "diff_sequences", "diff_frames", "mdp", "mdf"])?;
        let mut scale = 1.0;
        for (k, &(h, f)) in self.per_depth.iter().enumerate() {
            w.write_record([
                (k + 1).to_string(),
                h.to_string(),
                f.to_string(),
                (h as f64 / scale).to_string(),
                ((h + f) as f64 / scale).to_string(),
            ])?;
            scale *= self.omega as f64;
        }
        w.write_record([
            "total".to_string(),
            String::new(),
            String::new(),
            self.mdp_value.to_string(),
            self.mdf_value.to_string(),
        ])?;
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Full report over every depth of a uniform tree set.
pub fn report(set: &[PolicyTree], omega: usize) -> Result<DiversityReport> {
    if omega == 0 {
        return Err(Error::InvalidConfig("|Ω| must be at least 1".into()));
    }
    let depth = common_depth(set)?;
    let mut acc = DiversityAccumulator::new(depth, omega);
    set.iter().for_each(|t| acc.insert(t));
    Ok(acc.report())
}

/// Incrementally maintained `Diff` sets.
#[derive(Debug, Clone)]
pub struct DiversityAccumulator {
    omega: usize,
    sequences: Vec<HashSet<BehaviorSequence>>,
    frames: Vec<HashSet<PolicyTree>>,
}

impl DiversityAccumulator {
    pub fn new(depth: usize, omega: usize) -> Self {
        DiversityAccumulator {
            omega,
            sequences: vec![HashSet::new(); depth],
            frames: vec![HashSet::new(); depth],
        }
    }

    pub fn depth(&self) -> usize {
        self.sequences.len()
    }

    fn check(&self, tree: &PolicyTree) {
        assert_eq!(tree.depth(), self.depth(), "tree depth differs from the set");
    }

    pub fn insert(&mut self, tree: &PolicyTree) {
        self.check(tree);
        for t in 1..=self.depth() {
            self.sequences[t - 1].extend(tree.prefixes(t).expect("depth checked"));
            self.frames[t - 1].insert(tree.frame(t).expect("depth checked"));
        }
    }

    /// True when inserting `tree` would strictly raise `measure`. Every
    /// weight is positive, so this is exactly "some counted set grows".
    pub fn improves(&self, tree: &PolicyTree, measure: Measure) -> bool {
        self.check(tree);
        (1..=self.depth()).any(|t| {
            let new_seq = tree
                .prefixes(t)
                .expect("depth checked")
                .iter()
                .any(|s| !self.sequences[t - 1].contains(s));
            new_seq
                || (measure == Measure::Mdf
                    && !self.frames[t - 1].contains(&tree.frame(t).expect("depth checked")))
        })
    }

    pub fn report(&self) -> DiversityReport {
        DiversityReport::from_counts(
            self.sequences
                .iter()
                .zip(&self.frames)
                .map(|(s, f)| (s.len(), f.len()))
                .collect(),
            self.omega,
        )
    }
}
