//! Greedy diversity-driven expansion of a known model set.
//!
//! Starting from the known trees, repeatedly sample a tree anchored on one
//! of the known set's representative sequences and keep it only when it
//! strictly raises the configured diversity measure. Stops after `patience`
//! consecutive rejections, at `k_max` trees, or after `max_samples` draws.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diversity::{DiversityAccumulator, DiversityReport, Measure};
use crate::domain::SingleAgentModel;
use crate::error::{Error, Result};
use crate::features::{check_uniform, extract_features};
use crate::generation::{sample_tree, DynamicBeliefNet, GenerationConfig};
use crate::tree::{BehaviorSequence, PolicyTree, TreeDoc};

pub const DEFAULT_PATIENCE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub measure: Measure,
    pub k_max: usize,
    pub patience: usize,
    /// Drives sampling; `generation.seed` is only used by batch sampling.
    pub seed: u64,
    pub generation: GenerationConfig,
}

impl SelectionConfig {
    pub fn new(measure: Measure, k_max: usize, seed: u64) -> Self {
        SelectionConfig {
            measure,
            k_max,
            patience: DEFAULT_PATIENCE,
            seed,
            generation: GenerationConfig::new(seed, 10_000),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Known,
    Generated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateModelSet {
    pub trees: Vec<PolicyTree>,
    pub prior: Vec<f64>,
    pub provenance: Vec<Provenance>,
    pub diversity: DiversityReport,
    pub features: Vec<BehaviorSequence>,
    /// `(samples drawn so far, diversity)` at start and after each acceptance.
    pub trace: Vec<(usize, f64)>,
    pub samples_drawn: usize,
    pub config: Option<SelectionConfig>,
}

impl CandidateModelSet {
    /// A set holding `trees` as known models with a uniform prior.
    pub fn from_known(trees: Vec<PolicyTree>, omega: usize) -> Result<Self> {
        let trees = dedup(trees);
        if trees.is_empty() {
            return Err(Error::InvalidConfig("candidate set is empty".into()));
        }
        let diversity = crate::diversity::report(&trees, omega)?;
        let n = trees.len();
        Ok(CandidateModelSet {
            prior: vec![1.0 / n as f64; n],
            provenance: vec![Provenance::Known; n],
            trace: vec![(0, diversity.mdp_value)],
            features: extract_features(&trees)?,
            trees,
            diversity,
            samples_drawn: 0,
            config: None,
        })
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn known_count(&self) -> usize {
        self.provenance.iter().filter(|&&p| p == Provenance::Known).count()
    }

    pub fn generated_count(&self) -> usize {
        self.len() - self.known_count()
    }

    /// Replaces the prior; must be a distribution over the trees.
    pub fn with_prior(mut self, prior: Vec<f64>) -> Result<Self> {
        if prior.len() != self.trees.len() {
            return Err(Error::InvalidConfig(format!(
                "prior has {} entries for {} trees",
                prior.len(),
                self.trees.len()
            )));
        }
        crate::domain::check_distribution(&prior, "prior")?;
        self.prior = prior;
        Ok(self)
    }

    /// Writes `manifest.json` plus one tree file per candidate.
    pub fn save(&self, dir: &Path, actions: &[String], observations: &[String]) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::with_capacity(self.len());
        for (k, tree) in self.trees.iter().enumerate() {
            let name = format!("tree_{k:03}.json");
            let text = serde_json::to_string_pretty(&tree.to_doc(actions, observations))?;
            let path = dir.join(&name);
            fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
            files.push(name);
        }
        let manifest = SetManifest {
            config: self.config.clone(),
            known: self.known_count(),
            generated: self.generated_count(),
            samples_drawn: self.samples_drawn,
            diversity: self.diversity.clone(),
            trace: self.trace.clone(),
            prior: self.prior.clone(),
            provenance: self.provenance.clone(),
            features: self
                .features
                .iter()
                .map(|f| f.to_compact(actions, observations))
                .collect(),
            trees: files,
        };
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    pub fn load(dir: &Path, actions: &[String], observations: &[String]) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: SetManifest = serde_json::from_str(&text)?;
        let mut trees = Vec::with_capacity(m.trees.len());
        for name in &m.trees {
            let path = dir.join(name);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let doc: TreeDoc = serde_json::from_str(&text)?;
            trees.push(PolicyTree::from_doc(&doc, actions, observations)?);
        }
        if m.prior.len() != trees.len() || m.provenance.len() != trees.len() {
            return Err(Error::InvalidConfig("manifest lists inconsistent counts".into()));
        }
        let features = crate::features::extract_features(
            &trees
                .iter()
                .zip(&m.provenance)
                .filter(|(_, &p)| p == Provenance::Known)
                .map(|(t, _)| t.clone())
                .collect::<Vec<_>>(),
        )?;
        Ok(CandidateModelSet {
            trees,
            prior: m.prior,
            provenance: m.provenance,
            diversity: m.diversity,
            features,
            trace: m.trace,
            samples_drawn: m.samples_drawn,
            config: m.config,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct SetManifest {
    config: Option<SelectionConfig>,
    known: usize,
    generated: usize,
    samples_drawn: usize,
    diversity: DiversityReport,
    trace: Vec<(usize, f64)>,
    prior: Vec<f64>,
    provenance: Vec<Provenance>,
    features: Vec<String>,
    trees: Vec<String>,
}

fn dedup(trees: Vec<PolicyTree>) -> Vec<PolicyTree> {
    let mut seen = HashSet::new();
    trees.into_iter().filter(|t| seen.insert(t.clone())).collect()
}

/// Runs the selection loop from `known`.
pub fn select_topk(
    known: &[PolicyTree],
    model: &SingleAgentModel,
    config: &SelectionConfig,
) -> Result<CandidateModelSet> {
    if known.is_empty() {
        return Err(Error::InvalidConfig("at least one known tree is required".into()));
    }
    check_uniform(known)?;
    let (na, no) = (model.actions().len(), model.observations().len());
    for t in known {
        t.validate(na, no)?;
        if t.depth() != model.horizon() {
            return Err(Error::DepthMismatch {
                expected: model.horizon(),
                found: t.depth(),
            });
        }
    }
    config.generation.validate()?;
    if config.patience == 0 {
        return Err(Error::InvalidConfig("patience must be at least 1".into()));
    }
    let mut trees = dedup(known.to_vec());
    if config.k_max < trees.len() {
        return Err(Error::InvalidConfig(format!(
            "k_max {} is below the {} known trees",
            config.k_max,
            trees.len()
        )));
    }
    let known_count = trees.len();

    let features = extract_features(&trees)?;
    let dbn = DynamicBeliefNet::with_epsilon(model, config.generation.epsilon);
    let mut acc = DiversityAccumulator::new(model.horizon(), no);
    trees.iter().for_each(|t| acc.insert(t));
    let mut trace = vec![(0, acc.report().value(config.measure))];

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut misses, mut drawn) = (0, 0);
    while trees.len() < config.k_max && misses < config.patience && drawn < config.generation.max_samples {
        let tree = sample_tree(&dbn, &features, config.generation.anchor_policy, drawn, &mut rng)?;
        drawn += 1;
        if acc.improves(&tree, config.measure) {
            acc.insert(&tree);
            trees.push(tree);
            trace.push((drawn, acc.report().value(config.measure)));
            misses = 0;
        } else {
            misses += 1;
        }
    }

    let n = trees.len();
    let mut provenance = vec![Provenance::Known; known_count];
    provenance.resize(n, Provenance::Generated);
    Ok(CandidateModelSet {
        trees,
        prior: vec![1.0 / n as f64; n],
        provenance,
        diversity: acc.report(),
        features,
        trace,
        samples_drawn: drawn,
        config: Some(config.clone()),
    })
}

/// Accepted diversity values of a run, starting from the known set.
pub fn diversity_trace(run: &CandidateModelSet) -> &[(usize, f64)] {
    &run.trace
}
