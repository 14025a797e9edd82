//! Sampling policy trees from the opponent's decision model.
//!
//! The decision model is recast as a dynamic belief network: decision nodes
//! become chance nodes with a uniform prior that evidence can clamp, and the
//! reward table becomes a strictly positive weight table. A sampled tree
//! clamps one anchor sequence onto its path and fills every other node with
//! the action of largest immediate expected utility under the belief reached
//! along that node's history.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::domain::SingleAgentModel;
use crate::error::{Error, Result};
use crate::solver::{belief_update, expected_reward, improves, pushforward, BeliefPoint};
use crate::tree::{BehaviorSequence, PolicyTree};

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct DynamicBeliefNet {
    model: SingleAgentModel,
    /// `[s][a]`, strictly positive, summing to 1.
    utility_weights: Vec<f64>,
    action_prior: Vec<f64>,
    epsilon: f64,
}

pub fn convert_to_dbn(model: &SingleAgentModel) -> DynamicBeliefNet {
    DynamicBeliefNet::with_epsilon(model, DEFAULT_EPSILON)
}

impl DynamicBeliefNet {
    pub fn with_epsilon(model: &SingleAgentModel, epsilon: f64) -> Self {
        assert!(epsilon > 0.0, "epsilon must be positive");
        let (ns, na) = (model.states().len(), model.actions().len());
        let rmin = model.min_reward();
        let raw: Vec<f64> = (0..ns)
            .flat_map(|s| (0..na).map(move |a| (s, a)))
            .map(|(s, a)| model.reward(s, a) - rmin + epsilon)
            .collect();
        let total: f64 = raw.iter().sum();
        DynamicBeliefNet {
            model: model.clone(),
            utility_weights: raw.iter().map(|w| w / total).collect(),
            action_prior: vec![1.0 / na as f64; na],
            epsilon,
        }
    }

    pub fn model(&self) -> &SingleAgentModel {
        &self.model
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn num_states(&self) -> usize {
        self.model.states().len()
    }
    pub fn num_actions(&self) -> usize {
        self.model.actions().len()
    }
    pub fn num_observations(&self) -> usize {
        self.model.observations().len()
    }

    pub fn utility_weight(&self, s: usize, a: usize) -> f64 {
        self.utility_weights[s * self.num_actions() + a]
    }

    /// Distribution of an unclamped action node.
    pub fn action_prior(&self) -> &[f64] {
        &self.action_prior
    }

    /// Normalized utility mass of each action under belief `b`. It is an
    /// increasing affine function of `Σ_s b(s) R(s, a)`, so both rank actions
    /// identically.
    pub fn action_utility(&self, b: &BeliefPoint) -> Vec<f64> {
        let mut w: Vec<f64> = (0..self.num_actions())
            .map(|a| b.support().iter().map(|&(s, p)| p * self.utility_weight(s, a)).sum())
            .collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        w
    }

    /// Filters `b0` through clamped `(action, observation)` evidence.
    pub fn filter(&self, b0: &BeliefPoint, evidence: &[(usize, usize)]) -> Result<BeliefPoint> {
        evidence
            .iter()
            .try_fold(b0.clone(), |b, &(a, o)| belief_update(&self.model, &b, a, o))
    }

    /// Myopic best action, earliest on ties.
    pub fn best_action(&self, b: &BeliefPoint) -> usize {
        let mut best = (0, expected_reward(&self.model, b, 0));
        for a in 1..self.num_actions() {
            let v = expected_reward(&self.model, b, a);
            if improves(v, best.1) {
                best = (a, v);
            }
        }
        best.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorPolicy {
    #[default]
    RoundRobin,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub seed: u64,
    #[serde(default)]
    pub anchor_policy: AnchorPolicy,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub max_samples: usize,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl GenerationConfig {
    pub fn new(seed: u64, max_samples: usize) -> Self {
        GenerationConfig {
            seed,
            anchor_policy: AnchorPolicy::RoundRobin,
            epsilon: DEFAULT_EPSILON,
            max_samples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_samples == 0 {
            return Err(Error::InvalidConfig("max_samples must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Uniform draw from the probability simplex.
pub fn random_belief<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> BeliefPoint {
    let draws: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    BeliefPoint::from_dense_unchecked(&draws.iter().map(|x| x / total).collect::<Vec<_>>())
}

fn check_anchor(dbn: &DynamicBeliefNet, index: usize, anchor: &BehaviorSequence) -> Result<()> {
    let bad = |reason: String| Err(Error::BadAnchor { index, reason });
    if anchor.len() != dbn.model.horizon() {
        return bad(format!(
            "length {} differs from horizon {}",
            anchor.len(),
            dbn.model.horizon()
        ));
    }
    if let Some(a) = anchor.actions().iter().find(|&&a| a >= dbn.num_actions()) {
        return bad(format!("action {a} out of range"));
    }
    if let Some(o) = anchor.observations().iter().find(|&&o| o >= dbn.num_observations()) {
        return bad(format!("observation {o} out of range"));
    }
    Ok(())
}

/// Draws one tree. `draw` is the position within a batch and selects the
/// anchor under [`AnchorPolicy::RoundRobin`].
pub fn sample_tree<R: Rng + ?Sized>(
    dbn: &DynamicBeliefNet,
    anchors: &[BehaviorSequence],
    policy: AnchorPolicy,
    draw: usize,
    rng: &mut R,
) -> Result<PolicyTree> {
    if anchors.is_empty() {
        return Err(Error::InvalidConfig("at least one anchor sequence is required".into()));
    }
    for (k, a) in anchors.iter().enumerate() {
        check_anchor(dbn, k, a)?;
    }
    let b0 = random_belief(dbn.num_states(), rng);
    let anchor = match policy {
        AnchorPolicy::RoundRobin => &anchors[draw % anchors.len()],
        AnchorPolicy::Uniform => &anchors[rng.random_range(0..anchors.len())],
    };
    Ok(sample_from(dbn, anchor, &b0))
}

/// The completion of `anchor` from belief `b0`.
pub fn sample_from(dbn: &DynamicBeliefNet, anchor: &BehaviorSequence, b0: &BeliefPoint) -> PolicyTree {
    fn grow(
        dbn: &DynamicBeliefNet,
        anchor: Option<&BehaviorSequence>,
        step: usize,
        b: &BeliefPoint,
    ) -> PolicyTree {
        let horizon = dbn.model.horizon();
        let a = match anchor {
            Some(seq) => seq.actions()[step],
            None => dbn.best_action(b),
        };
        if step + 1 == horizon {
            return PolicyTree::leaf(a);
        }
        let children = (0..dbn.num_observations())
            .map(|o| {
                let on_path = anchor.filter(|seq| seq.observations()[step] == o);
                // An impossible observation carries the predicted belief.
                let next = belief_update(&dbn.model, b, a, o)
                    .unwrap_or_else(|_| pushforward(&dbn.model, b, a));
                grow(dbn, on_path, step + 1, &next)
            })
            .collect();
        PolicyTree::node(a, children).expect("uniform depth by construction")
    }
    grow(dbn, Some(anchor), 0, b0)
}

/// Up to `max_samples` distinct trees in generation order.
pub fn batch_sample(
    dbn: &DynamicBeliefNet,
    anchors: &[BehaviorSequence],
    config: &GenerationConfig,
) -> Result<Vec<PolicyTree>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for draw in 0..config.max_samples {
        let tree = sample_tree(dbn, anchors, config.anchor_policy, draw, &mut rng)?;
        if seen.insert(tree.canonical_encode()) {
            out.push(tree);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{builtin_tiger, project_level0, Agent, ModelParts, PeerRule};
    use proptest::prelude::*;

    fn tiger_j(h: usize) -> SingleAgentModel {
        project_level0(&builtin_tiger(), Agent::J, &PeerRule::Uniform)
            .unwrap()
            .with_horizon(h)
            .unwrap()
    }

    fn listen_anchor(h: usize) -> BehaviorSequence {
        BehaviorSequence::new(vec![2; h], vec![0; h - 1]).unwrap()
    }

    #[test]
    fn constant_rewards_give_uniform_weights() {
        let mut parts = tiger_j(2).into_parts();
        parts.reward.iter_mut().for_each(|r| *r = 4.0);
        let dbn = convert_to_dbn(&SingleAgentModel::new(parts).unwrap());
        for s in 0..2 {
            for a in 0..3 {
                assert!((dbn.utility_weight(s, a) - 1.0 / 6.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn tiger_listen_outweighs_tiger_door() {
        let dbn = convert_to_dbn(&tiger_j(3));
        // TigerLeft: OpenLeft meets the tiger.
        assert!(dbn.utility_weight(0, 2) > dbn.utility_weight(0, 0));
        assert!(dbn.utility_weight(1, 2) > dbn.utility_weight(1, 1));
        assert_eq!((dbn.num_states(), dbn.num_actions(), dbn.num_observations()), (2, 3, 2));
        let prior: f64 = dbn.action_prior().iter().sum();
        assert!((prior - 1.0).abs() < 1e-15);
    }

    #[test]
    fn utility_ranking_matches_expected_reward() {
        let dbn = convert_to_dbn(&tiger_j(3));
        let b = BeliefPoint::from_dense(&[0.95, 0.05]).unwrap();
        let u = dbn.action_utility(&b);
        let best = (0..3).max_by(|&x, &y| u[x].total_cmp(&u[y])).unwrap();
        assert_eq!(best, dbn.best_action(&b));
        assert_eq!(best, 1);
    }

    #[test]
    fn depth_one_anchor_fixes_the_tree() {
        let dbn = convert_to_dbn(&tiger_j(1));
        let anchor = BehaviorSequence::new(vec![0], vec![]).unwrap();
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = sample_tree(&dbn, std::slice::from_ref(&anchor), AnchorPolicy::Uniform, 0, &mut rng).unwrap();
            assert_eq!(t, PolicyTree::leaf(0));
        }
    }

    #[test]
    fn tiger_left_point_mass_opens_right() {
        let dbn = convert_to_dbn(&tiger_j(2));
        let b = BeliefPoint::point(2, 0);
        assert_eq!(dbn.best_action(&b), 1);
        // every unclamped sibling of the anchor's first observation sees the
        // same pushforward after Listen, and opens nowhere (2/3 vs 1/3)
        let anchor = BehaviorSequence::new(vec![2, 2], vec![0]).unwrap();
        let t = sample_from(&dbn, &anchor, &b);
        assert_eq!(t.action(), 2);
        assert_eq!(t.child(1).unwrap().action(), 2);
    }

    #[test]
    fn bad_anchors_are_rejected() {
        let dbn = convert_to_dbn(&tiger_j(3));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let short = listen_anchor(2);
        assert!(matches!(
            sample_tree(&dbn, &[short], AnchorPolicy::RoundRobin, 0, &mut rng),
            Err(Error::BadAnchor { index: 0, .. })
        ));
        let wild = BehaviorSequence::new(vec![2, 7, 2], vec![0, 0]).unwrap();
        assert!(sample_tree(&dbn, &[listen_anchor(3), wild], AnchorPolicy::RoundRobin, 0, &mut rng).is_err());
        assert!(sample_tree(&dbn, &[], AnchorPolicy::RoundRobin, 0, &mut rng).is_err());
    }

    #[test]
    fn batches_are_deduplicated_and_reproducible() {
        let dbn = convert_to_dbn(&tiger_j(3));
        let anchors = [listen_anchor(3)];
        let one = batch_sample(&dbn, &anchors, &GenerationConfig::new(3, 1)).unwrap();
        assert_eq!(one.len(), 1);
        let cfg = GenerationConfig::new(11, 50);
        let a = batch_sample(&dbn, &anchors, &cfg).unwrap();
        let b = batch_sample(&dbn, &anchors, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.len() > 1 && a.len() <= 50);
        let mut bad = cfg.clone();
        bad.max_samples = 0;
        assert!(batch_sample(&dbn, &anchors, &bad).is_err());
    }

    #[test]
    fn one_action_model_yields_one_tree() {
        let m = SingleAgentModel::new(ModelParts {
            name: "one".into(),
            states: vec!["s0".into(), "s1".into()],
            actions: vec!["only".into()],
            observations: vec!["x".into(), "y".into()],
            transition: vec![0.5; 4],
            obs: vec![0.3, 0.7, 0.6, 0.4],
            reward: vec![1.0, -1.0],
            initial_belief: vec![0.5, 0.5],
            horizon: 3,
        })
        .unwrap();
        let dbn = convert_to_dbn(&m);
        let anchor = BehaviorSequence::new(vec![0; 3], vec![1, 0]).unwrap();
        let trees = batch_sample(&dbn, &[anchor], &GenerationConfig::new(0, 20)).unwrap();
        assert_eq!(trees, vec![PolicyTree::constant(0, 2, 3)]);
    }

    fn arb_anchor() -> impl Strategy<Value = BehaviorSequence> {
        (proptest::collection::vec(0usize..3, 3), proptest::collection::vec(0usize..2, 2))
            .prop_map(|(a, o)| BehaviorSequence::new(a, o).unwrap())
    }

    proptest! {
        #[test]
        fn samples_contain_their_anchor(anchor in arb_anchor(), seed in any::<u64>()) {
            let dbn = convert_to_dbn(&tiger_j(3));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = sample_tree(&dbn, std::slice::from_ref(&anchor), AnchorPolicy::Uniform, 0, &mut rng).unwrap();
            prop_assert!(t.contains_sequence(&anchor));
            prop_assert!(t.validate(3, 2).is_ok());
            prop_assert_eq!(t.depth(), 3);
        }

        #[test]
        fn weights_are_positive(rewards in proptest::collection::vec(-1e3f64..1e3, 6)) {
            let mut parts = tiger_j(2).into_parts();
            parts.reward = rewards;
            let dbn = convert_to_dbn(&SingleAgentModel::new(parts).unwrap());
            let mut total = 0.0;
            for s in 0..2 {
                for a in 0..3 {
                    prop_assert!(dbn.utility_weight(s, a) > 0.0);
                    total += dbn.utility_weight(s, a);
                }
            }
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
