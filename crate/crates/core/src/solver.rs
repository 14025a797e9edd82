//! Beliefs, exact finite-horizon solving and policy evaluation.
//!
//! Everything here is written against [`DecisionProcess`], which exposes the
//! joint outcome kernel `Pr(s', o | s, a)` lazily. Dense single-agent models
//! implement it directly; the flattened interactive model implements it over
//! its augmented state space without materializing tables.

use serde::Serialize;

use crate::domain::{check_distribution, SingleAgentModel};
use crate::error::{Error, Result};
use crate::tree::{node_count, PolicyTree, TreeDoc};

/// A finite-horizon partially observable decision problem.
pub trait DecisionProcess {
    fn id(&self) -> &str;
    fn action_names(&self) -> &[String];
    fn observation_names(&self) -> &[String];
    fn num_states(&self) -> usize;
    fn horizon(&self) -> usize;
    fn start_belief(&self) -> BeliefPoint;
    fn reward(&self, s: usize, a: usize) -> f64;
    /// Calls `emit(next, observation, probability)` for every outcome of
    /// taking `a` in `s` with nonzero probability.
    fn outcomes(&self, s: usize, a: usize, emit: &mut dyn FnMut(usize, usize, f64));

    fn num_actions(&self) -> usize {
        self.action_names().len()
    }
    fn num_observations(&self) -> usize {
        self.observation_names().len()
    }
}

impl DecisionProcess for SingleAgentModel {
    fn id(&self) -> &str {
        self.name()
    }
    fn action_names(&self) -> &[String] {
        self.actions()
    }
    fn observation_names(&self) -> &[String] {
        self.observations()
    }
    fn num_states(&self) -> usize {
        self.states().len()
    }
    fn horizon(&self) -> usize {
        SingleAgentModel::horizon(self)
    }
    fn start_belief(&self) -> BeliefPoint {
        BeliefPoint::from_dense_unchecked(self.initial_belief())
    }
    fn reward(&self, s: usize, a: usize) -> f64 {
        SingleAgentModel::reward(self, s, a)
    }
    fn outcomes(&self, s: usize, a: usize, emit: &mut dyn FnMut(usize, usize, f64)) {
        let no = self.observations().len();
        for &(next, t) in self.transition_row(s, a) {
            for o in 0..no {
                let q = t * self.obs(next, a, o);
                if q > 0.0 {
                    emit(next, o, q);
                }
            }
        }
    }
}

/// A probability distribution over states, stored sparsely.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeliefPoint {
    dim: usize,
    /// Strictly increasing states with positive mass.
    entries: Vec<(usize, f64)>,
}

impl BeliefPoint {
    pub fn from_dense(probabilities: &[f64]) -> Result<Self> {
        check_distribution(probabilities, "belief")?;
        Ok(Self::from_dense_unchecked(probabilities))
    }

    pub(crate) fn from_dense_unchecked(probabilities: &[f64]) -> Self {
        BeliefPoint {
            dim: probabilities.len(),
            entries: probabilities
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(s, &p)| (s, p))
                .collect(),
        }
    }

    /// Builds from `(state, mass)` pairs in strictly increasing state order.
    pub(crate) fn from_sorted(dim: usize, entries: Vec<(usize, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        BeliefPoint { dim, entries }
    }

    pub fn point(dim: usize, state: usize) -> Self {
        assert!(state < dim, "state out of range");
        BeliefPoint {
            dim,
            entries: vec![(state, 1.0)],
        }
    }

    pub fn uniform(dim: usize) -> Self {
        BeliefPoint {
            dim,
            entries: (0..dim).map(|s| (s, 1.0 / dim as f64)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn prob(&self, state: usize) -> f64 {
        self.entries
            .binary_search_by_key(&state, |e| e.0)
            .map(|k| self.entries[k].1)
            .unwrap_or(0.0)
    }

    pub fn support(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(s, p) in &self.entries {
            out[s] = p;
        }
        out
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }
}

/// One observation branch of a one-step prediction.
#[derive(Debug, Clone)]
pub struct Branch {
    pub probability: f64,
    /// Posterior; `None` when the observation is impossible.
    pub posterior: Option<BeliefPoint>,
}

/// `Σ_s b(s) R(s, a)`.
pub fn expected_reward(dp: &dyn DecisionProcess, b: &BeliefPoint, a: usize) -> f64 {
    b.entries.iter().map(|&(s, p)| p * dp.reward(s, a)).sum()
}

fn merge(mut joint: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    joint.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(joint.len());
    for (s, p) in joint {
        match out.last_mut() {
            Some(last) if last.0 == s => last.1 += p,
            _ => out.push((s, p)),
        }
    }
    out
}

/// Splits the one-step prediction from `b` under `a` by observation.
pub fn predict(dp: &dyn DecisionProcess, b: &BeliefPoint, a: usize) -> Vec<Branch> {
    let mut buckets: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dp.num_observations()];
    for &(s, p) in &b.entries {
        dp.outcomes(s, a, &mut |next, o, q| {
            let m = p * q;
            if m > 0.0 {
                buckets[o].push((next, m));
            }
        });
    }
    buckets
        .into_iter()
        .map(|joint| {
            let joint = merge(joint);
            let probability: f64 = joint.iter().map(|e| e.1).sum();
            let posterior = (probability > 0.0).then(|| {
                BeliefPoint::from_sorted(
                    b.dim,
                    joint.into_iter().map(|(s, m)| (s, m / probability)).collect(),
                )
            });
            Branch {
                probability,
                posterior,
            }
        })
        .collect()
}

/// Bayes posterior after taking `a` and observing `o`.
pub fn belief_update(
    dp: &dyn DecisionProcess,
    b: &BeliefPoint,
    a: usize,
    o: usize,
) -> Result<BeliefPoint> {
    predict(dp, b, a)
        .swap_remove(o)
        .posterior
        .ok_or(Error::ImpossibleEvidence {
            action: a,
            observation: o,
        })
}

/// State distribution after taking `a`, ignoring the observation.
pub fn pushforward(dp: &dyn DecisionProcess, b: &BeliefPoint, a: usize) -> BeliefPoint {
    let mut joint = Vec::new();
    for &(s, p) in &b.entries {
        dp.outcomes(s, a, &mut |next, _, q| joint.push((next, p * q)));
    }
    let joint = merge(joint);
    let total: f64 = joint.iter().map(|e| e.1).sum();
    BeliefPoint::from_sorted(b.dim, joint.into_iter().map(|(s, m)| (s, m / total)).collect())
}

/// True when `candidate` beats `incumbent` by more than rounding noise.
/// Shared by every maximization so that ties resolve to the earliest option.
pub(crate) fn improves(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + 1e-10 * (1.0 + incumbent.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolvedPolicy {
    pub tree: PolicyTree,
    pub value: f64,
    pub model_id: String,
}

#[derive(Serialize)]
struct SolvedDoc<'a> {
    model_id: &'a str,
    value: f64,
    tree: TreeDoc,
}

impl SolvedPolicy {
    pub fn to_json(&self, actions: &[String], observations: &[String]) -> String {
        let doc = SolvedDoc {
            model_id: &self.model_id,
            value: self.value,
            tree: self.tree.to_doc(actions, observations),
        };
        serde_json::to_string_pretty(&doc).expect("plain data serializes")
    }
}

/// Work bounds for the exact solver.
#[derive(Debug, Clone, Copy)]
pub struct SolveLimits {
    pub max_tree_nodes: u128,
    /// Bound on `(state, action)` expansions of the reachable-belief tree.
    pub max_expansions: u128,
}

impl Default for SolveLimits {
    fn default() -> Self {
        SolveLimits {
            max_tree_nodes: 1 << 20,
            max_expansions: 50_000_000,
        }
    }
}

pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

fn check_limits(dp: &dyn DecisionProcess, limits: &SolveLimits) -> Result<()> {
    let (na, no, t) = (dp.num_actions() as u128, dp.num_observations(), dp.horizon());
    if t == 0 {
        return Err(Error::InvalidConfig("horizon must be at least 1".into()));
    }
    let nodes = node_count(no, t);
    if nodes > limits.max_tree_nodes {
        return Err(Error::LimitExceeded {
            what: "policy tree nodes",
            needed: nodes,
            limit: limits.max_tree_nodes,
        });
    }
    let expansions = node_count((na as usize).saturating_mul(no), t).saturating_mul(na);
    if expansions > limits.max_expansions {
        return Err(Error::LimitExceeded {
            what: "belief expansions",
            needed: expansions,
            limit: limits.max_expansions,
        });
    }
    Ok(())
}

pub fn solve_exact(dp: &dyn DecisionProcess) -> Result<SolvedPolicy> {
    solve_exact_with(dp, &SolveLimits::default())
}

/// Backward induction over the beliefs reachable from the start belief.
pub fn solve_exact_with(dp: &dyn DecisionProcess, limits: &SolveLimits) -> Result<SolvedPolicy> {
    check_limits(dp, limits)?;
    let (tree, value) = solve_node(dp, &dp.start_belief(), dp.horizon());
    Ok(SolvedPolicy {
        tree,
        value,
        model_id: dp.id().to_string(),
    })
}

/// Solves from an explicit belief instead of the model's start belief.
pub fn solve_from(dp: &dyn DecisionProcess, b: &BeliefPoint) -> Result<SolvedPolicy> {
    check_limits(dp, &SolveLimits::default())?;
    let (tree, value) = solve_node(dp, b, dp.horizon());
    Ok(SolvedPolicy {
        tree,
        value,
        model_id: dp.id().to_string(),
    })
}

fn solve_node(dp: &dyn DecisionProcess, b: &BeliefPoint, steps: usize) -> (PolicyTree, f64) {
    let no = dp.num_observations();
    let mut best: Option<(f64, PolicyTree)> = None;
    for a in 0..dp.num_actions() {
        let mut value = expected_reward(dp, b, a);
        let tree = if steps == 1 {
            PolicyTree::leaf(a)
        } else {
            let mut children = Vec::with_capacity(no);
            for branch in predict(dp, b, a) {
                match &branch.posterior {
                    Some(post) => {
                        let (child, v) = solve_node(dp, post, steps - 1);
                        value += branch.probability * v;
                        children.push(child);
                    }
                    None => children.push(PolicyTree::constant(0, no, steps - 1)),
                }
            }
            PolicyTree::node(a, children).expect("children share depth")
        };
        if best.as_ref().is_none_or(|(v, _)| improves(value, *v)) {
            best = Some((value, tree));
        }
    }
    let (value, tree) = best.expect("at least one action");
    (tree, value)
}

/// Expected cumulative reward of executing `tree` from `b`.
pub fn evaluate_policy(dp: &dyn DecisionProcess, tree: &PolicyTree, b: &BeliefPoint) -> Result<f64> {
    if tree.depth() != dp.horizon() {
        return Err(Error::DepthMismatch {
            expected: dp.horizon(),
            found: tree.depth(),
        });
    }
    tree.validate(dp.num_actions(), dp.num_observations())?;
    Ok(evaluate_node(dp, tree, b))
}

fn evaluate_node(dp: &dyn DecisionProcess, tree: &PolicyTree, b: &BeliefPoint) -> f64 {
    let a = tree.action();
    let mut value = expected_reward(dp, b, a);
    if !tree.is_leaf() {
        for (branch, child) in predict(dp, b, a).iter().zip(tree.children()) {
            if let Some(post) = &branch.posterior {
                value += branch.probability * evaluate_node(dp, child, post);
            }
        }
    }
    value
}

/// Exhaustive search over every complete policy tree, in lexicographic
/// preorder; the first tree wins ties.
pub fn brute_force_solve(dp: &dyn DecisionProcess, cap: u128) -> Result<SolvedPolicy> {
    let (na, no, t) = (dp.num_actions(), dp.num_observations(), dp.horizon());
    let nodes = node_count(no, t);
    let total = (0..nodes).try_fold(1u128, |acc, _| acc.checked_mul(na as u128).filter(|&v| v <= cap));
    let Some(_) = total else {
        return Err(Error::LimitExceeded {
            what: "enumerated policy trees",
            needed: (na as u128).checked_pow(nodes.min(u32::MAX as u128) as u32).unwrap_or(u128::MAX),
            limit: cap,
        });
    };
    let b0 = dp.start_belief();
    let mut digits = vec![0usize; nodes as usize];
    let mut best: Option<(f64, PolicyTree)> = None;
    loop {
        let tree = PolicyTree::from_preorder(&digits, no, t)?;
        let value = evaluate_node(dp, &tree, &b0);
        if best.as_ref().is_none_or(|(v, _)| improves(value, *v)) {
            best = Some((value, tree));
        }
        // odometer, last digit fastest
        let mut k = digits.len();
        loop {
            if k == 0 {
                let (value, tree) = best.expect("at least one tree");
                return Ok(SolvedPolicy {
                    tree,
                    value,
                    model_id: dp.id().to_string(),
                });
            }
            k -= 1;
            digits[k] += 1;
            if digits[k] < na {
                break;
            }
            digits[k] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{builtin_tiger, project_level0, Agent, ModelParts, PeerRule};
    use proptest::prelude::*;

    fn tiger_j(horizon: usize) -> SingleAgentModel {
        project_level0(&builtin_tiger(), Agent::J, &PeerRule::Uniform)
            .unwrap()
            .with_horizon(horizon)
            .unwrap()
    }

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|k| format!("{prefix}{k}")).collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn model(ns: usize, na: usize, no: usize, t: Vec<f64>, o: Vec<f64>, r: Vec<f64>, b0: Vec<f64>, horizon: usize) -> SingleAgentModel {
        SingleAgentModel::new(ModelParts {
            name: "m".into(),
            states: names("s", ns),
            actions: names("a", na),
            observations: names("o", no),
            transition: t,
            obs: o,
            reward: r,
            initial_belief: b0,
            horizon,
        })
        .unwrap()
    }

    #[test]
    fn tiger_listen_posterior() {
        let m = tiger_j(1);
        let b = belief_update(&m, &BeliefPoint::uniform(2), 2, 0).unwrap();
        assert!((b.prob(0) - 0.85).abs() < 1e-12);
        assert!((b.prob(1) - 0.15).abs() < 1e-12);
    }

    #[test]
    fn noiseless_observation_gives_point_mass() {
        // a0 swaps the two states; the observation names the state.
        let m = model(2, 1, 2, vec![0., 1., 1., 0.], vec![1., 0., 0., 1.], vec![0., 0.], vec![0.3, 0.7], 1);
        let b = BeliefPoint::from_dense(&[0.3, 0.7]).unwrap();
        let post = belief_update(&m, &b, 0, 1).unwrap();
        assert_eq!(post.to_dense(), vec![0.0, 1.0]);
        assert!(matches!(
            belief_update(&m, &BeliefPoint::point(2, 0), 0, 0),
            Err(Error::ImpossibleEvidence { action: 0, observation: 0 })
        ));
    }

    #[test]
    fn uninformative_observation_gives_pushforward() {
        let t = vec![0.2, 0.8, 0.6, 0.4];
        let m = model(2, 1, 2, t, vec![0.5; 4], vec![0., 0.], vec![1.0, 0.0], 1);
        let b = BeliefPoint::from_dense(&[0.25, 0.75]).unwrap();
        let post = belief_update(&m, &b, 0, 1).unwrap();
        let push = pushforward(&m, &b, 0);
        assert!((post.prob(0) - (0.25 * 0.2 + 0.75 * 0.6)).abs() < 1e-12);
        assert!((post.prob(0) - push.prob(0)).abs() < 1e-12);
    }

    #[test]
    fn tiger_one_step_listens() {
        let sol = solve_exact(&tiger_j(1)).unwrap();
        assert_eq!(sol.tree, PolicyTree::leaf(2));
        assert_eq!(sol.value, -1.0);
        let bf = brute_force_solve(&tiger_j(1), 3).unwrap();
        assert_eq!(bf.tree, PolicyTree::leaf(2));
        let open = evaluate_policy(&tiger_j(1), &PolicyTree::leaf(0), &BeliefPoint::uniform(2)).unwrap();
        assert!((open + 45.0).abs() < 1e-12);
    }

    #[test]
    fn zero_reward_picks_first_actions() {
        let m = model(2, 2, 2, vec![0.5; 8], vec![0.5; 8], vec![0.0; 4], vec![0.5, 0.5], 3);
        let sol = solve_exact(&m).unwrap();
        assert_eq!(sol.value, 0.0);
        assert_eq!(sol.tree, PolicyTree::constant(0, 2, 3));
    }

    #[test]
    fn tiger_two_steps_matches_enumeration() {
        let m = tiger_j(2);
        let exact = solve_exact(&m).unwrap();
        let bf = brute_force_solve(&m, 27).unwrap();
        assert!((exact.value - bf.value).abs() < 1e-9);
        assert_eq!(exact.tree, bf.tree);
        assert!(matches!(brute_force_solve(&m, 26), Err(Error::LimitExceeded { needed: 27, .. })));
    }

    #[test]
    fn all_listen_costs_one_per_step() {
        let m = tiger_j(3);
        let v = evaluate_policy(&m, &PolicyTree::constant(2, 2, 3), &BeliefPoint::uniform(2)).unwrap();
        assert!((v + 3.0).abs() < 1e-12);
        let sol = solve_exact(&m).unwrap();
        let again = evaluate_policy(&m, &sol.tree, &m.start_belief()).unwrap();
        assert!((again - sol.value).abs() < 1e-9);
    }

    #[test]
    fn deterministic_path_sums_rewards() {
        // s0 -a0-> s1 -a0-> s0, rewards 1 in s0 and 5 in s1.
        let m = model(2, 1, 1, vec![0., 1., 1., 0.], vec![1., 1.], vec![1., 5.], vec![1.0, 0.0], 3);
        let v = evaluate_policy(&m, &PolicyTree::constant(0, 1, 3), &BeliefPoint::point(2, 0)).unwrap();
        assert_eq!(v, 7.0);
        assert_eq!(brute_force_solve(&m, 1).unwrap().tree, PolicyTree::constant(0, 1, 3));
    }

    #[test]
    fn depth_mismatch_is_rejected() {
        let m = tiger_j(2);
        assert!(matches!(
            evaluate_policy(&m, &PolicyTree::leaf(0), &BeliefPoint::uniform(2)),
            Err(Error::DepthMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn limit_guard_reports_sizes() {
        let m = tiger_j(30);
        let err = solve_exact(&m).unwrap_err();
        assert!(matches!(err, Error::LimitExceeded { what: "policy tree nodes", .. }));
        assert!(err.to_string().contains("limit"));
    }

    fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0u32..4, len).prop_map(|w| {
            let w: Vec<f64> = if w.iter().all(|&x| x == 0) {
                std::iter::once(1.0).chain(std::iter::repeat(0.0)).take(w.len()).collect()
            } else {
                w.iter().map(|&x| x as f64).collect()
            };
            let total: f64 = w.iter().sum();
            w.iter().map(|x| x / total).collect()
        })
    }

    fn rows(count: usize, len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(distribution(len), count).prop_map(|r| r.concat())
    }

    fn arb_model() -> impl Strategy<Value = SingleAgentModel> {
        (1usize..=3, 1usize..=3, 1usize..=3, 1usize..=2).prop_flat_map(|(ns, na, no, h)| {
            (
                rows(ns * na, ns),
                rows(ns * na, no),
                proptest::collection::vec(-5i32..=5, ns * na),
                distribution(ns),
            )
                .prop_map(move |(t, o, r, b0)| {
                    let r = r.into_iter().map(f64::from).collect();
                    model(ns, na, no, t, o, r, b0, h)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn exact_matches_enumeration(m in arb_model()) {
            let exact = solve_exact(&m).unwrap();
            let bf = brute_force_solve(&m, DEFAULT_ENUMERATION_CAP).unwrap();
            prop_assert!((exact.value - bf.value).abs() < 1e-9);
            let v = evaluate_policy(&m, &exact.tree, &m.start_belief()).unwrap();
            prop_assert!((v - exact.value).abs() < 1e-9);
        }

        #[test]
        fn reward_shift_moves_value_only(m in arb_model(), c in -20i32..=20) {
            let base = solve_exact(&m).unwrap();
            let mut parts = m.clone().into_parts();
            parts.reward.iter_mut().for_each(|r| *r += f64::from(c));
            let shifted = solve_exact(&SingleAgentModel::new(parts).unwrap()).unwrap();
            let expected = base.value + f64::from(c) * m.horizon() as f64;
            prop_assert!((shifted.value - expected).abs() < 1e-9);
            prop_assert_eq!(shifted.tree, base.tree);
        }

        #[test]
        fn updates_stay_normalized(m in arb_model(), a in 0usize..3, b in distribution(3)) {
            let ns = m.states().len();
            let b = BeliefPoint::from_dense_unchecked(&b[..ns]);
            prop_assume!(b.total() > 0.0 && a < m.actions().len());
            let b = BeliefPoint::from_sorted(ns, b.support().iter().map(|&(s, p)| (s, p / b.total())).collect());
            for branch in predict(&m, &b, a) {
                if let Some(post) = branch.posterior {
                    prop_assert!((post.total() - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
