//! Agent `i`'s interactive model, flattened to a single-agent problem.
//!
//! The model node holds candidate policy trees for `j`. Each augmented state
//! is `(m, pos, s)`: the candidate `m`, `j`'s current node `pos` in it, and
//! the physical state `s`, indexed m-major, pos-minor, s-innermost. `j` plays
//! the action at `pos` and descends along its observation, which `i` never
//! sees, so it is marginalized into the position transition:
//!
//! ```text
//! Pr(s', pos', o_i | s, pos, a_i) = T(s' | s, a_i, a_j) · O_i(o_i | s', a_i, a_j)
//!                                   · Σ_{o_j : child(pos, o_j) = pos'} O_j(o_j | s', a_j)
//! ```
//!
//! The candidate index never changes. Tables are computed on demand, so the
//! augmented space can be large.

use crate::domain::{Agent, ModelParts, PosgDomain, SingleAgentModel};
use crate::error::{Error, Result};
use crate::solver::{solve_exact, BeliefPoint, DecisionProcess, SolvedPolicy};
use crate::topk::CandidateModelSet;
use crate::tree::PolicyTree;

#[derive(Debug, Clone)]
struct FlatNode {
    action: usize,
    depth: usize,
    /// Child position per `j` observation; empty at leaves, which loop.
    children: Vec<usize>,
}

fn flatten_tree(tree: &PolicyTree) -> Vec<FlatNode> {
    let mut nodes = vec![FlatNode {
        action: tree.action(),
        depth: 1,
        children: Vec::new(),
    }];
    let mut queue = std::collections::VecDeque::from([(tree, 0usize)]);
    while let Some((t, pos)) = queue.pop_front() {
        for c in t.children() {
            nodes.push(FlatNode {
                action: c.action(),
                depth: nodes[pos].depth + 1,
                children: Vec::new(),
            });
            let k = nodes.len() - 1;
            nodes[pos].children.push(k);
            queue.push_back((c, k));
        }
    }
    nodes
}

/// Which candidate and tree position an augmented state tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelNodeState {
    pub candidate: usize,
    pub position: usize,
    pub state: usize,
}

#[derive(Debug, Clone)]
pub struct FlatIdid {
    id: String,
    domain: PosgDomain,
    trees: Vec<Vec<FlatNode>>,
    prior: Vec<f64>,
    offsets: Vec<usize>,
    num_states: usize,
    b0: BeliefPoint,
}

/// Builds agent `i`'s flattened model against `candidates` from physical
/// belief `b0`.
pub fn flatten(domain: &PosgDomain, candidates: &CandidateModelSet, b0: &BeliefPoint) -> Result<FlatIdid> {
    flatten_trees(domain, &candidates.trees, &candidates.prior, b0)
}

pub fn flatten_trees(
    domain: &PosgDomain,
    trees: &[PolicyTree],
    prior: &[f64],
    b0: &BeliefPoint,
) -> Result<FlatIdid> {
    if trees.is_empty() {
        return Err(Error::InvalidConfig("the model node needs at least one candidate".into()));
    }
    if prior.len() != trees.len() {
        return Err(Error::InvalidConfig(format!(
            "prior has {} entries for {} candidates",
            prior.len(),
            trees.len()
        )));
    }
    crate::domain::check_distribution(prior, "prior")?;
    let ns = domain.num_states();
    if b0.dim() != ns {
        return Err(Error::InvalidConfig(format!(
            "belief over {} states for a domain with {ns}",
            b0.dim()
        )));
    }
    let (naj, noj) = (domain.actions(Agent::J).len(), domain.observations(Agent::J).len());
    for t in trees {
        t.validate(naj, noj)?;
        if t.depth() < domain.horizon() {
            return Err(Error::DepthMismatch {
                expected: domain.horizon(),
                found: t.depth(),
            });
        }
    }
    let flat: Vec<Vec<FlatNode>> = trees.iter().map(flatten_tree).collect();
    let mut offsets = Vec::with_capacity(flat.len());
    let mut total = 0usize;
    for nodes in &flat {
        offsets.push(total);
        total += nodes.len() * ns;
    }
    let mut entries = Vec::new();
    for (m, &p) in prior.iter().enumerate() {
        if p > 0.0 {
            entries.extend(b0.support().iter().map(|&(s, q)| (offsets[m] + s, p * q)));
        }
    }
    Ok(FlatIdid {
        id: format!("{}-idid-i", domain.name()),
        domain: domain.clone(),
        trees: flat,
        prior: prior.to_vec(),
        offsets,
        num_states: total,
        b0: BeliefPoint::from_sorted(total, entries),
    })
}

impl FlatIdid {
    pub fn domain(&self) -> &PosgDomain {
        &self.domain
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn num_candidates(&self) -> usize {
        self.trees.len()
    }

    pub fn encode(&self, x: ModelNodeState) -> usize {
        self.offsets[x.candidate] + x.position * self.domain.num_states() + x.state
    }

    pub fn decode(&self, index: usize) -> ModelNodeState {
        let ns = self.domain.num_states();
        let candidate = self.offsets.partition_point(|&o| o <= index) - 1;
        let local = index - self.offsets[candidate];
        ModelNodeState {
            candidate,
            position: local / ns,
            state: local % ns,
        }
    }

    /// Augmented states whose tree position lies at depth `step`.
    pub fn active_states(&self, step: usize) -> usize {
        let per_tree: usize = self
            .trees
            .iter()
            .map(|nodes| nodes.iter().filter(|n| n.depth == step).count())
            .sum();
        per_tree * self.domain.num_states()
    }

    /// Dense equivalent, for small models. Agent `i`'s observation at an
    /// augmented state is conditioned on the action of the position's parent.
    pub fn materialize(&self, max_states: usize) -> Result<SingleAgentModel> {
        let n = self.num_states;
        if n > max_states {
            return Err(Error::LimitExceeded {
                what: "materialized augmented states",
                needed: n as u128,
                limit: max_states as u128,
            });
        }
        let (nai, noi) = (self.num_actions(), self.num_observations());
        let ns = self.domain.num_states();
        let mut transition = vec![0.0; n * nai * n];
        for x in 0..n {
            for a in 0..nai {
                let row = &mut transition[(x * nai + a) * n..(x * nai + a + 1) * n];
                self.outcomes(x, a, &mut |next, _, p| row[next] += p);
            }
        }
        let mut parent_action = vec![Vec::new(); self.trees.len()];
        for (m, nodes) in self.trees.iter().enumerate() {
            let mut pa: Vec<usize> = nodes.iter().map(|n| n.action).collect();
            for node in nodes {
                for &c in &node.children {
                    pa[c] = node.action;
                }
            }
            parent_action[m] = pa;
        }
        let mut obs = vec![0.0; n * nai * noi];
        for x in 0..n {
            let st = self.decode(x);
            let aj = parent_action[st.candidate][st.position];
            for a in 0..nai {
                for o in 0..noi {
                    obs[(x * nai + a) * noi + o] = self.domain.obs_i(st.state, a, aj, o);
                }
            }
        }
        let mut reward = vec![0.0; n * nai];
        for x in 0..n {
            for a in 0..nai {
                reward[x * nai + a] = DecisionProcess::reward(self, x, a);
            }
        }
        let states = (0..n)
            .map(|x| {
                let st = self.decode(x);
                format!("m{}_n{}_{}", st.candidate, st.position, self.domain.states()[st.state % ns])
            })
            .collect();
        Ok(SingleAgentModel::new(ModelParts {
            name: self.id.clone(),
            states,
            actions: self.action_names().to_vec(),
            observations: self.observation_names().to_vec(),
            transition,
            obs,
            reward,
            initial_belief: self.b0.to_dense(),
            horizon: self.horizon(),
        })?)
    }
}

impl DecisionProcess for FlatIdid {
    fn id(&self) -> &str {
        &self.id
    }
    fn action_names(&self) -> &[String] {
        self.domain.actions(Agent::I)
    }
    fn observation_names(&self) -> &[String] {
        self.domain.observations(Agent::I)
    }
    fn num_states(&self) -> usize {
        self.num_states
    }
    fn horizon(&self) -> usize {
        self.domain.horizon()
    }
    fn start_belief(&self) -> BeliefPoint {
        self.b0.clone()
    }
    fn reward(&self, x: usize, ai: usize) -> f64 {
        let st = self.decode(x);
        let aj = self.trees[st.candidate][st.position].action;
        self.domain.reward_i(st.state, ai, aj)
    }
    fn outcomes(&self, x: usize, ai: usize, emit: &mut dyn FnMut(usize, usize, f64)) {
        let d = &self.domain;
        let st = self.decode(x);
        let node = &self.trees[st.candidate][st.position];
        let aj = node.action;
        let base = self.offsets[st.candidate];
        let ns = d.num_states();
        let noi = d.observations(Agent::I).len();
        for &(next, t) in d.transition_row(st.state, ai, aj) {
            let mut visit = |pos: usize, w: f64| {
                let y = base + pos * ns + next;
                for oi in 0..noi {
                    let p = t * w * d.obs_i(next, ai, aj, oi);
                    if p > 0.0 {
                        emit(y, oi, p);
                    }
                }
            };
            if node.children.is_empty() {
                visit(st.position, 1.0);
            } else {
                for (oj, &child) in node.children.iter().enumerate() {
                    let w = d.obs_j(next, aj, oj);
                    if w > 0.0 {
                        visit(child, w);
                    }
                }
            }
        }
    }
}

/// Agent `i`'s optimal policy tree against the model node.
pub fn solve_idid(flat: &FlatIdid) -> Result<SolvedPolicy> {
    solve_exact(flat)
}
