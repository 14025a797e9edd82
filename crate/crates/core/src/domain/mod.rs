//! Two-agent partially observable stochastic games and their level-0 projections.
//!
//! A [`PosgDomain`] holds the joint tables of a two-agent game:
//!
//! - transition `Pr(s' | s, a_i, a_j)`, stored as sparse rows
//! - agent i's observations `Pr(o_i | s', a_i, a_j)`
//! - agent j's observations `Pr(o_j | s', a_j)`
//! - rewards `R_i(s, a_i, a_j)` and `R_j(s, a_j, a_i)`
//!
//! [`project_level0`] marginalizes the peer's action out of every table and
//! produces the [`SingleAgentModel`] that a level-0 agent plans against.

mod builtin;
mod io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use builtin::{
    builtin, builtin_tiger, builtin_uav, uav_cell_of, uav_relative_offset, UavCell, TIGER_NAME,
    UAV_GRID, UAV_NAME,
};
pub use io::{load_domain, load_domain_file, resolve_domain, serialize_domain};

/// Tolerance on every conditional distribution's total mass.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("{path}: schema violation, {detail}")]
    Schema { path: String, detail: String },

    #[error("{path}: distribution sums to {sum}, expected 1")]
    Normalization { path: String, sum: f64 },

    #[error("{path}: probability {value} is outside [0, 1]")]
    Range { path: String, value: f64 },

    #[error("{path}: unknown identifier {id:?}")]
    UnknownIdentifier { path: String, id: String },

    #[error("{path}: {detail}")]
    Invalid { path: String, detail: String },

    #[error("unknown domain {0:?} (expected a builtin name or a readable file)")]
    UnknownDomain(String),

    #[error("malformed document: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Agent {
    I,
    J,
}

impl Agent {
    pub fn peer(self) -> Agent {
        match self {
            Agent::I => Agent::J,
            Agent::J => Agent::I,
        }
    }
}

impl std::fmt::Display for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Agent::I => "i",
            Agent::J => "j",
        })
    }
}

/// A partition of the joint states into an agent's local states.
///
/// Level-0 projections lump the joint states of each block with uniform weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub labels: Vec<String>,
    /// Block index for every joint state.
    pub assignment: Vec<usize>,
}

/// How the projected agent expects its peer to act.
#[derive(Debug, Clone, PartialEq)]
pub enum PeerRule {
    Uniform,
    PointMass(usize),
    Mixed(Vec<f64>),
}

impl PeerRule {
    fn weights(&self, n: usize) -> Result<Vec<f64>, DomainError> {
        let path = "peer_rule".to_string();
        match self {
            PeerRule::Uniform => Ok(vec![1.0 / n as f64; n]),
            PeerRule::PointMass(a) if *a < n => {
                let mut w = vec![0.0; n];
                w[*a] = 1.0;
                Ok(w)
            }
            PeerRule::PointMass(a) => Err(DomainError::Invalid {
                path,
                detail: format!("peer action {a} out of range (peer has {n} actions)"),
            }),
            PeerRule::Mixed(w) => {
                if w.len() != n {
                    return Err(DomainError::Invalid {
                        path,
                        detail: format!("expected {n} weights, got {}", w.len()),
                    });
                }
                check_distribution(w, &path)?;
                Ok(w.clone())
            }
        }
    }
}

/// Every field of a domain, before validation.
#[derive(Debug, Clone)]
pub struct DomainParts {
    pub name: String,
    pub states: Vec<String>,
    pub actions_i: Vec<String>,
    pub actions_j: Vec<String>,
    pub observations_i: Vec<String>,
    pub observations_j: Vec<String>,
    pub horizon: usize,
    /// Sparse rows indexed by `(s * |A_i| + a_i) * |A_j| + a_j`.
    pub transition: Vec<Vec<(usize, f64)>>,
    /// Dense `[s'][a_i][a_j][o_i]`.
    pub obs_i: Vec<f64>,
    /// Dense `[s'][a_j][o_j]`.
    pub obs_j: Vec<f64>,
    /// Dense `[s][a_i][a_j]`.
    pub reward_i: Vec<f64>,
    /// Dense `[s][a_j][a_i]`.
    pub reward_j: Vec<f64>,
    pub initial_belief: Vec<f64>,
    pub view_i: Option<StateView>,
    pub view_j: Option<StateView>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosgDomain {
    name: String,
    states: Vec<String>,
    actions_i: Vec<String>,
    actions_j: Vec<String>,
    observations_i: Vec<String>,
    observations_j: Vec<String>,
    horizon: usize,
    transition: Vec<Vec<(usize, f64)>>,
    obs_i: Vec<f64>,
    obs_j: Vec<f64>,
    reward_i: Vec<f64>,
    reward_j: Vec<f64>,
    initial_belief: Vec<f64>,
    view_i: Option<StateView>,
    view_j: Option<StateView>,
}

impl PosgDomain {
    /// Validates `parts` and builds the domain. Zero-probability transition
    /// entries are dropped so that equal tables compare equal.
    pub fn new(mut parts: DomainParts) -> Result<Self, DomainError> {
        for row in &mut parts.transition {
            row.retain(|&(_, p)| p != 0.0);
        }
        validate_parts(&parts)?;
        Ok(PosgDomain {
            name: parts.name,
            states: parts.states,
            actions_i: parts.actions_i,
            actions_j: parts.actions_j,
            observations_i: parts.observations_i,
            observations_j: parts.observations_j,
            horizon: parts.horizon,
            transition: parts.transition,
            obs_i: parts.obs_i,
            obs_j: parts.obs_j,
            reward_i: parts.reward_i,
            reward_j: parts.reward_j,
            initial_belief: parts.initial_belief,
            view_i: parts.view_i,
            view_j: parts.view_j,
        })
    }

    /// Re-runs every invariant check.
    pub fn validate(&self) -> Result<(), DomainError> {
        validate_parts(&self.clone().into_parts())
    }

    pub fn into_parts(self) -> DomainParts {
        DomainParts {
            name: self.name,
            states: self.states,
            actions_i: self.actions_i,
            actions_j: self.actions_j,
            observations_i: self.observations_i,
            observations_j: self.observations_j,
            horizon: self.horizon,
            transition: self.transition,
            obs_i: self.obs_i,
            obs_j: self.obs_j,
            reward_i: self.reward_i,
            reward_j: self.reward_j,
            initial_belief: self.initial_belief,
            view_i: self.view_i,
            view_j: self.view_j,
        }
    }

    pub fn with_horizon(mut self, horizon: usize) -> Result<Self, DomainError> {
        if horizon == 0 {
            return Err(DomainError::Invalid {
                path: "horizon".into(),
                detail: "horizon must be at least 1".into(),
            });
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn states(&self) -> &[String] {
        &self.states
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn initial_belief(&self) -> &[f64] {
        &self.initial_belief
    }
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn actions(&self, agent: Agent) -> &[String] {
        match agent {
            Agent::I => &self.actions_i,
            Agent::J => &self.actions_j,
        }
    }

    pub fn observations(&self, agent: Agent) -> &[String] {
        match agent {
            Agent::I => &self.observations_i,
            Agent::J => &self.observations_j,
        }
    }

    pub fn view(&self, agent: Agent) -> Option<&StateView> {
        match agent {
            Agent::I => self.view_i.as_ref(),
            Agent::J => self.view_j.as_ref(),
        }
    }

    fn row_index(&self, s: usize, ai: usize, aj: usize) -> usize {
        (s * self.actions_i.len() + ai) * self.actions_j.len() + aj
    }

    /// Non-zero entries of `Pr(. | s, a_i, a_j)`.
    pub fn transition_row(&self, s: usize, ai: usize, aj: usize) -> &[(usize, f64)] {
        &self.transition[self.row_index(s, ai, aj)]
    }

    pub fn transition_prob(&self, s: usize, ai: usize, aj: usize, next: usize) -> f64 {
        self.transition_row(s, ai, aj)
            .iter()
            .find(|&&(t, _)| t == next)
            .map_or(0.0, |&(_, p)| p)
    }

    pub fn obs_i(&self, next: usize, ai: usize, aj: usize, o: usize) -> f64 {
        let (na_i, na_j, no) = (
            self.actions_i.len(),
            self.actions_j.len(),
            self.observations_i.len(),
        );
        self.obs_i[((next * na_i + ai) * na_j + aj) * no + o]
    }

    pub fn obs_j(&self, next: usize, aj: usize, o: usize) -> f64 {
        let (na_j, no) = (self.actions_j.len(), self.observations_j.len());
        self.obs_j[(next * na_j + aj) * no + o]
    }

    pub fn reward_i(&self, s: usize, ai: usize, aj: usize) -> f64 {
        self.reward_i[(s * self.actions_i.len() + ai) * self.actions_j.len() + aj]
    }

    pub fn reward_j(&self, s: usize, aj: usize, ai: usize) -> f64 {
        self.reward_j[(s * self.actions_j.len() + aj) * self.actions_i.len() + ai]
    }
}

/// A single-agent finite-horizon POMDP: the decision model of one agent once
/// its peer has been marginalized.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleAgentModel {
    name: String,
    states: Vec<String>,
    actions: Vec<String>,
    observations: Vec<String>,
    /// Dense `[s][a][s']`.
    transition: Vec<f64>,
    /// Dense `[s'][a][o]`.
    obs: Vec<f64>,
    /// Dense `[s][a]`.
    reward: Vec<f64>,
    initial_belief: Vec<f64>,
    horizon: usize,
    sparse_rows: Vec<Vec<(usize, f64)>>,
}

/// Dense tables for [`SingleAgentModel::new`].
#[derive(Debug, Clone)]
pub struct ModelParts {
    pub name: String,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub observations: Vec<String>,
    pub transition: Vec<f64>,
    pub obs: Vec<f64>,
    pub reward: Vec<f64>,
    pub initial_belief: Vec<f64>,
    pub horizon: usize,
}

impl SingleAgentModel {
    pub fn new(parts: ModelParts) -> Result<Self, DomainError> {
        let (ns, na, no) = (
            parts.states.len(),
            parts.actions.len(),
            parts.observations.len(),
        );
        if ns == 0 || na == 0 || no == 0 {
            return Err(DomainError::Invalid {
                path: "model".into(),
                detail: "states, actions and observations must be non-empty".into(),
            });
        }
        if parts.horizon == 0 {
            return Err(DomainError::Invalid {
                path: "horizon".into(),
                detail: "horizon must be at least 1".into(),
            });
        }
        expect_len("transition", parts.transition.len(), ns * na * ns)?;
        expect_len("obs", parts.obs.len(), ns * na * no)?;
        expect_len("reward", parts.reward.len(), ns * na)?;
        expect_len("initial_belief", parts.initial_belief.len(), ns)?;
        for s in 0..ns {
            for a in 0..na {
                let start = (s * na + a) * ns;
                check_distribution(
                    &parts.transition[start..start + ns],
                    &format!("transition[{}][{}]", parts.states[s], parts.actions[a]),
                )?;
                let start = (s * na + a) * no;
                check_distribution(
                    &parts.obs[start..start + no],
                    &format!("obs[{}][{}]", parts.states[s], parts.actions[a]),
                )?;
            }
        }
        check_finite(&parts.reward, "reward")?;
        check_distribution(&parts.initial_belief, "initial_belief")?;
        let sparse_rows = parts
            .transition
            .chunks(ns)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p != 0.0)
                    .map(|(t, &p)| (t, p))
                    .collect()
            })
            .collect();
        Ok(SingleAgentModel {
            name: parts.name,
            states: parts.states,
            actions: parts.actions,
            observations: parts.observations,
            transition: parts.transition,
            obs: parts.obs,
            reward: parts.reward,
            initial_belief: parts.initial_belief,
            horizon: parts.horizon,
            sparse_rows,
        })
    }

    pub fn into_parts(self) -> ModelParts {
        ModelParts {
            name: self.name,
            states: self.states,
            actions: self.actions,
            observations: self.observations,
            transition: self.transition,
            obs: self.obs,
            reward: self.reward,
            initial_belief: self.initial_belief,
            horizon: self.horizon,
        }
    }

    pub fn with_initial_belief(&self, belief: Vec<f64>) -> Result<Self, DomainError> {
        expect_len("initial_belief", belief.len(), self.states.len())?;
        check_distribution(&belief, "initial_belief")?;
        let mut out = self.clone();
        out.initial_belief = belief;
        Ok(out)
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self, DomainError> {
        let mut parts = self.clone().into_parts();
        parts.horizon = horizon;
        SingleAgentModel::new(parts)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn states(&self) -> &[String] {
        &self.states
    }
    pub fn actions(&self) -> &[String] {
        &self.actions
    }
    pub fn observations(&self) -> &[String] {
        &self.observations
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn initial_belief(&self) -> &[f64] {
        &self.initial_belief
    }

    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        let ns = self.states.len();
        self.transition[(s * self.actions.len() + a) * ns + next]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.sparse_rows[s * self.actions.len() + a]
    }

    pub fn obs(&self, next: usize, a: usize, o: usize) -> f64 {
        self.obs[(next * self.actions.len() + a) * self.observations.len() + o]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.actions.len() + a]
    }

    pub fn min_reward(&self) -> f64 {
        self.reward.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Projects the joint game onto `agent`, marginalizing the peer's action with
/// `peer` independently in every table. When the domain declares a state view
/// for `agent`, joint states are lumped into the view's blocks.
pub fn project_level0(
    domain: &PosgDomain,
    agent: Agent,
    peer: &PeerRule,
) -> Result<SingleAgentModel, DomainError> {
    let ns = domain.num_states();
    let own_actions = domain.actions(agent).len();
    let peer_actions = domain.actions(agent.peer()).len();
    let own_obs = domain.observations(agent).len();
    let w = peer.weights(peer_actions)?;

    let pair = |own: usize, other: usize| match agent {
        Agent::I => (own, other),
        Agent::J => (other, own),
    };

    // Joint-state tables with the peer marginalized.
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(ns * own_actions);
    let mut obs = vec![0.0; ns * own_actions * own_obs];
    let mut reward = vec![0.0; ns * own_actions];
    for s in 0..ns {
        for a in 0..own_actions {
            let mut acc: Vec<(usize, f64)> = Vec::new();
            for (b, &wb) in w.iter().enumerate() {
                if wb == 0.0 {
                    continue;
                }
                let (ai, aj) = pair(a, b);
                for &(next, p) in domain.transition_row(s, ai, aj) {
                    match acc.iter_mut().find(|(t, _)| *t == next) {
                        Some(entry) => entry.1 += wb * p,
                        None => acc.push((next, wb * p)),
                    }
                }
                reward[s * own_actions + a] += wb
                    * match agent {
                        Agent::I => domain.reward_i(s, ai, aj),
                        Agent::J => domain.reward_j(s, aj, ai),
                    };
                for o in 0..own_obs {
                    obs[(s * own_actions + a) * own_obs + o] += wb
                        * match agent {
                            Agent::I => domain.obs_i(s, ai, aj, o),
                            Agent::J => domain.obs_j(s, aj, o),
                        };
                }
            }
            acc.sort_by_key(|&(t, _)| t);
            rows.push(acc);
        }
    }

    let (states, blocks, weight): (Vec<String>, Vec<usize>, Vec<f64>) = match domain.view(agent) {
        Some(view) => {
            let mut size = vec![0usize; view.labels.len()];
            for &b in &view.assignment {
                size[b] += 1;
            }
            let weight = view
                .assignment
                .iter()
                .map(|&b| 1.0 / size[b] as f64)
                .collect();
            (view.labels.clone(), view.assignment.clone(), weight)
        }
        None => (domain.states.clone(), (0..ns).collect(), vec![1.0; ns]),
    };
    let nb = states.len();

    let mut transition = vec![0.0; nb * own_actions * nb];
    let mut lumped_obs = vec![0.0; nb * own_actions * own_obs];
    let mut lumped_reward = vec![0.0; nb * own_actions];
    let mut initial = vec![0.0; nb];
    for s in 0..ns {
        let (bs, ws) = (blocks[s], weight[s]);
        initial[bs] += domain.initial_belief[s];
        for a in 0..own_actions {
            for &(next, p) in &rows[s * own_actions + a] {
                transition[(bs * own_actions + a) * nb + blocks[next]] += ws * p;
            }
            lumped_reward[bs * own_actions + a] += ws * reward[s * own_actions + a];
            for o in 0..own_obs {
                lumped_obs[(bs * own_actions + a) * own_obs + o] +=
                    ws * obs[(s * own_actions + a) * own_obs + o];
            }
        }
    }
    for row in transition.chunks_mut(nb) {
        renormalize(row);
    }
    for row in lumped_obs.chunks_mut(own_obs) {
        renormalize(row);
    }
    renormalize(&mut initial);

    SingleAgentModel::new(ModelParts {
        name: format!("{}-level0-{}", domain.name, agent),
        states,
        actions: domain.actions(agent).to_vec(),
        observations: domain.observations(agent).to_vec(),
        transition,
        obs: lumped_obs,
        reward: lumped_reward,
        initial_belief: initial,
        horizon: domain.horizon,
    })
}

fn renormalize(row: &mut [f64]) {
    let sum: f64 = row.iter().sum();
    if sum > 0.0 {
        for p in row.iter_mut() {
            *p /= sum;
        }
    }
}

fn expect_len(path: &str, found: usize, expected: usize) -> Result<(), DomainError> {
    if found == expected {
        Ok(())
    } else {
        Err(DomainError::Schema {
            path: path.into(),
            detail: format!("expected {expected} entries, found {found}"),
        })
    }
}

fn check_finite(values: &[f64], path: &str) -> Result<(), DomainError> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(k) => Err(DomainError::Invalid {
            path: format!("{path}[{k}]"),
            detail: "reward must be finite".into(),
        }),
    }
}

pub(crate) fn check_distribution(values: &[f64], path: &str) -> Result<(), DomainError> {
    for &p in values {
        if !(0.0..=1.0).contains(&p) {
            return Err(DomainError::Range {
                path: path.into(),
                value: p,
            });
        }
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(DomainError::Normalization {
            path: path.into(),
            sum,
        });
    }
    Ok(())
}

fn check_names(names: &[String], path: &str) -> Result<(), DomainError> {
    if names.is_empty() {
        return Err(DomainError::Schema {
            path: path.into(),
            detail: "must declare at least one identifier".into(),
        });
    }
    let mut seen = std::collections::HashSet::new();
    for n in names {
        if n.is_empty() || !seen.insert(n.as_str()) {
            return Err(DomainError::Invalid {
                path: path.into(),
                detail: format!("identifier {n:?} is empty or repeated"),
            });
        }
    }
    Ok(())
}

fn validate_parts(p: &DomainParts) -> Result<(), DomainError> {
    check_names(&p.states, "states")?;
    check_names(&p.actions_i, "actions_i")?;
    check_names(&p.actions_j, "actions_j")?;
    check_names(&p.observations_i, "observations_i")?;
    check_names(&p.observations_j, "observations_j")?;
    if p.horizon == 0 {
        return Err(DomainError::Invalid {
            path: "horizon".into(),
            detail: "horizon must be at least 1".into(),
        });
    }
    let (ns, nai, naj) = (p.states.len(), p.actions_i.len(), p.actions_j.len());
    let (noi, noj) = (p.observations_i.len(), p.observations_j.len());
    expect_len("transition", p.transition.len(), ns * nai * naj)?;
    expect_len("obs_i", p.obs_i.len(), ns * nai * naj * noi)?;
    expect_len("obs_j", p.obs_j.len(), ns * naj * noj)?;
    expect_len("reward_i", p.reward_i.len(), ns * nai * naj)?;
    expect_len("reward_j", p.reward_j.len(), ns * naj * nai)?;
    expect_len("initial_belief", p.initial_belief.len(), ns)?;

    for s in 0..ns {
        for ai in 0..nai {
            for aj in 0..naj {
                let path = format!(
                    "transition[{}][{}][{}]",
                    p.states[s], p.actions_i[ai], p.actions_j[aj]
                );
                let row = &p.transition[(s * nai + ai) * naj + aj];
                let mut sum = 0.0;
                for &(next, prob) in row {
                    if next >= ns {
                        return Err(DomainError::UnknownIdentifier {
                            path,
                            id: format!("state #{next}"),
                        });
                    }
                    if !(0.0..=1.0).contains(&prob) {
                        return Err(DomainError::Range { path, value: prob });
                    }
                    sum += prob;
                }
                if (sum - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(DomainError::Normalization { path, sum });
                }
                let start = ((s * nai + ai) * naj + aj) * noi;
                check_distribution(
                    &p.obs_i[start..start + noi],
                    &format!(
                        "obs_i[{}][{}][{}]",
                        p.states[s], p.actions_i[ai], p.actions_j[aj]
                    ),
                )?;
            }
        }
        for aj in 0..naj {
            let start = (s * naj + aj) * noj;
            check_distribution(
                &p.obs_j[start..start + noj],
                &format!("obs_j[{}][{}]", p.states[s], p.actions_j[aj]),
            )?;
        }
    }
    check_finite(&p.reward_i, "reward_i")?;
    check_finite(&p.reward_j, "reward_j")?;
    check_distribution(&p.initial_belief, "initial_belief")?;
    for (agent, view) in [("i", &p.view_i), ("j", &p.view_j)] {
        let Some(view) = view else { continue };
        let path = format!("views.{agent}");
        check_names(&view.labels, &path)?;
        expect_len(&path, view.assignment.len(), ns)?;
        let mut used = vec![false; view.labels.len()];
        for (s, &b) in view.assignment.iter().enumerate() {
            if b >= view.labels.len() {
                return Err(DomainError::UnknownIdentifier {
                    path: format!("{path}.assignment[{}]", p.states[s]),
                    id: format!("block #{b}"),
                });
            }
            used[b] = true;
        }
        if let Some(b) = used.iter().position(|u| !u) {
            return Err(DomainError::Invalid {
                path,
                detail: format!("block {:?} has no states", view.labels[b]),
            });
        }
    }
    Ok(())
}
