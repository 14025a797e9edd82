//! Repeated interactions between agent `i`'s policy and `j`'s true model.
//!
//! Every round draws `j`'s true tree and plays one episode. Round `r` uses
//! two independent ChaCha streams of the experiment seed, `2r` for the true
//! model and `2r + 1` for the episode, so rounds are reproducible in
//! isolation and two algorithms run with the same seed face identical
//! opponents and identical nature.

use std::collections::HashSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{project_level0, Agent, PeerRule, PosgDomain};
use crate::error::{Error, Result};
use crate::generation::{convert_to_dbn, random_belief, sample_from, sample_tree, AnchorPolicy, DynamicBeliefNet};
use crate::idid::{flatten, solve_idid};
use crate::solver::{BeliefPoint, SolvedPolicy};
use crate::topk::CandidateModelSet;
use crate::tree::{BehaviorSequence, PolicyTree};

pub const DEFAULT_ROUNDS: usize = 50;
pub const DEFAULT_MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub s: usize,
    pub a_i: usize,
    pub a_j: usize,
    pub o_i: usize,
    pub o_j: usize,
    pub r_i: f64,
    pub r_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub steps: Vec<StepRecord>,
    pub cumulative_reward_i: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentStats {
    pub mean_reward_i: f64,
    /// Population variance of the per-episode rewards.
    pub variance: f64,
    pub episode_count: usize,
    pub rewards: Vec<f64>,
}

impl ExperimentStats {
    pub fn from_rewards(rewards: Vec<f64>) -> Self {
        let n = rewards.len() as f64;
        let mean = rewards.iter().sum::<f64>() / n;
        let variance = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
        ExperimentStats {
            mean_reward_i: mean,
            variance,
            episode_count: rewards.len(),
            rewards,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["episode_count", "mean_reward_i", "variance"])?;
        w.write_record([
            self.episode_count.to_string(),
            self.mean_reward_i.to_string(),
            self.variance.to_string(),
        ])?;
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn categorical<R: Rng + ?Sized>(rng: &mut R, weights: impl Iterator<Item = (usize, f64)>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (k, p) in weights {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = Some(k);
        if u < acc {
            return k;
        }
    }
    last.expect("distribution has positive mass")
}

/// Plays one episode of `domain.horizon()` steps.
pub fn run_episode<R: Rng + ?Sized>(
    domain: &PosgDomain,
    policy_i: &PolicyTree,
    tree_j: &PolicyTree,
    initial: &BeliefPoint,
    rng: &mut R,
) -> Result<EpisodeTrace> {
    let horizon = domain.horizon();
    for t in [policy_i, tree_j] {
        if t.depth() < horizon {
            return Err(Error::DepthMismatch {
                expected: horizon,
                found: t.depth(),
            });
        }
    }
    policy_i.validate(domain.actions(Agent::I).len(), domain.observations(Agent::I).len())?;
    tree_j.validate(domain.actions(Agent::J).len(), domain.observations(Agent::J).len())?;
    let (noi, noj) = (domain.observations(Agent::I).len(), domain.observations(Agent::J).len());

    let mut s = categorical(rng, initial.support().iter().copied());
    let (mut ni, mut nj) = (policy_i, tree_j);
    let mut steps = Vec::with_capacity(horizon);
    let mut total = 0.0;
    for _ in 0..horizon {
        let (a_i, a_j) = (ni.action(), nj.action());
        let r_i = domain.reward_i(s, a_i, a_j);
        let r_j = domain.reward_j(s, a_j, a_i);
        let next = categorical(rng, domain.transition_row(s, a_i, a_j).iter().copied());
        let o_i = categorical(rng, (0..noi).map(|o| (o, domain.obs_i(next, a_i, a_j, o))));
        let o_j = categorical(rng, (0..noj).map(|o| (o, domain.obs_j(next, a_j, o))));
        steps.push(StepRecord {
            s,
            a_i,
            a_j,
            o_i,
            o_j,
            r_i,
            r_j,
        });
        total += r_i;
        if let Some(c) = ni.child(o_i) {
            ni = c;
        }
        if let Some(c) = nj.child(o_j) {
            nj = c;
        }
        s = next;
    }
    Ok(EpisodeTrace {
        steps,
        cumulative_reward_i: total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrueModelMode {
    FromSet,
    RandomGenerated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub mode: TrueModelMode,
    pub rounds: usize,
    pub seed: u64,
    /// Draw one true model for the whole block instead of one per round.
    #[serde(default)]
    pub fixed_block: bool,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_attempts() -> usize {
    DEFAULT_MAX_ATTEMPTS
}

impl SimConfig {
    pub fn new(mode: TrueModelMode, rounds: usize, seed: u64) -> Self {
        SimConfig {
            mode,
            rounds,
            seed,
            fixed_block: false,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

/// Source of fresh true models that differ from every excluded tree.
///
/// Each draw completes an anchor from a uniformly random initial belief. By
/// default the anchor is itself a uniformly random action/observation path,
/// so true behaviour is not confined to completions of the known features.
#[derive(Debug, Clone)]
pub struct NovelTreeSampler {
    dbn: DynamicBeliefNet,
    anchors: Option<Vec<BehaviorSequence>>,
    exclude: HashSet<PolicyTree>,
}

impl NovelTreeSampler {
    /// Samples from `j`'s level-0 model at the domain horizon, anchored on
    /// random paths.
    pub fn new(domain: &PosgDomain, exclude: impl IntoIterator<Item = PolicyTree>) -> Result<Self> {
        let model = project_level0(domain, Agent::J, &PeerRule::Uniform)?;
        Ok(NovelTreeSampler {
            dbn: convert_to_dbn(&model),
            anchors: None,
            exclude: exclude.into_iter().collect(),
        })
    }

    /// As [`NovelTreeSampler::new`] but anchored on a uniform choice from `anchors`.
    pub fn anchored(
        domain: &PosgDomain,
        anchors: Vec<BehaviorSequence>,
        exclude: impl IntoIterator<Item = PolicyTree>,
    ) -> Result<Self> {
        let mut s = Self::new(domain, exclude)?;
        s.anchors = Some(anchors);
        Ok(s)
    }

    fn draw<R: Rng + ?Sized>(&self, attempt: usize, rng: &mut R) -> Result<PolicyTree> {
        match &self.anchors {
            Some(anchors) => sample_tree(&self.dbn, anchors, AnchorPolicy::Uniform, attempt, rng),
            None => {
                let b0 = random_belief(self.dbn.num_states(), rng);
                let t = self.dbn.model().horizon();
                let actions = (0..t).map(|_| rng.random_range(0..self.dbn.num_actions())).collect();
                let obs = (1..t).map(|_| rng.random_range(0..self.dbn.num_observations())).collect();
                Ok(sample_from(&self.dbn, &BehaviorSequence::new(actions, obs)?, &b0))
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, max_attempts: usize) -> Result<PolicyTree> {
        for attempt in 0..max_attempts {
            let t = self.draw(attempt, rng)?;
            if !self.exclude.contains(&t) {
                return Ok(t);
            }
        }
        Err(Error::NoNovelTree {
            attempts: max_attempts,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub policy: SolvedPolicy,
    pub stats: ExperimentStats,
    pub traces: Vec<EpisodeTrace>,
    pub true_models: Vec<PolicyTree>,
}

pub(crate) fn round_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Solves `i`'s interactive model once, then plays `config.rounds` episodes.
/// Random true models avoid the candidates and anything in `sampler`'s
/// exclusion set; without a sampler one is built from the candidates.
pub fn run_experiment(
    domain: &PosgDomain,
    candidates: &CandidateModelSet,
    config: &SimConfig,
    sampler: Option<&NovelTreeSampler>,
) -> Result<ExperimentOutcome> {
    if config.rounds == 0 {
        return Err(Error::InvalidConfig("rounds must be at least 1".into()));
    }
    let b0 = BeliefPoint::from_dense(domain.initial_belief())?;
    let policy = solve_idid(&flatten(domain, candidates, &b0)?)?;

    let owned;
    let sampler = match (config.mode, sampler) {
        (TrueModelMode::RandomGenerated, None) => {
            owned = NovelTreeSampler::new(domain, candidates.trees.clone())?;
            Some(&owned)
        }
        (_, s) => s,
    };
    let draw = |round: usize| -> Result<PolicyTree> {
        let mut rng = round_rng(config.seed, 2 * round as u64);
        match config.mode {
            TrueModelMode::FromSet => {
                Ok(candidates.trees[rng.random_range(0..candidates.trees.len())].clone())
            }
            TrueModelMode::RandomGenerated => {
                let s = sampler.expect("sampler set for random mode");
                let t = s.sample(&mut rng, config.max_attempts)?;
                debug_assert!(!candidates.trees.contains(&t));
                Ok(t)
            }
        }
    };

    let block = if config.fixed_block { Some(draw(0)?) } else { None };
    let mut traces = Vec::with_capacity(config.rounds);
    let mut true_models = Vec::with_capacity(config.rounds);
    for round in 0..config.rounds {
        let tree_j = match &block {
            Some(t) => t.clone(),
            None => draw(round)?,
        };
        let mut rng = round_rng(config.seed, 2 * round as u64 + 1);
        traces.push(run_episode(domain, &policy.tree, &tree_j, &b0, &mut rng)?);
        true_models.push(tree_j);
    }
    let stats = ExperimentStats::from_rewards(traces.iter().map(|t| t.cumulative_reward_i).collect());
    Ok(ExperimentOutcome {
        policy,
        stats,
        traces,
        true_models,
    })
}

/// One row per step: round, step, state and identifiers by name.
pub fn write_traces<W: Write>(out: W, domain: &PosgDomain, traces: &[EpisodeTrace]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "step", "s", "a_i", "a_j", "o_i", "o_j", "r_i"])?;
    for (round, trace) in traces.iter().enumerate() {
        for (step, r) in trace.steps.iter().enumerate() {
            w.write_record([
                round.to_string(),
                (step + 1).to_string(),
                domain.states()[r.s].clone(),
                domain.actions(Agent::I)[r.a_i].clone(),
                domain.actions(Agent::J)[r.a_j].clone(),
                domain.observations(Agent::I)[r.o_i].clone(),
                domain.observations(Agent::J)[r.o_j].clone(),
                r.r_i.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
