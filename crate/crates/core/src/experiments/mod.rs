//! Batch commands: each takes a serializable spec, writes its outputs into
//! a directory together with a [`RunManifest`], and can be replayed from
//! that manifest.

mod grid;
mod manifest;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use grid::{run_grid, CellResult, GridConfig, GridReport};
pub use manifest::{sha256_hex, InputRecord, OutputRecord, OutputSet, RunManifest, MANIFEST_FILE};

use crate::diversity::Measure;
use crate::domain::{project_level0, resolve_domain, serialize_domain, Agent, PeerRule, PosgDomain, SingleAgentModel};
use crate::error::{Error, Result};
use crate::features::{build_matrix, pivot_decompose};
use crate::generation::random_belief;
use crate::idid::{flatten, solve_idid};
use crate::sim::{run_experiment, write_traces, SimConfig, TrueModelMode, DEFAULT_ROUNDS};
use crate::solver::{solve_exact, solve_from, BeliefPoint};
use crate::topk::{select_topk, CandidateModelSet, SelectionConfig, DEFAULT_PATIENCE};
use crate::tree::PolicyTree;

/// Cap on generated models when a run leaves K open.
pub const DEFAULT_K_CAP: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "IDID")]
    Idid,
    #[serde(rename = "IDID-MDP")]
    IdidMdp,
    #[serde(rename = "IDID-MDF")]
    IdidMdf,
}

impl Algorithm {
    pub fn measure(self) -> Option<Measure> {
        match self {
            Algorithm::Idid => None,
            Algorithm::IdidMdp => Some(Measure::Mdp),
            Algorithm::IdidMdf => Some(Measure::Mdf),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Idid => "IDID",
            Algorithm::IdidMdp => "IDID-MDP",
            Algorithm::IdidMdf => "IDID-MDF",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "IDID" => Ok(Algorithm::Idid),
            "IDID-MDP" | "MDP" => Ok(Algorithm::IdidMdp),
            "IDID-MDF" | "MDF" => Ok(Algorithm::IdidMdf),
            _ => Err(Error::InvalidConfig(format!("unknown algorithm {s:?}"))),
        }
    }
}

/// Independent seed for one pipeline stage.
pub fn derive_seed(seed: u64, stage: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage);
    rng.next_u64()
}

pub(crate) const STAGE_KNOWN: u64 = 1;
pub(crate) const STAGE_SELECT: u64 = 2;
pub(crate) const STAGE_SIM: u64 = 3;

/// `m` distinct level-0 solutions under seeded random initial beliefs.
pub fn generate_known_models(model: &SingleAgentModel, m: usize, seed: u64) -> Result<Vec<PolicyTree>> {
    if m == 0 {
        return Err(Error::InvalidConfig("M must be at least 1".into()));
    }
    let attempts = 100 * m.max(10);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(m);
    for _ in 0..attempts {
        let b = random_belief(model.states().len(), &mut rng);
        let tree = solve_from(model, &b)?.tree;
        if seen.insert(tree.clone()) {
            out.push(tree);
            if out.len() == m {
                return Ok(out);
            }
        }
    }
    Err(Error::KnownModelShortfall {
        wanted: m,
        found: out.len(),
        attempts,
    })
}

/// Resolves a domain reference and applies an optional horizon override.
pub fn load_domain_ref(reference: &str, horizon: Option<usize>) -> Result<PosgDomain> {
    let d = resolve_domain(reference)?;
    Ok(match horizon {
        Some(h) => d.with_horizon(h)?,
        None => d,
    })
}

pub(crate) fn opponent_model(domain: &PosgDomain) -> Result<SingleAgentModel> {
    Ok(project_level0(domain, Agent::J, &PeerRule::Uniform)?)
}

/// The model node contents for one algorithm.
#[derive(Debug, Clone)]
pub struct PipelineCandidates {
    pub known: Vec<PolicyTree>,
    pub set: CandidateModelSet,
    pub known_seconds: f64,
    pub select_seconds: f64,
}

/// Known models, then (unless `algorithm` is plain IDID) top-K expansion
/// with at most `k_cap` generated trees.
pub fn build_candidates(
    domain: &PosgDomain,
    algorithm: Algorithm,
    m: usize,
    k_cap: Option<usize>,
    patience: usize,
    seed: u64,
) -> Result<PipelineCandidates> {
    let model = opponent_model(domain)?;
    let clock = Instant::now();
    let known = generate_known_models(&model, m, derive_seed(seed, STAGE_KNOWN))?;
    let known_seconds = clock.elapsed().as_secs_f64();
    let clock = Instant::now();
    let set = expand_known(&known, &model, algorithm, k_cap, patience, seed)?;
    Ok(PipelineCandidates {
        known,
        set,
        known_seconds,
        select_seconds: clock.elapsed().as_secs_f64(),
    })
}

/// The model node for `algorithm` built from `known`.
pub fn expand_known(
    known: &[PolicyTree],
    model: &SingleAgentModel,
    algorithm: Algorithm,
    k_cap: Option<usize>,
    patience: usize,
    seed: u64,
) -> Result<CandidateModelSet> {
    match algorithm.measure() {
        None => CandidateModelSet::from_known(known.to_vec(), model.observations().len()),
        Some(measure) => {
            let mut cfg = SelectionConfig::new(
                measure,
                known.len() + k_cap.unwrap_or(DEFAULT_K_CAP),
                derive_seed(seed, STAGE_SELECT),
            );
            cfg.patience = patience;
            select_topk(known, model, &cfg)
        }
    }
}

fn default_agent() -> Agent {
    Agent::J
}
fn default_patience() -> usize {
    DEFAULT_PATIENCE
}
fn default_rounds() -> usize {
    DEFAULT_ROUNDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSpec {
    pub domain: String,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default = "default_agent")]
    pub agent: Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesSpec {
    pub domain: String,
    #[serde(default)]
    pub horizon: Option<usize>,
    pub m: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopkSpec {
    pub domain: String,
    #[serde(default)]
    pub horizon: Option<usize>,
    pub m: usize,
    pub measure: Measure,
    /// Total cap on trees; defaults to `m` plus [`DEFAULT_K_CAP`].
    #[serde(default)]
    pub k_max: Option<usize>,
    #[serde(default = "default_patience")]
    pub patience: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    pub domain: String,
    #[serde(default)]
    pub horizon: Option<usize>,
    pub m: usize,
    pub algorithm: Algorithm,
    /// Cap on generated models; ignored for plain IDID.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_patience")]
    pub patience: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub pipeline: PipelineSpec,
    pub mode: TrueModelMode,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default)]
    pub fixed_block: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum CommandSpec {
    Solve(SolveSpec),
    Features(FeaturesSpec),
    Topk(TopkSpec),
    SolveIdid(PipelineSpec),
    Simulate(SimulateSpec),
    Experiment(GridConfig),
}

impl CommandSpec {
    pub fn seed(&self) -> Option<u64> {
        match self {
            CommandSpec::Solve(_) | CommandSpec::Experiment(_) => None,
            CommandSpec::Features(s) => Some(s.seed),
            CommandSpec::Topk(s) => Some(s.seed),
            CommandSpec::SolveIdid(s) => Some(s.seed),
            CommandSpec::Simulate(s) => Some(s.pipeline.seed),
        }
    }
}

/// Outcome of [`execute`]: the manifest written plus any per-cell failures.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub manifest: RunManifest,
    pub failures: usize,
    pub grid: Option<GridReport>,
}

fn csv_bytes(write: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        write(&mut w)?;
        w.flush().map_err(|e| Error::io("<csv>", e))?;
    }
    Ok(buf)
}

fn record_domain(out: &mut OutputSet, name: &str, domain: &PosgDomain) {
    out.input(name, serialize_domain(domain).as_bytes());
}

fn known_csv(known: &[PolicyTree], actions: &[String]) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(["index", "tree"])?;
        for (k, t) in known.iter().enumerate() {
            w.write_record([k.to_string(), t.to_compact(actions)])?;
        }
        Ok(())
    })
}

fn save_candidates(out: &mut OutputSet, domain: &PosgDomain, set: &CandidateModelSet) -> Result<()> {
    let dir = out.dir().join("candidates");
    set.save(&dir, domain.actions(Agent::J), domain.observations(Agent::J))?;
    out.register("candidates/manifest.json")?;
    for k in 0..set.len() {
        out.register(&format!("candidates/tree_{k:03}.json"))?;
    }
    Ok(())
}

/// Runs `spec`, writing outputs and the manifest into `out_dir`.
pub fn execute(spec: &CommandSpec, out_dir: &std::path::Path, workers: usize) -> Result<RunReport> {
    let mut out = OutputSet::new(out_dir)?;
    let mut failures = 0;
    let mut grid_report = None;
    match spec {
        CommandSpec::Solve(s) => {
            let domain = load_domain_ref(&s.domain, s.horizon)?;
            record_domain(&mut out, &s.domain, &domain);
            let model = project_level0(&domain, s.agent, &PeerRule::Uniform)?;
            let clock = Instant::now();
            let sol = solve_exact(&model)?;
            out.time("solve", clock.elapsed().as_secs_f64());
            let text = sol.to_json(model.actions(), model.observations()) + "\n";
            out.write("policy.json", text.as_bytes(), false)?;
        }
        CommandSpec::Features(s) => {
            let domain = load_domain_ref(&s.domain, s.horizon)?;
            record_domain(&mut out, &s.domain, &domain);
            let model = opponent_model(&domain)?;
            let known = generate_known_models(&model, s.m, derive_seed(s.seed, STAGE_KNOWN))?;
            let (acts, obs) = (model.actions(), model.observations());
            out.write("known.csv", &known_csv(&known, acts)?, false)?;
            let p = build_matrix(&known)?;
            let mut buf = Vec::new();
            p.write_csv(&mut buf, acts, obs)?;
            out.write("matrix.csv", &buf, false)?;
            let r = pivot_decompose(&p);
            let bytes = csv_bytes(|w| {
                w.write_record(["feature", "column", "sequence"])?;
                for (k, (c, seq)) in r.pivot_columns.iter().zip(&r.pivot_sequences).enumerate() {
                    w.write_record([k.to_string(), c.to_string(), seq.to_compact(acts, obs)])?;
                }
                Ok(())
            })?;
            out.write("features.csv", &bytes, false)?;
        }
        CommandSpec::Topk(s) => {
            let domain = load_domain_ref(&s.domain, s.horizon)?;
            record_domain(&mut out, &s.domain, &domain);
            let model = opponent_model(&domain)?;
            let clock = Instant::now();
            let known = generate_known_models(&model, s.m, derive_seed(s.seed, STAGE_KNOWN))?;
            out.time("known", clock.elapsed().as_secs_f64());
            let mut cfg = SelectionConfig::new(
                s.measure,
                s.k_max.unwrap_or(s.m + DEFAULT_K_CAP),
                derive_seed(s.seed, STAGE_SELECT),
            );
            cfg.patience = s.patience;
            let clock = Instant::now();
            let set = select_topk(&known, &model, &cfg)?;
            let seconds = clock.elapsed().as_secs_f64();
            out.time("select", seconds);
            out.write("known.csv", &known_csv(&known, model.actions())?, false)?;
            save_candidates(&mut out, &domain, &set)?;
            let mut buf = Vec::new();
            set.diversity.write_csv(&mut buf)?;
            out.write("diversity.csv", &buf, false)?;
            let trace = csv_bytes(|w| {
                w.write_record(["samples", "diversity"])?;
                for (k, v) in &set.trace {
                    w.write_record([k.to_string(), v.to_string()])?;
                }
                Ok(())
            })?;
            out.write("trace.csv", &trace, false)?;
            let timing = csv_bytes(|w| {
                w.write_record(["M", "method", "seconds"])?;
                w.write_record([s.m.to_string(), s.measure.to_string().to_uppercase(), seconds.to_string()])?;
                Ok(())
            })?;
            out.write("timing.csv", &timing, true)?;
        }
        CommandSpec::SolveIdid(s) => {
            let domain = load_domain_ref(&s.domain, s.horizon)?;
            record_domain(&mut out, &s.domain, &domain);
            let c = build_candidates(&domain, s.algorithm, s.m, s.k, s.patience, s.seed)?;
            out.time("known", c.known_seconds);
            out.time("select", c.select_seconds);
            save_candidates(&mut out, &domain, &c.set)?;
            let clock = Instant::now();
            let b0 = BeliefPoint::from_dense(domain.initial_belief())?;
            let sol = solve_idid(&flatten(&domain, &c.set, &b0)?)?;
            out.time("solve", clock.elapsed().as_secs_f64());
            let text = sol.to_json(domain.actions(Agent::I), domain.observations(Agent::I)) + "\n";
            out.write("policy.json", text.as_bytes(), false)?;
        }
        CommandSpec::Simulate(s) => {
            let p = &s.pipeline;
            let domain = load_domain_ref(&p.domain, p.horizon)?;
            record_domain(&mut out, &p.domain, &domain);
            let c = build_candidates(&domain, p.algorithm, p.m, p.k, p.patience, p.seed)?;
            out.time("known", c.known_seconds);
            out.time("select", c.select_seconds);
            save_candidates(&mut out, &domain, &c.set)?;
            let mut cfg = SimConfig::new(s.mode, s.rounds, derive_seed(p.seed, STAGE_SIM));
            cfg.fixed_block = s.fixed_block;
            let clock = Instant::now();
            let outcome = run_experiment(&domain, &c.set, &cfg, None)?;
            out.time("simulate", clock.elapsed().as_secs_f64());
            let text = outcome.policy.to_json(domain.actions(Agent::I), domain.observations(Agent::I)) + "\n";
            out.write("policy.json", text.as_bytes(), false)?;
            let mut buf = Vec::new();
            write_traces(&mut buf, &domain, &outcome.traces)?;
            out.write("traces.csv", &buf, false)?;
            let mut buf = Vec::new();
            outcome.stats.write_csv(&mut buf)?;
            out.write("stats.csv", &buf, false)?;
        }
        CommandSpec::Experiment(g) => {
            let report = run_grid(g, &mut out, workers)?;
            failures = report.failures.len();
            grid_report = Some(report);
        }
    }
    let manifest = out.finish(spec)?;
    Ok(RunReport {
        manifest,
        failures,
        grid: grid_report,
    })
}

/// Re-executes the run recorded in `manifest_path` into `out_dir`. Returns
/// the new report and the recorded outputs whose bytes differ.
pub fn replay(
    manifest_path: &std::path::Path,
    out_dir: &std::path::Path,
    workers: usize,
) -> Result<(RunReport, Vec<String>)> {
    let recorded = RunManifest::load(manifest_path)?;
    let report = execute(&recorded.spec, out_dir, workers)?;
    for input in &recorded.inputs {
        let now = report.manifest.inputs.iter().find(|i| i.name == input.name);
        if now.map(|i| &i.sha256) != Some(&input.sha256) {
            return Err(Error::InvalidConfig(format!(
                "input {} changed since the recorded run",
                input.name
            )));
        }
    }
    let mismatched = recorded.mismatches(out_dir);
    Ok((report, mismatched))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::builtin_tiger;

    #[test]
    fn six_distinct_known_tiger_models() {
        let model = opponent_model(&builtin_tiger()).unwrap();
        let known = generate_known_models(&model, 6, 1).unwrap();
        assert_eq!(known.len(), 6);
        assert_eq!(known, generate_known_models(&model, 6, 1).unwrap());
        let err = generate_known_models(&model, 40, 1).unwrap_err();
        assert!(matches!(err, Error::KnownModelShortfall { wanted: 40, .. }));
    }

    #[test]
    fn algorithm_names() {
        for a in [Algorithm::Idid, Algorithm::IdidMdp, Algorithm::IdidMdf] {
            assert_eq!(a.to_string().parse::<Algorithm>().unwrap(), a);
            let json = serde_json::to_string(&a).unwrap();
            assert_eq!(json, format!("\"{a}\""));
        }
    }

    #[test]
    fn plain_idid_uses_known_models_only() {
        let d = builtin_tiger();
        let c = build_candidates(&d, Algorithm::Idid, 4, Some(5), 20, 3).unwrap();
        assert_eq!(c.set.trees, c.known);
        assert_eq!(c.set.generated_count(), 0);
    }

    #[test]
    fn stage_seeds_differ() {
        assert_ne!(derive_seed(1, 1), derive_seed(1, 2));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    #[test]
    fn command_documents_round_trip() {
        let spec = CommandSpec::Topk(TopkSpec {
            domain: "tiger".into(),
            horizon: Some(3),
            m: 3,
            measure: Measure::Mdf,
            k_max: None,
            patience: 20,
            seed: 5,
        });
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"command\":\"topk\""));
        assert_eq!(serde_json::from_str::<CommandSpec>(&text).unwrap(), spec);
    }
}
