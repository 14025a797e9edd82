//! Experiment grids: every combination of domain, horizon, M, K cap,
//! true-model mode and seed, run for each listed algorithm.

use std::collections::HashSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    csv_bytes, derive_seed, expand_known, generate_known_models, load_domain_ref, opponent_model,
    record_domain, Algorithm, OutputSet, STAGE_KNOWN, STAGE_SIM,
};
use crate::error::{Error, Result};
use crate::sim::{run_experiment, NovelTreeSampler, SimConfig, TrueModelMode, DEFAULT_ROUNDS};
use crate::topk::DEFAULT_PATIENCE;

fn default_k() -> Vec<Option<usize>> {
    vec![None]
}
fn default_rounds() -> usize {
    DEFAULT_ROUNDS
}
fn default_patience() -> usize {
    DEFAULT_PATIENCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub algorithms: Vec<Algorithm>,
    pub domains: Vec<String>,
    pub horizons: Vec<usize>,
    pub m: Vec<usize>,
    /// Caps on generated models; `null` leaves the count to the stopping rule.
    #[serde(default = "default_k")]
    pub k: Vec<Option<usize>>,
    pub modes: Vec<TrueModelMode>,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub fixed_block: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct Group {
    domain: String,
    horizon: usize,
    m: usize,
    k_cap: Option<usize>,
    mode: TrueModelMode,
    seed: u64,
}

impl GridConfig {
    fn groups(&self) -> Vec<Group> {
        let mut out = Vec::new();
        if self.algorithms.is_empty() {
            return out;
        }
        for domain in &self.domains {
            for &horizon in &self.horizons {
                for &m in &self.m {
                    for &k_cap in &self.k {
                        for &mode in &self.modes {
                            for &seed in &self.seeds {
                                out.push(Group {
                                    domain: domain.clone(),
                                    horizon,
                                    m,
                                    k_cap,
                                    mode,
                                    seed,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub algorithm: Algorithm,
    pub domain: String,
    pub horizon: usize,
    pub m: usize,
    pub k_cap: Option<usize>,
    /// Generated models actually added.
    pub k: usize,
    pub mode: TrueModelMode,
    pub seed: u64,
    pub mean: f64,
    pub variance: f64,
    pub mdp: f64,
    pub mdf: f64,
    pub candidates: usize,
    pub rewards: Vec<f64>,
    #[serde(skip)]
    pub timings: Vec<(&'static str, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFailure {
    pub algorithm: Algorithm,
    pub domain: String,
    pub horizon: usize,
    pub m: usize,
    pub k_cap: Option<usize>,
    pub mode: TrueModelMode,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct GridReport {
    pub cells: Vec<CellResult>,
    pub failures: Vec<CellFailure>,
}

fn mode_name(mode: TrueModelMode) -> &'static str {
    match mode {
        TrueModelMode::FromSet => "from-set",
        TrueModelMode::RandomGenerated => "random-generated",
    }
}

fn cap_text(algorithm: Algorithm, cap: Option<usize>) -> String {
    match (algorithm, cap) {
        (Algorithm::Idid, _) => "0".into(),
        (_, Some(c)) => c.to_string(),
        (_, None) => String::new(),
    }
}

type GroupOutcome = Vec<std::result::Result<CellResult, CellFailure>>;

fn run_group(config: &GridConfig, g: &Group) -> GroupOutcome {
    let fail_all = |e: &Error| -> GroupOutcome {
        config
            .algorithms
            .iter()
            .map(|&algorithm| Err(failure(g, algorithm, e)))
            .collect()
    };
    let prepared = (|| -> Result<_> {
        let domain = load_domain_ref(&g.domain, Some(g.horizon))?;
        let model = opponent_model(&domain)?;
        let clock = Instant::now();
        let known = generate_known_models(&model, g.m, derive_seed(g.seed, STAGE_KNOWN))?;
        Ok((domain, model, known, clock.elapsed().as_secs_f64()))
    })();
    let (domain, model, known, known_seconds) = match prepared {
        Ok(p) => p,
        Err(e) => return fail_all(&e),
    };

    let sets: Vec<_> = config
        .algorithms
        .iter()
        .map(|&algorithm| {
            let cap = if algorithm == Algorithm::Idid { Some(0) } else { g.k_cap };
            let clock = Instant::now();
            expand_known(&known, &model, algorithm, cap, config.patience, g.seed)
                .map(|set| (set, clock.elapsed().as_secs_f64()))
        })
        .collect();

    // Random true models must be novel for every algorithm in the group, so
    // that all algorithms face the same opponents.
    let sampler = match g.mode {
        TrueModelMode::FromSet => None,
        TrueModelMode::RandomGenerated => {
            let exclude: HashSet<_> = sets
                .iter()
                .flatten()
                .flat_map(|(set, _)| set.trees.iter().cloned())
                .collect();
            match NovelTreeSampler::new(&domain, exclude) {
                Ok(s) => Some(s),
                Err(e) => return fail_all(&e),
            }
        }
    };

    let mut sim = SimConfig::new(g.mode, config.rounds, derive_seed(g.seed, STAGE_SIM));
    sim.fixed_block = config.fixed_block;
    config
        .algorithms
        .iter()
        .zip(sets)
        .map(|(&algorithm, built)| {
            let (set, select_seconds) = built.map_err(|e| failure(g, algorithm, &e))?;
            let clock = Instant::now();
            let outcome =
                run_experiment(&domain, &set, &sim, sampler.as_ref()).map_err(|e| failure(g, algorithm, &e))?;
            Ok(CellResult {
                algorithm,
                domain: g.domain.clone(),
                horizon: g.horizon,
                m: g.m,
                k_cap: if algorithm == Algorithm::Idid { Some(0) } else { g.k_cap },
                k: set.generated_count(),
                mode: g.mode,
                seed: g.seed,
                mean: outcome.stats.mean_reward_i,
                variance: outcome.stats.variance,
                mdp: set.diversity.mdp_value,
                mdf: set.diversity.mdf_value,
                candidates: set.len(),
                rewards: outcome.stats.rewards,
                timings: vec![
                    ("known", known_seconds),
                    ("select", select_seconds),
                    ("solve+simulate", clock.elapsed().as_secs_f64()),
                ],
            })
        })
        .collect()
}

fn failure(g: &Group, algorithm: Algorithm, e: &Error) -> CellFailure {
    CellFailure {
        algorithm,
        domain: g.domain.clone(),
        horizon: g.horizon,
        m: g.m,
        k_cap: g.k_cap,
        mode: g.mode,
        seed: g.seed,
        error: e.to_string(),
    }
}

/// Runs every cell on up to `workers` threads and writes `results.csv`,
/// `diversity.csv`, `failures.csv` and the volatile `timing.csv`.
pub fn run_grid(config: &GridConfig, out: &mut OutputSet, workers: usize) -> Result<GridReport> {
    if config.rounds == 0 {
        return Err(Error::InvalidConfig("rounds must be at least 1".into()));
    }
    for d in &config.domains {
        let domain = load_domain_ref(d, None)?;
        record_domain(out, d, &domain);
    }
    let groups = config.groups();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let outcomes: Vec<GroupOutcome> = pool.install(|| groups.par_iter().map(|g| run_group(config, g)).collect());

    let mut report = GridReport::default();
    for r in outcomes.into_iter().flatten() {
        match r {
            Ok(c) => report.cells.push(c),
            Err(f) => report.failures.push(f),
        }
    }

    let results = csv_bytes(|w| {
        w.write_record(["algorithm", "domain", "T", "M", "K", "K_cap", "mode", "seed", "mean", "variance", "candidates"])?;
        for c in &report.cells {
            w.write_record([
                c.algorithm.to_string(),
                c.domain.clone(),
                c.horizon.to_string(),
                c.m.to_string(),
                c.k.to_string(),
                cap_text(c.algorithm, c.k_cap),
                mode_name(c.mode).into(),
                c.seed.to_string(),
                c.mean.to_string(),
                c.variance.to_string(),
                c.candidates.to_string(),
            ])?;
        }
        Ok(())
    })?;
    out.write("results.csv", &results, false)?;

    let diversity = csv_bytes(|w| {
        w.write_record(["algorithm", "domain", "T", "M", "K", "mode", "seed", "mdp", "mdf", "mean"])?;
        for c in &report.cells {
            w.write_record([
                c.algorithm.to_string(),
                c.domain.clone(),
                c.horizon.to_string(),
                c.m.to_string(),
                c.k.to_string(),
                mode_name(c.mode).into(),
                c.seed.to_string(),
                c.mdp.to_string(),
                c.mdf.to_string(),
                c.mean.to_string(),
            ])?;
        }
        Ok(())
    })?;
    out.write("diversity.csv", &diversity, false)?;

    let failures = csv_bytes(|w| {
        w.write_record(["algorithm", "domain", "T", "M", "K_cap", "mode", "seed", "error"])?;
        for f in &report.failures {
            w.write_record([
                f.algorithm.to_string(),
                f.domain.clone(),
                f.horizon.to_string(),
                f.m.to_string(),
                cap_text(f.algorithm, f.k_cap),
                mode_name(f.mode).into(),
                f.seed.to_string(),
                f.error.clone(),
            ])?;
        }
        Ok(())
    })?;
    out.write("failures.csv", &failures, false)?;

    let timing = csv_bytes(|w| {
        w.write_record(["algorithm", "domain", "T", "M", "K_cap", "mode", "seed", "phase", "seconds"])?;
        for c in &report.cells {
            for (phase, secs) in &c.timings {
                w.write_record([
                    c.algorithm.to_string(),
                    c.domain.clone(),
                    c.horizon.to_string(),
                    c.m.to_string(),
                    cap_text(c.algorithm, c.k_cap),
                    mode_name(c.mode).into(),
                    c.seed.to_string(),
                    phase.to_string(),
                    secs.to_string(),
                ])?;
            }
        }
        Ok(())
    })?;
    out.write("timing.csv", &timing, true)?;
    for c in &report.cells {
        for (phase, secs) in &c.timings {
            out.time(phase, *secs);
        }
    }
    Ok(report)
}
