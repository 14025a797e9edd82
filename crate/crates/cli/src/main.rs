//! `idid`: batch front end for opponent-model diversification experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use idid_core::diversity::Measure;
use idid_core::domain::Agent;
use idid_core::experiments::{
    execute, replay, Algorithm, CommandSpec, FeaturesSpec, GridConfig, PipelineSpec, SimulateSpec,
    SolveSpec, TopkSpec,
};
use idid_core::sim::TrueModelMode;
use idid_core::topk::DEFAULT_PATIENCE;

#[derive(Parser, Debug)]
#[command(name = "idid", version, about = "Diversified opponent models for I-DIDs")]
struct Cli {
    /// Root seed; every stage derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads for experiment grids.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Builtin domain name (`tiger`, `uav`) or a path to a domain file.
    #[arg(long, global = true, default_value = "tiger")]
    domain: String,
    /// Overrides the domain's horizon.
    #[arg(long, global = true)]
    horizon: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the level-0 model of one agent exactly.
    Solve {
        #[arg(long, value_enum, default_value_t = AgentArg::J)]
        agent: AgentArg,
    },
    /// Known models, their behaviour matrix and extracted features.
    Features {
        #[arg(long, default_value_t = 6)]
        m: usize,
    },
    /// Known models followed by diversity-driven top-K selection.
    Topk {
        #[arg(long, default_value_t = 6)]
        m: usize,
        #[arg(long, value_enum, default_value_t = MeasureArg::Mdf)]
        measure: MeasureArg,
        /// Total model count at which selection stops.
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_PATIENCE)]
        patience: usize,
    },
    /// Build the candidate set and solve the I-DID of agent i.
    SolveIdid(PipelineArgs),
    /// Solve the I-DID and play it against true opponent models.
    Simulate {
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long, value_enum, default_value_t = ModeArg::RandomGenerated)]
        mode: ModeArg,
        #[arg(long, default_value_t = 50)]
        rounds: usize,
        /// Keep one true model for all rounds instead of redrawing each round.
        #[arg(long)]
        fixed_block: bool,
    },
    /// Run a grid from a config file, or replay a recorded manifest.
    Experiment {
        #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long, default_value_t = 6)]
    m: usize,
    #[arg(long, value_enum, default_value_t = AlgorithmArg::IdidMdf)]
    algorithm: AlgorithmArg,
    /// Cap on generated models (ignored for plain IDID).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_PATIENCE)]
    patience: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AgentArg {
    I,
    J,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MeasureArg {
    Mdp,
    Mdf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    FromSet,
    RandomGenerated,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AlgorithmArg {
    #[value(name = "IDID", alias = "idid")]
    Idid,
    #[value(name = "IDID-MDP", alias = "idid-mdp")]
    IdidMdp,
    #[value(name = "IDID-MDF", alias = "idid-mdf")]
    IdidMdf,
}

impl Cli {
    fn pipeline(&self, p: &PipelineArgs) -> PipelineSpec {
        PipelineSpec {
            domain: self.domain.clone(),
            horizon: self.horizon,
            m: p.m,
            algorithm: match p.algorithm {
                AlgorithmArg::Idid => Algorithm::Idid,
                AlgorithmArg::IdidMdp => Algorithm::IdidMdp,
                AlgorithmArg::IdidMdf => Algorithm::IdidMdf,
            },
            k: p.k,
            patience: p.patience,
            seed: self.seed,
        }
    }

    fn spec(&self) -> anyhow::Result<CommandSpec> {
        Ok(match &self.command {
            Command::Solve { agent } => CommandSpec::Solve(SolveSpec {
                domain: self.domain.clone(),
                horizon: self.horizon,
                agent: match agent {
                    AgentArg::I => Agent::I,
                    AgentArg::J => Agent::J,
                },
            }),
            Command::Features { m } => CommandSpec::Features(FeaturesSpec {
                domain: self.domain.clone(),
                horizon: self.horizon,
                m: *m,
                seed: self.seed,
            }),
            Command::Topk { m, measure, k_max, patience } => CommandSpec::Topk(TopkSpec {
                domain: self.domain.clone(),
                horizon: self.horizon,
                m: *m,
                measure: match measure {
                    MeasureArg::Mdp => Measure::Mdp,
                    MeasureArg::Mdf => Measure::Mdf,
                },
                k_max: *k_max,
                patience: *patience,
                seed: self.seed,
            }),
            Command::SolveIdid(p) => CommandSpec::SolveIdid(self.pipeline(p)),
            Command::Simulate { pipeline, mode, rounds, fixed_block } => CommandSpec::Simulate(SimulateSpec {
                pipeline: self.pipeline(pipeline),
                mode: match mode {
                    ModeArg::FromSet => TrueModelMode::FromSet,
                    ModeArg::RandomGenerated => TrueModelMode::RandomGenerated,
                },
                rounds: *rounds,
                fixed_block: *fixed_block,
            }),
            Command::Experiment { config: Some(path), .. } => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let grid: GridConfig =
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                CommandSpec::Experiment(grid)
            }
            Command::Experiment { .. } => bail!("either --config or --manifest is required"),
        })
    }
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    if let Command::Experiment { manifest: Some(path), .. } = &cli.command {
        let (report, mismatched) = replay(path, &cli.out_dir, cli.workers)?;
        for m in &mismatched {
            eprintln!("output differs from recorded run: {m}");
        }
        println!(
            "replayed {} outputs into {}",
            report.manifest.outputs.len(),
            cli.out_dir.display()
        );
        return Ok(mismatched.is_empty() && report.failures == 0);
    }
    let spec = cli.spec()?;
    let report = execute(&spec, &cli.out_dir, cli.workers)?;
    for o in &report.manifest.outputs {
        println!("{}", cli.out_dir.join(&o.path).display());
    }
    if let Some(grid) = &report.grid {
        for f in &grid.failures {
            eprintln!(
                "cell failed: {} {} T={} M={} seed={}: {}",
                f.algorithm, f.domain, f.horizon, f.m, f.seed, f.error
            );
        }
    }
    Ok(report.failures == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
