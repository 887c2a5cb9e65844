use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use einstein_core::agents::{GreedyAgent, NoisyAgent, Policy};
use einstein_core::engine::{replay_event_log, ActionSpaceConfig};
use einstein_core::harness::{
    compute_metrics, default_asymmetric_pairings, error_table, read_episodes, run_batch,
    run_matrix, write_episodes, write_error_csv, write_metrics_csv, EpisodeSpec, PolicyFactory,
};
use einstein_core::planner::{plan_near_optimal, plan_optimal, Trajectory, TrajectoryFile};
use einstein_core::policy::{HttpPolicy, StdioPolicy};
use einstein_core::puzzle::{generate_batch, read_puzzles, write_puzzles, PuzzleInstance};
use einstein_core::sft::{export_sft, write_sft};
use einstein_core::verifier::VerifierStack;

#[derive(Parser)]
#[command(name = "einstein", about = "Collaborative Einstein-puzzle environment")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a puzzle pool as JSON lines.
    Gen {
        #[arg(long)]
        objects: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Play every puzzle in a pool and write one episode record per line.
    Selfplay {
        #[arg(long)]
        puzzles: PathBuf,
        /// One config for both players, or `p1,p2`.
        #[arg(long, default_value = "both")]
        config: String,
        #[arg(long, default_value = "reasoning")]
        verifier: VerifierStack,
        #[arg(long, default_value_t = 4)]
        samples: usize,
        #[arg(long, default_value_t = 30)]
        step_limit: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// greedy, noisy:<p>, stdio:<command> or http:<url>
        #[arg(long, default_value = "greedy")]
        agent: String,
        #[arg(long, default_value_t = 30)]
        timeout_secs: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Metrics and error tables from episode records.
    Analyze {
        episodes: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        errors: Option<PathBuf>,
    },
    /// Planner trajectories for a pool.
    Plan {
        #[arg(long)]
        puzzles: PathBuf,
        #[arg(long, default_value = "both")]
        config: String,
        /// Extra steps allowed over optimal; 0 gives one optimal plan.
        #[arg(long, default_value_t = 0)]
        slack: u32,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Chat-format training samples from trajectories.
    ExportSft {
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        rationale: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a game event log and print the final state.
    Replay { log: PathBuf },
    /// Run the pairing matrix over a pool.
    Matrix {
        #[arg(long)]
        puzzles: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "none,reasoning")]
        verifiers: Vec<VerifierStack>,
        #[arg(long, default_value_t = 4)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn input(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn load_pool(path: &Path) -> Result<Vec<Arc<PuzzleInstance>>> {
    Ok(read_puzzles(input(path)?)?
        .into_iter()
        .map(Arc::new)
        .collect())
}

fn parse_configs(s: &str) -> Result<[ActionSpaceConfig; 2]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [c] => {
            let c: ActionSpaceConfig = c.parse()?;
            Ok([c, c])
        }
        [a, b] => Ok([a.parse()?, b.parse()?]),
        _ => bail!("expected a config or a p1,p2 pair: {s}"),
    }
}

/// Builds a policy factory from the agent description.
fn agent_factory(desc: &str, timeout: Duration) -> Result<Box<PolicyFactory<'static>>> {
    let (kind, arg) = desc.split_once(':').unwrap_or((desc, ""));
    let arg = arg.to_string();
    Ok(match kind {
        "greedy" => Box::new(|_, _| Box::new(GreedyAgent) as Box<dyn Policy>),
        "noisy" => {
            let p: f64 = arg.parse().context("noisy:<probability>")?;
            Box::new(move |who, seed| {
                Box::new(NoisyAgent::new(
                    p,
                    seed.wrapping_mul(2).wrapping_add(who.index() as u64),
                )) as Box<dyn Policy>
            })
        }
        "stdio" => {
            let mut words = arg.split_whitespace().map(String::from);
            let program = words.next().context("stdio:<command>")?;
            let args: Vec<String> = words.collect();
            Box::new(move |who, seed| {
                let game = format!("{seed}-{}", who.name());
                match StdioPolicy::spawn(&program, &args, timeout, &game) {
                    Ok(p) => Box::new(p) as Box<dyn Policy>,
                    Err(e) => panic!("cannot start policy process: {e}"),
                }
            })
        }
        "http" => Box::new(move |who, seed| {
            Box::new(HttpPolicy::new(
                &arg,
                timeout,
                &format!("{seed}-{}", who.name()),
            )) as Box<dyn Policy>
        }),
        _ => bail!("unknown agent {desc}"),
    })
}

fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for (i, line) in input(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: TrajectoryFile =
            serde_json::from_str(&line).with_context(|| format!("line {}", i + 1))?;
        out.push(Trajectory::from_file(f)?);
    }
    Ok(out)
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Gen {
            objects,
            count,
            seed,
            out,
        } => {
            let batch = generate_batch(objects, count, seed)?;
            let mut w = output(&out)?;
            write_puzzles(&mut w, &batch)?;
            w.flush()?;
        }
        Cmd::Selfplay {
            puzzles,
            config,
            verifier,
            samples,
            step_limit,
            seed,
            agent,
            timeout_secs,
            out,
        } => {
            let pool = load_pool(&puzzles)?;
            let spec = EpisodeSpec {
                configs: parse_configs(&config)?,
                stack: verifier,
                n_samples: samples,
                step_limit,
                seed,
            };
            let factory = agent_factory(&agent, Duration::from_secs(timeout_secs))?;
            let records = run_batch(&pool, &spec, factory.as_ref());
            let mut w = output(&out)?;
            write_episodes(&mut w, &records)?;
            w.flush()?;
            let solved = records
                .iter()
                .filter(|r| r.status == einstein_core::GameStatus::Solved)
                .count();
            eprintln!("{} episodes, {solved} solved", records.len());
        }
        Cmd::Analyze {
            episodes,
            report,
            errors,
        } => {
            let records = read_episodes(input(&episodes)?)?;
            let metrics = compute_metrics(&records)?;
            let table = error_table(&records);
            if let Some(p) = report {
                write_metrics_csv(File::create(p)?, &metrics)?;
            } else {
                write_metrics_csv(io::stdout(), &metrics)?;
            }
            if let Some(p) = errors {
                write_error_csv(File::create(p)?, &table)?;
            } else {
                print!("{}", table.render());
            }
        }
        Cmd::Plan {
            puzzles,
            config,
            slack,
            k,
            seed,
            out,
        } => {
            let configs = parse_configs(&config)?;
            let mut w = output(&out)?;
            for (i, p) in load_pool(&puzzles)?.iter().enumerate() {
                let plans = if slack == 0 && k <= 1 {
                    vec![plan_optimal(p, configs)?]
                } else {
                    plan_near_optimal(p, configs, slack, k, seed.wrapping_add(i as u64))?
                };
                for t in plans {
                    serde_json::to_writer(&mut w, &t.to_file())?;
                    w.write_all(b"\n")?;
                }
            }
            w.flush()?;
        }
        Cmd::ExportSft {
            trajectories,
            rationale,
            out,
        } => {
            let samples = export_sft(&read_trajectories(&trajectories)?, rationale)?;
            let mut w = output(&out)?;
            write_sft(&mut w, &samples)?;
            w.flush()?;
        }
        Cmd::Replay { log } => {
            let g = replay_event_log(input(&log)?)?;
            println!("{}", serde_json::to_string_pretty(&g.snapshot())?);
        }
        Cmd::Matrix {
            puzzles,
            verifiers,
            samples,
            seed,
            out,
        } => {
            let pool = load_pool(&puzzles)?;
            let mut base =
                EpisodeSpec::new([ActionSpaceConfig::ProvideAndSeek; 2], VerifierStack::None);
            base.n_samples = samples;
            base.seed = seed;
            let mut pairings: Vec<_> = ActionSpaceConfig::ALL.iter().map(|&c| [c, c]).collect();
            pairings.extend(default_asymmetric_pairings());
            let factory = agent_factory("greedy", Duration::from_secs(30))?;
            let rows = run_matrix(&pool, &pairings, &verifiers, &base, factory.as_ref())?;
            let mut w = output(&out)?;
            for r in rows {
                serde_json::to_writer(&mut w, &r)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
