//! The `hormsim` command line: scenario runs, combination sweeps, parameter
//! optimization, and overlay generation.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::cleanup::CleanupPolicy;
use crate::engine::{self, RunOutput};
use crate::error::{Error, Result};
use crate::ga;
use crate::metrics;
use crate::scenario::Scenario;
use crate::topology;
use crate::transport::ReplicationStrategy;

#[derive(Parser)]
#[command(name = "hormsim", version, about = "Hormone-driven unit delivery simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one scenario and write its metrics.
    Run(RunArgs),
    /// Run a replication x cleanup x churn x seed matrix.
    Sweep(SweepArgs),
    /// Optimize the hormone parameter set with the genetic algorithm.
    Optimize(OptimizeArgs),
    /// Generate an overlay and export it as an edge list.
    Topo(TopoArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (flat key = value format).
    #[arg(long)]
    scenario: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Individual key overrides, repeatable: --set key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario> {
        let mut scenario = Scenario::load(&self.scenario)?;
        for pair in &self.sets {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::config(format!("--set expects key=value, got `{pair}`")))?;
            scenario.set(key.trim(), value.trim())?;
        }
        if let Some(seed) = self.seed {
            scenario.seed = seed;
        }
        scenario.validate()?;
        Ok(scenario)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output directory; one subdirectory per cell plus combined.csv.
    #[arg(long, default_value = "sweep-out")]
    out: PathBuf,
    /// Replication strategies, comma separated, or "all".
    #[arg(long, default_value = "all")]
    strategies: String,
    /// Cleanup policies (none,lru,lfu,hormone), comma separated, or "all".
    #[arg(long, default_value = "all")]
    cleanups: String,
    /// Churn removal counts, comma separated.
    #[arg(long, default_value = "")]
    churn: String,
    /// Seeds, comma separated; defaults to the scenario seed.
    #[arg(long, default_value = "")]
    seeds: String,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value = "ga-out")]
    out: PathBuf,
    #[arg(long, default_value_t = 30)]
    generations: usize,
    #[arg(long, default_value_t = 20)]
    population: usize,
    #[arg(long, default_value_t = 5)]
    elites: usize,
    #[arg(long, default_value_t = 6)]
    mutants: usize,
    #[arg(long, default_value_t = 6)]
    crossovers: usize,
    #[arg(long, default_value_t = 3)]
    fresh: usize,
    #[arg(long, default_value_t = 0.10)]
    sigma: f64,
    #[arg(long, default_value_t = 3)]
    seeds_per_eval: usize,
    /// Worker threads for fitness evaluation (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct TopoArgs {
    /// random or powerlaw.
    #[arg(long, default_value = "random")]
    kind: String,
    #[arg(long)]
    nodes: usize,
    #[arg(long, default_value_t = 0.085)]
    edge_prob: f64,
    /// Edge budget for powerlaw generation.
    #[arg(long, default_value_t = 0)]
    edges: usize,
    /// Rewire steps for powerlaw generation (0 = 10x edges).
    #[arg(long, default_value_t = 0)]
    rewire: usize,
    #[arg(long, default_value_t = 1e8)]
    bandwidth: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Edge-list output file.
    #[arg(long)]
    out: PathBuf,
    /// Print node/edge/diameter statistics.
    #[arg(long, default_value_t = false)]
    stats: bool,
}

/// Entry point used by the `hormsim` binary. Logging verbosity comes from
/// the `HS_LOG` environment variable.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("HS_LOG")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Optimize(args) => cmd_optimize(&args),
        Command::Topo(args) => cmd_topo(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Writes the full output set for one finished run.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let create = |name: &str| -> Result<std::io::BufWriter<fs::File>> {
        Ok(std::io::BufWriter::new(fs::File::create(dir.join(name))?))
    };
    let mut delays = create("delays.csv")?;
    metrics::write_delays_csv(&out.log, out.dt, &mut delays)?;
    let mut cdf = create("cdf.csv")?;
    metrics::write_cdf_csv(&out.log, out.dt, &mut cdf)?;
    let mut cleanup = create("cleanup.csv")?;
    metrics::write_cleanup_csv(&out.log, &mut cleanup)?;
    let mut slots = create("slots.csv")?;
    metrics::write_slots_csv(&out.log, &mut slots)?;
    let mut writers = vec![delays, cdf, cleanup, slots];
    if !out.log.transfer_trace.is_empty() {
        let mut transfers = create("transfers.csv")?;
        metrics::write_transfer_trace_csv(&out.log, &mut transfers)?;
        writers.push(transfers);
    }
    for w in writers {
        w.into_inner().map_err(|e| Error::config(format!("flush: {e}")))?;
    }
    let summary = metrics::summarize(&out.log, out.dt, out.config.clone())?;
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::config(format!("summary serialization: {e}")))?;
    fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(())
}

fn run_scenario_to(dir: &Path, scenario: Scenario) -> Result<RunOutput> {
    let mut engine = engine::Engine::new(scenario)?;
    if engine.scenario().dump_hormones {
        fs::create_dir_all(dir)?;
        let file = fs::File::create(dir.join("hormones.csv"))?;
        let mut buf = std::io::BufWriter::new(file);
        writeln!(buf, "step,node,keyword,level")?;
        engine.set_hormone_dump(Box::new(buf));
    }
    let out = engine.run()?;
    write_outputs(&out, dir)?;
    Ok(out)
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let scenario = args.scenario.load()?;
    let out = run_scenario_to(&args.out, scenario)?;
    let summary = metrics::summarize(&out.log, out.dt, out.config.clone())?;
    println!(
        "fulfilled {} / missed {} slots (missed rate {:.3}); median delay {:.2} s; outputs in {}",
        summary.fulfilled_slots,
        summary.missed_slots,
        summary.missed_rate,
        summary.median_delay_s,
        args.out.display()
    );
    Ok(())
}

fn parse_list<T: std::str::FromStr>(input: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    input
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| Error::config(format!("bad {what} `{s}`: {e}"))))
        .collect()
}

/// One sweep cell and its headline statistics for combined.csv.
struct CellRow {
    name: String,
    fields: BTreeMap<&'static str, String>,
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let base = args.scenario.load()?;
    let strategies: Vec<ReplicationStrategy> = if args.strategies == "all" {
        ReplicationStrategy::ALL.to_vec()
    } else {
        parse_list(&args.strategies, "strategy")?
    };
    let cleanups: Vec<Option<CleanupPolicy>> = if args.cleanups == "all" {
        let mut v: Vec<Option<CleanupPolicy>> = vec![None];
        v.extend(CleanupPolicy::ALL.map(Some));
        v
    } else {
        args.cleanups
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| if s == "none" { Ok(None) } else { s.parse::<CleanupPolicy>().map(Some) })
            .collect::<Result<_>>()?
    };
    let churns: Vec<usize> =
        if args.churn.is_empty() { vec![base.churn_remove] } else { parse_list(&args.churn, "churn")? };
    let seeds: Vec<u64> =
        if args.seeds.is_empty() { vec![base.seed] } else { parse_list(&args.seeds, "seed")? };
    if strategies.is_empty() || cleanups.is_empty() || churns.is_empty() || seeds.is_empty() {
        return Err(Error::config("sweep matrix is empty"));
    }

    let mut cells: Vec<(String, Scenario)> = Vec::new();
    for &strategy in &strategies {
        for &cleanup in &cleanups {
            for &churn in &churns {
                for &seed in &seeds {
                    let mut s = base.clone();
                    s.replication = strategy;
                    s.cleanup = cleanup;
                    s.churn_remove = churn;
                    s.seed = seed;
                    let name = format!(
                        "{}_{}_churn{}_seed{}",
                        strategy,
                        cleanup.map_or("none".to_string(), |p| p.to_string()),
                        churn,
                        seed
                    );
                    cells.push((name, s));
                }
            }
        }
    }
    fs::create_dir_all(&args.out)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let results: Vec<(String, Result<CellRow>)> = pool.install(|| {
        use rayon::prelude::*;
        cells
            .into_par_iter()
            .map(|(name, scenario)| {
                let dir = args.out.join(&name);
                let row = run_cell(&dir, &name, scenario);
                (name, row)
            })
            .collect()
    });

    let mut rows: Vec<CellRow> = Vec::new();
    let mut failures = 0usize;
    for (name, result) in results {
        match result {
            Ok(row) => rows.push(row),
            Err(e) => {
                failures += 1;
                log::error!("cell {name} failed: {e}");
                eprintln!("cell {name} failed: {e}");
            }
        }
    }
    rows.sort_by(|a, b| a.name.cmp(&b.name));
    let mut combined = fs::File::create(args.out.join("combined.csv"))?;
    writeln!(
        combined,
        "replication,cleanup,churn,seed,fulfilled_slots,missed_slots,missed_rate,mean_delay_s,median_delay_s,mean_request_failed,median_request_failed,mean_utilization,median_utilization,cleanup_failures,dropped_transfers,failed_transfers"
    )?;
    for row in &rows {
        let get = |k| row.fields.get(k).cloned().unwrap_or_default();
        writeln!(
            combined,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            get("replication"),
            get("cleanup"),
            get("churn"),
            get("seed"),
            get("fulfilled_slots"),
            get("missed_slots"),
            get("missed_rate"),
            get("mean_delay_s"),
            get("median_delay_s"),
            get("mean_request_failed"),
            get("median_request_failed"),
            get("mean_utilization"),
            get("median_utilization"),
            get("cleanup_failures"),
            get("dropped_transfers"),
            get("failed_transfers"),
        )?;
    }
    println!("sweep: {} cells ok, {} failed; combined.csv in {}", rows.len(), failures, args.out.display());
    if failures > 0 {
        return Err(Error::config(format!("{failures} sweep cells failed")));
    }
    Ok(())
}

fn run_cell(dir: &Path, name: &str, scenario: Scenario) -> Result<CellRow> {
    let churn = scenario.churn_remove;
    let seed = scenario.seed;
    let strategy = scenario.replication;
    let cleanup = scenario.cleanup;
    let out = run_scenario_to(dir, scenario)?;
    let summary = metrics::summarize(&out.log, out.dt, out.config.clone())?;
    let mut fields: BTreeMap<&'static str, String> = BTreeMap::new();
    fields.insert("replication", strategy.to_string());
    fields.insert("cleanup", cleanup.map_or("none".to_string(), |p| p.to_string()));
    fields.insert("churn", churn.to_string());
    fields.insert("seed", seed.to_string());
    fields.insert("fulfilled_slots", summary.fulfilled_slots.to_string());
    fields.insert("missed_slots", summary.missed_slots.to_string());
    fields.insert("missed_rate", summary.missed_rate.to_string());
    fields.insert("mean_delay_s", summary.mean_delay_s.to_string());
    fields.insert("median_delay_s", summary.median_delay_s.to_string());
    fields.insert("mean_request_failed", summary.mean_request_failed.to_string());
    fields.insert("median_request_failed", summary.request_failed.median.to_string());
    fields.insert("mean_utilization", summary.mean_utilization.to_string());
    fields.insert("median_utilization", summary.utilization.median.to_string());
    fields.insert("cleanup_failures", summary.cleanup_failures.to_string());
    fields.insert("dropped_transfers", summary.dropped_transfers.to_string());
    fields.insert("failed_transfers", summary.failed_transfers.to_string());
    Ok(CellRow { name: name.to_string(), fields })
}

fn cmd_optimize(args: &OptimizeArgs) -> Result<()> {
    let scenario = args.scenario.load()?;
    let config = ga::GaConfig {
        population_size: args.population,
        elite_count: args.elites,
        mutant_count: args.mutants,
        crossover_count: args.crossovers,
        fresh_count: args.fresh,
        generations: args.generations,
        mutation_sigma: args.sigma,
        seeds_per_eval: args.seeds_per_eval,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let result = pool.install(|| ga::optimize(&scenario, &config, scenario.seed))?;

    fs::create_dir_all(&args.out)?;
    let mut gens = fs::File::create(args.out.join("generations.csv"))?;
    writeln!(gens, "generation,best_fitness,mean_fitness,{}", ga::GENE_NAMES.join(","))?;
    for rec in &result.history {
        let genes: Vec<String> = rec.best_genome.genes.iter().map(|g| g.to_string()).collect();
        writeln!(gens, "{},{},{},{}", rec.generation, rec.best_fitness, rec.mean_fitness, genes.join(","))?;
    }
    let best = result.best.decode();
    let mut params = String::new();
    for (name, value) in [
        ("eta0", best.eta0.to_string()),
        ("eta", best.eta.to_string()),
        ("alpha", best.alpha.to_string()),
        ("epsilon", best.epsilon.to_string()),
        ("m", best.m.to_string()),
        ("c", best.c.to_string()),
        ("t", best.t.to_string()),
        ("maxhops", best.maxhops.to_string()),
    ] {
        params.push_str(&format!("{name} = {value}\n"));
    }
    fs::write(args.out.join("best.params"), params)?;
    println!(
        "optimize: best fitness {:.1} after {} generations; best.params in {}",
        result.best_fitness,
        result.history.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_topo(args: &TopoArgs) -> Result<()> {
    let overlay = match args.kind.as_str() {
        "random" => topology::generate_random_overlay(args.nodes, args.edge_prob, args.bandwidth, args.seed)?,
        "powerlaw" => {
            let edges = if args.edges == 0 { 2 * args.nodes } else { args.edges };
            let rewire = if args.rewire == 0 { 10 * edges } else { args.rewire };
            topology::generate_power_law_overlay(args.nodes, edges, rewire, args.bandwidth, args.seed)?
        }
        other => return Err(Error::config(format!("unknown topology kind `{other}`"))),
    };
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut file = fs::File::create(&args.out)?;
    overlay.write_edge_list(&mut file)?;
    if args.stats {
        let degrees: Vec<usize> = (0..overlay.node_count()).map(|n| overlay.degree(n)).collect();
        let mean = degrees.iter().sum::<usize>() as f64 / degrees.len() as f64;
        println!(
            "nodes {} edges {} diameter {} mean_degree {:.2} max_degree {}",
            overlay.node_count(),
            overlay.edge_count(),
            overlay.diameter()?,
            mean,
            degrees.iter().max().unwrap()
        );
    }
    Ok(())
}
