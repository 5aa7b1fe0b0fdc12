//! Command-line driver: solve problem files with either solver, inspect
//! models, evaluate and simulate saved controllers.

use pomdp_cli::{document, format, simulate};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pomdp_core::{
    evaluate_at, heuristic_search_solve, initial_controller, policy_iterate, start_node, Belief,
    FiniteStateController, SolveStatus, SolverConfig, VectorSet,
};

use document::{build_document, graph_description, parse_document, serialize_document, DocumentBounds, DocumentMeta};
use format::{parse_pomdp_file, PomdpFile, ValueConvention};

const EXIT_OK: u8 = 0;
const EXIT_ITERATION_LIMIT: u8 = 2;
const EXIT_RESOURCE_LIMIT: u8 = 3;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;

#[derive(Parser)]
#[command(
    name = "pomdp",
    about = "Solve infinite-horizon discounted POMDPs with finite-state controllers",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    /// Policy iteration with full dynamic-programming updates.
    Pi,
    /// Best-first heuristic search from the start belief.
    Hs,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a .pomdp file and write the controller and a convergence trace.
    Solve {
        /// Problem file in .pomdp format.
        model: PathBuf,
        #[arg(long, value_enum, default_value = "pi")]
        method: Method,
        /// Target optimality gap.
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Start belief override: `uniform` or comma-separated probabilities.
        #[arg(long)]
        start: Option<String>,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
        /// Cap on controller machine states (policy iteration).
        #[arg(long, default_value_t = 20_000)]
        max_nodes: usize,
        /// Cap on search-tree belief nodes (heuristic search).
        #[arg(long, default_value_t = 200_000)]
        memory_limit: usize,
        /// Seed recorded in the controller document; solving is
        /// deterministic, so equal seeds give byte-identical artifacts.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the controller document here (and a .dot graph beside it).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the per-iteration trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Print the value of a saved controller at a belief.
    Evaluate {
        model: PathBuf,
        #[arg(long)]
        controller: PathBuf,
        /// `uniform` or comma-separated probabilities; defaults to the
        /// document's start belief.
        #[arg(long)]
        belief: Option<String>,
    },
    /// Monte-Carlo rollout of a saved controller.
    Simulate {
        model: PathBuf,
        #[arg(long)]
        controller: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        episodes: usize,
        /// Steps per episode; default truncates the discounted tail below
        /// 1e-3 of the value scale.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Start belief override.
        #[arg(long)]
        start: Option<String>,
    },
    /// Summarize a model file.
    Info { model: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not usage errors.
            let code = if err.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(EXIT_DATA)
        }
    }
}

type CliError = Box<dyn std::error::Error>;

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Solve {
            model,
            method,
            epsilon,
            start,
            max_iter,
            max_nodes,
            memory_limit,
            seed,
            out,
            trace,
        } => run_solve(
            &model,
            method,
            epsilon,
            start.as_deref(),
            max_iter,
            max_nodes,
            memory_limit,
            seed,
            out.as_deref(),
            trace.as_deref(),
        ),
        Command::Evaluate {
            model,
            controller,
            belief,
        } => run_evaluate(&model, &controller, belief.as_deref()),
        Command::Simulate {
            model,
            controller,
            episodes,
            horizon,
            seed,
            start,
        } => run_simulate(&model, &controller, episodes, horizon, seed, start.as_deref()),
        Command::Info { model } => run_info(&model),
    }
}

fn load_model(path: &Path) -> Result<PomdpFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let file = parse_pomdp_file(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(file)
}

fn parse_belief_flag(spec: &str, n_states: usize) -> Result<Belief, CliError> {
    if spec.trim() == "uniform" {
        return Ok(Belief::uniform(n_states));
    }
    let probs: Vec<f64> = spec
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("bad probability '{s}'")))
        .collect::<Result<_, _>>()?;
    if probs.len() != n_states {
        return Err(format!(
            "belief has {} entries but the model has {n_states} states",
            probs.len()
        )
        .into());
    }
    Ok(Belief::normalized(probs).map_err(|e| format!("infeasible belief: {e}"))?)
}

fn problem_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

struct TraceRow {
    iteration: usize,
    nodes: usize,
    vectors: usize,
    residual: Option<f64>,
    lower: Option<f64>,
    upper: Option<f64>,
    value: f64,
}

fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<(), CliError> {
    let mut text = String::from("iteration,nodes,vectors,residual,lower,upper,value\n");
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in rows {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{}",
            row.iteration,
            row.nodes,
            row.vectors,
            cell(row.residual),
            cell(row.lower),
            cell(row.upper),
            row.value
        );
    }
    std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    Ok(())
}

fn status_name(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::EpsilonOptimal => "epsilon-optimal",
        SolveStatus::IterationLimit => "iteration-limit",
        SolveStatus::NodeLimit => "node-limit",
        SolveStatus::MemoryLimit => "memory-limit",
    }
}

fn status_exit(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::EpsilonOptimal => EXIT_OK,
        SolveStatus::IterationLimit => EXIT_ITERATION_LIMIT,
        SolveStatus::NodeLimit | SolveStatus::MemoryLimit => EXIT_RESOURCE_LIMIT,
    }
}

#[allow(clippy::too_many_arguments)]
fn run_solve(
    model_path: &Path,
    method: Method,
    epsilon: f64,
    start: Option<&str>,
    max_iter: usize,
    max_nodes: usize,
    memory_limit: usize,
    seed: u64,
    out: Option<&Path>,
    trace: Option<&Path>,
) -> Result<u8, CliError> {
    let started = std::time::Instant::now();
    let file = load_model(model_path)?;
    let model = &file.model;
    let b0 = match start {
        Some(spec) => parse_belief_flag(spec, model.n_states())?,
        None => file.start.clone(),
    };
    let cfg = SolverConfig {
        epsilon,
        max_iterations: max_iter,
        max_nodes,
        probe_label: problem_name(model_path),
        ..SolverConfig::default()
    };
    cfg.validate().map_err(|e| format!("bad configuration: {e}"))?;
    if memory_limit == 0 {
        return Err("memory limit must be positive".into());
    }
    let fsc0 = initial_controller(model);

    struct Solved {
        controller: FiniteStateController,
        value: VectorSet,
        status: SolveStatus,
        iterations: usize,
        bounds: Option<DocumentBounds>,
        rows: Vec<TraceRow>,
    }

    let solved = match method {
        Method::Pi => {
            let result = policy_iterate(model, &fsc0, &cfg)?;
            let rows = result
                .stats
                .records
                .iter()
                .map(|r| TraceRow {
                    iteration: r.iteration,
                    nodes: r.controller_nodes,
                    vectors: r.update_vectors,
                    residual: Some(r.residual),
                    lower: None,
                    upper: None,
                    value: r.probe_value,
                })
                .collect();
            Solved {
                iterations: result.stats.records.len(),
                controller: result.controller,
                value: result.value,
                status: result.status,
                bounds: None,
                rows,
            }
        }
        Method::Hs => {
            let result = heuristic_search_solve(model, &b0, &fsc0, &cfg, memory_limit)?;
            let rows = result
                .trace
                .iter()
                .map(|r| TraceRow {
                    iteration: r.iteration,
                    nodes: r.controller_nodes,
                    vectors: r.controller_nodes,
                    residual: None,
                    lower: Some(r.root_lower),
                    upper: Some(r.root_upper),
                    value: r.root_lower,
                })
                .collect();
            Solved {
                iterations: result.trace.len(),
                bounds: Some(DocumentBounds {
                    lower: result.lower,
                    upper: result.upper,
                }),
                controller: result.controller,
                value: result.value,
                status: result.status,
                rows,
            }
        }
    };

    let start_index = start_node(&solved.controller, &solved.value, &b0);
    let value_at_start = evaluate_at(&solved.value, &b0).0;

    if let Some(trace_path) = trace {
        write_trace(trace_path, &solved.rows)?;
    }
    if let Some(out_path) = out {
        let meta = DocumentMeta {
            problem: problem_name(model_path),
            solver: match method {
                Method::Pi => "pi".to_string(),
                Method::Hs => "hs".to_string(),
            },
            epsilon,
            status: status_name(solved.status).to_string(),
            iterations: solved.iterations,
            seed,
            bounds: solved.bounds,
        };
        let document = build_document(
            &solved.controller,
            &solved.value,
            file.values,
            model.discount(),
            model.state_names(),
            model.action_names(),
            model.observation_names(),
            start_index,
            b0.probs(),
            meta,
        );
        std::fs::write(out_path, serialize_document(&document))
            .map_err(|e| format!("cannot write {}: {e}", out_path.display()))?;
        let dot_path = out_path.with_extension(
            out_path
                .extension()
                .map(|e| format!("{}.dot", e.to_string_lossy()))
                .unwrap_or_else(|| "dot".to_string()),
        );
        std::fs::write(&dot_path, graph_description(&document))
            .map_err(|e| format!("cannot write {}: {e}", dot_path.display()))?;
    }

    eprintln!(
        "{}: {} after {} iterations, {} machine states, value {} at the start belief ({:.2}s)",
        problem_name(model_path),
        status_name(solved.status),
        solved.iterations,
        solved.controller.len(),
        value_at_start,
        started.elapsed().as_secs_f64(),
    );
    Ok(status_exit(solved.status))
}

fn run_evaluate(
    model_path: &Path,
    controller_path: &Path,
    belief: Option<&str>,
) -> Result<u8, CliError> {
    let file = load_model(model_path)?;
    let text = std::fs::read_to_string(controller_path)
        .map_err(|e| format!("cannot read {}: {e}", controller_path.display()))?;
    let (document, fsc, value) = parse_document(&text)?;
    if document.states != file.model.state_names()
        || document.actions != file.model.action_names()
        || document.observations != file.model.observation_names()
    {
        return Err("controller document does not match the model's entities".into());
    }
    let b = match belief {
        Some(spec) => parse_belief_flag(spec, file.model.n_states())?,
        None => Belief::normalized(document.start_belief.clone())
            .map_err(|e| format!("document start belief: {e}"))?,
    };
    let (v, node) = evaluate_at(&value, &b);
    let _ = &fsc;
    println!("start node: {node}");
    match file.values {
        ValueConvention::Reward => println!("value: {v}"),
        ValueConvention::Cost => println!("value: {v}\ncost: {}", -v),
    }
    Ok(EXIT_OK)
}

fn run_simulate(
    model_path: &Path,
    controller_path: &Path,
    episodes: usize,
    horizon: Option<usize>,
    seed: u64,
    start: Option<&str>,
) -> Result<u8, CliError> {
    let file = load_model(model_path)?;
    let text = std::fs::read_to_string(controller_path)
        .map_err(|e| format!("cannot read {}: {e}", controller_path.display()))?;
    let (document, fsc, value) = parse_document(&text)?;
    if document.states != file.model.state_names() {
        return Err("controller document does not match the model's entities".into());
    }
    let b0 = match start {
        Some(spec) => parse_belief_flag(spec, file.model.n_states())?,
        None => Belief::normalized(document.start_belief.clone())
            .map_err(|e| format!("document start belief: {e}"))?,
    };
    let horizon = horizon.unwrap_or_else(|| simulate::default_horizon(&file.model));
    let start_index = start_node(&fsc, &value, &b0);
    let result = simulate::simulate(&file.model, &fsc, start_index, &b0, episodes, horizon, seed);
    println!(
        "episodes: {}\nhorizon: {}\nmean return: {}\nstandard error: {}",
        result.episodes, result.horizon, result.mean, result.standard_error
    );
    if file.values == ValueConvention::Cost {
        println!("mean cost: {}", -result.mean);
    }
    Ok(EXIT_OK)
}

fn run_info(model_path: &Path) -> Result<u8, CliError> {
    let file = load_model(model_path)?;
    let m = &file.model;
    let rewards: Vec<f64> = (0..m.n_states())
        .flat_map(|s| (0..m.n_actions()).map(move |a| (s, a)))
        .map(|(s, a)| m.reward(s, a))
        .collect();
    let r_min = rewards.iter().cloned().fold(f64::INFINITY, f64::min);
    let r_max = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!("problem: {}", problem_name(model_path));
    println!("states: {} ({})", m.n_states(), m.state_names().join(" "));
    println!("actions: {} ({})", m.n_actions(), m.action_names().join(" "));
    println!(
        "observations: {} ({})",
        m.n_observations(),
        m.observation_names().join(" ")
    );
    println!("discount: {}", m.discount());
    println!("values: {}", file.values.as_str());
    println!(
        "start: {}",
        file.start
            .probs()
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    println!("reward range: [{r_min}, {r_max}]");
    Ok(EXIT_OK)
}
