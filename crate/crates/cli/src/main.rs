//! `ezlearn`: run learning experiments from a JSON scenario.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 configuration error,
//! 3 infeasible plan, 4 learning did not converge within its budget.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ezlearn::domain::{derive_seed, CandidateSet, Dataset, InterceptionModel, LearningCase};
use ezlearn::experiment::{run_mc, run_single, single_truth, write_mc, write_run, ConfigError, McOutput, Metadata, RunOutput, ScenarioConfig};
use ezlearn::inference::{is_converged, lhs_sample, update_round};
use ezlearn::learning::SelectionStrategy;
use ezlearn::losses::LossProblem;
use ezlearn::planner::{path_csv, plan_safe_path, PlannerError};
use ezlearn::selection::{select_bed, select_boundary};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "ezlearn", version, about = "Learn a pursuer's engagement zone from sacrificial-agent outcomes")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON; missing fields take the defaults of its case and model.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving the outputs.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Learning case (1A … 3B), overriding the config.
    #[arg(long, global = true)]
    case: Option<String>,
    /// Interception model (boundary or interior), overriding the config.
    #[arg(long, global = true)]
    model: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed learning loop on one truth and write its history and metrics.
    Simulate,
    /// Estimate a candidate ensemble from a recorded dataset.
    Infer {
        /// Dataset JSON as written by `simulate`.
        #[arg(long)]
        data: PathBuf,
    },
    /// Choose the next sacrificial leg for an ensemble.
    Select {
        #[arg(long)]
        candidates: PathBuf,
        /// Past records; required by BED selection, optional otherwise.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Plan a time-optimal path avoiding every candidate region.
    Plan {
        /// Ensemble to avoid; the configured truth alone when absent.
        #[arg(long)]
        candidates: Option<PathBuf>,
    },
    /// Monte Carlo suite over truths drawn from the bounds.
    Mc {
        /// Number of runs, overriding the config.
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Summarise a directory written by `simulate` or `mc`.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

enum Failure {
    Runtime(String),
    Config(String),
    Infeasible(String),
    NotConverged(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Runtime(_) => 1,
            Self::Config(_) => 2,
            Self::Infeasible(_) => 3,
            Self::NotConverged(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Runtime(m) | Self::Config(m) | Self::Infeasible(m) | Self::NotConverged(m) => m,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn write(path: &Path, body: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(runtime)?;
    }
    fs::write(path, body).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// The config file with the command-line overrides applied before defaults are filled in.
fn load_config(c: &Common) -> Result<ScenarioConfig, Failure> {
    let mut doc: Value = match &c.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?)
            .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        None => Value::Object(Default::default()),
    };
    let Some(obj) = doc.as_object_mut() else {
        return Err(Failure::Config("configuration must be a JSON object".into()));
    };
    if let Some(case) = &c.case {
        let case: LearningCase = case.parse().map_err(|e: ezlearn::domain::DomainError| Failure::Config(e.to_string()))?;
        obj.insert("case".into(), serde_json::to_value(case).map_err(runtime)?);
    }
    if let Some(model) = &c.model {
        let model: InterceptionModel = model.parse().map_err(|e: ezlearn::domain::DomainError| Failure::Config(e.to_string()))?;
        obj.insert("model".into(), serde_json::to_value(model).map_err(runtime)?);
    }
    if let Some(seed) = c.seed {
        obj.insert("seed".into(), seed.into());
    }
    Ok(ScenarioConfig::from_json(&doc.to_string())?)
}

fn empty_dataset(cfg: &ScenarioConfig) -> Dataset {
    let (sigma_pos, sigma_t) = cfg.noise.effective();
    Dataset::new(cfg.case, cfg.model, sigma_pos, sigma_t)
}

fn check_dataset(cfg: &ScenarioConfig, data: &Dataset) -> Result<(), Failure> {
    if data.case != cfg.case || data.model != cfg.model {
        return Err(Failure::Config(format!("dataset is {} {} but the scenario is {} {}", data.case.label(), data.model, cfg.case.label(), cfg.model)));
    }
    Ok(())
}

fn simulate(cfg: &ScenarioConfig, out: &Path) -> Result<(), Failure> {
    let truth = single_truth(cfg);
    let run = run_single(cfg, &truth, cfg.seed).map_err(runtime)?;
    write_run(&run, out).map_err(runtime)?;
    let mut data = empty_dataset(cfg);
    run.history.steps.iter().for_each(|s| data.push(s.record.clone()));
    write(&out.join("dataset.json"), &serde_json::to_string_pretty(&data).map_err(runtime)?)?;
    write(&out.join("config.json"), &cfg.to_json())?;
    let last = run.metrics.last().expect("prior step is always present");
    println!(
        "{} agents, union ratio {:.3}, coverage {:.3}, max relative error {:.4}",
        run.history.steps.len(),
        last.union_ratio,
        last.coverage,
        last.rel_error.iter().fold(0.0f64, |m, v| m.max(*v))
    );
    if run.history.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged(format!("ensemble spread still above threshold after {} agents", cfg.max_agents)))
    }
}

fn infer(cfg: &ScenarioConfig, data_path: &Path, out: &Path) -> Result<(), Failure> {
    let data: Dataset = read_json(data_path)?;
    check_dataset(cfg, &data)?;
    let frozen = single_truth(cfg);
    let starts = lhs_sample(&cfg.bounds, cfg.case, &frozen, cfg.optimizer.n_p, derive_seed(cfg.seed, 0));
    let problem = LossProblem::new(&data, &cfg.loop_settings().loss_config()).map_err(runtime)?;
    let round = update_round(&starts, &problem, &cfg.optimizer, &cfg.bounds, &frozen, derive_seed(cfg.seed, 2)).map_err(runtime)?;
    write(&out.join("candidates.json"), &serde_json::to_string_pretty(&round.candidates).map_err(runtime)?)?;
    println!("{} of {} starts retained{}", round.n_retained, starts.len(), if round.fallback { " after a fresh restart" } else { "" });
    println!("mean {:?}", round.candidates.mean.to_array());
    if round.infeasible {
        return Err(runtime("no candidate reached the loss threshold"));
    }
    if is_converged(&round.candidates, cfg.case, &cfg.optimizer.sigma_thresh) {
        Ok(())
    } else {
        Err(Failure::NotConverged("ensemble spread above threshold".into()))
    }
}

fn select(cfg: &ScenarioConfig, cands_path: &Path, data_path: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let cands: CandidateSet = read_json(cands_path)?;
    let data = match data_path {
        Some(p) => read_json(p)?,
        None => empty_dataset(cfg),
    };
    check_dataset(cfg, &data)?;
    let ctx = cfg.loop_settings().selection_context();
    let selected = match cfg.strategy {
        SelectionStrategy::Boundary => {
            let starts: Vec<_> = data.records.iter().map(|r| r.start).collect();
            select_boundary(&cands, &data.hit_points(), &starts, &cfg.grid, &ctx)
        }
        SelectionStrategy::Bed => select_bed(&cands, &data, &cfg.grid, &ctx, &cfg.case.free_mask()),
    }
    .map_err(runtime)?;
    write(&out.join("selection.json"), &serde_json::to_string_pretty(&selected).map_err(runtime)?)?;
    println!(
        "{} leg: alpha {:.4}, heading {:.4}, score {:.4}{}",
        cfg.strategy,
        selected.spec.alpha,
        selected.spec.heading,
        selected.score,
        if selected.fallback { " (fallback)" } else { "" }
    );
    Ok(())
}

fn plan(cfg: &ScenarioConfig, cands_path: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let cands = match cands_path {
        Some(p) => read_json(p)?,
        None => CandidateSet::from_params(&[single_truth(cfg)]).map_err(runtime)?,
    };
    let (lim, opts) = (cfg.planner.limits(cfg.evader_speed), cfg.planner.options());
    match plan_safe_path(cfg.planner.x0, cfg.planner.xf, &cands, &lim, &opts) {
        Ok(plan) => {
            write(&out.join("plan.json"), &serde_json::to_string_pretty(&plan).map_err(runtime)?)?;
            write(&out.join("plan.csv"), &(Metadata::of(cfg).csv_header() + &path_csv(&plan.path, 400).map_err(runtime)?))?;
            println!("tf {:.6}, min zone margin {:.3e}", plan.tf(), plan.validation.min_ez_margin);
            Ok(())
        }
        Err(e @ PlannerError::Infeasible(_)) => Err(Failure::Infeasible(e.to_string())),
        Err(e) => Err(runtime(e)),
    }
}

fn mc(cfg: &ScenarioConfig, out: &Path) -> Result<(), Failure> {
    let summary = run_mc(cfg).map_err(runtime)?;
    write_mc(&summary, out).map_err(runtime)?;
    write(&out.join("config.json"), &cfg.to_json())?;
    print_mc(&summary);
    Ok(())
}

fn print_mc(s: &McOutput) {
    let max_step = s.aggregate.iter().map(|r| r.step).max().unwrap_or(0);
    let metrics = ["union_ratio", "coverage", "normalized_path_time"];
    println!("{} {} over {} runs; medians by step", s.case.label(), s.model, s.runs.len());
    println!("step {}", metrics.join(" "));
    for k in 0..=max_step {
        let cells: Vec<String> = metrics.iter().map(|m| s.row(k, m).map_or("-".into(), |r| format!("{:.4}", r.median))).collect();
        println!("{k:>4} {}", cells.join(" "));
    }
    for (tau, frac) in &s.coverage_table {
        println!("coverage ≥ {tau}: {:.1}% of deployment steps", 100.0 * frac);
    }
}

/// Print the summary in `dir`; with a config, also verify the recorded hash and seed.
fn report(cfg: Option<&ScenarioConfig>, dir: &Path) -> Result<(), Failure> {
    let mc_path = dir.join("mc_summary.json");
    let (metadata, print): (Metadata, Box<dyn Fn()>) = if mc_path.exists() {
        let s: McOutput = read_json(&mc_path)?;
        (s.metadata.clone(), Box::new(move || print_mc(&s)))
    } else {
        let run: RunOutput = read_json(&dir.join("history.json"))?;
        (
            run.metadata.clone(),
            Box::new(move || {
                println!("step n_candidates union_ratio coverage path_time");
                for m in &run.metrics {
                    println!("{:>4} {:>12} {:.4} {:.4} {}", m.step, m.n_candidates, m.union_ratio, m.coverage, m.path_time.map_or("-".into(), |t| format!("{t:.4}")));
                }
            }),
        )
    };
    println!("schema {} config {} seed {}", metadata.schema_version, metadata.config_hash, metadata.master_seed);
    print();
    if let Some(cfg) = cfg {
        let expect = Metadata::of(cfg);
        if expect.config_hash != metadata.config_hash || expect.master_seed != metadata.master_seed {
            return Err(Failure::Config(format!("outputs were produced by config {} seed {}, not {} seed {}", metadata.config_hash, metadata.master_seed, expect.config_hash, expect.master_seed)));
        }
        println!("metadata matches the given configuration");
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let c = &cli.common;
    let out = c.out_dir.as_path();
    if let Command::Report { dir } = &cli.command {
        let cfg = if c.config.is_some() || c.seed.is_some() || c.case.is_some() || c.model.is_some() { Some(load_config(c)?) } else { None };
        return report(cfg.as_ref(), dir);
    }
    let mut cfg = load_config(c)?;
    match &cli.command {
        Command::Simulate => simulate(&cfg, out),
        Command::Infer { data } => infer(&cfg, data, out),
        Command::Select { candidates, data } => select(&cfg, candidates, data.as_deref(), out),
        Command::Plan { candidates } => plan(&cfg, candidates.as_deref(), out),
        Command::Mc { runs } => {
            if let Some(n) = runs {
                cfg.n_runs = *n;
                cfg.validate()?;
            }
            mc(&cfg, out)
        }
        Command::Report { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
