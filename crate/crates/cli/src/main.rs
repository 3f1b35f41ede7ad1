use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use clap::{Args, Parser, Subcommand};

use cdrl_core::agents::{evaluate, gradient_suite, greedy_states, AgentError};
use cdrl_core::config::{ConfigError, RunConfig};
use cdrl_core::envs::make_env;
use cdrl_core::explain::{export_episodes, ExplainError};
use cdrl_core::metrics::MetricReport;
use cdrl_core::run::{load_bundle, train_all, RunError};

/// Reward-decomposed Q-learning with learned state masks.
#[derive(Parser)]
#[command(name = "cdrl", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one run directory per seed under --out.
    Train(TrainArgs),
    /// Greedy mean return of a trained run.
    Eval(EvalArgs),
    /// Fidelity, sparsity, orthogonality and mask score as CSV.
    Metrics(MetricsArgs),
    /// Export per-state explanation records for greedy episodes.
    Explain(ExplainArgs),
    /// Finite-difference check of every network and loss.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Clone)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seed list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    total_steps: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Run each seed in its own process.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct BundleArgs {
    /// Run directory written by `train` (`<out>/seed<s>`).
    #[arg(long)]
    bundle: PathBuf,
    /// Must match the bundle's environment when given.
    #[arg(long)]
    env: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: BundleArgs,
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Args)]
struct MetricsArgs {
    #[command(flatten)]
    common: BundleArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    common: BundleArgs,
    #[arg(long, default_value_t = 1)]
    episodes: usize,
    #[arg(long)]
    only_critical: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error("{0}")]
    BadArgs(String),
    #[error("{0}")]
    Failed(String),
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        CliError::Run(RunError::Agent(e))
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Run(e) => e.exit_code() as u8,
            CliError::Explain(ExplainError::Agent(AgentError::Config(_))) => 2,
            CliError::Explain(_) => 1,
            CliError::BadArgs(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

fn overrides(args: &TrainArgs) -> Vec<(&'static str, String)> {
    let mut o = Vec::new();
    if let Some(m) = &args.method {
        o.push(("method", m.clone()));
    }
    if let Some(e) = &args.env {
        o.push(("env", e.clone()));
    }
    if let Some(s) = args.seed {
        o.push(("seed", s.to_string()));
    }
    if let Some(s) = &args.seeds {
        o.push(("seeds", s.clone()));
    }
    if let Some(n) = args.total_steps {
        o.push(("total_steps", n.to_string()));
    }
    o
}

fn load_config(args: &TrainArgs) -> Result<RunConfig, ConfigError> {
    let o = overrides(args);
    match &args.config {
        Some(path) => RunConfig::load(path, &o),
        None => RunConfig::parse("", &o),
    }
}

fn train_parallel(args: &TrainArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let exe = std::env::current_exe().map_err(|e| CliError::Failed(e.to_string()))?;
    let mut children = Vec::new();
    for &seed in &cfg.seeds {
        let mut cmd = Command::new(&exe);
        cmd.arg("train").arg("--out").arg(&args.out);
        cmd.arg("--seed").arg(seed.to_string());
        if let Some(c) = &args.config {
            cmd.arg("--config").arg(c);
        }
        if let Some(m) = &args.method {
            cmd.arg("--method").arg(m);
        }
        if let Some(e) = &args.env {
            cmd.arg("--env").arg(e);
        }
        if let Some(n) = args.total_steps {
            cmd.arg("--total-steps").arg(n.to_string());
        }
        let child = cmd.spawn().map_err(|e| CliError::Failed(e.to_string()))?;
        children.push((seed, child));
    }
    let mut failed = Vec::new();
    for (seed, mut child) in children {
        let status = child.wait().map_err(|e| CliError::Failed(e.to_string()))?;
        if !status.success() {
            failed.push(seed);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("seeds {failed:?} failed")))
    }
}

fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let cfg = load_config(args).map_err(RunError::from)?;
    if args.parallel && cfg.seeds.len() > 1 {
        return train_parallel(args, &cfg);
    }
    for dir in train_all(&cfg, &args.out)? {
        println!("{}", dir.display());
    }
    Ok(())
}

fn open_bundle(args: &BundleArgs) -> Result<cdrl_core::agents::TrainedBundle, CliError> {
    let bundle = load_bundle(&args.bundle)?;
    if let Some(env) = &args.env {
        if env != &bundle.config.env {
            return Err(CliError::BadArgs(format!(
                "--env {env} does not match the bundle's environment {}",
                bundle.config.env
            )));
        }
    }
    Ok(bundle)
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let bundle = open_bundle(&args.common)?;
    let episodes = args.episodes.unwrap_or(bundle.config.eval_episodes);
    let report = evaluate(&bundle, episodes, args.common.seed)?;
    println!("mean_return {} episodes {}", report.mean_return, report.returns.len());
    Ok(())
}

fn cmd_metrics(args: &MetricsArgs) -> Result<(), CliError> {
    let bundle = open_bundle(&args.common)?;
    let cfg = &bundle.config;
    let states = greedy_states(&bundle, cfg.metric_episodes, cfg.metric_states, args.common.seed)?;
    let env = make_env(&cfg.env, &cfg.env_settings()).map_err(AgentError::from)?;
    let ideals = env.ideal_masks().ok();
    let report = MetricReport::compute(&bundle, &states, ideals.as_deref());
    write_metrics(&args.out, &report, args.common.seed)?;
    for (name, value) in report.rows() {
        println!("{name} {value}");
    }
    Ok(())
}

fn write_metrics(path: &Path, report: &MetricReport, seed: u64) -> Result<(), CliError> {
    let fail = |e: csv::Error| CliError::Failed(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    w.write_record(["metric", "value", "n_states", "seed"]).map_err(fail)?;
    for (name, value) in report.rows() {
        w.write_record([name.to_string(), value, report.n_states.to_string(), seed.to_string()])
            .map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::Failed(e.to_string()))
}

fn cmd_explain(args: &ExplainArgs) -> Result<(), CliError> {
    let bundle = open_bundle(&args.common)?;
    let rows = export_episodes(&bundle, args.episodes, args.only_critical, args.common.seed, &args.out)?;
    let critical = rows.iter().filter(|r| r.is_critical).count();
    println!("records {} critical {}", rows.len(), critical);
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<(), CliError> {
    let cases = gradient_suite(args.draws, args.seed)?;
    let mut all = true;
    for c in &cases {
        let ok = c.passed();
        all &= ok;
        println!(
            "{} {} {} [{}] checked {} skipped {} max_rel_err {:.3e} {}",
            c.env,
            c.method,
            c.loss.name(),
            c.networks,
            c.report.checked,
            c.report.skipped,
            c.report.max_rel_err,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if all {
        Ok(())
    } else {
        Err(CliError::Failed("gradient check failed".into()))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if std::env::var("CDRL_DETERMINISTIC").as_deref() == Ok("0") {
        log::warn!("CDRL_DETERMINISTIC=0 has no effect: summation order is always fixed");
    }
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Train(a) => cmd_train(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Metrics(a) => cmd_metrics(a),
        Cmd::Explain(a) => cmd_explain(a),
        Cmd::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_flags_become_overrides() {
        let cli = Cli::try_parse_from([
            "cdrl", "train", "--method", "rd", "--seeds", "1,2", "--total-steps", "5", "--out", "x",
        ])
        .unwrap();
        let Cmd::Train(a) = cli.command else { panic!() };
        let o = overrides(&a);
        assert!(o.contains(&("seeds", "1,2".to_string())));
        let cfg = load_config(&a).unwrap();
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.total_steps, 5);
        assert_eq!(cdrl_core::run::seed_dir(&a.out, 2), PathBuf::from("x/seed2"));
    }

    #[test]
    fn seed_and_seeds_conflict() {
        let r = Cli::try_parse_from(["cdrl", "train", "--seed", "1", "--seeds", "1,2", "--out", "x"]);
        assert!(r.is_err());
    }
}
