use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::builder::PossibleValuesParser;
use clap::{Args, Parser, Subcommand};

use impactlab::config::{Config, Preset};
use impactlab::gridworlds::{EnvKind, GridLayout, GridWorld};
use impactlab::harness::{emit_report, load_report, run_plan, text_table, train, ExperimentReport, Variant};
use impactlab::penalty::{BaselineKind, Measure, Summary};
use impactlab::{validate, Error};

const THREADS_VAR: &str = "IMPACTLAB_THREADS";
const LAYOUT_FILE: &str = "layout.txt";

fn names<T: std::fmt::Display>(all: &[T]) -> Vec<String> {
    all.iter().map(ToString::to_string).collect()
}

fn env_names() -> PossibleValuesParser {
    PossibleValuesParser::new(names(&EnvKind::ALL))
}

fn baseline_names() -> PossibleValuesParser {
    PossibleValuesParser::new(names(BaselineKind::ALL))
}

fn measure_names() -> PossibleValuesParser {
    PossibleValuesParser::new(names(Measure::ALL))
}

fn summary_names() -> PossibleValuesParser {
    PossibleValuesParser::new(names(Summary::ALL))
}

fn variant_names() -> PossibleValuesParser {
    PossibleValuesParser::new(Variant::all().iter().map(Variant::label).collect::<Vec<_>>())
}

/// Impact-penalty experiments on tabular gridworlds.
#[derive(Debug, Parser)]
#[command(name = "impactlab", version, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one agent and write its learning curve.
    Train(TrainArgs),
    /// Run a grid of cells, seeds and betas and write CSV, JSON and SVG.
    Sweep(SweepArgs),
    /// Re-run a recorded training and check the trace is byte-identical.
    Replay(ReplayArgs),
    /// Regenerate CSV and SVG output from a stored report.json.
    Report(ReportArgs),
    /// Run the built-in invariant checks.
    Validate,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// TOML file with [plan], [agent], [penalty] and [env] sections.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    #[arg(long, default_value = "desk", value_parser = PossibleValuesParser::new(["desk", "full"]))]
    preset: String,

    /// Override any config key, e.g. `--set agent.alpha=0.2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[arg(long)]
    alpha: Option<f64>,

    #[arg(long)]
    anneal_episodes: Option<usize>,

    #[arg(long)]
    hold_episodes: Option<usize>,

    #[arg(long)]
    horizon: Option<usize>,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_parser = env_names())]
    env: String,

    #[arg(long, value_parser = baseline_names())]
    baseline: Option<String>,

    #[arg(long, value_parser = measure_names())]
    measure: Option<String>,

    /// Reachability and auxiliary values use gamma_r = 0.99.
    #[arg(long, conflicts_with_all = ["undiscounted", "gamma_r"])]
    discounted: bool,

    /// Reachability uses gamma_r = 1.
    #[arg(long, conflicts_with = "gamma_r")]
    undiscounted: bool,

    #[arg(long)]
    gamma_r: Option<f64>,

    #[arg(long, value_parser = summary_names())]
    summary: Option<String>,

    #[arg(long)]
    beta: Option<f64>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// ASCII layout file to use instead of the built-in grid.
    #[arg(long, value_name = "PATH")]
    layout: Option<PathBuf>,

    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, alias = "env", value_delimiter = ',', value_parser = env_names())]
    envs: Vec<String>,

    #[arg(long, value_delimiter = ',', value_parser = baseline_names())]
    baselines: Vec<String>,

    #[arg(long, value_delimiter = ',', value_parser = variant_names())]
    variants: Vec<String>,

    #[arg(long, value_delimiter = ',')]
    betas: Vec<f64>,

    #[arg(long)]
    seeds: Option<usize>,

    #[arg(long)]
    first_seed: Option<u64>,

    #[arg(long)]
    include_none: Option<bool>,

    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Directory written by `train`.
    #[arg(value_name = "DIR")]
    run: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// A report.json written by `sweep`.
    #[arg(value_name = "REPORT")]
    input: PathBuf,

    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

/// Failure modes, mapped onto exit codes.
enum Failure {
    Usage(Error),
    Runtime(Error),
    Assert(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. }
            | Error::InvalidCombo(_)
            | Error::UnknownEnv(_)
            | Error::Layout(_)
            | Error::DegenerateAnchors(_) => Failure::Usage(e),
            other => Failure::Runtime(other),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Report(a) => cmd_report(a),
        Command::Validate => cmd_validate(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Assert(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
    }
}

/// Preset, then file, then `--set`, then typed flags.
fn build_config(args: &ConfigArgs, flags: &[(&str, String)]) -> Result<Config, Failure> {
    let preset: Preset = args.preset.parse()?;
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Usage(Error::io(path, e)))?;
            Config::from_toml(preset, &text)?
        }
        None => Config::preset(preset),
    };
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    let common = [
        ("agent.alpha", args.alpha.map(|v| v.to_string())),
        ("agent.anneal_episodes", args.anneal_episodes.map(|v| v.to_string())),
        ("agent.hold_episodes", args.hold_episodes.map(|v| v.to_string())),
        ("env.horizon", args.horizon.map(|v| v.to_string())),
    ];
    for (key, value) in common {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    for (key, value) in flags {
        cfg.set(key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, body: &str) -> Result<(), Failure> {
    fs::write(path, body).map_err(|e| Failure::Runtime(Error::io(path, e)))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(Error::io(dir, e)))
}

fn threads() -> Result<Option<usize>, Failure> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| Failure::Usage(Error::config(THREADS_VAR, format!("expected a positive integer, got `{v}`")))),
        Err(_) => Ok(None),
    }
}

fn cmd_train(a: TrainArgs) -> Result<(), Failure> {
    let mut flags = vec![("plan.envs", a.env.clone()), ("plan.first_seed", a.seed.to_string())];
    let optional = [
        ("penalty.baseline", a.baseline.clone()),
        ("penalty.measure", a.measure.clone()),
        ("penalty.summary", a.summary.clone()),
        ("penalty.beta", a.beta.map(|b| b.to_string())),
        ("penalty.gamma_r", a.gamma_r.map(|g| g.to_string())),
    ];
    flags.extend(optional.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))));
    if a.discounted {
        flags.push(("discounted", "true".into()));
    }
    if a.undiscounted {
        flags.push(("discounted", "false".into()));
    }
    let cfg = build_config(&a.config, &flags)?;
    let out = a.config.out.clone().unwrap_or_else(|| PathBuf::from("out/train"));
    let layout = match &a.layout {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| Failure::Usage(Error::io(p, e)))?),
        None => None,
    };
    let trace = run_recorded(&cfg, layout.as_deref())?;
    create_dir(&out)?;
    write(&out.join("config.toml"), &cfg.to_toml())?;
    if let Some(text) = &layout {
        write(&out.join(LAYOUT_FILE), text)?;
    }
    write(&out.join("trace.csv"), &trace.0)?;
    println!(
        "{} {} beta={} seed={}: final scaled performance {:.3}",
        cfg.plan.envs[0],
        cfg.penalty.variant_label(),
        cfg.penalty.beta,
        cfg.plan.first_seed,
        trace.1
    );
    println!("wrote {}", out.display());
    Ok(())
}

/// Trains the single run described by `cfg`; returns the trace and the
/// final performance.
fn run_recorded(cfg: &Config, layout: Option<&str>) -> Result<(String, f64), Failure> {
    let [env] = cfg.plan.envs[..] else {
        return Err(Failure::Usage(Error::config("plan.envs", "a recorded run names exactly one environment")));
    };
    let world = match layout {
        Some(text) => GridWorld::from_layout(env, GridLayout::parse(text)?, cfg.env)?,
        None => GridWorld::builtin(env, cfg.env)?,
    };
    let (run, _) = train(&world, &cfg.penalty, &cfg.agent, cfg.penalty.beta, cfg.plan.first_seed)?;
    Ok((run.trace(), run.final_perf))
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Failure> {
    let mut flags: Vec<(&str, String)> = Vec::new();
    let lists = [
        ("plan.envs", a.envs.join(",")),
        ("plan.baselines", a.baselines.join(",")),
        ("plan.variants", a.variants.join(",")),
        ("plan.betas", a.betas.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")),
    ];
    flags.extend(lists.into_iter().filter(|(_, v)| !v.is_empty()));
    let optional = [
        ("plan.seeds", a.seeds.map(|v| v.to_string())),
        ("plan.first_seed", a.first_seed.map(|v| v.to_string())),
        ("plan.include_none", a.include_none.map(|v| v.to_string())),
    ];
    flags.extend(optional.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))));
    let cfg = build_config(&a.config, &flags)?;
    let out = a.config.out.clone().unwrap_or_else(|| PathBuf::from("out/sweep"));
    let plan = cfg.plan();
    let report = run_plan(&plan, threads()?)?;
    let written = emit_report(&report, &out)?;
    write(&out.join("config.toml"), &cfg.to_toml())?;
    print_tables(&report);
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn print_tables(report: &ExperimentReport) {
    let mut envs: Vec<EnvKind> = report.cells.iter().map(|c| c.key.env).collect();
    envs.dedup();
    for env in envs {
        println!("{}", text_table(report, env));
    }
    for s in &report.skipped {
        println!("skipped {}: {}", s.key.label(), s.reason);
    }
}

fn cmd_replay(a: ReplayArgs) -> Result<(), Failure> {
    let cfg_path = a.run.join("config.toml");
    let text = fs::read_to_string(&cfg_path).map_err(|e| Failure::Usage(Error::io(&cfg_path, e)))?;
    let cfg = Config::from_toml(Preset::Desk, &text)?;
    let trace_path = a.run.join("trace.csv");
    let recorded = fs::read_to_string(&trace_path).map_err(|e| Failure::Usage(Error::io(&trace_path, e)))?;
    let layout_path = a.run.join(LAYOUT_FILE);
    let layout = if layout_path.exists() {
        Some(fs::read_to_string(&layout_path).map_err(|e| Failure::Usage(Error::io(&layout_path, e)))?)
    } else {
        None
    };
    let (fresh, _) = run_recorded(&cfg, layout.as_deref())?;
    if fresh != recorded {
        let line = fresh
            .lines()
            .zip(recorded.lines())
            .position(|(x, y)| x != y)
            .map_or_else(|| "length".to_string(), |i| format!("line {}", i + 1));
        return Err(Failure::Assert(format!("trace differs from {} at {line}", trace_path.display())));
    }
    println!("replay identical ({} bytes)", fresh.len());
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<(), Failure> {
    let report = load_report(&a.input).map_err(|e| match e {
        Error::Io { .. } | Error::Json(_) => Failure::Usage(e),
        other => other.into(),
    })?;
    let out = a
        .out
        .unwrap_or_else(|| a.input.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")));
    let written = emit_report(&report, &out)?;
    print_tables(&report);
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_validate() -> Result<(), Failure> {
    let checks = validate::run_all();
    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        println!("{c}");
    }
    if failed > 0 {
        return Err(Failure::Assert(format!("{failed} of {} checks failed", checks.len())));
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}
