use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use opdyn::analysis::{
    closeness_components, cluster_partition, epsilon_activity, polarization_check,
    potential_min_corr, potential_triangle, separability, strict_convexity, DEFAULT_TOL_ORTH,
    DEFAULT_TOL_POLAR,
};
use opdyn::dynamics::{run, SimulationParams, StopRule};
use opdyn::experiment::{
    concentration_experiment, counterexample_experiment, preset_concentration,
    preset_counterexample, preset_figure1, preset_figure2, run_experiment, ConcentrationSpec,
    ExperimentSpec, InitSpec, OutputSpec,
};
use opdyn::io::{read_opinions, to_json_string, write_json, write_trace_csv};
use opdyn::rng::{stream_rng, INIT_STREAM};
use opdyn::{Configuration, ConfigurationSnapshot, UpdateFunctionSpec};

#[derive(Parser)]
#[command(name = "opdyn", version, about = "Opinion dynamics on the unit sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single simulation.
    Simulate(SimulateArgs),
    /// Run a batch experiment from a preset or a JSON spec.
    Experiment(ExperimentArgs),
    /// Print the predicates of a configuration as JSON.
    Analyze(AnalyzeArgs),
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// Update function, e.g. `linear:eta=0.1` or `asym-linear:eta_plus=0.9,eta_minus=0.1`.
    #[arg(long)]
    update: UpdateFunctionSpec,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// Maximum number of interactions.
    #[arg(long)]
    steps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `uniform`, `file:<path>` or `almost-orth:<low>,<high>[,<bundles>]`.
    #[arg(long, default_value = "uniform")]
    init: String,
    /// `polarized:<tol>`, `inactive:<eps>` or `steps`.
    #[arg(long, default_value = "polarized:1e-6")]
    stop: StopRule,
    /// Metric record cadence in steps.
    #[arg(long, default_value_t = 100)]
    record_every: u64,
    /// Trace CSV output.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Summary JSON output; printed to stdout when absent.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Figure1,
    Figure2,
    Concentration,
    Counterexample,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<Preset>,
    /// Experiment spec as JSON (unknown fields are rejected).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replica count (sample count for the counterexample preset).
    #[arg(long)]
    replicas: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write one trace CSV per replica.
    #[arg(long)]
    traces: bool,
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    /// Opinion file (one opinion per line) or JSON with an `opinions` array.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    epsilon: f64,
}

fn parse_init(text: &str) -> Result<InitSpec> {
    if text == "uniform" {
        return Ok(InitSpec::UniformSphere);
    }
    if let Some(path) = text.strip_prefix("file:") {
        return Ok(InitSpec::FromFile { path: path.into() });
    }
    if let Some(args) = text.strip_prefix("almost-orth:") {
        let parts: Vec<&str> = args.split(',').collect();
        let num = |s: &str| s.trim().parse::<f64>().with_context(|| format!("bad number `{s}`"));
        let (low, high, bundles) = match parts.as_slice() {
            [l, h] => (num(l)?, num(h)?, 3),
            [l, h, b] => (num(l)?, num(h)?, b.trim().parse().context("bad bundle count")?),
            _ => bail!("expected almost-orth:<low>,<high>[,<bundles>]"),
        };
        return Ok(InitSpec::AlmostOrthogonal { low, high, bundles });
    }
    bail!("unknown init `{text}`; use uniform, file:<path> or almost-orth:<low>,<high>")
}

fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    let init = parse_init(&args.init)?;
    let params = SimulationParams::new(args.n, args.d, args.update, args.seed, args.steps)
        .with_stop_rule(args.stop)
        .with_record_every(args.record_every);
    params.validate()?;
    let initial = init.sample(args.n, args.d, &mut stream_rng(args.seed, INIT_STREAM))?;
    let (trace, summary) = run(&params, initial)?;
    if let Some(path) = &args.trace {
        let mut w = BufWriter::new(fs::File::create(path).with_context(|| path.display().to_string())?);
        write_trace_csv(&mut w, &trace.records)?;
        w.flush()?;
    }
    match &args.summary {
        Some(path) => write_json(path, &summary)?,
        None => print!("{}", to_json_string(&summary)?),
    }
    Ok(ExitCode::SUCCESS)
}

fn with_outputs(mut spec: ExperimentSpec, args: &ExperimentArgs) -> ExperimentSpec {
    if let Some(r) = args.replicas {
        spec.replicas = r;
    }
    if let Some(s) = args.seed {
        spec.master_seed = s;
    }
    spec.outputs = OutputSpec {
        dir: Some(args.out.clone()),
        traces: args.traces || spec.outputs.traces,
        snapshots: spec.outputs.snapshots,
    };
    spec
}

fn experiment(args: ExperimentArgs) -> Result<ExitCode> {
    fs::create_dir_all(&args.out).with_context(|| args.out.display().to_string())?;
    let spec = match (&args.config, args.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
            serde_json::from_str::<ExperimentSpec>(&text)
                .with_context(|| format!("invalid experiment spec {}", path.display()))?
        }
        (None, Some(Preset::Figure1)) => preset_figure1(),
        (None, Some(Preset::Figure2)) => preset_figure2(),
        (None, Some(Preset::Concentration)) => {
            let preset = preset_concentration();
            let spec = ConcentrationSpec {
                experiment: with_outputs(preset.experiment, &args),
                c_values: preset.c_values,
            };
            let report = concentration_experiment(&spec)?;
            println!("{}", json!({ "n": report.n, "polarized": report.polarized,
                "excluded": report.excluded, "tails": report.tails, "passed": report.passed }));
            return Ok(exit_for(report.passed));
        }
        (None, Some(Preset::Counterexample)) => {
            let mut reports = Vec::new();
            for mut exp in preset_counterexample() {
                if let Some(r) = args.replicas {
                    exp.samples = r as u64;
                }
                if let Some(s) = args.seed {
                    exp.seed = s;
                }
                reports.push(counterexample_experiment(&exp)?);
            }
            write_json(&args.out.join("counterexample.json"), &reports)?;
            print!("{}", to_json_string(&reports)?);
            return Ok(exit_for(reports.iter().all(|r| r.passed())));
        }
        (None, None) => bail!("either --preset or --config is required"),
    };
    let report = run_experiment(&with_outputs(spec, &args))?;
    print!("{}", to_json_string(&report.aggregates)?);
    Ok(ExitCode::SUCCESS)
}

fn exit_for(passed: bool) -> ExitCode {
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn load_configuration(path: &Path) -> Result<Configuration> {
    let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
    if text.trim_start().starts_with('{') {
        let snap: ConfigurationSnapshot = serde_json::from_str(&text)?;
        return Ok(Configuration::from_rows(&snap.opinions)?);
    }
    Ok(Configuration::new(read_opinions(path)?)?)
}

fn analyze(args: AnalyzeArgs) -> Result<ExitCode> {
    if !(0.0..0.5).contains(&args.epsilon) {
        bail!("epsilon must lie in [0, 1/2)");
    }
    let config = load_configuration(&args.config)?;
    let clusters = match cluster_partition(&config, args.epsilon) {
        Ok(p) => json!({ "clusters": p.clusters }),
        Err(e) => json!({
            "error": e.to_string(),
            "closeness_components": closeness_components(&config, args.epsilon),
        }),
    };
    let out = json!({
        "n": config.n(),
        "d": config.d(),
        "epsilon": args.epsilon,
        "activity": epsilon_activity(&config, args.epsilon),
        "clusters": clusters,
        "strict_convexity": strict_convexity(&config, 0.0, 0.0),
        "separability": separability(&config, DEFAULT_TOL_ORTH),
        "polarization": polarization_check(&config, DEFAULT_TOL_POLAR),
        "potential_min_corr": potential_min_corr(&config),
        "potential_triangle": potential_triangle(&config).ok(),
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Simulate(a) => simulate(a),
        Command::Experiment(a) => experiment(a),
        Command::Analyze(a) => analyze(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn init_strings() {
        assert_eq!(parse_init("uniform").unwrap(), InitSpec::UniformSphere);
        assert_eq!(
            parse_init("file:a/b.txt").unwrap(),
            InitSpec::FromFile { path: "a/b.txt".into() }
        );
        assert_eq!(
            parse_init("almost-orth:0.1,0.9").unwrap(),
            InitSpec::AlmostOrthogonal { low: 0.1, high: 0.9, bundles: 3 }
        );
        assert_eq!(
            parse_init("almost-orth:0.1, 0.9, 2").unwrap(),
            InitSpec::AlmostOrthogonal { low: 0.1, high: 0.9, bundles: 2 }
        );
        assert!(parse_init("almost-orth:0.1").is_err());
        assert!(parse_init("gaussian").is_err());
    }

    #[test]
    fn command_line_parses() {
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from([
            "opdyn", "simulate", "--update", "linear:eta=0.1", "--n", "4", "--d", "3", "--steps", "9",
        ])
        .unwrap();
        assert!(matches!(cli.command, Command::Simulate(ref a) if a.n == 4 && a.record_every == 100));
        assert!(Cli::try_parse_from(["opdyn", "experiment", "--out", "x"]).is_err());
    }
}
