//! `scalecost`: cost reports, sweeps, budget matching and constrained
//! selection from the command line.
//!
//! Exit codes: 0 ok, 1 I/O, 2 parse or validation, 3 infeasible, 64 usage.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use scalecost::io::{self, RunManifest};
use scalecost::presets;
use scalecost::search::{
    best_compressed, match_flops_budget, AnnotationTable, FrontierPoint, Knob, Metric,
};
use scalecost::{cost_report, ArchSpec, DType, Error, ErrorClass, EvalConfig, FlopConvention};

#[derive(Parser, Debug)]
#[command(
    name = "scalecost",
    version,
    about = "FLOPs and memory cost model for CNN and ViT scaling"
)]
struct Cli {
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cost report for one architecture spec.
    Cost {
        /// Spec JSON file or preset name.
        spec: String,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Also write a run manifest here.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Validate a spec and print any violations.
    Validate { spec: String },
    /// Enumerate a sweep space and write frontier, Pareto and plot files.
    Sweep {
        /// Sweep JSON file.
        space: PathBuf,
        /// CSV of `config_id,metric,value` measurements.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Find the knob value whose FLOPs best match a target.
    Match {
        spec: String,
        #[arg(long)]
        knob: String,
        #[arg(long)]
        target_flops: String,
        /// Relative tolerance.
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Cheapest swept config within a metric drop of the baseline.
    Best {
        /// Output directory of a previous `sweep`.
        sweep_dir: PathBuf,
        #[arg(long)]
        metric: String,
        #[arg(long, allow_hyphen_values = true)]
        max_drop: f64,
        #[arg(long, default_value = "flops")]
        objective: String,
        /// Baseline config id; defaults to the unscaled base if swept, else
        /// the most expensive config.
        #[arg(long)]
        baseline: Option<String>,
        /// Extra annotations merged over the frontier's metric columns.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Built-in architectures.
    Presets {
        #[command(subcommand)]
        command: PresetsCommand,
    },
}

#[derive(Subcommand, Debug)]
enum PresetsCommand {
    /// One line per preset with its default cost.
    List,
    /// Print a preset's spec JSON.
    Show { name: String },
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Pixels per side (CNN) or tokens per side (ViT).
    #[arg(long)]
    resolution: Option<u32>,
    #[arg(long, default_value_t = 1)]
    batch: u32,
    #[arg(long, default_value = "fp32")]
    dtype: String,
    #[arg(long, value_enum, default_value = "blocks-only")]
    convention: Convention,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Convention {
    BlocksOnly,
    FullCount,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Json,
    Csv,
}

impl EvalArgs {
    fn to_eval(&self) -> Result<EvalConfig, Error> {
        if self.batch == 0 {
            return Err(Error::InvalidArgument("--batch must be ≥ 1".into()));
        }
        let dtype: DType = self.dtype.parse().map_err(Error::InvalidArgument)?;
        let mut eval = EvalConfig::default()
            .with_batch(self.batch)
            .with_dtype(dtype)
            .with_convention(match self.convention {
                Convention::BlocksOnly => FlopConvention::BlocksOnly,
                Convention::FullCount => FlopConvention::FullCount,
            });
        eval.input_resolution = self.resolution;
        Ok(eval)
    }
}

#[derive(Serialize)]
struct BracketEnd<'a> {
    config_id: &'a str,
    flops: u128,
}

#[derive(Serialize)]
struct MatchOutput<'a> {
    config_id: &'a str,
    knob: &'static str,
    value: f64,
    relaxed_value: f64,
    flops: u128,
    target_flops: u128,
    deviation: u128,
    within_tolerance: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    bracket: Option<Vec<BracketEnd<'a>>>,
    spec: &'a ArchSpec,
}

#[derive(Serialize)]
struct BestOutput<'a> {
    baseline: &'a str,
    baseline_metric: Option<f64>,
    selected: &'a FrontierPoint,
    metric_value: Option<f64>,
}

fn command_line() -> Vec<String> {
    std::env::args().collect()
}

fn write_manifest(
    path: Option<&Path>,
    inputs: &[&Path],
    eval: Option<EvalConfig>,
) -> Result<(), Error> {
    if let Some(path) = path {
        let inputs: Vec<&Path> = inputs.iter().copied().filter(|p| p.is_file()).collect();
        let manifest = RunManifest::new(command_line(), &inputs, eval)?;
        io::write_atomic(path, manifest.to_json().as_bytes())?;
    }
    Ok(())
}

fn pretty(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("output serializes")
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Cost {
            spec,
            eval,
            format,
            manifest,
        } => {
            let arch = io::load_spec(&spec)?;
            let eval = eval.to_eval()?;
            let report = cost_report(&arch, &eval)?;
            write_manifest(manifest.as_deref(), &[Path::new(&spec)], Some(eval))?;
            match format {
                Format::Json => println!("{}", pretty(&report)),
                Format::Csv => print!("{}", report.to_csv()),
            }
        }
        Command::Validate { spec } => {
            io::load_spec(&spec)?;
            println!("ok");
        }
        Command::Sweep {
            space,
            annotations,
            out,
        } => {
            let sweep = io::read_sweep(&space)?;
            let table = annotations
                .as_deref()
                .map(AnnotationTable::from_path)
                .transpose()?;
            let mut inputs = vec![space.as_path()];
            inputs.extend(annotations.as_deref());
            let manifest = RunManifest::new(command_line(), &inputs, Some(sweep.eval.clone()))?;
            let result = io::run_sweep(&sweep, table.as_ref(), &out, &manifest)?;
            eprintln!(
                "{} configs, {} on the Pareto front, {} skipped",
                result.points.len(),
                result.pareto.len(),
                result.skipped.len()
            );
        }
        Command::Match {
            spec,
            knob,
            target_flops,
            tol,
            eval,
            manifest,
        } => {
            let arch = io::load_spec(&spec)?;
            let eval = eval.to_eval()?;
            let knob: Knob = knob.parse()?;
            let target: u128 = target_flops.replace('_', "").parse().map_err(|_| {
                Error::InvalidArgument(format!("invalid --target-flops `{target_flops}`"))
            })?;
            let m = match_flops_budget(&arch, &eval, knob, target, tol)?;
            write_manifest(manifest.as_deref(), &[Path::new(&spec)], Some(eval))?;
            let out = MatchOutput {
                config_id: &m.config.config_id,
                knob: knob_name(m.knob),
                value: m.value,
                relaxed_value: m.relaxed_value,
                flops: m.flops,
                target_flops: m.target,
                deviation: m.deviation,
                within_tolerance: m.within_tolerance,
                bracket: m.bracket.as_ref().map(|pair| {
                    pair.iter()
                        .map(|(c, f)| BracketEnd {
                            config_id: &c.config_id,
                            flops: *f,
                        })
                        .collect()
                }),
                spec: &m.config.spec,
            };
            println!("{}", pretty(&out));
        }
        Command::Best {
            sweep_dir,
            metric,
            max_drop,
            objective,
            baseline,
            annotations,
            manifest,
        } => {
            if max_drop.is_nan() || max_drop < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "--max-drop must be ≥ 0 (got {max_drop})"
                )));
            }
            let objective: Metric = objective.parse()?;
            let frontier = sweep_dir.join("frontier.csv");
            let points = io::read_frontier_csv(&frontier)?;
            let mut table = AnnotationTable::from_points(&points);
            if let Some(path) = &annotations {
                let extra = AnnotationTable::from_path(path)?;
                if extra.is_empty() {
                    log::warn!("{}: no annotation rows", path.display());
                }
                table.merge(&extra);
            }
            let baseline = match baseline {
                Some(b) => b,
                None => default_baseline(&points, &objective)?,
            };
            let best = best_compressed(&points, &table, &metric, max_drop, &objective, &baseline)?;
            let mut inputs = vec![frontier.as_path()];
            inputs.extend(annotations.as_deref());
            write_manifest(manifest.as_deref(), &inputs, None)?;
            let out = BestOutput {
                baseline_metric: table.get(&baseline, &metric),
                metric_value: table.get(&best.config_id, &metric),
                baseline: &baseline,
                selected: &best,
            };
            println!("{}", pretty(&out));
        }
        Command::Presets { command } => match command {
            PresetsCommand::List => {
                for entry in presets::catalog() {
                    let spec = entry.build();
                    let report = cost_report(&spec, &EvalConfig::default())?;
                    println!(
                        "{}\tflops={}\ttotal_memory_bytes={}\tparams={}\t{}",
                        entry.name,
                        report.flops,
                        report.total_memory_bytes,
                        report.param_count,
                        entry.description
                    );
                }
            }
            PresetsCommand::Show { name } => {
                let spec: ArchSpec = presets::by_name(&name)?;
                println!("{}", pretty(&spec));
            }
        },
    }
    Ok(())
}

fn knob_name(knob: Knob) -> &'static str {
    match knob {
        Knob::Width => "width",
        Knob::Hidden => "hidden",
        Knob::Mlp => "mlp",
        Knob::Depth => "depth",
        Knob::Resolution => "resolution",
    }
}

/// The unscaled base config when present, otherwise the config with the
/// largest objective value.
fn default_baseline(points: &[FrontierPoint], objective: &Metric) -> Result<String, Error> {
    if let Some(p) = points.iter().find(|p| !p.config_id.contains('|')) {
        return Ok(p.config_id.clone());
    }
    let key = |p: &FrontierPoint| match objective {
        Metric::Flops => p.flops,
        Metric::PeakActivation => p.peak_activation_bytes,
        Metric::ModelBytes => p.model_bytes,
        _ => p.total_memory_bytes,
    };
    points
        .iter()
        .max_by(|a, b| {
            key(a)
                .cmp(&key(b))
                .then_with(|| b.config_id.cmp(&a.config_id))
        })
        .map(|p| p.config_id.clone())
        .ok_or_else(|| Error::MissingBaseline("<empty frontier>".into()))
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Io => 1,
        ErrorClass::Validation => 2,
        ErrorClass::Infeasible => 3,
        ErrorClass::Usage => 64,
    }
}

fn class_name(class: ErrorClass) -> &'static str {
    match class {
        ErrorClass::Io => "io",
        ErrorClass::Validation => "validation",
        ErrorClass::Infeasible => "infeasible",
        ErrorClass::Usage => "usage",
    }
}

/// One JSON object on stderr describing the failure.
fn diagnostic(err: &Error) -> serde_json::Value {
    let mut d = json!({
        "error": class_name(err.class()),
        "message": err.to_string(),
    });
    match err {
        Error::InvalidSpec(violations) => d["violations"] = json!(violations),
        Error::Parse { line, column, .. } => {
            d["line"] = json!(line);
            d["column"] = json!(column);
        }
        _ => {}
    }
    d
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(64)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", diagnostic(&e));
            ExitCode::from(exit_code(e.class()))
        }
    }
}
