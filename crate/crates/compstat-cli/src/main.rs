//! `compstat` command-line tool: analyze a catalog model at one or many
//! parameter points, verify every property suite, or list the catalog.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use compstat::analysis::{Pipeline, Settings};
use compstat::benchmarks::{self, BenchmarkEntry};
use compstat::config::{OutputFormat, RunConfig, ToleranceSection};
use compstat::csm::Recipe;
use compstat::diagnostics::Verdict;
use compstat::report::{AnalyzeReport, Outcome, RunReport, SuiteRun, VerifyReport};
use compstat::{Error, Result};

/// Default output directory when `--out` is not given.
const OUT_DIR_VAR: &str = "COMPSTAT_OUT_DIR";

#[derive(Parser)]
#[command(name = "compstat", version, about = "Comparative statics of equality-constrained optimization models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on a catalog model.
    Analyze(AnalyzeArgs),
    /// Run every benchmark's property suite under both pipelines.
    VerifyAll(VerifyArgs),
    /// List the model catalog.
    ListModels {
        #[arg(long, value_enum, default_value = "table")]
        format: ListFormat,
    },
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    model: Option<String>,
    /// Parameter overrides such as `p=1,1 m=1`.
    #[arg(long, num_args = 1..)]
    at: Vec<String>,
    /// Sweep axes such as `p=1:3:5`; several axes form a grid.
    #[arg(long, num_args = 1..)]
    sweep: Vec<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated CSM recipes.
    #[arg(long)]
    recipes: Option<String>,
    #[arg(long)]
    basis: Option<String>,
    #[arg(long)]
    pipeline: Option<String>,
    /// A single tolerance for every check, or `fd=1e-6,method=1e-3`.
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Comma-separated model names to run.
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "table")]
    format: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum ListFormat {
    Table,
    Json,
    Names,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors share the config-error status; help and version exit 0.
            return ExitCode::from(if e.use_stderr() { Outcome::ConfigError.exit_code() as u8 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Analyze(args) => analyze(args),
        Command::VerifyAll(args) => verify_all(args),
        Command::ListModels { format } => list_models(format).map(|_| Outcome::Pass),
    };
    match result {
        Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Outcome::of_error(&e).exit_code() as u8)
        }
    }
}

fn analyze_config(args: &AnalyzeArgs) -> Result<RunConfig> {
    let base = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    let mut cli = RunConfig {
        model: args.model.clone(),
        at: args.at.clone(),
        sweep: args.sweep.clone(),
        ..RunConfig::default()
    };
    if let Some(r) = &args.recipes {
        cli.csm.recipes = Some(r.split(',').map(|s| s.trim().parse::<Recipe>()).collect::<Result<_>>()?);
    }
    if let Some(b) = &args.basis {
        cli.csm.basis = Some(b.parse()?);
    }
    if let Some(p) = &args.pipeline {
        cli.method.pipeline = Some(p.parse::<Pipeline>()?);
    }
    if let Some(t) = &args.tol {
        cli.tolerances = ToleranceSection::parse(t)?;
    }
    cli.output.path = args.out.as_ref().map(|p| p.display().to_string());
    if let Some(f) = &args.format {
        cli.output.format = Some(f.parse()?);
    }
    let cfg = base.merge(cli);
    cfg.validate()?;
    Ok(cfg)
}

fn run_point(entry: &BenchmarkEntry, point: &[f64], settings: &Settings) -> RunReport {
    let start = Instant::now();
    let result = entry.run(Some(point), settings);
    let ms = start.elapsed().as_secs_f64() * 1e3;
    match result {
        Ok(an) => RunReport::from_analysis(&an, ms),
        Err(e) => RunReport::from_error(
            &entry.name,
            settings.pipeline,
            RunReport::named_parameters(&entry.model.parameter_names, point),
            &e,
            ms,
        ),
    }
}

fn analyze(args: AnalyzeArgs) -> Result<Outcome> {
    let cfg = analyze_config(&args)?;
    let name = cfg
        .model
        .clone()
        .ok_or_else(|| Error::Config("no model given; use --model or set `model` in the config".into()))?;
    let entry = benchmarks::lookup(&name)?;
    let points = cfg.points(&entry.model, &entry.default_point)?;
    let settings = cfg.settings();
    let reports: Vec<RunReport> = points.par_iter().map(|p| run_point(&entry, p, &settings)).collect();
    let format = cfg.output.format.unwrap_or_default();
    let dest = destination(cfg.output.path.as_deref().map(PathBuf::from), &name, format);
    let report = AnalyzeReport::new(cfg, reports);
    let text = match format {
        OutputFormat::Json => report.to_json()? + "\n",
        OutputFormat::Csv => analyze_csv(&report),
        OutputFormat::Table => analyze_table(&report),
    };
    emit(dest, &text)?;
    Ok(report.outcome())
}

fn analyze_table(report: &AnalyzeReport) -> String {
    let mut out = String::new();
    for (i, r) in report.reports.iter().enumerate() {
        let point: Vec<String> = r.parameters.iter().map(|p| format!("{}={}", p.name, p.value.0)).collect();
        out.push_str(&format!("# point {i}: {} [{}] {:?}\n", r.model, point.join(" "), r.outcome));
        if let Some(e) = &r.error {
            out.push_str(&format!("  error ({}): {}\n", e.kind, e.message));
        }
        for c in &r.checks {
            let verdict = match c.verdict {
                Verdict::Pass => "PASS",
                Verdict::Fail => "FAIL",
                Verdict::Skipped => "SKIP",
            };
            let residual = c.residual.map(|v| format!("{:.3e}", v.0)).unwrap_or_default();
            out.push_str(&format!("  {verdict:<4} {:<44} {residual}\n", c.name));
        }
    }
    out
}

fn analyze_csv(report: &AnalyzeReport) -> String {
    let mut out = String::new();
    for (i, r) in report.reports.iter().enumerate() {
        for c in &r.csms {
            out.push_str(&format!("# point {i} {}\n", c.recipe.name()));
            out.push_str(&c.matrix.to_csv());
        }
        for d in &r.derived {
            out.push_str(&format!("# point {i} {}\n", d.name));
            out.push_str(&d.matrix.to_csv());
        }
    }
    out
}

fn verify_all(args: VerifyArgs) -> Result<Outcome> {
    let all = benchmarks::all_names();
    for name in &args.only {
        if !all.contains(&name.as_str()) {
            return Err(Error::Config(format!("unknown model '{name}'; available: {}", all.join(", "))));
        }
    }
    let names: Vec<&str> = all
        .into_iter()
        .filter(|n| args.only.is_empty() || args.only.iter().any(|o| o == n))
        .collect();
    let mut cfg = RunConfig::default();
    if let Some(t) = &args.tol {
        cfg.tolerances = ToleranceSection::parse(t)?;
    }
    cfg.validate()?;
    let format: OutputFormat = args.format.parse()?;
    let base = cfg.settings();
    let jobs: Vec<(&str, Pipeline)> = names
        .iter()
        .flat_map(|n| [Pipeline::Analytic, Pipeline::Numeric].map(|p| (*n, p)))
        .collect();
    let runs: Vec<SuiteRun> = jobs
        .par_iter()
        .map(|(name, pipeline)| {
            let settings = base.clone().with_pipeline(*pipeline);
            let report = match benchmarks::lookup(name) {
                Ok(entry) => run_point(&entry, &entry.default_point, &settings),
                Err(e) => RunReport::from_error(name, *pipeline, Vec::new(), &e, 0.0),
            };
            SuiteRun::from_report(&report)
        })
        .collect();
    let report = VerifyReport::new(runs);
    let text = match format {
        OutputFormat::Json => report.to_json()? + "\n",
        OutputFormat::Table | OutputFormat::Csv => report.table(),
    };
    emit(destination(args.out, "verify-all", format), &text)?;
    Ok(report.outcome())
}

fn list_models(format: ListFormat) -> Result<()> {
    let entries: Vec<BenchmarkEntry> =
        benchmarks::all_names().iter().map(|n| benchmarks::lookup(n)).collect::<Result<_>>()?;
    let text = match format {
        ListFormat::Names => entries.iter().map(|e| e.name.clone() + "\n").collect(),
        ListFormat::Table => {
            let mut out = format!("{:<26} {:>3} {:>3} {:>3}  suites\n", "model", "M", "N", "K");
            for e in &entries {
                out.push_str(&format!(
                    "{:<26} {:>3} {:>3} {:>3}  {}\n",
                    e.name,
                    e.model.m(),
                    e.model.n(),
                    e.model.k(),
                    e.suite_names().join(", ")
                ));
            }
            out
        }
        ListFormat::Json => {
            let list: Vec<serde_json::Value> = entries
                .iter()
                .map(|e| {
                    serde_json::json!({
                        "name": e.name,
                        "summary": e.summary,
                        "m": e.model.m(),
                        "n": e.model.n(),
                        "k": e.model.k(),
                        "decisions": e.model.decision_names,
                        "parameters": e.model.parameter_names,
                        "suites": e.suite_names(),
                    })
                })
                .collect();
            serde_json::to_string_pretty(&list).map_err(|e| Error::Decode(e.to_string()))? + "\n"
        }
    };
    print!("{text}");
    Ok(())
}

/// `--out` if given, else a file under `COMPSTAT_OUT_DIR`, else stdout.
fn destination(out: Option<PathBuf>, stem: &str, format: OutputFormat) -> Option<PathBuf> {
    out.or_else(|| {
        let dir = std::env::var_os(OUT_DIR_VAR)?;
        let ext = match format {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
            OutputFormat::Table => "txt",
        };
        Some(PathBuf::from(dir).join(format!("{stem}.{ext}")))
    })
}

fn emit(dest: Option<PathBuf>, text: &str) -> Result<()> {
    match dest {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)
                    .map_err(|e| Error::Config(format!("cannot create {}: {e}", parent.display())))?;
            }
            std::fs::write(&path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}
