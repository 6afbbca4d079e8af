use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Parser, Subcommand};
use robust_ope::gradcheck::{self, GradcheckConfig};
use robust_ope::scenarios::{export_scenario, generate, ScenarioOptions};
use robust_ope::{load_classification_csv, Condition};
use robust_ope_bench::analysis::family_order;
use robust_ope_bench::{family_report, read_results, relative_cdf, ExperimentConfig};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "robust-ope", version, about = "Robust off-policy evaluation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every condition of an experiment config (TOML).
    Run {
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Family win counts and relative MSE against a baseline estimator.
    Report {
        results: PathBuf,
        #[arg(long)]
        baseline: String,
        /// Comma separated families to compete; all present families by default.
        #[arg(long, value_delimiter = ',')]
        families: Vec<String>,
    },
    /// Writes the relative-MSE CDF table.
    Cdf {
        results: PathBuf,
        #[arg(long)]
        baseline: String,
        /// Defaults to cdf.csv next to the results file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Finite-difference check of the robust model gradient.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Writes one generated scenario as CSV/JSON files.
    ExportScenario {
        /// TOML file with a condition and its dataset.
        condition: PathBuf,
        #[arg(long, default_value_t = 0)]
        rep: usize,
        #[arg(long, default_value = "scenario")]
        output: PathBuf,
    },
}

/// A condition file for `export-scenario`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConditionFile {
    data_path: PathBuf,
    label_column: String,
    #[serde(default)]
    scenario: ScenarioOptions,
    condition: Condition,
}

fn cmd_run(config: &Path, output: Option<PathBuf>) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(o) = output {
        cfg.output_dir = o;
    }
    let workers = cfg.worker_count()?;
    let s = robust_ope_bench::run(&cfg, workers)?;
    println!(
        "{} conditions: {} run, {} resumed, {} failed, {} repetitions skipped",
        s.conditions,
        s.completed,
        s.resumed,
        s.failed.len(),
        s.skipped_reps
    );
    for (id, e) in &s.failed {
        println!("  {id}: {e}");
    }
    println!("results: {}", s.results_path.display());
    Ok(())
}

fn cmd_report(results: &Path, baseline: &str, families: &[String]) -> Result<()> {
    let rows = read_results(results)?;
    if rows.is_empty() {
        bail!("{} has no results", results.display());
    }
    let fams: Vec<&str> = families.iter().map(String::as_str).collect();
    for f in &fams {
        if !family_order().contains(f) {
            bail!("unknown family `{f}`; expected one of {:?}", family_order());
        }
    }
    let rep = family_report(&rows, &fams);
    println!("family best counts over {} conditions", rep.conditions);
    for c in &rep.counts {
        println!("  {:<10} {:>5}  {:>6.1}%", c.family, c.wins, 100.0 * c.fraction);
    }
    let cdf = relative_cdf(&rows, baseline)?;
    println!("relative MSE against {baseline}: median, share below 1");
    let mut names: Vec<&str> = Vec::new();
    for p in &cdf {
        if !names.contains(&p.estimator.as_str()) {
            names.push(&p.estimator);
        }
    }
    for name in names {
        let v: Vec<f64> = cdf.iter().filter(|p| p.estimator == name).map(|p| p.ratio).collect();
        let median = v[(v.len() - 1) / 2];
        let below = v.iter().filter(|&&r| r < 1.0).count() as f64 / v.len() as f64;
        println!("  {name:<10} {median:>10.4}  {:>6.1}%", 100.0 * below);
    }
    Ok(())
}

fn cmd_cdf(results: &Path, baseline: &str, output: Option<PathBuf>) -> Result<()> {
    let rows = read_results(results)?;
    let cdf = relative_cdf(&rows, baseline)?;
    let out = output.unwrap_or_else(|| results.with_file_name("cdf.csv"));
    let mut w = csv::Writer::from_path(&out).with_context(|| format!("creating {}", out.display()))?;
    for p in &cdf {
        w.serialize(p)?;
    }
    w.flush()?;
    println!("{} points written to {}", cdf.len(), out.display());
    Ok(())
}

fn cmd_gradcheck(draws: usize, seed: u64) -> Result<()> {
    let rep = gradcheck::run(&GradcheckConfig {
        draws,
        seed,
        ..Default::default()
    });
    println!(
        "{} draws, {} coordinates, {} failures, max relative error {:.3e}",
        rep.draws, rep.coordinates, rep.failures, rep.max_rel_error
    );
    if !rep.passed() {
        bail!("gradient check failed");
    }
    Ok(())
}

fn cmd_export(path: &Path, rep: usize, output: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut file: ConditionFile = toml::from_str(&text).context("parsing condition file")?;
    if file.data_path.is_relative() {
        file.data_path = path.parent().unwrap_or(Path::new(".")).join(&file.data_path);
    }
    let data = load_classification_csv::<f64>(&file.data_path, &file.label_column)?;
    let scn = generate(&file.condition, &data, rep, &file.scenario)?;
    export_scenario(&scn, &file.condition, rep, output)?;
    println!("scenario written to {}", output.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run { config, output } => cmd_run(&config, output),
        Command::Report { results, baseline, families } => cmd_report(&results, &baseline, &families),
        Command::Cdf { results, baseline, output } => cmd_cdf(&results, &baseline, output),
        Command::Gradcheck { draws, seed } => cmd_gradcheck(draws, seed),
        Command::ExportScenario { condition, rep, output } => cmd_export(&condition, rep, &output),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
