use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sensorimotor::harness::{
    export_artifacts, load_report, run_scenario_timed, summary_csv, sweep, ExperimentReport, Scenario, ScenarioConfig, Timings,
};
use sensorimotor::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "sensorimotor", version, about = "Discover proto-objects from sensorimotor regularities in a toy gridworld")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Scenario preset; overrides the config file's `name`.
    #[arg(long)]
    scenario: Option<String>,
    /// TOML file with [grid], [explore], [codebook], [similarity] and [spectral] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Exploration steps per run.
    #[arg(long)]
    steps: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario at one seed and export its artifacts.
    Run {
        #[command(flatten)]
        common: Common,
        /// Seed; defaults to the first seed of the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a parameter sweep over values x seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter to vary, e.g. `grid.p_env` or `n_obj`.
        #[arg(long)]
        param: Option<String>,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Cells run concurrently; defaults to the number of CPUs.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Re-render every export from an existing report.json.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<ScenarioConfig> {
    let name = common.scenario.as_deref().map(str::parse::<Scenario>).transpose()?;
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::from_toml_file(path, name)?,
        None => ScenarioConfig::preset(name.unwrap_or_default()),
    };
    if let Some(n) = common.steps {
        cfg.explore.n_step = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn print_summary(r: &ExperimentReport) {
    println!(
        "{} seed {}: {} states, {} triplets, P(same | null) = {:.4}",
        r.scenario, r.seed, r.codebook.k, r.tensor.n_triplets, r.null_self_transition
    );
    for a in &r.analyses {
        let kind = serde_json::to_value(a.kind).expect("kind serializes");
        println!(
            "  [{}] N* = {} (verbatim {}, centered {}), sizes {:?}, ARI {:.3}",
            kind.as_str().unwrap_or("?"),
            a.n_star.selected,
            a.n_star.verbatim,
            a.n_star.centered,
            a.cluster_sizes,
            a.ari
        );
        for c in &a.clusters {
            println!(
                "    cluster {}: {} states, majority {} purity {:.3}, object purity {:.3}, object visits {:.3}{}",
                c.id,
                c.size,
                c.majority_label.as_deref().unwrap_or("-"),
                c.purity,
                c.object_purity,
                c.object_visit_share,
                if c.dense { ", dense" } else { "" }
            );
        }
    }
}

fn run(common: &Common, seed: Option<u64>) -> Result<()> {
    let cfg = load_config(common)?;
    let seed = seed.unwrap_or(cfg.seeds[0]);
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out").join(cfg.name.as_str()).join(format!("seed_{seed}")));
    let (report, timings) = run_scenario_timed(&cfg, seed)?;
    export_artifacts(&report, &out)?;
    write_json(&out.join("timings.json"), &timings)?;
    print_summary(&report);
    println!("wrote {} files to {} in {:.1} s", report.artifacts.len(), out.display(), timings.total);
    Ok(())
}

fn run_sweep(
    common: &Common,
    param: Option<String>,
    values: Option<Vec<String>>,
    seeds: Option<Vec<u64>>,
    jobs: Option<usize>,
) -> Result<bool> {
    let cfg = load_config(common)?;
    let preset = cfg.sweep.clone();
    let param = param
        .or_else(|| preset.as_ref().map(|s| s.param.clone()))
        .ok_or_else(|| Error::Config(format!("scenario {} has no sweep preset; pass --param and --values", cfg.name)))?;
    let values = values.or_else(|| preset.map(|s| s.values)).ok_or_else(|| Error::Config("no sweep values given".into()))?;
    let seeds = seeds.unwrap_or_else(|| cfg.seeds.clone());
    if values.is_empty() || seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one value and one seed".into()));
    }
    let root = common.out.clone().unwrap_or_else(|| PathBuf::from("out").join(cfg.name.as_str()));
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let cells = pool.install(|| sweep(&cfg, &param, &values, &seeds))?;
    let mut all_ok = true;
    for cell in &cells {
        match &cell.outcome {
            Ok((report, timings)) => {
                let dir = root.join(format!("{param}={}", cell.value)).join(format!("seed_{}", cell.seed));
                export_artifacts(report, &dir)?;
                write_json(&dir.join("timings.json"), timings)?;
                print_summary(report);
            }
            Err(e) => {
                all_ok = false;
                eprintln!("{param}={} seed {}: {e}", cell.value, cell.seed);
            }
        }
    }
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let summary = root.join("summary.csv");
    fs::write(&summary, summary_csv(&param, &cells)).map_err(|e| Error::io(&summary, e))?;
    let total: f64 = cells.iter().filter_map(|c| c.outcome.as_ref().ok()).map(|r: &(ExperimentReport, Timings)| r.1.total).sum();
    println!("{} cells, summary at {} ({:.1} s of run time)", cells.len(), summary.display(), total);
    Ok(all_ok)
}

fn rerender(input: &Path) -> Result<()> {
    let report = load_report(input)?;
    let written = export_artifacts(&report, input)?;
    print_summary(&report);
    println!("re-rendered {} files in {}", written.len(), input.display());
    Ok(())
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    if e.is_config() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run { common, seed } => run(&common, seed).map(|_| true),
        Command::Sweep { common, param, values, seeds, jobs } => run_sweep(&common, param, values, seeds, jobs),
        Command::Report { input } => rerender(&input).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => exit_for(&e),
    }
}
