use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use synevo::curriculum::reorder;
use synevo::datagen::{write_csv, CsvLayout};
use synevo::elastic::CommonContainerState;
use synevo::harness::{
    self, prepare, report::write_csv_rows, write_json, write_run, write_sweep, ExperimentConfig,
    SweepGrid, Variant,
};

#[derive(Parser)]
#[command(name = "synevo", version, about = "Continual spatiotemporal forecasting experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON or TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// full, REO, Ela, PE, H2E, IL or DER.
    #[arg(long, global = true)]
    variant: Option<Variant>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the source domains as long-layout CSV files.
    Generate,
    /// Profile the groups and write the easy-to-hard ordering.
    Reorder,
    /// Run the full pipeline and write the report, log and checkpoints.
    Evolve,
    /// Score a container checkpoint on the held-out period.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run one ablation variant, or all of them when --variant is absent.
    Ablate,
    /// Compare the evolved models with a single-domain backbone.
    Zeroshot,
    /// Grid over p0, lambda0 and kappa.
    Sweep {
        /// JSON file with `p0`, `lambda0` and `kappa` arrays.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Entropy and mutual-information audit of the source domains.
    Audit,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(p) => ExperimentConfig::from_path(p).with_context(|| format!("[config] {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
        if let harness::DatasetSpec::Synthetic(s) = &mut config.dataset {
            s.seed = seed;
        }
    }
    if let Some(v) = common.variant {
        config.variant = v;
    }
    if let Some(out) = &common.out {
        config.out_dir = Some(out.clone());
    }
    config.validate().context("[config]")?;
    Ok(config)
}

fn out_dir(config: &ExperimentConfig) -> PathBuf {
    config.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

#[derive(serde::Serialize)]
struct AblationRow {
    variant: String,
    mean_mae: f64,
    mean_rmse: f64,
    absorbed: usize,
    isolated: usize,
}

fn ablate(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let variants: Vec<Variant> = match config.variant {
        Variant::Full => Variant::ALL.to_vec(),
        v => vec![v],
    };
    let prepared = prepare(config).context("[datagen]")?;
    let mut rows = Vec::new();
    for v in variants {
        let c = ExperimentConfig {
            variant: v,
            ..config.clone()
        };
        let run = harness::run_prepared(&c, &prepared, None)?;
        write_run(&out.join(v.name()), &run)?;
        log::info!("{v}: holdout MAE {:.4}", run.report.holdout.mean_mae);
        rows.push(AblationRow {
            variant: v.name().into(),
            mean_mae: run.report.holdout.mean_mae,
            mean_rmse: run.report.holdout.mean_rmse,
            absorbed: run.report.absorbed.len(),
            isolated: run.report.isolated.len(),
        });
    }
    write_csv_rows(&out.join("ablation.csv"), &rows)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli.common)?;
    let out = out_dir(&config);
    std::fs::create_dir_all(&out).with_context(|| format!("[output] {}", out.display()))?;
    match cli.command {
        Command::Generate => {
            let (domains, graph) = harness::runners::load_domains(&config).context("[datagen]")?;
            for d in &domains {
                write_csv(d, out.join(format!("domain_{}.csv", d.id)), CsvLayout::Long)?;
            }
            write_json(&out.join("graph.json"), &graph)?;
            write_json(&out.join("config.json"), &config)?;
        }
        Command::Reorder => {
            let prepared = prepare(&config).context("[datagen]")?;
            let r = reorder(&prepared.train, &config.evolve_config().probe_config())
                .map_err(|e| e.in_phase("reorder"))?;
            write_json(&out.join("ordering.json"), &r.report())?;
            println!("{:?}", r.order.ids);
        }
        Command::Evolve => {
            let run = harness::run_full(&config)?;
            write_run(&out, &run)?;
            println!("holdout MAE {:.4}", run.report.holdout.mean_mae);
        }
        Command::Evaluate { checkpoint } => {
            let text = std::fs::read_to_string(&checkpoint)
                .with_context(|| format!("[evaluate] {}", checkpoint.display()))?;
            let container = CommonContainerState::from_checkpoint_json(&text).map_err(|e| e.in_phase("evaluate"))?;
            let report = harness::evaluate_params(&config, &container.params)?;
            write_json(&out.join("evaluation.json"), &report)?;
            println!("holdout MAE {:.4}", report.mean_mae);
        }
        Command::Ablate => ablate(&config, &out)?,
        Command::Zeroshot => {
            let report = harness::run_zero_shot(&config)?;
            write_json(&out.join("zeroshot.json"), &report)?;
            println!(
                "evolved MAE {:.4}, baseline MAE {:.4}",
                report.synevo.mean_mae, report.baseline.mean_mae
            );
        }
        Command::Sweep { grid } => {
            let grid: SweepGrid = match grid {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(&p)?)
                    .with_context(|| format!("[config] grid {}", p.display()))?,
                None => SweepGrid::default(),
            };
            let cells = harness::sweep(&config, &grid)?;
            write_sweep(&out, &cells)?;
            let failed = cells.iter().filter(|c| c.error.is_some()).count();
            println!("{} cells, {failed} failed", cells.len());
        }
        Command::Audit => {
            let report = harness::audit(&config)?;
            write_json(&out.join("entropy.json"), &report)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
