use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use geodata::pipeline::{
    back_solve_factor, estimate_emissions, report_stats, run_pipeline, Manifest, PipelineError, RunReport, Stage,
    StatsRow,
};

#[derive(Parser)]
#[command(name = "geodata", version, about = "Geoscience corpus and instruction-data pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Manifest file (JSON, or TOML by extension).
    #[arg(long, global = true, default_value = "manifest.json")]
    manifest: PathBuf,
    /// Overrides the manifest seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the manifest output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for document-level stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse TEI files into structured documents.
    Ingest,
    /// Render documents as Markdown with span sidecars.
    Emit,
    /// Pair captions with referring sentences.
    Link,
    /// Build signal tuples and instruction pairs.
    Signals,
    /// Tokenize sources into fixed-length blocks.
    Blocks,
    /// Plan mixed batches.
    Plan,
    /// Loss-mask tool traces.
    Mask,
    /// Run every stage enabled in the manifest.
    Run,
    /// Print the corpus table and an emission estimate.
    Stats(StatsArgs),
}

#[derive(Args)]
struct StatsArgs {
    /// A `report.json` written by a run.
    #[arg(long, conflicts_with = "rows")]
    report: Option<PathBuf>,
    /// A JSON array of rows: source, block_num, token_num, item_num, batch_ratio.
    #[arg(long)]
    rows: Option<PathBuf>,
    /// Accelerator hours.
    #[arg(long)]
    hours: Option<f64>,
    /// Accelerator TDP in kW.
    #[arg(long, requires = "intensity", conflicts_with = "factor")]
    tdp: Option<f64>,
    /// Grid carbon intensity in kg CO2 per kWh.
    #[arg(long, requires = "tdp")]
    intensity: Option<f64>,
    /// Combined TDP × intensity in kg CO2 per accelerator hour.
    #[arg(long)]
    factor: Option<f64>,
    /// Reported total in kg; prints the implied factor (needs --hours).
    #[arg(long)]
    solve_total: Option<f64>,
}

fn stats(args: &StatsArgs) -> Result<()> {
    let rows: Option<Vec<StatsRow>> = match (&args.report, &args.rows) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p).with_context(|| p.display().to_string())?;
            let r: RunReport = serde_json::from_str(&text).with_context(|| p.display().to_string())?;
            Some(r.stats_rows())
        }
        (None, Some(p)) => {
            let text = std::fs::read_to_string(p).with_context(|| p.display().to_string())?;
            Some(serde_json::from_str(&text).with_context(|| p.display().to_string())?)
        }
        (None, None) => None,
    };
    if let Some(rows) = rows {
        print!("{}", report_stats(&rows));
    }
    if let Some(hours) = args.hours {
        if let Some(total) = args.solve_total {
            println!("factor: {:.5} kg/h", back_solve_factor(total, hours));
        }
        let kg = match (args.tdp, args.intensity, args.factor) {
            (Some(t), Some(i), _) => Some(estimate_emissions(hours, t, i)?),
            (_, _, Some(f)) => Some(estimate_emissions(hours, f, 1.0)?),
            _ => None,
        };
        if let Some(kg) = kg {
            println!("emissions: {:.1} kg CO2 ({:.2} t)", kg, kg / 1000.0);
        }
    } else if args.tdp.is_some() || args.factor.is_some() || args.solve_total.is_some() {
        bail!("--hours is required for an emission estimate");
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let mut m = Manifest::load(&cli.global.manifest)?;
    if let Some(seed) = cli.global.seed {
        m.seed = seed;
    }
    if let Some(out) = &cli.global.out {
        m.output_dir = std::path::absolute(out)?;
    }
    let only = match cli.command {
        Command::Ingest => Some(Stage::Ingest),
        Command::Emit => Some(Stage::Emit),
        Command::Link => Some(Stage::Link),
        Command::Signals => Some(Stage::Signals),
        Command::Blocks => Some(Stage::Blocks),
        Command::Plan => Some(Stage::Plan),
        Command::Mask => Some(Stage::Masks),
        Command::Run | Command::Stats(_) => None,
    };
    if let Some(s) = only {
        m.stages = vec![s];
    }
    let report = run_pipeline(&m)?;
    for (stage, t) in &report.timings {
        log::info!("{stage}: {:.3}s", t.as_secs_f64());
    }
    print!("{}", report.to_text());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.global.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Stats(args) => stats(args),
        _ => run(&cli).map_err(|e| {
            if let PipelineError::Stage { stage, .. } = &e {
                eprintln!("failed stage: {stage}");
            }
            anyhow::Error::new(e)
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
