use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use forge::pipeline::{self, RunOptions, Stage, StageResult, MANIFEST_FILE, SYNCMAP_FILE, YIELD_CSV_FILE};
use forge::tuner::{self, Tuner};
use forge::PipelineConfig;
use forge_core::corpus::{aggregate_stats, format_yield_table, load_manifest, load_table_fixture};

/// Builds a speech recognition corpus from (audio, subtitle) pairs.
#[derive(Parser)]
#[command(name = "forge", version)]
struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true, default_value = "forge.json")]
    config: PathBuf,

    /// Output directory, overriding `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Reuse stages that already finished (marker and outputs present).
    #[arg(long, global = true)]
    resume: bool,

    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch or copy inputs and condition the audio.
    Ingest,
    /// Parse subtitles, build and snap the sync maps.
    Align,
    /// Slice candidates and validate them with the ASR backend.
    Validate,
    /// Emit accepted fragments, the manifest and yield statistics.
    Build,
    /// Run the stages from ingest to build.
    Run {
        /// Last stage to run (ingest, align, transform, validate, build)
        #[arg(long)]
        stop_after: Option<Stage>,
        /// First stage to run; earlier stages must have left their outputs
        #[arg(long)]
        start_from: Option<Stage>,
    },
    /// Print the yield table from a statistics CSV, a manifest or an output directory.
    Stats {
        /// Defaults to the configured output directory.
        input: Option<PathBuf>,
    },
    /// Serve a sync map and its audio to the tuning UI on localhost.
    ServeTuner {
        /// Source whose work files to serve.
        #[arg(long, conflicts_with_all = ["syncmap", "audio"])]
        source: Option<String>,
        /// Sync map file to edit (with --audio, instead of --source)
        #[arg(long, requires = "audio")]
        syncmap: Option<PathBuf>,
        /// WAV file the sync map refers to
        #[arg(long, requires = "syncmap")]
        audio: Option<PathBuf>,
        /// Loopback port to listen on
        #[arg(long, default_value_t = 8765)]
        port: u16,
        /// Directory with the built UI (index.html and assets).
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&cli.config).with_context(|| format!("loading {}", cli.config.display()))?;
    if let Some(out) = &cli.out {
        cfg.out_dir = std::path::absolute(out)?;
    }
    Ok(cfg)
}

fn print_results(results: &[StageResult]) {
    for r in results {
        println!(
            "{:<10} {:<20} in {:>6}  out {:>6}  warnings {:>4}  {}",
            r.stage.name(),
            r.source_id,
            r.n_in,
            r.n_out,
            r.warnings,
            if r.skipped { "(resumed)".to_string() } else { format!("{} ms", r.elapsed_ms) },
        );
    }
}

fn run(cli: &Cli, opts: RunOptions) -> Result<()> {
    let cfg = load_config(cli)?;
    let report = pipeline::run_pipeline(&cfg, &opts)?;
    print_results(&report.results);
    if let Some(m) = &report.manifest {
        println!(
            "manifest: {} fragments, {} ms -> {}",
            m.fragment_count,
            m.total_duration_ms,
            cfg.out_dir().join(MANIFEST_FILE).display()
        );
    }
    if !report.succeeded() {
        for f in &report.failures {
            eprintln!(
                "{} failed{}: {}",
                f.source_id,
                f.stage.map(|s| format!(" at {s}")).unwrap_or_default(),
                f.message
            );
        }
        bail!("{} of {} sources failed", report.failures.len(), cfg.sources.len());
    }
    Ok(())
}

fn single(stage: Stage, resume: bool) -> RunOptions {
    RunOptions {
        resume,
        start_from: Some(stage),
        stop_after: Some(stage),
    }
}

fn stats(cli: &Cli, input: Option<&Path>) -> Result<()> {
    let input = match input {
        Some(p) => p.to_path_buf(),
        None => load_config(cli)?.out_dir(),
    };
    let csv_path = if input.is_dir() {
        input.join(YIELD_CSV_FILE)
    } else if input.extension().is_some_and(|e| e == "json") {
        let manifest = load_manifest(&input).with_context(|| format!("loading {}", input.display()))?;
        let csv = input.with_file_name(YIELD_CSV_FILE);
        let table = load_table_fixture(fs::File::open(&csv).with_context(|| format!("opening {}", csv.display()))?)?;
        let corpus: u64 = table.rows.iter().map(|r| r.corpus.count).sum();
        if corpus != manifest.fragment_count as u64 {
            bail!(
                "{} lists {corpus} corpus segments but the manifest has {}",
                csv.display(),
                manifest.fragment_count
            );
        }
        csv
    } else {
        input
    };
    let table = load_table_fixture(fs::File::open(&csv_path).with_context(|| format!("opening {}", csv_path.display()))?)?;
    if table.rows.is_empty() {
        bail!("{} has no sources", csv_path.display());
    }
    let reports = table.reports()?;
    let summary = if table.published_total.is_some() { table.summary()? } else { aggregate_stats(&reports)? };
    print!("{}", format_yield_table(&reports, &summary));
    Ok(())
}

fn serve_tuner(
    cli: &Cli,
    source: Option<&str>,
    paths: Option<(PathBuf, PathBuf)>,
    port: u16,
    ui_dir: Option<PathBuf>,
) -> Result<()> {
    let (syncmap, audio) = match (source, paths) {
        (_, Some(p)) => p,
        (Some(id), None) => {
            let cfg = load_config(cli)?;
            let work = cfg.work_dir(id);
            (work.join(SYNCMAP_FILE), work.join(forge::ingest::AUDIO_FILE))
        }
        (None, None) => bail!("give --source, or --syncmap and --audio"),
    };
    let tuner = Tuner::new(syncmap, audio, ui_dir)?;
    let server = tuner::bind(port)?;
    println!("tuner listening on http://{}", server.server_addr());
    tuner::serve(&server, &tuner);
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match &cli.command {
        Command::Ingest => run(&cli, single(Stage::Ingest, cli.resume)),
        Command::Align => run(&cli, single(Stage::Align, cli.resume)),
        Command::Validate => run(&cli, single(Stage::Validate, cli.resume)),
        Command::Build => run(&cli, single(Stage::Build, cli.resume)),
        Command::Run { stop_after, start_from } => run(
            &cli,
            RunOptions {
                resume: cli.resume,
                start_from: *start_from,
                stop_after: *stop_after,
            },
        ),
        Command::Stats { input } => stats(&cli, input.as_deref()),
        Command::ServeTuner { source, syncmap, audio, port, ui_dir } => serve_tuner(
            &cli,
            source.as_deref(),
            syncmap.clone().zip(audio.clone()),
            *port,
            ui_dir.clone(),
        ),
    }
}
