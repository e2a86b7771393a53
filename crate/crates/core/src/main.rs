use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rtrc_core::config::{self, LoadedConfig};
use rtrc_core::engine::{self, SourceSpec};
use rtrc_core::rng::{self, Stream};
use rtrc_core::video_source::{load_trace, synth_chunk_profile};
use rtrc_core::{output, Error, Result};

/// Rate control simulator for live video over a fading wireless link.
#[derive(Debug, Parser)]
#[command(name = "rtrc", version)]
struct Cli {
    /// Configuration file (TOML sections); defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Directory receiving output files.
    #[arg(
        short,
        long,
        global = true,
        env = "RTRC_OUTPUT_DIR",
        default_value = "out"
    )]
    output_dir: PathBuf,

    /// Override a configuration key, e.g. `--set channel.bandwidth_hz=1e6`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Override the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario; writes chunks.csv and summary.txt.
    Simulate,
    /// Sweep the mean channel rate; writes sweep.csv and sweep_mean.csv.
    Sweep,
    /// Success rate vs. bandwidth efficiency for fixed levels and RTRC; writes fig8.csv.
    Fig8,
    /// Write a synthetic rate-QP trace (trace.csv).
    GenTrace {
        /// Output file, instead of <output-dir>/trace.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a rate-QP trace file.
    ValidateTrace { path: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 1 } else { 2 })
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Command::ValidateTrace { path } = &cli.command {
        let profiles = load_trace::<f64>(path)?;
        println!("{}: {} chunks OK", path.display(), profiles.len());
        return Ok(());
    }

    let loaded = config::load(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    match &cli.command {
        Command::Simulate => simulate(cli, &loaded),
        Command::Sweep => sweep(cli, &loaded),
        Command::Fig8 => fig8(cli, &loaded),
        Command::GenTrace { out } => gen_trace(cli, &loaded, out.as_deref()),
        Command::ValidateTrace { .. } => unreachable!("handled above"),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn finish(mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(Error::from)
}

fn simulate(cli: &Cli, loaded: &LoadedConfig) -> Result<()> {
    let sim = loaded.sim_config()?;
    let result = engine::run_scenario(&sim)?;

    let mut chunks = create(&cli.output_dir, "chunks.csv")?;
    output::write_chunks_csv(&mut chunks, &result, &loaded.echo)?;
    finish(chunks)?;
    let mut summary = create(&cli.output_dir, "summary.txt")?;
    output::write_summary(&mut summary, &result, &loaded.echo)?;
    finish(summary)?;

    print!("{}", result.metrics.to_summary());
    Ok(())
}

fn sweep(cli: &Cli, loaded: &LoadedConfig) -> Result<()> {
    let base = loaded.sim_config()?;
    let policies = loaded.file.sweep_policies()?;
    let rows = engine::sweep(
        &base,
        &loaded.file.sweep.grid_bps,
        &loaded.file.sweep.seeds,
        &policies,
    )
    .map_err(|e| match e {
        Error::Parameter { name, reason } => Error::Config { key: name, reason },
        other => other,
    })?;
    let means = engine::average_over_seeds(&rows)?;

    let mut out = create(&cli.output_dir, "sweep.csv")?;
    output::write_sweep_csv(&mut out, &rows, &loaded.echo)?;
    finish(out)?;
    let mut out = create(&cli.output_dir, "sweep_mean.csv")?;
    output::write_sweep_mean_csv(&mut out, &means, &loaded.echo)?;
    finish(out)?;
    println!("{} rows, {} averaged", rows.len(), means.len());
    Ok(())
}

fn fig8(cli: &Cli, loaded: &LoadedConfig) -> Result<()> {
    let sim = loaded.sim_config()?;
    let dash = loaded.file.dash_spec()?;
    let rtrc = loaded.file.fig8_policy()?;
    let points = engine::fig8_scenario(&sim, &dash, &rtrc)?;

    let mut out = create(&cli.output_dir, "fig8.csv")?;
    output::write_fig8_csv(&mut out, &points, &loaded.echo)?;
    finish(out)?;
    for p in &points {
        println!(
            "{:<16} success={:.4} efficiency={:.4}",
            p.label, p.chunk_success_rate, p.bandwidth_efficiency
        );
    }
    Ok(())
}

fn gen_trace(cli: &Cli, loaded: &LoadedConfig, out: Option<&Path>) -> Result<()> {
    let sim = loaded.sim_config()?;
    let SourceSpec::Synthetic(params) = &sim.source else {
        return Err(Error::Config {
            key: "source.kind".into(),
            reason: "gen-trace needs a synthetic source".into(),
        });
    };
    let profiles = (0..sim.n_chunks)
        .map(|i| {
            let mut r = rng::chunk_rng(sim.seed, Stream::Source, i as u64);
            synth_chunk_profile(&mut r, params, i)
        })
        .collect::<Result<Vec<_>>>()?;

    let path = out.map_or_else(|| cli.output_dir.join("trace.csv"), Path::to_path_buf);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(&path)?);
    output::write_trace_with_echo(&mut w, &profiles, &loaded.echo)?;
    finish(w)?;
    println!("{}: {} chunks", path.display(), profiles.len());
    Ok(())
}
