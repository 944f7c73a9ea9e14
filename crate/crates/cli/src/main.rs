//! `centaur`: process WAV files, report responses and timings, or run the
//! local HTTP service.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use centaur_client::{BenchOptions, Client};
use centaur_core::analysis::{
    benchmark, log_frequencies, pedal_response, tone_response, BenchReport, BenchSettings, BENCH_BLOCK_SIZES,
    MIN_BENCH_REPETITIONS, MIN_BENCH_SECONDS, RESPONSE_POINTS, RESPONSE_RANGE,
};
use centaur_core::api::ParamsUpdate;
use centaur_core::config::ComponentConfig;
use centaur_core::pedal::{Engine, Pedal, PedalParams};
use centaur_core::render::render_wav;
use centaur_core::rnn::{ModelBank, MODEL_SAMPLE_RATE};

mod exit;

use exit::Failure;

#[derive(Debug, Parser)]
#[command(name = "centaur", version, about = "Klon Centaur emulation with circuit and neural engines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Process a WAV file. Stereo input is averaged to mono; the output
    /// keeps the input's sample rate and encoding.
    Process {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        pedal: PedalArgs,
        #[command(flatten)]
        setup: SetupArgs,
    },
    /// Write the tone stage's digital and analog magnitude responses as CSV.
    Response {
        output: PathBuf,
        /// Treble settings to report.
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 1.0])]
        trebles: Vec<f64>,
        /// Also report the whole pedal's small-signal response per treble.
        #[arg(long)]
        with_chain: bool,
        #[command(flatten)]
        pedal: PedalArgs,
        #[command(flatten)]
        setup: SetupArgs,
    },
    /// Time both engines over the block sizes and print a table.
    Bench {
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the report as JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Seconds of audio per measurement.
        #[arg(long, default_value_t = MIN_BENCH_SECONDS)]
        duration: f64,
        #[arg(long, default_value_t = MIN_BENCH_REPETITIONS)]
        repetitions: usize,
        #[arg(long, value_delimiter = ',')]
        blocks: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        engines: Option<Vec<Engine>>,
        #[command(flatten)]
        setup: SetupArgs,
    },
    /// Run the HTTP service on localhost.
    Serve {
        #[arg(long, default_value_t = centaur_server::DEFAULT_PORT)]
        port: u16,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct PedalArgs {
    #[arg(long, default_value_t = Engine::Traditional)]
    engine: Engine,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    gain: f64,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    treble: f64,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    level: f64,
}

impl PedalArgs {
    fn params(&self) -> Result<PedalParams> {
        let p = PedalParams {
            gain: self.gain,
            treble: self.treble,
            level: self.level,
            engine: self.engine,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Args)]
struct SetupArgs {
    /// Component overrides (`NAME = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Neural weight bank (JSON).
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Use a running service at this URL instead of processing locally.
    #[arg(long, conflicts_with_all = ["config", "weights"])]
    server: Option<String>,
}

struct Setup {
    config: ComponentConfig,
    bank: ModelBank,
}

fn load_setup(config: Option<&Path>, weights: Option<&Path>) -> Result<Setup> {
    let config = match config {
        Some(path) => ComponentConfig::canonical_with_overrides(path)
            .with_context(|| format!("loading component config {}", path.display()))?,
        None => ComponentConfig::canonical(),
    };
    let bank = match weights {
        Some(path) => ModelBank::load(path).with_context(|| format!("loading weights {}", path.display()))?,
        None => ModelBank::demo(),
    };
    // Catches missing or invalid components before any audio is touched.
    Pedal::with_bank(&config, MODEL_SAMPLE_RATE, bank.clone()).context("component config")?;
    Ok(Setup { config, bank })
}

impl SetupArgs {
    fn local(&self) -> Result<Setup> {
        load_setup(self.config.as_deref(), self.weights.as_deref())
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn cmd_process(input: &Path, output: &Path, pedal: &PedalArgs, setup: &SetupArgs) -> Result<()> {
    let params = pedal.params()?;
    let bytes = std::fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let (wav, peak, clipped) = match &setup.server {
        Some(url) => {
            let client = Client::new(url.clone());
            runtime()?.block_on(async {
                client.set_params(&ParamsUpdate::from(params)).await?;
                let receipt = client.process(bytes).await?;
                let wav = client.result(receipt.id).await?;
                anyhow::Ok((wav, receipt.peak, receipt.clipped))
            })?
        }
        None => {
            let s = setup.local()?;
            let out = render_wav(&bytes, &params, &s.config, &s.bank)?;
            (out.wav, out.peak, out.clipped)
        }
    };
    write_file(output, &wav)?;
    let db = if peak > 0.0 { 20.0 * peak.log10() } else { f64::NEG_INFINITY };
    println!("peak {peak:.6} ({db:.2} dBFS)");
    if clipped > 0 {
        eprintln!("warning: {clipped} samples exceed full scale");
    }
    Ok(())
}

struct ResponseTable {
    frequencies: Vec<f64>,
    /// (header, values) per column after the frequency.
    columns: Vec<(String, Vec<f64>)>,
}

fn cmd_response(output: &Path, trebles: &[f64], with_chain: bool, pedal: &PedalArgs, setup: &SetupArgs) -> Result<()> {
    if trebles.is_empty() {
        bail!(exit::ParamError("at least one treble value is needed".into()));
    }
    let base = pedal.params()?;
    let mut digital = Vec::new();
    let mut analog = Vec::new();
    let mut chain = Vec::new();
    let frequencies;
    match &setup.server {
        Some(url) => {
            let client = Client::new(url.clone());
            let reports = runtime()?.block_on(async {
                client.set_params(&ParamsUpdate::from(base)).await?;
                let mut reports = Vec::new();
                for &t in trebles {
                    reports.push(client.response(Some(t), Some(base.engine)).await?);
                }
                anyhow::Ok(reports)
            })?;
            frequencies = reports[0].chain.frequencies.clone();
            for r in reports {
                digital.push(r.tone_db);
                analog.push(r.tone_analog_db);
                chain.push(r.chain.magnitudes_db);
            }
        }
        None => {
            let s = setup.local()?;
            let fs = MODEL_SAMPLE_RATE;
            frequencies = log_frequencies(RESPONSE_RANGE.0, RESPONSE_RANGE.1, RESPONSE_POINTS);
            for &t in trebles {
                let params = PedalParams { treble: t, ..base };
                params.validate()?;
                let (d, a) = tone_response(&s.config, t, &frequencies, fs)?;
                digital.push(d.magnitudes_db);
                analog.push(a);
                if with_chain {
                    chain.push(pedal_response(&s.config, &s.bank, &params, &frequencies, fs)?.magnitudes_db);
                }
            }
        }
    }
    let mut table = ResponseTable {
        frequencies,
        columns: Vec::new(),
    };
    for (t, d) in trebles.iter().zip(digital) {
        table.columns.push((format!("digital_treble_{t}"), d));
    }
    for (t, a) in trebles.iter().zip(analog) {
        table.columns.push((format!("analog_treble_{t}"), a));
    }
    if with_chain {
        for (t, c) in trebles.iter().zip(chain) {
            table.columns.push((format!("chain_{}_treble_{t}", base.engine), c));
        }
    }
    write_csv(output, &table)?;
    println!("wrote {} frequencies x {} columns to {}", table.frequencies.len(), table.columns.len() + 1, output.display());
    Ok(())
}

fn write_csv(path: &Path, table: &ResponseTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut header = vec!["frequency_hz".to_string()];
    header.extend(table.columns.iter().map(|(h, _)| h.clone()));
    w.write_record(&header)?;
    for (k, f) in table.frequencies.iter().enumerate() {
        let mut row = vec![f.to_string()];
        row.extend(table.columns.iter().map(|(_, v)| v[k].to_string()));
        w.write_record(&row)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    out: Option<&Path>,
    json: Option<&Path>,
    duration: f64,
    repetitions: usize,
    blocks: Option<Vec<usize>>,
    engines: Option<Vec<Engine>>,
    setup: &SetupArgs,
) -> Result<()> {
    let report: BenchReport = match &setup.server {
        Some(url) => {
            let client = Client::new(url.clone());
            let options = BenchOptions {
                duration: Some(duration),
                repetitions: Some(repetitions),
                blocks,
                engines,
            };
            runtime()?.block_on(client.bench(&options))?
        }
        None => {
            let s = setup.local()?;
            let settings = BenchSettings {
                engines: engines.unwrap_or_else(|| Engine::ALL.to_vec()),
                block_sizes: blocks.unwrap_or_else(|| BENCH_BLOCK_SIZES.to_vec()),
                duration_s: duration,
                repetitions,
                fs: MODEL_SAMPLE_RATE,
            };
            if let Some(b) = settings.block_sizes.iter().find(|b| !BENCH_BLOCK_SIZES.contains(b)) {
                bail!(exit::ParamError(format!("block size {b} is not one of {BENCH_BLOCK_SIZES:?}")));
            }
            benchmark(|| Pedal::with_bank(&s.config, settings.fs, s.bank.clone()), &settings)?
        }
    };
    let table = report.to_table();
    match out {
        Some(path) => write_file(path, table.as_bytes())?,
        None => print!("{table}"),
    }
    if let Some(path) = json {
        write_file(path, report.to_json().as_bytes())?;
    }
    Ok(())
}

fn cmd_serve(port: u16, config: Option<&Path>, weights: Option<&Path>) -> Result<()> {
    let setup = load_setup(config, weights)?;
    let service = centaur_server::ServiceConfig {
        components: setup.config,
        bank: setup.bank,
        ..Default::default()
    };
    runtime()?.block_on(async {
        let listener = centaur_server::bind(port)
            .await
            .with_context(|| format!("binding 127.0.0.1:{port}"))?;
        println!("listening on http://{}", listener.local_addr()?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        centaur_server::serve_until(listener, service, shutdown).await?;
        anyhow::Ok(())
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Process {
            input,
            output,
            pedal,
            setup,
        } => cmd_process(&input, &output, &pedal, &setup),
        Command::Response {
            output,
            trebles,
            with_chain,
            pedal,
            setup,
        } => cmd_response(&output, &trebles, with_chain, &pedal, &setup),
        Command::Bench {
            out,
            json,
            duration,
            repetitions,
            blocks,
            engines,
            setup,
        } => cmd_bench(out.as_deref(), json.as_deref(), duration, repetitions, blocks, engines, &setup),
        Command::Serve { port, config, weights } => cmd_serve(port, config.as_deref(), weights.as_deref()),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(Failure::classify(&e).code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
