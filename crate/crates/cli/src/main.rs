use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};
use rayon::prelude::*;
use serde::Serialize;
use walkdir::WalkDir;

use spikecodec::lif_probe::{free_potential, trace_similarity, LifParams};
use spikecodec::metrics::{pesq_external, rmse, sdr_db, spike_reduction, MetricsReport, PesqOutcome};
use spikecodec::spike::write_events_jsonl;
use spikecodec::{
    read_spikes, read_wav, write_spikes, write_wav, AudioSignal, Codec, CodecConfig, Encoding, MaskMode,
};

#[derive(Parser)]
#[command(name = "spikecodec", version, about = "Perceptually masked spike coding of speech")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a WAV file into a spike file.
    Encode {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write the events as JSON lines.
        #[arg(long)]
        jsonl: Option<PathBuf>,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Decode a spike file back to audio.
    Decode {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare a reference WAV with a decoded one and print a JSON report.
    Metrics {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        decoded: PathBuf,
        /// Unmasked spike file, for the reduction figure.
        #[arg(long, requires = "masked")]
        raw: Option<PathBuf>,
        #[arg(long, requires = "raw")]
        masked: Option<PathBuf>,
        /// External PESQ program, called as `tool <reference> <decoded>`.
        #[arg(long)]
        pesq_tool: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Dump the filter bank, spectrogram, masks and masker map as CSV files.
    MaskInfo {
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Drive a random LIF neuron with masked and unmasked spikes.
    Probe {
        input: PathBuf,
        /// CSV trace output.
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        dt_ms: f64,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Encode every WAV file under a directory.
    Batch {
        input_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        codec: CodecArgs,
    },
}

#[derive(Args, Clone)]
struct CodecArgs {
    /// JSON config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Keep every spike.
    #[arg(long, conflicts_with = "random_mask")]
    no_mask: bool,
    /// Drop spikes at random with this probability instead of masking.
    #[arg(long, value_name = "RATE")]
    random_mask: Option<f64>,
    /// Overrides the config's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl CodecArgs {
    /// Config for a signal at `sample_rate_hz`. Without a config file the
    /// defaults are adapted to that rate.
    fn config(&self, sample_rate_hz: u32) -> Result<CodecConfig> {
        let mut config = load_config(self.config.as_deref(), sample_rate_hz)?;
        if let Some(seed) = self.seed {
            config.rng_seed = seed;
        }
        Ok(config)
    }

    fn mode(&self, config: &CodecConfig) -> MaskMode {
        match (self.no_mask, self.random_mask) {
            (true, _) => MaskMode::None,
            (false, Some(rate)) => MaskMode::Random {
                rate,
                seed: config.rng_seed,
            },
            (false, None) => MaskMode::Perceptual,
        }
    }

    fn encode(&self, signal: &AudioSignal) -> Result<(CodecConfig, Encoding)> {
        let config = self.config(signal.sample_rate_hz())?;
        let mode = self.mode(&config);
        let codec = Codec::new(config.clone())?;
        Ok((config, codec.encode(signal, mode)?))
    }
}

fn load_config(path: Option<&Path>, sample_rate_hz: u32) -> Result<CodecConfig> {
    match path {
        Some(p) => Ok(CodecConfig::from_json_file(p)?),
        None => Ok(CodecConfig::for_sample_rate(sample_rate_hz)),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(value: &T, output: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match output {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_encode(input: &Path, output: &Path, jsonl: Option<&Path>, args: &CodecArgs) -> Result<()> {
    let signal = read_wav(input)?;
    let (_, enc) = args.encode(&signal)?;
    write_spikes(output, &enc.pattern)?;
    if let Some(p) = jsonl {
        let mut w = create(p)?;
        write_events_jsonl(&mut w, &enc.pattern)?;
        w.flush()?;
    }
    let reduction = enc.reduction_pct().map_or("n/a".to_string(), |r| format!("{r:.1}%"));
    info!(
        "{}: {} spikes of {} kept (reduction {reduction})",
        input.display(),
        enc.pattern.len(),
        enc.raw.len()
    );
    Ok(())
}

fn cmd_decode(input: &Path, output: &Path, config: Option<&Path>) -> Result<()> {
    let pattern = read_spikes(input)?;
    let codec = Codec::new(load_config(config, pattern.sample_rate_hz())?)?;
    let audio = codec.decode(&pattern)?;
    write_wav(output, &audio)?;
    info!("{}: {} samples written", output.display(), audio.len());
    Ok(())
}

fn cmd_metrics(
    reference: &Path,
    decoded: &Path,
    spikes: Option<(&Path, &Path)>,
    pesq_tool: Option<&Path>,
    output: Option<&Path>,
) -> Result<()> {
    let x = read_wav(reference)?;
    let y = read_wav(decoded)?;
    let reduction_pct = match spikes {
        Some((raw, masked)) => Some(spike_reduction(&read_spikes(raw)?, &read_spikes(masked)?)?),
        None => None,
    };
    let pesq = pesq_tool.and_then(|tool| match pesq_external(reference, decoded, tool) {
        PesqOutcome::Score(s) => Some(s),
        PesqOutcome::Unavailable(why) => {
            warn!("PESQ unavailable: {why}");
            None
        }
    });
    let report = MetricsReport {
        rmse: rmse(&x, &y)?,
        sdr_db: sdr_db(&x, &y)?,
        reduction_pct,
        pesq,
    };
    write_json(&report, output)
}

fn cmd_mask_info(input: &Path, out_dir: &Path, args: &CodecArgs) -> Result<()> {
    let signal = read_wav(input)?;
    let config = args.config(signal.sample_rate_hz())?;
    let codec = Codec::new(config)?;
    let enc = codec.encode(&signal, MaskMode::Perceptual)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;

    let mut w = create(&out_dir.join("filters.csv"))?;
    codec.bank().write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&out_dir.join("spectrogram.csv"))?;
    enc.spectrogram.write_csv(&mut w)?;
    w.flush()?;
    for (name, levels) in [
        ("simultaneous_mask.csv", &enc.masks.simultaneous),
        ("temporal_mask.csv", &enc.masks.temporal),
        ("combined_mask.csv", &enc.masks.combined),
    ] {
        let mut w = create(&out_dir.join(name))?;
        levels.write_csv(&mut w)?;
        w.flush()?;
    }
    let mut w = create(&out_dir.join("phi.csv"))?;
    enc.masks.map.write_csv(&mut w)?;
    w.flush()?;
    info!(
        "{}: {:.1}% of bins kept by the masker map",
        input.display(),
        100.0 * enc.masks.map.kept_fraction()
    );
    Ok(())
}

#[derive(Serialize)]
struct ProbeReport {
    similarity: f64,
    degenerate: bool,
    raw_spikes: usize,
    masked_spikes: usize,
}

fn cmd_probe(input: &Path, output: &Path, dt_ms: f64, args: &CodecArgs) -> Result<()> {
    let signal = read_wav(input)?;
    let (config, enc) = args.encode(&signal)?;
    let params = LifParams::random(enc.raw.geometry().num_neurons(), config.rng_seed);
    let full = free_potential(&enc.raw, &params, dt_ms)?;
    let kept = free_potential(&enc.pattern, &params, dt_ms)?;
    let mut w = create(output)?;
    writeln!(w, "time_ms,unmasked,masked")?;
    for (i, (a, b)) in full.iter().zip(&kept).enumerate() {
        writeln!(w, "{},{a},{b}", i as f64 * dt_ms)?;
    }
    w.flush()?;
    let s = trace_similarity(&full, &kept)?;
    write_json(
        &ProbeReport {
            similarity: s.value,
            degenerate: s.degenerate,
            raw_spikes: enc.raw.len(),
            masked_spikes: enc.pattern.len(),
        },
        None,
    )
}

#[derive(Serialize)]
struct ManifestItem {
    path: String,
    label: String,
    num_spikes: usize,
    duration_us: u32,
    reduction_pct: Option<f64>,
}

#[derive(Serialize)]
struct Manifest {
    config: serde_json::Value,
    items: Vec<ManifestItem>,
}

/// Filename token before the first underscore.
fn label_of(path: &Path) -> String {
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    name.split('_').next().unwrap_or_default().to_string()
}

fn cmd_batch(input_dir: &Path, out_dir: &Path, jobs: Option<usize>, args: &CodecArgs) -> Result<()> {
    if !input_dir.is_dir() {
        bail!("no such directory: {}", input_dir.display());
    }
    let mut inputs = Vec::new();
    for entry in WalkDir::new(input_dir).sort_by_file_name() {
        let entry = entry?;
        let is_wav = entry.path().extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if entry.file_type().is_file() && is_wav {
            inputs.push(entry.into_path());
        }
    }
    std::fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;

    let run = |path: &PathBuf| -> Result<ManifestItem> {
        let signal = read_wav(path)?;
        let (_, enc) = args.encode(&signal)?;
        let rel = path.strip_prefix(input_dir).unwrap_or(path);
        let spk = out_dir.join(rel).with_extension("spk");
        if let Some(parent) = spk.parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_spikes(&spk, &enc.pattern)?;
        Ok(ManifestItem {
            path: rel.to_string_lossy().into_owned(),
            label: label_of(path),
            num_spikes: enc.pattern.len(),
            duration_us: enc.pattern.duration_us(),
            reduction_pct: enc.reduction_pct(),
        })
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build()?;
    let results: Vec<Result<ManifestItem>> = pool.install(|| inputs.par_iter().map(run).collect());

    let mut items = Vec::new();
    let mut failures = 0;
    for (path, r) in inputs.iter().zip(results) {
        match r {
            Ok(item) => items.push(item),
            Err(e) => {
                failures += 1;
                error!("{}: {e:#}", path.display());
            }
        }
    }
    // The default config goes in the manifest when none was given.
    let config = args.config(CodecConfig::default().sample_rate_hz)?;
    write_json(
        &Manifest {
            config: config.to_json_value(),
            items,
        },
        Some(&out_dir.join("manifest.json")),
    )?;
    info!("{} of {} files encoded", inputs.len() - failures, inputs.len());
    if failures > 0 {
        bail!("{failures} of {} files failed", inputs.len());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Encode {
            input,
            output,
            jsonl,
            codec,
        } => cmd_encode(&input, &output, jsonl.as_deref(), &codec),
        Command::Decode { input, output, config } => cmd_decode(&input, &output, config.as_deref()),
        Command::Metrics {
            reference,
            decoded,
            raw,
            masked,
            pesq_tool,
            output,
        } => {
            let spikes = raw.as_deref().zip(masked.as_deref());
            cmd_metrics(&reference, &decoded, spikes, pesq_tool.as_deref(), output.as_deref())
        }
        Command::MaskInfo { input, out_dir, codec } => cmd_mask_info(&input, &out_dir, &codec),
        Command::Probe {
            input,
            output,
            dt_ms,
            codec,
        } => cmd_probe(&input, &output, dt_ms, &codec),
        Command::Batch {
            input_dir,
            out_dir,
            jobs,
            codec,
        } => cmd_batch(&input_dir, &out_dir, jobs, &codec),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spikecodec: {e:#}");
            ExitCode::FAILURE
        }
    }
}
