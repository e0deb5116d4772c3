use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use streamvc::audio::{fbank, read_mel, read_wav, write_mel, write_wav};
use streamvc::masking::{build_chunk_mask, ChunkSpec};
use streamvc::model_io::{
    load, random_init, save, validate_chunk_ms, ModelConfig, RuntimeConfig, VocoderMode,
    DEFAULT_HISTORY_CHUNKS, SAMPLE_RATE,
};
use streamvc::pipeline::{bench, convert, BenchOptions, Engine};
use streamvc::pqmf::{design_bank, PqmfParams};
use streamvc::vocoder::{generate_chunked, CrossfadeSpec, Vocoder};

/// Streaming voice conversion: chunked acoustic model plus multi-band vocoder.
#[derive(Parser, Debug)]
#[command(name = "streamvc", version)]
struct Cli {
    /// Seed for every random choice (weights, synthetic audio).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a randomly initialised model file.
    InitModel(InitModelArgs),
    /// Extract 80-bin log-mel fbank frames from a WAV into a mel file.
    Fbank {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stream a WAV through the full pipeline and print a latency report.
    Convert(ConvertArgs),
    /// Synthesize a mel file with the vocoder only.
    Vocode(VocodeArgs),
    /// Print a chunk attention mask as 0/1 rows.
    Mask {
        /// Frames per chunk.
        #[arg(long)]
        chunk: usize,
        #[arg(long)]
        num_chunks: usize,
        /// Earlier chunks visible to each query; omit for unlimited.
        #[arg(long)]
        history: Option<usize>,
    },
    /// Design a PQMF bank and print it as JSON.
    DesignPqmf(PqmfArgs),
    /// Time each stage on synthetic audio for several chunk sizes.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct ModelArg {
    /// Model file.
    #[arg(long, env = "STREAMVC_MODEL")]
    model: PathBuf,
}

#[derive(Args, Debug)]
struct InitModelArgs {
    #[arg(long)]
    out: PathBuf,
    /// Architecture preset.
    #[arg(long, default_value = "default", value_parser = ["default", "tiny"])]
    preset: String,
    /// Architecture config as JSON, overriding --preset.
    #[arg(long, env = "STREAMVC_CONFIG")]
    config: Option<PathBuf>,
    /// Use same-padded (non-causal) vocoder convolutions.
    #[arg(long)]
    non_causal_vocoder: bool,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    speaker: usize,
    /// Chunk length in ms, a multiple of 40.
    #[arg(long, default_value_t = 160)]
    chunk_ms: usize,
    /// Earlier chunks kept for attention; omit for the default.
    #[arg(long)]
    history: Option<usize>,
    /// Keep every earlier chunk.
    #[arg(long, conflicts_with = "history")]
    unlimited_history: bool,
    /// mbs_streaming or mb_offline_crossfade.
    #[arg(long, default_value = "mbs_streaming")]
    mode: VocoderMode,
    /// Hann window length (odd) for mb_offline_crossfade.
    #[arg(long, default_value_t = 161)]
    crossfade_n: usize,
}

#[derive(Args, Debug)]
struct VocodeArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Mel file: u32 frames, u32 bins (80), then f32 values.
    #[arg(long)]
    mel: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "mbs_streaming")]
    mode: VocoderMode,
    /// Hann window length (odd); 0 joins chunks without overlap.
    #[arg(long, default_value_t = 161)]
    crossfade_n: usize,
    /// Mel frames per call (streaming) or per chunk (crossfade).
    #[arg(long, default_value_t = 16)]
    chunk_frames: usize,
}

#[derive(Args, Debug)]
struct PqmfArgs {
    #[arg(long)]
    bands: Option<usize>,
    #[arg(long)]
    taps: Option<usize>,
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Comma separated chunk sizes in ms.
    #[arg(long, value_delimiter = ',', default_value = "40,80,120,160,200")]
    chunk_ms: Vec<usize>,
    /// Seconds of synthetic input per chunk size.
    #[arg(long, default_value_t = 5.0)]
    seconds: f64,
    #[arg(long, default_value = "cpu")]
    device_label: String,
    #[arg(long, default_value_t = DEFAULT_HISTORY_CHUNKS)]
    history: usize,
}

fn load_engine(path: &Path) -> Result<Engine> {
    let model = load(path).with_context(|| format!("loading model {}", path.display()))?;
    Ok(Engine::from_model(&model)?)
}

fn init_model(args: InitModelArgs, seed: u64) -> Result<()> {
    let mut config = match &args.config {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<ModelConfig>(&text)
                .with_context(|| format!("parsing {}", p.display()))?
        }
        None if args.preset == "tiny" => ModelConfig::tiny(),
        None => ModelConfig::default(),
    };
    if args.non_causal_vocoder {
        config.vocoder.causal = false;
    }
    config.validate()?;
    let model = random_init(&config, seed)?;
    save(&model, &args.out)?;
    println!(
        "{}",
        serde_json::json!({
            "out": args.out,
            "parameters": model.parameter_count(),
            "seed": seed,
        })
    );
    Ok(())
}

fn cmd_convert(args: ConvertArgs) -> Result<()> {
    validate_chunk_ms(args.chunk_ms)?;
    let engine = load_engine(&args.model.model)?;
    let rt = RuntimeConfig {
        chunk_ms: args.chunk_ms,
        history_chunks: if args.unlimited_history {
            None
        } else {
            Some(args.history.unwrap_or(DEFAULT_HISTORY_CHUNKS))
        },
        speaker_id: args.speaker,
        vocoder_mode: args.mode,
        crossfade_n: args.crossfade_n,
    };
    let input =
        read_wav(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let (audio, report) = convert(&engine, &rt, &input)?;
    write_wav(&args.out, &audio, SAMPLE_RATE)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn cmd_vocode(args: VocodeArgs) -> Result<()> {
    if args.chunk_frames == 0 {
        bail!("--chunk-frames must be at least 1");
    }
    let model = load(&args.model.model)
        .with_context(|| format!("loading model {}", args.model.model.display()))?;
    let vocoder = Vocoder::from_model(&model)?;
    let mel = read_mel(&args.mel).with_context(|| format!("reading {}", args.mel.display()))?;
    if mel.rows() == 0 {
        return Err(streamvc::Error::EmptyInput).context("mel file has no frames");
    }
    let audio = match args.mode {
        VocoderMode::MbsStreaming => {
            let mut session = vocoder.session()?;
            let mut out = Vec::with_capacity(mel.rows() * vocoder.hop());
            for start in (0..mel.rows()).step_by(args.chunk_frames) {
                let end = (start + args.chunk_frames).min(mel.rows());
                out.extend(session.push(&mel.slice_rows(start, end))?);
            }
            out
        }
        VocoderMode::MbOfflineCrossfade => {
            let spec = if args.crossfade_n == 0 {
                CrossfadeSpec::disabled()
            } else {
                CrossfadeSpec::new(args.crossfade_n)?
            };
            generate_chunked(&vocoder, &mel, args.chunk_frames, &spec)?
        }
    };
    write_wav(&args.out, &audio, SAMPLE_RATE)?;
    println!(
        "{}",
        serde_json::json!({ "frames": mel.rows(), "samples": audio.len() })
    );
    Ok(())
}

fn cmd_design_pqmf(args: PqmfArgs) -> Result<()> {
    let d = PqmfParams::default();
    let params = PqmfParams {
        num_bands: args.bands.unwrap_or(d.num_bands),
        taps: args.taps.unwrap_or(d.taps),
        cutoff_ratio: args.cutoff.unwrap_or(d.cutoff_ratio),
        kaiser_beta: args.beta.unwrap_or(d.kaiser_beta),
    };
    let bank = design_bank(params)?;
    let json = serde_json::to_string_pretty(&bank.to_artifact())?;
    match args.out {
        Some(p) => std::fs::write(&p, json).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs, seed: u64) -> Result<()> {
    if args.seconds.is_nan() || args.seconds <= 0.0 {
        bail!("--seconds must be positive, got {}", args.seconds);
    }
    for &c in &args.chunk_ms {
        validate_chunk_ms(c)?;
    }
    let engine = load_engine(&args.model.model)?;
    let label = args
        .model
        .model
        .file_stem()
        .map_or_else(|| "model".to_string(), |s| s.to_string_lossy().into_owned());
    let out = bench(
        &engine,
        &BenchOptions {
            chunk_ms: args.chunk_ms,
            seconds: args.seconds,
            device_label: args.device_label,
            model_label: label,
            seed,
            history_chunks: Some(args.history),
        },
    )?;
    for r in &out.records {
        println!("{}", serde_json::to_string(r)?);
    }
    println!("{}", serde_json::to_string(&out.vocoder)?);
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::InitModel(a) => init_model(a, cli.seed),
        Command::Fbank { input, out } => {
            let samples =
                read_wav(&input).with_context(|| format!("reading {}", input.display()))?;
            let feats = fbank(&samples);
            write_mel(&out, &feats)?;
            println!("{}", serde_json::json!({ "frames": feats.rows() }));
            Ok(())
        }
        Command::Convert(a) => cmd_convert(a),
        Command::Vocode(a) => cmd_vocode(a),
        Command::Mask {
            chunk,
            num_chunks,
            history,
        } => {
            let mask = build_chunk_mask(ChunkSpec::new(chunk, num_chunks, history))?;
            print!("{}", mask.to_text());
            Ok(())
        }
        Command::DesignPqmf(a) => cmd_design_pqmf(a),
        Command::Bench(a) => cmd_bench(a, cli.seed),
    }
}
