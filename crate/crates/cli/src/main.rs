mod config;
mod melfile;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adapitch_core::data::{
    generate_toy_corpus, load_checkpoint, load_manifest, save_checkpoint, Checkpoint, CorpusSpec, Example,
    FeatureExtractor, Stage,
};
use adapitch_core::dsp::{
    estimate_pitch, load_wav, parse_pitch_file, save_wav, Lexicon, MelAnalyzer, MelConfig, MelSpectrogram,
    PitchConfig, Vocabulary,
};
use adapitch_core::metrics::{dtw_path, frame_distortion, mel_cepstra, Alignment, MetricReport, PitchComparison};
use adapitch_core::trainer::{
    render_waveform, run_stage1_m2m, run_stage1_t2t, run_stage2, synthesize, ModelContext, StepRecord,
    TrainConfig, TrainObserver,
};
use adapitch_core::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "adapitch", version, about = "Pitch-controllable TTS training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic multi-speaker corpus with exact durations and f0.
    GenCorpus(GenCorpusArgs),
    /// Pretrain the text autoencoder on transcripts only.
    PretrainT2t(PretrainArgs),
    /// Pretrain the mel autoencoder on audio only.
    PretrainM2m(PretrainArgs),
    /// Supervised training with the pretrained parts frozen.
    Train(TrainArgs),
    /// Text to mel (and optionally audio).
    Synth(SynthArgs),
    /// Pitch and spectral metrics between a reference and a hypothesis.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenCorpusArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    utts: usize,
    #[arg(long, default_value_t = 2)]
    speakers: usize,
    #[arg(long, default_value_t = 12)]
    phonemes: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Common {
    /// JSON run config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model size preset: full or desk.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    checkpoint_interval: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Defaults to lexicon.txt next to the manifest.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    t2t: Option<PathBuf>,
    #[arg(long)]
    m2m: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    text: String,
    #[arg(long)]
    speaker: usize,
    #[arg(long)]
    ckpt: PathBuf,
    /// Mel output file.
    #[arg(long)]
    out: PathBuf,
    /// f0 contour (Hz per line, 0 = unvoiced) replacing the predicted pitch.
    #[arg(long)]
    pitch: Option<PathBuf>,
    /// Also render audio with Griffin-Lim.
    #[arg(long)]
    wav: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    gl_iters: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Reference WAV or mel file.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Hypothesis WAV or mel file.
    #[arg(long)]
    hyp: PathBuf,
    /// Align frames with dynamic time warping.
    #[arg(long)]
    dtw: bool,
    /// Write a per-frame `reference<TAB>hypothesis` f0 table.
    #[arg(long)]
    plot_data: Option<PathBuf>,
    /// Report file; printed to stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = adapitch_core::metrics::DEFAULT_GPE_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Failure carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NonFinite(_) => 3,
            Error::Io(_) | Error::Wav(_) | Error::Checkpoint { .. } | Error::Checksum { .. } | Error::VersionMismatch { .. } => 4,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenCorpus(a) => cmd_gen_corpus(a),
        Command::PretrainT2t(a) => cmd_pretrain(a, Stage::T2t),
        Command::PretrainM2m(a) => cmd_pretrain(a, Stage::M2m),
        Command::Train(a) => cmd_train(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn existing(flag: &str, path: Option<PathBuf>) -> std::result::Result<PathBuf, Failure> {
    let path = path.ok_or_else(|| usage(format!("missing required input {flag}")))?;
    if !path.exists() {
        return Err(usage(format!("{flag} {}: no such file", path.display())));
    }
    Ok(path)
}

fn cmd_gen_corpus(a: GenCorpusArgs) -> CmdResult {
    let mut run = RunConfig::default();
    let spec = CorpusSpec {
        num_utterances: a.utts,
        num_speakers: a.speakers,
        num_phonemes: a.phonemes,
        seed: run.resolve_seed(a.seed, CorpusSpec::default().seed)?,
        ..CorpusSpec::default()
    };
    spec.validate()?;
    let (corpus, files) = generate_toy_corpus(&spec, &a.out)?;
    let mut text = serde_json::to_string_pretty(&spec).map_err(Error::from)?;
    text.push('\n');
    std::fs::write(a.out.join("corpus.json"), text).map_err(Error::from)?;
    println!(
        "{} utterances, {} speakers -> {}",
        corpus.utterances.len(),
        spec.num_speakers,
        files.manifest.display()
    );
    Ok(())
}

/// Resolves the shared training settings and prepares the output directory.
fn resolve_common(c: &Common, run: &mut RunConfig, stage: Stage) -> std::result::Result<(TrainConfig, PathBuf), Failure> {
    if let Some(s) = c.steps {
        run.train.max_steps = Some(s);
    }
    if let Some(b) = c.batch_size {
        run.train.batch_size = Some(b);
    }
    if let Some(lr) = c.lr {
        run.train.learning_rate = Some(lr);
    }
    if let Some(i) = c.checkpoint_interval {
        run.train.checkpoint_interval = Some(i);
    }
    if let Some(o) = &c.out {
        run.paths.out = Some(o.clone());
    }
    let defaults = TrainConfig::for_stage(stage);
    let t = &mut run.train;
    let cfg = TrainConfig {
        max_steps: *t.max_steps.get_or_insert(defaults.max_steps),
        batch_size: *t.batch_size.get_or_insert(defaults.batch_size),
        learning_rate: *t.learning_rate.get_or_insert(defaults.learning_rate),
        checkpoint_interval: *t.checkpoint_interval.get_or_insert(0),
        seed: run.resolve_seed(c.seed, 0)?,
        weights: run.weights,
        ..defaults
    };
    cfg.validate()?;
    let out = run.paths.out.clone().ok_or_else(|| usage("missing required output --out"))?;
    std::fs::create_dir_all(&out).map_err(Error::from)?;
    Ok((cfg, out))
}

/// Writes the metrics log and periodic checkpoints into the output directory.
struct RunObserver {
    log: BufWriter<File>,
    out: PathBuf,
    stage: Stage,
    max_steps: u64,
}

impl RunObserver {
    fn new(out: &Path, stage: Stage, max_steps: u64) -> Result<Self> {
        Ok(Self {
            log: BufWriter::new(File::create(out.join("metrics.jsonl"))?),
            out: out.to_path_buf(),
            stage,
            max_steps,
        })
    }
}

impl TrainObserver for RunObserver {
    fn on_step(&mut self, r: &StepRecord) -> Result<()> {
        serde_json::to_writer(&mut self.log, r)?;
        self.log.write_all(b"\n")?;
        if r.step.is_multiple_of(100) || r.step == self.max_steps {
            log::info!("{} step {}/{}: loss {:.6}", self.stage, r.step, self.max_steps, r.total);
        }
        Ok(())
    }

    fn on_checkpoint(&mut self, c: &Checkpoint) -> Result<()> {
        self.log.flush()?;
        let name = if c.meta.step == self.max_steps {
            format!("{}.ckpt", self.stage)
        } else {
            format!("{}-{:06}.ckpt", self.stage, c.meta.step)
        };
        save_checkpoint(c, self.out.join(name))
    }
}

fn extractor(mel: MelConfig, pitch: PitchConfig, lexicon: Lexicon, vocabulary: Vocabulary) -> Result<FeatureExtractor> {
    Ok(FeatureExtractor {
        mel: MelAnalyzer::new(mel)?,
        pitch,
        lexicon,
        vocabulary,
    })
}

fn prepare(fx: &FeatureExtractor, manifest: &Path, stage: Stage) -> Result<Vec<Example>> {
    let entries = load_manifest(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    fx.prepare(&entries, base, stage)
}

fn cmd_pretrain(a: PretrainArgs, stage: Stage) -> CmdResult {
    let mut run = RunConfig::load(a.common.config.as_deref())?;
    let manifest = existing("--manifest", a.manifest.or(run.paths.manifest.clone()))?;
    let lexicon_path = a
        .lexicon
        .or(run.paths.lexicon.clone())
        .unwrap_or_else(|| manifest.with_file_name("lexicon.txt"));
    let lexicon_path = existing("--lexicon", Some(lexicon_path))?;
    run.paths.manifest = Some(manifest.clone());
    run.paths.lexicon = Some(lexicon_path.clone());
    let mut model = run.resolve_model(a.common.preset.as_deref())?;
    let (cfg, out) = resolve_common(&a.common, &mut run, stage)?;

    let lexicon = Lexicon::load(&lexicon_path)?;
    let vocabulary = Vocabulary::from_lexicon(&lexicon);
    if vocabulary.len() > model.vocab_size {
        log::info!("growing the token table from {} to {}", model.vocab_size, vocabulary.len());
        model.vocab_size = vocabulary.len();
        run.model = Some(model.clone());
    }
    model.n_mels = run.mel.n_mels;
    run.model = Some(model.clone());
    let ctx = ModelContext::new(model, run.mel, run.pitch, lexicon.clone());
    ctx.validate()?;
    run.archive(&out.join("config.json"))?;

    let fx = extractor(run.mel, run.pitch, lexicon, vocabulary)?;
    let examples = prepare(&fx, &manifest, stage)?;
    let mut obs = RunObserver::new(&out, stage, cfg.max_steps)?;
    let outcome = if stage == Stage::T2t {
        let seqs: Vec<Vec<u32>> = examples.into_iter().map(|e| e.tokens).collect();
        run_stage1_t2t(&seqs, &ctx, &cfg, &mut obs)?
    } else {
        run_stage1_m2m(&examples, &ctx, &cfg, &mut obs)?
    };
    println!("{}", out.join(format!("{stage}.ckpt")).display());
    log::info!("final loss {:.6}", outcome.history.last().map_or(f64::NAN, |r| r.total));
    Ok(())
}

fn cmd_train(a: TrainArgs) -> CmdResult {
    let mut run = RunConfig::load(a.common.config.as_deref())?;
    let t2t_path = existing("--t2t", a.t2t.or(run.paths.t2t.clone()))?;
    let m2m_path = existing("--m2m", a.m2m.or(run.paths.m2m.clone()))?;
    let manifest = existing("--manifest", a.manifest.or(run.paths.manifest.clone()))?;
    run.paths.t2t = Some(t2t_path.clone());
    run.paths.m2m = Some(m2m_path.clone());
    run.paths.manifest = Some(manifest.clone());
    let t2t = load_checkpoint(&t2t_path)?;
    let m2m = load_checkpoint(&m2m_path)?;
    run.model = Some(t2t.meta.model.clone());
    run.mel = t2t.meta.mel;
    run.pitch = t2t.meta.pitch;
    let (cfg, out) = resolve_common(&a.common, &mut run, Stage::Supervised)?;
    run.archive(&out.join("config.json"))?;

    let meta = &t2t.meta;
    let fx = extractor(meta.mel, meta.pitch, meta.lexicon.clone(), meta.vocabulary.clone())?;
    let examples = prepare(&fx, &manifest, Stage::Supervised)?;
    let mut obs = RunObserver::new(&out, Stage::Supervised, cfg.max_steps)?;
    let outcome = run_stage2(&examples, &t2t, &m2m, &cfg, &mut obs)?;
    println!("{}", out.join(format!("{}.ckpt", Stage::Supervised)).display());
    log::info!("final loss {:.6}", outcome.history.last().map_or(f64::NAN, |r| r.total));
    Ok(())
}

#[derive(Serialize)]
struct SynthRecord<'a> {
    text: &'a str,
    speaker: usize,
    checkpoint: &'a Path,
    pitch: Option<&'a Path>,
    wav: Option<&'a Path>,
    gl_iters: usize,
    seed: u64,
    frames: usize,
    durations: &'a [usize],
}

fn cmd_synth(a: SynthArgs) -> CmdResult {
    let ckpt = existing("--ckpt", Some(a.ckpt.clone()))?;
    let contour = match &a.pitch {
        Some(p) => {
            let p = existing("--pitch", Some(p.clone()))?;
            Some(parse_pitch_file(&std::fs::read_to_string(p).map_err(Error::from)?)?)
        }
        None => None,
    };
    let seed = RunConfig::default().resolve_seed(a.seed, adapitch_core::dsp::DEFAULT_PHASE_SEED)?;
    let checkpoint = load_checkpoint(&ckpt)?;
    let out = synthesize(&checkpoint, &a.text, a.speaker, contour.as_deref())?;
    melfile::write(&a.out, &out.mel)?;
    if let Some(w) = &a.wav {
        save_wav(w, &render_waveform(&out.mel, a.gl_iters, seed)?)?;
    }
    let record = SynthRecord {
        text: &a.text,
        speaker: a.speaker,
        checkpoint: &ckpt,
        pitch: a.pitch.as_deref(),
        wav: a.wav.as_deref(),
        gl_iters: a.gl_iters,
        seed,
        frames: out.mel.frames,
        durations: &out.durations,
    };
    let mut text = serde_json::to_string_pretty(&record).map_err(Error::from)?;
    text.push('\n');
    let mut archive = a.out.clone().into_os_string();
    archive.push(".json");
    std::fs::write(PathBuf::from(archive), text).map_err(Error::from)?;
    println!("{}", out.mel.frames);
    Ok(())
}

/// Mel and, for audio inputs, pitch of one evaluation input.
struct Analysed {
    mel: MelSpectrogram,
    f0: Option<Vec<f64>>,
}

fn analyse(path: &Path, mel_cfg: MelConfig, pitch_cfg: PitchConfig) -> Result<Analysed> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(melfile::MEL_MAGIC) {
        return Ok(Analysed {
            mel: melfile::decode(&bytes, mel_cfg)?,
            f0: None,
        });
    }
    let wave = load_wav(path)?;
    let mel = MelAnalyzer::new(mel_cfg)?.analyze(&wave)?;
    let pitch = estimate_pitch(&wave, &pitch_cfg)?;
    let f0 = pitch
        .f0
        .iter()
        .zip(&pitch.voiced)
        .map(|(&f, &v)| if v { f as f64 } else { 0.0 })
        .collect();
    Ok(Analysed { mel, f0: Some(f0) })
}

#[derive(Serialize)]
struct EvalRecord<'a> {
    reference: &'a Path,
    hypothesis: &'a Path,
    reference_frames: usize,
    hypothesis_frames: usize,
    #[serde(flatten)]
    report: MetricReport,
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let run = RunConfig::load(a.config.as_deref())?;
    let ref_path = existing("--ref", Some(a.reference.clone()))?;
    let hyp_path = existing("--hyp", Some(a.hyp.clone()))?;
    let r = analyse(&ref_path, run.mel, run.pitch)?;
    let h = analyse(&hyp_path, run.mel, run.pitch)?;
    let (rf, hf) = (r.mel.frames, h.mel.frames);
    if rf != hf && !a.dtw {
        return Err(usage(format!(
            "reference has {rf} frames, hypothesis {hf}; pass --dtw to align them"
        )));
    }
    let align = if a.dtw { Alignment::Dtw } else { Alignment::None };
    let mut report = MetricReport::new().with_mcd(&r.mel, &h.mel, align)?;

    // Frame pairs compared for pitch: identity, or the warping path on cepstra.
    let pairs: Vec<(usize, usize)> = if a.dtw {
        let (rc, hc) = (mel_cepstra(&r.mel, report.cepstral_order)?, mel_cepstra(&h.mel, report.cepstral_order)?);
        let cost: Vec<Vec<f64>> = rc
            .iter()
            .map(|x| hc.iter().map(|y| frame_distortion(x, y)).collect())
            .collect();
        dtw_path(&cost)
    } else {
        (0..rf).map(|t| (t, t)).collect()
    };
    let tracks = match (&r.f0, &h.f0) {
        (Some(rp), Some(hp)) => {
            let rt: Vec<f64> = pairs.iter().map(|&(i, _)| rp.get(i).copied().unwrap_or(0.0)).collect();
            let ht: Vec<f64> = pairs.iter().map(|&(_, j)| hp.get(j).copied().unwrap_or(0.0)).collect();
            let cmp = PitchComparison::from_hz(&rt, &ht)?.with_threshold(a.threshold);
            report = report.with_pitch(&cmp);
            Some((rt, ht))
        }
        _ => None,
    };
    if let Some(p) = &a.plot_data {
        let (rt, ht) = tracks.ok_or_else(|| usage("--plot-data needs audio for both inputs"))?;
        let mut table = String::new();
        for (x, y) in rt.iter().zip(&ht) {
            table.push_str(&format!("{x:.3}\t{y:.3}\n"));
        }
        std::fs::write(p, table).map_err(Error::from)?;
    }
    let record = EvalRecord {
        reference: &ref_path,
        hypothesis: &hyp_path,
        reference_frames: rf,
        hypothesis_frames: hf,
        report,
    };
    let line = serde_json::to_string(&record).map_err(Error::from)?;
    match &a.out {
        Some(path) => std::fs::write(path, format!("{line}\n")).map_err(Error::from)?,
        None => println!("{line}"),
    }
    Ok(())
}
