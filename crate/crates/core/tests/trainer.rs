use std::sync::OnceLock;

use adapitch_core::autodiff::Graph;
use adapitch_core::config::prefix;
use adapitch_core::data::*;
use adapitch_core::dsp::{Lexicon, MelAnalyzer, MelConfig, PitchConfig, Vocabulary, PAD};
use adapitch_core::trainer::*;
use adapitch_core::{Error, ModelConfig};

struct Fixture {
    ctx: ModelContext,
    examples: Vec<Example>,
    texts: Vec<String>,
}

fn small_model(vocab: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab,
        embed_dim: 8,
        text_lstm_hidden: 4,
        text_decoder_hidden: 6,
        mel_channels: vec![2, 2, 2],
        latent_dim: 8,
        mel_decoder_layers: 1,
        mel_ffn_hidden: 8,
        pitch_dim: 8,
        pitch_layers: 1,
        pitch_ffn_hidden: 8,
        speaker_dim: 4,
        pitch_embed_dim: 4,
        pitch_bins: 8,
        duration_hidden: 8,
        ..ModelConfig::default()
    }
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let corpus = build_toy_corpus(&CorpusSpec {
            num_utterances: 6,
            seed: 21,
            ..CorpusSpec::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (_, files) = generate_toy_corpus(&corpus.spec, dir.path()).unwrap();
        let entries = load_manifest(&files.manifest).unwrap();
        let vocab = Vocabulary::from_lexicon(&corpus.lexicon);
        let ctx = ModelContext::new(
            small_model(vocab.len()),
            MelConfig::default(),
            PitchConfig::default(),
            corpus.lexicon.clone(),
        );
        let fx = FeatureExtractor {
            mel: MelAnalyzer::new(MelConfig::default()).unwrap(),
            pitch: PitchConfig::default(),
            lexicon: corpus.lexicon.clone(),
            vocabulary: vocab,
        };
        let examples = fx.prepare(&entries, dir.path(), Stage::Supervised).unwrap();
        let texts = entries.iter().map(|e| e.text.clone().unwrap()).collect();
        Fixture { ctx, examples, texts }
    })
}

fn config(stage: Stage, steps: u64) -> TrainConfig {
    TrainConfig {
        max_steps: steps,
        batch_size: 3,
        seed: 5,
        ..TrainConfig::for_stage(stage)
    }
}

fn sequences(f: &Fixture) -> Vec<Vec<u32>> {
    f.examples.iter().map(|e| e.tokens.clone()).collect()
}

struct Pretrained {
    t2t: Checkpoint,
    m2m: Checkpoint,
}

fn pretrained() -> &'static Pretrained {
    static P: OnceLock<Pretrained> = OnceLock::new();
    P.get_or_init(|| {
        let f = fixture();
        let t2t = run_stage1_t2t(&sequences(f), &f.ctx, &config(Stage::T2t, 4), &mut ()).unwrap();
        let m2m = run_stage1_m2m(&f.examples, &f.ctx, &config(Stage::M2m, 4), &mut ()).unwrap();
        Pretrained {
            t2t: t2t.checkpoint,
            m2m: m2m.checkpoint,
        }
    })
}

fn stage2(steps: u64) -> TrainOutcome {
    let p = pretrained();
    run_stage2(&fixture().examples, &p.t2t, &p.m2m, &config(Stage::Supervised, steps), &mut ()).unwrap()
}

#[test]
fn loss_weights_default() {
    let w = LossWeights::default();
    assert_eq!((w.alpha, w.beta, w.gamma), (1.0, 0.1, 0.1));
    assert!(LossWeights { beta: -1.0, ..w }.validate().is_err());
}

#[test]
fn loss_report_hand_oracle() {
    let w = LossWeights::default();
    assert_eq!(LossReport::from_terms(0.0, 0.0, 0.0, 0.0, w).total, 0.0);
    let r = LossReport::from_terms(1.0, 2.0, 3.0, 0.0, LossWeights { duration: 0.0, ..w });
    assert!((r.total - 1.5).abs() < 1e-12);
    let r = LossReport::from_terms(1.0, 2.0, 3.0, 4.0, w);
    assert!((r.total - 1.9).abs() < 1e-12);
    assert!((r.contributions().iter().sum::<f64>() - r.total).abs() < 1e-6);
}

#[test]
fn total_loss_report_is_consistent_and_linear() {
    let f = fixture();
    let p = stage2(1).checkpoint.params;
    let batch = Batch::collate(&f.examples, &[0, 2, 4]);
    let w = LossWeights::default();
    let mut g = Graph::new();
    let (loss, r) = total_loss(&mut g, &p, &f.ctx.model, &batch, &w, None).unwrap();
    let v = g.value(loss).item() as f64;
    assert!((v - r.total).abs() <= 1e-5 * r.total.max(1.0), "{v} vs {}", r.total);
    assert!((r.contributions().iter().sum::<f64>() - r.total).abs() < 1e-6);
    assert!([r.syn, r.reg, r.ada, r.dur].iter().all(|x| x.is_finite() && *x >= 0.0));

    let doubled = LossWeights { gamma: 2.0 * w.gamma, ..w };
    let mut g = Graph::new();
    let (_, r2) = total_loss(&mut g, &p, &f.ctx.model, &batch, &doubled, None).unwrap();
    assert_eq!(r2.contributions()[2], 2.0 * r.contributions()[2]);
    assert_eq!(r2.contributions()[..2], r.contributions()[..2]);

    let latents = FrozenLatents::compute(&p, &f.ctx.model, &f.examples).unwrap();
    let mut g = Graph::new();
    let (_, cached) = total_loss(&mut g, &p, &f.ctx.model, &batch, &w, Some(&latents)).unwrap();
    assert_eq!(cached, r);
}

#[test]
fn padding_contents_never_reach_the_loss() {
    let f = fixture();
    let p = stage2(1).checkpoint.params;
    let clean = Batch::collate(&f.examples, &[1, 3, 5]);
    let mut poisoned = clean.clone();
    let v = f.ctx.vocabulary.len() as u32 - 1;
    for (i, m) in poisoned.token_mask.clone().iter().enumerate() {
        if !m {
            assert_eq!(poisoned.tokens[i], PAD);
            poisoned.tokens[i] = v;
            poisoned.durations[i] = 7;
        }
    }
    let n_mels = poisoned.n_mels;
    for (t, m) in poisoned.frame_mask.clone().iter().enumerate() {
        if !m {
            poisoned.mel[t * n_mels..(t + 1) * n_mels].fill(1e9);
            poisoned.f0[t] = 5000.0;
            poisoned.voiced[t] = true;
        }
    }
    assert_ne!(poisoned, clean, "batch must contain padding");
    let w = LossWeights::default();
    let mut g = Graph::new();
    let (_, a) = total_loss(&mut g, &p, &f.ctx.model, &clean, &w, None).unwrap();
    let mut g = Graph::new();
    let (_, b) = total_loss(&mut g, &p, &f.ctx.model, &poisoned, &w, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn total_loss_rejects_missing_modality_and_unknown_speaker() {
    let f = fixture();
    let p = stage2(1).checkpoint.params;
    let mut ex = f.examples[..2].to_vec();
    ex[1].f0.clear();
    ex[1].voiced.clear();
    let mut g = Graph::new();
    let err = total_loss(&mut g, &p, &f.ctx.model, &Batch::collate(&ex, &[0, 1]), &LossWeights::default(), None);
    assert!(err.unwrap_err().to_string().contains("pitch"));

    let mut ex = f.examples[..1].to_vec();
    ex[0].speaker = 9;
    let mut g = Graph::new();
    let err = total_loss(&mut g, &p, &f.ctx.model, &Batch::collate(&ex, &[0]), &LossWeights::default(), None);
    assert!(matches!(err, Err(Error::UnknownSpeaker { id: 9, .. })));
    let pre = pretrained();
    let err = run_stage2(&ex, &pre.t2t, &pre.m2m, &config(Stage::Supervised, 1), &mut ());
    assert!(matches!(err, Err(Error::UnknownSpeaker { id: 9, .. })));
}

#[test]
fn empty_corpora_are_rejected() {
    let f = fixture();
    let p = pretrained();
    assert!(matches!(
        run_stage1_t2t(&[], &f.ctx, &config(Stage::T2t, 1), &mut ()),
        Err(Error::EmptyCorpus(_))
    ));
    assert!(matches!(
        run_stage1_m2m(&[], &f.ctx, &config(Stage::M2m, 1), &mut ()),
        Err(Error::EmptyCorpus(_))
    ));
    assert!(matches!(
        run_stage2(&[], &p.t2t, &p.m2m, &config(Stage::Supervised, 1), &mut ()),
        Err(Error::EmptyCorpus(_))
    ));
}

#[test]
fn stage_configs_are_checked() {
    let f = fixture();
    let p = pretrained();
    assert!(run_stage1_t2t(&sequences(f), &f.ctx, &config(Stage::M2m, 1), &mut ()).is_err());
    let mut c = config(Stage::Supervised, 1);
    c.freeze.retain(|x| x != prefix::MEL_DECODER);
    assert!(matches!(run_stage2(&f.examples, &p.t2t, &p.m2m, &c, &mut ()), Err(Error::Config(_))));
    let swapped = run_stage2(&f.examples, &p.m2m, &p.t2t, &config(Stage::Supervised, 1), &mut ());
    assert!(matches!(swapped, Err(Error::Checkpoint { .. })));
}

#[test]
fn stage1_trajectories_are_deterministic() {
    let f = fixture();
    let seqs = sequences(f);
    let a = run_stage1_t2t(&seqs, &f.ctx, &config(Stage::T2t, 6), &mut ()).unwrap();
    let b = run_stage1_t2t(&seqs, &f.ctx, &config(Stage::T2t, 6), &mut ()).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.checkpoint.to_bytes().unwrap(), b.checkpoint.to_bytes().unwrap());
    assert!(a.checkpoint.params.names().all(|n| n.starts_with("text_")));

    let a = run_stage1_m2m(&f.examples, &f.ctx, &config(Stage::M2m, 3), &mut ()).unwrap();
    let b = run_stage1_m2m(&f.examples, &f.ctx, &config(Stage::M2m, 3), &mut ()).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.checkpoint.to_bytes().unwrap(), b.checkpoint.to_bytes().unwrap());
    assert!(a.checkpoint.params.names().all(|n| n.starts_with("mel_")));
}

#[test]
fn silent_clips_drive_mel_loss_toward_zero() {
    let f = fixture();
    let floor = (MelConfig::default().log_floor as f32).ln();
    let silent: Vec<Example> = f.examples[..2]
        .iter()
        .map(|e| Example {
            mel: vec![floor; e.mel.len()],
            ..e.clone()
        })
        .collect();
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        ..config(Stage::M2m, 300)
    };
    let out = run_stage1_m2m(&silent, &f.ctx, &cfg, &mut ()).unwrap();
    let first = out.history[0].total;
    let last = out.history.last().unwrap().total;
    assert!(last < 1e-3 * first, "{first} -> {last}");
}

#[test]
fn stage2_keeps_frozen_parts_byte_identical() {
    let p = pretrained();
    let out = stage2(3);
    let params = &out.checkpoint.params;
    for (src, component) in [
        (&p.t2t, prefix::TEXT_ENCODER),
        (&p.m2m, prefix::MEL_ENCODER),
        (&p.m2m, prefix::MEL_DECODER),
    ] {
        let names: Vec<&String> = src.params.names().filter(|n| n.starts_with(component)).collect();
        assert!(!names.is_empty());
        for n in names {
            assert_eq!(params.get(n).unwrap().data(), src.params.get(n).unwrap().data(), "{n}");
            assert!(params.is_frozen(n), "{n}");
        }
    }
    assert!(!params.names().any(|n| n.starts_with(prefix::TEXT_DECODER)));
    for component in prefix::STAGE2_TRAINABLE {
        assert!(params.iter().any(|(n, p)| n.starts_with(component) && !p.frozen), "{component}");
    }
    let again = stage2(3);
    assert_eq!(again.history, out.history);
    assert_eq!(again.checkpoint.to_bytes().unwrap(), out.checkpoint.to_bytes().unwrap());
    assert_eq!(out.checkpoint.meta.stage, Stage::Supervised);
    assert_eq!(out.checkpoint.meta.step, 3);
}

#[test]
fn non_finite_parameters_are_reported_as_divergence() {
    let f = fixture();
    let p = pretrained();
    let mut m2m = p.m2m.clone();
    let name = m2m.params.names().find(|n| n.starts_with("mel_decoder")).unwrap().clone();
    m2m.params.get_mut(&name).unwrap().data_mut()[0] = f32::NAN;
    let err = run_stage2(&f.examples, &p.t2t, &m2m, &config(Stage::Supervised, 2), &mut ());
    assert!(matches!(err, Err(Error::NonFinite(_))), "{err:?}");
}

#[derive(Default)]
struct Recorder {
    steps: Vec<u64>,
    checkpoints: Vec<u64>,
}

impl TrainObserver for Recorder {
    fn on_step(&mut self, r: &StepRecord) -> adapitch_core::Result<()> {
        self.steps.push(r.step);
        Ok(())
    }
    fn on_checkpoint(&mut self, c: &Checkpoint) -> adapitch_core::Result<()> {
        self.checkpoints.push(c.meta.step);
        Ok(())
    }
}

#[test]
fn observer_sees_every_step_and_interval_checkpoints() {
    let f = fixture();
    let mut rec = Recorder::default();
    let cfg = TrainConfig {
        checkpoint_interval: 2,
        ..config(Stage::T2t, 5)
    };
    let out = run_stage1_t2t(&sequences(f), &f.ctx, &cfg, &mut rec).unwrap();
    assert_eq!(rec.steps, [1, 2, 3, 4, 5]);
    assert_eq!(rec.checkpoints, [2, 4, 5]);
    let line = serde_json::to_string(&out.history[0]).unwrap();
    assert!(line.contains("\"step\":1") && line.contains("\"total\""), "{line}");
}

#[test]
fn synthesis_contracts() {
    let f = fixture();
    let mut ck = stage2(2).checkpoint;
    let text = &f.texts[0];
    let a = synthesize(&ck, text, 1, None).unwrap();
    assert_eq!(a.mel.frames, a.durations.iter().sum::<usize>());
    assert_eq!(a.f0.len(), a.mel.frames);
    assert_eq!(a.durations.len(), f.examples[0].tokens.len());
    assert_eq!(synthesize(&ck, text, 1, None).unwrap(), a);

    ck.strip_for_inference();
    assert!(!ck.params.names().any(|n| n.starts_with("text_decoder") || n.starts_with("mel_encoder")));
    assert_eq!(synthesize(&ck, text, 1, None).unwrap(), a);

    let contour = vec![150.0f32; 7];
    let o = synthesize(&ck, text, 1, Some(&contour)).unwrap();
    assert_eq!(o.f0, vec![150.0; a.mel.frames]);
    assert_eq!(o.mel.frames, a.mel.frames);
    assert_ne!(o.mel, a.mel);

    assert!(matches!(synthesize(&ck, text, 99, None), Err(Error::UnknownSpeaker { id: 99, .. })));
    assert!(matches!(synthesize(&ck, "  ", 0, None), Err(Error::EmptyInput(_))));
}

#[test]
fn contour_resampling_examples() {
    assert_eq!(resample_contour(&[100.0, 200.0], 3).unwrap(), [100.0, 150.0, 200.0]);
    assert_eq!(resample_contour(&[1.0, 2.0, 3.0], 3).unwrap(), [1.0, 2.0, 3.0]);
    assert_eq!(resample_contour(&[100.0, 0.0], 4).unwrap(), [100.0, 100.0, 0.0, 0.0]);
    assert_eq!(resample_contour(&[120.0], 3).unwrap(), [120.0; 3]);
    assert!(resample_contour(&[], 3).is_err());
}

#[test]
fn context_rejects_small_vocabulary_table() {
    let f = fixture();
    let mut ctx = f.ctx.clone();
    ctx.model.vocab_size = 3;
    assert!(matches!(ctx.validate(), Err(Error::Config(_))));
    let lex = Lexicon::parse("a\tAA\n").unwrap();
    let meta = ModelContext::new(small_model(64), MelConfig::default(), PitchConfig::default(), lex).meta(Stage::T2t, 0, 1);
    assert_eq!(ModelContext::from_meta(&meta).meta(Stage::T2t, 0, 1), meta);
}
