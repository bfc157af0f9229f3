use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use adapitch_core::data::{load_checkpoint, save_checkpoint};
use adapitch_core::dsp::{estimate_pitch, load_wav, mel_spectrogram, MelConfig, PitchConfig};
use adapitch_core::metrics::{gpe, fpe, mel_mcd, pitch_mse, Alignment, PitchComparison};

fn adapitch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adapitch"))
        .args(args)
        .env_remove("ADAPITCH_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = adapitch(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

struct Pipeline {
    _dir: tempfile::TempDir,
    root: PathBuf,
    corpus: PathBuf,
    t2t: PathBuf,
    m2m: PathBuf,
    model: PathBuf,
}

fn pipeline() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let corpus = root.join("corpus");
        ok(&["gen-corpus", "--out", s(&corpus), "--utts", "4", "--speakers", "2", "--seed", "3"]);
        let manifest = corpus.join("manifest.jsonl");
        let common = ["--preset", "desk", "--seed", "1", "--batch-size", "2"];
        let t2t = root.join("t2t");
        let mut args = vec!["pretrain-t2t", "--manifest", s(&manifest), "--steps", "3", "--out", s(&t2t)];
        args.extend(common);
        ok(&args);
        let m2m = root.join("m2m");
        let mut args = vec!["pretrain-m2m", "--manifest", s(&manifest), "--steps", "2", "--out", s(&m2m)];
        args.extend(common);
        ok(&args);
        let model = root.join("model");
        let t2t_ck = t2t.join("t2t.ckpt");
        let m2m_ck = m2m.join("m2m.ckpt");
        let mut args = vec![
            "train", "--t2t", s(&t2t_ck), "--m2m", s(&m2m_ck), "--manifest", s(&manifest), "--steps", "2",
            "--out", s(&model),
        ];
        args.extend(common);
        ok(&args);
        Pipeline {
            _dir: dir,
            root,
            corpus,
            t2t: t2t_ck,
            m2m: m2m_ck,
            model: model.join("supervised.ckpt"),
        }
    })
}

fn first_text(corpus: &Path) -> String {
    let m = std::fs::read_to_string(corpus.join("manifest.jsonl")).unwrap();
    let v: serde_json::Value = serde_json::from_str(m.lines().next().unwrap()).unwrap();
    v["text"].as_str().unwrap().to_string()
}

fn mel_header(path: &Path) -> (usize, usize) {
    let b = std::fs::read(path).unwrap();
    assert_eq!(&b[..4], b"MELF");
    let word = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap()) as usize;
    let (f, n) = (word(4), word(8));
    assert_eq!(b.len(), 12 + 4 * f * n);
    (f, n)
}

#[test]
fn gen_corpus_is_deterministic_and_needs_out() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        ok(&["gen-corpus", "--out", s(d), "--utts", "3", "--speakers", "2", "--seed", "7"]);
    }
    for rel in ["manifest.jsonl", "lexicon.txt", "corpus.json", "wavs/utt0000.wav", "wavs/utt0002.wav", "f0/utt0001.f0"] {
        assert_eq!(std::fs::read(a.join(rel)).unwrap(), std::fs::read(b.join(rel)).unwrap(), "{rel}");
    }
    let out = adapitch(&["gen-corpus", "--utts", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));
    let out = adapitch(&["gen-corpus", "--out", s(&dir.path().join("c")), "--utts", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_env_var_is_the_default_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, env: Option<&str>, flag: Option<&str>| {
        let out = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_adapitch"));
        cmd.args(["gen-corpus", "--out", s(&out), "--utts", "2"]).env_remove("ADAPITCH_SEED");
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        if let Some(e) = env {
            cmd.env("ADAPITCH_SEED", e);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(out.join("wavs/utt0000.wav")).unwrap()
    };
    let env3 = run("e3", Some("3"), None);
    assert_eq!(env3, run("f3", None, Some("3")));
    assert_ne!(env3, run("e4", Some("4"), None));
    assert_eq!(run("both", Some("4"), Some("3")), env3);
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_adapitch"));
    let bad = cmd
        .args(["gen-corpus", "--out", s(&dir.path().join("bad")), "--utts", "2"])
        .env("ADAPITCH_SEED", "x")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn training_commands_write_checkpoints_logs_and_config() {
    let p = pipeline();
    for (dir, stage, steps) in [("t2t", "t2t", 3), ("m2m", "m2m", 2), ("model", "supervised", 2)] {
        let d = p.root.join(dir);
        assert!(d.join(format!("{stage}.ckpt")).exists());
        let log = std::fs::read_to_string(d.join("metrics.jsonl")).unwrap();
        let lines: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), steps);
        assert_eq!(lines[0]["step"], 1);
        assert!(lines[0]["total"].as_f64().unwrap().is_finite());
        let cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("config.json")).unwrap()).unwrap();
        assert_eq!(cfg["seed"], 1);
        assert_eq!(cfg["train"]["max_steps"], steps);
    }
    let log = std::fs::read_to_string(p.root.join("model/metrics.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    for k in ["syn", "reg", "ada", "dur"] {
        assert!(first[k].is_number(), "{k}");
    }
    let ck = load_checkpoint(&p.model).unwrap();
    assert!(ck.params.is_frozen(ck.params.names().find(|n| n.starts_with("mel_decoder")).unwrap()));
}

#[test]
fn train_reports_missing_inputs_with_exit_2() {
    let p = pipeline();
    let manifest = p.corpus.join("manifest.jsonl");
    let out_dir = p.root.join("missing");
    let out = adapitch(&["train", "--t2t", s(&p.t2t), "--manifest", s(&manifest), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--m2m"));
    let nowhere = p.root.join("nowhere.ckpt");
    let out = adapitch(&[
        "train", "--t2t", s(&p.t2t), "--m2m", s(&nowhere), "--manifest", s(&manifest), "--out", s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--m2m"));
    let out = adapitch(&["pretrain-t2t", "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--manifest"));
}

#[test]
fn injected_nan_parameter_exits_3() {
    let p = pipeline();
    let mut ck = load_checkpoint(&p.m2m).unwrap();
    let name = ck.params.names().find(|n| n.starts_with("mel_decoder")).unwrap().clone();
    ck.params.get_mut(&name).unwrap().data_mut()[0] = f32::NAN;
    let bad = p.root.join("nan-m2m.ckpt");
    save_checkpoint(&ck, &bad).unwrap();
    let manifest = p.corpus.join("manifest.jsonl");
    let out_dir = p.root.join("diverged");
    let out = adapitch(&[
        "train", "--t2t", s(&p.t2t), "--m2m", s(&bad), "--manifest", s(&manifest), "--steps", "2", "--out",
        s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn corrupted_checkpoint_exits_4() {
    let p = pipeline();
    let mut bytes = std::fs::read(&p.model).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    let bad = p.root.join("corrupt.ckpt");
    std::fs::write(&bad, bytes).unwrap();
    let out = adapitch(&["synth", "--text", &first_text(&p.corpus), "--speaker", "0", "--ckpt", s(&bad), "--out", s(&p.root.join("x.mel"))]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn config_file_values_yield_to_flags() {
    let p = pipeline();
    let dir = p.root.join("cfgrun");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.json");
    let manifest = p.corpus.join("manifest.jsonl");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"seed": 9, "preset": "desk", "paths": {{"manifest": {:?}}}, "train": {{"max_steps": 4, "batch_size": 2}}}}"#,
            s(&manifest)
        ),
    )
    .unwrap();
    let out = dir.join("out");
    ok(&["pretrain-t2t", "--config", s(&cfg), "--steps", "2", "--out", s(&out)]);
    let log = std::fs::read_to_string(out.join("metrics.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    let echoed: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["seed"], 9);
    assert_eq!(echoed["train"]["max_steps"], 2);
    assert_eq!(echoed["train"]["batch_size"], 2);
    assert_eq!(echoed["model"]["latent_dim"], 64);

    // Re-running from the archived config reproduces the checkpoint.
    let again = dir.join("again");
    ok(&["pretrain-t2t", "--config", s(&out.join("config.json")), "--out", s(&again)]);
    assert_eq!(std::fs::read(out.join("t2t.ckpt")).unwrap(), std::fs::read(again.join("t2t.ckpt")).unwrap());
    assert_eq!(std::fs::read(out.join("metrics.jsonl")).unwrap(), std::fs::read(again.join("metrics.jsonl")).unwrap());
}

#[test]
fn synth_writes_mel_and_audio() {
    let p = pipeline();
    let text = first_text(&p.corpus);
    let mel = p.root.join("a.mel");
    let wav = p.root.join("a.wav");
    let out = ok(&["synth", "--text", &text, "--speaker", "1", "--ckpt", s(&p.model), "--out", s(&mel), "--wav", s(&wav), "--gl-iters", "4"]);
    let frames: usize = stdout(&out).parse().unwrap();
    assert_eq!(mel_header(&mel), (frames, 80));
    assert_eq!(load_wav(&wav).unwrap().len(), frames * 256);
    let rec: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.root.join("a.mel.json")).unwrap()).unwrap();
    assert_eq!(rec["durations"].as_array().unwrap().iter().map(|d| d.as_u64().unwrap()).sum::<u64>(), frames as u64);

    let again = p.root.join("b.mel");
    ok(&["synth", "--text", &text, "--speaker", "1", "--ckpt", s(&p.model), "--out", s(&again)]);
    assert_eq!(std::fs::read(&mel).unwrap(), std::fs::read(&again).unwrap());

    let contour = p.root.join("flat.f0");
    std::fs::write(&contour, "# flat\n220\n220\n220\n").unwrap();
    let over = p.root.join("c.mel");
    let out = ok(&["synth", "--text", &text, "--speaker", "1", "--ckpt", s(&p.model), "--out", s(&over), "--pitch", s(&contour)]);
    assert_eq!(stdout(&out).parse::<usize>().unwrap(), frames);
    assert_ne!(std::fs::read(&over).unwrap(), std::fs::read(&mel).unwrap());

    let out = adapitch(&["synth", "--text", &text, "--speaker", "99", "--ckpt", s(&p.model), "--out", s(&p.root.join("d.mel"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("speaker"));
}

fn report(args: &[&str]) -> serde_json::Value {
    serde_json::from_str(&stdout(&ok(args))).unwrap()
}

#[test]
fn eval_identical_files_gives_zero_and_plot_rows() {
    let p = pipeline();
    let wav = p.corpus.join("wavs/utt0000.wav");
    let plot = p.root.join("plot.tsv");
    let r = report(&["eval", "--ref", s(&wav), "--hyp", s(&wav), "--plot-data", s(&plot)]);
    for k in ["gpe_percent", "fpe_cents", "pitch_mse_percent", "mcd"] {
        assert_eq!(r[k].as_f64(), Some(0.0), "{k}");
    }
    let frames = r["reference_frames"].as_u64().unwrap() as usize;
    let table = std::fs::read_to_string(&plot).unwrap();
    assert_eq!(table.lines().count(), frames);
    assert!(table.lines().all(|l| l.split('\t').count() == 2));

    let mel = p.root.join("ident.mel");
    ok(&["synth", "--text", &first_text(&p.corpus), "--speaker", "0", "--ckpt", s(&p.model), "--out", s(&mel)]);
    let r = report(&["eval", "--ref", s(&mel), "--hyp", s(&mel)]);
    assert_eq!(r["mcd"].as_f64(), Some(0.0));
    assert!(r["gpe_percent"].is_null());
}

#[test]
fn eval_needs_dtw_for_unequal_lengths() {
    let p = pipeline();
    let a = p.corpus.join("wavs/utt0000.wav");
    let b = p.corpus.join("wavs/utt0001.wav");
    let fa = mel_spectrogram(&load_wav(&a).unwrap(), &MelConfig::default()).unwrap().frames;
    let fb = mel_spectrogram(&load_wav(&b).unwrap(), &MelConfig::default()).unwrap().frames;
    assert_ne!(fa, fb, "fixture utterances should differ in length");
    let out = adapitch(&["eval", "--ref", s(&a), "--hyp", s(&b)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--dtw"));
    let plot = p.root.join("dtw.tsv");
    let r = report(&["eval", "--ref", s(&a), "--hyp", s(&b), "--dtw", "--plot-data", s(&plot)]);
    assert!(r["mcd"].as_f64().unwrap() > 0.0);
    assert_eq!(r["alignment"], "dtw");
    assert!(std::fs::read_to_string(&plot).unwrap().lines().count() >= fa.max(fb));
}

#[test]
fn eval_report_matches_library_metrics_and_is_reproducible() {
    let p = pipeline();
    let dir = p.root.join("evalpair");
    ok(&["gen-corpus", "--out", s(&dir), "--utts", "2", "--speakers", "2", "--seed", "3"]);
    let reference = p.corpus.join("wavs/utt0000.wav");
    // Same text and durations, different speaker seed set: same length, different pitch.
    let hypothesis = dir.join("wavs/utt0000.wav");
    let out_a = p.root.join("eval_a.json");
    let out_b = p.root.join("eval_b.json");
    for o in [&out_a, &out_b] {
        ok(&["eval", "--ref", s(&reference), "--hyp", s(&hypothesis), "--out", s(o)]);
    }
    assert_eq!(std::fs::read(&out_a).unwrap(), std::fs::read(&out_b).unwrap());
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out_a).unwrap()).unwrap();

    let wr = load_wav(&reference).unwrap();
    let wh = load_wav(&hypothesis).unwrap();
    let pr = estimate_pitch(&wr, &PitchConfig::default()).unwrap();
    let ph = estimate_pitch(&wh, &PitchConfig::default()).unwrap();
    let cmp = PitchComparison::from_contours(&pr, &ph).unwrap();
    let mr = mel_spectrogram(&wr, &MelConfig::default()).unwrap();
    let mh = mel_spectrogram(&wh, &MelConfig::default()).unwrap();
    let close = |k: &str, v: f64| {
        let got = r[k].as_f64().unwrap();
        assert!((got - v).abs() <= 1e-9 * v.abs().max(1.0), "{k}: {got} vs {v}");
    };
    close("gpe_percent", gpe(&cmp).unwrap());
    close("fpe_cents", fpe(&cmp).unwrap());
    close("pitch_mse_percent", pitch_mse(&cmp).unwrap());
    close("mcd", mel_mcd(&mr, &mh, Alignment::None).unwrap());
}
