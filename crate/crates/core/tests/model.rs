use adapitch_core::autodiff::{backward, finite_difference_check, Graph, ParameterSet, Tensor, Var};
use adapitch_core::config::prefix;
use adapitch_core::m2m::*;
use adapitch_core::t2t::*;
use adapitch_core::variance_adaptor::*;
use adapitch_core::{Error, ModelConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn tiny() -> ModelConfig {
    ModelConfig {
        vocab_size: 10,
        n_mels: 8,
        num_speakers: 2,
        embed_dim: 6,
        text_lstm_hidden: 3,
        text_decoder_hidden: 4,
        mel_channels: vec![2, 2, 2],
        latent_dim: 4,
        mel_ffn_hidden: 6,
        pitch_dim: 8,
        pitch_ffn_hidden: 6,
        speaker_dim: 3,
        pitch_embed_dim: 3,
        pitch_bins: 8,
        duration_hidden: 4,
        ..ModelConfig::default()
    }
}

fn full_params<T: adapitch_core::autodiff::Real>(cfg: &ModelConfig, seed: u64) -> ParameterSet<T> {
    let mut p = ParameterSet::new();
    let mut r = rng(seed);
    init_text_encoder(&mut p, cfg, &mut r);
    init_text_decoder(&mut p, cfg, &mut r);
    init_mel_encoder(&mut p, cfg, &mut r);
    init_mel_decoder(&mut p, cfg, &mut r);
    init_variance_adaptor(&mut p, cfg, &mut r);
    p
}

fn random_tensor<T: adapitch_core::autodiff::Real>(shape: &[usize], seed: u64) -> Tensor<T> {
    Tensor::uniform(shape, 1.0, &mut rng(seed))
}

fn only_prefixes(mut p: ParameterSet<f64>, keep: &[&str]) -> ParameterSet<f64> {
    for (name, param) in p.iter_mut() {
        param.frozen = !keep.iter().any(|k| name.starts_with(&format!("{k}.")));
    }
    p
}

fn assert_grad<F>(f: F, params: &ParameterSet<f64>)
where
    F: Fn(&mut Graph<f64>, &ParameterSet<f64>) -> adapitch_core::Result<Var>,
{
    let r = finite_difference_check(f, params, 1e-6).unwrap();
    assert!(r.checked > 0);
    assert!(r.max_rel_error <= 1e-3, "{r:?}");
}

#[test]
fn text_encoder_shape_under_defaults() {
    let cfg = ModelConfig::default();
    let p: ParameterSet = full_params(&cfg, 1);
    let mut g = Graph::new();
    let ids: Vec<u32> = (0..12).map(|i| 4 + i % 20).collect();
    let z = text_encode(&mut g, &p, &cfg, &ids).unwrap();
    assert_eq!(g.value(z).shape(), &[12, 512]);
}

#[test]
fn text_encoder_is_deterministic_and_rejects_oov() {
    let cfg = tiny();
    let p: ParameterSet = full_params(&cfg, 2);
    let run = |ids: &[u32]| {
        let mut g = Graph::new();
        text_encode(&mut g, &p, &cfg, ids).map(|z| g.value(z).clone())
    };
    assert_eq!(run(&[4, 5, 6]).unwrap(), run(&[4, 5, 6]).unwrap());
    assert!(matches!(run(&[4, 10]), Err(Error::OutOfVocabulary { id: 10, size: 10 })));
}

#[test]
fn text_decoder_shape_and_row_stochastic() {
    let cfg = ModelConfig {
        vocab_size: 40,
        ..tiny()
    };
    let p: ParameterSet = full_params(&cfg, 3);
    let mut g = Graph::new();
    let ids: Vec<u32> = (0..12).map(|i| i * 3).collect();
    let z = text_encode(&mut g, &p, &cfg, &ids).unwrap();
    let out = text_decode(&mut g, &p, z).unwrap();
    let v = g.value(out);
    assert_eq!(v.shape(), &[12, 40]);
    for r in 0..12 {
        let s: f32 = v.row(r).iter().sum();
        assert!((s - 1.0).abs() <= 1e-5, "{s}");
    }
}

#[test]
fn t2t_loss_hand_values() {
    let mut g: Graph<f64> = Graph::new();
    let uniform = g.constant(Tensor::full(&[3, 4], 0.25));
    let target = g.constant(one_hot(&[0, 2, 3], 4).unwrap());
    let loss = g.mse(uniform, target).unwrap();
    assert!((g.value(loss).item() - 0.1875).abs() < 1e-12);
    let exact = g.constant(one_hot(&[0, 2, 3], 4).unwrap());
    let zero = g.mse(exact, target).unwrap();
    assert_eq!(g.value(zero).item(), 0.0);
}

#[test]
fn gradcheck_text_encoder_embedding() {
    let cfg = tiny();
    let p = only_prefixes(full_params(&cfg, 4), &[prefix::TEXT_ENCODER]);
    let p = {
        let mut p = p;
        for (name, param) in p.iter_mut() {
            param.frozen = !name.ends_with("embedding.table");
        }
        p
    };
    let proj = random_tensor::<f64>(&[6, 1], 99);
    assert_grad(
        |g, p| {
            let z = text_encode(g, p, &cfg, &[4, 7, 2, 9])?;
            let w = g.constant(proj.clone());
            let y = g.matmul(z, w)?;
            Ok(g.sum(y))
        },
        &p,
    );
}

#[test]
fn gradcheck_t2t_reconstruction_loss() {
    let cfg = tiny();
    let p = only_prefixes(full_params(&cfg, 5), &[prefix::TEXT_ENCODER, prefix::TEXT_DECODER]);
    assert_grad(|g, p| t2t_reconstruction_loss(g, p, &cfg, &[4, 7, 2]), &p);
}

#[test]
fn mel_codec_shapes_under_defaults() {
    let cfg = ModelConfig::default();
    let p: ParameterSet = full_params(&cfg, 6);
    let mut g = Graph::new();
    let mel = g.constant(random_tensor(&[20, 80], 1));
    let z = mel_encode(&mut g, &p, &cfg, mel).unwrap();
    assert_eq!(g.value(z).shape(), &[20, 256]);
    let out = mel_decode(&mut g, &p, &cfg, z).unwrap();
    assert_eq!(g.value(out).shape(), &[20, 80]);
}

#[test]
fn mel_encoder_zero_projection_gives_zero_latent() {
    let cfg = tiny();
    let mut p: ParameterSet = full_params(&cfg, 7);
    for s in ["mel_encoder.proj.weight", "mel_encoder.proj.bias"] {
        p.get_mut(s).unwrap().data_mut().fill(0.0);
    }
    let mut g = Graph::new();
    let mel = g.constant(random_tensor(&[5, 8], 2));
    let z = mel_encode(&mut g, &p, &cfg, mel).unwrap();
    assert!(g.value(z).data().iter().all(|&x| x == 0.0));
}

#[test]
fn mel_decoder_is_deterministic() {
    let cfg = tiny();
    let p: ParameterSet = full_params(&cfg, 8);
    let run = || {
        let mut g = Graph::new();
        let z = g.constant(random_tensor(&[6, 4], 3));
        let out = mel_decode(&mut g, &p, &cfg, z).unwrap();
        g.value(out).clone()
    };
    assert_eq!(run(), run());
}

#[test]
fn m2m_loss_offset_hand_value() {
    let mut g: Graph<f64> = Graph::new();
    let m = random_tensor::<f64>(&[5, 8], 4);
    let shifted = m.clone().into_data().into_iter().map(|x| x + 0.1).collect();
    let a = g.constant(Tensor::new(&[5, 8], shifted).unwrap());
    let b = g.constant(m);
    let loss = g.mse(a, b).unwrap();
    assert!((g.value(loss).item() - 0.01).abs() < 1e-12);
}

#[test]
fn gradcheck_mel_encoder_tiny() {
    let cfg = tiny();
    let p = only_prefixes(full_params(&cfg, 9), &[prefix::MEL_ENCODER]);
    let mel = random_tensor::<f64>(&[4, 8], 5);
    let proj = random_tensor::<f64>(&[4, 1], 6);
    assert_grad(
        |g, p| {
            let m = g.constant(mel.clone());
            let z = mel_encode(g, p, &cfg, m)?;
            let w = g.constant(proj.clone());
            let y = g.matmul(z, w)?;
            Ok(g.sum(y))
        },
        &p,
    );
}

#[test]
fn gradcheck_m2m_reconstruction_loss() {
    let cfg = tiny();
    let p = only_prefixes(full_params(&cfg, 10), &[prefix::MEL_ENCODER, prefix::MEL_DECODER]);
    let mel = random_tensor::<f64>(&[4, 8], 7);
    assert_grad(
        |g, p| {
            let m = g.constant(mel.clone());
            m2m_reconstruction_loss(g, p, &cfg, m)
        },
        &p,
    );
}

#[test]
fn speaker_lookup_examples() {
    let cfg = tiny();
    let p: ParameterSet = full_params(&cfg, 11);
    let mut g = Graph::new();
    let a = speaker_lookup(&mut g, &p, 1).unwrap();
    let b = speaker_lookup(&mut g, &p, 1).unwrap();
    assert_eq!(g.value(a).data(), p.get("speaker_table.table").unwrap().row(1));
    assert_eq!(g.value(a), g.value(b));
    assert!(matches!(
        speaker_lookup(&mut g, &p, 5),
        Err(Error::UnknownSpeaker { id: 5, count: 2 })
    ));
}

#[test]
fn pitch_encoder_shape_under_defaults() {
    let cfg = ModelConfig::default();
    let p: ParameterSet = full_params(&cfg, 12);
    let mut g = Graph::new();
    let ids: Vec<u32> = (0..12).map(|i| 4 + i).collect();
    let z = pitch_encode(&mut g, &p, &cfg, &ids).unwrap();
    assert_eq!(g.value(z).shape(), &[12, 128]);
    let mut g2 = Graph::new();
    let z2 = pitch_encode(&mut g2, &p, &cfg, &ids).unwrap();
    assert_eq!(g.value(z), g2.value(z2));
}

#[test]
fn gradcheck_pitch_encoder_l3_d8() {
    let cfg = tiny();
    let p = only_prefixes(full_params(&cfg, 13), &[prefix::PITCH_ENCODER]);
    let proj = random_tensor::<f64>(&[8, 1], 8);
    assert_grad(
        |g, p| {
            let z = pitch_encode(g, p, &cfg, &[4, 5, 9])?;
            let w = g.constant(proj.clone());
            let y = g.matmul(z, w)?;
            Ok(g.sum(y))
        },
        &p,
    );
}

fn interp_oracle(values: &[f64], durations: &[usize]) -> Vec<f64> {
    let mut centers = vec![];
    let mut start = 0.0;
    for (i, &d) in durations.iter().enumerate() {
        if d > 0 {
            centers.push((start + (d as f64 - 1.0) / 2.0, values[i]));
        }
        start += d as f64;
    }
    let total: usize = durations.iter().sum();
    (0..total)
        .map(|f| {
            let x = f as f64;
            if x <= centers[0].0 {
                return centers[0].1;
            }
            if x >= centers[centers.len() - 1].0 {
                return centers[centers.len() - 1].1;
            }
            let k = centers.iter().position(|c| c.0 >= x).unwrap();
            let (x0, y0) = centers[k - 1];
            let (x1, y1) = centers[k];
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        })
        .collect()
}

fn interpolate(values: &[f64], durations: &[usize]) -> Vec<f64> {
    let mut g: Graph<f64> = Graph::new();
    let v = g.constant(Tensor::new(&[values.len(), 1], values.to_vec()).unwrap());
    let out = interpolate_tokens(&mut g, v, durations).unwrap();
    g.value(out).data().to_vec()
}

#[test]
fn pitch_interpolation_examples() {
    assert_eq!(interpolate(&[100.0, 200.0], &[1, 1]), vec![100.0, 200.0]);
    let got = interpolate(&[100.0, 200.0], &[2, 2]);
    assert_eq!(got, interp_oracle(&[100.0, 200.0], &[2, 2]));
    assert_eq!(got, vec![100.0, 125.0, 175.0, 200.0]);
    assert!(interpolation_matrix(&[0, 0]).is_err());
}

#[test]
fn pitch_regressor_zero_head_is_zero() {
    let cfg = tiny();
    let mut p: ParameterSet = full_params(&cfg, 14);
    for s in ["pitch_regressor.head.weight", "pitch_regressor.head.bias"] {
        p.get_mut(s).unwrap().data_mut().fill(0.0);
    }
    let mut g = Graph::new();
    let out = pitch_regress(&mut g, &p, &cfg, &[4, 5, 6], &[2, 3, 1]).unwrap();
    assert_eq!(g.value(out).shape(), &[6, 1]);
    assert!(g.value(out).data().iter().all(|&x| x == 0.0));
}

#[test]
fn pitch_regression_loss_examples() {
    let mut g: Graph<f64> = Graph::new();
    let f0 = [100.0f32, 0.0, 200.0, 150.0];
    let voiced = [true, false, true, true];
    let exact: Vec<f64> = f0.iter().map(|&f| if f > 0.0 { (f as f64).ln() } else { 3.0 }).collect();
    let pred = g.constant(Tensor::new(&[4, 1], exact.clone()).unwrap());
    let (loss, degenerate) = pitch_regression_loss(&mut g, pred, &f0, &voiced).unwrap();
    assert!(!degenerate);
    assert!(g.value(loss).item().abs() < 1e-12);
    let off = g.constant(Tensor::new(&[4, 1], exact.iter().map(|x| x + 2f64.ln()).collect()).unwrap());
    let (loss, _) = pitch_regression_loss(&mut g, off, &f0, &voiced).unwrap();
    assert!((g.value(loss).item() - 2f64.ln().powi(2)).abs() < 1e-12);
    assert!((g.value(loss).item() - 0.4805).abs() < 1e-4);
    let (loss, degenerate) = pitch_regression_loss(&mut g, pred, &[0.0; 4], &[false; 4]).unwrap();
    assert!(degenerate);
    assert_eq!(g.value(loss).item(), 0.0);
    assert!(pitch_regression_loss(&mut g, pred, &f0[..3], &voiced[..3]).is_err());
}

#[test]
fn gradcheck_pitch_regression_loss() {
    let cfg = tiny();
    let p = only_prefixes(full_params(&cfg, 15), &[prefix::PITCH_ENCODER, prefix::PITCH_REGRESSOR]);
    let f0 = [120.0f32, 0.0, 180.0, 160.0, 140.0];
    let voiced = [true, false, true, true, true];
    assert_grad(
        |g, p| {
            let pred = pitch_regress(g, p, &cfg, &[4, 8, 2], &[2, 1, 2])?;
            Ok(pitch_regression_loss(g, pred, &f0, &voiced)?.0)
        },
        &p,
    );
}

#[test]
fn duration_examples() {
    let cfg = tiny();
    let mut p: ParameterSet = full_params(&cfg, 16);
    for s in ["duration_predictor.head.weight", "duration_predictor.head.bias"] {
        p.get_mut(s).unwrap().data_mut().fill(0.0);
    }
    let latent = random_tensor(&[12, 6], 9);
    assert_eq!(predict_duration(&p, &latent).unwrap(), vec![1; 12]);

    let mut g: Graph<f64> = Graph::new();
    let zero = g.constant(Tensor::new(&[1, 1], vec![0.0]).unwrap());
    let l = duration_loss(&mut g, zero, &[0]).unwrap();
    assert_eq!(g.value(l).item(), 0.0);
    let one = g.constant(Tensor::new(&[2, 1], vec![1.0, 3f64.ln()]).unwrap());
    let d = (std::f64::consts::E - 1.0).round() as usize;
    assert_eq!(d, 2);
    let l = duration_loss(&mut g, one, &[2, 2]).unwrap();
    assert!((g.value(l).item() - ((1.0 - 3f64.ln()).powi(2) / 2.0)).abs() < 1e-12);
    assert!(duration_loss(&mut g, one, &[1]).is_err());
}

#[test]
fn duration_loss_non_integer_oracle() {
    // log(d + 1) = 1 exactly when d = e - 1.
    let target = (std::f64::consts::E - 1.0 + 1.0).ln();
    assert!((target - 1.0).abs() < 1e-15);
    assert_eq!(durations_from_log(&[1.0]), vec![2]);
    assert_eq!(durations_from_log(&[(6.0f32).ln()]), vec![5]);
}

#[test]
fn gradcheck_duration_loss() {
    let cfg = tiny();
    let p = only_prefixes(full_params(&cfg, 17), &[prefix::DURATION_PREDICTOR]);
    let latent = random_tensor::<f64>(&[4, 6], 10);
    assert_grad(
        |g, p| {
            let z = g.constant(latent.clone());
            let pred = duration_log_predictions(g, p, z)?;
            duration_loss(g, pred, &[3, 0, 7, 12])
        },
        &p,
    );
}

#[test]
fn upsample_examples() {
    let mut g: Graph<f64> = Graph::new();
    let rows = g.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
    let up = upsample(&mut g, rows, &[2, 3]).unwrap();
    assert_eq!(g.value(up).data(), &[1., 2., 1., 2., 3., 4., 3., 4., 3., 4.]);
    let up = upsample(&mut g, rows, &[1, 0]).unwrap();
    assert_eq!(g.value(up).data(), &[1., 2.]);
    assert!(upsample(&mut g, rows, &[0, 0]).is_err());
}

fn fuse_value(p: &ParameterSet<f64>, cfg: &ModelConfig, f0: &[f32], speaker: usize) -> Tensor<f64> {
    let mut g = Graph::new();
    let text = g.constant(random_tensor(&[f0.len(), cfg.encoder_dim()], 11));
    let spk = speaker_lookup(&mut g, p, speaker).unwrap();
    let out = fuse(&mut g, p, cfg, text, f0, spk).unwrap();
    g.value(out).clone()
}

#[test]
fn fuse_shape_under_defaults() {
    let cfg = ModelConfig::default();
    let p: ParameterSet<f64> = full_params(&cfg, 18);
    let out = fuse_value(&p, &cfg, &[150.0; 10], 0);
    assert_eq!(out.shape(), &[10, 256]);
}

#[test]
fn fuse_zero_weights_and_mismatch() {
    let cfg = tiny();
    let mut p: ParameterSet<f64> = full_params(&cfg, 19);
    for s in ["fusion.fc.weight", "fusion.fc.bias"] {
        p.get_mut(s).unwrap().data_mut().fill(0.0);
    }
    assert!(fuse_value(&p, &cfg, &[150.0, 0.0, 90.0], 1).data().iter().all(|&x| x == 0.0));
    let mut g = Graph::new();
    let text = g.constant(random_tensor(&[3, 6], 1));
    let spk = speaker_lookup(&mut g, &p, 0).unwrap();
    assert!(fuse(&mut g, &p, &cfg, text, &[100.0; 4], spk).is_err());
}

#[test]
fn fuse_speaker_enters_only_through_table() {
    let cfg = tiny();
    let mut p: ParameterSet<f64> = full_params(&cfg, 20);
    let row0 = p.get("speaker_table.table").unwrap().row(0).to_vec();
    p.get_mut("speaker_table.table").unwrap().data_mut()[3..6].copy_from_slice(&row0);
    let f0 = [120.0, 0.0, 180.0];
    assert_eq!(fuse_value(&p, &cfg, &f0, 0), fuse_value(&p, &cfg, &f0, 1));
}

#[test]
fn fuse_zeroed_speaker_block_ignores_speaker() {
    let cfg = tiny();
    let mut p: ParameterSet<f64> = full_params(&cfg, 21);
    let (d_enc, d_pe, d_lat) = (cfg.encoder_dim(), cfg.pitch_embed_dim, cfg.latent_dim);
    let w = p.get_mut("fusion.fc.weight").unwrap().data_mut();
    for r in d_enc + d_pe..d_enc + d_pe + cfg.speaker_dim {
        w[r * d_lat..(r + 1) * d_lat].fill(0.0);
    }
    let f0 = [120.0, 130.0, 0.0];
    assert_eq!(fuse_value(&p, &cfg, &f0, 0), fuse_value(&p, &cfg, &f0, 1));
    assert_ne!(fuse_value(&p, &cfg, &f0, 0), fuse_value(&p, &cfg, &[200.0, 210.0, 0.0], 0));
}

#[test]
fn fuse_zeroed_pitch_block_ignores_contour() {
    let cfg = tiny();
    let mut p: ParameterSet<f64> = full_params(&cfg, 22);
    let (d_enc, d_lat) = (cfg.encoder_dim(), cfg.latent_dim);
    let w = p.get_mut("fusion.fc.weight").unwrap().data_mut();
    for r in d_enc..d_enc + cfg.pitch_embed_dim {
        w[r * d_lat..(r + 1) * d_lat].fill(0.0);
    }
    assert_eq!(
        fuse_value(&p, &cfg, &[120.0, 0.0, 140.0], 0),
        fuse_value(&p, &cfg, &[300.0, 220.0, 0.0], 0)
    );
}

#[test]
fn pitch_basis_interpolates_in_log_hz() {
    let cfg = ModelConfig {
        pitch_bins: 5,
        pitch_range: (100.0, 1600.0),
        ..ModelConfig::default()
    };
    // Anchors at 100, 200, 400, 800, 1600 Hz.
    let at = pitch_basis(&cfg, 400.0);
    for (w, want) in at.iter().zip([0.0, 0.0, 1.0, 0.0, 0.0]) {
        assert!((w - want).abs() < 1e-12, "{at:?}");
    }
    let mid = pitch_basis(&cfg, 200.0 * 2f64.sqrt());
    assert!((mid[1] - 0.5).abs() < 1e-12 && (mid[2] - 0.5).abs() < 1e-12);
    assert_eq!(pitch_basis(&cfg, 20.0), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    assert_eq!(pitch_basis(&cfg, 5000.0), vec![0.0, 0.0, 0.0, 0.0, 1.0]);
    for hz in [101.0, 333.3, 999.0, 1599.0] {
        let b = pitch_basis(&cfg, hz);
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(b.iter().filter(|&&w| w > 0.0).count() <= 2);
    }
}

#[test]
fn adaptation_loss_examples() {
    let cfg = tiny();
    let mut p: ParameterSet<f64> = full_params(&cfg, 23);
    p.set_frozen_prefix(prefix::MEL_ENCODER, true);
    let mel = random_tensor::<f64>(&[5, 8], 12);
    let teacher = {
        let mut g = Graph::new();
        let m = g.constant(mel.clone());
        let z = mel_encode(&mut g, &p, &cfg, m).unwrap();
        g.value(z).clone()
    };
    let mut g = Graph::new();
    let m = g.constant(mel.clone());
    let exact = g.constant(teacher.clone());
    let l = adaptation_loss(&mut g, &p, &cfg, exact, m).unwrap();
    assert_eq!(g.value(l).item(), 0.0);
    let shifted: Vec<f64> = teacher.data().iter().map(|x| x + 0.5).collect();
    let fused = g.input(Tensor::new(teacher.shape(), shifted).unwrap());
    let l = adaptation_loss(&mut g, &p, &cfg, fused, m).unwrap();
    assert!((g.value(l).item() - 0.25).abs() < 1e-12);
    backward(&mut g, l, &mut p).unwrap();
    for (name, param) in p.iter() {
        if name.starts_with("mel_encoder.") {
            assert!(param.value.grad().is_none(), "{name}");
        }
    }
    assert!(g.grad(fused).unwrap().iter().all(|&x| (x - 1.0 / 20.0).abs() < 1e-12));
    let short = g.constant(Tensor::zeros(&[4, 4]));
    assert!(adaptation_loss(&mut g, &p, &cfg, short, m).is_err());
}

fn stage2_params() -> (ModelConfig, ParameterSet<f64>) {
    let cfg = tiny();
    let mut p = full_params(&cfg, 24);
    for name in prefix::STAGE2_FROZEN {
        p.set_frozen_prefix(name, true);
    }
    p.set_frozen_prefix(prefix::TEXT_DECODER, true);
    (cfg, p)
}

#[test]
fn gradcheck_adaptation_loss() {
    let (cfg, p) = stage2_params();
    let mel = random_tensor::<f64>(&[5, 8], 13);
    let text = random_tensor::<f64>(&[2, 6], 14);
    let f0 = [120.0f32, 125.0, 0.0, 180.0, 170.0];
    assert_grad(
        |g, p| {
            let t = g.constant(text.clone());
            let up = upsample(g, t, &[2, 3])?;
            let spk = speaker_lookup(g, p, 1)?;
            let fused = fuse(g, p, &cfg, up, &f0, spk)?;
            let m = g.constant(mel.clone());
            adaptation_loss(g, p, &cfg, fused, m)
        },
        &p,
    );
}

#[test]
fn gradcheck_synthesis_loss_through_frozen_decoder() {
    let (cfg, p) = stage2_params();
    let mel = random_tensor::<f64>(&[5, 8], 15);
    let text = random_tensor::<f64>(&[2, 6], 16);
    let f0 = [120.0f32, 125.0, 0.0, 180.0, 170.0];
    assert_grad(
        |g, p| {
            let t = g.constant(text.clone());
            let up = upsample(g, t, &[2, 3])?;
            let spk = speaker_lookup(g, p, 0)?;
            let fused = fuse(g, p, &cfg, up, &f0, spk)?;
            let out = mel_decode(g, p, &cfg, fused)?;
            let m = g.constant(mel.clone());
            g.mse(out, m)
        },
        &p,
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn upsample_row_count_is_duration_sum(durs in proptest::collection::vec(0usize..6, 1..8), seed in 0u64..50) {
        prop_assume!(durs.iter().sum::<usize>() > 0);
        let mut g: Graph<f64> = Graph::new();
        let rows = g.constant(random_tensor(&[durs.len(), 3], seed));
        let up = upsample(&mut g, rows, &durs).unwrap();
        prop_assert_eq!(g.value(up).rows(), durs.iter().sum::<usize>());
        let mut r = rng(seed);
        let vals: Vec<f64> = (0..durs.len()).map(|_| r.gen_range(50.0..300.0)).collect();
        let got = interpolate(&vals, &durs);
        let want = interp_oracle(&vals, &durs);
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn encoder_and_codec_preserve_length(l in 1usize..9, f in 1usize..9, seed in 0u64..20) {
        let cfg = tiny();
        let p: ParameterSet = full_params(&cfg, seed);
        let ids: Vec<u32> = (0..l).map(|i| (i as u32 * 7 + seed as u32) % 10).collect();
        let mut g = Graph::new();
        let z = text_encode(&mut g, &p, &cfg, &ids).unwrap();
        prop_assert_eq!(g.value(z).rows(), l);
        let m = g.constant(random_tensor(&[f, 8], seed));
        let lat = mel_encode(&mut g, &p, &cfg, m).unwrap();
        let out = mel_decode(&mut g, &p, &cfg, lat).unwrap();
        prop_assert_eq!(g.value(out).shape(), &[f, 8]);
    }
}
