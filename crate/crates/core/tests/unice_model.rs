//! Learned scorer: shapes, closed forms, gradients, persistence and training.

use codescore_core::unice::model::{init_builtin, jitter, Backbone, BuiltinBackbone, Matrix};
use codescore_core::unice::train::initialize;
use codescore_core::unice::*;
use codescore_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_seq(rng: &mut ChaCha8Rng, vocab: usize, format: InputFormat) -> UnifiedSequence {
    let mut ids = vec![Vocabulary::CLS_ID];
    let mut tags = vec![SegmentTag::Cls];
    let mut segs = vec![SegmentTag::Gen];
    if format.uses_ref() {
        segs.push(SegmentTag::Ref);
    }
    if format.uses_nl() {
        segs.push(SegmentTag::Nl);
    }
    for s in segs {
        for _ in 0..rng.gen_range(0..6) {
            ids.push(rng.gen_range(0..vocab as u32));
            tags.push(s);
        }
        ids.push(Vocabulary::SEP_ID);
        tags.push(SegmentTag::Sep);
    }
    UnifiedSequence {
        format,
        ids,
        segment_tags: tags,
        key: None,
    }
}

fn random_config(seed: u64) -> (Model, Vec<UnifiedSequence>, Labels) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = rng.gen_range(6..15);
    let dim = rng.gen_range(2..6);
    let layers = rng.gen_range(1..4);
    let heads = [rng.gen_range(2..6), rng.gen_range(2..5), 2];
    let context = seed % 5 != 4;
    let mut model = init_builtin(vocab, dim, layers, context, heads, &mut rng);
    jitter(&mut model, 0.3, &mut rng);
    let seqs = InputFormat::ALL.iter().map(|f| random_seq(&mut rng, vocab, *f)).collect();
    let labels = Labels {
        pass_ratio: rng.gen_range(0.0..=1.0),
        executability: rng.gen_range(0..2),
    };
    (model, seqs, labels)
}

#[test]
fn gradients_match_central_differences() {
    for seed in 0..10 {
        let (model, seqs, labels) = random_config(seed);
        for check in gradient_check(&model, &seqs, &labels, 1e-5, 200).unwrap() {
            assert!(
                check.relative_error < 1e-4,
                "seed {seed} group {} error {:e} (norm {:e})",
                check.group,
                check.relative_error,
                check.analytic_norm
            );
        }
    }
}

fn seq_of(ids: Vec<u32>, tags: Vec<SegmentTag>) -> UnifiedSequence {
    UnifiedSequence {
        format: InputFormat::RefOnly,
        ids,
        segment_tags: tags,
        key: None,
    }
}

#[test]
fn single_token_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = init_builtin(5, 3, 2, true, [4, 3, 2], &mut rng);
    let out = backbone_forward(&seq_of(vec![1], vec![SegmentTag::Cls]), &model.backbone).unwrap();
    assert_eq!(out.layers(), 2);
    assert_eq!(out.tokens(), 1);
    assert_eq!(out.dim(), 3);
    let bad = seq_of(vec![1, 9], vec![SegmentTag::Cls, SegmentTag::Gen]);
    assert!(matches!(backbone_forward(&bad, &model.backbone), Err(Error::Shape(_))));
}

#[test]
fn zero_weights_give_tanh_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut model = init_builtin(6, 4, 3, true, [4, 3, 2], &mut rng);
    let Backbone::BuiltIn(b) = &mut model.backbone else { unreachable!() };
    let zero = |m: &mut Matrix| m.data.fill(0.0);
    zero(&mut b.embed);
    zero(&mut b.segment);
    b.w.iter_mut().for_each(zero);
    b.u.iter_mut().for_each(zero);
    for (k, bias) in b.b.iter_mut().enumerate() {
        for (i, x) in bias.iter_mut().enumerate() {
            *x = 0.1 * (k + 1) as f64 - 0.07 * i as f64;
        }
    }
    let seq = seq_of(
        vec![1, 4, 5, 2],
        vec![SegmentTag::Cls, SegmentTag::Gen, SegmentTag::Gen, SegmentTag::Sep],
    );
    let out = backbone_forward(&seq, &model.backbone).unwrap();
    let Backbone::BuiltIn(b) = &model.backbone else { unreachable!() };
    for (k, layer) in out.per_layer.iter().enumerate() {
        for t in 0..seq.len() {
            let want: Vec<f64> = b.b[k].iter().map(|x| x.tanh()).collect();
            assert_eq!(layer.row(t), want.as_slice());
        }
    }
}

fn random_output(rng: &mut ChaCha8Rng, layers: usize, tokens: usize, dim: usize) -> BackboneOutput {
    BackboneOutput {
        per_layer: (0..layers)
            .map(|_| Matrix {
                rows: tokens,
                cols: dim,
                data: (0..tokens * dim).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            })
            .collect(),
    }
}

#[test]
fn pooling_matches_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let one = random_output(&mut rng, 1, 3, 4);
    let pooled = pool_layers(&one, &PoolingWeights::uniform(1)).unwrap();
    for t in 0..3 {
        assert_eq!(pooled[t], one.per_layer[0].row(t));
    }
    let two = random_output(&mut rng, 2, 2, 3);
    let pw = PoolingWeights {
        gamma: 1.7,
        layer_logits: vec![0.4, 0.4],
    };
    let pooled = pool_layers(&two, &pw).unwrap();
    for t in 0..2 {
        for i in 0..3 {
            let want = 1.7 * (two.per_layer[0].row(t)[i] + two.per_layer[1].row(t)[i]) / 2.0;
            assert!((pooled[t][i] - want).abs() < 1e-12);
        }
    }
    for _ in 0..50 {
        let l = rng.gen_range(1..5);
        let out = random_output(&mut rng, l, 4, 3);
        let pw = PoolingWeights {
            gamma: rng.gen_range(-2.0..2.0),
            layer_logits: (0..l).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        };
        let z: f64 = pw.layer_logits.iter().map(|x| x.exp()).sum();
        let pooled = pool_layers(&out, &pw).unwrap();
        for t in 0..4 {
            for i in 0..3 {
                let want: f64 = (0..l)
                    .map(|k| pw.gamma * pw.layer_logits[k].exp() / z * out.per_layer[k].row(t)[i])
                    .sum();
                assert!((pooled[t][i] - want).abs() < 1e-12);
            }
        }
        let s: f64 = pw.softmax().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
    assert!(pool_layers(&two, &PoolingWeights::uniform(3)).is_err());
}

#[test]
fn predictions_are_bounded_and_deterministic() {
    for seed in 0..20 {
        let (model, seqs, _) = random_config(seed);
        for s in &seqs {
            let p = model.predict(s).unwrap();
            assert!((0.0..=1.0).contains(&p.code_score));
            assert!(p.p_exec > 0.0 && p.p_exec < 1.0);
            assert_eq!(p.exec, u8::from(p.p_exec >= 0.5));
            assert_eq!(p, model.predict(s).unwrap());
        }
    }
}

#[test]
fn permuting_non_first_tokens_keeps_prediction() {
    for seed in 0..10 {
        let (model, seqs, _) = random_config(100 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in seqs {
            let mut idx: Vec<usize> = (1..s.len()).collect();
            use rand::seq::SliceRandom;
            idx.shuffle(&mut rng);
            let mut p = s.clone();
            for (slot, &src) in idx.iter().enumerate() {
                p.ids[slot + 1] = s.ids[src];
                p.segment_tags[slot + 1] = s.segment_tags[src];
            }
            let a = model.forward(&s).unwrap();
            let b = model.forward(&p).unwrap();
            for (x, y) in a.representation().iter().zip(b.representation()) {
                assert!((x - y).abs() < 1e-12);
            }
            let (pa, pb) = (a.prediction(), b.prediction());
            assert!((pa.code_score - pb.code_score).abs() < 1e-12);
            assert!((pa.p_exec - pb.p_exec).abs() < 1e-12);
        }
    }
}

#[test]
fn context_free_backbone_is_per_token() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = init_builtin(8, 3, 2, false, [3, 3, 2], &mut rng);
    let a = seq_of(vec![1, 4, 2], vec![SegmentTag::Cls, SegmentTag::Gen, SegmentTag::Sep]);
    let b = seq_of(vec![1, 7, 7, 5, 2], vec![SegmentTag::Cls, SegmentTag::Gen, SegmentTag::Gen, SegmentTag::Gen, SegmentTag::Sep]);
    let oa = backbone_forward(&a, &model.backbone).unwrap();
    let ob = backbone_forward(&b, &model.backbone).unwrap();
    assert_eq!(oa.per_layer[1].row(0), ob.per_layer[1].row(0));
    assert!(matches!(model.backbone, Backbone::BuiltIn(BuiltinBackbone { segment_context: false, .. })));
}

fn toy_examples(n: usize, seed: u64) -> Vec<TrainExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let a = rng.gen_range(0..40);
            let b = rng.gen_range(0..40);
            TrainExample {
                task_id: format!("t{}", i % 7),
                candidate_id: format!("c{i}"),
                generated: format!("def f(x):\n    v{a} = x + {b}\n    return v{a} * {i}\n"),
                reference: Some(format!("def f(x):\n    return x + {b}\n")),
                nl: Some(format!("add {b} to the input {}", i % 7)),
                labels: Labels {
                    pass_ratio: rng.gen_range(0.0..=1.0),
                    executability: rng.gen_range(0..2),
                },
            }
        })
        .collect()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        epochs: 3,
        batch_size: 4,
        seed: 5,
        head_dims: [16, 8, 2],
        backbone: BackboneConfig::BuiltIn {
            dim: 8,
            layers: 2,
            segment_context: true,
        },
        ..TrainConfig::default()
    }
}

#[test]
fn unified_loss_is_sum_and_matches_forward_passes() {
    let examples = toy_examples(12, 4);
    let ckpt = initialize(&examples, &small_config()).unwrap();
    for ex in &examples {
        let l = unified_loss(&ex.generated, ex.reference.as_deref(), ex.nl.as_deref(), &ex.labels, &ckpt).unwrap();
        assert_eq!(l.per_format.len(), 3);
        assert_eq!(l.total, l.per_format[0].loss + l.per_format[1].loss + l.per_format[2].loss);
        for part in &l.per_format {
            let seq = ckpt.encode(&ex.generated, ex.reference.as_deref(), ex.nl.as_deref(), part.format, None).unwrap();
            let p = predict(&seq, &ckpt).unwrap();
            let want = loss_c(p.code_score, ex.labels.pass_ratio) + loss_e(p.p_exec, ex.labels.executability).unwrap();
            assert_eq!(part.loss, want);
        }
        let nl_only = unified_loss(&ex.generated, None, ex.nl.as_deref(), &ex.labels, &ckpt).unwrap();
        assert_eq!(nl_only.per_format.len(), 1);
        assert_eq!(nl_only.per_format[0].format, InputFormat::NlOnly);
        assert_eq!(nl_only.per_format[0], l.per_format[1]);
    }
    let ex = &examples[0];
    let seqs: Vec<_> = InputFormat::ALL
        .iter()
        .map(|f| ckpt.encode(&ex.generated, ex.reference.as_deref(), ex.nl.as_deref(), *f, None).unwrap())
        .collect();
    assert_ne!(seqs[0], seqs[1]);
    assert_ne!(seqs[1], seqs[2]);
    assert_ne!(seqs[0], seqs[2]);
}

#[test]
fn training_is_deterministic() {
    let examples = toy_examples(20, 8);
    let a = train(&examples, &small_config()).unwrap();
    let b = train(&examples, &small_config()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.log.len(), 3);
    let mut other = small_config();
    other.seed = 6;
    assert_ne!(train(&examples, &other).unwrap().checkpoint, a.checkpoint);
    assert!(train(&[], &small_config()).is_err());
}

#[test]
fn config_validation() {
    let d = TrainConfig::default();
    assert_eq!((d.learning_rate, d.epochs), (0.001, 5));
    let paper = TrainConfig {
        head_dims: [3072, 1024, 2],
        ..TrainConfig::default()
    };
    assert!(paper.validate().is_ok());
    let bad = TrainConfig {
        head_dims: [8, 8, 3],
        ..TrainConfig::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn overfits_fifty_samples() {
    let examples = toy_examples(50, 21);
    let cfg = TrainConfig {
        learning_rate: 0.01,
        epochs: 150,
        batch_size: 5,
        seed: 1,
        head_dims: [32, 16, 2],
        backbone: BackboneConfig::BuiltIn {
            dim: 16,
            layers: 2,
            segment_context: true,
        },
        ..TrainConfig::default()
    };
    let trained = train(&examples, &cfg).unwrap();
    let ckpt = &trained.checkpoint;
    let mut err = 0.0;
    for ex in &examples {
        let seq = ckpt
            .encode(&ex.generated, ex.reference.as_deref(), ex.nl.as_deref(), InputFormat::RefAndNl, None)
            .unwrap();
        err += (predict(&seq, ckpt).unwrap().code_score - ex.labels.pass_ratio).abs();
    }
    let mae = err / examples.len() as f64;
    assert!(mae < 0.05, "training MAE {mae}; log {:?}", trained.log.last());
}

#[test]
fn checkpoint_round_trip() {
    let examples = toy_examples(10, 2);
    let trained = train(&examples, &small_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_checkpoint(&trained.checkpoint, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, trained.checkpoint);
    for ex in &examples {
        for f in InputFormat::ALL {
            let s = loaded.encode(&ex.generated, ex.reference.as_deref(), ex.nl.as_deref(), f, None).unwrap();
            let a = predict(&s, &loaded).unwrap();
            let b = predict(&s, &trained.checkpoint).unwrap();
            assert_eq!(a.code_score.to_bits(), b.code_score.to_bits());
            assert_eq!(a.p_exec.to_bits(), b.p_exec.to_bits());
        }
    }

    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, &text[..text.len() / 2]).unwrap();
    assert!(load_checkpoint(&path).is_err());

    let foreign = text.replacen("\"format_version\":1", "\"format_version\":7", 1);
    std::fs::write(&path, foreign).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Version { found: 7, expected: 1 })));
}

#[test]
fn file_backed_backbone_trains_heads() {
    let examples = toy_examples(6, 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.jsonl");
    // Sequence lengths come from an initial built-in checkpoint with the same vocabulary.
    let probe = initialize(&examples, &small_config()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut lines = String::new();
    for ex in &examples {
        for f in InputFormat::ALL {
            let s = probe.encode(&ex.generated, ex.reference.as_deref(), ex.nl.as_deref(), f, None).unwrap();
            let layers: Vec<Vec<Vec<f64>>> = (0..2)
                .map(|_| (0..s.len()).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect())
                .collect();
            let rec = serde_json::json!({"task_id": ex.task_id, "candidate_id": ex.candidate_id, "format": f, "layers": layers});
            lines.push_str(&rec.to_string());
            lines.push('\n');
        }
    }
    std::fs::write(&path, lines).unwrap();
    let cfg = TrainConfig {
        backbone: BackboneConfig::FileBacked {
            path: path.to_string_lossy().into_owned(),
        },
        ..small_config()
    };
    let trained = train(&examples, &cfg).unwrap();
    assert_eq!(trained.checkpoint.model.backbone.dim(), 3);
    let ck = dir.path().join("fb.json");
    save_checkpoint(&trained.checkpoint, &ck).unwrap();
    let loaded = load_checkpoint(&ck).unwrap();
    let ex = &examples[0];
    let key = ExampleKey {
        task_id: ex.task_id.clone(),
        candidate_id: ex.candidate_id.clone(),
        format: InputFormat::RefOnly,
    };
    let s = loaded
        .encode(&ex.generated, ex.reference.as_deref(), ex.nl.as_deref(), InputFormat::RefOnly, Some(key))
        .unwrap();
    assert_eq!(predict(&s, &loaded).unwrap(), predict(&s, &trained.checkpoint).unwrap());
    let unkeyed = loaded.encode(&ex.generated, ex.reference.as_deref(), None, InputFormat::RefOnly, None).unwrap();
    assert!(predict(&unkeyed, &loaded).is_err());
}
