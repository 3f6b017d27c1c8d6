//! Multi-format training with Adam, and finite-difference gradient checks.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::ModelCheckpoint;
use super::model::{init_builtin, init_file_backed, FileBackbone, Model};
use super::vocab::{build_vocab, code_tokens, nl_tokens, assemble_tokens, ExampleKey, UnifiedSequence};
use super::{available_formats, format_loss, FormatLoss, Labels, UnifiedLoss};
use crate::corpus::{GroundTruthRecord, TaskRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackboneConfig {
    BuiltIn {
        dim: usize,
        layers: usize,
        #[serde(default = "yes")]
        segment_context: bool,
    },
    FileBacked {
        path: String,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub head_dims: [usize; 3],
    pub backbone: BackboneConfig,
    pub vocab_cutoff: usize,
    pub language_tag: String,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            epochs: 5,
            batch_size: 8,
            seed: 0,
            head_dims: [64, 32, 2],
            backbone: BackboneConfig::BuiltIn {
                dim: 32,
                layers: 2,
                segment_context: true,
            },
            vocab_cutoff: 1,
            language_tag: "python".into(),
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive and finite");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if self.head_dims.contains(&0) {
            return bad("head dimensions must be positive");
        }
        if self.head_dims[2] != 2 {
            return bad("the last head dimension must be 2");
        }
        if let BackboneConfig::BuiltIn { dim, layers, .. } = self.backbone {
            if dim == 0 || layers == 0 {
                return bad("backbone dim and layers must be positive");
            }
        }
        let a = self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.epsilon > 0.0) {
            return bad("Adam betas must lie in [0, 1) and epsilon must be positive");
        }
        Ok(())
    }
}

/// One labelled (generated, reference, description) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainExample {
    pub task_id: String,
    pub candidate_id: String,
    pub generated: String,
    pub reference: Option<String>,
    pub nl: Option<String>,
    pub labels: Labels,
}

/// Pairs every candidate with its sandbox labels. The first reference of a
/// task stands in for the task.
pub fn examples_from_corpus(tasks: &[TaskRecord], truth: &[GroundTruthRecord]) -> Result<Vec<TrainExample>> {
    let index: HashMap<(&str, &str), &GroundTruthRecord> = truth
        .iter()
        .map(|t| ((t.task_id.as_str(), t.candidate_id.as_str()), t))
        .collect();
    let mut out = Vec::new();
    for task in tasks {
        for cand in &task.candidates {
            let t = index
                .get(&(task.task_id.as_str(), cand.candidate_id.as_str()))
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "candidate {}/{} has no ground-truth labels",
                        task.task_id, cand.candidate_id
                    ))
                })?;
            out.push(TrainExample {
                task_id: task.task_id.clone(),
                candidate_id: cand.candidate_id.clone(),
                generated: cand.code.clone(),
                reference: task.ref_codes.first().cloned(),
                nl: (!task.nl.trim().is_empty()).then(|| task.nl.clone()),
                labels: Labels {
                    pass_ratio: t.pass_ratio,
                    executability: t.executability,
                },
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_loss_c: f64,
    pub mean_loss_e: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub checkpoint: ModelCheckpoint,
    pub log: Vec<EpochLog>,
}

struct Prepared {
    name: String,
    seqs: Vec<UnifiedSequence>,
    labels: Labels,
}

fn prepare(examples: &[TrainExample], ckpt: &ModelCheckpoint) -> Result<Vec<Prepared>> {
    examples
        .iter()
        .map(|ex| {
            ex.labels.validate()?;
            let lang = &ckpt.config.language_tag;
            let g = code_tokens(&ex.generated, lang);
            let r = ex.reference.as_deref().map(|r| code_tokens(r, lang));
            let n = ex.nl.as_deref().map(nl_tokens);
            let seqs = available_formats(r.is_some(), n.is_some())?
                .into_iter()
                .map(|format| {
                    let mut s = assemble_tokens(&g, r.as_deref(), n.as_deref(), &ckpt.vocab, format)?;
                    s.key = Some(ExampleKey {
                        task_id: ex.task_id.clone(),
                        candidate_id: ex.candidate_id.clone(),
                        format,
                    });
                    Ok(s)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Prepared {
                name: format!("{}/{}", ex.task_id, ex.candidate_id),
                seqs,
                labels: ex.labels,
            })
        })
        .collect()
}

/// Loss of one triple over its formats; gradients scaled by `scale` are added
/// to `grads` when given.
pub(crate) fn triple_loss(
    model: &Model,
    seqs: &[UnifiedSequence],
    labels: &Labels,
    scale: f64,
    mut grads: Option<&mut Model>,
) -> Result<UnifiedLoss> {
    let mut parts: Vec<FormatLoss> = Vec::with_capacity(seqs.len());
    for seq in seqs {
        let fwd = model.forward(seq)?;
        let (part, d) = format_loss(fwd.logits, labels, seq.format);
        if let Some(g) = grads.as_deref_mut() {
            model.backward(seq, &fwd, [d[0] * scale, d[1] * scale], g);
        }
        parts.push(part);
    }
    Ok(UnifiedLoss::from_parts(parts))
}

struct Adam {
    cfg: AdamConfig,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(size: usize, lr: f64, cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            lr,
            m: vec![0.0; size],
            v: vec![0.0; size],
            t: 0,
        }
    }

    fn step(&mut self, model: &mut Model, grads: &mut Model) {
        self.t += 1;
        let AdamConfig { beta1, beta2, epsilon } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        let mut offset = 0;
        for ((_, p), (_, g)) in model.params_mut().into_iter().zip(grads.params_mut()) {
            for (j, (x, gj)) in p.iter_mut().zip(g.iter()).enumerate() {
                let i = offset + j;
                self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * gj;
                self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * gj * gj;
                let m_hat = self.m[i] / c1;
                let v_hat = self.v[i] / c2;
                *x -= self.lr * m_hat / (v_hat.sqrt() + epsilon);
            }
            offset += p.len();
            g.fill(0.0);
        }
    }
}

/// Fresh checkpoint for `config`, with the vocabulary drawn from `examples`.
pub fn initialize(examples: &[TrainExample], config: &TrainConfig) -> Result<ModelCheckpoint> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty corpus".into()));
    }
    let lang = &config.language_tag;
    let mut docs: Vec<Vec<String>> = Vec::new();
    for ex in examples {
        docs.push(code_tokens(&ex.generated, lang));
        docs.extend(ex.reference.as_deref().map(|r| code_tokens(r, lang)));
        docs.extend(ex.nl.as_deref().map(nl_tokens));
    }
    let vocab = build_vocab(docs.iter().map(Vec::as_slice), config.vocab_cutoff)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = match &config.backbone {
        BackboneConfig::BuiltIn {
            dim,
            layers,
            segment_context,
        } => init_builtin(vocab.len(), *dim, *layers, *segment_context, config.head_dims, &mut rng),
        BackboneConfig::FileBacked { path } => init_file_backed(FileBackbone::load(path)?, config.head_dims, &mut rng),
    };
    ModelCheckpoint::new(config.clone(), vocab, model)
}

/// Minimises the mean unified loss over mini-batches. Single-threaded and
/// fully determined by the seed.
pub fn train(examples: &[TrainExample], config: &TrainConfig) -> Result<Trained> {
    let mut ckpt = initialize(examples, config)?;
    let data = prepare(examples, &ckpt)?;
    let mut grads = ckpt.model.zeros_like();
    let size = ckpt.model.param_count();
    let mut adam = Adam::new(size, config.learning_rate, config.adam);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_0F_0DE7);
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut sum, mut sum_c, mut sum_e) = (0.0, 0.0, 0.0);
        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &data[i];
                let loss = triple_loss(&ckpt.model, &ex.seqs, &ex.labels, scale, Some(&mut grads))?;
                if !loss.total.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "epoch {epoch}, example {}: loss {} (per format {:?})",
                        ex.name, loss.total, loss.per_format
                    )));
                }
                sum += loss.total;
                sum_c += loss.per_format.iter().map(|f| f.loss_c).sum::<f64>();
                sum_e += loss.per_format.iter().map(|f| f.loss_e).sum::<f64>();
            }
            adam.step(&mut ckpt.model, &mut grads);
        }
        let n = data.len() as f64;
        let entry = EpochLog {
            epoch,
            mean_loss: sum / n,
            mean_loss_c: sum_c / n,
            mean_loss_e: sum_e / n,
        };
        log::info!("epoch {epoch}: mean loss {:.6}", entry.mean_loss);
        log.push(entry);
    }
    Ok(Trained { checkpoint: ckpt, log })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCheck {
    pub group: String,
    pub entries: usize,
    pub analytic_norm: f64,
    pub relative_error: f64,
}

/// Compares analytic gradients of the unified loss of `seqs` with central
/// differences, per parameter group. At most `max_entries` coordinates per
/// group are probed, evenly spaced.
pub fn gradient_check(
    model: &Model,
    seqs: &[UnifiedSequence],
    labels: &Labels,
    eps: f64,
    max_entries: usize,
) -> Result<Vec<GroupCheck>> {
    let mut analytic = model.zeros_like();
    triple_loss(model, seqs, labels, 1.0, Some(&mut analytic))?;
    let mut probe = model.clone();
    let names: Vec<(String, usize)> = probe.params_mut().iter().map(|(n, p)| (n.clone(), p.len())).collect();
    let analytic_groups: Vec<Vec<f64>> = analytic.params_mut().into_iter().map(|(_, p)| p.to_vec()).collect();
    let mut out = Vec::with_capacity(names.len());
    for (gi, (name, len)) in names.iter().enumerate() {
        let step = len.div_ceil(max_entries.max(1)).max(1);
        let (mut diff2, mut a2, mut n2, mut count) = (0.0, 0.0, 0.0, 0);
        for j in (0..*len).step_by(step) {
            let original = probe.params_mut()[gi].1[j];
            probe.params_mut()[gi].1[j] = original + eps;
            let plus = triple_loss(&probe, seqs, labels, 1.0, None)?.total;
            probe.params_mut()[gi].1[j] = original - eps;
            let minus = triple_loss(&probe, seqs, labels, 1.0, None)?.total;
            probe.params_mut()[gi].1[j] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic_groups[gi][j];
            diff2 += (a - numeric) * (a - numeric);
            a2 += a * a;
            n2 += numeric * numeric;
            count += 1;
        }
        let denom = (a2.sqrt() + n2.sqrt()).max(1e-8);
        out.push(GroupCheck {
            group: name.clone(),
            entries: count,
            analytic_norm: a2.sqrt(),
            relative_error: diff2.sqrt() / denom,
        });
    }
    Ok(out)
}
