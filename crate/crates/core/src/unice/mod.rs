//! Learned scorer over unified inputs: a generated program paired with its
//! reference, its description, or both. A backbone yields per-layer token
//! embeddings, softmax-weighted layer pooling gives the first-token
//! representation, and a small trunk predicts a score and an execution
//! probability.

pub mod checkpoint;
pub mod model;
pub mod train;
pub mod vocab;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, ModelCheckpoint, CHECKPOINT_VERSION};
pub use model::{
    backbone_forward, pool_layers, Backbone, BackboneOutput, BuiltinBackbone, FileBackbone, Matrix, Model,
    PoolingWeights, Prediction,
};
pub use train::{
    examples_from_corpus, gradient_check, train, AdamConfig, BackboneConfig, EpochLog, GroupCheck, TrainConfig,
    TrainExample, Trained,
};
pub use vocab::{assemble, assemble_tokens, build_vocab, ExampleKey, InputFormat, SegmentTag, UnifiedSequence, Vocabulary};

/// Squared error between predicted score and observed pass ratio.
pub fn loss_c(code_score: f64, pass_ratio: f64) -> f64 {
    let diff = code_score - pass_ratio;
    diff * diff
}

/// Negative log-likelihood of the observed executability.
pub fn loss_e(p_exec: f64, executability: u8) -> Result<f64> {
    if !(p_exec > 0.0 && p_exec < 1.0) {
        return Err(Error::InvalidArgument(format!("p_exec must lie strictly inside (0, 1), got {p_exec}")));
    }
    match executability {
        1 => Ok(-p_exec.ln()),
        0 => Ok(-(1.0 - p_exec).ln()),
        other => Err(Error::InvalidArgument(format!("executability must be 0 or 1, got {other}"))),
    }
}

/// Execution loss from the logit; exact where the probability saturates in
/// floating point.
pub(crate) fn exec_loss_from_logit(logit: f64, executability: u8) -> f64 {
    let p = model::sigmoid(logit);
    match loss_e(p, executability) {
        Ok(l) => l,
        Err(_) => {
            let z = if executability == 1 { -logit } else { logit };
            z.max(0.0) + (-z.abs()).exp().ln_1p()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    pub pass_ratio: f64,
    pub executability: u8,
}

impl Labels {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pass_ratio) || self.executability > 1 {
            return Err(Error::InvalidArgument(format!("invalid labels {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormatLoss {
    pub format: InputFormat,
    pub loss_c: f64,
    pub loss_e: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnifiedLoss {
    pub total: f64,
    pub per_format: Vec<FormatLoss>,
}

impl UnifiedLoss {
    pub(crate) fn from_parts(per_format: Vec<FormatLoss>) -> Self {
        let total = per_format.iter().fold(0.0, |acc, f| acc + f.loss);
        UnifiedLoss { total, per_format }
    }
}

/// Formats a triple supports: all three when both reference and description
/// exist, otherwise the single one available.
pub fn available_formats(has_ref: bool, has_nl: bool) -> Result<Vec<InputFormat>> {
    match (has_ref, has_nl) {
        (true, true) => Ok(InputFormat::ALL.to_vec()),
        (true, false) => Ok(vec![InputFormat::RefOnly]),
        (false, true) => Ok(vec![InputFormat::NlOnly]),
        (false, false) => Err(Error::InvalidArgument("need a reference, a description, or both".into())),
    }
}

/// Per-format loss `loss_c + loss_e` and its derivative with respect to the
/// two head outputs.
pub(crate) fn format_loss(logits: [f64; 2], labels: &Labels, format: InputFormat) -> (FormatLoss, [f64; 2]) {
    let pred = Prediction::from_logits(logits);
    let lc = loss_c(pred.code_score, labels.pass_ratio);
    let le = exec_loss_from_logit(logits[1], labels.executability);
    let s = pred.code_score;
    let d = [
        2.0 * (s - labels.pass_ratio) * s * (1.0 - s),
        pred.p_exec - f64::from(labels.executability),
    ];
    (
        FormatLoss {
            format,
            loss_c: lc,
            loss_e: le,
            loss: lc + le,
        },
        d,
    )
}

pub fn predict(seq: &UnifiedSequence, ckpt: &ModelCheckpoint) -> Result<Prediction> {
    ckpt.model.predict(seq)
}

/// Sum of the per-format losses of one triple; missing parts restrict the
/// formats evaluated.
pub fn unified_loss(
    g: &str,
    r: Option<&str>,
    n: Option<&str>,
    labels: &Labels,
    ckpt: &ModelCheckpoint,
) -> Result<UnifiedLoss> {
    labels.validate()?;
    let mut parts = Vec::new();
    for format in available_formats(r.is_some(), n.is_some())? {
        let seq = ckpt.encode(g, r, n, format, None)?;
        let fwd = ckpt.model.forward(&seq)?;
        parts.push(format_loss(fwd.logits, labels, format).0);
    }
    Ok(UnifiedLoss::from_parts(parts))
}
