//! Trained scorer state and its JSON container.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Backbone, FileBackbone, Model};
use super::train::TrainConfig;
use super::vocab::{assemble, ExampleKey, InputFormat, UnifiedSequence, Vocabulary};
use crate::corpus::write_atomic;
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub config: TrainConfig,
    pub vocab: Vocabulary,
    pub model: Model,
}

impl ModelCheckpoint {
    pub fn new(config: TrainConfig, vocab: Vocabulary, model: Model) -> Result<Self> {
        let ckpt = ModelCheckpoint { config, vocab, model };
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if let Backbone::BuiltIn(b) = &self.model.backbone {
            if b.vocab_size() != self.vocab.len() {
                return Err(Error::Shape(format!(
                    "embedding table has {} rows for a vocabulary of {}",
                    b.vocab_size(),
                    self.vocab.len()
                )));
            }
        }
        Ok(())
    }

    /// Assembles one input; `key` is needed by file-backed backbones.
    pub fn encode(
        &self,
        g: &str,
        r: Option<&str>,
        n: Option<&str>,
        format: InputFormat,
        key: Option<ExampleKey>,
    ) -> Result<UnifiedSequence> {
        let mut seq = assemble(g, r, n, &self.vocab, format, &self.config.language_tag)?;
        seq.key = key;
        Ok(seq)
    }
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    cutoff: usize,
    sha256: String,
    tokens: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    config: TrainConfig,
    vocab: VocabFile,
    model: Model,
}

pub fn save_checkpoint(ckpt: &ModelCheckpoint, path: impl AsRef<Path>) -> Result<()> {
    ckpt.validate()?;
    let file = CheckpointFile {
        format_version: CHECKPOINT_VERSION,
        config: ckpt.config.clone(),
        vocab: VocabFile {
            cutoff: ckpt.vocab.cutoff(),
            sha256: ckpt.vocab.digest(),
            tokens: ckpt.vocab.tokens().to_vec(),
        },
        model: ckpt.model.clone(),
    };
    let mut text = serde_json::to_string(&file)?;
    text.push('\n');
    write_atomic(path.as_ref(), text.as_bytes())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelCheckpoint> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: String| Error::Checkpoint(format!("{}: {m}", path.display()));
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(format!("not a checkpoint: {e}")))?;
    let found = raw
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| bad("missing format_version".into()))?;
    if found != u64::from(CHECKPOINT_VERSION) {
        return Err(Error::Version {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: CHECKPOINT_VERSION,
        });
    }
    let file: CheckpointFile = serde_json::from_value(raw).map_err(|e| bad(e.to_string()))?;
    let vocab = Vocabulary::from_tokens(file.vocab.tokens, file.vocab.cutoff)?;
    if vocab.digest() != file.vocab.sha256 {
        return Err(bad("vocabulary digest mismatch".into()));
    }
    let mut model = file.model;
    if let Backbone::FileBacked(f) = &model.backbone {
        let loaded = FileBackbone::load(&f.path)?;
        if loaded.dim != f.dim || loaded.layers != f.layers {
            return Err(bad(format!("embedding file {} changed shape since training", f.path)));
        }
        model.backbone = Backbone::FileBacked(loaded);
    }
    ModelCheckpoint::new(file.config, vocab, model)
}
