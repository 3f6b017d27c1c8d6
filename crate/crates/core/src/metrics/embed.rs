//! Embedding-based precision / recall / F1 with optional IDF weighting.
//!
//! Each reference token is greedily matched to its most similar candidate token
//! (recall) and vice versa (precision); similarity is the dot product of
//! unit-norm contextual embeddings.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::TokenSequence;
use crate::{Error, Result};

/// Maps a token sequence to one unit-norm vector per token.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>>;
}

fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Deterministic pseudo-random vector for `token`; non-negative components.
fn static_vector(token: &str, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token));
    let mut v: Vec<f64> = (0..dim)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut rng);
            x.abs()
        })
        .collect();
    normalize(&mut v);
    v
}

/// Built-in provider: each token's hashed vector blended with its neighbours'.
///
/// Components are non-negative, so similarities and the resulting scores stay
/// in [0, 1].
#[derive(Debug, Clone)]
pub struct HashedContextProvider {
    pub dim: usize,
    pub context_weight: f64,
}

impl Default for HashedContextProvider {
    fn default() -> Self {
        HashedContextProvider {
            dim: 64,
            context_weight: 0.3,
        }
    }
}

impl EmbeddingProvider for HashedContextProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>> {
        let base: Vec<Vec<f64>> = tokens.iter().map(|t| static_vector(t, self.dim)).collect();
        Ok((0..tokens.len())
            .map(|i| {
                let mut v = base[i].clone();
                for j in [i.wrapping_sub(1), i + 1] {
                    if let Some(nb) = base.get(j) {
                        v.iter_mut().zip(nb).for_each(|(a, b)| *a += self.context_weight * b);
                    }
                }
                normalize(&mut v);
                v
            })
            .collect())
    }
}

/// Token → vector table read from text (`token v1 v2 ... vd` per line).
/// Vectors are normalised on load; tokens missing from the table fall back to
/// the built-in hashed vector of the same dimension.
#[derive(Debug, Clone)]
pub struct FileEmbeddingProvider {
    dim: usize,
    table: HashMap<String, Vec<f64>>,
}

impl FileEmbeddingProvider {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut dim = None;
        let mut table = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                field: "vector".into(),
                message: msg,
            };
            let mut v = parts
                .map(|p| p.parse::<f64>().map_err(|e| err(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => return Err(err(format!("expected {d} values, found {}", v.len()))),
                _ => {}
            }
            if v.is_empty() || v.iter().all(|x| *x == 0.0) {
                return Err(err("zero vector".into()));
            }
            normalize(&mut v);
            table.insert(token.to_string(), v);
        }
        let dim = dim.ok_or_else(|| Error::InvalidArgument(format!("{}: empty embedding table", path.display())))?;
        Ok(FileEmbeddingProvider { dim, table })
    }
}

impl EmbeddingProvider for FileEmbeddingProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(tokens
            .iter()
            .map(|t| self.table.get(t).cloned().unwrap_or_else(|| static_vector(t, self.dim)))
            .collect())
    }
}

/// Inverse document frequency, `ln((M + 1) / (df + 1))` over M reference documents.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    pub weights: HashMap<String, f64>,
    /// Weight of tokens never seen in the reference set.
    pub default: f64,
}

impl IdfTable {
    pub fn from_references(references: &[TokenSequence]) -> Self {
        let m = references.len() as f64;
        let mut df: HashMap<&str, usize> = HashMap::new();
        for r in references {
            let mut seen: Vec<&str> = r.tokens.iter().map(String::as_str).collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        IdfTable {
            weights: df
                .into_iter()
                .map(|(t, d)| (t.to_string(), ((m + 1.0) / (d as f64 + 1.0)).ln()))
                .collect(),
            default: (m + 1.0).ln(),
        }
    }

    pub fn weight(&self, token: &str) -> f64 {
        self.weights.get(token).copied().unwrap_or(self.default)
    }

    /// One JSON `[token, weight]` pair per line, default first, sorted by token.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut entries: Vec<(&String, &f64)> = self.weights.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = serde_json::to_string(&("__default__", self.default))?;
        out.push('\n');
        for (t, w) in entries {
            out.push_str(&serde_json::to_string(&(t, w))?);
            out.push('\n');
        }
        crate::corpus::write_atomic(path.as_ref(), out.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let (_, default): (String, f64) = serde_json::from_str(lines.next().unwrap_or(""))?;
        let weights = lines
            .map(|l| serde_json::from_str::<(String, f64)>(l).map_err(Error::from))
            .collect::<Result<HashMap<_, _>>>()?;
        Ok(IdfTable { weights, default })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn greedy(from: &[Vec<f64>], to: &[Vec<f64>], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    let uniform = total <= 0.0;
    let mut acc = 0.0;
    for (i, v) in from.iter().enumerate() {
        let best = to.iter().map(|u| dot(v, u)).fold(f64::NEG_INFINITY, f64::max);
        acc += if uniform { 1.0 } else { weights[i] } * best;
    }
    if uniform {
        acc / from.len() as f64
    } else {
        acc / total
    }
}

/// Greedy-matching precision, recall and F1. Without `idf` every token weighs 1;
/// if all IDF weights of one side are zero that side falls back to uniform.
pub fn embed_prf(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    provider: &dyn EmbeddingProvider,
    idf: Option<&IdfTable>,
) -> Result<Prf> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(Error::InvalidArgument("embedding P/R/F needs non-empty sequences".into()));
    }
    let c = provider.embed(&candidate.tokens)?;
    let r = provider.embed(&reference.tokens)?;
    if c.len() != candidate.len() || r.len() != reference.len() {
        return Err(Error::Shape("provider returned the wrong number of vectors".into()));
    }
    let w = |seq: &TokenSequence| -> Vec<f64> {
        seq.tokens
            .iter()
            .map(|t| idf.map_or(1.0, |table| table.weight(t)))
            .collect()
    };
    let recall = greedy(&r, &c, &w(reference));
    let precision = greedy(&c, &r, &w(candidate));
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Prf {
        precision,
        recall,
        f1,
    })
}
