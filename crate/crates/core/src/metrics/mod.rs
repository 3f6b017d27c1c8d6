//! Comparison-based metrics between generated code and reference code.
//!
//! Every metric lies in [0, 1]. When a task carries several references the
//! reported value is the maximum over references.

pub mod ast;
pub mod dataflow;
pub mod embed;
pub mod ngram;
pub mod syntax;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use ast::ast_match;
pub use dataflow::dataflow_match;
pub use embed::{embed_prf, EmbeddingProvider, FileEmbeddingProvider, HashedContextProvider, IdfTable, Prf};
pub use ngram::{
    bleu, compute_trivially_shared, crystalbleu, exact_match, weighted_ngram_precision, NGram, NGramProfile,
};
pub use syntax::{tokenize_code, tokenize_text, Language};

/// Ordered tokens of a code or text fragment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<String>) -> Self {
        TokenSequence { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Default weight of keyword-bearing n-grams in the weighted BLEU component.
pub const DEFAULT_KEYWORD_WEIGHT: f64 = 5.0;

/// Default size of the trivially-shared n-gram set for CrystalBLEU.
pub const DEFAULT_SHARED_K: usize = 500;

/// Component weights of CodeBLEU: n-gram, weighted n-gram, AST and dataflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeBleuWeights {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub zeta: f64,
}

impl Default for CodeBleuWeights {
    fn default() -> Self {
        CodeBleuWeights {
            alpha: 0.25,
            beta: 0.25,
            delta: 0.25,
            zeta: 0.25,
        }
    }
}

impl CodeBleuWeights {
    pub fn new(alpha: f64, beta: f64, delta: f64, zeta: f64) -> Result<Self> {
        let w = CodeBleuWeights {
            alpha,
            beta,
            delta,
            zeta,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.alpha, self.beta, self.delta, self.zeta];
        if parts.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("CodeBLEU weights must be non-negative".into()));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("CodeBLEU weights must sum to 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeBleuParts {
    pub bleu: f64,
    pub weighted_bleu: f64,
    pub ast_match: f64,
    pub dataflow_match: f64,
}

impl CodeBleuParts {
    pub fn combine(&self, w: &CodeBleuWeights) -> f64 {
        w.alpha * self.bleu + w.beta * self.weighted_bleu + w.delta * self.ast_match + w.zeta * self.dataflow_match
    }
}

pub fn codebleu_parts(candidate_code: &str, reference_code: &str, language_tag: &str, kappa: f64) -> Result<CodeBleuParts> {
    let language = Language::from_tag(language_tag)?;
    let c = tokenize_code(candidate_code, language_tag)?;
    let r = tokenize_code(reference_code, language_tag)?;
    let keywords: HashSet<String> = language.keywords().iter().map(|k| k.to_string()).collect();
    Ok(CodeBleuParts {
        bleu: bleu(&c, &r),
        weighted_bleu: weighted_ngram_precision(&c, &r, &keywords, kappa),
        ast_match: ast_match(candidate_code, reference_code, language_tag)?,
        dataflow_match: dataflow_match(candidate_code, reference_code, language_tag)?,
    })
}

pub fn codebleu(candidate_code: &str, reference_code: &str, language_tag: &str, weights: &CodeBleuWeights) -> Result<f64> {
    weights.validate()?;
    Ok(codebleu_parts(candidate_code, reference_code, language_tag, DEFAULT_KEYWORD_WEIGHT)?.combine(weights))
}

/// Maximum of `score` over `references`.
pub fn best_over_references<F>(references: &[String], mut score: F) -> Result<f64>
where
    F: FnMut(&str) -> Result<f64>,
{
    if references.is_empty() {
        return Err(Error::InvalidArgument("no reference available".into()));
    }
    let mut best = f64::NEG_INFINITY;
    for r in references {
        best = best.max(score(r)?);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_weights_are_quarter() {
        let w = CodeBleuWeights::default();
        assert_eq!([w.alpha, w.beta, w.delta, w.zeta], [0.25; 4]);
        assert!(w.validate().is_ok());
        assert!(CodeBleuWeights::new(0.5, 0.5, 0.5, -0.5).is_err());
        assert!(CodeBleuWeights::new(0.5, 0.5, 0.5, 0.0).is_err());
    }

    #[test]
    fn combine_is_linear() {
        let s = 0.37;
        let parts = CodeBleuParts {
            bleu: s,
            weighted_bleu: s,
            ast_match: s,
            dataflow_match: s,
        };
        assert!((parts.combine(&CodeBleuWeights::default()) - s).abs() < 1e-15);
    }

    #[test]
    fn codebleu_identity_and_collapse() {
        let code = "def add(a, b):\n    total = a + b\n    return total\n";
        let cand = "def add(x, y):\n    return x + y\n";
        assert!((codebleu(code, code, "python", &CodeBleuWeights::default()).unwrap() - 1.0).abs() < 1e-12);
        let only_bleu = CodeBleuWeights::new(1.0, 0.0, 0.0, 0.0).unwrap();
        let direct = bleu(&tokenize_code(cand, "python").unwrap(), &tokenize_code(code, "python").unwrap());
        assert_eq!(codebleu(cand, code, "python", &only_bleu).unwrap(), direct);
    }

    #[test]
    fn max_over_references() {
        let refs = vec!["a".to_string(), "bb".to_string()];
        let best = best_over_references(&refs, |r| Ok(r.len() as f64)).unwrap();
        assert_eq!(best, 2.0);
        assert!(best_over_references(&[], |_| Ok(0.0)).is_err());
    }
}
