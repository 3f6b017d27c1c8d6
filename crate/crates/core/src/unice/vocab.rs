//! Vocabulary and unified input assembly.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::metrics::{tokenize_code, tokenize_text};
use crate::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const UNK: &str = "[UNK]";

/// Upper bound on assembled sequence length.
pub const MAX_SEQ_LEN: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    cutoff: usize,
}

impl Vocabulary {
    pub const PAD_ID: u32 = 0;
    pub const CLS_ID: u32 = 1;
    pub const SEP_ID: u32 = 2;
    pub const UNK_ID: u32 = 3;

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>, cutoff: usize) -> Result<Self> {
        if tokens.len() < 4 || tokens[..4] != [PAD, CLS, SEP, UNK] {
            return Err(Error::Checkpoint("vocabulary must start with the four special tokens".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Checkpoint(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index, cutoff })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Hex SHA-256 over the newline-joined token list.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

/// Keeps tokens seen at least `cutoff` times, most frequent first, ties by
/// token text.
pub fn build_vocab<'a, I>(docs: I, cutoff: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut n_docs = 0;
    for doc in docs {
        n_docs += 1;
        for t in doc {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    if n_docs == 0 {
        return Err(Error::InvalidArgument("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= cutoff.max(1) && ![PAD, CLS, SEP, UNK].contains(t))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let tokens = [PAD, CLS, SEP, UNK]
        .into_iter()
        .chain(kept.into_iter().map(|(t, _)| t))
        .map(str::to_string)
        .collect();
    Vocabulary::from_tokens(tokens, cutoff)
}

/// Code tokens from the grammar lexer; falls back to word splitting for
/// languages without a grammar.
pub fn code_tokens(code: &str, language_tag: &str) -> Vec<String> {
    match tokenize_code(code, language_tag) {
        Ok(t) => t.tokens,
        Err(_) => tokenize_text(code).tokens,
    }
}

pub fn nl_tokens(text: &str) -> Vec<String> {
    tokenize_text(text).tokens
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    RefOnly,
    NlOnly,
    RefAndNl,
}

impl InputFormat {
    pub const ALL: [InputFormat; 3] = [InputFormat::RefOnly, InputFormat::NlOnly, InputFormat::RefAndNl];

    pub fn as_str(self) -> &'static str {
        match self {
            InputFormat::RefOnly => "ref_only",
            InputFormat::NlOnly => "nl_only",
            InputFormat::RefAndNl => "ref_and_nl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown input format {s:?}")))
    }

    pub fn uses_ref(self) -> bool {
        self != InputFormat::NlOnly
    }

    pub fn uses_nl(self) -> bool {
        self != InputFormat::RefOnly
    }
}

impl std::fmt::Display for InputFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentTag {
    Cls,
    Gen,
    Ref,
    Nl,
    Sep,
}

impl SegmentTag {
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    /// Slot among the content segments gen, ref, nl.
    pub fn content_slot(self) -> Option<usize> {
        match self {
            SegmentTag::Gen => Some(0),
            SegmentTag::Ref => Some(1),
            SegmentTag::Nl => Some(2),
            _ => None,
        }
    }
}

/// Identifies the example a sequence was built from, for backbones that look
/// up precomputed features.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExampleKey {
    pub task_id: String,
    pub candidate_id: String,
    pub format: InputFormat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnifiedSequence {
    pub format: InputFormat,
    pub ids: Vec<u32>,
    pub segment_tags: Vec<SegmentTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<ExampleKey>,
}

impl UnifiedSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// `[CLS] g [SEP] r [SEP] n [SEP]` with the parts the format selects. Over-long
/// inputs lose tokens from the tail of the longest segment, one at a time.
pub fn assemble_tokens(
    g: &[String],
    r: Option<&[String]>,
    n: Option<&[String]>,
    vocab: &Vocabulary,
    format: InputFormat,
) -> Result<UnifiedSequence> {
    let r = match (format.uses_ref(), r) {
        (true, None) => return Err(Error::InvalidArgument(format!("format {format} needs a reference"))),
        (true, r) => r,
        (false, _) => None,
    };
    let n = match (format.uses_nl(), n) {
        (true, None) => return Err(Error::InvalidArgument(format!("format {format} needs a description"))),
        (true, n) => n,
        (false, _) => None,
    };
    let mut segments: Vec<(SegmentTag, &[String])> = vec![(SegmentTag::Gen, g)];
    segments.extend(r.map(|r| (SegmentTag::Ref, r)));
    segments.extend(n.map(|n| (SegmentTag::Nl, n)));

    let fixed = 1 + segments.len();
    let mut lens: Vec<usize> = segments.iter().map(|(_, s)| s.len()).collect();
    let mut total = fixed + lens.iter().sum::<usize>();
    while total > MAX_SEQ_LEN {
        // Later segments win ties so the generated code is cut last.
        let (longest, _) = lens
            .iter()
            .enumerate()
            .rev()
            .max_by_key(|(_, l)| **l)
            .expect("at least one segment");
        lens[longest] -= 1;
        total -= 1;
    }

    let mut ids = Vec::with_capacity(total);
    let mut tags = Vec::with_capacity(total);
    ids.push(Vocabulary::CLS_ID);
    tags.push(SegmentTag::Cls);
    for ((tag, toks), len) in segments.iter().zip(&lens) {
        ids.extend(toks[..*len].iter().map(|t| vocab.id(t)));
        tags.extend(std::iter::repeat(*tag).take(*len));
        ids.push(Vocabulary::SEP_ID);
        tags.push(SegmentTag::Sep);
    }
    Ok(UnifiedSequence {
        format,
        ids,
        segment_tags: tags,
        key: None,
    })
}

/// [`assemble_tokens`] on raw code and description text.
pub fn assemble(
    g: &str,
    r: Option<&str>,
    n: Option<&str>,
    vocab: &Vocabulary,
    format: InputFormat,
    language_tag: &str,
) -> Result<UnifiedSequence> {
    let g = code_tokens(g, language_tag);
    let r = r.map(|r| code_tokens(r, language_tag));
    let n = n.map(nl_tokens);
    assemble_tokens(&g, r.as_deref(), n.as_deref(), vocab, format)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn single_token_corpus() {
        let doc = toks("x x x");
        let v = build_vocab([doc.as_slice()], 1).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.token(4), Some("x"));
        assert!(build_vocab(std::iter::empty::<&[String]>(), 1).is_err());
    }

    #[test]
    fn cutoff_maps_rare_tokens_to_unk() {
        let doc = toks("a a b");
        let v = build_vocab([doc.as_slice()], 2).unwrap();
        assert_eq!(v.id("b"), Vocabulary::UNK_ID);
        assert_ne!(v.id("a"), Vocabulary::UNK_ID);
        let again = build_vocab([doc.as_slice()], 2).unwrap();
        assert_eq!(v, again);
        assert_eq!(v.digest(), again.digest());
    }

    #[test]
    fn ref_only_layout() {
        let g = toks("a b");
        let r = toks("c");
        let v = build_vocab([g.as_slice(), r.as_slice()], 1).unwrap();
        let s = assemble_tokens(&g, Some(&r), None, &v, InputFormat::RefOnly).unwrap();
        use SegmentTag::*;
        assert_eq!(s.segment_tags, vec![Cls, Gen, Gen, Sep, Ref, Sep]);
        assert_eq!(s.ids[0], Vocabulary::CLS_ID);
        assert!(assemble_tokens(&g, None, Some(&r), &v, InputFormat::RefOnly).is_err());
        let s = assemble_tokens(&g, Some(&r), Some(&r), &v, InputFormat::RefAndNl).unwrap();
        assert_eq!(*s.ids.last().unwrap(), Vocabulary::SEP_ID);
        assert_eq!(s.segment_tags, vec![Cls, Gen, Gen, Sep, Ref, Sep, Nl, Sep]);
    }

    #[test]
    fn truncation_to_cap() {
        let g: Vec<String> = (0..1200).map(|i| format!("g{i}")).collect();
        let r: Vec<String> = (0..500).map(|i| format!("r{i}")).collect();
        let n: Vec<String> = (0..300).map(|i| format!("n{i}")).collect();
        let v = build_vocab([g.as_slice()], 1).unwrap();
        let s = assemble_tokens(&g, Some(&r), Some(&n), &v, InputFormat::RefAndNl).unwrap();
        assert_eq!(s.len(), MAX_SEQ_LEN);
        let count = |t| s.segment_tags.iter().filter(|x| **x == t).count();
        // Longest segments shrink first until they meet the shorter ones.
        assert_eq!(count(SegmentTag::Nl), 300);
        assert_eq!(count(SegmentTag::Gen) + count(SegmentTag::Ref), 1024 - 4 - 300);
        assert!(count(SegmentTag::Gen).abs_diff(count(SegmentTag::Ref)) <= 1);
        assert_eq!(s.ids[1], v.id("g0"));
    }
}
