//! Syntactic match: the share of the reference's inner subtrees that also occur
//! in the candidate, identifiers abstracted to a placeholder.

use std::collections::HashMap;

use super::syntax::{parse_code, Language, SyntaxTree};
use crate::{Error, Result};

/// Canonical text of the subtree rooted at `node`.
fn encode(node: &SyntaxTree, out: &mut String) {
    if node.is_leaf() {
        out.push_str(&serde_json::to_string(&node.match_label()).expect("string"));
        return;
    }
    out.push('(');
    out.push_str(&node.kind);
    for c in &node.children {
        out.push(' ');
        encode(c, out);
    }
    out.push(')');
}

/// Canonical encodings of every non-leaf subtree, keyed with multiplicity.
pub fn subtree_counts(root: &SyntaxTree) -> HashMap<String, usize> {
    fn walk(node: &SyntaxTree, counts: &mut HashMap<String, usize>) {
        if node.is_leaf() {
            return;
        }
        let mut key = String::new();
        encode(node, &mut key);
        *counts.entry(key).or_insert(0) += 1;
        for c in &node.children {
            walk(c, counts);
        }
    }
    let mut counts = HashMap::new();
    walk(root, &mut counts);
    counts
}

/// Ratio over already-parsed trees.
pub fn ast_match_trees(candidate: &SyntaxTree, reference: &SyntaxTree) -> f64 {
    let refs = subtree_counts(reference);
    let total: usize = refs.values().sum();
    if total == 0 {
        return 1.0;
    }
    let cands = subtree_counts(candidate);
    let matched: usize = refs
        .iter()
        .map(|(k, &n)| n.min(cands.get(k).copied().unwrap_or(0)))
        .sum();
    matched as f64 / total as f64
}

/// An unparseable candidate scores 0; an unparseable reference is an error.
pub fn ast_match(candidate_code: &str, reference_code: &str, language_tag: &str) -> Result<f64> {
    let language = Language::from_tag(language_tag)?;
    let reference = parse_code(reference_code, language)?;
    if reference.has_error {
        return Err(Error::Syntax {
            what: "reference code".into(),
            detail: "does not parse".into(),
        });
    }
    let candidate = parse_code(candidate_code, language)?;
    if candidate.has_error {
        return Ok(0.0);
    }
    Ok(ast_match_trees(&candidate.root, &reference.root))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_renamed() {
        let a = "def f(x):\n    y = x + 1\n    return y\n";
        let b = "def g(a):\n    b = a + 1\n    return b\n";
        assert_eq!(ast_match(a, a, "python").unwrap(), 1.0);
        assert_eq!(ast_match(b, a, "python").unwrap(), 1.0);
    }

    #[test]
    fn different_literal_lowers_score() {
        let s = ast_match("x = 2\n", "x = 1\n", "python").unwrap();
        assert!(s < 1.0 && s >= 0.0, "{s}");
    }

    #[test]
    fn unparseable_inputs() {
        assert_eq!(ast_match("x = (1\n", "x = 1\n", "python").unwrap(), 0.0);
        assert!(matches!(ast_match("x = 1\n", "x = (1\n", "python"), Err(Error::Syntax { .. })));
    }
}
