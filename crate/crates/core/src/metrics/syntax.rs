//! Grammar-backed lexing and parsing.
//!
//! Code is parsed with the bundled tree-sitter grammar for its language and
//! converted into an owned [`SyntaxTree`]. Comments are dropped and string
//! literals are collapsed into single leaves.

use std::cell::RefCell;

use tree_sitter::{Node, Parser};

use super::TokenSequence;
use crate::{Error, Result};

/// Languages with a bundled grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Language {
    Python,
}

impl Language {
    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag.trim().to_ascii_lowercase().as_str() {
            "python" | "python3" | "py" => Ok(Language::Python),
            _ => Err(Error::UnsupportedLanguage(tag.to_string())),
        }
    }

    /// Reserved words of the language.
    pub fn keywords(self) -> &'static [&'static str] {
        match self {
            Language::Python => &[
                "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class",
                "continue", "def", "del", "elif", "else", "except", "finally", "for", "from",
                "global", "if", "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass",
                "raise", "return", "try", "while", "with", "yield",
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxTree {
    pub kind: String,
    /// Field name of this node within its parent, when the grammar names one.
    pub field: Option<String>,
    /// Source text, present on leaves only.
    pub text: Option<String>,
    pub named: bool,
    pub start_byte: usize,
    pub children: Vec<SyntaxTree>,
}

impl SyntaxTree {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(SyntaxTree::node_count).sum::<usize>()
    }

    pub fn child_by_field(&self, field: &str) -> Option<&SyntaxTree> {
        self.children.iter().find(|c| c.field.as_deref() == Some(field))
    }

    pub fn leaves(&self) -> Vec<&SyntaxTree> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a SyntaxTree>) {
        if self.is_leaf() {
            out.push(self);
        } else {
            for c in &self.children {
                c.collect_leaves(out);
            }
        }
    }

    /// Label used for structural matching: identifiers become a placeholder,
    /// other leaves keep their text, inner nodes are labelled by kind.
    pub fn match_label(&self) -> String {
        match (&self.text, self.is_leaf()) {
            (_, false) => self.kind.clone(),
            _ if self.kind == "identifier" => "<id>".to_string(),
            (Some(text), true) if self.named => format!("{}:{}", self.kind, text),
            (Some(text), true) => text.clone(),
            (None, true) => self.kind.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParsedCode {
    pub root: SyntaxTree,
    /// The grammar could not parse the code without error recovery.
    pub has_error: bool,
}

thread_local! {
    static PYTHON: RefCell<Option<Parser>> = const { RefCell::new(None) };
}

fn convert(node: Node<'_>, field: Option<&str>, src: &[u8]) -> Option<SyntaxTree> {
    let kind = node.kind();
    if kind == "comment" || node.is_missing() {
        return None;
    }
    let text_of = |n: Node<'_>| String::from_utf8_lossy(&src[n.start_byte()..n.end_byte()]).into_owned();
    let collapse = kind == "string" || node.child_count() == 0;
    if collapse {
        let text = text_of(node);
        if text.is_empty() {
            return None;
        }
        return Some(SyntaxTree {
            kind: kind.to_string(),
            field: field.map(str::to_string),
            text: Some(text),
            named: node.is_named(),
            start_byte: node.start_byte(),
            children: Vec::new(),
        });
    }
    let children = (0..node.child_count())
        .filter_map(|i| {
            let child = node.child(i)?;
            convert(child, node.field_name_for_child(i), src)
        })
        .collect();
    Some(SyntaxTree {
        kind: kind.to_string(),
        field: field.map(str::to_string),
        text: None,
        named: node.is_named(),
        start_byte: node.start_byte(),
        children,
    })
}

pub fn parse_code(code: &str, language: Language) -> Result<ParsedCode> {
    match language {
        Language::Python => PYTHON.with(|cell| {
            let mut slot = cell.borrow_mut();
            if slot.is_none() {
                let mut parser = Parser::new();
                parser
                    .set_language(&tree_sitter_python::LANGUAGE.into())
                    .map_err(|e| Error::Infrastructure(format!("loading python grammar: {e}")))?;
                *slot = Some(parser);
            }
            let parser = slot.as_mut().expect("initialised above");
            let tree = parser
                .parse(code, None)
                .ok_or_else(|| Error::Infrastructure("parser returned no tree".into()))?;
            let root = tree.root_node();
            let has_error = root.has_error();
            let root = convert(root, None, code.as_bytes()).unwrap_or(SyntaxTree {
                kind: root.kind().to_string(),
                field: None,
                text: None,
                named: true,
                start_byte: 0,
                children: Vec::new(),
            });
            Ok(ParsedCode { root, has_error })
        }),
    }
}

/// Lexical tokens of `code` for `language_tag`.
pub fn tokenize_code(code: &str, language_tag: &str) -> Result<TokenSequence> {
    let language = Language::from_tag(language_tag)?;
    let parsed = parse_code(code, language)?;
    Ok(TokenSequence::new(
        parsed
            .root
            .leaves()
            .into_iter()
            .filter_map(|l| l.text.clone())
            .collect(),
    ))
}

/// Whitespace and punctuation split for natural-language text.
pub fn tokenize_text(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() || ch == '_' {
            word.push(ch);
        } else {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            if !ch.is_whitespace() {
                tokens.push(ch.to_string());
            }
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    TokenSequence::new(tokens)
}
