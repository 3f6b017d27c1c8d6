//! Semantic match over def-use edges.
//!
//! A program is walked in evaluation order (right-hand sides before targets,
//! straight-line through branches and loops) producing definition and use
//! events for identifiers. Two edge families come out of it:
//!
//! - `ComesFrom`: a use reads the most recent definition of the same name;
//! - `ComputedFrom`: a definition is computed from a use on its right-hand side.
//!
//! Variable names are abstracted to `var_i` by order of first appearance in the
//! source, so renaming does not change the edge set.

use std::collections::HashMap;

use super::syntax::{parse_code, Language, SyntaxTree};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowEvent {
    Use {
        name: String,
        pos: usize,
    },
    Def {
        name: String,
        pos: usize,
        /// Uses the defined value is computed from.
        sources: Vec<(String, usize)>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    ComesFrom,
    ComputedFrom,
}

/// A def-use edge between identifier positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowEdge {
    pub kind: EdgeKind,
    pub from_name: String,
    pub from_pos: usize,
    pub to_name: String,
    pub to_pos: usize,
}

/// Edge with variables replaced by their first-appearance placeholder.
pub type AbstractEdge = (EdgeKind, String, String);

struct Walker {
    positions: HashMap<usize, usize>,
    events: Vec<FlowEvent>,
}

impl Walker {
    fn pos(&self, node: &SyntaxTree) -> usize {
        self.positions[&node.start_byte]
    }

    fn name(node: &SyntaxTree) -> String {
        node.text.clone().unwrap_or_default()
    }

    fn is_ident(node: &SyntaxTree) -> bool {
        node.kind == "identifier" && node.is_leaf()
    }

    /// Records uses in an expression and returns them.
    fn uses(&mut self, node: &SyntaxTree) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        self.expr(node, &mut out);
        out
    }

    fn expr(&mut self, node: &SyntaxTree, out: &mut Vec<(String, usize)>) {
        if Self::is_ident(node) {
            let (name, pos) = (Self::name(node), self.pos(node));
            self.events.push(FlowEvent::Use {
                name: name.clone(),
                pos,
            });
            out.push((name, pos));
            return;
        }
        match node.kind.as_str() {
            "attribute" => {
                if let Some(obj) = node.child_by_field("object") {
                    self.expr(obj, out);
                }
            }
            "keyword_argument" => {
                if let Some(v) = node.child_by_field("value") {
                    self.expr(v, out);
                }
            }
            "lambda" => {
                if let Some(params) = node.child_by_field("parameters") {
                    self.parameters(params);
                }
                if let Some(body) = node.child_by_field("body") {
                    self.expr(body, out);
                }
            }
            "named_expression" => {
                let sources = node
                    .child_by_field("value")
                    .map(|v| self.uses(v))
                    .unwrap_or_default();
                if let Some(name) = node.child_by_field("name") {
                    self.define(name, &sources);
                    self.expr(name, out);
                }
                out.extend(sources);
            }
            "list_comprehension" | "set_comprehension" | "dictionary_comprehension" | "generator_expression" => {
                // Clauses bind before the body is evaluated.
                let body = node.child_by_field("body");
                for c in &node.children {
                    if !body.is_some_and(|b| std::ptr::eq(b, c)) {
                        self.statement(c, out);
                    }
                }
                if let Some(b) = body {
                    self.expr(b, out);
                }
            }
            _ => {
                for c in &node.children {
                    self.statement(c, out);
                }
            }
        }
    }

    /// Marks every identifier in a target as defined from `sources`; indices and
    /// attribute owners in the target are uses.
    fn define(&mut self, target: &SyntaxTree, sources: &[(String, usize)]) {
        if Self::is_ident(target) {
            self.events.push(FlowEvent::Def {
                name: Self::name(target),
                pos: self.pos(target),
                sources: sources.to_vec(),
            });
            return;
        }
        match target.kind.as_str() {
            "subscript" | "attribute" => {
                self.uses(target);
            }
            "list_splat_pattern" | "pattern_list" | "tuple_pattern" | "list_pattern" | "tuple" | "list"
            | "parenthesized_expression" => {
                for c in &target.children {
                    self.define(c, sources);
                }
            }
            _ => {}
        }
    }

    fn parameters(&mut self, params: &SyntaxTree) {
        for p in &params.children {
            match p.kind.as_str() {
                "identifier" => self.define(p, &[]),
                "default_parameter" | "typed_default_parameter" => {
                    let sources = p.child_by_field("value").map(|v| self.uses(v)).unwrap_or_default();
                    if let Some(n) = p.child_by_field("name") {
                        self.define(n, &sources);
                    }
                }
                "typed_parameter" | "list_splat_pattern" | "dictionary_splat_pattern" => {
                    if let Some(n) = p.children.iter().find(|c| Self::is_ident(c)) {
                        self.define(n, &[]);
                    }
                }
                _ => {}
            }
        }
    }

    fn statement(&mut self, node: &SyntaxTree, out: &mut Vec<(String, usize)>) {
        match node.kind.as_str() {
            "assignment" => {
                let right = node.child_by_field("right");
                let sources = match right {
                    Some(r) if r.kind == "assignment" => {
                        let mut inner = Vec::new();
                        self.statement(r, &mut inner);
                        inner
                    }
                    Some(r) => self.uses(r),
                    None => Vec::new(),
                };
                if let Some(left) = node.child_by_field("left") {
                    self.define(left, &sources);
                }
                out.extend(sources);
            }
            "augmented_assignment" => {
                let mut sources = node.child_by_field("right").map(|r| self.uses(r)).unwrap_or_default();
                if let Some(left) = node.child_by_field("left") {
                    sources.extend(self.uses(left));
                    self.define(left, &sources);
                }
            }
            "for_statement" | "for_in_clause" => {
                let sources = node.child_by_field("right").map(|r| self.uses(r)).unwrap_or_default();
                if let Some(left) = node.child_by_field("left") {
                    self.define(left, &sources);
                }
                for c in &node.children {
                    if !matches!(c.field.as_deref(), Some("left") | Some("right")) {
                        self.statement(c, out);
                    }
                }
            }
            "function_definition" | "class_definition" => {
                if let Some(name) = node.child_by_field("name") {
                    self.define(name, &[]);
                }
                if let Some(params) = node.child_by_field("parameters") {
                    self.parameters(params);
                }
                if let Some(sup) = node.child_by_field("superclasses") {
                    self.uses(sup);
                }
                if let Some(body) = node.child_by_field("body") {
                    self.statement(body, out);
                }
            }
            "import_statement" | "import_from_statement" => {
                for c in &node.children {
                    if c.field.as_deref() != Some("name") {
                        continue;
                    }
                    let bound = match c.kind.as_str() {
                        "aliased_import" => c.child_by_field("alias"),
                        "dotted_name" => c.children.first(),
                        _ => None,
                    };
                    if let Some(b) = bound {
                        self.define(b, &[]);
                    }
                }
            }
            "as_pattern" => {
                let sources = node
                    .children
                    .first()
                    .map(|v| self.uses(v))
                    .unwrap_or_default();
                if let Some(alias) = node.child_by_field("alias") {
                    for c in &alias.children {
                        self.define(c, &sources);
                    }
                    if Self::is_ident(alias) {
                        self.define(alias, &sources);
                    }
                }
            }
            "global_statement" | "nonlocal_statement" => {}
            _ if Self::is_ident(node) => self.expr(node, out),
            _ if node.is_leaf() => {}
            _ => self.expr(node, out),
        }
    }
}

/// Definition and use events of `code` in evaluation order.
pub fn dataflow_events(code: &str, language_tag: &str) -> Result<Option<Vec<FlowEvent>>> {
    let language = Language::from_tag(language_tag)?;
    let parsed = parse_code(code, language)?;
    if parsed.has_error {
        return Ok(None);
    }
    Ok(Some(events_of(&parsed.root)))
}

pub fn events_of(root: &SyntaxTree) -> Vec<FlowEvent> {
    let positions = root
        .leaves()
        .into_iter()
        .filter(|l| l.kind == "identifier")
        .enumerate()
        .map(|(i, l)| (l.start_byte, i))
        .collect();
    let mut walker = Walker {
        positions,
        events: Vec::new(),
    };
    let mut sink = Vec::new();
    walker.statement(root, &mut sink);
    walker.events
}

/// Edges implied by a sequence of events.
pub fn edges_from_events(events: &[FlowEvent]) -> Vec<FlowEdge> {
    let mut last_def: HashMap<&str, usize> = HashMap::new();
    let mut edges = Vec::new();
    for ev in events {
        match ev {
            FlowEvent::Use { name, pos } => {
                if let Some(&d) = last_def.get(name.as_str()) {
                    edges.push(FlowEdge {
                        kind: EdgeKind::ComesFrom,
                        from_name: name.clone(),
                        from_pos: d,
                        to_name: name.clone(),
                        to_pos: *pos,
                    });
                }
            }
            FlowEvent::Def { name, pos, sources } => {
                for (src, spos) in sources {
                    edges.push(FlowEdge {
                        kind: EdgeKind::ComputedFrom,
                        from_name: src.clone(),
                        from_pos: *spos,
                        to_name: name.clone(),
                        to_pos: *pos,
                    });
                }
                last_def.insert(name.as_str(), *pos);
            }
        }
    }
    edges
}

/// `var_i` placeholders by order of first appearance (lowest position).
pub fn placeholders(events: &[FlowEvent]) -> HashMap<String, String> {
    let mut firsts: Vec<(usize, &str)> = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for ev in events {
        let (name, pos) = match ev {
            FlowEvent::Use { name, pos } | FlowEvent::Def { name, pos, .. } => (name.as_str(), *pos),
        };
        let e = seen.entry(name).or_insert(pos);
        *e = (*e).min(pos);
    }
    firsts.extend(seen.into_iter().map(|(n, p)| (p, n)));
    firsts.sort();
    firsts
        .into_iter()
        .enumerate()
        .map(|(i, (_, n))| (n.to_string(), format!("var_{i}")))
        .collect()
}

pub fn abstract_edges(events: &[FlowEvent]) -> Vec<AbstractEdge> {
    let ph = placeholders(events);
    edges_from_events(events)
        .into_iter()
        .map(|e| (e.kind, ph[&e.from_name].clone(), ph[&e.to_name].clone()))
        .collect()
}

/// Share of reference edges found in the candidate (multiset matching).
pub fn match_edges(candidate: &[AbstractEdge], reference: &[AbstractEdge]) -> f64 {
    if reference.is_empty() {
        return 1.0;
    }
    let mut pool: HashMap<&AbstractEdge, usize> = HashMap::new();
    for e in candidate {
        *pool.entry(e).or_insert(0) += 1;
    }
    let mut matched = 0usize;
    for e in reference {
        if let Some(n) = pool.get_mut(e) {
            if *n > 0 {
                *n -= 1;
                matched += 1;
            }
        }
    }
    matched as f64 / reference.len() as f64
}

/// An unparseable candidate scores 0; an unparseable reference is an error. A
/// reference without edges scores 1.
pub fn dataflow_match(candidate_code: &str, reference_code: &str, language_tag: &str) -> Result<f64> {
    let reference = dataflow_events(reference_code, language_tag)?.ok_or_else(|| Error::Syntax {
        what: "reference code".into(),
        detail: "does not parse".into(),
    })?;
    let Some(candidate) = dataflow_events(candidate_code, language_tag)? else {
        return Ok(0.0);
    };
    Ok(match_edges(&abstract_edges(&candidate), &abstract_edges(&reference)))
}
