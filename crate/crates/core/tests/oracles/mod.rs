//! Definitional recomputations used as test oracles, plus small random
//! generators for the inputs they are checked on.

#![allow(dead_code)]

use std::collections::HashSet;

use codescore_core::metrics::syntax::SyntaxTree;
use rand::seq::SliceRandom;
use rand::Rng;

pub type Gram = Vec<String>;

fn grams(tokens: &[String], n: usize) -> Vec<Gram> {
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n).map(|i| tokens[i..i + n].to_vec()).collect()
}

fn occurrences(list: &[Gram], g: &Gram) -> usize {
    list.iter().filter(|x| *x == g).count()
}

fn distinct(list: &[Gram]) -> Vec<Gram> {
    let mut out: Vec<Gram> = Vec::new();
    for g in list {
        if !out.contains(g) {
            out.push(g.clone());
        }
    }
    out
}

/// Modified precisions p_1..p_4 after discarding `drop` n-grams; `None` for an
/// order whose surviving candidate mass is zero.
fn precisions(c: &[String], r: &[String], drop: &HashSet<Gram>) -> [Option<f64>; 4] {
    let mut out = [None; 4];
    for n in 1..=4 {
        let cg: Vec<Gram> = grams(c, n).into_iter().filter(|g| !drop.contains(g)).collect();
        let rg: Vec<Gram> = grams(r, n).into_iter().filter(|g| !drop.contains(g)).collect();
        if cg.is_empty() {
            continue;
        }
        let clipped: usize = distinct(&cg)
            .iter()
            .map(|g| occurrences(&cg, g).min(occurrences(&rg, g)))
            .sum();
        out[n - 1] = Some(clipped as f64 / cg.len() as f64);
    }
    out
}

fn smoothed_geo(ps: &[Option<f64>; 4], lg: usize, lr: usize) -> f64 {
    let floor = 1.0 / (2.0 * lg as f64);
    let mut s = 0.0;
    for p in ps {
        let p = match p {
            Some(v) if *v > 0.0 => *v,
            _ => floor,
        };
        s += 0.25 * p.ln();
    }
    let bp = if lg >= lr { 1.0 } else { (1.0 - lr as f64 / lg as f64).exp() };
    bp * s.exp()
}

pub fn bleu(c: &[String], r: &[String]) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    smoothed_geo(&precisions(c, r, &HashSet::new()), c.len(), r.len())
}

/// BLEU with every shared n-gram removed from both sides; zero surviving mass
/// scores 0.
pub fn crystalbleu(c: &[String], r: &[String], shared: &HashSet<Gram>) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let ps = precisions(c, r, shared);
    if ps.iter().all(Option::is_none) {
        return 0.0;
    }
    smoothed_geo(&ps, c.len(), r.len())
}

/// Every distinct n-gram (orders 1..4) of `seqs`.
pub fn all_grams(seqs: &[&[String]]) -> Vec<Gram> {
    let mut all = Vec::new();
    for s in seqs {
        for n in 1..=4 {
            all.extend(grams(s, n));
        }
    }
    distinct(&all)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn greedy_side(from: &[Vec<f64>], to: &[Vec<f64>], w: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, v) in from.iter().enumerate() {
        let mut best = f64::NEG_INFINITY;
        for u in to {
            best = best.max(dot(v, u));
        }
        num += w[i] * best;
        den += w[i];
    }
    num / den
}

/// (precision, recall, f1) from per-token vectors and weights.
pub fn prf(cv: &[Vec<f64>], rv: &[Vec<f64>], cw: &[f64], rw: &[f64]) -> (f64, f64, f64) {
    let p = greedy_side(cv, rv, cw);
    let r = greedy_side(rv, cv, rw);
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

fn sign(x: f64, y: f64) -> i32 {
    if x < y {
        -1
    } else if x > y {
        1
    } else {
        0
    }
}

/// Kendall's tau over all index pairs; `tau_b` selects the tie-corrected form.
pub fn kendall(x: &[f64], y: &[f64], tau_b: bool) -> Option<f64> {
    let n = x.len();
    let (mut c, mut d, mut tx, mut ty, mut pairs) = (0i64, 0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in 0..n {
            if i >= j {
                continue;
            }
            pairs += 1;
            let (sx, sy) = (sign(x[i], x[j]), sign(y[i], y[j]));
            if sx == 0 {
                tx += 1;
            }
            if sy == 0 {
                ty += 1;
            }
            match sx * sy {
                1 => c += 1,
                -1 => d += 1,
                _ => {}
            }
        }
    }
    if tau_b {
        let den = (((pairs - tx) * (pairs - ty)) as f64).sqrt();
        (den > 0.0).then(|| (c - d) as f64 / den)
    } else {
        (c + d > 0).then(|| (c - d) as f64 / (c + d) as f64)
    }
}

/// Rank of each value: one plus the number strictly below, plus half the
/// other values equal to it.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|a| {
            let below = v.iter().filter(|b| *b < a).count() as f64;
            let equal = v.iter().filter(|b| *b == a).count() as f64;
            1.0 + below + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx.sqrt() * vy.sqrt()))
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

pub fn mae(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / x.len() as f64
}

// ---------------------------------------------------------------------------
// Trees

fn same_tree(a: &SyntaxTree, b: &SyntaxTree) -> bool {
    if a.is_leaf() != b.is_leaf() {
        return false;
    }
    if a.is_leaf() {
        return a.match_label() == b.match_label();
    }
    a.kind == b.kind
        && a.children.len() == b.children.len()
        && a.children.iter().zip(&b.children).all(|(x, y)| same_tree(x, y))
}

fn inner_nodes<'a>(t: &'a SyntaxTree, out: &mut Vec<&'a SyntaxTree>) {
    if !t.is_leaf() {
        out.push(t);
        for c in &t.children {
            inner_nodes(c, out);
        }
    }
}

/// Each reference inner subtree claims an unused, structurally equal
/// candidate subtree.
pub fn ast_match(candidate: &SyntaxTree, reference: &SyntaxTree) -> f64 {
    let (mut cs, mut rs) = (Vec::new(), Vec::new());
    inner_nodes(candidate, &mut cs);
    inner_nodes(reference, &mut rs);
    if rs.is_empty() {
        return 1.0;
    }
    let mut used = vec![false; cs.len()];
    let mut matched = 0usize;
    for r in &rs {
        if let Some(k) = (0..cs.len()).find(|&k| !used[k] && same_tree(cs[k], r)) {
            used[k] = true;
            matched += 1;
        }
    }
    matched as f64 / rs.len() as f64
}

// ---------------------------------------------------------------------------
// Straight-line programs with a known def-use structure

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Var(String),
    Lit(i64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub target: String,
    pub operands: Vec<Operand>,
    pub ops: Vec<&'static str>,
}

pub fn render(prog: &[Stmt]) -> String {
    let mut s = String::new();
    for st in prog {
        s.push_str(&st.target);
        s.push_str(" = ");
        for (i, o) in st.operands.iter().enumerate() {
            if i > 0 {
                s.push_str(&format!(" {} ", st.ops[i - 1]));
            }
            match o {
                Operand::Var(v) => s.push_str(v),
                Operand::Lit(n) => s.push_str(&n.to_string()),
            }
        }
        s.push('\n');
    }
    s
}

pub fn random_program<R: Rng>(rng: &mut R, max_stmts: usize) -> Vec<Stmt> {
    const VARS: [&str; 4] = ["x", "y", "z", "w"];
    const OPS: [&str; 3] = ["+", "-", "*"];
    let n = rng.gen_range(1..=max_stmts);
    (0..n)
        .map(|_| {
            let k = rng.gen_range(1..=3);
            let operands = (0..k)
                .map(|_| {
                    if rng.gen_bool(0.7) {
                        Operand::Var(VARS.choose(rng).unwrap().to_string())
                    } else {
                        Operand::Lit(rng.gen_range(0..4))
                    }
                })
                .collect();
            Stmt {
                target: VARS.choose(rng).unwrap().to_string(),
                operands,
                ops: (1..k).map(|_| *OPS.choose(rng).unwrap()).collect(),
            }
        })
        .collect()
}

type Edge = (u8, String, String);

/// Edges written directly from the statement list: every variable read links to
/// the latest assignment of that name, every assignment links from the reads
/// on its right-hand side. Names are abstracted by first textual appearance.
pub fn program_edges(prog: &[Stmt]) -> Vec<Edge> {
    let mut order: Vec<String> = Vec::new();
    let note = |v: &str, order: &mut Vec<String>| {
        if !order.iter().any(|o| o == v) {
            order.push(v.to_string());
        }
    };
    for st in prog {
        note(&st.target, &mut order);
        for o in &st.operands {
            if let Operand::Var(v) = o {
                note(v, &mut order);
            }
        }
    }
    let ph = |v: &str| format!("var_{}", order.iter().position(|o| o == v).unwrap());
    let mut assigned: HashSet<String> = HashSet::new();
    let mut edges = Vec::new();
    for st in prog {
        for o in &st.operands {
            if let Operand::Var(v) = o {
                if assigned.contains(v) {
                    edges.push((0u8, ph(v), ph(v)));
                }
                edges.push((1u8, ph(v), ph(&st.target)));
            }
        }
        assigned.insert(st.target.clone());
    }
    edges
}

pub fn dataflow_match(candidate: &[Stmt], reference: &[Stmt]) -> f64 {
    let c = program_edges(candidate);
    let r = program_edges(reference);
    if r.is_empty() {
        return 1.0;
    }
    let mut used = vec![false; c.len()];
    let mut matched = 0usize;
    for e in &r {
        if let Some(k) = (0..c.len()).find(|&k| !used[k] && &c[k] == e) {
            used[k] = true;
            matched += 1;
        }
    }
    matched as f64 / r.len() as f64
}

// ---------------------------------------------------------------------------
// Token sequences and series

pub fn random_tokens<R: Rng>(rng: &mut R, alphabet: &[&str], min: usize, max: usize) -> Vec<String> {
    let n = rng.gen_range(min..=max);
    (0..n).map(|_| alphabet.choose(rng).unwrap().to_string()).collect()
}

/// Paired series; half the draws come from a five-value grid so ties are common.
pub fn random_series<R: Rng>(rng: &mut R, n: usize) -> (Vec<f64>, Vec<f64>) {
    let grid = rng.gen_bool(0.5);
    let draw = |rng: &mut R| {
        if grid {
            f64::from(rng.gen_range(0..5u8)) / 4.0
        } else {
            rng.gen::<f64>()
        }
    };
    let x: Vec<f64> = (0..n).map(|_| draw(rng)).collect();
    let y: Vec<f64> = (0..n).map(|_| draw(rng)).collect();
    (x, y)
}
