//! Metrics and statistics against definitional recomputations.

mod oracles;

use std::collections::HashSet;

use codescore_core::metrics::syntax::{parse_code, Language};
use codescore_core::metrics::{
    ast_match, bleu, codebleu, codebleu_parts, crystalbleu, dataflow_match, embed_prf, tokenize_code,
    weighted_ngram_precision, CodeBleuWeights, EmbeddingProvider, HashedContextProvider, IdfTable, TokenSequence,
};
use codescore_core::stats::{kendall_tau_with, mae, pearson, spearman, PairedSeries, TauVariant};
use codescore_core::Result;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALPHABET: &[&str] = &["a", "b", "c", "(", ")", ",", "x", "="];

fn seq(t: Vec<String>) -> TokenSequence {
    TokenSequence::new(t)
}

#[test]
fn bleu_matches_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let c = oracles::random_tokens(&mut rng, ALPHABET, 0, 14);
        let r = oracles::random_tokens(&mut rng, ALPHABET, 1, 14);
        let got = bleu(&seq(c.clone()), &seq(r.clone()));
        let want = oracles::bleu(&c, &r);
        assert!((got - want).abs() < 1e-9, "{c:?} {r:?}: {got} vs {want}");
    }
}

#[test]
fn crystalbleu_matches_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..300 {
        let c = oracles::random_tokens(&mut rng, ALPHABET, 0, 12);
        let r = oracles::random_tokens(&mut rng, ALPHABET, 1, 12);
        let pool = oracles::all_grams(&[&c, &r]);
        let k = rng.gen_range(0..=pool.len());
        let shared: HashSet<Vec<String>> = pool.choose_multiple(&mut rng, k).cloned().collect();
        let got = crystalbleu(&seq(c.clone()), &seq(r.clone()), &shared);
        let want = oracles::crystalbleu(&c, &r, &shared);
        assert!((got - want).abs() < 1e-9, "{c:?} {r:?} {shared:?}: {got} vs {want}");
    }
}

/// Fixed random unit vectors per token, independent of position.
struct TableProvider {
    dim: usize,
    seed: u64,
}

impl EmbeddingProvider for TableProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(tokens
            .iter()
            .map(|t| {
                let h = t.bytes().fold(self.seed, |h, b| h.wrapping_mul(31).wrapping_add(u64::from(b)));
                let mut rng = ChaCha8Rng::seed_from_u64(h);
                let v: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / n).collect()
            })
            .collect())
    }
}

#[test]
fn embed_prf_matches_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let hashed = HashedContextProvider::default();
    for i in 0..200 {
        let c = oracles::random_tokens(&mut rng, ALPHABET, 1, 10);
        let r = oracles::random_tokens(&mut rng, ALPHABET, 1, 10);
        let table = TableProvider { dim: 8, seed: i };
        let provider: &dyn EmbeddingProvider = if i % 2 == 0 { &table } else { &hashed };
        let idf = (i % 3 != 0).then(|| IdfTable {
            weights: ALPHABET.iter().map(|t| (t.to_string(), rng.gen_range(0.1..3.0))).collect(),
            default: 1.0,
        });
        let got = embed_prf(&seq(c.clone()), &seq(r.clone()), provider, idf.as_ref()).unwrap();
        let weigh = |s: &[String]| -> Vec<f64> {
            s.iter().map(|t| idf.as_ref().map_or(1.0, |w| w.weights[t])).collect()
        };
        let (p, rc, f) = oracles::prf(
            &provider.embed(&c).unwrap(),
            &provider.embed(&r).unwrap(),
            &weigh(&c),
            &weigh(&r),
        );
        for (a, b) in [(got.precision, p), (got.recall, rc), (got.f1, f)] {
            assert!((a - b).abs() < 1e-9, "{c:?} {r:?}: {a} vs {b}");
        }
    }
}

#[test]
fn statistics_match_definitions() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..300 {
        let n = rng.gen_range(2..30);
        let (x, y) = oracles::random_series(&mut rng, n);
        let s = PairedSeries::new(&x, &y).unwrap();
        let close = |got: Option<f64>, want: Option<f64>| match (got, want) {
            (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12, "{x:?} {y:?}: {a} vs {b}"),
            (None, None) => {}
            other => panic!("definedness differs on {x:?} {y:?}: {other:?}"),
        };
        close(kendall_tau_with(&s, TauVariant::Literal).ok(), oracles::kendall(&x, &y, false));
        close(kendall_tau_with(&s, TauVariant::TieCorrected).ok(), oracles::kendall(&x, &y, true));
        close(spearman(&s).ok(), oracles::spearman(&x, &y));
        close(pearson(&s).ok(), oracles::pearson(&x, &y));
        close(mae(&s).ok(), Some(oracles::mae(&x, &y)));
    }
}

fn small_pairs(seed: u64, count: usize) -> Vec<(Vec<oracles::Stmt>, Vec<oracles::Stmt>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let c = oracles::random_program(&mut rng, 3);
        let r = oracles::random_program(&mut rng, 3);
        let small = |p: &[oracles::Stmt]| {
            parse_code(&oracles::render(p), Language::Python).unwrap().root.node_count() <= 30
        };
        if small(&c) && small(&r) {
            out.push((c, r));
        }
    }
    out
}

#[test]
fn ast_match_equals_brute_force() {
    for (c, r) in small_pairs(15, 80) {
        let (cs, rs) = (oracles::render(&c), oracles::render(&r));
        let ct = parse_code(&cs, Language::Python).unwrap();
        let rt = parse_code(&rs, Language::Python).unwrap();
        assert!(!ct.has_error && !rt.has_error);
        let want = oracles::ast_match(&ct.root, &rt.root);
        assert_eq!(ast_match(&cs, &rs, "python").unwrap(), want, "{cs}\n--\n{rs}");
    }
}

#[test]
fn dataflow_match_equals_brute_force() {
    for (c, r) in small_pairs(16, 80) {
        let (cs, rs) = (oracles::render(&c), oracles::render(&r));
        let want = oracles::dataflow_match(&c, &r);
        assert_eq!(dataflow_match(&cs, &rs, "python").unwrap(), want, "{cs}\n--\n{rs}");
    }
}

const PROGRAMS: &[&str] = &[
    "def f(a, b):\n    return a + b\n",
    "def f(x, y):\n    s = x\n    s = s + y\n    return s\n",
    "def g(n):\n    t = 0\n    for i in range(n):\n        t += i\n    return t\n",
    "x = int(input())\nprint(x * 2)\n",
    "if a > b:\n    m = a\nelse:\n    m = b\n",
];

#[test]
fn codebleu_is_the_weighted_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for c in PROGRAMS {
        for r in PROGRAMS {
            let parts = codebleu_parts(c, r, "python", 5.0).unwrap();
            for _ in 0..5 {
                let raw: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
                let total: f64 = raw.iter().sum();
                let w = CodeBleuWeights {
                    alpha: raw[0] / total,
                    beta: raw[1] / total,
                    delta: raw[2] / total,
                    zeta: 1.0 - (raw[0] + raw[1] + raw[2]) / total,
                };
                let want = w.alpha * parts.bleu
                    + w.beta * parts.weighted_bleu
                    + w.delta * parts.ast_match
                    + w.zeta * parts.dataflow_match;
                if w.validate().is_ok() {
                    assert_eq!(codebleu(c, r, "python", &w).unwrap(), want);
                }
            }
            let singles = [
                (CodeBleuWeights::new(1.0, 0.0, 0.0, 0.0).unwrap(), parts.bleu),
                (CodeBleuWeights::new(0.0, 1.0, 0.0, 0.0).unwrap(), parts.weighted_bleu),
                (CodeBleuWeights::new(0.0, 0.0, 1.0, 0.0).unwrap(), parts.ast_match),
                (CodeBleuWeights::new(0.0, 0.0, 0.0, 1.0).unwrap(), parts.dataflow_match),
            ];
            for (w, v) in singles {
                assert_eq!(codebleu(c, r, "python", &w).unwrap(), v);
            }
            let (ct, rt) = (tokenize_code(c, "python").unwrap(), tokenize_code(r, "python").unwrap());
            let kw: HashSet<String> = Language::Python.keywords().iter().map(|k| k.to_string()).collect();
            assert_eq!(weighted_ngram_precision(&ct, &rt, &kw, 1.0), bleu(&ct, &rt));
            assert_eq!(crystalbleu(&ct, &rt, &HashSet::new()), bleu(&ct, &rt));
        }
    }
}
