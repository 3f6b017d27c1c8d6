//! Property checks over randomly generated corpora, token streams, values and verdicts.

use std::collections::{BTreeMap, HashSet};

use codescore_core::corpus::{load_corpus, save_corpus, validate_corpus, CandidateCode, TaskRecord, TestCase};
use codescore_core::metrics::{
    best_over_references, bleu, crystalbleu, embed_prf, exact_match, weighted_ngram_precision, CodeBleuParts,
    CodeBleuWeights, HashedContextProvider, TokenSequence,
};
use codescore_core::sandbox::{CandidateGroundTruth, CaseOutcome, CaseStatus};
use codescore_core::testgen::{enumerate_inputs, infer_input_type, GenerationBudget};
use codescore_core::value::Value;
use proptest::prelude::*;

fn scalar() -> impl Strategy<Value = Value> {
    prop_oneof![
        any::<bool>().prop_map(Value::Bool),
        (-1000i64..1000).prop_map(Value::Int),
        (-1.0e3f64..1.0e3).prop_map(Value::Real),
        "[a-z ]{0,6}".prop_map(Value::Str),
    ]
}

fn value() -> impl Strategy<Value = Value> {
    scalar().prop_recursive(2, 12, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Seq),
            prop::collection::btree_map("[a-z]{1,3}", inner, 0..3).prop_map(Value::Map),
        ]
    })
}

fn case() -> impl Strategy<Value = TestCase> {
    prop_oneof![
        ("[ -~\n]{0,12}", "[ -~\n]{0,12}").prop_map(|(i, o)| TestCase::stdio(i, o)),
        (prop::collection::vec(value(), 0..3), value()).prop_map(|(a, e)| TestCase::call("f", a, e)),
    ]
}

fn task(i: usize) -> impl Strategy<Value = TaskRecord> {
    (
        "[ -~]{1,30}",
        prop::collection::vec("[ -~\n]{1,40}", 1..3),
        prop::collection::vec(case(), 1..5),
        prop::collection::vec("[ -~\n]{0,40}", 0..4),
    )
        .prop_map(move |(nl, refs, cases, codes)| {
            let mut seen = HashSet::new();
            let stdio = matches!(cases[0].kind, codescore_core::corpus::CaseKind::Stdio { .. });
            let test_cases = cases
                .into_iter()
                .filter(|c| matches!(c.kind, codescore_core::corpus::CaseKind::Stdio { .. }) == stdio)
                .filter(|c| seen.insert(c.input_key()))
                .collect();
            TaskRecord {
                task_id: format!("t{i}"),
                nl,
                ref_codes: refs,
                language_tag: "python".into(),
                test_cases,
                candidates: codes.into_iter().enumerate().map(|(k, c)| CandidateCode::new(format!("c{k}"), c)).collect(),
            }
        })
}

fn corpus() -> impl Strategy<Value = Vec<TaskRecord>> {
    (1usize..4).prop_flat_map(|n| (0..n).map(task).collect::<Vec<_>>())
}

fn tokens(max: usize) -> impl Strategy<Value = TokenSequence> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "if", "(", ")", "x"]), 0..max)
        .prop_map(|t| TokenSequence::new(t.into_iter().map(String::from).collect()))
}

fn status() -> impl Strategy<Value = CaseStatus> {
    prop::sample::select(vec![
        CaseStatus::Pass,
        CaseStatus::WrongOutput,
        CaseStatus::RuntimeError,
        CaseStatus::CompileError,
        CaseStatus::Timeout,
        CaseStatus::ResourceExceeded,
    ])
}

fn outcome(status: CaseStatus) -> CaseOutcome {
    CaseOutcome {
        status,
        stdout: String::new(),
        stderr: String::new(),
        duration_ms: 0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corpus_round_trips_and_stays_valid(tasks in corpus()) {
        prop_assume!(validate_corpus(&tasks).is_valid());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        save_corpus(&path, &tasks).unwrap();
        let back = load_corpus(&path, true).unwrap();
        prop_assert_eq!(&back, &tasks);
        prop_assert!(validate_corpus(&back).is_valid());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ngram_metrics_are_bounded(c in tokens(12), r in tokens(12)) {
        let kw: HashSet<String> = ["if".to_string()].into();
        for v in [bleu(&c, &r), weighted_ngram_precision(&c, &r, &kw, 5.0), crystalbleu(&c, &r, &HashSet::new())] {
            prop_assert!((0.0..=1.0).contains(&v), "{}", v);
        }
    }

    #[test]
    fn identical_sequences_score_one(c in tokens(12)) {
        prop_assume!(c.len() >= 4);
        prop_assert!((bleu(&c, &c) - 1.0).abs() < 1e-12);
        let p = embed_prf(&c, &c, &HashedContextProvider::default(), None).unwrap();
        prop_assert!((p.f1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn crystal_without_shared_and_unit_kappa_equal_bleu(c in tokens(12), r in tokens(12)) {
        let b = bleu(&c, &r);
        prop_assert_eq!(crystalbleu(&c, &r, &HashSet::new()), b);
        let kw: HashSet<String> = ["if".to_string(), "x".to_string()].into();
        prop_assert!((weighted_ngram_precision(&c, &r, &kw, 1.0) - b).abs() < 1e-12);
    }

    #[test]
    fn embed_f1_is_symmetric_without_idf(c in tokens(10), r in tokens(10)) {
        prop_assume!(!c.is_empty() && !r.is_empty());
        let p = HashedContextProvider::default();
        let a = embed_prf(&c, &r, &p, None).unwrap();
        let b = embed_prf(&r, &c, &p, None).unwrap();
        prop_assert!((a.f1 - b.f1).abs() < 1e-12);
        for v in [a.precision, a.recall, a.f1] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn exact_match_is_binary(c in "[a-c ]{0,5}", r in "[a-c ]{0,5}") {
        let m = exact_match(&c, &r);
        prop_assert!(m <= 1);
        prop_assert_eq!(exact_match(&c, &c), 1);
    }

    #[test]
    fn codebleu_is_linear_in_parts(parts in prop::array::uniform4(0.0f64..=1.0), w in prop::array::uniform4(0.01f64..1.0)) {
        let s: f64 = w.iter().sum();
        let weights = CodeBleuWeights::new(w[0] / s, w[1] / s, w[2] / s, w[3] / s).unwrap();
        let p = CodeBleuParts { bleu: parts[0], weighted_bleu: parts[1], ast_match: parts[2], dataflow_match: parts[3] };
        let expect = (0..4).map(|k| parts[k] * w[k] / s).sum::<f64>();
        prop_assert!((p.combine(&weights) - expect).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&p.combine(&weights)));
    }

    #[test]
    fn extra_reference_never_lowers_score(c in tokens(10), refs in prop::collection::vec(tokens(10), 1..4), extra in tokens(10)) {
        let text = |t: &TokenSequence| t.tokens.join(" ");
        let score = |r: &str| Ok(bleu(&c, &TokenSequence::new(r.split_whitespace().map(String::from).collect())));
        let mut names: Vec<String> = refs.iter().map(text).collect();
        let before = best_over_references(&names, score).unwrap();
        names.push(text(&extra));
        prop_assert!(best_over_references(&names, score).unwrap() >= before);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn inferred_type_covers_examples(examples in prop::collection::vec(value(), 1..5)) {
        let d = infer_input_type(&examples).unwrap();
        for e in &examples {
            prop_assert!(d.admits(e), "{:?} not admitted by {:?}", e, d);
        }
    }

    #[test]
    fn enumeration_is_sound_distinct_and_seeded(examples in prop::collection::vec(value(), 1..4), seed in any::<u64>()) {
        let d = infer_input_type(&examples).unwrap();
        let b = GenerationBudget::new(20, seed).unwrap();
        let first = enumerate_inputs(&d, &b).unwrap();
        let keys: HashSet<String> = first.inputs.iter().map(Value::canonical).collect();
        prop_assert_eq!(keys.len(), first.inputs.len());
        prop_assert!(first.inputs.iter().all(|v| d.admits(v)));
        prop_assert_eq!(first.inputs.len() + first.shortfall, 20);
        prop_assert_eq!(enumerate_inputs(&d, &b).unwrap(), first);
    }

    #[test]
    fn pass_ratio_counts_passes_exactly(statuses in prop::collection::vec(status(), 1..30), extra in status()) {
        let gt = CandidateGroundTruth::from_outcomes(statuses.iter().copied().map(outcome).collect()).unwrap();
        let passes = statuses.iter().filter(|s| **s == CaseStatus::Pass).count();
        let scaled = gt.pass_ratio * statuses.len() as f64;
        prop_assert_eq!(scaled.round() as usize, passes);
        prop_assert!((scaled - scaled.round()).abs() < 1e-9);

        let mut more = statuses.clone();
        more.push(extra);
        let grown = CandidateGroundTruth::from_outcomes(more.into_iter().map(outcome).collect()).unwrap();
        prop_assert!(grown.passed() >= gt.passed());
        if gt.executability == 0 {
            prop_assert_eq!(grown.executability, 0);
        }
    }
}

#[test]
fn map_values_survive_inference() {
    let m: BTreeMap<String, Value> = [("a".to_string(), Value::Int(1))].into();
    let d = infer_input_type(&[Value::Map(m.clone())]).unwrap();
    assert!(d.admits(&Value::Map(m)));
}
