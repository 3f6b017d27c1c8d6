//! The pipeline stages behind each subcommand.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::PathBuf;

use codescore_core::corpus::{
    load_corpus, read_records, save_corpus, validate_corpus, write_records, GroundTruthRecord, MetricRecord,
    TaskRecord,
};
use codescore_core::metrics::{
    self, ast_match, bleu, codebleu_parts, compute_trivially_shared, crystalbleu, dataflow_match, embed_prf,
    exact_match, tokenize_code, weighted_ngram_precision, EmbeddingProvider, FileEmbeddingProvider,
    HashedContextProvider, IdfTable, Language, NGram, TokenSequence,
};
use codescore_core::sandbox::{
    aggregate_corpus, CompareOptions, CorpusAggregate, EvalJob, Sandbox, ToolchainTable,
};
use codescore_core::stats::{correlate, CorrelationRecord};
use codescore_core::testgen::llm::{propose_llm_cases, HttpChatClient};
use codescore_core::testgen::{extend_task, ExtensionReport, GenerationBudget};
use codescore_core::unice::{
    examples_from_corpus, load_checkpoint, predict, save_checkpoint, train, EpochLog, ExampleKey, InputFormat,
    ModelCheckpoint,
};
use codescore_core::Error;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::CliError;

fn io_err(path: &std::path::Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn ensure_out(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| io_err(&cfg.out, e).into())
}

fn load_valid_corpus(cfg: &RunConfig) -> Result<Vec<TaskRecord>, CliError> {
    let tasks = load_corpus(cfg.corpus_path()?, cfg.strict)?;
    let report = validate_corpus(&tasks);
    if !report.is_valid() {
        return Err(Error::Validation(report.summary()).into());
    }
    Ok(tasks)
}

fn sandbox(cfg: &RunConfig) -> Result<Sandbox, CliError> {
    Ok(Sandbox::new(ToolchainTable::default(), CompareOptions::default(), cfg.jobs)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecuteOutcome {
    pub path: PathBuf,
    pub records: Vec<GroundTruthRecord>,
    pub aggregate: CorpusAggregate,
}

/// Runs every candidate against its task's suite and writes one ground-truth
/// record per candidate.
pub fn cmd_execute(cfg: &RunConfig) -> Result<ExecuteOutcome, CliError> {
    let tasks = load_valid_corpus(cfg)?;
    let sb = sandbox(cfg)?;
    let tags: HashSet<&str> = tasks.iter().map(|t| t.language_tag.as_str()).collect();
    for tag in tags {
        sb.check_toolchain(tag)?;
    }
    let jobs: Vec<EvalJob<'_>> = tasks
        .iter()
        .flat_map(|t| {
            t.candidates.iter().map(move |c| EvalJob {
                code: &c.code,
                language_tag: &t.language_tag,
                cases: &t.test_cases,
            })
        })
        .collect();
    let results = sb.evaluate_many(&jobs, &cfg.limits);
    let mut records = Vec::with_capacity(results.len());
    let mut truths = Vec::with_capacity(tasks.len());
    let mut it = results.into_iter();
    for t in &tasks {
        let mut per_task = Vec::with_capacity(t.candidates.len());
        for c in &t.candidates {
            let truth = it.next().expect("one result per job")?;
            let rec = GroundTruthRecord::new(&t.task_id, &c.candidate_id, &truth);
            records.push(if cfg.timings { rec } else { rec.without_timings() });
            per_task.push(truth);
        }
        truths.push(per_task);
    }
    let aggregate = aggregate_corpus(&truths)?;
    ensure_out(cfg)?;
    let path = cfg.ground_truth_path();
    write_records(&path, &records)?;
    Ok(ExecuteOutcome {
        path,
        records,
        aggregate,
    })
}

fn fnv1a(text: &str) -> u64 {
    text.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendOutcome {
    pub path: PathBuf,
    pub tasks: Vec<TaskRecord>,
    pub reports: Vec<ExtensionReport>,
}

/// Extends every task's suite; each task draws from its own seed derived from
/// the run seed and its id.
pub fn cmd_extend(cfg: &RunConfig) -> Result<ExtendOutcome, CliError> {
    let tasks = load_valid_corpus(cfg)?;
    let sb = sandbox(cfg)?;
    let client = if cfg.llm.enabled {
        Some(HttpChatClient::from_config(&cfg.llm)?)
    } else {
        None
    };
    let mut out = Vec::with_capacity(tasks.len());
    let mut reports = Vec::with_capacity(tasks.len());
    for task in &tasks {
        let mut budget = GenerationBudget::new(cfg.extend.target, cfg.seed ^ fnv1a(&task.task_id))?;
        if let Some(m) = cfg.extend.max_attempts {
            budget.max_attempts = m;
        }
        budget.strategy_mix = cfg.extend.strategy_mix;
        let ext = extend_task(&sb, task, &budget, &cfg.limits)?;
        let mut extended = ext.task;
        if let Some(client) = &client {
            let proposals = propose_llm_cases(&sb, &extended, client, &cfg.llm, &cfg.limits)?;
            for d in &proposals.diagnostics {
                log::warn!("{}: {d}", task.task_id);
            }
            extended.test_cases.extend(proposals.cases);
        }
        reports.push(ext.report);
        out.push(extended);
    }
    ensure_out(cfg)?;
    let path = cfg.out.join("corpus.extended.jsonl");
    save_corpus(&path, &out)?;
    write_records(cfg.out.join("extension_report.jsonl"), &reports)?;
    Ok(ExtendOutcome {
        path,
        tasks: out,
        reports,
    })
}

pub const MATCH_METRICS: &[&str] = &[
    "exact_match",
    "bleu",
    "weighted_bleu",
    "ast_match",
    "dataflow_match",
    "codebleu",
    "crystalbleu",
    "bertscore_p",
    "bertscore_r",
    "bertscore_f1",
];

pub const LEARNED_METRICS: &[&str] = &["codescore", "exec"];

struct RefData {
    code: String,
    tokens: TokenSequence,
}

struct Scorer<'a> {
    cfg: &'a RunConfig,
    shared: Option<HashSet<NGram>>,
    provider: Option<Box<dyn EmbeddingProvider>>,
    idf: Option<IdfTable>,
    checkpoint: Option<ModelCheckpoint>,
}

impl Scorer<'_> {
    fn match_metric(&self, name: &str, code: &str, cand: &TokenSequence, refs: &[RefData], lang: &str) -> Result<f64, Error> {
        let kappa = self.cfg.metrics.keyword_weight;
        let w = &self.cfg.metrics.codebleu_weights;
        let keywords = || -> Result<HashSet<String>, Error> {
            Ok(Language::from_tag(lang)?.keywords().iter().map(|k| k.to_string()).collect())
        };
        let mut best = f64::NEG_INFINITY;
        for r in refs {
            let v = match name {
                "exact_match" => f64::from(exact_match(code, &r.code)),
                "bleu" => bleu(cand, &r.tokens),
                "weighted_bleu" => weighted_ngram_precision(cand, &r.tokens, &keywords()?, kappa),
                "ast_match" => ast_match(code, &r.code, lang)?,
                "dataflow_match" => dataflow_match(code, &r.code, lang)?,
                "codebleu" => codebleu_parts(code, &r.code, lang, kappa)?.combine(w),
                "crystalbleu" => crystalbleu(cand, &r.tokens, self.shared.as_ref().expect("shared set prepared")),
                "bertscore_p" | "bertscore_r" | "bertscore_f1" => {
                    let provider = self.provider.as_deref().expect("provider prepared");
                    let prf = embed_prf(cand, &r.tokens, provider, self.idf.as_ref())?;
                    match name {
                        "bertscore_p" => prf.precision,
                        "bertscore_r" => prf.recall,
                        _ => prf.f1,
                    }
                }
                other => unreachable!("unknown metric {other}"),
            };
            best = best.max(v);
        }
        Ok(best)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOutcome {
    pub path: PathBuf,
    pub records: Vec<MetricRecord>,
}

/// One record per candidate, enabled metric and selected format. Match
/// metrics compare against references and are reported only for formats that
/// include one; values are the maximum over a task's references.
pub fn cmd_score(cfg: &RunConfig) -> Result<ScoreOutcome, CliError> {
    let names = &cfg.metrics.names;
    for n in names {
        if !MATCH_METRICS.contains(&n.as_str()) && !LEARNED_METRICS.contains(&n.as_str()) {
            return Err(CliError::Usage(format!(
                "unknown metric {n:?}; known: {}, {}",
                MATCH_METRICS.join(", "),
                LEARNED_METRICS.join(", ")
            )));
        }
    }
    if names.is_empty() || cfg.metrics.formats.is_empty() {
        return Err(CliError::Usage("at least one metric and one format are required".into()));
    }
    let tasks = load_corpus(cfg.corpus_path()?, cfg.strict)?;
    if cfg.strict {
        let report = validate_corpus(&tasks);
        if !report.is_valid() {
            return Err(Error::Validation(report.summary()).into());
        }
    }
    let wants = |n: &str| names.iter().any(|x| x == n);
    let needs_refs = names.iter().any(|n| MATCH_METRICS.contains(&n.as_str()))
        && cfg.metrics.formats.iter().any(|f| f.uses_ref())
        || names.iter().any(|n| LEARNED_METRICS.contains(&n.as_str())) && cfg.metrics.formats.iter().any(|f| f.uses_ref());
    if needs_refs {
        if let Some(t) = tasks.iter().find(|t| t.ref_codes.is_empty()) {
            return Err(Error::Validation(format!("task {} has no reference code for the selected formats", t.task_id)).into());
        }
    }

    let mut ref_data: Vec<Vec<RefData>> = Vec::with_capacity(tasks.len());
    for t in &tasks {
        let mut refs = Vec::new();
        for code in &t.ref_codes {
            refs.push(RefData {
                code: code.clone(),
                tokens: tokenize_code(code, &t.language_tag)?,
            });
        }
        ref_data.push(refs);
    }
    let all_refs: Vec<TokenSequence> = ref_data.iter().flatten().map(|r| r.tokens.clone()).collect();

    let mut scorer = Scorer {
        cfg,
        shared: None,
        provider: None,
        idf: None,
        checkpoint: None,
    };
    if wants("crystalbleu") {
        scorer.shared = Some(compute_trivially_shared(&all_refs, cfg.metrics.shared_k)?);
    }
    if names.iter().any(|n| n.starts_with("bertscore_")) {
        scorer.provider = Some(match &cfg.metrics.embeddings {
            Some(p) => Box::new(FileEmbeddingProvider::load(p)?),
            None => Box::new(HashedContextProvider::default()),
        });
        if cfg.metrics.idf {
            let table = IdfTable::from_references(&all_refs);
            ensure_out(cfg)?;
            table.save(cfg.out.join("idf.jsonl"))?;
            scorer.idf = Some(table);
        }
    }
    if wants("codescore") || wants("exec") {
        let path = cfg
            .checkpoint
            .as_ref()
            .ok_or_else(|| CliError::Usage("learned metrics need --checkpoint".into()))?;
        let ckpt = load_checkpoint(path)?;
        if let Some(t) = tasks.iter().find(|t| t.language_tag != ckpt.config.language_tag) {
            return Err(Error::Validation(format!(
                "checkpoint was trained for {} but task {} is {}",
                ckpt.config.language_tag, t.task_id, t.language_tag
            ))
            .into());
        }
        scorer.checkpoint = Some(ckpt);
    }

    let units: Vec<(usize, usize)> = tasks
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| (0..t.candidates.len()).map(move |ci| (ti, ci)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Infrastructure(format!("worker pool: {e}")))?;
    let per_unit: Vec<Result<Vec<MetricRecord>, Error>> = pool.install(|| {
        units
            .par_iter()
            .map(|&(ti, ci)| score_candidate(&scorer, &tasks[ti], ci, &ref_data[ti]))
            .collect()
    });
    let mut records = Vec::new();
    for r in per_unit {
        records.extend(r?);
    }
    ensure_out(cfg)?;
    let path = cfg.scores_path();
    write_records(&path, &records)?;
    Ok(ScoreOutcome { path, records })
}

fn score_candidate(scorer: &Scorer<'_>, task: &TaskRecord, ci: usize, refs: &[RefData]) -> Result<Vec<MetricRecord>, Error> {
    let cfg = scorer.cfg;
    let cand = &task.candidates[ci];
    let lang = task.language_tag.as_str();
    let tokens = tokenize_code(&cand.code, lang)?;
    let mut out = Vec::new();
    let mut cache: HashMap<&str, f64> = HashMap::new();
    let record = |metric: &str, format: InputFormat, value: f64| MetricRecord {
        task_id: task.task_id.clone(),
        candidate_id: cand.candidate_id.clone(),
        metric: metric.to_string(),
        format: format.as_str().to_string(),
        value,
    };
    for &format in &cfg.metrics.formats {
        let learned = match &scorer.checkpoint {
            Some(ckpt) => {
                let key = ExampleKey {
                    task_id: task.task_id.clone(),
                    candidate_id: cand.candidate_id.clone(),
                    format,
                };
                let r = format.uses_ref().then(|| task.ref_codes[0].as_str());
                let n = format.uses_nl().then_some(task.nl.as_str());
                let seq = ckpt.encode(&cand.code, r, n, format, Some(key))?;
                Some(predict(&seq, ckpt)?)
            }
            None => None,
        };
        for name in &cfg.metrics.names {
            let value = match name.as_str() {
                "codescore" => learned.expect("checkpoint loaded").code_score,
                "exec" => f64::from(learned.expect("checkpoint loaded").exec),
                m if format.uses_ref() => match cache.get(m) {
                    Some(v) => *v,
                    None => {
                        let v = scorer.match_metric(m, &cand.code, &tokens, refs, lang)?;
                        cache.insert(m, v);
                        v
                    }
                },
                _ => continue,
            };
            out.push(record(name, format, value));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub path: PathBuf,
    pub checkpoint: ModelCheckpoint,
    pub log: Vec<EpochLog>,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome, CliError> {
    let tasks = load_corpus(cfg.corpus_path()?, cfg.strict)?;
    let truth: Vec<GroundTruthRecord> = read_records(cfg.ground_truth_path())?;
    let examples = examples_from_corpus(&tasks, &truth)?;
    let trained = train(&examples, &cfg.train)?;
    ensure_out(cfg)?;
    let path = cfg.checkpoint_path();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    save_checkpoint(&trained.checkpoint, &path)?;
    write_records(cfg.out.join("train_log.jsonl"), &trained.log)?;
    Ok(TrainOutcome {
        path,
        checkpoint: trained.checkpoint,
        log: trained.log,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelateOutcome {
    pub path: PathBuf,
    pub records: Vec<CorrelationRecord>,
}

/// Joins metric values with ground truth on (task, candidate) and correlates
/// each (metric, format) group with PassRatio.
pub fn cmd_correlate(cfg: &RunConfig) -> Result<CorrelateOutcome, CliError> {
    let truth: Vec<GroundTruthRecord> = read_records(cfg.ground_truth_path())?;
    let scores: Vec<MetricRecord> = read_records(cfg.scores_path())?;
    let records = correlate_records(&truth, &scores, cfg)?;
    ensure_out(cfg)?;
    let path = cfg.correlation_path();
    write_records(&path, &records)?;
    Ok(CorrelateOutcome { path, records })
}

pub fn correlate_records(
    truth: &[GroundTruthRecord],
    scores: &[MetricRecord],
    cfg: &RunConfig,
) -> Result<Vec<CorrelationRecord>, CliError> {
    let by_key: HashMap<(&str, &str), f64> = truth
        .iter()
        .map(|t| ((t.task_id.as_str(), t.candidate_id.as_str()), t.pass_ratio))
        .collect();
    let mut groups: Vec<((String, String), (Vec<f64>, Vec<f64>))> = Vec::new();
    let mut index: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut orphans = Vec::new();
    let mut scored: HashSet<(&str, &str)> = HashSet::new();
    for s in scores {
        let key = (s.task_id.as_str(), s.candidate_id.as_str());
        let Some(&y) = by_key.get(&key) else {
            orphans.push(format!("score {}/{} ({})", s.task_id, s.candidate_id, s.metric));
            continue;
        };
        scored.insert(key);
        let g = *index.entry((s.metric.clone(), s.format.clone())).or_insert_with(|| {
            groups.push(((s.metric.clone(), s.format.clone()), (Vec::new(), Vec::new())));
            groups.len() - 1
        });
        groups[g].1 .0.push(s.value);
        groups[g].1 .1.push(y);
    }
    for t in truth {
        if !scored.contains(&(t.task_id.as_str(), t.candidate_id.as_str())) {
            orphans.push(format!("ground truth {}/{}", t.task_id, t.candidate_id));
        }
    }
    if !orphans.is_empty() {
        if cfg.strict {
            return Err(Error::Validation(format!("unmatched records: {}", orphans.join(", "))).into());
        }
        log::warn!("{} unmatched records skipped", orphans.len());
    }
    groups
        .into_iter()
        .map(|((metric, format), (values, ys))| Ok(correlate(&metric, &format, &values, &ys, cfg.tau_variant)?))
        .collect()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

/// Aligned text table, one row per (metric, format).
pub fn render_table(records: &[CorrelationRecord]) -> String {
    let header = ["Metric", "Format", "Kendall τ", "Spearman r_s", "Pearson r_p", "MAE", "n"];
    let rows: Vec<[String; 7]> = records
        .iter()
        .map(|r| {
            [
                r.metric.clone(),
                r.format.clone(),
                fmt_opt(r.tau),
                fmt_opt(r.spearman),
                fmt_opt(r.pearson),
                fmt_opt(r.mae),
                r.n.to_string(),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| {
                let pad = w - c.chars().count();
                if i < 2 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = line(&header.map(String::from));
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    out.push('\n');
    for row in &rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

pub fn cmd_report(cfg: &RunConfig) -> Result<String, CliError> {
    let records: Vec<CorrelationRecord> = read_records(cfg.correlation_path())?;
    let table = render_table(&records);
    ensure_out(cfg)?;
    codescore_core::corpus::write_atomic(&cfg.out.join("report.txt"), table.as_bytes())?;
    Ok(table)
}

/// Exposed for tests that compare orchestration with direct metric calls.
pub fn tokens(code: &str, lang: &str) -> Result<TokenSequence, Error> {
    metrics::tokenize_code(code, lang)
}

