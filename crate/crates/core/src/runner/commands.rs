//! The subcommands, independent of argument parsing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::read_file;
use super::{
    baseline_records, execute, has_dev_counterpart, load_run, now_unix, primary_metric,
    score_records, sha256_hex, sweep_argmax, sweep_grid, write_run, FileHash, LoadedRun,
    ProjectConfig, Resources, RunError, RunLock, RunManifest, RunSpec, ScoreReport, SweepCell,
    SweepReport, ENGINE_VERSION, REPORT_JSON, REPORT_TEXT,
};
use crate::analysis::{
    category_counts, classify_tok_errors, genre_breakdown, review_tsv, GenreReport,
    SentenceScores, TokErrorCategory, TokErrorRecord, Rule,
};
use crate::gateway::{Completer, ModelConfig, UsageLedger};
use crate::metrics::MetricReport;
use crate::protocol::{raw_text_of, QueryInput, Task};
use crate::retrieval::{Method, PoolEntry, Query, RetrievalIndex, SelectionSpec};
use crate::treebank::{parse_dependency_file, parse_morph_file, Corpus, CorpusStats, Split};

/// Configuration plus the resources it references.
pub struct Session {
    pub cfg: ProjectConfig,
    pub res: Resources,
}

impl Session {
    pub fn new(cfg: ProjectConfig) -> Result<Self, RunError> {
        let res = Resources::load(&cfg)?;
        Ok(Session { cfg, res })
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        Session::new(ProjectConfig::load(path)?)
    }

    pub fn corpus(&self, task: Task, split: Split) -> Result<(Corpus, FileHash), RunError> {
        self.res.corpus(&self.cfg, task, split)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub kind: String,
    pub split: Split,
    pub file: FileHash,
    pub stats: CorpusStats,
    /// Sentences per genre; `unknown` counts sentences without metadata.
    pub genres: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub splits: Vec<SplitSummary>,
}

impl IngestReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<6} {:<6} {:>9} {:>9} {:>8} {:>7}  genres", "kind", "split", "sentences", "words", "mean len", "roots");
        for s in &self.splits {
            let genres: Vec<String> = s.genres.iter().map(|(g, n)| format!("{g}:{n}")).collect();
            let _ = writeln!(
                out,
                "{:<6} {:<6} {:>9} {:>9} {:>8.2} {:>7}  {}",
                s.kind,
                s.split.to_string(),
                s.stats.sentence_count,
                s.stats.word_count,
                s.stats.mean_length,
                s.stats.mean_root_count.map_or("-".into(), |r| format!("{r:.2}")),
                genres.join(" ")
            );
        }
        out
    }
}

/// Parses and validates every configured treebank file.
pub fn cmd_ingest(session: &Session) -> Result<IngestReport, RunError> {
    let mut splits = Vec::new();
    for (kind, task) in [("dep", Task::ParseGold), ("morph", Task::Tagging)] {
        let paths = if task.is_parsing() { &session.cfg.data.dep } else { &session.cfg.data.morph };
        for split in [Split::Train, Split::Dev, Split::Test] {
            if paths.get(split).is_none() {
                continue;
            }
            let (corpus, file) = session.corpus(task, split)?;
            let stats = corpus.stats().map_err(|e| RunError::Data(format!("{}: {e}", file.path)))?;
            let mut genres = BTreeMap::new();
            for s in &corpus.sentences {
                let g = s.genre.as_ref().map_or("unknown".to_string(), |m| m.genre.clone());
                *genres.entry(g).or_insert(0) += 1;
            }
            splits.push(SplitSummary {
                kind: kind.to_string(),
                split,
                file,
                stats,
                genres,
            });
        }
    }
    if splits.is_empty() {
        return Err(RunError::Usage("no treebank files configured".into()));
    }
    Ok(IngestReport { splits })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub task: Task,
    pub pool_size: usize,
    pub pool_file: FileHash,
    pub embeddings: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ranking: Vec<(String, f64)>,
}

/// Builds the train pool for `task`, checks embedding coverage, and
/// optionally ranks the pool for a query text.
pub fn cmd_index(
    session: &Session,
    task: Task,
    query: Option<(&str, Method, usize)>,
) -> Result<IndexReport, RunError> {
    let (pool, pool_file) = session.corpus(task, Split::Train)?;
    let entries = pool
        .sentences
        .iter()
        .map(|s| PoolEntry {
            id: s.id.clone(),
            text: QueryInput::for_sentence(task, s).render(),
        })
        .collect();
    let mut index = RetrievalIndex::new(Split::Train, entries).map_err(|e| RunError::Data(e.to_string()))?;
    let mut embeddings = None;
    if let Some((v, _)) = Resources::vectors(&session.cfg, Split::Train)? {
        embeddings = Some(v.len());
        index = index.with_vectors(v);
        index.check_embeddings().map_err(|e| RunError::Data(e.to_string()))?;
    }
    let mut ranking = Vec::new();
    if let Some((text, method, k)) = query {
        if method.needs_embeddings() {
            return Err(RunError::Usage("ranking free text needs a text-based method".into()));
        }
        ranking = index
            .rank(&Query::text(text), method)
            .map_err(|e| RunError::Data(e.to_string()))?
            .into_iter()
            .take(k)
            .map(|(id, s)| (id.to_string(), s))
            .collect();
    }
    Ok(IndexReport {
        task,
        pool_size: index.len(),
        pool_file,
        embeddings,
        ranking,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub manifest_sha256: String,
    pub instances: usize,
    pub failed_requests: usize,
    pub ledger: UsageLedger,
}

fn input_hashes(session: &Session, split: Split, selection: &SelectionSpec) -> Result<Vec<FileHash>, RunError> {
    let mut inputs = session.res.hashes.clone();
    if selection.k > 0 && selection.method.needs_embeddings() {
        for s in [Split::Train, split] {
            if let Some((_, h)) = Resources::vectors(&session.cfg, s)? {
                inputs.extend(h);
            }
        }
    }
    Ok(inputs)
}

/// Prompts `completer` over `split` and writes the run into `out`.
#[allow(clippy::too_many_arguments)]
pub fn cmd_run<C: Completer + ?Sized>(
    session: &Session,
    task: Task,
    split: Split,
    selection: SelectionSpec,
    completer: &C,
    model: &ModelConfig,
    parallelism: usize,
    out: &Path,
) -> Result<RunSummary, RunError> {
    if parallelism == 0 {
        return Err(RunError::Usage("parallelism must be at least 1".into()));
    }
    let _lock = RunLock::acquire(out)?;
    let (pool, pool_file) = session.corpus(task, Split::Train)?;
    let (eval, gold) = session.corpus(task, split)?;
    let needs = selection.k > 0 && selection.method.needs_embeddings();
    let pool_vectors = if needs { Resources::vectors(&session.cfg, Split::Train)?.map(|v| v.0) } else { None };
    let eval_vectors = if needs { Resources::vectors(&session.cfg, split)?.map(|v| v.0) } else { None };
    let spec = RunSpec {
        task,
        pool: &pool,
        pool_vectors: pool_vectors.as_ref(),
        eval: &eval,
        eval_vectors: eval_vectors.as_ref(),
        selection,
        ctx: &session.res.ctx,
        table: &session.res.table,
        labels: &session.res.labels,
        metric_opts: session.cfg.metrics,
    };
    let output = execute(&spec, completer, parallelism)?;
    let manifest = RunManifest {
        engine_version: ENGINE_VERSION.to_string(),
        task,
        split,
        gold,
        pool: Some(pool_file),
        inputs: input_hashes(session, split, &selection)?,
        selection,
        model: Some(model.redacted()),
        baseline: None,
        instances: 0,
        predictions_sha256: String::new(),
        created_unix: now_unix(),
    };
    let manifest_sha256 = write_run(out, &output.records, &output.ledger, manifest)?;
    let failed_requests = output.records.iter().filter(|r| r.error.is_some()).count();
    Ok(RunSummary {
        dir: out.to_path_buf(),
        manifest_sha256,
        instances: output.records.len(),
        failed_requests,
        ledger: output.ledger,
    })
}

/// Imports another system's annotated output for `split` as a run.
pub fn cmd_import(
    session: &Session,
    task: Task,
    split: Split,
    predictions: &Path,
    out: &Path,
) -> Result<RunSummary, RunError> {
    let _lock = RunLock::acquire(out)?;
    let (gold_corpus, gold) = session.corpus(task, split)?;
    let (bytes, baseline) = read_file(predictions)?;
    let predicted = if task.is_parsing() {
        parse_dependency_file(&bytes, &session.res.format, split)
    } else {
        parse_morph_file(&bytes, &session.res.ctx.vocab, split)
    }
    .map_err(|e| RunError::Data(format!("{}: {e}", predictions.display())))?;
    let records = baseline_records(task, &gold_corpus, &predicted, &session.cfg.metrics, &session.res.table)?;
    let ledger = UsageLedger::from_entries(records.iter().map(|r| r.usage.clone()).collect(), Default::default());
    let manifest = RunManifest {
        engine_version: ENGINE_VERSION.to_string(),
        task,
        split,
        gold,
        pool: None,
        inputs: session.res.hashes.clone(),
        selection: SelectionSpec::zero_shot(),
        model: None,
        baseline: Some(baseline),
        instances: 0,
        predictions_sha256: String::new(),
        created_unix: now_unix(),
    };
    let manifest_sha256 = write_run(out, &records, &ledger, manifest)?;
    Ok(RunSummary {
        dir: out.to_path_buf(),
        manifest_sha256,
        instances: records.len(),
        failed_requests: 0,
        ledger,
    })
}

fn check_gold(session: &Session, run: &LoadedRun) -> Result<Corpus, RunError> {
    let (gold, hash) = session.corpus(run.manifest.task, run.manifest.split)?;
    if hash.sha256 != run.manifest.gold.sha256 {
        return Err(RunError::Data(format!(
            "gold file {} (sha256 {}) differs from the one the run used ({})",
            hash.path, hash.sha256, run.manifest.gold.sha256
        )));
    }
    Ok(gold)
}

/// Scores a run directory and writes `report.json` and `report.txt` into it.
pub fn cmd_score(session: &Session, run_dir: &Path) -> Result<ScoreReport, RunError> {
    let run = load_run(run_dir)?;
    let gold = check_gold(session, &run)?;
    let (total, _, verdicts, mut warnings) = score_records(
        run.manifest.task,
        &gold,
        &run.records,
        &session.cfg.metrics,
        &session.res.table,
    )?;
    if run.manifest.split == Split::Test {
        let root = run_dir
            .canonicalize()
            .ok()
            .and_then(|p| p.parent().map(Path::to_path_buf))
            .unwrap_or_else(|| PathBuf::from("."));
        if !has_dev_counterpart(&root, &run.manifest) {
            let w = "test split scored under a configuration with no dev run next to it".to_string();
            log::warn!("{w}");
            warnings.push(w);
        }
    }
    let report = ScoreReport {
        manifest_sha256: run.manifest_sha256.clone(),
        task: run.manifest.task,
        split: run.manifest.split,
        metrics: MetricReport::from_counts(&total),
        verdicts,
        count_na: session.cfg.metrics.count_na,
        warnings,
    };
    std::fs::write(run_dir.join(REPORT_JSON), report.to_json()).map_err(super::io_err(run_dir))?;
    std::fs::write(run_dir.join(REPORT_TEXT), report.render()).map_err(super::io_err(run_dir))?;
    Ok(report)
}

/// Evaluates the `ks` x `methods` grid on dev, one run directory per cell.
#[allow(clippy::too_many_arguments)]
pub fn cmd_sweep<C: Completer + ?Sized>(
    session: &Session,
    task: Task,
    ks: &[usize],
    methods: &[Method],
    seed: u64,
    completer: &C,
    model: &ModelConfig,
    parallelism: usize,
    out: &Path,
) -> Result<SweepReport, RunError> {
    let metric = session
        .cfg
        .sweep
        .metric
        .clone()
        .unwrap_or_else(|| primary_metric(task).to_string());
    if methods.iter().any(|m| m.needs_embeddings()) && ks.iter().any(|&k| k > 0) {
        for split in [Split::Train, Split::Dev] {
            if Resources::vectors(&session.cfg, split)?.is_none() {
                return Err(RunError::Usage(format!("cosine methods need {split} embeddings")));
            }
        }
    }
    let mut cells = Vec::new();
    let mut cost = 0.0;
    for (k, method) in sweep_grid(ks, methods) {
        let dir = out.join(format!("{method}-k{k}"));
        let selection = SelectionSpec { k, method, seed };
        let summary = cmd_run(session, task, Split::Dev, selection, completer, model, parallelism, &dir)?;
        cost += summary.ledger.cost;
        let report = cmd_score(session, &dir)?;
        cells.push(SweepCell {
            k,
            method,
            score: report.metrics.get(&metric),
            invalid: report.verdicts.invalid,
            manifest_sha256: Some(summary.manifest_sha256),
        });
    }
    let mut ks_sorted = ks.to_vec();
    ks_sorted.sort_unstable();
    ks_sorted.dedup();
    let report = SweepReport {
        task,
        metric,
        ks: ks_sorted,
        best: sweep_argmax(&cells),
        cells,
        cost,
    };
    std::fs::create_dir_all(out).map_err(super::io_err(out))?;
    std::fs::write(
        out.join("sweep.json"),
        serde_json::to_string_pretty(&report).expect("serializable") + "\n",
    )
    .map_err(super::io_err(out))?;
    std::fs::write(out.join("sweep.txt"), report.render()).map_err(super::io_err(out))?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokErrorSummary {
    pub system: String,
    pub counts: Vec<(TokErrorCategory, usize)>,
    pub records: Vec<TokErrorRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    /// System name and manifest hash of every analysed run.
    pub manifests: Vec<(String, String)>,
    pub genres: GenreReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tok_errors: Vec<TokErrorSummary>,
}

impl AnalysisReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (s, h) in &self.manifests {
            let _ = writeln!(out, "{s}: manifest {h}");
        }
        out.push_str(&self.genres.render());
        for t in &self.tok_errors {
            let total: usize = t.counts.iter().map(|(_, n)| n).sum();
            let _ = writeln!(out, "tokenization errors for {} ({total})", t.system);
            for (c, n) in &t.counts {
                let share = if total == 0 { 0.0 } else { 100.0 * *n as f64 / total as f64 };
                let _ = writeln!(out, "  {:<20} {n:>6} {share:>5.0}%", c.as_str());
            }
        }
        out
    }
}

fn system_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Genre breakdown of one or more runs over the same gold split, with a
/// hybrid column when two runs are given and tokenization error analysis
/// for raw-text parsing runs.
pub fn cmd_analyze(
    session: &Session,
    run_dirs: &[PathBuf],
    review_out: Option<&Path>,
) -> Result<AnalysisReport, RunError> {
    let runs: Vec<LoadedRun> = run_dirs.iter().map(|d| load_run(d)).collect::<Result<_, _>>()?;
    let first = runs.first().ok_or_else(|| RunError::Usage("no runs to analyse".into()))?;
    let (task, split) = (first.manifest.task, first.manifest.split);
    if runs.iter().any(|r| r.manifest.task != task || r.manifest.split != split) {
        return Err(RunError::Usage("runs must share task and split".into()));
    }
    let gold = check_gold(session, first)?;
    let mut systems = Vec::new();
    let mut per_system = Vec::new();
    for r in &runs {
        check_gold(session, r)?;
        let (_, per_sentence, _, _) =
            score_records(task, &gold, &r.records, &session.cfg.metrics, &session.res.table)?;
        systems.push(system_name(&r.dir));
        per_system.push(per_sentence);
    }
    let sentences: Vec<SentenceScores> = gold
        .sentences
        .iter()
        .enumerate()
        .map(|(i, s)| SentenceScores {
            id: s.id.clone(),
            meta: s.genre.clone(),
            gold_roots: s.root_count(),
            counts: per_system.iter().map(|p| p[i].1.clone()).collect(),
        })
        .collect();
    let rule: Rule = match &session.cfg.analysis.rule {
        Some(r) => r.parse().map_err(|e| RunError::Usage(format!("analysis rule: {e}")))?,
        None => Rule::default(),
    };
    let metric = session
        .cfg
        .analysis
        .metric
        .clone()
        .unwrap_or_else(|| primary_metric(task).to_string());
    let expected: Vec<&str> = session.res.sidecar.as_ref().map(|s| s.genres()).unwrap_or_default();
    let genres = genre_breakdown(&systems, &sentences, &expected, &metric, Some(&rule));

    let mut tok_errors = Vec::new();
    let mut all_records = Vec::new();
    if task == Task::ParseRaw {
        for (name, r) in systems.iter().zip(&runs) {
            let mut records = Vec::new();
            for rec in &r.records {
                let Some(g) = gold.get(&rec.sentence_id) else { continue };
                let gold_forms = g.forms();
                let pred_forms = rec.parsed.forms();
                let al = crate::align::align_tokens(&gold_forms, &pred_forms, &session.res.table);
                records.extend(classify_tok_errors(
                    &g.id,
                    &gold_forms,
                    &pred_forms,
                    &al,
                    &raw_text_of(g),
                    &session.res.table,
                ));
            }
            all_records.extend(records.iter().cloned());
            tok_errors.push(TokErrorSummary {
                system: name.clone(),
                counts: category_counts(&records),
                records,
            });
        }
    }
    if let Some(path) = review_out {
        std::fs::write(path, review_tsv(&all_records)).map_err(super::io_err(path))?;
    }
    Ok(AnalysisReport {
        manifests: systems
            .iter()
            .cloned()
            .zip(runs.iter().map(|r| r.manifest_sha256.clone()))
            .collect(),
        genres,
        tok_errors,
    })
}

/// Renders a saved JSON report (score, sweep or analysis) as text.
pub fn cmd_report(path: &Path) -> Result<String, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Data(format!("{}: {e}", path.display())))?;
    if let Ok(r) = serde_json::from_str::<ScoreReport>(&text) {
        return Ok(r.render());
    }
    if let Ok(r) = serde_json::from_str::<SweepReport>(&text) {
        return Ok(r.render());
    }
    if let Ok(r) = serde_json::from_str::<AnalysisReport>(&text) {
        return Ok(r.render());
    }
    Err(RunError::Data(format!("{} is not a score, sweep or analysis report", path.display())))
}

/// Hash of a report's JSON, for cross-run comparisons.
pub fn report_digest(report: &ScoreReport) -> String {
    sha256_hex(report.to_json().as_bytes())
}
