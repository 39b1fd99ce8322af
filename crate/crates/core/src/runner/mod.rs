//! Orchestration: prompting a model over a split, persisting predictions
//! and manifests, scoring, and configuration sweeps.

mod commands;
mod config;
mod score;

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::{run_batch, Completer, ModelConfig, UsageEntry, UsageLedger};
use crate::protocol::{
    build_prompt, parse_parsing_output, parse_tagging_output, Demonstration, ParsedOutput,
    PromptContext, QueryInput, Task,
};
use crate::retrieval::{select_demos, PoolEntry, Query, RetrievalIndex, SelectionSpec, VectorSet};
use crate::tok::NormalizationTable;
use crate::treebank::{Corpus, LabelSet, Sentence, Split};

pub use self::commands::{
    cmd_analyze, cmd_import, cmd_index, cmd_ingest, cmd_report, cmd_run, cmd_score, cmd_sweep,
    report_digest, AnalysisReport, IndexReport, IngestReport, RunSummary, Session, SplitSummary,
    TokErrorSummary,
};
pub use self::config::{
    AnalysisConfig, DataConfig, DepLayout, EmbeddingPaths, FileHash, ProjectConfig, Resources,
    SplitPaths, SweepConfig, VectorPaths,
};
pub use self::score::{
    baseline_records, has_dev_counterpart, instance_counts, primary_metric, score_records,
    ScoreReport, VerdictCounts,
};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Endpoint(String),
    #[error("{0}")]
    Io(String),
}

impl RunError {
    /// Process exit code: 1 usage, 2 data, 3 endpoint.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 1,
            RunError::Data(_) | RunError::Io(_) => 2,
            RunError::Endpoint(_) => 3,
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl Fn(std::io::Error) -> RunError + '_ {
    move |e| RunError::Io(format!("{}: {e}", path.display()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Seed for one query, so random selections do not depend on the order in
/// which queries are processed.
pub fn query_seed(seed: u64, sentence_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(sentence_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub index: usize,
    pub sentence_id: String,
    pub demo_ids: Vec<String>,
    pub prompt_sha256: String,
    /// Model reply; absent when the request failed or for imported baselines.
    pub raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub parsed: ParsedOutput,
    pub usage: UsageEntry,
    pub scores: crate::metrics::MetricReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub engine_version: String,
    pub task: Task,
    pub split: Split,
    pub gold: FileHash,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<FileHash>,
    /// Embeddings, vocabulary, normalization, template and sidecar hashes.
    pub inputs: Vec<FileHash>,
    pub selection: SelectionSpec,
    /// Model settings without the credential reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    /// Set when predictions were imported from a file instead of a model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<FileHash>,
    pub instances: usize,
    pub predictions_sha256: String,
    pub created_unix: u64,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }
}

/// The inputs of one prompting run.
pub struct RunSpec<'a> {
    pub task: Task,
    pub pool: &'a Corpus,
    pub pool_vectors: Option<&'a VectorSet>,
    pub eval: &'a Corpus,
    pub eval_vectors: Option<&'a VectorSet>,
    pub selection: SelectionSpec,
    pub ctx: &'a PromptContext,
    pub table: &'a NormalizationTable,
    pub labels: &'a LabelSet,
    pub metric_opts: crate::metrics::MetricOptions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PromptJob {
    pub sentence_id: String,
    pub demo_ids: Vec<String>,
    pub prompt: String,
}

/// Builds the prompt for every sentence of the evaluated split.
pub fn prepare_prompts(spec: &RunSpec<'_>) -> Result<Vec<PromptJob>, RunError> {
    if spec.pool.split != Split::Train {
        return Err(RunError::Usage("demonstrations must come from the train split".into()));
    }
    let data = |e: String| RunError::Data(e);
    let entries: Vec<PoolEntry> = spec
        .pool
        .sentences
        .iter()
        .map(|s| PoolEntry {
            id: s.id.clone(),
            text: QueryInput::for_sentence(spec.task, s).render(),
        })
        .collect();
    let mut index = RetrievalIndex::new(spec.pool.split, entries).map_err(|e| data(e.to_string()))?;
    if spec.selection.k > 0 && spec.selection.method.needs_embeddings() {
        let v = spec
            .pool_vectors
            .ok_or_else(|| RunError::Usage(format!("{} needs train embeddings", spec.selection.method)))?;
        index = index.with_vectors(v.clone());
        index.check_embeddings().map_err(|e| data(e.to_string()))?;
        if spec.eval_vectors.is_none() {
            return Err(RunError::Usage(format!(
                "{} needs embeddings for the {} split",
                spec.selection.method, spec.eval.split
            )));
        }
    }
    let by_id: HashMap<&str, &Sentence> =
        spec.pool.sentences.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut demo_cache: HashMap<String, Demonstration> = HashMap::new();
    let mut jobs = Vec::with_capacity(spec.eval.len());
    for s in &spec.eval.sentences {
        let input = QueryInput::for_sentence(spec.task, s);
        let text = input.render();
        let embedding = match (spec.selection.k > 0 && spec.selection.method.needs_embeddings(), spec.eval_vectors) {
            (true, Some(v)) => Some(v.get(&s.id).ok_or_else(|| {
                data(format!("no embedding for {} sentence {}", spec.eval.split, s.id))
            })?),
            _ => None,
        };
        let query = Query {
            id: Some(&s.id),
            text: &text,
            embedding,
        };
        let sel = SelectionSpec {
            seed: query_seed(spec.selection.seed, &s.id),
            ..spec.selection
        };
        let demo_ids = select_demos(&index, &query, &sel).map_err(|e| data(e.to_string()))?;
        let mut demos = Vec::with_capacity(demo_ids.len());
        for id in &demo_ids {
            if !demo_cache.contains_key(id) {
                let d = Demonstration::from_sentence(spec.task, by_id[id.as_str()])
                    .map_err(|e| data(e.to_string()))?;
                demo_cache.insert(id.clone(), d);
            }
            demos.push(demo_cache[id].clone());
        }
        let prompt = build_prompt(spec.task, &demos, &input, spec.ctx).map_err(|e| data(e.to_string()))?;
        jobs.push(PromptJob {
            sentence_id: s.id.clone(),
            demo_ids,
            prompt,
        });
    }
    Ok(jobs)
}

/// Validates one reply against its gold sentence.
pub fn validate_reply(
    task: Task,
    gold: &Sentence,
    raw: Option<&str>,
    ctx: &PromptContext,
    table: &NormalizationTable,
    labels: &LabelSet,
) -> ParsedOutput {
    let raw = raw.unwrap_or("");
    let forms = gold.forms();
    match task {
        Task::Tagging => parse_tagging_output(raw, &forms, &ctx.vocab, table),
        Task::ParseGold => parse_parsing_output(raw, Some(&forms[..]), labels, table),
        Task::ParseRaw => parse_parsing_output::<&str>(raw, None, labels, table),
    }
}

pub struct RunOutput {
    pub records: Vec<PredictionRecord>,
    pub ledger: UsageLedger,
}

/// Prompts `completer` for every sentence and validates the replies.
pub fn execute<C: Completer + ?Sized>(
    spec: &RunSpec<'_>,
    completer: &C,
    parallelism: usize,
) -> Result<RunOutput, RunError> {
    let jobs = prepare_prompts(spec)?;
    let prompts: Vec<String> = jobs.iter().map(|j| j.prompt.clone()).collect();
    let batch = run_batch(completer, &prompts, parallelism);
    let mut records = Vec::with_capacity(jobs.len());
    for (i, ((job, result), usage)) in jobs
        .into_iter()
        .zip(batch.results)
        .zip(batch.ledger.entries.iter().cloned())
        .enumerate()
    {
        let gold = &spec.eval.sentences[i];
        let (raw, error) = match result {
            Ok(text) => (Some(text), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let parsed = validate_reply(spec.task, gold, raw.as_deref(), spec.ctx, spec.table, spec.labels);
        let counts = instance_counts(spec.task, gold, &parsed, &spec.metric_opts, spec.table);
        records.push(PredictionRecord {
            index: i,
            sentence_id: job.sentence_id,
            demo_ids: job.demo_ids,
            prompt_sha256: sha256_hex(job.prompt.as_bytes()),
            raw,
            error,
            parsed,
            usage,
            scores: crate::metrics::MetricReport::from_counts(&counts),
        });
    }
    Ok(RunOutput {
        records,
        ledger: batch.ledger,
    })
}

pub fn records_to_jsonl(records: &[PredictionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn records_from_jsonl(text: &str) -> Result<Vec<PredictionRecord>, RunError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| RunError::Data(format!("predictions line {}: {e}", i + 1)))
        })
        .collect()
}

/// Exclusive hold on a run directory, released on drop.
pub struct RunLock {
    path: PathBuf,
    _file: File,
}

impl RunLock {
    pub const FILE: &'static str = ".lock";

    pub fn acquire(dir: &Path) -> Result<Self, RunError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(Self::FILE);
        let mut file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => RunError::Usage(format!(
                    "{} is locked by another process (remove {} if stale)",
                    dir.display(),
                    path.display()
                )),
                _ => RunError::Io(format!("{}: {e}", path.display())),
            })?;
        let _ = writeln!(file, "{}", std::process::id());
        Ok(RunLock { path, _file: file })
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LEDGER_FILE: &str = "ledger.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), RunError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(contents).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Writes predictions, ledger and manifest into `dir`, returning the
/// manifest hash.
pub fn write_run(
    dir: &Path,
    records: &[PredictionRecord],
    ledger: &UsageLedger,
    mut manifest: RunManifest,
) -> Result<String, RunError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let preds = records_to_jsonl(records);
    manifest.predictions_sha256 = sha256_hex(preds.as_bytes());
    manifest.instances = records.len();
    write_atomic(&dir.join(PREDICTIONS_FILE), preds.as_bytes())?;
    write_atomic(
        &dir.join(LEDGER_FILE),
        (serde_json::to_string_pretty(ledger).expect("serializable") + "\n").as_bytes(),
    )?;
    let m = manifest.to_json();
    write_atomic(&dir.join(MANIFEST_FILE), m.as_bytes())?;
    Ok(sha256_hex(m.as_bytes()))
}

/// A run directory read back from disk.
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub manifest_sha256: String,
    pub records: Vec<PredictionRecord>,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun, RunError> {
    let mpath = dir.join(MANIFEST_FILE);
    let mbytes = std::fs::read(&mpath).map_err(|e| RunError::Data(format!("{}: {e}", mpath.display())))?;
    let manifest: RunManifest = serde_json::from_slice(&mbytes)
        .map_err(|e| RunError::Data(format!("{}: {e}", mpath.display())))?;
    let ppath = dir.join(PREDICTIONS_FILE);
    let preds = std::fs::read_to_string(&ppath).map_err(|e| RunError::Data(format!("{}: {e}", ppath.display())))?;
    if sha256_hex(preds.as_bytes()) != manifest.predictions_sha256 {
        return Err(RunError::Data(format!(
            "{} does not match the hash recorded in the manifest",
            ppath.display()
        )));
    }
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        manifest_sha256: sha256_hex(&mbytes),
        manifest,
        records: records_from_jsonl(&preds)?,
    })
}

pub fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// One cell of a selection sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub k: usize,
    pub method: crate::retrieval::Method,
    pub score: Option<f64>,
    pub invalid: usize,
    pub manifest_sha256: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub task: Task,
    pub metric: String,
    pub ks: Vec<usize>,
    pub cells: Vec<SweepCell>,
    pub best: Option<(usize, crate::retrieval::Method)>,
    pub cost: f64,
}

/// Grid cells in evaluation order. Zero shots appear once, under random.
pub fn sweep_grid(ks: &[usize], methods: &[crate::retrieval::Method]) -> Vec<(usize, crate::retrieval::Method)> {
    use crate::retrieval::Method;
    let mut ks: Vec<usize> = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut methods: Vec<Method> = methods.to_vec();
    methods.sort_by_key(|m| Method::ALL.iter().position(|x| x == m));
    methods.dedup();
    let mut cells = Vec::new();
    if ks.first() == Some(&0) {
        cells.push((0, Method::Random));
    }
    for m in methods {
        for &k in ks.iter().filter(|&&k| k > 0) {
            cells.push((k, m));
        }
    }
    cells
}

/// The best cell: highest score, then smaller k, then method order.
pub fn sweep_argmax(cells: &[SweepCell]) -> Option<(usize, crate::retrieval::Method)> {
    use crate::retrieval::Method;
    let rank = |m: Method| Method::ALL.iter().position(|x| *x == m).unwrap_or(usize::MAX);
    cells
        .iter()
        .filter_map(|c| Some((c.score?, c.k, c.method)))
        .max_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then_with(|| b.1.cmp(&a.1))
                .then_with(|| rank(b.2).cmp(&rank(a.2)))
        })
        .map(|(_, k, m)| (k, m))
}

impl SweepReport {
    /// Methods as rows, k values as columns.
    pub fn render(&self) -> String {
        use std::fmt::Write as _;
        let mut out = format!("{} on dev ({})\n", self.metric, self.task);
        let _ = write!(out, "{:<12}", "method");
        for k in &self.ks {
            let _ = write!(out, " {:>8}", format!("k={k}"));
        }
        out.push('\n');
        let mut methods: Vec<crate::retrieval::Method> = Vec::new();
        for c in &self.cells {
            if !methods.contains(&c.method) {
                methods.push(c.method);
            }
        }
        for m in methods {
            let _ = write!(out, "{:<12}", m.as_str());
            for k in &self.ks {
                let cell = self.cells.iter().find(|c| c.method == m && c.k == *k);
                let text = cell
                    .and_then(|c| c.score)
                    .map_or("-".to_string(), |s| format!("{s:.1}"));
                let _ = write!(out, " {text:>8}");
            }
            out.push('\n');
        }
        match self.best {
            Some((k, m)) => {
                let _ = writeln!(out, "best: k={k} method={m}");
            }
            None => out.push_str("best: none\n"),
        }
        let _ = writeln!(out, "cost: ${:.4}", self.cost);
        out
    }
}
