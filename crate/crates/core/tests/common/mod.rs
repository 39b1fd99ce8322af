#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use arbeval::gateway::{DiskCache, Gateway, ModelConfig, Transport, TransportError, WireResponse};
use arbeval::protocol::{render_gold_output, QueryInput, Task};
use arbeval::runner::Session;
use arbeval::treebank::Split;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

pub fn session() -> Session {
    Session::load(&data_dir().join("project.toml")).expect("fixture config")
}

pub fn model() -> ModelConfig {
    let mut m = ModelConfig::new("http://stub.invalid/v1", "stub-model");
    m.price_in = 1.0;
    m.price_out = 2.0;
    m.backoff_base_ms = 1;
    m.backoff_max_ms = 2;
    m
}

/// The query line of a prompt: the line after the last `Sentence:` marker.
pub fn query_of(prompt: &str) -> &str {
    let at = prompt.rfind("Sentence:\n").expect("prompt has a query block");
    prompt[at + "Sentence:\n".len()..].lines().next().unwrap_or("")
}

pub fn reply_body(content: &str, prompt_tokens: u64, completion_tokens: u64) -> String {
    serde_json::json!({
        "choices": [{ "message": { "role": "assistant", "content": content } }],
        "usage": { "prompt_tokens": prompt_tokens, "completion_tokens": completion_tokens },
    })
    .to_string()
}

fn prompt_of(body: &str) -> String {
    let v: serde_json::Value = serde_json::from_str(body).expect("request is JSON");
    v["messages"][0]["content"].as_str().expect("message content").to_string()
}

/// Answers every prompt with the gold annotation of its query sentence,
/// looked up across all splits of the fixture.
pub struct EchoGold {
    answers: HashMap<String, String>,
    pub calls: AtomicUsize,
}

impl EchoGold {
    pub fn new(session: &Session, task: Task) -> EchoGold {
        let mut answers = HashMap::new();
        for split in [Split::Train, Split::Dev, Split::Test] {
            let (corpus, _) = session.corpus(task, split).expect("fixture split");
            for s in &corpus.sentences {
                let input = QueryInput::for_sentence(task, s).render();
                answers.insert(input, render_gold_output(task, s).expect("gold renders"));
            }
        }
        EchoGold {
            answers,
            calls: AtomicUsize::new(0),
        }
    }

    /// Fenced reply with a sentence of chatter, to exercise the repair path.
    pub fn answer(&self, prompt: &str) -> String {
        let q = query_of(prompt);
        let gold = self.answers.get(q).unwrap_or_else(|| panic!("no gold for query {q:?}"));
        format!("Here is the analysis:\n```json\n{gold}\n```")
    }
}

impl Transport for EchoGold {
    fn post(&self, _url: &str, body: &str, _bearer: Option<&str>, _timeout: Duration) -> Result<WireResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = prompt_of(body);
        let content = self.answer(&prompt);
        Ok(WireResponse {
            status: 200,
            body: reply_body(&content, prompt.chars().count() as u64, content.chars().count() as u64),
        })
    }
}

/// Replies with text that is not an annotation at all.
#[derive(Default)]
pub struct Garbage;

impl Transport for Garbage {
    fn post(&self, _url: &str, _body: &str, _bearer: Option<&str>, _timeout: Duration) -> Result<WireResponse, TransportError> {
        Ok(WireResponse {
            status: 200,
            body: reply_body("I am unable to annotate this sentence.", 10, 8),
        })
    }
}

/// Returns queued responses in order, then 200 with `fallback`.
pub struct Scripted {
    pub queue: Mutex<Vec<Result<WireResponse, TransportError>>>,
    pub fallback: String,
    pub calls: AtomicUsize,
}

impl Scripted {
    pub fn new(mut queue: Vec<Result<WireResponse, TransportError>>, fallback: &str) -> Scripted {
        queue.reverse();
        Scripted {
            queue: Mutex::new(queue),
            fallback: fallback.to_string(),
            calls: AtomicUsize::new(0),
        }
    }
}

impl Transport for Scripted {
    fn post(&self, _url: &str, _body: &str, _bearer: Option<&str>, _timeout: Duration) -> Result<WireResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(r) = self.queue.lock().unwrap().pop() {
            return r;
        }
        Ok(WireResponse {
            status: 200,
            body: reply_body(&self.fallback, 3, 2),
        })
    }
}

pub fn gateway<T: Transport>(transport: T, cache: Option<&Path>) -> Gateway<T> {
    let cache = cache.map(|d| DiskCache::open(d).expect("cache dir"));
    Gateway::new(model(), transport, cache).expect("stub gateway")
}
