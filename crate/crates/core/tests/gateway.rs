mod common;

use std::time::{Duration, Instant};

use arbeval::gateway::{
    run_batch, Completer, Completion, GatewayError, Transport, TransportError, UsageEntry, WireResponse,
};
use common::{gateway, reply_body, Scripted};

fn status(code: u16) -> Result<WireResponse, TransportError> {
    Ok(WireResponse {
        status: code,
        body: "{\"error\":\"x\"}".into(),
    })
}

#[test]
fn cache_hit_is_identical_and_free() {
    let dir = tempfile::tempdir().unwrap();
    let stub = Scripted::new(vec![Ok(WireResponse { status: 200, body: reply_body("{\"tokens\":[]}", 1000, 500) })], "other");
    let gw = gateway(stub, Some(dir.path()));
    let first = gw.complete("prompt").unwrap();
    let second = gw.complete("prompt").unwrap();
    assert_eq!(first.text, second.text);
    assert!((first.usage.cost - 0.002).abs() < 1e-15);
    assert!(second.usage.cache_hit);
    assert_eq!(second.usage.cost, 0.0);
}

#[test]
fn rate_limits_are_retried() {
    let stub = Scripted::new(vec![status(429), status(429)], "ok");
    let gw = gateway(stub, None);
    let c = gw.complete("p").unwrap();
    assert_eq!(c.text, "ok");
    assert_eq!(c.usage.retries, 2);
}

#[test]
fn transient_failures_retried_then_exhausted() {
    let stub = Scripted::new(vec![status(503), Err(TransportError::Timeout), Err(TransportError::Connect("refused".into()))], "ok");
    assert_eq!(gateway(stub, None).complete("p").unwrap().usage.retries, 3);

    let queue = (0..10).map(|_| status(500)).collect();
    let gw = gateway(Scripted::new(queue, "ok"), None);
    let (err, usage) = gw.complete("p").unwrap_err();
    assert!(matches!(err, GatewayError::RetriesExhausted { attempts: 6, .. }), "{err}");
    assert_eq!(usage.cost, 0.0);
    assert!(usage.error.is_some());
}

#[test]
fn client_errors_are_not_retried() {
    let gw = gateway(Scripted::new(vec![status(401)], "ok"), None);
    assert_eq!(gw.complete("p").unwrap_err().0, GatewayError::Auth(401));
    let stub = Scripted::new(vec![status(400)], "ok");
    let gw = gateway(stub, None);
    assert!(matches!(gw.complete("p").unwrap_err().0, GatewayError::Http { status: 400, .. }));
}

#[test]
fn malformed_bodies_fail() {
    let stub = Scripted::new(vec![Ok(WireResponse { status: 200, body: "{\"choices\":[]}".into() })], "ok");
    assert!(matches!(gateway(stub, None).complete("p").unwrap_err().0, GatewayError::Malformed(_)));
}

struct Sleepy(Duration);

impl Completer for Sleepy {
    fn complete(&self, prompt: &str) -> Result<Completion, (GatewayError, UsageEntry)> {
        // Later prompts finish sooner, so completion order differs from input order.
        let n: u64 = prompt.parse().unwrap();
        let wait = self.0.saturating_sub(Duration::from_micros(n * 50));
        std::thread::sleep(wait);
        Ok(Completion {
            text: format!("reply {prompt}"),
            usage: UsageEntry {
                latency_ms: wait.as_millis() as u64,
                ..UsageEntry::default()
            },
        })
    }
}

#[test]
fn batch_order_is_independent_of_parallelism() {
    let prompts: Vec<String> = (0..100).map(|i| i.to_string()).collect();
    let stub = Sleepy(Duration::from_millis(6));
    let serial = run_batch(&stub, &prompts, 1);
    let wide = run_batch(&stub, &prompts, 8);
    let texts = |b: &arbeval::gateway::BatchOutcome| b.results.iter().map(|r| r.clone().unwrap()).collect::<Vec<_>>();
    assert_eq!(texts(&serial), texts(&wide));
    assert_eq!(texts(&wide)[42], "reply 42");
    assert!(wide.ledger.wall_ms <= wide.ledger.latency_ms);
    assert!(wide.ledger.wall_ms < serial.ledger.wall_ms);
}

#[test]
fn http_transport_reports_connection_failures() {
    let t = arbeval::gateway::HttpTransport::new().unwrap();
    let start = Instant::now();
    let r = t.post("http://127.0.0.1:9/v1/chat/completions", "{}", None, Duration::from_secs(5));
    assert!(matches!(r, Err(TransportError::Connect(_)) | Err(TransportError::Timeout)), "{r:?}");
    assert!(start.elapsed() < Duration::from_secs(6));
}
