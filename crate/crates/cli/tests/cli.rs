use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data").canonicalize().unwrap()
}

/// Answers every chat request with `status`; on 200 the reply parses the
/// query tokens as a right-branching chain.
fn serve(status: u16) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let mut reader = BufReader::new(stream);
            let mut len = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; len];
            let _ = reader.read_exact(&mut body);
            let reply = if status == 200 {
                let req: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
                let prompt = req["messages"][0]["content"].as_str().unwrap_or("");
                let query = prompt.rsplit("Sentence:\n").next().unwrap_or("").lines().next().unwrap_or("");
                let parses: Vec<serde_json::Value> = query
                    .split_whitespace()
                    .enumerate()
                    .map(|(i, f)| serde_json::json!({"id": i + 1, "form": f, "head": i, "deprel": if i == 0 { "---" } else { "MOD" }}))
                    .collect();
                let content = serde_json::json!({ "parses": parses }).to_string();
                serde_json::json!({
                    "choices": [{ "message": { "role": "assistant", "content": content } }],
                    "usage": { "prompt_tokens": 100, "completion_tokens": 20 },
                })
                .to_string()
            } else {
                "{\"error\":\"unavailable\"}".to_string()
            };
            let mut stream = reader.into_inner();
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    format!("http://{addr}/v1")
}

fn config(dir: &Path, base_url: &str) -> PathBuf {
    let data = fixture();
    let text = std::fs::read_to_string(data.join("project.toml")).unwrap();
    // keep the fixture's relative paths valid from the temp dir
    let text = text.replace("= \"", &format!("= \"{}/", data.display()));
    let text = format!(
        "{text}\n[model]\nbase_url = \"{base_url}\"\nmodel_name = \"stub\"\nprice_in = 1.0\nprice_out = 2.0\nmax_retries = 0\ntimeout_secs = 10.0\n"
    );
    let path = dir.join("arbeval.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn arbeval(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arbeval"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn end_to_end_against_a_stub_endpoint() {
    let tmp = tempfile::tempdir().unwrap();
    config(tmp.path(), &serve(200));
    let d = tmp.path();

    let o = arbeval(d, &["ingest"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("News"));

    let o = arbeval(d, &["run", "--task", "parse_gold", "--out", "runs/llm", "--k", "2", "--method", "chrf_high"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("20 instances"));

    let dev = fixture().join("dev.dep");
    let o = arbeval(d, &["run", "--task", "parse_gold", "--out", "runs/gold", "--predictions", dev.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let o = arbeval(d, &["score", "runs/llm", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["verdicts"]["valid"].as_u64(), Some(20));
    assert!(report["metrics"]["las"].as_f64().unwrap() < 100.0);
    let o = arbeval(d, &["score", "runs/gold"]);
    assert!(stdout(&o).contains("100.0"));

    let o = arbeval(d, &["analyze", "runs/gold", "runs/llm", "--out", "analysis.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("hybrid(gold,llm)"));

    let o = arbeval(d, &["report", "runs/llm/report.json", "analysis.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    // Replaying through the cache costs nothing.
    let o = arbeval(d, &["run", "--task", "parse_gold", "--out", "runs/again", "--k", "2", "--method", "chrf_high"]);
    assert!(stdout(&o).contains("20 cache hits"), "{}", stdout(&o));
    assert!(stdout(&o).ends_with("cost 0.0000\n"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(arbeval(d, &["--help"]).status.code(), Some(0));
    assert_eq!(arbeval(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(arbeval(d, &["ingest"]).status.code(), Some(1), "missing config");
    assert_eq!(arbeval(d, &["run", "--task", "nope", "--out", "x"]).status.code(), Some(1));

    config(d, &serve(503));
    let o = arbeval(d, &["run", "--task", "parse_gold", "--out", "runs/down", "--no-cache"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("runs/down/manifest.json").exists());

    assert_eq!(arbeval(d, &["score", "runs/missing"]).status.code(), Some(2));
    std::fs::write(d.join("bogus.json"), "{}").unwrap();
    assert_eq!(arbeval(d, &["report", "bogus.json"]).status.code(), Some(2));
    let o = arbeval(d, &["run", "--task", "parse_gold", "--out", "x", "--k", "1", "--predictions", "p"]);
    assert_eq!(o.status.code(), Some(1));
}
