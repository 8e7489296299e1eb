//! Drives the compiled binary through the full artifact chain on a small
//! synthetic cohort, then exercises the HTTP backend against a local canned
//! server.

use std::io::{Read as _, Write as _};
use std::net::TcpListener;
use std::path::Path;
use std::process::Command;

fn cogcmd(args: &[&str]) -> String {
    let output = Command::new(env!("CARGO_BIN_EXE_cogcmd"))
        .args(args)
        .output()
        .expect("spawn cogcmd");
    assert!(
        output.status.success(),
        "cogcmd {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn write_file(path: &Path, body: &str) {
    std::fs::write(path, body).unwrap();
}

const SYNTH_CONFIG: &str = r#"{
  "n_participants": 6,
  "mci_fraction": 0.5,
  "t_months": 4,
  "commands_per_week": 18.0,
  "marker_strengths": {
    "lexical": 1.0,
    "topic_jump": 1.0,
    "self_correction": 1.0,
    "repetition": 1.0
  },
  "acoustic_dim": 4,
  "acoustic_shift": 1.0,
  "seed": 11,
  "study_start": "2023-01-01"
}"#;

const EVAL_CONFIG: &str = r#"{
  "architecture": "meanpool",
  "d_model": 8,
  "max_epochs": 4,
  "lr": 0.01,
  "warmup_steps": 2,
  "batch_size": 4,
  "acoustic_dim": 4,
  "linguistic_dim": 8
}"#;

#[test]
fn artifact_chain_end_to_end() {
    let root = tempfile::tempdir().unwrap();
    let root = root.path();
    let config = root.join("synth.json");
    write_file(&config, SYNTH_CONFIG);
    let config = config.to_str().unwrap();
    write_file(&root.join("eval.json"), EVAL_CONFIG);

    let raw = root.join("raw");
    cogcmd(&["synth", "--config", config, "--out", raw.to_str().unwrap()]);
    for name in ["cohort.jsonl", "labels.jsonl", "acoustic.jsonl", "manifest.json"] {
        assert!(raw.join(name).exists(), "missing {name}");
    }
    let labels = raw.join("labels.jsonl");
    let labels = labels.to_str().unwrap();

    let clean = root.join("clean");
    cogcmd(&[
        "preprocess",
        "--cohort", raw.join("cohort.jsonl").to_str().unwrap(),
        "--labels", labels,
        "--study-start", "2023-01-01",
        "--months", "4",
        "--out", clean.to_str().unwrap(),
    ]);
    assert!(clean.join("transcripts.jsonl").exists());
    assert!(clean.join("wake_words.json").exists());

    let lineage = root.join("lineage.json");
    let out = cogcmd(&[
        "optimize",
        "--train", clean.to_str().unwrap(),
        "--labels", labels,
        "--max-iter", "2",
        "--out", lineage.to_str().unwrap(),
    ]);
    assert!(out.contains("best prompt"), "unexpected optimize output: {out}");
    let lineage_body: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&lineage).unwrap()).unwrap();
    assert!(lineage_body["lineage"].as_array().unwrap().len() >= 1);

    let seqs = root.join("seqs");
    cogcmd(&[
        "embed",
        "--transcripts", clean.join("transcripts.jsonl").to_str().unwrap(),
        "--lineage", lineage.to_str().unwrap(),
        "--acoustic", raw.join("acoustic.jsonl").to_str().unwrap(),
        "--acoustic-dim", "4",
        "--linguistic-dim", "8",
        "--months", "4",
        "--out", seqs.to_str().unwrap(),
    ]);
    let sidecars = std::fs::read_dir(&seqs)
        .unwrap()
        .filter(|e| {
            e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".seq.json")
        })
        .count();
    assert_eq!(sidecars, 6);

    let ckpt = root.join("ckpt");
    cogcmd(&[
        "train",
        "--config", root.join("eval.json").to_str().unwrap(),
        "--sequences", seqs.to_str().unwrap(),
        "--labels", labels,
        "--out", ckpt.to_str().unwrap(),
    ]);
    assert!(ckpt.join("params.bin").exists());
    let curves = std::fs::read_to_string(ckpt.join("curves.csv")).unwrap();
    assert!(curves.starts_with("epoch,train_loss,val_loss,lr\n"));
    assert!(curves.lines().count() >= 2);

    let report_a = root.join("report_a");
    let report_b = root.join("report_b");
    for dir in [&report_a, &report_b] {
        cogcmd(&[
            "evaluate",
            "--config", root.join("eval.json").to_str().unwrap(),
            "--seeds", "0",
            "--cohort", raw.join("cohort.jsonl").to_str().unwrap(),
            "--labels", labels,
            "--acoustic", raw.join("acoustic.jsonl").to_str().unwrap(),
            "--study-start", "2023-01-01",
            "--months", "4",
            "--out", dir.to_str().unwrap(),
        ]);
    }
    let body_a = std::fs::read(report_a.join("report.json")).unwrap();
    let body_b = std::fs::read(report_b.join("report.json")).unwrap();
    assert_eq!(body_a, body_b, "evaluate reruns must be byte-identical");
    assert!(report_a.join("report.md").exists());
    assert!(report_a.join("report.csv").exists());

    let rendered = root.join("rendered");
    let out = cogcmd(&[
        "report",
        "--in", report_a.join("report.json").to_str().unwrap(),
        "--out", rendered.to_str().unwrap(),
    ]);
    assert!(out.contains("Full,"));
    assert_eq!(
        std::fs::read(rendered.join("report.md")).unwrap(),
        std::fs::read(report_a.join("report.md")).unwrap()
    );
}

/// Minimal HTTP/1.1 server that pops one canned (status, body) per request.
fn canned_server(
    responses: Vec<(u16, String)>,
) -> (String, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = std::thread::spawn(move || {
        let mut seen_requests = Vec::new();
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            loop {
                let n = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                let text = String::from_utf8_lossy(&buf).into_owned();
                if let Some(head_end) = text.find("\r\n\r\n") {
                    let content_length = text
                        .lines()
                        .find_map(|l| {
                            l.to_ascii_lowercase()
                                .strip_prefix("content-length:")
                                .map(|v| v.trim().parse::<usize>().unwrap())
                        })
                        .unwrap_or(0);
                    if buf.len() >= head_end + 4 + content_length {
                        seen_requests.push(text);
                        break;
                    }
                }
                if n == 0 {
                    break;
                }
            }
            let reason = if status == 200 { "OK" } else { "Error" };
            let reply = format!(
                "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
        seen_requests
    });
    (format!("http://{addr}/v1/chat/completions"), handle)
}

#[test]
fn http_backend_retries_and_logs_replay() {
    use cogcmd_cli::http::{HttpBackend, HttpBackendConfig};
    use cogcmd_core::gateway::{CompletionBackend, CompletionRequest, RoleTag};

    let ok_body = serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": "VERDICT: MCI"}}],
        "usage": {"prompt_tokens": 12, "completion_tokens": 3}
    })
    .to_string();
    let (url, handle) = canned_server(vec![
        (500, "{\"error\":\"transient\"}".to_string()),
        (200, ok_body),
    ]);

    std::env::set_var("COGCMD_API_KEY", "test-key-123");
    let dir = tempfile::tempdir().unwrap();
    let replay = dir.path().join("replay.jsonl");
    let mut config = HttpBackendConfig::new(url, "test-model".to_string());
    config.initial_backoff = std::time::Duration::from_millis(10);
    config.replay_log = Some(replay.clone());
    let backend = HttpBackend::new(config).unwrap();

    let request = CompletionRequest::new(
        RoleTag::Classifier,
        "You are a careful rater.".to_string(),
        "summary text".to_string(),
    );
    let response = backend.complete(&request).unwrap();
    assert_eq!(response.text, "VERDICT: MCI");
    assert_eq!(response.backend_id, "http");
    assert_eq!(response.usage.unwrap().completion_tokens, 3);

    let seen = handle.join().unwrap();
    assert_eq!(seen.len(), 2, "expected a retry after the 500");
    for request_text in &seen {
        assert!(
            request_text.contains("authorization: Bearer test-key-123")
                || request_text.contains("Authorization: Bearer test-key-123"),
            "missing bearer auth header"
        );
        assert!(request_text.contains("\"model\":\"test-model\""));
        assert!(request_text.contains("\"role\":\"system\""));
    }

    let replay_body = std::fs::read_to_string(&replay).unwrap();
    let lines: Vec<&str> = replay_body.lines().collect();
    assert_eq!(lines.len(), 1, "one completed exchange logged");
    let entry: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(entry["response"], "VERDICT: MCI");
    assert_eq!(entry["request"]["messages"][1]["content"], "summary text");
}

#[test]
fn http_backend_requires_api_key() {
    use cogcmd_cli::http::{HttpBackend, HttpBackendConfig};
    std::env::remove_var("COGCMD_API_KEY_MISSING_FOR_TEST");
    let mut config =
        HttpBackendConfig::new("http://127.0.0.1:1/x".to_string(), "m".to_string());
    config.api_key_env = "COGCMD_API_KEY_MISSING_FOR_TEST".to_string();
    assert!(HttpBackend::new(config).is_err());
}
