use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use cebench_core::backends::{connect, BackendDescriptor, BackendError, BackendKind};
use serde_json::Value;

#[derive(Debug, Clone)]
struct Captured {
    request_line: String,
    headers: Vec<(String, String)>,
    body: Value,
}

impl Captured {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Serves the scripted `(status, body)` replies in order, one per connection.
fn stub_server(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Captured>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut headers = Vec::new();
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (k, v) = line.split_once(':').unwrap();
                if k.eq_ignore_ascii_case("content-length") {
                    length = v.trim().parse().unwrap();
                }
                headers.push((k.to_string(), v.trim().to_string()));
            }
            let mut buf = vec![0u8; length];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Captured {
                request_line: request_line.trim_end().to_string(),
                headers,
                body: serde_json::from_slice(&buf).unwrap_or(Value::Null),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (base, seen)
}

fn descriptor(kind: BackendKind, base: &str) -> BackendDescriptor {
    BackendDescriptor {
        retry_backoff_s: 0.0,
        timeout_s: 5.0,
        ..BackendDescriptor::http(kind, base, "test-model")
    }
}

#[test]
fn modelhub_reports_exact_usage() {
    let reply = r#"{"response":"score: 7","prompt_eval_count":1276,"eval_count":42,"done":true}"#;
    let (base, seen) = stub_server(vec![(200, reply.into())]);
    let backend = connect(&descriptor(BackendKind::ModelhubHttp, &base)).unwrap();
    let out = backend.generate("P1").unwrap();
    assert_eq!(out.text, "score: 7");
    assert_eq!((out.tokens_in, out.tokens_out), (1276, 42));
    assert!(out.token_counts_exact);
    assert!(out.latency > 0.0);
    let req = &seen.lock().unwrap()[0];
    assert_eq!(req.request_line, "POST /api/generate HTTP/1.1");
    assert_eq!(req.body["model"], "test-model");
    assert_eq!(req.body["prompt"], "P1");
    assert_eq!(req.body["stream"], false);
}

#[test]
fn modelhub_without_usage_approximates() {
    let (base, _) = stub_server(vec![(200, r#"{"response":"abcde"}"#.into())]);
    let out = connect(&descriptor(BackendKind::ModelhubHttp, &base))
        .unwrap()
        .generate("123456789")
        .unwrap();
    assert_eq!((out.tokens_in, out.tokens_out), (3, 2));
    assert!(!out.token_counts_exact);
}

#[test]
fn openai_chat_shape() {
    let reply = r#"{"choices":[{"message":{"role":"assistant","content":"entailment"}}],"usage":{"prompt_tokens":10,"completion_tokens":1,"total_tokens":11}}"#;
    let (base, seen) = stub_server(vec![(200, reply.into())]);
    let out = connect(&descriptor(BackendKind::OpenaiHttp, &base))
        .unwrap()
        .generate("hello")
        .unwrap();
    assert_eq!(out.text, "entailment");
    assert_eq!((out.tokens_in, out.tokens_out), (10, 1));
    let req = &seen.lock().unwrap()[0];
    assert_eq!(req.request_line, "POST /v1/chat/completions HTTP/1.1");
    assert_eq!(req.body["messages"][0]["role"], "user");
    assert_eq!(req.body["messages"][0]["content"], "hello");
    assert_eq!(req.body["temperature"], 0.0);
}

#[test]
fn server_errors_are_retried() {
    let ok = r#"{"response":"score: 1","prompt_eval_count":1,"eval_count":1}"#;
    let (base, seen) = stub_server(vec![(503, "{}".into()), (429, "{}".into()), (200, ok.into())]);
    let out = connect(&descriptor(BackendKind::ModelhubHttp, &base))
        .unwrap()
        .generate("x")
        .unwrap();
    assert_eq!(out.text, "score: 1");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn retries_are_bounded() {
    let (base, seen) = stub_server(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
    let err = connect(&descriptor(BackendKind::ModelhubHttp, &base))
        .unwrap()
        .generate("x")
        .unwrap_err();
    assert!(matches!(err, BackendError::Status { status: 500, .. }), "{err}");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_fail_fast() {
    let (base, seen) = stub_server(vec![(400, r#"{"error":"bad"}"#.into())]);
    let err = connect(&descriptor(BackendKind::OpenaiHttp, &base))
        .unwrap()
        .generate("x")
        .unwrap_err();
    assert!(matches!(err, BackendError::Status { status: 400, .. }));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn api_key_from_environment() {
    let reply = r#"{"choices":[{"message":{"content":"ok"}}]}"#;
    let (base, seen) = stub_server(vec![(200, reply.into()), (200, reply.into())]);
    std::env::set_var("CEBENCH_API_KEY_STUB_ONE", "k1");
    std::env::set_var("CEBENCH_API_KEY_STUB_TWO", "k2");
    let bearer = BackendDescriptor {
        name: Some("stub-one".into()),
        ..descriptor(BackendKind::OpenaiHttp, &base)
    };
    let custom = BackendDescriptor {
        name: Some("stub two".into()),
        auth_header: Some("x-api-key".into()),
        ..descriptor(BackendKind::OpenaiHttp, &base)
    };
    let out = connect(&bearer).unwrap().generate("a").unwrap();
    assert!(!out.token_counts_exact);
    connect(&custom).unwrap().generate("b").unwrap();
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].header("authorization"), Some("Bearer k1"));
    assert_eq!(seen[1].header("x-api-key"), Some("k2"));
    assert_eq!(seen[1].header("authorization"), None);
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let d = BackendDescriptor {
        retries: 1,
        ..descriptor(BackendKind::ModelhubHttp, &base)
    };
    let err = connect(&d).unwrap().generate("x").unwrap_err();
    assert!(matches!(err, BackendError::Transport { attempts: 2, .. }), "{err}");
}
