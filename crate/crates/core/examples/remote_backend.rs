//! Drives the HTTP chat-completions backend against a tiny local server that
//! fails once with 503 and then answers every request.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use stmr::planner::{LlmBackend, QueryRequest, RemoteBackend, RemoteConfig};

const REPLY: &str = "Thought: the road is ahead.\nAction: (straight), (0 degrees), (10 meters)";

/// Serves `requests` HTTP requests; the first gets a 503.
fn serve(listener: TcpListener, requests: usize, seen: Arc<AtomicUsize>) {
    for stream in listener.incoming().take(requests) {
        let mut stream = stream.expect("accept");
        let mut reader = BufReader::new(stream.try_clone().expect("clone"));
        let mut len = 0;
        loop {
            let mut line = String::new();
            if reader.read_line(&mut line).expect("header") == 0 || line == "\r\n" {
                break;
            }
            if let Some((k, v)) = line.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    len = v.trim().parse().expect("length");
                }
            }
        }
        let mut body = vec![0; len];
        reader.read_exact(&mut body).expect("body");
        let n = seen.fetch_add(1, Ordering::SeqCst);
        let (status, payload) = if n == 0 {
            ("503 Service Unavailable", "{}".to_string())
        } else {
            let content = serde_json::Value::String(REPLY.into()).to_string();
            ("200 OK", format!(r#"{{"choices":[{{"message":{{"role":"assistant","content":{content}}}}}]}}"#))
        };
        let resp = format!(
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
            payload.len()
        );
        stream.write_all(resp.as_bytes()).expect("write");
    }
}

pub struct Outcome {
    pub text: String,
    pub requests: usize,
    pub transcript: Option<String>,
}

pub fn run() -> Outcome {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
    let addr = listener.local_addr().expect("addr");
    let seen = Arc::new(AtomicUsize::new(0));
    let server = {
        let seen = seen.clone();
        thread::spawn(move || serve(listener, 2, seen))
    };
    let mut config = RemoteConfig::new(format!("http://{addr}/v1/chat/completions"));
    config.backoff = Duration::from_millis(10);
    config.timeout = Duration::from_secs(5);
    let backend = RemoteBackend::new(config);
    let reply = backend
        .query(&QueryRequest {
            episode_id: "demo",
            step: 0,
            attempt: 0,
            prompt: "Instruction: fly east along the road.",
        })
        .expect("second attempt succeeds");
    server.join().expect("server thread");
    Outcome {
        text: reply.text,
        requests: seen.load(Ordering::SeqCst),
        transcript: reply.transcript,
    }
}

#[allow(dead_code)]
fn main() {
    let o = run();
    println!("{} requests, reply:\n{}", o.requests, o.text);
    if let Some(t) = o.transcript {
        println!("transcript:\n{t}");
    }
}
