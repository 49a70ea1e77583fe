//! Minimal chat-completions server for offline tests.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

pub struct StubServer {
    pub url: String,
    pub requests: Arc<AtomicUsize>,
}

type Reply = dyn Fn(&str) -> Option<String> + Send + Sync;

/// `reply` maps the prompt to the assistant content; `None` answers 500.
pub fn spawn(reply: impl Fn(&str) -> Option<String> + Send + Sync + 'static) -> StubServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let counter = requests.clone();
    let reply: Arc<Reply> = Arc::new(reply);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let counter = counter.clone();
            let reply = reply.clone();
            std::thread::spawn(move || handle(stream, &counter, &*reply));
        }
    });
    StubServer { url, requests }
}

fn handle(stream: TcpStream, counter: &AtomicUsize, reply: &Reply) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    counter.fetch_add(1, Ordering::SeqCst);
    let request: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
    let prompt = request
        .pointer("/messages/0/content")
        .and_then(|v| v.as_str())
        .unwrap_or_default();
    let (status, payload) = match reply(prompt) {
        Some(content) => (
            "200 OK",
            serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string(),
        ),
        None => ("500 Internal Server Error", "{}".to_string()),
    };
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
    let _ = stream.flush();
}
