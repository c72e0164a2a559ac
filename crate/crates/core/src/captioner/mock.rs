//! Loopback chat-completions server for hermetic endpoint tests and demos.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};

#[derive(Debug, Clone)]
pub enum MockBehavior {
    /// Replies with the user prompt's attribute line as the completion.
    Echo,
    /// Replies with this completion text.
    Fixed(String),
    /// Replies with an empty HTTP status and body.
    Status(u16),
    /// Waits this long before answering (to trigger client timeouts).
    Stall(Duration),
}

/// A server on `127.0.0.1` that stops when dropped.
pub struct MockEndpoint {
    addr: SocketAddr,
    hits: Arc<AtomicUsize>,
    authorized: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockEndpoint {
    pub fn start(behavior: MockBehavior) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let hits = Arc::new(AtomicUsize::new(0));
        let authorized = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let (h, a, s) = (hits.clone(), authorized.clone(), stop.clone());
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if s.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                h.fetch_add(1, Ordering::SeqCst);
                let behavior = behavior.clone();
                let a = a.clone();
                std::thread::spawn(move || {
                    let _ = serve(stream, &behavior, &a);
                });
            }
        });
        Ok(Self {
            addr,
            hits,
            authorized,
            stop,
            handle: Some(handle),
        })
    }

    /// Base URL to put in an endpoint config.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    /// Connections accepted so far.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    /// Requests that carried a bearer token.
    pub fn authorized_requests(&self) -> usize {
        self.authorized.load(Ordering::SeqCst)
    }
}

impl Drop for MockEndpoint {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(stream: TcpStream, behavior: &MockBehavior, authorized: &AtomicUsize) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut length = 0usize;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            break;
        }
        let lower = trimmed.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            length = v.trim().parse().unwrap_or(0);
        }
        if lower.starts_with("authorization: bearer ") {
            authorized.fetch_add(1, Ordering::SeqCst);
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body)?;
    let request: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);

    let (status, payload) = match behavior {
        MockBehavior::Echo => {
            let prompt = request
                .pointer("/messages/1/content")
                .and_then(Value::as_str)
                .unwrap_or("");
            let attrs = prompt
                .lines()
                .find_map(|l| l.strip_prefix("Attributes: "))
                .unwrap_or("");
            (200, completion(&format!("A piece of music with {attrs}.")))
        }
        MockBehavior::Fixed(text) => (200, completion(text)),
        MockBehavior::Status(code) => (*code, "{}".to_string()),
        MockBehavior::Stall(d) => {
            std::thread::sleep(*d);
            (200, completion("late"))
        }
    };
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} Mock\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )?;
    stream.flush()
}

fn completion(text: &str) -> String {
    json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]}).to_string()
}
