//! Scripted chat-completions stub server (test helper).
//!
//! Binds a real TCP port and answers the same wire protocol the http
//! backend speaks, so retry, timeout, recording, and resume behavior can
//! be exercised hermetically. Responses are scripted per request count;
//! once the script is exhausted, requests fall through to a handler that
//! derives the completion text deterministically from the request body.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::Value;

use crate::canon;

/// One scripted reaction to an incoming request.
#[derive(Debug, Clone)]
pub enum StubStep {
    /// Respond normally via the handler.
    Ok,
    /// Respond normally with this exact completion text.
    Text(String),
    /// Respond with a bare HTTP status (429, 500, ...).
    Status(u16),
    /// Sleep this many milliseconds before responding, to trip the
    /// client's per-attempt timeout.
    Delay(u64),
}

/// Handler producing completion text from the parsed request body and the
/// zero-based request index.
pub type StubHandler = dyn Fn(&Value, usize) -> String + Send + Sync;

pub struct StubServer {
    addr: String,
    counter: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Starts a server that consumes `script` one step per request, then
    /// echoes deterministically.
    pub fn start(script: Vec<StubStep>) -> StubServer {
        Self::with_handler(script, Box::new(default_handler))
    }

    pub fn with_handler(script: Vec<StubStep>, handler: Box<StubHandler>) -> StubServer {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
        let addr = format!(
            "http://{}/v1/chat/completions",
            listener.local_addr().unwrap()
        );
        let counter = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let script: Arc<Vec<StubStep>> = Arc::new(script);
        let handler: Arc<StubHandler> = Arc::from(handler);
        let thread_counter = Arc::clone(&counter);
        let thread_stop = Arc::clone(&stop);
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if thread_stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let index = thread_counter.fetch_add(1, Ordering::SeqCst);
                let step = script.get(index).cloned().unwrap_or(StubStep::Ok);
                let handler = Arc::clone(&handler);
                // One thread per connection so a Delay step cannot stall
                // later requests and skew script indexing.
                std::thread::spawn(move || {
                    let _ = serve_one(stream, step, index, handler.as_ref());
                });
            }
        });
        StubServer {
            addr,
            counter,
            stop,
            handle: Some(handle),
        }
    }

    /// Endpoint URL for backend configs.
    pub fn url(&self) -> String {
        self.addr.clone()
    }

    /// Number of requests received so far.
    pub fn request_count(&self) -> usize {
        self.counter.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Poke the listener to unblock accept; the stop flag is checked
        // before the counter, so the poke is not counted as a request.
        let raw_addr = self
            .addr
            .trim_start_matches("http://")
            .split('/')
            .next()
            .unwrap()
            .to_string();
        let _ = TcpStream::connect(raw_addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn serve_one(
    stream: TcpStream,
    step: StubStep,
    index: usize,
    handler: &StubHandler,
) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut content_length = 0usize;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Ok(()); // shutdown poke or client hangup
        }
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            break;
        }
        if let Some(value) = trimmed
            .to_ascii_lowercase()
            .strip_prefix("content-length:")
            .map(str::trim)
            .and_then(|v| v.parse::<usize>().ok())
        {
            content_length = value;
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    let request: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);

    let mut stream = stream;
    match step {
        StubStep::Status(code) => {
            let reason = match code {
                429 => "Too Many Requests",
                500 => "Internal Server Error",
                503 => "Service Unavailable",
                _ => "Error",
            };
            write!(
                stream,
                "HTTP/1.1 {code} {reason}\r\nContent-Length: 0\r\nConnection: close\r\n\r\n"
            )?;
        }
        StubStep::Delay(ms) => {
            std::thread::sleep(Duration::from_millis(ms));
            respond_ok(&mut stream, &request, handler(&request, index))?;
        }
        StubStep::Text(text) => respond_ok(&mut stream, &request, text)?,
        StubStep::Ok => respond_ok(&mut stream, &request, handler(&request, index))?,
    }
    stream.flush()
}

fn respond_ok(stream: &mut TcpStream, request: &Value, text: String) -> std::io::Result<()> {
    let prompt_chars: usize = request
        .pointer("/messages")
        .and_then(Value::as_array)
        .map(|msgs| {
            msgs.iter()
                .filter_map(|m| m.pointer("/content").and_then(Value::as_str))
                .map(str::len)
                .sum()
        })
        .unwrap_or(0);
    let body = serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {
            "prompt_tokens": prompt_chars / 4 + 1,
            "completion_tokens": text.len() / 4 + 1,
        }
    })
    .to_string();
    // Deterministic server-side latency derived from the request content,
    // so recorded runs byte-reproduce.
    let processing_ms = deterministic_ms(request);
    write!(
        stream,
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nx-processing-ms: {}\r\nConnection: close\r\n\r\n{}",
        body.len(),
        processing_ms,
        body
    )
}

fn deterministic_ms(request: &Value) -> u64 {
    let digest = canon::digest_str(&canon::canonical_json(request));
    let hex = &digest["sha256:".len().."sha256:".len() + 4];
    u64::from_str_radix(hex, 16).unwrap_or(0) % 200 + 10
}

fn default_handler(request: &Value, _index: usize) -> String {
    let digest = canon::digest_str(&canon::canonical_json(request));
    format!(
        "stub completion {}",
        &digest["sha256:".len().."sha256:".len() + 12]
    )
}
