#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mmdebate::bench::load_probes;
use mmdebate::clock::FixedClock;
use mmdebate::gateway::{BackendSpec, Gateway};
use mmdebate::protocol::{DebateConfig, Mode, ProbeItem};
use mmdebate::runner::AgentAssignment;
use mmdebate::Engine;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn debates_dir() -> PathBuf {
    fixtures().join("debates")
}

pub fn probes() -> Vec<ProbeItem> {
    load_probes(&debates_dir().join("probes.jsonl"), None).unwrap().items
}

pub fn probe(id: &str) -> ProbeItem {
    probes().into_iter().find(|i| i.id == id).unwrap_or_else(|| panic!("no fixture item {id}"))
}

/// Engine over the fixture script with a frozen clock. Each call gets fresh
/// script cursors.
pub fn scripted_engine() -> Engine {
    let gateway = Gateway::new();
    gateway
        .register_backend(BackendSpec::scripted("script", debates_dir().join("script.json")))
        .unwrap();
    Engine::new(Arc::new(gateway), AgentAssignment::all("script")).with_clock(Arc::new(FixedClock::default()))
}

pub fn config(mode: Mode) -> DebateConfig {
    DebateConfig::with_mode(mode)
}

/// Copy of the fixture debate directory inside `dir`, so tests can edit it.
pub fn copy_fixture_dir(dir: &Path) -> PathBuf {
    let target = dir.join("debates");
    fs::create_dir_all(&target).unwrap();
    for entry in fs::read_dir(debates_dir()).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), target.join(entry.file_name())).unwrap();
    }
    target
}

/// Every regular file under `root`, sorted.
pub fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path);
            }
        }
    }
    out.sort();
    out
}

/// A canned HTTP reply.
#[derive(Debug, Clone)]
pub struct Canned {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl Canned {
    pub fn json(status: u16, body: serde_json::Value) -> Self {
        Self { status, headers: vec![], body: body.to_string() }
    }

    pub fn with_header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_string(), value.to_string()));
        self
    }
}

/// Chat-completions reply carrying `text`.
pub fn chat_reply(text: &str) -> Canned {
    Canned::json(200, serde_json::json!({"model": "mock", "choices": [{"message": {"content": text}, "finish_reason": "stop"}]}))
}

#[derive(Debug, Clone)]
pub struct Received {
    pub request_line: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

/// Minimal HTTP/1.1 server on a loopback port. Replies are served in order;
/// the last one repeats once the queue runs dry. One request per connection.
pub struct MockServer {
    pub url: String,
    received: Arc<std::sync::Mutex<Vec<Received>>>,
}

impl MockServer {
    pub fn start(replies: Vec<Canned>) -> Self {
        use std::io::{BufRead, BufReader, Read, Write};
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let received = Arc::new(std::sync::Mutex::new(Vec::new()));
        let log = received.clone();
        std::thread::spawn(move || {
            let mut served = 0usize;
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                if reader.read_line(&mut request_line).is_err() {
                    continue;
                }
                let mut headers = Vec::new();
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some((k, v)) = line.trim_end().split_once(':') {
                        let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
                        if k == "content-length" {
                            len = v.parse().unwrap_or(0);
                        }
                        headers.push((k, v));
                    }
                }
                let mut body = vec![0u8; len];
                let _ = reader.read_exact(&mut body);
                log.lock().unwrap().push(Received {
                    request_line: request_line.trim_end().to_string(),
                    headers,
                    body: String::from_utf8_lossy(&body).into_owned(),
                });
                let reply = replies[served.min(replies.len() - 1)].clone();
                served += 1;
                let mut head = format!(
                    "HTTP/1.1 {} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n",
                    reply.status,
                    reply.body.len()
                );
                for (k, v) in &reply.headers {
                    head.push_str(&format!("{k}: {v}\r\n"));
                }
                head.push_str("\r\n");
                let _ = stream.write_all(head.as_bytes());
                let _ = stream.write_all(reply.body.as_bytes());
                let _ = stream.flush();
            }
        });
        Self { url, received }
    }

    pub fn received(&self) -> Vec<Received> {
        self.received.lock().unwrap().clone()
    }
}

/// Credential value planted for leak scans.
pub const SENTINEL_KEY: &str = "sk-SENTINEL-7f3a9e21c4b8d605";
pub const SENTINEL_VAR: &str = "MMD_SENTINEL_KEY";

/// A complete run in which the judge is an HTTP backend authenticated with
/// the sentinel key. Returns the output directory and the server.
pub fn sentinel_run(tmp: &Path) -> (PathBuf, MockServer) {
    use mmdebate::cli::{run, Exit, Overrides, RunOptions, Runtime};
    // the first judge call fails with the key echoed back before succeeding
    let echo = Canned::json(500, serde_json::json!({"error": format!("bad token {SENTINEL_KEY}")}));
    let server = MockServer::start(vec![echo, chat_reply("No. I looked again and I could not find it.")]);
    let images = tmp.join("images");
    fs::create_dir_all(&images).unwrap();
    for item in probes() {
        fs::write(images.join(&item.image_ref), b"\xff\xd8\xff\xe0 not really a jpeg").unwrap();
    }
    let config = serde_json::json!({
        "backends": {
            "specs": [
                {"id": "script", "kind": "scripted", "script": debates_dir().join("script.json")},
                {"id": "remote", "kind": "openai_compatible_http", "endpoint": server.url, "model": "m",
                 "credential_env_var": SENTINEL_VAR, "retry": {"backoff_base_ms": 1, "backoff_cap_ms": 2}}
            ],
            "judge": "remote"
        },
        "dataset": {"path": debates_dir().join("probes.jsonl"), "image_root": images}
    });
    let config_path = tmp.join("sentinel-config.json");
    fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let out = tmp.join("sentinel-run");
    let env = |var: &str| (var == SENTINEL_VAR).then(|| SENTINEL_KEY.to_string());
    let rt = Runtime { env: &env, clock: Arc::new(FixedClock::default()) };
    let opts = RunOptions {
        config: Some(config_path),
        overrides: Overrides { out: Some(out.clone()), ..Overrides::default() },
        max_items: None,
    };
    let exit = run(&opts, &rt, &mut Vec::new()).unwrap();
    assert_eq!(exit, Exit::Ok);
    let mut report_out = Vec::new();
    mmdebate::cli::report(&out, false, true, &rt, &mut report_out).unwrap();
    (out, server)
}

/// Files under `root` whose bytes contain `needle`.
pub fn files_containing(root: &Path, needle: &str) -> Vec<PathBuf> {
    files_under(root)
        .into_iter()
        .filter(|p| {
            let bytes = fs::read(p).unwrap();
            bytes.windows(needle.len()).any(|w| w == needle.as_bytes())
        })
        .collect()
}
