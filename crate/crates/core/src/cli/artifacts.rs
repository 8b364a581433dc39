//! Layout of a run directory and the files in it.
//!
//! ```text
//! manifest.json          written before the first debate, finalized after the last
//! results.jsonl          one ResultRecord per item, dataset order once the run ends
//! metrics.json           overall and per-split metrics
//! metrics.txt            the same as a table
//! transcripts/<id>.jsonl one Turn per line, appended as the debate goes
//! causes.json            cause labels, written by `report --causes`
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bench::{ResultRecord, SuiteSink};
use crate::protocol::{DebateOutcome, ProbeItem, Turn};

pub const MANIFEST: &str = "manifest.json";
pub const RESULTS: &str = "results.jsonl";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_TXT: &str = "metrics.txt";
pub const CAUSES: &str = "causes.json";
pub const TRANSCRIPTS: &str = "transcripts";

/// File name for an item's transcript. Ids made only of `[A-Za-z0-9._-]` are
/// used as they are; anything else is replaced and a digest suffix keeps
/// distinct ids apart.
pub fn transcript_file_name(item_id: &str) -> String {
    let safe = |c: char| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-');
    if !item_id.is_empty() && item_id.chars().all(safe) && !item_id.starts_with('.') {
        return format!("{item_id}.jsonl");
    }
    let cleaned: String = item_id
        .chars()
        .enumerate()
        .map(|(i, c)| if safe(c) && !(i == 0 && c == '.') { c } else { '_' })
        .collect();
    let digest = hex::encode(&Sha256::digest(item_id.as_bytes())[..4]);
    format!("{cleaned}-{digest}.jsonl")
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn transcript_ref(item_id: &str) -> String {
        format!("{TRANSCRIPTS}/{}", transcript_file_name(item_id))
    }

    pub fn transcript(&self, item_id: &str) -> PathBuf {
        self.root.join(TRANSCRIPTS).join(transcript_file_name(item_id))
    }

    pub fn create(&self) -> io::Result<()> {
        fs::create_dir_all(self.root.join(TRANSCRIPTS))
    }
}

/// Write `value` as pretty JSON through a temporary file and a rename.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> io::Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))
}

/// Complete lines of a JSONL file. A torn final line (from an interrupted
/// write) is skipped; a bad line anywhere else is an error.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> io::Result<Vec<T>> {
    let file = File::open(path)?;
    let lines: Vec<String> = BufReader::new(file).lines().collect::<io::Result<_>>()?;
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(_) if Some(i) == last => {
                tracing::warn!(file = %path.display(), line = i + 1, "dropping incomplete final line");
            }
            Err(e) => {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{} line {}: {e}", path.display(), i + 1),
                ))
            }
        }
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, values: &[T]) -> io::Result<()> {
    let mut buf = Vec::new();
    for v in values {
        serde_json::to_writer(&mut buf, v).map_err(io::Error::other)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

fn append_line<T: Serialize>(file: &mut File, value: &T) -> io::Result<()> {
    let mut line = serde_json::to_vec(value).map_err(io::Error::other)?;
    line.push(b'\n');
    file.write_all(&line)?;
    file.flush()
}

/// Writes transcripts and results into a [`RunDir`] as items progress.
pub struct FileSink {
    dir: RunDir,
    results: Mutex<File>,
}

impl FileSink {
    pub fn open(dir: &RunDir) -> io::Result<Self> {
        dir.create()?;
        let results = OpenOptions::new().create(true).append(true).open(dir.file(RESULTS))?;
        Ok(Self {
            dir: dir.clone(),
            results: Mutex::new(results),
        })
    }
}

impl SuiteSink for FileSink {
    fn outcome_ref(&self, item: &ProbeItem) -> String {
        RunDir::transcript_ref(&item.id)
    }

    fn begin(&self, item: &ProbeItem) -> io::Result<()> {
        // a transcript without a result is left over from an interrupted attempt
        File::create(self.dir.transcript(&item.id)).map(|_| ())
    }

    fn turn(&self, item: &ProbeItem, turn: &Turn) -> io::Result<()> {
        let mut file = OpenOptions::new().append(true).open(self.dir.transcript(&item.id))?;
        append_line(&mut file, turn)
    }

    fn finished(&self, _item: &ProbeItem, _outcome: Option<&DebateOutcome>, record: &ResultRecord) -> io::Result<()> {
        append_line(&mut self.results.lock().unwrap(), record)
    }
}
