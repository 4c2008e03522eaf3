//! On-disk run directories.
//!
//! ```text
//! <root>/<run_id>/config.json
//! <root>/<run_id>/record.jsonl   one event per line, appended and fsynced
//! <root>/<run_id>/artifacts/     best programs with their transitions
//! <root>/<run_id>/lock           present while a writer holds the run
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::evolution::{EventEnvelope, EventSink, RecordError, RunConfig, RunRecord};

pub const CONFIG_FILE: &str = "config.json";
pub const RECORD_FILE: &str = "record.jsonl";
pub const ARTIFACT_DIR: &str = "artifacts";
pub const LOCK_FILE: &str = "lock";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("run {0} not found")]
    NotFound(String),
    #[error("run {0} already exists")]
    AlreadyExists(String),
    #[error("run {run_id} is locked by process {pid}")]
    Locked { run_id: String, pid: String },
    #[error("{path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("record invariant violated: {0}")]
    Invariant(#[from] RecordError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A loaded run: its record, the events it was built from, and its path.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub record: RunRecord,
    pub events: Vec<EventEnvelope>,
    /// Bytes of record.jsonl holding complete events.
    valid_len: u64,
}

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join(run_id)
    }

    /// Run ids with a config file, sorted.
    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(io_err(&self.root))? {
            let entry = entry.map_err(io_err(&self.root))?;
            if entry.path().join(CONFIG_FILE).is_file() {
                if let Some(name) = entry.file_name().to_str() {
                    ids.push(name.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Create a new run directory and take its write lock.
    pub fn create(&self, cfg: &RunConfig) -> Result<RunWriter, StoreError> {
        let run_id = cfg.run_id();
        let dir = self.run_dir(&run_id);
        if dir.join(CONFIG_FILE).exists() {
            return Err(StoreError::AlreadyExists(run_id));
        }
        fs::create_dir_all(dir.join(ARTIFACT_DIR)).map_err(io_err(&dir))?;
        let lock = RunLock::acquire(&dir, &run_id)?;
        let config_path = dir.join(CONFIG_FILE);
        let json = serde_json::to_vec_pretty(cfg).map_err(|e| StoreError::Config(e.to_string()))?;
        write_atomic(&config_path, &json)?;
        let record_path = dir.join(RECORD_FILE);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&record_path)
            .map_err(io_err(&record_path))?;
        Ok(RunWriter {
            dir,
            file,
            last_seq: 0,
            _lock: lock,
        })
    }

    pub fn load(&self, run_id: &str) -> Result<LoadedRun, StoreError> {
        let dir = self.run_dir(run_id);
        if !dir.join(CONFIG_FILE).is_file() {
            return Err(StoreError::NotFound(run_id.to_string()));
        }
        load_run(&dir)
    }

    /// Load a run and take its write lock, dropping any torn final line.
    pub fn open_writer(&self, run_id: &str) -> Result<(LoadedRun, RunWriter), StoreError> {
        let dir = self.run_dir(run_id);
        if !dir.join(CONFIG_FILE).is_file() {
            return Err(StoreError::NotFound(run_id.to_string()));
        }
        let lock = RunLock::acquire(&dir, run_id)?;
        let loaded = load_run(&dir)?;
        let record_path = dir.join(RECORD_FILE);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&record_path)
            .map_err(io_err(&record_path))?;
        file.set_len(loaded.valid_len).map_err(io_err(&record_path))?;
        fs::create_dir_all(dir.join(ARTIFACT_DIR)).map_err(io_err(&dir))?;
        let writer = RunWriter {
            dir,
            file,
            last_seq: loaded.record.last_seq,
            _lock: lock,
        };
        Ok((loaded, writer))
    }

    /// Write a complete run from its events, as a fresh directory.
    pub fn save(&self, cfg: &RunConfig, events: &[EventEnvelope]) -> Result<RunRecord, StoreError> {
        let record = RunRecord::replay(cfg.run_id(), cfg.clone(), events)?;
        let mut writer = self.create(cfg)?;
        for e in events {
            writer.append(e).map_err(|m| StoreError::Config(m))?;
        }
        Ok(record)
    }
}

/// Rebuild a run from its directory, re-checking every record invariant.
pub fn load_run(dir: &Path) -> Result<LoadedRun, StoreError> {
    let config_path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&config_path).map_err(io_err(&config_path))?;
    let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| StoreError::Config(e.to_string()))?;
    let run_id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .map(str::to_string)
        .unwrap_or_else(|| cfg.run_id());
    let record_path = dir.join(RECORD_FILE);
    let bytes = match fs::read(&record_path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(io_err(&record_path)(e)),
    };
    let mut events = Vec::new();
    let mut record = RunRecord::new(run_id, cfg);
    let mut offset = 0usize;
    let mut line_no = 0;
    while offset < bytes.len() {
        line_no += 1;
        let end = bytes[offset..].iter().position(|&b| b == b'\n').map(|p| offset + p);
        let line = &bytes[offset..end.unwrap_or(bytes.len())];
        match serde_json::from_slice::<EventEnvelope>(line) {
            Ok(e) if end.is_some() => {
                record.apply(&e)?;
                events.push(e);
                offset = end.expect("checked") + 1;
            }
            result => {
                // only an unterminated final line may be incomplete
                if end.is_none() {
                    log::warn!(
                        "{}: dropping incomplete final line {line_no} ({} bytes)",
                        record_path.display(),
                        line.len()
                    );
                    break;
                }
                return Err(StoreError::Corrupt {
                    path: record_path,
                    line: line_no,
                    message: result.err().map_or_else(String::new, |e| e.to_string()),
                });
            }
        }
    }
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        record,
        events,
        valid_len: offset as u64,
    })
}

/// Single writer for one run directory.
pub struct RunWriter {
    dir: PathBuf,
    file: File,
    last_seq: u64,
    _lock: RunLock,
}

impl RunWriter {
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }
}

impl EventSink for RunWriter {
    fn append(&mut self, event: &EventEnvelope) -> Result<(), String> {
        if event.seq <= self.last_seq {
            return Err(format!("sequence {} after {}", event.seq, self.last_seq));
        }
        let mut line = serde_json::to_vec(event).map_err(|e| e.to_string())?;
        line.push(b'\n');
        self.file.write_all(&line).map_err(|e| e.to_string())?;
        self.file.sync_data().map_err(|e| e.to_string())?;
        self.last_seq = event.seq;
        Ok(())
    }

    fn write_artifact(&mut self, name: &str, contents: &[u8]) -> Result<(), String> {
        if name.contains('/') || name.contains("..") {
            return Err(format!("bad artifact name {name}"));
        }
        write_atomic(&self.dir.join(ARTIFACT_DIR).join(name), contents).map_err(|e| e.to_string())
    }
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(contents).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Exclusive lock file holding the writer's process id.
struct RunLock {
    path: PathBuf,
}

impl RunLock {
    fn acquire(dir: &Path, run_id: &str) -> Result<Self, StoreError> {
        let path = dir.join(LOCK_FILE);
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    write!(f, "{}", std::process::id()).map_err(io_err(&path))?;
                    return Ok(Self { path });
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    let pid = fs::read_to_string(&path).unwrap_or_default().trim().to_string();
                    if !process_alive(&pid) {
                        log::warn!("removing stale lock of run {run_id} (process {pid})");
                        let _ = fs::remove_file(&path);
                        continue;
                    }
                    return Err(StoreError::Locked {
                        run_id: run_id.to_string(),
                        pid,
                    });
                }
                Err(e) => return Err(io_err(&path)(e)),
            }
        }
        Err(StoreError::Locked {
            run_id: run_id.to_string(),
            pid: "unknown".into(),
        })
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

// Without /proc a lock is assumed live and must be removed by hand.
fn process_alive(pid: &str) -> bool {
    let Ok(pid) = pid.parse::<u32>() else {
        return false;
    };
    if cfg!(target_os = "linux") {
        Path::new("/proc").join(pid.to_string()).exists()
    } else {
        true
    }
}
