//! Atomic file persistence and the per-graph lock.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use stateplan::graph::{self, StateGraph, ValueConfig};
use stateplan::oracle::Learnings;

use crate::CliError;

/// Write-temp-then-rename so readers never observe a partial file. The
/// temp file lives next to the target to keep the rename on one filesystem.
///
/// Setting `STATEPLAN_CRASH_BEFORE_RENAME` aborts the process between the
/// temp write and the rename; the fault-injection tests use it to prove a
/// killed run leaves the previous file intact.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    if std::env::var_os("STATEPLAN_CRASH_BEFORE_RENAME").is_some() {
        eprintln!("STATEPLAN_CRASH_BEFORE_RENAME set; aborting before rename");
        std::process::abort();
    }
    tmp.persist(path)?;
    Ok(())
}

/// Exclusive lock on a graph file, held for the life of the guard. The lock
/// is a sibling `.lock` file created with `create_new`; a leftover lock from
/// a crashed run must be deleted by hand (its content names the pid).
pub struct LockGuard {
    path: PathBuf,
}

impl LockGuard {
    pub fn acquire(graph_path: &Path) -> Result<LockGuard, CliError> {
        let mut name = graph_path.file_name().unwrap_or_default().to_os_string();
        name.push(".lock");
        let path = graph_path.with_file_name(name);
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut file) => {
                let _ = writeln!(file, "{}", std::process::id());
                Ok(LockGuard { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(CliError::Config(format!(
                "lock file {} exists; another session may be writing this graph \
                 (delete the lock if that session is gone)",
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Loads a graph file if it exists, along with the config it was saved with.
pub fn load_graph(path: &Path) -> Result<Option<(StateGraph, ValueConfig)>, CliError> {
    if !path.exists() {
        return Ok(None);
    }
    let bytes = fs::read(path)?;
    Ok(Some(graph::deserialize(&bytes)?))
}

pub fn save_graph(path: &Path, graph: &StateGraph, cfg: &ValueConfig) -> io::Result<()> {
    atomic_write(path, &graph::serialize(graph, cfg))
}

/// Learnings persist as the same quoted-string list the oracle emits, so the
/// file contents can be pasted straight into a prompt.
pub fn load_learnings(path: &Path) -> Result<Learnings, CliError> {
    if !path.exists() {
        return Ok(Learnings::default());
    }
    let raw = fs::read_to_string(path)?;
    let lines: Vec<String> = serde_json::from_str(&raw)
        .map_err(|e| CliError::Config(format!("learnings file {}: {e}", path.display())))?;
    Ok(Learnings::new(lines))
}

pub fn save_learnings(path: &Path, learnings: &Learnings) -> io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(learnings).expect("learnings serialize");
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}
