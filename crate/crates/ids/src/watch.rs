//! Directory watch: runs detection on captures as they are dropped in.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use flowguard_fl::ModelFile;

use crate::detect::detect_many;
use crate::syslog::SyslogSink;
use crate::IdsError;

fn is_capture(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pcap"))
}

fn list_captures(dir: &Path) -> Result<BTreeMap<PathBuf, u64>, IdsError> {
    let entries = fs::read_dir(dir).map_err(|e| IdsError::Input(format!("{}: {e}", dir.display())))?;
    let mut out = BTreeMap::new();
    for entry in entries.flatten() {
        let path = entry.path();
        if is_capture(&path) {
            if let Ok(meta) = entry.metadata() {
                if meta.is_file() {
                    out.insert(path, meta.len());
                }
            }
        }
    }
    Ok(out)
}

pub struct Watcher<'a> {
    pub dir: PathBuf,
    pub audit_dir: PathBuf,
    pub model: &'a ModelFile,
    pub sink: Option<&'a SyslogSink>,
    pub workers: usize,
    done: BTreeSet<PathBuf>,
    /// Size seen on the previous poll; a file is processed once its size
    /// stops changing.
    pending: BTreeMap<PathBuf, u64>,
}

impl<'a> Watcher<'a> {
    pub fn new(dir: PathBuf, audit_dir: PathBuf, model: &'a ModelFile, sink: Option<&'a SyslogSink>) -> Self {
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
        Watcher { dir, audit_dir, model, sink, workers, done: BTreeSet::new(), pending: BTreeMap::new() }
    }

    /// One poll. Returns the captures processed during it.
    pub fn poll(&mut self, require_stable: bool) -> Result<Vec<PathBuf>, IdsError> {
        let seen = list_captures(&self.dir)?;
        let mut ready = Vec::new();
        for (path, size) in &seen {
            if self.done.contains(path) {
                continue;
            }
            let stable = self.pending.get(path) == Some(size);
            if stable || !require_stable {
                ready.push(path.clone());
            } else {
                self.pending.insert(path.clone(), *size);
            }
        }
        for (path, result) in detect_many(&ready, self.model, &self.audit_dir, self.sink, self.workers) {
            if let Err(e) = result {
                log::error!("{}: {e}", path.display());
            }
            self.pending.remove(&path);
            self.done.insert(path);
        }
        Ok(ready)
    }

    /// Polls forever.
    pub fn run(&mut self, interval: Duration) -> Result<(), IdsError> {
        loop {
            self.poll(true)?;
            std::thread::sleep(interval);
        }
    }
}
