//! Store backed by a plain directory, typically one kept in sync across
//! machines by an external file synchronization service.
//!
//! Objects are written to a hidden `.tmp-*` file first and then linked into
//! place under their final name, so a reader either sees the whole object or
//! nothing. Linking fails if the name exists, which gives write-once names
//! without a lock. Filesystems without hard links fall back to `rename`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use poolea_core::store::{check_put, is_valid_name, SharedStore, StoreError};

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Clone, Debug)]
pub struct DirectoryStore {
    dir: PathBuf,
}

impl DirectoryStore {
    /// Opens `<root>/<namespace>`, creating it if needed.
    pub fn open(root: impl AsRef<Path>, namespace: &str) -> io::Result<Self> {
        Self::at(root.as_ref().join(namespace))
    }

    /// Uses `dir` directly as the object namespace.
    pub fn at(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn tmp_path(&self) -> PathBuf {
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.subsec_nanos())
            .unwrap_or(0);
        let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
        self.dir
            .join(format!(".tmp-{}-{n}-{nanos}", std::process::id()))
    }

    fn publish(&self, tmp: &Path, target: &Path, name: &str) -> Result<(), StoreError> {
        match fs::hard_link(tmp, target) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                Err(StoreError::Conflict(name.into()))
            }
            Err(_) => {
                if target.exists() {
                    return Err(StoreError::Conflict(name.into()));
                }
                fs::rename(tmp, target).map_err(|e| StoreError::Write(e.to_string()))
            }
        }
    }
}

impl SharedStore for DirectoryStore {
    fn put(&self, name: &str, payload: &[u8]) -> Result<(), StoreError> {
        check_put(name, payload)?;
        let target = self.dir.join(name);
        if target.exists() {
            return Err(StoreError::Conflict(name.into()));
        }
        let tmp = self.tmp_path();
        let written = (|| {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(payload)?;
            f.sync_all()
        })();
        if let Err(e) = written {
            let _ = fs::remove_file(&tmp);
            return Err(StoreError::Write(e.to_string()));
        }
        let published = self.publish(&tmp, &target, name);
        let _ = fs::remove_file(&tmp);
        published
    }

    fn list(&self, prefix: &str) -> Result<Vec<String>, StoreError> {
        let entries = fs::read_dir(&self.dir).map_err(|e| StoreError::Read(e.to_string()))?;
        let mut names = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| StoreError::Read(e.to_string()))?;
            if let Some(name) = entry.file_name().to_str() {
                if name.starts_with(prefix) && is_valid_name(name) {
                    names.push(name.to_string());
                }
            }
        }
        names.sort();
        Ok(names)
    }

    fn get(&self, name: &str) -> Result<Vec<u8>, StoreError> {
        if !is_valid_name(name) {
            return Err(StoreError::NotFound(name.into()));
        }
        match fs::read(self.dir.join(name)) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StoreError::NotFound(name.into())),
            Err(e) => Err(StoreError::Read(e.to_string())),
        }
    }
}
