//! Shared object store abstraction and the object naming grammar.
//!
//! A store is a flat namespace of write-once objects. Each participant sees
//! its own puts immediately and other participants' puts after a
//! backend-defined propagation delay; once visible an object stays visible.
//!
//! Object names are the wire protocol between nodes:
//!
//! * `migrant-<node_id>-<sequence>.rec`
//! * `done-<node_id>.rec`
//!
//! Node ids are 1 to 64 characters from `[A-Za-z0-9_]`.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

pub const MIGRANT_PREFIX: &str = "migrant-";
pub const DONE_PREFIX: &str = "done-";
pub const RECORD_SUFFIX: &str = ".rec";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("object {0} already exists")]
    Conflict(String),
    #[error("object {0} not found")]
    NotFound(String),
    #[error("invalid object name {0:?}")]
    InvalidName(String),
    #[error("empty payload for {0}")]
    EmptyPayload(String),
    #[error("write failed: {0}")]
    Write(String),
    #[error("read failed: {0}")]
    Read(String),
}

pub trait SharedStore {
    /// Publishes a new object. Names are write-once.
    fn put(&self, name: &str, payload: &[u8]) -> Result<(), StoreError>;

    /// Names visible to this participant that start with `prefix`, sorted.
    fn list(&self, prefix: &str) -> Result<Vec<String>, StoreError>;

    /// Exact bytes of a visible object.
    fn get(&self, name: &str) -> Result<Vec<u8>, StoreError>;
}

impl<S: SharedStore + ?Sized> SharedStore for &S {
    fn put(&self, name: &str, payload: &[u8]) -> Result<(), StoreError> {
        (**self).put(name, payload)
    }
    fn list(&self, prefix: &str) -> Result<Vec<String>, StoreError> {
        (**self).list(prefix)
    }
    fn get(&self, name: &str) -> Result<Vec<u8>, StoreError> {
        (**self).get(name)
    }
}

impl<S: SharedStore + ?Sized> SharedStore for Box<S> {
    fn put(&self, name: &str, payload: &[u8]) -> Result<(), StoreError> {
        (**self).put(name, payload)
    }
    fn list(&self, prefix: &str) -> Result<Vec<String>, StoreError> {
        (**self).list(prefix)
    }
    fn get(&self, name: &str) -> Result<Vec<u8>, StoreError> {
        (**self).get(name)
    }
}

impl<S: SharedStore + ?Sized> SharedStore for Arc<S> {
    fn put(&self, name: &str, payload: &[u8]) -> Result<(), StoreError> {
        (**self).put(name, payload)
    }
    fn list(&self, prefix: &str) -> Result<Vec<String>, StoreError> {
        (**self).list(prefix)
    }
    fn get(&self, name: &str) -> Result<Vec<u8>, StoreError> {
        (**self).get(name)
    }
}

pub fn is_valid_node_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

pub fn migrant_name(node_id: &str, sequence: u64) -> String {
    format!("{MIGRANT_PREFIX}{node_id}-{sequence}{RECORD_SUFFIX}")
}

pub fn done_name(node_id: &str) -> String {
    format!("{DONE_PREFIX}{node_id}{RECORD_SUFFIX}")
}

/// Checks `name` against the object naming grammar.
pub fn is_valid_name(name: &str) -> bool {
    let Some(stem) = name.strip_suffix(RECORD_SUFFIX) else {
        return false;
    };
    if let Some(rest) = stem.strip_prefix(MIGRANT_PREFIX) {
        match rest.rsplit_once('-') {
            Some((node, seq)) => {
                is_valid_node_id(node)
                    && !seq.is_empty()
                    && seq.bytes().all(|b| b.is_ascii_digit())
                    && seq.parse::<u64>().is_ok()
            }
            None => false,
        }
    } else if let Some(node) = stem.strip_prefix(DONE_PREFIX) {
        is_valid_node_id(node)
    } else {
        false
    }
}

/// Shared precondition check for `put` implementations.
pub fn check_put(name: &str, payload: &[u8]) -> Result<(), StoreError> {
    if !is_valid_name(name) {
        return Err(StoreError::InvalidName(name.into()));
    }
    if payload.is_empty() {
        return Err(StoreError::EmptyPayload(name.into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naming_grammar() {
        assert!(is_valid_name(&migrant_name("laptop3", 0)));
        assert!(is_valid_name(&migrant_name("n_1", 18446744073709551615)));
        assert!(is_valid_name(&done_name("A")));
        for bad in [
            "migrant-a.rec",
            "migrant--1.rec",
            "migrant-a-1",
            "migrant-a-b-1.rec",
            "migrant-a-+1.rec",
            "done-.rec",
            ".tmp-123",
            "other-a.rec",
            "done-a b.rec",
        ] {
            assert!(!is_valid_name(bad), "{bad}");
        }
    }

    #[test]
    fn put_preconditions() {
        assert!(check_put("done-a.rec", b"x").is_ok());
        assert!(matches!(
            check_put("done-a.rec", b""),
            Err(StoreError::EmptyPayload(_))
        ));
        assert!(matches!(
            check_put("x", b"x"),
            Err(StoreError::InvalidName(_))
        ));
    }
}
