//! In-memory store with seeded propagation delays.
//!
//! Each put draws one delay, `base_ms + U{0..=jitter_ms}`, from a seeded
//! stream. The writer sees the object immediately; every other participant
//! sees it once its own clock reaches `put time + delay`. Participants carry
//! their own clocks, so the same store works under real or virtual time.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};

use poolea_core::genome::sample_index;
use poolea_core::store::{check_put, SharedStore, StoreError};
use poolea_core::{Clock, RngStream};

/// Default propagation delay of a synced folder.
pub const DEFAULT_BASE_MS: u64 = 1000;
pub const DEFAULT_JITTER_MS: u64 = 500;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VisibilityEvent {
    pub name: String,
    pub writer: String,
    pub put_at_ms: u64,
    pub visible_at_ms: u64,
}

#[derive(Debug)]
struct Object {
    bytes: Vec<u8>,
    writer: String,
    visible_at_ms: u64,
}

#[derive(Debug)]
struct Inner {
    objects: BTreeMap<String, Object>,
    events: Vec<VisibilityEvent>,
    rng: RngStream,
    base_ms: u64,
    jitter_ms: u64,
}

#[derive(Clone, Debug)]
pub struct LatencySimStore {
    inner: Arc<Mutex<Inner>>,
}

impl LatencySimStore {
    pub fn new(base_ms: u64, jitter_ms: u64, seed: u64) -> Self {
        Self::with_rng(base_ms, jitter_ms, RngStream::new(seed))
    }

    pub fn with_rng(base_ms: u64, jitter_ms: u64, rng: RngStream) -> Self {
        Self {
            inner: Arc::new(Mutex::new(Inner {
                objects: BTreeMap::new(),
                events: Vec::new(),
                rng,
                base_ms,
                jitter_ms,
            })),
        }
    }

    /// A view of the store for one participant.
    pub fn participant<C: Clock>(&self, id: impl Into<String>, clock: C) -> SimParticipant<C> {
        SimParticipant {
            store: self.clone(),
            id: id.into(),
            clock,
        }
    }

    /// Every put so far, in put order.
    pub fn events(&self) -> Vec<VisibilityEvent> {
        self.lock().events.clone()
    }

    pub fn len(&self) -> usize {
        self.lock().objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        // A panicking participant cannot leave the map half-updated.
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub struct SimParticipant<C> {
    store: LatencySimStore,
    id: String,
    clock: C,
}

impl<C: Clock> SimParticipant<C> {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn clock(&self) -> &C {
        &self.clock
    }

    fn visible(&self, obj: &Object, now: u64) -> bool {
        obj.writer == self.id || now >= obj.visible_at_ms
    }
}

impl<C: Clock> SharedStore for SimParticipant<C> {
    fn put(&self, name: &str, payload: &[u8]) -> Result<(), StoreError> {
        check_put(name, payload)?;
        let now = self.clock.now_ms();
        let mut inner = self.store.lock();
        if inner.objects.contains_key(name) {
            return Err(StoreError::Conflict(name.into()));
        }
        let jitter = if inner.jitter_ms == 0 {
            0
        } else {
            let bound = inner.jitter_ms as usize + 1;
            sample_index(&mut inner.rng, bound) as u64
        };
        let visible_at_ms = now + inner.base_ms + jitter;
        inner.objects.insert(
            name.into(),
            Object {
                bytes: payload.to_vec(),
                writer: self.id.clone(),
                visible_at_ms,
            },
        );
        inner.events.push(VisibilityEvent {
            name: name.into(),
            writer: self.id.clone(),
            put_at_ms: now,
            visible_at_ms,
        });
        Ok(())
    }

    fn list(&self, prefix: &str) -> Result<Vec<String>, StoreError> {
        let now = self.clock.now_ms();
        let inner = self.store.lock();
        Ok(inner
            .objects
            .range(prefix.to_string()..)
            .take_while(|(name, _)| name.starts_with(prefix))
            .filter(|(_, obj)| self.visible(obj, now))
            .map(|(name, _)| name.clone())
            .collect())
    }

    fn get(&self, name: &str) -> Result<Vec<u8>, StoreError> {
        let now = self.clock.now_ms();
        let inner = self.store.lock();
        match inner.objects.get(name) {
            Some(obj) if self.visible(obj, now) => Ok(obj.bytes.clone()),
            _ => Err(StoreError::NotFound(name.into())),
        }
    }
}
