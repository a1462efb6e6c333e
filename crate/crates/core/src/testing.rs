//! Zero-latency store and manual clock for unit tests.

use alloc::collections::BTreeMap;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;
use core::cell::{Cell, RefCell};

use crate::clock::Clock;
use crate::store::{check_put, SharedStore, StoreError};

#[derive(Clone, Default)]
pub struct MemStore {
    objects: Rc<RefCell<BTreeMap<String, Vec<u8>>>>,
    pub fail_puts: Rc<Cell<usize>>,
    pub fail_reads: Rc<Cell<bool>>,
    pub put_attempts: Rc<Cell<usize>>,
}

impl MemStore {
    pub fn insert_raw(&self, name: &str, bytes: &[u8]) {
        self.objects
            .borrow_mut()
            .insert(name.into(), bytes.to_vec());
    }

    pub fn len(&self) -> usize {
        self.objects.borrow().len()
    }
}

impl SharedStore for MemStore {
    fn put(&self, name: &str, payload: &[u8]) -> Result<(), StoreError> {
        self.put_attempts.set(self.put_attempts.get() + 1);
        if self.fail_puts.get() > 0 {
            self.fail_puts.set(self.fail_puts.get() - 1);
            return Err(StoreError::Write("injected".into()));
        }
        check_put(name, payload)?;
        let mut objects = self.objects.borrow_mut();
        if objects.contains_key(name) {
            return Err(StoreError::Conflict(name.into()));
        }
        objects.insert(name.into(), payload.to_vec());
        Ok(())
    }

    fn list(&self, prefix: &str) -> Result<Vec<String>, StoreError> {
        if self.fail_reads.get() {
            return Err(StoreError::Read("injected".into()));
        }
        Ok(self
            .objects
            .borrow()
            .keys()
            .filter(|k| k.starts_with(prefix))
            .cloned()
            .collect())
    }

    fn get(&self, name: &str) -> Result<Vec<u8>, StoreError> {
        self.objects
            .borrow()
            .get(name)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(name.into()))
    }
}

#[derive(Default)]
pub struct ManualClock {
    pub now: Cell<u64>,
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.now.get()
    }

    fn sleep_ms(&self, ms: u64) {
        self.now.set(self.now.get() + ms);
    }

    fn charge_evaluations(&self, count: u64) {
        self.now.set(self.now.get() + count / 100);
    }
}
