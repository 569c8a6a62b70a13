use std::collections::{HashSet, VecDeque};
use std::sync::{Arc, Mutex};

use axum::http::StatusCode;
use indexmap::IndexMap;
use probattn::playground::SegmentationSession;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::ApiError;

pub type Handle = Arc<tokio::sync::Mutex<SegmentationSession>>;

/// Bytes of randomness per session id.
const ID_BYTES: usize = 16;
const REMEMBERED_EVICTIONS: usize = 4096;

/// Outcome of looking up a session id.
#[derive(Debug)]
pub enum Lookup {
    Live(Handle),
    Evicted,
    Unknown,
}

/// Bounded LRU of sessions keyed by random ids.
pub struct SessionStore {
    inner: Mutex<Inner>,
    capacity: usize,
}

struct Inner {
    sessions: IndexMap<String, Handle>,
    evicted: HashSet<String>,
    eviction_order: VecDeque<String>,
    rng: ChaCha20Rng,
}

impl SessionStore {
    pub fn new(capacity: usize, seed: Option<u64>) -> Self {
        let rng = match seed {
            Some(s) => ChaCha20Rng::seed_from_u64(s),
            None => ChaCha20Rng::from_os_rng(),
        };
        SessionStore {
            inner: Mutex::new(Inner {
                sessions: IndexMap::new(),
                evicted: HashSet::new(),
                eviction_order: VecDeque::new(),
                rng,
            }),
            capacity: capacity.max(1),
        }
    }

    pub fn insert(&self, session: SegmentationSession) -> String {
        let mut inner = self.inner.lock().expect("store lock");
        let id = loop {
            let bytes: [u8; ID_BYTES] = inner.rng.random();
            let id = hex::encode(bytes);
            if !inner.sessions.contains_key(&id) && !inner.evicted.contains(&id) {
                break id;
            }
        };
        inner.sessions.insert(id.clone(), Arc::new(tokio::sync::Mutex::new(session)));
        while inner.sessions.len() > self.capacity {
            let (old, _) = inner.sessions.shift_remove_index(0).expect("non-empty");
            tracing::info!(session = %old, "session evicted");
            inner.evicted.insert(old.clone());
            inner.eviction_order.push_back(old);
            if inner.eviction_order.len() > REMEMBERED_EVICTIONS {
                let gone = inner.eviction_order.pop_front().expect("non-empty");
                inner.evicted.remove(&gone);
            }
        }
        id
    }

    /// Looks up `id` and marks it most recently used.
    pub fn lookup(&self, id: &str) -> Lookup {
        let mut inner = self.inner.lock().expect("store lock");
        match inner.sessions.shift_remove(id) {
            Some(handle) => {
                inner.sessions.insert(id.to_string(), handle.clone());
                Lookup::Live(handle)
            }
            None if inner.evicted.contains(id) => Lookup::Evicted,
            None => Lookup::Unknown,
        }
    }

    pub(crate) fn get(&self, id: &str) -> Result<Handle, ApiError> {
        match self.lookup(id) {
            Lookup::Live(h) => Ok(h),
            Lookup::Evicted => Err(ApiError::new(StatusCode::GONE, "session_evicted", format!("session {id} was evicted"))),
            Lookup::Unknown => Err(ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id}"))),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("store lock").sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
