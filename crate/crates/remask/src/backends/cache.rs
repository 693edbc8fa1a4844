//! Bounded response cache for remote backends.
//!
//! Keys are `(endpoint, sha256 of the canonical request body)`; values are
//! the raw response bytes, so a hit replays the original response
//! byte-for-byte. Least-recently-used entries are evicted at capacity.

use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use lru::LruCache;
use sha2::{Digest, Sha256};

use crate::error::Result;

type Key = (String, [u8; 32]);

pub struct ResponseCache {
    entries: Mutex<LruCache<Key, Vec<u8>>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl ResponseCache {
    pub fn new(capacity: usize) -> Self {
        let capacity = NonZeroUsize::new(capacity.max(1)).expect("max(1) is non-zero");
        Self {
            entries: Mutex::new(LruCache::new(capacity)),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    fn key(endpoint: &str, body: &[u8]) -> Key {
        let mut hasher = Sha256::new();
        hasher.update(body);
        (endpoint.to_string(), hasher.finalize().into())
    }

    /// Returns the cached response for `(endpoint, body)` or produces one
    /// with `fetch` and stores it. Errors from `fetch` are not cached.
    pub fn get_or_fetch(
        &self,
        endpoint: &str,
        body: &[u8],
        fetch: impl FnOnce() -> Result<Vec<u8>>,
    ) -> Result<Vec<u8>> {
        let key = Self::key(endpoint, body);
        if let Some(found) = self.entries.lock().expect("cache poisoned").get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(found.clone());
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let response = fetch()?;
        self.entries
            .lock()
            .expect("cache poisoned")
            .put(key, response.clone());
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    #[test]
    fn hit_replays_identical_bytes() {
        let cache = ResponseCache::new(8);
        let calls = AtomicUsize::new(0);
        let fetch = || {
            calls.fetch_add(1, Ordering::Relaxed);
            Ok(b"payload-123".to_vec())
        };
        let a = cache.get_or_fetch("/v1/classify", b"req", fetch).unwrap();
        let b = cache
            .get_or_fetch("/v1/classify", b"req", || unreachable!("must hit"))
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(calls.load(Ordering::Relaxed), 1);
        assert_eq!(cache.hits(), 1);
        assert_eq!(cache.misses(), 1);
    }

    #[test]
    fn distinct_endpoints_do_not_collide() {
        let cache = ResponseCache::new(8);
        cache
            .get_or_fetch("/v1/classify", b"req", || Ok(b"a".to_vec()))
            .unwrap();
        let other = cache
            .get_or_fetch("/v1/fill_mask", b"req", || Ok(b"b".to_vec()))
            .unwrap();
        assert_eq!(other, b"b");
        assert_eq!(cache.misses(), 2);
    }

    #[test]
    fn capacity_evicts_least_recent() {
        let cache = ResponseCache::new(2);
        cache.get_or_fetch("/e", b"1", || Ok(vec![1])).unwrap();
        cache.get_or_fetch("/e", b"2", || Ok(vec![2])).unwrap();
        cache.get_or_fetch("/e", b"3", || Ok(vec![3])).unwrap();
        // "1" was evicted; refetching misses.
        cache.get_or_fetch("/e", b"1", || Ok(vec![1])).unwrap();
        assert_eq!(cache.misses(), 4);
        assert_eq!(cache.hits(), 0);
    }

    #[test]
    fn fetch_errors_are_not_cached() {
        let cache = ResponseCache::new(4);
        let r = cache.get_or_fetch("/e", b"x", || {
            Err(crate::error::Error::EmptyDataset)
        });
        assert!(r.is_err());
        let ok = cache.get_or_fetch("/e", b"x", || Ok(vec![7])).unwrap();
        assert_eq!(ok, vec![7]);
        assert_eq!(cache.misses(), 2);
    }
}
