use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Outcome of one page access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Access {
    Hit,
    /// Miss served from free capacity.
    Fault,
    /// Miss that evicted a resident page.
    Swap {
        evicted: u64,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheCounters {
    pub hits: u64,
    pub faults: u64,
    pub swaps: u64,
}

/// LRU page cache whose eviction candidates are restricted to the oldest
/// `⌈θ·capacity⌉` resident pages.
#[derive(Debug, Clone)]
pub struct ThetaLruCache {
    capacity: usize,
    theta: f64,
    /// stamp -> page, oldest first.
    by_age: BTreeMap<u64, u64>,
    stamps: HashMap<u64, u64>,
    clock: u64,
    counters: CacheCounters,
}

impl ThetaLruCache {
    pub fn new(capacity: usize, theta: f64) -> Result<Self, ConfigError> {
        if capacity == 0 {
            return Err(ConfigError::new("page_capacity", "must be positive"));
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(ConfigError::new(
                "lru_theta",
                format!("must lie in (0, 1], got {theta}"),
            ));
        }
        Ok(Self {
            capacity,
            theta,
            by_age: BTreeMap::new(),
            stamps: HashMap::new(),
            clock: 0,
            counters: CacheCounters::default(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn resident(&self) -> usize {
        self.stamps.len()
    }

    pub fn counters(&self) -> CacheCounters {
        self.counters
    }

    /// Size of the eviction window.
    pub fn window(&self) -> usize {
        ((self.theta * self.capacity as f64).ceil() as usize).clamp(1, self.capacity)
    }

    /// Resident pages, least recently used first.
    pub fn recency_order(&self) -> Vec<u64> {
        self.by_age.values().copied().collect()
    }

    pub fn access(&mut self, page: u64) -> Access {
        self.clock += 1;
        if let Some(old) = self.stamps.insert(page, self.clock) {
            self.by_age.remove(&old);
            self.by_age.insert(self.clock, page);
            self.counters.hits += 1;
            return Access::Hit;
        }
        self.counters.faults += 1;
        let outcome = if self.stamps.len() > self.capacity {
            // the least recently used page of the window
            let victim = self
                .by_age
                .iter()
                .take(self.window())
                .next()
                .map(|(&stamp, &p)| (stamp, p))
                .expect("cache is full");
            self.by_age.remove(&victim.0);
            self.stamps.remove(&victim.1);
            self.counters.swaps += 1;
            Access::Swap { evicted: victim.1 }
        } else {
            Access::Fault
        };
        self.by_age.insert(self.clock, page);
        outcome
    }

    pub fn run<I: IntoIterator<Item = u64>>(&mut self, pages: I) -> Vec<Access> {
        pages.into_iter().map(|p| self.access(p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_hits_cost_nothing() {
        let mut c = ThetaLruCache::new(4, 0.3).unwrap();
        c.access(9);
        for _ in 0..10 {
            assert_eq!(c.access(9), Access::Hit);
        }
        assert_eq!(
            c.counters(),
            CacheCounters {
                hits: 10,
                faults: 1,
                swaps: 0
            }
        );
    }

    #[test]
    fn evicts_oldest_of_window() {
        let mut c = ThetaLruCache::new(4, 0.5).unwrap();
        c.run([1, 2, 3, 4]);
        assert_eq!(c.window(), 2);
        assert_eq!(c.access(5), Access::Swap { evicted: 1 });
        assert_eq!(c.recency_order(), vec![2, 3, 4, 5]);
    }

    #[test]
    fn hit_refreshes_recency() {
        let mut c = ThetaLruCache::new(2, 1.0).unwrap();
        c.run([1, 2, 1]);
        assert_eq!(c.access(3), Access::Swap { evicted: 2 });
    }

    #[test]
    fn rejects_bad_theta() {
        assert!(ThetaLruCache::new(4, 0.0).is_err());
        assert!(ThetaLruCache::new(4, 1.5).is_err());
        assert!(ThetaLruCache::new(0, 0.5).is_err());
    }
}
