//! Uniform-item caches with pluggable replacement.
//!
//! Online policies ([`Policy::Lru`], [`Policy::Lru2`], [`Policy::Lfu`],
//! [`Policy::Lirs`]) run through [`Cache::access`]. [`Policy::Belady`] needs
//! the whole trace and is computed offline by [`belady`].

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::hash::Hash;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::ServiceId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Policy {
    Lru,
    Lru2,
    Lfu,
    Lirs,
    Belady,
}

impl Policy {
    pub const ALL: [Policy; 5] = [Policy::Lru, Policy::Lru2, Policy::Lfu, Policy::Lirs, Policy::Belady];
    pub const ONLINE: [Policy; 4] = [Policy::Lru, Policy::Lru2, Policy::Lfu, Policy::Lirs];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Lru => "LRU",
            Policy::Lru2 => "LRU2",
            Policy::Lfu => "LFU",
            Policy::Lirs => "LIRS",
            Policy::Belady => "BELADY",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace(['-', '_'], "").as_str() {
            "LRU" => Ok(Policy::Lru),
            "LRU2" | "LRUK" => Ok(Policy::Lru2),
            "LFU" => Ok(Policy::Lfu),
            "LIRS" => Ok(Policy::Lirs),
            "BELADY" | "OPT" | "MIN" => Ok(Policy::Belady),
            _ => Err(Error::Config(format!("unknown cache policy `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub capacity: usize,
    pub policy: Policy,
    #[serde(default = "default_hir_fraction")]
    pub lirs_hir_fraction: f64,
}

fn default_hir_fraction() -> f64 {
    0.1
}

impl CacheConfig {
    pub fn new(policy: Policy, capacity: usize) -> Self {
        CacheConfig { capacity, policy, lirs_hir_fraction: default_hir_fraction() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(Error::Config("cache capacity must be at least 1".into()));
        }
        if !(self.lirs_hir_fraction > 0.0 && self.lirs_hir_fraction < 1.0) {
            return Err(Error::Config(format!("LIRS HIR fraction must be in (0, 1), got {}", self.lirs_hir_fraction)));
        }
        Ok(())
    }

    /// Resident HIR slots for LIRS: `max(1, round(fraction * capacity))`.
    pub fn lirs_hir_size(&self) -> usize {
        ((self.lirs_hir_fraction * self.capacity as f64).round() as usize).clamp(1, self.capacity)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub requests: u64,
    pub hits: u64,
    pub misses: u64,
    pub cold_misses: u64,
}

impl CacheStats {
    pub fn miss_ratio(&self) -> f64 {
        if self.requests == 0 {
            0.0
        } else {
            self.misses as f64 / self.requests as f64
        }
    }

    pub fn merge(&mut self, other: &CacheStats) {
        self.requests += other.requests;
        self.hits += other.hits;
        self.misses += other.misses;
        self.cold_misses += other.cold_misses;
    }
}

/// Result of one [`Cache::access`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Access<K> {
    pub hit: bool,
    pub evicted: Option<K>,
}

/// Online cache.
#[derive(Clone, Debug)]
pub struct Cache<K> {
    capacity: usize,
    state: State<K>,
    seen: HashSet<K>,
    stats: CacheStats,
    clock: u64,
}

#[derive(Clone, Debug)]
enum State<K> {
    Lru(Lru<K>),
    Lru2(Lru2<K>),
    Lfu(Lfu<K>),
    Lirs(Lirs<K>),
}

impl<K: Clone + Eq + Hash + Ord> Cache<K> {
    /// Fails for [`Policy::Belady`], which has no online form.
    pub fn new(config: &CacheConfig) -> Result<Self> {
        config.validate()?;
        let state = match config.policy {
            Policy::Lru => State::Lru(Lru::default()),
            Policy::Lru2 => State::Lru2(Lru2::default()),
            Policy::Lfu => State::Lfu(Lfu::default()),
            Policy::Lirs => State::Lirs(Lirs::new(config.capacity - config.lirs_hir_size())),
            Policy::Belady => return Err(Error::Config("BELADY is offline; use belady() or replay()".into())),
        };
        Ok(Cache { capacity: config.capacity, state, seen: HashSet::new(), stats: CacheStats::default(), clock: 0 })
    }

    pub fn access(&mut self, item: K) -> Access<K> {
        self.clock += 1;
        let now = self.clock;
        let cap = self.capacity;
        let access = match &mut self.state {
            State::Lru(s) => s.access(item.clone(), now, cap),
            State::Lru2(s) => s.access(item.clone(), now, cap),
            State::Lfu(s) => s.access(item.clone(), now, cap),
            State::Lirs(s) => s.access(item.clone(), now, cap),
        };
        self.stats.requests += 1;
        if access.hit {
            self.stats.hits += 1;
        } else {
            self.stats.misses += 1;
            if self.seen.insert(item) {
                self.stats.cold_misses += 1;
            }
        }
        debug_assert!(self.len() <= cap);
        access
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        match &self.state {
            State::Lru(s) => s.stamp.len(),
            State::Lru2(s) => s.resident.len(),
            State::Lfu(s) => s.resident.len(),
            State::Lirs(s) => s.lir_count + s.queue.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, item: &K) -> bool {
        match &self.state {
            State::Lru(s) => s.stamp.contains_key(item),
            State::Lru2(s) => s.key.contains_key(item),
            State::Lfu(s) => s.key.contains_key(item),
            State::Lirs(s) => matches!(s.status.get(item), Some(Status::Lir | Status::HirResident)),
        }
    }
}

#[derive(Clone, Debug)]
struct Lru<K> {
    order: BTreeMap<u64, K>,
    stamp: HashMap<K, u64>,
}

impl<K> Default for Lru<K> {
    fn default() -> Self {
        Lru { order: BTreeMap::new(), stamp: HashMap::new() }
    }
}

impl<K: Clone + Eq + Hash> Lru<K> {
    fn access(&mut self, item: K, now: u64, cap: usize) -> Access<K> {
        if let Some(old) = self.stamp.insert(item.clone(), now) {
            self.order.remove(&old);
            self.order.insert(now, item);
            return Access { hit: true, evicted: None };
        }
        let mut evicted = None;
        if self.stamp.len() > cap {
            let (_, victim) = self.order.pop_first().expect("non-empty");
            self.stamp.remove(&victim);
            evicted = Some(victim);
        }
        self.order.insert(now, item);
        Access { hit: false, evicted }
    }
}

/// LRU-2 with retained history: the victim is the resident whose second most
/// recent access is oldest; residents seen only once go first, oldest first.
#[derive(Clone, Debug)]
struct Lru2<K> {
    history: HashMap<K, (u64, Option<u64>)>,
    resident: BTreeSet<(bool, u64, K)>,
    key: HashMap<K, (bool, u64)>,
}

impl<K> Default for Lru2<K> {
    fn default() -> Self {
        Lru2 { history: HashMap::new(), resident: BTreeSet::new(), key: HashMap::new() }
    }
}

impl<K: Clone + Eq + Hash + Ord> Lru2<K> {
    fn access(&mut self, item: K, now: u64, cap: usize) -> Access<K> {
        let hist = self.history.entry(item.clone()).and_modify(|h| *h = (now, Some(h.0))).or_insert((now, None));
        let new_key = match hist.1 {
            Some(penultimate) => (true, penultimate),
            None => (false, hist.0),
        };
        if let Some(old) = self.key.insert(item.clone(), new_key) {
            self.resident.remove(&(old.0, old.1, item.clone()));
            self.resident.insert((new_key.0, new_key.1, item));
            return Access { hit: true, evicted: None };
        }
        let mut evicted = None;
        if self.resident.len() >= cap {
            let (_, _, victim) = self.resident.pop_first().expect("non-empty");
            self.key.remove(&victim);
            evicted = Some(victim);
        }
        self.resident.insert((new_key.0, new_key.1, item));
        Access { hit: false, evicted }
    }
}

/// Perfect LFU: counters survive eviction; ties go to the least recently
/// used resident.
#[derive(Clone, Debug)]
struct Lfu<K> {
    freq: HashMap<K, u64>,
    resident: BTreeSet<(u64, u64, K)>,
    key: HashMap<K, (u64, u64)>,
}

impl<K> Default for Lfu<K> {
    fn default() -> Self {
        Lfu { freq: HashMap::new(), resident: BTreeSet::new(), key: HashMap::new() }
    }
}

impl<K: Clone + Eq + Hash + Ord> Lfu<K> {
    fn access(&mut self, item: K, now: u64, cap: usize) -> Access<K> {
        let f = self.freq.entry(item.clone()).or_insert(0);
        *f += 1;
        let new_key = (*f, now);
        if let Some(old) = self.key.insert(item.clone(), new_key) {
            self.resident.remove(&(old.0, old.1, item.clone()));
            self.resident.insert((new_key.0, new_key.1, item));
            return Access { hit: true, evicted: None };
        }
        let mut evicted = None;
        if self.resident.len() >= cap {
            let (_, _, victim) = self.resident.pop_first().expect("non-empty");
            self.key.remove(&victim);
            evicted = Some(victim);
        }
        self.resident.insert((new_key.0, new_key.1, item));
        Access { hit: false, evicted }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Lir,
    HirResident,
    HirNonResident,
}

/// LIRS: LIR blocks plus a small queue of resident HIR blocks. The recency
/// stack holds LIR blocks and recently seen HIR blocks, resident or not, and
/// is pruned so its bottom is always a LIR block.
#[derive(Clone, Debug)]
struct Lirs<K> {
    lir_capacity: usize,
    lir_count: usize,
    status: HashMap<K, Status>,
    stack: BTreeMap<u64, K>,
    stack_pos: HashMap<K, u64>,
    queue: BTreeMap<u64, K>,
    queue_pos: HashMap<K, u64>,
}

impl<K: Clone + Eq + Hash> Lirs<K> {
    fn new(lir_capacity: usize) -> Self {
        Lirs {
            lir_capacity,
            lir_count: 0,
            status: HashMap::new(),
            stack: BTreeMap::new(),
            stack_pos: HashMap::new(),
            queue: BTreeMap::new(),
            queue_pos: HashMap::new(),
        }
    }

    fn stack_push(&mut self, item: K, now: u64) {
        if let Some(old) = self.stack_pos.insert(item.clone(), now) {
            self.stack.remove(&old);
        }
        self.stack.insert(now, item);
    }

    fn queue_push(&mut self, item: K, now: u64) {
        if let Some(old) = self.queue_pos.insert(item.clone(), now) {
            self.queue.remove(&old);
        }
        self.queue.insert(now, item);
    }

    fn queue_remove(&mut self, item: &K) {
        if let Some(old) = self.queue_pos.remove(item) {
            self.queue.remove(&old);
        }
    }

    fn is_stack_bottom(&self, item: &K) -> bool {
        self.stack.first_key_value().is_some_and(|(_, k)| k == item)
    }

    /// Pops HIR entries off the stack bottom until a LIR block is there.
    fn prune(&mut self) {
        while let Some((_, bottom)) = self.stack.first_key_value() {
            if self.status.get(bottom) == Some(&Status::Lir) {
                break;
            }
            let (_, item) = self.stack.pop_first().expect("non-empty");
            self.stack_pos.remove(&item);
            if self.status.get(&item) == Some(&Status::HirNonResident) {
                self.status.remove(&item);
            }
        }
    }

    /// Turns the bottom LIR block into a resident HIR block at the queue tail.
    fn demote_bottom(&mut self, now: u64) {
        if let Some((_, item)) = self.stack.pop_first() {
            self.stack_pos.remove(&item);
            self.status.insert(item.clone(), Status::HirResident);
            self.lir_count -= 1;
            self.queue_push(item, now);
        }
        self.prune();
    }

    fn promote(&mut self, item: K, now: u64) {
        self.queue_remove(&item);
        self.status.insert(item.clone(), Status::Lir);
        self.lir_count += 1;
        self.stack_push(item, now);
        self.demote_bottom(now);
    }

    fn access(&mut self, item: K, now: u64, cap: usize) -> Access<K> {
        match self.status.get(&item).copied() {
            Some(Status::Lir) => {
                let was_bottom = self.is_stack_bottom(&item);
                self.stack_push(item, now);
                if was_bottom {
                    self.prune();
                }
                Access { hit: true, evicted: None }
            }
            Some(Status::HirResident) => {
                if self.stack_pos.contains_key(&item) && self.lir_capacity > 0 {
                    self.promote(item, now);
                } else {
                    self.stack_push(item.clone(), now);
                    self.queue_push(item, now);
                }
                Access { hit: true, evicted: None }
            }
            state => {
                let mut evicted = None;
                if self.lir_count + self.queue.len() >= cap {
                    let (_, victim) = self.queue.pop_first().expect("resident HIR block to evict");
                    self.queue_pos.remove(&victim);
                    if self.stack_pos.contains_key(&victim) {
                        self.status.insert(victim.clone(), Status::HirNonResident);
                    } else {
                        self.status.remove(&victim);
                    }
                    evicted = Some(victim);
                }
                if self.lir_count < self.lir_capacity {
                    self.status.insert(item.clone(), Status::Lir);
                    self.lir_count += 1;
                    self.stack_push(item, now);
                } else if state == Some(Status::HirNonResident)
                    && self.stack_pos.contains_key(&item)
                    && self.lir_capacity > 0
                {
                    self.promote(item, now);
                } else {
                    self.status.insert(item.clone(), Status::HirResident);
                    self.stack_push(item.clone(), now);
                    self.queue_push(item, now);
                }
                Access { hit: false, evicted }
            }
        }
    }
}

/// Offline optimum: on a miss with a full cache, evict the resident whose
/// next use lies farthest ahead; among residents never used again the
/// smallest key goes first.
pub fn belady<K: Clone + Eq + Hash + Ord>(trace: &[K], capacity: usize) -> CacheStats {
    assert!(capacity > 0, "capacity must be positive");
    let never = usize::MAX;
    let mut next_use = vec![never; trace.len()];
    let mut last_seen: HashMap<&K, usize> = HashMap::new();
    for (i, item) in trace.iter().enumerate().rev() {
        if let Some(&j) = last_seen.get(item) {
            next_use[i] = j;
        }
        last_seen.insert(item, i);
    }

    // (next use, Reverse(item)): the last entry is the victim.
    let mut resident: BTreeSet<(usize, std::cmp::Reverse<&K>)> = BTreeSet::new();
    let mut current: HashMap<&K, usize> = HashMap::new();
    let mut seen: HashSet<&K> = HashSet::new();
    let mut stats = CacheStats::default();
    for (i, item) in trace.iter().enumerate() {
        stats.requests += 1;
        if let Some(old) = current.get(item).copied() {
            stats.hits += 1;
            resident.remove(&(old, std::cmp::Reverse(item)));
        } else {
            stats.misses += 1;
            if seen.insert(item) {
                stats.cold_misses += 1;
            }
            if current.len() >= capacity {
                let (_, std::cmp::Reverse(victim)) = resident.pop_last().expect("non-empty");
                current.remove(victim);
            }
        }
        resident.insert((next_use[i], std::cmp::Reverse(item)));
        current.insert(item, next_use[i]);
    }
    stats
}

/// Replays `trace` through a fresh cache.
pub fn replay<K: Clone + Eq + Hash + Ord>(trace: &[K], config: &CacheConfig) -> Result<CacheStats> {
    config.validate()?;
    if config.policy == Policy::Belady {
        return Ok(belady(trace, config.capacity));
    }
    let mut cache = Cache::new(config)?;
    for item in trace {
        cache.access(item.clone());
    }
    Ok(cache.stats())
}

/// One service id per non-blank line.
pub fn read_trace<R: BufRead>(reader: R) -> Result<Vec<ServiceId>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let id = line.trim();
        if !id.is_empty() {
            out.push(ServiceId::new(id));
        }
    }
    Ok(out)
}

pub const STATS_HEADER: [&str; 7] = ["policy", "capacity", "requests", "hits", "misses", "cold_misses", "miss_ratio"];

/// CSV `policy,capacity,requests,hits,misses,cold_misses,miss_ratio`.
pub fn write_stats_csv<W: Write>(rows: &[(CacheConfig, CacheStats)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STATS_HEADER)?;
    for (cfg, s) in rows {
        w.serialize((cfg.policy.name(), cfg.capacity, s.requests, s.hits, s.misses, s.cold_misses, s.miss_ratio()))?;
    }
    w.flush()?;
    Ok(())
}
