//! Memory-traffic proxy: element-access traces of smoother sweeps and a
//! fully associative LRU cache simulator.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::instrument::{AccessObserver, ArrayId};
use crate::mesh::Schedule;
use crate::smoothers::{
    sweep_sequential, validate_schedule, Direction, LevelContext, SmootherConfig, SmootherWorkspace,
};

/// Default limit on recorded accesses.
pub const DEFAULT_TRACE_CAP: usize = 10_000_000;

/// Default cache line: 64 bytes of 8-byte reals.
pub const DEFAULT_LINE_ELEMS: usize = 8;

const INDEX_BITS: u32 = 61;
const INDEX_MASK: u64 = (1 << INDEX_BITS) - 1;
const WRITE_BIT: u64 = 1 << INDEX_BITS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Access {
    pub array: ArrayId,
    pub index: usize,
    pub write: bool,
}

impl Access {
    fn pack(&self) -> u64 {
        ((self.array as u64) << (INDEX_BITS + 1)) | (u64::from(self.write) << INDEX_BITS) | self.index as u64
    }

    fn unpack(v: u64) -> Self {
        Access {
            array: ArrayId::from_u8((v >> (INDEX_BITS + 1)) as u8).expect("two-bit array id"),
            index: (v & INDEX_MASK) as usize,
            write: v & WRITE_BIT != 0,
        }
    }
}

/// Recorded element-access stream, packed one access per `u64`
/// (array id in the top two bits, then the write flag, then the index).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessTrace {
    packed: Vec<u64>,
}

impl AccessTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, access: Access) {
        debug_assert!((access.index as u64) <= INDEX_MASK);
        self.packed.push(access.pack());
    }

    pub fn len(&self) -> usize {
        self.packed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packed.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<Access> {
        self.packed.get(i).map(|&v| Access::unpack(v))
    }

    pub fn iter(&self) -> impl Iterator<Item = Access> + '_ {
        self.packed.iter().map(|&v| Access::unpack(v))
    }

    /// Binary export: per access one byte array id, eight bytes index
    /// (little-endian) and one byte flag (1 = write).
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(10 * 4096);
        for chunk in self.packed.chunks(4096) {
            buf.clear();
            for a in chunk.iter().map(|&v| Access::unpack(v)) {
                buf.push(a.array as u8);
                buf.extend_from_slice(&(a.index as u64).to_le_bytes());
                buf.push(u8::from(a.write));
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() % 10 != 0 {
            return Err(Error::Serialization(format!(
                "trace stream length {} is not a multiple of 10",
                bytes.len()
            )));
        }
        let mut trace = AccessTrace::new();
        for rec in bytes.chunks_exact(10) {
            let array = ArrayId::from_u8(rec[0])
                .ok_or_else(|| Error::Serialization(format!("unknown array id {}", rec[0])))?;
            let index = u64::from_le_bytes(rec[1..9].try_into().expect("8 bytes"));
            if index > INDEX_MASK {
                return Err(Error::Serialization(format!("index {index} out of range")));
            }
            let write = match rec[9] {
                0 => false,
                1 => true,
                f => return Err(Error::Serialization(format!("invalid access flag {f}"))),
            };
            trace.push(Access { array, index: index as usize, write });
        }
        Ok(trace)
    }
}

/// Observer storing accesses up to a cap.
#[derive(Debug, Clone)]
pub struct TraceRecorder {
    trace: AccessTrace,
    cap: usize,
    metadata: bool,
    overflowed: bool,
}

impl TraceRecorder {
    pub fn new(cap: usize, metadata: bool) -> Self {
        Self { trace: AccessTrace::new(), cap, metadata, overflowed: false }
    }

    pub fn finish(self) -> Result<AccessTrace> {
        if self.overflowed {
            return Err(Error::Resource(format!(
                "trace exceeds the cap of {} accesses",
                self.cap
            )));
        }
        Ok(self.trace)
    }

    fn record(&mut self, array: ArrayId, index: usize, write: bool) {
        if self.trace.len() < self.cap {
            self.trace.push(Access { array, index, write });
        } else {
            self.overflowed = true;
        }
    }
}

impl AccessObserver for TraceRecorder {
    const ENABLED: bool = true;
    fn metadata(&self) -> bool {
        self.metadata
    }
    fn read(&mut self, array: ArrayId, index: usize) {
        self.record(array, index, false);
    }
    fn write(&mut self, array: ArrayId, index: usize) {
        self.record(array, index, true);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceOptions {
    pub cap: usize,
    /// Include reads of the per-cell index tables.
    pub metadata: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { cap: DEFAULT_TRACE_CAP, metadata: false }
    }
}

/// Replays one forward sweep with instrumented vectors. Batched schedules
/// are recorded in their sequential-equivalent order. Vector values do not
/// influence the trace.
pub fn record_trace(
    ctx: &LevelContext,
    config: &SmootherConfig,
    schedule: &Schedule,
    options: &TraceOptions,
) -> Result<AccessTrace> {
    let mut rec = TraceRecorder::new(options.cap, options.metadata);
    replay(ctx, config, schedule, &mut rec)?;
    rec.finish()
}

fn replay<O: AccessObserver>(
    ctx: &LevelContext,
    config: &SmootherConfig,
    schedule: &Schedule,
    obs: &mut O,
) -> Result<()> {
    validate_schedule(ctx, config, schedule)?;
    let mut ws = SmootherWorkspace::new(ctx);
    let mut u = vec![0.0; ctx.n_dofs()];
    let b = vec![0.0; ctx.n_dofs()];
    sweep_sequential(ctx, config, schedule, &mut ws, &mut u, &b, Direction::Forward, obs);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub capacity_lines: usize,
    pub line_elems: usize,
}

impl CacheConfig {
    pub fn new(capacity_lines: usize, line_elems: usize) -> Result<Self> {
        if capacity_lines == 0 || line_elems == 0 {
            return invalid("cache capacity and line size must be at least 1");
        }
        Ok(Self { capacity_lines, line_elems })
    }

    pub fn unbounded(line_elems: usize) -> Result<Self> {
        Self::new(usize::MAX, line_elems)
    }
}

/// Line counts of a simulated run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficReport {
    pub loads: u64,
    pub writebacks: u64,
    pub doubles_per_dof: f64,
}

impl TrafficReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }
}

const NIL: u32 = u32::MAX;

/// Fully associative LRU cache with write-allocate and write-back.
#[derive(Debug, Clone)]
pub struct LruCache {
    config: CacheConfig,
    /// Per array, line number → slot.
    slot_of: [Vec<u32>; 4],
    key: Vec<(u8, u64)>,
    prev: Vec<u32>,
    next: Vec<u32>,
    dirty: Vec<bool>,
    /// Most recently used.
    head: u32,
    tail: u32,
    loads: u64,
    writebacks: u64,
    hits: u64,
}

impl LruCache {
    pub fn new(config: CacheConfig) -> Self {
        Self {
            config,
            slot_of: Default::default(),
            key: Vec::new(),
            prev: Vec::new(),
            next: Vec::new(),
            dirty: Vec::new(),
            head: NIL,
            tail: NIL,
            loads: 0,
            writebacks: 0,
            hits: 0,
        }
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn loads(&self) -> u64 {
        self.loads
    }

    fn unlink(&mut self, s: u32) {
        let (p, n) = (self.prev[s as usize], self.next[s as usize]);
        if p != NIL {
            self.next[p as usize] = n;
        } else {
            self.head = n;
        }
        if n != NIL {
            self.prev[n as usize] = p;
        } else {
            self.tail = p;
        }
    }

    fn push_front(&mut self, s: u32) {
        self.prev[s as usize] = NIL;
        self.next[s as usize] = self.head;
        if self.head != NIL {
            self.prev[self.head as usize] = s;
        }
        self.head = s;
        if self.tail == NIL {
            self.tail = s;
        }
    }

    pub fn access(&mut self, array: ArrayId, index: usize, write: bool) {
        let a = array as usize;
        let line = (index / self.config.line_elems) as u64;
        let table = &mut self.slot_of[a];
        if table.len() <= line as usize {
            table.resize(line as usize + 1, NIL);
        }
        let s = table[line as usize];
        if s != NIL {
            self.hits += 1;
            if self.head != s {
                self.unlink(s);
                self.push_front(s);
            }
            self.dirty[s as usize] |= write;
            return;
        }
        self.loads += 1;
        let slot = if self.key.len() < self.config.capacity_lines {
            self.key.push((a as u8, line));
            self.prev.push(NIL);
            self.next.push(NIL);
            self.dirty.push(false);
            (self.key.len() - 1) as u32
        } else {
            let victim = self.tail;
            self.unlink(victim);
            let (va, vl) = self.key[victim as usize];
            self.slot_of[va as usize][vl as usize] = NIL;
            if self.dirty[victim as usize] {
                self.writebacks += 1;
            }
            self.key[victim as usize] = (a as u8, line);
            victim
        };
        self.dirty[slot as usize] = write;
        self.slot_of[a][line as usize] = slot;
        self.push_front(slot);
    }

    /// Flushes dirty lines and reports traffic normalized by `n_dofs`.
    pub fn finish(mut self, n_dofs: usize) -> TrafficReport {
        self.writebacks += self.dirty.iter().filter(|&&d| d).count() as u64;
        let lines = (self.loads + self.writebacks) as f64;
        TrafficReport {
            loads: self.loads,
            writebacks: self.writebacks,
            doubles_per_dof: lines * self.config.line_elems as f64 / n_dofs as f64,
        }
    }
}

/// Runs `trace` through an LRU cache; `n_dofs` normalizes the report.
pub fn simulate_lru(trace: &AccessTrace, config: &CacheConfig, n_dofs: usize) -> TrafficReport {
    let mut cache = LruCache::new(*config);
    for a in trace.iter() {
        cache.access(a.array, a.index, a.write);
    }
    cache.finish(n_dofs)
}

struct CacheObserver {
    cache: LruCache,
    metadata: bool,
}

impl AccessObserver for CacheObserver {
    const ENABLED: bool = true;
    fn metadata(&self) -> bool {
        self.metadata
    }
    fn read(&mut self, array: ArrayId, index: usize) {
        self.cache.access(array, index, false);
    }
    fn write(&mut self, array: ArrayId, index: usize) {
        self.cache.access(array, index, true);
    }
}

/// Streams one sweep straight into the cache simulator, without storing the
/// trace; identical to [`record_trace`] followed by [`simulate_lru`].
pub fn simulate_sweep(
    ctx: &LevelContext,
    config: &SmootherConfig,
    schedule: &Schedule,
    cache: &CacheConfig,
    metadata: bool,
) -> Result<TrafficReport> {
    let mut obs = CacheObserver { cache: LruCache::new(*cache), metadata };
    replay(ctx, config, schedule, &mut obs)?;
    Ok(obs.cache.finish(ctx.n_dofs()))
}
