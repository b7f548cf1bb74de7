use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::log::AllocationLog;

/// Contiguous token arena with a first-fit free list.
#[derive(Debug, Clone)]
pub struct Arena {
    total: usize,
    /// start → length, coalesced.
    free: BTreeMap<usize, usize>,
    used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Extent {
    pub start: usize,
    pub len: usize,
}

impl Arena {
    pub fn new(total: usize) -> Result<Self> {
        if total == 0 {
            return Err(Error::param("arena needs at least one slot"));
        }
        Ok(Self {
            total,
            free: BTreeMap::from([(0, total)]),
            used: 0,
        })
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn used(&self) -> usize {
        self.used
    }

    pub fn total_free(&self) -> usize {
        self.free.values().sum()
    }

    pub fn largest_free(&self) -> usize {
        self.free.values().copied().max().unwrap_or(0)
    }

    /// `1 − largest_free / total_free`, zero when nothing is free.
    pub fn external_fragmentation(&self) -> f64 {
        let total_free = self.total_free();
        if total_free == 0 {
            0.0
        } else {
            1.0 - self.largest_free() as f64 / total_free as f64
        }
    }

    pub fn free_extents(&self) -> impl Iterator<Item = Extent> + '_ {
        self.free.iter().map(|(&start, &len)| Extent { start, len })
    }

    /// Lowest-address free extent that fits, or `None`.
    pub fn allocate(&mut self, len: usize) -> Option<Extent> {
        if len == 0 {
            return None;
        }
        let (&start, &avail) = self.free.iter().find(|(_, &l)| l >= len)?;
        self.free.remove(&start);
        if avail > len {
            self.free.insert(start + len, avail - len);
        }
        self.used += len;
        Some(Extent { start, len })
    }

    pub fn release(&mut self, ext: Extent) -> Result<()> {
        let end = ext.start + ext.len;
        if ext.len == 0 || end > self.total {
            return Err(Error::State("released extent outside the arena"));
        }
        let prev = self.free.range(..=ext.start).next_back().map(|(&s, &l)| (s, l));
        let next = self.free.range(ext.start..).next().map(|(&s, &l)| (s, l));
        if prev.is_some_and(|(s, l)| s + l > ext.start) || next.is_some_and(|(s, _)| s < end) {
            return Err(Error::State("released extent overlaps free space"));
        }
        let mut start = ext.start;
        let mut len = ext.len;
        if let Some((s, l)) = prev.filter(|(s, l)| s + l == ext.start) {
            self.free.remove(&s);
            start = s;
            len += l;
        }
        if let Some((s, l)) = next.filter(|(s, _)| *s == end) {
            self.free.remove(&s);
            len += l;
        }
        self.free.insert(start, len);
        self.used -= ext.len;
        Ok(())
    }
}

/// One request of a multi-request workload.
#[derive(Debug, Clone)]
pub struct Request {
    pub id: u64,
    pub arrival: usize,
    pub log: AllocationLog,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArenaSample {
    pub time: usize,
    pub largest_free: usize,
    pub total_free: usize,
}

impl ArenaSample {
    pub fn external_fragmentation(&self) -> f64 {
        if self.total_free == 0 {
            0.0
        } else {
            1.0 - self.largest_free as f64 / self.total_free as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArenaStats {
    /// Failed allocations of any kind.
    pub failures: usize,
    /// Failures although the total free space would have sufficed.
    pub contiguous_failures: usize,
    /// Failures per request id (requests abort on their first failure).
    pub request_failures: BTreeMap<u64, usize>,
    /// Arena state after each processed event.
    pub samples: Vec<ArenaSample>,
}

impl ArenaStats {
    pub fn max_external_fragmentation(&self) -> f64 {
        self.samples
            .iter()
            .map(ArenaSample::external_fragmentation)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Phase {
    Release,
    Allocate,
}

/// Replays all requests in one arena. Events are ordered by time, then
/// releases before allocations, then request id. A reallocation needs a
/// fresh extent of the full new size before the old one is released; a
/// failing request is aborted and its memory returned.
pub fn simulate_arena(requests: &[Request], total_slots: usize) -> Result<ArenaStats> {
    let mut arena = Arena::new(total_slots)?;
    if let Some(r) = requests.iter().find(|r| r.log.final_capacity() > total_slots) {
        return Err(Error::param(format!(
            "request {} needs {} slots, arena has {total_slots}",
            r.id,
            r.log.final_capacity()
        )));
    }
    let mut ids: Vec<u64> = requests.iter().map(|r| r.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::param("duplicate request id in workload"));
    }

    // (time, phase, request id, request index, event index)
    let mut events: Vec<(usize, Phase, u64, usize, usize)> = Vec::new();
    for (ri, r) in requests.iter().enumerate() {
        for (ei, e) in r.log.events.iter().enumerate() {
            events.push((r.arrival + e.step, Phase::Allocate, r.id, ri, ei));
        }
        events.push((r.arrival + r.log.len, Phase::Release, r.id, ri, usize::MAX));
    }
    events.sort_unstable();

    let mut held: Vec<Option<Extent>> = vec![None; requests.len()];
    let mut aborted = vec![false; requests.len()];
    let mut stats = ArenaStats::default();
    for &(time, phase, id, ri, ei) in &events {
        if aborted[ri] {
            continue;
        }
        match phase {
            Phase::Release => {
                if let Some(ext) = held[ri].take() {
                    arena.release(ext)?;
                }
            }
            Phase::Allocate => {
                let want = requests[ri].log.events[ei].granted;
                match arena.allocate(want) {
                    Some(ext) => {
                        if let Some(old) = held[ri].replace(ext) {
                            arena.release(old)?;
                        }
                    }
                    None => {
                        stats.failures += 1;
                        if arena.total_free() >= want {
                            stats.contiguous_failures += 1;
                        }
                        *stats.request_failures.entry(id).or_default() += 1;
                        aborted[ri] = true;
                        if let Some(old) = held[ri].take() {
                            arena.release(old)?;
                        }
                    }
                }
            }
        }
        debug_assert_eq!(arena.used() + arena.total_free(), arena.total());
        stats.samples.push(ArenaSample {
            time,
            largest_free: arena.largest_free(),
            total_free: arena.total_free(),
        });
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadEntry {
    pub request_id: u64,
    pub arrival: usize,
    pub trace_path: PathBuf,
}

/// Parses `request_id arrival_step trace_path` lines (whitespace or comma
/// separated; `#` starts a comment line). Relative paths resolve against
/// `base_dir`.
pub fn parse_workload(text: &str, base_dir: &Path) -> Result<Vec<WorkloadEntry>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let bad = || Error::param(format!("workload line {}: expected `request_id arrival_step trace_path`", lineno + 1));
        let [id, arrival, path] = fields[..] else {
            return Err(bad());
        };
        out.push(WorkloadEntry {
            request_id: id.parse().map_err(|_| bad())?,
            arrival: arrival.parse().map_err(|_| bad())?,
            trace_path: base_dir.join(path),
        });
    }
    Ok(out)
}
