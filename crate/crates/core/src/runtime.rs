//! Row-partitioned SPMD runtime.
//!
//! A [`WorkerGroup`] spawns `P` peer workers over shared memory. Each worker
//! owns a contiguous block of global rows and interacts with the others only
//! through [`Worker::collective`], a full-group synchronization point.
//! Reductions always fold rank 0, 1, ..., P-1 in that order, so for a fixed
//! worker count repeated runs are bit-identical regardless of scheduling.
//!
//! Every operation that can fail on a single rank must turn the failure into
//! a collective (e.g. allreduce of a flag) so all ranks leave the SPMD
//! section together; returning early from inside a worker closure while the
//! peers still wait on a barrier would deadlock the group.

use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Barrier, Mutex};

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Communication volume in bytes, split by collective kind.
///
/// The counter models a linear topology: a broadcast or gather moves
/// `(P-1) * len` values, an allreduce moves `2 * (P-1) * len` (reduce leg
/// plus broadcast leg). With one worker nothing moves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CommStats {
    pub allreduce_bytes: u64,
    pub broadcast_bytes: u64,
    pub gather_bytes: u64,
}

impl CommStats {
    pub fn total_bytes(&self) -> u64 {
        self.allreduce_bytes + self.broadcast_bytes + self.gather_bytes
    }
}

impl std::ops::Sub for CommStats {
    type Output = CommStats;
    fn sub(self, rhs: CommStats) -> CommStats {
        CommStats {
            allreduce_bytes: self.allreduce_bytes - rhs.allreduce_bytes,
            broadcast_bytes: self.broadcast_bytes - rhs.broadcast_bytes,
            gather_bytes: self.gather_bytes - rhs.gather_bytes,
        }
    }
}

/// The collective operations understood by the runtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollectiveKind {
    AllreduceSum,
    AllreduceMin,
    AllreduceMax,
    Broadcast { root: usize },
    Gather { root: usize },
}

/// A group of `P` virtual workers with balanced contiguous row ownership.
pub struct WorkerGroup {
    workers: usize,
    allreduce_bytes: AtomicU64,
    broadcast_bytes: AtomicU64,
    gather_bytes: AtomicU64,
}

impl WorkerGroup {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::EmptyWorkerGroup);
        }
        Ok(WorkerGroup {
            workers,
            allreduce_bytes: AtomicU64::new(0),
            broadcast_bytes: AtomicU64::new(0),
            gather_bytes: AtomicU64::new(0),
        })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Snapshot of the bytes moved by collectives so far. Subtract two
    /// snapshots to attribute volume to a pipeline phase.
    pub fn comm_stats(&self) -> CommStats {
        CommStats {
            allreduce_bytes: self.allreduce_bytes.load(Ordering::Relaxed),
            broadcast_bytes: self.broadcast_bytes.load(Ordering::Relaxed),
            gather_bytes: self.gather_bytes.load(Ordering::Relaxed),
        }
    }

    /// Balanced block distribution of `rows` over the group: ranges are
    /// disjoint, ordered by rank, cover `[0, rows)` and differ in size by
    /// at most one row.
    pub fn partition(&self, rows: usize) -> Result<Vec<Range<usize>>> {
        partition_rows(rows, self.workers)
    }

    /// Runs `body` once per rank on `P` concurrent threads and returns the
    /// per-rank results in rank order.
    pub fn run<T, F>(&self, body: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&Worker<'_>) -> T + Sync,
    {
        let p = self.workers;
        let shared = SharedState::new(p);
        if p == 1 {
            let worker = Worker {
                rank: 0,
                group: self,
                shared: &shared,
            };
            return vec![body(&worker)];
        }
        std::thread::scope(|scope| {
            let mut handles = Vec::with_capacity(p);
            for rank in 0..p {
                let shared = &shared;
                let body = &body;
                handles.push(scope.spawn(move || {
                    let worker = Worker {
                        rank,
                        group: self,
                        shared,
                    };
                    body(&worker)
                }));
            }
            handles
                .into_iter()
                .map(|h| h.join().expect("worker thread panicked"))
                .collect()
        })
    }

    fn count(&self, kind: CollectiveKind, values: usize) {
        let hops = (self.workers - 1) as u64;
        let bytes = 8 * values as u64;
        match kind {
            CollectiveKind::AllreduceSum
            | CollectiveKind::AllreduceMin
            | CollectiveKind::AllreduceMax => {
                self.allreduce_bytes
                    .fetch_add(2 * hops * bytes, Ordering::Relaxed);
            }
            CollectiveKind::Broadcast { .. } => {
                self.broadcast_bytes.fetch_add(hops * bytes, Ordering::Relaxed);
            }
            CollectiveKind::Gather { .. } => {
                self.gather_bytes.fetch_add(hops * bytes, Ordering::Relaxed);
            }
        }
    }
}

struct SharedState {
    slots: Vec<Mutex<Vec<f64>>>,
    barrier: Barrier,
}

impl SharedState {
    fn new(p: usize) -> Self {
        SharedState {
            slots: (0..p).map(|_| Mutex::new(Vec::new())).collect(),
            barrier: Barrier::new(p),
        }
    }
}

/// One rank's handle inside an SPMD section.
pub struct Worker<'a> {
    rank: usize,
    group: &'a WorkerGroup,
    shared: &'a SharedState,
}

impl<'a> Worker<'a> {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn workers(&self) -> usize {
        self.group.workers
    }

    pub fn is_root(&self) -> bool {
        self.rank == 0
    }

    pub fn barrier(&self) {
        self.shared.barrier.wait();
    }

    /// Performs one collective operation. All ranks must call with the same
    /// `kind`; buffer lengths must agree across ranks.
    ///
    /// - allreduce: every rank receives the element-wise reduction folded in
    ///   rank order 0..P.
    /// - broadcast: every rank receives the root's buffer.
    /// - gather: the root receives the rank-ordered concatenation, the
    ///   other ranks receive an empty vector.
    pub fn collective(&self, kind: CollectiveKind, buffer: &[f64]) -> Result<Vec<f64>> {
        let p = self.group.workers;
        if let CollectiveKind::Broadcast { root } | CollectiveKind::Gather { root } = kind {
            // Same check on every rank, so everyone returns before the
            // first barrier and nobody is left waiting.
            if root >= p {
                return Err(Error::RootOutOfRange { root, workers: p });
            }
        }
        *self.shared.slots[self.rank].lock().unwrap() = buffer.to_vec();
        self.shared.barrier.wait();

        let result = self.combine(kind);
        if self.rank == 0 {
            if let Ok(ref values) = result {
                let counted = match kind {
                    CollectiveKind::Gather { .. } => buffer.len(),
                    _ => values.len(),
                };
                self.group.count(kind, counted);
            }
        }
        // Second barrier: nobody may overwrite a slot for the next
        // collective while a peer is still reading this one.
        self.shared.barrier.wait();
        result
    }

    fn combine(&self, kind: CollectiveKind) -> Result<Vec<f64>> {
        let p = self.group.workers;
        let slots: Vec<std::sync::MutexGuard<'_, Vec<f64>>> = (0..p)
            .map(|r| self.shared.slots[r].lock().unwrap())
            .collect();
        let len0 = slots[0].len();
        if slots.iter().any(|s| s.len() != len0) {
            return Err(Error::CollectiveLengthMismatch);
        }
        match kind {
            CollectiveKind::AllreduceSum => Ok(fold_slots(&slots, len0, |a, b| a + b)),
            CollectiveKind::AllreduceMin => Ok(fold_slots(&slots, len0, f64::min)),
            CollectiveKind::AllreduceMax => Ok(fold_slots(&slots, len0, f64::max)),
            CollectiveKind::Broadcast { root } => Ok(slots[root].clone()),
            CollectiveKind::Gather { root } => {
                if self.rank == root {
                    let mut out = Vec::with_capacity(p * len0);
                    for s in &slots {
                        out.extend_from_slice(s);
                    }
                    Ok(out)
                } else {
                    Ok(Vec::new())
                }
            }
        }
    }

    pub fn allreduce_sum(&self, buffer: &[f64]) -> Result<Vec<f64>> {
        self.collective(CollectiveKind::AllreduceSum, buffer)
    }

    pub fn allreduce_min(&self, buffer: &[f64]) -> Result<Vec<f64>> {
        self.collective(CollectiveKind::AllreduceMin, buffer)
    }

    pub fn allreduce_max(&self, buffer: &[f64]) -> Result<Vec<f64>> {
        self.collective(CollectiveKind::AllreduceMax, buffer)
    }

    pub fn allreduce_scalar_max(&self, value: f64) -> Result<f64> {
        Ok(self.allreduce_max(&[value])?[0])
    }

    pub fn broadcast(&self, root: usize, buffer: &[f64]) -> Result<Vec<f64>> {
        self.collective(CollectiveKind::Broadcast { root }, buffer)
    }

    pub fn gather(&self, root: usize, buffer: &[f64]) -> Result<Vec<f64>> {
        self.collective(CollectiveKind::Gather { root }, buffer)
    }
}

fn fold_slots(
    slots: &[std::sync::MutexGuard<'_, Vec<f64>>],
    len: usize,
    op: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let mut acc = slots[0].clone();
    for slot in &slots[1..] {
        for i in 0..len {
            acc[i] = op(acc[i], slot[i]);
        }
    }
    acc
}

fn partition_rows(rows: usize, workers: usize) -> Result<Vec<Range<usize>>> {
    if workers == 0 {
        return Err(Error::EmptyWorkerGroup);
    }
    if workers > rows {
        return Err(Error::MoreWorkersThanRows { workers, rows });
    }
    let base = rows / workers;
    let extra = rows % workers;
    let mut ranges = Vec::with_capacity(workers);
    let mut start = 0;
    for rank in 0..workers {
        let size = base + usize::from(rank < extra);
        ranges.push(start..start + size);
        start += size;
    }
    Ok(ranges)
}

/// A dense n-by-d matrix split into contiguous row chunks, one per rank.
///
/// Concatenating the chunks in rank order reproduces the logical global
/// matrix; every rank agrees on the global shape.
#[derive(Debug, Clone)]
pub struct RowPartitionedMatrix {
    rows: usize,
    cols: usize,
    ranges: Vec<Range<usize>>,
    chunks: Vec<Array2<f64>>,
}

impl RowPartitionedMatrix {
    /// Splits a dense matrix into balanced contiguous row chunks for the
    /// group. Fails with "more workers than rows" when the group is larger
    /// than the row count.
    pub fn partition(group: &WorkerGroup, global: ArrayView2<'_, f64>) -> Result<Self> {
        let rows = global.nrows();
        if rows == 0 {
            return Err(Error::InvalidParameter("cannot partition an empty matrix".into()));
        }
        let ranges = group.partition(rows)?;
        let chunks = ranges
            .iter()
            .map(|r| global.slice(ndarray::s![r.start..r.end, ..]).to_owned())
            .collect();
        Ok(RowPartitionedMatrix {
            rows,
            cols: global.ncols(),
            ranges,
            chunks,
        })
    }

    /// Reassembles a partitioned matrix from per-rank chunks (the result
    /// shape of an SPMD map over an existing partition).
    pub fn from_chunks(ranges: Vec<Range<usize>>, chunks: Vec<Array2<f64>>) -> Self {
        assert_eq!(ranges.len(), chunks.len());
        let rows = ranges.last().map_or(0, |r| r.end);
        let cols = chunks.first().map_or(0, |c| c.ncols());
        for (range, chunk) in ranges.iter().zip(&chunks) {
            assert_eq!(range.len(), chunk.nrows(), "chunk rows must match range");
            assert_eq!(cols, chunk.ncols(), "chunks must agree on column count");
        }
        RowPartitionedMatrix {
            rows,
            cols,
            ranges,
            chunks,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn num_chunks(&self) -> usize {
        self.chunks.len()
    }

    pub fn range(&self, rank: usize) -> Range<usize> {
        self.ranges[rank].clone()
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn chunk(&self, rank: usize) -> ArrayView2<'_, f64> {
        self.chunks[rank].view()
    }

    /// Concatenates the chunks back into one dense matrix.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((self.rows, self.cols));
        for (range, chunk) in self.ranges.iter().zip(&self.chunks) {
            out.slice_mut(ndarray::s![range.start..range.end, ..])
                .assign(chunk);
        }
        out
    }

    /// Checks that the partition matches a group's worker count.
    pub fn check_group(&self, group: &WorkerGroup) -> Result<()> {
        if self.chunks.len() != group.workers() {
            return Err(Error::PartitionMismatch {
                expected: self.chunks.len(),
                actual: group.workers(),
            });
        }
        Ok(())
    }
}

/// Splits a global vector by the same ranges as a row partition.
pub fn partition_vector(ranges: &[Range<usize>], global: &[f64]) -> Vec<Vec<f64>> {
    ranges.iter().map(|r| global[r.start..r.end].to_vec()).collect()
}

/// Concatenates per-rank vector chunks back into a global vector.
pub fn concat_chunks(chunks: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(chunks.iter().map(Vec::len).sum());
    for c in chunks {
        out.extend_from_slice(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn partition_single_worker_is_identity() {
        let group = WorkerGroup::new(1).unwrap();
        let m = Array2::from_shape_fn((10, 3), |(i, j)| (i * 3 + j) as f64);
        let part = RowPartitionedMatrix::partition(&group, m.view()).unwrap();
        assert_eq!(part.num_chunks(), 1);
        assert_eq!(part.chunk(0), m.view());
        assert_eq!(part.to_dense(), m);
    }

    #[test]
    fn partition_even_split() {
        let group = WorkerGroup::new(2).unwrap();
        let m = Array2::from_shape_fn((10, 3), |(i, j)| (i * 3 + j) as f64);
        let part = RowPartitionedMatrix::partition(&group, m.view()).unwrap();
        assert_eq!(part.range(0), 0..5);
        assert_eq!(part.range(1), 5..10);
        assert_eq!(part.to_dense(), m);
    }

    #[test]
    fn partition_balanced_odd_split() {
        let group = WorkerGroup::new(3).unwrap();
        let m = Array2::from_shape_fn((7, 2), |(i, j)| (i * 2 + j) as f64);
        let part = RowPartitionedMatrix::partition(&group, m.view()).unwrap();
        let mut sizes: Vec<usize> = (0..3).map(|r| part.range(r).len()).collect();
        // Contiguous coverage.
        assert_eq!(part.range(0).start, 0);
        assert_eq!(part.range(2).end, 7);
        assert_eq!(part.range(0).end, part.range(1).start);
        assert_eq!(part.range(1).end, part.range(2).start);
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 3]);
        assert_eq!(part.to_dense(), m);
    }

    #[test]
    fn partition_rejects_more_workers_than_rows() {
        let group = WorkerGroup::new(5).unwrap();
        let m = Array2::<f64>::zeros((3, 2));
        let err = RowPartitionedMatrix::partition(&group, m.view()).unwrap_err();
        assert!(err.to_string().contains("more workers than rows"));
    }

    #[test]
    fn allreduce_sum_scalar() {
        let group = WorkerGroup::new(3).unwrap();
        let results = group.run(|w| w.allreduce_sum(&[(w.rank() + 1) as f64]).unwrap());
        for r in results {
            assert_eq!(r, vec![6.0]);
        }
    }

    #[test]
    fn allreduce_min_elementwise() {
        let group = WorkerGroup::new(2).unwrap();
        let results = group.run(|w| {
            let buf = if w.rank() == 0 {
                vec![4.0, -1.0]
            } else {
                vec![0.0, 5.0]
            };
            w.allreduce_min(&buf).unwrap()
        });
        for r in results {
            assert_eq!(r, vec![0.0, -1.0]);
        }
    }

    #[test]
    fn broadcast_copies_root_buffer() {
        let group = WorkerGroup::new(4).unwrap();
        let results = group.run(|w| {
            let buf = if w.rank() == 0 {
                vec![7.0, 8.0]
            } else {
                vec![0.0, 0.0]
            };
            w.broadcast(0, &buf).unwrap()
        });
        for r in results {
            assert_eq!(r, vec![7.0, 8.0]);
        }
    }

    #[test]
    fn gather_concatenates_in_rank_order() {
        let group = WorkerGroup::new(3).unwrap();
        let results = group.run(|w| w.gather(0, &[w.rank() as f64 * 10.0]).unwrap());
        assert_eq!(results[0], vec![0.0, 10.0, 20.0]);
        assert!(results[1].is_empty());
        assert!(results[2].is_empty());
    }

    #[test]
    fn collective_rejects_mismatched_lengths() {
        let group = WorkerGroup::new(2).unwrap();
        let results = group.run(|w| {
            let buf = vec![1.0; 1 + w.rank()];
            w.allreduce_sum(&buf)
        });
        for r in results {
            assert!(matches!(r, Err(Error::CollectiveLengthMismatch)));
        }
    }

    #[test]
    fn collective_rejects_bad_root() {
        let group = WorkerGroup::new(2).unwrap();
        let results = group.run(|w| w.broadcast(9, &[1.0]));
        for r in results {
            assert!(matches!(r, Err(Error::RootOutOfRange { .. })));
        }
    }

    #[test]
    fn allreduce_sum_matches_serial_reduction() {
        // The fold must equal summing the rank-ordered contributions serially.
        let p = 4;
        let group = WorkerGroup::new(p).unwrap();
        let contributions: Vec<Vec<f64>> = (0..p)
            .map(|r| vec![0.1 * (r as f64 + 1.0), -1.5 * r as f64, 3.25])
            .collect();
        let expected: Vec<f64> = (0..3)
            .map(|i| {
                let mut acc = contributions[0][i];
                for r in 1..p {
                    acc += contributions[r][i];
                }
                acc
            })
            .collect();
        let contributions_ref = &contributions;
        let results = group.run(|w| w.allreduce_sum(&contributions_ref[w.rank()]).unwrap());
        for r in results {
            assert_eq!(r, expected, "fold must be the rank-ordered serial sum");
        }
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let group = WorkerGroup::new(4).unwrap();
        let run = || {
            group.run(|w| {
                let buf: Vec<f64> = (0..16)
                    .map(|i| ((w.rank() * 31 + i * 7) as f64).sin())
                    .collect();
                w.allreduce_sum(&buf).unwrap()
            })
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }

    #[test]
    fn comm_stats_count_linear_topology_bytes() {
        let group = WorkerGroup::new(3).unwrap();
        group.run(|w| {
            w.allreduce_sum(&[1.0, 2.0]).unwrap();
            w.broadcast(0, &[0.0; 4]).unwrap();
            w.gather(1, &[w.rank() as f64]).unwrap();
        });
        let stats = group.comm_stats();
        assert_eq!(stats.allreduce_bytes, 2 * 2 * 2 * 8); // 2 hops, 2 legs, 2 values
        assert_eq!(stats.broadcast_bytes, 2 * 4 * 8);
        assert_eq!(stats.gather_bytes, 2 * 8);
        assert_eq!(stats.total_bytes(), 64 + 64 + 16);
    }

    #[test]
    fn single_worker_moves_no_bytes() {
        let group = WorkerGroup::new(1).unwrap();
        group.run(|w| {
            w.allreduce_sum(&[1.0; 8]).unwrap();
            w.broadcast(0, &[2.0; 8]).unwrap();
        });
        assert_eq!(group.comm_stats().total_bytes(), 0);
    }

    #[test]
    fn partition_vector_roundtrip() {
        let group = WorkerGroup::new(3).unwrap();
        let ranges = group.partition(8).unwrap();
        let v: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let chunks = partition_vector(&ranges, &v);
        assert_eq!(chunks.len(), 3);
        assert_eq!(concat_chunks(&chunks), v);
    }
}
