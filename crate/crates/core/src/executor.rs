//! Tree-parallel scheduling of the upward and downward sweeps.
//!
//! Each region is a node that works only on its own `r × r` blocks and
//! exchanges messages with its parent and children. Tasks run on a pool of
//! in-process workers pulling from a shared ready queue; a merge task becomes
//! ready only once every child message has arrived. Child messages are
//! reduced in ascending child order, so results do not depend on the number
//! of workers or on scheduling.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Instant;

use crate::error::{MraError, Result};
use crate::geometry::{PartitionTree, RegionPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    PriorDown,
    LeafSummarize,
    MergeUpdate,
    BasisSweep,
    LeafPredict,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::PriorDown => "prior-down",
            Stage::LeafSummarize => "leaf-summarize",
            Stage::MergeUpdate => "merge-update",
            Stage::BasisSweep => "basis-sweep",
            Stage::LeafPredict => "leaf-predict",
        })
    }
}

/// Size of a message passed between nodes.
pub trait Payload {
    /// Number of `r × r` matrix blocks carried.
    fn block_count(&self) -> usize;
    /// Total number of floating-point values carried.
    fn float_count(&self) -> usize;
}

/// One executed task in the schedule log.
#[derive(Debug, Clone)]
pub struct TaskRecord {
    pub region: RegionPath,
    pub region_id: usize,
    pub stage: Stage,
    pub worker: usize,
    /// Seconds since the executor was created.
    pub start: f64,
    pub end: f64,
    /// Global event counters; `seq_end` of a task is smaller than `seq_start`
    /// of every task that consumed its output.
    pub seq_start: u64,
    pub seq_end: u64,
    pub inbound_blocks: usize,
    pub inbound_floats: usize,
}

pub struct Executor {
    workers: usize,
    tracing: bool,
    trace: Mutex<Vec<TaskRecord>>,
    epoch: Instant,
    seq: AtomicU64,
}

impl fmt::Debug for Executor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Executor").field("workers", &self.workers).field("tracing", &self.tracing).finish()
    }
}

impl Default for Executor {
    fn default() -> Self {
        Self::serial()
    }
}

struct Queue {
    ready: VecDeque<usize>,
    remaining: usize,
    failed: Option<MraError>,
}

impl Executor {
    pub fn new(workers: usize) -> Self {
        Self {
            workers: workers.max(1),
            tracing: false,
            trace: Mutex::new(Vec::new()),
            epoch: Instant::now(),
            seq: AtomicU64::new(0),
        }
    }

    pub fn serial() -> Self {
        Self::new(1)
    }

    /// Enables the schedule log.
    pub fn with_trace(mut self) -> Self {
        self.tracing = true;
        self
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn trace(&self) -> Vec<TaskRecord> {
        self.trace.lock().unwrap().clone()
    }

    pub fn clear_trace(&self) {
        self.trace.lock().unwrap().clear();
    }

    /// Writes the schedule log as CSV: region, stage, start, end, worker.
    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "region,stage,start,end,worker,inbound_blocks")?;
        for t in self.trace.lock().unwrap().iter() {
            writeln!(
                f,
                "\"{}\",{},{:.9},{:.9},{},{}",
                t.region, t.stage, t.start, t.end, t.worker, t.inbound_blocks
            )?;
        }
        Ok(())
    }

    /// Upward tree reduction. Leaves run `leaf`; every other region runs
    /// `merge` on its children's messages in ascending child order. Returns
    /// the root message and the per-region retained values.
    pub fn reduce_up<M, K, L, G>(&self, tree: &PartitionTree, leaf: L, merge: G) -> Result<(M, Vec<Option<K>>)>
    where
        M: Send + Payload,
        K: Send,
        L: Fn(usize) -> Result<(M, K)> + Sync,
        G: Fn(usize, Vec<M>) -> Result<(M, K)> + Sync,
    {
        let n = tree.n_regions();
        let inbox: Vec<Mutex<Vec<Option<M>>>> = tree
            .regions()
            .iter()
            .map(|r| Mutex::new((0..r.children.len()).map(|_| None).collect()))
            .collect();
        let pending: Vec<AtomicUsize> = tree.regions().iter().map(|r| AtomicUsize::new(r.children.len())).collect();
        let keep: Vec<Mutex<Option<K>>> = (0..n).map(|_| Mutex::new(None)).collect();
        let root_msg: Mutex<Option<M>> = Mutex::new(None);

        let task = |id: usize| -> Result<((M, K), usize, usize)> {
            if tree.is_leaf(id) {
                leaf(id).map(|out| (out, 0, 0))
            } else {
                let msgs: Vec<M> = std::mem::take(&mut *inbox[id].lock().unwrap())
                    .into_iter()
                    .map(|m| m.ok_or_else(|| MraError::Internal(format!("missing child message at {}", tree.region(id).path))))
                    .collect::<Result<_>>()?;
                let blocks = msgs.iter().map(Payload::block_count).sum();
                let floats = msgs.iter().map(Payload::float_count).sum();
                merge(id, msgs).map(|out| (out, blocks, floats))
            }
        };
        let complete = |id: usize, (msg, k): (M, K)| -> Vec<usize> {
            *keep[id].lock().unwrap() = Some(k);
            match tree.region(id).parent {
                None => {
                    *root_msg.lock().unwrap() = Some(msg);
                    Vec::new()
                }
                Some(p) => {
                    let slot = id - tree.region(p).children.start;
                    inbox[p].lock().unwrap()[slot] = Some(msg);
                    if pending[p].fetch_sub(1, Ordering::AcqRel) == 1 {
                        vec![p]
                    } else {
                        Vec::new()
                    }
                }
            }
        };
        let stage = |id: usize| if tree.is_leaf(id) { Stage::LeafSummarize } else { Stage::MergeUpdate };
        self.run(tree, tree.leaf_ids().collect(), n, stage, task, complete)?;
        let root = root_msg
            .into_inner()
            .unwrap()
            .ok_or_else(|| MraError::Internal("root produced no message".into()))?;
        Ok((root, keep.into_iter().map(|k| k.into_inner().unwrap()).collect()))
    }

    /// Top-down sweep over every region: a region's task runs after its
    /// parent's and may read the outputs of all its ancestors via `lookup`.
    pub fn sweep_down<T, F>(&self, tree: &PartitionTree, f: F) -> Result<Vec<T>>
    where
        T: Send + Sync,
        F: Fn(usize, &Outputs<'_, T>) -> Result<T> + Sync,
    {
        let n = tree.n_regions();
        let outputs: Vec<OnceLock<T>> = (0..n).map(|_| OnceLock::new()).collect();
        let lookup = Outputs { slots: &outputs };
        let task = |id: usize| -> Result<(T, usize, usize)> { f(id, &lookup).map(|t| (t, 0, 0)) };
        let complete = |id: usize, t: T| -> Vec<usize> {
            let _ = outputs[id].set(t);
            tree.region(id).children.clone().collect()
        };
        self.run(tree, vec![0], n, |_| Stage::PriorDown, task, complete)?;
        Ok(outputs.into_iter().map(|o| o.into_inner().expect("all regions computed")).collect())
    }

    /// Independent tasks over the given region ids; results in input order.
    pub fn map_regions<T, F>(&self, tree: &PartitionTree, ids: &[usize], stage: Stage, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync,
    {
        let slots: Vec<Mutex<Option<T>>> = (0..tree.n_regions()).map(|_| Mutex::new(None)).collect();
        let task = |id: usize| -> Result<(T, usize, usize)> { f(id).map(|t| (t, 0, 0)) };
        let complete = |id: usize, t: T| -> Vec<usize> {
            *slots[id].lock().unwrap() = Some(t);
            Vec::new()
        };
        self.run(tree, ids.to_vec(), ids.len(), |_| stage, task, complete)?;
        ids.iter()
            .map(|&id| {
                slots[id]
                    .lock()
                    .unwrap()
                    .take()
                    .ok_or_else(|| MraError::Internal(format!("duplicate task for region {id}")))
            })
            .collect()
    }

    fn run<T, S, F, D>(
        &self,
        tree: &PartitionTree,
        initial: Vec<usize>,
        total: usize,
        stage: S,
        task: F,
        complete: D,
    ) -> Result<()>
    where
        T: Send,
        S: Fn(usize) -> Stage + Sync,
        F: Fn(usize) -> Result<(T, usize, usize)> + Sync,
        D: Fn(usize, T) -> Vec<usize> + Sync,
    {
        if total == 0 {
            return Ok(());
        }
        let queue = Mutex::new(Queue { ready: initial.into(), remaining: total, failed: None });
        let wake = Condvar::new();

        let execute = |worker: usize, id: usize| -> Result<T> {
            let start = self.epoch.elapsed().as_secs_f64();
            let seq_start = self.seq.fetch_add(1, Ordering::SeqCst);
            let out = catch_unwind(AssertUnwindSafe(|| task(id))).unwrap_or_else(|payload| {
                let message = payload
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| payload.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "unknown panic".into());
                Err(MraError::WorkerPanic { path: tree.region(id).path.clone(), message })
            });
            let seq_end = self.seq.fetch_add(1, Ordering::SeqCst);
            let (value, inbound_blocks, inbound_floats) = out?;
            if self.tracing {
                self.trace.lock().unwrap().push(TaskRecord {
                    region: tree.region(id).path.clone(),
                    region_id: id,
                    stage: stage(id),
                    worker,
                    start,
                    end: self.epoch.elapsed().as_secs_f64(),
                    seq_start,
                    seq_end,
                    inbound_blocks,
                    inbound_floats,
                });
            }
            Ok(value)
        };

        if self.workers == 1 {
            let mut q = queue.into_inner().unwrap();
            while let Some(id) = q.ready.pop_front() {
                let value = execute(0, id)?;
                q.ready.extend(complete(id, value));
                q.remaining -= 1;
            }
            return if q.remaining == 0 {
                Ok(())
            } else {
                Err(MraError::Internal(format!("{} tasks never became ready", q.remaining)))
            };
        }

        let worker_loop = |worker: usize| loop {
            let id = {
                let mut q = queue.lock().unwrap();
                loop {
                    if q.failed.is_some() || q.remaining == 0 {
                        return;
                    }
                    if let Some(id) = q.ready.pop_front() {
                        break id;
                    }
                    q = wake.wait(q).unwrap();
                }
            };
            let result = execute(worker, id);
            let mut q = queue.lock().unwrap();
            match result {
                Ok(value) => {
                    let next = complete(id, value);
                    q.ready.extend(next);
                    q.remaining -= 1;
                }
                Err(e) => {
                    if q.failed.is_none() {
                        q.failed = Some(e);
                    }
                }
            }
            wake.notify_all();
        };
        std::thread::scope(|s| {
            for w in 0..self.workers {
                let worker_loop = &worker_loop;
                s.spawn(move || worker_loop(w));
            }
        });
        let q = queue.into_inner().unwrap();
        match q.failed {
            Some(e) => Err(e),
            None if q.remaining == 0 => Ok(()),
            None => Err(MraError::Internal(format!("{} tasks never became ready", q.remaining))),
        }
    }
}

/// Outputs of already-finished regions during a downward sweep.
pub struct Outputs<'a, T> {
    slots: &'a [OnceLock<T>],
}

impl<'a, T> Outputs<'a, T> {
    /// Output of region `id`; panics if it has not been computed yet.
    pub fn get(&self, id: usize) -> &'a T {
        self.slots[id].get().expect("ancestor output is available")
    }
}
