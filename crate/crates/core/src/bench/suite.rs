//! Runs every probe through the configured pipeline on a bounded worker pool.

use std::collections::BTreeMap;
use std::io;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::protocol::{DebateConfig, DebateOutcome, ProbeItem, Turn};
use crate::runner::Engine;

use super::metrics::ResultRecord;

pub const DEFAULT_PARALLELISM: usize = 4;

/// Where a suite sends its artifacts. Called from worker threads; every call
/// for one item comes from the same thread.
pub trait SuiteSink: Sync {
    /// Locator recorded in the item's result.
    fn outcome_ref(&self, item: &ProbeItem) -> String;
    /// The item is about to run; discard anything left by an earlier attempt.
    fn begin(&self, _item: &ProbeItem) -> io::Result<()> {
        Ok(())
    }
    fn turn(&self, item: &ProbeItem, turn: &Turn) -> io::Result<()>;
    fn finished(&self, item: &ProbeItem, outcome: Option<&DebateOutcome>, record: &ResultRecord) -> io::Result<()>;
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub parallel: usize,
    /// Results of a previous run, reused instead of re-running those items.
    pub completed: BTreeMap<String, ResultRecord>,
    /// Stop after this many newly run items (for interrupt tests and partial runs).
    pub limit: Option<usize>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            parallel: DEFAULT_PARALLELISM,
            completed: BTreeMap::new(),
            limit: None,
        }
    }
}

fn run_item(engine: &Engine, item: &ProbeItem, config: &DebateConfig, sink: &dyn SuiteSink) -> ResultRecord {
    let mut record = ResultRecord {
        item_id: item.id.clone(),
        predicted: None,
        gold: item.gold_label,
        outcome_ref: sink.outcome_ref(item),
        mode: config.mode,
        error: None,
        dataset: item.dataset_tag,
        split: item.split,
    };
    if let Err(e) = sink.begin(item) {
        record.error = Some(format!("preparing transcript: {e}"));
        return record;
    }
    let result = engine.run_debate(item, config, &mut |turn| sink.turn(item, turn));
    let outcome = match result {
        Ok(outcome) => {
            record.predicted = Some(outcome.verdict);
            Some(outcome)
        }
        Err(e) => {
            tracing::warn!(item = %item.id, error = %e, "item failed");
            record.error = Some(e.to_string());
            None
        }
    };
    if let Err(e) = sink.finished(item, outcome.as_ref(), &record) {
        record.predicted = None;
        record.error = Some(format!("writing result: {e}"));
    }
    record
}

/// One record per item, in `items` order. Items whose debates fail are
/// recorded with an error; the suite itself never aborts.
pub fn run_suite(
    engine: &Engine,
    items: &[ProbeItem],
    config: &DebateConfig,
    opts: &SuiteOptions,
    sink: &dyn SuiteSink,
) -> Vec<ResultRecord> {
    let mut pending: Vec<usize> = (0..items.len())
        .filter(|&i| !opts.completed.contains_key(&items[i].id))
        .collect();
    if let Some(limit) = opts.limit {
        pending.truncate(limit);
    }
    let next = AtomicUsize::new(0);
    let fresh: Mutex<BTreeMap<usize, ResultRecord>> = Mutex::new(BTreeMap::new());
    let workers = opts.parallel.max(1).min(pending.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let slot = next.fetch_add(1, Ordering::SeqCst);
                let Some(&idx) = pending.get(slot) else { break };
                let record = run_item(engine, &items[idx], config, sink);
                fresh.lock().unwrap().insert(idx, record);
            });
        }
    });
    let mut fresh = fresh.into_inner().unwrap();
    items
        .iter()
        .enumerate()
        .filter_map(|(i, item)| fresh.remove(&i).or_else(|| opts.completed.get(&item.id).cloned()))
        .collect()
}

/// Keeps everything in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub transcripts: Mutex<BTreeMap<String, Vec<Turn>>>,
    pub outcomes: Mutex<BTreeMap<String, DebateOutcome>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn outcome(&self, item_id: &str) -> Option<DebateOutcome> {
        self.outcomes.lock().unwrap().get(item_id).cloned()
    }

    pub fn transcript(&self, item_id: &str) -> Vec<Turn> {
        self.transcripts.lock().unwrap().get(item_id).cloned().unwrap_or_default()
    }
}

impl SuiteSink for MemorySink {
    fn outcome_ref(&self, item: &ProbeItem) -> String {
        format!("memory:{}", item.id)
    }

    fn begin(&self, item: &ProbeItem) -> io::Result<()> {
        self.transcripts.lock().unwrap().remove(&item.id);
        Ok(())
    }

    fn turn(&self, item: &ProbeItem, turn: &Turn) -> io::Result<()> {
        self.transcripts
            .lock()
            .unwrap()
            .entry(item.id.clone())
            .or_default()
            .push(turn.clone());
        Ok(())
    }

    fn finished(&self, item: &ProbeItem, outcome: Option<&DebateOutcome>, _record: &ResultRecord) -> io::Result<()> {
        if let Some(o) = outcome {
            self.outcomes.lock().unwrap().insert(item.id.clone(), o.clone());
        }
        Ok(())
    }
}
