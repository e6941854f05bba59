//! State shared between the upper- and lower-bounding workers.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::duality::{self, PairGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Event {
    Singleton,
    Pair,
    Freed,
    Kept,
}

/// One line of the progress stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub ub: usize,
    pub lb: usize,
    pub event: Event,
}

/// How the pair part of the lower bound is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LbMode {
    /// Exact minimum vertex cover while the graph fits the exact cap, the
    /// matching bound beyond it.
    #[default]
    Exact,
    /// Size of a greedy maximal matching.
    Matching,
}

#[derive(Debug)]
struct Inner {
    singletons: BTreeSet<usize>,
    pairs: PairGraph,
    free: BTreeSet<usize>,
    ub: usize,
    lb: usize,
    /// Current cover certifying the pair part of `lb`.
    cover: BTreeSet<usize>,
    pair_bound: usize,
    log: Vec<Snapshot>,
}

/// Monotone global state: singletons, pairs and free units only grow, the
/// upper bound only falls and the lower bound only rises.
pub struct SharedState {
    inner: Mutex<Inner>,
    start: Instant,
    lb_mode: LbMode,
    exact_cap: usize,
    sink: Option<Mutex<Box<dyn Write + Send>>>,
}

impl std::fmt::Debug for SharedState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SharedState")
            .field("inner", &*self.inner.lock())
            .field("lb_mode", &self.lb_mode)
            .finish_non_exhaustive()
    }
}

impl SharedState {
    /// Fresh state over `units` atoms: nothing known, `ub = units`, `lb = 0`.
    pub fn new(units: usize) -> Self {
        Self::with_options(units, LbMode::Exact, duality::DEFAULT_EXACT_CAP, None)
    }

    pub fn with_options(
        units: usize,
        lb_mode: LbMode,
        exact_cap: usize,
        sink: Option<Box<dyn Write + Send>>,
    ) -> Self {
        Self {
            inner: Mutex::new(Inner {
                singletons: BTreeSet::new(),
                pairs: PairGraph::new(),
                free: BTreeSet::new(),
                ub: units,
                lb: 0,
                cover: BTreeSet::new(),
                pair_bound: 0,
                log: Vec::new(),
            }),
            start: Instant::now(),
            lb_mode,
            exact_cap,
            sink: sink.map(Mutex::new),
        }
    }

    fn emit(&self, inner: &mut Inner, event: Event) {
        let snap = Snapshot {
            t: self.start.elapsed().as_secs_f64(),
            ub: inner.ub,
            lb: inner.lb,
            event,
        };
        inner.log.push(snap);
        if let Some(sink) = &self.sink {
            let mut w = sink.lock();
            // Progress output is best effort.
            let _ = serde_json::to_writer(&mut *w, &snap);
            let _ = w.write_all(b"\n");
            let _ = w.flush();
        }
    }

    pub fn add_singleton(&self, u: usize) -> bool {
        let mut inner = self.inner.lock();
        if inner.free.contains(&u) {
            debug_assert!(false, "unit {u} freed yet contrastive on its own");
            return false;
        }
        if !inner.singletons.insert(u) {
            return false;
        }
        inner.lb += 1;
        self.emit(&mut inner, Event::Singleton);
        true
    }

    /// Records a contrastive pair and raises the lower bound accordingly.
    pub fn add_pair(&self, a: usize, b: usize) -> bool {
        let mut inner = self.inner.lock();
        if inner.singletons.contains(&a) || inner.singletons.contains(&b) {
            return false;
        }
        if !inner.pairs.add_edge(a, b) {
            return false;
        }
        let covered = inner.cover.contains(&a) || inner.cover.contains(&b);
        if !covered {
            let (cover, bound) = pair_bound(&inner.pairs, self.lb_mode, self.exact_cap);
            if bound > inner.pair_bound {
                inner.lb += bound - inner.pair_bound;
                inner.pair_bound = bound;
            }
            inner.cover = cover;
        }
        self.emit(&mut inner, Event::Pair);
        true
    }

    pub fn mark_freed(&self, units: &[usize]) {
        let mut inner = self.inner.lock();
        for &u in units {
            debug_assert!(!inner.singletons.contains(&u), "freeing singleton {u}");
            if inner.free.insert(u) {
                inner.ub -= 1;
            }
        }
        self.emit(&mut inner, Event::Freed);
    }

    pub fn mark_kept(&self) {
        let mut inner = self.inner.lock();
        self.emit(&mut inner, Event::Kept);
    }

    /// True if `u` must stay in every explanation given what is known now:
    /// it is a singleton, or forms a pair with an already freed unit.
    pub fn known_essential(&self, u: usize) -> bool {
        let inner = self.inner.lock();
        inner.singletons.contains(&u)
            || inner.pairs.edges().iter().any(|&(a, b)| {
                (a == u && inner.free.contains(&b)) || (b == u && inner.free.contains(&a))
            })
    }

    pub fn singletons(&self) -> BTreeSet<usize> {
        self.inner.lock().singletons.clone()
    }

    pub fn pairs(&self) -> PairGraph {
        self.inner.lock().pairs.clone()
    }

    pub fn free(&self) -> BTreeSet<usize> {
        self.inner.lock().free.clone()
    }

    pub fn ub(&self) -> usize {
        self.inner.lock().ub
    }

    pub fn lb(&self) -> usize {
        self.inner.lock().lb
    }

    /// Every state change so far, in order.
    pub fn snapshots(&self) -> Vec<Snapshot> {
        self.inner.lock().log.clone()
    }
}

/// A cover of `pairs` together with the lower bound it certifies on the
/// minimum cover size.
pub(crate) fn pair_bound(pairs: &PairGraph, mode: LbMode, cap: usize) -> (BTreeSet<usize>, usize) {
    if mode == LbMode::Exact {
        if let Ok(cover) = duality::mvc_exact(pairs, cap) {
            let n = cover.len();
            return (cover, n);
        }
    }
    let cover = duality::mvc_greedy(pairs);
    let n = cover.len() / 2;
    (cover, n)
}
