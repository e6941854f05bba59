//! Vertex covers and hitting sets.
//!
//! Contrastive pairs form the edges of a graph whose minimum vertex cover
//! bounds the minimum explanation from below; contrastive sets in general
//! call for minimum hitting sets. The exact solvers here are small
//! branch-and-bound searches over bitmasks, so instances are capped at
//! [`MAX_EXACT`] elements.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// Default element cap for the exact solvers.
pub const DEFAULT_EXACT_CAP: usize = 64;
/// Hard ceiling imposed by the bitmask representation.
pub const MAX_EXACT: usize = 128;

type Mask = u128;

/// Undirected simple graph over feature (or bundle) labels, with optional
/// vertex weights (default 1).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairGraph {
    vertices: BTreeSet<usize>,
    edges: BTreeSet<(usize, usize)>,
    weights: BTreeMap<usize, u64>,
}

impl PairGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// # Panics
    ///
    /// On self-loops.
    pub fn from_edges(edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut g = Self::new();
        for (a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    pub fn add_vertex(&mut self, v: usize) {
        self.vertices.insert(v);
    }

    /// Adds the undirected edge `{a, b}`; endpoints become vertices.
    ///
    /// # Panics
    ///
    /// If `a == b`.
    pub fn add_edge(&mut self, a: usize, b: usize) -> bool {
        assert_ne!(a, b, "self-loop on vertex {a}");
        self.vertices.insert(a);
        self.vertices.insert(b);
        self.edges.insert((a.min(b), a.max(b)))
    }

    pub fn set_weight(&mut self, v: usize, w: u64) {
        self.vertices.insert(v);
        self.weights.insert(v, w);
    }

    pub fn weight(&self, v: usize) -> u64 {
        self.weights.get(&v).copied().unwrap_or(1)
    }

    pub fn vertices(&self) -> &BTreeSet<usize> {
        &self.vertices
    }

    /// Edges as `(min, max)` in lexicographic order.
    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn is_cover(&self, cover: &BTreeSet<usize>) -> bool {
        self.edges
            .iter()
            .all(|(a, b)| cover.contains(a) || cover.contains(b))
    }

    pub fn cost(&self, cover: &BTreeSet<usize>) -> u64 {
        cover.iter().map(|&v| self.weight(v)).sum()
    }

    /// Vertices touching at least one edge, in order.
    fn endpoints(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.edges.iter().flat_map(|&(a, b)| [a, b]).collect();
        set.into_iter().collect()
    }
}

/// Greedy maximal matching, scanning edges lexicographically.
pub fn maximal_matching(g: &PairGraph) -> Vec<(usize, usize)> {
    let mut used = BTreeSet::new();
    let mut out = Vec::new();
    for &(a, b) in g.edges() {
        if !used.contains(&a) && !used.contains(&b) {
            used.insert(a);
            used.insert(b);
            out.push((a, b));
        }
    }
    out
}

/// Both endpoints of a maximal matching: a cover at most twice the minimum.
pub fn mvc_greedy(g: &PairGraph) -> BTreeSet<usize> {
    let cover: BTreeSet<usize> = maximal_matching(g)
        .into_iter()
        .flat_map(|(a, b)| [a, b])
        .collect();
    debug_assert!(g.is_cover(&cover));
    cover
}

/// Local-ratio 2-approximation for the weighted problem: every edge pays the
/// smaller residual weight of its endpoints; vertices paid off join the cover.
pub fn mwvc_greedy(g: &PairGraph) -> BTreeSet<usize> {
    let mut residual: BTreeMap<usize, u64> =
        g.vertices().iter().map(|&v| (v, g.weight(v))).collect();
    for &(a, b) in g.edges() {
        let delta = residual[&a].min(residual[&b]);
        *residual.get_mut(&a).unwrap() -= delta;
        *residual.get_mut(&b).unwrap() -= delta;
    }
    let cover: BTreeSet<usize> = g
        .endpoints()
        .into_iter()
        .filter(|v| residual[v] == 0)
        .collect();
    debug_assert!(g.is_cover(&cover));
    cover
}

/// Minimum-cardinality vertex cover.
pub fn mvc_exact(g: &PairGraph, cap: usize) -> Result<BTreeSet<usize>> {
    let mut unit = g.clone();
    unit.weights.clear();
    mwvc_exact(&unit, cap)
}

/// Minimum-weight vertex cover (unit weights unless set).
///
/// Branches on the vertex of highest degree (take it, or take all its
/// neighbours), pruning with the local-ratio dual bound.
pub fn mwvc_exact(g: &PairGraph, cap: usize) -> Result<BTreeSet<usize>> {
    let labels = g.endpoints();
    let limit = cap.min(MAX_EXACT);
    if labels.len() > limit {
        return Err(Error::CapExceeded {
            size: labels.len(),
            cap: limit,
        });
    }
    let index: BTreeMap<usize, usize> = labels.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut adj: Vec<Mask> = vec![0; labels.len()];
    for &(a, b) in g.edges() {
        let (i, j) = (index[&a], index[&b]);
        adj[i] |= 1 << j;
        adj[j] |= 1 << i;
    }
    let weights: Vec<u64> = labels.iter().map(|&v| g.weight(v)).collect();
    let mut solver = CoverSearch {
        adj,
        weights,
        best: u64::MAX,
        best_set: 0,
    };
    // Greedy incumbent.
    let greedy = mwvc_greedy(g);
    solver.best = g.cost(&greedy);
    solver.best_set = greedy.iter().fold(0, |m, v| m | 1 << index[v]);
    let all = if labels.is_empty() {
        0
    } else {
        Mask::MAX >> (MAX_EXACT - labels.len())
    };
    solver.search(all, 0, 0);
    let cover: BTreeSet<usize> = (0..labels.len())
        .filter(|&i| solver.best_set >> i & 1 == 1)
        .map(|i| labels[i])
        .collect();
    debug_assert!(g.is_cover(&cover));
    Ok(cover)
}

struct CoverSearch {
    adj: Vec<Mask>,
    weights: Vec<u64>,
    best: u64,
    best_set: Mask,
}

impl CoverSearch {
    /// `alive`: vertices not yet decided; edges among them remain uncovered.
    fn search(&mut self, alive: Mask, chosen: Mask, cost: u64) {
        let mut top: Option<(usize, u32)> = None;
        for i in bits(alive) {
            let deg = (self.adj[i] & alive).count_ones();
            if deg > 0 && top.is_none_or(|t| deg > t.1) {
                top = Some((i, deg));
            }
        }
        let Some((v, _)) = top else {
            if cost < self.best {
                self.best = cost;
                self.best_set = chosen;
            }
            return;
        };
        if cost + self.dual_bound(alive) >= self.best {
            return;
        }
        // take v
        self.search(alive & !(1 << v), chosen | 1 << v, cost + self.weights[v]);
        // exclude v: all live neighbours join the cover
        let nbrs = self.adj[v] & alive;
        let extra: u64 = bits(nbrs).map(|i| self.weights[i]).sum();
        self.search(alive & !(1 << v) & !nbrs, chosen | nbrs, cost + extra);
    }

    /// Local-ratio lower bound on the cover cost of the live subgraph.
    fn dual_bound(&self, alive: Mask) -> u64 {
        let mut residual = self.weights.clone();
        let mut total = 0;
        for i in bits(alive) {
            for j in bits(self.adj[i] & alive) {
                if j <= i {
                    continue;
                }
                let d = residual[i].min(residual[j]);
                residual[i] -= d;
                residual[j] -= d;
                total += d;
            }
        }
        total
    }
}

fn bits(mut m: Mask) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        }
    })
}

/// Minimum-cardinality set meeting every set in `sets`.
pub fn mhs_exact(sets: &[BTreeSet<usize>], cap: usize) -> Result<BTreeSet<usize>> {
    if let Some(pos) = sets.iter().position(BTreeSet::is_empty) {
        return Err(Error::InvalidQuery(format!(
            "set {pos} is empty and cannot be hit"
        )));
    }
    let universe: Vec<usize> = sets
        .iter()
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let limit = cap.min(MAX_EXACT);
    if universe.len() > limit {
        return Err(Error::CapExceeded {
            size: universe.len(),
            cap: limit,
        });
    }
    let index: BTreeMap<usize, usize> = universe.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut masks: Vec<Mask> = sets
        .iter()
        .map(|s| s.iter().fold(0, |m, v| m | 1 << index[v]))
        .collect();
    masks.sort_unstable();
    masks.dedup();
    let mut search = HitSearch {
        sets: masks,
        best: universe.len() as u32 + 1,
        best_set: 0,
    };
    search.search(0, 0);
    let hit: BTreeSet<usize> = (0..universe.len())
        .filter(|&i| search.best_set >> i & 1 == 1)
        .map(|i| universe[i])
        .collect();
    debug_assert!(sets.iter().all(|s| !s.is_disjoint(&hit)));
    Ok(hit)
}

struct HitSearch {
    sets: Vec<Mask>,
    best: u32,
    best_set: Mask,
}

impl HitSearch {
    fn search(&mut self, chosen: Mask, forbidden: Mask) {
        let size = chosen.count_ones();
        let open: Vec<Mask> = self
            .sets
            .iter()
            .copied()
            .filter(|&s| s & chosen == 0)
            .map(|s| s & !forbidden)
            .collect();
        if open.is_empty() {
            if size < self.best {
                self.best = size;
                self.best_set = chosen;
            }
            return;
        }
        if open.contains(&0) {
            return;
        }
        // Greedy packing of pairwise-disjoint open sets.
        let mut packed: Mask = 0;
        let mut bound = 0;
        let mut by_size = open.clone();
        by_size.sort_by_key(|s| s.count_ones());
        for s in &by_size {
            if s & packed == 0 {
                packed |= s;
                bound += 1;
            }
        }
        if size + bound >= self.best {
            return;
        }
        let target = by_size[0];
        let mut excluded = forbidden;
        for e in bits(target) {
            self.search(chosen | 1 << e, excluded);
            excluded |= 1 << e;
        }
    }
}
