//! Lower-bounding worker: contrastive singletons, then contrastive pairs.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::oracle::{Answer, Oracle, QueryKind};
use super::state::{pair_bound, LbMode, SharedState};
use crate::duality::PairGraph;
use crate::error::Result;

/// How far the lower-bounding worker searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LbSetting {
    Off,
    Singletons,
    #[default]
    Pairs,
}

/// Runs the singleton scan and, if requested, the pair scan, publishing
/// findings to `state` as they appear. Returns false if any query came back
/// Unknown (the candidate is skipped; the bound stays sound).
pub(crate) fn run(oracle: &Oracle<'_>, state: &SharedState, setting: LbSetting) -> Result<bool> {
    let n = oracle.num_units();
    let mut complete = true;
    if setting == LbSetting::Off {
        return Ok(complete);
    }
    let mut flags = vec![false; n];
    for u in 0..n {
        flags[u] = true;
        match oracle.free_units(&flags, QueryKind::Singleton)? {
            Answer::Sat(_) => {
                state.add_singleton(u);
            }
            Answer::Unsat => {}
            Answer::Unknown(_) => complete = false,
        }
        flags[u] = false;
    }
    if setting == LbSetting::Singletons {
        return Ok(complete);
    }
    let singletons = state.singletons();
    let rest: Vec<usize> = (0..n).filter(|u| !singletons.contains(u)).collect();
    for (i, &a) in rest.iter().enumerate() {
        for &b in &rest[i + 1..] {
            flags[a] = true;
            flags[b] = true;
            match oracle.free_units(&flags, QueryKind::Pair)? {
                Answer::Sat(_) => {
                    state.add_pair(a, b);
                }
                Answer::Unsat => {}
                Answer::Unknown(_) => complete = false,
            }
            flags[a] = false;
            flags[b] = false;
        }
    }
    Ok(complete)
}

/// `|singletons| + cover bound of the pair graph`, where the cover bound is
/// the exact minimum vertex cover when it fits `exact_cap` (and `mode` asks
/// for it) and the size of a greedy maximal matching otherwise. Pairs must
/// not touch singletons.
pub fn lower_bound(
    singletons: &BTreeSet<usize>,
    pairs: &BTreeSet<(usize, usize)>,
    mode: LbMode,
    exact_cap: usize,
) -> usize {
    debug_assert!(pairs
        .iter()
        .all(|(a, b)| !singletons.contains(a) && !singletons.contains(b)));
    let graph = PairGraph::from_edges(pairs.iter().copied());
    singletons.len() + pair_bound(&graph, mode, exact_cap).1
}
