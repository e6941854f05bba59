//! Upper-bounding worker: shrink the full unit set to a minimal explanation.
//!
//! All four strategies visit units in ascending-relevance order and free a
//! unit whenever the remaining units still force the class. Freeing more
//! can only make misclassification easier, so "is `Free ∪ {u}` still an
//! explanation" is monotone in `Free`; every strategy therefore ends with
//! the same explanation as the plain sequential scan, and differs only in
//! how many queries it spends getting there.

use super::oracle::{Answer, Oracle, QueryKind};
use super::state::SharedState;
use crate::error::Result;

pub(crate) struct UbRun<'s, 'a> {
    oracle: &'s Oracle<'a>,
    state: &'s SharedState,
    use_lb_info: bool,
    pub free: Vec<bool>,
    pub kept: Vec<bool>,
    /// Some unit was kept on an Unknown verdict.
    pub unproven: bool,
}

impl<'s, 'a> UbRun<'s, 'a> {
    pub fn new(oracle: &'s Oracle<'a>, state: &'s SharedState, use_lb_info: bool) -> Self {
        let n = oracle.num_units();
        Self {
            oracle,
            state,
            use_lb_info,
            free: vec![false; n],
            kept: vec![false; n],
            unproven: false,
        }
    }

    fn known_essential(&self, u: usize) -> bool {
        self.use_lb_info && self.state.known_essential(u)
    }

    fn query_with(&self, extra: &[usize]) -> Result<Answer> {
        let mut flags = self.free.clone();
        for &u in extra {
            flags[u] = true;
        }
        self.oracle.free_units(&flags, QueryKind::Explanation)
    }

    fn release(&mut self, units: &[usize]) {
        for &u in units {
            self.free[u] = true;
        }
        self.state.mark_freed(units);
    }

    fn keep(&mut self, u: usize) {
        self.kept[u] = true;
        self.state.mark_kept();
    }

    pub fn sequential(&mut self, order: &[usize]) -> Result<()> {
        for &u in order {
            if self.known_essential(u) {
                self.keep(u);
                continue;
            }
            match self.query_with(&[u])? {
                Answer::Unsat => self.release(&[u]),
                Answer::Sat(_) => self.keep(u),
                Answer::Unknown(_) => {
                    self.unproven = true;
                    self.keep(u);
                }
            }
        }
        Ok(())
    }

    /// Repeated binary searches for the first position whose prefix block
    /// can no longer be freed. A satisfiable block's counterexample only
    /// changes kept units up to some position, and the first failing
    /// position cannot lie beyond it, so the search window shrinks to there.
    pub fn binary_search(&mut self, order: &[usize]) -> Result<()> {
        let n = order.len();
        let mut left = 0;
        while left < n {
            if self.known_essential(order[left]) {
                self.keep(order[left]);
                left += 1;
                continue;
            }
            let mut right = n as isize - 1;
            let mut inferred_from_unknown = false;
            while left as isize <= right {
                // Upper midpoint: larger blocks on the side that can be freed.
                let mid = (left + right as usize).div_ceil(2);
                let block = &order[left..=mid];
                match self.query_with(block)? {
                    Answer::Unsat => {
                        self.release(block);
                        left = mid + 1;
                    }
                    Answer::Sat(point) => {
                        let last = self.last_changed(block, &point).unwrap_or(mid - left);
                        right = (left + last) as isize - 1;
                    }
                    Answer::Unknown(_) => {
                        inferred_from_unknown = true;
                        right = mid as isize - 1;
                    }
                }
            }
            if left < n {
                if inferred_from_unknown {
                    self.unproven = true;
                }
                self.keep(order[left]);
                left += 1;
            }
        }
        Ok(())
    }

    /// Offset within `block` of the last unit whose features `point` moves
    /// away from the instance.
    fn last_changed(&self, block: &[usize], point: &[f64]) -> Option<usize> {
        let input = &self.oracle.inst.input;
        block
            .iter()
            .rposition(|&u| self.oracle.units[u].iter().any(|&f| point[f] != input[f]))
    }

    /// After each satisfiable query, pin the freed units near the
    /// counterexample and cheaply test which later units still flip the
    /// class on their own; those are kept without a full query.
    pub fn local_singleton(&mut self, order: &[usize], radius: f64) -> Result<()> {
        for (i, &u) in order.iter().enumerate() {
            if self.kept[u] {
                continue;
            }
            if self.known_essential(u) {
                self.keep(u);
                continue;
            }
            match self.query_with(&[u])? {
                Answer::Unsat => self.release(&[u]),
                Answer::Unknown(_) => {
                    self.unproven = true;
                    self.keep(u);
                }
                Answer::Sat(point) => {
                    self.keep(u);
                    for &later in &order[i + 1..] {
                        if self.kept[later] {
                            continue;
                        }
                        if let Answer::Sat(_) =
                            self.oracle.restricted(&self.free, &point, radius, later)?
                        {
                            self.keep(later);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
