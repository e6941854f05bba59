//! Brute-force reference answers for small discrete networks.
//!
//! Everything here is computed from the raw logits over the full input
//! space and shares no code with the library's verifier or solvers.

#![allow(dead_code)]

use std::collections::BTreeSet;

use abdux::bundles::BundlePartition;
use abdux::fixtures::all_points;
use abdux::{ClassificationInstance, Network};

pub type Mask = u64;

pub fn to_set(mask: Mask) -> BTreeSet<usize> {
    (0..64).filter(|&i| mask >> i & 1 == 1).collect()
}

pub fn to_mask(set: &BTreeSet<usize>) -> Mask {
    set.iter().fold(0, |m, &i| m | 1 << i)
}

/// True iff some class other than `class` scores at least as high.
pub fn misclassified(logits: &[f64], class: usize) -> bool {
    logits
        .iter()
        .enumerate()
        .any(|(k, &l)| k != class && l >= logits[class])
}

pub struct Brute {
    pub m: usize,
    /// Distinct sets of features on which a misclassified point differs from
    /// the instance. Each is a contrastive set.
    pub diffs: Vec<Mask>,
    /// The inclusion-minimal ones.
    pub minimal_diffs: Vec<Mask>,
}

impl Brute {
    pub fn new(net: &Network, inst: &ClassificationInstance) -> Self {
        let m = inst.input.len();
        assert!(m <= 20, "brute force needs a small feature space");
        let mut diffs = BTreeSet::new();
        for x in all_points(net.input_space()).expect("discrete domains") {
            if misclassified(&net.forward(&x).unwrap(), inst.class) {
                let d = (0..m)
                    .filter(|&f| x[f] != inst.input[f])
                    .fold(0, |acc: Mask, f| acc | 1 << f);
                diffs.insert(d);
            }
        }
        assert!(!diffs.contains(&0), "instance itself is misclassified");
        let diffs: Vec<Mask> = diffs.into_iter().collect();
        let minimal_diffs = diffs
            .iter()
            .copied()
            .filter(|&d| !diffs.iter().any(|&e| e != d && e & !d == 0))
            .collect();
        Self {
            m,
            diffs,
            minimal_diffs,
        }
    }

    pub fn full(&self) -> Mask {
        (1 << self.m) - 1
    }

    /// Fixing `e` forces the class iff every misclassified point differs
    /// from the instance somewhere in `e`.
    pub fn is_explanation(&self, e: Mask) -> bool {
        self.minimal_diffs.iter().all(|&d| d & e != 0)
    }

    pub fn is_minimal(&self, e: Mask) -> bool {
        self.is_explanation(e)
            && to_set(e)
                .into_iter()
                .all(|f| !self.is_explanation(e & !(1 << f)))
    }

    /// Altering only the features in `s` can change the class.
    pub fn is_contrastive(&self, s: Mask) -> bool {
        self.minimal_diffs.iter().any(|&d| d & !s == 0)
    }

    pub fn minimal_explanations(&self) -> Vec<Mask> {
        (0..=self.full()).filter(|&e| self.is_minimal(e)).collect()
    }

    pub fn minimum_size(&self) -> usize {
        (0..=self.full())
            .filter(|&e| self.is_explanation(e))
            .map(|e| e.count_ones() as usize)
            .min()
            .unwrap()
    }

    pub fn singletons(&self) -> BTreeSet<usize> {
        (0..self.m)
            .filter(|&f| self.is_contrastive(1 << f))
            .collect()
    }

    pub fn pairs(&self) -> BTreeSet<(usize, usize)> {
        let s = self.singletons();
        let mut out = BTreeSet::new();
        for a in 0..self.m {
            for b in a + 1..self.m {
                if !s.contains(&a) && !s.contains(&b) && self.is_contrastive(1 << a | 1 << b) {
                    out.insert((a, b));
                }
            }
        }
        out
    }

    pub fn contrastive_sets(&self) -> Vec<BTreeSet<usize>> {
        self.diffs.iter().map(|&d| to_set(d)).collect()
    }

    fn bundle_mask(partition: &BundlePartition, bundles: Mask) -> Mask {
        to_set(bundles)
            .into_iter()
            .flat_map(|b| partition.bundles()[b].iter().copied())
            .fold(0, |m, f| m | 1 << f)
    }

    pub fn is_bundle_explanation(&self, partition: &BundlePartition, bundles: Mask) -> bool {
        self.is_explanation(Self::bundle_mask(partition, bundles))
    }

    /// Smallest bundle count and smallest feature cost over all bundle
    /// explanations.
    pub fn minimum_bundle_explanation(&self, partition: &BundlePartition) -> (usize, usize) {
        let n = partition.len();
        let mut best = (usize::MAX, usize::MAX);
        for b in 0..(1u64 << n) {
            let features = Self::bundle_mask(partition, b);
            if self.is_explanation(features) {
                best.0 = best.0.min(b.count_ones() as usize);
                best.1 = best.1.min(features.count_ones() as usize);
            }
        }
        best
    }

    /// Verdict sequence the sequential scan sees under `order`: `true` where
    /// the feature is kept.
    pub fn sequential_verdicts(&self, order: &[usize]) -> Vec<bool> {
        let mut fixed = self.full();
        order
            .iter()
            .map(|&f| {
                let candidate = fixed & !(1 << f);
                if self.is_explanation(candidate) {
                    fixed = candidate;
                    false
                } else {
                    true
                }
            })
            .collect()
    }
}

/// Number of changes between consecutive entries.
pub fn flips(verdicts: &[bool]) -> usize {
    verdicts.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Minimum vertex cover size by subset enumeration.
pub fn brute_mvc(n: usize, edges: &[(usize, usize)]) -> usize {
    (0..1u64 << n)
        .filter(|&c| {
            edges
                .iter()
                .all(|&(a, b)| c >> a & 1 == 1 || c >> b & 1 == 1)
        })
        .map(|c| c.count_ones() as usize)
        .min()
        .unwrap()
}

/// Minimum weighted vertex cover cost by subset enumeration.
pub fn brute_mwvc(weights: &[u64], edges: &[(usize, usize)]) -> u64 {
    (0..1u64 << weights.len())
        .filter(|&c| {
            edges
                .iter()
                .all(|&(a, b)| c >> a & 1 == 1 || c >> b & 1 == 1)
        })
        .map(|c| to_set(c).into_iter().map(|v| weights[v]).sum())
        .min()
        .unwrap()
}

/// Minimum hitting set size by subset enumeration.
pub fn brute_mhs(universe: usize, sets: &[Mask]) -> usize {
    (0..1u64 << universe)
        .filter(|&h| sets.iter().all(|&s| s & h != 0))
        .map(|h| h.count_ones() as usize)
        .min()
        .unwrap()
}
