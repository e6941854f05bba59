//! Feature orderings for the upper-bounding worker (least relevant first).

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ClassificationInstance, Network};
use crate::verifier::margin;

/// A permutation of feature (or bundle) indices in ascending relevance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceOrdering {
    pub order: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

impl RelevanceOrdering {
    pub fn identity(m: usize) -> Self {
        Self {
            order: (0..m).collect(),
            scores: None,
        }
    }

    pub fn new(order: Vec<usize>, m: usize) -> Result<Self> {
        let ordering = Self {
            order,
            scores: None,
        };
        ordering.validate(m)?;
        Ok(ordering)
    }

    /// Ascending by score, ties by index.
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        Self {
            order,
            scores: Some(scores),
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.order.len() != m {
            return Err(Error::InvalidOrdering(format!(
                "ordering has {} entries, expected {m}",
                self.order.len()
            )));
        }
        let mut seen = vec![false; m];
        for &i in &self.order {
            if i >= m {
                return Err(Error::InvalidOrdering(format!(
                    "index {i} out of range 0..{m}"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidOrdering(format!("index {i} repeated")));
            }
        }
        Ok(())
    }

    /// Orders groups of features by the summed score of their members.
    pub fn for_units(&self, units: &[Vec<usize>]) -> Self {
        let scores = match &self.scores {
            Some(s) => s.clone(),
            None => {
                // Rank position as a stand-in score.
                let mut rank = vec![0.0; self.order.len()];
                for (pos, &f) in self.order.iter().enumerate() {
                    rank[f] = pos as f64;
                }
                rank
            }
        };
        Self::from_scores(
            units
                .iter()
                .map(|u| u.iter().map(|&f| scores[f]).sum())
                .collect(),
        )
    }

    pub fn from_json_str(text: &str, m: usize) -> Result<Self> {
        let order: Vec<usize> =
            serde_json::from_str(text).map_err(|e| Error::parse("ordering JSON", e))?;
        Self::new(order, m)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.order).expect("ordering serializes")
    }
}

/// Reads a JSON list of indices and checks it is a permutation of `0..m`.
pub fn load_ordering(path: impl AsRef<Path>, m: usize) -> Result<RelevanceOrdering> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RelevanceOrdering::from_json_str(&text, m)
}

/// Occlusion relevance. For each feature `f` and each probe value `d` of its
/// domain, set `v_f := d` and measure the drop of the predicted logit plus
/// the rise of the best competing margin; the feature's score is the
/// largest such change. Features the network ignores score 0.
pub fn occlusion_scores(net: &Network, inst: &ClassificationInstance) -> RelevanceOrdering {
    let c = inst.class;
    let base = net.forward_unchecked(&inst.input);
    let base_margin = margin(&base, c).0;
    let mut x = inst.input.clone();
    let scores = (0..inst.num_features())
        .map(|f| {
            let original = x[f];
            let mut best = 0.0f64;
            for d in net.input_space().domain(f).probe_values() {
                x[f] = d;
                let logits = net.forward_unchecked(&x);
                let drop = base[c] - logits[c];
                let rise = margin(&logits, c).0 - base_margin;
                best = best.max(drop + rise);
            }
            x[f] = original;
            best
        })
        .collect();
    RelevanceOrdering::from_scores(scores)
}

/// Moves the masked indices to the end of the ordering (most relevant),
/// keeping relative order on both sides.
pub fn mask_border(ordering: &RelevanceOrdering, mask: &BTreeSet<usize>) -> RelevanceOrdering {
    let (outside, inside): (Vec<usize>, Vec<usize>) =
        ordering.order.iter().partition(|f| !mask.contains(f));
    RelevanceOrdering {
        order: outside.into_iter().chain(inside).collect(),
        scores: ordering.scores.clone(),
    }
}

/// Pixels on the outer frame of a `width × height` row-major image.
pub fn border_mask(width: usize, height: usize) -> BTreeSet<usize> {
    (0..width * height)
        .filter(|&p| {
            let (r, c) = (p / width, p % width);
            r == 0 || c == 0 || r + 1 == height || c + 1 == width
        })
        .collect()
}
