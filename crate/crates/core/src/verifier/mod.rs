//! Sound and complete misclassification queries.
//!
//! A [`Query`] constrains every feature (fixed, boxed or free over its
//! domain) and names the class `c` the instance was assigned. The verifier
//! decides whether some admissible input is *misclassified*: some other
//! class `c'` reaches `logit(c') >= logit(c) - eps`. The tie slack `eps` is
//! zero when every varying feature is discrete and `1e-9` otherwise, so an
//! `Unsat` verdict certifies that `c` strictly dominates.
//!
//! Small discrete spaces are enumerated outright. Everything else goes to a
//! depth-first branch-and-bound over ReLU phases and input splits, pruned
//! with symbolic interval bounds.

mod bounds;
mod search;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::nn::{FeatureDomain, Network};

pub use bounds::{propagate_bounds, LayerBounds, Phase};

/// Tie slack used whenever some varying feature ranges over an interval.
pub const CONTINUOUS_TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureConstraint {
    Fixed(f64),
    Box(f64, f64),
    /// The feature's whole domain.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub constraints: Vec<FeatureConstraint>,
    pub excluded_class: usize,
}

impl Query {
    /// Fixes the features flagged in `kept` to `input` and frees the rest.
    pub fn with_kept(input: &[f64], kept: &[bool], excluded_class: usize) -> Self {
        let constraints = input
            .iter()
            .zip(kept)
            .map(|(&v, &k)| {
                if k {
                    FeatureConstraint::Fixed(v)
                } else {
                    FeatureConstraint::Free
                }
            })
            .collect();
        Self {
            constraints,
            excluded_class,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("query JSON", e))
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        if self.constraints.len() != net.input_dim() {
            return Err(Error::InvalidQuery(format!(
                "query constrains {} features, network has {}",
                self.constraints.len(),
                net.input_dim()
            )));
        }
        if self.excluded_class >= net.num_classes() {
            return Err(Error::InvalidQuery(format!(
                "class {} out of range (network has {} classes)",
                self.excluded_class,
                net.num_classes()
            )));
        }
        for (i, (c, d)) in self
            .constraints
            .iter()
            .zip(net.input_space().domains())
            .enumerate()
        {
            match *c {
                FeatureConstraint::Fixed(v) if !d.contains(v) => {
                    return Err(Error::InvalidQuery(format!(
                        "feature {i}: fixed value {v} outside its domain"
                    )))
                }
                FeatureConstraint::Box(lo, hi) => {
                    let (dlo, dhi) = d.hull();
                    if !(lo <= hi && dlo <= lo && hi <= dhi) {
                        return Err(Error::InvalidQuery(format!(
                            "feature {i}: box [{lo}, {hi}] not inside domain hull [{dlo}, {dhi}]"
                        )));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Unsat,
    Sat {
        counterexample: Vec<f64>,
        winning_class: usize,
    },
}

impl Verdict {
    pub fn is_sat(&self) -> bool {
        matches!(self, Verdict::Sat { .. })
    }

    pub fn counterexample(&self) -> Option<&[f64]> {
        match self {
            Verdict::Sat { counterexample, .. } => Some(counterexample),
            Verdict::Unsat => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetKind {
    NodeLimit,
    Deadline,
}

/// The search gave up. Never a substitute for `Unsat`.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum VerifyError {
    #[error("verifier budget exhausted ({kind:?}) after {nodes} nodes")]
    Budget { kind: BudgetKind, nodes: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Enumeration,
    BranchAndBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub engine: Engine,
    /// Points enumerated or branch-and-bound nodes visited.
    pub nodes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifierConfig {
    /// Discrete spaces with at most this many points are enumerated.
    pub enumeration_cap: u64,
    /// Per-query cap on enumerated points / search nodes.
    pub node_limit: u64,
    pub deadline: Option<Instant>,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self {
            enumeration_cap: 1 << 20,
            node_limit: 20_000_000,
            deadline: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Verifier {
    pub config: VerifierConfig,
}

impl Verifier {
    pub fn new(config: VerifierConfig) -> Self {
        Self { config }
    }

    pub fn with_deadline(mut self, deadline: Option<Instant>) -> Self {
        self.config.deadline = deadline;
        self
    }

    pub fn verify(&self, net: &Network, query: &Query) -> Result<Verdict> {
        self.verify_with_stats(net, query).map(|(v, _)| v)
    }

    pub fn verify_with_stats(
        &self,
        net: &Network,
        query: &Query,
    ) -> Result<(Verdict, SearchStats)> {
        query.validate(net)?;
        let problem = search::Problem::new(net, query);
        Ok(problem.solve(&self.config)?)
    }

    /// Fixes every feature to `input` except those listed in `flips`, which
    /// take the given constraint instead.
    pub fn verify_fixed_except(
        &self,
        net: &Network,
        input: &[f64],
        flips: &[(usize, FeatureConstraint)],
        excluded_class: usize,
    ) -> Result<Verdict> {
        let mut constraints: Vec<_> = input.iter().map(|&v| FeatureConstraint::Fixed(v)).collect();
        for &(f, c) in flips {
            let slot = constraints
                .get_mut(f)
                .ok_or_else(|| Error::InvalidQuery(format!("feature {f} out of range")))?;
            *slot = c;
        }
        self.verify(
            net,
            &Query {
                constraints,
                excluded_class,
            },
        )
    }
}

/// Largest logit gap `logit(c') - logit(c)` over `c' != c`, with the
/// lowest-index `c'` attaining it.
pub fn margin(logits: &[f64], class: usize) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for (k, &l) in logits.iter().enumerate() {
        if k != class && l - logits[class] > best.0 {
            best = (l - logits[class], k);
        }
    }
    best
}

/// Whether `x` is misclassified away from `class` under tie slack `eps`.
pub fn misclassifies(net: &Network, x: &[f64], class: usize, eps: f64) -> bool {
    margin(&net.forward_unchecked(x), class).0 >= -eps
}

/// Tie slack for a query: zero unless some varying feature is continuous.
pub fn tie_eps(net: &Network, query: &Query) -> f64 {
    let continuous = query
        .constraints
        .iter()
        .zip(net.input_space().domains())
        .any(|(c, d)| match (c, d) {
            (FeatureConstraint::Fixed(_), _) => false,
            (_, FeatureDomain::Discrete(_)) => false,
            (FeatureConstraint::Box(lo, hi), FeatureDomain::Interval(..)) => lo < hi,
            (FeatureConstraint::Free, FeatureDomain::Interval(lo, hi)) => lo < hi,
        });
    if continuous {
        CONTINUOUS_TIE_EPS
    } else {
        0.0
    }
}
