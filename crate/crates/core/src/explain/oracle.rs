//! Verification queries phrased over units (single features or bundles).

use std::time::{Duration, Instant};

use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ClassificationInstance, FeatureDomain, Network};
use crate::verifier::{FeatureConstraint, Query, Verdict, Verifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    /// Is the current candidate still an explanation?
    Explanation,
    /// Local-singleton probe with freed units pinned near a counterexample.
    Restricted,
    Singleton,
    Pair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Sat,
    Unsat,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub kind: QueryKind,
    pub outcome: Outcome,
    pub secs: f64,
}

/// Verdict counts and timings for one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub records: Vec<QueryRecord>,
}

impl QueryStats {
    pub fn count(&self, kind: Option<QueryKind>, outcome: Option<Outcome>) -> usize {
        self.records
            .iter()
            .filter(|r| kind.is_none_or(|k| r.kind == k) && outcome.is_none_or(|o| r.outcome == o))
            .count()
    }

    pub fn total(&self) -> usize {
        self.records.len()
    }

    /// Full explanation queries issued by the upper-bounding worker.
    pub fn explanation_queries(&self) -> usize {
        self.count(Some(QueryKind::Explanation), None)
    }

    pub fn unknowns(&self) -> usize {
        self.count(None, Some(Outcome::Unknown))
    }

    pub fn total_secs(&self) -> f64 {
        self.records.iter().map(|r| r.secs).sum()
    }
}

pub(crate) enum Answer {
    Sat(Vec<f64>),
    Unsat,
    /// The verifier ran out of budget; carries the budget error.
    Unknown(Error),
}

impl Answer {
    /// Sat as true, Unsat as false, Unknown as the budget error.
    pub fn decided(self) -> Result<bool> {
        match self {
            Answer::Sat(_) => Ok(true),
            Answer::Unsat => Ok(false),
            Answer::Unknown(e) => Err(e),
        }
    }
}

pub(crate) struct Oracle<'a> {
    pub net: &'a Network,
    pub inst: &'a ClassificationInstance,
    pub units: &'a [Vec<usize>],
    pub verifier: Verifier,
    log: Mutex<Vec<QueryRecord>>,
    jitter: Option<Mutex<ChaCha8Rng>>,
}

impl<'a> Oracle<'a> {
    pub fn new(
        net: &'a Network,
        inst: &'a ClassificationInstance,
        units: &'a [Vec<usize>],
        verifier: Verifier,
    ) -> Self {
        Self {
            net,
            inst,
            units,
            verifier,
            log: Mutex::new(Vec::new()),
            jitter: None,
        }
    }

    /// Sleeps a random few microseconds before every query, to shake up
    /// thread interleavings in stress tests.
    pub fn with_jitter(mut self, seed: Option<u64>) -> Self {
        self.jitter = seed.map(|s| Mutex::new(ChaCha8Rng::seed_from_u64(s)));
        self
    }

    pub fn num_units(&self) -> usize {
        self.units.len()
    }

    /// Frees every feature of the flagged units, fixing the rest to the
    /// instance.
    pub fn free_units(&self, free: &[bool], kind: QueryKind) -> Result<Answer> {
        let mut constraints: Vec<FeatureConstraint> = self
            .inst
            .input
            .iter()
            .map(|&v| FeatureConstraint::Fixed(v))
            .collect();
        for (u, features) in self.units.iter().enumerate() {
            if free[u] {
                for &f in features {
                    constraints[f] = FeatureConstraint::Free;
                }
            }
        }
        self.run(constraints, kind)
    }

    /// Like [`Oracle::free_units`] for `probe` alone, with the features of the
    /// `pinned` units held within `radius` of `point`.
    pub fn restricted(
        &self,
        pinned: &[bool],
        point: &[f64],
        radius: f64,
        probe: usize,
    ) -> Result<Answer> {
        let mut constraints: Vec<FeatureConstraint> = self
            .inst
            .input
            .iter()
            .map(|&v| FeatureConstraint::Fixed(v))
            .collect();
        for (u, features) in self.units.iter().enumerate() {
            if pinned[u] {
                for &f in features {
                    constraints[f] =
                        neighbourhood(self.net.input_space().domain(f), point[f], radius);
                }
            }
        }
        for &f in &self.units[probe] {
            constraints[f] = FeatureConstraint::Free;
        }
        self.run(constraints, QueryKind::Restricted)
    }

    fn run(&self, constraints: Vec<FeatureConstraint>, kind: QueryKind) -> Result<Answer> {
        let query = Query {
            constraints,
            excluded_class: self.inst.class,
        };
        if let Some(rng) = &self.jitter {
            let micros = rng.lock().gen_range(0..200);
            std::thread::sleep(Duration::from_micros(micros));
        }
        let start = Instant::now();
        let res = self.verifier.verify(self.net, &query);
        let secs = start.elapsed().as_secs_f64();
        let (answer, outcome) = match res {
            Ok(Verdict::Unsat) => (Answer::Unsat, Outcome::Unsat),
            Ok(Verdict::Sat { counterexample, .. }) => (Answer::Sat(counterexample), Outcome::Sat),
            Err(e) if e.is_budget() => (Answer::Unknown(e), Outcome::Unknown),
            Err(e) => return Err(e),
        };
        self.log.lock().push(QueryRecord {
            kind,
            outcome,
            secs,
        });
        Ok(answer)
    }

    pub fn stats(&self) -> QueryStats {
        QueryStats {
            records: self.log.lock().clone(),
        }
    }
}

fn neighbourhood(domain: &FeatureDomain, centre: f64, radius: f64) -> FeatureConstraint {
    if radius <= 0.0 {
        return FeatureConstraint::Fixed(centre);
    }
    let (lo, hi) = domain.hull();
    let (a, b) = ((centre - radius).max(lo), (centre + radius).min(hi));
    if a <= lo && b >= hi {
        FeatureConstraint::Free
    } else {
        FeatureConstraint::Box(a, b)
    }
}

/// Validates a list of units as a partition of `0..m` into non-empty parts.
pub(crate) fn check_units(units: &[Vec<usize>], m: usize) -> Result<()> {
    let mut owner = vec![None; m];
    let mut problems = Vec::new();
    for (u, features) in units.iter().enumerate() {
        if features.is_empty() {
            problems.push(format!("bundle {u} is empty"));
        }
        for &f in features {
            match owner.get(f) {
                None => problems.push(format!("feature {f} out of range in bundle {u}")),
                Some(Some(prev)) => {
                    problems.push(format!("feature {f} appears in bundles {prev} and {u}"))
                }
                Some(None) => owner[f] = Some(u),
            }
        }
    }
    let missing: Vec<usize> = (0..m).filter(|&f| owner[f].is_none()).collect();
    if !missing.is_empty() {
        problems.push(format!("features {missing:?} belong to no bundle"));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidPartition(problems.join("; ")))
    }
}
