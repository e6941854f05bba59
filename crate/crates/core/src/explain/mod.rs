//! Minimal explanations with anytime upper and lower bounds.
//!
//! The upper-bounding worker shrinks the full feature set to a minimal
//! explanation; the lower-bounding worker collects contrastive singletons
//! and pairs, whose hitting-set bound limits how small any explanation can
//! be. Both work over *units*: single features by default, or bundles of
//! features (see [`crate::bundles`]).
//!
//! ```
//! use abdux::explain::{ExplainConfig, Explainer};
//! use abdux::fixtures;
//!
//! let (net, inst) = fixtures::triangle();
//! let result = Explainer::new(&net, &inst)
//!     .orchestrate(&ExplainConfig::default())
//!     .unwrap();
//! assert_eq!((result.ub, result.lb), (2, 2));
//! assert_eq!(result.ratio, 1.0);
//! ```

mod lb;
mod oracle;
mod state;
mod ub;

use std::collections::BTreeSet;
use std::io::Write;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use lb::{lower_bound, LbSetting};
pub use oracle::{Outcome, QueryKind, QueryRecord, QueryStats};
pub use state::{Event, LbMode, SharedState, Snapshot};

pub(crate) use oracle::check_units;
use oracle::{Oracle, QueryKind as Kind};
use ub::UbRun;

use crate::duality::DEFAULT_EXACT_CAP;
use crate::error::Result;
use crate::nn::{ClassificationInstance, Network};
use crate::relevance::{occlusion_scores, RelevanceOrdering};
use crate::verifier::{Verifier, VerifierConfig};

/// Which upper-bounding strategy runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UbVariant {
    #[default]
    Sequential,
    LbInfo,
    Binary,
    LocalSingleton,
}

impl UbVariant {
    pub const ALL: [UbVariant; 4] = [
        UbVariant::Sequential,
        UbVariant::LbInfo,
        UbVariant::Binary,
        UbVariant::LocalSingleton,
    ];
}

impl std::fmt::Display for UbVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            UbVariant::Sequential => "sequential",
            UbVariant::LbInfo => "lb_info",
            UbVariant::Binary => "binary",
            UbVariant::LocalSingleton => "local_singleton",
        })
    }
}

impl std::str::FromStr for UbVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        UbVariant::ALL
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainConfig {
    pub variant: UbVariant,
    pub lb: LbSetting,
    pub lb_mode: LbMode,
    pub exact_cap: usize,
    /// Run both workers on separate threads, sharing findings as they
    /// appear. Otherwise the lower bound runs to completion first.
    pub parallel: bool,
    /// Half-width of the neighbourhood used by local-singleton probes.
    pub local_radius: f64,
    /// Ascending-relevance ordering over units; occlusion scores if absent.
    pub ordering: Option<RelevanceOrdering>,
    pub verifier: VerifierConfig,
    /// Wall-clock budget for the whole run.
    pub budget: Option<Duration>,
    /// Random sleeps before each query (stress testing only).
    #[doc(hidden)]
    pub jitter: Option<u64>,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            variant: UbVariant::default(),
            lb: LbSetting::default(),
            lb_mode: LbMode::default(),
            exact_cap: DEFAULT_EXACT_CAP,
            parallel: false,
            local_radius: 0.0,
            ordering: None,
            verifier: VerifierConfig::default(),
            budget: None,
            jitter: None,
        }
    }
}

/// Outcome of an explanation run. Unit indices coincide with feature
/// indices unless the explainer was built over bundles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationResult {
    /// Features fixed by the explanation.
    pub explanation: BTreeSet<usize>,
    /// Units kept in the explanation.
    pub units: BTreeSet<usize>,
    pub ub: usize,
    pub lb: usize,
    /// `ub / lb`; infinite (`null` in JSON) while `lb = 0`.
    #[serde(with = "ratio_serde")]
    pub ratio: f64,
    pub variant: UbVariant,
    /// Some unit was kept on an Unknown verdict, so minimality is unproven.
    pub possibly_non_minimal: bool,
    /// Every singleton and pair query received a definite verdict.
    pub lb_complete: bool,
    /// Result of re-checking the explanation after the run; `None` when the
    /// budget left no room for the check.
    pub verified: Option<bool>,
    pub singletons: BTreeSet<usize>,
    pub pairs: BTreeSet<(usize, usize)>,
    pub stats: QueryStats,
    pub snapshots: Vec<Snapshot>,
    pub elapsed_secs: f64,
}

/// `ub / lb`, infinite when `lb = 0`.
pub fn ratio(ub: usize, lb: usize) -> f64 {
    if lb == 0 {
        f64::INFINITY
    } else {
        ub as f64 / lb as f64
    }
}

pub(crate) mod ratio_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &f64, s: S) -> Result<S::Ok, S::Error> {
        if r.is_finite() {
            s.serialize_f64(*r)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Explanation machinery for one classification instance.
#[derive(Debug, Clone)]
pub struct Explainer<'a> {
    net: &'a Network,
    inst: &'a ClassificationInstance,
    units: Vec<Vec<usize>>,
    verifier: Verifier,
}

impl<'a> Explainer<'a> {
    /// Explainer whose units are the individual features.
    pub fn new(net: &'a Network, inst: &'a ClassificationInstance) -> Self {
        Self {
            net,
            inst,
            units: (0..inst.num_features()).map(|f| vec![f]).collect(),
            verifier: Verifier::default(),
        }
    }

    /// Explainer over a partition of the features into units.
    pub fn with_units(
        net: &'a Network,
        inst: &'a ClassificationInstance,
        units: Vec<Vec<usize>>,
    ) -> Result<Self> {
        check_units(&units, inst.num_features())?;
        Ok(Self {
            net,
            inst,
            units,
            verifier: Verifier::default(),
        })
    }

    pub fn with_verifier(mut self, verifier: Verifier) -> Self {
        self.verifier = verifier;
        self
    }

    pub fn network(&self) -> &'a Network {
        self.net
    }

    pub fn instance(&self) -> &'a ClassificationInstance {
        self.inst
    }

    pub fn units(&self) -> &[Vec<usize>] {
        &self.units
    }

    pub fn num_units(&self) -> usize {
        self.units.len()
    }

    fn oracle(&self) -> Oracle<'_> {
        Oracle::new(self.net, self.inst, &self.units, self.verifier)
    }

    /// Features covered by a set of units.
    pub fn flatten(&self, units: &BTreeSet<usize>) -> BTreeSet<usize> {
        units
            .iter()
            .flat_map(|&u| self.units[u].iter().copied())
            .collect()
    }

    /// True iff fixing `features` to the instance forces its class.
    pub fn check_explanation(&self, features: &BTreeSet<usize>) -> Result<bool> {
        check_explanation_with(self.net, self.inst, features, self.verifier)
    }

    /// True iff `features` is an explanation and no single feature can be
    /// dropped from it.
    pub fn check_minimal(&self, features: &BTreeSet<usize>) -> Result<bool> {
        if !self.check_explanation(features)? {
            return Ok(false);
        }
        for &f in features {
            let mut smaller = features.clone();
            smaller.remove(&f);
            if self.check_explanation(&smaller)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// [`Explainer::check_explanation`] for a set of units.
    pub fn check_unit_explanation(&self, units: &BTreeSet<usize>) -> Result<bool> {
        self.check_explanation(&self.flatten(units))
    }

    /// [`Explainer::check_minimal`] with units as the atoms.
    pub fn check_unit_minimal(&self, units: &BTreeSet<usize>) -> Result<bool> {
        if !self.check_unit_explanation(units)? {
            return Ok(false);
        }
        for &u in units {
            let mut smaller = units.clone();
            smaller.remove(&u);
            if self.check_unit_explanation(&smaller)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Units whose lone alteration can change the class.
    pub fn find_singletons(&self) -> Result<BTreeSet<usize>> {
        let oracle = self.oracle();
        let mut flags = vec![false; self.num_units()];
        let mut found = BTreeSet::new();
        for u in 0..self.num_units() {
            flags[u] = true;
            if oracle.free_units(&flags, Kind::Singleton)?.decided()? {
                found.insert(u);
            }
            flags[u] = false;
        }
        Ok(found)
    }

    /// Pairs of non-singleton units whose joint alteration can change the
    /// class.
    pub fn find_pairs(&self, singletons: &BTreeSet<usize>) -> Result<BTreeSet<(usize, usize)>> {
        let oracle = self.oracle();
        let rest: Vec<usize> = (0..self.num_units())
            .filter(|u| !singletons.contains(u))
            .collect();
        let mut flags = vec![false; self.num_units()];
        let mut found = BTreeSet::new();
        for (i, &a) in rest.iter().enumerate() {
            for &b in &rest[i + 1..] {
                flags[a] = true;
                flags[b] = true;
                if oracle.free_units(&flags, Kind::Pair)?.decided()? {
                    found.insert((a, b));
                }
                flags[a] = false;
                flags[b] = false;
            }
        }
        Ok(found)
    }

    /// Plain sequential shrinking in the given order.
    pub fn ub_sequential(&self, ordering: &[usize]) -> Result<ExplanationResult> {
        self.ub_alone(UbVariant::Sequential, ordering, 0.0)
    }

    /// Sequential shrinking that skips units `shared` already proves
    /// essential. `shared` may be growing concurrently.
    pub fn ub_with_lb_info(
        &self,
        ordering: &[usize],
        shared: &SharedState,
    ) -> Result<ExplanationResult> {
        let oracle = self.oracle();
        let started = Instant::now();
        self.run_ub(&oracle, shared, UbVariant::LbInfo, ordering, 0.0, true)
            .map(|run| self.finish(run, &oracle, shared, UbVariant::LbInfo, false, started))
    }

    /// Frees whole blocks of units at once via repeated binary searches.
    pub fn ub_binary_search(&self, ordering: &[usize]) -> Result<ExplanationResult> {
        self.ub_alone(UbVariant::Binary, ordering, 0.0)
    }

    /// Marks units essential through cheap probes around counterexamples.
    pub fn ub_local_singleton(&self, ordering: &[usize], radius: f64) -> Result<ExplanationResult> {
        self.ub_alone(UbVariant::LocalSingleton, ordering, radius)
    }

    fn ub_alone(
        &self,
        variant: UbVariant,
        ordering: &[usize],
        radius: f64,
    ) -> Result<ExplanationResult> {
        let oracle = self.oracle();
        let state = SharedState::new(self.num_units());
        let started = Instant::now();
        let run = self.run_ub(&oracle, &state, variant, ordering, radius, false)?;
        Ok(self.finish(run, &oracle, &state, variant, false, started))
    }

    fn run_ub<'s, 'o>(
        &self,
        oracle: &'s Oracle<'o>,
        state: &'s SharedState,
        variant: UbVariant,
        ordering: &[usize],
        radius: f64,
        use_lb_info: bool,
    ) -> Result<UbRun<'s, 'o>> {
        RelevanceOrdering::new(ordering.to_vec(), self.num_units())?;
        let mut run = UbRun::new(oracle, state, use_lb_info || variant == UbVariant::LbInfo);
        match variant {
            UbVariant::Sequential | UbVariant::LbInfo => run.sequential(ordering)?,
            UbVariant::Binary => run.binary_search(ordering)?,
            UbVariant::LocalSingleton => run.local_singleton(ordering, radius)?,
        }
        Ok(run)
    }

    fn finish(
        &self,
        run: UbRun<'_, '_>,
        oracle: &Oracle<'_>,
        state: &SharedState,
        variant: UbVariant,
        lb_complete: bool,
        started: Instant,
    ) -> ExplanationResult {
        let units: BTreeSet<usize> = (0..self.num_units()).filter(|&u| !run.free[u]).collect();
        debug_assert!(units.iter().all(|&u| run.kept[u]));
        let explanation = self.flatten(&units);
        let verified =
            check_explanation_with(self.net, self.inst, &explanation, oracle.verifier).ok();
        debug_assert_ne!(
            verified,
            Some(false),
            "final explanation failed its re-check"
        );
        let ub = units.len();
        let lb = state.lb();
        ExplanationResult {
            explanation,
            units,
            ub,
            lb,
            ratio: ratio(ub, lb),
            variant,
            possibly_non_minimal: run.unproven,
            lb_complete,
            verified,
            singletons: state.singletons(),
            pairs: state.pairs().edges().clone(),
            stats: oracle.stats(),
            snapshots: state.snapshots(),
            elapsed_secs: started.elapsed().as_secs_f64(),
        }
    }

    /// Runs both workers per `config` and returns the explanation with its
    /// bounds.
    pub fn orchestrate(&self, config: &ExplainConfig) -> Result<ExplanationResult> {
        self.orchestrate_with_progress(config, None)
    }

    /// As [`Explainer::orchestrate`], streaming every state change to
    /// `sink` as a JSON line.
    pub fn orchestrate_with_progress(
        &self,
        config: &ExplainConfig,
        sink: Option<Box<dyn Write + Send>>,
    ) -> Result<ExplanationResult> {
        let started = Instant::now();
        let ordering = match &config.ordering {
            Some(o) => {
                o.validate(self.num_units())?;
                o.order.clone()
            }
            None => {
                occlusion_scores(self.net, self.inst)
                    .for_units(&self.units)
                    .order
            }
        };
        let (oracle, state) = self.prepare(config, sink, started);
        let (run, lb_complete) = if config.parallel {
            std::thread::scope(|scope| {
                let lb_worker = scope.spawn(|| lb::run(&oracle, &state, config.lb));
                let run = self.run_ub(
                    &oracle,
                    &state,
                    config.variant,
                    &ordering,
                    config.local_radius,
                    true,
                );
                let lb = lb_worker.join().expect("lower-bound worker panicked");
                Ok::<_, crate::error::Error>((run?, lb?))
            })?
        } else {
            let complete = lb::run(&oracle, &state, config.lb)?;
            let run = self.run_ub(
                &oracle,
                &state,
                config.variant,
                &ordering,
                config.local_radius,
                false,
            )?;
            (run, complete)
        };
        Ok(self.finish(run, &oracle, &state, config.variant, lb_complete, started))
    }
}

impl Explainer<'_> {
    fn prepare(
        &self,
        config: &ExplainConfig,
        sink: Option<Box<dyn Write + Send>>,
        started: Instant,
    ) -> (Oracle<'_>, SharedState) {
        let mut vcfg = config.verifier;
        if let Some(budget) = config.budget {
            let deadline = started + budget;
            vcfg.deadline = Some(vcfg.deadline.map_or(deadline, |d| d.min(deadline)));
        }
        let oracle = Oracle::new(self.net, self.inst, &self.units, Verifier::new(vcfg))
            .with_jitter(config.jitter);
        let state =
            SharedState::with_options(self.num_units(), config.lb_mode, config.exact_cap, sink);
        (oracle, state)
    }

    /// Runs only the lower-bounding worker (`config.lb`, `lb_mode`,
    /// `exact_cap`, `verifier` and `budget` apply).
    pub fn lower_bound_only(&self, config: &ExplainConfig) -> Result<LowerBoundResult> {
        let started = Instant::now();
        let (oracle, state) = self.prepare(config, None, started);
        let complete = lb::run(&oracle, &state, config.lb)?;
        Ok(LowerBoundResult {
            lb: state.lb(),
            complete,
            singletons: state.singletons(),
            pairs: state.pairs().edges().clone(),
            stats: oracle.stats(),
            elapsed_secs: started.elapsed().as_secs_f64(),
        })
    }
}

/// Outcome of a lower-bound-only run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundResult {
    pub lb: usize,
    /// Every query received a definite verdict.
    pub complete: bool,
    pub singletons: BTreeSet<usize>,
    pub pairs: BTreeSet<(usize, usize)>,
    pub stats: QueryStats,
    pub elapsed_secs: f64,
}

fn check_explanation_with(
    net: &Network,
    inst: &ClassificationInstance,
    features: &BTreeSet<usize>,
    verifier: Verifier,
) -> Result<bool> {
    let kept: Vec<bool> = (0..inst.num_features())
        .map(|f| features.contains(&f))
        .collect();
    let query = crate::verifier::Query::with_kept(&inst.input, &kept, inst.class);
    Ok(!verifier.verify(net, &query)?.is_sat())
}

/// True iff fixing `features` to the instance forces its class.
pub fn check_explanation(
    net: &Network,
    inst: &ClassificationInstance,
    features: &BTreeSet<usize>,
) -> Result<bool> {
    Explainer::new(net, inst).check_explanation(features)
}

/// True iff `features` is an explanation from which no feature can be dropped.
pub fn check_minimal(
    net: &Network,
    inst: &ClassificationInstance,
    features: &BTreeSet<usize>,
) -> Result<bool> {
    Explainer::new(net, inst).check_minimal(features)
}

pub fn find_singletons(net: &Network, inst: &ClassificationInstance) -> Result<BTreeSet<usize>> {
    Explainer::new(net, inst).find_singletons()
}

pub fn find_pairs(
    net: &Network,
    inst: &ClassificationInstance,
    singletons: &BTreeSet<usize>,
) -> Result<BTreeSet<(usize, usize)>> {
    Explainer::new(net, inst).find_pairs(singletons)
}

pub fn orchestrate(
    net: &Network,
    inst: &ClassificationInstance,
    config: &ExplainConfig,
) -> Result<ExplanationResult> {
    Explainer::new(net, inst).orchestrate(config)
}
