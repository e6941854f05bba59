//! Explanations over bundles: disjoint groups of features that are fixed or
//! freed together.
//!
//! A bundle explanation flattens to an ordinary explanation, usually a
//! larger one, but needs far fewer verifier calls. Lower bounds come in two
//! flavours: one on the cheapest bundle explanation, measured in features,
//! and one on the ordinary minimum explanation.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::duality::{self, PairGraph};
use crate::error::{Error, Result};
use crate::explain::{
    check_units, lower_bound, ratio, ratio_serde, ExplainConfig, Explainer, ExplanationResult,
    LbMode, UbVariant,
};
use crate::nn::{ClassificationInstance, Network};
use crate::verifier::{FeatureConstraint, Verifier};

/// Disjoint non-empty feature groups covering every feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BundlePartition {
    bundles: Vec<Vec<usize>>,
}

impl BundlePartition {
    pub fn new(bundles: Vec<Vec<usize>>, m: usize) -> Result<Self> {
        check_units(&bundles, m)?;
        Ok(Self { bundles })
    }

    /// One bundle per feature.
    pub fn singletons(m: usize) -> Self {
        Self {
            bundles: (0..m).map(|f| vec![f]).collect(),
        }
    }

    pub fn bundles(&self) -> &[Vec<usize>] {
        &self.bundles
    }

    pub fn len(&self) -> usize {
        self.bundles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bundles.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.bundles.iter().map(Vec::len).sum()
    }

    /// Feature count of bundle `b`.
    pub fn weight(&self, b: usize) -> usize {
        self.bundles[b].len()
    }

    /// Index of the bundle holding each feature.
    pub fn owners(&self) -> Vec<usize> {
        let mut owner = vec![0; self.num_features()];
        for (b, fs) in self.bundles.iter().enumerate() {
            for &f in fs {
                owner[f] = b;
            }
        }
        owner
    }

    pub fn from_json_str(text: &str, m: usize) -> Result<Self> {
        let bundles: Vec<Vec<usize>> =
            serde_json::from_str(text).map_err(|e| Error::parse("bundle JSON", e))?;
        Self::new(bundles, m)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.bundles).expect("partition serializes")
    }
}

/// Square `cell × cell` blocks over a row-major `width × height` image,
/// truncated at the right and bottom edges. Blocks are numbered row-major.
pub fn grid_bundles(width: usize, height: usize, cell: usize) -> Result<BundlePartition> {
    if width == 0 || height == 0 || cell == 0 {
        return Err(Error::InvalidPartition(format!(
            "grid {width}x{height} with cell {cell} is empty"
        )));
    }
    let cols = width.div_ceil(cell);
    let rows = height.div_ceil(cell);
    let mut bundles = vec![Vec::new(); rows * cols];
    for p in 0..width * height {
        let (r, c) = (p / width, p % width);
        bundles[(r / cell) * cols + c / cell].push(p);
    }
    BundlePartition::new(bundles, width * height)
}

/// Reads a JSON list of feature-index lists and checks it partitions `0..m`.
pub fn load_bundles(path: impl AsRef<Path>, m: usize) -> Result<BundlePartition> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    BundlePartition::from_json_str(&text, m)
}

/// Union of the features of the given bundles.
pub fn flatten(partition: &BundlePartition, bundle_set: &BTreeSet<usize>) -> BTreeSet<usize> {
    bundle_set
        .iter()
        .flat_map(|&b| partition.bundles[b].iter().copied())
        .collect()
}

/// Contrastive bundle singletons, and contrastive bundle pairs avoiding
/// them.
pub fn bundle_singletons_pairs(
    net: &Network,
    inst: &ClassificationInstance,
    partition: &BundlePartition,
) -> Result<(BTreeSet<usize>, BTreeSet<(usize, usize)>)> {
    let ex = Explainer::with_units(net, inst, partition.bundles.clone())?;
    let singletons = ex.find_singletons()?;
    let pairs = ex.find_pairs(&singletons)?;
    Ok((singletons, pairs))
}

/// Lower bound on the feature cost of the cheapest bundle explanation:
/// every singleton bundle in full, plus a minimum weighted cover of the
/// bundle pairs with bundle sizes as weights. Falls back to half the
/// local-ratio cover cost when the exact cover is out of reach.
pub fn bundle_lb_method1(
    partition: &BundlePartition,
    singletons: &BTreeSet<usize>,
    pairs: &BTreeSet<(usize, usize)>,
    mode: LbMode,
    exact_cap: usize,
) -> usize {
    let fixed: usize = singletons.iter().map(|&b| partition.weight(b)).sum();
    let mut graph = PairGraph::from_edges(pairs.iter().copied());
    for v in graph.vertices().clone() {
        graph.set_weight(v, partition.weight(v) as u64);
    }
    let cover_bound = match (mode, duality::mwvc_exact(&graph, exact_cap)) {
        (LbMode::Exact, Ok(cover)) => graph.cost(&cover),
        _ => graph.cost(&duality::mwvc_greedy(&graph)).div_ceil(2),
    };
    fixed + cover_bound as usize
}

/// Lower bound on the ordinary minimum explanation: each singleton bundle
/// holds at least one essential feature, and the bundle pairs need at least
/// a vertex cover's worth of bundles.
pub fn bundle_lb_method2(
    singletons: &BTreeSet<usize>,
    pairs: &BTreeSet<(usize, usize)>,
    mode: LbMode,
    exact_cap: usize,
) -> usize {
    lower_bound(singletons, pairs, mode, exact_cap)
}

/// Sharper lower bound on the ordinary minimum explanation. Each singleton
/// bundle contributes the feature-level bound of the contrastive sets lying
/// inside it (at least 1), and the bundles touched by pairs contribute the
/// larger of the bundle cover size and the feature-level bound over their
/// union. Never below [`bundle_lb_method2`].
pub fn bundle_lb_refined(
    net: &Network,
    inst: &ClassificationInstance,
    partition: &BundlePartition,
    singletons: &BTreeSet<usize>,
    pairs: &BTreeSet<(usize, usize)>,
    mode: LbMode,
    exact_cap: usize,
) -> Result<usize> {
    let verifier = Verifier::default();
    let mut total = 0;
    for &b in singletons {
        total +=
            feature_lb_within(net, inst, &partition.bundles[b], verifier, mode, exact_cap)?.max(1);
    }
    let touched: BTreeSet<usize> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    let union: Vec<usize> = flatten(partition, &touched).into_iter().collect();
    let inner = feature_lb_within(net, inst, &union, verifier, mode, exact_cap)?;
    let bundle_cover = lower_bound(&BTreeSet::new(), pairs, mode, exact_cap);
    Ok(total + inner.max(bundle_cover))
}

/// Feature-level singleton and pair bound restricted to contrastive sets
/// inside `features`.
fn feature_lb_within(
    net: &Network,
    inst: &ClassificationInstance,
    features: &[usize],
    verifier: Verifier,
    mode: LbMode,
    exact_cap: usize,
) -> Result<usize> {
    let flips = |fs: &[usize]| -> Result<bool> {
        let flips: Vec<(usize, FeatureConstraint)> =
            fs.iter().map(|&f| (f, FeatureConstraint::Free)).collect();
        Ok(verifier
            .verify_fixed_except(net, &inst.input, &flips, inst.class)?
            .is_sat())
    };
    let mut singletons = BTreeSet::new();
    for &f in features {
        if flips(&[f])? {
            singletons.insert(f);
        }
    }
    let rest: Vec<usize> = features
        .iter()
        .copied()
        .filter(|f| !singletons.contains(f))
        .collect();
    let mut pairs = BTreeSet::new();
    for (i, &a) in rest.iter().enumerate() {
        for &b in &rest[i + 1..] {
            if flips(&[a, b])? {
                pairs.insert((a.min(b), a.max(b)));
            }
        }
    }
    Ok(lower_bound(&singletons, &pairs, mode, exact_cap))
}

/// Bundle-level explanation with bounds in both flavours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleExplanationResult {
    /// Kept bundles.
    pub bundle_explanation: BTreeSet<usize>,
    /// Features of the kept bundles.
    pub flattened: BTreeSet<usize>,
    /// Bounds on the smallest bundle explanation, counted in bundles.
    pub ub_bundles: usize,
    pub lb_bundles: usize,
    /// Bounds on the ordinary minimum explanation, counted in features.
    pub ub_features: usize,
    pub lb_features: usize,
    #[serde(with = "ratio_serde")]
    pub ratio_bundles: f64,
    #[serde(with = "ratio_serde")]
    pub ratio_features: f64,
    /// Lower bound on the feature cost of the cheapest bundle explanation.
    pub lb_method1: usize,
    pub lb_method2: usize,
    pub lb_refined: Option<usize>,
    /// The underlying run with bundles as units.
    pub run: ExplanationResult,
}

/// Runs the selected upper-bounding strategy with bundles as units.
/// Lower-bound fields stay 0.
pub fn bundle_ub(
    net: &Network,
    inst: &ClassificationInstance,
    partition: &BundlePartition,
    ordering: &[usize],
    variant: UbVariant,
) -> Result<BundleExplanationResult> {
    let ex = Explainer::with_units(net, inst, partition.bundles.clone())?;
    let run = match variant {
        UbVariant::Sequential => ex.ub_sequential(ordering)?,
        UbVariant::LbInfo => {
            ex.ub_with_lb_info(ordering, &crate::explain::SharedState::new(partition.len()))?
        }
        UbVariant::Binary => ex.ub_binary_search(ordering)?,
        UbVariant::LocalSingleton => ex.ub_local_singleton(ordering, 0.0)?,
    };
    Ok(assemble(run, 0, 0, None))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BundleConfig {
    /// Ordering in `explain` ranges over bundles.
    pub explain: ExplainConfig,
    /// Also compute the refined feature-level bound (extra queries).
    pub refined: bool,
}

/// Full bundle run: both workers over bundles, then all three bounds.
pub fn bundle_explain(
    net: &Network,
    inst: &ClassificationInstance,
    partition: &BundlePartition,
    config: &BundleConfig,
) -> Result<BundleExplanationResult> {
    bundle_explain_with_progress(net, inst, partition, config, None)
}

pub fn bundle_explain_with_progress(
    net: &Network,
    inst: &ClassificationInstance,
    partition: &BundlePartition,
    config: &BundleConfig,
    sink: Option<Box<dyn std::io::Write + Send>>,
) -> Result<BundleExplanationResult> {
    let ex = Explainer::with_units(net, inst, partition.bundles.clone())?;
    let run = ex.orchestrate_with_progress(&config.explain, sink)?;
    let cfg = &config.explain;
    let method1 = bundle_lb_method1(
        partition,
        &run.singletons,
        &run.pairs,
        cfg.lb_mode,
        cfg.exact_cap,
    );
    let refined = if config.refined {
        Some(bundle_lb_refined(
            net,
            inst,
            partition,
            &run.singletons,
            &run.pairs,
            cfg.lb_mode,
            cfg.exact_cap,
        )?)
    } else {
        None
    };
    let method2 = run.lb;
    Ok(assemble(run, method1, method2, refined))
}

fn assemble(
    run: ExplanationResult,
    method1: usize,
    method2: usize,
    refined: Option<usize>,
) -> BundleExplanationResult {
    let ub_bundles = run.units.len();
    let ub_features = run.explanation.len();
    let lb_features = refined.unwrap_or(method2).max(method2);
    BundleExplanationResult {
        bundle_explanation: run.units.clone(),
        flattened: run.explanation.clone(),
        ub_bundles,
        lb_bundles: method2,
        ub_features,
        lb_features,
        ratio_bundles: ratio(ub_bundles, method2),
        ratio_features: ratio(ub_features, lb_features),
        lb_method1: method1,
        lb_method2: method2,
        lb_refined: refined,
        run,
    }
}
