//! Run configuration shared by the explanation subcommands.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Duration;

use abdux::bundles::{grid_bundles, load_bundles, BundlePartition};
use abdux::explain::{LbMode, LbSetting};
use abdux::relevance::{
    border_mask, load_ordering, mask_border, occlusion_scores, RelevanceOrdering,
};
use abdux::{ClassificationInstance, ExplainConfig, Network, UbVariant, VerifierConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exit::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "path")]
pub enum OrderingSource {
    /// Built-in occlusion relevance.
    Occlusion,
    /// Index order.
    Identity,
    /// Seeded shuffle.
    Random,
    /// JSON list of indices.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleSource {
    /// Row-major `width × height` image cut into `cell × cell` blocks.
    Grid {
        width: usize,
        height: usize,
        cell: usize,
    },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleOptions {
    pub source: BundleSource,
    /// Also compute the refined per-bundle feature bound.
    pub refined: bool,
}

impl BundleOptions {
    pub fn partition(&self, m: usize) -> CliResult<BundlePartition> {
        let p = match &self.source {
            BundleSource::Grid {
                width,
                height,
                cell,
            } => {
                if width * height != m {
                    return Err(CliError::invariant(format!(
                        "grid {width}x{height} does not match {m} features"
                    )));
                }
                grid_bundles(*width, *height, *cell)?
            }
            BundleSource::File(path) => load_bundles(path, m)?,
        };
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub variant: UbVariant,
    pub parallel: bool,
    /// Wall-clock budget for the whole run.
    pub budget_secs: Option<f64>,
    /// Per-query cap on search nodes.
    pub node_limit: u64,
    pub enumeration_cap: u64,
    pub lb: LbSetting,
    pub lb_mode: LbMode,
    pub exact_cap: usize,
    pub local_radius: f64,
    pub bundles: Option<BundleOptions>,
    pub ordering: OrderingSource,
    /// Image shape whose outer frame is moved to the end of the ordering.
    pub pin_border: Option<(usize, usize)>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let explain = ExplainConfig::default();
        Self {
            variant: explain.variant,
            parallel: true,
            budget_secs: None,
            node_limit: explain.verifier.node_limit,
            enumeration_cap: explain.verifier.enumeration_cap,
            lb: explain.lb,
            lb_mode: explain.lb_mode,
            exact_cap: explain.exact_cap,
            local_radius: explain.local_radius,
            bundles: None,
            ordering: OrderingSource::Occlusion,
            pin_border: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> CliResult<()> {
        if let Some(b) = self.budget_secs {
            if !(b.is_finite() && b > 0.0) {
                return Err(CliError::usage(format!("budget must be positive, got {b}")));
            }
        }
        if self.node_limit == 0 {
            return Err(CliError::usage("node limit must be positive"));
        }
        if !(self.local_radius.is_finite() && self.local_radius >= 0.0) {
            return Err(CliError::usage(format!(
                "local radius must be non-negative, got {}",
                self.local_radius
            )));
        }
        if let Some(BundleOptions {
            source: BundleSource::Grid { cell: 0, .. },
            ..
        }) = &self.bundles
        {
            return Err(CliError::usage("bundle cell size must be positive"));
        }
        Ok(())
    }

    pub fn explain_config(&self, ordering: RelevanceOrdering) -> ExplainConfig {
        ExplainConfig {
            variant: self.variant,
            lb: self.lb,
            lb_mode: self.lb_mode,
            exact_cap: self.exact_cap,
            parallel: self.parallel,
            local_radius: self.local_radius,
            ordering: Some(ordering),
            verifier: VerifierConfig {
                enumeration_cap: self.enumeration_cap,
                node_limit: self.node_limit,
                deadline: None,
            },
            budget: self.budget_secs.map(Duration::from_secs_f64),
            jitter: None,
        }
    }

    /// Ascending-relevance ordering over `units`, with border pinning
    /// applied. A unit is pinned when all of its features lie on the border.
    pub fn resolve_ordering(
        &self,
        net: &Network,
        inst: &ClassificationInstance,
        units: &[Vec<usize>],
    ) -> CliResult<RelevanceOrdering> {
        let n = units.len();
        let ordering = match &self.ordering {
            OrderingSource::Occlusion => occlusion_scores(net, inst).for_units(units),
            OrderingSource::Identity => RelevanceOrdering::identity(n),
            OrderingSource::Random => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
                RelevanceOrdering::new(order, n)?
            }
            OrderingSource::File(path) => load_ordering(path, n)?,
        };
        let Some((w, h)) = self.pin_border else {
            return Ok(ordering);
        };
        if w * h != inst.num_features() {
            return Err(CliError::invariant(format!(
                "border shape {w}x{h} does not match {} features",
                inst.num_features()
            )));
        }
        let border = border_mask(w, h);
        let pinned: BTreeSet<usize> = (0..n)
            .filter(|&u| units[u].iter().all(|f| border.contains(f)))
            .collect();
        Ok(mask_border(&ordering, &pinned))
    }
}
