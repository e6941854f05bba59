//! Persisted run reports.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use abdux::bundles::BundleExplanationResult;
use abdux::explain::{check_explanation, Outcome, QueryStats};
use abdux::{ClassificationInstance, ExplanationResult, Network};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::exit::{CliError, CliResult, Status};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ReportBody {
    Features(ExplanationResult),
    Bundles(BundleExplanationResult),
}

impl ReportBody {
    pub fn run(&self) -> &ExplanationResult {
        match self {
            ReportBody::Features(r) => r,
            ReportBody::Bundles(b) => &b.run,
        }
    }
}

/// Query totals of the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifierSummary {
    pub enumeration_cap: u64,
    pub node_limit: u64,
    pub queries: usize,
    pub sat: usize,
    pub unsat: usize,
    pub unknown: usize,
    pub query_secs: f64,
}

impl VerifierSummary {
    pub fn new(config: &RunConfig, stats: &QueryStats) -> Self {
        Self {
            enumeration_cap: config.enumeration_cap,
            node_limit: config.node_limit,
            queries: stats.total(),
            sat: stats.count(None, Some(Outcome::Sat)),
            unsat: stats.count(None, Some(Outcome::Unsat)),
            unknown: stats.unknowns(),
            query_secs: stats.total_secs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    /// Some verdict was Unknown: the explanation is sound, minimality and
    /// the lower bound's completeness are not established.
    Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    /// Outputs are raw logits of the final affine layer.
    pub classifier: String,
    pub network: PathBuf,
    pub instance: PathBuf,
    pub input: Vec<f64>,
    pub class: usize,
    pub status: RunStatus,
    /// Features fixed by the explanation.
    pub explanation: BTreeSet<usize>,
    pub ub: usize,
    pub lb: usize,
    pub possibly_non_minimal: bool,
    pub config: RunConfig,
    pub verifier: VerifierSummary,
    pub progress: Option<PathBuf>,
    pub result: ReportBody,
}

impl Report {
    pub fn exit_status(&self) -> Status {
        match self.status {
            RunStatus::Complete => Status::Success,
            RunStatus::Budget => Status::Budget,
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json_str(text: &str) -> CliResult<Self> {
        serde_json::from_str(text)
            .map_err(|e| CliError::new(Status::Parse, format!("failed to parse report: {e}")))
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_json_string() + "\n")
            .map_err(|e| CliError::usage(format!("failed to write {}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("failed to read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Reloads the network and instance named in the report and checks
    /// that the stated explanation still forces the stated class.
    pub fn revalidate(&self) -> CliResult<()> {
        let net = Network::load(&self.network)?;
        let inst = ClassificationInstance::load(&self.instance, &net)?;
        self.revalidate_against(&net, &inst)
    }

    pub fn revalidate_against(
        &self,
        net: &Network,
        inst: &ClassificationInstance,
    ) -> CliResult<()> {
        if inst.input != self.input || inst.class != self.class {
            return Err(CliError::invariant(
                "report does not match its instance file",
            ));
        }
        if self.explanation != self.result.run().explanation {
            return Err(CliError::invariant(
                "report explanation disagrees with its result",
            ));
        }
        if self.lb > self.ub {
            return Err(CliError::invariant(format!(
                "lower bound {} exceeds upper bound {}",
                self.lb, self.ub
            )));
        }
        if !check_explanation(net, inst, &self.explanation)? {
            return Err(CliError::invariant(
                "stated explanation does not force the class",
            ));
        }
        Ok(())
    }
}
