//! Subcommand implementations, independent of argument parsing.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{LineWriter, Write};
use std::path::{Path, PathBuf};

use abdux::bundles::{bundle_explain_with_progress, BundleConfig, BundlePartition};
use abdux::fixtures::{self, NetSpec};
use abdux::{
    ClassificationInstance, Explainer, LowerBoundResult, Network, Query, Verdict, Verifier,
    VerifierConfig,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::exit::{CliError, CliResult};
use crate::render::{render_mask, Mask};
use crate::report::{Report, ReportBody, RunStatus, VerifierSummary};

fn load(network: &Path, instance: &Path) -> CliResult<(Network, ClassificationInstance)> {
    let net = Network::load(network)?;
    let inst = ClassificationInstance::load(instance, &net)?;
    Ok((net, inst))
}

fn progress_sink(path: Option<&Path>) -> CliResult<Option<Box<dyn Write + Send>>> {
    match path {
        None => Ok(None),
        Some(p) => {
            let file = File::create(p)
                .map_err(|e| CliError::usage(format!("failed to create {}: {e}", p.display())))?;
            Ok(Some(Box::new(LineWriter::new(file))))
        }
    }
}

fn units_of(config: &RunConfig, m: usize) -> CliResult<Option<BundlePartition>> {
    config.bundles.as_ref().map(|b| b.partition(m)).transpose()
}

/// Explains `instance`, over bundles when `config.bundles` is set. The
/// report is re-checked against the loaded network before it is returned.
pub fn cmd_explain(
    network: &Path,
    instance: &Path,
    config: &RunConfig,
    progress: Option<&Path>,
) -> CliResult<Report> {
    config.validate()?;
    let (net, inst) = load(network, instance)?;
    let m = inst.num_features();
    let sink = progress_sink(progress)?;
    let (command, body) = match units_of(config, m)? {
        None => {
            let units: Vec<Vec<usize>> = (0..m).map(|f| vec![f]).collect();
            let ordering = config.resolve_ordering(&net, &inst, &units)?;
            let result = Explainer::new(&net, &inst)
                .orchestrate_with_progress(&config.explain_config(ordering), sink)?;
            ("explain", ReportBody::Features(result))
        }
        Some(partition) => {
            let ordering = config.resolve_ordering(&net, &inst, partition.bundles())?;
            let bundle_config = BundleConfig {
                explain: config.explain_config(ordering),
                refined: config.bundles.as_ref().is_some_and(|b| b.refined),
            };
            let result =
                bundle_explain_with_progress(&net, &inst, &partition, &bundle_config, sink)?;
            ("bundle-explain", ReportBody::Bundles(result))
        }
    };
    let run = body.run();
    if run.verified == Some(false) {
        return Err(CliError::invariant("explanation failed its post-run check"));
    }
    let (ub, lb) = match &body {
        ReportBody::Features(r) => (r.ub, r.lb),
        ReportBody::Bundles(b) => (b.ub_features, b.lb_features),
    };
    let status = if run.stats.unknowns() > 0 {
        RunStatus::Budget
    } else {
        RunStatus::Complete
    };
    let report = Report {
        command: command.into(),
        classifier: "logit".into(),
        network: network.to_path_buf(),
        instance: instance.to_path_buf(),
        input: inst.input.clone(),
        class: inst.class,
        status,
        explanation: run.explanation.clone(),
        ub,
        lb,
        possibly_non_minimal: run.possibly_non_minimal,
        config: config.clone(),
        verifier: VerifierSummary::new(config, &run.stats),
        progress: progress.map(Path::to_path_buf),
        result: body,
    };
    report.revalidate_against(&net, &inst)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum VerifyOutput {
    Unsat,
    Sat {
        counterexample: Vec<f64>,
        winning_class: usize,
    },
}

impl std::fmt::Display for VerifyOutput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VerifyOutput::Unsat => write!(f, "UNSAT"),
            VerifyOutput::Sat {
                counterexample,
                winning_class,
            } => write!(f, "SAT class {winning_class} at {counterexample:?}"),
        }
    }
}

pub fn cmd_verify(network: &Path, query: &Path, config: VerifierConfig) -> CliResult<VerifyOutput> {
    let net = Network::load(network)?;
    let text = std::fs::read_to_string(query)
        .map_err(|e| CliError::usage(format!("failed to read {}: {e}", query.display())))?;
    let query = Query::from_json_str(&text)?;
    Ok(match Verifier::new(config).verify(&net, &query)? {
        Verdict::Unsat => VerifyOutput::Unsat,
        Verdict::Sat {
            counterexample,
            winning_class,
        } => VerifyOutput::Sat {
            counterexample,
            winning_class,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub network: PathBuf,
    pub instance: PathBuf,
    /// Units are bundles when set.
    pub bundles: Option<Vec<Vec<usize>>>,
    pub result: LowerBoundResult,
}

/// Runs only the lower-bounding worker, over bundles when configured.
pub fn cmd_lower_bound(
    network: &Path,
    instance: &Path,
    config: &RunConfig,
) -> CliResult<LowerBoundReport> {
    config.validate()?;
    let (net, inst) = load(network, instance)?;
    let m = inst.num_features();
    let explain = config.explain_config(abdux::relevance::RelevanceOrdering::identity(m));
    let partition = units_of(config, m)?;
    let explainer = match &partition {
        None => Explainer::new(&net, &inst),
        Some(p) => Explainer::with_units(&net, &inst, p.bundles().to_vec())?,
    };
    Ok(LowerBoundReport {
        network: network.to_path_buf(),
        instance: instance.to_path_buf(),
        bundles: partition.map(|p| p.bundles().to_vec()),
        result: explainer.lower_bound_only(&explain)?,
    })
}

/// Where the features to render come from.
pub enum RenderSource<'a> {
    Report(&'a Path),
    Features(BTreeSet<usize>),
}

pub fn cmd_render(
    network: &Path,
    instance: &Path,
    source: RenderSource<'_>,
    width: usize,
    height: usize,
) -> CliResult<Mask> {
    let (net, inst) = load(network, instance)?;
    let explanation = match source {
        RenderSource::Report(path) => {
            let report = Report::load(path)?;
            if report.input != inst.input {
                return Err(CliError::invariant("report was produced for another input"));
            }
            report.explanation
        }
        RenderSource::Features(f) => f,
    };
    render_mask(net.input_space(), &inst, &explanation, width, height)
}

/// Fixtures `gen-fixtures` can write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureKind {
    RunningExample,
    Triangle,
    SingletonPair,
    Small,
    Binary,
    Medium,
    Interval,
}

impl FixtureKind {
    pub const NAMES: [&'static str; 7] = [
        "running-example",
        "triangle",
        "singleton-pair",
        "small",
        "binary",
        "medium",
        "interval",
    ];

    pub fn parse(name: &str) -> Option<Self> {
        use FixtureKind::*;
        let all = [
            RunningExample,
            Triangle,
            SingletonPair,
            Small,
            Binary,
            Medium,
            Interval,
        ];
        Self::NAMES.iter().position(|&n| n == name).map(|i| all[i])
    }
}

/// Writes `<stem>.net.json` and `<stem>.inst.json` pairs into `out`.
/// Named fixtures write one pair; random kinds write `count`, entry `i`
/// matching `fixtures::corpus(spec, seed, count)[i]`.
pub fn cmd_gen_fixtures(
    kind: FixtureKind,
    seed: u64,
    count: usize,
    out: &Path,
) -> CliResult<Vec<(PathBuf, PathBuf)>> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::usage(format!("failed to create {}: {e}", out.display())))?;
    let named = |stem: &str, net: Network, inst: ClassificationInstance| {
        vec![(stem.to_string(), net, inst)]
    };
    let items = match kind {
        FixtureKind::RunningExample => {
            let net = fixtures::running_example();
            let inst = ClassificationInstance::new(&net, vec![1.0, 1.0, 1.0])?;
            named("running_example", net, inst)
        }
        FixtureKind::Triangle => {
            let (net, inst) = fixtures::triangle();
            named("triangle", net, inst)
        }
        FixtureKind::SingletonPair => {
            let (net, inst) = fixtures::singleton_pair();
            named("singleton_pair", net, inst)
        }
        random => {
            let spec = match random {
                FixtureKind::Small => NetSpec::small(),
                FixtureKind::Binary => NetSpec::binary(5..=10),
                FixtureKind::Medium => NetSpec::medium(),
                _ => NetSpec::interval(2..=5),
            };
            fixtures::corpus(&spec, seed, count)
                .into_iter()
                .enumerate()
                .map(|(i, (net, inst))| {
                    (
                        format!("{}_{i:03}", FixtureKind::NAMES[kind as usize]),
                        net,
                        inst,
                    )
                })
                .collect()
        }
    };
    let mut written = Vec::with_capacity(items.len());
    for (stem, net, inst) in items {
        let net_path = out.join(format!("{stem}.net.json"));
        let inst_path = out.join(format!("{stem}.inst.json"));
        net.save(&net_path)?;
        inst.save(&inst_path)?;
        written.push((net_path, inst_path));
    }
    Ok(written)
}
