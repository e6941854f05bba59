use std::collections::BTreeSet;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use abdux::UbVariant;
use abdux::VerifierConfig;
use abdux_cli::commands::{self, FixtureKind, RenderSource};
use abdux_cli::config::{BundleOptions, BundleSource, OrderingSource, RunConfig};
use abdux_cli::{CliError, CliResult, Status};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

/// Minimal abductive explanations with provable bounds for ReLU classifiers.
#[derive(Parser)]
#[command(name = "abdux", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute an explanation with upper and lower bounds.
    Explain {
        #[command(flatten)]
        io: RunIo,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        bundles: BundleArgs,
    },
    /// Compute a bundle explanation with bounds in bundles and in features.
    BundleExplain {
        #[command(flatten)]
        io: RunIo,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        bundles: BundleArgs,
    },
    /// Decide a single query file.
    Verify {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[command(flatten)]
        verifier: VerifierArgs,
        /// Print the verdict as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run only the lower-bounding search.
    LowerBound {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        instance: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        bundles: BundleArgs,
    },
    /// Draw an explanation as a PGM image and an ASCII grid.
    Render {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        instance: PathBuf,
        /// Report whose explanation is drawn.
        #[arg(
            long,
            conflicts_with = "features",
            required_unless_present = "features"
        )]
        report: Option<PathBuf>,
        /// Explanation as a JSON list of feature indices.
        #[arg(long)]
        features: Option<String>,
        /// Image shape, WIDTHxHEIGHT.
        #[arg(long, value_parser = parse_shape)]
        shape: (usize, usize),
        /// Write the PGM here.
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Write fixture networks and instances as JSON.
    GenFixtures {
        /// running-example, triangle, singleton-pair, small, binary, medium
        /// or interval.
        #[arg(long, value_parser = parse_fixture)]
        kind: FixtureKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunIo {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    instance: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Stream state changes here as JSON lines.
    #[arg(long)]
    progress: Option<PathBuf>,
}

#[derive(Args)]
struct VerifierArgs {
    /// Per-query search node cap.
    #[arg(long)]
    node_limit: Option<u64>,
    /// Discrete spaces up to this many points are enumerated.
    #[arg(long)]
    enumeration_cap: Option<u64>,
    /// Wall-clock budget in seconds.
    #[arg(long, env = "ABDUX_BUDGET_SECS")]
    budget_secs: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// sequential, lb_info, binary or local_singleton.
    #[arg(long, default_value = "sequential")]
    variant: UbVariant,
    /// Run the workers one after the other on a single thread.
    #[arg(long)]
    deterministic: bool,
    #[command(flatten)]
    verifier: VerifierArgs,
    /// off, singletons or pairs.
    #[arg(long, default_value = "pairs", value_parser = parse_serde::<abdux::explain::LbSetting>)]
    lb: abdux::explain::LbSetting,
    /// exact or matching.
    #[arg(long, default_value = "exact", value_parser = parse_serde::<abdux::explain::LbMode>)]
    lb_mode: abdux::explain::LbMode,
    /// Largest vertex count handed to the exact cover solver.
    #[arg(long)]
    exact_cap: Option<usize>,
    /// Neighbourhood half-width for local-singleton probes.
    #[arg(long, default_value_t = 0.0)]
    local_radius: f64,
    /// occlusion, identity or random.
    #[arg(long, default_value = "occlusion", value_parser = parse_ordering)]
    ordering: OrderingSource,
    /// JSON list of indices in ascending relevance; overrides --ordering.
    #[arg(long)]
    ordering_file: Option<PathBuf>,
    /// Move the frame of a WIDTHxHEIGHT image to the end of the ordering.
    #[arg(long, value_parser = parse_shape)]
    pin_border: Option<(usize, usize)>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BundleArgs {
    /// Grid bundles over a WIDTHxHEIGHT image.
    #[arg(long, value_parser = parse_shape, requires = "cell", conflicts_with = "bundles")]
    grid: Option<(usize, usize)>,
    /// Grid cell side.
    #[arg(long, requires = "grid")]
    cell: Option<usize>,
    /// JSON list of feature-index lists.
    #[arg(long)]
    bundles: Option<PathBuf>,
    /// Also compute the refined per-bundle feature bound.
    #[arg(long)]
    refined: bool,
}

impl BundleArgs {
    fn options(&self) -> Option<BundleOptions> {
        let source = match (self.grid, &self.bundles) {
            (Some((width, height)), _) => BundleSource::Grid {
                width,
                height,
                cell: self.cell.unwrap_or(1),
            },
            (None, Some(path)) => BundleSource::File(path.clone()),
            (None, None) => return None,
        };
        Some(BundleOptions {
            source,
            refined: self.refined,
        })
    }
}

impl VerifierArgs {
    fn config(&self) -> CliResult<VerifierConfig> {
        let d = VerifierConfig::default();
        if let Some(b) = self.budget_secs.filter(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(CliError::usage(format!("budget must be positive, got {b}")));
        }
        Ok(VerifierConfig {
            enumeration_cap: self.enumeration_cap.unwrap_or(d.enumeration_cap),
            node_limit: self.node_limit.unwrap_or(d.node_limit),
            deadline: self
                .budget_secs
                .map(|b| std::time::Instant::now() + std::time::Duration::from_secs_f64(b)),
        })
    }
}

impl RunArgs {
    fn config(&self, bundles: Option<BundleOptions>) -> RunConfig {
        let d = RunConfig::default();
        RunConfig {
            variant: self.variant,
            parallel: !self.deterministic,
            budget_secs: self.verifier.budget_secs,
            node_limit: self.verifier.node_limit.unwrap_or(d.node_limit),
            enumeration_cap: self.verifier.enumeration_cap.unwrap_or(d.enumeration_cap),
            lb: self.lb,
            lb_mode: self.lb_mode,
            exact_cap: self.exact_cap.unwrap_or(d.exact_cap),
            local_radius: self.local_radius,
            bundles,
            ordering: match &self.ordering_file {
                Some(p) => OrderingSource::File(p.clone()),
                None => self.ordering.clone(),
            },
            pin_border: self.pin_border,
            seed: self.seed,
        }
    }
}

fn parse_shape(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let w = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    let h = h.trim().parse().map_err(|e| format!("height: {e}"))?;
    Ok((w, h))
}

fn parse_serde<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_ordering(s: &str) -> Result<OrderingSource, String> {
    match s {
        "occlusion" => Ok(OrderingSource::Occlusion),
        "identity" => Ok(OrderingSource::Identity),
        "random" => Ok(OrderingSource::Random),
        _ => Err(format!("unknown ordering {s:?}")),
    }
}

fn parse_fixture(s: &str) -> Result<FixtureKind, String> {
    FixtureKind::parse(s).ok_or_else(|| format!("unknown fixture kind {s:?}"))
}

/// Writes to stdout; a closed pipe is not an error.
fn print(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn emit(json: String, output: Option<&PathBuf>) -> CliResult<()> {
    match output {
        Some(p) => std::fs::write(p, json + "\n")
            .map_err(|e| CliError::usage(format!("failed to write {}: {e}", p.display()))),
        None => print(&(json + "\n")),
    }
}

fn explain(io: RunIo, run: RunArgs, bundles: Option<BundleOptions>) -> CliResult<Status> {
    let config = run.config(bundles);
    let report = commands::cmd_explain(&io.network, &io.instance, &config, io.progress.as_deref())?;
    eprintln!(
        "{}: ub {} lb {} explanation {:?}",
        report.command, report.ub, report.lb, report.explanation
    );
    emit(report.to_json_string(), io.output.as_ref())?;
    Ok(report.exit_status())
}

fn run(cli: Cli) -> CliResult<Status> {
    match cli.command {
        Command::Explain { io, run, bundles } => explain(io, run, bundles.options()),
        Command::BundleExplain { io, run, bundles } => {
            let options = bundles.options().ok_or_else(|| {
                CliError::usage("bundle-explain needs --grid and --cell, or --bundles")
            })?;
            explain(io, run, Some(options))
        }
        Command::Verify {
            network,
            query,
            verifier,
            json,
        } => {
            let out = commands::cmd_verify(&network, &query, verifier.config()?)?;
            if json {
                print(&(serde_json::to_string(&out).expect("verdict serializes") + "\n"))?;
            } else {
                print(&format!("{out}\n"))?;
            }
            Ok(Status::Success)
        }
        Command::LowerBound {
            network,
            instance,
            run,
            bundles,
        } => {
            let config = run.config(bundles.options());
            let report = commands::cmd_lower_bound(&network, &instance, &config)?;
            let complete = report.result.complete;
            emit(
                serde_json::to_string_pretty(&report).expect("report serializes"),
                None,
            )?;
            Ok(if complete {
                Status::Success
            } else {
                Status::Budget
            })
        }
        Command::Render {
            network,
            instance,
            report,
            features,
            shape,
            pgm,
        } => {
            let source = match (&report, features) {
                (Some(r), _) => RenderSource::Report(r),
                (None, Some(text)) => {
                    let set: BTreeSet<usize> = serde_json::from_str(&text).map_err(|e| {
                        CliError::new(Status::Parse, format!("failed to parse features: {e}"))
                    })?;
                    RenderSource::Features(set)
                }
                (None, None) => unreachable!("clap requires one source"),
            };
            let mask = commands::cmd_render(&network, &instance, source, shape.0, shape.1)?;
            if let Some(p) = pgm {
                std::fs::write(&p, mask.to_pgm()).map_err(|e| {
                    CliError::usage(format!("failed to write {}: {e}", p.display()))
                })?;
            }
            print(&mask.to_ascii())?;
            Ok(Status::Success)
        }
        Command::GenFixtures {
            kind,
            seed,
            count,
            out,
        } => {
            for (net, inst) in commands::cmd_gen_fixtures(kind, seed, count, &out)? {
                print(&format!("{} {}\n", net.display(), inst.display()))?;
            }
            Ok(Status::Success)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                Status::Failure.code()
            } else {
                Status::Success.code()
            });
        }
    };
    match run(cli) {
        Ok(status) => ExitCode::from(status.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.status.code())
        }
    }
}
