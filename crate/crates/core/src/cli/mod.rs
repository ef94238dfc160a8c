//! Command-line interface.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error, 4
//! protocol error.

pub mod config;
pub mod report;

use std::ffi::OsString;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use crate::domain::PartitionMode;
use crate::error::{Error, Result};
use crate::netproto::{self, JoinOptions, ServeConfig};
use crate::orchestrator::{
    build_federation, export_federation, load_participant, load_public, participant_ids, run_round, sweep_alpha,
    sweep_unlabeled_size, DataSource, RoundArtifacts, RoundReport,
};
use crate::theory::analyze_round;
pub use config::{Mode, RunConfigFile};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;
pub const EXIT_PROTOCOL: u8 = 4;

pub const OUTPUT_ROOT_ENV: &str = "COFED_OUTPUT_ROOT";

const DEFAULT_ALPHAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
const DEFAULT_SIZES: [usize; 4] = [100, 500, 2000, 5000];

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Records,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Iid,
    NonIid,
}

#[derive(Debug, Parser)]
#[command(name = "cofed", version, about = "Federated cotraining over a shared unlabeled dataset")]
pub struct Cli {
    /// Root for relative output directories.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV, default_value = ".")]
    pub output_root: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Shape of what is printed to stdout. Files always get both.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic datasets as CSV files plus a manifest.
    GenerateData {
        /// Run config whose data section to use; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory [default: data].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of participants.
        #[arg(long)]
        participants: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Number of public unlabeled instances.
        #[arg(long)]
        unlabeled_size: Option<usize>,
    },
    /// Run one round as configured.
    Run {
        config: PathBuf,
        /// Output directory [default: run].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat the round over several thresholds.
    SweepAlpha {
        config: PathBuf,
        /// Comma-separated thresholds; overrides `[sweep] alphas`.
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        /// Output directory [default: sweep-alpha].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat the round over nested public datasets of several sizes.
    SweepSize {
        config: PathBuf,
        /// Comma-separated sizes; overrides `[sweep] sizes`.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        /// Output directory [default: sweep-size].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the coordinator for one round.
    Serve {
        config: PathBuf,
        /// Listen address; port 0 picks a free port.
        #[arg(long)]
        bind: Option<String>,
        /// Abort the round after this long without progress.
        #[arg(long)]
        timeout_secs: Option<u64>,
        /// Also write every protocol line to `messages.jsonl`.
        #[arg(long)]
        capture: bool,
        /// Output directory [default: serve].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Take part in a round as one participant.
    Join {
        config: PathBuf,
        /// This participant's position in the config.
        #[arg(long)]
        participant: u32,
        /// Coordinator address.
        #[arg(long)]
        connect: Option<String>,
        /// Output directory [default: join-<participant>].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bound analysis of a completed run directory.
    Analyze { run_dir: PathBuf },
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Participant { source, .. } => exit_code(source),
        Error::Config(_)
        | Error::InvalidSpec(_)
        | Error::AlphaOutOfRange(_)
        | Error::InvalidWeights(_)
        | Error::ImpossibleOverlap { .. }
        | Error::NoHeldOutSubclasses
        | Error::PoolExhausted(_)
        | Error::Csv { .. } => EXIT_CONFIG,
        Error::Protocol(_) => EXIT_PROTOCOL,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Output goes to stdout, diagnostics to stderr.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
}

impl Ctx<'_> {
    fn load(&self, path: &Path) -> Result<RunConfigFile> {
        let mut c = RunConfigFile::load(path)?;
        if let Some(seed) = self.cli.seed {
            c.master_seed = seed;
        }
        Ok(c)
    }

    fn out_dir(&self, flag: &Option<PathBuf>, config: Option<&RunConfigFile>, default: &str) -> PathBuf {
        let dir = flag
            .clone()
            .or_else(|| config.and_then(|c| c.output_dir.clone()))
            .unwrap_or_else(|| PathBuf::from(default));
        if dir.is_absolute() {
            dir
        } else {
            self.cli.output_root.join(dir)
        }
    }

    fn pick<'s>(&self, table: &'s str, records: &'s str) -> &'s str {
        match self.cli.format {
            Format::Table => table,
            Format::Records => records,
        }
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

fn pretty<T: serde::Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

pub fn execute(cli: &Cli) -> Result<String> {
    let ctx = Ctx { cli };
    match &cli.command {
        Command::GenerateData {
            config,
            out,
            participants,
            mode,
            unlabeled_size,
        } => {
            let mut rc = match config {
                Some(p) => ctx.load(p)?,
                None => {
                    let mut c = RunConfigFile::default();
                    c.master_seed = cli.seed.unwrap_or(0);
                    c
                }
            };
            let DataSource::Synthetic(s) = &mut rc.data else {
                return Err(Error::Config("generate-data needs a synthetic data source".into()));
            };
            if let Some(n) = participants {
                s.partition.n_participants = *n;
                rc.participants.clear();
            }
            if let Some(m) = mode {
                s.partition.mode = match m {
                    ModeArg::Iid => PartitionMode::Iid,
                    ModeArg::NonIid => PartitionMode::NonIid,
                };
            }
            if let Some(m) = unlabeled_size {
                s.unlabeled.size = *m;
            }
            let fed_config = rc.federation()?;
            let federation = build_federation(&fed_config)?;
            let dir = ctx.out_dir(out, Some(&rc), "data");
            let manifest = export_federation(&federation, &dir, Some(rc.master_seed))?;
            write(&dir, "config.toml", &rc.to_toml()?)?;
            let rows: Vec<Vec<String>> = std::iter::once(&manifest.public)
                .chain(manifest.participants.iter().flat_map(|p| [&p.train, &p.test]))
                .chain(manifest.pool.iter())
                .chain(manifest.test_pool.iter())
                .map(|f| vec![f.path.display().to_string(), f.rows.to_string(), f.sha256.clone()])
                .collect();
            let table = report::table(&["file", "rows", "sha256"], &rows);
            let records = format!("{}\n", serde_json::to_string(&manifest)?);
            Ok(ctx.pick(&table, &records).to_string())
        }
        Command::Run { config, out } => {
            let rc = ctx.load(config)?;
            match rc.mode {
                Mode::InProcess => cmd_run(&ctx, &rc, out),
                Mode::Serve => cmd_serve(&ctx, &rc, None, None, false, out),
                Mode::Join => Err(Error::Config(
                    "mode = \"join\" needs a participant id; use `cofed join --participant ID`".into(),
                )),
            }
        }
        Command::SweepAlpha { config, alphas, out } => {
            let rc = ctx.load(config)?;
            let alphas = [alphas.as_slice(), rc.sweep.alphas.as_slice()]
                .into_iter()
                .find(|a| !a.is_empty())
                .map_or(DEFAULT_ALPHAS.to_vec(), <[f64]>::to_vec);
            let points = sweep_alpha(&rc.federation()?, &alphas)?;
            let dir = ctx.out_dir(out, Some(&rc), "sweep-alpha");
            let (table, records) = (report::alpha_table(&points), report::alpha_records(&points));
            write(&dir, "config.toml", &rc.to_toml()?)?;
            write(&dir, "sweep_alpha.txt", &table)?;
            write(&dir, "sweep_alpha.jsonl", &records)?;
            Ok(ctx.pick(&table, &records).to_string())
        }
        Command::SweepSize { config, sizes, out } => {
            let rc = ctx.load(config)?;
            let sizes = [sizes.as_slice(), rc.sweep.sizes.as_slice()]
                .into_iter()
                .find(|s| !s.is_empty())
                .map_or(DEFAULT_SIZES.to_vec(), <[usize]>::to_vec);
            let points = sweep_unlabeled_size(&rc.federation()?, &sizes)?;
            let dir = ctx.out_dir(out, Some(&rc), "sweep-size");
            let (table, records) = (report::size_table(&points), report::size_records(&points));
            write(&dir, "config.toml", &rc.to_toml()?)?;
            write(&dir, "sweep_size.txt", &table)?;
            write(&dir, "sweep_size.jsonl", &records)?;
            Ok(ctx.pick(&table, &records).to_string())
        }
        Command::Serve {
            config,
            bind,
            timeout_secs,
            capture,
            out,
        } => {
            let rc = ctx.load(config)?;
            cmd_serve(&ctx, &rc, bind.clone(), *timeout_secs, *capture, out)
        }
        Command::Join {
            config,
            participant,
            connect,
            out,
        } => {
            let rc = ctx.load(config)?;
            cmd_join(&ctx, &rc, *participant, connect.clone(), out)
        }
        Command::Analyze { run_dir } => {
            let dir = if run_dir.is_absolute() {
                run_dir.clone()
            } else {
                cli.output_root.join(run_dir)
            };
            let read = |name: &str| {
                std::fs::read_to_string(dir.join(name))
                    .map_err(|e| Error::MissingArtifacts(format!("{}: {e}", dir.join(name).display())))
            };
            let report: RoundReport = serde_json::from_str(&read("report.json")?)?;
            let artifacts: RoundArtifacts = serde_json::from_str(&read("artifacts.json")?)?;
            let analysis = analyze_round(&report, &artifacts)?;
            let (table, records) = (report::analysis_table(&analysis), report::analysis_records(&analysis));
            write(&dir, "analysis.txt", &table)?;
            write(&dir, "analysis.jsonl", &records)?;
            Ok(ctx.pick(&table, &records).to_string())
        }
    }
}

fn cmd_run(ctx: &Ctx, rc: &RunConfigFile, out: &Option<PathBuf>) -> Result<String> {
    let outcome = run_round(&rc.federation()?)?;
    let dir = ctx.out_dir(out, Some(rc), "run");
    let (table, records) = (report::round_table(&outcome.report), report::round_records(&outcome.report));
    write(&dir, "config.toml", &rc.to_toml()?)?;
    write(&dir, "report.txt", &table)?;
    write(&dir, "report.jsonl", &records)?;
    write(&dir, "report.json", &pretty(&outcome.report)?)?;
    write(&dir, "artifacts.json", &pretty(&outcome.artifacts)?)?;
    Ok(ctx.pick(&table, &records).to_string())
}

fn protocol_io(e: Error) -> Error {
    match e {
        Error::Io(io) => Error::Protocol(io.to_string()),
        other => other,
    }
}

fn cmd_serve(
    ctx: &Ctx,
    rc: &RunConfigFile,
    bind: Option<String>,
    timeout_secs: Option<u64>,
    capture: bool,
    out: &Option<PathBuf>,
) -> Result<String> {
    let fed = rc.federation()?;
    let public = load_public(&fed)?;
    let ids = participant_ids(&fed)?;
    let weighted = ids.into_iter().zip(fed.participants.iter().map(|p| p.weight)).collect();
    let mut sc = ServeConfig::new(weighted, fed.alpha, &public);
    sc.conflict_scope = fed.conflict_scope;
    sc.timeout = Duration::from_secs(timeout_secs.unwrap_or(rc.network.timeout_secs));
    sc.max_line = rc.network.max_line;
    sc.capture = capture;
    let bind = bind.unwrap_or_else(|| rc.network.bind.clone());
    let listener = TcpListener::bind(&bind).map_err(|e| Error::Protocol(format!("cannot bind {bind}: {e}")))?;
    eprintln!("listening on {}", listener.local_addr()?);
    let outcome = netproto::serve(listener, &sc).map_err(protocol_io)?;

    let rows: Vec<Vec<String>> = outcome
        .participants
        .iter()
        .zip(&outcome.bundles)
        .map(|(id, b)| vec![id.to_string(), b.len().to_string()])
        .collect();
    let mut table = report::table(&["participant", "bundle"], &rows);
    table.push_str(&format!("\npseudolabels {}\n", outcome.sets.total_pseudolabels()));
    let records: String = outcome
        .participants
        .iter()
        .zip(&outcome.bundles)
        .map(|(id, b)| {
            format!(
                "{}\n",
                serde_json::json!({"record": "bundle", "participant": id, "bundle_size": b.len()})
            )
        })
        .chain(std::iter::once(format!(
            "{}\n",
            serde_json::json!({"record": "summary", "alpha": fed.alpha, "unlabeled_size": public.len(),
                "total_pseudolabels": outcome.sets.total_pseudolabels()})
        )))
        .collect();
    let dir = ctx.out_dir(out, Some(rc), "serve");
    write(&dir, "config.toml", &rc.to_toml()?)?;
    write(&dir, "coordinator.txt", &table)?;
    write(&dir, "coordinator.jsonl", &records)?;
    write(&dir, "bundles.json", &pretty(&outcome.bundles)?)?;
    if capture {
        let lines: String = outcome
            .messages
            .iter()
            .map(|m| serde_json::to_string(m).map(|l| l + "\n"))
            .collect::<std::result::Result<_, _>>()?;
        write(&dir, "messages.jsonl", &lines)?;
    }
    Ok(ctx.pick(&table, &records).to_string())
}

fn cmd_join(
    ctx: &Ctx,
    rc: &RunConfigFile,
    id: u32,
    connect: Option<String>,
    out: &Option<PathBuf>,
) -> Result<String> {
    let fed = rc.federation()?;
    let (setup, public) = load_participant(&fed, id)?;
    let options = JoinOptions {
        max_line: rc.network.max_line,
        timeout: Some(Duration::from_secs(rc.network.join_timeout_secs)),
    };
    let addr = connect.unwrap_or_else(|| rc.network.connect.clone());
    let outcome = netproto::join(addr.as_str(), &setup, &public, fed.master_seed, &options).map_err(protocol_io)?;
    let reports = [outcome.report];
    let (table, records) = (
        report::participants_table(&reports),
        report::participant_records(&reports),
    );
    let dir = ctx.out_dir(out, Some(rc), &format!("join-{id}"));
    write(&dir, "config.toml", &rc.to_toml()?)?;
    write(&dir, &format!("participant_{id}.txt"), &table)?;
    write(&dir, &format!("participant_{id}.jsonl"), &records)?;
    write(&dir, &format!("bundle_{id}.json"), &pretty(&outcome.bundle)?)?;
    Ok(ctx.pick(&table, &records).to_string())
}
