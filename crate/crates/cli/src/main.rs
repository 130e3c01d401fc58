//! `gse`: command-line front end for the schema registry toolchain.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gse_core::planner::Engine;
use gse_core::schema::CompatibilityMode;
use gse_core::stl::Diagnostic;
use thiserror::Error;

use crate::config::{CliConfig, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Domain(String),
    /// Validation diagnostics; each is printed on its own line.
    #[error("{} diagnostic(s)", .0.len())]
    Diagnostics(Vec<Diagnostic>),
    #[error(transparent)]
    Client(Box<gse_client::ClientError>),
    /// Details were already written to stderr.
    #[error("{0}")]
    Reported(String),
}

impl From<gse_client::ClientError> for CliError {
    fn from(e: gse_client::ClientError) -> Self {
        CliError::Client(Box::new(e))
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn domain(e: impl std::fmt::Display) -> CliError {
        CliError::Domain(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "gse", version, about = "Schema registry with generated mappings between versions")]
struct Cli {
    /// Config file (TOML). Defaults to $GSE_CONFIG, then ./gse.config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Registry service URL.
    #[arg(long, global = true)]
    registry: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Register, fetch and list schemas.
    #[command(subcommand)]
    Schema(SchemaCmd),
    /// Compatibility checks and per-subject modes.
    #[command(subcommand)]
    Compat(CompatCmd),
    /// Generate, validate and show mappings.
    #[command(subcommand)]
    Map(MapCmd),
    /// Approve or reject a pending mapping.
    #[command(subcommand)]
    Mapping(DecideCmd),
    /// Compile a mapping with a backend.
    Compile(CompileArgs),
    /// Transform line-delimited records with a mapping.
    Apply(ApplyArgs),
    /// Score a planner against a gold corpus.
    Eval(EvalArgs),
    /// Run the registry service.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
enum SchemaCmd {
    /// Register a schema document under its subject.
    Register {
        file: PathBuf,
        /// Subject to register under; defaults to the document's subject.
        #[arg(long)]
        subject: Option<String>,
    },
    /// Print a stored schema document.
    Get {
        #[arg(long, conflicts_with_all = ["subject", "version"])]
        id: Option<u32>,
        #[arg(long, required_unless_present = "id")]
        subject: Option<String>,
        /// Version number or `latest`.
        #[arg(long, default_value = "latest")]
        version: String,
    },
    /// List subjects, or the versions of one subject.
    List {
        #[arg(long)]
        subject: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
enum CompatCmd {
    /// Check a candidate document. Uses the registry unless `--against` is given.
    Check {
        file: PathBuf,
        #[arg(long)]
        subject: Option<String>,
        /// Compare locally against this older schema file.
        #[arg(long)]
        against: Option<PathBuf>,
        #[arg(long, requires = "against", default_value = "BACKWARD")]
        mode: CompatibilityMode,
    },
    /// Show or set a subject's compatibility mode.
    Mode { subject: String, mode: Option<CompatibilityMode> },
}

#[derive(Debug, Args)]
pub struct PairArgs {
    /// Source schema file.
    #[arg(long, requires = "target")]
    pub source: Option<PathBuf>,
    /// Target schema file.
    #[arg(long, requires = "source")]
    pub target: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum MapCmd {
    /// Plan a mapping. Local with `--source/--target`, stored with `--source-id/--target-id`.
    Generate {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long, conflicts_with = "source", requires = "target_id")]
        source_id: Option<u32>,
        #[arg(long, conflicts_with = "target", requires = "source_id")]
        target_id: Option<u32>,
        #[arg(long)]
        engine: Option<Engine>,
        /// Replay model answers from a transcript instead of calling an endpoint.
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Program file for the manual engine.
        #[arg(long)]
        program: Option<PathBuf>,
    },
    /// Validate a mapping document against its schema pair.
    Validate {
        mapping: PathBuf,
        #[command(flatten)]
        pair: PairArgs,
    },
    /// Print the stored mapping between two schema ids.
    Show { source_id: u32, target_id: u32 },
}

#[derive(Debug, Subcommand)]
enum DecideCmd {
    Approve { source_id: u32, target_id: u32 },
    Reject { source_id: u32, target_id: u32 },
}

#[derive(Debug, Args)]
struct CompileArgs {
    #[arg(long)]
    backend: Option<String>,
    /// Local mapping document.
    #[arg(long, required_unless_present = "source_id")]
    mapping: Option<PathBuf>,
    #[command(flatten)]
    pair: PairArgs,
    /// Compile the approved stored mapping instead.
    #[arg(long, conflicts_with = "mapping", requires = "target_id")]
    source_id: Option<u32>,
    #[arg(long, requires = "source_id")]
    target_id: Option<u32>,
}

#[derive(Debug, Args)]
struct ApplyArgs {
    #[arg(long)]
    mapping: PathBuf,
    /// One record per line; `-` reads stdin.
    #[arg(long)]
    records: PathBuf,
    #[command(flatten)]
    pair: PairArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    engine: Option<Engine>,
    /// Directory of `<case>.json` transcripts for the model engine.
    #[arg(long)]
    transcripts: Option<PathBuf>,
    /// Emit the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Event log; in-memory when absent.
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    listen: Option<String>,
}

fn overrides(cli: &Cli) -> Overrides {
    let mut o = Overrides {
        config: cli.config.clone(),
        registry: cli.registry.clone(),
        ..Overrides::default()
    };
    match &cli.command {
        Command::Serve(a) => {
            o.store_path = a.store.clone();
            o.listen_addr = a.listen.clone();
        }
        Command::Map(MapCmd::Generate { engine, .. }) | Command::Eval(EvalArgs { engine, .. }) => o.engine = *engine,
        Command::Compile(a) => o.backend = a.backend.clone(),
        _ => {}
    }
    o
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = CliConfig::load(&overrides(&cli))?;
    use commands as c;
    match cli.command {
        Command::Schema(SchemaCmd::Register { file, subject }) => c::schema_register(&cfg, &file, subject),
        Command::Schema(SchemaCmd::Get { id, subject, version }) => c::schema_get(&cfg, id, subject, &version),
        Command::Schema(SchemaCmd::List { subject }) => c::schema_list(&cfg, subject),
        Command::Compat(CompatCmd::Check { file, subject, against, mode }) => {
            c::compat_check(&cfg, &file, subject, against, mode)
        }
        Command::Compat(CompatCmd::Mode { subject, mode }) => c::compat_mode(&cfg, &subject, mode),
        Command::Map(MapCmd::Generate { pair, source_id, target_id, transcript, program, .. }) => match (source_id, target_id) {
            (Some(s), Some(t)) => c::map_generate_stored(&cfg, s, t, program),
            _ => c::map_generate_local(&cfg, &pair, transcript),
        },
        Command::Map(MapCmd::Validate { mapping, pair }) => c::map_validate(&cfg, &mapping, &pair),
        Command::Map(MapCmd::Show { source_id, target_id }) => c::map_show(&cfg, source_id, target_id),
        Command::Mapping(DecideCmd::Approve { source_id, target_id }) => c::decide(&cfg, source_id, target_id, true),
        Command::Mapping(DecideCmd::Reject { source_id, target_id }) => c::decide(&cfg, source_id, target_id, false),
        Command::Compile(a) => match (a.source_id, a.target_id, a.mapping) {
            (Some(s), Some(t), _) => c::compile_stored(&cfg, s, t),
            (_, _, Some(m)) => c::compile_local(&cfg, &m, &a.pair),
            _ => Err(CliError::Usage("compile needs --mapping or --source-id/--target-id".into())),
        },
        Command::Apply(a) => c::apply(&cfg, &a.mapping, &a.records, &a.pair),
        Command::Eval(a) => c::eval(&cfg, &a.corpus, a.transcripts.as_deref(), a.json),
        Command::Serve(_) => c::serve(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Diagnostics(diags) => diags.iter().for_each(|d| eprintln!("{d}")),
                CliError::Reported(msg) => eprintln!("error: {msg}"),
                CliError::Client(c) => {
                    eprintln!("error: {c}");
                    if let gse_client::ClientError::Api { body, .. } = c.as_ref() {
                        commands::print_api_details(body);
                    }
                }
                other => eprintln!("error: {other}"),
            }
            if let CliError::Usage(_) = e {
                eprintln!("run `gse --help` for usage");
            }
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_subcommands() {
        let cli = Cli::try_parse_from(["gse", "map", "generate", "--source", "a", "--target", "b", "--engine", "heuristic"]).unwrap();
        assert!(matches!(cli.command, Command::Map(MapCmd::Generate { engine: Some(Engine::Heuristic), .. })));
        let cli = Cli::try_parse_from(["gse", "compat", "mode", "s", "FULL"]).unwrap();
        assert!(matches!(cli.command, Command::Compat(CompatCmd::Mode { mode: Some(CompatibilityMode::Full), .. })));
        assert!(Cli::try_parse_from(["gse", "frobnicate"]).is_err());
        assert!(Cli::try_parse_from(["gse", "map", "generate", "--source", "a"]).is_err());
    }

    #[test]
    fn flags_reach_the_config() {
        let cli = Cli::try_parse_from(["gse", "--registry", "http://x:1", "serve", "--listen", "127.0.0.1:9"]).unwrap();
        let o = overrides(&cli);
        assert_eq!(o.registry.as_deref(), Some("http://x:1"));
        assert_eq!(o.listen_addr.as_deref(), Some("127.0.0.1:9"));
    }
}
