//! Subcommand bodies. Local work calls the library directly; registry work
//! goes through the service client.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use gse_client::Client;
use gse_core::assembler::compile;
use gse_core::eval::{evaluate_corpus, load_corpus};
use gse_core::interp::transform;
use gse_core::planner::{plan_heuristic, plan_with_model, Engine, HttpToolClient, ToolCallProtocol, TranscriptClient};
use gse_core::registry::Decision;
use gse_core::schema::{check_structural_compat, parse_schema, CompatReport, CompatibilityMode, Schema, SchemaRef};
use gse_core::stl::{parse_program, serialize_program, validate_program, Diagnostic, StlProgram};
use gse_core::Record;
use serde::Serialize;
use serde_json::Value;

use crate::config::CliConfig;
use crate::{CliError, PairArgs};

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn schema_file(path: &Path) -> Result<Schema, CliError> {
    parse_schema(&read(path)?).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn program_file(path: &Path) -> Result<StlProgram, CliError> {
    parse_program(&read(path)?).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn block_on<F: std::future::Future>(f: F) -> Result<F::Output, CliError> {
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(CliError::domain)?;
    Ok(rt.block_on(f))
}

fn client(cfg: &CliConfig) -> Client {
    Client::new(&cfg.registry_url)
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(CliError::domain)?;
    println!("{text}");
    Ok(())
}

/// Prints structured details from a service error body.
pub fn print_api_details(body: &Value) {
    if let Some(diags) = body.get("diagnostics").and_then(|d| serde_json::from_value::<Vec<Diagnostic>>(d.clone()).ok()) {
        diags.iter().for_each(|d| eprintln!("{d}"));
    }
    if let Some(problems) = body.get("problems").and_then(Value::as_array) {
        for p in problems {
            eprintln!("{p}");
        }
    }
    if let Some(report) = body.get("report").and_then(|r| serde_json::from_value::<CompatReport>(r.clone()).ok()) {
        print_violations(&report);
    }
}

fn print_violations(report: &CompatReport) {
    for v in &report.violations {
        eprintln!("[{}] `{}`: {}", v.rule, v.path, v.message);
    }
}

async fn fetch_schema(client: &Client, r: &SchemaRef) -> Result<Schema, CliError> {
    let view = client.schema_version(&r.subject, &r.version.to_string()).await?;
    parse_schema(&view.document).map_err(CliError::domain)
}

/// Schema files when given, otherwise the registry's copies of the
/// program's source and target.
fn resolve_pair(cfg: &CliConfig, pair: &PairArgs, program: &StlProgram) -> Result<(Schema, Schema), CliError> {
    match (&pair.source, &pair.target) {
        (Some(s), Some(t)) => Ok((schema_file(s)?, schema_file(t)?)),
        _ => {
            let c = client(cfg);
            block_on(async {
                let s = fetch_schema(&c, &program.source).await?;
                let t = fetch_schema(&c, &program.target).await?;
                Ok((s, t))
            })?
        }
    }
}

// ---------------------------------------------------------------------------
// schema and compat

pub fn schema_register(cfg: &CliConfig, file: &Path, subject: Option<String>) -> Result<(), CliError> {
    let doc = read(file)?;
    let subject = match subject {
        Some(s) => s,
        None => parse_schema(&doc).map_err(|e| CliError::Domain(format!("{}: {e}", file.display())))?.subject,
    };
    let reg = block_on(client(cfg).register_schema(&subject, &doc))??;
    print_json(&reg)
}

pub fn schema_get(cfg: &CliConfig, id: Option<u32>, subject: Option<String>, version: &str) -> Result<(), CliError> {
    let c = client(cfg);
    let view = block_on(async {
        match (id, subject) {
            (Some(id), _) => c.schema(id).await,
            (None, Some(s)) => c.schema_version(&s, version).await,
            (None, None) => unreachable!("clap requires --id or --subject"),
        }
    })??;
    print!("{}", view.document);
    if !view.document.ends_with('\n') {
        println!();
    }
    Ok(())
}

pub fn schema_list(cfg: &CliConfig, subject: Option<String>) -> Result<(), CliError> {
    let c = client(cfg);
    match subject {
        Some(s) => {
            for v in block_on(c.versions(&s))?? {
                println!("{}\t{}\t{:016x}", v.version, v.id, v.fingerprint);
            }
        }
        None => block_on(c.subjects())??.iter().for_each(|s| println!("{s}")),
    }
    Ok(())
}

pub fn compat_check(
    cfg: &CliConfig,
    file: &Path,
    subject: Option<String>,
    against: Option<std::path::PathBuf>,
    mode: CompatibilityMode,
) -> Result<(), CliError> {
    let report = match against {
        Some(old) => check_structural_compat(&schema_file(&old)?, &schema_file(file)?, mode),
        None => {
            let doc = read(file)?;
            let subject = match subject {
                Some(s) => s,
                None => parse_schema(&doc).map_err(CliError::domain)?.subject,
            };
            block_on(client(cfg).check_compat(&subject, &doc))??
        }
    };
    print_json(&report)?;
    if report.is_compatible() {
        Ok(())
    } else {
        print_violations(&report);
        Err(CliError::Reported(format!("incompatible under {}", report.mode)))
    }
}

pub fn compat_mode(cfg: &CliConfig, subject: &str, mode: Option<CompatibilityMode>) -> Result<(), CliError> {
    let c = client(cfg);
    let mode = block_on(async {
        if let Some(m) = mode {
            c.set_mode(subject, m).await?;
        }
        c.mode(subject).await
    })??;
    println!("{mode}");
    Ok(())
}

// ---------------------------------------------------------------------------
// mappings

fn model_client(cfg: &CliConfig, transcript: Option<&Path>) -> Result<Box<dyn ToolCallProtocol>, CliError> {
    Ok(match transcript {
        Some(p) => Box::new(TranscriptClient::from_path(p).map_err(CliError::domain)?),
        None => Box::new(HttpToolClient::from_config(&cfg.planner).map_err(CliError::domain)?),
    })
}

pub fn map_generate_local(cfg: &CliConfig, pair: &PairArgs, transcript: Option<std::path::PathBuf>) -> Result<(), CliError> {
    let (Some(s), Some(t)) = (&pair.source, &pair.target) else {
        return Err(CliError::Usage("map generate needs --source/--target or --source-id/--target-id".into()));
    };
    let (source, target) = (schema_file(s)?, schema_file(t)?);
    match cfg.engine {
        Engine::Heuristic => {
            print!("{}", serialize_program(&plan_heuristic(&source, &target, &cfg.planner)));
            Ok(())
        }
        Engine::Model => {
            let client = model_client(cfg, transcript.as_deref())?;
            let out = plan_with_model(client.as_ref(), &source, &target, &cfg.planner).map_err(CliError::domain)?;
            print!("{}", serialize_program(&out.program));
            if out.diagnostics.is_empty() {
                Ok(())
            } else {
                Err(CliError::Diagnostics(out.diagnostics))
            }
        }
        Engine::Manual => Err(CliError::Usage("the manual engine only applies to stored mappings".into())),
    }
}

pub fn map_generate_stored(cfg: &CliConfig, source_id: u32, target_id: u32, program: Option<std::path::PathBuf>) -> Result<(), CliError> {
    let program = program.as_deref().map(read).transpose()?;
    let view = block_on(client(cfg).create_mapping(source_id, target_id, cfg.engine, program.as_deref()))??;
    print_json(&view)?;
    view.diagnostics.iter().for_each(|d| eprintln!("{d}"));
    Ok(())
}

pub fn map_validate(cfg: &CliConfig, mapping: &Path, pair: &PairArgs) -> Result<(), CliError> {
    let program = program_file(mapping)?;
    let (source, target) = resolve_pair(cfg, pair, &program)?;
    let diags = validate_program(&program, &source, &target);
    if diags.is_empty() {
        println!("ok: {} -> {} ({} commands)", program.source, program.target, program.commands.len());
        Ok(())
    } else {
        Err(CliError::Diagnostics(diags))
    }
}

pub fn map_show(cfg: &CliConfig, source_id: u32, target_id: u32) -> Result<(), CliError> {
    print_json(&block_on(client(cfg).mapping(source_id, target_id))??)
}

pub fn decide(cfg: &CliConfig, source_id: u32, target_id: u32, approve: bool) -> Result<(), CliError> {
    let decision = if approve { Decision::Approve } else { Decision::Reject };
    print_json(&block_on(client(cfg).decide_mapping(source_id, target_id, decision))??)
}

// ---------------------------------------------------------------------------
// compile, apply, eval, serve

pub fn compile_local(cfg: &CliConfig, mapping: &Path, pair: &PairArgs) -> Result<(), CliError> {
    let program = program_file(mapping)?;
    let (source, target) = resolve_pair(cfg, pair, &program)?;
    match compile(&program, &source, &target, &cfg.backend) {
        Ok(art) => {
            print!("{}", art.body);
            Ok(())
        }
        Err(gse_core::assembler::CompileError::Unvalidated(diags)) => Err(CliError::Diagnostics(diags)),
        Err(e) => Err(CliError::domain(e)),
    }
}

pub fn compile_stored(cfg: &CliConfig, source_id: u32, target_id: u32) -> Result<(), CliError> {
    let art = block_on(client(cfg).compile(source_id, target_id, &cfg.backend))??;
    print!("{}", art.body);
    Ok(())
}

pub fn apply(cfg: &CliConfig, mapping: &Path, records: &Path, pair: &PairArgs) -> Result<(), CliError> {
    let program = program_file(mapping)?;
    let (source, target) = resolve_pair(cfg, pair, &program)?;
    let input: Box<dyn BufRead> = if records == Path::new("-") {
        Box::new(io::stdin().lock())
    } else {
        let f = fs::File::open(records).map_err(|source| CliError::Io {
            path: records.display().to_string(),
            source,
        })?;
        Box::new(BufReader::new(f))
    };
    let mut out = BufWriter::new(io::stdout().lock());
    let mut failed = 0usize;
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|source| CliError::Io {
            path: records.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let result = Record::parse(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| transform(&program, &r, &source, &target).map_err(|e| e.to_string()));
        match result {
            Ok(r) => writeln!(out, "{}", r.to_line()).map_err(CliError::domain)?,
            Err(e) => {
                failed += 1;
                eprintln!("line {}: {e}", i + 1);
            }
        }
    }
    out.flush().map_err(CliError::domain)?;
    match failed {
        0 => Ok(()),
        n => Err(CliError::Reported(format!("{n} record(s) failed"))),
    }
}

pub fn eval(cfg: &CliConfig, corpus: &Path, transcripts: Option<&Path>, json: bool) -> Result<(), CliError> {
    let cases = load_corpus(corpus).map_err(CliError::domain)?;
    let engine = cfg.engine;
    let report = match engine {
        Engine::Heuristic => evaluate_corpus(&cases, engine.as_str(), |c| Ok(plan_heuristic(&c.source, &c.target, &cfg.planner))),
        Engine::Model => evaluate_corpus(&cases, engine.as_str(), |c| {
            let transcript = transcripts.map(|d| d.join(format!("{}.json", c.name)));
            let client = model_client(cfg, transcript.as_deref()).map_err(|e| e.to_string())?;
            plan_with_model(client.as_ref(), &c.source, &c.target, &cfg.planner)
                .map(|o| o.program)
                .map_err(|e| e.to_string())
        }),
        Engine::Manual => return Err(CliError::Usage("eval needs the heuristic or model engine".into())),
    }
    .map_err(CliError::domain)?;
    if json {
        print_json(&report)
    } else {
        print!("{}", report.table());
        for c in &report.cases {
            if let Some(e) = &c.error {
                eprintln!("{}: {e}", c.case);
            }
        }
        Ok(())
    }
}

pub fn serve(cfg: &CliConfig) -> Result<(), CliError> {
    let config = gse_server::ServerConfig {
        store_path: cfg.store_path.clone(),
        listen_addr: cfg.listen_addr.clone(),
        planner: cfg.planner.clone(),
    };
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(CliError::domain)?;
    rt.block_on(gse_server::serve(config, |addr| {
        println!("listening on http://{addr}");
        let _ = io::stdout().flush();
    }))
    .map_err(CliError::domain)
}
