//! Acceptance suite: one line per criterion, non-zero exit if any fails.

mod common;

use std::cell::Cell;
use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use gse_core::assembler::{backend, compile, run_pipeline};
use gse_core::eval::{evaluate_corpus, f1_score, load_corpus};
use gse_core::interp::{cast_value, transform, ErrorKind, TransformError};
use gse_core::planner::{plan_heuristic, PlannerConfig};
use gse_core::registry::{FramedMessage, MappingStatus, MappingView, Registration, Registry, SchemaView};
use gse_core::schema::{parse_schema, serialize_schema, FieldType, Schema};
use gse_core::stl::{parse_program, serialize_program, validate_program, StlProgram};
use gse_core::Record;
use gse_testkit as tk;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use common::{fixture, read_fixture, Service};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn same_outcome(a: &Result<Record, TransformError>, b: &Result<Record, TransformError>) -> bool {
    match (a, b) {
        (Ok(x), Ok(y)) => x == y,
        (Err(x), Err(y)) => x.kind == y.kind,
        _ => false,
    }
}

// ---------------------------------------------------------------------------

fn f1_reference_triples() -> Outcome {
    let rows = [
        ("hue -> vivint, stl", 0.91, 0.98, 0.94),
        ("hue -> vivint, direct", 0.73, 0.83, 0.78),
        ("simplisafe -> vivint, stl", 1.0, 0.8, 0.89),
        ("simplisafe -> vivint, direct", 0.2, 0.2, 0.2),
        ("simplisafe -> hue, stl", 1.0, 0.9, 0.95),
        ("simplisafe -> hue, direct", 0.8, 0.67, 0.72),
    ];
    for (name, p, r, want) in rows {
        let got = f1_score(p, r);
        ensure((got - want).abs() <= 0.01, || format!("{name}: f1({p}, {r}) = {got:.4}, expected {want}"))?;
    }
    Ok(format!("{} triples within 0.01", rows.len()))
}

fn heuristic_corpus_gate() -> Outcome {
    let start = Instant::now();
    let cases = load_corpus(&fixture("iot")).map_err(|e| e.to_string())?;
    let config = PlannerConfig::default();
    let report = evaluate_corpus(&cases, "heuristic", |c| Ok(plan_heuristic(&c.source, &c.target, &config)))
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(report.macro_f1 >= 0.90, || format!("macro f1 {:.3} < 0.90\n{}", report.macro_f1, report.table()))?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("macro f1 {:.3} over {} cases in {elapsed:.0?}", report.macro_f1, cases.len()))
}

fn pair(src: &str, tgt: &str) -> (Schema, Schema) {
    (parse_schema(src).unwrap(), parse_schema(tgt).unwrap())
}

fn program(same: bool, commands: &str) -> StlProgram {
    let text = format!(
        "source: {{subject: s, version: 1}}\ntarget: {{subject: t, version: 1}}\nmatch: {{same_entity: {same}, reason: r}}\ncommands:\n{commands}"
    );
    parse_program(&text).unwrap()
}

fn interpreter_examples() -> Outcome {
    let run = |s: &Schema, t: &Schema, p: &StlProgram, rec: &str| transform(p, &Record::parse(rec).unwrap(), s, t);
    let rec = |text: &str| Record::parse(text).unwrap();

    let (s, t) = pair(
        "subject: s\nversion: 1\nfields:\n  - {name: d, type: integer, unit: ms}\n",
        "subject: t\nversion: 1\nfields:\n  - {name: d, type: float, unit: s}\n",
    );
    let p = program(true, "  - cast: {source: d, target: d, to: float}\n  - scale: {target: d, factor: 0.001}\n");
    ensure(validate_program(&p, &s, &t).is_empty(), || "ms->s program does not validate".into())?;
    ensure(run(&s, &t, &p, r#"{"d": 1500}"#) == Ok(rec(r#"{"d": 1.5}"#)), || "1500 ms != 1.5 s".into())?;

    let (s, t) = pair(
        "subject: s\nversion: 1\nfields:\n  - {name: c, type: float, unit: celsius}\n",
        "subject: t\nversion: 1\nfields:\n  - {name: f, type: float, unit: fahrenheit}\n",
    );
    let p = program(true, "  - rename: {source: c, target: f}\n  - scale: {target: f, factor: 1.8}\n  - shift: {target: f, offset: 32}\n");
    let out = run(&s, &t, &p, r#"{"c": 20}"#);
    ensure(out == Ok(rec(r#"{"f": 68.0}"#)), || format!("20 C gave {out:?}"))?;

    let (s, t) = pair(
        "subject: s\nversion: 1\nfields:\n  - {name: x, type: integer}\n",
        "subject: t\nversion: 1\nfields:\n  - {name: x, type: integer}\n",
    );
    let scale_first = program(true, "  - copy: {source: x, target: x}\n  - scale: {target: x, factor: 2}\n  - shift: {target: x, offset: 3}\n");
    let shift_first = program(true, "  - copy: {source: x, target: x}\n  - shift: {target: x, offset: 3}\n  - scale: {target: x, factor: 2}\n");
    ensure(run(&s, &t, &scale_first, r#"{"x": 5}"#) == Ok(rec(r#"{"x": 13}"#)), || "scale then shift".into())?;
    ensure(run(&s, &t, &shift_first, r#"{"x": 5}"#) == Ok(rec(r#"{"x": 16}"#)), || "shift then scale".into())?;

    let abort = program(false, "  []\n");
    let kind = run(&s, &t, &abort, r#"{"x": 5}"#).map_err(|e| e.kind);
    ensure(kind == Err(ErrorKind::Abort), || format!("match false gave {kind:?}"))?;
    let missing = program(true, "  - delete: {source: x}\n  - missing: {target: x, reason: gone}\n");
    let kind = run(&s, &t, &missing, r#"{"x": 5}"#).map_err(|e| e.kind);
    ensure(kind == Err(ErrorKind::MappingFailure), || format!("missing gave {kind:?}"))?;

    use FieldType as T;
    let e = T::Enum(vec!["a".into(), "b".into()]);
    let s = |x: &str| Record::Str(x.into());
    let table: Vec<(Record, FieldType, Option<Record>)> = vec![
        (Record::Int(1500), T::Float, Some(Record::Float(1500.0))),
        (Record::Float(3.0), T::Integer, Some(Record::Int(3))),
        (Record::Float(1.5), T::Integer, None),
        (Record::Int(7), T::String, Some(s("7"))),
        (Record::Float(0.1), T::String, Some(s("0.1"))),
        (Record::Bool(true), T::String, Some(s("true"))),
        (s(" 12 "), T::Integer, Some(Record::Int(12))),
        (s("x"), T::Integer, None),
        (s("2.5"), T::Float, Some(Record::Float(2.5))),
        (s("inf"), T::Float, None),
        (s("TRUE"), T::Boolean, Some(Record::Bool(true))),
        (s("0"), T::Boolean, Some(Record::Bool(false))),
        (s("yes"), T::Boolean, None),
        (s("a"), e.clone(), Some(Record::Enum("a".into()))),
        (s("c"), e, None),
        (Record::Bool(true), T::Integer, None),
        (Record::Int(1), T::Boolean, None),
    ];
    for (v, ty, want) in &table {
        let got = cast_value(v, ty);
        let ok = match (want, &got) {
            (Some(w), Ok(g)) => w == g,
            (None, Err(err)) => err.kind == ErrorKind::CastError,
            _ => false,
        };
        ensure(ok, || format!("cast {v} to {ty}: {got:?}"))?;
    }
    Ok(format!("6 program examples and {} cast entries", table.len()))
}

fn fixture_programs() -> Vec<(String, Schema, Schema, StlProgram)> {
    let v2 = parse_schema(&read_fixture("motion/v2.schema.yaml")).unwrap();
    let v1 = parse_schema(&read_fixture("motion/v1.schema.yaml")).unwrap();
    let mut out: Vec<_> = ["motion/v2_to_v1.stl.yaml", "motion/v2_to_v1.gen.stl.yaml"]
        .iter()
        .map(|rel| (rel.to_string(), v2.clone(), v1.clone(), parse_program(&read_fixture(rel)).unwrap()))
        .collect();
    for c in load_corpus(&fixture("iot")).unwrap() {
        out.push((c.name, c.source, c.target, c.gold));
    }
    out
}

fn backend_equivalence() -> Outcome {
    let start = Instant::now();
    let programs = fixture_programs();
    let mut checked = 0;
    for (name, s, t, p) in &programs {
        let art = compile(p, s, t, "pipeline-expr").map_err(|e| format!("{name}: {e}"))?;
        let n = Cell::new(0usize);
        runner(100)
            .run(&tk::record(s), |r| {
                let (a, b) = (transform(p, &r, s, t), run_pipeline(&art.body, &r, s, t));
                n.set(n.get() + 1);
                if same_outcome(&a, &b) {
                    Ok(())
                } else {
                    Err(TestCaseError::fail(format!("{a:?} vs {b:?} on {r}")))
                }
            })
            .map_err(|e| format!("{name}: {e}"))?;
        checked += n.get();
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("{} programs, {checked} records, {elapsed:.0?}", programs.len()))
}

fn roundtrips() -> Outcome {
    runner(1000)
        .run(&tk::schema(), |s| {
            prop_assert_eq!(parse_schema(&serialize_schema(&s)).unwrap(), s);
            Ok(())
        })
        .map_err(|e| format!("schema: {e}"))?;
    runner(1000)
        .run(&tk::program(), |p| {
            prop_assert_eq!(parse_program(&serialize_program(&p)).unwrap(), p);
            Ok(())
        })
        .map_err(|e| format!("stl: {e}"))?;
    let dummy = Schema { subject: "x".into(), version: 1, doc: None, fields: vec![] };
    runner(1000)
        .run(&tk::program(), |p| {
            let body = backend("portable").unwrap().emit(&p, &dummy, &dummy).unwrap();
            prop_assert_eq!(parse_program(&body).unwrap(), p);
            Ok(())
        })
        .map_err(|e| format!("portable: {e}"))?;
    Ok("schema, stl and portable: 1000 cases each".into())
}

fn validator_soundness() -> Outcome {
    let strategy = (tk::schema_pair(), any::<bool>()).prop_flat_map(|((s, t), single)| {
        let config = PlannerConfig { prefer_single_command: single, ..PlannerConfig::default() };
        let p = plan_heuristic(&s, &t, &config);
        let recs = prop::collection::vec(tk::record(&s), 1..8);
        (Just(s), Just(t), Just(p), recs)
    });
    let (programs, records) = (Cell::new(0usize), Cell::new(0usize));
    runner(400)
        .run(&strategy, |(s, t, p, recs)| {
            if p.is_abort() || p.has_missing() || !validate_program(&p, &s, &t).is_empty() {
                return Ok(());
            }
            programs.set(programs.get() + 1);
            for r in &recs {
                records.set(records.get() + 1);
                if let Err(e) = transform(&p, r, &s, &t) {
                    let unsound = e.kind == ErrorKind::PathError || e.detail.contains("conform");
                    prop_assert!(!unsound, "{} on {}\n{}", e, r, serialize_program(&p));
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    ensure(programs.get() >= 100, || format!("only {} validated programs exercised", programs.get()))?;
    Ok(format!("{} validated programs, {} records", programs.get(), records.get()))
}

// ---------------------------------------------------------------------------
// registry end to end

fn json<T: serde::de::DeserializeOwned>(what: &str, run: common::Run) -> Result<T, String> {
    if run.code != 0 {
        return Err(format!("{what}: exit {} {}", run.code, run.stderr.trim()));
    }
    serde_json::from_str(&run.stdout).map_err(|e| format!("{what}: {e}: {}", run.stdout))
}

/// Everything the service exposes about its state.
#[derive(Debug, PartialEq)]
struct Observed {
    schemas: BTreeMap<String, Vec<SchemaView>>,
    mappings: Vec<MappingView>,
}

fn observe_service(svc: &Service, pairs: &[(u32, u32)]) -> Result<Observed, String> {
    let list = svc.gse(&["schema", "list"]);
    let mut schemas = BTreeMap::new();
    for subject in list.stdout.lines() {
        let c = gse_client::Client::new(&svc.url);
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        let views = rt.block_on(c.versions(subject)).map_err(|e| e.to_string())?;
        schemas.insert(subject.to_string(), views);
    }
    let mappings = pairs
        .iter()
        .map(|(s, t)| json(&format!("map show {s} {t}"), svc.gse(&["map", "show", &s.to_string(), &t.to_string()])))
        .collect::<Result<_, _>>()?;
    Ok(Observed { schemas, mappings })
}

fn observe_store(reg: &Registry, pairs: &[(u32, u32)]) -> Observed {
    let schemas = reg
        .subjects()
        .into_iter()
        .map(|s| {
            let v = reg.versions(&s).unwrap();
            (s, v)
        })
        .collect();
    let mappings = pairs.iter().map(|(s, t)| MappingView::from(&reg.mapping(*s, *t).unwrap())).collect();
    Observed { schemas, mappings }
}

fn register(svc: &Service, rel: &str) -> Result<Registration, String> {
    let path = fixture(rel);
    json(&format!("register {rel}"), svc.gse(&["schema", "register", path.to_str().unwrap()]))
}

fn registry_end_to_end() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = dir.path().join("registry.log");
    let svc = Service::start(&store);

    let mode = svc.gse(&["compat", "mode", "motion", "SEMANTIC"]);
    ensure(mode.code == 0 && mode.stdout.trim() == "SEMANTIC", || format!("set mode: {}", mode.stderr))?;
    let v1 = register(&svc, "motion/v1.schema.yaml")?;
    let v2 = register(&svc, "motion/v2.schema.yaml")?;
    ensure(v1.created && v2.created && v1.id != v2.id, || format!("{v1:?} {v2:?}"))?;
    let again = register(&svc, "motion/v1.schema.yaml")?;
    ensure(!again.created && again.id == v1.id, || format!("re-registration gave {again:?}"))?;

    let (src, tgt) = (v2.id.to_string(), v1.id.to_string());
    let made: MappingView = json(
        "map generate",
        svc.gse(&["map", "generate", "--source-id", &src, "--target-id", &tgt, "--engine", "heuristic"]),
    )?;
    ensure(made.diagnostics.is_empty(), || format!("diagnostics {:?}", made.diagnostics))?;
    let approved: MappingView = json("approve", svc.gse(&["mapping", "approve", &src, &tgt]))?;
    ensure(approved.status == MappingStatus::Approved, || format!("status {:?}", approved.status))?;

    let v2_schema = parse_schema(&read_fixture("motion/v2.schema.yaml")).unwrap();
    let v1_schema = parse_schema(&read_fixture("motion/v1.schema.yaml")).unwrap();
    let program = parse_program(&approved.program).map_err(|e| e.to_string())?;
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    let check_transform = |url: &str| -> Result<(), String> {
        let client = gse_client::Client::new(url);
        let payload = r#"{"motion":true,"duration_ms":1500,"state":"Active","temp_c":20.0,"battery_pct":90,"ts":1700000000}"#;
        let frame = FramedMessage::new(v2.id, payload).encode();
        let out = rt.block_on(client.transform(&frame, v1.id)).map_err(|e| e.to_string())?;
        let out = FramedMessage::decode(&out).map_err(|e| e.to_string())?;
        let direct = transform(&program, &Record::parse(payload).unwrap(), &v2_schema, &v1_schema).map_err(|e| e.to_string())?;
        ensure(out.schema_id == v1.id, || format!("frame id {}", out.schema_id))?;
        ensure(out.payload == direct.to_line(), || format!("{} != {}", out.payload, direct.to_line()))
    };
    check_transform(&svc.url)?;

    // IoT corpus: kill the service halfway through and continue after restart.
    let docs = [
        "iot/hue_to_vivint/source.yaml",
        "iot/hue_to_vivint/target.yaml",
        "iot/simplisafe_to_vivint/source.yaml",
        "iot/simplisafe_to_vivint/target.yaml",
        "iot/simplisafe_to_hue/source.yaml",
    ];
    let mut ids = Vec::new();
    let mut pairs = vec![(v2.id, v1.id)];
    let mut svc = svc;
    for (i, rel) in docs.iter().enumerate() {
        ids.push(register(&svc, rel)?.id);
        if i % 2 == 1 {
            let (s, t) = (ids[i - 1], ids[i]);
            let _: MappingView = json(
                "corpus mapping",
                svc.gse(&["map", "generate", "--source-id", &s.to_string(), "--target-id", &t.to_string(), "--engine", "heuristic"]),
            )?;
            pairs.push((s, t));
        }
        if i == 2 {
            let before = observe_service(&svc, &pairs)?;
            svc.kill();
            svc = Service::start(&store);
            let after = observe_service(&svc, &pairs)?;
            ensure(before == after, || "state differs after restart".into())?;
            check_transform(&svc.url)?;
        }
    }
    let last = (ids[4], ids[0]);
    let _: MappingView = json(
        "corpus mapping",
        svc.gse(&["map", "generate", "--source-id", &last.0.to_string(), "--target-id", &last.1.to_string()]),
    )?;
    pairs.push(last);

    let live = observe_service(&svc, &pairs)?;
    svc.kill();
    let replayed = Registry::open(&store, PlannerConfig::default()).map_err(|e| e.to_string())?;
    ensure(observe_store(&replayed, &pairs) == live, || "replayed store differs from the live service".into())?;

    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} schemas, {} mappings, kill/restart and replay equal, {elapsed:.0?}",
        live.schemas.values().map(Vec::len).sum::<usize>(),
        pairs.len()
    ))
}

fn golden_frame() -> Outcome {
    let mut golden = vec![0x01, 0x00, 0x00, 0x00, 0x07];
    golden.extend_from_slice(br#"{"status":"active"}"#);
    let m = FramedMessage::new(7, r#"{"status":"active"}"#);
    ensure(m.encode() == golden, || format!("encoded {:02x?}", m.encode()))?;
    let back = FramedMessage::decode(&golden).map_err(|e| e.to_string())?;
    ensure(back == m, || format!("decoded {back:?}"))?;
    ensure(back.encode() == golden, || "re-encode differs".into())?;
    Ok(format!("{} bytes", golden.len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("f1 arithmetic on reference triples", f1_reference_triples),
        ("heuristic planner macro-f1 >= 0.90 on iot corpus, < 1 s", heuristic_corpus_gate),
        ("interpreter examples", interpreter_examples),
        ("pipeline-expr equals interpreter, 100 records per fixture program", backend_equivalence),
        ("roundtrip identities, 1000 cases each", roundtrips),
        ("validator soundness", validator_soundness),
        ("registry end to end with crash recovery", registry_end_to_end),
        ("golden frame bytes", golden_frame),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name} ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
