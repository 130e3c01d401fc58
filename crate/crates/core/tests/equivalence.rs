use std::cell::Cell;
use std::path::PathBuf;

use gse_core::assembler::{compile, run_pipeline};
use gse_core::eval::load_corpus;
use gse_core::interp::transform;
use gse_core::schema::{parse_schema, Schema};
use gse_core::stl::{parse_program, StlProgram};
use proptest::test_runner::{Config, TestCaseError, TestRunner};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn cases() -> Vec<(String, Schema, Schema, StlProgram)> {
    let read = |rel: &str| std::fs::read_to_string(fixtures().join(rel)).unwrap();
    let v2 = parse_schema(&read("motion/v2.schema.yaml")).unwrap();
    let v1 = parse_schema(&read("motion/v1.schema.yaml")).unwrap();
    let mut out: Vec<_> = ["motion/v2_to_v1.stl.yaml", "motion/v2_to_v1.gen.stl.yaml"]
        .iter()
        .map(|rel| (rel.to_string(), v2.clone(), v1.clone(), parse_program(&read(rel)).unwrap()))
        .collect();
    for c in load_corpus(&fixtures().join("iot")).unwrap() {
        out.push((c.name, c.source, c.target, c.gold));
    }
    out
}

#[test]
fn pipeline_artifacts_match_the_interpreter_on_fixture_programs() {
    for (name, s, t, p) in cases() {
        let art = compile(&p, &s, &t, "pipeline-expr").unwrap();
        let mut runner = TestRunner::new(Config::with_cases(100));
        let ok = Cell::new(0usize);
        runner
            .run(&gse_testkit::record(&s), |r| {
                let (a, b) = (transform(&p, &r, &s, &t), run_pipeline(&art.body, &r, &s, &t));
                let same = match (&a, &b) {
                    (Ok(x), Ok(y)) => x == y,
                    (Err(x), Err(y)) => x.kind == y.kind,
                    _ => false,
                };
                if !same {
                    return Err(TestCaseError::fail(format!("{name}: {a:?} vs {b:?} on {r}")));
                }
                ok.set(ok.get() + a.is_ok() as usize);
                Ok(())
            })
            .unwrap();
        assert!(ok.get() > 0, "{name}: no record translated successfully");
    }
}
