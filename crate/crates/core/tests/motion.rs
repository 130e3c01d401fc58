use std::path::PathBuf;

use gse_core::assembler::compile;
use gse_core::eval::score_program;
use gse_core::planner::{plan_heuristic, plan_with_model, PlannerConfig, TranscriptClient};
use gse_core::schema::{parse_schema, Schema};
use gse_core::stl::validate::validate_program;
use gse_core::stl::{parse_program, serialize_program, StlProgram};

fn fixture(rel: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn pair() -> (Schema, Schema) {
    (
        parse_schema(&fixture("motion/v2.schema.yaml")).unwrap(),
        parse_schema(&fixture("motion/v1.schema.yaml")).unwrap(),
    )
}

fn program(rel: &str) -> StlProgram {
    parse_program(&fixture(rel)).unwrap()
}

#[test]
fn fixture_programs_validate() {
    let (v2, v1) = pair();
    for rel in ["motion/v2_to_v1.stl.yaml", "motion/v2_to_v1.gen.stl.yaml"] {
        let d = validate_program(&program(rel), &v2, &v1);
        assert!(d.is_empty(), "{rel}: {d:?}");
    }
}

#[test]
fn heuristic_matches_the_hand_written_mapping() {
    let (v2, v1) = pair();
    let planned = plan_heuristic(&v2, &v1, &PlannerConfig::default());
    let s = score_program(&planned, &program("motion/v2_to_v1.stl.yaml"));
    assert_eq!((s.fp, s.fn_), (0, 0), "{}", serialize_program(&planned));
}

#[test]
fn transcript_repair_round() {
    let (v2, v1) = pair();
    let client = TranscriptClient::from_json(&fixture("transcripts/motion_v2_to_v1.json")).unwrap();
    let out = plan_with_model(&client, &v2, &v1, &PlannerConfig::default()).unwrap();
    assert_eq!(out.repair_rounds, 1);
    assert!(out.diagnostics.is_empty());
    let prompts = client.prompts();
    assert!(prompts[1].contains("[unconsumed-source]"), "{}", prompts[1]);
    assert_eq!(score_program(&out.program, &program("motion/v2_to_v1.stl.yaml")).f1, 1.0);
}

#[test]
fn sql_view_golden() {
    let (v2, v1) = pair();
    let art = compile(&program("motion/v2_to_v1.stl.yaml"), &v2, &v1, "sql-view").unwrap();
    assert_eq!(art.body, fixture("motion/v2_to_v1.sql"));
}
