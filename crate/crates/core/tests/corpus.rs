use std::path::PathBuf;
use std::time::Instant;

use gse_core::eval::{evaluate_corpus, load_corpus, score_program};
use gse_core::planner::{plan_heuristic, PlannerConfig};
use gse_core::stl::validate::validate_program;

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/iot")
}

#[test]
fn gold_programs_validate() {
    let cases = load_corpus(&corpus_dir()).unwrap();
    assert_eq!(cases.len(), 3);
    for c in &cases {
        assert!(validate_program(&c.gold, &c.source, &c.target).is_empty(), "{}", c.name);
        let s = score_program(&c.gold, &c.gold);
        assert_eq!((s.fp, s.fn_), (0, 0));
    }
}

#[test]
fn heuristic_reaches_the_corpus_gate() {
    let start = Instant::now();
    let cases = load_corpus(&corpus_dir()).unwrap();
    let config = PlannerConfig::default();
    let report = evaluate_corpus(&cases, "heuristic", |c| Ok(plan_heuristic(&c.source, &c.target, &config))).unwrap();
    eprintln!("{}", report.table());
    assert!(report.macro_f1 >= 0.90, "{}", report.table());
    assert!(start.elapsed().as_secs_f64() < 1.0);
}
