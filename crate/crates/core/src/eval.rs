//! Precision/recall/F1 scoring of predicted programs against gold programs.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::Record;
use crate::schema::{parse_schema, Schema};
use crate::stl::expr::{Builtin, Expr};
use crate::stl::validate::validate_program;
use crate::stl::{parse_program, FnRef, StlCommand, StlProgram};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("{path}: {detail}")]
    Bundle { path: PathBuf, detail: String },
    #[error("gold program for case `{case}` does not validate: {detail}")]
    InvalidGold { case: String, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl EvalResult {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> EvalResult {
        let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
        EvalResult {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1: f1_score(precision, recall),
        }
    }

    /// Scores a case that could not be planned.
    pub fn failed() -> EvalResult {
        EvalResult {
            tp: 0,
            fp: 0,
            fn_: 0,
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        }
    }
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

fn same_literal(a: &Record, b: &Record) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => close(x, y),
        _ => match (a, b) {
            (Record::Str(x) | Record::Enum(x), Record::Str(y) | Record::Enum(y)) => x == y,
            (Record::Object(x), Record::Object(y)) => {
                x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| same_literal(v, w)))
            }
            _ => a == b,
        },
    }
}

/// Canonical text of the function an APPLY evaluates, resolving GEN names
/// within its own program.
fn applied_fn(func: &FnRef, gens: &HashMap<&str, &Expr>) -> String {
    match func {
        FnRef::Named(n) => match (gens.get(n.as_str()), Builtin::unary_by_name(n)) {
            (Some(e), _) => e.fully_parenthesized(),
            (None, Some(b)) => Expr::call(b, vec![Expr::value()]).fully_parenthesized(),
            (None, None) => format!("<unresolved {n}>"),
        },
        FnRef::Inline(e) => e.fully_parenthesized(),
    }
}

fn gen_table(p: &StlProgram) -> HashMap<&str, &Expr> {
    p.commands
        .iter()
        .filter_map(|c| match c {
            StlCommand::Gen { name, expr } => Some((name.as_str(), expr)),
            _ => None,
        })
        .collect()
}

/// Command equality used for scoring. Free-text MISSING reasons and GEN
/// names are labels, not mapping content, so they do not take part.
fn same_command(a: &StlCommand, ga: &HashMap<&str, &Expr>, b: &StlCommand, gb: &HashMap<&str, &Expr>) -> bool {
    use StlCommand as C;
    if a.name() != b.name() || a.source() != b.source() || a.target() != b.target() {
        return false;
    }
    match (a, b) {
        (C::Copy { .. }, C::Copy { .. }) | (C::Rename { .. }, C::Rename { .. }) | (C::Delete { .. }, C::Delete { .. }) => true,
        (C::Missing { .. }, C::Missing { .. }) => true,
        (C::Add { value: x, .. }, C::Add { value: y, .. }) | (C::Default { value: x, .. }, C::Default { value: y, .. }) => {
            same_literal(x, y)
        }
        (C::Cast { to: x, .. }, C::Cast { to: y, .. }) => x == y,
        (C::Scale { factor: x, .. }, C::Scale { factor: y, .. }) => close(*x, *y),
        (C::Shift { offset: x, .. }, C::Shift { offset: y, .. }) => close(*x, *y),
        (C::Link { table: x, fallback: fx, .. }, C::Link { table: y, fallback: fy, .. }) => {
            let mx: HashMap<_, _> = x.iter().cloned().collect();
            let my: HashMap<_, _> = y.iter().cloned().collect();
            mx == my && fx == fy
        }
        (C::Gen { expr: x, .. }, C::Gen { expr: y, .. }) => x.fully_parenthesized() == y.fully_parenthesized(),
        (C::Apply { func: x, .. }, C::Apply { func: y, .. }) => applied_fn(x, ga) == applied_fn(y, gb),
        _ => false,
    }
}

/// Command-level scoring; MATCH headers are not counted.
pub fn score_program(predicted: &StlProgram, gold: &StlProgram) -> EvalResult {
    let (gp, gg) = (gen_table(predicted), gen_table(gold));
    let mut used = vec![false; predicted.commands.len()];
    let mut tp = 0;
    for g in &gold.commands {
        let hit = predicted
            .commands
            .iter()
            .enumerate()
            .find(|(i, p)| !used[*i] && same_command(p, &gp, g, &gg));
        if let Some((i, _)) = hit {
            used[i] = true;
            tp += 1;
        }
    }
    EvalResult::from_counts(tp, predicted.commands.len() - tp, gold.commands.len() - tp)
}

// ---------------------------------------------------------------------------
// corpus

#[derive(Debug, Clone)]
pub struct GoldCase {
    pub name: String,
    pub source: Schema,
    pub target: Schema,
    pub gold: StlProgram,
}

impl GoldCase {
    pub fn check(&self) -> Result<(), EvalError> {
        let diags = validate_program(&self.gold, &self.source, &self.target);
        match diags.first() {
            None => Ok(()),
            Some(d) => Err(EvalError::InvalidGold {
                case: self.name.clone(),
                detail: d.to_string(),
            }),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    #[serde(default)]
    #[allow(dead_code)]
    name: Option<String>,
    cases: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.yaml";
pub const SOURCE_FILE: &str = "source.yaml";
pub const TARGET_FILE: &str = "target.yaml";
pub const GOLD_FILE: &str = "gold.stl.yaml";

fn read(path: &Path) -> Result<String, EvalError> {
    std::fs::read_to_string(path).map_err(|e| EvalError::Bundle {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

fn bundle_err(path: &Path, e: impl ToString) -> EvalError {
    EvalError::Bundle {
        path: path.to_path_buf(),
        detail: e.to_string(),
    }
}

/// Loads one case directory holding `source.yaml`, `target.yaml` and
/// `gold.stl.yaml`.
pub fn load_case(dir: &Path) -> Result<GoldCase, EvalError> {
    let sp = dir.join(SOURCE_FILE);
    let tp = dir.join(TARGET_FILE);
    let gp = dir.join(GOLD_FILE);
    let case = GoldCase {
        name: dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        source: parse_schema(&read(&sp)?).map_err(|e| bundle_err(&sp, e))?,
        target: parse_schema(&read(&tp)?).map_err(|e| bundle_err(&tp, e))?,
        gold: parse_program(&read(&gp)?).map_err(|e| bundle_err(&gp, e))?,
    };
    case.check()?;
    Ok(case)
}

/// Loads every case listed in `<dir>/manifest.yaml`.
pub fn load_corpus(dir: &Path) -> Result<Vec<GoldCase>, EvalError> {
    let mp = dir.join(MANIFEST_FILE);
    let m: Manifest = serde_yaml::from_str(&read(&mp)?).map_err(|e| bundle_err(&mp, e))?;
    m.cases.iter().map(|c| load_case(&dir.join(c))).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseReport {
    pub case: String,
    #[serde(flatten)]
    pub result: EvalResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusReport {
    pub engine: String,
    pub cases: Vec<CaseReport>,
    pub macro_f1: f64,
}

/// Plans every case with `planner` and scores it. A planner failure scores
/// f1 = 0 for that case and the run continues.
pub fn evaluate_corpus<F>(cases: &[GoldCase], engine: &str, mut planner: F) -> Result<CorpusReport, EvalError>
where
    F: FnMut(&GoldCase) -> Result<StlProgram, String>,
{
    if cases.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let reports: Vec<CaseReport> = cases
        .iter()
        .map(|c| match planner(c) {
            Ok(p) => CaseReport {
                case: c.name.clone(),
                result: score_program(&p, &c.gold),
                error: None,
            },
            Err(e) => CaseReport {
                case: c.name.clone(),
                result: EvalResult::failed(),
                error: Some(e),
            },
        })
        .collect();
    let macro_f1 = reports.iter().map(|r| r.result.f1).sum::<f64>() / reports.len() as f64;
    Ok(CorpusReport {
        engine: engine.to_string(),
        cases: reports,
        macro_f1,
    })
}

impl CorpusReport {
    /// Aligned text table.
    pub fn table(&self) -> String {
        let width = self.cases.iter().map(|c| c.case.len()).max().unwrap_or(4).max(4);
        let mut out = format!(
            "{:<width$}  {:>4} {:>4} {:>4}  {:>9} {:>6} {:>5}\n",
            "case", "tp", "fp", "fn", "precision", "recall", "f1"
        );
        for c in &self.cases {
            let r = &c.result;
            let _ = write!(
                out,
                "{:<width$}  {:>4} {:>4} {:>4}  {:>9.2} {:>6.2} {:>5.2}",
                c.case, r.tp, r.fp, r.fn_, r.precision, r.recall, r.f1
            );
            if let Some(e) = &c.error {
                let _ = write!(out, "  ({e})");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "macro-average f1 ({}): {:.2}", self.engine, self.macro_f1);
        out
    }
}
