//! Deterministic name-similarity planner.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::units::infer_unit_conversion;
use super::PlannerConfig;
use crate::path::FieldPath;
use crate::record::Record;
use crate::schema::{Field, FieldType, Schema, TypeKind};
use crate::stl::expr::{BinOp, Builtin, Expr};
use crate::stl::validate::cast_supported;
use crate::stl::{FnRef, MatchHeader, StlCommand, StlProgram};

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "by", "for", "from", "in", "is", "it", "its", "of", "on", "or", "the",
    "this", "that", "to", "with",
];

/// Lower-cased word tokens; splits on punctuation, snake_case, camelCase and
/// letter/digit boundaries.
pub fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split(|c: char| !c.is_alphanumeric()) {
        let chars: Vec<char> = chunk.chars().collect();
        let mut cur = String::new();
        for (i, &c) in chars.iter().enumerate() {
            if i > 0 && !cur.is_empty() {
                let prev = chars[i - 1];
                let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
                let boundary = (prev.is_lowercase() && c.is_uppercase())
                    || (prev.is_uppercase() && c.is_uppercase() && next_lower)
                    || (prev.is_alphabetic() != c.is_alphabetic());
                if boundary {
                    out.push(std::mem::take(&mut cur).to_lowercase());
                }
            }
            cur.push(c);
        }
        if !cur.is_empty() {
            out.push(cur.to_lowercase());
        }
    }
    out
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    a.intersection(b).count() as f64 / a.union(b).count() as f64
}

/// Field name similarity in [0, 1]: mean of token Jaccard and normalized
/// edit similarity of the concatenated tokens.
pub fn name_score(a: &str, b: &str) -> f64 {
    let (ta, tb) = (tokens(a), tokens(b));
    let (ja, jb) = (ta.concat(), tb.concat());
    let sa: BTreeSet<String> = ta.into_iter().collect();
    let sb: BTreeSet<String> = tb.into_iter().collect();
    let longest = ja.chars().count().max(jb.chars().count());
    let edit = if longest == 0 {
        1.0
    } else {
        1.0 - strsim::levenshtein(&ja, &jb) as f64 / longest as f64
    };
    0.5 * jaccard(&sa, &sb) + 0.5 * edit
}

fn content_tokens(schema: &Schema) -> BTreeSet<String> {
    let text = format!("{} {}", schema.subject, schema.doc.as_deref().unwrap_or(""));
    tokens(&text)
        .into_iter()
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// Token overlap coefficient of subject and doc text.
pub fn entity_similarity(source: &Schema, target: &Schema) -> f64 {
    let (a, b) = (content_tokens(source), content_tokens(target));
    if a.is_empty() || b.is_empty() {
        return if a == b { 1.0 } else { 0.0 };
    }
    a.intersection(&b).count() as f64 / a.len().min(b.len()) as f64
}

/// Fields the planner maps one by one: scalars and empty objects.
fn units_of(schema: &Schema) -> Vec<(FieldPath, &Field)> {
    schema
        .walk()
        .into_iter()
        .filter(|(_, f)| !matches!(&f.ty, FieldType::Object(c) if !c.is_empty()))
        .collect()
}

fn family(ty: &FieldType) -> u8 {
    match ty.kind() {
        TypeKind::Integer | TypeKind::Float => 0,
        TypeKind::String => 1,
        TypeKind::Boolean => 2,
        TypeKind::Enum => 3,
        TypeKind::Object => 4,
    }
}

fn natural_zero(ty: &FieldType) -> Option<Record> {
    match ty {
        FieldType::Integer => Some(Record::Int(0)),
        FieldType::Float => Some(Record::Float(0.0)),
        FieldType::String => Some(Record::Str(String::new())),
        FieldType::Boolean => Some(Record::Bool(false)),
        _ => None,
    }
}

/// Source-variant to target-variant table: exact, then case-insensitive,
/// then greedy by name score above the threshold.
fn link_table(from: &[String], to: &[String], threshold: f64) -> Vec<(String, String)> {
    let mut pairs: BTreeMap<&str, &str> = BTreeMap::new();
    let mut taken: HashSet<&str> = HashSet::new();
    for s in from {
        if to.contains(s) {
            pairs.insert(s, s);
            taken.insert(s);
        }
    }
    for s in from {
        if pairs.contains_key(s.as_str()) {
            continue;
        }
        if let Some(t) = to.iter().find(|t| !taken.contains(t.as_str()) && t.eq_ignore_ascii_case(s)) {
            pairs.insert(s, t);
            taken.insert(t);
        }
    }
    let mut cands: Vec<(f64, &str, &str)> = Vec::new();
    for s in from.iter().filter(|s| !pairs.contains_key(s.as_str())) {
        for t in to.iter().filter(|t| !taken.contains(t.as_str())) {
            let sc = name_score(s, t);
            if sc >= threshold {
                cands.push((sc, s, t));
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)).then(a.2.cmp(b.2)));
    for (_, s, t) in cands {
        if !pairs.contains_key(s) && !taken.contains(t) {
            pairs.insert(s, t);
            taken.insert(t);
        }
    }
    from.iter()
        .filter_map(|s| pairs.get(s.as_str()).map(|t| (s.clone(), t.to_string())))
        .collect()
}

struct Pairing<'a> {
    config: &'a PlannerConfig,
    source: &'a Schema,
}

impl Pairing<'_> {
    /// Whether a source field can feed a target field at all, and if so
    /// whether a null-filling DEFAULT is possible when needed.
    fn compatible(&self, sp: &FieldPath, s: &Field, t: &Field) -> bool {
        let kinds = match (&s.ty, &t.ty) {
            (FieldType::Enum(a), FieldType::Enum(b)) => !link_table(a, b, self.config.similarity_threshold).is_empty(),
            (FieldType::Object(a), FieldType::Object(b)) => a.is_empty() && b.is_empty(),
            (a, b) => a.kind() == b.kind() || cast_supported(a.kind(), b.kind()),
        };
        if !kinds {
            return false;
        }
        if let (Some(su), Some(tu)) = (&s.unit, &t.unit) {
            if !(s.ty.kind().is_numeric() || s.ty.kind() == TypeKind::String) || !t.ty.kind().is_numeric() {
                return su.eq_ignore_ascii_case(tu);
            }
            if infer_unit_conversion(su, tu).is_none() {
                return false;
            }
        }
        if !t.optional && self.source.path_nullable(sp) {
            return t.default.is_some() || natural_zero(&t.ty).is_some();
        }
        true
    }
}

/// Emits the commands that carry one matched source field into its target.
#[allow(clippy::too_many_arguments)]
fn emit_pair(
    sp: &FieldPath,
    s: &Field,
    tp: &FieldPath,
    t: &Field,
    config: &PlannerConfig,
    source: &Schema,
    gens: &mut BTreeSet<String>,
    out: &mut Vec<StlCommand>,
) {
    let conv = match (&s.unit, &t.unit) {
        (Some(a), Some(b)) if t.ty.kind().is_numeric() => infer_unit_conversion(a, b).filter(|c| !c.is_identity()),
        _ => None,
    };
    let same_kind = s.ty.kind() == t.ty.kind();
    let move_cmd = || {
        if sp == tp {
            StlCommand::Copy { source: sp.clone(), target: tp.clone() }
        } else {
            StlCommand::Rename { source: sp.clone(), target: tp.clone() }
        }
    };

    match conv {
        None => {
            if same_kind {
                out.push(move_cmd());
                if let (FieldType::Enum(a), FieldType::Enum(b)) = (&s.ty, &t.ty) {
                    let table = link_table(a, b, config.similarity_threshold);
                    if table.iter().any(|(k, v)| k != v) || table.len() < a.len() {
                        out.push(StlCommand::Link { target: tp.clone(), table, fallback: None });
                    }
                }
            } else {
                out.push(StlCommand::Cast { source: sp.clone(), target: tp.clone(), to: t.ty.clone() });
            }
        }
        Some(c) => {
            let int_target = t.ty.kind() == TypeKind::Integer;
            let exact_on_ints = c.factor.fract() == 0.0 && c.offset.fract() == 0.0 && s.ty.kind() == TypeKind::Integer;
            let input = if s.ty.kind() == TypeKind::String {
                Expr::call(Builtin::ToNumber, vec![Expr::value()])
            } else {
                Expr::value()
            };
            let affine = |input: Expr| {
                let mut e = input;
                if c.factor != 1.0 {
                    e = Expr::bin(BinOp::Mul, e, Expr::float(c.factor));
                }
                if c.offset != 0.0 {
                    e = Expr::bin(BinOp::Add, e, Expr::float(c.offset));
                }
                e
            };
            if int_target && !exact_on_ints {
                let e = Expr::call(Builtin::Round, vec![affine(input)]);
                out.push(StlCommand::Apply { source: sp.clone(), target: tp.clone(), func: FnRef::Inline(e) });
            } else if config.prefer_single_command && c.offset != 0.0 {
                let name = format!("{}_to_{}", c.source_unit, c.target_unit);
                if crate::path::is_identifier(&name) && gens.insert(name.clone()) {
                    out.push(StlCommand::Gen { name: name.clone(), expr: affine(input.clone()) });
                }
                if gens.contains(&name) {
                    out.push(StlCommand::Apply { source: sp.clone(), target: tp.clone(), func: FnRef::Named(name) });
                } else {
                    out.push(StlCommand::Apply { source: sp.clone(), target: tp.clone(), func: FnRef::Inline(affine(input)) });
                }
            } else {
                if same_kind {
                    out.push(move_cmd());
                } else {
                    out.push(StlCommand::Cast { source: sp.clone(), target: tp.clone(), to: t.ty.clone() });
                }
                if c.factor != 1.0 {
                    out.push(StlCommand::Scale { target: tp.clone(), factor: c.factor });
                }
                if c.offset != 0.0 {
                    out.push(StlCommand::Shift { target: tp.clone(), offset: c.offset });
                }
            }
        }
    }

    if !t.optional && source.path_nullable(sp) {
        if let Some(v) = t.default.clone().or_else(|| natural_zero(&t.ty)) {
            out.push(StlCommand::Default { target: tp.clone(), value: v });
        }
    }
}

/// Plans a mapping from `source` to `target` using names, types and units.
pub fn plan_heuristic(source: &Schema, target: &Schema, config: &PlannerConfig) -> StlProgram {
    let sim = entity_similarity(source, target);
    let threshold = config.similarity_threshold;
    let mut program = StlProgram {
        source: source.reference(),
        target: target.reference(),
        header: MatchHeader {
            same_entity: sim >= threshold,
            reason: format!(
                "subject/doc token similarity {sim:.2} {} threshold {threshold:.2}",
                if sim >= threshold { ">=" } else { "<" }
            ),
        },
        commands: Vec::new(),
    };
    if !program.header.same_entity {
        return program;
    }

    let src_units = units_of(source);
    let tgt_units = units_of(target);
    let pairing = Pairing { config, source };

    let mut cands: Vec<(f64, String, String, usize, usize)> = Vec::new();
    for (si, (sp, s)) in src_units.iter().enumerate() {
        for (ti, (tp, t)) in tgt_units.iter().enumerate() {
            if !pairing.compatible(sp, s, t) {
                continue;
            }
            let score = name_score(&sp.to_string(), &tp.to_string());
            if score >= threshold {
                cands.push((score, sp.to_string(), tp.to_string(), si, ti));
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)).then_with(|| a.2.cmp(&b.2)));

    let mut src_of: BTreeMap<usize, usize> = BTreeMap::new();
    let mut used_src: HashSet<usize> = HashSet::new();
    for (_, _, _, si, ti) in cands {
        if !used_src.contains(&si) && !src_of.contains_key(&ti) {
            used_src.insert(si);
            src_of.insert(ti, si);
        }
    }

    // a type family with exactly one leftover on each side pairs up
    let mut left_s: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    let mut left_t: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (si, (_, s)) in src_units.iter().enumerate() {
        if !used_src.contains(&si) {
            left_s.entry(family(&s.ty)).or_default().push(si);
        }
    }
    for (ti, (_, t)) in tgt_units.iter().enumerate() {
        if !src_of.contains_key(&ti) {
            left_t.entry(family(&t.ty)).or_default().push(ti);
        }
    }
    for (fam, ts) in &left_t {
        if let (Some(ss), [ti]) = (left_s.get(fam), ts.as_slice()) {
            if let [si] = ss.as_slice() {
                let (sp, s) = &src_units[*si];
                if pairing.compatible(sp, s, tgt_units[*ti].1) {
                    used_src.insert(*si);
                    src_of.insert(*ti, *si);
                }
            }
        }
    }

    let mut gens = BTreeSet::new();
    let mut cmds = Vec::new();
    for (ti, (tp, t)) in tgt_units.iter().enumerate() {
        match src_of.get(&ti) {
            Some(&si) => {
                let (sp, s) = &src_units[si];
                emit_pair(sp, s, tp, t, config, source, &mut gens, &mut cmds);
            }
            None => match (&t.default, natural_zero(&t.ty)) {
                (Some(d), _) => cmds.push(StlCommand::Default { target: tp.clone(), value: d.clone() }),
                (None, Some(z)) if t.optional => cmds.push(StlCommand::Add { target: tp.clone(), value: z }),
                (None, None) if t.optional && matches!(&t.ty, FieldType::Object(c) if c.is_empty()) => {
                    cmds.push(StlCommand::Add { target: tp.clone(), value: Record::Object(BTreeMap::new()) })
                }
                _ => cmds.push(StlCommand::Missing {
                    target: tp.clone(),
                    reason: format!("no source field corresponds to `{tp}`"),
                }),
            },
        }
    }
    for (si, (sp, _)) in src_units.iter().enumerate() {
        if !used_src.contains(&si) {
            cmds.push(StlCommand::Delete { source: sp.clone() });
        }
    }
    program.commands = cmds;
    program
}
