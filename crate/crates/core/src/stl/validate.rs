//! Static checks of a program against a (source, target) schema pair.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::expr::{BinOp, Builtin, Expr, UnaryOp, INPUT_VAR};
use super::{FnRef, StlCommand, StlProgram};
use crate::path::FieldPath;
use crate::schema::{conform_value, Field, FieldType, Schema, TypeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagCode {
    UnknownSourcePath,
    UnknownTargetPath,
    UncoveredTarget,
    Conflict,
    UnconsumedSource,
    Order,
    Type,
    UnresolvedFn,
    AbortWithCommands,
    Nullable,
    Protocol,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::UnknownSourcePath => "unknown-source-path",
            DiagCode::UnknownTargetPath => "unknown-target-path",
            DiagCode::UncoveredTarget => "uncovered-target",
            DiagCode::Conflict => "conflict",
            DiagCode::UnconsumedSource => "unconsumed-source",
            DiagCode::Order => "order",
            DiagCode::Type => "type",
            DiagCode::UnresolvedFn => "unresolved-fn",
            DiagCode::AbortWithCommands => "abort-with-commands",
            DiagCode::Nullable => "nullable",
            DiagCode::Protocol => "protocol",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: DiagCode,
    /// Index into the program's command list, when one command is at fault.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub message: String,
}

impl Diagnostic {
    pub fn protocol(message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            code: DiagCode::Protocol,
            command: None,
            path: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.code.as_str())?;
        if let Some(i) = self.command {
            write!(f, " command #{i}")?;
        }
        if let Some(p) = &self.path {
            write!(f, " `{p}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

/// Whether the runtime cast table has an entry for `from -> to`.
pub fn cast_supported(from: TypeKind, to: TypeKind) -> bool {
    use TypeKind::*;
    from == to
        || matches!(
            (from, to),
            (Integer, Float)
                | (Float, Integer)
                | (Integer | Float, String)
                | (String, Integer | Float)
                | (Boolean, String)
                | (String, Boolean)
                | (String, Enum)
        )
}

/// Whether a value of field `src` can be stored unchanged into field `dst`
/// (integers widen to floats; enum variants must be contained).
fn assignable(src: &Field, dst: &Field, relax_enum: bool) -> Result<(), String> {
    match (&src.ty, &dst.ty) {
        (FieldType::Integer, FieldType::Float) => Ok(()),
        (FieldType::Enum(a), FieldType::Enum(b)) => {
            if relax_enum || a.iter().all(|v| b.contains(v)) {
                Ok(())
            } else {
                let extra: Vec<_> = a.iter().filter(|v| !b.contains(v)).cloned().collect();
                Err(format!("source variants {extra:?} are not target variants (use LINK)"))
            }
        }
        (FieldType::Object(sf), FieldType::Object(df)) => {
            for d in df {
                match sf.iter().find(|s| s.name == d.name) {
                    Some(s) => {
                        if s.optional && !d.optional {
                            return Err(format!("`{}` is optional in source but required in target", d.name));
                        }
                        assignable(s, d, false).map_err(|e| format!("{}: {e}", d.name))?;
                    }
                    None if d.optional => {}
                    None => return Err(format!("target member `{}` has no source member", d.name)),
                }
            }
            if let Some(s) = sf.iter().find(|s| df.iter().all(|d| d.name != s.name)) {
                return Err(format!("source member `{}` has no target member", s.name));
            }
            Ok(())
        }
        (a, b) if a.kind() == b.kind() => Ok(()),
        (a, b) => Err(format!("{} is not assignable to {}", a.kind(), b.kind())),
    }
}

/// Coarse static type of an expression result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Inferred {
    Known(TypeKind),
    Numeric,
    Unknown,
}

fn expr_view(kind: TypeKind) -> Inferred {
    // expressions see enum symbols as strings
    match kind {
        TypeKind::Enum => Inferred::Known(TypeKind::String),
        TypeKind::Object => Inferred::Unknown,
        k => Inferred::Known(k),
    }
}

fn join(a: Inferred, b: Inferred) -> Inferred {
    use Inferred::*;
    match (a, b) {
        (x, y) if x == y => x,
        (Known(x), Known(y)) if x.is_numeric() && y.is_numeric() => Numeric,
        (Known(x), Numeric) | (Numeric, Known(x)) if x.is_numeric() => Numeric,
        _ => Unknown,
    }
}

fn infer(expr: &Expr, input: Inferred, source: &Schema) -> Inferred {
    use Inferred::*;
    let numeric = |i: Inferred| matches!(i, Numeric) || matches!(i, Known(k) if k.is_numeric());
    match expr {
        Expr::Var(v) if v == INPUT_VAR => input,
        Expr::Var(_) => Unknown,
        Expr::Src(p) => source.field_at(p).map(|f| expr_view(f.ty.kind())).unwrap_or(Unknown),
        Expr::Lit(r) => match r.kind_name() {
            "integer" => Known(TypeKind::Integer),
            "float" => Known(TypeKind::Float),
            "string" => Known(TypeKind::String),
            "boolean" => Known(TypeKind::Boolean),
            _ => Unknown,
        },
        Expr::Unary(UnaryOp::Not, _) => Known(TypeKind::Boolean),
        Expr::Unary(UnaryOp::Neg, e) => infer(e, input, source),
        Expr::Binary(op, a, b) => match op {
            BinOp::Div => Known(TypeKind::Float),
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Rem => {
                let (x, y) = (infer(a, input, source), infer(b, input, source));
                match (x, y) {
                    (Known(TypeKind::Integer), Known(TypeKind::Integer)) => Known(TypeKind::Integer),
                    (Known(TypeKind::Float), _) | (_, Known(TypeKind::Float)) => Known(TypeKind::Float),
                    (x, y) if numeric(x) && numeric(y) => Numeric,
                    _ => Numeric,
                }
            }
            _ => Known(TypeKind::Boolean),
        },
        Expr::If(_, a, b) => join(infer(a, input, source), infer(b, input, source)),
        Expr::Call(f, args) => match f {
            Builtin::Round | Builtin::Floor | Builtin::Ceil => Known(TypeKind::Integer),
            Builtin::Abs => infer(&args[0], input, source),
            Builtin::Min | Builtin::Max => join(infer(&args[0], input, source), infer(&args[1], input, source)),
            Builtin::Concat | Builtin::Lower | Builtin::Upper | Builtin::Substr | Builtin::ToString => {
                Known(TypeKind::String)
            }
            Builtin::ToNumber => Numeric,
            Builtin::ToBoolean => Known(TypeKind::Boolean),
            _ => Unknown,
        },
        Expr::Let(..) | Expr::Record(_) => Unknown,
    }
}

fn result_castable(result: Inferred, to: TypeKind) -> bool {
    match result {
        Inferred::Unknown => true,
        Inferred::Numeric => cast_supported(TypeKind::Integer, to) || cast_supported(TypeKind::Float, to),
        Inferred::Known(k) => cast_supported(k, to),
    }
}

struct Checker<'a> {
    source: &'a Schema,
    target: &'a Schema,
    diags: Vec<Diagnostic>,
}

impl<'a> Checker<'a> {
    fn push(&mut self, code: DiagCode, command: Option<usize>, path: Option<&FieldPath>, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            code,
            command,
            path: path.map(ToString::to_string),
            message: message.into(),
        });
    }

    fn source_field(&mut self, i: usize, cmd: &str, path: &FieldPath) -> Option<&'a Field> {
        let f = self.source.field_at(path);
        if f.is_none() {
            self.push(
                DiagCode::UnknownSourcePath,
                Some(i),
                Some(path),
                format!("{cmd} reads a field that is not in source schema {}", self.source.reference()),
            );
        }
        f
    }

    fn target_field(&mut self, i: usize, cmd: &str, path: &FieldPath) -> Option<&'a Field> {
        let f = self.target.field_at(path);
        if f.is_none() {
            self.push(
                DiagCode::UnknownTargetPath,
                Some(i),
                Some(path),
                format!("{cmd} writes a field that is not in target schema {}", self.target.reference()),
            );
        }
        f
    }

    fn expr_sources(&mut self, i: usize, cmd: &str, expr: &Expr) {
        for p in expr.source_paths() {
            self.source_field(i, cmd, &p);
        }
    }
}

/// Per-target bookkeeping gathered in the first pass.
#[derive(Default)]
struct TargetUse {
    producers: Vec<usize>,
    defaults: Vec<usize>,
    stages: Vec<usize>,
}

impl TargetUse {
    fn effective_producers(&self) -> Vec<usize> {
        if self.producers.is_empty() {
            self.defaults.first().copied().into_iter().collect()
        } else {
            self.producers.clone()
        }
    }

    fn first_production(&self) -> Option<usize> {
        self.producers.iter().chain(self.defaults.first()).min().copied()
    }
}

/// Checks a program against its schema pair. An empty result means the
/// program is well-typed and complete.
pub fn validate_program(program: &StlProgram, source: &Schema, target: &Schema) -> Vec<Diagnostic> {
    let mut ck = Checker { source, target, diags: Vec::new() };
    if program.is_abort() {
        if !program.commands.is_empty() {
            ck.push(
                DiagCode::AbortWithCommands,
                None,
                None,
                format!("MATCH reports different entities but {} commands follow", program.commands.len()),
            );
        }
        return ck.diags;
    }

    let cmds = &program.commands;
    let mut uses: BTreeMap<FieldPath, TargetUse> = BTreeMap::new();
    for (i, cmd) in cmds.iter().enumerate() {
        if let Some(t) = cmd.target() {
            let u = uses.entry(t.clone()).or_default();
            match cmd {
                StlCommand::Default { .. } => u.defaults.push(i),
                c if c.is_producer() => u.producers.push(i),
                _ => u.stages.push(i),
            }
        }
    }

    // symbol domain of the working value per enum target, for LINK key checks
    let mut domains: BTreeMap<FieldPath, Option<BTreeSet<String>>> = BTreeMap::new();
    let mut gens: HashSet<&str> = HashSet::new();
    let mut consumed: BTreeMap<FieldPath, Vec<usize>> = BTreeMap::new();

    for (i, cmd) in cmds.iter().enumerate() {
        let name = cmd.name();
        let src = match cmd.source() {
            Some(p) => {
                consumed.entry(p.clone()).or_default().push(i);
                ck.source_field(i, name, p)
            }
            None => None,
        };
        let dst = match cmd.target() {
            Some(p) => ck.target_field(i, name, p),
            None => None,
        };
        let tpath = cmd.target();
        let linked_later = |p: &FieldPath| {
            cmds[i + 1..]
                .iter()
                .any(|c| matches!(c, StlCommand::Link { target, .. } if target == p))
        };

        // (d) value stages and late DEFAULTs must follow a producer
        if cmd.is_value_stage() {
            let u = &uses[tpath.unwrap()];
            if u.first_production().is_none_or(|p| p > i) {
                ck.push(DiagCode::Order, Some(i), tpath, format!("{name} runs before any command produces its target"));
            }
        }
        if let StlCommand::Default { .. } = cmd {
            let u = &uses[tpath.unwrap()];
            if u.producers.iter().any(|&p| p > i) {
                ck.push(DiagCode::Order, Some(i), tpath, "DEFAULT precedes the producer of its target");
            }
        }

        match cmd {
            StlCommand::Copy { .. } | StlCommand::Rename { .. } => {
                if let (Some(s), Some(d)) = (src, dst) {
                    if let Err(e) = assignable(s, d, linked_later(tpath.unwrap())) {
                        ck.push(DiagCode::Type, Some(i), tpath, format!("{name}: {e}"));
                    }
                    domains.insert(tpath.unwrap().clone(), s.ty.variants().map(|v| v.iter().cloned().collect()));
                }
            }
            StlCommand::Cast { to, .. } => {
                if let Some(d) = dst {
                    if *to != d.ty {
                        ck.push(
                            DiagCode::Type,
                            Some(i),
                            tpath,
                            format!("CAST to {to} but target field is declared {}", d.ty),
                        );
                    }
                }
                if let Some(s) = src {
                    if !cast_supported(s.ty.kind(), to.kind()) {
                        ck.push(
                            DiagCode::Type,
                            Some(i),
                            tpath,
                            format!("no cast from {} to {}", s.ty.kind(), to.kind()),
                        );
                    }
                }
                domains.insert(tpath.unwrap().clone(), to.variants().map(|v| v.iter().cloned().collect()));
            }
            StlCommand::Add { value, .. } | StlCommand::Default { value, .. } => {
                if let Some(d) = dst {
                    let allow_null = matches!(cmd, StlCommand::Add { .. }) && d.optional;
                    if let Err(e) = conform_value(value, &d.ty, allow_null, &tpath.unwrap().to_string()) {
                        ck.push(DiagCode::Type, Some(i), tpath, format!("{name} literal: {}", e.detail));
                    }
                }
                let t = tpath.unwrap().clone();
                let entry = domains.entry(t).or_insert(Some(BTreeSet::new()));
                if let Some(set) = entry {
                    match value {
                        crate::record::Record::Str(s) | crate::record::Record::Enum(s) => {
                            set.insert(s.clone());
                        }
                        _ => *entry = None,
                    }
                }
            }
            StlCommand::Scale { factor: x, .. } | StlCommand::Shift { offset: x, .. } => {
                if let Some(d) = dst {
                    match d.ty.kind() {
                        TypeKind::Float => {}
                        TypeKind::Integer if x.fract() == 0.0 => {}
                        TypeKind::Integer => ck.push(
                            DiagCode::Type,
                            Some(i),
                            tpath,
                            format!("{name} by non-integral {x} would turn integer field into a float"),
                        ),
                        k => ck.push(DiagCode::Type, Some(i), tpath, format!("{name} needs a numeric target, found {k}")),
                    }
                }
            }
            StlCommand::Link { table, fallback, .. } => {
                if let Some(d) = dst {
                    match &d.ty {
                        FieldType::Enum(variants) => {
                            for (_, v) in table {
                                if !variants.contains(v) {
                                    ck.push(DiagCode::Type, Some(i), tpath, format!("LINK maps to `{v}`, not a target variant"));
                                }
                            }
                            if let Some(fb) = fallback {
                                if !variants.contains(fb) {
                                    ck.push(DiagCode::Type, Some(i), tpath, format!("LINK fallback `{fb}` is not a target variant"));
                                }
                            }
                        }
                        other => {
                            ck.push(DiagCode::Type, Some(i), tpath, format!("LINK needs an enum target, found {}", other.kind()))
                        }
                    }
                }
                let t = tpath.unwrap().clone();
                if let Some(Some(domain)) = domains.get(&t) {
                    for (k, _) in table {
                        if !domain.contains(k) {
                            ck.push(DiagCode::Type, Some(i), tpath, format!("LINK key `{k}` is not a source variant"));
                        }
                    }
                }
                let mut next: BTreeSet<String> = table.iter().map(|(_, v)| v.clone()).collect();
                next.extend(fallback.iter().cloned());
                domains.insert(t, Some(next));
            }
            StlCommand::Gen { name: fname, expr } => {
                ck.expr_sources(i, name, expr);
                gens.insert(fname.as_str());
            }
            StlCommand::Apply { func, .. } => {
                let input = src.map(|s| expr_view(s.ty.kind())).unwrap_or(Inferred::Unknown);
                let result = match func {
                    FnRef::Named(n) if gens.contains(n.as_str()) => cmds[..i].iter().find_map(|c| match c {
                        StlCommand::Gen { name, expr } if name == n => Some(infer(expr, input, source)),
                        _ => None,
                    }),
                    FnRef::Named(n) => match Builtin::unary_by_name(n) {
                        Some(b) => Some(infer(&Expr::Call(b, vec![Expr::value()]), input, source)),
                        None => {
                            let later = cmds[i..].iter().any(|c| matches!(c, StlCommand::Gen { name, .. } if name == n));
                            let why = if later { "is defined by a later GEN" } else { "is neither a GEN function nor a builtin" };
                            ck.push(DiagCode::UnresolvedFn, Some(i), tpath, format!("function `{n}` {why}"));
                            None
                        }
                    },
                    FnRef::Inline(e) => {
                        ck.expr_sources(i, name, e);
                        Some(infer(e, input, source))
                    }
                };
                if let (Some(result), Some(d)) = (result, dst) {
                    if !result_castable(result, d.ty.kind()) {
                        ck.push(
                            DiagCode::Type,
                            Some(i),
                            tpath,
                            format!("APPLY result cannot be converted to {}", d.ty.kind()),
                        );
                    }
                }
                domains.insert(tpath.unwrap().clone(), None);
            }
            StlCommand::Delete { .. } | StlCommand::Missing { .. } => {}
        }
    }

    // RENAME moves its source exactly once; DELETE documents a field nobody reads
    for (path, users) in &consumed {
        if users.len() < 2 {
            continue;
        }
        for &u in users {
            match &cmds[u] {
                StlCommand::Rename { .. } => ck.push(
                    DiagCode::Conflict,
                    Some(u),
                    Some(path),
                    "RENAME source is also consumed by another command",
                ),
                StlCommand::Delete { .. } => ck.push(
                    DiagCode::Conflict,
                    Some(u),
                    Some(path),
                    "DELETE of a field that another command reads",
                ),
                _ => {}
            }
        }
    }

    // (b) target coverage
    fn cover(ck: &mut Checker, uses: &BTreeMap<FieldPath, TargetUse>, fields: &[Field], prefix: Option<&FieldPath>) {
        for f in fields {
            let path = match prefix {
                Some(p) => p.child(&f.name),
                None => FieldPath::single(&f.name).expect("validated"),
            };
            let direct = uses.get(&path).map(TargetUse::effective_producers).unwrap_or_default();
            let below = uses
                .iter()
                .any(|(p, u)| path.is_ancestor_of(p) && !u.effective_producers().is_empty());
            if direct.len() > 1 {
                let names: Vec<_> = direct.iter().map(|i| format!("#{i}")).collect();
                ck.push(
                    DiagCode::Conflict,
                    None,
                    Some(&path),
                    format!("produced by {} commands ({})", direct.len(), names.join(", ")),
                );
            } else if direct.len() == 1 && below {
                ck.push(DiagCode::Conflict, None, Some(&path), "produced both whole and by member");
            } else if direct.is_empty() {
                match &f.ty {
                    FieldType::Object(children) if below => cover(ck, uses, children, Some(&path)),
                    _ => ck.push(DiagCode::UncoveredTarget, None, Some(&path), "no command produces this target field"),
                }
            }
        }
    }
    cover(&mut ck, &uses, &target.fields, None);

    // (c) source coverage
    fn consume(ck: &mut Checker, consumed: &BTreeMap<FieldPath, Vec<usize>>, fields: &[Field], prefix: Option<&FieldPath>) {
        for f in fields {
            let path = match prefix {
                Some(p) => p.child(&f.name),
                None => FieldPath::single(&f.name).expect("validated"),
            };
            if consumed.contains_key(&path) {
                continue;
            }
            let below = consumed.keys().any(|p| path.is_ancestor_of(p));
            match &f.ty {
                FieldType::Object(children) if below => consume(ck, consumed, children, Some(&path)),
                _ => ck.push(
                    DiagCode::UnconsumedSource,
                    None,
                    Some(&path),
                    "source field is neither mapped nor DELETEd",
                ),
            }
        }
    }
    consume(&mut ck, &consumed, &source.fields, None);

    // required targets fed from possibly-absent sources need a DEFAULT after
    for (path, f) in target.walk() {
        if f.optional {
            continue;
        }
        let Some(u) = uses.get(&path) else { continue };
        let eff = u.effective_producers();
        let [p] = eff.as_slice() else { continue };
        let reads_nullable = match &cmds[*p] {
            StlCommand::Copy { source: s, .. }
            | StlCommand::Rename { source: s, .. }
            | StlCommand::Cast { source: s, .. }
            | StlCommand::Apply { source: s, .. } => source.field_at(s).is_some() && source.path_nullable(s),
            _ => false,
        };
        if reads_nullable && !u.defaults.iter().any(|d| d > p) {
            ck.push(
                DiagCode::Nullable,
                Some(*p),
                Some(&path),
                "required target is read from an optional source without a following DEFAULT",
            );
        }
    }

    ck.diags
}
