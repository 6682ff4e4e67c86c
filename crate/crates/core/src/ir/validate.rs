use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{walk, Block, FieldOwner, FunctionKind, ProgramBundle, StmtId, StmtKind};

/// A well-formedness violation. Validation reports these as data; callers
/// decide whether they are fatal.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Violation {
    /// Program code reads or writes a library-owned field.
    SharedField { stmt: StmtId, field: String },
    /// Library ground truth touches a program-owned field.
    LibraryTouchesProgramField { stmt: StmtId, field: String },
    /// The call graph of executable bodies has a cycle through these functions.
    Recursion(Vec<String>),
    /// Specifications are call-free.
    CallInSpec { func: String, stmt: StmtId },
    /// Library code may only call library functions and callbacks.
    LibraryCallsProgram { stmt: StmtId, callee: String },
    /// `overrides` must name a library function.
    BadOverride { func: String, target: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SharedField { stmt, field } => {
                write!(f, "statement {stmt} accesses library-owned field {field}")
            }
            Violation::LibraryTouchesProgramField { stmt, field } => {
                write!(f, "library statement {stmt} accesses program-owned field {field}")
            }
            Violation::Recursion(cycle) => write!(f, "recursive calls: {}", cycle.join(" -> ")),
            Violation::CallInSpec { func, stmt } => {
                write!(f, "specification of {func} contains call {stmt}")
            }
            Violation::LibraryCallsProgram { stmt, callee } => {
                write!(f, "library statement {stmt} calls non-callback program function {callee}")
            }
            Violation::BadOverride { func, target } => {
                write!(f, "{func} overrides {target}, which is not a library function")
            }
        }
    }
}

fn field_access(kind: &StmtKind) -> Option<&str> {
    match kind {
        StmtKind::Load { field, .. } | StmtKind::Store { field, .. } => Some(field),
        _ => None,
    }
}

fn callees(block: &Block) -> impl Iterator<Item = &str> {
    walk(block).filter_map(|s| match &s.kind {
        StmtKind::Call { callee, .. } => Some(callee.as_str()),
        _ => None,
    })
}

/// Checks the structural restrictions on a bundle. An empty result means
/// the bundle is well formed.
pub fn validate_program(b: &ProgramBundle) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut graph: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for f in b.functions.values() {
        match &f.kind {
            FunctionKind::Program { body, overrides } => {
                if let Some(t) = overrides {
                    if !b.function(t).is_some_and(|d| d.is_library()) {
                        out.push(Violation::BadOverride {
                            func: f.name.clone(),
                            target: t.clone(),
                        });
                    }
                }
                for s in walk(body) {
                    if let Some(field) = field_access(&s.kind) {
                        if b.field_owner(field) == Some(FieldOwner::Library) {
                            out.push(Violation::SharedField {
                                stmt: s.id.clone(),
                                field: field.to_string(),
                            });
                        }
                    }
                }
                graph.entry(&f.name).or_default().extend(callees(body));
            }
            FunctionKind::Library { ground_truth, spec } => {
                if let Some(gt) = ground_truth {
                    for s in walk(gt) {
                        if let Some(field) = field_access(&s.kind) {
                            if b.field_owner(field) == Some(FieldOwner::Program) {
                                out.push(Violation::LibraryTouchesProgramField {
                                    stmt: s.id.clone(),
                                    field: field.to_string(),
                                });
                            }
                        }
                        if let StmtKind::Call { callee, .. } = &s.kind {
                            if b.function(callee).is_some_and(|d| d.is_program() && !d.is_callback()) {
                                out.push(Violation::LibraryCallsProgram {
                                    stmt: s.id.clone(),
                                    callee: callee.clone(),
                                });
                            }
                        }
                    }
                    graph.entry(&f.name).or_default().extend(callees(gt));
                }
                if let Some(spec) = spec {
                    for s in walk(&spec.body) {
                        if matches!(s.kind, StmtKind::Call { .. }) {
                            out.push(Violation::CallInSpec {
                                func: f.name.clone(),
                                stmt: s.id.clone(),
                            });
                        }
                    }
                }
            }
        }
    }
    if let Some(cycle) = find_cycle(&graph) {
        out.push(Violation::Recursion(cycle));
    }
    out
}

fn find_cycle(graph: &BTreeMap<&str, BTreeSet<&str>>) -> Option<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    fn dfs<'a>(
        n: &'a str,
        graph: &BTreeMap<&'a str, BTreeSet<&'a str>>,
        marks: &mut BTreeMap<&'a str, Mark>,
        path: &mut Vec<&'a str>,
    ) -> Option<Vec<String>> {
        marks.insert(n, Mark::Active);
        path.push(n);
        for &m in graph.get(n).into_iter().flatten() {
            match marks.get(m) {
                Some(Mark::Active) => {
                    let start = path.iter().position(|&p| p == m).expect("active node on path");
                    let mut cycle: Vec<String> = path[start..].iter().map(|s| s.to_string()).collect();
                    cycle.push(m.to_string());
                    return Some(cycle);
                }
                Some(Mark::Done) => {}
                None => {
                    if let Some(c) = dfs(m, graph, marks, path) {
                        return Some(c);
                    }
                }
            }
        }
        path.pop();
        marks.insert(n, Mark::Done);
        None
    }
    let mut marks = BTreeMap::new();
    for &n in graph.keys() {
        if !marks.contains_key(n) {
            if let Some(c) = dfs(n, graph, &mut marks, &mut Vec::new()) {
                return Some(c);
            }
        }
    }
    None
}
