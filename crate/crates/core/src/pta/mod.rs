//! Flow- and context-insensitive points-to analysis over program code and
//! whatever library bodies are visible, with injection of externally
//! supplied edges.

mod client;
mod solver;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

pub use client::taint_flows;
pub use solver::{
    collect_constraints, compute_pointsto, reachable_functions, solve, whole_program_pointsto,
    Constraints, Visibility,
};

use crate::error::{FormatError, QueryError};
use crate::ir::{walk, ClassName, ProgramBundle, StmtId, StmtKind};

/// Which body a variable belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scope {
    /// Program code; the only variables clients may query.
    Program,
    /// Active library specification.
    Spec,
    /// Library ground truth, visible only in whole-program analysis.
    Lib,
    /// Pessimistic library body used during specification inference.
    Pess,
}

impl Scope {
    fn prefix(self) -> &'static str {
        match self {
            Scope::Program => "",
            Scope::Spec => "spec:",
            Scope::Lib => "lib:",
            Scope::Pess => "pess:",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId {
    pub scope: Scope,
    pub func: String,
    pub name: String,
}

impl VarId {
    pub fn new(scope: Scope, func: impl Into<String>, name: impl Into<String>) -> Self {
        VarId {
            scope,
            func: func.into(),
            name: name.into(),
        }
    }

    pub fn program(func: impl Into<String>, name: impl Into<String>) -> Self {
        VarId::new(Scope::Program, func, name)
    }

    pub fn is_program(&self) -> bool {
        self.scope == Scope::Program
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}.{}", self.scope.prefix(), self.func, self.name)
    }
}

impl FromStr for VarId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (scope, rest) = [
            ("spec:", Scope::Spec),
            ("lib:", Scope::Lib),
            ("pess:", Scope::Pess),
        ]
        .iter()
        .find_map(|(p, sc)| s.strip_prefix(p).map(|r| (*sc, r)))
        .unwrap_or((Scope::Program, s));
        let (func, name) = rest
            .split_once('.')
            .ok_or_else(|| format!("variable {s:?} is not of the form <function>.<name>"))?;
        if func.is_empty() || name.is_empty() || name.contains('.') {
            return Err(format!("malformed variable {s:?}"));
        }
        Ok(VarId::new(scope, func, name))
    }
}

/// Abstract heap object.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AbstractObject {
    /// Allocation site in program or specification code.
    Site { id: StmtId, class: ClassName },
    /// Stands for library-internal objects of `class` that reached program
    /// code through the functions or callback slots in `footprint`.
    Proxy {
        class: ClassName,
        footprint: BTreeSet<String>,
    },
    /// Stands for library-internal objects of `class` that were bound to
    /// exactly the program variables in `vars`. Only oracles build these.
    IdealProxy {
        class: ClassName,
        vars: BTreeSet<String>,
    },
}

impl AbstractObject {
    pub fn site(id: impl Into<String>, class: impl Into<String>) -> Self {
        AbstractObject::Site {
            id: StmtId(id.into()),
            class: ClassName(class.into()),
        }
    }

    pub fn proxy<I, S>(class: impl Into<String>, footprint: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        AbstractObject::Proxy {
            class: ClassName(class.into()),
            footprint: footprint.into_iter().map(Into::into).collect(),
        }
    }

    pub fn class(&self) -> &ClassName {
        match self {
            AbstractObject::Site { class, .. }
            | AbstractObject::Proxy { class, .. }
            | AbstractObject::IdealProxy { class, .. } => class,
        }
    }

    pub fn is_site(&self) -> bool {
        matches!(self, AbstractObject::Site { .. })
    }

    /// Parses the textual form. Site classes are looked up in `b`.
    pub fn parse(s: &str, b: &ProgramBundle) -> Result<Self, String> {
        if let Some(id) = s.strip_prefix("site:") {
            let idx = b.index();
            let class = idx
                .analyzable
                .get(&StmtId::new(id))
                .or_else(|| idx.runtime.get(&StmtId::new(id)))
                .and_then(|(_, st)| match &st.kind {
                    StmtKind::Alloc { class, .. } => Some(class.clone()),
                    _ => None,
                })
                .ok_or_else(|| format!("unknown allocation site {id}"))?;
            return Ok(AbstractObject::Site {
                id: StmtId::new(id),
                class,
            });
        }
        let (ideal, rest) = if let Some(r) = s.strip_prefix("proxy:") {
            (false, r)
        } else if let Some(r) = s.strip_prefix("ideal:") {
            (true, r)
        } else {
            return Err(format!("unknown object {s:?}"));
        };
        let (class, set) = rest
            .split_once(':')
            .ok_or_else(|| format!("malformed proxy {s:?}"))?;
        let inner = set
            .strip_prefix('{')
            .and_then(|r| r.strip_suffix('}'))
            .ok_or_else(|| format!("malformed proxy set in {s:?}"))?;
        let items: BTreeSet<String> = inner
            .split(',')
            .filter(|x| !x.is_empty())
            .map(str::to_string)
            .collect();
        let class = ClassName::new(class);
        Ok(if ideal {
            AbstractObject::IdealProxy { class, vars: items }
        } else {
            AbstractObject::Proxy {
                class,
                footprint: items,
            }
        })
    }
}

fn join(set: &BTreeSet<String>) -> String {
    set.iter().cloned().collect::<Vec<_>>().join(",")
}

impl fmt::Display for AbstractObject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbstractObject::Site { id, .. } => write!(f, "site:{id}"),
            AbstractObject::Proxy { class, footprint } => {
                write!(f, "proxy:{class}:{{{}}}", join(footprint))
            }
            AbstractObject::IdealProxy { class, vars } => {
                write!(f, "ideal:{class}:{{{}}}", join(vars))
            }
        }
    }
}

/// Points-to relation Π.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PointsToSet {
    pub edges: BTreeMap<VarId, BTreeSet<AbstractObject>>,
    /// Callbacks reported as reached at runtime, which the analysis treats
    /// as entry points.
    pub reached_callbacks: BTreeSet<String>,
}

impl PointsToSet {
    pub fn pts(&self, v: &VarId) -> impl Iterator<Item = &AbstractObject> {
        self.edges.get(v).into_iter().flatten()
    }

    pub fn contains(&self, v: &VarId, o: &AbstractObject) -> bool {
        self.edges.get(v).is_some_and(|s| s.contains(o))
    }

    pub fn insert(&mut self, v: VarId, o: AbstractObject) -> bool {
        self.edges.entry(v).or_default().insert(o)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VarId, &AbstractObject)> {
        self.edges
            .iter()
            .flat_map(|(v, os)| os.iter().map(move |o| (v, o)))
    }

    pub fn program_edges(&self) -> impl Iterator<Item = (&VarId, &AbstractObject)> {
        self.iter().filter(|(v, _)| v.is_program())
    }

    pub fn len(&self) -> usize {
        self.edges.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether every edge and reached callback of `self` is also in `other`.
    pub fn is_subset(&self, other: &PointsToSet) -> bool {
        self.iter().all(|(v, o)| other.contains(v, o))
            && self.reached_callbacks.is_subset(&other.reached_callbacks)
    }

    /// Line format: `var -> object` per edge and `reached <fn>` per reached
    /// callback, all lines sorted.
    pub fn serialize(&self) -> String {
        let mut lines: Vec<String> = self.iter().map(|(v, o)| format!("{v} -> {o}")).collect();
        lines.extend(self.reached_callbacks.iter().map(|c| format!("reached {c}")));
        lines.sort();
        let mut out = lines.join("\n");
        if !out.is_empty() {
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, b: &ProgramBundle) -> Result<Self, FormatError> {
        let mut pi = PointsToSet::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(cb) = line.strip_prefix("reached ") {
                pi.reached_callbacks.insert(cb.trim().to_string());
                continue;
            }
            let (v, o) = line
                .split_once(" -> ")
                .ok_or_else(|| FormatError::new(i + 1, "expected `var -> object`"))?;
            let v = v.parse().map_err(|e| FormatError::new(i + 1, e))?;
            let o = AbstractObject::parse(o.trim(), b).map_err(|e| FormatError::new(i + 1, e))?;
            pi.insert(v, o);
        }
        Ok(pi)
    }
}

/// Edges x↪o injected into the analysis, plus callbacks known to be reached.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MissingEdgeSet {
    pub edges: BTreeSet<(VarId, AbstractObject)>,
    pub reached: BTreeSet<String>,
}

impl MissingEdgeSet {
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty() && self.reached.is_empty()
    }

    pub fn len(&self) -> usize {
        self.edges.len() + self.reached.len()
    }

    pub fn is_subset(&self, other: &MissingEdgeSet) -> bool {
        self.edges.is_subset(&other.edges) && self.reached.is_subset(&other.reached)
    }
}

/// Names of variables mentioned in a program function (parameters and every
/// variable used or defined by its body).
pub fn program_variables(b: &ProgramBundle) -> BTreeSet<VarId> {
    let mut out = BTreeSet::new();
    for f in b.program_functions() {
        for p in &f.params {
            out.insert(VarId::program(&f.name, p));
        }
        for s in walk(f.program_body().expect("program function")) {
            let names: Vec<&String> = match &s.kind {
                StmtKind::Alloc { target, .. } => vec![target],
                StmtKind::Assign { target, source } => vec![target, source],
                StmtKind::Load { target, base, .. } => vec![target, base],
                StmtKind::Store { base, source, .. } => vec![base, source],
                StmtKind::Call { target, args, .. } => target.iter().chain(args).collect(),
                StmtKind::Return { var } => vec![var],
                StmtKind::Branch { .. } => vec![],
            };
            out.extend(names.into_iter().map(|n| VarId::program(&f.name, n)));
        }
    }
    out
}

/// Resolves a user-supplied variable name. Accepts `func.name`, or a bare
/// name when exactly one program function mentions it.
pub fn resolve_var(b: &ProgramBundle, name: &str) -> Result<VarId, QueryError> {
    let vars = program_variables(b);
    if let Ok(v) = name.parse::<VarId>() {
        return if vars.contains(&v) {
            Ok(v)
        } else {
            Err(QueryError::UnknownVariable(name.to_string()))
        };
    }
    let mut hits = vars.into_iter().filter(|v| v.name == name);
    match (hits.next(), hits.next()) {
        (Some(v), None) => Ok(v),
        (Some(_), Some(_)) => Err(QueryError::Ambiguous(name.to_string())),
        (None, _) => Err(QueryError::UnknownVariable(name.to_string())),
    }
}

/// True iff the points-to sets of `x` and `y` intersect.
pub fn may_alias(b: &ProgramBundle, pi: &PointsToSet, x: &str, y: &str) -> Result<bool, QueryError> {
    let x = resolve_var(b, x)?;
    let y = resolve_var(b, y)?;
    Ok(pi.pts(&x).any(|o| pi.contains(&y, o)))
}

/// Classes of the objects `x` may point to.
pub fn points_to_classes(
    b: &ProgramBundle,
    pi: &PointsToSet,
    x: &str,
) -> Result<BTreeSet<ClassName>, QueryError> {
    let x = resolve_var(b, x)?;
    Ok(pi.pts(&x).map(|o| o.class().clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;

    fn bundle() -> ProgramBundle {
        parse_program("class A\nfunc main() program {\n a = new A @oa\n b = a\n}\nfunc other() program {\n b = new A @ob\n}\n")
            .unwrap()
    }

    #[test]
    fn object_text_round_trips() {
        let b = bundle();
        for o in [
            AbstractObject::site("oa", "A"),
            AbstractObject::proxy("String", ["get", "mkStr"]),
            AbstractObject::IdealProxy {
                class: ClassName::new("A"),
                vars: ["x".to_string()].into(),
            },
        ] {
            assert_eq!(AbstractObject::parse(&o.to_string(), &b).unwrap(), o);
        }
        assert_eq!(
            AbstractObject::proxy("String", ["mkStr", "get"]).to_string(),
            "proxy:String:{get,mkStr}"
        );
    }

    #[test]
    fn var_text_round_trips() {
        for v in [
            VarId::program("main", "str"),
            VarId::new(Scope::Spec, "add", "ob"),
            VarId::new(Scope::Pess, "get", "r"),
        ] {
            assert_eq!(v.to_string().parse::<VarId>().unwrap(), v);
        }
    }

    #[test]
    fn serialization_is_sorted_and_parses_back() {
        let b = bundle();
        let mut pi = PointsToSet::default();
        pi.insert(VarId::program("main", "b"), AbstractObject::site("oa", "A"));
        pi.insert(VarId::program("main", "a"), AbstractObject::site("oa", "A"));
        pi.reached_callbacks.insert("cb".into());
        let text = pi.serialize();
        assert_eq!(text, "main.a -> site:oa\nmain.b -> site:oa\nreached cb\n");
        assert_eq!(PointsToSet::parse(&text, &b).unwrap(), pi);
    }

    #[test]
    fn bare_names_resolve_unless_ambiguous() {
        let b = bundle();
        assert_eq!(resolve_var(&b, "a").unwrap(), VarId::program("main", "a"));
        assert_eq!(resolve_var(&b, "b"), Err(QueryError::Ambiguous("b".into())));
        assert_eq!(resolve_var(&b, "other.b").unwrap(), VarId::program("other", "b"));
        assert_eq!(resolve_var(&b, "zz"), Err(QueryError::UnknownVariable("zz".into())));
    }
}
