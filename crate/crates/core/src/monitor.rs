//! Monitoring schemes: which statements and callback parameters to
//! instrument so that every missing points-to edge eventually shows up.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::FormatError;
use crate::ir::{walk, ClassName, FunctionKind, ProgramBundle, SpecSet, StmtId, StmtKind};
use crate::pta::{reachable_functions, AbstractObject, PointsToSet, Scope, VarId, Visibility};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SchemeKind {
    /// Every value-producing program statement.
    Naive,
    /// All monitorable allocations plus every call to a missing function.
    Min,
    /// Missing calls plus only the allocations that may reach library code.
    Opt,
}

impl FromStr for SchemeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "naive" => Ok(SchemeKind::Naive),
            "min" => Ok(SchemeKind::Min),
            "opt" => Ok(SchemeKind::Opt),
            _ => Err(format!("unknown scheme {s:?} (expected naive, min or opt)")),
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeKind::Naive => "naive",
            SchemeKind::Min => "min",
            SchemeKind::Opt => "opt",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MonitoringScheme {
    pub alloc: BTreeSet<StmtId>,
    /// Calls whose returned object is reported (calls to library code).
    pub call: BTreeSet<StmtId>,
    /// Assignments, loads and calls to program functions; naive scheme only.
    pub value: BTreeSet<StmtId>,
    pub callback_params: BTreeSet<(String, usize)>,
    pub callback_reach: BTreeSet<String>,
}

impl MonitoringScheme {
    pub fn len(&self) -> usize {
        self.alloc.len()
            + self.call.len()
            + self.value.len()
            + self.callback_params.len()
            + self.callback_reach.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_subset(&self, other: &MonitoringScheme) -> bool {
        self.alloc.is_subset(&other.alloc)
            && self.call.is_subset(&other.call)
            && self.value.is_subset(&other.value)
            && self.callback_params.is_subset(&other.callback_params)
            && self.callback_reach.is_subset(&other.callback_reach)
    }

    /// One line per monitor, sorted.
    pub fn serialize(&self) -> String {
        let mut lines: Vec<String> = Vec::with_capacity(self.len());
        lines.extend(self.alloc.iter().map(|s| format!("alloc {s}")));
        lines.extend(self.call.iter().map(|s| format!("call {s}")));
        lines.extend(self.value.iter().map(|s| format!("value {s}")));
        lines.extend(self.callback_params.iter().map(|(f, i)| format!("cb {f} {i}")));
        lines.extend(self.callback_reach.iter().map(|f| format!("cb-reach {f}")));
        lines.sort();
        lines.into_iter().map(|l| l + "\n").collect()
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let mut m = MonitoringScheme::default();
        for (i, line) in text.lines().enumerate() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let err = |msg: &str| FormatError::new(i + 1, msg);
            match parts.as_slice() {
                [] => {}
                ["alloc", id] => {
                    m.alloc.insert(StmtId::new(*id));
                }
                ["call", id] => {
                    m.call.insert(StmtId::new(*id));
                }
                ["value", id] => {
                    m.value.insert(StmtId::new(*id));
                }
                ["cb", f, idx] => {
                    let idx = idx.parse().map_err(|_| err("bad parameter index"))?;
                    m.callback_params.insert((f.to_string(), idx));
                }
                ["cb-reach", f] => {
                    m.callback_reach.insert(f.to_string());
                }
                _ => return Err(err("unrecognized monitor line")),
            }
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SchemeDiff {
    pub added: MonitoringScheme,
    pub removed: MonitoringScheme,
}

fn diff<T: Ord + Clone>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> BTreeSet<T> {
    a.difference(b).cloned().collect()
}

fn scheme_minus(a: &MonitoringScheme, b: &MonitoringScheme) -> MonitoringScheme {
    MonitoringScheme {
        alloc: diff(&a.alloc, &b.alloc),
        call: diff(&a.call, &b.call),
        value: diff(&a.value, &b.value),
        callback_params: diff(&a.callback_params, &b.callback_params),
        callback_reach: diff(&a.callback_reach, &b.callback_reach),
    }
}

pub fn scheme_diff(old: &MonitoringScheme, new: &MonitoringScheme) -> SchemeDiff {
    SchemeDiff {
        added: scheme_minus(new, old),
        removed: scheme_minus(old, new),
    }
}

/// Allocation statements whose objects the analysis names by site: program
/// allocations, plus ground-truth allocations that an active spec of the
/// same function reuses (same id and class).
pub fn monitorable_sites(b: &ProgramBundle, specs: &SpecSet) -> BTreeMap<StmtId, ClassName> {
    let mut out = BTreeMap::new();
    for f in b.functions.values() {
        match &f.kind {
            FunctionKind::Program { body, .. } => {
                for s in walk(body) {
                    if let StmtKind::Alloc { class, .. } = &s.kind {
                        out.insert(s.id.clone(), class.clone());
                    }
                }
            }
            FunctionKind::Library {
                ground_truth: Some(gt),
                spec: Some(spec),
            } if specs.contains(&f.name) => {
                let spec_sites: BTreeSet<(&StmtId, &ClassName)> = walk(&spec.body)
                    .filter_map(|s| match &s.kind {
                        StmtKind::Alloc { class, .. } => Some((&s.id, class)),
                        _ => None,
                    })
                    .collect();
                for s in walk(gt) {
                    if let StmtKind::Alloc { class, .. } = &s.kind {
                        if spec_sites.contains(&(&s.id, class)) {
                            out.insert(s.id.clone(), class.clone());
                        }
                    }
                }
            }
            FunctionKind::Library { .. } => {}
        }
    }
    out
}

/// Parameter monitors for every potential callback, plus reached flags for
/// callbacks the analysis does not consider reachable.
pub fn potential_callbacks(
    b: &ProgramBundle,
    specs: &SpecSet,
    pi: &PointsToSet,
) -> (BTreeSet<(String, usize)>, BTreeSet<String>) {
    let reachable = reachable_functions(b, Visibility::specs(specs), &pi.reached_callbacks);
    let mut params = BTreeSet::new();
    let mut reach = BTreeSet::new();
    for cb in b.callbacks() {
        params.extend((0..cb.params.len()).map(|i| (cb.name.clone(), i)));
        if !reachable.contains(&(Scope::Program, cb.name.clone())) {
            reach.insert(cb.name.clone());
        }
    }
    (params, reach)
}

fn program_calls(b: &ProgramBundle) -> impl Iterator<Item = (&str, &StmtId, &str, &[String])> {
    b.program_functions().flat_map(|f| {
        walk(f.program_body().expect("program function")).filter_map(move |s| match &s.kind {
            StmtKind::Call { callee, args, .. } => {
                Some((f.name.as_str(), &s.id, callee.as_str(), args.as_slice()))
            }
            _ => None,
        })
    })
}

pub fn monitoring_naive(b: &ProgramBundle, specs: &SpecSet) -> MonitoringScheme {
    let mut m = MonitoringScheme {
        alloc: monitorable_sites(b, specs).into_keys().collect(),
        ..MonitoringScheme::default()
    };
    for f in b.program_functions() {
        for s in walk(f.program_body().expect("program function")) {
            match &s.kind {
                StmtKind::Assign { .. } | StmtKind::Load { .. } => {
                    m.value.insert(s.id.clone());
                }
                StmtKind::Call { callee, target, .. } => {
                    if b.function(callee).is_some_and(|c| c.is_library()) {
                        m.call.insert(s.id.clone());
                    } else if target.is_some() {
                        m.value.insert(s.id.clone());
                    }
                }
                _ => {}
            }
        }
    }
    let (params, reach) = potential_callbacks(b, &SpecSet::new(), &PointsToSet::default());
    m.callback_params = params;
    m.callback_reach = reach;
    m
}

fn missing_calls(b: &ProgramBundle, specs: &SpecSet) -> BTreeSet<StmtId> {
    program_calls(b)
        .filter(|(_, _, callee, _)| b.is_missing(callee, specs))
        .map(|(_, id, _, _)| id.clone())
        .collect()
}

pub fn monitoring_min(b: &ProgramBundle, specs: &SpecSet, pi: &PointsToSet) -> MonitoringScheme {
    let (params, reach) = potential_callbacks(b, specs, pi);
    MonitoringScheme {
        alloc: monitorable_sites(b, specs).into_keys().collect(),
        call: missing_calls(b, specs),
        value: BTreeSet::new(),
        callback_params: params,
        callback_reach: reach,
    }
}

/// Sites whose objects `pi` says may be handed to library code: passed as an
/// argument of a program call to any library function, or returned by a
/// potential callback.
pub fn escaping_sites(b: &ProgramBundle, specs: &SpecSet, pi: &PointsToSet) -> BTreeSet<StmtId> {
    let sites = monitorable_sites(b, specs);
    let mut vars: BTreeSet<VarId> = BTreeSet::new();
    for (func, _, callee, args) in program_calls(b) {
        if b.function(callee).is_some_and(|c| c.is_library()) {
            vars.extend(args.iter().map(|a| VarId::program(func, a)));
        }
    }
    for cb in b.callbacks() {
        for s in walk(cb.program_body().expect("program function")) {
            if let StmtKind::Return { var } = &s.kind {
                vars.insert(VarId::program(&cb.name, var));
            }
        }
    }
    vars.iter()
        .flat_map(|v| pi.pts(v))
        .filter_map(|o| match o {
            AbstractObject::Site { id, .. } if sites.contains_key(id) => Some(id.clone()),
            _ => None,
        })
        .collect()
}

pub fn monitoring_opt(b: &ProgramBundle, specs: &SpecSet, pi: &PointsToSet) -> MonitoringScheme {
    let (params, reach) = potential_callbacks(b, specs, pi);
    MonitoringScheme {
        alloc: escaping_sites(b, specs, pi),
        call: missing_calls(b, specs),
        value: BTreeSet::new(),
        callback_params: params,
        callback_reach: reach,
    }
}

pub fn monitoring_scheme(
    kind: SchemeKind,
    b: &ProgramBundle,
    specs: &SpecSet,
    pi: &PointsToSet,
) -> MonitoringScheme {
    match kind {
        SchemeKind::Naive => monitoring_naive(b, specs),
        SchemeKind::Min => monitoring_min(b, specs, pi),
        SchemeKind::Opt => monitoring_opt(b, specs, pi),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;
    use crate::pta::{compute_pointsto, MissingEdgeSet};

    const LEAK: &str = "class A\nclass B\nfunc main() program {\n a = new A @oa\n k = new B @ok\n call give(a) @cg\n r = call take() @ct\n}\nfunc give(x) library { }\nfunc take() library { }\n";

    #[test]
    fn opt_keeps_only_escaping_allocations() {
        let b = parse_program(LEAK).unwrap();
        let specs = SpecSet::new();
        let pi = compute_pointsto(&b, &specs, &MissingEdgeSet::default());
        let min = monitoring_min(&b, &specs, &pi);
        let opt = monitoring_opt(&b, &specs, &pi);
        assert_eq!(min.alloc, BTreeSet::from([StmtId::new("oa"), StmtId::new("ok")]));
        assert_eq!(opt.alloc, BTreeSet::from([StmtId::new("oa")]));
        assert_eq!(opt.call, min.call);
        assert_eq!(min.call, BTreeSet::from([StmtId::new("cg"), StmtId::new("ct")]));
    }

    #[test]
    fn new_edge_to_call_argument_adds_alloc_monitor() {
        let b = parse_program(
            "class A\nfunc main() program {\n a = new A @oa\n y = call mk() @cm\n call give(y) @cg\n}\nfunc give(x) library { }\nfunc mk() library { }\n",
        )
        .unwrap();
        let specs = SpecSet::new();
        let mut miss = MissingEdgeSet::default();
        let before = monitoring_opt(&b, &specs, &compute_pointsto(&b, &specs, &miss));
        assert!(before.alloc.is_empty());
        miss.edges
            .insert((VarId::program("main", "y"), AbstractObject::site("oa", "A")));
        let after = monitoring_opt(&b, &specs, &compute_pointsto(&b, &specs, &miss));
        let d = scheme_diff(&before, &after);
        assert_eq!(d.added.alloc, BTreeSet::from([StmtId::new("oa")]));
        assert!(d.removed.is_empty());
    }

    #[test]
    fn scheme_text_round_trips() {
        let b = parse_program(LEAK).unwrap();
        let m = monitoring_naive(&b, &SpecSet::new());
        assert_eq!(MonitoringScheme::parse(&m.serialize()).unwrap(), m);
        assert!(scheme_diff(&m, &m).added.is_empty());
    }

    #[test]
    fn unreached_callback_gets_flag_and_param_monitors() {
        let b = parse_program(
            "func main() program { call reg() }\nfunc cb(a, b) program overrides reg { }\nfunc reg() library\n",
        )
        .unwrap();
        let specs = SpecSet::new();
        let pi = PointsToSet::default();
        let (params, reach) = potential_callbacks(&b, &specs, &pi);
        assert_eq!(params, BTreeSet::from([("cb".into(), 0), ("cb".into(), 1)]));
        assert_eq!(reach, BTreeSet::from(["cb".to_string()]));
    }
}
