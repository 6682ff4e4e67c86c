//! The counterexample loop: execute under the current monitoring scheme,
//! map observed objects to abstract objects, inject missing edges, repeat.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use sha2::{Digest, Sha256};

use crate::dynexec::{execute, Report, ReportSite, Schedule};
use crate::error::{FormatError, LoopError};
use crate::ir::{ProgramBundle, SpecSet};
use crate::monitor::{
    monitorable_sites, monitoring_scheme, scheme_diff, MonitoringScheme, SchemeDiff, SchemeKind,
};
use crate::pta::{compute_pointsto, program_variables, AbstractObject, MissingEdgeSet, PointsToSet, VarId};

/// Per-execution map from object ids to abstract objects.
pub type ObjectMapping = BTreeMap<usize, AbstractObject>;

/// Footprint element for the `idx`-th parameter of callback `func`.
pub fn callback_slot(func: &str, idx: usize) -> String {
    format!("{func}#{idx}")
}

/// Maps every reported object: to its site if an allocation report names
/// it, otherwise to the proxy of its class and the missing functions and
/// callback slots that delivered it during this execution.
pub fn build_object_mapping(
    b: &ProgramBundle,
    specs: &SpecSet,
    reports: &[Report],
) -> Result<ObjectMapping, LoopError> {
    let mut classes = BTreeMap::new();
    let mut sites = BTreeMap::new();
    let mut footprints: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for r in reports {
        let Some((oid, class)) = &r.object else { continue };
        if let Some(prev) = classes.insert(*oid, class.clone()) {
            if &prev != class {
                return Err(LoopError::ClassConflict(*oid));
            }
        }
        match &r.site {
            ReportSite::Alloc(id) => {
                sites.insert(*oid, id.clone());
            }
            ReportSite::Call { callee, .. } if b.is_missing(callee, specs) => {
                footprints.entry(*oid).or_default().insert(callee.clone());
            }
            ReportSite::CallbackParam { func, idx } => {
                footprints
                    .entry(*oid)
                    .or_default()
                    .insert(callback_slot(func, *idx));
            }
            _ => {}
        }
    }
    let mut out = ObjectMapping::new();
    for (oid, class) in classes {
        if let Some(id) = sites.remove(&oid) {
            out.insert(oid, AbstractObject::Site { id, class });
        } else if let Some(fp) = footprints.remove(&oid) {
            out.insert(
                oid,
                AbstractObject::Proxy {
                    class,
                    footprint: fp,
                },
            );
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Counterexample {
    Edge(VarId, AbstractObject),
    /// A callback the analysis considered unreachable was entered.
    Reach(String),
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Counterexample::Edge(v, o) => write!(f, "CE {v} {o}"),
            Counterexample::Reach(c) => write!(f, "CE reach {c}"),
        }
    }
}

impl Counterexample {
    pub fn parse(line: &str, b: &ProgramBundle) -> Result<Self, String> {
        let rest = line
            .strip_prefix("CE ")
            .ok_or_else(|| format!("expected `CE ...`, got {line:?}"))?;
        if let Some(c) = rest.strip_prefix("reach ") {
            return Ok(Counterexample::Reach(c.trim().to_string()));
        }
        let (v, o) = rest
            .split_once(' ')
            .ok_or_else(|| format!("malformed counterexample {line:?}"))?;
        Ok(Counterexample::Edge(v.parse()?, AbstractObject::parse(o.trim(), b)?))
    }
}

pub fn to_edge_set<'a>(ces: impl IntoIterator<Item = &'a Counterexample>) -> MissingEdgeSet {
    let mut m = MissingEdgeSet::default();
    for ce in ces {
        match ce {
            Counterexample::Edge(v, o) => {
                m.edges.insert((v.clone(), o.clone()));
            }
            Counterexample::Reach(c) => {
                m.reached.insert(c.clone());
            }
        }
    }
    m
}

pub fn serialize_counterexamples<'a>(ces: impl IntoIterator<Item = &'a Counterexample>) -> String {
    let mut lines: Vec<String> = ces.into_iter().map(|c| c.to_string()).collect();
    lines.sort();
    lines.dedup();
    lines.into_iter().map(|l| l + "\n").collect()
}

pub fn parse_counterexamples(text: &str, b: &ProgramBundle) -> Result<Vec<Counterexample>, FormatError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| Counterexample::parse(l.trim(), b).map_err(|e| FormatError::new(i + 1, e)))
        .collect()
}

/// Observed bindings absent from `pi`, deduplicated, in report order.
/// Allocation reports never yield counterexamples.
pub fn derive_counterexamples(
    reports: &[Report],
    mapping: &ObjectMapping,
    pi: &PointsToSet,
) -> Vec<Counterexample> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in reports {
        let ce = match (&r.site, &r.var, &r.object) {
            (ReportSite::CallbackReach(c), _, _) => {
                if pi.reached_callbacks.contains(c) {
                    continue;
                }
                Counterexample::Reach(c.clone())
            }
            (ReportSite::Alloc(_), _, _) => continue,
            (_, Some(var), Some((oid, _))) => {
                let Some(a) = mapping.get(oid) else { continue };
                if pi.contains(var, a) {
                    continue;
                }
                Counterexample::Edge(var.clone(), a.clone())
            }
            _ => continue,
        };
        if seen.insert(ce.clone()) {
            out.push(ce);
        }
    }
    out
}

/// Counterexamples safe to inject now.
///
/// Under the optimized scheme an object from an unmonitored allocation may
/// reach library code along an edge the analysis has not learned yet; it
/// then comes back looking like a library object and would be mapped to a
/// proxy. Such proxy counterexamples are held back until the first
/// counterexample of the run is injected and the scheme is recomputed.
pub fn trusted_counterexamples(
    b: &ProgramBundle,
    specs: &SpecSet,
    scheme: &MonitoringScheme,
    kind: SchemeKind,
    ces: &[Counterexample],
) -> Vec<Counterexample> {
    if kind != SchemeKind::Opt {
        return ces.to_vec();
    }
    let unmonitored: BTreeSet<_> = monitorable_sites(b, specs)
        .into_iter()
        .filter(|(id, _)| !scheme.alloc.contains(id))
        .map(|(_, class)| class)
        .collect();
    ces.iter()
        .enumerate()
        .filter(|(i, ce)| {
            *i == 0
                || match ce {
                    Counterexample::Edge(_, AbstractObject::Proxy { class, .. }) => {
                        !unmonitored.contains(class)
                    }
                    _ => true,
                }
        })
        .map(|(_, ce)| ce.clone())
        .collect()
}

/// One Π update.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Iteration {
    pub schedule: Schedule,
    pub delta: Vec<Counterexample>,
    pub pi_hash: String,
    pub scheme_diff: SchemeDiff,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoopOutcome {
    pub pi_miss: MissingEdgeSet,
    pub pi: PointsToSet,
    pub scheme: MonitoringScheme,
    /// Π before the first update followed by Π after each update.
    pub history: Vec<PointsToSet>,
    pub iterations: Vec<Iteration>,
    /// Every proxy any execution mapped an object to.
    pub observed_proxies: BTreeSet<AbstractObject>,
    pub passes: usize,
    pub executions: usize,
}

pub fn pi_hash(pi: &PointsToSet) -> String {
    hex::encode(&Sha256::digest(pi.serialize().as_bytes())[..8])
}

/// Runs every schedule, re-running a schedule under the updated scheme
/// until it yields nothing new, and repeats full passes until one pass
/// injects nothing.
pub fn run_loop(
    b: &ProgramBundle,
    specs: &SpecSet,
    schedules: &[Schedule],
    kind: SchemeKind,
) -> Result<LoopOutcome, LoopError> {
    let mut pi_miss = MissingEdgeSet::default();
    let mut pi = compute_pointsto(b, specs, &pi_miss);
    let mut scheme = monitoring_scheme(kind, b, specs, &pi);
    let mut out = LoopOutcome {
        pi_miss: MissingEdgeSet::default(),
        pi: PointsToSet::default(),
        scheme: MonitoringScheme::default(),
        history: vec![pi.clone()],
        iterations: Vec::new(),
        observed_proxies: BTreeSet::new(),
        passes: 0,
        executions: 0,
    };
    loop {
        out.passes += 1;
        let mut changed = false;
        for sched in schedules {
            loop {
                let reports = execute(b, &scheme, sched)?;
                out.executions += 1;
                let mapping = build_object_mapping(b, specs, &reports)?;
                out.observed_proxies.extend(
                    mapping
                        .values()
                        .filter(|o| matches!(o, AbstractObject::Proxy { .. }))
                        .cloned(),
                );
                let ces = derive_counterexamples(&reports, &mapping, &pi);
                let delta = trusted_counterexamples(b, specs, &scheme, kind, &ces);
                if delta.is_empty() {
                    break;
                }
                changed = true;
                let add = to_edge_set(&delta);
                pi_miss.edges.extend(add.edges);
                pi_miss.reached.extend(add.reached);
                pi = compute_pointsto(b, specs, &pi_miss);
                let next = monitoring_scheme(kind, b, specs, &pi);
                out.iterations.push(Iteration {
                    schedule: sched.clone(),
                    delta,
                    pi_hash: pi_hash(&pi),
                    scheme_diff: scheme_diff(&scheme, &next),
                });
                scheme = next;
                out.history.push(pi.clone());
            }
        }
        if !changed {
            break;
        }
    }
    out.pi_miss = pi_miss;
    out.pi = pi;
    out.scheme = scheme;
    Ok(out)
}

impl LoopOutcome {
    /// Per update: schedule, counterexample delta, Π hash and monitor
    /// changes; then the final Π.
    pub fn transcript(&self) -> String {
        let mut s = format!("initial {}\n", pi_hash(&self.history[0]));
        for (i, it) in self.iterations.iter().enumerate() {
            s.push_str(&format!("iteration {} schedule {}\n", i + 1, it.schedule));
            s.push_str(&serialize_counterexamples(&it.delta));
            let d = &it.scheme_diff;
            for line in d.added.serialize().lines() {
                s.push_str(&format!("monitor + {line}\n"));
            }
            for line in d.removed.serialize().lines() {
                s.push_str(&format!("monitor - {line}\n"));
            }
            s.push_str(&format!("hash {}\n", it.pi_hash));
        }
        s.push_str(&format!(
            "quiescent after {} passes, {} executions\nfinal\n",
            self.passes, self.executions
        ));
        s.push_str(&self.pi.serialize());
        s
    }
}

/// Upper bound on the number of distinct counterexamples: every program
/// variable times every site or proxy, plus one reach flag per callback.
pub fn eventual_soundness_bound(b: &ProgramBundle, specs: &SpecSet) -> u128 {
    let vars = program_variables(b).len() as u128;
    let sites = compute_sites(b, specs) as u128;
    let classes = b.classes.len() as u128;
    let missing = b
        .library_functions()
        .filter(|f| b.is_missing(&f.name, specs))
        .count() as u32;
    let slots: u32 = b.callbacks().map(|c| c.params.len() as u32).sum();
    let proxies = 1u128
        .checked_shl(missing + slots)
        .unwrap_or(u128::MAX)
        .saturating_mul(classes);
    vars.saturating_mul(sites.saturating_add(proxies))
        .saturating_add(b.callbacks().count() as u128)
}

fn compute_sites(b: &ProgramBundle, specs: &SpecSet) -> usize {
    let idx = b.index();
    idx.analyzable
        .values()
        .filter(|(loc, s)| {
            matches!(s.kind, crate::ir::StmtKind::Alloc { .. })
                && match loc {
                    crate::ir::BodyLoc::Spec(f) => specs.contains(f),
                    _ => true,
                }
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_program, ClassName, StmtId};

    fn report(site: ReportSite, oid: usize, class: &str, var: Option<&str>) -> Report {
        Report {
            site,
            object: Some((oid, ClassName::new(class))),
            var: var.map(|v| VarId::program("main", v)),
        }
    }

    fn bundle() -> ProgramBundle {
        parse_program("class A\nclass S\nfunc main() program {\n a = new A @oa\n x = call m(a) @c1\n y = call n(x) @c2\n}\nfunc m(p) library\nfunc n(p) library\n")
            .unwrap()
    }

    #[test]
    fn footprint_collects_every_delivering_call() {
        let b = bundle();
        let call = |s: &str, f: &str| ReportSite::Call {
            stmt: StmtId::new(s),
            callee: f.into(),
        };
        let rs = vec![
            report(ReportSite::Alloc(StmtId::new("oa")), 0, "A", Some("a")),
            report(call("c1", "m"), 1, "S", Some("x")),
            report(call("c2", "n"), 1, "S", Some("y")),
        ];
        let map = build_object_mapping(&b, &SpecSet::new(), &rs).unwrap();
        assert_eq!(map[&0], AbstractObject::site("oa", "A"));
        assert_eq!(map[&1], AbstractObject::proxy("S", ["m", "n"]));
        let ces = derive_counterexamples(&rs, &map, &PointsToSet::default());
        assert_eq!(
            serialize_counterexamples(&ces),
            "CE main.x proxy:S:{m,n}\nCE main.y proxy:S:{m,n}\n"
        );
    }

    #[test]
    fn conflicting_classes_are_rejected() {
        let b = bundle();
        let rs = vec![
            report(ReportSite::Alloc(StmtId::new("oa")), 0, "A", Some("a")),
            report(ReportSite::Alloc(StmtId::new("oa")), 0, "S", Some("a")),
        ];
        assert_eq!(
            build_object_mapping(&b, &SpecSet::new(), &rs),
            Err(LoopError::ClassConflict(0))
        );
    }

    #[test]
    fn counterexample_lines_round_trip() {
        let b = bundle();
        let ces = vec![
            Counterexample::Edge(VarId::program("main", "x"), AbstractObject::site("oa", "A")),
            Counterexample::Reach("cb".into()),
        ];
        let text = serialize_counterexamples(&ces);
        let mut back = parse_counterexamples(&text, &b).unwrap();
        back.sort();
        let mut want = ces.clone();
        want.sort();
        assert_eq!(back, want);
    }

    #[test]
    fn loop_without_library_calls_is_quiet() {
        let b = parse_program("class A\nfunc main() program { a = new A }\n").unwrap();
        let out = run_loop(&b, &SpecSet::new(), &[Schedule::default()], SchemeKind::Opt).unwrap();
        assert!(out.iterations.is_empty());
        assert_eq!(out.passes, 1);
        assert_eq!(out.history.len(), 1);
    }
}
