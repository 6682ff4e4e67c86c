//! Brute-force references used to check the analysis: exhaustive
//! execution enumeration, full dynamic points-to sets, ideal proxies, an
//! independent rule-by-rule solver and adversarial library constructions.

pub mod gen;
pub mod suite;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynexec::{run, BindCause, BranchChooser, BranchCtx, Event, Execution, Schedule, ScheduleChooser};
use crate::error::{BuildError, ExecError, LoopError};
use crate::feedback::{build_object_mapping, callback_slot, derive_counterexamples, Counterexample};
use crate::ir::{
    walk, Block, BodyLoc, ClassName, FunctionKind, ProgramBundle, SpecSet, Statement, StmtId, StmtKind,
};
use crate::monitor::{monitorable_sites, MonitoringScheme};
use crate::pta::{
    compute_pointsto, reachable_functions, whole_program_pointsto, AbstractObject, MissingEdgeSet,
    PointsToSet, Scope, VarId, Visibility,
};

/// Default cap on branch decisions per execution.
pub const MAX_BRANCHES: usize = 12;

/// Explores program branches depth-first; library branches may be fixed by
/// a policy instead.
struct Explorer<'p> {
    prefix: Vec<bool>,
    used: Vec<bool>,
    /// Positions in `used` that are free choices.
    free: Vec<usize>,
    policy: Option<&'p dyn Fn(&BranchCtx<'_>) -> bool>,
    cap: usize,
}

impl BranchChooser for Explorer<'_> {
    fn choose(&mut self, ctx: &BranchCtx<'_>) -> Result<bool, ExecError> {
        if self.used.len() >= self.cap {
            return Err(ExecError::BranchCap(self.cap));
        }
        let forced = if ctx.in_library {
            self.policy.map(|p| p(ctx))
        } else {
            None
        };
        let bit = match forced {
            Some(b) => b,
            None => {
                self.free.push(self.used.len());
                self.prefix.get(self.used.len()).copied().unwrap_or(false)
            }
        };
        self.used.push(bit);
        Ok(bit)
    }
}

fn explore(
    b: &ProgramBundle,
    max_branches: usize,
    policy: Option<&dyn Fn(&BranchCtx<'_>) -> bool>,
) -> Result<Vec<Schedule>, ExecError> {
    let mut out = BTreeSet::new();
    let mut stack = vec![Vec::new()];
    while let Some(prefix) = stack.pop() {
        let mut ex = Explorer {
            prefix: prefix.clone(),
            used: Vec::new(),
            free: Vec::new(),
            policy,
            cap: max_branches,
        };
        run(b, &MonitoringScheme::default(), &mut ex)?;
        for &i in ex.free.iter().filter(|&&i| i >= prefix.len()) {
            let mut next = ex.used[..i].to_vec();
            next.push(true);
            stack.push(next);
        }
        out.insert(Schedule::new(ex.used));
    }
    Ok(out.into_iter().collect())
}

/// Every complete schedule of the program, sorted.
pub fn enumerate_executions(b: &ProgramBundle, max_branches: usize) -> Result<Vec<Schedule>, ExecError> {
    explore(b, max_branches, None)
}

struct RandomChooser<'r> {
    rng: &'r mut ChaCha8Rng,
    used: Vec<bool>,
    cap: usize,
}

impl BranchChooser for RandomChooser<'_> {
    fn choose(&mut self, _ctx: &BranchCtx<'_>) -> Result<bool, ExecError> {
        if self.used.len() >= self.cap {
            return Err(ExecError::BranchCap(self.cap));
        }
        let bit = self.rng.gen_bool(0.5);
        self.used.push(bit);
        Ok(bit)
    }
}

/// `count` schedules drawn with fair coin flips, duplicates removed, in
/// draw order.
pub fn random_schedules(b: &ProgramBundle, seed: u64, count: usize, max_branches: usize) -> Result<Vec<Schedule>, ExecError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for _ in 0..count {
        let mut ch = RandomChooser {
            rng: &mut rng,
            used: Vec::new(),
            cap: max_branches,
        };
        run(b, &MonitoringScheme::default(), &mut ch)?;
        let s = Schedule::new(ch.used);
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    Ok(out)
}

/// Full trace of one execution, with no monitors.
pub fn full_trace(b: &ProgramBundle, sched: &Schedule) -> Result<Execution, ExecError> {
    run(b, &MonitoringScheme::default(), &mut ScheduleChooser::new(sched))
}

/// Program-variable bindings observed in an execution.
pub fn dynamic_pointsto_oracle(exec: &Execution) -> BTreeSet<(VarId, usize)> {
    exec.trace
        .iter()
        .filter_map(|e| match e {
            Event::Bind { var, oid, .. } => Some((var.clone(), *oid)),
            _ => None,
        })
        .collect()
}

/// Allocation origin of every object.
pub fn alloc_origins(exec: &Execution) -> BTreeMap<usize, (StmtId, ClassName)> {
    exec.heap
        .iter()
        .map(|o| (o.oid, (o.origin.clone(), o.class.clone())))
        .collect()
}

/// Maps each object the way a perfect observer would: monitorable
/// allocations to their site; library objects to the proxy of the missing
/// calls and callback slots that handed them to program code. Library
/// objects that never crossed such a boundary are left unmapped.
pub fn oracle_object_mapping(
    b: &ProgramBundle,
    specs: &SpecSet,
    exec: &Execution,
) -> BTreeMap<usize, AbstractObject> {
    let sites = monitorable_sites(b, specs);
    let idx = b.index();
    let mut footprints: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for e in &exec.trace {
        let Event::Bind { oid, cause, .. } = e else { continue };
        match cause {
            BindCause::Stmt(id) => {
                if let Some((BodyLoc::Program(_), Statement { kind: StmtKind::Call { callee, .. }, .. })) =
                    idx.runtime_stmt(id)
                {
                    if b.is_missing(callee, specs) {
                        footprints.entry(*oid).or_default().insert(callee.clone());
                    }
                }
            }
            BindCause::Param {
                func,
                idx: i,
                from_library: true,
            } => {
                footprints
                    .entry(*oid)
                    .or_default()
                    .insert(callback_slot(func, *i));
            }
            BindCause::Param { .. } => {}
        }
    }
    let mut out = BTreeMap::new();
    for o in &exec.heap {
        if sites.contains_key(&o.origin) {
            out.insert(o.oid, AbstractObject::Site {
                id: o.origin.clone(),
                class: o.class.clone(),
            });
        } else if let Some(fp) = footprints.remove(&o.oid) {
            out.insert(o.oid, AbstractObject::Proxy {
                class: o.class.clone(),
                footprint: fp,
            });
        }
    }
    out
}

/// Ideal proxy for each library object: the program variables that ever
/// pointed to it.
pub fn ideal_proxy_mapping(
    b: &ProgramBundle,
    specs: &SpecSet,
    exec: &Execution,
) -> BTreeMap<usize, AbstractObject> {
    let sites = monitorable_sites(b, specs);
    let mut vars: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (v, oid) in dynamic_pointsto_oracle(exec) {
        vars.entry(oid).or_default().insert(v.to_string());
    }
    exec.heap
        .iter()
        .filter(|o| !sites.contains_key(&o.origin))
        .filter_map(|o| {
            vars.remove(&o.oid).map(|vs| {
                (o.oid, AbstractObject::IdealProxy {
                    class: o.class.clone(),
                    vars: vs,
                })
            })
        })
        .collect()
}

/// Program bodies entered during an execution that the analysis does not
/// reach from the entry.
fn unexpected_callbacks(b: &ProgramBundle, specs: &SpecSet, exec: &Execution) -> BTreeSet<String> {
    let reachable = reachable_functions(b, Visibility::specs(specs), &BTreeSet::new());
    exec.trace
        .iter()
        .filter_map(|e| match e {
            Event::Enter(f) => Some(f),
            _ => None,
        })
        .filter(|f| b.function(f).is_some_and(|d| d.is_callback()))
        .filter(|f| !reachable.contains(&(Scope::Program, f.to_string())))
        .cloned()
        .collect()
}

/// Dynamic edges of an execution pushed through `mapping`, plus unexpected
/// callback entries.
pub fn mapped_dynamic_edges(
    b: &ProgramBundle,
    specs: &SpecSet,
    exec: &Execution,
    mapping: &BTreeMap<usize, AbstractObject>,
) -> MissingEdgeSet {
    let mut m = MissingEdgeSet::default();
    for (v, oid) in dynamic_pointsto_oracle(exec) {
        if let Some(a) = mapping.get(&oid) {
            m.edges.insert((v, a.clone()));
        }
    }
    m.reached = unexpected_callbacks(b, specs, exec);
    m
}

/// True counterexamples of an execution against `pi`.
pub fn oracle_counterexamples(
    b: &ProgramBundle,
    specs: &SpecSet,
    exec: &Execution,
    pi: &PointsToSet,
) -> BTreeSet<Counterexample> {
    let mapping = oracle_object_mapping(b, specs, exec);
    let m = mapped_dynamic_edges(b, specs, exec, &mapping);
    let mut out: BTreeSet<Counterexample> = m
        .edges
        .into_iter()
        .filter(|(v, o)| !pi.contains(v, o))
        .map(|(v, o)| Counterexample::Edge(v, o))
        .collect();
    out.extend(
        m.reached
            .into_iter()
            .filter(|c| !pi.reached_callbacks.contains(c))
            .map(Counterexample::Reach),
    );
    out
}

/// Closure of the mapped dynamic edges of all `execs` (Π* for
/// footprint proxies, Π̃* for ideal ones).
pub fn closure_of_executions(
    b: &ProgramBundle,
    specs: &SpecSet,
    execs: &[Execution],
    ideal: bool,
) -> PointsToSet {
    let mut all = MissingEdgeSet::default();
    for e in execs {
        let mapping = if ideal {
            let mut m = ideal_proxy_mapping(b, specs, e);
            for (oid, o) in oracle_object_mapping(b, specs, e) {
                if o.is_site() {
                    m.insert(oid, o);
                }
            }
            m
        } else {
            oracle_object_mapping(b, specs, e)
        };
        let d = mapped_dynamic_edges(b, specs, e, &mapping);
        all.edges.extend(d.edges);
        all.reached.extend(d.reached);
    }
    compute_pointsto(b, specs, &all)
}

/// Π with every ground-truth body visible.
pub fn whole_program_pta(b: &ProgramBundle) -> PointsToSet {
    whole_program_pointsto(b)
}

/// Reference solver: applies the allocation, copy, field and injection
/// rules to the statements directly until nothing changes. Field flow uses
/// the literal three-premise rule: `x = y.f` and `z.f = w` with `y` and `z`
/// sharing an object give `x` everything `w` has.
pub fn reference_pointsto(b: &ProgramBundle, specs: &SpecSet, pi_miss: &MissingEdgeSet) -> PointsToSet {
    let body_of = |name: &str| -> Option<(Scope, Vec<String>, &Block)> {
        let f = b.function(name)?;
        match &f.kind {
            FunctionKind::Program { body, .. } => Some((Scope::Program, f.params.clone(), body)),
            FunctionKind::Library { spec: Some(s), .. } if specs.contains(name) => {
                Some((Scope::Spec, s.params.clone(), &s.body))
            }
            FunctionKind::Library { .. } => None,
        }
    };
    let mut bodies: BTreeSet<String> = BTreeSet::new();
    bodies.insert(b.entry.clone());
    for c in &pi_miss.reached {
        if b.function(c).is_some_and(|f| f.is_callback()) {
            bodies.insert(c.clone());
        }
    }
    loop {
        let mut next = bodies.clone();
        for name in &bodies {
            if let Some((_, _, body)) = body_of(name) {
                for s in walk(body) {
                    if let StmtKind::Call { callee, .. } = &s.kind {
                        if body_of(callee).is_some() {
                            next.insert(callee.clone());
                        }
                    }
                }
            }
        }
        if next == bodies {
            break;
        }
        bodies = next;
    }
    let mut pi = PointsToSet::default();
    for (v, o) in &pi_miss.edges {
        pi.insert(v.clone(), o.clone());
    }
    loop {
        let mut changed = false;
        let snapshot = pi.clone();
        let pts = |v: &VarId| snapshot.pts(v).cloned().collect::<Vec<_>>();
        let mut loads = Vec::new();
        let mut stores = Vec::new();
        for name in &bodies {
            let Some((scope, _, body)) = body_of(name) else { continue };
            let var = |n: &str| VarId::new(scope, name.as_str(), n);
            for s in walk(body) {
                match &s.kind {
                    StmtKind::Alloc { target, class } => {
                        changed |= pi.insert(var(target), AbstractObject::Site {
                            id: s.id.clone(),
                            class: class.clone(),
                        });
                    }
                    StmtKind::Assign { target, source } => {
                        for o in pts(&var(source)) {
                            changed |= pi.insert(var(target), o);
                        }
                    }
                    StmtKind::Load { target, base, field } => loads.push((var(target), var(base), field.clone())),
                    StmtKind::Store { base, field, source } => stores.push((var(base), field.clone(), var(source))),
                    StmtKind::Call { target, callee, args } => {
                        if let Some((cs, params, cbody)) = body_of(callee) {
                            let cv = |n: &str| VarId::new(cs, callee.as_str(), n);
                            for (p, a) in params.iter().zip(args) {
                                for o in pts(&var(a)) {
                                    changed |= pi.insert(cv(p), o);
                                }
                            }
                            if let Some(t) = target {
                                for r in walk(cbody) {
                                    if let StmtKind::Return { var: rv } = &r.kind {
                                        for o in pts(&cv(rv)) {
                                            changed |= pi.insert(var(t), o);
                                        }
                                    }
                                }
                            }
                        }
                    }
                    StmtKind::Return { .. } | StmtKind::Branch { .. } => {}
                }
            }
        }
        for (x, y, f) in &loads {
            for (z, g, w) in &stores {
                if f != g {
                    continue;
                }
                let ys: BTreeSet<_> = snapshot.pts(y).collect();
                if snapshot.pts(z).any(|o| ys.contains(o)) {
                    for o in pts(w) {
                        changed |= pi.insert(x.clone(), o);
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    pi.reached_callbacks = pi_miss.reached.clone();
    pi
}

/// One instrumentable monitor.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Monitor {
    Alloc(StmtId),
    Call(StmtId),
    CallbackParam(String, usize),
    CallbackReach(String),
}

pub fn monitors(s: &MonitoringScheme) -> Vec<Monitor> {
    let mut out: Vec<Monitor> = s.alloc.iter().cloned().map(Monitor::Alloc).collect();
    out.extend(s.call.iter().cloned().map(Monitor::Call));
    out.extend(s.callback_params.iter().map(|(f, i)| Monitor::CallbackParam(f.clone(), *i)));
    out.extend(s.callback_reach.iter().cloned().map(Monitor::CallbackReach));
    out
}

pub fn without(s: &MonitoringScheme, m: &Monitor) -> MonitoringScheme {
    let mut s = s.clone();
    match m {
        Monitor::Alloc(id) => {
            s.alloc.remove(id);
        }
        Monitor::Call(id) => {
            s.call.remove(id);
        }
        Monitor::CallbackParam(f, i) => {
            s.callback_params.remove(&(f.clone(), *i));
        }
        Monitor::CallbackReach(f) => {
            s.callback_reach.remove(f);
        }
    }
    s
}

/// Shape of the counterexample an adversarial library must produce.
type Wanted = Box<dyn Fn(&Counterexample) -> bool>;

/// A library implementation and schedule built to defeat a scheme missing
/// one monitor.
#[derive(Clone, Debug)]
pub struct AdversarialCase {
    pub bundle: ProgramBundle,
    pub schedule: Schedule,
}

fn noop_library(b: &ProgramBundle, specs: &SpecSet) -> ProgramBundle {
    let mut out = b.clone();
    for f in out.functions.values_mut() {
        if let FunctionKind::Library { ground_truth, .. } = &mut f.kind {
            if b.is_missing(&f.name, specs) {
                *ground_truth = Some(Vec::new());
            }
        }
    }
    out
}

fn set_ground_truth(b: &mut ProgramBundle, name: &str, body: Block) {
    if let Some(FunctionKind::Library { ground_truth, .. }) = b.functions.get_mut(name).map(|f| &mut f.kind) {
        *ground_truth = Some(body);
    }
}

fn program_call(b: &ProgramBundle, id: &StmtId) -> Option<(String, Option<String>, String, Vec<String>)> {
    let idx = b.index();
    match idx.runtime_stmt(id)? {
        (BodyLoc::Program(f), Statement { kind: StmtKind::Call { target, callee, args }, .. }) => {
            Some((f.clone(), target.clone(), callee.clone(), args.clone()))
        }
        _ => None,
    }
}

/// Builds a library under which dropping `dropped` from `scheme` loses a
/// true counterexample:
///
/// * call monitor on `x = m(..)`: `m` returns a fresh library object, but
///   only when invoked from that call;
/// * alloc monitor on `o`: some missing `m` with `x = m(.., y, ..)`,
///   `y ↪ o` and `x ↪ o` not in `pi` returns its parameter `y`, so the
///   unmonitored object comes back looking like a library object.
///
/// Every other missing function becomes a no-op. Candidates are tried in
/// program order; the schedule is the first one whose execution has the
/// true counterexample the construction aims for.
pub fn adversarial_drop_library(
    b: &ProgramBundle,
    specs: &SpecSet,
    pi: &PointsToSet,
    scheme: &MonitoringScheme,
    dropped: &Monitor,
) -> Result<AdversarialCase, BuildError> {
    let label = format!("{dropped:?}");
    let present = match dropped {
        Monitor::Alloc(id) => scheme.alloc.contains(id),
        Monitor::Call(id) => scheme.call.contains(id),
        Monitor::CallbackParam(f, i) => scheme.callback_params.contains(&(f.clone(), *i)),
        Monitor::CallbackReach(f) => scheme.callback_reach.contains(f),
    };
    if !present {
        return Err(BuildError::NotInScheme(label));
    }
    // Each candidate is a library plus the call whose invocation triggers
    // it and the shape of the true counterexample it must produce.
    let mut candidates: Vec<(ProgramBundle, StmtId, Wanted)> = Vec::new();
    match dropped {
        Monitor::Call(id) => {
            let (func, target, callee, _) =
                program_call(b, id).ok_or_else(|| BuildError::NoConstruction(label.clone()))?;
            let Some(target) = target else {
                return Err(BuildError::NoConstruction(label));
            };
            let class = b
                .classes
                .iter()
                .next()
                .cloned()
                .ok_or_else(|| BuildError::NoConstruction(label.clone()))?;
            let mut adv = noop_library(b, specs);
            set_ground_truth(
                &mut adv,
                &callee,
                vec![branch(vec![
                    Statement {
                        id: StmtId::new("adv_fresh"),
                        kind: StmtKind::Alloc {
                            target: "adv_r".into(),
                            class,
                        },
                    },
                    Statement {
                        id: StmtId::new("adv_ret"),
                        kind: StmtKind::Return { var: "adv_r".into() },
                    },
                ])],
            );
            let x = VarId::program(func, target);
            candidates.push((
                adv,
                id.clone(),
                Box::new(move |ce| matches!(ce, Counterexample::Edge(v, o) if *v == x && !o.is_site())),
            ));
        }
        Monitor::Alloc(site) => {
            let obj = pi
                .iter()
                .map(|(_, o)| o)
                .find(|o| matches!(o, AbstractObject::Site { id, .. } if id == site))
                .cloned()
                .ok_or_else(|| BuildError::NoConstruction(label.clone()))?;
            for f in b.program_functions() {
                for s in walk(f.program_body().expect("program function")) {
                    let StmtKind::Call { target: Some(x), callee, args } = &s.kind else { continue };
                    if !b.is_missing(callee, specs) || pi.contains(&VarId::program(&f.name, x), &obj) {
                        continue;
                    }
                    for (i, a) in args.iter().enumerate() {
                        if !pi.contains(&VarId::program(&f.name, a), &obj) {
                            continue;
                        }
                        let param = b.function(callee).expect("resolved callee").params[i].clone();
                        let mut adv = noop_library(b, specs);
                        set_ground_truth(
                            &mut adv,
                            callee,
                            vec![branch(vec![Statement {
                                id: StmtId::new("adv_ret"),
                                kind: StmtKind::Return { var: param },
                            }])],
                        );
                        let (xv, want) = (VarId::program(&f.name, x), obj.clone());
                        candidates.push((
                            adv,
                            s.id.clone(),
                            Box::new(move |ce| matches!(ce, Counterexample::Edge(v, o) if *v == xv && *o == want)),
                        ));
                    }
                }
            }
        }
        Monitor::CallbackParam(..) | Monitor::CallbackReach(_) => {
            return Err(BuildError::NoConstruction(label));
        }
    }
    for (adv, trigger, wanted) in candidates {
        let policy = |ctx: &BranchCtx<'_>| ctx.program_call == Some(&trigger);
        let pi0 = compute_pointsto(&adv, specs, &MissingEdgeSet::default());
        for s in explore(&adv, MAX_BRANCHES, Some(&policy))? {
            let exec = full_trace(&adv, &s)?;
            if oracle_counterexamples(&adv, specs, &exec, &pi0).iter().any(&wanted) {
                return Ok(AdversarialCase {
                    bundle: adv,
                    schedule: s,
                });
            }
        }
    }
    Err(BuildError::NoConstruction(label))
}

fn branch(then_block: Block) -> Statement {
    Statement {
        id: StmtId::new("adv_branch"),
        kind: StmtKind::Branch {
            then_block,
            else_block: vec![],
        },
    }
}

/// Outcome of running an adversarial case under a reduced scheme.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdversarialVerdict {
    pub oracle: BTreeSet<Counterexample>,
    pub reported: Vec<Counterexample>,
}

impl AdversarialVerdict {
    /// Reported counterexamples that are real.
    pub fn true_reports(&self) -> usize {
        self.reported.iter().filter(|c| self.oracle.contains(c)).count()
    }

    /// The reduced scheme missed every real counterexample.
    pub fn missed(&self) -> bool {
        !self.oracle.is_empty() && self.true_reports() == 0
    }
}

pub fn run_adversarial(
    case: &AdversarialCase,
    specs: &SpecSet,
    scheme: &MonitoringScheme,
) -> Result<AdversarialVerdict, LoopError> {
    let b = &case.bundle;
    let pi = compute_pointsto(b, specs, &MissingEdgeSet::default());
    let exec = run(b, scheme, &mut ScheduleChooser::new(&case.schedule))?;
    let full = full_trace(b, &case.schedule)?;
    let mapping = build_object_mapping(b, specs, &exec.reports)?;
    Ok(AdversarialVerdict {
        oracle: oracle_counterexamples(b, specs, &full, &pi),
        reported: derive_counterexamples(&exec.reports, &mapping, &pi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;

    fn example() -> ProgramBundle {
        parse_program(include_str!("../../tests/fixtures/running_example.ir")).unwrap()
    }

    #[test]
    fn enumerates_both_branch_outcomes() {
        let s = enumerate_executions(&example(), MAX_BRANCHES).unwrap();
        assert_eq!(s, vec!["0".parse().unwrap(), "1".parse().unwrap()]);
    }

    #[test]
    fn nested_branches_and_cap() {
        let b = parse_program(
            "class A\nfunc main() program {\n branch { branch { x = new A } else {} } else {}\n branch {} else {}\n}\n",
        )
        .unwrap();
        let s: Vec<String> = enumerate_executions(&b, 3).unwrap().iter().map(|s| s.to_string()).collect();
        assert_eq!(s, vec!["00", "01", "100", "101", "110", "111"]);
        assert_eq!(enumerate_executions(&b, 2), Err(ExecError::BranchCap(2)));
    }

    #[test]
    fn ideal_proxies_follow_the_dynamic_footprint() {
        let b = example();
        let specs = SpecSet::new();
        for (sched, vars) in [("0", vec!["main.data", "main.str"]), ("1", vec!["main.data", "main.dataCopy", "main.str"])] {
            let e = full_trace(&b, &sched.parse().unwrap()).unwrap();
            let m = ideal_proxy_mapping(&b, &specs, &e);
            let want = AbstractObject::IdealProxy {
                class: ClassName::new("String"),
                vars: vars.into_iter().map(String::from).collect(),
            };
            assert_eq!(m.values().collect::<Vec<_>>(), vec![&want]);
            let phi = oracle_object_mapping(&b, &specs, &e);
            assert_eq!(phi[&0], AbstractObject::proxy("String", ["mkStr", "get"]));
            assert_eq!(phi[&1], AbstractObject::site("o_list", "List"));
        }
    }

    #[test]
    fn oracle_counterexamples_against_optimistic_pi() {
        let b = example();
        let specs = SpecSet::new();
        let pi0 = compute_pointsto(&b, &specs, &MissingEdgeSet::default());
        let e = full_trace(&b, &"1".parse().unwrap()).unwrap();
        let ces: Vec<String> = oracle_counterexamples(&b, &specs, &e, &pi0).iter().map(|c| c.to_string()).collect();
        assert_eq!(ces, vec![
            "CE main.data proxy:String:{get,mkStr}",
            "CE main.dataCopy proxy:String:{get,mkStr}",
            "CE main.str proxy:String:{get,mkStr}",
        ]);
    }

    #[test]
    fn reference_solver_handles_heap_flow() {
        let b = example();
        let pi = reference_pointsto(&b, &SpecSet::new(), &MissingEdgeSet::default());
        assert_eq!(pi, compute_pointsto(&b, &SpecSet::new(), &MissingEdgeSet::default()));
        let wp = whole_program_pta(&b);
        assert!(wp.contains(&VarId::program("main", "dataCopy"), &AbstractObject::site("o_str", "String")));
    }

    #[test]
    fn dropping_the_get_monitor_hides_the_edge() {
        let b = example();
        let specs = SpecSet::new();
        let pi0 = compute_pointsto(&b, &specs, &MissingEdgeSet::default());
        let scheme = crate::monitor::monitoring_min(&b, &specs, &pi0);
        let m = Monitor::Call(StmtId::new("c_get"));
        let case = adversarial_drop_library(&b, &specs, &pi0, &scheme, &m).unwrap();
        let reduced = run_adversarial(&case, &specs, &without(&scheme, &m)).unwrap();
        assert!(reduced.missed());
        assert!(reduced.reported.is_empty());
        let full = run_adversarial(&case, &specs, &scheme).unwrap();
        assert!(full.true_reports() > 0);
    }

    #[test]
    fn void_call_monitors_have_no_construction() {
        let b = example();
        let specs = SpecSet::new();
        let pi0 = compute_pointsto(&b, &specs, &MissingEdgeSet::default());
        let scheme = crate::monitor::monitoring_min(&b, &specs, &pi0);
        let r = adversarial_drop_library(&b, &specs, &pi0, &scheme, &Monitor::Call(StmtId::new("c_add")));
        assert!(matches!(r, Err(BuildError::NoConstruction(_))));
        let r = adversarial_drop_library(&b, &specs, &pi0, &scheme, &Monitor::Alloc(StmtId::new("nope")));
        assert!(matches!(r, Err(BuildError::NotInScheme(_))));
    }

    #[test]
    fn random_schedules_are_seeded() {
        let b = example();
        let a = random_schedules(&b, 1, 10, MAX_BRANCHES).unwrap();
        assert_eq!(a, random_schedules(&b, 1, 10, MAX_BRANCHES).unwrap());
        assert_eq!(a.len(), 2);
    }
}
