//! Specification inference. Every missing function is replaced by a
//! pessimistic body; the smallest set of pessimistic statements that still
//! derives a target edge becomes the candidate specification.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::error::InferError;
use crate::ir::{
    print_spec, ClassName, ProgramBundle, SpecBody, SpecOrigin, SpecSet, Statement, StmtId,
    StmtKind,
};
use crate::pta::{collect_constraints, solve, AbstractObject, MissingEdgeSet, VarId, Visibility};

/// Upper bound on subset checks during exact refinement.
const SUBSET_BUDGET: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InferMode {
    /// Bodies may only touch one fresh field of the receiver (parameter 0).
    Restricted,
    /// One local may alias every parameter and one fresh field of itself.
    General,
}

impl FromStr for InferMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "restricted" => Ok(InferMode::Restricted),
            "general" => Ok(InferMode::General),
            _ => Err(format!("unknown mode {s:?} (expected restricted or general)")),
        }
    }
}

impl fmt::Display for InferMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InferMode::Restricted => "restricted",
            InferMode::General => "general",
        })
    }
}

/// Pessimistic bodies for every missing function, plus bookkeeping.
#[derive(Clone, Debug)]
pub struct PessimisticWorld {
    pub mode: InferMode,
    pub field: String,
    pub bodies: BTreeMap<String, SpecBody>,
    /// Statements that count towards the cost, keyed by id, with their
    /// function and position.
    pub costed: BTreeMap<StmtId, (String, usize)>,
}

fn fresh(base: &str, taken: impl Fn(&str) -> bool) -> String {
    if !taken(base) {
        return base.to_string();
    }
    (1..)
        .map(|i| format!("{base}_{i}"))
        .find(|n| !taken(n))
        .expect("unbounded search")
}

fn stmt(id: String, kind: StmtKind) -> Statement {
    Statement {
        id: StmtId(id),
        kind,
    }
}

pub fn pessimistic_world(b: &ProgramBundle, specs: &SpecSet, mode: InferMode) -> PessimisticWorld {
    let field = fresh(
        match mode {
            InferMode::Restricted => "g",
            InferMode::General => "f",
        },
        |n| b.fields.contains_key(n),
    );
    let mut bodies = BTreeMap::new();
    let mut costed = BTreeMap::new();
    for f in b.library_functions().filter(|f| b.is_missing(&f.name, specs)) {
        let p = &f.params;
        let mut body = Vec::new();
        let id = |k: usize| format!("pess_{}_{k}", f.name);
        match mode {
            InferMode::Restricted => {
                if let Some(this) = p.first() {
                    let r = fresh("r", |n| p.iter().any(|q| q == n));
                    for ob in &p[1..] {
                        body.push(stmt(
                            id(body.len()),
                            StmtKind::Store {
                                base: this.clone(),
                                field: field.clone(),
                                source: ob.clone(),
                            },
                        ));
                        body.push(stmt(
                            id(body.len()),
                            StmtKind::Assign {
                                target: r.clone(),
                                source: ob.clone(),
                            },
                        ));
                    }
                    body.push(stmt(
                        id(body.len()),
                        StmtKind::Assign {
                            target: r.clone(),
                            source: this.clone(),
                        },
                    ));
                    body.push(stmt(
                        id(body.len()),
                        StmtKind::Load {
                            target: r.clone(),
                            base: this.clone(),
                            field: field.clone(),
                        },
                    ));
                    body.push(stmt(id(body.len()), StmtKind::Return { var: r }));
                }
            }
            InferMode::General => {
                if !p.is_empty() {
                    let ob = fresh("ob", |n| p.iter().any(|q| q == n));
                    for q in p {
                        body.push(stmt(
                            id(body.len()),
                            StmtKind::Assign {
                                target: ob.clone(),
                                source: q.clone(),
                            },
                        ));
                    }
                    body.push(stmt(
                        id(body.len()),
                        StmtKind::Store {
                            base: ob.clone(),
                            field: field.clone(),
                            source: ob.clone(),
                        },
                    ));
                    body.push(stmt(
                        id(body.len()),
                        StmtKind::Load {
                            target: ob.clone(),
                            base: ob.clone(),
                            field: field.clone(),
                        },
                    ));
                    body.push(stmt(id(body.len()), StmtKind::Return { var: ob }));
                }
            }
        }
        for (k, s) in body.iter().enumerate() {
            if !matches!(s.kind, StmtKind::Return { .. }) {
                costed.insert(s.id.clone(), (f.name.clone(), k));
            }
        }
        bodies.insert(
            f.name.clone(),
            SpecBody {
                params: p.clone(),
                body,
                origin: SpecOrigin::Handwritten,
            },
        );
    }
    PessimisticWorld {
        mode,
        field,
        bodies,
        costed,
    }
}

impl PessimisticWorld {
    /// The world restricted to `keep` costed statements; returns are kept
    /// unless listed in `drop_returns`.
    pub fn restrict(&self, keep: &BTreeSet<StmtId>, drop_returns: &BTreeSet<StmtId>) -> BTreeMap<String, SpecBody> {
        self.bodies
            .iter()
            .map(|(name, body)| {
                let mut sb = body.clone();
                sb.body.retain(|s| match s.kind {
                    StmtKind::Return { .. } => !drop_returns.contains(&s.id),
                    _ => keep.contains(&s.id),
                });
                (name.clone(), sb)
            })
            .collect()
    }
}

/// Edge the inferred specification must explain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Target {
    pub var: VarId,
    pub object: AbstractObject,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InferredSpec {
    pub function: String,
    pub params: Vec<String>,
    /// Chosen pessimistic statements in body order.
    pub statements: Vec<Statement>,
    /// Costed statements among `statements`.
    pub cost: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Inference {
    pub mode: InferMode,
    pub field: String,
    pub specs: Vec<InferredSpec>,
    pub cost: usize,
    /// Sum-of-premises priority of the target in the shortest-derivation
    /// search; an upper bound on `cost`.
    pub derivation_priority: usize,
    /// False when the subset search ran out of budget and `cost` is only an
    /// upper bound.
    pub optimal: bool,
}

impl Inference {
    pub fn as_spec_bodies(&self) -> BTreeMap<String, SpecBody> {
        self.specs
            .iter()
            .map(|s| {
                (
                    s.function.clone(),
                    SpecBody {
                        params: s.params.clone(),
                        body: s.statements.clone(),
                        origin: SpecOrigin::Handwritten,
                    },
                )
            })
            .collect()
    }

    /// One re-parseable spec file per function: `(file name, contents)`.
    pub fn spec_files(&self) -> Vec<(String, String)> {
        self.as_spec_bodies()
            .iter()
            .map(|(name, body)| {
                let uses_field = body.body.iter().any(|s| {
                    matches!(&s.kind, StmtKind::Load { field, .. } | StmtKind::Store { field, .. } if *field == self.field)
                });
                let mut text = String::new();
                if uses_field {
                    text.push_str(&format!("field {} library\n", self.field));
                }
                text.push_str(&print_spec(name, body));
                (format!("{name}.spec"), text)
            })
            .collect()
    }
}

fn derives(
    b: &ProgramBundle,
    specs: &SpecSet,
    bodies: &BTreeMap<String, SpecBody>,
    pi_miss: &MissingEdgeSet,
    target: &Target,
) -> bool {
    let vis = Visibility {
        specs,
        ground_truth: false,
        extra: Some(bodies),
    };
    solve(b, vis, pi_miss).contains(&target.var, &target.object)
}

/// True iff `candidate`, analyzed alongside the active specs with nothing
/// injected, derives the target.
pub fn validate_spec(
    b: &ProgramBundle,
    specs: &SpecSet,
    candidate: &BTreeMap<String, SpecBody>,
    target: &Target,
) -> bool {
    derives(b, specs, candidate, &MissingEdgeSet::default(), target)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
enum Fact {
    Pts(usize, usize),
    Heap(usize, usize, usize),
}

/// Sort key for a rule's statement: pessimistic statements by (function,
/// position), all others first.
type TagKey = (String, usize);

/// A load waiting on its base: (target var, base fact, statement priority, id).
type Reader = (usize, Fact, usize, StmtId);

#[derive(Clone, Debug)]
struct Derivation {
    stmt: Option<StmtId>,
    premises: Vec<Fact>,
}

/// Shortest derivation: returns the target's priority and the distinct
/// costed statements of its back-pointer tree.
fn shortest_derivation(
    b: &ProgramBundle,
    specs: &SpecSet,
    world: &PessimisticWorld,
    pi_miss: &MissingEdgeSet,
    target: &Target,
) -> Option<(usize, BTreeSet<StmtId>)> {
    let vis = Visibility {
        specs,
        ground_truth: false,
        extra: Some(&world.bodies),
    };
    let c = collect_constraints(b, vis, &pi_miss.reached);
    let mut vars: HashMap<VarId, usize> = HashMap::new();
    let mut objs: HashMap<AbstractObject, usize> = HashMap::new();
    let mut fields: HashMap<String, usize> = HashMap::new();
    fn intern<K: std::hash::Hash + Eq + Clone>(m: &mut HashMap<K, usize>, k: &K) -> usize {
        let n = m.len();
        *m.entry(k.clone()).or_insert(n)
    }
    let cost = |s: &StmtId| usize::from(world.costed.contains_key(s));
    let key = |s: &StmtId| -> TagKey {
        world
            .costed
            .get(s)
            .cloned()
            .unwrap_or_else(|| (String::new(), 0))
    };

    let mut copies: HashMap<usize, Vec<(usize, StmtId)>> = HashMap::new();
    let mut loads_by_base: HashMap<usize, Vec<(usize, usize, StmtId)>> = HashMap::new();
    let mut stores_by_base: HashMap<usize, Vec<(usize, usize, StmtId)>> = HashMap::new();
    let mut stores_by_src: HashMap<usize, Vec<(usize, usize, StmtId)>> = HashMap::new();
    let mut heap: BinaryHeap<Reverse<(usize, TagKey, Fact, usize)>> = BinaryHeap::new();
    let mut derivations: Vec<Derivation> = Vec::new();
    let mut push = |heap: &mut BinaryHeap<_>, prio: usize, tag: TagKey, fact: Fact, d: Derivation| {
        derivations.push(d);
        heap.push(Reverse((prio, tag, fact, derivations.len() - 1)));
    };

    for (v, o, s) in &c.allocs {
        let f = Fact::Pts(intern(&mut vars, v), intern(&mut objs, o));
        push(&mut heap, cost(s), key(s), f, Derivation { stmt: Some(s.clone()), premises: vec![] });
    }
    for (v, o) in &pi_miss.edges {
        let f = Fact::Pts(intern(&mut vars, v), intern(&mut objs, o));
        push(&mut heap, 0, (String::new(), 0), f, Derivation { stmt: None, premises: vec![] });
    }
    for (d, s, id) in &c.copies {
        let (d, s) = (intern(&mut vars, d), intern(&mut vars, s));
        copies.entry(s).or_default().push((d, id.clone()));
    }
    for (t, base, fld, id) in &c.loads {
        let (t, base, fld) = (intern(&mut vars, t), intern(&mut vars, base), intern(&mut fields, fld));
        loads_by_base.entry(base).or_default().push((fld, t, id.clone()));
    }
    for (base, fld, src, id) in &c.stores {
        let (base, fld, src) = (intern(&mut vars, base), intern(&mut fields, fld), intern(&mut vars, src));
        stores_by_base.entry(base).or_default().push((fld, src, id.clone()));
        stores_by_src.entry(src).or_default().push((base, fld, id.clone()));
    }
    let (Some(&tv), Some(&to)) = (vars.get(&target.var), objs.get(&target.object)) else {
        return None;
    };
    let goal = Fact::Pts(tv, to);

    let mut done: HashMap<Fact, (usize, usize)> = HashMap::new();
    let mut pts: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    let mut cells: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
    let mut readers: HashMap<(usize, usize), Vec<Reader>> = HashMap::new();
    while let Some(Reverse((prio, _, fact, di))) = heap.pop() {
        if done.contains_key(&fact) {
            continue;
        }
        done.insert(fact, (prio, di));
        if fact == goal {
            break;
        }
        match fact {
            Fact::Pts(v, o) => {
                pts.entry(v).or_default().push((o, prio));
                for (d, id) in copies.get(&v).into_iter().flatten() {
                    let p = prio + cost(id);
                    push(&mut heap, p, key(id), Fact::Pts(*d, o), Derivation { stmt: Some(id.clone()), premises: vec![fact] });
                }
                for (fld, t, id) in loads_by_base.get(&v).into_iter().flatten() {
                    readers.entry((o, *fld)).or_default().push((*t, fact, prio, id.clone()));
                    for (o2, p2) in cells.get(&(o, *fld)).into_iter().flatten() {
                        let p = prio + p2 + cost(id);
                        let prem = vec![fact, Fact::Heap(o, *fld, *o2)];
                        push(&mut heap, p, key(id), Fact::Pts(*t, *o2), Derivation { stmt: Some(id.clone()), premises: prem });
                    }
                }
                for (fld, src, id) in stores_by_base.get(&v).into_iter().flatten() {
                    for (o2, p2) in pts.get(src).cloned().into_iter().flatten() {
                        let p = prio + p2 + cost(id);
                        let prem = vec![fact, Fact::Pts(*src, o2)];
                        push(&mut heap, p, key(id), Fact::Heap(o, *fld, o2), Derivation { stmt: Some(id.clone()), premises: prem });
                    }
                }
                for (base, fld, id) in stores_by_src.get(&v).into_iter().flatten() {
                    for (o1, p1) in pts.get(base).cloned().into_iter().flatten() {
                        if *base == v && o1 == o {
                            // Already handled by the by-base pass above.
                            continue;
                        }
                        let p = prio + p1 + cost(id);
                        let prem = vec![Fact::Pts(*base, o1), fact];
                        push(&mut heap, p, key(id), Fact::Heap(o1, *fld, o), Derivation { stmt: Some(id.clone()), premises: prem });
                    }
                }
            }
            Fact::Heap(o1, fld, o2) => {
                cells.entry((o1, fld)).or_default().push((o2, prio));
                for (t, base_fact, p1, id) in readers.get(&(o1, fld)).cloned().into_iter().flatten() {
                    let p = prio + p1 + cost(&id);
                    let prem = vec![base_fact, fact];
                    push(&mut heap, p, key(&id), Fact::Pts(t, o2), Derivation { stmt: Some(id.clone()), premises: prem });
                }
            }
        }
    }
    let (prio, _) = *done.get(&goal)?;
    let mut used = BTreeSet::new();
    let mut stack = vec![goal];
    let mut seen = BTreeSet::new();
    while let Some(f) = stack.pop() {
        if !seen.insert(f) {
            continue;
        }
        let (_, di) = done[&f];
        let d = &derivations[di];
        if let Some(s) = &d.stmt {
            if world.costed.contains_key(s) {
                used.insert(s.clone());
            }
        }
        stack.extend(d.premises.iter().copied());
    }
    Some((prio, used))
}

/// Visits the `k`-subsets of `0..n` in lexicographic order until `f`
/// returns true or the budget is spent.
fn first_subset(n: usize, k: usize, budget: &mut usize, mut f: impl FnMut(&[usize]) -> bool) -> Option<Vec<usize>> {
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return None;
    }
    loop {
        if *budget == 0 {
            return None;
        }
        *budget -= 1;
        if f(&idx) {
            return Some(idx);
        }
        let mut i = k;
        loop {
            if i == 0 {
                return None;
            }
            i -= 1;
            if idx[i] < n - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Smallest set of pessimistic statements deriving `target`.
pub fn infer_min_spec(
    b: &ProgramBundle,
    specs: &SpecSet,
    pi_miss: &MissingEdgeSet,
    target: &Target,
    mode: InferMode,
) -> Result<Inference, InferError> {
    if !target.var.is_program() {
        return Err(InferError::NotProgramVar(target.var.to_string()));
    }
    let world = pessimistic_world(b, specs, mode);
    let underivable = || InferError::Underivable(format!("{} -> {}", target.var, target.object));
    if !derives(b, specs, &world.bodies, pi_miss, target) {
        return Err(underivable());
    }
    let (priority, dijkstra_set) =
        shortest_derivation(b, specs, &world, pi_miss, target).ok_or_else(underivable)?;
    let no_returns = BTreeSet::new();
    let check = |keep: &BTreeSet<StmtId>| derives(b, specs, &world.restrict(keep, &no_returns), pi_miss, target);

    // Candidates: costed statements of functions the analysis reaches.
    let reached = collect_constraints(
        b,
        Visibility {
            specs,
            ground_truth: false,
            extra: Some(&world.bodies),
        },
        &pi_miss.reached,
    )
    .analyzed;
    let relevant: Vec<&StmtId> = world
        .costed
        .iter()
        .filter(|(_, (f, _))| reached.iter().any(|(_, r)| r == f))
        .map(|(id, _)| id)
        .collect();
    let mut budget = SUBSET_BUDGET;
    let mut best = None;
    for k in 0..dijkstra_set.len() {
        let found = first_subset(relevant.len(), k, &mut budget, |ix| {
            check(&ix.iter().map(|&i| relevant[i].clone()).collect())
        });
        if let Some(ix) = found {
            best = Some(ix.iter().map(|&i| relevant[i].clone()).collect::<BTreeSet<_>>());
            break;
        }
        if budget == 0 {
            break;
        }
    }
    let optimal = best.is_some() || budget > 0;
    let chosen = match best {
        Some(s) => s,
        None if optimal => dijkstra_set,
        None => {
            let mut s = dijkstra_set;
            for id in s.clone() {
                let mut t = s.clone();
                t.remove(&id);
                if check(&t) {
                    s = t;
                }
            }
            s
        }
    };

    // Keep a return statement only if the derivation needs it.
    let all_returns: BTreeSet<StmtId> = world
        .bodies
        .values()
        .flat_map(|sb| sb.body.iter())
        .filter(|s| matches!(s.kind, StmtKind::Return { .. }))
        .map(|s| s.id.clone())
        .collect();
    let mut dropped = BTreeSet::new();
    for r in &all_returns {
        let mut trial = dropped.clone();
        trial.insert(r.clone());
        if derives(b, specs, &world.restrict(&chosen, &trial), pi_miss, target) {
            dropped = trial;
        }
    }
    let bodies = world.restrict(&chosen, &dropped);
    let specs_out: Vec<InferredSpec> = bodies
        .into_iter()
        .filter(|(_, sb)| !sb.body.is_empty())
        .map(|(name, sb)| InferredSpec {
            cost: sb.body.iter().filter(|s| world.costed.contains_key(&s.id)).count(),
            function: name,
            params: sb.params,
            statements: sb.body,
        })
        .collect();
    Ok(Inference {
        mode,
        field: world.field.clone(),
        cost: chosen.len(),
        specs: specs_out,
        derivation_priority: priority,
        optimal,
    })
}

/// Allocation specification for a library function that was observed as
/// the sole source of some library object.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ProxySpec {
    pub class: ClassName,
    pub function: String,
}

impl fmt::Display for ProxySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "proxyspec {} {}", self.class, self.function)
    }
}

/// One proxy spec per observed proxy whose footprint is a single function.
pub fn infer_proxy_specs<'a>(observed: impl IntoIterator<Item = &'a AbstractObject>) -> BTreeSet<ProxySpec> {
    observed
        .into_iter()
        .filter_map(|o| match o {
            AbstractObject::Proxy { class, footprint } if footprint.len() == 1 => {
                let m = footprint.iter().next().expect("singleton");
                (!m.contains('#')).then(|| ProxySpec {
                    class: class.clone(),
                    function: m.clone(),
                })
            }
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;

    const WRAP: &str = "class A\nfunc main() program {\n a = new A @oa\n w = call wrap(a) @cw\n x = call unwrap(w) @cu\n}\nfunc wrap(v) library\nfunc unwrap(this) library\n";

    fn target(v: &str, site: &str, class: &str) -> Target {
        Target {
            var: VarId::program("main", v),
            object: AbstractObject::site(site, class),
        }
    }

    #[test]
    fn restricted_body_shape() {
        let b = parse_program("func main() program { }\nfunc add(this, ob) library\n").unwrap();
        let w = pessimistic_world(&b, &SpecSet::new(), InferMode::Restricted);
        let text = print_spec("add", &w.bodies["add"]);
        assert_eq!(
            text,
            "spec add(this, ob) {\n  this.g = ob @pess_add_0\n  r = ob @pess_add_1\n  r = this @pess_add_2\n  r = this.g @pess_add_3\n  return r @pess_add_4\n}\n"
        );
        assert_eq!(w.costed.len(), 4);
    }

    #[test]
    fn already_derivable_costs_nothing() {
        let b = parse_program(WRAP).unwrap();
        let inf = infer_min_spec(&b, &SpecSet::new(), &MissingEdgeSet::default(), &target("a", "oa", "A"), InferMode::Restricted).unwrap();
        assert_eq!(inf.cost, 0);
        assert!(inf.specs.is_empty());
    }

    #[test]
    fn restricted_cannot_pass_through_single_argument_but_general_can() {
        let b = parse_program(WRAP).unwrap();
        let t = target("x", "oa", "A");
        let r = infer_min_spec(&b, &SpecSet::new(), &MissingEdgeSet::default(), &t, InferMode::Restricted).unwrap();
        // wrap(v) has only a receiver: r = v; unwrap(this): r = this.
        assert_eq!(r.cost, 2);
        let g = infer_min_spec(&b, &SpecSet::new(), &MissingEdgeSet::default(), &t, InferMode::General).unwrap();
        assert_eq!(g.cost, 2);
        assert!(validate_spec(&b, &SpecSet::new(), &g.as_spec_bodies(), &t));
        assert!(validate_spec(&b, &SpecSet::new(), &r.as_spec_bodies(), &t));
    }

    #[test]
    fn underivable_target_is_an_error() {
        let b = parse_program("class A\nfunc main() program {\n a = new A @oa\n x = call mk() @c\n}\nfunc mk() library\n").unwrap();
        let err = infer_min_spec(&b, &SpecSet::new(), &MissingEdgeSet::default(), &target("x", "oa", "A"), InferMode::General)
            .unwrap_err();
        assert!(matches!(err, InferError::Underivable(_)));
    }

    #[test]
    fn subsets_in_lexicographic_order() {
        let mut seen = Vec::new();
        let mut budget = 100;
        first_subset(4, 2, &mut budget, |s| {
            seen.push(s.to_vec());
            false
        });
        assert_eq!(seen, [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]]);
    }

    #[test]
    fn only_singleton_footprints_become_proxy_specs() {
        let obs = [
            AbstractObject::proxy("String", ["mkStr"]),
            AbstractObject::proxy("String", ["mkStr", "get"]),
            AbstractObject::proxy("Loc", ["onLoc#0"]),
        ];
        let out = infer_proxy_specs(&obs);
        assert_eq!(
            out.into_iter().map(|p| p.to_string()).collect::<Vec<_>>(),
            ["proxyspec String mkStr"]
        );
    }
}
