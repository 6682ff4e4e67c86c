use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use super::{AbstractObject, MissingEdgeSet, PointsToSet, Scope, VarId};
use crate::ir::{walk, Block, FunctionKind, ProgramBundle, SpecBody, SpecSet, StmtId, StmtKind};

/// Which library bodies the analysis may see. Precedence for a library
/// function: `extra`, then an active spec, then ground truth when enabled.
#[derive(Clone, Copy, Debug)]
pub struct Visibility<'a> {
    pub specs: &'a SpecSet,
    pub ground_truth: bool,
    pub extra: Option<&'a BTreeMap<String, SpecBody>>,
}

impl<'a> Visibility<'a> {
    pub fn specs(specs: &'a SpecSet) -> Self {
        Visibility {
            specs,
            ground_truth: false,
            extra: None,
        }
    }

    /// Body the analysis sees for `name`, or `None` if the function is
    /// missing.
    pub fn body<'b>(
        &self,
        b: &'b ProgramBundle,
        name: &str,
    ) -> Option<(Scope, &'b [String], &'b Block)>
    where
        'a: 'b,
    {
        let f = b.function(name)?;
        match &f.kind {
            FunctionKind::Program { body, .. } => Some((Scope::Program, &f.params, body)),
            FunctionKind::Library { ground_truth, spec } => {
                if let Some(s) = self.extra.and_then(|e| e.get(name)) {
                    return Some((Scope::Pess, &s.params, &s.body));
                }
                if let Some(s) = spec.as_ref().filter(|_| self.specs.contains(name)) {
                    return Some((Scope::Spec, &s.params, &s.body));
                }
                match ground_truth {
                    Some(gt) if self.ground_truth => Some((Scope::Lib, &f.params, gt)),
                    _ => None,
                }
            }
        }
    }
}

/// A call statement inside an analyzed body.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallSite {
    pub stmt: StmtId,
    pub scope: Scope,
    pub caller: String,
    pub callee: String,
    pub target: Option<VarId>,
    pub args: Vec<VarId>,
    /// Whether the callee's body is analyzed.
    pub visible: bool,
}

/// Constraint form of the analyzed bodies. Every constraint carries the id of
/// the statement that produced it; parameter copies carry the call's id and
/// return copies the return statement's id.
#[derive(Clone, Debug, Default)]
pub struct Constraints {
    pub allocs: Vec<(VarId, AbstractObject, StmtId)>,
    /// `(dst, src, stmt)`.
    pub copies: Vec<(VarId, VarId, StmtId)>,
    /// `(target, base, field, stmt)`.
    pub loads: Vec<(VarId, VarId, String, StmtId)>,
    /// `(base, field, source, stmt)`.
    pub stores: Vec<(VarId, String, VarId, StmtId)>,
    pub calls: Vec<CallSite>,
    pub analyzed: BTreeSet<(Scope, String)>,
}

/// Bodies reachable from the entry and the `reached` callbacks through calls
/// whose callee body is visible.
pub fn reachable_functions(
    b: &ProgramBundle,
    vis: Visibility<'_>,
    reached: &BTreeSet<String>,
) -> BTreeSet<(Scope, String)> {
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<String> = VecDeque::new();
    queue.push_back(b.entry.clone());
    queue.extend(
        reached
            .iter()
            .filter(|c| b.function(c).is_some_and(|f| f.is_callback()))
            .cloned(),
    );
    while let Some(name) = queue.pop_front() {
        let Some((scope, _, body)) = vis.body(b, &name) else {
            continue;
        };
        if !seen.insert((scope, name.clone())) {
            continue;
        }
        for s in walk(body) {
            if let StmtKind::Call { callee, .. } = &s.kind {
                queue.push_back(callee.clone());
            }
        }
    }
    seen
}

pub fn collect_constraints(
    b: &ProgramBundle,
    vis: Visibility<'_>,
    reached: &BTreeSet<String>,
) -> Constraints {
    let analyzed = reachable_functions(b, vis, reached);
    let mut c = Constraints::default();
    for (scope, fname) in &analyzed {
        let (_, _, body) = vis.body(b, fname).expect("reachable body is visible");
        let var = |n: &str| VarId::new(*scope, fname.as_str(), n);
        for s in walk(body) {
            match &s.kind {
                StmtKind::Alloc { target, class } => c.allocs.push((
                    var(target),
                    AbstractObject::Site {
                        id: s.id.clone(),
                        class: class.clone(),
                    },
                    s.id.clone(),
                )),
                StmtKind::Assign { target, source } => {
                    c.copies.push((var(target), var(source), s.id.clone()))
                }
                StmtKind::Load {
                    target,
                    base,
                    field,
                } => c
                    .loads
                    .push((var(target), var(base), field.clone(), s.id.clone())),
                StmtKind::Store {
                    base,
                    field,
                    source,
                } => c
                    .stores
                    .push((var(base), field.clone(), var(source), s.id.clone())),
                StmtKind::Call {
                    target,
                    callee,
                    args,
                } => {
                    let callee_body = vis.body(b, callee);
                    if let Some((cs, params, cbody)) = callee_body {
                        let cv = |n: &str| VarId::new(cs, callee.as_str(), n);
                        for (p, a) in params.iter().zip(args) {
                            c.copies.push((cv(p), var(a), s.id.clone()));
                        }
                        if let Some(t) = target {
                            for r in walk(cbody) {
                                if let StmtKind::Return { var: rv } = &r.kind {
                                    c.copies.push((var(t), cv(rv), r.id.clone()));
                                }
                            }
                        }
                    }
                    c.calls.push(CallSite {
                        stmt: s.id.clone(),
                        scope: *scope,
                        caller: fname.clone(),
                        callee: callee.clone(),
                        target: target.as_deref().map(var),
                        args: args.iter().map(|a| var(a)).collect(),
                        visible: callee_body.is_some(),
                    });
                }
                StmtKind::Return { .. } | StmtKind::Branch { .. } => {}
            }
        }
    }
    c.analyzed = analyzed;
    c
}

/// Least fixpoint of the allocation, copy, load/store and injection rules.
pub fn solve(b: &ProgramBundle, vis: Visibility<'_>, pi_miss: &MissingEdgeSet) -> PointsToSet {
    let c = collect_constraints(b, vis, &pi_miss.reached);
    let mut s = Worklist::default();
    for (v, o, _) in &c.allocs {
        let (v, o) = (s.var(v), s.obj(o));
        s.add(v, o);
    }
    for (v, o) in &pi_miss.edges {
        let (v, o) = (s.var(v), s.obj(o));
        s.add(v, o);
    }
    for (dst, src, _) in &c.copies {
        let (d, s2) = (s.var(dst), s.var(src));
        s.copy_succ[s2].push(d);
        let existing: Vec<usize> = s.pts[s2].iter().copied().collect();
        for o in existing {
            s.add(d, o);
        }
    }
    for (t, base, field, _) in &c.loads {
        let (t, base, f) = (s.var(t), s.var(base), s.field(field));
        s.loads[base].push((f, t));
        let bases: Vec<usize> = s.pts[base].iter().copied().collect();
        for o in bases {
            s.read_cell(o, f, t);
        }
    }
    for (base, field, src, _) in &c.stores {
        let (base, f, src) = (s.var(base), s.field(field), s.var(src));
        s.stores_by_base[base].push((f, src));
        s.stores_by_src[src].push((base, f));
        let bases: Vec<usize> = s.pts[base].iter().copied().collect();
        let vals: Vec<usize> = s.pts[src].iter().copied().collect();
        for &o1 in &bases {
            for &o2 in &vals {
                s.write_cell(o1, f, o2);
            }
        }
    }
    s.run();
    let mut pi = PointsToSet {
        reached_callbacks: pi_miss.reached.clone(),
        ..PointsToSet::default()
    };
    for (v, set) in s.pts.iter().enumerate() {
        for &o in set {
            pi.insert(s.vars[v].clone(), s.objs[o].clone());
        }
    }
    pi
}

/// Π for the given active specs and injected edges.
pub fn compute_pointsto(b: &ProgramBundle, specs: &SpecSet, pi_miss: &MissingEdgeSet) -> PointsToSet {
    solve(b, Visibility::specs(specs), pi_miss)
}

/// Π with every ground-truth body visible and nothing injected.
pub fn whole_program_pointsto(b: &ProgramBundle) -> PointsToSet {
    let none = SpecSet::new();
    solve(
        b,
        Visibility {
            specs: &none,
            ground_truth: true,
            extra: None,
        },
        &MissingEdgeSet::default(),
    )
}

#[derive(Default)]
struct Worklist {
    var_ix: HashMap<VarId, usize>,
    vars: Vec<VarId>,
    obj_ix: HashMap<AbstractObject, usize>,
    objs: Vec<AbstractObject>,
    field_ix: HashMap<String, usize>,
    pts: Vec<BTreeSet<usize>>,
    copy_succ: Vec<Vec<usize>>,
    /// base var -> (field, target)
    loads: Vec<Vec<(usize, usize)>>,
    /// base var -> (field, source)
    stores_by_base: Vec<Vec<(usize, usize)>>,
    /// source var -> (base, field)
    stores_by_src: Vec<Vec<(usize, usize)>>,
    heap: HashMap<(usize, usize), BTreeSet<usize>>,
    readers: HashMap<(usize, usize), Vec<usize>>,
    queue: VecDeque<(usize, usize)>,
}

impl Worklist {
    fn var(&mut self, v: &VarId) -> usize {
        if let Some(&i) = self.var_ix.get(v) {
            return i;
        }
        let i = self.vars.len();
        self.vars.push(v.clone());
        self.var_ix.insert(v.clone(), i);
        self.pts.push(BTreeSet::new());
        self.copy_succ.push(Vec::new());
        self.loads.push(Vec::new());
        self.stores_by_base.push(Vec::new());
        self.stores_by_src.push(Vec::new());
        i
    }

    fn obj(&mut self, o: &AbstractObject) -> usize {
        if let Some(&i) = self.obj_ix.get(o) {
            return i;
        }
        let i = self.objs.len();
        self.objs.push(o.clone());
        self.obj_ix.insert(o.clone(), i);
        i
    }

    fn field(&mut self, f: &str) -> usize {
        let n = self.field_ix.len();
        *self.field_ix.entry(f.to_string()).or_insert(n)
    }

    fn add(&mut self, v: usize, o: usize) {
        if self.pts[v].insert(o) {
            self.queue.push_back((v, o));
        }
    }

    fn read_cell(&mut self, base_obj: usize, f: usize, target: usize) {
        self.readers.entry((base_obj, f)).or_default().push(target);
        let vals: Vec<usize> = self
            .heap
            .get(&(base_obj, f))
            .into_iter()
            .flatten()
            .copied()
            .collect();
        for o in vals {
            self.add(target, o);
        }
    }

    fn write_cell(&mut self, base_obj: usize, f: usize, val: usize) {
        if self.heap.entry((base_obj, f)).or_default().insert(val) {
            let rs = self.readers.get(&(base_obj, f)).cloned().unwrap_or_default();
            for r in rs {
                self.add(r, val);
            }
        }
    }

    fn run(&mut self) {
        while let Some((v, o)) = self.queue.pop_front() {
            for d in self.copy_succ[v].clone() {
                self.add(d, o);
            }
            for (f, t) in self.loads[v].clone() {
                self.read_cell(o, f, t);
            }
            for (f, src) in self.stores_by_base[v].clone() {
                let vals: Vec<usize> = self.pts[src].iter().copied().collect();
                for val in vals {
                    self.write_cell(o, f, val);
                }
            }
            for (base, f) in self.stores_by_src[v].clone() {
                let bases: Vec<usize> = self.pts[base].iter().copied().collect();
                for bo in bases {
                    self.write_cell(bo, f, o);
                }
            }
        }
    }
}
