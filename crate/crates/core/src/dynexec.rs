//! Deterministic interpreter. Library calls run ground-truth bodies;
//! monitored statements emit reports; a full trace is kept for oracles.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::ExecError;
use crate::ir::{Block, ClassName, FunctionKind, ProgramBundle, StmtId, StmtKind};
use crate::monitor::MonitoringScheme;
use crate::pta::VarId;

const MAX_DEPTH: usize = 256;

/// Branch outcomes consumed in execution order.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Schedule {
    pub bits: Vec<bool>,
}

impl Schedule {
    pub fn new(bits: Vec<bool>) -> Self {
        Schedule { bits }
    }
}

/// `0`/`1` per bit; `-` for the empty schedule.
impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.bits.is_empty() {
            return f.write_str("-");
        }
        for b in &self.bits {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Schedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "-" {
            return Ok(Schedule::default());
        }
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(format!("bad schedule bit {c:?} in {s:?}")),
            })
            .collect::<Result<_, _>>()
            .map(Schedule::new)
    }
}

/// Where a branch is being decided.
#[derive(Clone, Copy, Debug)]
pub struct BranchCtx<'a> {
    pub stmt: &'a StmtId,
    pub func: &'a str,
    pub in_library: bool,
    /// The program call through which library code was entered, if any.
    pub program_call: Option<&'a StmtId>,
}

pub trait BranchChooser {
    fn choose(&mut self, ctx: &BranchCtx<'_>) -> Result<bool, ExecError>;
}

/// Replays a fixed schedule.
pub struct ScheduleChooser<'s> {
    bits: &'s [bool],
    pos: usize,
}

impl<'s> ScheduleChooser<'s> {
    pub fn new(s: &'s Schedule) -> Self {
        ScheduleChooser {
            bits: &s.bits,
            pos: 0,
        }
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }
}

impl BranchChooser for ScheduleChooser<'_> {
    fn choose(&mut self, ctx: &BranchCtx<'_>) -> Result<bool, ExecError> {
        let bit = *self
            .bits
            .get(self.pos)
            .ok_or_else(|| ExecError::ScheduleExhausted(ctx.stmt.to_string()))?;
        self.pos += 1;
        Ok(bit)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConcreteObject {
    pub oid: usize,
    pub class: ClassName,
    pub origin: StmtId,
    pub fields: BTreeMap<String, usize>,
}

/// What a report observed.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReportSite {
    Alloc(StmtId),
    /// Return value of a monitored call to library code.
    Call { stmt: StmtId, callee: String },
    /// Value written by a naively monitored statement.
    Value(StmtId),
    CallbackParam { func: String, idx: usize },
    CallbackReach(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Report {
    pub site: ReportSite,
    /// Observed object; absent only for reach reports.
    pub object: Option<(usize, ClassName)>,
    /// Program variable bound to the object, if the statement binds one.
    pub var: Option<VarId>,
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("R ")?;
        match &self.site {
            ReportSite::Alloc(s) | ReportSite::Call { stmt: s, .. } | ReportSite::Value(s) => {
                write!(f, "{s}")?
            }
            ReportSite::CallbackParam { func, idx } => write!(f, "cb:{func}#{idx}")?,
            ReportSite::CallbackReach(func) => write!(f, "reach:{func}")?,
        }
        if let Some((oid, class)) = &self.object {
            write!(f, " {oid} {class}")?;
        }
        Ok(())
    }
}

/// Why a variable was bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BindCause {
    Stmt(StmtId),
    Param {
        func: String,
        idx: usize,
        from_library: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Event {
    Alloc {
        oid: usize,
        class: ClassName,
        origin: StmtId,
        program_code: bool,
    },
    /// A program variable received a non-null object.
    Bind {
        var: VarId,
        oid: usize,
        cause: BindCause,
    },
    Enter(String),
    Exit(String),
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Alloc { oid, origin, .. } => write!(f, "A {oid} {origin}"),
            Event::Bind { var, oid, .. } => write!(f, "B {var} {oid}"),
            Event::Enter(func) => write!(f, "E {func}"),
            Event::Exit(func) => write!(f, "X {func}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Execution {
    pub reports: Vec<Report>,
    pub trace: Vec<Event>,
    pub heap: Vec<ConcreteObject>,
    /// Final variable values of the entry function.
    pub entry_env: BTreeMap<String, usize>,
}

impl Execution {
    pub fn report_log(&self) -> String {
        self.reports.iter().map(|r| format!("{r}\n")).collect()
    }

    pub fn trace_log(&self) -> String {
        self.trace.iter().map(|e| format!("{e}\n")).collect()
    }
}

/// Runs the entry function under `scheme`, taking branch decisions from
/// `chooser`.
pub fn run(
    b: &ProgramBundle,
    scheme: &MonitoringScheme,
    chooser: &mut dyn BranchChooser,
) -> Result<Execution, ExecError> {
    let mut m = Machine {
        b,
        scheme,
        chooser,
        out: Execution::default(),
        reached: Default::default(),
        depth: 0,
    };
    let env = m.call_function(&b.entry, &[], false, None)?.1;
    m.out.entry_env = env;
    Ok(m.out)
}

/// Reports of one execution under `sched`.
pub fn execute(
    b: &ProgramBundle,
    scheme: &MonitoringScheme,
    sched: &Schedule,
) -> Result<Vec<Report>, ExecError> {
    Ok(run(b, scheme, &mut ScheduleChooser::new(sched))?.reports)
}

/// Full execution record, including the trace, under `sched`.
pub fn trace(
    b: &ProgramBundle,
    scheme: &MonitoringScheme,
    sched: &Schedule,
) -> Result<Execution, ExecError> {
    run(b, scheme, &mut ScheduleChooser::new(sched))
}

type Env = BTreeMap<String, usize>;

struct Machine<'a, 'c> {
    b: &'a ProgramBundle,
    scheme: &'a MonitoringScheme,
    chooser: &'c mut dyn BranchChooser,
    out: Execution,
    reached: std::collections::BTreeSet<String>,
    depth: usize,
}

/// Per-activation context.
struct Frame<'a> {
    func: &'a str,
    in_library: bool,
    program_call: Option<&'a StmtId>,
    env: Env,
}

enum Flow {
    Next,
    Return(Option<usize>),
}

impl<'a> Machine<'a, '_> {
    fn call_function(
        &mut self,
        name: &'a str,
        args: &[Option<usize>],
        from_library: bool,
        program_call: Option<&'a StmtId>,
    ) -> Result<(Option<usize>, Env), ExecError> {
        let f = self
            .b
            .function(name)
            .ok_or_else(|| ExecError::UnknownFunction(name.to_string()))?;
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ExecError::DepthExceeded(name.to_string()));
        }
        let (body, in_library): (&'a Block, bool) = match &f.kind {
            FunctionKind::Program { body, .. } => (body, false),
            FunctionKind::Library { ground_truth, .. } => (
                ground_truth
                    .as_ref()
                    .ok_or_else(|| ExecError::NoGroundTruth(name.to_string()))?,
                true,
            ),
        };
        self.out.trace.push(Event::Enter(name.to_string()));
        if !in_library && self.reached.insert(name.to_string()) && self.scheme.callback_reach.contains(name)
        {
            self.out.reports.push(Report {
                site: ReportSite::CallbackReach(name.to_string()),
                object: None,
                var: None,
            });
        }
        let mut frame = Frame {
            func: name,
            in_library,
            program_call: if in_library { program_call } else { None },
            env: Env::new(),
        };
        for (idx, (p, a)) in f.params.iter().zip(args).enumerate() {
            let Some(oid) = *a else { continue };
            frame.env.insert(p.clone(), oid);
            if in_library {
                continue;
            }
            let var = VarId::program(name, p);
            self.out.trace.push(Event::Bind {
                var: var.clone(),
                oid,
                cause: BindCause::Param {
                    func: name.to_string(),
                    idx,
                    from_library,
                },
            });
            if from_library && self.scheme.callback_params.contains(&(name.to_string(), idx)) {
                let class = self.out.heap[oid].class.clone();
                self.out.reports.push(Report {
                    site: ReportSite::CallbackParam {
                        func: name.to_string(),
                        idx,
                    },
                    object: Some((oid, class)),
                    var: Some(var),
                });
            }
        }
        let ret = match self.block(body, &mut frame)? {
            Flow::Return(v) => v,
            Flow::Next => None,
        };
        self.out.trace.push(Event::Exit(name.to_string()));
        self.depth -= 1;
        Ok((ret, frame.env))
    }

    fn set(&mut self, frame: &mut Frame<'a>, var: &str, val: Option<usize>, stmt: &StmtId) {
        match val {
            Some(oid) => {
                frame.env.insert(var.to_string(), oid);
                if !frame.in_library {
                    self.out.trace.push(Event::Bind {
                        var: VarId::program(frame.func, var),
                        oid,
                        cause: BindCause::Stmt(stmt.clone()),
                    });
                }
            }
            None => {
                frame.env.remove(var);
            }
        }
    }

    fn report(&mut self, site: ReportSite, val: Option<usize>, var: Option<VarId>) {
        if let Some(oid) = val {
            let class = self.out.heap[oid].class.clone();
            self.out.reports.push(Report {
                site,
                object: Some((oid, class)),
                var,
            });
        }
    }

    fn block(&mut self, block: &'a Block, frame: &mut Frame<'a>) -> Result<Flow, ExecError> {
        for s in block {
            let prog_var = |v: &str, fr: &Frame<'_>| (!fr.in_library).then(|| VarId::program(fr.func, v));
            match &s.kind {
                StmtKind::Alloc { target, class } => {
                    let oid = self.out.heap.len();
                    self.out.heap.push(ConcreteObject {
                        oid,
                        class: class.clone(),
                        origin: s.id.clone(),
                        fields: BTreeMap::new(),
                    });
                    self.out.trace.push(Event::Alloc {
                        oid,
                        class: class.clone(),
                        origin: s.id.clone(),
                        program_code: !frame.in_library,
                    });
                    self.set(frame, target, Some(oid), &s.id);
                    if self.scheme.alloc.contains(&s.id) {
                        let var = prog_var(target, frame);
                        self.report(ReportSite::Alloc(s.id.clone()), Some(oid), var);
                    }
                }
                StmtKind::Assign { target, source } => {
                    let v = frame.env.get(source).copied();
                    self.set(frame, target, v, &s.id);
                    if self.scheme.value.contains(&s.id) {
                        let var = prog_var(target, frame);
                        self.report(ReportSite::Value(s.id.clone()), v, var);
                    }
                }
                StmtKind::Load {
                    target,
                    base,
                    field,
                } => {
                    let v = frame
                        .env
                        .get(base)
                        .and_then(|o| self.out.heap[*o].fields.get(field))
                        .copied();
                    self.set(frame, target, v, &s.id);
                    if self.scheme.value.contains(&s.id) {
                        let var = prog_var(target, frame);
                        self.report(ReportSite::Value(s.id.clone()), v, var);
                    }
                }
                StmtKind::Store {
                    base,
                    field,
                    source,
                } => {
                    if let Some(&o) = frame.env.get(base) {
                        match frame.env.get(source) {
                            Some(&v) => {
                                self.out.heap[o].fields.insert(field.clone(), v);
                            }
                            None => {
                                self.out.heap[o].fields.remove(field);
                            }
                        }
                    }
                }
                StmtKind::Call {
                    target,
                    callee,
                    args,
                } => {
                    let argv: Vec<Option<usize>> =
                        args.iter().map(|a| frame.env.get(a).copied()).collect();
                    let callee_is_lib = self.b.function(callee).is_some_and(|f| f.is_library());
                    let program_call = if frame.in_library {
                        frame.program_call
                    } else if callee_is_lib {
                        Some(&s.id)
                    } else {
                        None
                    };
                    let (ret, _) = self.call_function(callee, &argv, frame.in_library, program_call)?;
                    if let Some(t) = target {
                        self.set(frame, t, ret, &s.id);
                        let var = prog_var(t, frame);
                        if self.scheme.call.contains(&s.id) {
                            let site = ReportSite::Call {
                                stmt: s.id.clone(),
                                callee: callee.clone(),
                            };
                            self.report(site, ret, var);
                        } else if self.scheme.value.contains(&s.id) {
                            self.report(ReportSite::Value(s.id.clone()), ret, var);
                        }
                    }
                }
                StmtKind::Return { var } => {
                    return Ok(Flow::Return(frame.env.get(var).copied()));
                }
                StmtKind::Branch {
                    then_block,
                    else_block,
                } => {
                    let ctx = BranchCtx {
                        stmt: &s.id,
                        func: frame.func,
                        in_library: frame.in_library,
                        program_call: frame.program_call,
                    };
                    let taken = if self.chooser.choose(&ctx)? {
                        then_block
                    } else {
                        else_block
                    };
                    if let Flow::Return(v) = self.block(taken, frame)? {
                        return Ok(Flow::Return(v));
                    }
                }
            }
        }
        Ok(Flow::Next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;

    const PROG: &str = "class A\nclass S\nfield f library\nfunc main() program {\n a = new A @oa\n s = call mk() @cm\n call put(a, s) @cp\n branch @br {\n  t = call get(a) @cg\n } else {\n  u = a.g @ld\n }\n}\nfield g program\nfunc mk() library { x = new S @ox; return x }\nfunc put(t, v) library { t.f = v }\nfunc get(t) library { r = t.f; return r }\n";

    fn scheme() -> MonitoringScheme {
        MonitoringScheme {
            alloc: [StmtId::new("oa")].into(),
            call: [StmtId::new("cm"), StmtId::new("cp"), StmtId::new("cg")].into(),
            ..Default::default()
        }
    }

    #[test]
    fn reports_follow_schedule() {
        let b = parse_program(PROG).unwrap();
        let log = |bits: &str| {
            let r = execute(&b, &scheme(), &bits.parse().unwrap()).unwrap();
            r.iter().map(|x| x.to_string()).collect::<Vec<_>>()
        };
        assert_eq!(log("1"), ["R oa 0 A", "R cm 1 S", "R cg 1 S"]);
        assert_eq!(log("0"), ["R oa 0 A", "R cm 1 S"]);
    }

    #[test]
    fn exhausted_schedule_is_an_error() {
        let b = parse_program(PROG).unwrap();
        assert_eq!(
            execute(&b, &scheme(), &Schedule::default()),
            Err(ExecError::ScheduleExhausted("br".into()))
        );
    }

    #[test]
    fn monitoring_does_not_change_the_run() {
        let b = parse_program(PROG).unwrap();
        let s: Schedule = "1".parse().unwrap();
        let with = trace(&b, &scheme(), &s).unwrap();
        let without = trace(&b, &MonitoringScheme::default(), &s).unwrap();
        assert!(without.reports.is_empty());
        assert_eq!(with.heap, without.heap);
        assert_eq!(with.entry_env, without.entry_env);
        assert_eq!(with.trace, without.trace);
    }

    #[test]
    fn trace_log_lines() {
        let b = parse_program(PROG).unwrap();
        let e = trace(&b, &MonitoringScheme::default(), &"0".parse().unwrap()).unwrap();
        let log = e.trace_log();
        assert!(log.starts_with("E main\nA 0 oa\nB main.a 0\nE mk\nA 1 ox\nX mk\nB main.s 1\n"), "{log}");
    }

    #[test]
    fn missing_ground_truth_is_reported() {
        let b = parse_program("func main() program { call m() }\nfunc m() library\n").unwrap();
        assert_eq!(
            execute(&b, &MonitoringScheme::default(), &Schedule::default()),
            Err(ExecError::NoGroundTruth("m".into()))
        );
    }

    #[test]
    fn schedule_text() {
        assert_eq!("-".parse::<Schedule>().unwrap(), Schedule::default());
        assert_eq!("10".parse::<Schedule>().unwrap().to_string(), "10");
        assert!("12".parse::<Schedule>().is_err());
    }
}
