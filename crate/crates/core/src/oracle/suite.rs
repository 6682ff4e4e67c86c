//! Corpus-wide property checks shared by the acceptance tests and the
//! `oracle-check` command. Each returns a summary or the first violation.

use std::collections::{BTreeMap, BTreeSet};

use super::gen::generate_corpus;
use super::{
    adversarial_drop_library, closure_of_executions, enumerate_executions, full_trace, ideal_proxy_mapping,
    mapped_dynamic_edges, monitors, oracle_counterexamples, oracle_object_mapping, reference_pointsto,
    run_adversarial, whole_program_pta, without, Monitor, MAX_BRANCHES,
};
use crate::dynexec::{Execution, Schedule};
use crate::error::LoopError;
use crate::feedback::{eventual_soundness_bound, run_loop, Counterexample, LoopOutcome};
use crate::ir::{ProgramBundle, SpecSet};
use crate::monitor::{monitoring_scheme, SchemeKind};
use crate::pta::{compute_pointsto, program_variables, AbstractObject, MissingEdgeSet, PointsToSet, VarId};
use crate::specinfer::{infer_min_spec, validate_spec, InferMode, Target};

pub type Outcome = Result<String, String>;

pub struct CorpusCase {
    pub b: ProgramBundle,
    pub schedules: Vec<Schedule>,
    pub execs: Vec<Execution>,
}

/// Generated programs with every execution enumerated and the minimal-scheme
/// loop already run.
pub struct Corpus {
    pub cases: Vec<CorpusCase>,
    pub min_loops: Vec<LoopOutcome>,
}

impl Corpus {
    pub fn generate(seed: u64, n: usize) -> Result<Corpus, LoopError> {
        let mut cases = Vec::with_capacity(n);
        for b in generate_corpus(seed, n) {
            let schedules = enumerate_executions(&b, MAX_BRANCHES)?;
            let execs = schedules.iter().map(|s| full_trace(&b, s)).collect::<Result<_, _>>()?;
            cases.push(CorpusCase { b, schedules, execs });
        }
        let min_loops = loops(&cases, SchemeKind::Min)?;
        Ok(Corpus { cases, min_loops })
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn loops(cases: &[CorpusCase], kind: SchemeKind) -> Result<Vec<LoopOutcome>, LoopError> {
    cases.iter().map(|c| run_loop(&c.b, &SpecSet::new(), &c.schedules, kind)).collect()
}

/// Converged Π leaves no oracle counterexample in any execution, for every
/// scheme, and the history stays under the counterexample bound.
pub fn eventual_soundness(corpus: &Corpus) -> Outcome {
    let (cases, min) = (&corpus.cases, &corpus.min_loops);
        let specs = SpecSet::new();
    let mut updates = 0;
    for kind in [SchemeKind::Naive, SchemeKind::Min, SchemeKind::Opt] {
        let outs = if kind == SchemeKind::Min { min.clone() } else { loops(cases, kind).map_err(|e| e.to_string())? };
        for (i, (c, out)) in cases.iter().zip(&outs).enumerate() {
            for e in &c.execs {
                let ces = oracle_counterexamples(&c.b, &specs, e, &out.pi);
                ensure(ces.is_empty(), || format!("{kind} program {i}: {ces:?} after convergence"))?;
            }
            let bound = eventual_soundness_bound(&c.b, &specs);
            ensure((out.history.len() as u128) <= bound + 1, || format!("program {i}: history over bound"))?;
            updates += out.iterations.len();
        }
    }
    Ok(format!("{} programs x 3 schemes, {updates} updates", cases.len()))
}

/// Every execution with an oracle counterexample makes the minimal schemes
/// report one, and every reported counterexample is real.
pub fn monitoring_soundness(corpus: &Corpus) -> Outcome {
    let cases = &corpus.cases;
    let specs = SpecSet::new();
    let mut with_ces = 0;
    let mut true_reports = 0;
    for (i, c) in cases.iter().enumerate() {
        let pi0 = compute_pointsto(&c.b, &specs, &MissingEdgeSet::default());
        for (s, e) in c.schedules.iter().zip(&c.execs) {
            let truth = oracle_counterexamples(&c.b, &specs, e, &pi0);
            let mapped = mapped_dynamic_edges(&c.b, &specs, e, &oracle_object_mapping(&c.b, &specs, e));
            for kind in [SchemeKind::Min, SchemeKind::Opt] {
                let out = run_loop(&c.b, &specs, std::slice::from_ref(s), kind).map_err(|e| e.to_string())?;
                if !truth.is_empty() {
                    ensure(!out.iterations.is_empty(), || format!("{kind} program {i} schedule {s}: nothing reported"))?;
                }
                for ce in out.iterations.iter().flat_map(|it| &it.delta) {
                    let real = match ce {
                        Counterexample::Edge(v, o) => mapped.edges.contains(&(v.clone(), o.clone())),
                        Counterexample::Reach(f) => mapped.reached.contains(f),
                    };
                    ensure(real, || format!("{kind} program {i} schedule {s}: false report {ce}"))?;
                    true_reports += 1;
                }
            }
            with_ces += !truth.is_empty() as usize;
        }
    }
    ensure(with_ces > 0, || "no execution had counterexamples".into())?;
    Ok(format!("{with_ces} executions with counterexamples, {true_reports} reports, 0 false"))
}

/// Dropping any constructible monitor from the minimal schemes loses a real
/// counterexample; requires at least `min_pairs` constructions.
pub fn minimality(corpus: &Corpus, min_pairs: usize) -> Outcome {
    let cases = &corpus.cases;
    let specs = SpecSet::new();
    let mut built = 0;
    let mut call_drops = 0;
    for (i, c) in cases.iter().enumerate() {
        let pi0 = compute_pointsto(&c.b, &specs, &MissingEdgeSet::default());
        for kind in [SchemeKind::Min, SchemeKind::Opt] {
            let scheme = monitoring_scheme(kind, &c.b, &specs, &pi0);
            for m in monitors(&scheme) {
                let Ok(case) = adversarial_drop_library(&c.b, &specs, &pi0, &scheme, &m) else { continue };
                let reduced = without(&scheme, &m);
                let v = run_adversarial(&case, &specs, &reduced).map_err(|e| e.to_string())?;
                ensure(v.missed(), || format!("program {i} {kind} drop {m:?}: {v:?}"))?;
                if matches!(m, Monitor::Call(_)) {
                    ensure(v.reported.is_empty(), || format!("program {i} drop {m:?}: reports {:?}", v.reported))?;
                    call_drops += 1;
                }
                let full = run_adversarial(&case, &specs, &scheme).map_err(|e| e.to_string())?;
                ensure(full.true_reports() > 0, || format!("program {i} {kind} {m:?}: full scheme misses too"))?;
                built += 1;
            }
        }
    }
    ensure(built >= min_pairs, || format!("only {built} constructions"))?;
    Ok(format!("{built} pairs ({call_drops} call drops with zero reports)"))
}

fn proxy_origins(c: &CorpusCase) -> BTreeMap<AbstractObject, BTreeSet<AbstractObject>> {
    let mut out: BTreeMap<AbstractObject, BTreeSet<AbstractObject>> = BTreeMap::new();
    for e in &c.execs {
        let m = oracle_object_mapping(&c.b, &SpecSet::new(), e);
        for o in &e.heap {
            if let Some(p @ AbstractObject::Proxy { .. }) = m.get(&o.oid) {
                out.entry(p.clone())
                    .or_default()
                    .insert(AbstractObject::site(o.origin.as_str(), o.class.as_str()));
            }
        }
    }
    out
}

/// Converged Π, with proxies replaced by the sites they stood for, is
/// contained in the whole-program analysis.
pub fn precision(corpus: &Corpus) -> Outcome {
    let (cases, min) = (&corpus.cases, &corpus.min_loops);
    let mut edges = 0;
    for (i, (c, out)) in cases.iter().zip(min).enumerate() {
        let wp = whole_program_pta(&c.b);
        let origins = proxy_origins(c);
        for (v, o) in out.pi.program_edges() {
            let images: Vec<AbstractObject> = match o {
                AbstractObject::Proxy { .. } => origins
                    .get(o)
                    .ok_or_else(|| format!("program {i}: unobserved proxy {o}"))?
                    .iter()
                    .cloned()
                    .collect(),
                other => vec![other.clone()],
            };
            for img in images {
                ensure(wp.contains(v, &img), || format!("program {i}: {v} -> {o} maps to {img}, not in whole-program"))?;
            }
            edges += 1;
        }
    }
    Ok(format!("{edges} edges contained"))
}

/// Footprint proxies against ideal proxies over all executions.
pub fn proxy_equivalence(corpus: &Corpus) -> Outcome {
    let cases = &corpus.cases;
    let specs = SpecSet::new();
    let mut proxies = 0;
    let mut literal: Vec<String> = Vec::new();
    for (i, c) in cases.iter().enumerate() {
        let star = closure_of_executions(&c.b, &specs, &c.execs, false);
        let ideal = closure_of_executions(&c.b, &specs, &c.execs, true);
        let sites = |p: &PointsToSet| -> BTreeSet<(VarId, AbstractObject)> {
            p.program_edges().filter(|(_, o)| o.is_site()).map(|(v, o)| (v.clone(), o.clone())).collect()
        };
        ensure(sites(&star) == sites(&ideal), || format!("program {i}: site edges differ"))?;
        let vars = program_variables(&c.b);
        // Ideal proxy -> footprint proxies of the objects it stood for.
        let mut project: BTreeMap<AbstractObject, BTreeSet<AbstractObject>> = BTreeMap::new();
        for e in &c.execs {
            let phi = oracle_object_mapping(&c.b, &specs, e);
            let phi_ideal = ideal_proxy_mapping(&c.b, &specs, e);
            for (oid, p) in phi.iter().filter(|(_, o)| !o.is_site()) {
                let Some(q) = phi_ideal.get(oid) else { continue };
                project.entry(q.clone()).or_default().insert(p.clone());
                for x in &vars {
                    let (a, b) = (star.contains(x, p), ideal.contains(x, q));
                    // Forward direction: the ideal edge implies the footprint edge.
                    ensure(a || !b, || format!("program {i}: {x} -> {q} without {x} -> {p}"))?;
                    if a != b && literal.len() < 3 {
                        literal.push(format!("program {i}: {x} -> {p} but not {x} -> {q}"));
                    }
                }
                proxies += 1;
            }
            let mut m = phi_ideal.clone();
            m.extend(phi.into_iter().filter(|(_, o)| o.is_site()));
            for (v, o) in mapped_dynamic_edges(&c.b, &specs, e, &m).edges {
                ensure(ideal.contains(&v, &o), || format!("program {i}: ideal closure misses {v} -> {o}"))?;
            }
        }
        // Pushing the ideal closure through the projection gives the
        // footprint closure exactly.
        let mut projected: BTreeSet<(VarId, AbstractObject)> = sites(&ideal);
        for (v, o) in ideal.program_edges().filter(|(_, o)| !o.is_site()) {
            for p in project.get(o).into_iter().flatten() {
                projected.insert((v.clone(), p.clone()));
            }
        }
        let footprint: BTreeSet<(VarId, AbstractObject)> =
            star.program_edges().map(|(v, o)| (v.clone(), o.clone())).collect();
        ensure(projected == footprint, || format!("program {i}: projected ideal closure differs"))?;
    }
    if literal.is_empty() {
        Ok(format!("{proxies} observed library objects agree"))
    } else {
        Err(format!(
            "per-object equivalence fails when objects share a footprint ({}); site edges, \
             forward direction, projected closure and ideal soundness hold",
            literal.join("; ")
        ))
    }
}

/// Restricted inference on true site edges missing from Π0: solutions are
/// optimal and validate, and general mode derives the same targets.
pub fn inference(corpus: &Corpus, targets_per_program: usize) -> Outcome {
    let none = MissingEdgeSet::default();
    let mut checked = 0;
    for (c, out) in corpus.cases.iter().zip(&corpus.min_loops) {
        let cs = SpecSet::new();
        let pi0 = compute_pointsto(&c.b, &cs, &none);
        let targets: Vec<Target> = out
            .pi
            .program_edges()
            .filter(|(v, o)| o.is_site() && !pi0.contains(v, o))
            .take(targets_per_program)
            .map(|(v, o)| Target { var: v.clone(), object: o.clone() })
            .collect();
        for t in targets {
            let Ok(r) = infer_min_spec(&c.b, &cs, &none, &t, InferMode::Restricted) else { continue };
            ensure(validate_spec(&c.b, &cs, &r.as_spec_bodies(), &t), || format!("{} -> {} invalid", t.var, t.object))?;
            ensure(r.optimal, || "subset search out of budget".into())?;
            let g = infer_min_spec(&c.b, &cs, &none, &t, InferMode::General).map_err(|e| format!("general: {e}"))?;
            ensure(validate_spec(&c.b, &cs, &g.as_spec_bodies(), &t), || "general invalid".into())?;
            checked += 1;
        }
    }
    ensure(checked > 0, || "no corpus targets".into())?;
    Ok(format!("{checked} targets"))
}

/// |M̃_min| <= |M_min| <= |naive| per program, with fewer allocation
/// monitors somewhere.
pub fn monitor_reduction(corpus: &Corpus) -> Outcome {
    let cases = &corpus.cases;
    let specs = SpecSet::new();
    let mut strict = 0;
    let (mut n, mut m, mut o) = (0, 0, 0);
    for (i, c) in cases.iter().enumerate() {
        let pi0 = compute_pointsto(&c.b, &specs, &MissingEdgeSet::default());
        let naive = monitoring_scheme(SchemeKind::Naive, &c.b, &specs, &pi0);
        let min = monitoring_scheme(SchemeKind::Min, &c.b, &specs, &pi0);
        let opt = monitoring_scheme(SchemeKind::Opt, &c.b, &specs, &pi0);
        ensure(opt.len() <= min.len() && min.len() <= naive.len(), || {
            format!("program {i}: {} / {} / {}", opt.len(), min.len(), naive.len())
        })?;
        strict += (opt.alloc.len() < min.alloc.len()) as usize;
        n += naive.len();
        m += min.len();
        o += opt.len();
    }
    ensure(strict >= 1, || "allocation monitors never shrink".into())?;
    Ok(format!("total monitors naive {n}, min {m}, opt {o}; alloc strictly smaller on {strict} programs"))
}

/// Worklist solver against the rule-by-rule reference on Π0 and on every
/// converged Π.
pub fn solver_agreement(corpus: &Corpus) -> Outcome {
    let specs = SpecSet::new();
    for (i, (c, out)) in corpus.cases.iter().zip(&corpus.min_loops).enumerate() {
        for m in [MissingEdgeSet::default(), out.pi_miss.clone()] {
            ensure(compute_pointsto(&c.b, &specs, &m) == reference_pointsto(&c.b, &specs, &m), || {
                format!("program {i}: solvers disagree")
            })?;
        }
    }
    Ok(format!("{} programs", corpus.cases.len()))
}
