//! Acceptance criteria 1-8. Each prints one PASS/FAIL line; the test fails
//! if any criterion does.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use hindsight::feedback::{run_loop, Counterexample};
use hindsight::ir::{SpecSet, StmtId};
use hindsight::monitor::SchemeKind;
use hindsight::oracle::suite::{self, Corpus, Outcome};
use hindsight::pta::{compute_pointsto, may_alias, taint_flows, AbstractObject, MissingEdgeSet, VarId};
use hindsight::specinfer::{infer_min_spec, pessimistic_world, validate_spec, InferMode, Target};

const CORPUS_SEED: u64 = 7;
const CORPUS_SIZE: usize = 200;
const EXAMPLE_TIME: Duration = Duration::from_secs(1);
const CORPUS_TIME: Duration = Duration::from_secs(300);
const MIN_ADVERSARIAL_PAIRS: usize = 50;
const INFER_TARGETS_PER_PROGRAM: usize = 3;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let b = common::example();
    let specs = SpecSet::new();
    let pi0 = compute_pointsto(&b, &specs, &MissingEdgeSet::default());
    for v in ["data", "dataCopy"] {
        ensure(pi0.pts(&VarId::program("main", v)).next().is_none(), || format!("optimistic {v} not empty"))?;
    }
    let out = run_loop(&b, &specs, &common::example_schedules(), SchemeKind::Min).map_err(|e| e.to_string())?;
    let p_str = AbstractObject::proxy("String", ["mkStr", "get"]);
    let reported: BTreeSet<Counterexample> = out.iterations.iter().flat_map(|i| i.delta.iter().cloned()).collect();
    let expected: BTreeSet<Counterexample> = ["str", "data"]
        .iter()
        .map(|v| Counterexample::Edge(VarId::program("main", *v), p_str.clone()))
        .collect();
    ensure(reported == expected, || format!("reported {reported:?}"))?;
    ensure(out.pi.contains(&VarId::program("main", "dataCopy"), &p_str), || "dataCopy edge missing".into())?;
    ensure(may_alias(&b, &out.pi, "str", "dataCopy").map_err(|e| e.to_string())?, || "no alias".into())?;
    let flows = taint_flows(&b, &specs, &out.pi);
    let want: BTreeSet<_> = [("mkStr".to_string(), "sendHttp".to_string())].into();
    ensure(flows == want, || format!("flows {flows:?}"))?;
    let golden = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/example_loop.txt"),
    )
    .map_err(|e| e.to_string())?;
    ensure(out.transcript() == golden, || "transcript differs from golden".into())?;
    let t = start.elapsed();
    ensure(t < EXAMPLE_TIME, || format!("took {t:?}"))?;
    Ok(format!("2 reports, golden match, {t:?}"))
}

/// Corpus generation, enumeration and the convergence checks together must
/// fit the time budget.
fn criterion_2() -> (Outcome, Option<Corpus>) {
    let start = Instant::now();
    let corpus = match Corpus::generate(CORPUS_SEED, CORPUS_SIZE) {
        Ok(c) => c,
        Err(e) => return (Err(e.to_string()), None),
    };
    let r = suite::eventual_soundness(&corpus).and_then(|msg| {
        let t = start.elapsed();
        ensure(t < CORPUS_TIME, || format!("took {t:?}"))?;
        Ok(format!("{msg}, {t:?}"))
    });
    (r, Some(corpus))
}

fn criterion_7(corpus: &Corpus) -> Outcome {
    let (b, specs) = common::example_with(&["mkStr"]);
    let target = Target {
        var: VarId::program("main", "data"),
        object: AbstractObject::site("o_str", "String"),
    };
    let none = MissingEdgeSet::default();
    let inf = infer_min_spec(&b, &specs, &none, &target, InferMode::Restricted).map_err(|e| e.to_string())?;
    let chosen: BTreeSet<StmtId> = inf.specs.iter().flat_map(|s| s.statements.iter().map(|t| t.id.clone())).collect();
    let want: BTreeSet<StmtId> = ["pess_add_0", "pess_get_1", "pess_get_2"].into_iter().map(StmtId::new).collect();
    ensure(chosen == want && inf.cost == 2, || format!("got {chosen:?} at cost {}", inf.cost))?;
    ensure(validate_spec(&b, &specs, &inf.as_spec_bodies(), &target), || "does not validate".into())?;

    // No subset of fewer than two costed statements works.
    let world = pessimistic_world(&b, &specs, InferMode::Restricted);
    let costed: Vec<StmtId> = world.costed.keys().cloned().collect();
    let mut smaller: Vec<BTreeSet<StmtId>> = vec![BTreeSet::new()];
    smaller.extend(costed.iter().map(|s| [s.clone()].into()));
    for keep in &smaller {
        ensure(!validate_spec(&b, &specs, &world.restrict(keep, &BTreeSet::new()), &target), || {
            format!("{keep:?} already derives the target")
        })?;
    }

    let corpus_part = suite::inference(corpus, INFER_TARGETS_PER_PROGRAM)?;
    Ok(format!("example cost 2 optimal, corpus {corpus_part}"))
}

#[test]
fn acceptance() {
    let mut results: Vec<(usize, Outcome)> = vec![(1, criterion_1())];
    let (r2, corpus) = criterion_2();
    results.push((2, r2));
    let corpus = corpus.expect("corpus");
    results.push((3, suite::monitoring_soundness(&corpus)));
    results.push((4, suite::minimality(&corpus, MIN_ADVERSARIAL_PAIRS)));
    results.push((5, suite::precision(&corpus).and_then(|p| Ok(format!("{p}; solver agreement on {}", suite::solver_agreement(&corpus)?)))));
    results.push((6, suite::proxy_equivalence(&corpus)));
    results.push((7, criterion_7(&corpus)));
    results.push((8, suite::monitor_reduction(&corpus)));
    let mut failed = Vec::new();
    for (n, r) in &results {
        match r {
            Ok(msg) => println!("criterion {n}: PASS {msg}"),
            Err(msg) => {
                println!("criterion {n}: FAIL {msg}");
                failed.push(*n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
