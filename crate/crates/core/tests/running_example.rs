mod common;

use common::{example, example_schedules, example_with, golden};
use hindsight::dynexec::{execute, trace};
use hindsight::feedback::run_loop;
use hindsight::ir::SpecSet;
use hindsight::monitor::{monitoring_scheme, SchemeKind};
use hindsight::pta::{compute_pointsto, may_alias, taint_flows, AbstractObject, MissingEdgeSet, VarId};
use hindsight::specinfer::{infer_min_spec, validate_spec, InferMode, Target};

#[test]
fn optimistic_pointsto() {
    let b = example();
    let pi = compute_pointsto(&b, &SpecSet::new(), &MissingEdgeSet::default());
    golden("example_pi0.txt", &pi.serialize());
    assert!(pi.pts(&VarId::program("main", "data")).next().is_none());
    assert!(pi.pts(&VarId::program("main", "dataCopy")).next().is_none());
}

#[test]
fn initial_scheme_and_reports() {
    let b = example();
    let specs = SpecSet::new();
    let pi = compute_pointsto(&b, &specs, &MissingEdgeSet::default());
    let scheme = monitoring_scheme(SchemeKind::Min, &b, &specs, &pi);
    golden("example_scheme_min.txt", &scheme.serialize());
    let mut log = String::new();
    for s in example_schedules() {
        log.push_str(&format!("schedule {s}\n"));
        for r in execute(&b, &scheme, &s).unwrap() {
            log.push_str(&format!("{r}\n"));
        }
    }
    golden("example_reports.txt", &log);
    let t = trace(&b, &scheme, &"1".parse().unwrap()).unwrap();
    golden("example_trace_1.txt", &format!("{}--\n{}", t.trace_log(), t.report_log()));
}

#[test]
fn loop_transcript_and_clients() {
    let b = example();
    let specs = SpecSet::new();
    let out = run_loop(&b, &specs, &example_schedules(), SchemeKind::Min).unwrap();
    golden("example_loop.txt", &out.transcript());

    let p_str = AbstractObject::proxy("String", ["mkStr", "get"]);
    let mut reported: Vec<String> = out
        .iterations
        .iter()
        .flat_map(|i| i.delta.iter().map(|c| c.to_string()))
        .collect();
    reported.sort();
    assert_eq!(reported, vec![
        format!("CE main.data {p_str}"),
        format!("CE main.str {p_str}"),
    ]);
    assert!(!reported.iter().any(|c| c.contains("dataCopy")));
    assert!(out.pi.contains(&VarId::program("main", "dataCopy"), &p_str));
    assert!(may_alias(&b, &out.pi, "str", "dataCopy").unwrap());
    let flows = taint_flows(&b, &specs, &out.pi);
    assert_eq!(flows.into_iter().collect::<Vec<_>>(), vec![("mkStr".to_string(), "sendHttp".to_string())]);
}

#[test]
fn all_specs_make_the_loop_silent() {
    let (b, specs) = example_with(&["mkStr", "add", "get", "sendHttp"]);
    let out = run_loop(&b, &specs, &example_schedules(), SchemeKind::Min).unwrap();
    assert!(out.iterations.is_empty());
    assert!(out.pi.contains(&VarId::program("main", "dataCopy"), &AbstractObject::site("o_str", "String")));
}

#[test]
fn inferred_add_and_get() {
    let (b, specs) = example_with(&["mkStr"]);
    let target = Target {
        var: VarId::program("main", "data"),
        object: AbstractObject::site("o_str", "String"),
    };
    let inf = infer_min_spec(&b, &specs, &MissingEdgeSet::default(), &target, InferMode::Restricted).unwrap();
    assert_eq!(inf.cost, 2);
    assert!(inf.optimal);
    assert!(validate_spec(&b, &specs, &inf.as_spec_bodies(), &target));
    let files: String = inf
        .spec_files()
        .into_iter()
        .map(|(name, text)| format!("== {name}\n{text}"))
        .collect();
    golden("example_infer_restricted.txt", &files);
}
