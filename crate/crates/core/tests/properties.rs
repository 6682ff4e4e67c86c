use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hindsight::dynexec::Event;
use hindsight::feedback::run_loop;
use hindsight::ir::{parse_program, print_program, rewrite_shared_fields, shared_fields, validate_program, SpecSet};
use hindsight::monitor::{monitoring_scheme, MonitoringScheme, SchemeKind};
use hindsight::oracle::gen::{generate_program, GenConfig};
use hindsight::oracle::{enumerate_executions, full_trace, reference_pointsto, MAX_BRANCHES};
use hindsight::pta::{compute_pointsto, program_variables, AbstractObject, MissingEdgeSet, PointsToSet};

fn program(seed: u64, callbacks: bool, shared: bool) -> hindsight::ir::ProgramBundle {
    let cfg = GenConfig {
        callbacks,
        shared_fields: shared,
        ..GenConfig::default()
    };
    let b = generate_program(&mut ChaCha8Rng::seed_from_u64(seed), cfg);
    let s = shared_fields(&b);
    if s.is_empty() {
        b
    } else {
        rewrite_shared_fields(&b, &s).unwrap()
    }
}

/// Random injected edges over the program's variables and a small object pool.
fn injection(b: &hindsight::ir::ProgramBundle, picks: &[(usize, usize)]) -> MissingEdgeSet {
    let vars: Vec<_> = program_variables(b).into_iter().collect();
    let pi0 = compute_pointsto(b, &SpecSet::new(), &MissingEdgeSet::default());
    let mut objs: Vec<AbstractObject> = pi0.iter().map(|(_, o)| o.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    for c in &b.classes {
        objs.push(AbstractObject::proxy(c.as_str(), ["m0"]));
    }
    let mut m = MissingEdgeSet::default();
    if vars.is_empty() || objs.is_empty() {
        return m;
    }
    for &(v, o) in picks {
        m.edges.insert((vars[v % vars.len()].clone(), objs[o % objs.len()].clone()));
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn print_then_parse_is_identity(seed in any::<u64>(), cb in any::<bool>(), shared in any::<bool>()) {
        let b = program(seed, cb, shared);
        let text = print_program(&b);
        let back = parse_program(&text).unwrap();
        prop_assert_eq!(&back, &b);
        prop_assert_eq!(print_program(&back), text);
    }

    #[test]
    fn generated_programs_are_well_formed(seed in any::<u64>(), cb in any::<bool>(), shared in any::<bool>()) {
        let b = program(seed, cb, shared);
        prop_assert!(validate_program(&b).is_empty());
        prop_assert!(enumerate_executions(&b, MAX_BRANCHES).is_ok());
    }

    #[test]
    fn worklist_matches_reference(seed in any::<u64>(), cb in any::<bool>(), picks in prop::collection::vec((0usize..64, 0usize..64), 0..6)) {
        let b = program(seed, cb, false);
        let m = injection(&b, &picks);
        let specs = SpecSet::new();
        prop_assert_eq!(compute_pointsto(&b, &specs, &m), reference_pointsto(&b, &specs, &m));
    }

    #[test]
    fn more_injected_edges_never_shrink_pi(seed in any::<u64>(), picks in prop::collection::vec((0usize..64, 0usize..64), 0..6), extra in prop::collection::vec((0usize..64, 0usize..64), 1..4)) {
        let b = program(seed, true, false);
        let small = injection(&b, &picks);
        let mut all = picks.clone();
        all.extend(extra);
        let big = injection(&b, &all);
        let specs = SpecSet::new();
        prop_assert!(compute_pointsto(&b, &specs, &small).is_subset(&compute_pointsto(&b, &specs, &big)));
    }

    #[test]
    fn loop_is_deterministic_and_monotone(seed in any::<u64>(), cb in any::<bool>()) {
        let b = program(seed, cb, false);
        let scheds = enumerate_executions(&b, MAX_BRANCHES).unwrap();
        let specs = SpecSet::new();
        let a = run_loop(&b, &specs, &scheds, SchemeKind::Opt).unwrap();
        let again = run_loop(&b, &specs, &scheds, SchemeKind::Opt).unwrap();
        prop_assert_eq!(a.transcript(), again.transcript());
        for w in a.history.windows(2) {
            prop_assert!(w[0].is_subset(&w[1]));
            prop_assert!(w[0] != w[1]);
        }
    }

    #[test]
    fn text_formats_round_trip(seed in any::<u64>(), cb in any::<bool>()) {
        let b = program(seed, cb, false);
        let scheds = enumerate_executions(&b, MAX_BRANCHES).unwrap();
        let specs = SpecSet::new();
        let out = run_loop(&b, &specs, &scheds, SchemeKind::Min).unwrap();
        prop_assert_eq!(PointsToSet::parse(&out.pi.serialize(), &b).unwrap(), out.pi.clone());
        for kind in [SchemeKind::Naive, SchemeKind::Min, SchemeKind::Opt] {
            let s = monitoring_scheme(kind, &b, &specs, &out.pi);
            prop_assert_eq!(MonitoringScheme::parse(&s.serialize()).unwrap(), s);
        }
    }

    #[test]
    fn accessor_rewrite_preserves_program_behavior(seed in any::<u64>()) {
        let cfg = GenConfig { shared_fields: true, ..GenConfig::default() };
        let b = generate_program(&mut ChaCha8Rng::seed_from_u64(seed), cfg);
        let fields = shared_fields(&b);
        let r = rewrite_shared_fields(&b, &fields).unwrap();
        let project = |t: Vec<Event>| -> Vec<Event> {
            t.into_iter().filter(|e| matches!(e, Event::Alloc { .. } | Event::Bind { .. })).collect()
        };
        let scheds = enumerate_executions(&b, MAX_BRANCHES).unwrap();
        prop_assert_eq!(&scheds, &enumerate_executions(&r, MAX_BRANCHES).unwrap());
        for s in &scheds {
            let x = full_trace(&b, s).unwrap();
            let y = full_trace(&r, s).unwrap();
            prop_assert_eq!(project(x.trace), project(y.trace));
            prop_assert_eq!(x.entry_env, y.entry_env);
        }
    }
}
