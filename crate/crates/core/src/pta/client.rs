use std::collections::BTreeSet;

use super::{collect_constraints, AbstractObject, PointsToSet, VarId, Visibility};
use crate::ir::{ProgramBundle, SpecSet};

/// Source/sink pairs `(s, k)` such that a value returned by a call to `s`
/// may reach an argument of a call to `k`.
///
/// Taint moves along copies (including parameter passing and returns),
/// through heap cells written and read under `pi`, and between variables
/// that share an abstract object in `pi`.
pub fn taint_flows(
    b: &ProgramBundle,
    specs: &SpecSet,
    pi: &PointsToSet,
) -> BTreeSet<(String, String)> {
    let c = collect_constraints(b, Visibility::specs(specs), &pi.reached_callbacks);
    let mut out = BTreeSet::new();
    for source in &b.sources {
        let mut tainted: BTreeSet<&VarId> = c
            .calls
            .iter()
            .filter(|cs| &cs.callee == source)
            .filter_map(|cs| cs.target.as_ref())
            .collect();
        let mut objs: BTreeSet<&AbstractObject> = BTreeSet::new();
        let mut cells: BTreeSet<(&AbstractObject, &str)> = BTreeSet::new();
        loop {
            let before = (tainted.len(), objs.len(), cells.len());
            for v in &tainted {
                objs.extend(pi.pts(v));
            }
            for (v, o) in pi.iter() {
                if objs.contains(o) {
                    tainted.insert(v);
                }
            }
            for (dst, src, _) in &c.copies {
                if tainted.contains(src) {
                    tainted.insert(dst);
                }
            }
            for (base, field, src, _) in &c.stores {
                if tainted.contains(src) {
                    cells.extend(pi.pts(base).map(|o| (o, field.as_str())));
                }
            }
            for (t, base, field, _) in &c.loads {
                if pi.pts(base).any(|o| cells.contains(&(o, field.as_str()))) {
                    tainted.insert(t);
                }
            }
            if before == (tainted.len(), objs.len(), cells.len()) {
                break;
            }
        }
        for cs in c.calls.iter().filter(|cs| b.sinks.contains(&cs.callee)) {
            if cs.args.iter().any(|a| tainted.contains(a)) {
                out.insert((source.clone(), cs.callee.clone()));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;
    use crate::pta::{compute_pointsto, MissingEdgeSet};

    const SRC: &str = "class S\nfunc main() program {\n s = call src()\n t = s\n call snk(t)\n}\nfunc src() library\nfunc snk(x) library\nsource src\nsink snk\n";

    #[test]
    fn direct_copy_flow() {
        let b = parse_program(SRC).unwrap();
        let pi = compute_pointsto(&b, &SpecSet::new(), &MissingEdgeSet::default());
        assert_eq!(
            taint_flows(&b, &SpecSet::new(), &pi),
            BTreeSet::from([("src".to_string(), "snk".to_string())])
        );
    }

    #[test]
    fn no_sinks_no_flows() {
        let b = parse_program(&SRC.replace("sink snk\n", "")).unwrap();
        let pi = compute_pointsto(&b, &SpecSet::new(), &MissingEdgeSet::default());
        assert!(taint_flows(&b, &SpecSet::new(), &pi).is_empty());
    }
}
