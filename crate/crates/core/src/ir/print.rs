use std::fmt::Write;

use super::{Block, FieldOwner, FunctionKind, ProgramBundle, SpecBody, SpecOrigin, StmtKind};

/// Prints a bundle in the text format. Every statement carries an explicit
/// id, so parsing the output yields an equal bundle.
pub fn print_program(b: &ProgramBundle) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "entry {}", b.entry);
    for c in &b.classes {
        let _ = writeln!(out, "class {c}");
    }
    for (name, owner) in &b.fields {
        let _ = writeln!(out, "field {name} {}", owner_str(*owner));
    }
    let mut specs = Vec::new();
    for f in b.functions.values() {
        out.push('\n');
        let params = f.params.join(", ");
        match &f.kind {
            FunctionKind::Program { body, overrides } => {
                let _ = write!(out, "func {}({params}) program", f.name);
                if let Some(o) = overrides {
                    let _ = write!(out, " overrides {o}");
                }
                out.push(' ');
                print_block(&mut out, body, 0);
                out.push('\n');
            }
            FunctionKind::Library { ground_truth, spec } => {
                let _ = write!(out, "func {}({params}) library", f.name);
                if let Some(gt) = ground_truth {
                    out.push(' ');
                    print_block(&mut out, gt, 0);
                }
                out.push('\n');
                if let Some(s) = spec {
                    specs.push((f.name.as_str(), s));
                }
            }
        }
    }
    for (name, spec) in specs {
        out.push('\n');
        out.push_str(&print_spec(name, spec));
    }
    if !b.sources.is_empty() || !b.sinks.is_empty() {
        out.push('\n');
    }
    for s in &b.sources {
        let _ = writeln!(out, "source {s}");
    }
    for s in &b.sinks {
        let _ = writeln!(out, "sink {s}");
    }
    out
}

/// Prints one specification as a standalone `spec` block, or as a
/// `proxyspec` line for desugared proxy specifications.
pub fn print_spec(name: &str, spec: &SpecBody) -> String {
    match &spec.origin {
        SpecOrigin::Proxy(class) => format!("proxyspec {class} {name}\n"),
        SpecOrigin::Handwritten => {
            let mut out = format!("spec {name}({}) ", spec.params.join(", "));
            print_block(&mut out, &spec.body, 0);
            out.push('\n');
            out
        }
    }
}

pub(crate) fn owner_str(o: FieldOwner) -> &'static str {
    match o {
        FieldOwner::Program => "program",
        FieldOwner::Library => "library",
    }
}

fn print_block(out: &mut String, block: &Block, depth: usize) {
    out.push_str("{\n");
    let pad = "  ".repeat(depth + 1);
    for s in block {
        out.push_str(&pad);
        match &s.kind {
            StmtKind::Alloc { target, class } => {
                let _ = write!(out, "{target} = new {class} @{}", s.id);
            }
            StmtKind::Assign { target, source } => {
                let _ = write!(out, "{target} = {source} @{}", s.id);
            }
            StmtKind::Load {
                target,
                base,
                field,
            } => {
                let _ = write!(out, "{target} = {base}.{field} @{}", s.id);
            }
            StmtKind::Store {
                base,
                field,
                source,
            } => {
                let _ = write!(out, "{base}.{field} = {source} @{}", s.id);
            }
            StmtKind::Call {
                target,
                callee,
                args,
            } => {
                if let Some(t) = target {
                    let _ = write!(out, "{t} = ");
                }
                let _ = write!(out, "call {callee}({}) @{}", args.join(", "), s.id);
            }
            StmtKind::Return { var } => {
                let _ = write!(out, "return {var} @{}", s.id);
            }
            StmtKind::Branch {
                then_block,
                else_block,
            } => {
                let _ = write!(out, "branch @{} ", s.id);
                print_block(out, then_block, depth + 1);
                out.push_str(" else ");
                print_block(out, else_block, depth + 1);
            }
        }
        out.push('\n');
    }
    out.push_str(&"  ".repeat(depth));
    out.push('}');
}

#[cfg(test)]
mod tests {
    use super::super::parse_program;
    use super::*;

    const SAMPLE: &str = "\
class A
class B
field f library
field g program
func main() program {
  a = new A
  b = call mk(a)
  branch { a.g = b } else { c = a.g }
  call cb(a)
}
func cb(x) program overrides hook { y = x }
func mk(p) library { r = new B @lib_b; return r }
func hook(h) library
spec mk(p) { r = p; return r }
proxyspec A hook
source mk
sink hook
";

    #[test]
    fn round_trip_preserves_bundle() {
        let b = parse_program(SAMPLE).unwrap();
        let text = print_program(&b);
        assert_eq!(parse_program(&text).unwrap(), b, "{text}");
    }

    #[test]
    fn printing_is_a_fixpoint() {
        let once = print_program(&parse_program(SAMPLE).unwrap());
        let twice = print_program(&parse_program(&once).unwrap());
        assert_eq!(once, twice);
    }
}
