//! Seeded random programs for differential testing.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ir::{parse_program, rewrite_shared_fields, shared_fields, ProgramBundle};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenConfig {
    pub min_stmts: usize,
    pub max_stmts: usize,
    pub max_library: usize,
    pub max_classes: usize,
    /// Branch statements in the entry; other bodies are straight-line.
    pub max_branches: usize,
    pub callbacks: bool,
    /// Let program code touch library fields directly.
    pub shared_fields: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            min_stmts: 3,
            max_stmts: 20,
            max_library: 4,
            max_classes: 3,
            max_branches: 4,
            callbacks: false,
            shared_fields: false,
        }
    }
}

const VARS: [&str; 5] = ["a", "b", "c", "d", "e"];
const LIB_FIELDS: [&str; 2] = ["f", "h"];

#[derive(Clone, Copy, PartialEq, Eq)]
enum LibBody {
    Noop,
    ReturnParam,
    ReturnFresh,
    Store,
    Load,
    Callback,
}

struct Gen<'r> {
    rng: &'r mut ChaCha8Rng,
    cfg: GenConfig,
    classes: Vec<String>,
    lib_fields: Vec<&'static str>,
    program_field: bool,
    /// (name, arity, returns a value)
    library: Vec<(String, usize, bool)>,
    helper: bool,
    branches: usize,
    out: String,
}

impl Gen<'_> {
    fn class(&mut self) -> String {
        self.classes.choose(self.rng).expect("at least one class").clone()
    }

    fn pick(&mut self, defined: &[&'static str]) -> &'static str {
        defined.choose(self.rng).copied().unwrap_or("a")
    }

    fn line(&mut self, depth: usize, s: &str) {
        for _ in 0..depth {
            self.out.push_str("  ");
        }
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn stmt(&mut self, depth: usize, defined: &mut Vec<&'static str>, budget: &mut usize) {
        *budget = budget.saturating_sub(1);
        let x = *VARS.choose(self.rng).expect("vars");
        if defined.is_empty() {
            let c = self.class();
            self.line(depth, &format!("{x} = new {c}"));
            defined.push(x);
            return;
        }
        let y = self.pick(defined);
        let field_ok = self.program_field || self.cfg.shared_fields;
        let roll = self.rng.gen_range(0..100);
        match roll {
            0..=19 => {
                let c = self.class();
                self.line(depth, &format!("{x} = new {c}"));
            }
            20..=31 => self.line(depth, &format!("{x} = {y}")),
            32..=69 => {
                let (m, arity, returns) = self.library.choose(self.rng).expect("library").clone();
                let args: Vec<&str> = (0..arity).map(|_| self.pick(defined)).collect();
                let call = format!("call {m}({})", args.join(", "));
                if returns && self.rng.gen_bool(0.85) {
                    self.line(depth, &format!("{x} = {call}"));
                } else {
                    self.line(depth, &call);
                    return;
                }
            }
            70..=81 if field_ok => {
                let f = self.field();
                let z = self.pick(defined);
                self.line(depth, &format!("{y}.{f} = {z}"));
                return;
            }
            82..=89 if field_ok => {
                let f = self.field();
                self.line(depth, &format!("{x} = {y}.{f}"));
            }
            82..=89 if self.helper => self.line(depth, &format!("{x} = call helper({y})")),
            _ if self.branches < self.cfg.max_branches && depth < 3 && *budget >= 2 => {
                self.branches += 1;
                self.line(depth, "branch {");
                let mut inner = defined.clone();
                let n = self.rng.gen_range(1..=3.min(*budget));
                for _ in 0..n {
                    self.stmt(depth + 1, &mut inner, budget);
                }
                self.line(depth, "} else {");
                let mut other = defined.clone();
                let n = self.rng.gen_range(0..=2.min(*budget));
                for _ in 0..n {
                    self.stmt(depth + 1, &mut other, budget);
                }
                self.line(depth, "}");
                for v in inner.into_iter().chain(other) {
                    if !defined.contains(&v) {
                        defined.push(v);
                    }
                }
                return;
            }
            _ => self.line(depth, &format!("{x} = {y}")),
        }
        if !defined.contains(&x) {
            defined.push(x);
        }
    }

    fn field(&mut self) -> &'static str {
        if self.cfg.shared_fields && (!self.program_field || self.rng.gen_bool(0.5)) {
            self.lib_fields.choose(self.rng).copied().expect("library field")
        } else {
            "g"
        }
    }

    fn library_body(&mut self, kind: LibBody, arity: usize, callback: &str) {
        let p = if arity == 2 && self.rng.gen_bool(0.5) { "v" } else { "this" };
        let f = self.lib_fields.choose(self.rng).copied().expect("library field");
        match kind {
            LibBody::Noop => {}
            LibBody::ReturnParam => self.line(1, &format!("return {p}")),
            LibBody::ReturnFresh => {
                let c = self.class();
                self.line(1, &format!("r = new {c}"));
                self.line(1, "return r");
            }
            LibBody::Store => self.line(1, &format!("this.{f} = {p}")),
            LibBody::Load => {
                self.line(1, &format!("r = this.{f}"));
                self.line(1, "return r");
            }
            LibBody::Callback => {
                if self.rng.gen_bool(0.5) {
                    let c = self.class();
                    self.line(1, &format!("o = new {c}"));
                    self.line(1, &format!("call {callback}(o)"));
                } else {
                    self.line(1, &format!("call {callback}({p})"));
                }
            }
        }
    }
}

/// Generates one program as IR source text.
pub fn generate_source(rng: &mut ChaCha8Rng, cfg: GenConfig) -> String {
    let n_classes = rng.gen_range(1..=cfg.max_classes.max(1));
    let classes: Vec<String> = ["A", "B", "C"].iter().take(n_classes).map(|s| s.to_string()).collect();
    let lib_fields: Vec<&'static str> = LIB_FIELDS[..rng.gen_range(1..=2)].to_vec();
    let program_field = rng.gen_bool(0.5);
    let n_lib = rng.gen_range(1..=cfg.max_library.max(1));
    let mut g = Gen {
        rng,
        cfg,
        classes,
        lib_fields,
        program_field,
        library: Vec::new(),
        helper: false,
        branches: 0,
        out: String::new(),
    };
    let mut kinds = Vec::new();
    for i in 0..n_lib {
        let arity = g.rng.gen_range(1..=2);
        let mut kind = *[LibBody::Noop, LibBody::ReturnParam, LibBody::ReturnFresh, LibBody::Store, LibBody::Load]
            .choose(g.rng)
            .expect("kinds");
        if cfg.callbacks && i == 0 {
            kind = LibBody::Callback;
        }
        let returns = matches!(kind, LibBody::ReturnParam | LibBody::ReturnFresh | LibBody::Load);
        g.library.push((format!("m{i}"), arity, returns));
        kinds.push(kind);
    }
    g.helper = g.rng.gen_bool(0.3);

    for c in g.classes.clone() {
        g.line(0, &format!("class {c}"));
    }
    for f in g.lib_fields.clone() {
        g.line(0, &format!("field {f} library"));
    }
    if g.program_field {
        g.line(0, "field g program");
    }
    g.out.push('\n');

    g.line(0, "func main() program {");
    let mut budget = g.rng.gen_range(cfg.min_stmts..=cfg.max_stmts.max(cfg.min_stmts));
    let mut defined = Vec::new();
    while budget > 0 {
        g.stmt(1, &mut defined, &mut budget);
    }
    g.line(0, "}");

    if g.helper {
        g.out.push('\n');
        g.line(0, "func helper(p) program {");
        let (m, arity, _) = g.library[0].clone();
        let args = vec!["p"; arity].join(", ");
        g.line(1, &format!("q = call {m}({args})"));
        g.line(1, "return p");
        g.line(0, "}");
    }
    if cfg.callbacks {
        g.out.push('\n');
        g.line(0, "func cb(p) program overrides m0 {");
        let (m, arity, returns) = g.library.choose(g.rng).expect("library").clone();
        let args = vec!["p"; arity].join(", ");
        if returns && m != "m0" {
            g.line(1, &format!("q = call {m}({args})"));
        }
        if g.program_field {
            g.line(1, "p.g = p");
        }
        g.line(0, "}");
    }
    for (i, kind) in kinds.into_iter().enumerate() {
        let (name, arity, _) = g.library[i].clone();
        let params = if arity == 2 { "this, v" } else { "this" };
        g.out.push('\n');
        g.line(0, &format!("func {name}({params}) library {{"));
        g.library_body(kind, arity, "cb");
        g.line(0, "}");
    }
    let mut out = g.out;
    let _ = writeln!(out);
    out
}

/// Generates and parses one program; shared-field programs are returned as
/// written, before any rewrite.
pub fn generate_program(rng: &mut ChaCha8Rng, cfg: GenConfig) -> ProgramBundle {
    let src = generate_source(rng, cfg);
    match parse_program(&src) {
        Ok(b) => b,
        Err(e) => panic!("generator produced invalid IR ({e}):\n{src}"),
    }
}

/// Deterministic corpus: a mix of plain, callback and shared-field programs,
/// the latter already rewritten to accessor calls.
pub fn generate_corpus(seed: u64, n: usize) -> Vec<ProgramBundle> {
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64));
            let cfg = GenConfig {
                callbacks: i % 3 == 1,
                shared_fields: i % 5 == 4,
                ..GenConfig::default()
            };
            let b = generate_program(&mut rng, cfg);
            let shared = shared_fields(&b);
            if shared.is_empty() {
                b
            } else {
                rewrite_shared_fields(&b, &shared).expect("library fields rewrite")
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::validate_program;

    #[test]
    fn corpus_is_deterministic_and_valid() {
        let a = generate_corpus(7, 60);
        let b = generate_corpus(7, 60);
        assert_eq!(a, b);
        for p in &a {
            assert!(validate_program(p).is_empty(), "{:?}", validate_program(p));
        }
        assert_ne!(generate_corpus(8, 5), a[..5].to_vec());
    }

    #[test]
    fn corpus_covers_callbacks_and_branches() {
        let c = generate_corpus(7, 60);
        assert!(c.iter().any(|p| p.callbacks().next().is_some()));
        assert!(c.iter().any(|p| crate::ir::print_program(p).contains("branch")));
        assert!(c.iter().any(|p| p.functions.contains_key("get_f") || p.functions.contains_key("set_f")));
    }
}
