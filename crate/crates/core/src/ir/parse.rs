//! Parser for the line-oriented IR text format.

use std::collections::BTreeSet;

use super::{
    walk, Block, ClassName, FieldOwner, FunctionDecl, FunctionKind, ProgramBundle, SpecBody,
    SpecOrigin, Statement, StmtId, StmtKind,
};
use crate::error::IrError;

const KEYWORDS: &[&str] = &["new", "call", "return", "branch", "else"];

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Sym(char),
    Newline,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, IrError> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let chars: Vec<char> = raw.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            if c == '#' || (c == '/' && chars.get(i + 1) == Some(&'/')) {
                break;
            }
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c.is_ascii_alphanumeric() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(chars[start..i].iter().collect()),
                    line,
                    col,
                });
                continue;
            }
            if "=.(),{}@;".contains(c) {
                out.push(Token {
                    tok: Tok::Sym(c),
                    line,
                    col,
                });
                i += 1;
                continue;
            }
            return Err(IrError::Syntax {
                line,
                col,
                msg: format!("unexpected character {c:?}"),
            });
        }
        out.push(Token {
            tok: Tok::Newline,
            line,
            col: chars.len() + 1,
        });
    }
    let line = out.last().map_or(1, |t| t.line + 1);
    out.push(Token {
        tok: Tok::Eof,
        line,
        col: 1,
    });
    Ok(out)
}

/// Statement as parsed, before ids are assigned.
struct RawStmt {
    label: Option<String>,
    kind: RawKind,
}

enum RawKind {
    Plain(StmtKind),
    Branch(Vec<RawStmt>, Vec<RawStmt>),
}

struct RawFunc {
    name: String,
    params: Vec<String>,
    kind: RawFuncKind,
}

enum RawFuncKind {
    Program {
        body: Vec<RawStmt>,
        overrides: Option<String>,
    },
    Library {
        ground_truth: Option<Vec<RawStmt>>,
        spec: Option<Vec<RawStmt>>,
    },
}

struct RawSpec {
    name: String,
    params: Vec<String>,
    body: Vec<RawStmt>,
    line: usize,
}

#[derive(Default)]
struct RawFile {
    entry: Option<(String, usize)>,
    classes: Vec<(String, usize)>,
    fields: Vec<(String, FieldOwner, usize)>,
    funcs: Vec<RawFunc>,
    specs: Vec<RawSpec>,
    proxyspecs: Vec<(String, String, usize)>,
    sources: Vec<(String, usize)>,
    sinks: Vec<(String, usize)>,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, IrError> {
        let (line, col) = self.here();
        Err(IrError::Syntax {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn skip_newlines(&mut self) {
        while matches!(self.peek(), Tok::Newline | Tok::Sym(';')) {
            self.bump();
        }
    }

    fn is_sym(&self, c: char) -> bool {
        *self.peek() == Tok::Sym(c)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect_sym(&mut self, c: char) -> Result<(), IrError> {
        if self.is_sym(c) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected '{c}'"))
        }
    }

    fn ident(&mut self) -> Result<String, IrError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.err("expected identifier"),
        }
    }

    /// Identifier usable as a variable name.
    fn var(&mut self) -> Result<String, IrError> {
        match self.peek().clone() {
            Tok::Ident(s) if KEYWORDS.contains(&s.as_str()) => {
                self.err(format!("keyword '{s}' cannot be a variable"))
            }
            Tok::Ident(_) => self.ident(),
            _ => self.err("expected variable"),
        }
    }

    fn end_of_line(&mut self) -> Result<(), IrError> {
        match self.peek() {
            Tok::Newline | Tok::Sym(';') => {
                self.bump();
                Ok(())
            }
            Tok::Eof | Tok::Sym('}') => Ok(()),
            _ => self.err("expected end of line"),
        }
    }

    fn var_list(&mut self) -> Result<Vec<String>, IrError> {
        self.expect_sym('(')?;
        let mut out = Vec::new();
        if !self.is_sym(')') {
            loop {
                out.push(self.var()?);
                if self.is_sym(',') {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect_sym(')')?;
        Ok(out)
    }

    fn label(&mut self) -> Result<Option<String>, IrError> {
        if self.is_sym('@') {
            self.bump();
            Ok(Some(self.ident()?))
        } else {
            Ok(None)
        }
    }

    fn file(&mut self) -> Result<RawFile, IrError> {
        let mut f = RawFile::default();
        loop {
            self.skip_newlines();
            let line = self.here().0;
            let kw = match self.peek().clone() {
                Tok::Eof => break,
                Tok::Ident(kw) => kw,
                _ => return self.err("expected directive"),
            };
            match kw.as_str() {
                "entry" => {
                    self.bump();
                    f.entry = Some((self.ident()?, line));
                }
                "class" => {
                    self.bump();
                    f.classes.push((self.ident()?, line));
                }
                "field" => {
                    self.bump();
                    let name = self.ident()?;
                    let owner = match self.ident()?.as_str() {
                        "program" => FieldOwner::Program,
                        "library" => FieldOwner::Library,
                        _ => return self.err("field owner must be 'program' or 'library'"),
                    };
                    f.fields.push((name, owner, line));
                }
                "func" => {
                    self.bump();
                    let func = self.func()?;
                    f.funcs.push(func);
                    continue;
                }
                "spec" => {
                    self.bump();
                    let name = self.ident()?;
                    let params = self.var_list()?;
                    let body = self.block()?;
                    f.specs.push(RawSpec {
                        name,
                        params,
                        body,
                        line,
                    });
                    continue;
                }
                "proxyspec" => {
                    self.bump();
                    let class = self.ident()?;
                    let func = self.ident()?;
                    f.proxyspecs.push((class, func, line));
                }
                "source" => {
                    self.bump();
                    f.sources.push((self.ident()?, line));
                }
                "sink" => {
                    self.bump();
                    f.sinks.push((self.ident()?, line));
                }
                other => return self.err(format!("unknown directive '{other}'")),
            }
            self.end_of_line()?;
        }
        Ok(f)
    }

    fn func(&mut self) -> Result<RawFunc, IrError> {
        let name = self.ident()?;
        let params = self.var_list()?;
        let kind = match self.ident()?.as_str() {
            "program" => {
                let overrides = if self.is_kw("overrides") {
                    self.bump();
                    Some(self.ident()?)
                } else {
                    None
                };
                RawFuncKind::Program {
                    body: self.block()?,
                    overrides,
                }
            }
            "library" => {
                let ground_truth = if self.is_sym('{') {
                    Some(self.block()?)
                } else {
                    None
                };
                let save = self.pos;
                self.skip_newlines();
                let spec = if self.is_kw("spec") && *self.peek_at(1) == Tok::Sym('{') {
                    self.bump();
                    Some(self.block()?)
                } else {
                    self.pos = save;
                    None
                };
                RawFuncKind::Library { ground_truth, spec }
            }
            _ => return self.err("function kind must be 'program' or 'library'"),
        };
        self.end_of_line()?;
        Ok(RawFunc { name, params, kind })
    }

    fn block(&mut self) -> Result<Vec<RawStmt>, IrError> {
        self.expect_sym('{')?;
        let mut out = Vec::new();
        loop {
            self.skip_newlines();
            if self.is_sym('}') {
                self.bump();
                return Ok(out);
            }
            if *self.peek() == Tok::Eof {
                return self.err("unterminated block");
            }
            out.push(self.stmt()?);
        }
    }

    fn stmt(&mut self) -> Result<RawStmt, IrError> {
        if self.is_kw("branch") {
            self.bump();
            let label = self.label()?;
            let then_block = self.block()?;
            let save = self.pos;
            self.skip_newlines();
            let else_block = if self.is_kw("else") {
                self.bump();
                self.block()?
            } else {
                self.pos = save;
                Vec::new()
            };
            self.end_of_line()?;
            return Ok(RawStmt {
                label,
                kind: RawKind::Branch(then_block, else_block),
            });
        }
        let kind = if self.is_kw("call") {
            self.bump();
            let callee = self.ident()?;
            let args = self.var_list()?;
            StmtKind::Call {
                target: None,
                callee,
                args,
            }
        } else if self.is_kw("return") {
            self.bump();
            StmtKind::Return { var: self.var()? }
        } else {
            let first = self.var()?;
            if self.is_sym('.') {
                self.bump();
                let field = self.ident()?;
                self.expect_sym('=')?;
                let source = self.var()?;
                StmtKind::Store {
                    base: first,
                    field,
                    source,
                }
            } else {
                self.expect_sym('=')?;
                if self.is_kw("new") {
                    self.bump();
                    StmtKind::Alloc {
                        target: first,
                        class: ClassName(self.ident()?),
                    }
                } else if self.is_kw("call") {
                    self.bump();
                    let callee = self.ident()?;
                    let args = self.var_list()?;
                    StmtKind::Call {
                        target: Some(first),
                        callee,
                        args,
                    }
                } else {
                    let source = self.var()?;
                    if self.is_sym('.') {
                        self.bump();
                        let field = self.ident()?;
                        StmtKind::Load {
                            target: first,
                            base: source,
                            field,
                        }
                    } else {
                        StmtKind::Assign {
                            target: first,
                            source,
                        }
                    }
                }
            }
        };
        let label = self.label()?;
        self.end_of_line()?;
        Ok(RawStmt {
            label,
            kind: RawKind::Plain(kind),
        })
    }
}

struct IdAssigner {
    counter: usize,
    prefix: String,
}

impl IdAssigner {
    fn block(&mut self, raw: Vec<RawStmt>) -> Block {
        raw.into_iter()
            .map(|r| {
                let n = self.counter;
                self.counter += 1;
                let id = StmtId(r.label.unwrap_or_else(|| format!("{}s{n}", self.prefix)));
                let kind = match r.kind {
                    RawKind::Plain(k) => k,
                    RawKind::Branch(t, e) => {
                        let then_block = self.block(t);
                        let else_block = self.block(e);
                        StmtKind::Branch {
                            then_block,
                            else_block,
                        }
                    }
                };
                Statement { id, kind }
            })
            .collect()
    }
}

fn syntax(line: usize, msg: impl Into<String>) -> IrError {
    IrError::Syntax {
        line,
        col: 1,
        msg: msg.into(),
    }
}

fn proxy_spec_body(class: &ClassName, func: &str, params: Vec<String>) -> SpecBody {
    SpecBody {
        params,
        body: vec![
            Statement {
                id: StmtId(format!("ps_{func}")),
                kind: StmtKind::Alloc {
                    target: "ret".into(),
                    class: class.clone(),
                },
            },
            Statement {
                id: StmtId(format!("ps_{func}_ret")),
                kind: StmtKind::Return { var: "ret".into() },
            },
        ],
        origin: SpecOrigin::Proxy(class.clone()),
    }
}

/// Collects the declarations of a raw file into a bundle without resolving
/// entry or callees.
fn assemble(raw: RawFile, ids: &mut IdAssigner) -> Result<ProgramBundle, IrError> {
    let mut b = ProgramBundle::default();
    for (c, _) in raw.classes {
        if !b.classes.insert(ClassName(c.clone())) {
            return Err(IrError::Duplicate(format!("class {c}")));
        }
    }
    for (name, owner, _) in raw.fields {
        if b.fields.insert(name.clone(), owner).is_some() {
            return Err(IrError::Duplicate(format!("field {name}")));
        }
    }
    for rf in raw.funcs {
        let kind = match rf.kind {
            RawFuncKind::Program { body, overrides } => FunctionKind::Program {
                body: ids.block(body),
                overrides,
            },
            RawFuncKind::Library { ground_truth, spec } => FunctionKind::Library {
                ground_truth: ground_truth.map(|g| ids.block(g)),
                spec: spec.map(|s| SpecBody {
                    params: rf.params.clone(),
                    body: ids.block(s),
                    origin: SpecOrigin::Handwritten,
                }),
            },
        };
        let decl = FunctionDecl {
            name: rf.name.clone(),
            params: rf.params,
            kind,
        };
        if b.functions.insert(rf.name.clone(), decl).is_some() {
            return Err(IrError::Duplicate(format!("function {}", rf.name)));
        }
    }
    Ok(b)
}

fn attach_spec(
    b: &mut ProgramBundle,
    name: &str,
    spec: SpecBody,
    line: usize,
    declare_missing: bool,
) -> Result<(), IrError> {
    if !b.functions.contains_key(name) {
        if !declare_missing {
            return Err(IrError::Unresolved(format!("function {name} (line {line})")));
        }
        b.functions.insert(
            name.to_string(),
            FunctionDecl {
                name: name.to_string(),
                params: spec.params.clone(),
                kind: FunctionKind::Library {
                    ground_truth: None,
                    spec: None,
                },
            },
        );
    }
    let decl = b.functions.get_mut(name).expect("inserted above");
    let arity = decl.params.len();
    match &mut decl.kind {
        FunctionKind::Library { spec: slot, .. } => {
            if slot.is_some() {
                return Err(IrError::Duplicate(format!("spec for {name}")));
            }
            if matches!(spec.origin, SpecOrigin::Handwritten) && spec.params.len() != arity {
                return Err(IrError::Arity(name.to_string()));
            }
            *slot = Some(spec);
            Ok(())
        }
        FunctionKind::Program { .. } => Err(syntax(line, format!("{name} is not a library function"))),
    }
}

/// Parses a complete program bundle.
pub fn parse_program(text: &str) -> Result<ProgramBundle, IrError> {
    let toks = lex(text)?;
    let mut raw = Parser { toks, pos: 0 }.file()?;
    let entry = raw.entry.clone();
    let standalone = std::mem::take(&mut raw.specs);
    let proxyspecs = std::mem::take(&mut raw.proxyspecs);
    let sources = std::mem::take(&mut raw.sources);
    let sinks = std::mem::take(&mut raw.sinks);
    let mut ids = IdAssigner {
        counter: 0,
        prefix: String::new(),
    };
    let mut b = assemble(raw, &mut ids)?;
    for s in standalone {
        let spec = SpecBody {
            params: s.params,
            body: ids.block(s.body),
            origin: SpecOrigin::Handwritten,
        };
        attach_spec(&mut b, &s.name, spec, s.line, false)?;
    }
    for (class, func, line) in proxyspecs {
        let params = b
            .function(&func)
            .ok_or_else(|| IrError::Unresolved(format!("function {func} (line {line})")))?
            .params
            .clone();
        let spec = proxy_spec_body(&ClassName(class), &func, params);
        attach_spec(&mut b, &func, spec, line, false)?;
    }
    for (name, line) in sources {
        if !b.functions.contains_key(&name) {
            return Err(IrError::Unresolved(format!("source {name} (line {line})")));
        }
        b.sources.insert(name);
    }
    for (name, line) in sinks {
        if !b.functions.contains_key(&name) {
            return Err(IrError::Unresolved(format!("sink {name} (line {line})")));
        }
        b.sinks.insert(name);
    }
    b.entry = match entry {
        Some((e, _)) => e,
        None => "main".to_string(),
    };
    if !b.function(&b.entry).is_some_and(|f| f.is_program()) {
        return Err(IrError::NoEntry);
    }
    resolve(&b)?;
    b.check_ids()?;
    Ok(b)
}

/// Parses a specification file: `field`, `class`, `spec` and `proxyspec`
/// directives. Functions named by specs are declared as library functions
/// without ground truth; merge the result into a bundle with
/// [`ProgramBundle::merge_specs`].
pub fn parse_spec_file(text: &str) -> Result<ProgramBundle, IrError> {
    let toks = lex(text)?;
    let mut raw = Parser { toks, pos: 0 }.file()?;
    if !raw.funcs.is_empty() || raw.entry.is_some() {
        return Err(syntax(1, "spec files may only contain field, class, spec and proxyspec directives"));
    }
    let standalone = std::mem::take(&mut raw.specs);
    let proxyspecs = std::mem::take(&mut raw.proxyspecs);
    let mut ids = IdAssigner {
        counter: 0,
        prefix: String::new(),
    };
    let mut b = assemble(raw, &mut ids)?;
    for s in standalone {
        ids.prefix = format!("{}_", s.name);
        ids.counter = 0;
        let spec = SpecBody {
            params: s.params,
            body: ids.block(s.body),
            origin: SpecOrigin::Handwritten,
        };
        attach_spec(&mut b, &s.name, spec, s.line, true)?;
    }
    for (class, func, line) in proxyspecs {
        let spec = proxy_spec_body(&ClassName(class), &func, Vec::new());
        attach_spec(&mut b, &func, spec, line, true)?;
    }
    Ok(b)
}

/// Checks callees, classes and fields referenced by every body.
pub(crate) fn resolve(b: &ProgramBundle) -> Result<(), IrError> {
    let check_block = |block: &Block| -> Result<(), IrError> {
        for s in walk(block) {
            match &s.kind {
                StmtKind::Alloc { class, .. } => {
                    if !b.classes.contains(class) {
                        return Err(IrError::Unresolved(format!("class {class}")));
                    }
                }
                StmtKind::Load { field, .. } | StmtKind::Store { field, .. } => {
                    if !b.fields.contains_key(field) {
                        return Err(IrError::Unresolved(format!("field {field}")));
                    }
                }
                StmtKind::Call { callee, args, .. } => {
                    let f = b
                        .function(callee)
                        .ok_or_else(|| IrError::Unresolved(format!("callee {callee}")))?;
                    if f.params.len() != args.len() {
                        return Err(IrError::Arity(format!("call {} to {callee}", s.id)));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    };
    for f in b.functions.values() {
        match &f.kind {
            FunctionKind::Program { body, .. } => check_block(body)?,
            FunctionKind::Library { ground_truth, spec } => {
                if let Some(gt) = ground_truth {
                    check_block(gt)?;
                }
                if let Some(s) = spec {
                    check_block(&s.body)?;
                }
            }
        }
    }
    for f in b.functions.values() {
        let mut params = BTreeSet::new();
        for p in &f.params {
            if !params.insert(p) {
                return Err(IrError::Duplicate(format!("parameter {p} of {}", f.name)));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_has_no_entry() {
        assert_eq!(parse_program(""), Err(IrError::NoEntry));
    }

    #[test]
    fn unknown_directive_is_rejected() {
        let err = parse_program("klass A\n").unwrap_err();
        assert!(matches!(err, IrError::Syntax { line: 1, col: 1, .. }), "{err:?}");
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_program("func main() program {\n  x = = y\n}\n").unwrap_err();
        assert_eq!(
            err,
            IrError::Syntax {
                line: 2,
                col: 7,
                msg: "expected variable".into()
            }
        );
    }

    #[test]
    fn unresolved_callee() {
        let err = parse_program("func main() program {\n call nope()\n}\n").unwrap_err();
        assert_eq!(err, IrError::Unresolved("callee nope".into()));
    }

    #[test]
    fn duplicate_function() {
        let err = parse_program("func main() program { }\nfunc main() program { }\n").unwrap_err();
        assert_eq!(err, IrError::Duplicate("function main".into()));
    }

    #[test]
    fn duplicate_label() {
        let text = "class A\nfunc main() program {\n x = new A @o\n y = new A @o\n}\n";
        assert_eq!(
            parse_program(text).unwrap_err(),
            IrError::Duplicate("statement id o".into())
        );
    }

    #[test]
    fn auto_ids_follow_file_order() {
        let text = "class A\nfunc main() program {\n x = new A\n branch {\n  y = x\n } else {\n  z = x @mine\n }\n w = x\n}\n";
        let b = parse_program(text).unwrap();
        let ids: Vec<_> = walk(b.function("main").unwrap().program_body().unwrap())
            .map(|s| s.id.0.clone())
            .collect();
        assert_eq!(ids, ["s0", "s1", "s2", "mine", "s4"]);
    }

    #[test]
    fn spec_may_shadow_ground_truth_site() {
        let text = "class S\nfunc main() program {\n s = call mk()\n}\nfunc mk() library {\n x = new S @o\n return x\n} spec {\n x = new S @o\n return x\n}\n";
        let b = parse_program(text).unwrap();
        assert!(b.function("mk").unwrap().spec().is_some());
    }

    #[test]
    fn proxyspec_desugars_into_allocating_spec() {
        let text = "class S\nfunc main() program {\n s = call mk()\n}\nfunc mk() library\nproxyspec S mk\n";
        let b = parse_program(text).unwrap();
        let spec = b.function("mk").unwrap().spec().unwrap();
        assert_eq!(spec.origin, SpecOrigin::Proxy(ClassName::new("S")));
        assert_eq!(spec.body.len(), 2);
    }

    #[test]
    fn inline_blocks_and_semicolons() {
        let text = "class A\nfield f library\nfunc main() program { a = new A; call put(a, a) }\nfunc put(this, ob) library { this.f = ob }\n";
        let b = parse_program(text).unwrap();
        assert_eq!(b.function("main").unwrap().program_body().unwrap().len(), 2);
    }

    #[test]
    fn keyword_is_not_a_variable() {
        assert!(parse_program("func main() program {\n new = x\n}\n").is_err());
    }
}
