//! The analyzed language: a small object language with program code, library
//! ground truth (executed but never analyzed) and library specifications
//! (analyzed but never executed).

mod parse;
mod print;
mod rewrite;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub use parse::{parse_program, parse_spec_file};
pub use print::{print_program, print_spec};
pub use rewrite::{rewrite_shared_fields, shared_fields};
pub use validate::{validate_program, Violation};

use crate::error::IrError;

/// Unique statement label. Allocation statements use it as their site name.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StmtId(pub String);

impl StmtId {
    pub fn new(s: impl Into<String>) -> Self {
        StmtId(s.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StmtId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassName(pub String);

impl ClassName {
    pub fn new(s: impl Into<String>) -> Self {
        ClassName(s.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClassName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FieldOwner {
    Program,
    Library,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Statement {
    pub id: StmtId,
    pub kind: StmtKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StmtKind {
    Alloc {
        target: String,
        class: ClassName,
    },
    Assign {
        target: String,
        source: String,
    },
    Load {
        target: String,
        base: String,
        field: String,
    },
    Store {
        base: String,
        field: String,
        source: String,
    },
    Call {
        target: Option<String>,
        callee: String,
        args: Vec<String>,
    },
    Return {
        var: String,
    },
    Branch {
        then_block: Block,
        else_block: Block,
    },
}

pub type Block = Vec<Statement>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SpecOrigin {
    Handwritten,
    /// Desugared `proxyspec <class> <fn>`: the body allocates one object of
    /// the class onto the return value.
    Proxy(ClassName),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpecBody {
    pub params: Vec<String>,
    pub body: Block,
    pub origin: SpecOrigin,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FunctionKind {
    Program {
        body: Block,
        /// Library function this program function overrides; marks it as a
        /// potential callback.
        overrides: Option<String>,
    },
    Library {
        ground_truth: Option<Block>,
        spec: Option<SpecBody>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionDecl {
    pub name: String,
    pub params: Vec<String>,
    pub kind: FunctionKind,
}

impl FunctionDecl {
    pub fn is_program(&self) -> bool {
        matches!(self.kind, FunctionKind::Program { .. })
    }

    pub fn is_library(&self) -> bool {
        matches!(self.kind, FunctionKind::Library { .. })
    }

    pub fn is_callback(&self) -> bool {
        matches!(
            self.kind,
            FunctionKind::Program {
                overrides: Some(_),
                ..
            }
        )
    }

    pub fn program_body(&self) -> Option<&Block> {
        match &self.kind {
            FunctionKind::Program { body, .. } => Some(body),
            FunctionKind::Library { .. } => None,
        }
    }

    pub fn ground_truth(&self) -> Option<&Block> {
        match &self.kind {
            FunctionKind::Library { ground_truth, .. } => ground_truth.as_ref(),
            FunctionKind::Program { .. } => None,
        }
    }

    pub fn spec(&self) -> Option<&SpecBody> {
        match &self.kind {
            FunctionKind::Library { spec, .. } => spec.as_ref(),
            FunctionKind::Program { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ProgramBundle {
    pub entry: String,
    pub classes: BTreeSet<ClassName>,
    pub fields: BTreeMap<String, FieldOwner>,
    pub functions: BTreeMap<String, FunctionDecl>,
    pub sources: BTreeSet<String>,
    pub sinks: BTreeSet<String>,
}

/// Which body of a function a statement lives in.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BodyLoc {
    Program(String),
    GroundTruth(String),
    Spec(String),
}

impl BodyLoc {
    pub fn func(&self) -> &str {
        match self {
            BodyLoc::Program(f) | BodyLoc::GroundTruth(f) | BodyLoc::Spec(f) => f,
        }
    }
}

/// Set of library functions whose specifications are active.
pub type SpecSet = BTreeSet<String>;

impl ProgramBundle {
    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        self.functions.get(name)
    }

    pub fn program_functions(&self) -> impl Iterator<Item = &FunctionDecl> {
        self.functions.values().filter(|f| f.is_program())
    }

    pub fn library_functions(&self) -> impl Iterator<Item = &FunctionDecl> {
        self.functions.values().filter(|f| f.is_library())
    }

    pub fn callbacks(&self) -> impl Iterator<Item = &FunctionDecl> {
        self.functions.values().filter(|f| f.is_callback())
    }

    /// All declared specifications.
    pub fn declared_specs(&self) -> SpecSet {
        self.library_functions()
            .filter(|f| f.spec().is_some())
            .map(|f| f.name.clone())
            .collect()
    }

    /// A library function is missing when no specification for it is active.
    pub fn is_missing(&self, name: &str, specs: &SpecSet) -> bool {
        self.function(name)
            .is_some_and(|f| f.is_library() && !(specs.contains(name) && f.spec().is_some()))
    }

    pub fn field_owner(&self, field: &str) -> Option<FieldOwner> {
        self.fields.get(field).copied()
    }

    pub fn index(&self) -> BundleIndex<'_> {
        BundleIndex::build(self)
    }

    /// Merge a parsed spec file into this bundle. Field declarations that
    /// repeat an existing declaration with the same owner are accepted.
    pub fn merge_specs(&mut self, other: ProgramBundle) -> Result<SpecSet, IrError> {
        for (field, owner) in other.fields {
            match self.fields.get(&field) {
                Some(existing) if *existing != owner => {
                    return Err(IrError::Duplicate(format!("field {field}")))
                }
                _ => {
                    self.fields.insert(field, owner);
                }
            }
        }
        self.classes.extend(other.classes);
        let mut added = SpecSet::new();
        for (name, decl) in other.functions {
            let Some(mut spec) = decl.spec().cloned() else {
                continue;
            };
            let target = self
                .functions
                .get_mut(&name)
                .ok_or_else(|| IrError::Unresolved(format!("spec for undeclared function {name}")))?;
            match &mut target.kind {
                FunctionKind::Library { spec: slot, .. } => {
                    if slot.is_some() {
                        return Err(IrError::Duplicate(format!("spec for {name}")));
                    }
                    if matches!(spec.origin, SpecOrigin::Proxy(_)) {
                        spec.params = target.params.clone();
                    } else if spec.params.len() != target.params.len() {
                        return Err(IrError::Arity(name.clone()));
                    }
                    *slot = Some(spec);
                }
                FunctionKind::Program { .. } => {
                    return Err(IrError::Unresolved(format!("spec for program function {name}")))
                }
            }
            added.insert(name);
        }
        self.check_ids()?;
        parse::resolve(self)?;
        Ok(added)
    }

    pub(crate) fn check_ids(&self) -> Result<(), IrError> {
        let idx = BundleIndex::build(self);
        idx.duplicate.map_or(Ok(()), |d| Err(IrError::Duplicate(format!("statement id {d}"))))
    }
}

/// Statement lookup tables for a bundle.
pub struct BundleIndex<'a> {
    /// Executable statements (program and ground-truth bodies).
    pub runtime: BTreeMap<&'a StmtId, (BodyLoc, &'a Statement)>,
    /// Analyzable statements (program and specification bodies).
    pub analyzable: BTreeMap<&'a StmtId, (BodyLoc, &'a Statement)>,
    duplicate: Option<StmtId>,
}

impl<'a> BundleIndex<'a> {
    fn build(b: &'a ProgramBundle) -> Self {
        let mut runtime = BTreeMap::new();
        let mut analyzable = BTreeMap::new();
        let mut duplicate = None;
        let mut gt_allocs: BTreeMap<&str, BTreeSet<&StmtId>> = BTreeMap::new();
        for f in b.functions.values() {
            match &f.kind {
                FunctionKind::Program { body, .. } => {
                    for s in walk(body) {
                        let loc = BodyLoc::Program(f.name.clone());
                        if runtime.insert(&s.id, (loc.clone(), s)).is_some() {
                            duplicate.get_or_insert(s.id.clone());
                        }
                        analyzable.insert(&s.id, (loc, s));
                    }
                }
                FunctionKind::Library { ground_truth, .. } => {
                    for s in ground_truth.iter().flat_map(walk) {
                        if matches!(s.kind, StmtKind::Alloc { .. }) {
                            gt_allocs.entry(&f.name).or_default().insert(&s.id);
                        }
                        if runtime
                            .insert(&s.id, (BodyLoc::GroundTruth(f.name.clone()), s))
                            .is_some()
                        {
                            duplicate.get_or_insert(s.id.clone());
                        }
                    }
                }
            }
        }
        for f in b.library_functions() {
            let Some(spec) = f.spec() else { continue };
            for s in walk(&spec.body) {
                let shadows = matches!(s.kind, StmtKind::Alloc { .. })
                    && gt_allocs.get(f.name.as_str()).is_some_and(|ids| ids.contains(&s.id));
                if !shadows && runtime.contains_key(&s.id) {
                    duplicate.get_or_insert(s.id.clone());
                }
                if analyzable
                    .insert(&s.id, (BodyLoc::Spec(f.name.clone()), s))
                    .is_some()
                {
                    duplicate.get_or_insert(s.id.clone());
                }
            }
        }
        BundleIndex {
            runtime,
            analyzable,
            duplicate,
        }
    }

    pub fn runtime_stmt(&self, id: &StmtId) -> Option<(&BodyLoc, &'a Statement)> {
        self.runtime.get(id).map(|(l, s)| (l, *s))
    }

    /// Whether `id` names an allocation statement in program code.
    pub fn is_program_site(&self, id: &StmtId) -> bool {
        matches!(
            self.runtime.get(id),
            Some((BodyLoc::Program(_), Statement { kind: StmtKind::Alloc { .. }, .. }))
        )
    }
}

/// Depth-first, pre-order walk over a block including nested branch blocks.
pub fn walk(block: &Block) -> impl Iterator<Item = &Statement> {
    let mut stack: Vec<std::slice::Iter<'_, Statement>> = vec![block.iter()];
    std::iter::from_fn(move || loop {
        let top = stack.last_mut()?;
        match top.next() {
            Some(s) => {
                if let StmtKind::Branch {
                    then_block,
                    else_block,
                } = &s.kind
                {
                    stack.push(else_block.iter());
                    stack.push(then_block.iter());
                }
                return Some(s);
            }
            None => {
                stack.pop();
            }
        }
    })
}

impl StmtKind {
    /// Variable written by this statement, if any.
    pub fn defined_var(&self) -> Option<&str> {
        match self {
            StmtKind::Alloc { target, .. }
            | StmtKind::Assign { target, .. }
            | StmtKind::Load { target, .. } => Some(target),
            StmtKind::Call { target, .. } => target.as_deref(),
            _ => None,
        }
    }
}
