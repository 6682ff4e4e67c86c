use std::collections::BTreeSet;

use super::{
    walk, Block, FieldOwner, FunctionDecl, FunctionKind, ProgramBundle, Statement, StmtId, StmtKind,
};
use crate::error::IrError;

/// Library-owned fields that program code reads or writes directly.
pub fn shared_fields(b: &ProgramBundle) -> BTreeSet<String> {
    b.program_functions()
        .flat_map(|f| walk(f.program_body().expect("program function")))
        .filter_map(|s| match &s.kind {
            StmtKind::Load { field, .. } | StmtKind::Store { field, .. } => Some(field.clone()),
            _ => None,
        })
        .filter(|f| b.field_owner(f) == Some(FieldOwner::Library))
        .collect()
}

/// Replaces program accesses to each field in `fields` by calls to generated
/// library accessors `get_<f>` and `set_<f>`. Rewritten statements keep
/// their ids.
pub fn rewrite_shared_fields(
    b: &ProgramBundle,
    fields: &BTreeSet<String>,
) -> Result<ProgramBundle, IrError> {
    let mut out = b.clone();
    for field in fields {
        match b.field_owner(field) {
            Some(FieldOwner::Library) => {}
            Some(FieldOwner::Program) => {
                return Err(IrError::Rewrite(format!("field {field} is program-owned")))
            }
            None => return Err(IrError::Unresolved(format!("field {field}"))),
        }
        let getter = format!("get_{field}");
        let setter = format!("set_{field}");
        for name in [&getter, &setter] {
            if b.functions.contains_key(name) {
                return Err(IrError::Rewrite(format!("accessor name {name} is taken")));
            }
        }
        let id = |name: &str, n: usize| StmtId(format!("{name}_{n}"));
        out.functions.insert(
            getter.clone(),
            FunctionDecl {
                name: getter.clone(),
                params: vec!["this".into()],
                kind: FunctionKind::Library {
                    ground_truth: Some(vec![
                        Statement {
                            id: id(&getter, 0),
                            kind: StmtKind::Load {
                                target: "r".into(),
                                base: "this".into(),
                                field: field.clone(),
                            },
                        },
                        Statement {
                            id: id(&getter, 1),
                            kind: StmtKind::Return { var: "r".into() },
                        },
                    ]),
                    spec: None,
                },
            },
        );
        out.functions.insert(
            setter.clone(),
            FunctionDecl {
                name: setter.clone(),
                params: vec!["this".into(), "v".into()],
                kind: FunctionKind::Library {
                    ground_truth: Some(vec![Statement {
                        id: id(&setter, 0),
                        kind: StmtKind::Store {
                            base: "this".into(),
                            field: field.clone(),
                            source: "v".into(),
                        },
                    }]),
                    spec: None,
                },
            },
        );
    }
    for f in out.functions.values_mut() {
        if let FunctionKind::Program { body, .. } = &mut f.kind {
            rewrite_block(body, fields);
        }
    }
    out.check_ids()?;
    Ok(out)
}

fn rewrite_block(block: &mut Block, fields: &BTreeSet<String>) {
    for s in block.iter_mut() {
        let replacement = match &mut s.kind {
            StmtKind::Load {
                target,
                base,
                field,
            } if fields.contains(field.as_str()) => Some(StmtKind::Call {
                target: Some(target.clone()),
                callee: format!("get_{field}"),
                args: vec![base.clone()],
            }),
            StmtKind::Store {
                base,
                field,
                source,
            } if fields.contains(field.as_str()) => Some(StmtKind::Call {
                target: None,
                callee: format!("set_{field}"),
                args: vec![base.clone(), source.clone()],
            }),
            StmtKind::Branch {
                then_block,
                else_block,
            } => {
                rewrite_block(then_block, fields);
                rewrite_block(else_block, fields);
                None
            }
            _ => None,
        };
        if let Some(k) = replacement {
            s.kind = k;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse_program, validate_program};
    use super::*;

    const SHARED: &str = "class A\nfield f library\nfield g program\nfunc main() program {\n a = new A @oa\n a.f = a @st\n b = a.f @ld\n a.g = b\n}\n";

    #[test]
    fn rewrite_removes_shared_field_violations() {
        let b = parse_program(SHARED).unwrap();
        assert_eq!(validate_program(&b).len(), 2);
        let fields = shared_fields(&b);
        assert_eq!(fields, BTreeSet::from(["f".to_string()]));
        let r = rewrite_shared_fields(&b, &fields).unwrap();
        assert!(validate_program(&r).is_empty());
        let idx = r.index();
        let (_, st) = idx.runtime_stmt(&StmtId::new("st")).unwrap();
        assert!(matches!(&st.kind, StmtKind::Call { callee, .. } if callee == "set_f"));
        let (_, ld) = idx.runtime_stmt(&StmtId::new("ld")).unwrap();
        assert!(matches!(&ld.kind, StmtKind::Call { callee, target: Some(t), .. } if callee == "get_f" && t == "b"));
    }

    #[test]
    fn program_field_cannot_be_rewritten() {
        let b = parse_program(SHARED).unwrap();
        let err = rewrite_shared_fields(&b, &BTreeSet::from(["g".to_string()])).unwrap_err();
        assert!(matches!(err, IrError::Rewrite(_)));
    }
}
