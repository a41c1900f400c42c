//! Host-side canonicalization: scoped value numbering of constants and
//! arithmetic, invariant code motion out of loops that run, and DCE.
//!
//! Dedup compares field values by SSA identity, so two `const 5` ops feeding
//! the same field only dedup after this pass has merged them.

use std::collections::{HashMap, HashSet};

use crate::ir::{
    defs_within, replace_uses_map, ArithOp, Block, OpKind, Program, ValueId, ValueType,
};

use super::util::dce;

#[derive(Clone, PartialEq, Eq, Hash)]
enum Key {
    Const(u64, ValueType),
    Arith(ArithOp, ValueId, ValueId, ValueType),
}

fn key(values: &[ValueType], op: &crate::ir::Op, subst: &HashMap<ValueId, ValueId>) -> Option<Key> {
    let ty = values[op.results.first()?.index()].clone();
    let s = |v: &ValueId| *subst.get(v).unwrap_or(v);
    match &op.kind {
        OpKind::Const { value } => Some(Key::Const(*value, ty)),
        OpKind::Arith { op: a, lhs, rhs } => {
            let (mut l, mut r) = (s(lhs), s(rhs));
            if a.is_commutative() && r < l {
                std::mem::swap(&mut l, &mut r);
            }
            Some(Key::Arith(*a, l, r, ty))
        }
        _ => None,
    }
}

/// Value numbering with one scope per region. Redundant ops are removed
/// and their results recorded in `subst`.
fn number(
    values: &[ValueType],
    block: &mut Block,
    scopes: &mut Vec<HashMap<Key, ValueId>>,
    subst: &mut HashMap<ValueId, ValueId>,
) {
    scopes.push(HashMap::new());
    let mut i = 0;
    while i < block.ops.len() {
        if let Some(k) = key(values, &block.ops[i], subst) {
            if let Some(prev) = scopes.iter().rev().find_map(|s| s.get(&k)) {
                subst.insert(block.ops[i].results[0], *prev);
                block.ops.remove(i);
                continue;
            }
            scopes
                .last_mut()
                .unwrap()
                .insert(k, block.ops[i].results[0]);
        }
        for r in block.ops[i].regions_mut() {
            number(values, r, scopes, subst);
        }
        i += 1;
    }
    scopes.pop();
}

/// Moves invariant const and arith ops in front of loops with at least one
/// iteration.
fn licm(block: &mut Block) -> bool {
    let mut changed = false;
    let mut i = 0;
    while i < block.ops.len() {
        for r in block.ops[i].regions_mut() {
            changed |= licm(r);
        }
        if block.ops[i].trip_count().unwrap_or(0) == 0 {
            i += 1;
            continue;
        }
        let mut inside: HashSet<ValueId> = defs_within(&block.ops[i]);
        let OpKind::For { body, .. } = &mut block.ops[i].kind else {
            unreachable!()
        };
        let mut moved = Vec::new();
        let mut j = 0;
        while j < body.ops.len() {
            let op = &body.ops[j];
            let movable = matches!(op.kind, OpKind::Const { .. } | OpKind::Arith { .. })
                && op.operands().iter().all(|v| !inside.contains(v));
            if movable {
                let op = body.ops.remove(j);
                inside.remove(&op.results[0]);
                moved.push(op);
            } else {
                j += 1;
            }
        }
        let n = moved.len();
        changed |= n > 0;
        block.ops.splice(i..i, moved);
        i += n + 1;
    }
    changed
}

/// Canonicalizes host arithmetic so equal values share one SSA name.
pub fn canonicalize(program: &mut Program) {
    for func in &mut program.functions {
        loop {
            let mut subst = HashMap::new();
            number(&func.values, &mut func.body, &mut Vec::new(), &mut subst);
            // Chains of substitutions resolve in definition order.
            let resolved: HashMap<ValueId, ValueId> = subst
                .keys()
                .map(|k| {
                    let mut v = *k;
                    while let Some(n) = subst.get(&v) {
                        v = *n;
                    }
                    (*k, v)
                })
                .collect();
            replace_uses_map(&mut func.body, &resolved);
            let moved = licm(&mut func.body);
            let swept = dce(&mut func.body);
            if resolved.is_empty() && !moved && !swept {
                break;
            }
        }
        *func = func.renumbered();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_program, print_program, verify};

    fn canon(src: &str) -> String {
        let mut p = parse_program(src).unwrap();
        canonicalize(&mut p);
        verify(&p).unwrap();
        print_program(&p)
    }

    #[test]
    fn equal_consts_merge() {
        let out = canon(
            r#"accel "a"
            func @f() {
              %a = const 5 : i32
              %b = const 5 : i32
              %s = setup "a" (x = %a, y = %b) : state<"a">
            }"#,
        );
        assert!(out.contains(r#"setup "a" (x = %0, y = %0)"#), "{out}");
    }

    #[test]
    fn widths_kept_apart() {
        let out = canon(
            r#"accel "a"
            func @f() {
              %a = const 5 : i32
              %b = const 5 : i64
              %s = setup "a" (x = %a, y = %b) : state<"a">
            }"#,
        );
        assert_eq!(out.matches("const").count(), 2, "{out}");
    }

    #[test]
    fn commutative_cse() {
        let out = canon(
            r#"accel "a"
            func @f() {
              %a = const 5 : i32
              %b = const 6 : i32
              %x = add %a, %b : i32
              %y = add %b, %a : i32
              %z = sub %a, %b : i32
              %w = sub %b, %a : i32
              %s = setup "a" (x = %x, y = %y, z = %z, w = %w) : state<"a">
            }"#,
        );
        assert_eq!(out.matches("add").count(), 1, "{out}");
        assert_eq!(out.matches("sub").count(), 2, "{out}");
    }

    #[test]
    fn invariant_arith_leaves_running_loop_only() {
        let out = canon(
            r#"accel "a"
            func @f() {
              for %i = 0 to 4 step 1 {
                %c = const 7 : i64
                %m = mul %i, %c : i64
                %s = setup "a" (x = %m) : state<"a">
              }
              for %j = 0 to 0 step 1 {
                %d = const 9 : i64
                %s2 = setup "a" (x = %d) : state<"a">
              }
            }"#,
        );
        assert!(
            out.starts_with("accel \"a\"\n\nfunc @f() {\n  %0 = const 7 : i64\n"),
            "{out}"
        );
        assert!(
            out.contains("  for %4 = 0 to 0 step 1 {\n    %5 = const 9"),
            "{out}"
        );
    }

    #[test]
    fn idempotent() {
        let src = r#"func @f() {
              %a = const 5 : i32
              for %i = 0 to 4 step 1 {
                %b = const 5 : i32
                %c = add %a, %b : i32
                call @use(%c)
              }
            }"#;
        let once = canon(src);
        assert_eq!(canon(&once), once);
    }
}
