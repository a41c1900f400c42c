//! Removes empty setups, merges chained setups and deletes dead host ops.

use std::collections::HashMap;

use crate::ir::{replace_uses, use_counts, Block, OpKind, Program, ValueId, ValueType};

use super::util::{affects, dce};

/// First zero-field setup that has an input, as (result, input).
fn find_empty(block: &Block) -> Option<(ValueId, ValueId)> {
    for op in &block.ops {
        if let OpKind::Setup {
            fields,
            input: Some(i),
            ..
        } = &op.kind
        {
            if fields.is_empty() {
                return Some((op.results[0], *i));
            }
        }
        for r in op.regions() {
            if let Some(x) = find_empty(r) {
                return Some(x);
            }
        }
    }
    None
}

fn remove_def(block: &mut Block, v: ValueId) -> bool {
    if let Some(i) = block.ops.iter().position(|o| o.results.contains(&v)) {
        block.ops.remove(i);
        return true;
    }
    block
        .ops
        .iter_mut()
        .any(|o| o.regions_mut().into_iter().any(|r| remove_def(r, v)))
}

/// Merges one setup into a later setup of the same block that consumes it.
fn merge_block(values: &[ValueType], block: &mut Block, uses: &HashMap<ValueId, usize>) -> bool {
    for j in 0..block.ops.len() {
        let OpKind::Setup {
            accel,
            input: Some(inp),
            ..
        } = &block.ops[j].kind
        else {
            continue;
        };
        let Some(i) = block.ops[..j]
            .iter()
            .position(|o| o.setup_accel().is_some() && o.results[0] == *inp)
        else {
            continue;
        };
        if uses.get(inp) != Some(&1) {
            continue;
        }
        if block.ops[i + 1..j]
            .iter()
            .any(|o| affects(values, o, accel))
        {
            continue;
        }
        let first = block.ops.remove(i);
        let OpKind::Setup {
            fields: f1,
            input: in1,
            ..
        } = first.kind
        else {
            unreachable!()
        };
        let OpKind::Setup { fields, input, .. } = &mut block.ops[j - 1].kind else {
            unreachable!()
        };
        let mut merged = f1;
        for (f, v) in fields.drain(..) {
            match merged.iter_mut().find(|(g, _)| *g == f) {
                Some(slot) => slot.1 = v,
                None => merged.push((f, v)),
            }
        }
        *fields = merged;
        *input = in1;
        return true;
    }
    block.ops.iter_mut().any(|o| {
        o.regions_mut()
            .into_iter()
            .any(|r| merge_block(values, r, uses))
    })
}

/// Runs the three cleanups to a fixpoint.
pub fn cleanup_setups(program: &mut Program) {
    for func in &mut program.functions {
        let body = &mut func.body;
        loop {
            if let Some((r, i)) = find_empty(body) {
                remove_def(body, r);
                replace_uses(body, r, i);
                continue;
            }
            let uses = use_counts(body);
            if merge_block(&func.values, body, &uses) {
                continue;
            }
            if dce(body) {
                continue;
            }
            break;
        }
        *func = func.renumbered();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_program, print_program, verify};

    fn clean(src: &str) -> String {
        let mut p = parse_program(src).unwrap();
        cleanup_setups(&mut p);
        verify(&p).unwrap();
        print_program(&p)
    }

    #[test]
    fn empty_linked_setup_removed() {
        let out = clean(
            r#"accel "a"
            func @f() {
              %x = const 1 : i32
              %s0 = setup "a" (k = %x) : state<"a">
              %s1 = setup "a" () from %s0 : state<"a">
              %t = launch %s1 ops = 1 : token<"a">
            }"#,
        );
        assert_eq!(out.matches("setup").count(), 1, "{out}");
        assert!(out.contains("launch %1"), "{out}");
    }

    #[test]
    fn unlinked_empty_setup_kept() {
        let out = clean(
            r#"accel "a"
            func @f() {
              %s1 = setup "a" () : state<"a">
              %t = launch %s1 ops = 1 : token<"a">
            }"#,
        );
        assert_eq!(out.matches("setup").count(), 1, "{out}");
    }

    #[test]
    fn chained_setups_merge_later_wins() {
        let out = clean(
            r#"accel "a"
            func @f() {
              %x = const 1 : i32
              %y = const 2 : i32
              %s0 = setup "a" (k = %x, m = %x) : state<"a">
              %s1 = setup "a" (k = %y, n = %y) from %s0 : state<"a">
              %t = launch %s1 ops = 1 : token<"a">
            }"#,
        );
        assert!(
            out.contains(r#"setup "a" (k = %1, m = %0, n = %1) : state<"a">"#),
            "{out}"
        );
    }

    #[test]
    fn launch_between_blocks_merge() {
        let src = r#"accel "a"
            func @f() {
              %x = const 1 : i32
              %s0 = setup "a" (k = %x) : state<"a">
              %t = launch %s0 ops = 1 : token<"a">
              %s1 = setup "a" (k = %x) from %s0 : state<"a">
            }"#;
        assert_eq!(clean(src).matches("setup").count(), 2);
    }

    #[test]
    fn dead_arith_removed() {
        let out = clean(
            r#"func @f() {
              %x = const 1 : i32
              %y = add %x, %x : i32
            }"#,
        );
        assert!(!out.contains("const"), "{out}");
    }

    #[test]
    fn idempotent() {
        let src = r#"accel "a"
            func @f() {
              %x = const 1 : i32
              %s0 = setup "a" (k = %x) : state<"a">
              %s1 = setup "a" (m = %x) from %s0 : state<"a">
              %s2 = setup "a" () from %s1 : state<"a">
            }"#;
        let once = clean(src);
        assert_eq!(clean(&once), once);
    }
}
