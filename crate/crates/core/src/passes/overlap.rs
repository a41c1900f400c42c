//! Moves the next setup of a concurrent accelerator above the await of the
//! previous launch, so configuration overlaps with the running job.

use std::collections::HashSet;

use crate::ir::{Block, OpKind, Program, ValueId, ValueType};

use super::util::{accel_of, affects};
use super::PassContext;

/// Finds `(await index, setup index, producer indices)` for one move.
fn candidate(
    values: &[ValueType],
    block: &Block,
    ctx: &PassContext,
) -> Option<(usize, usize, Vec<usize>)> {
    for (w, op) in block.ops.iter().enumerate() {
        let OpKind::Await { token } = &op.kind else {
            continue;
        };
        let Some(accel) = accel_of(values, *token) else {
            continue;
        };
        if !ctx.is_concurrent(accel) {
            continue;
        }
        let Some(state) = block.ops[..w].iter().rev().find_map(|o| match &o.kind {
            OpKind::Launch { state, .. } if o.results.first() == Some(token) => Some(*state),
            _ => None,
        }) else {
            continue;
        };
        'setups: for j in w + 1..block.ops.len() {
            let s = &block.ops[j];
            match &s.kind {
                OpKind::Setup { input, .. } if *input == Some(state) => {}
                _ => {
                    if affects(values, s, accel) {
                        break;
                    }
                    continue;
                }
            }
            // Producers of the setup's operands among the skipped ops.
            let mut needed: HashSet<ValueId> = s.operands().into_iter().collect();
            let mut producers = Vec::new();
            for p in (w + 1..j).rev() {
                let op = &block.ops[p];
                if !op.results.iter().any(|r| needed.contains(r)) {
                    continue;
                }
                if !op.is_pure() || !op.regions().is_empty() {
                    break 'setups;
                }
                needed.extend(op.operands());
                producers.push(p);
            }
            producers.reverse();
            return Some((w, j, producers));
        }
    }
    None
}

fn overlap_in(values: &[ValueType], block: &mut Block, ctx: &PassContext) -> bool {
    let mut changed = false;
    while let Some((w, j, producers)) = candidate(values, block, ctx) {
        let mut moved = Vec::new();
        for &p in producers.iter().chain(std::iter::once(&j)).rev() {
            moved.push(block.ops.remove(p));
        }
        moved.reverse();
        block.ops.splice(w..w, moved);
        changed = true;
    }
    for op in &mut block.ops {
        for r in op.regions_mut() {
            changed |= overlap_in(values, r, ctx);
        }
    }
    changed
}

/// Applies the move everywhere it is legal. Sequential accelerators are
/// left untouched.
pub fn overlap_block(program: &mut Program, ctx: &PassContext) {
    for func in &mut program.functions {
        if overlap_in(&func.values, &mut func.body, ctx) {
            *func = func.renumbered();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_program, print_program, verify};
    use crate::presets;

    const SRC: &str = r#"accel "a"
        func @f() {
          %x = const 1 : i32
          %s0 = setup "a" (k = %x) : state<"a">
          %t0 = launch %s0 ops = 64 : token<"a">
          await %t0
          %y = const 2 : i32
          %z = add %y, %x : i32
          %s1 = setup "a" (k = %z) from %s0 : state<"a">
          %t1 = launch %s1 ops = 64 : token<"a">
          await %t1
        }"#;

    fn run(desc: crate::accel::AcceleratorDescriptor) -> String {
        let mut p = parse_program(SRC).unwrap();
        let mut desc = desc;
        desc.name = "a".into();
        let ctx = PassContext::new(&[desc]);
        overlap_block(&mut p, &ctx);
        verify(&p).unwrap();
        print_program(&p)
    }

    #[test]
    fn concurrent_moves_setup_and_producers() {
        let out = run(presets::opengemm());
        let lines: Vec<&str> = out.lines().map(str::trim).collect();
        let await_at = lines
            .iter()
            .position(|l| l.starts_with("await %2"))
            .unwrap();
        let setup_at = lines.iter().position(|l| l.contains("from %1")).unwrap();
        assert!(setup_at < await_at, "{out}");
    }

    #[test]
    fn sequential_untouched() {
        let once = run(presets::gemmini());
        let plain = print_program(&parse_program(SRC).unwrap());
        assert_eq!(once, plain);
    }
}
