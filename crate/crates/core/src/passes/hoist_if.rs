//! Sinks a setup that consumes a branch-join state into both branches, so
//! each path regains a linear setup chain.

use std::collections::HashMap;

use crate::ir::{
    collect_defs, replace_uses, use_counts, Block, Op, OpKind, Program, ValueId, ValueType,
};

use super::util::{affects, new_value};

/// Finds `(if index, setup index, result slot)` for one hoistable setup.
fn candidate(
    values: &[ValueType],
    block: &Block,
    uses: &HashMap<ValueId, usize>,
) -> Option<(usize, usize, usize)> {
    for (j, op) in block.ops.iter().enumerate() {
        let OpKind::Setup {
            accel,
            fields,
            input: Some(r),
        } = &op.kind
        else {
            continue;
        };
        if uses.get(r) != Some(&1) {
            continue;
        }
        let Some(i) = block.ops[..j]
            .iter()
            .position(|o| matches!(o.kind, OpKind::If { .. }) && o.results.contains(r))
        else {
            continue;
        };
        if block.ops[i + 1..j]
            .iter()
            .any(|o| affects(values, o, accel))
        {
            continue;
        }
        let mut later = Vec::new();
        for o in &block.ops[i..j] {
            later.extend(o.results.iter().copied());
            for region in o.regions() {
                collect_defs(region, &mut later);
            }
        }
        if fields.iter().any(|(_, v)| later.contains(v)) {
            continue;
        }
        let slot = block.ops[i].results.iter().position(|x| x == r)?;
        return Some((i, j, slot));
    }
    None
}

/// Performs one hoist somewhere in `block`; false when none applies.
fn hoist_block(
    values: &mut Vec<ValueType>,
    block: &mut Block,
    uses: &HashMap<ValueId, usize>,
) -> bool {
    if let Some((i, j, slot)) = candidate(values, block, uses) {
        let setup = block.ops.remove(j);
        let OpKind::Setup { accel, fields, .. } = &setup.kind else {
            unreachable!()
        };
        let joined = block.ops[i].results[slot];
        let OpKind::If {
            then_block,
            else_block,
            ..
        } = &mut block.ops[i].kind
        else {
            unreachable!()
        };
        for branch in [then_block, else_block] {
            let yv = branch.yield_values().expect("branch ends in yield")[slot];
            let r = new_value(values, ValueType::State(accel.clone()));
            let end = branch.body_end();
            branch.ops.insert(
                end,
                Op::new(
                    vec![r],
                    OpKind::Setup {
                        accel: accel.clone(),
                        fields: fields.clone(),
                        input: Some(yv),
                    },
                ),
            );
            branch.yield_values_mut().expect("yield")[slot] = r;
        }
        replace_uses(block, setup.results[0], joined);
        return true;
    }
    for op in &mut block.ops {
        for r in op.regions_mut() {
            if hoist_block(values, r, uses) {
                return true;
            }
        }
    }
    false
}

/// Clones each setup whose input is a branch-join state into the tail of
/// both branches and deletes the original.
pub fn hoist_into_branches(program: &mut Program) {
    for func in &mut program.functions {
        let mut body = std::mem::take(&mut func.body);
        loop {
            let uses = use_counts(&body);
            if !hoist_block(&mut func.values, &mut body, &uses) {
                break;
            }
        }
        func.body = body;
        *func = func.renumbered();
    }
}
