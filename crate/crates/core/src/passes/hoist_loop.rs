//! Per-field loop-invariant setup motion.

use std::collections::HashSet;

use crate::ir::{walk_ops, Block, Op, OpKind, Program, ValueId, ValueType};

use super::trace::trace_states;
use super::util::{contains_clobber, launch_accel, new_value};

/// Every field of `accel` written anywhere in `block` (setups and
/// launch-semantic operands), counted with multiplicity.
fn field_writes(values: &[ValueType], block: &Block, accel: &str) -> Vec<String> {
    let mut out = Vec::new();
    walk_ops(block, &mut |op| match &op.kind {
        OpKind::Setup {
            accel: a, fields, ..
        } if a == accel => {
            out.extend(fields.iter().map(|(f, _)| f.clone()));
        }
        OpKind::Launch { fields, .. } if launch_accel(values, op) == Some(accel) => {
            out.extend(fields.iter().map(|(f, _)| f.clone()));
        }
        _ => {}
    });
    out
}

/// Hoists invariant fields out of the loop at `block.ops[at]` into a setup
/// placed immediately before it. Returns whether anything moved.
fn hoist_loop(values: &mut Vec<ValueType>, block: &mut Block, at: usize) -> bool {
    let op = &block.ops[at];
    let OpKind::For { body, .. } = &op.kind else {
        return false;
    };
    if op.trip_count() == Some(0) || contains_clobber(body) {
        return false;
    }
    let inside: HashSet<ValueId> = crate::ir::defs_within(op);
    // (setup index in body, accel, fields to hoist)
    let mut moves: Vec<(usize, String, Vec<(String, ValueId)>)> = Vec::new();
    let mut blocked: HashSet<String> = HashSet::new();
    for (j, inner) in body.ops.iter().enumerate() {
        if let Some(a) = launch_accel(values, inner) {
            blocked.insert(a.to_string());
        }
        if !matches!(inner.kind, OpKind::Setup { .. }) {
            // Launches nested in regions count as preceding later setups.
            walk_ops(&Block::new(vec![], vec![inner.clone()]), &mut |o| {
                if let Some(a) = launch_accel(values, o) {
                    blocked.insert(a.to_string());
                }
            });
            continue;
        }
        let OpKind::Setup { accel, fields, .. } = &inner.kind else {
            unreachable!()
        };
        if blocked.contains(accel) {
            continue;
        }
        let writes = field_writes(values, body, accel);
        let hoist: Vec<(String, ValueId)> = fields
            .iter()
            .filter(|(f, v)| !inside.contains(v) && writes.iter().filter(|w| *w == f).count() == 1)
            .cloned()
            .collect();
        if !hoist.is_empty() {
            moves.push((j, accel.clone(), hoist));
        }
    }
    if moves.is_empty() {
        return false;
    }
    let OpKind::For { body, .. } = &mut block.ops[at].kind else {
        unreachable!()
    };
    for (j, _, hoist) in &moves {
        if let OpKind::Setup { fields, .. } = &mut body.ops[*j].kind {
            fields.retain(|f| !hoist.contains(f));
        }
    }
    let mut at = at;
    for (_, accel, hoist) in moves {
        let prev = at.checked_sub(1).map(|p| &mut block.ops[p].kind);
        match prev {
            Some(OpKind::Setup {
                accel: a, fields, ..
            }) if *a == accel => {
                for (f, v) in hoist {
                    match fields.iter_mut().find(|(g, _)| *g == f) {
                        Some(slot) => slot.1 = v,
                        None => fields.push((f, v)),
                    }
                }
            }
            _ => {
                let r = new_value(values, ValueType::State(accel.clone()));
                block.ops.insert(
                    at,
                    Op::new(
                        vec![r],
                        OpKind::Setup {
                            accel,
                            fields: hoist,
                            input: None,
                        },
                    ),
                );
                at += 1;
            }
        }
    }
    true
}

fn hoist_block(values: &mut Vec<ValueType>, block: &mut Block) -> bool {
    let mut changed = false;
    let mut i = 0;
    while i < block.ops.len() {
        for r in block.ops[i].regions_mut() {
            changed |= hoist_block(values, r);
        }
        if matches!(block.ops[i].kind, OpKind::For { .. }) {
            let before = block.ops.len();
            if hoist_loop(values, block, i) {
                changed = true;
                i += block.ops.len() - before;
            }
        }
        i += 1;
    }
    changed
}

/// Moves setup fields whose value is defined outside a loop, and which no
/// other write in the loop touches, to a setup right before the loop.
pub fn hoist_loop_invariant_setup(program: &mut Program) {
    for func in &mut program.functions {
        let mut body = std::mem::take(&mut func.body);
        while hoist_block(&mut func.values, &mut body) {}
        func.body = body;
    }
    trace_states(program);
}
