use std::collections::HashMap;

use crate::ir::{any_op, use_counts, Block, Op, OpKind, ValueId, ValueType};

pub(crate) fn accel_of<'v>(values: &'v [ValueType], v: ValueId) -> Option<&'v str> {
    values.get(v.index()).and_then(|t| t.accel())
}

/// Accelerator launched by `op`, if it is a launch.
pub(crate) fn launch_accel<'v>(values: &'v [ValueType], op: &Op) -> Option<&'v str> {
    match &op.kind {
        OpKind::Launch { state, .. } => accel_of(values, *state),
        _ => None,
    }
}

/// Whether `op` (or anything nested in it) writes or reads the registers
/// of `accel`, or clobbers all accelerators.
pub(crate) fn affects(values: &[ValueType], op: &Op, accel: &str) -> bool {
    let direct = |op: &Op| {
        op.clobbers_accelerators()
            || op.setup_accel() == Some(accel)
            || launch_accel(values, op) == Some(accel)
    };
    direct(op) || op.regions().into_iter().any(|r| any_op(r, &direct))
}

pub(crate) fn contains_clobber(block: &Block) -> bool {
    any_op(block, &|op| op.clobbers_accelerators())
}

pub(crate) fn ensure_yield(block: &mut Block) {
    if block.yield_values().is_none() {
        block
            .ops
            .push(Op::new(vec![], OpKind::Yield { values: vec![] }));
    }
}

pub(crate) fn new_value(values: &mut Vec<ValueType>, ty: ValueType) -> ValueId {
    let id = ValueId(values.len() as u32);
    values.push(ty);
    id
}

/// Deletes unused const and arith ops. Returns whether anything changed.
pub(crate) fn dce(block: &mut Block) -> bool {
    let uses = use_counts(block);
    fn sweep(block: &mut Block, uses: &HashMap<ValueId, usize>) -> bool {
        let before = block.ops.len();
        block.ops.retain(|o| {
            !(matches!(o.kind, OpKind::Const { .. } | OpKind::Arith { .. })
                && !uses.contains_key(&o.results[0]))
        });
        let mut changed = block.ops.len() != before;
        for o in &mut block.ops {
            for r in o.regions_mut() {
                changed |= sweep(r, uses);
            }
        }
        changed
    }
    sweep(block, &uses)
}
