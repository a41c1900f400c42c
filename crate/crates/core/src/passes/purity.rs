use crate::ir::{Op, OpKind};

/// Whether `ops` only compute host values and write configuration: no
/// launches, awaits, control flow or effectful calls.
pub fn is_pure_sequence(ops: &[Op]) -> bool {
    ops.iter()
        .all(|op| op.is_pure() || matches!(op.kind, OpKind::Setup { .. }))
}
