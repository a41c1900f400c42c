//! State tracing: links every setup to the state it is a delta against.
//!
//! Links are rebuilt from scratch. State-typed loop arguments and branch
//! results are stripped first and re-created only where the incoming state
//! is statically known on every path.

use std::collections::BTreeMap;

use crate::ir::{any_op, Block, Op, OpKind, Program, ValueId, ValueType};

use super::util::{accel_of, ensure_yield, new_value};

type Current = BTreeMap<String, Option<ValueId>>;

struct Tracer<'a> {
    values: &'a mut Vec<ValueType>,
    accels: &'a [String],
}

fn is_state(values: &[ValueType], v: ValueId) -> bool {
    matches!(values.get(v.index()), Some(ValueType::State(_)))
}

fn touches(block: &Block, accel: &str) -> bool {
    any_op(block, &|op| {
        op.clobbers_accelerators() || op.setup_accel() == Some(accel)
    })
}

/// Whether the state of `accel` is statically known at the end of `block`
/// given whether it was known on entry.
fn ends_known(values: &[ValueType], block: &Block, accel: &str, mut known: bool) -> bool {
    for op in &block.ops {
        match &op.kind {
            OpKind::Setup { accel: a, .. } if a == accel => known = true,
            OpKind::Launch { state, .. } if accel_of(values, *state) == Some(accel) => known = true,
            OpKind::ExternCall { .. } if op.clobbers_accelerators() => known = false,
            OpKind::If {
                then_block,
                else_block,
                ..
            } => {
                known = ends_known(values, then_block, accel, known)
                    && ends_known(values, else_block, accel, known);
            }
            OpKind::For { body, .. } => {
                if touches(body, accel) {
                    known = known && ends_known(values, body, accel, true);
                }
            }
            _ => {}
        }
    }
    known
}

fn strip_for(values: &[ValueType], op: &mut Op) {
    let OpKind::For { inits, body, .. } = &mut op.kind else {
        return;
    };
    let keep: Vec<bool> = body.args[1..]
        .iter()
        .map(|a| !is_state(values, *a))
        .collect();
    if keep.iter().all(|k| *k) {
        return;
    }
    let filter = |v: &mut Vec<ValueId>| {
        let mut i = 0;
        v.retain(|_| {
            i += 1;
            keep[i - 1]
        });
    };
    filter(inits);
    filter(&mut op.results);
    let iv = body.args[0];
    let mut rest = body.args[1..].to_vec();
    filter(&mut rest);
    body.args = std::iter::once(iv).chain(rest).collect();
    if let Some(ys) = body.yield_values_mut() {
        filter(ys);
    }
}

fn strip_if(values: &[ValueType], op: &mut Op) {
    let keep: Vec<bool> = op.results.iter().map(|r| !is_state(values, *r)).collect();
    if keep.iter().all(|k| *k) {
        return;
    }
    let filter = |v: &mut Vec<ValueId>| {
        let mut i = 0;
        v.retain(|_| {
            i += 1;
            keep[i - 1]
        });
    };
    filter(&mut op.results);
    if let OpKind::If {
        then_block,
        else_block,
        ..
    } = &mut op.kind
    {
        for b in [then_block, else_block] {
            if let Some(ys) = b.yield_values_mut() {
                filter(ys);
            }
        }
    }
}

impl Tracer<'_> {
    fn block(&mut self, block: &mut Block, cur: &mut Current) {
        let mut i = 0;
        while i < block.ops.len() {
            let op = &mut block.ops[i];
            let result = op.results.first().copied();
            let mut fresh = None;
            if op.clobbers_accelerators() {
                for v in cur.values_mut() {
                    *v = None;
                }
            }
            match &mut op.kind {
                OpKind::Setup { accel, input, .. } => {
                    *input = cur.get(accel.as_str()).copied().flatten();
                    cur.insert(accel.clone(), result);
                }
                OpKind::Launch { state, .. } => {
                    let accel = accel_of(self.values, *state)
                        .expect("launch operand is a state")
                        .to_string();
                    match cur.get(&accel).copied().flatten() {
                        Some(s) => *state = s,
                        None => {
                            let s = new_value(self.values, ValueType::State(accel.clone()));
                            *state = s;
                            cur.insert(accel.clone(), Some(s));
                            fresh = Some((s, accel));
                        }
                    }
                }
                OpKind::For { .. } => self.for_op(op, cur),
                OpKind::If { .. } => self.if_op(op, cur),
                _ => {}
            }
            if let Some((s, accel)) = fresh {
                // Registers are unknown here; an empty setup gives the launch
                // a live state without writing anything.
                let empty = OpKind::Setup {
                    accel,
                    fields: vec![],
                    input: None,
                };
                block.ops.insert(i, Op::new(vec![s], empty));
                i += 1;
            }
            i += 1;
        }
    }

    fn for_op(&mut self, op: &mut Op, cur: &mut Current) {
        strip_for(self.values, op);
        let OpKind::For { inits, body, .. } = &mut op.kind else {
            unreachable!()
        };
        ensure_yield(body);
        let mut entry = cur.clone();
        let mut threads = Vec::new();
        let mut lost = Vec::new();
        for a in self.accels {
            if !touches(body, a) {
                continue;
            }
            match cur.get(a).copied().flatten() {
                Some(init) if ends_known(self.values, body, a, true) => {
                    let arg = new_value(self.values, ValueType::State(a.clone()));
                    entry.insert(a.clone(), Some(arg));
                    threads.push((a.clone(), arg, init));
                }
                _ => {
                    entry.insert(a.clone(), None);
                    lost.push(a.clone());
                }
            }
        }
        self.block(body, &mut entry);
        for (a, arg, init) in threads {
            let end = entry[&a].expect("threaded state is known at the end of the body");
            inits.push(init);
            body.args.push(arg);
            body.yield_values_mut()
                .expect("body ends in yield")
                .push(end);
            let r = new_value(self.values, ValueType::State(a.clone()));
            op.results.push(r);
            cur.insert(a, Some(r));
        }
        for a in lost {
            cur.insert(a, None);
        }
    }

    fn if_op(&mut self, op: &mut Op, cur: &mut Current) {
        strip_if(self.values, op);
        let OpKind::If {
            then_block,
            else_block,
            ..
        } = &mut op.kind
        else {
            unreachable!()
        };
        ensure_yield(then_block);
        ensure_yield(else_block);
        let mut ct = cur.clone();
        self.block(then_block, &mut ct);
        let mut ce = cur.clone();
        self.block(else_block, &mut ce);
        for a in self.accels {
            let entry = cur.get(a).copied().flatten();
            let (t, e) = (ct.get(a).copied().flatten(), ce.get(a).copied().flatten());
            if t == entry && e == entry {
                continue;
            }
            match (t, e) {
                (Some(t), Some(e)) => {
                    then_block.yield_values_mut().expect("yield").push(t);
                    else_block.yield_values_mut().expect("yield").push(e);
                    let r = new_value(self.values, ValueType::State(a.clone()));
                    op.results.push(r);
                    cur.insert(a.clone(), Some(r));
                }
                _ => {
                    cur.insert(a.clone(), None);
                }
            }
        }
    }
}

/// Links each setup to the dominating state of its accelerator, threading
/// states through loops and branch joins. Setups after a clobbering call
/// stay unlinked.
pub fn trace_states(program: &mut Program) {
    let accels = program.accelerators.clone();
    for func in &mut program.functions {
        let mut body = std::mem::take(&mut func.body);
        let mut t = Tracer {
            values: &mut func.values,
            accels: &accels,
        };
        let mut cur: Current = accels.iter().map(|a| (a.clone(), None)).collect();
        t.block(&mut body, &mut cur);
        func.body = body;
        *func = func.renumbered();
    }
}
