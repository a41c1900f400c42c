//! Software pipelining of loops that configure and launch a concurrent
//! accelerator: the setup for iteration i+1 is issued while job i runs.
//!
//! A loop qualifies when its body is
//!
//! ```text
//! prefix   pure ops and a chain of setups of A (first input: the carried state)
//! middle   anything, typically an inner loop that consumes the prefix state
//! launch   of the state the body yields
//! await    of that launch
//! ```
//!
//! The first prefix is peeled in front of the loop and the last middle,
//! launch and await behind it. The loop runs one iteration fewer, so no
//! setup executes that the original did not. Prefix values read after the
//! prefix are carried to the next iteration.

use std::collections::{HashMap, HashSet};

use crate::ir::{
    clone_ops_fresh, defs_within, replace_uses, replace_uses_map, use_counts, walk_ops, ArithOp,
    Block, Function, Op, OpKind, Program, ValueId, ValueType,
};

use super::util::{launch_accel, new_value};
use super::PassContext;

/// Index path from the function body to a block: (op index, region index)
/// per level.
type Path = Vec<(usize, usize)>;

fn block_at<'a>(body: &'a Block, path: &[(usize, usize)]) -> &'a Block {
    path.iter().fold(body, |b, (o, r)| b.ops[*o].regions()[*r])
}

fn block_at_mut<'a>(body: &'a mut Block, path: &[(usize, usize)]) -> &'a mut Block {
    let mut b = body;
    for (o, r) in path {
        b = b.ops[*o].regions_mut().into_iter().nth(*r).expect("region");
    }
    b
}

/// A loop matching the pipelining shape.
struct Shape {
    accel: String,
    /// Iteration-carried slot of the state, `None` when it has to be added.
    slot: Option<usize>,
    prefix_len: usize,
    first_setup: usize,
    last_setup: usize,
    /// Pure prefix values read by the rest of the body.
    carried: Vec<ValueId>,
}

fn shape(values: &[ValueType], op: &Op, ctx: &PassContext) -> Option<Shape> {
    let OpKind::For { body, .. } = &op.kind else {
        return None;
    };
    if op.trip_count()? < 2 {
        return None;
    }
    let n = body.ops.len();
    let yields = body.yield_values()?;
    if n < 3 {
        return None;
    }
    let (launch, wait) = (&body.ops[n - 3], &body.ops[n - 2]);
    let OpKind::Launch { state: lstate, .. } = &launch.kind else {
        return None;
    };
    if !matches!(&wait.kind, OpKind::Await { token } if Some(token) == launch.results.first()) {
        return None;
    }
    let accel = launch_accel(values, launch)?.to_string();
    if !ctx.is_concurrent(&accel) {
        return None;
    }
    let prefix_len = body.ops[..n - 3]
        .iter()
        .position(|o| {
            let pure = o.is_pure() && o.regions().is_empty();
            !(pure || o.setup_accel() == Some(accel.as_str()))
        })
        .unwrap_or(n - 3);
    let prefix = &body.ops[..prefix_len];
    let setups: Vec<usize> = (0..prefix_len)
        .filter(|i| prefix[*i].setup_accel().is_some())
        .collect();
    let (&first_setup, &last_setup) = (setups.first()?, setups.last()?);
    for w in setups.windows(2) {
        let OpKind::Setup { input, .. } = &prefix[w[1]].kind else {
            unreachable!()
        };
        if *input != Some(prefix[w[0]].results[0]) {
            return None;
        }
    }
    let OpKind::Setup { input, .. } = &prefix[first_setup].kind else {
        unreachable!()
    };
    let slot = match input {
        Some(arg) => Some(body.args[1..].iter().position(|a| a == arg)?),
        None => None,
    };
    let arg_s = slot.map(|k| body.args[k + 1]);
    // The body yields the launched state; other carried values pass through.
    for (j, y) in yields.iter().enumerate() {
        let ok = if Some(j) == slot {
            y == lstate
        } else {
            *y == body.args[j + 1]
        };
        if !ok {
            return None;
        }
    }
    // The prefix reads only the iv, outside values, its own values and the
    // carried state.
    let inside = defs_within(op);
    let mut allowed: HashSet<ValueId> = HashSet::from([body.args[0]]);
    allowed.extend(arg_s);
    for o in prefix {
        if o.operands()
            .iter()
            .any(|v| inside.contains(v) && !allowed.contains(v))
        {
            return None;
        }
        allowed.extend(o.results.iter().copied());
    }
    // The rest may read the final prefix state and pure prefix values, but
    // not the consumed carried state or intermediate chain states.
    let s_end = prefix[last_setup].results[0];
    let chain: HashSet<ValueId> = setups.iter().map(|i| prefix[*i].results[0]).collect();
    let pure_defs: HashSet<ValueId> = prefix
        .iter()
        .filter(|o| o.setup_accel().is_none())
        .flat_map(|o| o.results.iter().copied())
        .collect();
    let rest = Block::new(vec![], body.ops[prefix_len..n - 1].to_vec());
    let mut rest_uses = Vec::new();
    walk_ops(&rest, &mut |x| rest_uses.extend(x.operands()));
    let mut carried = Vec::new();
    for v in rest_uses {
        if Some(v) == arg_s || (chain.contains(&v) && v != s_end) {
            return None;
        }
        if pure_defs.contains(&v) && !carried.contains(&v) {
            carried.push(v);
        }
    }
    Some(Shape {
        accel,
        slot,
        prefix_len,
        first_setup,
        last_setup,
        carried,
    })
}

/// First eligible loop, innermost first. A rotated body starts with its
/// middle part or its launch, so it never matches again.
fn find(
    func: &Function,
    block: &Block,
    path: &mut Path,
    ctx: &PassContext,
) -> Option<(Path, usize)> {
    for (i, op) in block.ops.iter().enumerate() {
        for (r, region) in op.regions().into_iter().enumerate() {
            path.push((i, r));
            let hit = find(func, region, path, ctx);
            path.pop();
            if hit.is_some() {
                return hit;
            }
        }
        if shape(&func.values, op, ctx).is_some() {
            return Some((path.clone(), i));
        }
    }
    None
}

fn set_input(ops: &mut [Op], at: usize, v: Option<ValueId>) {
    if let OpKind::Setup { input, .. } = &mut ops[at].kind {
        *input = v;
    }
}

fn rotate(func: &mut Function, path: &[(usize, usize)], at: usize, sh: Shape) {
    let values = &mut func.values;
    let block = block_at_mut(&mut func.body, path);
    let mut op = block.ops.remove(at);
    let trips = op.trip_count().expect("for") as i64;
    let old_results = op.results.clone();
    let OpKind::For {
        lower: lower_mut,
        upper,
        step,
        inits,
        body,
    } = &mut op.kind
    else {
        unreachable!()
    };
    let (lower, step) = (*lower_mut, *step);
    let last_iv = lower + (trips - 1) * step;
    let iv = body.args[0];
    let state_ty = ValueType::State(sh.accel.clone());
    let n = body.ops.len();
    let OpKind::Launch {
        state: launched, ..
    } = body.ops[n - 3].kind
    else {
        unreachable!()
    };

    // Slot k carries the state at the end of the prefix from now on.
    let (k, init) = match sh.slot {
        Some(k) => (k, Some(inits[k])),
        None => {
            body.args.push(new_value(values, state_ty.clone()));
            body.yield_values_mut().expect("yield").push(launched);
            // Placeholder, set from the prologue below.
            inits.push(iv);
            op.results.push(new_value(values, state_ty.clone()));
            (inits.len() - 1, None)
        }
    };
    let arg_s = body.args[k + 1];
    let prefix: Vec<Op> = body.ops.drain(..sh.prefix_len).collect();
    let s_end = prefix[sh.last_setup].results[0];

    // Prologue: the first iteration's prefix.
    let c_lower = new_value(values, ValueType::INDEX);
    let c_step = new_value(values, ValueType::INDEX);
    let reads_iv = |ops: &[Op]| use_counts(&Block::new(vec![], ops.to_vec())).contains_key(&iv);
    let mut pre = Vec::new();
    if reads_iv(&prefix) {
        pre.push(Op::new(
            vec![c_lower],
            OpKind::Const {
                value: lower as u64,
            },
        ));
    }
    let mut subst = HashMap::from([(iv, c_lower)]);
    let mut pro = clone_ops_fresh(values, &prefix, &mut subst);
    set_input(&mut pro, sh.first_setup, init);
    inits[k] = subst[&s_end];
    inits.extend(sh.carried.iter().map(|v| subst[v]));
    pre.extend(pro);

    let fresh_like = |values: &mut Vec<ValueType>| -> Vec<ValueId> {
        sh.carried
            .iter()
            .map(|v| {
                let ty = values[v.index()].clone();
                new_value(values, ty)
            })
            .collect()
    };
    let carried_args = fresh_like(values);
    let carried_results = fresh_like(values);

    // Body: middle and launch, then the next prefix, then the await. The
    // loop now counts the next iteration, so the prefix reads the iv as is
    // and the middle sees it one step back.
    let epilogue_src: Vec<Op> = body.ops[..body.ops.len() - 1].to_vec();
    let mut rest_map: HashMap<ValueId, ValueId> = sh
        .carried
        .iter()
        .copied()
        .zip(carried_args.iter().copied())
        .chain([(s_end, arg_s)])
        .collect();
    let mut head = Vec::new();
    if use_counts(body).contains_key(&iv) {
        pre.push(Op::new(vec![c_step], OpKind::Const { value: step as u64 }));
        let prev = new_value(values, ValueType::INDEX);
        head.push(Op::new(
            vec![prev],
            OpKind::Arith {
                op: ArithOp::Sub,
                lhs: iv,
                rhs: c_step,
            },
        ));
        rest_map.insert(iv, prev);
    }
    replace_uses_map(body, &rest_map);
    body.ops.splice(0..0, head);
    let launched_now = *rest_map.get(&launched).unwrap_or(&launched);
    let mut subst = HashMap::new();
    let mut nxt = clone_ops_fresh(values, &prefix, &mut subst);
    set_input(&mut nxt, sh.first_setup, Some(launched_now));
    let wait_at = body.ops.len() - 2;
    body.ops.splice(wait_at..wait_at, nxt);
    let ys = body.yield_values_mut().expect("yield");
    ys[k] = subst[&s_end];
    ys.extend(sh.carried.iter().map(|v| subst[v]));
    body.args.extend(carried_args);
    let s_out = new_value(values, state_ty);
    op.results[k] = s_out;
    op.results.extend(carried_results.iter().copied());
    *lower_mut = lower + step;
    *upper = lower + trips * step;

    // Epilogue: the last middle, launch and await.
    let c_last = new_value(values, ValueType::INDEX);
    let mut post = Vec::new();
    if reads_iv(&epilogue_src) {
        post.push(Op::new(
            vec![c_last],
            OpKind::Const {
                value: last_iv as u64,
            },
        ));
    }
    let mut subst: HashMap<ValueId, ValueId> = sh
        .carried
        .iter()
        .copied()
        .zip(carried_results)
        .chain([(s_end, s_out), (iv, c_last)])
        .collect();
    post.extend(clone_ops_fresh(values, &epilogue_src, &mut subst));
    let launched_last = *subst.get(&launched).unwrap_or(&launched);

    block.ops.insert(at, op);
    let np = pre.len();
    block.ops.splice(at..at, pre);
    let after = at + np + 1;
    block.ops.splice(after..after, post);
    // Later users of the loop's state now see the epilogue's launch state.
    if let Some(old) = old_results.get(k) {
        replace_uses(block, *old, launched_last);
    }
}

/// Rotates every eligible loop, innermost first.
pub fn pipeline_loops(program: &mut Program, ctx: &PassContext) {
    for func in &mut program.functions {
        let mut changed = false;
        while let Some((path, at)) = find(func, &func.body, &mut Vec::new(), ctx) {
            let op = &block_at(&func.body, &path).ops[at];
            let sh = shape(&func.values, op, ctx).expect("shape matched");
            rotate(func, &path, at, sh);
            changed = true;
        }
        if changed {
            *func = func.renumbered();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_program, print_program, verify};
    use crate::presets;
    use crate::sim::{simulate, trace_equivalent};

    const LOOP: &str = r#"accel "opengemm"
        func @f() {
          %b = const 4096 : i64
          %s0 = setup "opengemm" (bound_k = %b) : state<"opengemm">
          for %i = 0 to 64 step 8 {
            %a = add %b, %i : i64
            %s = setup "opengemm" (addr_a = %a) : state<"opengemm">
            %t = launch %s ops = 65536 : token<"opengemm">
            await %t
          }
        }"#;

    fn piped(src: &str, d: &crate::accel::AcceleratorDescriptor) -> (Program, Program) {
        let mut p = parse_program(src).unwrap();
        crate::passes::trace_states(&mut p);
        let before = p.clone();
        pipeline_loops(&mut p, &PassContext::new(std::slice::from_ref(d)));
        verify(&p).unwrap_or_else(|e| panic!("{e:?}\n{}", print_program(&p)));
        (before, p)
    }

    #[test]
    fn rotated_loop_keeps_trace_and_saves_cycles() {
        let d = presets::opengemm();
        let (before, after) = piped(LOOP, &d);
        let out = print_program(&after);
        assert!(out.contains("= 8 to 64 step 8"), "{out}");
        let (a, b) = (
            simulate(&before, &[d.clone()]).unwrap(),
            simulate(&after, &[d]).unwrap(),
        );
        assert!(trace_equivalent(&a, &b));
        assert_eq!(a.config_bytes_written, b.config_bytes_written);
        assert!(
            b.total_cycles < a.total_cycles,
            "{} vs {}",
            b.total_cycles,
            a.total_cycles
        );
    }

    #[test]
    fn sequential_loop_untouched() {
        let mut d = presets::opengemm();
        d.scheme = crate::accel::Scheme::Sequential;
        let (before, after) = piped(LOOP, &d);
        assert_eq!(print_program(&before), print_program(&after));
    }

    #[test]
    fn nested_loops_both_rotate() {
        let d = presets::opengemm();
        let src = r#"accel "opengemm"
            func @f() {
              for %i = 0 to 4 step 1 {
                %s = setup "opengemm" (addr_a = %i) : state<"opengemm">
                for %j = 0 to 4 step 1 {
                  %x = add %i, %j : i64
                  %s2 = setup "opengemm" (addr_b = %x) : state<"opengemm">
                  %t = launch %s2 ops = 4096 : token<"opengemm">
                  await %t
                }
              }
            }"#;
        let (before, after) = piped(src, &d);
        let (a, b) = (
            simulate(&before, &[d.clone()]).unwrap(),
            simulate(&after, &[d]).unwrap(),
        );
        assert!(trace_equivalent(&a, &b));
        assert!(b.total_cycles < a.total_cycles);
    }

    #[test]
    fn single_trip_untouched() {
        let d = presets::opengemm();
        let src = LOOP.replace("0 to 64 step 8", "0 to 8 step 8");
        let (before, after) = piped(&src, &d);
        assert_eq!(print_program(&before), print_program(&after));
    }
}
