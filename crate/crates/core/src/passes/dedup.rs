//! Redundant configuration write elimination.
//!
//! A must-analysis over the state chain: for every state value, the set of
//! fields known to hold a particular SSA value. Equality is SSA identity.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::ir::{Block, Function, OpKind, Program, ValueId};

use super::trace::trace_states;

/// Field name to the SSA value it is known to hold. Absent means unknown.
pub type KnownFieldMap = BTreeMap<String, ValueId>;

fn intersect(a: &KnownFieldMap, b: &KnownFieldMap) -> KnownFieldMap {
    a.iter()
        .filter(|(f, v)| b.get(*f) == Some(*v))
        .map(|(f, v)| (f.clone(), *v))
        .collect()
}

/// Fields written as launch-semantic operands by launches consuming each
/// state. Those writes are not part of the state chain.
fn launch_writes(block: &Block, out: &mut HashMap<ValueId, HashSet<String>>) {
    for op in &block.ops {
        if let OpKind::Launch { state, fields, .. } = &op.kind {
            out.entry(*state)
                .or_default()
                .extend(fields.iter().map(|(f, _)| f.clone()));
        }
        for r in op.regions() {
            launch_writes(r, out);
        }
    }
}

struct Analysis {
    launch_writes: HashMap<ValueId, HashSet<String>>,
    known: HashMap<ValueId, KnownFieldMap>,
}

impl Analysis {
    fn get(&self, v: ValueId) -> KnownFieldMap {
        self.known.get(&v).cloned().unwrap_or_default()
    }

    fn set(&mut self, v: ValueId, mut m: KnownFieldMap) {
        if let Some(ws) = self.launch_writes.get(&v) {
            m.retain(|f, _| !ws.contains(f));
        }
        self.known.insert(v, m);
    }

    fn block(&mut self, block: &Block) {
        for op in &block.ops {
            match &op.kind {
                OpKind::Setup { fields, input, .. } => {
                    let mut m = input.map(|i| self.get(i)).unwrap_or_default();
                    for (f, v) in fields {
                        m.insert(f.clone(), *v);
                    }
                    self.set(op.results[0], m);
                }
                OpKind::For {
                    inits,
                    body,
                    lower,
                    upper,
                    step,
                    ..
                } => {
                    let state_slots: Vec<usize> = (0..inits.len())
                        .filter(|k| self.known.contains_key(&inits[*k]))
                        .collect();
                    for &k in &state_slots {
                        let m = self.get(inits[k]);
                        self.set(body.args[k + 1], m);
                    }
                    // Must-analysis fixpoint: maps only shrink.
                    loop {
                        self.block(body);
                        let ys = body.yield_values().unwrap_or(&[]);
                        let mut changed = false;
                        for &k in &state_slots {
                            let Some(y) = ys.get(k) else { continue };
                            let next = intersect(&self.get(inits[k]), &self.get(*y));
                            let arg = body.args[k + 1];
                            let before = self.get(arg);
                            self.set(arg, next);
                            if self.get(arg) != before {
                                changed = true;
                            }
                        }
                        if !changed {
                            break;
                        }
                    }
                    let runs = crate::ir::trip_count(*lower, *upper, *step) > 0;
                    let ys = body.yield_values().unwrap_or(&[]).to_vec();
                    for &k in &state_slots {
                        let m = match ys.get(k) {
                            Some(y) if runs => self.get(*y),
                            _ => self.get(inits[k]),
                        };
                        self.set(op.results[k], m);
                    }
                }
                OpKind::If {
                    then_block,
                    else_block,
                    ..
                } => {
                    self.block(then_block);
                    self.block(else_block);
                    let (ty, ey) = (
                        then_block.yield_values().unwrap_or(&[]).to_vec(),
                        else_block.yield_values().unwrap_or(&[]).to_vec(),
                    );
                    for (k, r) in op.results.iter().enumerate() {
                        let (Some(t), Some(e)) = (ty.get(k), ey.get(k)) else {
                            continue;
                        };
                        if self.known.contains_key(t) && self.known.contains_key(e) {
                            let m = intersect(&self.get(*t), &self.get(*e));
                            self.set(*r, m);
                        }
                    }
                }
                _ => {}
            }
        }
    }
}

/// Known-field maps of every state value in `func`.
pub fn known_field_maps(func: &Function) -> HashMap<ValueId, KnownFieldMap> {
    let mut lw = HashMap::new();
    launch_writes(&func.body, &mut lw);
    let mut a = Analysis {
        launch_writes: lw,
        known: HashMap::new(),
    };
    a.block(&func.body);
    a.known
}

fn rewrite(block: &mut Block, known: &HashMap<ValueId, KnownFieldMap>) {
    for op in &mut block.ops {
        if let OpKind::Setup {
            fields,
            input: Some(i),
            ..
        } = &mut op.kind
        {
            if let Some(m) = known.get(i) {
                fields.retain(|(f, v)| m.get(f) != Some(v));
            }
        }
        for r in op.regions_mut() {
            rewrite(r, known);
        }
    }
}

/// Removes field writes whose field already holds the identical SSA value.
/// Links are re-traced first so that stale input states never justify a
/// removal.
pub fn deduplicate_setup(program: &mut Program) {
    trace_states(program);
    for func in &mut program.functions {
        let known = known_field_maps(func);
        rewrite(&mut func.body, &known);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_program, print_program, verify};

    fn dedup(src: &str) -> String {
        let mut p = parse_program(src).unwrap();
        deduplicate_setup(&mut p);
        verify(&p).unwrap();
        print_program(&p)
    }

    #[test]
    fn identical_value_removed() {
        let out = dedup(
            r#"accel "a"
            func @f() {
              %c5 = const 5 : i32
              %x = const 7 : i32
              %s1 = setup "a" (a = %c5) : state<"a">
              %t = launch %s1 ops = 1 : token<"a">
              %s2 = setup "a" (a = %c5, b = %x) from %s1 : state<"a">
            }"#,
        );
        assert!(out.contains(r#"setup "a" (b = %1) from %2"#), "{out}");
    }

    #[test]
    fn distinct_consts_kept() {
        let out = dedup(
            r#"accel "a"
            func @f() {
              %c5 = const 5 : i32
              %d5 = const 5 : i32
              %s1 = setup "a" (a = %c5) : state<"a">
              %s2 = setup "a" (a = %d5) from %s1 : state<"a">
            }"#,
        );
        assert!(out.contains(r#"setup "a" (a = %1) from %2"#), "{out}");
    }

    #[test]
    fn branch_intersection() {
        let out = dedup(
            r#"accel "a"
            func @f() {
              %c = const 1 : i1
              %x = const 1 : i32
              %y = const 2 : i32
              %s0 = setup "a" (a = %x, b = %x) : state<"a">
              if %c {
                %s1 = setup "a" (b = %y) from %s0 : state<"a">
              } else {
              }
              %s2 = setup "a" (a = %x, b = %x) : state<"a">
            }"#,
        );
        assert!(out.contains(r#"setup "a" (b = %1) from"#), "{out}");
    }

    #[test]
    fn loop_back_edge_intersection() {
        let out = dedup(
            r#"accel "a"
            func @f() {
              %x = const 1 : i64
              %s0 = setup "a" (a = %x, b = %x) : state<"a">
              for %i = 0 to 4 step 1 {
                %s = setup "a" (a = %x, b = %i) : state<"a">
                %t = launch %s ops = 1 : token<"a">
                await %t
              }
            }"#,
        );
        assert!(out.contains(r#"setup "a" (b = %3) from %4"#), "{out}");
    }

    #[test]
    fn launch_field_invalidates() {
        let out = dedup(
            r#"accel "a"
            func @f() {
              %x = const 1 : i32
              %y = const 2 : i32
              %s0 = setup "a" (a = %x) : state<"a">
              %t = launch %s0 (a = %y) ops = 1 : token<"a">
              %s1 = setup "a" (a = %x) : state<"a">
            }"#,
        );
        assert!(out.contains(r#"setup "a" (a = %0) from %2"#), "{out}");
    }
}
