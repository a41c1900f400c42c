//! Seeded generator of verifying programs and matching descriptors, used by
//! the property suites and `accfg random`.
//!
//! Generated programs follow the discipline real drivers follow: a launch
//! always uses the newest setup of its own block, and any clobbering call or
//! nested region that touches an accelerator forces a fresh setup before the
//! next launch. Awaits sit in the block of their launch.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::accel::{AcceleratorDescriptor, CostModel, FieldSpec, Scheme};
use crate::ir::{
    walk_ops, ArithOp, Block, Effects, Function, Op, OpKind, Program, ValueId, ValueType, Workload,
};

#[derive(Clone, Debug)]
pub struct GenConfig {
    /// Inclusive range of declared accelerators.
    pub accelerators: (usize, usize),
    /// Top-level op budget; nested blocks get a share of it.
    pub max_ops: usize,
    pub max_depth: usize,
    /// Forces every accelerator onto one scheme.
    pub scheme: Option<Scheme>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            accelerators: (1, 2),
            max_ops: 14,
            max_depth: 2,
            scheme: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RandomCase {
    pub seed: u64,
    pub program: Program,
    pub descriptors: Vec<AcceleratorDescriptor>,
}

pub fn random_case(seed: u64) -> RandomCase {
    random_case_with(seed, &GenConfig::default())
}

pub fn random_case_with(seed: u64, config: &GenConfig) -> RandomCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(config.accelerators.0..=config.accelerators.1.max(config.accelerators.0));
    let descriptors: Vec<AcceleratorDescriptor> = (0..n)
        .map(|i| {
            let scheme = config.scheme.unwrap_or_else(|| {
                if rng.gen_bool(0.5) {
                    Scheme::Concurrent
                } else {
                    Scheme::Sequential
                }
            });
            random_descriptor(&mut rng, &format!("acc{i}"), scheme)
        })
        .collect();
    let program = random_program(&mut rng, &descriptors, config);
    RandomCase {
        seed,
        program,
        descriptors,
    }
}

/// A valid descriptor with 2 to 8 fields. Await polling costs at most one
/// cycle.
pub fn random_descriptor(rng: &mut impl Rng, name: &str, scheme: Scheme) -> AcceleratorDescriptor {
    let nfields = rng.gen_range(2..=8);
    let fields = (0..nfields)
        .map(|k| FieldSpec {
            name: format!("f{k}"),
            bytes: *[1u8, 2, 4, 4, 8, 8].choose(rng).unwrap(),
        })
        .collect();
    let peak_perf = if rng.gen_bool(0.8) {
        rng.gen_range(1..=2048) as f64
    } else {
        rng.gen_range(0.5..512.0)
    };
    AcceleratorDescriptor {
        name: name.to_string(),
        scheme,
        peak_perf,
        mem_bandwidth: rng.gen_bool(0.5).then(|| rng.gen_range(1.0..64.0)),
        fields,
        cost: CostModel {
            write_cost: rng.gen_range(1..=10),
            write_group: rng.gen_range(1..=3),
            arith_cost: rng.gen_range(0..=3),
            launch_cost: rng.gen_range(0..=3),
            await_poll_cost: rng.gen_range(0..=1),
        },
    }
}

struct Gen<'a, R: Rng> {
    rng: &'a mut R,
    descs: &'a [AcceleratorDescriptor],
    func: Function,
    max_depth: usize,
}

/// Per-block generation state. `ints` includes values inherited from
/// enclosing blocks; `fresh` and `pending` are local.
#[derive(Clone, Default)]
struct Env {
    ints: Vec<(ValueId, u8)>,
    fresh: HashMap<usize, ValueId>,
    pending: Vec<ValueId>,
}

impl<R: Rng> Gen<'_, R> {
    fn value(&mut self, ty: ValueType) -> ValueId {
        self.func.new_value(ty)
    }

    fn konst(&mut self, ops: &mut Vec<Op>, env: &mut Env, width: u8, value: u64) -> ValueId {
        let r = self.value(ValueType::Int(width));
        ops.push(Op::new(vec![r], OpKind::Const { value }));
        env.ints.push((r, width));
        r
    }

    fn some_int(&mut self, ops: &mut Vec<Op>, env: &mut Env) -> ValueId {
        if env.ints.is_empty() || self.rng.gen_bool(0.2) {
            let v = self.rng.gen_range(0..4096);
            return self.konst(ops, env, 64, v);
        }
        env.ints.choose(self.rng).unwrap().0
    }

    fn arith(&mut self, ops: &mut Vec<Op>, env: &mut Env) {
        let Some(&(lhs, w)) = env.ints.choose(self.rng) else {
            let v = self.rng.gen_range(0..64);
            self.konst(ops, env, 64, v);
            return;
        };
        let same: Vec<ValueId> = env
            .ints
            .iter()
            .filter(|(_, x)| *x == w)
            .map(|(v, _)| *v)
            .collect();
        let rhs = *same.choose(self.rng).unwrap();
        let op = *ArithOp::ALL.choose(self.rng).unwrap();
        let r = self.value(ValueType::Int(w));
        ops.push(Op::new(vec![r], OpKind::Arith { op, lhs, rhs }));
        env.ints.push((r, w));
    }

    fn fields(
        &mut self,
        ops: &mut Vec<Op>,
        env: &mut Env,
        unit: usize,
        max: usize,
    ) -> Vec<(String, ValueId)> {
        let names: Vec<String> = self.descs[unit]
            .fields
            .iter()
            .map(|f| f.name.clone())
            .collect();
        let n = self.rng.gen_range(0..=max.min(names.len()));
        let chosen: Vec<String> = names.choose_multiple(self.rng, n).cloned().collect();
        chosen
            .into_iter()
            .map(|f| {
                let v = self.some_int(ops, env);
                (f, v)
            })
            .collect()
    }

    fn setup(&mut self, ops: &mut Vec<Op>, env: &mut Env, unit: usize) {
        let accel = self.descs[unit].name.clone();
        let nf = self.descs[unit].fields.len();
        let mut fields = self.fields(ops, env, unit, nf);
        let input = match env.fresh.get(&unit) {
            Some(s) if self.rng.gen_bool(0.3) => Some(*s),
            _ => None,
        };
        if input.is_none() && fields.is_empty() {
            let v = self.some_int(ops, env);
            fields.push((self.descs[unit].fields[0].name.clone(), v));
        }
        let r = self.value(ValueType::State(accel.clone()));
        ops.push(Op::new(
            vec![r],
            OpKind::Setup {
                accel,
                fields,
                input,
            },
        ));
        env.fresh.insert(unit, r);
    }

    fn launch(&mut self, ops: &mut Vec<Op>, env: &mut Env, unit: usize) {
        if !env.fresh.contains_key(&unit) {
            self.setup(ops, env, unit);
        }
        let state = env.fresh[&unit];
        let fields = if self.rng.gen_bool(0.2) {
            self.fields(ops, env, unit, 2)
        } else {
            Vec::new()
        };
        let work = if self.rng.gen_bool(0.8) {
            Workload::Const(self.rng.gen_range(0..=20_000))
        } else {
            let v = self.rng.gen_range(1..=20_000);
            Workload::Value(self.konst(ops, env, 64, v))
        };
        let t = self.value(ValueType::Token(self.descs[unit].name.clone()));
        if !fields.is_empty() {
            env.fresh.remove(&unit);
        }
        ops.push(Op::new(
            vec![t],
            OpKind::Launch {
                state,
                fields,
                ops: work,
            },
        ));
        env.pending.push(t);
    }

    fn await_one(&mut self, ops: &mut Vec<Op>, env: &mut Env) {
        if env.pending.is_empty() {
            return;
        }
        let k = self.rng.gen_range(0..env.pending.len());
        let token = env.pending.remove(k);
        ops.push(Op::new(vec![], OpKind::Await { token }));
    }

    fn call(&mut self, ops: &mut Vec<Op>, env: &mut Env) {
        let nargs = self.rng.gen_range(0..=2);
        let args: Vec<ValueId> = (0..nargs).map(|_| self.some_int(ops, env)).collect();
        let effects = match self.rng.gen_range(0..3) {
            0 => None,
            1 => Some(Effects::All),
            _ => Some(Effects::None),
        };
        let results = if self.rng.gen_bool(0.5) {
            let r = self.value(ValueType::Int(64));
            env.ints.push((r, 64));
            vec![r]
        } else {
            vec![]
        };
        if effects != Some(Effects::None) {
            env.fresh.clear();
        }
        let callee = ["ext", "log", "dma"].choose(self.rng).unwrap().to_string();
        ops.push(Op::new(
            results,
            OpKind::ExternCall {
                callee,
                args,
                effects,
            },
        ));
    }

    fn cond(&mut self, ops: &mut Vec<Op>, env: &mut Env) -> ValueId {
        let arg = self.some_int(ops, env);
        let c = self.value(ValueType::Int(1));
        ops.push(Op::new(
            vec![c],
            OpKind::ExternCall {
                callee: "cond".into(),
                args: vec![arg],
                effects: Some(Effects::None),
            },
        ));
        c
    }

    /// Forgets fresh states of every accelerator a nested region touches.
    fn invalidate(&self, env: &mut Env, regions: &[&Block]) {
        for b in regions {
            walk_ops(b, &mut |op| match &op.kind {
                OpKind::Setup { accel, .. } => {
                    if let Some(u) = self.descs.iter().position(|d| d.name == *accel) {
                        env.fresh.remove(&u);
                    }
                }
                OpKind::Launch { state, .. } => {
                    if let Some(a) = self.func.accel_of(*state) {
                        if let Some(u) = self.descs.iter().position(|d| d.name == a) {
                            env.fresh.remove(&u);
                        }
                    }
                }
                _ if op.clobbers_accelerators() => env.fresh.clear(),
                _ => {}
            });
        }
    }

    fn nested(
        &mut self,
        env: &Env,
        budget: usize,
        depth: usize,
        extra: &[(ValueId, u8)],
    ) -> Vec<Op> {
        let mut inner = Env {
            ints: env.ints.clone(),
            ..Env::default()
        };
        inner.ints.extend_from_slice(extra);
        let mut ops = self.block(&mut inner, budget, depth);
        ops.push(Op::new(vec![], OpKind::Yield { values: vec![] }));
        ops
    }

    fn for_loop(&mut self, ops: &mut Vec<Op>, env: &mut Env, budget: usize, depth: usize) {
        let iv = self.value(ValueType::INDEX);
        let lower = self.rng.gen_range(0..4i64);
        let step = self.rng.gen_range(1..=3i64);
        let trips = if self.rng.gen_bool(0.15) {
            0
        } else {
            self.rng.gen_range(1..=5)
        };
        let upper = lower + trips * step - self.rng.gen_range(0..step);
        let body = self.nested(env, budget, depth + 1, &[(iv, 64)]);
        let block = Block::new(vec![iv], body);
        self.invalidate(env, &[&block]);
        ops.push(Op::new(
            vec![],
            OpKind::For {
                lower,
                upper,
                step,
                inits: vec![],
                body: block,
            },
        ));
    }

    fn if_op(&mut self, ops: &mut Vec<Op>, env: &mut Env, budget: usize, depth: usize) {
        let cond = self.cond(ops, env);
        let then_block = Block::new(vec![], self.nested(env, budget, depth + 1, &[]));
        let else_block = Block::new(vec![], self.nested(env, budget / 2, depth + 1, &[]));
        self.invalidate(env, &[&then_block, &else_block]);
        ops.push(Op::new(
            vec![],
            OpKind::If {
                cond,
                then_block,
                else_block,
            },
        ));
    }

    /// A loop shaped for software pipelining: pure index arithmetic, a
    /// setup, optional host work, then launch and await.
    fn pipeline_template(&mut self, ops: &mut Vec<Op>, env: &mut Env) {
        let unit = self.rng.gen_range(0..self.descs.len());
        let invariant = self.some_int(ops, env);
        let iv = self.value(ValueType::INDEX);
        let mut inner = Env {
            ints: env.ints.clone(),
            ..Env::default()
        };
        inner.ints.push((iv, 64));
        let mut body = Vec::new();
        let scale = self.rng.gen_range(1..64);
        let c = self.konst(&mut body, &mut inner, 64, scale);
        let idx = self.value(ValueType::Int(64));
        body.push(Op::new(
            vec![idx],
            OpKind::Arith {
                op: ArithOp::Mul,
                lhs: iv,
                rhs: c,
            },
        ));
        inner.ints.push((idx, 64));
        let names: Vec<String> = self.descs[unit]
            .fields
            .iter()
            .map(|f| f.name.clone())
            .collect();
        let mut fields = vec![(names[0].clone(), idx)];
        if names.len() > 1 {
            fields.push((names[1].clone(), invariant));
        }
        let accel = self.descs[unit].name.clone();
        let s = self.value(ValueType::State(accel.clone()));
        body.push(Op::new(
            vec![s],
            OpKind::Setup {
                accel,
                fields,
                input: None,
            },
        ));
        inner.fresh.insert(unit, s);
        if self.rng.gen_bool(0.5) {
            body.push(Op::new(
                vec![],
                OpKind::HostWork {
                    cycles: self.rng.gen_range(1..50),
                },
            ));
        }
        self.launch(&mut body, &mut inner, unit);
        let t = inner.pending.pop().unwrap();
        body.push(Op::new(vec![], OpKind::Await { token: t }));
        body.push(Op::new(vec![], OpKind::Yield { values: vec![] }));
        let trips = self.rng.gen_range(1..=8);
        let step = self.rng.gen_range(1..=4);
        let block = Block::new(vec![iv], body);
        self.invalidate(env, &[&block]);
        ops.push(Op::new(
            vec![],
            OpKind::For {
                lower: 0,
                upper: trips * step,
                step,
                inits: vec![],
                body: block,
            },
        ));
    }

    fn block(&mut self, env: &mut Env, budget: usize, depth: usize) -> Vec<Op> {
        let mut ops = Vec::new();
        let n = self.rng.gen_range(1..=budget.max(1));
        for _ in 0..n {
            let nested_ok = depth < self.max_depth;
            match self.rng.gen_range(0..100) {
                0..=9 => {
                    let v = self.rng.gen_range(0..1024);
                    let w = if self.rng.gen_bool(0.8) { 64 } else { 32 };
                    self.konst(&mut ops, env, w, v);
                }
                10..=19 => self.arith(&mut ops, env),
                20..=34 => {
                    let u = self.rng.gen_range(0..self.descs.len());
                    self.setup(&mut ops, env, u);
                }
                35..=52 => {
                    let u = self.rng.gen_range(0..self.descs.len());
                    self.launch(&mut ops, env, u);
                }
                53..=62 => self.await_one(&mut ops, env),
                63..=69 => self.call(&mut ops, env),
                70..=73 => ops.push(Op::new(
                    vec![],
                    OpKind::HostWork {
                        cycles: self.rng.gen_range(1..100),
                    },
                )),
                74..=83 if nested_ok => self.for_loop(&mut ops, env, budget / 2, depth),
                84..=92 if nested_ok => self.if_op(&mut ops, env, budget / 2, depth),
                93..=99 if nested_ok => self.pipeline_template(&mut ops, env),
                _ => self.arith(&mut ops, env),
            }
        }
        while !env.pending.is_empty() && self.rng.gen_bool(0.85) {
            self.await_one(&mut ops, env);
        }
        ops
    }
}

/// A verifying program over `descriptors` with a single function `@main`.
pub fn random_program(
    rng: &mut impl Rng,
    descriptors: &[AcceleratorDescriptor],
    config: &GenConfig,
) -> Program {
    let mut g = Gen {
        rng,
        descs: descriptors,
        func: Function::new("main"),
        max_depth: config.max_depth,
    };
    let mut env = Env::default();
    let ops = if descriptors.is_empty() {
        Vec::new()
    } else {
        g.block(&mut env, config.max_ops, 0)
    };
    g.func.body = Block::new(vec![], ops);
    Program {
        accelerators: descriptors.iter().map(|d| d.name.clone()).collect(),
        functions: vec![g.func.renumbered()],
    }
}
