//! SSA intermediate representation for configure/launch/await programs.
//!
//! A [`Program`] declares accelerators and holds functions. Each function owns
//! a value table (indexed by [`ValueId`]) and a single body [`Block`]. Control
//! flow is structured: `for` and `if` operations carry nested blocks that end
//! in a `yield`.

mod parser;
mod printer;
mod verify;

use std::collections::{HashMap, HashSet};
use std::fmt;

pub use parser::{parse_program, ParseError};
pub use printer::print_program;
pub use verify::{verify, Diagnostic, Rule};

/// Handle to an SSA value inside one [`Function`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ValueId(pub u32);

impl ValueId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ValueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ValueType {
    /// Two's-complement integer of the given bit width (1..=64).
    Int(u8),
    /// Register-file contents of the named accelerator after a setup.
    State(String),
    /// Handle to a launched accelerator job.
    Token(String),
}

impl ValueType {
    pub const INDEX: ValueType = ValueType::Int(64);

    pub fn int_width(&self) -> Option<u8> {
        match self {
            ValueType::Int(w) => Some(*w),
            _ => None,
        }
    }

    pub fn state_accel(&self) -> Option<&str> {
        match self {
            ValueType::State(a) => Some(a),
            _ => None,
        }
    }

    pub fn token_accel(&self) -> Option<&str> {
        match self {
            ValueType::Token(a) => Some(a),
            _ => None,
        }
    }

    pub fn accel(&self) -> Option<&str> {
        match self {
            ValueType::State(a) | ValueType::Token(a) => Some(a),
            ValueType::Int(_) => None,
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueType::Int(w) => write!(f, "i{w}"),
            ValueType::State(a) => write!(f, "state<\"{a}\">"),
            ValueType::Token(a) => write!(f, "token<\"{a}\">"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
    Shl,
    Shr,
}

impl ArithOp {
    pub const ALL: [ArithOp; 8] = [
        ArithOp::Add,
        ArithOp::Sub,
        ArithOp::Mul,
        ArithOp::And,
        ArithOp::Or,
        ArithOp::Xor,
        ArithOp::Shl,
        ArithOp::Shr,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            ArithOp::Add => "add",
            ArithOp::Sub => "sub",
            ArithOp::Mul => "mul",
            ArithOp::And => "and",
            ArithOp::Or => "or",
            ArithOp::Xor => "xor",
            ArithOp::Shl => "shl",
            ArithOp::Shr => "shr",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<ArithOp> {
        ArithOp::ALL.into_iter().find(|op| op.mnemonic() == s)
    }

    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            ArithOp::Add | ArithOp::Mul | ArithOp::And | ArithOp::Or | ArithOp::Xor
        )
    }

    /// Evaluates on `width`-bit operands. Shifts by `width` or more yield 0;
    /// `shr` is logical.
    pub fn eval(self, lhs: u64, rhs: u64, width: u8) -> u64 {
        let raw = match self {
            ArithOp::Add => lhs.wrapping_add(rhs),
            ArithOp::Sub => lhs.wrapping_sub(rhs),
            ArithOp::Mul => lhs.wrapping_mul(rhs),
            ArithOp::And => lhs & rhs,
            ArithOp::Or => lhs | rhs,
            ArithOp::Xor => lhs ^ rhs,
            ArithOp::Shl => {
                if rhs >= width as u64 {
                    0
                } else {
                    lhs << rhs
                }
            }
            ArithOp::Shr => {
                if rhs >= width as u64 {
                    0
                } else {
                    lhs >> rhs
                }
            }
        };
        truncate(raw, width)
    }
}

/// Keeps the low `width` bits of `value`.
pub fn truncate(value: u64, width: u8) -> u64 {
    if width >= 64 {
        value
    } else {
        value & ((1u64 << width) - 1)
    }
}

/// Accelerator-state effect of a foreign operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Effects {
    /// Clobbers every accelerator register.
    All,
    /// Preserves accelerator state.
    None,
}

impl Effects {
    pub fn keyword(self) -> &'static str {
        match self {
            Effects::All => "all",
            Effects::None => "none",
        }
    }
}

/// Workload size of a launch in accelerator operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Workload {
    Const(u64),
    Value(ValueId),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Block {
    pub args: Vec<ValueId>,
    pub ops: Vec<Op>,
}

impl Block {
    pub fn new(args: Vec<ValueId>, ops: Vec<Op>) -> Self {
        Block { args, ops }
    }

    /// Operands of the terminating `yield`, if the block has one.
    pub fn yield_values(&self) -> Option<&[ValueId]> {
        match self.ops.last().map(|op| &op.kind) {
            Some(OpKind::Yield { values }) => Some(values),
            _ => None,
        }
    }

    pub fn yield_values_mut(&mut self) -> Option<&mut Vec<ValueId>> {
        match self.ops.last_mut().map(|op| &mut op.kind) {
            Some(OpKind::Yield { values }) => Some(values),
            _ => None,
        }
    }

    /// Index one past the last non-terminator op.
    pub fn body_end(&self) -> usize {
        match self.ops.last().map(|op| &op.kind) {
            Some(OpKind::Yield { .. }) => self.ops.len() - 1,
            _ => self.ops.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Op {
    pub results: Vec<ValueId>,
    pub kind: OpKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OpKind {
    Const {
        value: u64,
    },
    Arith {
        op: ArithOp,
        lhs: ValueId,
        rhs: ValueId,
    },
    /// Writes `fields` to the registers of `accel`. `input` is the state the
    /// writes are a delta against, when known.
    Setup {
        accel: String,
        fields: Vec<(String, ValueId)>,
        input: Option<ValueId>,
    },
    /// Launches the configuration in `state`; `fields` are launch-semantic
    /// writes performed as part of the launch.
    Launch {
        state: ValueId,
        fields: Vec<(String, ValueId)>,
        ops: Workload,
    },
    Await {
        token: ValueId,
    },
    /// Half-open range loop. `body.args[0]` is the induction variable (i64),
    /// the remaining args are iteration-carried and initialized from `inits`.
    For {
        lower: i64,
        upper: i64,
        step: i64,
        inits: Vec<ValueId>,
        body: Block,
    },
    If {
        cond: ValueId,
        then_block: Block,
        else_block: Block,
    },
    Yield {
        values: Vec<ValueId>,
    },
    ExternCall {
        callee: String,
        args: Vec<ValueId>,
        effects: Option<Effects>,
    },
    HostWork {
        cycles: u64,
    },
}

impl Op {
    pub fn new(results: Vec<ValueId>, kind: OpKind) -> Self {
        Op { results, kind }
    }

    pub fn result(&self) -> ValueId {
        self.results[0]
    }

    pub fn mnemonic(&self) -> &'static str {
        match &self.kind {
            OpKind::Const { .. } => "const",
            OpKind::Arith { op, .. } => op.mnemonic(),
            OpKind::Setup { .. } => "setup",
            OpKind::Launch { .. } => "launch",
            OpKind::Await { .. } => "await",
            OpKind::For { .. } => "for",
            OpKind::If { .. } => "if",
            OpKind::Yield { .. } => "yield",
            OpKind::ExternCall { .. } => "call",
            OpKind::HostWork { .. } => "host_work",
        }
    }

    /// Direct operands, not including uses inside nested regions.
    pub fn operands(&self) -> Vec<ValueId> {
        let mut out = Vec::new();
        match &self.kind {
            OpKind::Const { .. } | OpKind::HostWork { .. } => {}
            OpKind::Arith { lhs, rhs, .. } => out.extend([*lhs, *rhs]),
            OpKind::Setup { fields, input, .. } => {
                out.extend(fields.iter().map(|(_, v)| *v));
                out.extend(input.iter().copied());
            }
            OpKind::Launch { state, fields, ops } => {
                out.push(*state);
                out.extend(fields.iter().map(|(_, v)| *v));
                if let Workload::Value(v) = ops {
                    out.push(*v);
                }
            }
            OpKind::Await { token } => out.push(*token),
            OpKind::For { inits, .. } => out.extend(inits.iter().copied()),
            OpKind::If { cond, .. } => out.push(*cond),
            OpKind::Yield { values } => out.extend(values.iter().copied()),
            OpKind::ExternCall { args, .. } => out.extend(args.iter().copied()),
        }
        out
    }

    pub fn for_each_operand_mut(&mut self, mut f: impl FnMut(&mut ValueId)) {
        match &mut self.kind {
            OpKind::Const { .. } | OpKind::HostWork { .. } => {}
            OpKind::Arith { lhs, rhs, .. } => {
                f(lhs);
                f(rhs);
            }
            OpKind::Setup { fields, input, .. } => {
                fields.iter_mut().for_each(|(_, v)| f(v));
                if let Some(v) = input {
                    f(v);
                }
            }
            OpKind::Launch { state, fields, ops } => {
                f(state);
                fields.iter_mut().for_each(|(_, v)| f(v));
                if let Workload::Value(v) = ops {
                    f(v);
                }
            }
            OpKind::Await { token } => f(token),
            OpKind::For { inits, .. } => inits.iter_mut().for_each(f),
            OpKind::If { cond, .. } => f(cond),
            OpKind::Yield { values } => values.iter_mut().for_each(f),
            OpKind::ExternCall { args, .. } => args.iter_mut().for_each(f),
        }
    }

    pub fn regions(&self) -> Vec<&Block> {
        match &self.kind {
            OpKind::For { body, .. } => vec![body],
            OpKind::If {
                then_block,
                else_block,
                ..
            } => vec![then_block, else_block],
            _ => Vec::new(),
        }
    }

    pub fn regions_mut(&mut self) -> Vec<&mut Block> {
        match &mut self.kind {
            OpKind::For { body, .. } => vec![body],
            OpKind::If {
                then_block,
                else_block,
                ..
            } => vec![then_block, else_block],
            _ => Vec::new(),
        }
    }

    /// Whether this op destroys all accelerator register state.
    pub fn clobbers_accelerators(&self) -> bool {
        matches!(
            &self.kind,
            OpKind::ExternCall { effects, .. } if *effects != Some(Effects::None)
        )
    }

    /// Const, arith, host work and effect-free extern calls.
    pub fn is_pure(&self) -> bool {
        match &self.kind {
            OpKind::Const { .. } | OpKind::Arith { .. } | OpKind::HostWork { .. } => true,
            OpKind::ExternCall { effects, .. } => *effects == Some(Effects::None),
            _ => false,
        }
    }

    pub fn setup_accel(&self) -> Option<&str> {
        match &self.kind {
            OpKind::Setup { accel, .. } => Some(accel),
            _ => None,
        }
    }

    /// Trip count for a `for` op; `None` for other kinds.
    pub fn trip_count(&self) -> Option<u64> {
        match &self.kind {
            OpKind::For {
                lower, upper, step, ..
            } => Some(trip_count(*lower, *upper, *step)),
            _ => None,
        }
    }
}

/// Number of iterations of `[lower, upper)` with a positive step.
pub fn trip_count(lower: i64, upper: i64, step: i64) -> u64 {
    if step <= 0 || upper <= lower {
        return 0;
    }
    let span = (upper as i128) - (lower as i128);
    ((span + step as i128 - 1) / step as i128) as u64
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub values: Vec<ValueType>,
    pub body: Block,
}

impl Function {
    pub fn new(name: impl Into<String>) -> Self {
        Function {
            name: name.into(),
            values: Vec::new(),
            body: Block::default(),
        }
    }

    pub fn new_value(&mut self, ty: ValueType) -> ValueId {
        let id = ValueId(self.values.len() as u32);
        self.values.push(ty);
        id
    }

    pub fn ty(&self, v: ValueId) -> &ValueType {
        &self.values[v.index()]
    }

    /// Accelerator named by a state or token value.
    pub fn accel_of(&self, v: ValueId) -> Option<&str> {
        self.values.get(v.index()).and_then(|t| t.accel())
    }

    /// Renumbers values in textual definition order and drops unreferenced
    /// table entries.
    pub fn renumbered(&self) -> Function {
        let mut order = Vec::new();
        collect_defs(&self.body, &mut order);
        let mut map = HashMap::with_capacity(order.len());
        let mut values = Vec::with_capacity(order.len());
        for (i, v) in order.iter().enumerate() {
            map.insert(*v, ValueId(i as u32));
            values.push(self.ty(*v).clone());
        }
        let mut body = self.body.clone();
        remap_block(&mut body, &|v| *map.get(&v).unwrap_or(&v));
        Function {
            name: self.name.clone(),
            values,
            body,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub accelerators: Vec<String>,
    pub functions: Vec<Function>,
}

impl Program {
    pub fn new() -> Self {
        Program::default()
    }

    pub fn is_declared(&self, accel: &str) -> bool {
        self.accelerators.iter().any(|a| a == accel)
    }

    /// Structural form used for equality modulo SSA numbering.
    pub fn renumbered(&self) -> Program {
        Program {
            accelerators: self.accelerators.clone(),
            functions: self.functions.iter().map(Function::renumbered).collect(),
        }
    }

    pub fn structurally_eq(&self, other: &Program) -> bool {
        self.renumbered() == other.renumbered()
    }
}

/// Values defined in `block` in textual order: block args, then for each op
/// its results followed by its regions.
pub fn collect_defs(block: &Block, out: &mut Vec<ValueId>) {
    out.extend(block.args.iter().copied());
    for op in &block.ops {
        out.extend(op.results.iter().copied());
        for region in op.regions() {
            collect_defs(region, out);
        }
    }
}

/// All values defined by `op` and anything nested inside it.
pub fn defs_within(op: &Op) -> HashSet<ValueId> {
    let mut out = op.results.clone();
    for region in op.regions() {
        collect_defs(region, &mut out);
    }
    out.into_iter().collect()
}

/// Rewrites every operand and definition in `block` through `f`.
pub fn remap_block(block: &mut Block, f: &dyn Fn(ValueId) -> ValueId) {
    for a in &mut block.args {
        *a = f(*a);
    }
    for op in &mut block.ops {
        for r in &mut op.results {
            *r = f(*r);
        }
        op.for_each_operand_mut(|v| *v = f(*v));
        for region in op.regions_mut() {
            remap_block(region, f);
        }
    }
}

/// Replaces uses (not definitions) of `from` with `to`, recursively.
pub fn replace_uses(block: &mut Block, from: ValueId, to: ValueId) {
    for op in &mut block.ops {
        op.for_each_operand_mut(|v| {
            if *v == from {
                *v = to;
            }
        });
        for region in op.regions_mut() {
            replace_uses(region, from, to);
        }
    }
}

/// Replaces uses through a substitution map, recursively.
pub fn replace_uses_map(block: &mut Block, map: &HashMap<ValueId, ValueId>) {
    if map.is_empty() {
        return;
    }
    for op in &mut block.ops {
        op.for_each_operand_mut(|v| {
            if let Some(to) = map.get(v) {
                *v = *to;
            }
        });
        for region in op.regions_mut() {
            replace_uses_map(region, map);
        }
    }
}

/// Use counts of every value referenced in `block`, recursively.
pub fn use_counts(block: &Block) -> HashMap<ValueId, usize> {
    fn walk(block: &Block, counts: &mut HashMap<ValueId, usize>) {
        for op in &block.ops {
            for v in op.operands() {
                *counts.entry(v).or_default() += 1;
            }
            for region in op.regions() {
                walk(region, counts);
            }
        }
    }
    let mut counts = HashMap::new();
    walk(block, &mut counts);
    counts
}

/// Visits every op in `block` and its nested regions, pre-order.
pub fn walk_ops<'a>(block: &'a Block, f: &mut dyn FnMut(&'a Op)) {
    for op in &block.ops {
        f(op);
        for region in op.regions() {
            walk_ops(region, f);
        }
    }
}

/// Whether `block` contains an op (at any depth) satisfying `pred`.
pub fn any_op(block: &Block, pred: &dyn Fn(&Op) -> bool) -> bool {
    block
        .ops
        .iter()
        .any(|op| pred(op) || op.regions().into_iter().any(|r| any_op(r, pred)))
}

/// Clones `ops` with fresh result values, substituting operands through
/// `subst` (which is extended with the new definitions).
pub fn clone_ops_fresh(
    func_values: &mut Vec<ValueType>,
    ops: &[Op],
    subst: &mut HashMap<ValueId, ValueId>,
) -> Vec<Op> {
    fn fresh(values: &mut Vec<ValueType>, old: ValueId) -> ValueId {
        let ty = values[old.index()].clone();
        let id = ValueId(values.len() as u32);
        values.push(ty);
        id
    }
    fn clone_block(
        values: &mut Vec<ValueType>,
        block: &Block,
        subst: &mut HashMap<ValueId, ValueId>,
    ) -> Block {
        let args = block
            .args
            .iter()
            .map(|a| {
                let n = fresh(values, *a);
                subst.insert(*a, n);
                n
            })
            .collect();
        let ops = clone_ops_fresh(values, &block.ops, subst);
        Block { args, ops }
    }
    let mut out = Vec::with_capacity(ops.len());
    for op in ops {
        let mut new_op = op.clone();
        new_op.for_each_operand_mut(|v| {
            if let Some(n) = subst.get(v) {
                *v = *n;
            }
        });
        match (&mut new_op.kind, &op.kind) {
            (OpKind::For { body: nb, .. }, OpKind::For { body, .. }) => {
                *nb = clone_block(func_values, body, subst);
            }
            (
                OpKind::If {
                    then_block: nt,
                    else_block: ne,
                    ..
                },
                OpKind::If {
                    then_block,
                    else_block,
                    ..
                },
            ) => {
                *nt = clone_block(func_values, then_block, subst);
                *ne = clone_block(func_values, else_block, subst);
            }
            _ => {}
        }
        new_op.results = op
            .results
            .iter()
            .map(|r| {
                let n = fresh(func_values, *r);
                subst.insert(*r, n);
                n
            })
            .collect();
        out.push(new_op);
    }
    out
}

/// Locates an op by its index path (alternating op index / region index).
pub fn op_path_string(func: &str, path: &[usize]) -> String {
    let parts: Vec<String> = path.iter().map(|i| i.to_string()).collect();
    format!("@{func}[{}]", parts.join("."))
}
