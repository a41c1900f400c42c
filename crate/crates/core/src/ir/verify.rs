use std::collections::{HashMap, HashSet};
use std::fmt;

use super::{op_path_string, Block, Function, Op, OpKind, Program, ValueId, ValueType, Workload};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    /// Use not dominated by its definition.
    Dominance,
    /// Value defined more than once.
    Ssa,
    /// Operand or result type violates an op's signature.
    Type,
    /// Use of a state superseded by a newer one.
    LiveState,
    /// Token awaited more than once.
    DoubleAwait,
    /// Region terminator missing, misplaced or mismatched.
    Yield,
    /// State or token names an accelerator the program does not declare.
    UndeclaredAccel,
    /// Malformed attribute (loop step, duplicate field).
    Attr,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::Dominance => "dominance",
            Rule::Ssa => "ssa",
            Rule::Type => "type",
            Rule::LiveState => "live-state",
            Rule::DoubleAwait => "double-await",
            Rule::Yield => "yield",
            Rule::UndeclaredAccel => "undeclared-accel",
            Rule::Attr => "attr",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub rule: Rule,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: [{}] {}", self.location, self.rule, self.message)
    }
}

#[derive(Clone, Default)]
struct Scope {
    visible: HashSet<ValueId>,
    live: HashMap<String, ValueId>,
    dead: HashSet<ValueId>,
}

impl Scope {
    fn supersede(&mut self, accel: &str, new_state: ValueId) {
        if let Some(old) = self.live.insert(accel.to_string(), new_state) {
            if old != new_state {
                self.dead.insert(old);
            }
        }
    }
}

enum RegionKind<'t> {
    Top,
    Nested(&'t [ValueType]),
}

struct Checker<'a> {
    program: &'a Program,
    func: &'a Function,
    diags: Vec<Diagnostic>,
    defined: HashSet<ValueId>,
    awaits: HashMap<ValueId, usize>,
    token_depth: HashMap<ValueId, usize>,
    path: Vec<usize>,
}

impl<'a> Checker<'a> {
    fn report(&mut self, rule: Rule, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            rule,
            location: op_path_string(&self.func.name, &self.path),
            message: message.into(),
        });
    }

    fn ty(&self, v: ValueId) -> Option<&'a ValueType> {
        self.func.values.get(v.index())
    }

    fn check_type_decl(&mut self, v: ValueId) {
        match self.ty(v) {
            None => self.report(Rule::Ssa, format!("{v} has no type entry")),
            Some(ValueType::Int(w)) if !(1..=64).contains(w) => {
                self.report(Rule::Type, format!("{v} has invalid integer width {w}"))
            }
            Some(t) => {
                if let Some(a) = t.accel() {
                    if a.is_empty() || !self.program.is_declared(a) {
                        self.report(
                            Rule::UndeclaredAccel,
                            format!("{v} names undeclared accelerator \"{a}\""),
                        );
                    }
                }
            }
        }
    }

    fn define(&mut self, v: ValueId, scope: &mut Scope) {
        if !self.defined.insert(v) {
            self.report(Rule::Ssa, format!("{v} defined more than once"));
        }
        self.check_type_decl(v);
        scope.visible.insert(v);
    }

    fn use_value(&mut self, v: ValueId, scope: &Scope) -> bool {
        if !scope.visible.contains(&v) {
            self.report(
                Rule::Dominance,
                format!("{v} used where its definition does not dominate"),
            );
            return false;
        }
        true
    }

    fn expect_int(&mut self, v: ValueId, what: &str) -> Option<u8> {
        match self.ty(v) {
            Some(ValueType::Int(w)) => Some(*w),
            Some(t) => {
                self.report(
                    Rule::Type,
                    format!("{what} {v} must be an integer, found {t}"),
                );
                None
            }
            None => None,
        }
    }

    fn expect_state_of(&mut self, v: ValueId, accel: &str, what: &str) {
        match self.ty(v) {
            Some(ValueType::State(a)) if a == accel => {}
            Some(t) => self.report(
                Rule::Type,
                format!("{what} {v} must be state<\"{accel}\">, found {t}"),
            ),
            None => {}
        }
    }

    fn check_live(&mut self, v: ValueId, scope: &Scope, what: &str) {
        if scope.dead.contains(&v) {
            self.report(
                Rule::LiveState,
                format!(
                    "{what} uses {v}, which a newer state of the same accelerator has replaced"
                ),
            );
        }
    }

    fn check_fields(&mut self, fields: &[(String, ValueId)]) {
        let mut seen = HashSet::new();
        for (f, v) in fields {
            if !seen.insert(f.as_str()) {
                self.report(Rule::Attr, format!("field `{f}` written twice in one op"));
            }
            self.expect_int(*v, &format!("field `{f}`"));
        }
    }

    fn check_yield(&mut self, values: &[ValueId], expected: &[ValueType], scope: &Scope) {
        if values.len() != expected.len() {
            self.report(
                Rule::Yield,
                format!(
                    "yield has {} value(s), region expects {}",
                    values.len(),
                    expected.len()
                ),
            );
            return;
        }
        for (v, want) in values.iter().zip(expected) {
            if let Some(t) = self.ty(*v) {
                if t != want {
                    self.report(
                        Rule::Yield,
                        format!("yield of {v} has type {t}, expected {want}"),
                    );
                }
                if matches!(t, ValueType::State(_)) {
                    self.check_live(*v, scope, "yield");
                }
            }
        }
    }

    fn block(&mut self, block: &Block, scope: &mut Scope, kind: RegionKind<'_>, loop_depth: usize) {
        let n = block.ops.len();
        let mut saw_terminator = false;
        for (i, op) in block.ops.iter().enumerate() {
            self.path.push(i);
            if let OpKind::Yield { values } = &op.kind {
                match kind {
                    RegionKind::Top => self.report(Rule::Yield, "yield outside of a region"),
                    RegionKind::Nested(expected) => {
                        if i + 1 != n {
                            self.report(Rule::Yield, "yield must terminate its region");
                        }
                        saw_terminator = true;
                        for v in values {
                            self.use_value(*v, scope);
                        }
                        self.check_yield(values, expected, scope);
                    }
                }
            } else {
                self.op(op, scope, loop_depth);
            }
            self.path.pop();
        }
        if let RegionKind::Nested(_) = kind {
            if !saw_terminator {
                self.report(Rule::Yield, "region is missing its yield");
            }
        }
    }

    fn op(&mut self, op: &Op, scope: &mut Scope, loop_depth: usize) {
        // Operands are checked against the scope before the op's own
        // definitions become visible.
        let operands = op.operands();
        for v in &operands {
            if self.use_value(*v, scope) {
                if let Some(ValueType::Token(_)) = self.ty(*v) {
                    if !matches!(op.kind, OpKind::Await { .. }) {
                        self.report(Rule::Type, format!("token {v} may only be awaited"));
                    }
                }
            }
        }

        match &op.kind {
            OpKind::Const { .. } => {
                self.expect_results(op, 1);
                if let Some(r) = op.results.first() {
                    self.expect_int(*r, "const result");
                }
            }
            OpKind::Arith { op: a, lhs, rhs } => {
                self.expect_results(op, 1);
                let lw = self.expect_int(*lhs, "operand");
                let rw = self.expect_int(*rhs, "operand");
                let res = op
                    .results
                    .first()
                    .and_then(|r| self.expect_int(*r, "result"));
                if let (Some(l), Some(r)) = (lw, rw) {
                    if l != r {
                        self.report(
                            Rule::Type,
                            format!("`{}` operands have widths i{l} and i{r}", a.mnemonic()),
                        );
                    } else if res.is_some_and(|w| w != l) {
                        self.report(
                            Rule::Type,
                            format!("`{}` result width differs from operands", a.mnemonic()),
                        );
                    }
                }
            }
            OpKind::Setup {
                accel,
                fields,
                input,
            } => {
                if !self.program.is_declared(accel) {
                    self.report(
                        Rule::UndeclaredAccel,
                        format!("setup on undeclared accelerator \"{accel}\""),
                    );
                }
                self.expect_results(op, 1);
                if let Some(r) = op.results.first() {
                    self.expect_state_of(*r, accel, "setup result");
                }
                if let Some(i) = input {
                    self.expect_state_of(*i, accel, "setup input");
                    self.check_live(*i, scope, "setup");
                }
                self.check_fields(fields);
            }
            OpKind::Launch { state, fields, ops } => {
                self.expect_results(op, 1);
                match self.ty(*state) {
                    Some(ValueType::State(a)) => {
                        if let Some(r) = op.results.first() {
                            if self.ty(*r) != Some(&ValueType::Token(a.clone())) {
                                self.report(
                                    Rule::Type,
                                    format!("launch result must be token<\"{a}\">"),
                                );
                            }
                        }
                    }
                    Some(t) => self.report(
                        Rule::Type,
                        format!("launch operand must be a state, found {t}"),
                    ),
                    None => {}
                }
                self.check_live(*state, scope, "launch");
                self.check_fields(fields);
                if let Workload::Value(v) = ops {
                    self.expect_int(*v, "launch ops");
                }
            }
            OpKind::Await { token } => {
                self.expect_results(op, 0);
                match self.ty(*token) {
                    Some(ValueType::Token(_)) => {
                        let count = self.awaits.entry(*token).or_default();
                        *count += 1;
                        if *count > 1 {
                            self.report(
                                Rule::DoubleAwait,
                                format!("token {token} awaited more than once"),
                            );
                        } else if self.token_depth.get(token).is_some_and(|d| loop_depth > *d) {
                            self.report(
                                Rule::DoubleAwait,
                                format!(
                                    "token {token} awaited inside a loop that does not define it"
                                ),
                            );
                        }
                    }
                    Some(t) => self.report(
                        Rule::Type,
                        format!("await operand must be a token, found {t}"),
                    ),
                    None => {}
                }
            }
            OpKind::ExternCall { args, .. } => {
                for a in args {
                    self.expect_int(*a, "call argument");
                }
                for r in &op.results {
                    self.expect_int(*r, "call result");
                }
            }
            OpKind::HostWork { .. } => self.expect_results(op, 0),
            OpKind::For {
                step, inits, body, ..
            } => {
                if *step <= 0 {
                    self.report(
                        Rule::Attr,
                        format!("loop step must be positive, found {step}"),
                    );
                }
                for v in inits {
                    if let Some(ValueType::State(_)) = self.ty(*v) {
                        self.check_live(*v, scope, "loop init");
                    }
                }
                if body.args.is_empty() {
                    self.report(Rule::Type, "loop body lacks an induction variable");
                } else if body.args.len() - 1 != inits.len() || inits.len() != op.results.len() {
                    self.report(
                        Rule::Type,
                        "loop iteration arguments, initial values and results differ in number",
                    );
                } else {
                    let result_tys: Vec<ValueType> = op
                        .results
                        .iter()
                        .filter_map(|r| self.ty(*r).cloned())
                        .collect();
                    for ((arg, init), want) in body.args[1..].iter().zip(inits).zip(&result_tys) {
                        if self.ty(*arg) != Some(want) || self.ty(*init) != Some(want) {
                            self.report(
                                Rule::Type,
                                format!("iteration argument {arg} type mismatch"),
                            );
                        }
                    }
                    let mut inner = scope.clone();
                    self.path.push(0);
                    for (k, arg) in body.args.iter().enumerate() {
                        self.define(*arg, &mut inner);
                        if k == 0 && self.ty(*arg) != Some(&ValueType::INDEX) {
                            self.report(Rule::Type, "induction variable must be i64");
                        }
                        if let Some(ValueType::State(a)) = self.ty(*arg) {
                            inner.supersede(a, *arg);
                        }
                    }
                    self.block(
                        body,
                        &mut inner,
                        RegionKind::Nested(&result_tys),
                        loop_depth + 1,
                    );
                    self.path.pop();
                }
            }
            OpKind::If {
                cond,
                then_block,
                else_block,
            } => {
                if self.ty(*cond) != Some(&ValueType::Int(1)) {
                    self.report(Rule::Type, format!("if condition {cond} must be i1"));
                }
                let result_tys: Vec<ValueType> = op
                    .results
                    .iter()
                    .filter_map(|r| self.ty(*r).cloned())
                    .collect();
                for (ri, region) in [then_block, else_block].into_iter().enumerate() {
                    let mut inner = scope.clone();
                    self.path.push(ri);
                    self.block(
                        region,
                        &mut inner,
                        RegionKind::Nested(&result_tys),
                        loop_depth,
                    );
                    self.path.pop();
                }
            }
            OpKind::Yield { .. } => unreachable!("handled by block"),
        }

        for r in &op.results {
            self.define(*r, scope);
            match self.ty(*r) {
                Some(ValueType::State(a)) => scope.supersede(a, *r),
                Some(ValueType::Token(_)) => {
                    self.token_depth.insert(*r, loop_depth);
                }
                _ => {}
            }
        }
    }

    fn expect_results(&mut self, op: &Op, n: usize) {
        if op.results.len() != n {
            self.report(
                Rule::Type,
                format!(
                    "`{}` must have {n} result(s), found {}",
                    op.mnemonic(),
                    op.results.len()
                ),
            );
        }
    }
}

/// Checks SSA dominance, op signatures, the single-live-state discipline,
/// affine tokens and region terminators. Diagnostics come back in walk order.
pub fn verify(program: &Program) -> Result<(), Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut seen = HashSet::new();
    for a in &program.accelerators {
        if a.is_empty() || !seen.insert(a) {
            diags.push(Diagnostic {
                rule: Rule::UndeclaredAccel,
                location: "program".to_string(),
                message: format!("accelerator \"{a}\" is empty or declared twice"),
            });
        }
    }
    for func in &program.functions {
        let mut checker = Checker {
            program,
            func,
            diags: Vec::new(),
            defined: HashSet::new(),
            awaits: HashMap::new(),
            token_depth: HashMap::new(),
            path: Vec::new(),
        };
        let mut scope = Scope::default();
        checker.block(&func.body, &mut scope, RegionKind::Top, 0);
        diags.extend(checker.diags);
    }
    if diags.is_empty() {
        Ok(())
    } else {
        Err(diags)
    }
}
