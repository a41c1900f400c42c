use std::collections::HashMap;
use std::fmt::Write;

use super::{Block, Function, Op, OpKind, Program, ValueId, Workload};

struct Printer<'a> {
    func: &'a Function,
    names: HashMap<ValueId, usize>,
    out: String,
}

impl Printer<'_> {
    fn def(&mut self, v: ValueId) -> String {
        let n = self.names.len();
        let n = *self.names.entry(v).or_insert(n);
        format!("%{n}")
    }

    fn name(&self, v: ValueId) -> String {
        match self.names.get(&v) {
            Some(n) => format!("%{n}"),
            // Only reachable for programs that fail dominance checks.
            None => format!("%undef{}", v.0),
        }
    }

    fn names(&self, vs: &[ValueId]) -> String {
        vs.iter()
            .map(|v| self.name(*v))
            .collect::<Vec<_>>()
            .join(", ")
    }

    fn fields(&self, fields: &[(String, ValueId)]) -> String {
        fields
            .iter()
            .map(|(f, v)| format!("{f} = {}", self.name(*v)))
            .collect::<Vec<_>>()
            .join(", ")
    }

    fn indent(&mut self, depth: usize) {
        for _ in 0..depth {
            self.out.push_str("  ");
        }
    }

    fn type_sig(&self, op: &Op) -> String {
        if op.results.is_empty() {
            return String::new();
        }
        let tys: Vec<String> = op
            .results
            .iter()
            .map(|r| self.func.ty(*r).to_string())
            .collect();
        format!(" : {}", tys.join(", "))
    }

    fn block(&mut self, block: &Block, depth: usize) {
        for (i, op) in block.ops.iter().enumerate() {
            let last = i + 1 == block.ops.len();
            if last && matches!(&op.kind, OpKind::Yield { values } if values.is_empty()) {
                continue;
            }
            self.op(op, depth);
        }
    }

    fn op(&mut self, op: &Op, depth: usize) {
        self.indent(depth);
        if !op.results.is_empty() {
            let defs: Vec<String> = op.results.iter().map(|r| self.def(*r)).collect();
            let _ = write!(self.out, "{} = ", defs.join(", "));
        }
        match &op.kind {
            OpKind::Const { value } => {
                let _ = write!(self.out, "const {value}");
            }
            OpKind::Arith { op: a, lhs, rhs } => {
                let _ = write!(
                    self.out,
                    "{} {}, {}",
                    a.mnemonic(),
                    self.name(*lhs),
                    self.name(*rhs)
                );
            }
            OpKind::Setup {
                accel,
                fields,
                input,
            } => {
                let _ = write!(self.out, "setup \"{accel}\" ({})", self.fields(fields));
                if let Some(i) = input {
                    let _ = write!(self.out, " from {}", self.name(*i));
                }
            }
            OpKind::Launch { state, fields, ops } => {
                let _ = write!(self.out, "launch {}", self.name(*state));
                if !fields.is_empty() {
                    let _ = write!(self.out, " ({})", self.fields(fields));
                }
                match ops {
                    Workload::Const(c) => {
                        let _ = write!(self.out, " ops = {c}");
                    }
                    Workload::Value(v) => {
                        let _ = write!(self.out, " ops = {}", self.name(*v));
                    }
                }
            }
            OpKind::Await { token } => {
                let _ = write!(self.out, "await {}", self.name(*token));
            }
            OpKind::Yield { values } => {
                self.out.push_str("yield");
                if !values.is_empty() {
                    let _ = write!(self.out, " {}", self.names(values));
                }
            }
            OpKind::ExternCall {
                callee,
                args,
                effects,
            } => {
                let _ = write!(self.out, "call @{callee}({})", self.names(args));
                if let Some(e) = effects {
                    let _ = write!(self.out, " effects = {}", e.keyword());
                }
            }
            OpKind::HostWork { cycles } => {
                let _ = write!(self.out, "host_work {cycles}");
            }
            OpKind::For {
                lower,
                upper,
                step,
                inits,
                body,
            } => {
                let iv = self.def(body.args[0]);
                let _ = write!(self.out, "for {iv} = {lower} to {upper} step {step}");
                if !inits.is_empty() {
                    let pairs: Vec<String> = body.args[1..]
                        .iter()
                        .zip(inits)
                        .map(|(a, init)| {
                            let a = self.def(*a);
                            format!("{a} = {}", self.name(*init))
                        })
                        .collect();
                    let _ = write!(self.out, " iter({})", pairs.join(", "));
                }
                self.out.push_str(" {\n");
                self.block(body, depth + 1);
                self.indent(depth);
                self.out.push('}');
            }
            OpKind::If {
                cond,
                then_block,
                else_block,
            } => {
                let _ = writeln!(self.out, "if {} {{", self.name(*cond));
                self.block(then_block, depth + 1);
                self.indent(depth);
                self.out.push_str("} else {\n");
                self.block(else_block, depth + 1);
                self.indent(depth);
                self.out.push('}');
            }
        }
        let sig = self.type_sig(op);
        self.out.push_str(&sig);
        self.out.push('\n');
    }
}

/// Canonical text: values renumbered in definition order, two-space
/// indentation, empty trailing yields elided.
pub fn print_program(program: &Program) -> String {
    let mut out = String::new();
    for a in &program.accelerators {
        let _ = writeln!(out, "accel \"{a}\"");
    }
    for (i, func) in program.functions.iter().enumerate() {
        if i > 0 || !program.accelerators.is_empty() {
            out.push('\n');
        }
        let mut p = Printer {
            func,
            names: HashMap::new(),
            out: String::new(),
        };
        // Number every definition up front so that forward references in
        // unverified programs still print.
        let mut defs = Vec::new();
        super::collect_defs(&func.body, &mut defs);
        let names: HashMap<ValueId, usize> =
            defs.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        p.names = names;
        let _ = writeln!(p.out, "func @{}() {{", func.name);
        p.block(&func.body, 1);
        p.out.push_str("}\n");
        out.push_str(&p.out);
    }
    out
}
