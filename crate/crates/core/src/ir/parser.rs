use std::collections::HashMap;

use thiserror::Error;

use super::{
    truncate, ArithOp, Block, Effects, Function, Op, OpKind, Program, ValueId, ValueType, Workload,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Pos {
    line: usize,
    col: usize,
}

fn err<T>(pos: Pos, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        line: pos.line,
        col: pos.col,
        message: message.into(),
    })
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Value(String),
    Symbol(String),
    Str(String),
    Int(i128),
    Punct(char),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Value(s) => format!("`%{s}`"),
            Tok::Symbol(s) => format!("`@{s}`"),
            Tok::Str(s) => format!("\"{s}\""),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Punct(c) => format!("`{c}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '$'
}

fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = match c {
            '%' | '@' => {
                i += 1;
                while i < chars.len() && is_name_char(chars[i]) {
                    i += 1;
                }
                let name: String = chars[start + 1..i].iter().collect();
                if name.is_empty() {
                    return err(pos, format!("expected a name after `{c}`"));
                }
                if c == '%' {
                    Tok::Value(name)
                } else {
                    Tok::Symbol(name)
                }
            }
            '"' => {
                i += 1;
                while i < chars.len() && chars[i] != '"' && chars[i] != '\n' {
                    i += 1;
                }
                if i >= chars.len() || chars[i] != '"' {
                    return err(pos, "unterminated string literal");
                }
                let s: String = chars[start + 1..i].iter().collect();
                i += 1;
                Tok::Str(s)
            }
            '-' | '0'..='9' => {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                match text.parse::<i128>() {
                    Ok(v) => Tok::Int(v),
                    Err(_) => return err(pos, format!("invalid integer literal `{text}`")),
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                Tok::Ident(chars[start..i].iter().collect())
            }
            '=' | '(' | ')' | '{' | '}' | ',' | ':' | '<' | '>' => {
                i += 1;
                Tok::Punct(c)
            }
            other => return err(pos, format!("unexpected character `{other}`")),
        };
        col += i - start;
        out.push((tok, pos));
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

type Name = (String, Pos);

#[derive(Debug)]
struct AstOp {
    pos: Pos,
    results: Vec<Name>,
    kind: AstKind,
    types: Vec<(ValueType, Pos)>,
}

#[derive(Debug)]
enum AstWorkload {
    Const(u64),
    Value(Name),
}

#[derive(Debug)]
enum AstKind {
    Const(i128),
    Arith(ArithOp, Name, Name),
    Setup {
        accel: String,
        fields: Vec<(String, Name)>,
        input: Option<Name>,
    },
    Launch {
        state: Name,
        fields: Vec<(String, Name)>,
        ops: AstWorkload,
    },
    Await(Name),
    For {
        iv: Name,
        lower: i64,
        upper: i64,
        step: i64,
        iters: Vec<(Name, Name)>,
        body: Vec<AstOp>,
    },
    If {
        cond: Name,
        then_ops: Vec<AstOp>,
        else_ops: Vec<AstOp>,
    },
    Yield(Vec<Name>),
    Call {
        callee: String,
        args: Vec<Name>,
        effects: Option<Effects>,
    },
    HostWork(u64),
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    accels: Vec<String>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected<T>(&self, wanted: &str) -> Result<T, ParseError> {
        err(
            self.pos(),
            format!("expected {wanted}, found {}", self.peek().describe()),
        )
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Punct(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            self.unexpected(&format!("`{c}`"))
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Tok::Ident(s) if s == kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            self.unexpected(&format!("`{kw}`"))
        }
    }

    fn expect_ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.unexpected("an identifier"),
        }
    }

    fn expect_value(&mut self) -> Result<Name, ParseError> {
        match self.peek().clone() {
            Tok::Value(s) => {
                let (_, pos) = self.bump();
                Ok((s, pos))
            }
            _ => self.unexpected("a value (`%name`)"),
        }
    }

    fn expect_int(&mut self) -> Result<i128, ParseError> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(v)
            }
            _ => self.unexpected("an integer literal"),
        }
    }

    fn expect_i64(&mut self) -> Result<i64, ParseError> {
        let pos = self.pos();
        let v = self.expect_int()?;
        i64::try_from(v).or_else(|_| err(pos, format!("{v} does not fit in 64 bits")))
    }

    fn expect_u64(&mut self) -> Result<u64, ParseError> {
        let pos = self.pos();
        let v = self.expect_int()?;
        u64::try_from(v)
            .or_else(|_| err(pos, format!("expected a non-negative integer, found {v}")))
    }

    fn expect_accel_name(&mut self) -> Result<String, ParseError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                if !self.accels.contains(&s) {
                    return err(pos, format!("unknown accelerator \"{s}\""));
                }
                Ok(s)
            }
            _ => self.unexpected("a quoted accelerator name"),
        }
    }

    fn parse_type(&mut self) -> Result<(ValueType, Pos), ParseError> {
        let pos = self.pos();
        let word = self.expect_ident()?;
        let ty = match word.as_str() {
            "state" | "token" => {
                self.expect_punct('<')?;
                let accel = self.expect_accel_name()?;
                self.expect_punct('>')?;
                if word == "state" {
                    ValueType::State(accel)
                } else {
                    ValueType::Token(accel)
                }
            }
            w if w.starts_with('i') && w.len() > 1 => match w[1..].parse::<u8>() {
                Ok(width) if (1..=64).contains(&width) => ValueType::Int(width),
                _ => {
                    return err(
                        pos,
                        format!("invalid integer type `{w}` (width must be 1..=64)"),
                    )
                }
            },
            w => return err(pos, format!("unknown type `{w}`")),
        };
        Ok((ty, pos))
    }

    fn parse_field_list(&mut self) -> Result<Vec<(String, Name)>, ParseError> {
        self.expect_punct('(')?;
        let mut fields = Vec::new();
        if self.eat_punct(')') {
            return Ok(fields);
        }
        loop {
            let name = self.expect_ident()?;
            self.expect_punct('=')?;
            let v = self.expect_value()?;
            fields.push((name, v));
            if self.eat_punct(')') {
                return Ok(fields);
            }
            self.expect_punct(',')?;
        }
    }

    fn parse_region(&mut self) -> Result<Vec<AstOp>, ParseError> {
        self.expect_punct('{')?;
        let mut ops = Vec::new();
        while !self.eat_punct('}') {
            if *self.peek() == Tok::Eof {
                return self.unexpected("`}`");
            }
            ops.push(self.parse_op()?);
        }
        Ok(ops)
    }

    fn parse_op(&mut self) -> Result<AstOp, ParseError> {
        let pos = self.pos();
        let mut results = Vec::new();
        if matches!(self.peek(), Tok::Value(_)) {
            loop {
                results.push(self.expect_value()?);
                if !self.eat_punct(',') {
                    break;
                }
            }
            self.expect_punct('=')?;
        }
        let kw_pos = self.pos();
        let kw = self.expect_ident()?;
        let kind = match kw.as_str() {
            "const" => AstKind::Const(self.expect_int()?),
            "setup" => {
                let accel = self.expect_accel_name()?;
                let fields = self.parse_field_list()?;
                let input = if self.eat_keyword("from") {
                    Some(self.expect_value()?)
                } else {
                    None
                };
                AstKind::Setup {
                    accel,
                    fields,
                    input,
                }
            }
            "launch" => {
                let state = self.expect_value()?;
                let fields = if *self.peek() == Tok::Punct('(') {
                    self.parse_field_list()?
                } else {
                    Vec::new()
                };
                self.expect_keyword("ops")?;
                self.expect_punct('=')?;
                let ops = match self.peek() {
                    Tok::Value(_) => AstWorkload::Value(self.expect_value()?),
                    _ => AstWorkload::Const(self.expect_u64()?),
                };
                AstKind::Launch { state, fields, ops }
            }
            "await" => AstKind::Await(self.expect_value()?),
            "yield" => {
                let mut values = Vec::new();
                if matches!(self.peek(), Tok::Value(_)) {
                    loop {
                        values.push(self.expect_value()?);
                        if !self.eat_punct(',') {
                            break;
                        }
                    }
                }
                AstKind::Yield(values)
            }
            "for" => {
                let iv = self.expect_value()?;
                self.expect_punct('=')?;
                let lower = self.expect_i64()?;
                self.expect_keyword("to")?;
                let upper = self.expect_i64()?;
                self.expect_keyword("step")?;
                let step = self.expect_i64()?;
                let mut iters = Vec::new();
                if self.eat_keyword("iter") {
                    self.expect_punct('(')?;
                    if !self.eat_punct(')') {
                        loop {
                            let arg = self.expect_value()?;
                            self.expect_punct('=')?;
                            let init = self.expect_value()?;
                            iters.push((arg, init));
                            if self.eat_punct(')') {
                                break;
                            }
                            self.expect_punct(',')?;
                        }
                    }
                }
                let body = self.parse_region()?;
                AstKind::For {
                    iv,
                    lower,
                    upper,
                    step,
                    iters,
                    body,
                }
            }
            "if" => {
                let cond = self.expect_value()?;
                let then_ops = self.parse_region()?;
                self.expect_keyword("else")?;
                let else_ops = self.parse_region()?;
                AstKind::If {
                    cond,
                    then_ops,
                    else_ops,
                }
            }
            "call" => {
                let callee = match self.peek().clone() {
                    Tok::Symbol(s) => {
                        self.bump();
                        s
                    }
                    _ => return self.unexpected("a callee (`@name`)"),
                };
                self.expect_punct('(')?;
                let mut args = Vec::new();
                if !self.eat_punct(')') {
                    loop {
                        args.push(self.expect_value()?);
                        if self.eat_punct(')') {
                            break;
                        }
                        self.expect_punct(',')?;
                    }
                }
                let effects = if self.eat_keyword("effects") {
                    self.expect_punct('=')?;
                    let epos = self.pos();
                    match self.expect_ident()?.as_str() {
                        "all" => Some(Effects::All),
                        "none" => Some(Effects::None),
                        other => {
                            return err(
                                epos,
                                format!("effects must be `all` or `none`, found `{other}`"),
                            )
                        }
                    }
                } else {
                    None
                };
                AstKind::Call {
                    callee,
                    args,
                    effects,
                }
            }
            "host_work" => AstKind::HostWork(self.expect_u64()?),
            other => match ArithOp::from_mnemonic(other) {
                Some(op) => {
                    let lhs = self.expect_value()?;
                    self.expect_punct(',')?;
                    let rhs = self.expect_value()?;
                    AstKind::Arith(op, lhs, rhs)
                }
                None => return err(kw_pos, format!("unknown operation `{other}`")),
            },
        };
        let mut types = Vec::new();
        if self.eat_punct(':') {
            loop {
                types.push(self.parse_type()?);
                if !self.eat_punct(',') {
                    break;
                }
            }
        }
        if types.len() != results.len() {
            return err(
                pos,
                format!(
                    "`{kw}` declares {} result(s) but {} type(s)",
                    results.len(),
                    types.len()
                ),
            );
        }
        Ok(AstOp {
            pos,
            results,
            kind,
            types,
        })
    }

    fn parse_program(&mut self) -> Result<(Vec<String>, Vec<(String, Vec<AstOp>)>), ParseError> {
        while self.eat_keyword("accel") {
            let pos = self.pos();
            match self.peek().clone() {
                Tok::Str(s) => {
                    self.bump();
                    if s.is_empty() {
                        return err(pos, "accelerator name must not be empty");
                    }
                    if self.accels.contains(&s) {
                        return err(pos, format!("accelerator \"{s}\" declared twice"));
                    }
                    self.accels.push(s);
                }
                _ => return self.unexpected("a quoted accelerator name"),
            }
        }
        let mut funcs = Vec::new();
        while *self.peek() != Tok::Eof {
            self.expect_keyword("func")?;
            let pos = self.pos();
            let name = match self.peek().clone() {
                Tok::Symbol(s) => {
                    self.bump();
                    s
                }
                _ => return self.unexpected("a function name (`@name`)"),
            };
            if funcs.iter().any(|(n, _)| *n == name) {
                return err(pos, format!("function @{name} defined twice"));
            }
            self.expect_punct('(')?;
            self.expect_punct(')')?;
            let body = self.parse_region()?;
            funcs.push((name, body));
        }
        Ok((self.accels.clone(), funcs))
    }
}

/// Builds a [`Function`] from syntax, resolving names function-wide so that
/// dominance problems surface in the verifier rather than as parse errors.
struct Lowering {
    func: Function,
    names: HashMap<String, ValueId>,
}

impl Lowering {
    fn define(&mut self, name: &Name, ty: ValueType) -> Result<ValueId, ParseError> {
        if self.names.contains_key(&name.0) {
            return err(name.1, format!("value %{} defined more than once", name.0));
        }
        let id = self.func.new_value(ty);
        self.names.insert(name.0.clone(), id);
        Ok(id)
    }

    /// Allocates ids for every definition in textual order.
    fn declare(&mut self, ops: &[AstOp]) -> Result<(), ParseError> {
        for op in ops {
            for (name, (ty, _)) in op.results.iter().zip(&op.types) {
                self.define(name, ty.clone())?;
            }
            match &op.kind {
                AstKind::For {
                    iv, iters, body, ..
                } => {
                    self.define(iv, ValueType::INDEX)?;
                    if iters.len() != op.results.len() {
                        return err(
                            op.pos,
                            format!(
                                "`for` has {} iteration argument(s) but {} result(s)",
                                iters.len(),
                                op.results.len()
                            ),
                        );
                    }
                    for ((arg, _), (ty, _)) in iters.iter().zip(&op.types) {
                        self.define(arg, ty.clone())?;
                    }
                    self.declare(body)?;
                }
                AstKind::If {
                    then_ops, else_ops, ..
                } => {
                    self.declare(then_ops)?;
                    self.declare(else_ops)?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn resolve(&self, name: &Name) -> Result<ValueId, ParseError> {
        match self.names.get(&name.0) {
            Some(v) => Ok(*v),
            None => err(name.1, format!("undefined value %{}", name.0)),
        }
    }

    fn resolve_fields(
        &self,
        fields: &[(String, Name)],
    ) -> Result<Vec<(String, ValueId)>, ParseError> {
        fields
            .iter()
            .map(|(f, v)| Ok((f.clone(), self.resolve(v)?)))
            .collect()
    }

    fn lower_region(&self, ops: &[AstOp], args: Vec<ValueId>) -> Result<Block, ParseError> {
        let mut out = Vec::with_capacity(ops.len() + 1);
        for op in ops {
            out.push(self.lower_op(op)?);
        }
        if !matches!(out.last().map(|o: &Op| &o.kind), Some(OpKind::Yield { .. })) {
            out.push(Op::new(vec![], OpKind::Yield { values: vec![] }));
        }
        Ok(Block::new(args, out))
    }

    fn expect_result_types(
        &self,
        op: &AstOp,
        check: impl Fn(&ValueType) -> bool,
        what: &str,
        count: usize,
    ) -> Result<(), ParseError> {
        if op.results.len() != count {
            return err(
                op.pos,
                format!("expected {count} result(s), found {}", op.results.len()),
            );
        }
        for (ty, pos) in &op.types {
            if !check(ty) {
                return err(*pos, format!("type mismatch: expected {what}, found {ty}"));
            }
        }
        Ok(())
    }

    fn lower_op(&self, op: &AstOp) -> Result<Op, ParseError> {
        let results: Vec<ValueId> = op
            .results
            .iter()
            .map(|n| self.resolve(n))
            .collect::<Result<_, _>>()?;
        let is_int = |t: &ValueType| matches!(t, ValueType::Int(_));
        let kind = match &op.kind {
            AstKind::Const(lit) => {
                self.expect_result_types(op, is_int, "an integer type", 1)?;
                let width = op.types[0].0.int_width().unwrap_or(64);
                if *lit < i64::MIN as i128 || *lit > u64::MAX as i128 {
                    return err(op.pos, format!("constant {lit} does not fit in 64 bits"));
                }
                OpKind::Const {
                    value: truncate(*lit as u64, width),
                }
            }
            AstKind::Arith(a, lhs, rhs) => {
                self.expect_result_types(op, is_int, "an integer type", 1)?;
                OpKind::Arith {
                    op: *a,
                    lhs: self.resolve(lhs)?,
                    rhs: self.resolve(rhs)?,
                }
            }
            AstKind::Setup {
                accel,
                fields,
                input,
            } => {
                self.expect_result_types(
                    op,
                    |t| t.state_accel() == Some(accel.as_str()),
                    &format!("state<\"{accel}\">"),
                    1,
                )?;
                OpKind::Setup {
                    accel: accel.clone(),
                    fields: self.resolve_fields(fields)?,
                    input: input.as_ref().map(|n| self.resolve(n)).transpose()?,
                }
            }
            AstKind::Launch { state, fields, ops } => {
                let state_id = self.resolve(state)?;
                let accel = match self.func.ty(state_id) {
                    ValueType::State(a) => a.clone(),
                    other => {
                        return err(
                            state.1,
                            format!("type mismatch: launch operand must be a state, found {other}"),
                        )
                    }
                };
                self.expect_result_types(
                    op,
                    |t| t.token_accel() == Some(accel.as_str()),
                    &format!("token<\"{accel}\">"),
                    1,
                )?;
                OpKind::Launch {
                    state: state_id,
                    fields: self.resolve_fields(fields)?,
                    ops: match ops {
                        AstWorkload::Const(c) => Workload::Const(*c),
                        AstWorkload::Value(n) => Workload::Value(self.resolve(n)?),
                    },
                }
            }
            AstKind::Await(t) => {
                self.expect_result_types(op, |_| true, "", 0)?;
                OpKind::Await {
                    token: self.resolve(t)?,
                }
            }
            AstKind::Yield(values) => {
                self.expect_result_types(op, |_| true, "", 0)?;
                OpKind::Yield {
                    values: values
                        .iter()
                        .map(|n| self.resolve(n))
                        .collect::<Result<_, _>>()?,
                }
            }
            AstKind::For {
                iv,
                lower,
                upper,
                step,
                iters,
                body,
            } => {
                let mut args = vec![self.resolve(iv)?];
                let mut inits = Vec::new();
                for (arg, init) in iters {
                    args.push(self.resolve(arg)?);
                    inits.push(self.resolve(init)?);
                }
                OpKind::For {
                    lower: *lower,
                    upper: *upper,
                    step: *step,
                    inits,
                    body: self.lower_region(body, args)?,
                }
            }
            AstKind::If {
                cond,
                then_ops,
                else_ops,
            } => OpKind::If {
                cond: self.resolve(cond)?,
                then_block: self.lower_region(then_ops, vec![])?,
                else_block: self.lower_region(else_ops, vec![])?,
            },
            AstKind::Call {
                callee,
                args,
                effects,
            } => {
                self.expect_result_types(op, is_int, "an integer type", op.results.len())?;
                OpKind::ExternCall {
                    callee: callee.clone(),
                    args: args
                        .iter()
                        .map(|n| self.resolve(n))
                        .collect::<Result<_, _>>()?,
                    effects: *effects,
                }
            }
            AstKind::HostWork(cycles) => {
                self.expect_result_types(op, |_| true, "", 0)?;
                OpKind::HostWork { cycles: *cycles }
            }
        };
        Ok(Op::new(results, kind))
    }
}

/// Parses the textual IR. Names are resolved function-wide; types come from
/// the trailing type signatures.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let toks = lex(text)?;
    let mut parser = Parser {
        toks,
        at: 0,
        accels: Vec::new(),
    };
    let (accelerators, funcs) = parser.parse_program()?;
    let mut program = Program {
        accelerators,
        functions: Vec::new(),
    };
    for (name, ops) in funcs {
        let mut lowering = Lowering {
            func: Function::new(name),
            names: HashMap::new(),
        };
        lowering.declare(&ops)?;
        let mut body = Block::default();
        for op in &ops {
            body.ops.push(lowering.lower_op(op)?);
        }
        lowering.func.body = body;
        program.functions.push(lowering.func);
    }
    Ok(program)
}
