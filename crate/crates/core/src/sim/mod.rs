//! Deterministic host + accelerator timeline interpreter.
//!
//! The host executes ops in program order on a single clock. Register writes
//! are physical: a launch snapshots the accelerator's register file, so the
//! launch trace is the observable every pass must preserve. State values are
//! compile-time bookkeeping only.

pub mod scheme;
mod timeline;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::accel::AcceleratorDescriptor;
use crate::ir::{truncate, Block, Function, OpKind, Program, ValueId, ValueType, Workload};
pub use scheme::{AwaitOutcome, ExecutionScheme};
pub use timeline::{emit_timeline, Lane, TimelineRow, TIMELINE_HEADER};

/// Upper bound on the trip count of any single loop.
pub const MAX_TRIP_COUNT: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("no descriptor for accelerator \"{0}\"")]
    UnknownAccelerator(String),
    #[error("accelerator \"{accel}\" has no field `{field}`")]
    UnknownField { accel: String, field: String },
    #[error("loop with {0} iterations exceeds the trip-count limit")]
    TripCount(u64),
    #[error("value {0} read before it was computed")]
    Undefined(ValueId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LaunchEvent {
    pub accel: String,
    /// Every declared field's value at launch; never-written fields read 0.
    pub snapshot: BTreeMap<String, u64>,
    pub ops: u64,
    pub launch_cycle: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SimResult {
    pub total_cycles: u64,
    /// Register-write time, including launch-semantic writes.
    pub setup_cycles: u64,
    /// Pure ops whose results feed configuration fields.
    pub calc_cycles: u64,
    pub other_host_cycles: u64,
    /// Launch issue cost.
    pub launch_cycles: u64,
    /// Host stalled on launches and awaits.
    pub host_idle_cycles: u64,
    pub host_cycles: u64,
    pub accel_busy_cycles: u64,
    pub config_bytes_written: u64,
    pub config_writes: u64,
    pub total_ops: u64,
    #[serde(skip)]
    pub trace: Vec<LaunchEvent>,
    #[serde(skip)]
    pub timeline: Vec<TimelineRow>,
}

impl SimResult {
    pub fn launches(&self) -> usize {
        self.trace.len()
    }

    /// Achieved accelerator operations per cycle.
    pub fn perf(&self) -> f64 {
        if self.total_cycles == 0 {
            0.0
        } else {
            self.total_ops as f64 / self.total_cycles as f64
        }
    }

    /// Slack allowed above the scheme roofline: launch issue cycles are
    /// neither configuration nor compute, and jobs round up to whole cycles.
    pub fn issue_epsilon(&self, launch_cost: u64) -> f64 {
        if self.total_cycles == 0 {
            0.0
        } else {
            2.0 * launch_cost as f64 * self.launches() as f64 / self.total_cycles as f64
        }
    }

    /// `key=value` lines in a fixed order.
    pub fn summary_lines(&self) -> String {
        let rows: [(&str, String); 14] = [
            ("total_cycles", self.total_cycles.to_string()),
            ("setup_cycles", self.setup_cycles.to_string()),
            ("calc_cycles", self.calc_cycles.to_string()),
            ("other_host_cycles", self.other_host_cycles.to_string()),
            ("launch_cycles", self.launch_cycles.to_string()),
            ("host_idle_cycles", self.host_idle_cycles.to_string()),
            ("host_cycles", self.host_cycles.to_string()),
            ("accel_busy_cycles", self.accel_busy_cycles.to_string()),
            (
                "config_bytes_written",
                self.config_bytes_written.to_string(),
            ),
            ("config_writes", self.config_writes.to_string()),
            ("total_ops", self.total_ops.to_string()),
            ("launches", self.launches().to_string()),
            ("perf_ops_per_cycle", format!("{:.6}", self.perf())),
            (
                "effective_config_bandwidth",
                format!(
                    "{:.6}",
                    if self.setup_cycles + self.calc_cycles == 0 {
                        0.0
                    } else {
                        self.config_bytes_written as f64
                            / (self.setup_cycles + self.calc_cycles) as f64
                    }
                ),
            ),
        ];
        rows.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("sim result serializes");
        if let serde_json::Value::Object(map) = &mut v {
            map.insert("launches".into(), self.launches().into());
            map.insert("perf_ops_per_cycle".into(), self.perf().into());
        }
        v
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SimOptions {
    pub record_timeline: bool,
}

/// Same launch sequence: accelerator, snapshot and ops pairwise equal.
/// Launch cycles are ignored.
pub fn trace_equivalent(a: &SimResult, b: &SimResult) -> bool {
    a.trace.len() == b.trace.len()
        && a.trace
            .iter()
            .zip(&b.trace)
            .all(|(x, y)| x.accel == y.accel && x.snapshot == y.snapshot && x.ops == y.ops)
}

/// Index of the first differing launch, for test diagnostics.
pub fn first_trace_difference(a: &SimResult, b: &SimResult) -> Option<usize> {
    let n = a.trace.len().min(b.trace.len());
    (0..n)
        .find(|&i| {
            let (x, y) = (&a.trace[i], &b.trace[i]);
            x.accel != y.accel || x.snapshot != y.snapshot || x.ops != y.ops
        })
        .or(if a.trace.len() != b.trace.len() {
            Some(n)
        } else {
            None
        })
}

pub fn simulate(
    program: &Program,
    descriptors: &[AcceleratorDescriptor],
) -> Result<SimResult, SimError> {
    simulate_with(program, descriptors, SimOptions::default())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Val {
    Undef,
    Int(u64),
    State,
    Token { unit: usize, job_end: u64 },
}

struct Unit<'d> {
    desc: &'d AcceleratorDescriptor,
    scheme: &'static dyn ExecutionScheme,
    regs: Vec<u64>,
    busy_until: u64,
}

struct Machine<'d> {
    units: Vec<Unit<'d>>,
    unit_by_name: HashMap<&'d str, usize>,
    arith_cost: u64,
    host: u64,
    clobbers: u64,
    result: SimResult,
    record: bool,
}

/// Values whose computation feeds a configuration field through def-use.
fn config_feeders(func: &Function) -> HashSet<ValueId> {
    let mut sources: HashMap<ValueId, Vec<ValueId>> = HashMap::new();
    let mut roots = Vec::new();
    fn walk(block: &Block, sources: &mut HashMap<ValueId, Vec<ValueId>>, roots: &mut Vec<ValueId>) {
        for op in &block.ops {
            match &op.kind {
                OpKind::Arith { lhs, rhs, .. } => {
                    sources
                        .entry(op.results[0])
                        .or_default()
                        .extend([*lhs, *rhs]);
                }
                OpKind::ExternCall { args, .. } => {
                    for r in &op.results {
                        sources.entry(*r).or_default().extend(args.iter().copied());
                    }
                }
                OpKind::Setup { fields, .. } | OpKind::Launch { fields, .. } => {
                    roots.extend(fields.iter().map(|(_, v)| *v));
                }
                OpKind::For { inits, body, .. } => {
                    let ys = body.yield_values().unwrap_or(&[]);
                    for (k, r) in op.results.iter().enumerate() {
                        if let Some(y) = ys.get(k) {
                            sources.entry(*r).or_default().push(*y);
                        }
                    }
                    for (k, a) in body.args.iter().skip(1).enumerate() {
                        let e = sources.entry(*a).or_default();
                        e.extend(inits.get(k));
                        e.extend(ys.get(k));
                    }
                }
                OpKind::If {
                    then_block,
                    else_block,
                    ..
                } => {
                    for (k, r) in op.results.iter().enumerate() {
                        let e = sources.entry(*r).or_default();
                        e.extend(then_block.yield_values().and_then(|y| y.get(k)));
                        e.extend(else_block.yield_values().and_then(|y| y.get(k)));
                    }
                }
                _ => {}
            }
            for region in op.regions() {
                walk(region, sources, roots);
            }
        }
    }
    walk(&func.body, &mut sources, &mut roots);
    let mut seen: HashSet<ValueId> = HashSet::new();
    while let Some(v) = roots.pop() {
        if seen.insert(v) {
            if let Some(srcs) = sources.get(&v) {
                roots.extend(srcs.iter().copied());
            }
        }
    }
    seen
}

fn fnv_mix(seed: u64, x: u64) -> u64 {
    let mut h = seed ^ 0xcbf2_9ce4_8422_2325;
    for b in x.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn extern_result(callee: &str, args: &[u64], index: usize) -> u64 {
    let mut h = 0u64;
    for b in callee.bytes() {
        h = fnv_mix(h, b as u64);
    }
    for a in args {
        h = fnv_mix(h, *a);
    }
    fnv_mix(h, index as u64)
}

impl<'d> Machine<'d> {
    fn charge(&mut self, cycles: u64, lane: Lane) {
        if cycles == 0 {
            return;
        }
        let start = self.host;
        self.host += cycles;
        match lane {
            Lane::HostSetup => self.result.setup_cycles += cycles,
            Lane::HostCalc => self.result.calc_cycles += cycles,
            Lane::HostOther => self.result.other_host_cycles += cycles,
            Lane::HostIdle => self.result.host_idle_cycles += cycles,
            Lane::AccelBusy | Lane::AccelIdle => unreachable!("host lanes only"),
        }
        if self.record {
            timeline::push(&mut self.result.timeline, start, self.host, lane);
        }
    }

    fn wait_until(&mut self, cycle: u64) {
        if cycle > self.host {
            self.charge(cycle - self.host, Lane::HostIdle);
        }
    }

    fn unit_of(&self, accel: &str) -> Result<usize, SimError> {
        self.unit_by_name
            .get(accel)
            .copied()
            .ok_or_else(|| SimError::UnknownAccelerator(accel.to_string()))
    }

    fn write_fields(
        &mut self,
        unit: usize,
        fields: &[(String, ValueId)],
        env: &[Val],
    ) -> Result<(), SimError> {
        if fields.is_empty() {
            return Ok(());
        }
        let mut bytes = 0u64;
        for (name, v) in fields {
            let desc = self.units[unit].desc;
            let idx = desc
                .field_index(name)
                .ok_or_else(|| SimError::UnknownField {
                    accel: desc.name.clone(),
                    field: name.clone(),
                })?;
            let width = desc.fields[idx].bytes;
            let value = int(env, *v)?;
            self.units[unit].regs[idx] = truncate(value, width * 8);
            bytes += width as u64;
        }
        self.result.config_bytes_written += bytes;
        self.result.config_writes += fields.len() as u64;
        let cycles = self.units[unit].desc.cost.write_cycles(fields.len());
        self.charge(cycles, Lane::HostSetup);
        Ok(())
    }

    fn clobber(&mut self) {
        self.clobbers += 1;
        for unit in &mut self.units {
            for (k, f) in unit.desc.fields.iter().enumerate() {
                let poison = fnv_mix(0xdead_beef ^ self.clobbers, k as u64);
                unit.regs[k] = truncate(poison, f.bytes * 8);
            }
        }
    }

    fn launch(
        &mut self,
        unit: usize,
        fields: &[(String, ValueId)],
        ops: u64,
        env: &[Val],
    ) -> Result<Val, SimError> {
        let ready = {
            let u = &self.units[unit];
            u.scheme.launch_ready(self.host, u.busy_until)
        };
        self.wait_until(ready);
        self.write_fields(unit, fields, env)?;
        let (launch_cost, duration) = {
            let d = self.units[unit].desc;
            (d.cost.launch_cost, d.job_duration(ops))
        };
        let issue_cycle = self.host;
        if launch_cost > 0 {
            self.host += launch_cost;
            self.result.launch_cycles += launch_cost;
            if self.record {
                timeline::push(
                    &mut self.result.timeline,
                    issue_cycle,
                    self.host,
                    Lane::HostOther,
                );
            }
        }
        let start = self.host;
        let job_end = start + duration;
        let u = &mut self.units[unit];
        u.busy_until = job_end;
        let snapshot = u
            .desc
            .fields
            .iter()
            .zip(&u.regs)
            .map(|(f, v)| (f.name.clone(), *v))
            .collect();
        self.result.trace.push(LaunchEvent {
            accel: u.desc.name.clone(),
            snapshot,
            ops,
            launch_cycle: issue_cycle,
        });
        self.result.total_ops += ops;
        self.result.accel_busy_cycles += duration;
        if self.record && duration > 0 {
            timeline::push(&mut self.result.timeline, start, job_end, Lane::AccelBusy);
        }
        let resume = u.scheme.resume_after_launch(self.host, job_end);
        self.wait_until(resume);
        Ok(Val::Token { unit, job_end })
    }

    fn exec_block(
        &mut self,
        func: &Function,
        feeders: &HashSet<ValueId>,
        block: &Block,
        env: &mut Vec<Val>,
    ) -> Result<Vec<Val>, SimError> {
        let mut yielded = Vec::new();
        for op in &block.ops {
            let host_lane = |results: &[ValueId]| {
                if results.iter().any(|r| feeders.contains(r)) {
                    Lane::HostCalc
                } else {
                    Lane::HostOther
                }
            };
            match &op.kind {
                OpKind::Const { value } => {
                    env[op.results[0].index()] = Val::Int(*value);
                    self.charge(self.arith_cost, host_lane(&op.results));
                }
                OpKind::Arith { op: a, lhs, rhs } => {
                    let width = func.ty(op.results[0]).int_width().unwrap_or(64);
                    let v = a.eval(int(env, *lhs)?, int(env, *rhs)?, width);
                    env[op.results[0].index()] = Val::Int(v);
                    self.charge(self.arith_cost, host_lane(&op.results));
                }
                OpKind::ExternCall {
                    callee,
                    args,
                    effects: _,
                } => {
                    let argv: Vec<u64> = args
                        .iter()
                        .map(|a| int(env, *a))
                        .collect::<Result<_, _>>()?;
                    for (k, r) in op.results.iter().enumerate() {
                        let width = func.ty(*r).int_width().unwrap_or(64);
                        env[r.index()] = Val::Int(truncate(extern_result(callee, &argv, k), width));
                    }
                    self.charge(self.arith_cost, host_lane(&op.results));
                    if op.clobbers_accelerators() {
                        self.clobber();
                    }
                }
                OpKind::HostWork { cycles } => self.charge(*cycles, Lane::HostOther),
                OpKind::Setup { accel, fields, .. } => {
                    let unit = self.unit_of(accel)?;
                    self.write_fields(unit, fields, env)?;
                    env[op.results[0].index()] = Val::State;
                }
                OpKind::Launch { state, fields, ops } => {
                    let accel = func.accel_of(*state).ok_or(SimError::Undefined(*state))?;
                    let unit = self.unit_of(accel)?;
                    let ops = match ops {
                        Workload::Const(c) => *c,
                        Workload::Value(v) => int(env, *v)?,
                    };
                    let tok = self.launch(unit, fields, ops, env)?;
                    env[op.results[0].index()] = tok;
                }
                OpKind::Await { token } => {
                    let Val::Token { unit, job_end } = env[token.index()] else {
                        return Err(SimError::Undefined(*token));
                    };
                    let outcome = self.units[unit].scheme.on_await(self.host, job_end);
                    match outcome {
                        AwaitOutcome::NoOp => {}
                        AwaitOutcome::Poll => {
                            let c = self.units[unit].desc.cost.await_poll_cost;
                            self.charge(c, Lane::HostOther);
                        }
                        AwaitOutcome::WaitUntil(t) => self.wait_until(t),
                    }
                }
                OpKind::For {
                    lower,
                    upper,
                    step,
                    inits,
                    body,
                } => {
                    let trips = op.trip_count().unwrap_or(0);
                    if trips > MAX_TRIP_COUNT {
                        return Err(SimError::TripCount(trips));
                    }
                    let mut carried: Vec<Val> = inits.iter().map(|v| env[v.index()]).collect();
                    let mut iv = *lower;
                    while iv < *upper {
                        env[body.args[0].index()] = Val::Int(iv as u64);
                        for (a, v) in body.args[1..].iter().zip(&carried) {
                            env[a.index()] = *v;
                        }
                        carried = self.exec_block(func, feeders, body, env)?;
                        iv = match iv.checked_add(*step) {
                            Some(n) => n,
                            None => break,
                        };
                    }
                    for (r, v) in op.results.iter().zip(carried) {
                        env[r.index()] = v;
                    }
                }
                OpKind::If {
                    cond,
                    then_block,
                    else_block,
                } => {
                    let taken = if int(env, *cond)? & 1 == 1 {
                        then_block
                    } else {
                        else_block
                    };
                    let out = self.exec_block(func, feeders, taken, env)?;
                    for (r, v) in op.results.iter().zip(out) {
                        env[r.index()] = v;
                    }
                }
                OpKind::Yield { values } => {
                    yielded = values.iter().map(|v| env[v.index()]).collect();
                }
            }
        }
        Ok(yielded)
    }
}

fn int(env: &[Val], v: ValueId) -> Result<u64, SimError> {
    match env.get(v.index()) {
        Some(Val::Int(x)) => Ok(*x),
        _ => Err(SimError::Undefined(v)),
    }
}

/// Interprets every function in declaration order on one timeline.
///
/// Host arithmetic is charged at the `arith_cost` of the first declared
/// accelerator's descriptor.
pub fn simulate_with(
    program: &Program,
    descriptors: &[AcceleratorDescriptor],
    options: SimOptions,
) -> Result<SimResult, SimError> {
    let mut units = Vec::new();
    let mut unit_by_name = HashMap::new();
    for accel in &program.accelerators {
        let desc = descriptors
            .iter()
            .find(|d| d.name == *accel)
            .ok_or_else(|| SimError::UnknownAccelerator(accel.clone()))?;
        unit_by_name.insert(desc.name.as_str(), units.len());
        units.push(Unit {
            desc,
            scheme: scheme::strategy(desc.scheme),
            regs: vec![0; desc.fields.len()],
            busy_until: 0,
        });
    }
    let arith_cost = units.first().map_or(3, |u| u.desc.cost.arith_cost);
    let mut m = Machine {
        units,
        unit_by_name,
        arith_cost,
        host: 0,
        clobbers: 0,
        result: SimResult::default(),
        record: options.record_timeline,
    };
    for func in &program.functions {
        let feeders = config_feeders(func);
        let mut env = vec![Val::Undef; func.values.len()];
        m.exec_block(func, &feeders, &func.body, &mut env)?;
    }
    let accel_end = m.units.iter().map(|u| u.busy_until).max().unwrap_or(0);
    m.result.host_cycles = m.host;
    m.result.total_cycles = m.host.max(accel_end);
    if m.record {
        timeline::finish(&mut m.result.timeline, m.result.total_cycles);
    }
    Ok(m.result)
}

/// Checks that a value type names a simulated accelerator.
pub fn value_accel(func: &Function, v: ValueId) -> Option<&str> {
    match func.ty(v) {
        ValueType::State(a) | ValueType::Token(a) => Some(a),
        ValueType::Int(_) => None,
    }
}
