//! Configuration rewrite passes and the pipeline that composes them.
//!
//! Every pass is registered by name behind the [`Pass`] trait. Passes take
//! the program by value-mutation and must keep the launch trace unchanged.

mod canon;
mod cleanup;
mod dedup;
mod hoist_if;
mod hoist_loop;
mod overlap;
mod pipeline;
mod purity;
mod trace;
pub(crate) mod util;

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::accel::{AcceleratorDescriptor, Scheme};
use crate::ir::{verify, walk_ops, Diagnostic, OpKind, Program};

pub use canon::canonicalize;
pub use cleanup::cleanup_setups;
pub use dedup::{deduplicate_setup, known_field_maps, KnownFieldMap};
pub use hoist_if::hoist_into_branches;
pub use hoist_loop::hoist_loop_invariant_setup;
pub use overlap::overlap_block;
pub use pipeline::pipeline_loops;
pub use purity::is_pure_sequence;
pub use trace::trace_states;

/// Accelerator schemes visible to passes. Accelerators without a
/// descriptor are treated as sequential.
#[derive(Clone, Debug, Default)]
pub struct PassContext {
    schemes: HashMap<String, Scheme>,
}

impl PassContext {
    pub fn new(descriptors: &[AcceleratorDescriptor]) -> Self {
        PassContext {
            schemes: descriptors
                .iter()
                .map(|d| (d.name.clone(), d.scheme))
                .collect(),
        }
    }

    pub fn scheme(&self, accel: &str) -> Scheme {
        self.schemes
            .get(accel)
            .copied()
            .unwrap_or(Scheme::Sequential)
    }

    pub fn is_concurrent(&self, accel: &str) -> bool {
        self.scheme(accel) == Scheme::Concurrent
    }
}

pub trait Pass: Sync {
    fn name(&self) -> &'static str;
    fn run(&self, program: &mut Program, ctx: &PassContext);
}

macro_rules! simple_pass {
    ($ty:ident, $name:literal, |$p:ident, $ctx:ident| $body:expr) => {
        pub struct $ty;
        impl Pass for $ty {
            fn name(&self) -> &'static str {
                $name
            }
            fn run(&self, $p: &mut Program, $ctx: &PassContext) {
                $body
            }
        }
    };
}

simple_pass!(Canon, "canon", |p, _ctx| canonicalize(p));
simple_pass!(Trace, "trace", |p, _ctx| trace_states(p));
simple_pass!(HoistIf, "hoist-if", |p, _ctx| hoist_into_branches(p));
simple_pass!(HoistLoop, "hoist-loop", |p, _ctx| {
    hoist_loop_invariant_setup(p)
});
simple_pass!(Dedup, "dedup", |p, _ctx| deduplicate_setup(p));
simple_pass!(Cleanup, "cleanup", |p, _ctx| cleanup_setups(p));
simple_pass!(Pipeline, "pipeline", |p, ctx| pipeline_loops(p, ctx));
simple_pass!(Overlap, "overlap", |p, ctx| overlap_block(p, ctx));

pub struct PassRegistry {
    passes: Vec<Box<dyn Pass>>,
}

impl PassRegistry {
    pub fn standard() -> Self {
        PassRegistry {
            passes: vec![
                Box::new(Canon),
                Box::new(Trace),
                Box::new(HoistIf),
                Box::new(HoistLoop),
                Box::new(Dedup),
                Box::new(Cleanup),
                Box::new(Pipeline),
                Box::new(Overlap),
            ],
        }
    }

    pub fn get(&self, name: &str) -> Option<&dyn Pass> {
        self.passes.iter().find(|p| p.name() == name).map(|p| &**p)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.passes.iter().map(|p| p.name()).collect()
    }
}

#[derive(Debug, Error)]
pub enum PassError {
    #[error("unknown pass `{0}`")]
    UnknownPass(String),
    #[error("pass `{pass}` produced invalid IR: {}", render(.diagnostics))]
    Verify {
        pass: String,
        diagnostics: Vec<Diagnostic>,
    },
}

fn render(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Ordered pass names. Overlap-stage passes only touch concurrent
/// accelerators whatever the options say.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PassPipeline {
    pub passes: Vec<String>,
    pub enable_overlap: bool,
}

impl PassPipeline {
    pub const FULL: [&'static str; 9] = [
        "canon",
        "trace",
        "hoist-if",
        "hoist-loop",
        "dedup",
        "cleanup",
        "pipeline",
        "overlap",
        "cleanup",
    ];

    pub fn full() -> Self {
        Self::from_names(&Self::FULL)
    }

    /// Full pipeline up to and including the first cleanup.
    pub fn dedup_only() -> Self {
        Self::from_names(&Self::FULL[..6])
    }

    pub fn from_names(names: &[&str]) -> Self {
        PassPipeline {
            passes: names.iter().map(|s| s.to_string()).collect(),
            enable_overlap: true,
        }
    }

    /// Comma-separated names, order respected.
    pub fn parse(list: &str) -> Result<Self, PassError> {
        let registry = PassRegistry::standard();
        let mut passes = Vec::new();
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if registry.get(name).is_none() {
                return Err(PassError::UnknownPass(name.to_string()));
            }
            passes.push(name.to_string());
        }
        Ok(PassPipeline {
            passes,
            enable_overlap: true,
        })
    }
}

/// Static configuration footprint of a program: setup ops, field writes
/// and bytes per single execution of each op.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StaticCounts {
    pub setups: usize,
    pub fields: usize,
    pub bytes: u64,
}

impl StaticCounts {
    pub fn of(program: &Program, descriptors: &[AcceleratorDescriptor]) -> Self {
        let mut c = StaticCounts::default();
        let width = |accel: &str, f: &str| {
            descriptors
                .iter()
                .find(|d| d.name == accel)
                .and_then(|d| d.field_bytes(f))
                .unwrap_or(0) as u64
        };
        for func in &program.functions {
            walk_ops(&func.body, &mut |op| match &op.kind {
                OpKind::Setup { accel, fields, .. } => {
                    c.setups += 1;
                    c.fields += fields.len();
                    c.bytes += fields.iter().map(|(f, _)| width(accel, f)).sum::<u64>();
                }
                OpKind::Launch { state, fields, .. } => {
                    if let Some(accel) = func.accel_of(*state) {
                        c.fields += fields.len();
                        c.bytes += fields.iter().map(|(f, _)| width(accel, f)).sum::<u64>();
                    }
                }
                _ => {}
            });
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PassLogEntry {
    pub pass: String,
    pub before: StaticCounts,
    pub after: StaticCounts,
}

impl fmt::Display for PassLogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = |a: u64, b: u64| b as i64 - a as i64;
        write!(
            f,
            "{:<10} setups {:>4} ({:+}) fields {:>5} ({:+}) bytes {:>6} ({:+})",
            self.pass,
            self.after.setups,
            d(self.before.setups as u64, self.after.setups as u64),
            self.after.fields,
            d(self.before.fields as u64, self.after.fields as u64),
            self.after.bytes,
            d(self.before.bytes, self.after.bytes),
        )
    }
}

pub type PassLog = Vec<PassLogEntry>;

/// Applies the pipeline in order, verifying after every pass.
pub fn run_pipeline(
    program: &Program,
    pipeline: &PassPipeline,
    descriptors: &[AcceleratorDescriptor],
) -> Result<(Program, PassLog), PassError> {
    let registry = PassRegistry::standard();
    let ctx = PassContext::new(descriptors);
    let mut p = program.clone();
    let mut log = Vec::new();
    for name in &pipeline.passes {
        let pass = registry
            .get(name)
            .ok_or_else(|| PassError::UnknownPass(name.clone()))?;
        if !pipeline.enable_overlap && matches!(name.as_str(), "pipeline" | "overlap") {
            continue;
        }
        let before = StaticCounts::of(&p, descriptors);
        pass.run(&mut p, &ctx);
        verify(&p).map_err(|diagnostics| PassError::Verify {
            pass: name.clone(),
            diagnostics,
        })?;
        log.push(PassLogEntry {
            pass: name.clone(),
            before,
            after: StaticCounts::of(&p, descriptors),
        });
    }
    Ok((p, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_has_every_named_pass() {
        let r = PassRegistry::standard();
        for n in PassPipeline::FULL {
            assert!(r.get(n).is_some(), "{n}");
        }
        assert!(r.get("unroll").is_none());
    }

    #[test]
    fn parse_respects_order_and_rejects_unknown() {
        let p = PassPipeline::parse("dedup, trace").unwrap();
        assert_eq!(p.passes, vec!["dedup", "trace"]);
        assert!(
            matches!(PassPipeline::parse("trace,bogus"), Err(PassError::UnknownPass(n)) if n == "bogus")
        );
    }

    #[test]
    fn empty_program_stays_empty() {
        let (p, log) = run_pipeline(&Program::default(), &PassPipeline::full(), &[]).unwrap();
        assert_eq!(p, Program::default());
        assert_eq!(log.len(), PassPipeline::FULL.len());
    }
}
