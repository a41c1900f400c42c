//! Launch/await timing rules per configuration scheme.

use crate::accel::Scheme;

/// What the host does when it reaches an await.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AwaitOutcome {
    /// Nothing to do, no cycles charged.
    NoOp,
    /// Job already finished; charge the poll cost.
    Poll,
    /// Block until the given cycle.
    WaitUntil(u64),
}

pub trait ExecutionScheme: Sync {
    fn name(&self) -> &'static str;

    /// Earliest cycle the host may start issuing a launch.
    fn launch_ready(&self, host: u64, busy_until: u64) -> u64;

    /// Cycle at which the host continues after the launch issue completes.
    fn resume_after_launch(&self, issue_done: u64, job_end: u64) -> u64;

    fn on_await(&self, host: u64, job_end: u64) -> AwaitOutcome;

    /// Whether configuration writes may overlap a running job.
    fn overlaps_configuration(&self) -> bool;
}

pub struct Sequential;

impl ExecutionScheme for Sequential {
    fn name(&self) -> &'static str {
        "sequential"
    }

    fn launch_ready(&self, host: u64, busy_until: u64) -> u64 {
        host.max(busy_until)
    }

    fn resume_after_launch(&self, _issue_done: u64, job_end: u64) -> u64 {
        job_end
    }

    fn on_await(&self, _host: u64, _job_end: u64) -> AwaitOutcome {
        AwaitOutcome::NoOp
    }

    fn overlaps_configuration(&self) -> bool {
        false
    }
}

pub struct Concurrent;

impl ExecutionScheme for Concurrent {
    fn name(&self) -> &'static str {
        "concurrent"
    }

    // One outstanding job: a second launch waits for the first.
    fn launch_ready(&self, host: u64, busy_until: u64) -> u64 {
        host.max(busy_until)
    }

    fn resume_after_launch(&self, issue_done: u64, _job_end: u64) -> u64 {
        issue_done
    }

    fn on_await(&self, host: u64, job_end: u64) -> AwaitOutcome {
        if job_end <= host {
            AwaitOutcome::Poll
        } else {
            AwaitOutcome::WaitUntil(job_end)
        }
    }

    fn overlaps_configuration(&self) -> bool {
        true
    }
}

static SEQUENTIAL: Sequential = Sequential;
static CONCURRENT: Concurrent = Concurrent;

/// Every registered scheme, looked up by name.
pub fn registered_schemes() -> [&'static dyn ExecutionScheme; 2] {
    [&SEQUENTIAL, &CONCURRENT]
}

pub fn scheme_by_name(name: &str) -> Option<&'static dyn ExecutionScheme> {
    registered_schemes().into_iter().find(|s| s.name() == name)
}

pub fn strategy(scheme: Scheme) -> &'static dyn ExecutionScheme {
    scheme_by_name(scheme.name()).expect("every Scheme variant is registered")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_covers_all_schemes() {
        for s in [Scheme::Sequential, Scheme::Concurrent] {
            assert_eq!(strategy(s).name(), s.name());
        }
        assert!(scheme_by_name("parallel").is_none());
    }

    #[test]
    fn concurrent_await_polls_or_waits() {
        assert_eq!(Concurrent.on_await(10, 5), AwaitOutcome::Poll);
        assert_eq!(Concurrent.on_await(10, 12), AwaitOutcome::WaitUntil(12));
        assert_eq!(Sequential.on_await(10, 12), AwaitOutcome::NoOp);
    }
}
