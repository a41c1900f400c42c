use std::fmt;

use serde::Serialize;

use super::SimResult;

pub const TIMELINE_HEADER: &str = "start_cycle,end_cycle,lane";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lane {
    HostSetup,
    HostCalc,
    HostOther,
    HostIdle,
    AccelBusy,
    AccelIdle,
}

impl Lane {
    pub fn name(self) -> &'static str {
        match self {
            Lane::HostSetup => "host-setup",
            Lane::HostCalc => "host-calc",
            Lane::HostOther => "host-other",
            Lane::HostIdle => "host-idle",
            Lane::AccelBusy => "accel-busy",
            Lane::AccelIdle => "accel-idle",
        }
    }

    fn is_host(self) -> bool {
        !matches!(self, Lane::AccelBusy | Lane::AccelIdle)
    }
}

impl fmt::Display for Lane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TimelineRow {
    pub start: u64,
    pub end: u64,
    pub lane: Lane,
}

/// Appends an interval, extending the previous row of the same lane when
/// the two touch.
pub(super) fn push(rows: &mut Vec<TimelineRow>, start: u64, end: u64, lane: Lane) {
    if let Some(prev) = rows
        .iter_mut()
        .rev()
        .find(|r| r.lane.is_host() == lane.is_host())
    {
        if prev.lane == lane && prev.end == start {
            prev.end = end;
            return;
        }
    }
    rows.push(TimelineRow { start, end, lane });
}

/// Fills accelerator gaps with accel-idle rows and orders rows by start.
pub(super) fn finish(rows: &mut Vec<TimelineRow>, total: u64) {
    let mut busy: Vec<(u64, u64)> = rows
        .iter()
        .filter(|r| r.lane == Lane::AccelBusy)
        .map(|r| (r.start, r.end))
        .collect();
    busy.sort_unstable();
    let mut cursor = 0;
    for (s, e) in busy {
        if s > cursor {
            rows.push(TimelineRow {
                start: cursor,
                end: s,
                lane: Lane::AccelIdle,
            });
        }
        cursor = cursor.max(e);
    }
    if total > cursor {
        rows.push(TimelineRow {
            start: cursor,
            end: total,
            lane: Lane::AccelIdle,
        });
    }
    rows.sort_by_key(|r| (r.start, !r.lane.is_host(), r.end));
}

/// CSV text with header. Results simulated without timeline recording
/// produce the header only.
pub fn emit_timeline(r: &SimResult) -> String {
    let mut out = String::from(TIMELINE_HEADER);
    out.push('\n');
    for row in &r.timeline {
        out.push_str(&format!("{},{},{}\n", row.start, row.end, row.lane));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_result_header_only() {
        assert_eq!(
            emit_timeline(&SimResult::default()),
            "start_cycle,end_cycle,lane\n"
        );
    }

    #[test]
    fn adjacent_rows_merge() {
        let mut rows = Vec::new();
        push(&mut rows, 0, 3, Lane::HostSetup);
        push(&mut rows, 3, 6, Lane::HostSetup);
        push(&mut rows, 6, 7, Lane::HostOther);
        push(&mut rows, 7, 9, Lane::HostSetup);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].end, 6);
    }
}
