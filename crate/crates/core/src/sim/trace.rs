//! Deterministic, timestamped record of a simulation run.

use std::collections::BTreeMap;
use std::fmt;

/// What happened in one trace record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    RouteSelected,
    Withdrawn,
    MessageSent,
    MessageReceived,
    ChainEstablished,
    ChainRejected,
    OscillationDetected,
    Converged,
    Exhausted,
    LoopDetected,
    ViewChange,
    StaleIgnored,
    DuplicateIgnored,
    NoSafePath,
    EventApplied,
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecordKind::RouteSelected => "route_selected",
            RecordKind::Withdrawn => "withdrawn",
            RecordKind::MessageSent => "message_sent",
            RecordKind::MessageReceived => "message_received",
            RecordKind::ChainEstablished => "chain_established",
            RecordKind::ChainRejected => "chain_rejected",
            RecordKind::OscillationDetected => "oscillation_detected",
            RecordKind::Converged => "converged",
            RecordKind::Exhausted => "exhausted",
            RecordKind::LoopDetected => "loop_detected",
            RecordKind::ViewChange => "view_change",
            RecordKind::StaleIgnored => "stale_ignored",
            RecordKind::DuplicateIgnored => "duplicate_ignored",
            RecordKind::NoSafePath => "no_safe_path",
            RecordKind::EventApplied => "event_applied",
        })
    }
}

#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub tick: u64,
    pub actor: String,
    pub kind: RecordKind,
    pub detail: String,
}

/// Terminal condition of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Converged { tick: u64 },
    Oscillating { first_detected: u64, period: u64 },
    Exhausted { ticks: u64 },
}

impl Outcome {
    /// Stable exit-code contract: 0 converged, 3 oscillation, 4 exhausted.
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Converged { .. } => 0,
            Outcome::Oscillating { .. } => 3,
            Outcome::Exhausted { .. } => 4,
        }
    }

    pub fn summary(&self) -> String {
        match self {
            Outcome::Converged { tick } => format!("converged tick={tick}"),
            Outcome::Oscillating {
                first_detected,
                period,
            } => format!(
                "oscillation first_detected={first_detected} period={period} (deterministic replay: the state cycle repeats forever; no convergence is possible)"
            ),
            Outcome::Exhausted { ticks } => format!("exhausted max_ticks={ticks}"),
        }
    }
}

/// Complete trace: header comments, timestamped records, outcome, and the
/// final per-node routes. A pure function of the scenario.
#[derive(Debug, Clone)]
pub struct EventTrace {
    pub header: Vec<String>,
    pub records: Vec<TraceRecord>,
    pub outcome: Outcome,
    pub final_routes: BTreeMap<String, String>,
}

impl EventTrace {
    pub fn count(&self, kind: RecordKind) -> usize {
        self.records.iter().filter(|r| r.kind == kind).count()
    }

    pub fn count_for(&self, actor: &str, kind: RecordKind) -> usize {
        self.records
            .iter()
            .filter(|r| r.kind == kind && r.actor == actor)
            .count()
    }

    /// One record per line `tick actor kind detail...` between a comment
    /// header and a summary footer.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for h in &self.header {
            out.push_str(&format!("# {h}\n"));
        }
        for r in &self.records {
            out.push_str(&format!("{} {} {}", r.tick, r.actor, r.kind));
            if !r.detail.is_empty() {
                out.push(' ');
                out.push_str(&r.detail);
            }
            out.push('\n');
        }
        out.push_str("-- summary --\n");
        out.push_str(&format!("outcome: {}\n", self.outcome.summary()));
        for (node, route) in &self.final_routes {
            out.push_str(&format!("route {node}: {route}\n"));
        }
        out
    }
}
