//! Deterministic discrete-event simulator. Runs a scenario under one of two
//! modes: a greedy path-vector baseline that selects exactly one route per
//! node (and reproduces persistent route oscillation and transient loops),
//! or chain mode, where routes come from established chains guarded by the
//! admission and failover rules.
//!
//! Time is integer ticks. Each tick: scripted events are applied (adjacent
//! nodes observe immediately and report to their neighbours), due messages
//! are delivered, every node re-selects synchronously in label order, the
//! forwarding digraph is checked for loops, and the full system state is
//! snapshotted. A repeat of an earlier snapshot with drained queues and no
//! pending events is convergence; any other repeat is an oscillation — the
//! system is deterministic, so the cycle would replay forever.

pub mod scenario;
pub mod trace;

use std::collections::{BTreeMap, BTreeSet};

pub use scenario::{parse_scenario, Mode, RoutePref, Scenario, ScenarioError, ScriptEvent};
pub use trace::{EventTrace, Outcome, RecordKind, TraceRecord};

use crate::digraph::{find_cycle_in, Vertex};
use crate::rules::{
    establish_chain, rule2_failover_from, ChainProposal, EstablishStatus, Participant,
    SegmentResolution, SegmentStatus,
};
use crate::store::ChainStore;
use crate::structure::{order_pairs, StructureId};

/// What a health report is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Subject {
    Node(Vertex),
    Link(Vertex, Vertex),
}

/// A node's knowledge of one subject: last believed state, the origination
/// time of the report that set it, and the original observer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViewEntry {
    pub up: bool,
    pub origin: Option<u64>,
    pub observer: Vertex,
}

/// What applying a report to a view did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewOutcome {
    /// Believed state flipped.
    Changed,
    /// Entry refreshed (newer origin, same state); nothing visible changed.
    Updated,
    /// Origination time older than the stored one: ignored.
    Stale,
    /// Same origination time or same state: nothing to learn.
    Duplicate,
}

/// Applies one report to a view. With timestamping, a report wins only if
/// its origination time exceeds the stored one; ties break deterministically
/// toward the lexicographically smaller observer. Without timestamping,
/// reports apply in arrival order, so delayed stale news flips the view.
pub fn apply_timestamped_view(
    view: &mut BTreeMap<Subject, ViewEntry>,
    timestamping: bool,
    subject: Subject,
    up: bool,
    origin: Option<u64>,
    observer: Vertex,
    observer_rank: impl Fn(Vertex) -> String,
) -> ViewOutcome {
    let incoming = ViewEntry {
        up,
        origin,
        observer,
    };
    let Some(existing) = view.get(&subject).copied() else {
        view.insert(subject, incoming);
        return ViewOutcome::Changed;
    };
    if !timestamping {
        return if existing.up != up {
            view.insert(subject, incoming);
            ViewOutcome::Changed
        } else {
            ViewOutcome::Duplicate
        };
    }
    match (incoming.origin, existing.origin) {
        (Some(new), Some(old)) if new > old => {
            view.insert(subject, incoming);
            if existing.up != up {
                ViewOutcome::Changed
            } else {
                ViewOutcome::Updated
            }
        }
        (Some(new), Some(old)) if new < old => ViewOutcome::Stale,
        _ => {
            // Equal origination times (or missing stamps): tie-break on the
            // observer label; the losing report is a duplicate, not stale.
            if observer_rank(observer) < observer_rank(existing.observer) {
                view.insert(subject, incoming);
                if existing.up != up {
                    ViewOutcome::Changed
                } else {
                    ViewOutcome::Duplicate
                }
            } else {
                ViewOutcome::Duplicate
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum MsgBody {
    /// Path-vector announcement of the sender's selected route (None is a
    /// withdrawal).
    Announce(Option<Vec<Vertex>>),
    Report {
        subject: Subject,
        up: bool,
        origin: Option<u64>,
        observer: Vertex,
    },
}

#[derive(Debug, Clone)]
struct InFlight {
    deliver_at: u64,
    to: Vertex,
    from: Vertex,
    seq: u64,
    body: MsgBody,
}

#[derive(Debug, Clone, Default)]
struct NodeState {
    /// Baseline: the full selected path starting at this node.
    selected: Option<Vec<Vertex>>,
    /// Last announcement heard from each out-neighbour.
    announcements: BTreeMap<Vertex, Option<Vec<Vertex>>>,
    view: BTreeMap<Subject, ViewEntry>,
    /// Chain mode: chains this node belongs to, in establishment order.
    chains: Vec<StructureId>,
    statuses: BTreeMap<StructureId, SegmentStatus>,
    active_chain: Option<StructureId>,
    /// Rendered current selection, for change detection and the trace.
    route_desc: String,
    /// Arcs this node currently forwards over.
    forwarding: Vec<(Vertex, Vertex)>,
}

/// The simulator. Owns all node state; exercised through [`run`].
pub struct Simulator<'a> {
    scn: &'a Scenario,
    nodes: Vec<NodeState>,
    stores: BTreeMap<Vertex, Participant>,
    down_arcs: BTreeSet<(Vertex, Vertex)>,
    down_nodes: BTreeSet<Vertex>,
    queue: Vec<InFlight>,
    seq: u64,
    records: Vec<TraceRecord>,
    attempted: BTreeSet<Vec<Vertex>>,
}

/// Runs a scenario to convergence, oscillation, or tick exhaustion.
pub fn run(scn: &Scenario, max_ticks: u64) -> EventTrace {
    Simulator::new(scn).run(max_ticks)
}

impl<'a> Simulator<'a> {
    pub fn new(scn: &'a Scenario) -> Self {
        let n = scn.graph.n();
        Simulator {
            scn,
            nodes: vec![NodeState::default(); n],
            stores: (0..n)
                .map(|v| {
                    (
                        v,
                        Participant::evaluating(ChainStore::new(scn.graph.labels().to_vec())),
                    )
                })
                .collect(),
            down_arcs: BTreeSet::new(),
            down_nodes: BTreeSet::new(),
            queue: Vec::new(),
            seq: 0,
            records: Vec::new(),
            attempted: BTreeSet::new(),
        }
    }

    fn label(&self, v: Vertex) -> &str {
        self.scn.graph.label(v)
    }

    fn record(&mut self, tick: u64, actor: Vertex, kind: RecordKind, detail: String) {
        self.records.push(TraceRecord {
            tick,
            actor: self.label(actor).to_string(),
            kind,
            detail,
        });
    }

    fn record_net(&mut self, tick: u64, kind: RecordKind, detail: String) {
        self.records.push(TraceRecord {
            tick,
            actor: "net".into(),
            kind,
            detail,
        });
    }

    fn operational(&self, t: Vertex, h: Vertex) -> bool {
        self.scn.graph.has_arc(t, h)
            && !self.down_arcs.contains(&(t, h))
            && !self.down_nodes.contains(&t)
            && !self.down_nodes.contains(&h)
    }

    /// Link between two nodes usable in either direction for control
    /// traffic.
    fn link_usable(&self, a: Vertex, b: Vertex) -> bool {
        self.operational(a, b) || self.operational(b, a)
    }

    fn neighbors(&self, v: Vertex) -> Vec<Vertex> {
        let mut all: Vec<Vertex> = self
            .scn
            .graph
            .out_neighbors(v)
            .into_iter()
            .chain(self.scn.graph.in_neighbors(v))
            .collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    fn send(&mut self, tick: u64, from: Vertex, to: Vertex, body: MsgBody) {
        let delay = self.scn.delay(from, to);
        let kind_desc = match &body {
            MsgBody::Announce(Some(p)) => format!("announce path={}", self.render_path_vertices(p)),
            MsgBody::Announce(None) => "withdraw".to_string(),
            MsgBody::Report {
                subject,
                up,
                origin,
                ..
            } => format!(
                "report {} {}{}",
                self.render_subject(*subject),
                if *up { "up" } else { "down" },
                origin.map(|t| format!(" origin={t}")).unwrap_or_default()
            ),
        };
        self.record(
            tick,
            from,
            RecordKind::MessageSent,
            format!("to={} {}", self.label(to), kind_desc),
        );
        self.queue.push(InFlight {
            deliver_at: tick + delay,
            to,
            from,
            seq: self.seq,
            body,
        });
        self.seq += 1;
    }

    fn render_subject(&self, s: Subject) -> String {
        match s {
            Subject::Node(v) => format!("node:{}", self.label(v)),
            Subject::Link(a, b) => format!("link:{}-{}", self.label(a), self.label(b)),
        }
    }

    fn render_path_vertices(&self, p: &[Vertex]) -> String {
        p.iter()
            .map(|&v| self.label(v))
            .collect::<Vec<_>>()
            .join("-")
    }

    fn render_arc_path(&self, arcs: &[(Vertex, Vertex)]) -> String {
        if arcs.is_empty() {
            return String::new();
        }
        let mut verts = vec![arcs[0].0];
        for &(_, h) in arcs {
            verts.push(h);
        }
        self.render_path_vertices(&verts)
    }

    pub fn run(mut self, max_ticks: u64) -> EventTrace {
        self.init();
        let mut outcome = Outcome::Exhausted { ticks: max_ticks };
        let mut seen: BTreeMap<String, u64> = BTreeMap::new();
        let mut prev_snapshot = String::new();
        let mut event_cursor = 0usize;

        for tick in 0..max_ticks {
            // 1. Scripted events.
            let mut fired = false;
            while event_cursor < self.scn.events.len() && self.scn.events[event_cursor].0 == tick {
                let (_, ev) = self.scn.events[event_cursor];
                self.apply_event(tick, ev);
                event_cursor += 1;
                fired = true;
            }
            // Long-term timescale: members whose chains all dried up may
            // negotiate a new chain, but only when the topology changed.
            if fired && self.scn.mode == Mode::Chain {
                self.long_term_reproposals(tick);
            }

            // 2. Deliveries.
            self.deliver(tick);

            // 3. Synchronous re-selection in label order.
            for v in 0..self.scn.graph.n() {
                if self.down_nodes.contains(&v) || v == self.scn.destination {
                    continue;
                }
                match self.scn.mode {
                    Mode::Baseline => self.baseline_step(tick, v),
                    Mode::Chain => self.chain_step(tick, v),
                }
            }

            // 4. Transient-loop check over the forwarding digraph.
            if let Some(cycle) = self.detect_loop() {
                let names: Vec<&str> = cycle.iter().map(|&v| self.label(v)).collect();
                self.record_net(tick, RecordKind::LoopDetected, names.join("->"));
            }

            // 5. Termination.
            let snapshot = self.snapshot(tick, event_cursor);
            let quiet = self.queue.is_empty() && event_cursor == self.scn.events.len();
            if quiet && snapshot == prev_snapshot {
                self.record_net(tick, RecordKind::Converged, String::new());
                outcome = Outcome::Converged { tick };
                break;
            }
            if let Some(&t0) = seen.get(&snapshot) {
                let period = tick - t0;
                self.record_net(
                    tick,
                    RecordKind::OscillationDetected,
                    format!("period={period} first_seen={t0}"),
                );
                outcome = Outcome::Oscillating {
                    first_detected: tick,
                    period,
                };
                break;
            }
            seen.insert(snapshot.clone(), tick);
            prev_snapshot = snapshot;
        }

        let mut final_routes = BTreeMap::new();
        for v in 0..self.scn.graph.n() {
            let desc = if self.down_nodes.contains(&v) {
                "down".to_string()
            } else if v == self.scn.destination {
                "destination".to_string()
            } else if self.scn.mode == Mode::Baseline {
                match &self.nodes[v].selected {
                    Some(p) => self.render_path_vertices(p),
                    None => "withdrawn".to_string(),
                }
            } else {
                let d = &self.nodes[v].route_desc;
                if d.is_empty() {
                    "unreachable".into()
                } else {
                    d.clone()
                }
            };
            final_routes.insert(self.label(v).to_string(), desc);
        }

        let header = vec![
            "chain-routing trace v1".to_string(),
            format!("scenario: {}", self.scn.name),
            format!(
                "mode: {} timestamping: {}",
                self.scn.mode,
                if self.scn.timestamping { "on" } else { "off" }
            ),
            "chain bootstrap: serialized establishment at tick 0 (scripted [chains] if present, else derived from top preferences in label order)".to_string(),
            "rediscovery: chains are renegotiated only on topology-change events, by members whose established chains have no safe path left".to_string(),
        ];
        EventTrace {
            header,
            records: self.records,
            outcome,
            final_routes,
        }
    }

    fn init(&mut self) {
        let dest = self.scn.destination;
        self.nodes[dest].selected = Some(vec![dest]);
        self.nodes[dest].route_desc = "destination".into();
        self.record(
            0,
            dest,
            RecordKind::RouteSelected,
            format!("path={}", self.label(dest)),
        );
        if self.scn.mode == Mode::Baseline {
            for u in self.scn.graph.in_neighbors(dest) {
                self.send(0, dest, u, MsgBody::Announce(Some(vec![dest])));
            }
        } else {
            let proposals = if self.scn.chains.is_empty() {
                self.derive_proposals()
            } else {
                self.scn.chains.clone()
            };
            for order in proposals {
                self.attempt_establish(0, &order);
            }
        }
    }

    /// Chain candidates read off the preference tables: each node's explicit
    /// routes, in preference order, as vertex orders.
    fn derive_proposals(&self) -> Vec<Vec<Vertex>> {
        let mut out = Vec::new();
        for (&node, prefs) in &self.scn.preferences {
            for p in prefs {
                if let RoutePref::Explicit(path) = p {
                    if (3..=7).contains(&path.len()) && path[0] == node {
                        out.push(path.clone());
                        break;
                    }
                }
            }
        }
        out
    }

    fn attempt_establish(&mut self, tick: u64, order: &[Vertex]) {
        self.attempted.insert(order.to_vec());
        let names: Vec<&str> = order.iter().map(|&v| self.label(v)).collect();
        let chain_name = format!("C({})", names.join(","));

        let mut required = BTreeMap::new();
        for (a, b) in order_pairs(order) {
            if self.scn.graph.has_arc(a, b) && self.operational(a, b) {
                required.insert((a, b), SegmentResolution::Arc);
            } else if let Some(path) = self.shortest_operational_path(a, b) {
                required.insert((a, b), SegmentResolution::Varc(path));
            } else {
                self.record(
                    tick,
                    order[0],
                    RecordKind::ChainRejected,
                    format!(
                        "{chain_name} segment {}->{} unresolvable",
                        self.label(a),
                        self.label(b)
                    ),
                );
                return;
            }
        }
        let proposal = match ChainProposal::new(order[0], order.to_vec(), required) {
            Ok(p) => p,
            Err(e) => {
                self.record(
                    tick,
                    order[0],
                    RecordKind::ChainRejected,
                    format!("{chain_name} invalid: {e}"),
                );
                return;
            }
        };
        let outcome = establish_chain(&proposal, &mut self.stores);
        match outcome.status {
            EstablishStatus::Established => {
                let id = outcome.chain.expect("established chains register");
                for &member in order {
                    if !self.nodes[member].chains.contains(&id) {
                        self.nodes[member].chains.push(id.clone());
                    }
                    if let Ok(status) = SegmentStatus::for_chain_at(
                        &self.stores[&member].store,
                        &id,
                        member,
                    ) {
                        let mut status = status;
                        // A chain negotiated after failures starts with the
                        // member's current knowledge applied.
                        let down: Vec<Subject> = self.nodes[member]
                            .view
                            .iter()
                            .filter(|(_, e)| !e.up)
                            .map(|(&s, _)| s)
                            .collect();
                        for subject in down {
                            for arc in self.subject_arcs(subject) {
                                status.apply_arc_down(arc);
                            }
                        }
                        self.nodes[member].statuses.insert(id.clone(), status);
                    }
                }
                self.record(
                    tick,
                    order[0],
                    RecordKind::ChainEstablished,
                    format!("{chain_name} messages={}", outcome.messages_sent),
                );
            }
            EstablishStatus::Rejected { by, cycle } => {
                self.record(
                    tick,
                    order[0],
                    RecordKind::ChainRejected,
                    format!(
                        "{chain_name} by={} cycle={} messages={}",
                        self.label(by),
                        cycle.join("->"),
                        outcome.messages_sent
                    ),
                );
            }
        }
    }

    fn shortest_operational_path(&self, a: Vertex, b: Vertex) -> Option<Vec<(Vertex, Vertex)>> {
        let mut pred: BTreeMap<Vertex, Vertex> = BTreeMap::new();
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(a);
        while let Some(u) = queue.pop_front() {
            for w in self.scn.graph.out_neighbors(u) {
                if w != a && !pred.contains_key(&w) && self.operational(u, w) {
                    pred.insert(w, u);
                    if w == b {
                        let mut rev = vec![b];
                        let mut cur = b;
                        while cur != a {
                            cur = pred[&cur];
                            rev.push(cur);
                        }
                        rev.reverse();
                        return Some(rev.windows(2).map(|w| (w[0], w[1])).collect());
                    }
                    queue.push_back(w);
                }
            }
        }
        None
    }

    fn subject_arcs(&self, subject: Subject) -> Vec<(Vertex, Vertex)> {
        match subject {
            Subject::Link(a, b) => vec![(a, b)],
            Subject::Node(v) => {
                let mut arcs = Vec::new();
                for (t, h) in self.scn.graph.arcs() {
                    if t == v || h == v {
                        arcs.push((t, h));
                    }
                }
                arcs
            }
        }
    }

    fn apply_event(&mut self, tick: u64, ev: ScriptEvent) {
        let (subject, up) = match ev {
            ScriptEvent::FailLink(a, b) => (Subject::Link(a, b), false),
            ScriptEvent::RecoverLink(a, b) => (Subject::Link(a, b), true),
            ScriptEvent::FailNode(v) => (Subject::Node(v), false),
            ScriptEvent::RecoverNode(v) => (Subject::Node(v), true),
        };
        self.record_net(
            tick,
            RecordKind::EventApplied,
            format!(
                "{} {}",
                self.render_subject(subject),
                if up { "recovered" } else { "failed" }
            ),
        );
        // Ground truth.
        match ev {
            ScriptEvent::FailLink(a, b) => {
                self.down_arcs.insert((a, b));
            }
            ScriptEvent::RecoverLink(a, b) => {
                self.down_arcs.remove(&(a, b));
            }
            ScriptEvent::FailNode(v) => {
                self.down_nodes.insert(v);
            }
            ScriptEvent::RecoverNode(v) => {
                self.down_nodes.remove(&v);
            }
        }
        // Adjacent nodes observe instantly and report to their neighbours.
        let observers: Vec<Vertex> = match subject {
            Subject::Link(a, b) => vec![a, b],
            Subject::Node(v) => self.neighbors(v),
        }
        .into_iter()
        .filter(|v| !self.down_nodes.contains(v))
        .collect();
        for o in observers {
            let outcome = {
                let node = &mut self.nodes[o];
                let prev = node.view.get(&subject).map(|e| e.up);
                node.view.insert(
                    subject,
                    ViewEntry {
                        up,
                        origin: Some(tick),
                        observer: o,
                    },
                );
                prev != Some(up)
            };
            if outcome {
                self.record(
                    tick,
                    o,
                    RecordKind::ViewChange,
                    format!(
                        "{} {}",
                        self.render_subject(subject),
                        if up { "up" } else { "down" }
                    ),
                );
            }
            self.apply_view_to_statuses(o, subject, up);
            let origin = self.scn.timestamping.then_some(tick);
            for nb in self.neighbors(o) {
                if self.down_nodes.contains(&nb) || !self.link_usable(o, nb) {
                    continue;
                }
                self.send(
                    tick,
                    o,
                    nb,
                    MsgBody::Report {
                        subject,
                        up,
                        origin,
                        observer: o,
                    },
                );
            }
        }
        // Path-vector sessions resync after recoveries.
        if self.scn.mode == Mode::Baseline {
            match ev {
                ScriptEvent::RecoverLink(a, b) => {
                    let announce = self.nodes[b].selected.clone();
                    self.send(tick, b, a, MsgBody::Announce(announce));
                }
                ScriptEvent::RecoverNode(v) => {
                    for w in self.scn.graph.out_neighbors(v) {
                        if !self.down_nodes.contains(&w) && self.link_usable(v, w) {
                            let announce = self.nodes[w].selected.clone();
                            self.send(tick, w, v, MsgBody::Announce(announce));
                        }
                    }
                }
                _ => {}
            }
        }
    }

    fn apply_view_to_statuses(&mut self, node: Vertex, subject: Subject, up: bool) {
        let arcs = self.subject_arcs(subject);
        let statuses = &mut self.nodes[node].statuses;
        for status in statuses.values_mut() {
            for &arc in &arcs {
                if up {
                    status.apply_arc_up(arc);
                } else {
                    status.apply_arc_down(arc);
                }
            }
            if up && status.down_segments().is_empty() {
                // The recovery report doubles as the reconfirmation.
                let confirmed = status.unconfirmed_segments();
                let _ = crate::rules::reinstate(status, &confirmed);
            }
        }
    }

    fn deliver(&mut self, tick: u64) {
        let mut due: Vec<InFlight> = Vec::new();
        let mut rest = Vec::new();
        for m in self.queue.drain(..) {
            if m.deliver_at <= tick {
                due.push(m);
            } else {
                rest.push(m);
            }
        }
        self.queue = rest;
        due.sort_by(|a, b| (a.to, a.from, a.seq).cmp(&(b.to, b.from, b.seq)));
        for m in due {
            if self.down_nodes.contains(&m.to) {
                continue; // dropped at a dead receiver
            }
            match m.body {
                MsgBody::Announce(path) => {
                    self.record(
                        tick,
                        m.to,
                        RecordKind::MessageReceived,
                        format!(
                            "from={} {}",
                            self.label(m.from),
                            match &path {
                                Some(p) => format!("announce path={}", self.render_path_vertices(p)),
                                None => "withdraw".to_string(),
                            }
                        ),
                    );
                    self.nodes[m.to].announcements.insert(m.from, path);
                }
                MsgBody::Report {
                    subject,
                    up,
                    origin,
                    observer,
                } => {
                    self.record(
                        tick,
                        m.to,
                        RecordKind::MessageReceived,
                        format!(
                            "from={} report {} {}{}",
                            self.label(m.from),
                            self.render_subject(subject),
                            if up { "up" } else { "down" },
                            origin.map(|t| format!(" origin={t}")).unwrap_or_default()
                        ),
                    );
                    let labels = self.scn.graph.labels().to_vec();
                    let outcome = apply_timestamped_view(
                        &mut self.nodes[m.to].view,
                        self.scn.timestamping,
                        subject,
                        up,
                        origin,
                        observer,
                        |v| labels[v].clone(),
                    );
                    let detail = format!(
                        "{} {}",
                        self.render_subject(subject),
                        if up { "up" } else { "down" }
                    );
                    match outcome {
                        ViewOutcome::Changed => {
                            self.record(tick, m.to, RecordKind::ViewChange, detail);
                            self.apply_view_to_statuses(m.to, subject, up);
                        }
                        ViewOutcome::Updated => {}
                        ViewOutcome::Stale => {
                            self.record(tick, m.to, RecordKind::StaleIgnored, detail);
                        }
                        ViewOutcome::Duplicate => {
                            self.record(tick, m.to, RecordKind::DuplicateIgnored, detail);
                        }
                    }
                }
            }
        }
    }

    fn baseline_step(&mut self, tick: u64, v: Vertex) {
        let new = baseline_select(
            v,
            self.scn.preferences.get(&v).map(|p| p.as_slice()).unwrap_or(&[]),
            &self.nodes[v].announcements,
            |a, b| self.operational(a, b),
            self.scn.destination,
        );
        if new != self.nodes[v].selected {
            match &new {
                Some(p) => {
                    let desc = format!("path={}", self.render_path_vertices(p));
                    self.record(tick, v, RecordKind::RouteSelected, desc);
                }
                None => self.record(tick, v, RecordKind::Withdrawn, String::new()),
            }
            self.nodes[v].selected = new.clone();
            for u in self.scn.graph.in_neighbors(v) {
                if !self.down_nodes.contains(&u) && self.link_usable(u, v) {
                    self.send(tick, v, u, MsgBody::Announce(new.clone()));
                }
            }
        }
        self.nodes[v].forwarding = match &self.nodes[v].selected {
            Some(p) if p.len() >= 2 => vec![(p[0], p[1])],
            _ => Vec::new(),
        };
    }

    /// Chain-mode selection: stay on the active chain while it has a safe
    /// path (immediate timescale); otherwise fall through the established
    /// chains in order, then to a direct fallback arc.
    fn chain_step(&mut self, tick: u64, v: Vertex) {
        let node = &self.nodes[v];
        let mut candidates: Vec<StructureId> = Vec::new();
        if let Some(active) = &node.active_chain {
            candidates.push(active.clone());
        }
        for id in &node.chains {
            if Some(id) != node.active_chain.as_ref() {
                candidates.push(id.clone());
            }
        }
        let mut chosen: Option<(StructureId, Vec<Vec<(Vertex, Vertex)>>)> = None;
        for id in candidates {
            let Some(status) = node.statuses.get(&id) else {
                continue;
            };
            let safe = rule2_failover_from(status, v);
            if !safe.no_safe_path {
                let mut concrete = Vec::new();
                for path in &safe.paths.paths {
                    let mut arcs = Vec::new();
                    for &(a, b) in path {
                        arcs.extend(status.resolution(a, b).cloned().unwrap_or_default());
                    }
                    concrete.push(arcs);
                }
                chosen = Some((id, concrete));
                break;
            }
        }

        let (desc, forwarding, active) = match chosen {
            Some((id, concrete)) => {
                let rendered: Vec<String> = concrete
                    .iter()
                    .map(|arcs| self.render_arc_path(arcs))
                    .collect();
                let arcs: Vec<(Vertex, Vertex)> = {
                    let mut all: Vec<(Vertex, Vertex)> =
                        concrete.into_iter().flatten().collect();
                    all.sort_unstable();
                    all.dedup();
                    all
                };
                (
                    format!("chain={} safe={}", id, rendered.join("|")),
                    arcs,
                    Some(id),
                )
            }
            None => {
                let dest = self.scn.destination;
                if self.scn.graph.has_arc(v, dest) && self.view_says_up(v, (v, dest)) {
                    (
                        format!("fallback={}-{}", self.label(v), self.label(dest)),
                        vec![(v, dest)],
                        None,
                    )
                } else {
                    (String::new(), Vec::new(), None)
                }
            }
        };

        if desc != self.nodes[v].route_desc {
            if desc.is_empty() {
                self.record(tick, v, RecordKind::NoSafePath, "unreachable".into());
            } else {
                self.record(tick, v, RecordKind::RouteSelected, desc.clone());
            }
        }
        let node = &mut self.nodes[v];
        node.route_desc = desc;
        node.forwarding = forwarding;
        node.active_chain = active;
    }

    /// True unless the node's own view or adjacency marks the arc down.
    fn view_says_up(&self, node: Vertex, arc: (Vertex, Vertex)) -> bool {
        if node == arc.0 || node == arc.1 {
            return self.operational(arc.0, arc.1);
        }
        for (subject, entry) in &self.nodes[node].view {
            if !entry.up && self.subject_arcs(*subject).contains(&arc) {
                return false;
            }
        }
        true
    }

    /// Inspects the forwarding digraph induced by every node's current
    /// selection and returns a directed cycle if one exists.
    pub fn detect_loop(&self) -> Option<Vec<Vertex>> {
        let mut adj: BTreeMap<Vertex, Vec<Vertex>> = BTreeMap::new();
        for v in 0..self.scn.graph.n() {
            if self.down_nodes.contains(&v) {
                continue;
            }
            for &(t, h) in &self.nodes[v].forwarding {
                adj.entry(t).or_default().push(h);
            }
        }
        for outs in adj.values_mut() {
            outs.sort_unstable();
            outs.dedup();
        }
        find_cycle_in(self.scn.graph.n(), |v| {
            adj.get(&v).cloned().unwrap_or_default()
        })
    }

    fn long_term_reproposals(&mut self, tick: u64) {
        for v in 0..self.scn.graph.n() {
            if self.down_nodes.contains(&v) || v == self.scn.destination {
                continue;
            }
            let node = &self.nodes[v];
            if node.chains.is_empty() {
                continue;
            }
            let exhausted = node.chains.iter().all(|id| {
                node.statuses
                    .get(id)
                    .map_or(true, |s| rule2_failover_from(s, v).no_safe_path)
            });
            if !exhausted {
                continue;
            }
            let candidates: Vec<Vec<Vertex>> = self
                .scn
                .preferences
                .get(&v)
                .map(|prefs| {
                    prefs
                        .iter()
                        .filter_map(|p| match p {
                            RoutePref::Explicit(path)
                                if (3..=7).contains(&path.len()) && path[0] == v =>
                            {
                                Some(path.clone())
                            }
                            _ => None,
                        })
                        .collect()
                })
                .unwrap_or_default();
            for order in candidates {
                if !self.attempted.contains(&order) {
                    self.attempt_establish(tick, &order);
                    break;
                }
            }
        }
    }

    /// Serializes everything that determines future behavior; used for
    /// convergence and oscillation detection. Times are relative to `tick`
    /// so that recurring configurations compare equal.
    fn snapshot(&self, tick: u64, event_cursor: usize) -> String {
        let mut out = String::new();
        for v in 0..self.scn.graph.n() {
            let n = &self.nodes[v];
            out.push_str(&format!(
                "n{v}:sel={:?};ann={:?};view={:?};desc={};fwd={:?};active={:?}|",
                n.selected, n.announcements, n.view, n.route_desc, n.forwarding, n.active_chain
            ));
        }
        let mut msgs: Vec<String> = self
            .queue
            .iter()
            .map(|m| {
                format!(
                    "dt={} to={} from={} body={:?}",
                    m.deliver_at.saturating_sub(tick),
                    m.to,
                    m.from,
                    m.body
                )
            })
            .collect();
        msgs.sort();
        out.push_str(&format!("queue={msgs:?};"));
        let pending: Vec<String> = self.scn.events[event_cursor..]
            .iter()
            .map(|(t, e)| format!("dt={} {:?}", t.saturating_sub(tick), e))
            .collect();
        out.push_str(&format!(
            "events={pending:?};down_arcs={:?};down_nodes={:?}",
            self.down_arcs, self.down_nodes
        ));
        out
    }
}

/// The greedy path-vector selection (the Preferred Paths Rule): the highest
/// preference whose first hop is operational and whose continuation matches
/// the next hop's current announcement. Explicit routes need the exact
/// announced suffix; wildcard routes accept whatever loop-free path the
/// named next-hop announces.
pub fn baseline_select(
    node: Vertex,
    prefs: &[RoutePref],
    announcements: &BTreeMap<Vertex, Option<Vec<Vertex>>>,
    arc_ok: impl Fn(Vertex, Vertex) -> bool,
    destination: Vertex,
) -> Option<Vec<Vertex>> {
    for pref in prefs {
        match pref {
            RoutePref::Explicit(path) => {
                if path.len() == 2 {
                    if arc_ok(node, path[1]) && path[1] == destination {
                        return Some(path.clone());
                    }
                    continue;
                }
                let hop = path[1];
                if !arc_ok(node, hop) {
                    continue;
                }
                if let Some(Some(announced)) = announcements.get(&hop) {
                    if announced.as_slice() == &path[1..] {
                        return Some(path.clone());
                    }
                }
            }
            RoutePref::ViaWildcard(hop) => {
                if !arc_ok(node, *hop) {
                    continue;
                }
                if let Some(Some(announced)) = announcements.get(hop) {
                    if announced.last() == Some(&destination) && !announced.contains(&node) {
                        let mut full = vec![node];
                        full.extend(announced.iter().copied());
                        return Some(full);
                    }
                }
            }
        }
    }
    None
}
