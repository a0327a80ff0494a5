//! The dynamic safety layer: the cycle veto on chain admission (Rule 1),
//! failover away from failed segments (Rule 2), and the three-round chain
//! establishment protocol with its 3(n-2) message accounting.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::digraph::{PathSet, Vertex};
use crate::store::{ChainStore, StoreError};
use crate::structure::{canonical_segment_paths, order_pairs, Structure, StructureId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuleError {
    #[error("proposal must start at its proposer")]
    ProposerNotFirst,
    #[error("a proposal seeking intermediaries has 3 to 7 vertices, got {0}")]
    BadSize(usize),
    #[error("repeated vertex in proposal")]
    RepeatedVertex,
    #[error("segment ({0}, {1}) has no resolution")]
    UnresolvedSegment(Vertex, Vertex),
    #[error("cannot confirm segment ({0}, {1}): underlying arcs still down")]
    ConfirmWhileDown(Vertex, Vertex),
    #[error("store error: {0}")]
    Store(#[from] StoreError),
}

/// Concrete resolution of one proposal segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmentResolution {
    /// The segment is a plain graph arc.
    Arc,
    /// The segment is a Varc over the given concrete arc path.
    Varc(Vec<(Vertex, Vertex)>),
}

/// A chain a source AS asks intermediaries to join.
#[derive(Debug, Clone)]
pub struct ChainProposal {
    pub proposer: Vertex,
    pub vertex_order: Vec<Vertex>,
    pub required_segments: BTreeMap<(Vertex, Vertex), SegmentResolution>,
}

impl ChainProposal {
    /// Builds and validates a proposal. Every vertex pair of the order must
    /// carry a resolution.
    pub fn new(
        proposer: Vertex,
        vertex_order: Vec<Vertex>,
        required_segments: BTreeMap<(Vertex, Vertex), SegmentResolution>,
    ) -> Result<Self, RuleError> {
        if vertex_order.first() != Some(&proposer) {
            return Err(RuleError::ProposerNotFirst);
        }
        let n = vertex_order.len();
        if !(3..=7).contains(&n) {
            return Err(RuleError::BadSize(n));
        }
        let distinct: BTreeSet<Vertex> = vertex_order.iter().copied().collect();
        if distinct.len() != n {
            return Err(RuleError::RepeatedVertex);
        }
        for (a, b) in order_pairs(&vertex_order) {
            if !required_segments.contains_key(&(a, b)) {
                return Err(RuleError::UnresolvedSegment(a, b));
            }
        }
        Ok(ChainProposal {
            proposer,
            vertex_order,
            required_segments,
        })
    }

    pub fn intermediaries(&self) -> &[Vertex] {
        &self.vertex_order[1..self.vertex_order.len() - 1]
    }

    pub fn receiver(&self) -> Vertex {
        *self.vertex_order.last().unwrap()
    }

    /// Ordered pairs the proposal would add to a relation: the chain's order
    /// pairs plus the consecutive pairs inside every Varc resolution. The
    /// latter keep the forwarding digraph a subset of the relation digraph,
    /// which is what makes chain-mode forwarding provably loop-free.
    pub fn implied_pairs(&self) -> Vec<(Vertex, Vertex)> {
        let mut pairs = order_pairs(&self.vertex_order);
        for res in self.required_segments.values() {
            if let SegmentResolution::Varc(path) = res {
                pairs.extend(path.iter().copied());
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }
}

/// Rule 1: accept a proposed chain only if its implied vertex pairs keep the
/// local relation acyclic. Rejections carry the witness cycle so the
/// proposer can construct a non-conflicting alternative.
pub fn rule1_check(local: &ChainStore, p: &ChainProposal) -> Result<(), Vec<String>> {
    local.check_pairs(&p.implied_pairs())
}

/// Health of one chain segment as seen by one AS.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegState {
    Up,
    Down,
    /// Not failed itself, but on a path adjacent to a failure; excluded
    /// until reconfirmed.
    Unconfirmed,
}

/// Per-segment status of a chain, derived from an AS's view of arc health.
/// Failing an arc marks every segment whose resolution uses it as down, and
/// quarantines the paths whose intermediate vertex could still route into
/// the failed segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentStatus {
    order: Vec<Vertex>,
    /// The AS whose view this is, when it is a chain member. Quarantine
    /// skips the observer's own paths: an AS always knows its own
    /// forwarding, it only distrusts other intermediates that might still
    /// route into the failure.
    observer: Option<Vertex>,
    state: BTreeMap<(Vertex, Vertex), SegState>,
    resolution: BTreeMap<(Vertex, Vertex), Vec<(Vertex, Vertex)>>,
    down_arcs: BTreeSet<(Vertex, Vertex)>,
}

impl SegmentStatus {
    /// Captures the chain's segments and their primary resolutions; all up.
    pub fn for_chain(store: &ChainStore, chain: &StructureId) -> Result<Self, RuleError> {
        Self::build(store, chain, None)
    }

    /// Same, from the viewpoint of a particular chain member.
    pub fn for_chain_at(
        store: &ChainStore,
        chain: &StructureId,
        observer: Vertex,
    ) -> Result<Self, RuleError> {
        Self::build(store, chain, Some(observer))
    }

    fn build(
        store: &ChainStore,
        chain: &StructureId,
        observer: Option<Vertex>,
    ) -> Result<Self, RuleError> {
        let c = store
            .get(chain)
            .ok_or_else(|| StoreError::NotFound(chain.clone()))?;
        let k = c.vertex_order.len();
        let mut state = BTreeMap::new();
        let mut resolution = BTreeMap::new();
        for i in 0..k {
            for j in i + 1..k {
                let pair = (c.vertex_order[i], c.vertex_order[j]);
                state.insert(pair, SegState::Up);
                resolution.insert(pair, store.resolve_primary(c.segment(i, j))?);
            }
        }
        Ok(SegmentStatus {
            order: c.vertex_order.clone(),
            observer,
            state,
            resolution,
            down_arcs: BTreeSet::new(),
        })
    }

    pub fn order(&self) -> &[Vertex] {
        &self.order
    }

    pub fn get(&self, a: Vertex, b: Vertex) -> Option<SegState> {
        self.state.get(&(a, b)).copied()
    }

    /// Concrete arc path the segment resolves through.
    pub fn resolution(&self, a: Vertex, b: Vertex) -> Option<&Vec<(Vertex, Vertex)>> {
        self.resolution.get(&(a, b))
    }

    pub fn set(&mut self, a: Vertex, b: Vertex, s: SegState) {
        if self.state.contains_key(&(a, b)) {
            self.state.insert((a, b), s);
        }
    }

    fn pos(&self, v: Vertex) -> Option<usize> {
        self.order.iter().position(|&u| u == v)
    }

    /// Marks an arc down: segments resolving through it go down, and every
    /// canonical path through an intermediate that sits at or before the
    /// failed segment's tail is quarantined (its segments become
    /// unconfirmed) — by the chain's topology such an intermediate may still
    /// forward into the failure.
    pub fn apply_arc_down(&mut self, arc: (Vertex, Vertex)) {
        self.down_arcs.insert(arc);
        let newly_down: Vec<(Vertex, Vertex)> = self
            .resolution
            .iter()
            .filter(|(pair, arcs)| {
                arcs.contains(&arc) && self.state[*pair] != SegState::Down
            })
            .map(|(&pair, _)| pair)
            .collect();
        for pair in &newly_down {
            self.state.insert(*pair, SegState::Down);
        }
        let n = self.order.len();
        for (x, _) in newly_down {
            let Some(xi) = self.pos(x) else { continue };
            for vi in 1..n - 1 {
                let v = self.order[vi];
                if vi <= xi && Some(v) != self.observer {
                    for pair in [(self.order[0], v), (v, self.order[n - 1])] {
                        if self.state.get(&pair) == Some(&SegState::Up) {
                            self.state.insert(pair, SegState::Unconfirmed);
                        }
                    }
                }
            }
        }
    }

    /// Marks an arc as recovered. Down segments whose arcs are all up again
    /// become unconfirmed — usable only after reinstatement.
    pub fn apply_arc_up(&mut self, arc: (Vertex, Vertex)) {
        self.down_arcs.remove(&arc);
        let pairs: Vec<(Vertex, Vertex)> = self.state.keys().copied().collect();
        for pair in pairs {
            if self.state[&pair] == SegState::Down
                && !self.resolution[&pair]
                    .iter()
                    .any(|a| self.down_arcs.contains(a))
            {
                self.state.insert(pair, SegState::Unconfirmed);
            }
        }
    }

    pub fn down_segments(&self) -> Vec<(Vertex, Vertex)> {
        self.state
            .iter()
            .filter(|(_, &s)| s == SegState::Down)
            .map(|(&p, _)| p)
            .collect()
    }

    pub fn unconfirmed_segments(&self) -> Vec<(Vertex, Vertex)> {
        self.state
            .iter()
            .filter(|(_, &s)| s == SegState::Unconfirmed)
            .map(|(&p, _)| p)
            .collect()
    }
}

/// Safe paths according to Rule 2, with an explicit marker when nothing
/// survives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafePaths {
    /// Canonical paths (as segment sequences) all of whose segments are up.
    pub paths: PathSet,
    pub no_safe_path: bool,
}

/// Rule 2: of the chain's canonical disjoint paths, keep only those whose
/// segments are all up. Quarantined (unconfirmed) segments count as unsafe
/// until reinstated.
pub fn rule2_failover(status: &SegmentStatus) -> SafePaths {
    let mut safe = Vec::new();
    for path in canonical_segment_paths(&status.order).paths {
        if path
            .iter()
            .all(|&(a, b)| status.get(a, b) == Some(SegState::Up))
        {
            safe.push(path);
        }
    }
    let no_safe_path = safe.is_empty();
    SafePaths {
        paths: PathSet {
            paths: safe,
            disjoint: true,
        },
        no_safe_path,
    }
}

/// Failover for the sub-chain rooted at `from`: the paths `from` itself may
/// use toward the receiver. `from` must be a chain vertex.
pub fn rule2_failover_from(status: &SegmentStatus, from: Vertex) -> SafePaths {
    let Some(i) = status.pos(from) else {
        return SafePaths {
            paths: PathSet::default(),
            no_safe_path: true,
        };
    };
    let sub = &status.order[i..];
    let mut safe = Vec::new();
    for path in canonical_segment_paths(sub).paths {
        if path
            .iter()
            .all(|&(a, b)| status.get(a, b) == Some(SegState::Up))
        {
            safe.push(path);
        }
    }
    let no_safe_path = safe.is_empty();
    SafePaths {
        paths: PathSet {
            paths: safe,
            disjoint: true,
        },
        no_safe_path,
    }
}

/// Reinstates confirmed segments: unconfirmed ones return to service.
/// Confirming a segment that is still down (its arcs have not recovered) is
/// a contract error; confirming an up segment is a no-op.
pub fn reinstate(
    status: &mut SegmentStatus,
    confirmed: &[(Vertex, Vertex)],
) -> Result<(), RuleError> {
    for &(a, b) in confirmed {
        match status.get(a, b) {
            Some(SegState::Unconfirmed) => status.set(a, b, SegState::Up),
            Some(SegState::Up) | None => {}
            Some(SegState::Down) => return Err(RuleError::ConfirmWhileDown(a, b)),
        }
    }
    Ok(())
}

/// How a participant answers an establishment request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponderPolicy {
    /// Apply Rule 1 against the participant's own store.
    Evaluate,
    AlwaysAccept,
    AlwaysReject,
}

/// One simulated AS taking part in establishment.
#[derive(Debug, Clone)]
pub struct Participant {
    pub store: ChainStore,
    pub policy: ResponderPolicy,
}

impl Participant {
    pub fn evaluating(store: ChainStore) -> Self {
        Participant {
            store,
            policy: ResponderPolicy::Evaluate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EstablishStatus {
    Established,
    Rejected { by: Vertex, cycle: Vec<String> },
}

/// Result of one establishment attempt. With all-accept responses the
/// protocol costs exactly 3(n-2) messages: a request to every intermediary,
/// a reply from each, and a confirmation to each acceptor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EstablishmentOutcome {
    pub status: EstablishStatus,
    pub messages_sent: usize,
    pub rounds: usize,
    /// Chain id registered at every participant on success.
    pub chain: Option<StructureId>,
}

/// Runs the three-round establishment protocol for one proposal,
/// serialized and deterministic.
///
/// Rule 1 binds every AS that becomes part of the chain, so the receiver is
/// consulted too; its exchange rides on the ordinary announcement machinery
/// and does not count toward the 3(n-2) extra messages. Replies from
/// evaluating intermediaries may upgrade a segment to a chain they already
/// hold (the upgrade's subtree travels with the confirmation), which is how
/// knowledge of earlier chains spreads to later proposers.
pub fn establish_chain(
    proposal: &ChainProposal,
    participants: &mut BTreeMap<Vertex, Participant>,
) -> EstablishmentOutcome {
    let n = proposal.vertex_order.len();

    // The proposer applies Rule 1 to its own store before spending messages.
    if let Some(p) = participants.get(&proposal.proposer) {
        if p.policy == ResponderPolicy::Evaluate {
            if let Err(cycle) = rule1_check(&p.store, proposal) {
                return EstablishmentOutcome {
                    status: EstablishStatus::Rejected {
                        by: proposal.proposer,
                        cycle,
                    },
                    messages_sent: 0,
                    rounds: 0,
                    chain: None,
                };
            }
        }
    }

    // Round 1: requests to all n-2 intermediaries. Round 2: their replies.
    let mut messages = 2 * (n - 2);
    let mut upgrades: BTreeMap<(Vertex, Vertex), (Vertex, StructureId)> = BTreeMap::new();
    let mut rejection: Option<(Vertex, Vec<String>)> = None;
    for &v in proposal.intermediaries() {
        let Some(p) = participants.get(&v) else {
            continue;
        };
        match p.policy {
            ResponderPolicy::AlwaysAccept => {}
            ResponderPolicy::AlwaysReject => {
                if rejection.is_none() {
                    rejection = Some((v, Vec::new()));
                }
            }
            ResponderPolicy::Evaluate => {
                if let Err(cycle) = rule1_check(&p.store, proposal) {
                    if rejection.is_none() {
                        rejection = Some((v, cycle));
                    }
                } else {
                    for &pair in proposal.required_segments.keys() {
                        if let Some(chain) = p
                            .store
                            .by_endpoints(pair.0, pair.1)
                            .into_iter()
                            .find(|s| s.is_chain())
                        {
                            upgrades.entry(pair).or_insert((v, chain.id.clone()));
                        }
                    }
                }
            }
        }
    }
    if let Some((by, cycle)) = rejection {
        return EstablishmentOutcome {
            status: EstablishStatus::Rejected { by, cycle },
            messages_sent: messages,
            rounds: 2,
            chain: None,
        };
    }

    // Receiver's check (not an extra message; Rule 1 still binds it).
    let receiver = proposal.receiver();
    if let Some(p) = participants.get(&receiver) {
        if p.policy == ResponderPolicy::Evaluate {
            if let Err(cycle) = rule1_check(&p.store, proposal) {
                return EstablishmentOutcome {
                    status: EstablishStatus::Rejected {
                        by: receiver,
                        cycle,
                    },
                    messages_sent: messages,
                    rounds: 2,
                    chain: None,
                };
            }
        }
    }

    // Round 3: confirmations to all acceptors; then everyone registers.
    messages += n - 2;
    let mut chain_id = None;
    let upgrade_sources: BTreeMap<(Vertex, Vertex), (Vertex, StructureId)> = upgrades;
    let member_list = proposal.vertex_order.clone();
    for &member in &member_list {
        let keys: Vec<Vertex> = participants.keys().copied().collect();
        if !keys.contains(&member) {
            continue;
        }
        // Import upgraded subtrees first, from a clone of the source store.
        let mut imports: Vec<((Vertex, Vertex), StructureId)> = Vec::new();
        for (&pair, (src, id)) in &upgrade_sources {
            if let Some(srcp) = participants.get(src) {
                if srcp.store.contains(id) {
                    let src_store = srcp.store.clone();
                    let target = participants.get_mut(&member).unwrap();
                    if target.store.import_subtree(&src_store, id).is_ok() {
                        imports.push((pair, id.clone()));
                    }
                }
            }
        }
        let target = participants.get_mut(&member).unwrap();
        match register_proposal(&mut target.store, proposal, &imports) {
            Ok(id) => chain_id = Some(id),
            Err(_) => {
                // Upgrade subtree clashed with this store; fall back to the
                // plain resolutions.
                if let Ok(id) = register_proposal(&mut target.store, proposal, &[]) {
                    chain_id = Some(id);
                }
            }
        }
    }

    EstablishmentOutcome {
        status: EstablishStatus::Established,
        messages_sent: messages,
        rounds: 3,
        chain: chain_id,
    }
}

/// Materializes a proposal's chain in one store using the given segment
/// upgrades where available and the proposal's own resolutions elsewhere.
pub fn register_proposal(
    store: &mut ChainStore,
    proposal: &ChainProposal,
    upgrades: &[((Vertex, Vertex), StructureId)],
) -> Result<StructureId, StoreError> {
    let upgrade_map: BTreeMap<(Vertex, Vertex), StructureId> =
        upgrades.iter().cloned().collect();
    let mut segments = BTreeMap::new();
    for (&pair, res) in &proposal.required_segments {
        if let Some(id) = upgrade_map.get(&pair) {
            if store.contains(id) {
                segments.insert(pair, id.clone());
                continue;
            }
        }
        let id = match res {
            SegmentResolution::Arc => store.ensure_arc(pair.0, pair.1, 1)?,
            SegmentResolution::Varc(path) => {
                let mut children = Vec::new();
                for &(a, b) in path {
                    children.push(store.ensure_arc(a, b, 2)?);
                }
                if children.len() == 1 {
                    children.pop().unwrap()
                } else {
                    store.make_varc(&children, 1)?
                }
            }
        };
        segments.insert(pair, id);
    }
    store.make_chain(&proposal.vertex_order, &segments, 0)
}

/// Convenience: structure of a chain in some store.
pub fn chain_in<'a>(store: &'a ChainStore, id: &StructureId) -> Option<&'a Structure> {
    store.get(id).filter(|s| s.is_chain())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digraph::{Digraph, Role};

    fn labels4() -> Vec<String> {
        ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect()
    }

    fn arcs_proposal(order: &[Vertex]) -> ChainProposal {
        let mut required = BTreeMap::new();
        for (a, b) in order_pairs(order) {
            required.insert((a, b), SegmentResolution::Arc);
        }
        ChainProposal::new(order[0], order.to_vec(), required).unwrap()
    }

    fn fresh_participants(labels: &[String], nodes: &[Vertex]) -> BTreeMap<Vertex, Participant> {
        nodes
            .iter()
            .map(|&v| (v, Participant::evaluating(ChainStore::new(labels.to_vec()))))
            .collect()
    }

    #[test]
    fn rule1_accepts_into_empty_store() {
        let store = ChainStore::new(labels4());
        let p = arcs_proposal(&[0, 1, 3]);
        assert!(rule1_check(&store, &p).is_ok());
    }

    #[test]
    fn pro_avoidance_example() {
        // C_a(a,b,d) established, then C_c(c,a,d); the intermediary c then
        // rejects C_b(b,c,d) because its own structures already order a
        // before b.
        let labels = labels4();
        let mut parts = fresh_participants(&labels, &[0, 1, 2, 3]);

        let out = establish_chain(&arcs_proposal(&[0, 1, 3]), &mut parts);
        assert_eq!(out.status, EstablishStatus::Established);
        assert_eq!(out.messages_sent, 3);

        let out = establish_chain(&arcs_proposal(&[2, 0, 3]), &mut parts);
        assert_eq!(out.status, EstablishStatus::Established);
        // a's reply upgraded segment (a,d) to C_a, so c now holds C_a too.
        assert!(parts[&2]
            .store
            .contains(&parts[&2].store.chain_structure_id(&[0, 1, 3])));

        let out = establish_chain(&arcs_proposal(&[1, 2, 3]), &mut parts);
        match out.status {
            EstablishStatus::Rejected { by, cycle } => {
                assert_eq!(by, 2, "c applies Rule 1");
                assert_eq!(cycle.first(), cycle.last());
                let members: BTreeSet<&String> = cycle.iter().collect();
                assert!(members.len() >= 3);
            }
            other => panic!("expected rejection, got {other:?}"),
        }
        assert_eq!(out.messages_sent, 2);
        assert_eq!(out.rounds, 2);
    }

    #[test]
    fn idempotent_reproposal_accepted() {
        let labels = labels4();
        let mut parts = fresh_participants(&labels, &[0, 1, 2, 3]);
        let p = arcs_proposal(&[0, 1, 3]);
        assert_eq!(
            establish_chain(&p, &mut parts).status,
            EstablishStatus::Established
        );
        assert_eq!(
            establish_chain(&p, &mut parts).status,
            EstablishStatus::Established
        );
    }

    #[test]
    fn message_cost_formula() {
        for n in 3..=7 {
            let labels: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
            let order: Vec<Vertex> = (0..n).collect();
            let mut parts = fresh_participants(&labels, &order);
            let out = establish_chain(&arcs_proposal(&order), &mut parts);
            assert_eq!(out.status, EstablishStatus::Established);
            assert_eq!(out.messages_sent, 3 * (n - 2));
            assert_eq!(out.rounds, 3);
        }
    }

    #[test]
    fn scripted_rejection_counts_two_rounds() {
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let mut parts = fresh_participants(&labels, &[0, 1, 2]);
        parts.get_mut(&1).unwrap().policy = ResponderPolicy::AlwaysReject;
        let out = establish_chain(&arcs_proposal(&[0, 1, 2]), &mut parts);
        assert!(matches!(
            out.status,
            EstablishStatus::Rejected { by: 1, .. }
        ));
        assert_eq!(out.messages_sent, 2);
    }

    fn griffin_chain_status() -> (ChainStore, StructureId) {
        // C1(c,f,b,d) with Varcs ca+ad for segment cd and fa+ad for fd.
        let labels: Vec<String> = ["a", "b", "c", "d", "e", "f"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut store = ChainStore::new(labels);
        let (a, b, c, d, f) = (0, 1, 2, 3, 5);
        let mut required = BTreeMap::new();
        required.insert((c, f), SegmentResolution::Arc);
        required.insert((c, b), SegmentResolution::Arc);
        required.insert((c, d), SegmentResolution::Varc(vec![(c, a), (a, d)]));
        required.insert((f, b), SegmentResolution::Arc);
        required.insert((f, d), SegmentResolution::Varc(vec![(f, a), (a, d)]));
        required.insert((b, d), SegmentResolution::Arc);
        let p = ChainProposal::new(c, vec![c, f, b, d], required).unwrap();
        let id = register_proposal(&mut store, &p, &[]).unwrap();
        (store, id)
    }

    #[test]
    fn rule2_failover_on_griffin_chain() {
        let (store, id) = griffin_chain_status();
        let (b, c, d, f) = (1, 2, 3, 5);
        let mut status = SegmentStatus::for_chain(&store, &id).unwrap();

        // No failures: all 3 canonical paths are safe.
        assert_eq!(rule2_failover(&status).paths.len(), 3);

        // Link b-d fails: only the direct Varc through a survives; the path
        // through f is quarantined because f sits before b in the order.
        status.apply_arc_down((b, d));
        let safe = rule2_failover(&status);
        assert_eq!(safe.paths.paths, vec![vec![(c, d)]]);
        assert!(!safe.no_safe_path);
        assert_eq!(status.get(c, f), Some(SegState::Unconfirmed));
        assert_eq!(status.get(f, d), Some(SegState::Unconfirmed));
        assert_eq!(status.get(b, d), Some(SegState::Down));

        // b itself has no safe sub-path left.
        assert!(rule2_failover_from(&status, b).no_safe_path);
        // In f's own view, f keeps its direct Varc through a.
        let mut f_status = SegmentStatus::for_chain_at(&store, &id, f).unwrap();
        f_status.apply_arc_down((b, d));
        let f_safe = rule2_failover_from(&f_status, f);
        assert_eq!(f_safe.paths.paths, vec![vec![(f, d)]]);
    }

    #[test]
    fn reinstate_after_recovery() {
        let (store, id) = griffin_chain_status();
        let (b, c, d, f) = (1, 2, 3, 5);
        let mut status = SegmentStatus::for_chain(&store, &id).unwrap();
        status.apply_arc_down((b, d));

        // Confirming a still-down segment is a contract error.
        assert_eq!(
            reinstate(&mut status, &[(b, d)]),
            Err(RuleError::ConfirmWhileDown(b, d))
        );
        // Empty confirmation changes nothing.
        let before = status.clone();
        reinstate(&mut status, &[]).unwrap();
        assert_eq!(status, before);

        // After recovery plus reconfirmation all paths return.
        status.apply_arc_up((b, d));
        let confirmed = status.unconfirmed_segments();
        reinstate(&mut status, &confirmed).unwrap();
        let safe = rule2_failover(&status);
        assert_eq!(safe.paths.len(), 3);
        // Reconfirming an up segment is a no-op.
        reinstate(&mut status, &[(c, f)]).unwrap();
        assert_eq!(rule2_failover(&status).paths.len(), 3);
    }

    #[test]
    fn order_position_forbids_backward_routing() {
        // Chain C(d,h,g,e): when g's segment to e goes down, g has nothing
        // left (it cannot route via h, which sits before it), while d keeps
        // its direct segment.
        let labels: Vec<String> = ["d", "e", "g", "h"].iter().map(|s| s.to_string()).collect();
        let mut store = ChainStore::new(labels);
        let (d, e, g, h) = (0, 1, 2, 3);
        let order = vec![d, h, g, e];
        let mut required = BTreeMap::new();
        for (x, y) in order_pairs(&order) {
            required.insert((x, y), SegmentResolution::Arc);
        }
        let p = ChainProposal::new(d, order, required).unwrap();
        let id = register_proposal(&mut store, &p, &[]).unwrap();
        let mut status = SegmentStatus::for_chain(&store, &id).unwrap();
        status.apply_arc_down((g, e));

        assert!(rule2_failover_from(&status, g).no_safe_path);
        let d_safe = rule2_failover_from(&status, d);
        assert_eq!(d_safe.paths.paths, vec![vec![(d, e)]]);
    }

    #[test]
    fn global_relation_stays_acyclic_across_admissions() {
        // Random-ish preference triangles: whatever the proposal order, the
        // union of all admitted chains' relations is acyclic at the
        // destination, which sees every chain.
        let labels = labels4();
        for perm in [
            [[0, 1, 3], [1, 2, 3], [2, 0, 3]],
            [[1, 2, 3], [2, 0, 3], [0, 1, 3]],
            [[2, 0, 3], [0, 1, 3], [1, 2, 3]],
        ] {
            let mut parts = fresh_participants(&labels, &[0, 1, 2, 3]);
            for order in perm {
                let _ = establish_chain(&arcs_proposal(&order), &mut parts);
            }
            for p in parts.values() {
                assert!(p.store.relation_is_acyclic());
            }
        }
    }

    #[test]
    fn proposal_validation() {
        let mut required = BTreeMap::new();
        required.insert((0, 1), SegmentResolution::Arc);
        assert!(matches!(
            ChainProposal::new(1, vec![0, 1, 2], required.clone()),
            Err(RuleError::ProposerNotFirst)
        ));
        assert!(matches!(
            ChainProposal::new(0, vec![0, 1], required.clone()),
            Err(RuleError::BadSize(2))
        ));
        assert!(matches!(
            ChainProposal::new(0, vec![0, 1, 2], required),
            Err(RuleError::UnresolvedSegment(_, _))
        ));
    }

    #[test]
    fn forwarding_union_stays_acyclic_after_deletions() {
        // Union forwarding digraph of the established chains, minus any arc
        // or vertex, stays acyclic.
        let labels = labels4();
        let mut parts = fresh_participants(&labels, &[0, 1, 2, 3]);
        establish_chain(&arcs_proposal(&[0, 1, 3]), &mut parts);
        establish_chain(&arcs_proposal(&[2, 0, 3]), &mut parts);
        let receiver_store = &parts[&3].store;
        let arcs: Vec<(String, String)> = receiver_store
            .relation_pairs()
            .map(|(t, h)| (labels[t].clone(), labels[h].clone()))
            .collect();
        let arc_refs: Vec<(&str, &str)> = arcs
            .iter()
            .map(|(t, h)| (t.as_str(), h.as_str()))
            .collect();
        let labels_ref: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
        let g = Digraph::new(&labels_ref, &arc_refs, Role::Generic);
        assert!(g.is_acyclic());
        for v in g.vertices() {
            assert!(g.delete_vertex(v).unwrap().is_acyclic());
        }
        for (t, h) in g.arcs().collect::<Vec<_>>() {
            let mut g2 = g.clone();
            g2.remove_arc(t, h);
            assert!(g2.is_acyclic());
        }
    }
}
