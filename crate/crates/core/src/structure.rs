//! The three basic structures — arc, Varc, chain — and the closed-form
//! chain metrics. A chain is a complete order: on `n` vertices it has
//! `n(n-1)/2` segments, a unique transmitter and receiver, and `n-1`
//! segment-disjoint canonical paths between them.

use std::fmt;

use thiserror::Error;

use crate::digraph::{Digraph, PathSet, Vertex};

/// Chains larger than this are too expensive to maintain: past 7 vertices
/// the stand-by arcs outnumber the arcs used by the disjoint paths.
pub const MAX_CHAIN_SIZE: usize = 7;

/// Identifier of a registered structure. Content-derived, so registering the
/// same structure twice is idempotent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StructureId(pub String);

impl fmt::Display for StructureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StructureKind {
    Arc,
    Varc,
    Chain,
}

impl fmt::Display for StructureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StructureKind::Arc => "arc",
            StructureKind::Varc => "varc",
            StructureKind::Chain => "chain",
        })
    }
}

/// One registered structure. Arcs have no children; a Varc's children form a
/// directed path from tail to head; a chain's children are its `k(k-1)/2`
/// segments in lexicographic `(i, j)` position order over `vertex_order`.
///
/// `level` is the level of abstraction assigned when the structure was
/// created (0 for roots, parent level + 1 for children created with their
/// parent). A structure adopted later by another parent keeps its original
/// level: structures may be shared between parents, so a single global level
/// cannot always exist. Context-accurate levels come from
/// [`crate::store::ChainStore::decomposition`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Structure {
    pub kind: StructureKind,
    pub id: StructureId,
    pub level: usize,
    pub endpoints: (Vertex, Vertex),
    pub children: Vec<StructureId>,
    /// Transmitter-to-receiver vertex sequence; empty unless `kind == Chain`.
    pub vertex_order: Vec<Vertex>,
}

impl Structure {
    pub fn is_chain(&self) -> bool {
        self.kind == StructureKind::Chain
    }

    /// Number of vertices for chains, 0 otherwise.
    pub fn chain_len(&self) -> usize {
        self.vertex_order.len()
    }

    /// Chain height: one less than the vertex count.
    pub fn height(&self) -> usize {
        self.vertex_order.len().saturating_sub(1)
    }

    /// Index of segment `(order[i], order[j])` within a chain's children.
    pub fn segment_index(k: usize, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < k);
        // Segments are stored in lexicographic (i, j) order.
        i * k - i * (i + 1) / 2 + (j - i - 1)
    }

    /// Child id for the segment between positions `i < j` of a chain.
    pub fn segment(&self, i: usize, j: usize) -> &StructureId {
        &self.children[Self::segment_index(self.vertex_order.len(), i, j)]
    }

    /// Position of a vertex within a chain's order.
    pub fn position(&self, v: Vertex) -> Option<usize> {
        self.vertex_order.iter().position(|&u| u == v)
    }
}

/// Closed-form counts for a chain of `n` vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainMetrics {
    pub n: usize,
    /// One less than the vertex count; equals the arc-disjoint path count.
    pub height: usize,
    pub arcs_total: usize,
    /// Arcs used by the canonical disjoint paths: 2n - 3.
    pub used: usize,
    /// Stand-by arcs not used by those paths: (n-2)(n-3)/2.
    pub unused: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("a chain needs at least 2 vertices, got {0}")]
    TooSmall(usize),
    #[error("vertex not in chain")]
    VertexAbsent,
    #[error("shrinking below 2 vertices")]
    WouldVanish,
    #[error("not a complete order")]
    NotCompleteOrder,
}

/// Metrics for a chain of `k >= 2` vertices.
pub fn chain_metrics(k: usize) -> Result<ChainMetrics, ChainError> {
    if k < 2 {
        return Err(ChainError::TooSmall(k));
    }
    Ok(ChainMetrics {
        n: k,
        height: k - 1,
        arcs_total: k * (k - 1) / 2,
        used: 2 * k - 3,
        unused: (k - 2) * k.saturating_sub(3) / 2,
    })
}

/// True iff `d` is a complete order: irreflexive, asymmetric, transitive and
/// complete. Equivalently, acyclic with exactly n(n-1)/2 arcs.
pub fn is_complete_order(d: &Digraph) -> bool {
    let n = d.n();
    d.arc_count() == n * (n - 1) / 2 && d.is_acyclic()
}

/// The unique in-degree-0 vertex and the unique out-degree-0 vertex of a
/// complete order.
pub fn transmitter_receiver(d: &Digraph) -> Result<(Vertex, Vertex), ChainError> {
    if !is_complete_order(d) || d.n() == 0 {
        return Err(ChainError::NotCompleteOrder);
    }
    let mut transmitter = None;
    let mut receiver = None;
    for v in d.vertices() {
        if d.in_degree(v) == 0 {
            if transmitter.replace(v).is_some() {
                return Err(ChainError::NotCompleteOrder);
            }
        }
        if d.out_degree(v) == 0 {
            if receiver.replace(v).is_some() {
                return Err(ChainError::NotCompleteOrder);
            }
        }
    }
    match (transmitter, receiver) {
        (Some(t), Some(r)) => Ok((t, r)),
        _ => Err(ChainError::NotCompleteOrder),
    }
}

/// The canonical `n-1` segment-disjoint paths of a chain given as a vertex
/// order: the direct segment transmitter->receiver plus, for each
/// intermediate `v`, the two-segment path through `v`. Uses `2n-3` segments.
/// Paths here are sequences of segment endpoints, not concrete arcs.
pub fn canonical_segment_paths(order: &[Vertex]) -> PathSet {
    let n = order.len();
    let mut paths = Vec::new();
    if n >= 2 {
        paths.push(vec![(order[0], order[n - 1])]);
        for i in 1..n - 1 {
            paths.push(vec![(order[0], order[i]), (order[i], order[n - 1])]);
        }
    }
    PathSet {
        paths,
        disjoint: true,
    }
}

/// The vertex order of the chain with `v` removed. Pure order operation;
/// re-registration against a store recomputes segments and metrics.
pub fn shrink_order(order: &[Vertex], v: Vertex) -> Result<Vec<Vertex>, ChainError> {
    if !order.contains(&v) {
        return Err(ChainError::VertexAbsent);
    }
    if order.len() <= 2 {
        return Err(ChainError::WouldVanish);
    }
    Ok(order.iter().copied().filter(|&u| u != v).collect())
}

/// Why a grow attempt was refused.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum GrowError {
    #[error("chain already has the maximum of {max} vertices")]
    SizeCap { max: usize },
    #[error("vertex already in chain")]
    AlreadyPresent,
    #[error("position {pos} out of range for {len} vertices")]
    BadPosition { pos: usize, len: usize },
    #[error("missing segments: {0:?}")]
    MissingSegments(Vec<(Vertex, Vertex)>),
}

/// Outcome of a successful grow: the new order plus the `k` segments the
/// insertion consumed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrownOrder {
    pub order: Vec<Vertex>,
    pub new_segments: Vec<(Vertex, Vertex)>,
}

/// Inserts `v` at `position` in the order. Augmenting a `k`-vertex chain
/// requires exactly `k` new segments, between `v` and every existing vertex;
/// all must be present in `available`. Growing past `max_size` is refused
/// outright.
pub fn grow_order<F>(
    order: &[Vertex],
    v: Vertex,
    position: usize,
    max_size: usize,
    available: F,
) -> Result<GrownOrder, GrowError>
where
    F: Fn(Vertex, Vertex) -> bool,
{
    if order.len() >= max_size {
        return Err(GrowError::SizeCap { max: max_size });
    }
    if order.contains(&v) {
        return Err(GrowError::AlreadyPresent);
    }
    if position > order.len() {
        return Err(GrowError::BadPosition {
            pos: position,
            len: order.len(),
        });
    }
    let mut needed = Vec::new();
    for (i, &u) in order.iter().enumerate() {
        if i < position {
            needed.push((u, v));
        } else {
            needed.push((v, u));
        }
    }
    let missing: Vec<(Vertex, Vertex)> = needed
        .iter()
        .copied()
        .filter(|&(a, b)| !available(a, b))
        .collect();
    if !missing.is_empty() {
        return Err(GrowError::MissingSegments(missing));
    }
    let mut new_order = order.to_vec();
    new_order.insert(position, v);
    Ok(GrownOrder {
        order: new_order,
        new_segments: needed,
    })
}

/// True iff some vertex pair appears in both chains with opposite relative
/// order. Conflicting chains cannot coexist without creating a cycle.
pub fn chains_conflict(a: &[Vertex], b: &[Vertex]) -> bool {
    let pos_b: std::collections::BTreeMap<Vertex, usize> =
        b.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            if let (Some(&pi), Some(&pj)) = (pos_b.get(&a[i]), pos_b.get(&a[j])) {
                if pi > pj {
                    return true;
                }
            }
        }
    }
    false
}

/// All ordered pairs `(order[i], order[j])` with `i < j`: the binary
/// relation a chain contributes to a store.
pub fn order_pairs(order: &[Vertex]) -> Vec<(Vertex, Vertex)> {
    let mut pairs = Vec::new();
    for i in 0..order.len() {
        for j in i + 1..order.len() {
            pairs.push((order[i], order[j]));
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digraph::Role;

    #[test]
    fn fig1_complete_order_recognized() {
        let c = Digraph::complete_order(&["e", "a", "b", "c", "d"]);
        assert!(is_complete_order(&c));
        let (t, r) = transmitter_receiver(&c).unwrap();
        assert_eq!(c.label(t), "e");
        assert_eq!(c.label(r), "d");
    }

    #[test]
    fn fig1_partial_order_rejected() {
        let g = Digraph::new(
            &["a", "b", "c", "d", "e"],
            &[
                ("a", "b"),
                ("a", "c"),
                ("a", "d"),
                ("b", "c"),
                ("b", "d"),
                ("c", "d"),
                ("e", "b"),
                ("e", "c"),
                ("e", "d"),
            ],
            Role::Generic,
        );
        assert!(!is_complete_order(&g));
        assert_eq!(
            transmitter_receiver(&g),
            Err(ChainError::NotCompleteOrder)
        );
    }

    #[test]
    fn single_arc_is_complete_order() {
        let g = Digraph::new(&["a", "b"], &[("a", "b")], Role::Generic);
        assert!(is_complete_order(&g));
        assert_eq!(transmitter_receiver(&g).unwrap(), (0, 1));
    }

    #[test]
    fn metrics_spot_values() {
        let m3 = chain_metrics(3).unwrap();
        assert_eq!((m3.used, m3.unused), (3, 0));
        let m8 = chain_metrics(8).unwrap();
        assert_eq!((m8.used, m8.unused), (13, 15));
        let m2 = chain_metrics(2).unwrap();
        assert_eq!((m2.height, m2.arcs_total, m2.used, m2.unused), (1, 1, 1, 0));
        assert_eq!(chain_metrics(1), Err(ChainError::TooSmall(1)));
    }

    #[test]
    fn metrics_identity_used_plus_unused() {
        for k in 2..=12 {
            let m = chain_metrics(k).unwrap();
            assert_eq!(m.used + m.unused, m.arcs_total);
            assert_eq!(m.height, k - 1);
        }
    }

    #[test]
    fn canonical_paths_of_five_chain() {
        // e -> d direct plus one two-segment path per intermediate.
        let paths = canonical_segment_paths(&[0, 1, 2, 3, 4]);
        assert_eq!(paths.len(), 4);
        assert_eq!(paths.paths[0], vec![(0, 4)]);
        assert_eq!(paths.paths[1], vec![(0, 1), (1, 4)]);
        assert!(paths.check_disjoint());
        assert_eq!(paths.arcs_used(), 2 * 5 - 3);
    }

    #[test]
    fn canonical_paths_match_metrics_for_all_sizes() {
        for k in 2..=MAX_CHAIN_SIZE {
            let order: Vec<Vertex> = (0..k).collect();
            let ps = canonical_segment_paths(&order);
            let m = chain_metrics(k).unwrap();
            assert_eq!(ps.len(), m.height);
            assert_eq!(ps.arcs_used(), m.used);
            assert!(ps.check_disjoint());
        }
    }

    #[test]
    fn shrink_preserves_order() {
        assert_eq!(shrink_order(&[0, 1, 2, 3], 1).unwrap(), vec![0, 2, 3]);
        assert_eq!(shrink_order(&[0, 1], 0), Err(ChainError::WouldVanish));
        assert_eq!(shrink_order(&[0, 1, 2], 9), Err(ChainError::VertexAbsent));
    }

    #[test]
    fn grow_demands_k_segments() {
        for k in 2..MAX_CHAIN_SIZE {
            let order: Vec<Vertex> = (0..k).collect();
            let err = grow_order(&order, 99, k, MAX_CHAIN_SIZE, |_, _| false).unwrap_err();
            match err {
                GrowError::MissingSegments(m) => assert_eq!(m.len(), k),
                other => panic!("expected missing segments, got {other:?}"),
            }
            let grown = grow_order(&order, 99, k, MAX_CHAIN_SIZE, |_, _| true).unwrap();
            assert_eq!(grown.new_segments.len(), k);
            assert_eq!(grown.order.len(), k + 1);
        }
    }

    #[test]
    fn grow_rejected_at_cap() {
        let order: Vec<Vertex> = (0..MAX_CHAIN_SIZE).collect();
        assert_eq!(
            grow_order(&order, 99, 0, MAX_CHAIN_SIZE, |_, _| true),
            Err(GrowError::SizeCap {
                max: MAX_CHAIN_SIZE
            })
        );
    }

    #[test]
    fn conflict_detection() {
        // C(a,b,c) vs C(a,c,b): opposite order of {b,c}.
        assert!(chains_conflict(&[0, 1, 2], &[0, 2, 1]));
        assert!(!chains_conflict(&[0, 1, 2], &[0, 1, 2]));
        // C(a,b,c) vs C(b,c,d): shared pair (b,c) agrees.
        assert!(!chains_conflict(&[0, 1, 2], &[1, 2, 3]));
    }

    #[test]
    fn shrink_then_grow_roundtrip() {
        let order = vec![0, 1, 2, 3, 4];
        let shrunk = shrink_order(&order, 2).unwrap();
        let grown = grow_order(&shrunk, 2, 2, MAX_CHAIN_SIZE, |_, _| true).unwrap();
        assert_eq!(grown.order, order);
    }
}
