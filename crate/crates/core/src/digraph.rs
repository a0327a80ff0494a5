//! Directed-graph substrate: representation, adjacency-matrix I/O and the
//! order-theoretic primitives everything else is built on.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

/// Vertex handle: index into the digraph's label table. Iteration order is
/// everywhere the label order of the input file, which keeps traversals and
/// reports deterministic.
pub type Vertex = usize;

/// What the digraph represents. The destination digraph of a node is the
/// converse of its announcement digraph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Announcement,
    Destination,
    Generic,
}

/// Parse errors for the adjacency-matrix format. Every variant carries the
/// 1-based line number it was detected on.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: malformed header: {detail}")]
    MalformedHeader { line: usize, detail: String },
    #[error("line {line}: expected {expected} labels, found {found}")]
    LabelCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: duplicate label `{label}`")]
    DuplicateLabel { line: usize, label: String },
    #[error("line {line}: matrix row {row} has {found} entries, expected {expected}")]
    NonSquare {
        line: usize,
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("line {line}: entry is `{token}`, expected 0 or 1")]
    BadEntry { line: usize, token: String },
    #[error("line {line}: loop entry on diagonal for vertex `{label}`")]
    LoopEntry { line: usize, label: String },
    #[error("line {line}: missing matrix row {row}")]
    MissingRow { line: usize, row: usize },
    #[error("line {line}: unexpected trailing content")]
    TrailingContent { line: usize },
}

/// Errors raised by graph operations.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("vertex `{0}` not found")]
    VertexNotFound(String),
    #[error("source and sink must differ")]
    SameEndpoints,
}

/// A labeled digraph without loops. Arcs are ordered (tail, head) pairs kept
/// in a sorted set so that every traversal of the structure is deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    labels: Vec<String>,
    index: BTreeMap<String, Vertex>,
    arcs: BTreeSet<(Vertex, Vertex)>,
    role: Role,
}

impl Digraph {
    /// Builds a digraph from labels and arcs given as label pairs.
    /// Loops are rejected; unknown labels panic (builder misuse).
    pub fn new<S: AsRef<str>>(labels: &[S], arcs: &[(S, S)], role: Role) -> Self {
        let labels: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
        let index: BTreeMap<String, Vertex> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        assert_eq!(index.len(), labels.len(), "duplicate labels");
        let mut set = BTreeSet::new();
        for (t, h) in arcs {
            let t = index[t.as_ref()];
            let h = index[h.as_ref()];
            assert_ne!(t, h, "loops are not allowed");
            set.insert((t, h));
        }
        Digraph {
            labels,
            index,
            arcs: set,
            role,
        }
    }

    /// The complete order on the given vertex sequence: every arc (i, j)
    /// with i earlier than j in the sequence.
    pub fn complete_order<S: AsRef<str>>(order: &[S]) -> Self {
        let mut g = Digraph::new(order, &[], Role::Generic);
        for i in 0..order.len() {
            for j in i + 1..order.len() {
                g.arcs.insert((i, j));
            }
        }
        g
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn set_role(&mut self, role: Role) {
        self.role = role;
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, v: Vertex) -> &str {
        &self.labels[v]
    }

    /// Looks a vertex up by label.
    pub fn vertex(&self, label: &str) -> Result<Vertex, GraphError> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| GraphError::VertexNotFound(label.to_string()))
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> {
        0..self.labels.len()
    }

    pub fn arcs(&self) -> impl Iterator<Item = (Vertex, Vertex)> + '_ {
        self.arcs.iter().copied()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn has_arc(&self, tail: Vertex, head: Vertex) -> bool {
        self.arcs.contains(&(tail, head))
    }

    pub fn add_arc(&mut self, tail: Vertex, head: Vertex) {
        assert_ne!(tail, head, "loops are not allowed");
        self.arcs.insert((tail, head));
    }

    pub fn remove_arc(&mut self, tail: Vertex, head: Vertex) {
        self.arcs.remove(&(tail, head));
    }

    /// Out-neighbours of `v` in label order.
    pub fn out_neighbors(&self, v: Vertex) -> Vec<Vertex> {
        self.arcs
            .range((v, 0)..(v + 1, 0))
            .map(|&(_, h)| h)
            .collect()
    }

    /// In-neighbours of `v` in label order.
    pub fn in_neighbors(&self, v: Vertex) -> Vec<Vertex> {
        self.arcs
            .iter()
            .filter(|&&(_, h)| h == v)
            .map(|&(t, _)| t)
            .collect()
    }

    pub fn out_degree(&self, v: Vertex) -> usize {
        self.arcs.range((v, 0)..(v + 1, 0)).count()
    }

    pub fn in_degree(&self, v: Vertex) -> usize {
        self.arcs.iter().filter(|&&(_, h)| h == v).count()
    }

    /// The converse digraph: every arc reversed. An announcement digraph
    /// converses into the matching destination digraph and vice versa.
    pub fn converse(&self) -> Digraph {
        let arcs = self.arcs.iter().map(|&(t, h)| (h, t)).collect();
        Digraph {
            labels: self.labels.clone(),
            index: self.index.clone(),
            arcs,
            role: match self.role {
                Role::Announcement => Role::Destination,
                Role::Destination => Role::Announcement,
                Role::Generic => Role::Generic,
            },
        }
    }

    /// Removes `v` together with all adjacent arcs. Remaining vertices keep
    /// their label order. Deleting from an acyclic digraph cannot introduce a
    /// cycle since no arcs are added.
    pub fn delete_vertex(&self, v: Vertex) -> Result<Digraph, GraphError> {
        if v >= self.n() {
            return Err(GraphError::VertexNotFound(format!("#{v}")));
        }
        let labels: Vec<String> = self
            .labels
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != v)
            .map(|(_, l)| l.clone())
            .collect();
        let remap = |u: Vertex| if u > v { u - 1 } else { u };
        let arcs = self
            .arcs
            .iter()
            .filter(|&&(t, h)| t != v && h != v)
            .map(|&(t, h)| (remap(t), remap(h)))
            .collect();
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        Ok(Digraph {
            labels,
            index,
            arcs,
            role: self.role,
        })
    }

    /// True iff the digraph contains no directed cycle.
    pub fn is_acyclic(&self) -> bool {
        self.find_cycle().is_none()
    }

    /// Returns some directed cycle as a vertex sequence `v0, v1, ..., v0`,
    /// or `None` when the digraph is acyclic.
    pub fn find_cycle(&self) -> Option<Vec<Vertex>> {
        find_cycle_in(self.n(), |v| self.out_neighbors(v))
    }

    /// The smallest arc superset closed under transitivity. Idempotent and
    /// monotone in the arc set.
    pub fn transitive_closure(&self) -> Digraph {
        let n = self.n();
        let mut reach = vec![vec![false; n]; n];
        for &(t, h) in &self.arcs {
            reach[t][h] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if reach[i][k] {
                    for j in 0..n {
                        if reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
        }
        let mut arcs = BTreeSet::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && reach[i][j] {
                    arcs.insert((i, j));
                }
            }
        }
        Digraph {
            labels: self.labels.clone(),
            index: self.index.clone(),
            arcs,
            role: self.role,
        }
    }

    /// Vertices reachable from `from` (including it), label-ordered BFS.
    pub fn reachable_from(&self, from: Vertex) -> BTreeSet<Vertex> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        seen.insert(from);
        queue.push_back(from);
        while let Some(v) = queue.pop_front() {
            for w in self.out_neighbors(v) {
                if seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    /// Serializes to the adjacency-matrix text format. `parse_adjacency`
    /// of the result reproduces the digraph exactly.
    pub fn serialize_adjacency(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{}\n", self.n()));
        out.push_str(&self.labels.join(" "));
        out.push('\n');
        for t in 0..self.n() {
            let row: Vec<&str> = (0..self.n())
                .map(|h| if self.arcs.contains(&(t, h)) { "1" } else { "0" })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for Digraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let arcs: Vec<String> = self
            .arcs
            .iter()
            .map(|&(t, h)| format!("{}{}", self.labels[t], self.labels[h]))
            .collect();
        write!(f, "V={{{}}} A={{{}}}", self.labels.join(","), arcs.join(","))
    }
}

/// Generic cycle finder over an out-neighbour function; shared with the
/// relation bookkeeping in the store.
pub(crate) fn find_cycle_in<F>(n: usize, out: F) -> Option<Vec<Vertex>>
where
    F: Fn(Vertex) -> Vec<Vertex>,
{
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Gray,
        Black,
    }
    let mut mark = vec![Mark::White; n];
    let mut parent: Vec<Option<Vertex>> = vec![None; n];
    for start in 0..n {
        if mark[start] != Mark::White {
            continue;
        }
        // Iterative DFS keeping an explicit stack of (vertex, neighbor list).
        let mut stack = vec![(start, out(start), 0usize)];
        mark[start] = Mark::Gray;
        while let Some((v, neighbors, idx)) = stack.pop() {
            if idx < neighbors.len() {
                let w = neighbors[idx];
                stack.push((v, neighbors, idx + 1));
                match mark[w] {
                    Mark::White => {
                        mark[w] = Mark::Gray;
                        parent[w] = Some(v);
                        let next = out(w);
                        stack.push((w, next, 0));
                    }
                    Mark::Gray => {
                        // Back edge v -> w closes a cycle w .. v w.
                        let mut cycle = vec![v];
                        let mut cur = v;
                        while cur != w {
                            cur = parent[cur].expect("gray vertex has a parent");
                            cycle.push(cur);
                        }
                        cycle.reverse();
                        cycle.push(w);
                        return Some(cycle);
                    }
                    Mark::Black => {}
                }
            } else {
                mark[v] = Mark::Black;
            }
        }
    }
    None
}

/// A set of directed paths between one source and one sink. Each path is a
/// sequence of arcs. When `disjoint` is set no arc occurs in two paths;
/// vertices may still repeat across paths.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PathSet {
    pub paths: Vec<Vec<(Vertex, Vertex)>>,
    pub disjoint: bool,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Total number of distinct arcs used by the paths.
    pub fn arcs_used(&self) -> usize {
        let mut set = BTreeSet::new();
        for p in &self.paths {
            set.extend(p.iter().copied());
        }
        set.len()
    }

    /// Checks pairwise arc-disjointness of the stored paths.
    pub fn check_disjoint(&self) -> bool {
        let mut seen = BTreeSet::new();
        for p in &self.paths {
            for a in p {
                if !seen.insert(*a) {
                    return false;
                }
            }
        }
        true
    }
}

/// Parses the adjacency-matrix file format:
///
/// ```text
/// # comment lines start with '#', anywhere
/// n
/// label_1 ... label_n
/// row_1 (n space-separated 0/1 digits, tail = row, head = column)
/// ...
/// row_n
/// ```
pub fn parse_adjacency(text: &str) -> Result<Digraph, ParseError> {
    // (1-based line number, content) with comments and blank lines dropped.
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| {
            let t = l.trim_start();
            !t.is_empty() && !t.starts_with('#')
        })
        .collect();

    let (header_line, header) = lines.first().copied().ok_or(ParseError::MalformedHeader {
        line: 1,
        detail: "empty input".into(),
    })?;
    let mut header_tokens = header.split_whitespace();
    let n: usize = header_tokens
        .next()
        .ok_or(ParseError::MalformedHeader {
            line: header_line,
            detail: "missing vertex count".into(),
        })?
        .parse()
        .map_err(|_| ParseError::MalformedHeader {
            line: header_line,
            detail: format!("`{}` is not a vertex count", header.trim()),
        })?;
    if header_tokens.next().is_some() {
        return Err(ParseError::MalformedHeader {
            line: header_line,
            detail: "extra tokens after vertex count".into(),
        });
    }

    let (label_line, label_text) = lines.get(1).copied().ok_or(ParseError::LabelCount {
        line: header_line,
        expected: n,
        found: 0,
    })?;
    let labels: Vec<String> = label_text.split_whitespace().map(String::from).collect();
    if labels.len() != n {
        return Err(ParseError::LabelCount {
            line: label_line,
            expected: n,
            found: labels.len(),
        });
    }
    let mut index = BTreeMap::new();
    for l in &labels {
        if index.insert(l.clone(), index.len()).is_some() {
            return Err(ParseError::DuplicateLabel {
                line: label_line,
                label: l.clone(),
            });
        }
    }

    let mut arcs = BTreeSet::new();
    for row in 0..n {
        let (row_line, row_text) = lines.get(2 + row).copied().ok_or(ParseError::MissingRow {
            line: lines.last().map(|&(l, _)| l).unwrap_or(label_line),
            row: row + 1,
        })?;
        let entries: Vec<&str> = row_text.split_whitespace().collect();
        if entries.len() != n {
            return Err(ParseError::NonSquare {
                line: row_line,
                row: row + 1,
                found: entries.len(),
                expected: n,
            });
        }
        for (col, tok) in entries.iter().enumerate() {
            match *tok {
                "0" => {}
                "1" => {
                    if row == col {
                        return Err(ParseError::LoopEntry {
                            line: row_line,
                            label: labels[row].clone(),
                        });
                    }
                    arcs.insert((row, col));
                }
                other => {
                    return Err(ParseError::BadEntry {
                        line: row_line,
                        token: other.to_string(),
                    })
                }
            }
        }
    }
    if lines.len() > 2 + n {
        return Err(ParseError::TrailingContent {
            line: lines[2 + n].0,
        });
    }

    Ok(Digraph {
        labels,
        index,
        arcs,
        role: Role::Announcement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1_partial() -> Digraph {
        // Partial order on {e,a,b,c,d}: spine a<b<c<d plus e<b, closed
        // under transitivity. e and a are incomparable.
        Digraph::new(
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
        )
    }

    #[test]
    fn parse_smallest_case() {
        let g = parse_adjacency("2\na b\n0 1\n0 0\n").unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.arcs().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn parse_rejects_diagonal_entry() {
        let err = parse_adjacency("2\na b\n1 0\n0 0\n").unwrap_err();
        assert_eq!(
            err,
            ParseError::LoopEntry {
                line: 3,
                label: "a".into()
            }
        );
    }

    #[test]
    fn parse_rejects_duplicate_label() {
        let err = parse_adjacency("2\na a\n0 1\n0 0\n").unwrap_err();
        assert!(matches!(err, ParseError::DuplicateLabel { line: 2, .. }));
    }

    #[test]
    fn parse_rejects_non_square() {
        let err = parse_adjacency("2\na b\n0 1 0\n0 0\n").unwrap_err();
        assert!(matches!(
            err,
            ParseError::NonSquare {
                line: 3,
                row: 1,
                found: 3,
                expected: 2
            }
        ));
    }

    #[test]
    fn parse_rejects_bad_header() {
        let err = parse_adjacency("two\na b\n").unwrap_err();
        assert!(matches!(err, ParseError::MalformedHeader { line: 1, .. }));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let g = parse_adjacency("# matrix\n2\n\na b\n# row a\n0 1\n0 0\n").unwrap();
        assert_eq!(g.arc_count(), 1);
    }

    #[test]
    fn fig2_matrix_has_fourteen_arcs() {
        let text = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../scenarios/fig2.adj"
        ))
        .unwrap();
        let g = parse_adjacency(&text).unwrap();
        assert_eq!(g.n(), 10);
        let want = [
            "se", "sa", "ab", "sc", "cd", "ef", "fb", "fg", "gd", "bd", "eh", "hi", "ig", "hg",
        ];
        let have: BTreeSet<String> = g
            .arcs()
            .map(|(t, h)| format!("{}{}", g.label(t), g.label(h)))
            .collect();
        assert_eq!(have, want.iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn acyclicity() {
        assert!(fig1_partial().is_acyclic());
        let triangle = Digraph::new(
            &["a", "b", "c"],
            &[("a", "b"), ("b", "c"), ("c", "a")],
            Role::Generic,
        );
        assert!(!triangle.is_acyclic());
        let cyc = triangle.find_cycle().unwrap();
        assert_eq!(cyc.first(), cyc.last());
        assert!(cyc.len() >= 3);
    }

    #[test]
    fn varadhan_graph_is_cyclic() {
        let g = Digraph::new(
            &["a", "b", "c", "d"],
            &[
                ("a", "b"),
                ("b", "c"),
                ("c", "a"),
                ("a", "d"),
                ("b", "d"),
                ("c", "d"),
            ],
            Role::Generic,
        );
        assert!(!g.is_acyclic());
    }

    #[test]
    fn closure_of_two_arc_chain() {
        let g = Digraph::new(&["a", "b", "c"], &[("a", "b"), ("b", "c")], Role::Generic);
        let c = g.transitive_closure();
        let arcs: Vec<_> = c.arcs().collect();
        assert_eq!(arcs, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn closure_fixed_on_complete_order() {
        let g = Digraph::complete_order(&["a", "b", "c", "d"]);
        assert_eq!(g.transitive_closure(), g);
    }

    #[test]
    fn closure_matches_reachability_on_fig1() {
        let g = fig1_partial();
        let c = g.transitive_closure();
        for s in g.vertices() {
            let reach = g.reachable_from(s);
            for t in g.vertices() {
                let expect = s != t && reach.contains(&t);
                assert_eq!(c.has_arc(s, t), expect, "{}->{}", g.label(s), g.label(t));
            }
        }
    }

    #[test]
    fn delete_middle_of_three_chain() {
        let g = Digraph::complete_order(&["a", "b", "c"]);
        let h = g.delete_vertex(1).unwrap();
        assert_eq!(h.labels(), ["a", "c"]);
        assert_eq!(h.arcs().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn roundtrip_serialize_parse() {
        let g = fig1_partial();
        let parsed = parse_adjacency(&g.serialize_adjacency()).unwrap();
        assert_eq!(parsed.labels(), g.labels());
        assert_eq!(
            parsed.arcs().collect::<Vec<_>>(),
            g.arcs().collect::<Vec<_>>()
        );
    }

    #[test]
    fn converse_flips_arcs_and_role() {
        let mut g = fig1_partial();
        g.set_role(Role::Announcement);
        let c = g.converse();
        assert_eq!(c.role(), Role::Destination);
        assert!(c.has_arc(1, 0));
        assert!(!c.has_arc(0, 1));
        assert_eq!(c.converse(), g);
    }
}
