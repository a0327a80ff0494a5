//! Arc-disjoint path computation. The number of pairwise arc-disjoint paths
//! between two vertices equals the unit-capacity max flow, computed here with
//! augmenting paths. A brute-force backtracking count over explicit path
//! choices is kept alongside as a second, independent route to the same
//! value; the law-verification command checks both agree.

use std::collections::BTreeMap;

use crate::digraph::{Digraph, GraphError, PathSet, Vertex};

/// Maximum-cardinality set of pairwise arc-disjoint paths from `s` to `t`,
/// computed by unit-capacity max flow with BFS augmenting paths. An
/// unreachable sink yields an empty set, not an error.
pub fn max_arc_disjoint_paths(d: &Digraph, s: Vertex, t: Vertex) -> Result<PathSet, GraphError> {
    let n = d.n();
    if s >= n {
        return Err(GraphError::VertexNotFound(format!("#{s}")));
    }
    if t >= n {
        return Err(GraphError::VertexNotFound(format!("#{t}")));
    }
    if s == t {
        return Err(GraphError::SameEndpoints);
    }

    // flow[(u,v)] = 1 when the unit arc u->v carries flow.
    let mut flow: BTreeMap<(Vertex, Vertex), u8> = BTreeMap::new();
    loop {
        // BFS over the residual graph: forward through unused arcs,
        // backward through used ones. Label order keeps this deterministic.
        let mut pred: Vec<Option<(Vertex, bool)>> = vec![None; n]; // (prev, forward?)
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(s);
        let mut seen = vec![false; n];
        seen[s] = true;
        'bfs: while let Some(u) = queue.pop_front() {
            for v in d.out_neighbors(u) {
                if !seen[v] && flow.get(&(u, v)).copied().unwrap_or(0) == 0 {
                    seen[v] = true;
                    pred[v] = Some((u, true));
                    if v == t {
                        break 'bfs;
                    }
                    queue.push_back(v);
                }
            }
            for v in d.in_neighbors(u) {
                if !seen[v] && flow.get(&(v, u)).copied().unwrap_or(0) == 1 {
                    seen[v] = true;
                    pred[v] = Some((u, false));
                    queue.push_back(v);
                }
            }
        }
        if !seen[t] {
            break;
        }
        // Augment along the found path.
        let mut v = t;
        while v != s {
            let (u, forward) = pred[v].expect("augmenting path is connected");
            if forward {
                flow.insert((u, v), 1);
            } else {
                flow.insert((v, u), 0);
            }
            v = u;
        }
    }

    // Decompose the flow into arc-disjoint s->t paths. Flow conservation
    // guarantees each walk from s terminates at t; leftover circulations
    // (possible in cyclic digraphs) carry no s->t value and are ignored.
    let mut residual: BTreeMap<Vertex, Vec<Vertex>> = BTreeMap::new();
    for (&(u, v), &f) in &flow {
        if f == 1 {
            residual.entry(u).or_default().push(v);
        }
    }
    let mut paths = Vec::new();
    while residual.get(&s).map_or(false, |outs| !outs.is_empty()) {
        let mut path = Vec::new();
        let mut u = s;
        while u != t {
            let outs = residual.get_mut(&u).expect("flow conservation");
            let v = outs.remove(0);
            path.push((u, v));
            u = v;
        }
        paths.push(path);
    }

    Ok(PathSet {
        paths,
        disjoint: true,
    })
}

/// Independent brute-force count of the maximum number of arc-disjoint
/// `s`->`t` paths: backtracking over every choice of next path, memoized on
/// the set of used arcs. Exponential; intended for instances with few arcs
/// (n <= 8 or thereabouts).
pub fn brute_force_disjoint_count(d: &Digraph, s: Vertex, t: Vertex) -> usize {
    let arcs: Vec<(Vertex, Vertex)> = d.arcs().collect();
    assert!(arcs.len() <= 64, "brute force oracle limited to 64 arcs");
    let arc_index: BTreeMap<(Vertex, Vertex), usize> =
        arcs.iter().enumerate().map(|(i, &a)| (a, i)).collect();

    // All arc-simple s->t paths as arc bitmasks.
    fn dfs(
        d: &Digraph,
        arc_index: &BTreeMap<(Vertex, Vertex), usize>,
        t: Vertex,
        v: Vertex,
        used: u64,
        out: &mut Vec<u64>,
    ) {
        if v == t {
            out.push(used);
            return;
        }
        for w in d.out_neighbors(v) {
            let bit = 1u64 << arc_index[&(v, w)];
            if used & bit == 0 {
                dfs(d, arc_index, t, w, used | bit, out);
            }
        }
    }
    let mut all_paths: Vec<u64> = Vec::new();
    dfs(d, &arc_index, t, s, 0, &mut all_paths);

    fn best(paths: &[u64], used: u64, memo: &mut BTreeMap<u64, usize>) -> usize {
        if let Some(&v) = memo.get(&used) {
            return v;
        }
        let mut max = 0;
        for &p in paths {
            if p & used == 0 {
                max = max.max(1 + best(paths, used | p, memo));
            }
        }
        memo.insert(used, max);
        max
    }
    let mut memo = BTreeMap::new();
    best(&all_paths, 0, &mut memo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digraph::{Digraph, Role};

    #[test]
    fn complete_order_five_has_four_paths() {
        let g = Digraph::complete_order(&["e", "a", "b", "c", "d"]);
        let s = g.vertex("e").unwrap();
        let t = g.vertex("d").unwrap();
        let ps = max_arc_disjoint_paths(&g, s, t).unwrap();
        assert_eq!(ps.len(), 4);
        assert!(ps.check_disjoint());
        for p in &ps.paths {
            assert_eq!(p.first().unwrap().0, s);
            assert_eq!(p.last().unwrap().1, t);
        }
    }

    #[test]
    fn two_vertex_order_has_one_path() {
        let g = Digraph::complete_order(&["a", "b"]);
        let ps = max_arc_disjoint_paths(&g, 0, 1).unwrap();
        assert_eq!(ps.len(), 1);
    }

    #[test]
    fn fig2_s_to_d_has_three_paths() {
        let text = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../scenarios/fig2.adj"
        ))
        .unwrap();
        let g = crate::digraph::parse_adjacency(&text).unwrap();
        let s = g.vertex("s").unwrap();
        let t = g.vertex("d").unwrap();
        assert_eq!(max_arc_disjoint_paths(&g, s, t).unwrap().len(), 3);
        assert_eq!(brute_force_disjoint_count(&g, s, t), 3);
    }

    #[test]
    fn unreachable_sink_is_empty_not_error() {
        let g = Digraph::new(&["a", "b", "c"], &[("a", "b")], Role::Generic);
        let ps = max_arc_disjoint_paths(&g, 0, 2).unwrap();
        assert!(ps.is_empty());
    }

    #[test]
    fn same_endpoints_rejected() {
        let g = Digraph::complete_order(&["a", "b"]);
        assert!(matches!(
            max_arc_disjoint_paths(&g, 0, 0),
            Err(GraphError::SameEndpoints)
        ));
    }

    #[test]
    fn flow_matches_brute_force_on_complete_orders() {
        for n in 2..=7 {
            let labels: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
            let g = Digraph::complete_order(&labels);
            let flow = max_arc_disjoint_paths(&g, 0, n - 1).unwrap().len();
            assert_eq!(flow, n - 1);
            assert_eq!(brute_force_disjoint_count(&g, 0, n - 1), n - 1);
        }
    }
}
