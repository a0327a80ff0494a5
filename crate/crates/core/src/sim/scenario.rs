//! Scenario files: section-based UTF-8 text describing a graph, a
//! destination, per-node path preferences, optional scripted chain
//! proposals, per-arc delays, timed fail/recover events, the mode and the
//! timestamping switch.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::digraph::{parse_adjacency, Digraph, Vertex};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line} [{section}]: {detail}")]
    Parse {
        line: usize,
        section: String,
        detail: String,
    },
    #[error("[{section}]: {detail}")]
    Validate { section: String, detail: String },
    #[error("graph: {0}")]
    Graph(#[from] crate::digraph::ParseError),
    #[error("cannot read graph file `{path}`: {err}")]
    GraphFile { path: String, err: String },
}

fn perr(line: usize, section: &str, detail: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        section: section.to_string(),
        detail: detail.into(),
    }
}

fn verr(section: &str, detail: impl Into<String>) -> ScenarioError {
    ScenarioError::Validate {
        section: section.to_string(),
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Baseline,
    Chain,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Chain => "chain",
        })
    }
}

/// One route preference: an explicit path, or "any path through this
/// next-hop" (the wildcard form).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RoutePref {
    Explicit(Vec<Vertex>),
    ViaWildcard(Vertex),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptEvent {
    FailLink(Vertex, Vertex),
    RecoverLink(Vertex, Vertex),
    FailNode(Vertex),
    RecoverNode(Vertex),
}

/// A parsed, validated simulation scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub graph: Digraph,
    pub destination: Vertex,
    pub preferences: BTreeMap<Vertex, Vec<RoutePref>>,
    /// Scripted chain proposals for chain mode, in establishment order.
    /// When empty, proposals are derived from top preferences in label
    /// order.
    pub chains: Vec<Vec<Vertex>>,
    pub delays: BTreeMap<(Vertex, Vertex), u64>,
    pub events: Vec<(u64, ScriptEvent)>,
    pub mode: Mode,
    pub timestamping: bool,
}

impl Scenario {
    pub fn delay(&self, a: Vertex, b: Vertex) -> u64 {
        // Control messages may travel against arc direction; the link's
        // latency applies either way.
        self.delays
            .get(&(a, b))
            .or_else(|| self.delays.get(&(b, a)))
            .copied()
            .unwrap_or(1)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let g = &self.graph;
        for (&node, prefs) in &self.preferences {
            let mut seen = Vec::new();
            for pref in prefs {
                if seen.contains(pref) {
                    return Err(verr("preferences", "preferences must be strict (no ties)"));
                }
                seen.push(pref.clone());
                match pref {
                    RoutePref::Explicit(path) => {
                        if path.len() < 2 || path[0] != node {
                            return Err(verr(
                                "preferences",
                                format!("route of {} must start at itself", g.label(node)),
                            ));
                        }
                        if *path.last().unwrap() != self.destination {
                            return Err(verr(
                                "preferences",
                                format!("route of {} must end at the destination", g.label(node)),
                            ));
                        }
                        if !g.has_arc(path[0], path[1]) {
                            return Err(verr(
                                "preferences",
                                format!(
                                    "first hop {}->{} is not an arc",
                                    g.label(path[0]),
                                    g.label(path[1])
                                ),
                            ));
                        }
                    }
                    RoutePref::ViaWildcard(w) => {
                        if !g.has_arc(node, *w) {
                            return Err(verr(
                                "preferences",
                                format!(
                                    "wildcard next-hop {}->{} is not an arc",
                                    g.label(node),
                                    g.label(*w)
                                ),
                            ));
                        }
                    }
                }
            }
        }
        for order in &self.chains {
            if order.len() < 3 || order.len() > 7 {
                return Err(verr("chains", "a proposal has 3 to 7 vertices"));
            }
            if *order.last().unwrap() != self.destination {
                return Err(verr("chains", "a proposal ends at the destination"));
            }
        }
        for (&(a, b), &d) in &self.delays {
            if d < 1 {
                return Err(verr("delays", "delays are at least 1 tick"));
            }
            if !g.has_arc(a, b) {
                return Err(verr(
                    "delays",
                    format!("no arc {}->{}", g.label(a), g.label(b)),
                ));
            }
        }
        for &(_, ev) in &self.events {
            match ev {
                ScriptEvent::FailLink(a, b) | ScriptEvent::RecoverLink(a, b) => {
                    if !g.has_arc(a, b) {
                        return Err(verr(
                            "events",
                            format!("no arc {}->{}", g.label(a), g.label(b)),
                        ));
                    }
                }
                ScriptEvent::FailNode(_) | ScriptEvent::RecoverNode(_) => {}
            }
        }
        Ok(())
    }
}

/// Parses a scenario. `base_dir` resolves a `[graph] file <path>` reference.
pub fn parse_scenario(text: &str, name: &str, base_dir: &Path) -> Result<Scenario, ScenarioError> {
    let mut section = String::new();
    let mut graph_lines: Vec<String> = Vec::new();
    let mut graph_file: Option<String> = None;
    let mut destination_label: Option<String> = None;
    let mut pref_lines: Vec<(usize, String)> = Vec::new();
    let mut chain_lines: Vec<(usize, String)> = Vec::new();
    let mut delay_lines: Vec<(usize, String)> = Vec::new();
    let mut event_lines: Vec<(usize, String)> = Vec::new();
    let mut mode = Mode::Baseline;
    let mut timestamping = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let Some(close) = rest.find(']') else {
                return Err(perr(line_no, "?", "unterminated section header"));
            };
            section = rest[..close].to_string();
            let inline = rest[close + 1..].trim();
            match section.as_str() {
                "destination" if !inline.is_empty() => {
                    destination_label = Some(inline.to_string());
                }
                "mode" if !inline.is_empty() => {
                    mode = match inline {
                        "baseline" => Mode::Baseline,
                        "chain" => Mode::Chain,
                        other => {
                            return Err(perr(
                                line_no,
                                "mode",
                                format!("`{other}` is not baseline|chain"),
                            ))
                        }
                    };
                }
                "timestamping" if !inline.is_empty() => {
                    timestamping = match inline {
                        "on" => true,
                        "off" => false,
                        other => {
                            return Err(perr(
                                line_no,
                                "timestamping",
                                format!("`{other}` is not on|off"),
                            ))
                        }
                    };
                }
                _ => {}
            }
            continue;
        }
        match section.as_str() {
            "graph" => {
                if let Some(path) = line.strip_prefix("file ") {
                    graph_file = Some(path.trim().to_string());
                } else {
                    graph_lines.push(line.to_string());
                }
            }
            "destination" => destination_label = Some(line.to_string()),
            "preferences" => pref_lines.push((line_no, line.to_string())),
            "chains" => chain_lines.push((line_no, line.to_string())),
            "delays" => delay_lines.push((line_no, line.to_string())),
            "events" => event_lines.push((line_no, line.to_string())),
            "mode" => {
                mode = match line {
                    "baseline" => Mode::Baseline,
                    "chain" => Mode::Chain,
                    other => {
                        return Err(perr(line_no, "mode", format!("`{other}` is not baseline|chain")))
                    }
                };
            }
            "timestamping" => {
                timestamping = match line {
                    "on" => true,
                    "off" => false,
                    other => {
                        return Err(perr(
                            line_no,
                            "timestamping",
                            format!("`{other}` is not on|off"),
                        ))
                    }
                };
            }
            other => {
                return Err(perr(
                    line_no,
                    other,
                    if other.is_empty() {
                        "content before any section header".to_string()
                    } else {
                        format!("unknown section `{other}`")
                    },
                ))
            }
        }
    }

    let graph = if let Some(path) = graph_file {
        let full = base_dir.join(&path);
        let text = std::fs::read_to_string(&full).map_err(|e| ScenarioError::GraphFile {
            path: full.display().to_string(),
            err: e.to_string(),
        })?;
        parse_adjacency(&text)?
    } else if graph_lines.is_empty() {
        return Err(verr("graph", "missing [graph] section"));
    } else {
        parse_adjacency(&graph_lines.join("\n"))?
    };

    let destination_label =
        destination_label.ok_or_else(|| verr("destination", "missing [destination]"))?;
    let destination = graph
        .vertex(&destination_label)
        .map_err(|_| verr("destination", format!("unknown label `{destination_label}`")))?;

    let lookup = |line: usize, section: &str, label: &str| -> Result<Vertex, ScenarioError> {
        graph
            .vertex(label)
            .map_err(|_| perr(line, section, format!("unknown label `{label}`")))
    };

    let mut preferences: BTreeMap<Vertex, Vec<RoutePref>> = BTreeMap::new();
    for (line_no, line) in pref_lines {
        let (node_label, routes) = line
            .split_once(':')
            .ok_or_else(|| perr(line_no, "preferences", "expected `node: route > route`"))?;
        let node = lookup(line_no, "preferences", node_label.trim())?;
        let mut prefs = Vec::new();
        for route in routes.split('>') {
            let route = route.trim();
            if route.is_empty() {
                return Err(perr(line_no, "preferences", "empty route"));
            }
            if let Some(rest) = route.strip_prefix("via ") {
                let mut parts = rest.split_whitespace();
                let hop = parts
                    .next()
                    .ok_or_else(|| perr(line_no, "preferences", "missing wildcard next-hop"))?;
                if parts.next() != Some("X") || parts.next().is_some() {
                    return Err(perr(line_no, "preferences", "wildcard form is `via <hop> X`"));
                }
                prefs.push(RoutePref::ViaWildcard(lookup(line_no, "preferences", hop)?));
            } else {
                let mut path = Vec::new();
                for label in route.split('-') {
                    path.push(lookup(line_no, "preferences", label.trim())?);
                }
                prefs.push(RoutePref::Explicit(path));
            }
        }
        preferences.insert(node, prefs);
    }

    let mut chains = Vec::new();
    for (line_no, line) in chain_lines {
        let rest = line
            .strip_prefix("propose ")
            .ok_or_else(|| perr(line_no, "chains", "expected `propose v1 v2 ...`"))?;
        let mut order = Vec::new();
        for label in rest.split_whitespace() {
            order.push(lookup(line_no, "chains", label)?);
        }
        chains.push(order);
    }

    let mut delays = BTreeMap::new();
    for (line_no, line) in delay_lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(perr(line_no, "delays", "expected `a b <ticks>`"));
        }
        let a = lookup(line_no, "delays", parts[0])?;
        let b = lookup(line_no, "delays", parts[1])?;
        let ticks: u64 = parts[2]
            .parse()
            .map_err(|_| perr(line_no, "delays", format!("`{}` is not a tick count", parts[2])))?;
        delays.insert((a, b), ticks);
    }

    let mut events = Vec::new();
    for (line_no, line) in event_lines {
        let mut parts = line.split_whitespace();
        let t_part = parts
            .next()
            .ok_or_else(|| perr(line_no, "events", "empty event"))?;
        let t: u64 = t_part
            .strip_prefix("t=")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| perr(line_no, "events", "expected `t=<int>`"))?;
        let kind = parts
            .next()
            .ok_or_else(|| perr(line_no, "events", "missing event kind"))?;
        let args: Vec<&str> = parts.collect();
        let ev = match (kind, args.as_slice()) {
            ("fail_link", [a, b]) => ScriptEvent::FailLink(
                lookup(line_no, "events", a)?,
                lookup(line_no, "events", b)?,
            ),
            ("recover_link", [a, b]) => ScriptEvent::RecoverLink(
                lookup(line_no, "events", a)?,
                lookup(line_no, "events", b)?,
            ),
            ("fail_node", [v]) => ScriptEvent::FailNode(lookup(line_no, "events", v)?),
            ("recover_node", [v]) => ScriptEvent::RecoverNode(lookup(line_no, "events", v)?),
            _ => {
                return Err(perr(
                    line_no,
                    "events",
                    format!("`{kind}` with {} argument(s) is not an event", args.len()),
                ))
            }
        };
        events.push((t, ev));
    }
    events.sort_by_key(|&(t, _)| t);

    let scn = Scenario {
        name: name.to_string(),
        graph,
        destination,
        preferences,
        chains,
        delays,
        events,
        mode,
        timestamping,
    };
    scn.validate()?;
    Ok(scn)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# canonical triangle
[graph]
4
a b c d
0 1 0 1
0 0 1 1
1 0 0 1
0 0 0 0
[destination] d
[preferences]
a: a-b-d > a-d
b: b-c-d > b-d
c: c-a-d > c-d
[mode] baseline
";

    #[test]
    fn parses_sample() {
        let scn = parse_scenario(SAMPLE, "sample", Path::new(".")).unwrap();
        assert_eq!(scn.graph.n(), 4);
        assert_eq!(scn.destination, 3);
        assert_eq!(scn.mode, Mode::Baseline);
        assert!(!scn.timestamping);
        assert_eq!(scn.preferences.len(), 3);
        assert_eq!(
            scn.preferences[&0],
            vec![RoutePref::Explicit(vec![0, 1, 3]), RoutePref::Explicit(vec![0, 3])]
        );
    }

    #[test]
    fn wildcard_and_events_parse() {
        let text = format!(
            "{SAMPLE}[events]\nt=5 fail_link b d\nt=9 recover_link b d\n[delays]\nc d 4\n"
        );
        let mut scn = parse_scenario(&text, "s", Path::new(".")).unwrap();
        assert_eq!(scn.events.len(), 2);
        assert_eq!(scn.delay(2, 3), 4);
        assert_eq!(scn.delay(3, 2), 4); // reverse direction uses link latency
        assert_eq!(scn.delay(0, 1), 1);
        scn.events.clear();
    }

    #[test]
    fn rejects_unknown_label() {
        let text = SAMPLE.replace("a: a-b-d", "a: a-z-d");
        let err = parse_scenario(&text, "s", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("unknown label `z`"));
    }

    #[test]
    fn rejects_bad_first_hop() {
        let text = SAMPLE.replace("a: a-b-d > a-d", "a: a-c-d");
        let err = parse_scenario(&text, "s", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("not an arc"));
    }

    #[test]
    fn rejects_duplicate_preference() {
        let text = SAMPLE.replace("a: a-b-d > a-d", "a: a-b-d > a-b-d");
        let err = parse_scenario(&text, "s", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("strict"));
    }

    #[test]
    fn chains_section_parses() {
        let text = format!("{SAMPLE}[chains]\npropose a b d\npropose c a d\n");
        let scn = parse_scenario(&text, "s", Path::new(".")).unwrap();
        assert_eq!(scn.chains, vec![vec![0, 1, 3], vec![2, 0, 3]]);
    }
}
