use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;

use super::{AirGraph, Guard, NodeKind};

/// One violated graph invariant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Violation {
    DuplicateNode { node: String },
    MissingEntry { entry: String },
    EntryHasIncoming { entry: String },
    DanglingEdge { from: String, to: String },
    CycleDetected { node: String },
    InvalidGuard { from: String, to: String },
    InvalidDemand { node: String, reason: String },
    AlwaysNotSole { node: String },
    MultipleDefaults { node: String },
    OverlappingGuards { node: String, claim_size: usize },
    MissingDefault { node: String, claim_size: usize },
    NestedClaim { node: String },
    UnbalancedRelease { node: String },
    UnbalancedAcquisition { node: String },
    UnreachableNode { node: String },
    UnreachableBranch { from: String, to: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            DuplicateNode { node } => write!(f, "duplicate node `{node}`"),
            MissingEntry { entry } => write!(f, "entry `{entry}` is not a node"),
            EntryHasIncoming { entry } => write!(f, "entry `{entry}` has incoming edges"),
            DanglingEdge { from, to } => write!(f, "edge {from} -> {to} references a missing node"),
            CycleDetected { node } => write!(f, "cycle through `{node}`"),
            InvalidGuard { from, to } => write!(f, "edge {from} -> {to} has an empty range"),
            InvalidDemand { node, reason } => write!(f, "demand of `{node}`: {reason}"),
            AlwaysNotSole { node } => write!(f, "`{node}` mixes an `always` edge with others"),
            MultipleDefaults { node } => write!(f, "`{node}` has more than one default edge"),
            OverlappingGuards { node, claim_size } => {
                write!(f, "guards of `{node}` overlap at claim size {claim_size}")
            }
            MissingDefault { node, claim_size } => write!(
                f,
                "no guard of `{node}` matches claim size {claim_size} and there is no default"
            ),
            NestedClaim { node } => write!(f, "`{node}` acquires while a claim is live"),
            UnbalancedRelease { node } => write!(f, "`{node}` releases without a live claim"),
            UnbalancedAcquisition { node } => write!(f, "path ends at `{node}` holding a claim"),
            UnreachableNode { node } => write!(f, "`{node}` is unreachable"),
            UnreachableBranch { from, to } => write!(f, "branch {from} -> {to} can never be taken"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, v: &Violation) -> bool {
        self.violations.contains(v)
    }

    fn push(&mut self, v: Violation) {
        if !self.violations.contains(&v) {
            self.violations.push(v);
        }
    }
}

/// Checks every structural invariant of an AIR for a platform with
/// `num_cpus` CPUs. Violations are data, not errors.
pub fn validate_air(graph: &AirGraph, num_cpus: usize) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut seen = HashSet::new();
    for n in graph.nodes() {
        if !seen.insert(n.id.as_str()) {
            report.push(Violation::DuplicateNode { node: n.id.clone() });
        }
        if let NodeKind::GetResource(d) = &n.kind {
            let reason = if d.min_cpus == 0 {
                Some("min_cpus must be at least 1".to_string())
            } else if d.min_cpus > d.max_cpus {
                Some(format!("min_cpus {} > max_cpus {}", d.min_cpus, d.max_cpus))
            } else if d.max_cpus > num_cpus {
                Some(format!("max_cpus {} > {num_cpus} CPUs", d.max_cpus))
            } else {
                match d.max_load {
                    Some(l) if !(0.0..=1.0).contains(&l) => {
                        Some(format!("max_load {l} outside [0, 1]"))
                    }
                    _ => None,
                }
            };
            if let Some(reason) = reason {
                report.push(Violation::InvalidDemand {
                    node: n.id.clone(),
                    reason,
                });
            }
        }
    }

    if graph.node(graph.entry()).is_none() {
        report.push(Violation::MissingEntry {
            entry: graph.entry().to_string(),
        });
    }

    for e in graph.edges() {
        if graph.node(&e.from).is_none() || graph.node(&e.to).is_none() {
            report.push(Violation::DanglingEdge {
                from: e.from.clone(),
                to: e.to.clone(),
            });
        }
        if e.to == graph.entry() {
            report.push(Violation::EntryHasIncoming {
                entry: graph.entry().to_string(),
            });
        }
        if let Guard::In(lo, hi) = e.guard {
            if lo > hi {
                report.push(Violation::InvalidGuard {
                    from: e.from.clone(),
                    to: e.to.clone(),
                });
            }
        }
    }

    if let Some(node) = find_cycle(graph) {
        report.push(Violation::CycleDetected { node });
    }

    check_guards(graph, num_cpus, &mut report);

    if graph.node(graph.entry()).is_some() {
        let exploration = explore(graph, num_cpus);
        for v in exploration.violations {
            report.push(v);
        }
        for n in graph.nodes() {
            let idx = graph.node_index(&n.id).unwrap();
            if !exploration.reached.contains(&idx) {
                report.push(Violation::UnreachableNode { node: n.id.clone() });
            }
        }
        for (i, e) in graph.edges().iter().enumerate() {
            let from_reached = graph
                .node_index(&e.from)
                .is_some_and(|f| exploration.reached.contains(&f));
            if from_reached && !exploration.used_edges.contains(&i) {
                report.push(Violation::UnreachableBranch {
                    from: e.from.clone(),
                    to: e.to.clone(),
                });
            }
        }
    }

    report
}

/// For every FEN node, the set of claim sizes it can execute under.
pub fn reachable_claim_sizes(
    graph: &AirGraph,
    num_cpus: usize,
) -> BTreeMap<String, BTreeSet<usize>> {
    explore(graph, num_cpus).fen_sizes
}

fn check_guards(graph: &AirGraph, num_cpus: usize, report: &mut ValidationReport) {
    let mut by_source: BTreeMap<&str, Vec<Guard>> = BTreeMap::new();
    for e in graph.edges() {
        by_source.entry(e.from.as_str()).or_default().push(e.guard);
    }
    for (node, guards) in by_source {
        let node_s = node.to_string();
        if guards.len() > 1 && guards.contains(&Guard::Always) {
            report.push(Violation::AlwaysNotSole {
                node: node_s.clone(),
            });
        }
        let defaults = guards.iter().filter(|g| g.is_default()).count();
        if defaults > 1 {
            report.push(Violation::MultipleDefaults {
                node: node_s.clone(),
            });
        }
        let mut overlap_reported = false;
        let mut missing_reported = false;
        for size in 0..=num_cpus {
            let hits = guards.iter().filter(|g| g.matches(size)).count();
            if hits > 1 && !overlap_reported {
                overlap_reported = true;
                report.push(Violation::OverlappingGuards {
                    node: node_s.clone(),
                    claim_size: size,
                });
            }
            if hits == 0 && defaults == 0 && !missing_reported {
                missing_reported = true;
                report.push(Violation::MissingDefault {
                    node: node_s.clone(),
                    claim_size: size,
                });
            }
        }
    }
}

fn find_cycle(graph: &AirGraph) -> Option<String> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let n = graph.nodes().len();
    let mut succ = vec![Vec::new(); n];
    for e in graph.edges() {
        if let (Some(f), Some(t)) = (graph.node_index(&e.from), graph.node_index(&e.to)) {
            succ[f].push(t);
        }
    }
    let mut mark = vec![Mark::New; n];
    for root in 0..n {
        if mark[root] != Mark::New {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        mark[root] = Mark::Active;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if let Some(&child) = succ[node].get(*next) {
                *next += 1;
                match mark[child] {
                    Mark::Active => return Some(graph.nodes()[child].id.clone()),
                    Mark::New => {
                        mark[child] = Mark::Active;
                        stack.push((child, 0));
                    }
                    Mark::Done => {}
                }
            } else {
                mark[node] = Mark::Done;
                stack.pop();
            }
        }
    }
    None
}

struct Exploration {
    reached: HashSet<usize>,
    used_edges: HashSet<usize>,
    fen_sizes: BTreeMap<String, BTreeSet<usize>>,
    violations: Vec<Violation>,
}

/// Walks every (node, live claim size) state reachable from the entry. The
/// state space is finite even for cyclic graphs.
fn explore(graph: &AirGraph, num_cpus: usize) -> Exploration {
    let mut out = Exploration {
        reached: HashSet::new(),
        used_edges: HashSet::new(),
        fen_sizes: BTreeMap::new(),
        violations: Vec::new(),
    };
    let Some(entry) = graph.node_index(graph.entry()) else {
        return out;
    };

    let mut visited: HashSet<(usize, Option<usize>)> = HashSet::new();
    let mut queue = VecDeque::from([(entry, None::<usize>)]);
    while let Some((idx, held)) = queue.pop_front() {
        if !visited.insert((idx, held)) {
            continue;
        }
        out.reached.insert(idx);
        let node = &graph.nodes()[idx];

        let after: Vec<Option<usize>> = match &node.kind {
            NodeKind::GetResource(d) => {
                if held.is_some() {
                    out.violations.push(Violation::NestedClaim {
                        node: node.id.clone(),
                    });
                }
                let hi = d.max_cpus.min(num_cpus);
                std::iter::once(0)
                    .chain(d.min_cpus.max(1)..=hi)
                    .map(Some)
                    .collect()
            }
            NodeKind::ReleaseResource => {
                if held.is_none() {
                    out.violations.push(Violation::UnbalancedRelease {
                        node: node.id.clone(),
                    });
                }
                vec![None]
            }
            NodeKind::Fen { .. } => {
                // An empty claim skips the fen, so only positive sizes need traces.
                if let Some(s) = held.filter(|&s| s > 0) {
                    out.fen_sizes.entry(node.id.clone()).or_default().insert(s);
                }
                vec![held]
            }
        };

        let outgoing: Vec<(usize, &super::AirEdge)> = graph
            .edges()
            .iter()
            .enumerate()
            .filter(|(_, e)| e.from == node.id)
            .collect();

        for state in after {
            if outgoing.is_empty() {
                if state.is_some() {
                    out.violations.push(Violation::UnbalancedAcquisition {
                        node: node.id.clone(),
                    });
                }
                continue;
            }
            let size = state.unwrap_or(0);
            let mut taken: Vec<usize> = outgoing
                .iter()
                .filter(|(_, e)| e.guard.matches(size))
                .map(|(i, _)| *i)
                .collect();
            if taken.is_empty() {
                taken = outgoing
                    .iter()
                    .filter(|(_, e)| e.guard.is_default())
                    .map(|(i, _)| *i)
                    .collect();
            }
            for i in taken {
                out.used_edges.insert(i);
                if let Some(t) = graph.node_index(&graph.edges()[i].to) {
                    queue.push_back((t, state));
                }
            }
        }
    }
    out.violations.sort();
    out.violations.dedup();
    out
}
