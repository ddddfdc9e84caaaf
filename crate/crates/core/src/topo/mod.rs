//! Topology of a frozen map: strongly connected components (cycles that failing
//! trajectories get trapped in), failure-attractor "blue" nodes, high-traffic
//! "red" edges, the success skeleton, and graph exports.

mod export;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cogmap::CognitiveMap;
use crate::Scalar;

pub use export::{export_graph, write_graph, ExportFormat};

#[derive(Debug, Error)]
pub enum TopoError {
    #[error("unknown export format {0:?} (expected dot|graphml|json)")]
    UnknownFormat(String),
    #[error("skeleton threshold must be at least 1")]
    InvalidThreshold,
    #[error("graph export I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("graph export serialization: {0}")]
    Json(#[from] serde_json::Error),
}

/// A set of states plus a set of edges between them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgraph {
    pub nodes: BTreeSet<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl Subgraph {
    pub fn full<S: Scalar>(map: &CognitiveMap<S>) -> Self {
        Self {
            nodes: (0..map.num_states()).collect(),
            edges: map.edges().map(|e| (e.src, e.dst)).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Strongly connected components of a directed graph on nodes `0..n`
/// (iterative Tarjan). Each component is sorted and components are ordered by
/// their smallest node.
pub fn strongly_connected_components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
    }
    const UNVISITED: usize = usize::MAX;
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut components = Vec::new();
    // (node, position in its adjacency list)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if let Some(&w) = adj[v].get(*pos) {
                *pos += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack holds the component");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                components.push(comp);
            }
        }
    }
    components.sort_by_key(|c| c[0]);
    components
}

pub fn find_sccs<S: Scalar>(map: &CognitiveMap<S>) -> Vec<Vec<usize>> {
    let edges: Vec<_> = map.edges().map(|e| (e.src, e.dst)).collect();
    strongly_connected_components(map.num_states(), &edges)
}

/// Lower middle element of the sorted values.
pub fn lower_median(values: &[u64]) -> Option<u64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    Some(v[(v.len() - 1) / 2])
}

/// Frequently visited, low-trust states: `trust < 0.5` and `visits > median(visits)`.
pub fn blue_nodes<S: Scalar>(map: &CognitiveMap<S>) -> Vec<usize> {
    let visits: Vec<u64> = map.states().iter().map(|s| s.visits).collect();
    let Some(median) = lower_median(&visits) else {
        return Vec::new();
    };
    let half = S::lit(0.5);
    map.states()
        .iter()
        .filter(|s| s.trust < half && s.visits > median)
        .map(|s| s.id)
        .collect()
}

/// The `k` edges with the highest success counts (ties by source, then target).
pub fn red_edges<S: Scalar>(map: &CognitiveMap<S>, k: usize) -> Vec<(usize, usize)> {
    let mut edges: Vec<_> = map.edges().collect();
    edges.sort_by(|a, b| b.success.cmp(&a.success).then((a.src, a.dst).cmp(&(b.src, b.dst))));
    edges.into_iter().take(k).map(|e| (e.src, e.dst)).collect()
}

/// Edges with at least `min_success` successful traversals, plus their endpoints.
pub fn skeleton<S: Scalar>(map: &CognitiveMap<S>, min_success: u64) -> Result<Subgraph, TopoError> {
    if min_success == 0 {
        return Err(TopoError::InvalidThreshold);
    }
    let mut sub = Subgraph::default();
    for e in map.edges().filter(|e| e.success >= min_success) {
        sub.nodes.insert(e.src);
        sub.nodes.insert(e.dst);
        sub.edges.push((e.src, e.dst));
    }
    Ok(sub)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    pub red_k: usize,
    pub min_success: u64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            red_k: 20,
            min_success: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub state_count: usize,
    pub edge_count: usize,
    pub scc_count: usize,
    pub largest_scc_size: usize,
    /// Components with more than one state.
    pub cyclic_scc_count: usize,
    pub blue_nodes: Vec<usize>,
    pub red_edges: Vec<(usize, usize)>,
    pub skeleton_node_count: usize,
    pub skeleton_edge_count: usize,
}

pub fn analyze<S: Scalar>(map: &CognitiveMap<S>, opts: &AnalyzeOptions) -> Result<TopologyReport, TopoError> {
    let sccs = find_sccs(map);
    let skel = skeleton(map, opts.min_success)?;
    Ok(TopologyReport {
        state_count: map.num_states(),
        edge_count: map.num_edges(),
        scc_count: sccs.len(),
        largest_scc_size: sccs.iter().map(Vec::len).max().unwrap_or(0),
        cyclic_scc_count: sccs.iter().filter(|c| c.len() > 1).count(),
        blue_nodes: blue_nodes(map),
        red_edges: red_edges(map, opts.red_k),
        skeleton_node_count: skel.nodes.len(),
        skeleton_edge_count: skel.edges.len(),
    })
}
