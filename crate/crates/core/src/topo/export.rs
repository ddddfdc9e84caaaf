use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::{Subgraph, TopoError};
use crate::cogmap::CognitiveMap;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    GraphMl,
    Json,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Dot => "dot",
            ExportFormat::GraphMl => "graphml",
            ExportFormat::Json => "json",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = TopoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(ExportFormat::Dot),
            "graphml" => Ok(ExportFormat::GraphMl),
            "json" => Ok(ExportFormat::Json),
            _ => Err(TopoError::UnknownFormat(s.to_owned())),
        }
    }
}

/// Trust band colour: blue below 0.5, red from 0.7, gray in between.
fn band<S: Scalar>(trust: S) -> &'static str {
    if trust < S::lit(0.5) {
        "blue"
    } else if trust >= S::lit(0.7) {
        "red"
    } else {
        "gray"
    }
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

fn render_dot<S: Scalar>(map: &CognitiveMap<S>, sub: &Subgraph) -> String {
    let mut out = String::from("digraph cognitive_map {\n  node [shape=circle, style=filled];\n");
    for &id in &sub.nodes {
        let s = &map.states()[id];
        let _ = writeln!(
            out,
            "  n{id} [label=\"{id}\", fillcolor=\"{}\", trust={}, visits={}, tooltip=\"{}\"];",
            band(s.trust),
            s.trust,
            s.visits,
            dot_escape(&s.exemplar)
        );
    }
    for &(a, b) in &sub.edges {
        if let Some(e) = map.edge(a, b) {
            let _ = writeln!(out, "  n{a} -> n{b} [success={}, total={}];", e.success, e.total);
        }
    }
    out.push_str("}\n");
    out
}

fn render_graphml<S: Scalar>(map: &CognitiveMap<S>, sub: &Subgraph) -> String {
    let mut out = String::from(concat!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n",
        "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n",
        "  <key id=\"trust\" for=\"node\" attr.name=\"trust\" attr.type=\"double\"/>\n",
        "  <key id=\"visits\" for=\"node\" attr.name=\"visits\" attr.type=\"long\"/>\n",
        "  <key id=\"successes\" for=\"node\" attr.name=\"successes\" attr.type=\"long\"/>\n",
        "  <key id=\"color\" for=\"node\" attr.name=\"color\" attr.type=\"string\"/>\n",
        "  <key id=\"exemplar\" for=\"node\" attr.name=\"exemplar\" attr.type=\"string\"/>\n",
        "  <key id=\"success\" for=\"edge\" attr.name=\"success\" attr.type=\"long\"/>\n",
        "  <key id=\"total\" for=\"edge\" attr.name=\"total\" attr.type=\"long\"/>\n",
        "  <graph id=\"cognitive_map\" edgedefault=\"directed\">\n",
    ));
    for &id in &sub.nodes {
        let s = &map.states()[id];
        let _ = write!(
            out,
            concat!(
                "    <node id=\"n{}\">\n",
                "      <data key=\"trust\">{}</data>\n",
                "      <data key=\"visits\">{}</data>\n",
                "      <data key=\"successes\">{}</data>\n",
                "      <data key=\"color\">{}</data>\n",
                "      <data key=\"exemplar\">{}</data>\n",
                "    </node>\n"
            ),
            id,
            s.trust,
            s.visits,
            s.successes,
            band(s.trust),
            xml_escape(&s.exemplar)
        );
    }
    for &(a, b) in &sub.edges {
        if let Some(e) = map.edge(a, b) {
            let _ = write!(
                out,
                concat!(
                    "    <edge source=\"n{}\" target=\"n{}\">\n",
                    "      <data key=\"success\">{}</data>\n",
                    "      <data key=\"total\">{}</data>\n",
                    "    </edge>\n"
                ),
                a, b, e.success, e.total
            );
        }
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}

#[derive(Serialize)]
struct JsonNode<'a> {
    id: usize,
    trust: f64,
    visits: u64,
    successes: u64,
    color: &'static str,
    exemplar: &'a str,
}

#[derive(Serialize)]
struct JsonEdge {
    src: usize,
    dst: usize,
    success: u64,
    total: u64,
}

#[derive(Serialize)]
struct JsonGraph<'a> {
    nodes: Vec<JsonNode<'a>>,
    edges: Vec<JsonEdge>,
}

pub fn write_graph<S: Scalar, W: Write>(
    map: &CognitiveMap<S>,
    sub: &Subgraph,
    format: ExportFormat,
    mut w: W,
) -> Result<(), TopoError> {
    match format {
        ExportFormat::Dot => w.write_all(render_dot(map, sub).as_bytes())?,
        ExportFormat::GraphMl => w.write_all(render_graphml(map, sub).as_bytes())?,
        ExportFormat::Json => {
            let graph = JsonGraph {
                nodes: sub
                    .nodes
                    .iter()
                    .map(|&id| {
                        let s = &map.states()[id];
                        JsonNode {
                            id,
                            trust: s.trust.to_f64_lossy(),
                            visits: s.visits,
                            successes: s.successes,
                            color: band(s.trust),
                            exemplar: &s.exemplar,
                        }
                    })
                    .collect(),
                edges: sub
                    .edges
                    .iter()
                    .filter_map(|&(a, b)| map.edge(a, b))
                    .map(|e| JsonEdge {
                        src: e.src,
                        dst: e.dst,
                        success: e.success,
                        total: e.total,
                    })
                    .collect(),
            };
            serde_json::to_writer_pretty(&mut w, &graph)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn export_graph<S: Scalar>(
    map: &CognitiveMap<S>,
    sub: &Subgraph,
    format: ExportFormat,
    path: impl AsRef<Path>,
) -> Result<(), TopoError> {
    let file = File::create(path)?;
    write_graph(map, sub, format, BufWriter::new(file))
}
