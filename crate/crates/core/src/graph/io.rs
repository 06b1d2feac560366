use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::Graph;
use crate::error::{Error, Result};

/// Tokenization options for edge-list files.
#[derive(Debug, Clone)]
pub struct EdgeListOptions {
    pub comment_prefix: String,
    /// `None` splits on any run of whitespace.
    pub delimiter: Option<char>,
}

impl Default for EdgeListOptions {
    fn default() -> Self {
        EdgeListOptions {
            comment_prefix: "#".to_string(),
            delimiter: None,
        }
    }
}

/// Edges dropped while building a graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DropCounts {
    pub self_loops: usize,
    pub duplicates: usize,
}

/// Parses edge-list text. Node labels are kept in order of first appearance.
pub fn parse_edge_list(text: &str, options: &EdgeListOptions) -> Result<(Graph, DropCounts)> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::new();
    let mut edges = Vec::new();
    let mut intern = |token: &str, labels: &mut Vec<String>| -> usize {
        if let Some(&i) = index.get(token) {
            return i;
        }
        let i = labels.len();
        labels.push(token.to_string());
        index.insert(token.to_string(), i);
        i
    };
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty()
            || (!options.comment_prefix.is_empty() && line.starts_with(&options.comment_prefix))
        {
            continue;
        }
        let tokens: Vec<&str> = match options.delimiter {
            Some(d) => line.split(d).map(str::trim).filter(|t| !t.is_empty()).collect(),
            None => line.split_whitespace().collect(),
        };
        if tokens.len() != 2 {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected 2 tokens, found {}", tokens.len()),
            });
        }
        let u = intern(tokens[0], &mut labels);
        let v = intern(tokens[1], &mut labels);
        edges.push((u, v));
    }
    let (graph, drops) = Graph::from_edges(labels, edges)?;
    if graph.edge_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    Ok((graph, drops))
}

/// Reads an edge-list file, warning about dropped self-loops and duplicates.
pub fn load_edge_list(path: impl AsRef<Path>, options: &EdgeListOptions) -> Result<Graph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (graph, drops) = parse_edge_list(&text, options)?;
    if drops.self_loops > 0 || drops.duplicates > 0 {
        log::warn!(
            "{}: dropped {} self-loops and {} duplicate edges",
            path.display(),
            drops.self_loops,
            drops.duplicates
        );
    }
    Ok(graph)
}

/// Serializes `g` as sorted `min max` label pairs, one per line.
pub fn write_edge_list(g: &Graph) -> String {
    let mut out = String::new();
    for (u, v) in g.edges() {
        let _ = writeln!(out, "{} {}", g.label(u), g.label(v));
    }
    out
}
