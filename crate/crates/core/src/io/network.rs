//! Converter from a vascular network table to a [`GraphFile`].
//!
//! Nodes: `id,x,y,z`. Segments: `id,node_a,node_b,radius,flux`. Each segment
//! becomes an edge `node_a → node_b` whose length is the Euclidean distance,
//! with drift `from_flux Q πr²`, so positive flux runs from `a` to `b`.
//! Vertices are renumbered in node-file order, edges in segment-file order;
//! original ids become vertex labels. Boundary nodes of degree 1 reflect.

use std::collections::HashMap;
use std::io::Read;

use serde::Deserialize;
use thiserror::Error;

use crate::graph::{Edge, VertexId};

use super::graph_file::{DriftEntry, GraphFile};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("segment {segment}: {message}")]
    Segment { segment: String, message: String },
    #[error("node id {0} appears twice")]
    DuplicateNode(String),
}

#[derive(Debug, Deserialize)]
struct NodeRow {
    id: String,
    x: f64,
    y: f64,
    z: f64,
}

#[derive(Debug, Deserialize)]
struct SegmentRow {
    id: String,
    node_a: String,
    node_b: String,
    radius: f64,
    flux: f64,
}

pub fn network_to_graph_file(nodes: impl Read, segments: impl Read, sigma: f64) -> Result<GraphFile, NetworkError> {
    let mut index = HashMap::new();
    let mut coords = Vec::new();
    let mut doc = GraphFile::default();
    for row in csv::Reader::from_reader(nodes).deserialize() {
        let n: NodeRow = row?;
        let v = coords.len();
        if index.insert(n.id.clone(), v).is_some() {
            return Err(NetworkError::DuplicateNode(n.id));
        }
        coords.push([n.x, n.y, n.z]);
        doc.vertices.push((VertexId(v), Some(n.id)));
    }
    for row in csv::Reader::from_reader(segments).deserialize() {
        let s: SegmentRow = row?;
        let bad = |message: String| NetworkError::Segment {
            segment: s.id.clone(),
            message,
        };
        let a = *index
            .get(&s.node_a)
            .ok_or_else(|| bad(format!("unknown node {}", s.node_a)))?;
        let b = *index
            .get(&s.node_b)
            .ok_or_else(|| bad(format!("unknown node {}", s.node_b)))?;
        let length = coords[a]
            .iter()
            .zip(&coords[b])
            .map(|(p, q)| (p - q).powi(2))
            .sum::<f64>()
            .sqrt();
        doc.edges.push(Edge {
            init: VertexId(a),
            term: VertexId(b),
            length,
        });
        doc.drifts.push(DriftEntry::FromFlux {
            flux: s.flux,
            area: std::f64::consts::PI * s.radius * s.radius,
        });
        doc.sigmas.push(sigma);
    }
    Ok(doc)
}
