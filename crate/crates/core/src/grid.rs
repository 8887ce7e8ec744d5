//! Per-edge uniform cell layout shared by histograms and the finite-volume
//! solver, so both estimates can be compared bin for bin.

use thiserror::Error;

use crate::graph::{EdgeId, MetricGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("edge {edge}: need at least {min} cells, got {cells}")]
    TooFewCells { edge: usize, cells: usize, min: usize },
    #[error("edge {edge}: cell width {width} is not positive and finite")]
    BadWidth { edge: usize, width: f64 },
    #[error("edge {0} is semi-infinite and needs a truncation length")]
    MissingTruncation(usize),
    #[error("grid has {got} edges, graph has {expected}")]
    EdgeCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeGrid {
    pub cells: usize,
    pub width: f64,
}

impl EdgeGrid {
    /// Covered length `cells · width`.
    pub fn span(&self) -> f64 {
        self.cells as f64 * self.width
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.width
    }

    pub fn bounds(&self, i: usize) -> (f64, f64) {
        (i as f64 * self.width, (i + 1) as f64 * self.width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    edges: Vec<EdgeGrid>,
}

impl Grid {
    pub fn new(edges: Vec<EdgeGrid>) -> Result<Self, GridError> {
        for (e, g) in edges.iter().enumerate() {
            if g.cells == 0 {
                return Err(GridError::TooFewCells {
                    edge: e,
                    cells: 0,
                    min: 1,
                });
            }
            if !(g.width > 0.0 && g.width.is_finite()) {
                return Err(GridError::BadWidth {
                    edge: e,
                    width: g.width,
                });
            }
        }
        Ok(Self { edges })
    }

    /// `cells` cells on every edge. Finite edges are covered exactly;
    /// semi-infinite edge `e` is covered up to `truncation(e)`.
    pub fn for_graph(
        graph: &MetricGraph,
        cells: usize,
        truncation: impl Fn(EdgeId) -> Option<f64>,
    ) -> Result<Self, GridError> {
        let mut edges = Vec::with_capacity(graph.edge_count());
        for (i, edge) in graph.edges().iter().enumerate() {
            let span = if edge.is_finite() {
                edge.length
            } else {
                truncation(EdgeId(i)).ok_or(GridError::MissingTruncation(i))?
            };
            edges.push(EdgeGrid {
                cells,
                width: span / cells as f64,
            });
        }
        Self::new(edges)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, e: EdgeId) -> &EdgeGrid {
        &self.edges[e.0]
    }

    pub fn edges(&self) -> &[EdgeGrid] {
        &self.edges
    }

    pub fn total_cells(&self) -> usize {
        self.edges.iter().map(|g| g.cells).sum()
    }

    pub fn check_graph(&self, graph: &MetricGraph) -> Result<(), GridError> {
        if self.edges.len() != graph.edge_count() {
            return Err(GridError::EdgeCount {
                expected: graph.edge_count(),
                got: self.edges.len(),
            });
        }
        Ok(())
    }
}
