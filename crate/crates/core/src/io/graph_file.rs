//! Line-oriented graph description.
//!
//! ```text
//! mgraph 1
//! vertex 0 center
//! vertex 1
//! edge 0 0 1 inf
//! weights 0 0:1
//! drift 0 constant -10
//! sigma 0 1
//! ```
//!
//! Records: `vertex <id> [label]`, `edge <id> <init> <term> <length|inf>`,
//! `weights <vertex> <edge>:<b> ...`, `drift <edge> constant <c>`,
//! `drift <edge> linear <c>`, `drift <edge> tabulated <x>:<mu> ...`,
//! `drift <edge> from_flux <Q> <A>`, `sigma <edge> <value>`. `#` starts a
//! comment. Vertex records are optional; once one is given, every vertex an
//! edge mentions must be declared. Missing drift defaults to 0, missing
//! sigma to 1.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::coeffs::{drift_from_flux, CoeffError, CoefficientField, DiffusionSpec, DriftSpec};
use crate::graph::{Edge, EdgeId, GraphError, JumpWeights, MetricGraph, VertexId};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "mgraph";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphFileError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{}{source}", line_prefix(*.line))]
    Graph { line: Option<usize>, source: GraphError },
    #[error("{}{source}", line_prefix(*.line))]
    Coefficients { line: Option<usize>, source: CoeffError },
}

fn line_prefix(line: Option<usize>) -> String {
    line.map(|l| format!("line {l}: ")).unwrap_or_default()
}

/// Drift as written in the file; `FromFlux` keeps `Q` and `A`.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftEntry {
    Spec(DriftSpec),
    FromFlux { flux: f64, area: f64 },
}

/// The document as parsed, before graph construction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GraphFile {
    pub vertices: Vec<(VertexId, Option<String>)>,
    pub edges: Vec<Edge>,
    pub weights: JumpWeights,
    pub drifts: Vec<DriftEntry>,
    pub sigmas: Vec<f64>,
    lines: LineMap,
}

/// Source lines of records, for error messages. Not part of equality.
#[derive(Debug, Clone, Default)]
struct LineMap {
    edges: Vec<usize>,
    weights: BTreeMap<usize, usize>,
    drifts: Vec<Option<usize>>,
    sigmas: Vec<Option<usize>>,
}

impl PartialEq for LineMap {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64, GraphFileError> {
    let v = if tok == "inf" {
        f64::INFINITY
    } else {
        tok.parse::<f64>().map_err(|_| GraphFileError::Parse {
            line,
            message: format!("{what}: expected a number, got {tok:?}"),
        })?
    };
    if v.is_nan() {
        return Err(GraphFileError::Parse {
            line,
            message: format!("{what} is NaN"),
        });
    }
    Ok(v)
}

fn parse_finite(tok: &str, line: usize, what: &str) -> Result<f64, GraphFileError> {
    let v = parse_f64(tok, line, what)?;
    if !v.is_finite() {
        return Err(GraphFileError::Parse {
            line,
            message: format!("{what} must be finite"),
        });
    }
    Ok(v)
}

fn parse_id(tok: &str, line: usize, what: &str) -> Result<usize, GraphFileError> {
    tok.parse::<usize>().map_err(|_| GraphFileError::Parse {
        line,
        message: format!("{what}: expected a nonnegative integer id, got {tok:?}"),
    })
}

fn parse_pair<'a>(tok: &'a str, line: usize, what: &str) -> Result<(&'a str, &'a str), GraphFileError> {
    tok.split_once(':').ok_or_else(|| GraphFileError::Parse {
        line,
        message: format!("{what}: expected <a>:<b>, got {tok:?}"),
    })
}

impl GraphFile {
    pub fn parse(text: &str) -> Result<Self, GraphFileError> {
        let err = |line: usize, message: String| GraphFileError::Parse { line, message };
        let mut doc = GraphFile::default();
        let mut header_seen = false;
        let mut edges: BTreeMap<usize, (Edge, usize)> = BTreeMap::new();
        let mut drifts: BTreeMap<usize, (DriftEntry, usize)> = BTreeMap::new();
        let mut sigmas: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        let mut declared: BTreeMap<usize, usize> = BTreeMap::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let toks: Vec<&str> = content.split_whitespace().collect();
            if !header_seen {
                if toks.len() != 2 || toks[0] != MAGIC {
                    return Err(err(line, format!("expected header `{MAGIC} {FORMAT_VERSION}`")));
                }
                let v = parse_id(toks[1], line, "format version")?;
                if v as u32 != FORMAT_VERSION {
                    return Err(err(line, format!("unsupported format version {v}")));
                }
                header_seen = true;
                continue;
            }
            let need = |n: usize| -> Result<(), GraphFileError> {
                if toks.len() < n {
                    Err(err(line, format!("`{}` needs at least {} fields", toks[0], n - 1)))
                } else {
                    Ok(())
                }
            };
            match toks[0] {
                "vertex" => {
                    need(2)?;
                    let id = parse_id(toks[1], line, "vertex id")?;
                    if declared.insert(id, line).is_some() {
                        return Err(err(line, format!("vertex {id} declared twice")));
                    }
                    let label = (toks.len() > 2).then(|| toks[2..].join(" "));
                    doc.vertices.push((VertexId(id), label));
                }
                "edge" => {
                    need(5)?;
                    if toks.len() > 5 {
                        return Err(err(line, "`edge` takes exactly 4 fields".into()));
                    }
                    let id = parse_id(toks[1], line, "edge id")?;
                    let init = parse_id(toks[2], line, "init vertex")?;
                    let term = parse_id(toks[3], line, "term vertex")?;
                    let length = parse_f64(toks[4], line, "length")?;
                    let edge = Edge {
                        init: VertexId(init),
                        term: VertexId(term),
                        length,
                    };
                    if edges.insert(id, (edge, line)).is_some() {
                        return Err(err(line, format!("edge {id} defined twice")));
                    }
                }
                "weights" => {
                    need(3)?;
                    let v = parse_id(toks[1], line, "vertex id")?;
                    if doc.lines.weights.insert(v, line).is_some() {
                        return Err(err(line, format!("weights for vertex {v} given twice")));
                    }
                    let mut list = Vec::with_capacity(toks.len() - 2);
                    for tok in &toks[2..] {
                        let (e, b) = parse_pair(tok, line, "weight")?;
                        list.push((EdgeId(parse_id(e, line, "edge id")?), parse_finite(b, line, "weight")?));
                    }
                    doc.weights.insert(VertexId(v), list);
                }
                "drift" => {
                    need(3)?;
                    let e = parse_id(toks[1], line, "edge id")?;
                    let arity = |n: usize| -> Result<(), GraphFileError> {
                        if toks.len() != n + 3 {
                            Err(err(line, format!("`drift {}` takes {} value(s)", toks[2], n)))
                        } else {
                            Ok(())
                        }
                    };
                    let entry = match toks[2] {
                        "constant" => {
                            arity(1)?;
                            DriftEntry::Spec(DriftSpec::Constant(parse_finite(toks[3], line, "drift")?))
                        }
                        "linear" => {
                            arity(1)?;
                            DriftEntry::Spec(DriftSpec::Linear(parse_finite(toks[3], line, "drift slope")?))
                        }
                        "tabulated" => {
                            need(4)?;
                            let mut table = Vec::with_capacity(toks.len() - 3);
                            for tok in &toks[3..] {
                                let (x, m) = parse_pair(tok, line, "table entry")?;
                                table.push((parse_finite(x, line, "table x")?, parse_finite(m, line, "table drift")?));
                            }
                            DriftEntry::Spec(DriftSpec::Tabulated(table))
                        }
                        "from_flux" => {
                            arity(2)?;
                            DriftEntry::FromFlux {
                                flux: parse_finite(toks[3], line, "flux Q")?,
                                area: parse_finite(toks[4], line, "area A")?,
                            }
                        }
                        other => return Err(err(line, format!("unknown drift kind {other:?}"))),
                    };
                    if drifts.insert(e, (entry, line)).is_some() {
                        return Err(err(line, format!("drift for edge {e} given twice")));
                    }
                }
                "sigma" => {
                    need(3)?;
                    if toks.len() != 3 {
                        return Err(err(line, "`sigma` takes exactly 2 fields".into()));
                    }
                    let e = parse_id(toks[1], line, "edge id")?;
                    let s = parse_finite(toks[2], line, "sigma")?;
                    if sigmas.insert(e, (s, line)).is_some() {
                        return Err(err(line, format!("sigma for edge {e} given twice")));
                    }
                }
                other => return Err(err(line, format!("unknown record {other:?}"))),
            }
        }
        if !header_seen {
            return Err(err(1, format!("missing header `{MAGIC} {FORMAT_VERSION}`")));
        }

        let n = edges.len();
        if let Some((&id, &(_, line))) = edges.iter().find(|(&id, _)| id >= n) {
            return Err(err(line, format!("edge ids must be 0..{n}; got {id}")));
        }
        for (id, (edge, line)) in edges {
            debug_assert_eq!(id, doc.edges.len());
            doc.edges.push(edge);
            doc.lines.edges.push(line);
        }
        let undefined = drifts
            .iter()
            .map(|(&e, (_, l))| (e, *l))
            .chain(sigmas.iter().map(|(&e, (_, l))| (e, *l)))
            .find(|&(e, _)| e >= n);
        if let Some((e, line)) = undefined {
            return Err(err(line, format!("edge {e} is not defined")));
        }
        for (v, list) in &doc.weights {
            let line = doc.lines.weights[&v.0];
            for (e, _) in list {
                let edge = doc
                    .edges
                    .get(e.0)
                    .ok_or_else(|| err(line, format!("edge {} is not defined", e.0)))?;
                if edge.init != *v && edge.term != *v {
                    return Err(err(line, format!("edge {} is not incident to vertex {}", e.0, v.0)));
                }
            }
        }
        doc.drifts = vec![DriftEntry::Spec(DriftSpec::Constant(0.0)); n];
        doc.lines.drifts = vec![None; n];
        for (e, (d, line)) in drifts {
            doc.drifts[e] = d;
            doc.lines.drifts[e] = Some(line);
        }
        doc.sigmas = vec![1.0; n];
        doc.lines.sigmas = vec![None; n];
        for (e, (s, line)) in sigmas {
            doc.sigmas[e] = s;
            doc.lines.sigmas[e] = Some(line);
        }

        if !declared.is_empty() {
            for (i, e) in doc.edges.iter().enumerate() {
                for v in [e.init, e.term] {
                    if !declared.contains_key(&v.0) {
                        return Err(err(doc.lines.edges[i], format!("vertex {} is not declared", v.0)));
                    }
                }
            }
        }
        // sentinel ends carry no weights
        for (i, e) in doc.edges.iter().enumerate() {
            if !e.is_finite() {
                if let Some(&line) = doc.lines.weights.get(&e.term.0) {
                    return Err(err(
                        line,
                        format!(
                            "vertex {} is the infinite end of edge {i} and cannot carry weights",
                            e.term.0
                        ),
                    ));
                }
            }
        }
        Ok(doc)
    }

    fn graph_error_line(&self, e: &GraphError) -> Option<usize> {
        match e {
            GraphError::NonPositiveLength { edge, .. } | GraphError::SelfLoop { edge, .. } => {
                self.lines.edges.get(*edge).copied()
            }
            GraphError::WeightSimplexViolation { vertex, .. } => self.lines.weights.get(vertex).copied(),
            GraphError::SentinelConflict(v) => self
                .edges
                .iter()
                .position(|e| e.init.0 == *v || e.term.0 == *v)
                .and_then(|i| self.lines.edges.get(i).copied()),
            GraphError::DisconnectedGraph(v, _) => self
                .edges
                .iter()
                .position(|e| e.init.0 == *v || e.term.0 == *v)
                .and_then(|i| self.lines.edges.get(i).copied()),
            GraphError::DanglingVertexReference(_) => self.lines.weights.values().next().copied(),
            GraphError::Empty => Some(1),
            _ => None,
        }
    }

    /// Resolved drift specs, `from_flux` entries turned into constants.
    pub fn drift_specs(&self) -> Result<Vec<DriftSpec>, GraphFileError> {
        self.drifts
            .iter()
            .enumerate()
            .map(|(e, d)| match d {
                DriftEntry::Spec(s) => Ok(s.clone()),
                DriftEntry::FromFlux { flux, area } => drift_from_flux(&[*flux], &[*area])
                    .map(|mut v| v.remove(0))
                    .map_err(|source| GraphFileError::Coefficients {
                        line: self.lines.drifts.get(e).copied().flatten(),
                        source: match source {
                            CoeffError::NonPositiveArea { area, .. } => CoeffError::NonPositiveArea { edge: e, area },
                            other => other,
                        },
                    }),
            })
            .collect()
    }

    /// Builds and validates the graph and coefficient field.
    pub fn build(&self) -> Result<(MetricGraph, CoefficientField), GraphFileError> {
        let graph = MetricGraph::build(&self.edges, &self.weights).map_err(|source| GraphFileError::Graph {
            line: self.graph_error_line(&source),
            source,
        })?;
        let drifts = self.drift_specs()?;
        let diffusion = self.sigmas.iter().map(|&s| DiffusionSpec::Constant(s)).collect();
        let field = CoefficientField::new(&graph, drifts, diffusion).map_err(|source| {
            let line = match &source {
                CoeffError::ZeroDiffusion { edge, .. } => self.lines.sigmas.get(*edge).copied().flatten(),
                CoeffError::BadTable { edge, .. } => self.lines.drifts.get(*edge).copied().flatten(),
                _ => None,
            };
            GraphFileError::Coefficients { line, source }
        })?;
        Ok((graph, field))
    }

    /// Canonical text. Parsing it yields a document equal to `self`.
    pub fn serialize(&self) -> String {
        let mut out = format!("{MAGIC} {FORMAT_VERSION}\n");
        for (v, label) in &self.vertices {
            match label {
                Some(l) => writeln!(out, "vertex {} {l}", v.0),
                None => writeln!(out, "vertex {}", v.0),
            }
            .expect("writing to a String");
        }
        let num = |x: f64| {
            if x.is_infinite() {
                "inf".to_string()
            } else {
                format!("{x:?}")
            }
        };
        for (i, e) in self.edges.iter().enumerate() {
            writeln!(out, "edge {i} {} {} {}", e.init.0, e.term.0, num(e.length)).expect("writing to a String");
        }
        for (v, list) in &self.weights {
            let items: Vec<String> = list.iter().map(|(e, b)| format!("{}:{b:?}", e.0)).collect();
            writeln!(out, "weights {} {}", v.0, items.join(" ")).expect("writing to a String");
        }
        for (i, d) in self.drifts.iter().enumerate() {
            let body = match d {
                DriftEntry::Spec(DriftSpec::Constant(c)) => format!("constant {c:?}"),
                DriftEntry::Spec(DriftSpec::Linear(c)) => format!("linear {c:?}"),
                DriftEntry::Spec(DriftSpec::Tabulated(t)) => {
                    let items: Vec<String> = t.iter().map(|(x, m)| format!("{x:?}:{m:?}")).collect();
                    format!("tabulated {}", items.join(" "))
                }
                DriftEntry::FromFlux { flux, area } => format!("from_flux {flux:?} {area:?}"),
            };
            writeln!(out, "drift {i} {body}").expect("writing to a String");
        }
        for (i, s) in self.sigmas.iter().enumerate() {
            writeln!(out, "sigma {i} {s:?}").expect("writing to a String");
        }
        out
    }

    /// Document describing an already-built graph and field.
    pub fn from_model(graph: &MetricGraph, field: &CoefficientField) -> Self {
        let mut weights = JumpWeights::new();
        for v in graph.finite_vertices() {
            let inc = graph.incidence(v);
            if inc.degree() > 0 {
                weights.insert(
                    v,
                    inc.edges
                        .iter()
                        .copied()
                        .zip(inc.jump_weights.iter().copied())
                        .collect(),
                );
            }
        }
        let n = graph.edge_count();
        GraphFile {
            vertices: (0..graph.vertex_count()).map(|v| (VertexId(v), None)).collect(),
            edges: graph.edges().to_vec(),
            weights,
            drifts: field.drift_specs().iter().cloned().map(DriftEntry::Spec).collect(),
            sigmas: field
                .diffusion_specs()
                .iter()
                .map(|d| match d {
                    DiffusionSpec::Constant(s) => *s,
                })
                .collect(),
            lines: LineMap {
                edges: vec![0; n],
                drifts: vec![None; n],
                sigmas: vec![None; n],
                ..LineMap::default()
            },
        }
    }
}

/// Parses and builds in one go.
pub fn parse_graph_file(text: &str) -> Result<(MetricGraph, CoefficientField), GraphFileError> {
    GraphFile::parse(text)?.build()
}
