//! Line-oriented text format for instances and layouts.
//!
//! ```text
//! soac 1
//! vertices 3
//! arc 0 1 lat 0 1/2
//! arc 1 2 lat 1
//! agents 1
//! agent 0 2
//! lambda 3/2
//! alpha 0
//! layout
//! tree - 0 1
//! extra 0 2
//! root 0
//! ```
//!
//! `#` starts a comment. The capacity of an arc is the number of latency
//! values after `lat`. `agents M` is optional on input and always written.

use std::fmt::Write as _;
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use soac_core::decomposition::SpanningTreeLayout;
use soac_core::{Agent, Cost, Digraph, Instance, LatencyTable, VertexId};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    /// 1-based; 0 for problems with the file as a whole.
    pub line: usize,
    pub message: String,
}

pub(crate) fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        line,
        message: message.into(),
    })
}

/// A layout as written in a file, before it is checked against a graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayoutSpec {
    pub parent: Vec<Option<VertexId>>,
    pub extra: Vec<(VertexId, VertexId)>,
    pub root: VertexId,
}

impl LayoutSpec {
    pub fn from_layout(layout: &SpanningTreeLayout) -> Self {
        LayoutSpec {
            parent: layout.parent.clone(),
            extra: layout.extra_edges.clone(),
            root: layout.root,
        }
    }

    pub fn build(&self, graph: &Digraph) -> soac_core::Result<SpanningTreeLayout> {
        let layout = SpanningTreeLayout::new(graph, self.parent.clone(), self.extra.clone())?;
        if layout.root != self.root {
            return Err(soac_core::SoacError::InvalidLayout(format!(
                "declared root {} but the parent array roots at {}",
                self.root, layout.root
            )));
        }
        Ok(layout)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub instance: Instance,
    pub layout: Option<LayoutSpec>,
}

pub fn parse_rational(token: &str) -> Option<BigRational> {
    let (p, q) = match token.split_once('/') {
        Some((p, q)) => (p, q),
        None => (token, "1"),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(p) || !digits(q) {
        return None;
    }
    let q = BigInt::from_str(q).ok()?;
    if q.sign() == Sign::NoSign {
        return None;
    }
    Some(BigRational::new(BigInt::from_str(p).ok()?, q))
}

pub fn format_rational(r: &BigRational) -> String {
    if *r.denom() == BigInt::from(1) {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn format_cost(c: &Cost) -> String {
    match c.as_rational() {
        Some(r) => format_rational(r),
        None => "inf".to_string(),
    }
}

pub(crate) fn parse_index(line: usize, token: &str, what: &str) -> Result<usize, ParseError> {
    if token.is_empty() || !token.bytes().all(|b| b.is_ascii_digit()) {
        return err(line, format!("expected {what}, found `{token}`"));
    }
    token
        .parse()
        .or_else(|_| err(line, format!("{what} `{token}` is too large")))
}

fn once<T>(slot: &mut Option<T>, value: T, line: usize, keyword: &str) -> Result<(), ParseError> {
    if slot.is_some() {
        return err(line, format!("duplicate `{keyword}`"));
    }
    *slot = Some(value);
    Ok(())
}

#[derive(Default)]
struct LayoutLines {
    start: usize,
    tree: Option<(usize, Vec<Option<VertexId>>)>,
    extra: Vec<(usize, VertexId, VertexId)>,
    root: Option<(usize, VertexId)>,
}

pub fn parse_document(text: &str) -> Result<Document, ParseError> {
    let mut header = false;
    let mut vertices: Option<(usize, usize)> = None;
    let mut arcs: Vec<(usize, VertexId, VertexId, Vec<BigRational>)> = Vec::new();
    let mut agents: Vec<(usize, VertexId, VertexId)> = Vec::new();
    let mut agent_count: Option<(usize, usize)> = None;
    let mut lambda: Option<Cost> = None;
    let mut alpha: Option<(usize, usize)> = None;
    let mut layout: Option<LayoutLines> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = content.split_whitespace().collect();
        let Some((&keyword, args)) = tokens.split_first() else {
            continue;
        };
        if !header {
            if tokens != ["soac", "1"] {
                return err(line, "expected header `soac 1`");
            }
            header = true;
            continue;
        }
        let arity = |n: usize| -> Result<(), ParseError> {
            if args.len() != n {
                return err(line, format!("`{keyword}` takes {n} argument(s), found {}", args.len()));
            }
            Ok(())
        };
        if let Some(block) = layout.as_mut() {
            match keyword {
                "tree" => {
                    let parent = args
                        .iter()
                        .map(|t| match *t {
                            "-" => Ok(None),
                            t => parse_index(line, t, "parent vertex").map(Some),
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    once(&mut block.tree, (line, parent), line, "tree")?;
                    continue;
                }
                "extra" => {
                    arity(2)?;
                    let u = parse_index(line, args[0], "vertex")?;
                    let w = parse_index(line, args[1], "vertex")?;
                    block.extra.push((line, u, w));
                    continue;
                }
                "root" => {
                    arity(1)?;
                    let r = parse_index(line, args[0], "vertex")?;
                    once(&mut block.root, (line, r), line, "root")?;
                    continue;
                }
                _ => {}
            }
        }
        match keyword {
            "soac" => return err(line, "duplicate header"),
            "vertices" => {
                arity(1)?;
                let n = parse_index(line, args[0], "vertex count")?;
                once(&mut vertices, (line, n), line, "vertices")?;
            }
            "arc" => {
                if args.len() < 3 || args[2] != "lat" {
                    return err(line, "expected `arc TAIL HEAD lat VALUES...`");
                }
                let tail = parse_index(line, args[0], "tail vertex")?;
                let head = parse_index(line, args[1], "head vertex")?;
                if tail == head {
                    return err(line, format!("self-loop at vertex {tail}"));
                }
                let values = args[3..]
                    .iter()
                    .map(|t| {
                        parse_rational(t)
                            .ok_or(())
                            .or_else(|_| err(line, format!("bad rational `{t}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                arcs.push((line, tail, head, values));
            }
            "agents" => {
                arity(1)?;
                let m = parse_index(line, args[0], "agent count")?;
                once(&mut agent_count, (line, m), line, "agents")?;
            }
            "agent" => {
                arity(2)?;
                let s = parse_index(line, args[0], "source vertex")?;
                let t = parse_index(line, args[1], "target vertex")?;
                agents.push((line, s, t));
            }
            "lambda" => {
                arity(1)?;
                let value = match args[0] {
                    "inf" => Cost::Infinite,
                    t => match parse_rational(t) {
                        Some(r) => Cost::new(r),
                        None => return err(line, format!("bad rational `{t}`")),
                    },
                };
                once(&mut lambda, value, line, "lambda")?;
            }
            "alpha" => {
                arity(1)?;
                let a = parse_index(line, args[0], "alpha")?;
                once(&mut alpha, (line, a), line, "alpha")?;
            }
            "layout" => {
                arity(0)?;
                if layout.is_some() {
                    return err(line, "duplicate `layout`");
                }
                layout = Some(LayoutLines {
                    start: line,
                    ..LayoutLines::default()
                });
            }
            "tree" | "extra" | "root" => return err(line, format!("`{keyword}` outside a layout block")),
            other => return err(line, format!("unknown keyword `{other}`")),
        }
    }

    if !header {
        return err(0, "missing header `soac 1`");
    }
    let Some((_, n)) = vertices else {
        return err(0, "missing `vertices`");
    };
    let vertex = |line: usize, v: VertexId| -> Result<VertexId, ParseError> {
        if v >= n {
            return err(line, format!("vertex {v} out of range 0..{n}"));
        }
        Ok(v)
    };
    let mut pairs = Vec::with_capacity(arcs.len());
    let mut tables = Vec::with_capacity(arcs.len());
    for (line, tail, head, values) in arcs {
        pairs.push((vertex(line, tail)?, vertex(line, head)?));
        tables.push(LatencyTable::new(values).or_else(|e| err(line, e.to_string()))?);
    }
    if let Some((line, m)) = agent_count {
        if m != agents.len() {
            return err(line, format!("declared {m} agents, found {}", agents.len()));
        }
    }
    let agent_list = agents
        .iter()
        .map(|&(line, s, t)| {
            Ok(Agent {
                source: vertex(line, s)?,
                target: vertex(line, t)?,
            })
        })
        .collect::<Result<Vec<_>, ParseError>>()?;
    let graph = Digraph::new(n, pairs).or_else(|e| err(0, e.to_string()))?;
    let mut instance = Instance::new(graph, tables, agent_list).or_else(|e| err(0, e.to_string()))?;
    if let Some((line, a)) = alpha {
        instance = instance.with_alpha(a).or_else(|e| err(line, e.to_string()))?;
    }
    if let Some(l) = lambda {
        instance = instance.with_lambda(l);
    }

    let layout = match layout {
        None => None,
        Some(block) => {
            let Some((tree_line, parent)) = block.tree else {
                return err(block.start, "layout block without `tree`");
            };
            if parent.len() != n {
                return err(
                    tree_line,
                    format!("parent array has {} entries for {n} vertices", parent.len()),
                );
            }
            for &p in parent.iter().flatten() {
                vertex(tree_line, p)?;
            }
            let extra = block
                .extra
                .iter()
                .map(|&(line, u, w)| Ok((vertex(line, u)?, vertex(line, w)?)))
                .collect::<Result<Vec<_>, ParseError>>()?;
            let Some((root_line, root)) = block.root else {
                return err(block.start, "layout block without `root`");
            };
            vertex(root_line, root)?;
            if n > 0 && parent[root].is_some() {
                return err(root_line, format!("root {root} has a parent in the tree"));
            }
            Some(LayoutSpec { parent, extra, root })
        }
    };
    Ok(Document { instance, layout })
}

pub fn parse_instance(text: &str) -> Result<Instance, ParseError> {
    parse_document(text).map(|d| d.instance)
}

/// A file holding only a layout block, optionally with the usual header.
pub fn parse_layout(text: &str, vertex_count: usize) -> Result<LayoutSpec, ParseError> {
    let has_header = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .find(|l| !l.is_empty())
        .is_some_and(|l| l.split_whitespace().eq(["soac", "1"]));
    let body = if has_header {
        text.to_string()
    } else {
        let block = if text.split_whitespace().any(|t| t == "layout") {
            text.to_string()
        } else {
            format!("layout\n{text}")
        };
        format!("soac 1\nvertices {vertex_count}\n{block}")
    };
    match parse_document(&body)?.layout {
        Some(spec) => Ok(spec),
        None => err(0, "no layout block"),
    }
}

fn write_layout(out: &mut String, spec: &LayoutSpec) {
    out.push_str("layout\ntree");
    for p in &spec.parent {
        match p {
            Some(p) => write!(out, " {p}").unwrap(),
            None => out.push_str(" -"),
        }
    }
    out.push('\n');
    let mut extra: Vec<_> = spec.extra.iter().map(|&(u, w)| (u.min(w), u.max(w))).collect();
    extra.sort_unstable();
    extra.dedup();
    for (u, w) in extra {
        writeln!(out, "extra {u} {w}").unwrap();
    }
    writeln!(out, "root {}", spec.root).unwrap();
}

/// Layout block on its own, as accepted by [`parse_layout`].
pub fn serialize_layout(spec: &LayoutSpec) -> String {
    let mut out = String::new();
    write_layout(&mut out, spec);
    out
}

pub fn serialize_document(doc: &Document) -> String {
    let inst = &doc.instance;
    let mut out = String::from("soac 1\n");
    writeln!(out, "vertices {}", inst.vertex_count()).unwrap();
    for (arc, table) in inst.graph.arcs().iter().zip(&inst.latencies) {
        write!(out, "arc {} {} lat", arc.tail, arc.head).unwrap();
        for v in table.values() {
            write!(out, " {}", format_rational(v)).unwrap();
        }
        out.push('\n');
    }
    writeln!(out, "agents {}", inst.agent_count()).unwrap();
    for a in &inst.agents {
        writeln!(out, "agent {} {}", a.source, a.target).unwrap();
    }
    if let Some(l) = &inst.lambda {
        writeln!(out, "lambda {}", format_cost(l)).unwrap();
    }
    if let Some(a) = inst.alpha {
        writeln!(out, "alpha {a}").unwrap();
    }
    if let Some(spec) = &doc.layout {
        write_layout(&mut out, spec);
    }
    out
}

pub fn serialize_instance(instance: &Instance) -> String {
    serialize_document(&Document {
        instance: instance.clone(),
        layout: None,
    })
}
