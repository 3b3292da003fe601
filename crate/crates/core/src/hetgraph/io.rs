//! Tab-separated graph files.
//!
//! ```text
//! nodes     <node_id>\t<node_type_name>
//! edges     <src_id>\t<dst_id>\t<edge_type_name>
//! features  <node_id>\t<f_1> <f_2> ... <f_D>
//! labels    <node_id>\t<class_name>
//! ```
//!
//! Type and class ids are assigned in order of first appearance.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{Edge, HeteroGraph};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Paths of the files that make up one graph.
#[derive(Debug, Clone)]
pub struct GraphFiles {
    pub nodes: PathBuf,
    pub edges: PathBuf,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

impl GraphFiles {
    /// Conventional layout inside a directory: `nodes.tsv`, `edges.tsv` and,
    /// when present, `features.tsv` and `labels.tsv`.
    pub fn in_dir(dir: &Path) -> Self {
        let opt = |name: &str| {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        Self {
            nodes: dir.join("nodes.tsv"),
            edges: dir.join("edges.tsv"),
            features: opt("features.tsv"),
            labels: opt("labels.tsv"),
        }
    }
}

struct Interner {
    ids: HashMap<String, usize>,
    names: Vec<String>,
}

impl Interner {
    fn new() -> Self {
        Self {
            ids: HashMap::new(),
            names: Vec::new(),
        }
    }

    fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len();
        self.ids.insert(name.to_string(), id);
        self.names.push(name.to_string());
        id
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-empty lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_id(path: &Path, line: usize, s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid node id {s:?}")))
}

pub fn load_graph(
    nodes_path: &Path,
    edges_path: &Path,
    features_path: Option<&Path>,
    labels_path: Option<&Path>,
) -> Result<HeteroGraph> {
    let text = read(nodes_path)?;
    let mut node_types = Interner::new();
    let mut slots: Vec<Option<usize>> = Vec::new();
    for (ln, line) in lines(&text) {
        let (id, ty) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(nodes_path, ln, "expected <node_id>\\t<node_type>"))?;
        let id = parse_id(nodes_path, ln, id)?;
        let ty = ty.trim();
        if ty.is_empty() || ty.contains('\t') {
            return Err(parse_err(nodes_path, ln, "expected <node_id>\\t<node_type>"));
        }
        if id >= slots.len() {
            slots.resize(id + 1, None);
        }
        if slots[id].is_some() {
            return Err(parse_err(nodes_path, ln, format!("duplicate node id {id}")));
        }
        slots[id] = Some(node_types.intern(ty));
    }
    if let Some(gap) = slots.iter().position(Option::is_none) {
        return Err(parse_err(
            nodes_path,
            0,
            format!("node ids must be consecutive from 0; {gap} is missing"),
        ));
    }
    let node_types_of: Vec<usize> = slots.into_iter().map(Option::unwrap).collect();
    let n = node_types_of.len();

    let text = read(edges_path)?;
    let mut edge_types = Interner::new();
    let mut edges = Vec::new();
    for (ln, line) in lines(&text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields[2].trim().is_empty() {
            return Err(parse_err(edges_path, ln, "expected <src>\\t<dst>\\t<edge_type>"));
        }
        let src = parse_id(edges_path, ln, fields[0])?;
        let dst = parse_id(edges_path, ln, fields[1])?;
        if src >= n || dst >= n {
            return Err(parse_err(
                edges_path,
                ln,
                format!("edge references unknown node {}", src.max(dst)),
            ));
        }
        edges.push(Edge {
            src,
            dst,
            edge_type: edge_types.intern(fields[2].trim()),
        });
    }

    let features = features_path.map(|p| load_features(p, n)).transpose()?;
    let labels = labels_path.map(|p| load_labels(p, n)).transpose()?;

    HeteroGraph::new(
        node_types_of,
        node_types.names,
        edges,
        edge_types.names,
        features,
        labels,
    )
}

fn load_features(path: &Path, n: usize) -> Result<DenseMatrix> {
    let text = read(path)?;
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut dim: Option<usize> = None;
    for (ln, line) in lines(&text) {
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(path, ln, "expected <node_id>\\t<values>"))?;
        let id = parse_id(path, ln, id)?;
        if id >= n {
            return Err(parse_err(path, ln, format!("unknown node id {id}")));
        }
        let values = rest
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| parse_err(path, ln, format!("invalid number {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(parse_err(
                    path,
                    ln,
                    format!("feature row has {} values, expected {d}", values.len()),
                ))
            }
            _ => {}
        }
        if rows[id].replace(values).is_some() {
            return Err(parse_err(path, ln, format!("duplicate node id {id}")));
        }
    }
    if let Some(missing) = rows.iter().position(Option::is_none) {
        return Err(parse_err(path, 0, format!("no feature row for node {missing}")));
    }
    let d = dim.unwrap_or(0);
    let data = rows.into_iter().flat_map(Option::unwrap).collect();
    DenseMatrix::new(n, d, data)
}

fn load_labels(path: &Path, n: usize) -> Result<(Vec<Option<usize>>, Vec<String>)> {
    let text = read(path)?;
    let mut classes = Interner::new();
    let mut labels = vec![None; n];
    for (ln, line) in lines(&text) {
        let (id, class) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(path, ln, "expected <node_id>\\t<class>"))?;
        let id = parse_id(path, ln, id)?;
        if id >= n {
            return Err(parse_err(path, ln, format!("unknown node id {id}")));
        }
        let class = class.trim();
        if class.is_empty() {
            return Err(parse_err(path, ln, "empty class name"));
        }
        if labels[id].replace(classes.intern(class)).is_some() {
            return Err(parse_err(path, ln, format!("duplicate label for node {id}")));
        }
    }
    Ok((labels, classes.names))
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(body.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// Writes `g` in the conventional directory layout (see [`GraphFiles::in_dir`]).
pub fn write_graph(g: &HeteroGraph, dir: &Path) -> Result<GraphFiles> {
    use std::fmt::Write as _;

    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut nodes = String::new();
    for (v, &t) in g.node_types().iter().enumerate() {
        writeln!(nodes, "{v}\t{}", g.node_type_names()[t]).unwrap();
    }
    let mut edges = String::new();
    for e in g.edges() {
        writeln!(edges, "{}\t{}\t{}", e.src, e.dst, g.edge_type_names()[e.edge_type]).unwrap();
    }
    write_file(&dir.join("nodes.tsv"), &nodes)?;
    write_file(&dir.join("edges.tsv"), &edges)?;

    let mut files = GraphFiles {
        nodes: dir.join("nodes.tsv"),
        edges: dir.join("edges.tsv"),
        features: None,
        labels: None,
    };
    if let Some(labels) = g.labels() {
        let mut out = String::new();
        for (v, l) in labels.iter().enumerate() {
            if let Some(c) = l {
                writeln!(out, "{v}\t{}", g.class_names()[*c]).unwrap();
            }
        }
        let p = dir.join("labels.tsv");
        write_file(&p, &out)?;
        files.labels = Some(p);
    }
    if let Some(x) = g.features() {
        let mut out = String::new();
        for v in 0..x.rows() {
            let row: Vec<String> = x.row(v).iter().map(|f| format!("{f:.16e}")).collect();
            writeln!(out, "{v}\t{}", row.join(" ")).unwrap();
        }
        let p = dir.join("features.tsv");
        write_file(&p, &out)?;
        files.features = Some(p);
    }
    Ok(files)
}
