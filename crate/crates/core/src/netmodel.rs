//! Radial network graph and the matrices derived from it.
//!
//! Node 0 is always the substation (reference bus). Every other bus has a
//! unique path to it, so the reduced incidence matrix of a connected
//! network is square and invertible and the weighted Laplacians
//! `M^T W M` are symmetric positive definite.

use std::collections::HashSet;

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// A distribution line between two buses, impedance `r + i·x` in p.u.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
}

impl Line {
    pub fn new(from: usize, to: usize, r: f64, x: f64) -> Self {
        Line { from, to, r, x }
    }

    pub fn impedance(&self) -> C64 {
        C64::new(self.r, self.x)
    }

    /// Endpoint on the other side of `node`.
    fn other(&self, node: usize) -> usize {
        if self.from == node {
            self.to
        } else {
            self.from
        }
    }
}

/// Why a line set does not form a valid radial network. `line` indexes the
/// offending entry of the input list when one can be blamed.
#[derive(Debug, Clone)]
pub(crate) struct GraphDefect {
    pub line: Option<usize>,
    pub msg: String,
}

impl GraphDefect {
    fn at(line: usize, msg: impl Into<String>) -> Self {
        GraphDefect {
            line: Some(line),
            msg: msg.into(),
        }
    }
}

/// Rooted forest of buses hanging off the reference node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    labels: Vec<String>,
    lines: Vec<Line>,
    /// `(parent bus, line index)` for every non-reference bus.
    parent: Vec<Option<(usize, usize)>>,
    /// Index of the subtree (child of the reference) each bus belongs to.
    tree: Vec<Option<usize>>,
    depth: Vec<usize>,
}

impl NetworkGraph {
    /// Builds a network over dense bus ids `0..bus_count`.
    pub fn new(bus_count: usize, lines: Vec<Line>) -> Result<Self> {
        let labels = (0..bus_count).map(|i| i.to_string()).collect();
        Self::build(labels, lines).map_err(|d| match d.line {
            Some(i) => Error::Structure(format!("line {i}: {}", d.msg)),
            None => Error::Structure(d.msg),
        })
    }

    /// Builds a network from lines whose endpoints carry arbitrary labels.
    ///
    /// The label `"0"` marks the reference bus. Other labels get dense ids
    /// in order of first appearance.
    pub fn from_labeled<S: AsRef<str>>(lines: &[(S, S, f64, f64)]) -> Result<Self> {
        Self::from_labeled_inner(lines).map_err(|d| match d.line {
            Some(i) => Error::Structure(format!("line {i}: {}", d.msg)),
            None => Error::Structure(d.msg),
        })
    }

    pub(crate) fn from_labeled_inner<S: AsRef<str>>(
        lines: &[(S, S, f64, f64)],
    ) -> std::result::Result<Self, GraphDefect> {
        let mut labels: Vec<String> = vec!["0".to_string()];
        let id_of = |label: &str, labels: &mut Vec<String>| -> usize {
            match labels.iter().position(|l| l == label) {
                Some(i) => i,
                None => {
                    labels.push(label.to_string());
                    labels.len() - 1
                }
            }
        };
        let mut dense = Vec::with_capacity(lines.len());
        let mut saw_reference = false;
        for (a, b, r, x) in lines {
            let (a, b) = (a.as_ref().trim(), b.as_ref().trim());
            saw_reference |= a == "0" || b == "0";
            let ia = id_of(a, &mut labels);
            let ib = id_of(b, &mut labels);
            dense.push(Line::new(ia, ib, *r, *x));
        }
        if !saw_reference && !lines.is_empty() {
            return Err(GraphDefect {
                line: None,
                msg: "no line touches the reference node 0".into(),
            });
        }
        Self::build(labels, dense)
    }

    pub(crate) fn build(
        labels: Vec<String>,
        lines: Vec<Line>,
    ) -> std::result::Result<Self, GraphDefect> {
        let n_bus = labels.len();
        if n_bus == 0 {
            return Err(GraphDefect {
                line: None,
                msg: "network has no reference node".into(),
            });
        }
        let mut seen = HashSet::new();
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n_bus];
        for (i, l) in lines.iter().enumerate() {
            if l.from >= n_bus || l.to >= n_bus {
                return Err(GraphDefect::at(
                    i,
                    format!("endpoint out of range 0..{n_bus}"),
                ));
            }
            if l.from == l.to {
                return Err(GraphDefect::at(
                    i,
                    format!("self-loop at node {}", labels[l.from]),
                ));
            }
            if !(l.r.is_finite() && l.r > 0.0 && l.x.is_finite() && l.x > 0.0) {
                return Err(GraphDefect::at(
                    i,
                    format!(
                        "resistance and reactance must be positive (r={}, x={})",
                        l.r, l.x
                    ),
                ));
            }
            let key = (l.from.min(l.to), l.from.max(l.to));
            if !seen.insert(key) {
                return Err(GraphDefect::at(
                    i,
                    format!("duplicate line {}-{}", labels[key.0], labels[key.1]),
                ));
            }
            adjacency[l.from].push(i);
            adjacency[l.to].push(i);
        }

        // Breadth-first from the reference; a line reaching an already
        // visited bus closes a cycle.
        let mut parent = vec![None; n_bus];
        let mut tree = vec![None; n_bus];
        let mut depth = vec![0; n_bus];
        let mut visited = vec![false; n_bus];
        let mut used = vec![false; lines.len()];
        let mut queue = std::collections::VecDeque::from([0usize]);
        visited[0] = true;
        let mut next_tree = 0;
        while let Some(u) = queue.pop_front() {
            for &li in &adjacency[u] {
                if used[li] {
                    continue;
                }
                used[li] = true;
                let w = lines[li].other(u);
                if visited[w] {
                    return Err(GraphDefect::at(
                        li,
                        format!(
                            "line {}-{} closes a cycle; the network must be radial",
                            labels[lines[li].from], labels[lines[li].to]
                        ),
                    ));
                }
                visited[w] = true;
                parent[w] = Some((u, li));
                depth[w] = depth[u] + 1;
                tree[w] = if u == 0 {
                    next_tree += 1;
                    Some(next_tree - 1)
                } else {
                    tree[u]
                };
                queue.push_back(w);
            }
        }
        if let Some(orphan) = (1..n_bus).find(|&i| !visited[i]) {
            return Err(GraphDefect {
                line: None,
                msg: format!(
                    "node {} is disconnected from the reference node",
                    labels[orphan]
                ),
            });
        }
        Ok(NetworkGraph {
            labels,
            lines,
            parent,
            tree,
            depth,
        })
    }

    /// Number of non-reference buses, `N`.
    pub fn node_count(&self) -> usize {
        self.labels.len() - 1
    }

    /// Number of buses including the reference, `N + 1`.
    pub fn bus_count(&self) -> usize {
        self.labels.len()
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    /// Original label of a dense bus id.
    pub fn label(&self, node: usize) -> Option<&str> {
        self.labels.get(node).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn contains(&self, node: usize) -> bool {
        node < self.bus_count()
    }

    fn check(&self, node: usize) -> Result<()> {
        if self.contains(node) {
            Ok(())
        } else {
            Err(Error::UnknownNode(node))
        }
    }

    /// Parent bus and the connecting line, `None` for the reference.
    pub fn parent(&self, node: usize) -> Option<(usize, &Line)> {
        self.parent
            .get(node)
            .copied()
            .flatten()
            .map(|(p, li)| (p, &self.lines[li]))
    }

    /// Subtree index of a bus; the reference belongs to none.
    pub fn tree_of(&self, node: usize) -> Option<usize> {
        self.tree.get(node).copied().flatten()
    }

    pub fn depth(&self, node: usize) -> Option<usize> {
        self.depth.get(node).copied()
    }

    /// Line indices from `node` down to the reference, nearest first.
    pub fn path_to_reference(&self, node: usize) -> Result<Vec<usize>> {
        self.check(node)?;
        let mut path = Vec::with_capacity(self.depth[node]);
        let mut cur = node;
        while let Some((p, li)) = self.parent[cur] {
            path.push(li);
            cur = p;
        }
        Ok(path)
    }

    /// Buses on the path from `node` to the reference, `node` first,
    /// reference excluded.
    pub fn path_nodes(&self, node: usize) -> Result<Vec<usize>> {
        self.check(node)?;
        let mut nodes = Vec::with_capacity(self.depth[node]);
        let mut cur = node;
        while let Some((p, _)) = self.parent[cur] {
            nodes.push(cur);
            cur = p;
        }
        Ok(nodes)
    }

    /// Sum of the chosen line parameter over the lines shared by the
    /// reference paths of `a` and `b`.
    pub fn common_path_weight(&self, a: usize, b: usize, kind: PathWeight) -> Result<f64> {
        let pa: HashSet<usize> = self.path_to_reference(a)?.into_iter().collect();
        let pb = self.path_to_reference(b)?;
        Ok(pb
            .into_iter()
            .filter(|li| pa.contains(li))
            .map(|li| kind.of(&self.lines[li]))
            .sum())
    }

    pub fn edge_weights(&self, kind: WeightKind) -> Vec<f64> {
        self.lines.iter().map(|l| kind.of(l)).collect()
    }
}

/// Free function form of [`NetworkGraph::path_to_reference`].
pub fn path_to_reference(graph: &NetworkGraph, node: usize) -> Result<Vec<usize>> {
    graph.path_to_reference(node)
}

/// Free function form of [`NetworkGraph::common_path_weight`].
pub fn common_path_weight(
    graph: &NetworkGraph,
    a: usize,
    b: usize,
    kind: PathWeight,
) -> Result<f64> {
    graph.common_path_weight(a, b, kind)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathWeight {
    Resistance,
    Reactance,
}

impl PathWeight {
    fn of(self, line: &Line) -> f64 {
        match self {
            PathWeight::Resistance => line.r,
            PathWeight::Reactance => line.x,
        }
    }
}

/// Per-line weight placed on the diagonal of `M^T W M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightKind {
    InverseResistance,
    InverseReactance,
    Conductance,
    Susceptance,
}

impl WeightKind {
    pub fn of(self, line: &Line) -> f64 {
        let mag2 = line.r * line.r + line.x * line.x;
        match self {
            WeightKind::InverseResistance => 1.0 / line.r,
            WeightKind::InverseReactance => 1.0 / line.x,
            WeightKind::Conductance => line.r / mag2,
            WeightKind::Susceptance => line.x / mag2,
        }
    }
}

/// Edge-to-node incidence matrix. Row `m` is `e_a^T - e_b^T` for line `m`
/// with `a` the smaller bus id.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    full: DMatrix<f64>,
    reduced: DMatrix<f64>,
}

impl IncidenceMatrix {
    /// `lines x (N+1)` matrix including the reference column.
    pub fn full(&self) -> &DMatrix<f64> {
        &self.full
    }

    /// `lines x N` matrix with the reference column removed.
    pub fn reduced(&self) -> &DMatrix<f64> {
        &self.reduced
    }

    pub fn line_count(&self) -> usize {
        self.full.nrows()
    }
}

pub fn build_incidence(graph: &NetworkGraph) -> IncidenceMatrix {
    let m = graph.lines.len();
    let n_bus = graph.bus_count();
    let mut full = DMatrix::zeros(m, n_bus);
    for (row, l) in graph.lines.iter().enumerate() {
        let (lo, hi) = (l.from.min(l.to), l.from.max(l.to));
        full[(row, lo)] = 1.0;
        full[(row, hi)] = -1.0;
    }
    let reduced = full.columns(1, n_bus - 1).into_owned();
    IncidenceMatrix { full, reduced }
}

/// `M^T diag(w) M`, both before and after eliminating the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedLaplacian {
    reduced: DMatrix<f64>,
    full: DMatrix<f64>,
    kind: WeightKind,
}

impl WeightedLaplacian {
    /// Reduced `N x N` matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.reduced
    }

    /// `(N+1) x (N+1)` matrix before reference elimination; rank `N`.
    pub fn full(&self) -> &DMatrix<f64> {
        &self.full
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn cholesky(&self) -> Result<Cholesky<f64, nalgebra::Dyn>> {
        Cholesky::new(self.reduced.clone())
            .ok_or_else(|| Error::Singular("reduced Laplacian is not positive definite".into()))
    }

    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        Ok(self.cholesky()?.inverse())
    }
}

pub fn weighted_laplacian(
    m: &IncidenceMatrix,
    weights: &[f64],
    kind: WeightKind,
) -> Result<WeightedLaplacian> {
    if weights.len() != m.line_count() {
        return Err(Error::Dimension {
            expected: m.line_count(),
            got: weights.len(),
        });
    }
    if let Some((i, w)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !(w.is_finite() && **w > 0.0))
    {
        return Err(Error::Domain(format!(
            "weight {i} must be positive, got {w}"
        )));
    }
    let scale = |mat: &DMatrix<f64>| {
        let mut scaled = mat.clone();
        for (mut row, w) in scaled.row_iter_mut().zip(weights) {
            row *= *w;
        }
        mat.transpose() * scaled
    };
    Ok(WeightedLaplacian {
        reduced: scale(&m.reduced),
        full: scale(&m.full),
        kind,
    })
}

/// Convenience: the reduced Laplacian of `graph` for a given weight kind.
pub fn laplacian_of(graph: &NetworkGraph, kind: WeightKind) -> Result<WeightedLaplacian> {
    weighted_laplacian(&build_incidence(graph), &graph.edge_weights(kind), kind)
}

/// Reduced nodal admittance matrix `Y = M^T diag(1/z) M`.
pub fn admittance_matrix(graph: &NetworkGraph) -> DMatrix<C64> {
    let n = graph.node_count();
    let mut y = DMatrix::<C64>::zeros(n, n);
    for l in &graph.lines {
        let ya = C64::new(1.0, 0.0) / l.impedance();
        let (a, b) = (l.from, l.to);
        if a > 0 {
            y[(a - 1, a - 1)] += ya;
        }
        if b > 0 {
            y[(b - 1, b - 1)] += ya;
        }
        if a > 0 && b > 0 {
            y[(a - 1, b - 1)] -= ya;
            y[(b - 1, a - 1)] -= ya;
        }
    }
    y
}

/// Chain `0-1-...-n` with the given per-line impedances.
pub fn chain(r: &[f64], x: &[f64]) -> Result<NetworkGraph> {
    if r.len() != x.len() {
        return Err(Error::Dimension {
            expected: r.len(),
            got: x.len(),
        });
    }
    let lines = r
        .iter()
        .zip(x)
        .enumerate()
        .map(|(i, (r, x))| Line::new(i, i + 1, *r, *x))
        .collect();
    NetworkGraph::new(r.len() + 1, lines)
}
