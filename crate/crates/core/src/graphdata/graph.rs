use std::collections::BTreeSet;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::gradcore::{SparseMatrix, Tensor};
use crate::scalar::Scalar;

/// Ground truth of one node: a single category or a binary indicator per
/// category (multi-label collections).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum NodeLabel {
    Class(usize),
    Multi(Vec<bool>),
}

impl NodeLabel {
    /// Writes the label as a 0/1 row of length `num_categories`.
    pub fn encode<T: Scalar>(&self, num_categories: usize, row: &mut [T]) {
        debug_assert_eq!(row.len(), num_categories);
        match self {
            NodeLabel::Class(c) => {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = if j == *c { T::one() } else { T::zero() };
                }
            }
            NodeLabel::Multi(bits) => {
                for (v, &b) in row.iter_mut().zip(bits) {
                    *v = if b { T::one() } else { T::zero() };
                }
            }
        }
    }

    pub fn class(&self) -> Option<usize> {
        match self {
            NodeLabel::Class(c) => Some(*c),
            NodeLabel::Multi(_) => None,
        }
    }
}

/// Stacks labels into an `n × num_categories` 0/1 target matrix.
pub fn label_matrix<T: Scalar>(labels: &[&NodeLabel], num_categories: usize) -> Tensor<T> {
    let mut t = Tensor::zeros(&[labels.len(), num_categories]);
    for (i, l) in labels.iter().enumerate() {
        l.encode(num_categories, &mut t.data_mut()[i * num_categories..(i + 1) * num_categories]);
    }
    t
}

/// A sparse operator together with its transpose.
#[derive(Clone, Debug)]
pub struct Propagation<T> {
    pub matrix: Arc<SparseMatrix<T>>,
    pub transpose: Arc<SparseMatrix<T>>,
}

impl<T: Scalar> Propagation<T> {
    fn new(m: SparseMatrix<T>) -> Self {
        let t = m.transpose();
        Propagation { matrix: Arc::new(m), transpose: Arc::new(t) }
    }
}

/// An attributed graph with partially known node labels.
#[derive(Clone, Debug)]
pub struct Graph<T> {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    features: Tensor<T>,
    labels: Vec<Option<NodeLabel>>,
    adjacency: OnceLock<Propagation<T>>,
    mean_adjacency: OnceLock<Propagation<T>>,
}

impl<T: Scalar> Graph<T> {
    /// Builds a graph from undirected edges. Each pair is stored once as
    /// `(min, max)`; duplicates and self-loops are dropped.
    pub fn new(
        features: Tensor<T>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Vec<Option<NodeLabel>>,
    ) -> Result<Self> {
        if features.shape().len() != 2 {
            return Err(Error::Validation(format!(
                "features must be a matrix, got {:?}",
                features.shape()
            )));
        }
        let node_count = features.rows();
        if labels.len() != node_count {
            return Err(Error::Validation(format!(
                "{} labels for {node_count} nodes",
                labels.len()
            )));
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= node_count || v >= node_count {
                return Err(Error::Validation(format!(
                    "edge ({u}, {v}) outside {node_count} nodes"
                )));
            }
            if u != v {
                set.insert((u.min(v), u.max(v)));
            }
        }
        Ok(Graph {
            node_count,
            edges: set.into_iter().collect(),
            features,
            labels,
            adjacency: OnceLock::new(),
            mean_adjacency: OnceLock::new(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Tensor<T> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[Option<NodeLabel>] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> Option<&NodeLabel> {
        self.labels[v].as_ref()
    }

    pub fn labeled_mask(&self) -> Vec<bool> {
        self.labels.iter().map(Option::is_some).collect()
    }

    /// Labeled node ids in ascending order.
    pub fn labeled_nodes(&self) -> Vec<usize> {
        (0..self.node_count).filter(|&v| self.labels[v].is_some()).collect()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.node_count];
        for &(u, v) in &self.edges {
            d[u] += 1;
            d[v] += 1;
        }
        d
    }

    /// `D̃^{-1/2}(A + I)D̃^{-1/2}`, computed once and cached.
    pub fn normalized_adjacency(&self) -> &Propagation<T> {
        self.adjacency.get_or_init(|| Propagation::new(normalized_adjacency(self)))
    }

    /// Row-normalized adjacency without self-loops: row `v` averages the
    /// neighbours of `v`; isolated nodes get an empty row.
    pub fn mean_adjacency(&self) -> &Propagation<T> {
        self.mean_adjacency.get_or_init(|| {
            let deg = self.degrees();
            let mut entries = Vec::with_capacity(2 * self.edges.len());
            for &(u, v) in &self.edges {
                entries.push((u, v, T::one() / T::of(deg[u] as f64)));
                entries.push((v, u, T::one() / T::of(deg[v] as f64)));
            }
            Propagation::new(
                SparseMatrix::new(self.node_count, self.node_count, entries)
                    .expect("edges are validated and deduplicated"),
            )
        })
    }

    /// Same graph with replaced features (adjacency caches are kept).
    pub fn with_features(&self, features: Tensor<T>) -> Result<Self> {
        if features.shape() != [self.node_count, features.cols()] {
            return Err(Error::Validation("feature rows must match node count".into()));
        }
        let mut g = self.clone();
        g.features = features;
        Ok(g)
    }

    pub fn cast<S: Scalar>(&self) -> Graph<S> {
        Graph::new(self.features.cast(), self.edges.iter().copied(), self.labels.clone())
            .expect("same structure")
    }

    /// Relabels nodes: node `v` of `self` becomes node `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.node_count;
        if perm.len() != n {
            return Err(Error::Validation("permutation length differs".into()));
        }
        let d = self.feature_dim();
        let mut feats = vec![T::zero(); n * d];
        let mut labels = vec![None; n];
        for v in 0..n {
            feats[perm[v] * d..(perm[v] + 1) * d].copy_from_slice(self.features.row(v));
            labels[perm[v]] = self.labels[v].clone();
        }
        Graph::new(
            Tensor::matrix(n, d, feats)?,
            self.edges.iter().map(|&(u, v)| (perm[u], perm[v])),
            labels,
        )
    }
}

/// `D̃^{-1/2}(A + I)D̃^{-1/2}` with `D̃` the degree matrix after adding
/// self-loops. Entry `(i, j)` is `1/sqrt(d̃_i·d̃_j)`, symmetric by construction.
pub fn normalized_adjacency<T: Scalar>(g: &Graph<T>) -> SparseMatrix<T> {
    let deg: Vec<T> = g.degrees().into_iter().map(|d| T::of((d + 1) as f64)).collect();
    let w = |i: usize, j: usize| T::one() / (deg[i] * deg[j]).sqrt();
    let mut entries = Vec::with_capacity(g.node_count + 2 * g.edges.len());
    for i in 0..g.node_count {
        entries.push((i, i, w(i, i)));
    }
    for &(u, v) in &g.edges {
        entries.push((u, v, w(u, v)));
        entries.push((v, u, w(v, u)));
    }
    SparseMatrix::new(g.node_count, g.node_count, entries).expect("edges are validated")
}

/// Divides each nonzero row by its L1 norm.
pub fn row_normalize_features<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    let c = x.cols();
    for r in 0..x.rows() {
        let row = &mut out.data_mut()[r * c..(r + 1) * c];
        let l1 = row.iter().fold(T::zero(), |a, v| a + v.abs());
        if l1 > T::zero() {
            row.iter_mut().for_each(|v| *v = *v / l1);
        }
    }
    out
}

/// Graphs sharing one feature space and one category set.
#[derive(Clone, Debug)]
pub struct GraphCollection<T> {
    pub name: String,
    pub graphs: Vec<Graph<T>>,
    pub feature_dim: usize,
    pub num_categories: usize,
    pub multi_label: bool,
}

impl<T: Scalar> GraphCollection<T> {
    pub fn new(
        name: impl Into<String>,
        graphs: Vec<Graph<T>>,
        feature_dim: usize,
        num_categories: usize,
        multi_label: bool,
    ) -> Result<Self> {
        let c = GraphCollection { name: name.into(), graphs, feature_dim, num_categories, multi_label };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, g) in self.graphs.iter().enumerate() {
            if g.feature_dim() != self.feature_dim {
                return Err(Error::Validation(format!(
                    "graph {i} has {} feature columns, collection has {}",
                    g.feature_dim(),
                    self.feature_dim
                )));
            }
            for l in g.labels().iter().flatten() {
                let ok = match l {
                    NodeLabel::Class(c) => !self.multi_label && *c < self.num_categories,
                    NodeLabel::Multi(b) => self.multi_label && b.len() == self.num_categories,
                };
                if !ok {
                    return Err(Error::Validation(format!(
                        "graph {i} has label {l:?} incompatible with {} {} categories",
                        self.num_categories,
                        if self.multi_label { "multi-label" } else { "single-label" }
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// Same metadata, different graphs.
    pub fn with_graphs(&self, graphs: Vec<Graph<T>>) -> Self {
        GraphCollection { graphs, ..self.shallow() }
    }

    fn shallow(&self) -> Self {
        GraphCollection {
            name: self.name.clone(),
            graphs: Vec::new(),
            feature_dim: self.feature_dim,
            num_categories: self.num_categories,
            multi_label: self.multi_label,
        }
    }

    /// Applies [`row_normalize_features`] to every graph.
    pub fn row_normalized(&self) -> Self {
        self.with_graphs(
            self.graphs
                .iter()
                .map(|g| {
                    g.with_features(row_normalize_features(g.features()))
                        .expect("same shape")
                })
                .collect(),
        )
    }
}
