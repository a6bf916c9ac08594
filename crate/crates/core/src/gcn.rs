//! Graph convolution over class nodes and the feature-selecting classifier
//! derived from its last layer.
//!
//! Each layer computes `H' = act(Â H W)`, where `Â` is the normalized class
//! adjacency. Hidden layers use a leaky rectifier; the last layer is linear so
//! that its `C x D` output can serve directly as per-class feature selectors.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{order_free_sum, softmax_in_place, Matrix};
use crate::metrics::GroupSpec;
use crate::types::ProbMap;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// `D^-1 A`: every row sums to one. Suitable for directed graphs.
    #[default]
    RowStochastic,
    /// `D^-1/2 A D^-1/2` with `D` the row sums; intended for undirected graphs.
    Symmetric,
}

/// Weighted class graph. `adjacency[i * n + j]` is the weight of edge `i -> j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    n: usize,
    adjacency: Vec<f64>,
    directed: bool,
    normalization: Normalization,
}

impl GraphSpec {
    /// Zero diagonal entries are replaced by unit self-loops.
    pub fn new(n: usize, mut adjacency: Vec<f64>, directed: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("graph needs at least one node".into()));
        }
        if adjacency.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "{n}-node adjacency needs {} entries, got {}",
                n * n,
                adjacency.len()
            )));
        }
        if let Some(v) = adjacency.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("adjacency weight {v} is negative or not finite")));
        }
        for i in 0..n {
            if adjacency[i * n + i] == 0.0 {
                adjacency[i * n + i] = 1.0;
            }
        }
        Ok(Self { n, adjacency, directed, normalization: Normalization::RowStochastic })
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn adjacency(&self) -> &[f64] {
        &self.adjacency
    }

    pub fn edge(&self, from: usize, to: usize) -> f64 {
        self.adjacency[from * self.n + to]
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Relabels nodes so that old node `i` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n)?;
        let n = self.n;
        let mut adjacency = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                adjacency[perm[i] * n + perm[j]] = self.adjacency[i * n + j];
            }
        }
        Ok(Self { n, adjacency, directed: self.directed, normalization: self.normalization })
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::DimensionMismatch(format!("permutation of length {} for {n} nodes", perm.len())));
    }
    for &p in perm {
        if p >= n || core::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidConfig("not a permutation".into()));
        }
    }
    Ok(())
}

/// Directed class graph from importance groups: edge `i -> j` exists when
/// `i`'s group is at least as important as `j`'s. The most important group
/// reaches every node and the least important only its own members.
pub fn build_graph(groups: &GroupSpec) -> Result<GraphSpec> {
    let n = groups.num_classes();
    if n == 0 {
        return Err(Error::InvalidConfig("graph needs at least one node".into()));
    }
    let rank = groups.assignment()?;
    let mut adjacency = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if rank[i] >= rank[j] {
                adjacency[i * n + j] = 1.0;
            }
        }
    }
    GraphSpec::new(n, adjacency, true)
}

/// Normalized adjacency `Â` according to `g`'s normalization.
pub fn normalize_adjacency(g: &GraphSpec) -> Result<Matrix> {
    let n = g.n;
    let degree: Vec<f64> = (0..n).map(|i| order_free_sum(&mut g.adjacency[i * n..(i + 1) * n].to_vec())).collect();
    if let Some(i) = degree.iter().position(|&d| d <= 0.0) {
        return Err(Error::IsolatedNode(i));
    }
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let a = g.adjacency[i * n + j];
            let v = match g.normalization {
                Normalization::RowStochastic => a / degree[i],
                Normalization::Symmetric => a / libm::sqrt(degree[i] * degree[j]),
            };
            out.set(i, j, v);
        }
    }
    Ok(out)
}

/// Layer transforms `W^0 .. W^{L-1}` with chained dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnWeights {
    layers: Vec<Matrix>,
    leaky_slope: f64,
}

impl GcnWeights {
    pub fn new(layers: Vec<Matrix>, leaky_slope: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::DimensionMismatch("at least one GCN layer is required".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].cols() != pair[1].rows() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {l} outputs {} features but layer {} expects {}",
                    pair[0].cols(),
                    l + 1,
                    pair[1].rows()
                )));
            }
        }
        Ok(Self { layers, leaky_slope })
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn leaky_slope(&self) -> f64 {
        self.leaky_slope
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].cols()
    }
}

/// Runs every layer; hidden layers are leaky-rectified, the last is linear.
pub fn gcn_forward(h: &Matrix, g: &GraphSpec, w: &GcnWeights) -> Result<Matrix> {
    if h.rows() != g.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} node feature rows for a {}-node graph",
            h.rows(),
            g.num_nodes()
        )));
    }
    if h.cols() != w.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "node features have {} columns, first layer expects {}",
            h.cols(),
            w.input_dim()
        )));
    }
    let a_hat = normalize_adjacency(g)?;
    let slope = w.leaky_slope;
    let last = w.layers.len() - 1;
    let mut x = h.clone();
    for (l, weight) in w.layers.iter().enumerate() {
        x = propagate(&a_hat, &x).matmul(weight)?;
        if l < last {
            x.map_in_place(|v| if v < 0.0 { slope * v } else { v });
        }
    }
    Ok(x)
}

/// `Â X`, summing each node's incoming terms in sorted order so that the
/// result is bitwise independent of how nodes are numbered.
fn propagate(a_hat: &Matrix, x: &Matrix) -> Matrix {
    let n = a_hat.rows();
    let mut out = Matrix::zeros(n, x.cols());
    let mut terms = vec![0.0; n];
    for i in 0..n {
        for c in 0..x.cols() {
            for (j, t) in terms.iter_mut().enumerate() {
                *t = a_hat.get(i, j) * x.get(j, c);
            }
            out.set(i, c, order_free_sum(&mut terms));
        }
    }
    out
}

/// Initial node features: one one-hot row per class.
pub fn embed_one_hot(num_classes: usize) -> Matrix {
    Matrix::identity(num_classes)
}

/// `C x D` matrix whose row `k` scores class `k` from a `D`-dim pixel feature.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierMatrix(Matrix);

impl ClassifierMatrix {
    pub fn new(rows: Matrix) -> Self {
        Self(rows)
    }

    pub fn num_classes(&self) -> usize {
        self.0.rows()
    }

    pub fn depth(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

impl From<Matrix> for ClassifierMatrix {
    fn from(m: Matrix) -> Self {
        Self(m)
    }
}

/// Dense `height x width x depth` feature map, pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    depth: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, depth: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * depth || data.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width}x{depth} feature map needs {} values, got {}",
                height * width * depth,
                data.len()
            )));
        }
        Ok(Self { height, width, depth, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Per-pixel class scores `cls · feature` followed by a softmax.
pub fn classify_features(features: &FeatureMap, cls: &ClassifierMatrix) -> Result<ProbMap> {
    let m = cls.matrix();
    if m.cols() != features.depth {
        return Err(Error::DimensionMismatch(format!(
            "classifier expects {}-dim features, map has depth {}",
            m.cols(),
            features.depth
        )));
    }
    let c = m.rows();
    let mut out = Vec::with_capacity(features.height * features.width * c);
    let mut scores = vec![0.0; c];
    for f in features.data.chunks_exact(features.depth) {
        for (k, s) in scores.iter_mut().enumerate() {
            *s = m.row(k).iter().zip(f).map(|(a, b)| a * b).sum();
        }
        softmax_in_place(&mut scores);
        out.extend_from_slice(&scores);
    }
    ProbMap::new(features.height, features.width, c, out)
}

/// One-hot embedding → GCN → classifier → probabilities.
pub fn gcn_classify(features: &FeatureMap, g: &GraphSpec, w: &GcnWeights) -> Result<ProbMap> {
    let selector = gcn_forward(&embed_one_hot(g.num_nodes()), g, w)?;
    classify_features(features, &ClassifierMatrix::new(selector))
}
