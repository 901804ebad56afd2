//! Pairwise factor graphs, the joint feature map, the Hamming task loss and
//! the potential tables every inference routine works on.
//!
//! Parameters are laid out as one flat vector: `num_labels` unary blocks of
//! width `unary_dim`, followed by one pairwise block of width `pairwise_dim`
//! per label pair. In symmetric mode the pairs `(a, b)` and `(b, a)` share a
//! block, so there are `L (L + 1) / 2` of them instead of `L * L`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the parameter vector shared by a whole dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub num_labels: usize,
    pub unary_dim: usize,
    pub pairwise_dim: usize,
    pub symmetric: bool,
}

impl FeatureLayout {
    pub fn new(num_labels: usize, unary_dim: usize, pairwise_dim: usize, symmetric: bool) -> Result<Self> {
        if num_labels == 0 {
            return Err(Error::InvalidConfig("num_labels must be positive".into()));
        }
        Ok(FeatureLayout {
            num_labels,
            unary_dim,
            pairwise_dim,
            symmetric,
        })
    }

    /// Number of distinct pairwise parameter blocks.
    pub fn pair_count(&self) -> usize {
        let l = self.num_labels;
        if self.symmetric {
            l * (l + 1) / 2
        } else {
            l * l
        }
    }

    pub fn unary_len(&self) -> usize {
        self.num_labels * self.unary_dim
    }

    pub fn dim(&self) -> usize {
        self.unary_len() + self.pair_count() * self.pairwise_dim
    }

    /// Index of the pairwise block used by the label pair `(a, b)`.
    pub fn pair_slot(&self, a: usize, b: usize) -> usize {
        let l = self.num_labels;
        if self.symmetric {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            lo * l - lo * lo.saturating_sub(1) / 2 + (hi - lo)
        } else {
            a * l + b
        }
    }

    pub fn unary_offset(&self, label: usize) -> usize {
        label * self.unary_dim
    }

    pub fn pairwise_offset(&self, a: usize, b: usize) -> usize {
        self.unary_len() + self.pair_slot(a, b) * self.pairwise_dim
    }

    pub fn check_instance(&self, instance: &FactorGraphInstance) -> Result<()> {
        if instance.num_labels != self.num_labels {
            return Err(Error::DimensionMismatch {
                what: "num_labels",
                expected: self.num_labels,
                found: instance.num_labels,
            });
        }
        if instance.unary_dim != self.unary_dim {
            return Err(Error::DimensionMismatch {
                what: "unary feature dimension",
                expected: self.unary_dim,
                found: instance.unary_dim,
            });
        }
        if instance.pairwise_dim != self.pairwise_dim {
            return Err(Error::DimensionMismatch {
                what: "pairwise feature dimension",
                expected: self.pairwise_dim,
                found: instance.pairwise_dim,
            });
        }
        Ok(())
    }
}

/// One training example: graph structure plus node and edge features.
///
/// Edges are stored canonically as `(min, max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraphInstance {
    node_count: usize,
    num_labels: usize,
    unary_dim: usize,
    pairwise_dim: usize,
    edges: Vec<(usize, usize)>,
    unary_features: Vec<f64>,
    edge_features: Vec<f64>,
}

impl FactorGraphInstance {
    pub fn new(
        num_labels: usize,
        unary_dim: usize,
        pairwise_dim: usize,
        unary_features: Vec<Vec<f64>>,
        edges: Vec<(usize, usize)>,
        edge_features: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let node_count = unary_features.len();
        if node_count == 0 {
            return Err(Error::InvalidGraph("instance has no nodes".into()));
        }
        if num_labels == 0 {
            return Err(Error::InvalidGraph("num_labels must be positive".into()));
        }
        if edge_features.len() != edges.len() {
            return Err(Error::DimensionMismatch {
                what: "edge feature count",
                expected: edges.len(),
                found: edge_features.len(),
            });
        }
        let mut canonical = Vec::with_capacity(edges.len());
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for &(i, j) in &edges {
            if i >= node_count || j >= node_count {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) references a node outside 0..{node_count}"
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop on node {i}")));
            }
            let e = (i.min(j), i.max(j));
            if !seen.insert(e) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({}, {})", e.0, e.1)));
            }
            canonical.push(e);
        }

        let mut flat_unary = Vec::with_capacity(node_count * unary_dim);
        for f in &unary_features {
            if f.len() != unary_dim {
                return Err(Error::DimensionMismatch {
                    what: "unary feature dimension",
                    expected: unary_dim,
                    found: f.len(),
                });
            }
            flat_unary.extend_from_slice(f);
        }
        let mut flat_edge = Vec::with_capacity(edges.len() * pairwise_dim);
        for f in &edge_features {
            if f.len() != pairwise_dim {
                return Err(Error::DimensionMismatch {
                    what: "pairwise feature dimension",
                    expected: pairwise_dim,
                    found: f.len(),
                });
            }
            flat_edge.extend_from_slice(f);
        }
        if flat_unary.iter().chain(&flat_edge).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("instance features"));
        }

        Ok(FactorGraphInstance {
            node_count,
            num_labels,
            unary_dim,
            pairwise_dim,
            edges: canonical,
            unary_features: flat_unary,
            edge_features: flat_edge,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn unary_dim(&self) -> usize {
        self.unary_dim
    }

    pub fn pairwise_dim(&self) -> usize {
        self.pairwise_dim
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn unary(&self, node: usize) -> &[f64] {
        &self.unary_features[node * self.unary_dim..(node + 1) * self.unary_dim]
    }

    pub fn edge_feature(&self, edge: usize) -> &[f64] {
        &self.edge_features[edge * self.pairwise_dim..(edge + 1) * self.pairwise_dim]
    }

    /// The same instance with every edge removed.
    pub fn without_edges(&self) -> FactorGraphInstance {
        FactorGraphInstance {
            edges: Vec::new(),
            edge_features: Vec::new(),
            ..self.clone()
        }
    }

    /// True when the graph has no cycles.
    pub fn is_forest(&self) -> bool {
        is_forest(self.node_count, &self.edges)
    }

    pub fn check_labeling(&self, labeling: &Labeling) -> Result<()> {
        if labeling.len() != self.node_count {
            return Err(Error::InvalidLabeling(format!(
                "length {} does not match node count {}",
                labeling.len(),
                self.node_count
            )));
        }
        if let Some((n, &l)) = labeling.iter().enumerate().find(|(_, &l)| l >= self.num_labels) {
            return Err(Error::InvalidLabeling(format!(
                "node {n} has label {l}, outside 0..{}",
                self.num_labels
            )));
        }
        Ok(())
    }
}

pub(crate) fn is_forest(node_count: usize, edges: &[(usize, usize)]) -> bool {
    let mut parent: Vec<usize> = (0..node_count).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(i, j) in edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri == rj {
            return false;
        }
        parent[ri] = rj;
    }
    true
}

/// A label per node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Labeling(pub Vec<usize>);

impl Labeling {
    pub fn new(labels: Vec<usize>) -> Self {
        Labeling(labels)
    }

    pub fn uniform(node_count: usize, label: usize) -> Self {
        Labeling(vec![label; node_count])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, usize> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

impl std::ops::Index<usize> for Labeling {
    type Output = usize;

    fn index(&self, node: usize) -> &usize {
        &self.0[node]
    }
}

impl From<Vec<usize>> for Labeling {
    fn from(v: Vec<usize>) -> Self {
        Labeling(v)
    }
}

/// Learned weights, unary blocks first, then pairwise blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    layout: FeatureLayout,
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn zeros(layout: FeatureLayout) -> Self {
        ParameterVector {
            layout,
            values: vec![0.0; layout.dim()],
        }
    }

    pub fn from_vec(layout: FeatureLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: layout.dim(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(ParameterVector { layout, values })
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn unary_block(&self, label: usize) -> &[f64] {
        let off = self.layout.unary_offset(label);
        &self.values[off..off + self.layout.unary_dim]
    }

    pub fn pairwise_block(&self, a: usize, b: usize) -> &[f64] {
        let off = self.layout.pairwise_offset(a, b);
        &self.values[off..off + self.layout.pairwise_dim]
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.values, other)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.values, &self.values)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-node weights of the Hamming loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LossSpec {
    weights: Vec<f64>,
}

impl LossSpec {
    pub fn unit(node_count: usize) -> Self {
        LossSpec {
            weights: vec![1.0; node_count],
        }
    }

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig("loss weights must be finite and nonnegative".into()));
        }
        Ok(LossSpec { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// ψ(x, y): each node's features land in its label's unary block, each edge's
/// features in the block of its label pair.
pub fn joint_feature(
    layout: &FeatureLayout,
    instance: &FactorGraphInstance,
    labeling: &Labeling,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; layout.dim()];
    accumulate_joint_feature(layout, instance, labeling, 1.0, &mut out)?;
    Ok(out)
}

/// Adds `scale * ψ(x, y)` into `out`.
pub fn accumulate_joint_feature(
    layout: &FeatureLayout,
    instance: &FactorGraphInstance,
    labeling: &Labeling,
    scale: f64,
    out: &mut [f64],
) -> Result<()> {
    layout.check_instance(instance)?;
    instance.check_labeling(labeling)?;
    if out.len() != layout.dim() {
        return Err(Error::DimensionMismatch {
            what: "joint feature buffer",
            expected: layout.dim(),
            found: out.len(),
        });
    }
    for node in 0..instance.node_count() {
        let off = layout.unary_offset(labeling[node]);
        for (o, x) in out[off..off + layout.unary_dim].iter_mut().zip(instance.unary(node)) {
            *o += scale * x;
        }
    }
    for (e, &(i, j)) in instance.edges().iter().enumerate() {
        let off = layout.pairwise_offset(labeling[i], labeling[j]);
        for (o, x) in out[off..off + layout.pairwise_dim]
            .iter_mut()
            .zip(instance.edge_feature(e))
        {
            *o += scale * x;
        }
    }
    Ok(())
}

/// ⟨θ, ψ(x, y)⟩.
pub fn score(instance: &FactorGraphInstance, labeling: &Labeling, params: &ParameterVector) -> Result<f64> {
    let psi = joint_feature(params.layout(), instance, labeling)?;
    Ok(params.dot(&psi))
}

/// Weighted Hamming loss.
pub fn loss(truth: &Labeling, candidate: &Labeling, spec: &LossSpec) -> Result<f64> {
    if truth.len() != candidate.len() || truth.len() != spec.weights.len() {
        return Err(Error::InvalidLabeling(format!(
            "loss over labelings of length {} and {} with {} weights",
            truth.len(),
            candidate.len(),
            spec.weights.len()
        )));
    }
    Ok(truth
        .iter()
        .zip(candidate.iter())
        .zip(&spec.weights)
        .filter(|((t, c), _)| t != c)
        .map(|(_, w)| w)
        .sum())
}

/// Score tables of a pairwise model: what every MAP routine maximizes.
///
/// `pair` is row-major per edge: entry `a * L + b` is the potential of the
/// first endpoint taking `a` and the second taking `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    num_labels: usize,
    node: Vec<f64>,
    edges: Vec<(usize, usize)>,
    pair: Vec<f64>,
    constant: f64,
    /// Per node: (edge index, neighbour, node is the edge's first endpoint).
    adjacency: Vec<Vec<(usize, usize, bool)>>,
}

impl Potentials {
    pub fn new(
        num_labels: usize,
        node: Vec<f64>,
        edges: Vec<(usize, usize)>,
        pair: Vec<f64>,
        constant: f64,
    ) -> Result<Self> {
        if num_labels == 0 || node.is_empty() || !node.len().is_multiple_of(num_labels) {
            return Err(Error::InvalidGraph("node table must be a non-empty multiple of num_labels".into()));
        }
        let node_count = node.len() / num_labels;
        if pair.len() != edges.len() * num_labels * num_labels {
            return Err(Error::DimensionMismatch {
                what: "pair table",
                expected: edges.len() * num_labels * num_labels,
                found: pair.len(),
            });
        }
        if node.iter().chain(&pair).any(|v| !v.is_finite()) || !constant.is_finite() {
            return Err(Error::NonFinite("potential tables"));
        }
        let mut adjacency = vec![Vec::new(); node_count];
        for (e, &(i, j)) in edges.iter().enumerate() {
            if i >= node_count || j >= node_count || i == j {
                return Err(Error::InvalidGraph(format!("bad edge ({i}, {j})")));
            }
            adjacency[i].push((e, j, true));
            adjacency[j].push((e, i, false));
        }
        Ok(Potentials {
            num_labels,
            node,
            edges,
            pair,
            constant,
            adjacency,
        })
    }

    /// Evaluates θ on every factor of `instance`.
    pub fn from_model(instance: &FactorGraphInstance, params: &ParameterVector) -> Result<Self> {
        let layout = params.layout();
        layout.check_instance(instance)?;
        let l = layout.num_labels;
        let mut node = Vec::with_capacity(instance.node_count() * l);
        for n in 0..instance.node_count() {
            let x = instance.unary(n);
            node.extend((0..l).map(|a| dot(params.unary_block(a), x)));
        }
        let mut pair = Vec::with_capacity(instance.edges().len() * l * l);
        for e in 0..instance.edges().len() {
            let x = instance.edge_feature(e);
            for a in 0..l {
                for b in 0..l {
                    pair.push(dot(params.pairwise_block(a, b), x));
                }
            }
        }
        Potentials::new(l, node, instance.edges().to_vec(), pair, 0.0)
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn node_count(&self) -> usize {
        self.node.len() / self.num_labels
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn node_table(&self, node: usize) -> &[f64] {
        &self.node[node * self.num_labels..(node + 1) * self.num_labels]
    }

    pub fn pair_table(&self, edge: usize) -> &[f64] {
        let ll = self.num_labels * self.num_labels;
        &self.pair[edge * ll..(edge + 1) * ll]
    }

    pub fn unary(&self, node: usize, label: usize) -> f64 {
        self.node[node * self.num_labels + label]
    }

    pub fn pairwise(&self, edge: usize, a: usize, b: usize) -> f64 {
        let l = self.num_labels;
        self.pair[edge * l * l + a * l + b]
    }

    /// Adds `offsets[n * L + l]` to the unary potential of node `n`, label `l`.
    pub fn with_unary_offsets(mut self, offsets: &[f64]) -> Result<Self> {
        if offsets.len() != self.node.len() {
            return Err(Error::DimensionMismatch {
                what: "unary offsets",
                expected: self.node.len(),
                found: offsets.len(),
            });
        }
        for (p, o) in self.node.iter_mut().zip(offsets) {
            *p += o;
        }
        Ok(self)
    }

    /// Direct sum over factors.
    pub fn score(&self, labeling: &[usize]) -> f64 {
        let l = self.num_labels;
        let unary: f64 = labeling
            .iter()
            .enumerate()
            .map(|(n, &y)| self.node[n * l + y])
            .sum();
        let pairwise: f64 = self
            .edges
            .iter()
            .enumerate()
            .map(|(e, &(i, j))| self.pair[e * l * l + labeling[i] * l + labeling[j]])
            .sum();
        self.constant + unary + pairwise
    }

    /// Score contribution of node `n` taking `label` given its neighbours'
    /// labels in `labeling`.
    pub fn local_score(&self, labeling: &[usize], n: usize, label: usize) -> f64 {
        let mut s = self.unary(n, label);
        for &(e, other, first) in &self.adjacency[n] {
            s += if first {
                self.pairwise(e, label, labeling[other])
            } else {
                self.pairwise(e, labeling[other], label)
            };
        }
        s
    }

    /// The problem left after clamping the nodes with `Some(label)`.
    ///
    /// Returns the reduced tables over the free nodes (in increasing order)
    /// and the mapping from reduced index to original node. Clamped unaries
    /// and fully clamped edges move into the constant; edges with one
    /// clamped endpoint fold into the free endpoint's unary table.
    pub fn condition(&self, fixed: &[Option<usize>]) -> (Potentials, Vec<usize>) {
        let l = self.num_labels;
        let mut index = vec![usize::MAX; fixed.len()];
        let mut free = Vec::new();
        for (n, f) in fixed.iter().enumerate() {
            if f.is_none() {
                index[n] = free.len();
                free.push(n);
            }
        }
        let mut constant = self.constant;
        let mut node = Vec::with_capacity(free.len() * l);
        for &n in &free {
            node.extend_from_slice(self.node_table(n));
        }
        for (n, f) in fixed.iter().enumerate() {
            if let Some(y) = f {
                constant += self.unary(n, *y);
            }
        }
        let mut edges = Vec::new();
        let mut pair = Vec::new();
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            match (fixed[i], fixed[j]) {
                (Some(a), Some(b)) => constant += self.pairwise(e, a, b),
                (Some(a), None) => {
                    let r = index[j];
                    for b in 0..l {
                        node[r * l + b] += self.pairwise(e, a, b);
                    }
                }
                (None, Some(b)) => {
                    let r = index[i];
                    for a in 0..l {
                        node[r * l + a] += self.pairwise(e, a, b);
                    }
                }
                (None, None) => {
                    edges.push((index[i], index[j]));
                    pair.extend_from_slice(self.pair_table(e));
                }
            }
        }
        if free.is_empty() {
            // Keep one dummy node so the tables stay well formed; callers
            // check `free` before using it.
            node = vec![0.0; l];
        }
        let reduced = Potentials::new(l, node, edges, pair, constant)
            .expect("conditioning preserves table invariants");
        (reduced, free)
    }
}

/// Loss-augmented view of an instance: the Hamming loss enters as a per-node,
/// per-label offset on the unary potentials. Features stay untouched.
#[derive(Debug, Clone)]
pub struct LossAugmented<'a> {
    instance: &'a FactorGraphInstance,
    truth: &'a Labeling,
    spec: &'a LossSpec,
    offsets: Vec<f64>,
}

pub fn loss_augment<'a>(
    instance: &'a FactorGraphInstance,
    truth: &'a Labeling,
    spec: &'a LossSpec,
) -> Result<LossAugmented<'a>> {
    instance.check_labeling(truth)?;
    if spec.weights.len() != instance.node_count() {
        return Err(Error::DimensionMismatch {
            what: "loss weights",
            expected: instance.node_count(),
            found: spec.weights.len(),
        });
    }
    let l = instance.num_labels();
    let mut offsets = vec![0.0; instance.node_count() * l];
    for (n, (&t, &w)) in truth.iter().zip(&spec.weights).enumerate() {
        for label in (0..l).filter(|&label| label != t) {
            offsets[n * l + label] = w;
        }
    }
    Ok(LossAugmented {
        instance,
        truth,
        spec,
        offsets,
    })
}

impl<'a> LossAugmented<'a> {
    pub fn instance(&self) -> &'a FactorGraphInstance {
        self.instance
    }

    pub fn truth(&self) -> &'a Labeling {
        self.truth
    }

    pub fn spec(&self) -> &'a LossSpec {
        self.spec
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn potentials(&self, params: &ParameterVector) -> Result<Potentials> {
        Potentials::from_model(self.instance, params)?.with_unary_offsets(&self.offsets)
    }

    /// score(ŷ) + Δ(truth, ŷ).
    pub fn augmented_score(&self, labeling: &Labeling, params: &ParameterVector) -> Result<f64> {
        Ok(self.potentials(params)?.score(labeling.as_slice()))
    }
}
