//! Path integral clustering: k-NN digraph construction, closed-form path
//! integrals, incremental-path-integral affinity, and the graph-structural
//! merge loop.
//!
//! Cluster affinity is the incremental path integral gained by merging: the
//! increase in each cluster's conditional path integral when the other
//! cluster's vertices become available as intermediate path nodes. Path
//! integrals have the closed form `(1/|C|^2) * 1' (I - sigma*P_C)^{-1} 1`,
//! evaluated with a linear solve, never an explicit inverse.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::similarity::SimilarityMatrix;

/// Sparse k-nearest-neighbor digraph: sigmoid-weighted adjacency plus the
/// row-stochastic transition matrix.
#[derive(Debug, Clone)]
pub struct Digraph {
    /// Per-row `(neighbor, weight)` lists sorted by neighbor index.
    adjacency: Vec<Vec<(usize, f64)>>,
    /// Row-normalized adjacency (empty rows stay empty).
    transition: Vec<Vec<(usize, f64)>>,
    k: usize,
    sigma: f64,
}

impl Digraph {
    /// Build the digraph: `W_ij = sigmoid(s(i,j))` when `j` is among the
    /// `k` nearest neighbors of `i` (self excluded, `k` clamped to `n-1`,
    /// ties at the k-th neighbor broken toward the lower index).
    pub fn build(s: &SimilarityMatrix, k: usize, sigma: f64) -> Result<Digraph> {
        let n = s.n();
        if n < 2 {
            return Err(Error::Input("digraph needs at least 2 vertices".into()));
        }
        if k < 1 {
            return Err(Error::Config("neighbor count must be at least 1".into()));
        }
        if !(0.0 < sigma && sigma < 1.0) {
            return Err(Error::Config(format!("sigma must lie in (0,1), got {sigma}")));
        }
        let k = k.min(n - 1);
        let mut adjacency = Vec::with_capacity(n);
        let mut transition = Vec::with_capacity(n);
        for i in 0..n {
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| s.get(i, b).total_cmp(&s.get(i, a)).then(a.cmp(&b)));
            let mut row: Vec<(usize, f64)> = order[..k]
                .iter()
                .map(|&j| (j, sigmoid(s.get(i, j))))
                .collect();
            row.sort_unstable_by_key(|&(j, _)| j);
            let sum: f64 = row.iter().map(|&(_, w)| w).sum();
            let trans: Vec<(usize, f64)> = if sum > 0.0 {
                row.iter().map(|&(j, w)| (j, w / sum)).collect()
            } else {
                Vec::new()
            };
            adjacency.push(row);
            transition.push(trans);
        }
        Ok(Digraph {
            adjacency,
            transition,
            k,
            sigma,
        })
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn adjacency_row(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    /// Adjacency weight of the directed edge `i -> j` (0 when absent).
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match self.adjacency[i].binary_search_by_key(&j, |&(n, _)| n) {
            Ok(pos) => self.adjacency[i][pos].1,
            Err(_) => 0.0,
        }
    }

    /// The heaviest outgoing edge of `i` (ties toward the lower index);
    /// `None` for isolated vertices.
    pub fn first_nn(&self, i: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for &(j, w) in &self.adjacency[i] {
            if w > 0.0 && best.is_none_or(|(_, bw)| w > bw) {
                best = Some((j, w));
            }
        }
        best.map(|(j, _)| j)
    }

    /// Dense `I - sigma * P` restricted to `members` (ascending global
    /// indices). Checks strict diagonal dominance.
    fn system_matrix(&self, members: &[usize]) -> Result<DMatrix<f64>> {
        let m = members.len();
        let mut mat = DMatrix::identity(m, m);
        for (li, &i) in members.iter().enumerate() {
            let mut off_sum = 0.0;
            for &(j, p) in &self.transition[i] {
                if let Ok(lj) = members.binary_search(&j) {
                    let v = self.sigma * p;
                    if lj == li {
                        mat[(li, li)] -= v;
                    } else {
                        mat[(li, lj)] -= v;
                        off_sum += v;
                    }
                }
            }
            if off_sum >= mat[(li, li)] {
                return Err(Error::Numerical(
                    "path-integral system lost diagonal dominance".into(),
                ));
            }
        }
        Ok(mat)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Group every vertex with its first nearest neighbor and transitively merge
/// groups that share elements; isolated vertices stay singletons. Returns
/// member lists sorted ascending, ordered by smallest member.
pub fn init_clusters(graph: &Digraph) -> Vec<Vec<usize>> {
    let n = graph.n();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    for i in 0..n {
        if let Some(j) = graph.first_nn(i) {
            let ra = find(&mut parent, i);
            let rb = find(&mut parent, j);
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Closed-form normalized path integral of a cluster:
/// `(1/|C|^2) * 1' (I - sigma*P_C)^{-1} 1`.
pub fn path_integral(graph: &Digraph, members: &[usize]) -> Result<f64> {
    let mat = graph.system_matrix(members)?;
    let ones = DVector::from_element(members.len(), 1.0);
    let x = mat
        .lu()
        .solve(&ones)
        .ok_or_else(|| Error::Numerical("singular path-integral system".into()))?;
    Ok(x.sum() / (members.len() as f64).powi(2))
}

/// Closed-form conditional path integral: paths live in `union` but start
/// and end in `selector`.
pub fn conditional_path_integral(
    graph: &Digraph,
    union: &[usize],
    selector: &[usize],
) -> Result<f64> {
    let mat = graph.system_matrix(union)?;
    let ind = indicator(union, selector)?;
    let x = mat
        .lu()
        .solve(&ind)
        .ok_or_else(|| Error::Numerical("singular path-integral system".into()))?;
    Ok(ind.dot(&x) / (selector.len() as f64).powi(2))
}

fn indicator(union: &[usize], selector: &[usize]) -> Result<DVector<f64>> {
    let mut ind = DVector::zeros(union.len());
    for &s in selector {
        let pos = union
            .binary_search(&s)
            .map_err(|_| Error::Input(format!("selector vertex {s} outside the union")))?;
        ind[pos] = 1.0;
    }
    Ok(ind)
}

/// Truncated-series path integral (the test oracle for the closed forms):
/// `(1/|sel|^2) * sum_{k=0..L} sigma^k * sel' P_sub^k sel` with the k = 0
/// term carrying the Kronecker delta unscaled.
pub fn truncated_path_integral(
    graph: &Digraph,
    members: &[usize],
    max_len: usize,
    selector: Option<&[usize]>,
) -> f64 {
    let m = members.len();
    let mut p_sub = DMatrix::zeros(m, m);
    for (li, &i) in members.iter().enumerate() {
        for &(j, p) in &graph.transition[i] {
            if let Ok(lj) = members.binary_search(&j) {
                p_sub[(li, lj)] = p;
            }
        }
    }
    let sel = match selector {
        Some(s) => indicator(members, s).expect("selector within members"),
        None => DVector::from_element(m, 1.0),
    };
    let count = sel.sum();
    let mut v = sel.clone();
    let mut total = sel.dot(&v);
    let mut scale = 1.0;
    for _ in 1..=max_len {
        v = &p_sub * v;
        scale *= graph.sigma();
        total += scale * sel.dot(&v);
    }
    total / (count * count)
}

#[derive(Debug, Clone)]
struct ClusterData {
    members: Vec<usize>,
    integral: f64,
}

#[derive(Debug, Clone, Copy)]
struct PairEntry {
    affinity: f64,
    merged_integral: f64,
}

/// Incremental state of the PIC merge loop: live clusters keyed by their
/// smallest member, cached per-cluster path integrals, and affinities for
/// every live pair. Merges recompute only the pairs touching the merged
/// cluster.
#[derive(Debug, Clone)]
pub struct PicState {
    graph: Digraph,
    clusters: BTreeMap<usize, ClusterData>,
    pairs: BTreeMap<(usize, usize), PairEntry>,
    merges: usize,
}

impl PicState {
    /// Build the digraph and initialize clusters from first-nearest-neighbor
    /// grouping.
    pub fn new(s: &SimilarityMatrix, k: usize, sigma: f64) -> Result<PicState> {
        let graph = Digraph::build(s, k, sigma)?;
        let clusters = init_clusters(&graph);
        PicState::from_clusters(graph, clusters)
    }

    /// Build the digraph but start from singletons.
    pub fn new_singletons(s: &SimilarityMatrix, k: usize, sigma: f64) -> Result<PicState> {
        let graph = Digraph::build(s, k, sigma)?;
        let clusters = (0..graph.n()).map(|i| vec![i]).collect();
        PicState::from_clusters(graph, clusters)
    }

    /// Build the digraph and impose an existing partition as the cluster
    /// state (for affinity evaluation over clusters produced elsewhere).
    pub fn with_partition(
        s: &SimilarityMatrix,
        k: usize,
        sigma: f64,
        partition: &Partition,
    ) -> Result<PicState> {
        let graph = Digraph::build(s, k, sigma)?;
        if partition.len() != graph.n() {
            return Err(Error::Input(format!(
                "partition of {} labels for a {}-vertex digraph",
                partition.len(),
                graph.n()
            )));
        }
        PicState::from_clusters(graph, partition.clusters())
    }

    fn from_clusters(graph: Digraph, member_lists: Vec<Vec<usize>>) -> Result<PicState> {
        let mut clusters = BTreeMap::new();
        for members in member_lists {
            let integral = path_integral(&graph, &members)?;
            clusters.insert(members[0], ClusterData { members, integral });
        }
        let mut state = PicState {
            graph,
            clusters,
            pairs: BTreeMap::new(),
            merges: 0,
        };
        let reps: Vec<usize> = state.clusters.keys().copied().collect();
        for (ai, &ra) in reps.iter().enumerate() {
            for &rb in &reps[ai + 1..] {
                let entry = state.pair_entry(ra, rb)?;
                state.pairs.insert((ra, rb), entry);
            }
        }
        Ok(state)
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn merges(&self) -> usize {
        self.merges
    }

    pub fn graph(&self) -> &Digraph {
        &self.graph
    }

    /// Live cluster member lists with their cached path integrals, ordered
    /// by smallest member.
    pub fn cluster_integrals(&self) -> Vec<(Vec<usize>, f64)> {
        self.clusters
            .values()
            .map(|c| (c.members.clone(), c.integral))
            .collect()
    }

    /// Incremental-path-integral affinity between two live clusters,
    /// identified by position in smallest-member order.
    pub fn affinity(&self, a: usize, b: usize) -> Result<f64> {
        if a == b {
            return Err(Error::Input("affinity of a cluster with itself".into()));
        }
        let reps: Vec<usize> = self.clusters.keys().copied().collect();
        let (Some(&ra), Some(&rb)) = (reps.get(a), reps.get(b)) else {
            return Err(Error::Input(format!("dead cluster id {}", a.max(b))));
        };
        let key = (ra.min(rb), ra.max(rb));
        Ok(self.pairs[&key].affinity)
    }

    fn has_cross_edges(&self, a: &[usize], b: &[usize]) -> bool {
        let hit = |from: &[usize], to: &[usize]| {
            from.iter().any(|&i| {
                let row = self.graph.adjacency_row(i);
                let mut ti = 0;
                for &(j, _) in row {
                    while ti < to.len() && to[ti] < j {
                        ti += 1;
                    }
                    if ti == to.len() {
                        return false;
                    }
                    if to[ti] == j {
                        return true;
                    }
                }
                false
            })
        };
        hit(a, b) || hit(b, a)
    }

    fn pair_entry(&self, ra: usize, rb: usize) -> Result<PairEntry> {
        let a = &self.clusters[&ra];
        let b = &self.clusters[&rb];
        let na = a.members.len() as f64;
        let nb = b.members.len() as f64;
        let nu = na + nb;
        if !self.has_cross_edges(&a.members, &b.members) {
            // block-diagonal system: conditional integrals equal the
            // unconditional ones and the affinity is exactly zero
            let merged_integral = (na * na * a.integral + nb * nb * b.integral) / (nu * nu);
            return Ok(PairEntry {
                affinity: 0.0,
                merged_integral,
            });
        }
        let union = merge_sorted(&a.members, &b.members);
        let mat = self.graph.system_matrix(&union)?;
        let lu = mat.lu();
        let ind_a = indicator(&union, &a.members)?;
        let ind_b = indicator(&union, &b.members)?;
        let xa = lu
            .solve(&ind_a)
            .ok_or_else(|| Error::Numerical("singular path-integral system".into()))?;
        let xb = lu
            .solve(&ind_b)
            .ok_or_else(|| Error::Numerical("singular path-integral system".into()))?;
        let sa_union = ind_a.dot(&xa) / (na * na);
        let sb_union = ind_b.dot(&xb) / (nb * nb);
        // the incremental integrals are non-negative for non-negative P;
        // values below zero are solver noise and must not rank a connected
        // pair behind an exactly-disconnected one
        let affinity = ((sa_union - a.integral) + (sb_union - b.integral)).max(0.0);
        // 1 = 1_Ca + 1_Cb, so the merged cluster's integral reuses both solves
        let merged_integral = (xa.sum() + xb.sum()) / (nu * nu);
        Ok(PairEntry {
            affinity,
            merged_integral,
        })
    }

    /// Whether any live cluster pair has strictly positive affinity.
    pub fn has_positive_affinity(&self) -> bool {
        self.pairs.values().any(|e| e.affinity > 1e-12)
    }

    /// Merge argmax-affinity pairs (ties toward the lexicographically
    /// smallest representative pair) until `target` clusters remain.
    pub fn merge_to(&mut self, target: usize) -> Result<usize> {
        if target < 1 {
            return Err(Error::Config("cannot merge below 1 cluster".into()));
        }
        let mut performed = 0;
        while self.clusters.len() > target {
            let mut best: Option<((usize, usize), f64)> = None;
            for (&key, entry) in &self.pairs {
                let better = match best {
                    None => true,
                    Some((bk, ba)) => entry.affinity > ba || (entry.affinity == ba && key < bk),
                };
                if better {
                    best = Some((key, entry.affinity));
                }
            }
            let Some(((ra, rb), _)) = best else {
                return Err(Error::Numerical("no mergeable pair left".into()));
            };
            let entry = self.pairs[&(ra, rb)];
            let b = self.clusters.remove(&rb).expect("live cluster");
            let a = self.clusters.get_mut(&ra).expect("live cluster");
            a.members = merge_sorted(&a.members, &b.members);
            a.integral = entry.merged_integral;
            self.pairs
                .retain(|&(x, y), _| x != ra && x != rb && y != ra && y != rb);
            let reps: Vec<usize> = self.clusters.keys().copied().filter(|&r| r != ra).collect();
            for r in reps {
                let key = (ra.min(r), ra.max(r));
                let entry = self.pair_entry(ra, r)?;
                self.pairs.insert(key, entry);
            }
            self.merges += 1;
            performed += 1;
        }
        Ok(performed)
    }

    /// Full pairwise affinity matrix of the live clusters (smallest-member
    /// order) with diagonal entries set to the maximum off-diagonal value.
    pub fn affinity_matrix(&self) -> Array2<f64> {
        let reps: Vec<usize> = self.clusters.keys().copied().collect();
        let m = reps.len();
        if m == 1 {
            return Array2::zeros((1, 1));
        }
        let mut a = Array2::zeros((m, m));
        let mut max_off = f64::NEG_INFINITY;
        for i in 0..m {
            for j in (i + 1)..m {
                let v = self.pairs[&(reps[i], reps[j])].affinity;
                a[[i, j]] = v;
                a[[j, i]] = v;
                max_off = max_off.max(v);
            }
        }
        for i in 0..m {
            a[[i, i]] = max_off;
        }
        a
    }

    /// Current partition with labels renumbered in order of first
    /// appearance.
    pub fn partition(&self) -> Partition {
        let n = self.graph.n();
        let mut labels = vec![0usize; n];
        for (idx, c) in self.clusters.values().enumerate() {
            for &m in &c.members {
                labels[m] = idx;
            }
        }
        Partition::from_labels(&labels)
    }
}

fn merge_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] < b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Path integral clustering to exactly `target` clusters. If the
/// first-nearest-neighbor initialization already has fewer clusters than the
/// target, the state restarts from singletons.
pub fn pic_cluster(
    s: &SimilarityMatrix,
    k: usize,
    sigma: f64,
    target: usize,
) -> Result<Partition> {
    let n = s.n();
    if target < 1 || target > n {
        return Err(Error::Config(format!("target {target} outside [1, {n}]")));
    }
    let mut state = PicState::new(s, k, sigma)?;
    if state.num_clusters() < target {
        state = PicState::new_singletons(s, k, sigma)?;
    }
    state.merge_to(target)?;
    Ok(state.partition())
}
