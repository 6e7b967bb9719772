//! Exact HDBSCAN over embedding vectors and a hyperparameter grid search.
//!
//! Pipeline: core distances → mutual reachability → minimum spanning tree
//! (Prim) → single-linkage hierarchy → condensed tree → excess-of-mass
//! selection. Everything is deterministic; ties go to the lowest index.
//!
//! Edges of equal weight merge their components in one step, so a level
//! where three components join produces one node with three children. This
//! keeps the hierarchy independent of the order in which tied edges are
//! visited.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::euclidean;

/// Below this many points the mutual reachability matrix is materialized.
pub const MATERIALIZE_LIMIT: usize = 4096;

/// Zero edge weights are clamped to this before taking `1 / weight`.
pub const MIN_EDGE_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("min_samples must be at least 1")]
    ZeroMinSamples,
    #[error("min_samples {k} exceeds the number of points {n}")]
    TooFewPoints { k: usize, n: usize },
    #[error("min_cluster_size must be at least 2, got {0}")]
    MinClusterSize(usize),
    #[error("points have mixed dimensions ({0} vs {1})")]
    MixedDimensions(usize, usize),
    #[error("empty parameter grid")]
    EmptyGrid,
    #[error("cannot parse grid {0:?}")]
    GridSyntax(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClusteringParams {
    pub min_cluster_size: usize,
    /// `k` for core distances; the point itself counts as the 0th neighbor.
    pub min_samples: usize,
}

impl ClusteringParams {
    pub fn new(min_cluster_size: usize, min_samples: usize) -> Self {
        Self {
            min_cluster_size,
            min_samples,
        }
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.min_cluster_size < 2 {
            return Err(ClusterError::MinClusterSize(self.min_cluster_size));
        }
        if self.min_samples == 0 {
            return Err(ClusterError::ZeroMinSamples);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Per point: `-1` for noise, otherwise `0..cluster_count`.
    pub labels: Vec<i64>,
    /// Per cluster, indexed by label.
    pub stabilities: Vec<f64>,
    pub params: ClusteringParams,
}

impl ClusterAssignment {
    pub fn cluster_count(&self) -> usize {
        self.stabilities.len()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l < 0).count()
    }

    pub fn clustered_fraction(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        1.0 - self.noise_fraction()
    }

    pub fn noise_fraction(&self) -> f64 {
        if self.labels.is_empty() {
            return 1.0;
        }
        self.noise_count() as f64 / self.labels.len() as f64
    }

    /// Point indices labelled `cluster`, ascending.
    pub fn members(&self, cluster: i64) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.cluster_count()];
        for &l in &self.labels {
            if l >= 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }
}

fn check_dims<P: AsRef<[f64]>>(points: &[P]) -> Result<(), ClusterError> {
    if let Some(first) = points.first() {
        let d = first.as_ref().len();
        for p in points {
            if p.as_ref().len() != d {
                return Err(ClusterError::MixedDimensions(d, p.as_ref().len()));
            }
        }
    }
    Ok(())
}

/// Distance from each point to its `k`-th nearest neighbor, the point
/// itself being the 0th. When `k == n` the farthest point is used.
pub fn core_distances<P>(points: &[P], k: usize) -> Result<Vec<f64>, ClusterError>
where
    P: AsRef<[f64]> + Sync,
{
    if k == 0 {
        return Err(ClusterError::ZeroMinSamples);
    }
    let n = points.len();
    if k > n {
        return Err(ClusterError::TooFewPoints { k, n });
    }
    check_dims(points)?;
    let idx = k.min(n - 1);
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut row: Vec<f64> = points
                .iter()
                .map(|q| euclidean(points[i].as_ref(), q.as_ref()))
                .collect();
            let (_, kth, _) = row.select_nth_unstable_by(idx, f64::total_cmp);
            *kth
        })
        .collect())
}

/// `max(core(a), core(b), d(a, b))`, backed by a dense matrix for small
/// inputs and computed on demand otherwise.
pub struct MutualReachability<'a, P> {
    points: &'a [P],
    cores: Vec<f64>,
    matrix: Option<Vec<f64>>,
}

impl<'a, P> MutualReachability<'a, P>
where
    P: AsRef<[f64]> + Sync,
{
    pub fn new(points: &'a [P], cores: Vec<f64>) -> Self {
        assert_eq!(points.len(), cores.len(), "one core distance per point");
        let n = points.len();
        let mut mr = Self {
            points,
            cores,
            matrix: None,
        };
        if n <= MATERIALIZE_LIMIT {
            let mut m = vec![0.0; n * n];
            m.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
                for (j, cell) in row.iter_mut().enumerate() {
                    *cell = mr.compute(i, j);
                }
            });
            mr.matrix = Some(m);
        }
        mr
    }

    fn compute(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return self.cores[a];
        }
        let d = euclidean(self.points[a].as_ref(), self.points[b].as_ref());
        d.max(self.cores[a]).max(self.cores[b])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_materialized(&self) -> bool {
        self.matrix.is_some()
    }

    pub fn cores(&self) -> &[f64] {
        &self.cores
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        match &self.matrix {
            Some(m) => m[a * self.points.len() + b],
            None => self.compute(a, b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Prim's algorithm from vertex 0. Among equal keys the lowest vertex index
/// is taken next, and a key is only replaced by an equal one when the new
/// parent has a lower index.
pub fn build_mst<P>(mreach: &MutualReachability<'_, P>) -> Vec<MstEdge>
where
    P: AsRef<[f64]> + Sync,
{
    let n = mreach.len();
    if n <= 1 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut key = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let v = current;
        key.par_iter_mut()
            .zip(parent.par_iter_mut())
            .enumerate()
            .for_each(|(u, (k, p))| {
                if in_tree[u] {
                    return;
                }
                let d = mreach.distance(v, u);
                if d < *k || (d == *k && v < *p) {
                    *k = d;
                    *p = v;
                }
            });
        let mut best = usize::MAX;
        for u in 0..n {
            if !in_tree[u] && (best == usize::MAX || key[u] < key[best]) {
                best = u;
            }
        }
        in_tree[best] = true;
        edges.push(MstEdge {
            a: parent[best],
            b: best,
            weight: key[best],
        });
        current = best;
    }
    edges
}

fn lambda_of(weight: f64) -> f64 {
    1.0 / weight.max(MIN_EDGE_WEIGHT)
}

/// Single-linkage hierarchy: nodes `0..n` are points, later nodes are
/// merges that may have more than two children.
struct Hierarchy {
    children: Vec<Vec<usize>>,
    size: Vec<usize>,
    lambda: Vec<f64>,
}

impl Hierarchy {
    fn build(n: usize, mst: &[MstEdge]) -> Self {
        let mut h = Hierarchy {
            children: vec![Vec::new(); n],
            size: vec![1; n],
            lambda: vec![f64::INFINITY; n],
        };
        let mut uf = UnionFind::new(n);
        let mut node_of_root: Vec<usize> = (0..n).collect();
        let mut order: Vec<usize> = (0..mst.len()).collect();
        order.sort_by(|&x, &y| mst[x].weight.total_cmp(&mst[y].weight).then(x.cmp(&y)));

        let mut i = 0;
        while i < order.len() {
            let w = mst[order[i]].weight;
            let mut j = i;
            while j < order.len() && mst[order[j]].weight == w {
                j += 1;
            }
            let group = &order[i..j];
            let before: Vec<(usize, usize)> = group
                .iter()
                .flat_map(|&e| [mst[e].a, mst[e].b])
                .map(|x| (x, node_of_root[uf.find(x)]))
                .collect();
            for &e in group {
                uf.union(mst[e].a, mst[e].b);
            }
            let mut merged: Vec<(usize, Vec<usize>)> = Vec::new();
            for (x, old) in before {
                let root = uf.find(x);
                match merged.iter_mut().find(|(r, _)| *r == root) {
                    Some((_, olds)) => {
                        if !olds.contains(&old) {
                            olds.push(old);
                        }
                    }
                    None => merged.push((root, vec![old])),
                }
            }
            for (root, mut olds) in merged {
                olds.sort_unstable();
                let id = h.children.len();
                h.size.push(olds.iter().map(|&c| h.size[c]).sum());
                h.children.push(olds);
                h.lambda.push(lambda_of(w));
                node_of_root[root] = id;
            }
            i = j;
        }
        h
    }

    fn root(&self) -> usize {
        self.children.len() - 1
    }

    fn leaves(&self, node: usize, out: &mut Vec<usize>) {
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if self.children[x].is_empty() {
                out.push(x);
            } else {
                stack.extend(self.children[x].iter().copied());
            }
        }
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// One node of the condensed tree.
#[derive(Debug, Clone)]
struct Condensed {
    parent: Option<usize>,
    birth: f64,
    stability: f64,
    children: Vec<usize>,
}

/// Condenses the MST hierarchy and selects clusters by excess of mass.
///
/// A parent is kept over its children when its stability is at least the
/// sum of theirs. The root is only eligible when it never splits into two
/// or more clusters, in which case every point belongs to it.
pub fn extract_clusters(
    n_points: usize,
    mst: &[MstEdge],
    params: &ClusteringParams,
) -> ClusterAssignment {
    let mcs = params.min_cluster_size;
    let noise = || ClusterAssignment {
        labels: vec![-1; n_points],
        stabilities: Vec::new(),
        params: *params,
    };
    if n_points == 0 || n_points < mcs {
        return noise();
    }
    debug_assert_eq!(mst.len() + 1, n_points);
    let h = Hierarchy::build(n_points, mst);

    let mut clusters = vec![Condensed {
        parent: None,
        birth: 0.0,
        stability: 0.0,
        children: Vec::new(),
    }];
    let mut fell_from = vec![0usize; n_points];
    let mut stack = vec![(h.root(), 0usize)];
    let mut scratch = Vec::new();
    while let Some((node, c)) = stack.pop() {
        if h.children[node].is_empty() {
            fell_from[node] = c;
            continue;
        }
        let lambda = h.lambda[node];
        let birth = clusters[c].birth;
        let big: Vec<usize> = h.children[node]
            .iter()
            .copied()
            .filter(|&ch| h.size[ch] >= mcs)
            .collect();
        for &ch in &h.children[node] {
            if h.size[ch] >= mcs {
                continue;
            }
            scratch.clear();
            h.leaves(ch, &mut scratch);
            for &p in &scratch {
                fell_from[p] = c;
            }
            clusters[c].stability += scratch.len() as f64 * (lambda - birth);
        }
        match big.len() {
            0 => {}
            1 => stack.push((big[0], c)),
            _ => {
                for &ch in &big {
                    clusters[c].stability += h.size[ch] as f64 * (lambda - birth);
                    let id = clusters.len();
                    clusters.push(Condensed {
                        parent: Some(c),
                        birth: lambda,
                        stability: 0.0,
                        children: Vec::new(),
                    });
                    clusters[c].children.push(id);
                    stack.push((ch, id));
                }
            }
        }
    }

    let selected = select_eom(&clusters);
    label_points(&clusters, &selected, &fell_from, params)
}

fn select_eom(clusters: &[Condensed]) -> Vec<bool> {
    let mut selected = vec![false; clusters.len()];
    if clusters[0].children.is_empty() {
        selected[0] = true;
        return selected;
    }
    let mut best = vec![0.0f64; clusters.len()];
    // Children always have larger ids than their parent.
    for c in (1..clusters.len()).rev() {
        let kids: f64 = clusters[c].children.iter().map(|&k| best[k]).sum();
        if clusters[c].children.is_empty() || clusters[c].stability >= kids {
            selected[c] = true;
            best[c] = clusters[c].stability;
            let mut stack = clusters[c].children.clone();
            while let Some(d) = stack.pop() {
                selected[d] = false;
                stack.extend(clusters[d].children.iter().copied());
            }
        } else {
            best[c] = kids;
        }
    }
    selected
}

fn label_points(
    clusters: &[Condensed],
    selected: &[bool],
    fell_from: &[usize],
    params: &ClusteringParams,
) -> ClusterAssignment {
    let n = fell_from.len();
    let mut owner: Vec<Option<usize>> = vec![None; n];
    for p in 0..n {
        let mut c = Some(fell_from[p]);
        while let Some(x) = c {
            if selected[x] {
                owner[p] = Some(x);
                break;
            }
            c = clusters[x].parent;
        }
    }
    let mut first_member: Vec<(usize, usize)> = Vec::new();
    for (p, o) in owner.iter().enumerate() {
        if let Some(c) = *o {
            if !first_member.iter().any(|&(cc, _)| cc == c) {
                first_member.push((c, p));
            }
        }
    }
    // Points are visited in index order, so `first_member` is already
    // ordered by minimum member index.
    let id_of = |c: usize| first_member.iter().position(|&(cc, _)| cc == c).unwrap() as i64;
    ClusterAssignment {
        labels: owner.iter().map(|o| o.map_or(-1, id_of)).collect(),
        stabilities: first_member.iter().map(|&(c, _)| clusters[c].stability).collect(),
        params: *params,
    }
}

/// Full HDBSCAN on `points`.
pub fn hdbscan<P>(points: &[P], params: &ClusteringParams) -> Result<ClusterAssignment, ClusterError>
where
    P: AsRef<[f64]> + Sync,
{
    params.validate()?;
    check_dims(points)?;
    let n = points.len();
    if n < params.min_cluster_size {
        return Ok(extract_clusters(n, &[], params));
    }
    let cores = core_distances(points, params.min_samples)?;
    let mreach = MutualReachability::new(points, cores);
    let mst = build_mst(&mreach);
    Ok(extract_clusters(n, &mst, params))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub params: ClusteringParams,
    pub clustered_fraction: f64,
    pub cluster_count: usize,
    /// Set when the configuration could not run on this input (for example
    /// `min_samples` larger than the point count). Such entries score zero.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchReport {
    pub evaluated: Vec<GridEntry>,
    pub best: usize,
}

impl GridSearchReport {
    pub fn best_entry(&self) -> &GridEntry {
        &self.evaluated[self.best]
    }
}

/// Min cluster sizes × min samples used when no grid is given.
pub fn default_grid() -> Vec<ClusteringParams> {
    let mut grid = Vec::new();
    for mcs in [2, 3, 4, 5, 8, 10, 15, 20] {
        for k in [1, 2, 3, 4, 5, 8] {
            grid.push(ClusteringParams::new(mcs, k));
        }
    }
    grid
}

/// Parses `default` or `mcs=3,5,15;k=3,5` into a grid (cartesian product,
/// min cluster size varying slowest).
pub fn parse_grid(spec: &str) -> Result<Vec<ClusteringParams>, ClusterError> {
    let spec = spec.trim();
    if spec == "default" {
        return Ok(default_grid());
    }
    let bad = || ClusterError::GridSyntax(spec.to_string());
    let mut sizes = None;
    let mut samples = None;
    for part in spec.split(';').filter(|p| !p.trim().is_empty()) {
        let (key, values) = part.split_once('=').ok_or_else(bad)?;
        let values: Vec<usize> = values
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        match key.trim() {
            "mcs" | "min_cluster_size" => sizes = Some(values),
            "k" | "min_samples" => samples = Some(values),
            _ => return Err(bad()),
        }
    }
    let (sizes, samples) = (sizes.ok_or_else(bad)?, samples.ok_or_else(bad)?);
    let grid: Vec<_> = sizes
        .iter()
        .flat_map(|&m| samples.iter().map(move |&k| ClusteringParams::new(m, k)))
        .collect();
    for p in &grid {
        p.validate()?;
    }
    if grid.is_empty() {
        return Err(ClusterError::EmptyGrid);
    }
    Ok(grid)
}

/// Index of the winning entry: highest clustered fraction among entries
/// with at least two clusters (or among all entries when none has two),
/// ties to smaller min cluster size, then smaller k, then earlier entry.
pub fn select_best(entries: &[GridEntry]) -> usize {
    let any_multi = entries.iter().any(|e| e.cluster_count >= 2);
    let mut best: Option<usize> = None;
    for (i, e) in entries.iter().enumerate() {
        if any_multi && e.cluster_count < 2 {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let cur = &entries[b];
                let better = e.clustered_fraction > cur.clustered_fraction
                    || (e.clustered_fraction == cur.clustered_fraction
                        && (e.params.min_cluster_size, e.params.min_samples)
                            < (cur.params.min_cluster_size, cur.params.min_samples));
                Some(if better { i } else { b })
            }
        };
    }
    best.unwrap_or(0)
}

/// Runs HDBSCAN for every configuration. MSTs are shared between entries
/// with the same `min_samples`.
pub fn grid_search<P>(points: &[P], grid: &[ClusteringParams]) -> Result<GridSearchReport, ClusterError>
where
    P: AsRef<[f64]> + Sync,
{
    if grid.is_empty() {
        return Err(ClusterError::EmptyGrid);
    }
    check_dims(points)?;
    let n = points.len();
    let mut msts: Vec<(usize, Vec<MstEdge>)> = Vec::new();
    let mut evaluated = Vec::with_capacity(grid.len());
    for params in grid {
        params.validate()?;
        let entry = if n < params.min_cluster_size {
            let a = extract_clusters(n, &[], params);
            GridEntry {
                params: *params,
                clustered_fraction: a.clustered_fraction(),
                cluster_count: a.cluster_count(),
                skipped: None,
            }
        } else if params.min_samples > n {
            GridEntry {
                params: *params,
                clustered_fraction: 0.0,
                cluster_count: 0,
                skipped: Some(ClusterError::TooFewPoints { k: params.min_samples, n }.to_string()),
            }
        } else {
            let k = params.min_samples;
            if !msts.iter().any(|(kk, _)| *kk == k) {
                let cores = core_distances(points, k)?;
                let mst = build_mst(&MutualReachability::new(points, cores));
                msts.push((k, mst));
            }
            let mst = &msts.iter().find(|(kk, _)| *kk == k).unwrap().1;
            let a = extract_clusters(n, mst, params);
            GridEntry {
                params: *params,
                clustered_fraction: a.clustered_fraction(),
                cluster_count: a.cluster_count(),
                skipped: None,
            }
        };
        evaluated.push(entry);
    }
    let best = select_best(&evaluated);
    Ok(GridSearchReport { evaluated, best })
}
