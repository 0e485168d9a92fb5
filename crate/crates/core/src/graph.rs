//! Finite simple graphs, metric queries, growth profiles, power and quotient
//! graphs, and greedy coloring.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Immutable finite simple graph on vertices `0..vertex_count`.
///
/// Adjacency is stored in compressed rows; every row is strictly sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    component_of: Vec<usize>,
    components: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an edge list. Duplicate edges collapse, loops are rejected.
    pub fn from_edges(vertex_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); vertex_count];
        for &(u, v) in edges {
            for x in [u, v] {
                if x >= vertex_count {
                    return Err(Error::VertexOutOfRange {
                        vertex: x,
                        count: vertex_count,
                    });
                }
            }
            if u == v {
                return Err(Error::Loop(u));
            }
            rows[u].push(v);
            rows[v].push(u);
        }
        Ok(Self::from_rows(rows))
    }

    /// Builds a graph from adjacency rows that are already symmetric and loop free.
    pub(crate) fn from_rows(mut rows: Vec<Vec<usize>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let mut targets = Vec::new();
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            targets.extend_from_slice(row);
            offsets.push(targets.len());
        }
        let mut g = Graph {
            offsets,
            targets,
            component_of: Vec::new(),
            components: Vec::new(),
        };
        g.find_components();
        g
    }

    fn find_components(&mut self) {
        let n = self.vertex_count();
        let mut component_of = vec![usize::MAX; n];
        let mut components = Vec::new();
        let mut stack = Vec::new();
        for s in 0..n {
            if component_of[s] != usize::MAX {
                continue;
            }
            let id = components.len();
            let mut members = vec![s];
            component_of[s] = id;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &w in self.neighbors(u) {
                    if component_of[w] == usize::MAX {
                        component_of[w] = id;
                        members.push(w);
                        stack.push(w);
                    }
                }
            }
            members.sort_unstable();
            components.push(members);
        }
        self.component_of = component_of;
        self.components = components;
    }

    /// Number of vertices.
    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    /// Sorted neighbors of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.vertex_count())
            .map(|v| self.degree(v))
            .max()
            .unwrap_or(0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.vertex_count()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    /// Index of the connected component containing `v`.
    pub fn component_of(&self, v: usize) -> usize {
        self.component_of[v]
    }

    /// Component index of every vertex.
    pub fn component_index(&self) -> &[usize] {
        &self.component_of
    }

    /// Components ordered by their smallest vertex; each is sorted.
    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    pub(crate) fn check_vertex(&self, v: usize) -> Result<()> {
        if v < self.vertex_count() {
            Ok(())
        } else {
            Err(Error::VertexOutOfRange {
                vertex: v,
                count: self.vertex_count(),
            })
        }
    }
}

/// Reusable breadth-first search buffers.
///
/// Distances are only meaningful for vertices reached by the last run;
/// every other vertex is at distance ∞ and reports `None`.
#[derive(Clone, Debug)]
pub struct Bfs {
    dist: Vec<u32>,
    mark: Vec<u32>,
    epoch: u32,
    order: Vec<usize>,
}

impl Bfs {
    pub fn new(vertex_count: usize) -> Self {
        Bfs {
            dist: vec![0; vertex_count],
            mark: vec![0; vertex_count],
            epoch: 0,
            order: Vec::new(),
        }
    }

    fn next_epoch(&mut self) {
        if self.epoch == u32::MAX {
            self.mark.iter_mut().for_each(|m| *m = 0);
            self.epoch = 0;
        }
        self.epoch += 1;
        self.order.clear();
    }

    /// Single-source search up to `radius` (`None` = unbounded). Returns
    /// the reached vertices in order of nondecreasing distance.
    pub fn run(&mut self, g: &Graph, source: usize, radius: Option<u32>) -> &[usize] {
        self.run_filtered(g, &[source], radius, |_| true)
    }

    /// Multi-source search that only enters vertices accepted by `allow`.
    /// Sources are always entered.
    pub fn run_filtered<F: Fn(usize) -> bool>(
        &mut self,
        g: &Graph,
        sources: &[usize],
        radius: Option<u32>,
        allow: F,
    ) -> &[usize] {
        self.next_epoch();
        let epoch = self.epoch;
        for &s in sources {
            if self.mark[s] != epoch {
                self.mark[s] = epoch;
                self.dist[s] = 0;
                self.order.push(s);
            }
        }
        let limit = radius.unwrap_or(u32::MAX);
        let mut head = 0;
        while head < self.order.len() {
            let u = self.order[head];
            head += 1;
            let d = self.dist[u];
            if d >= limit {
                continue;
            }
            for &w in g.neighbors(u) {
                if self.mark[w] != epoch && allow(w) {
                    self.mark[w] = epoch;
                    self.dist[w] = d + 1;
                    self.order.push(w);
                }
            }
        }
        &self.order
    }

    /// Distance from the last run's sources, or `None` for ∞.
    pub fn dist(&self, v: usize) -> Option<u32> {
        (self.mark[v] == self.epoch).then(|| self.dist[v])
    }

    /// Vertices reached by the last run.
    pub fn reached(&self) -> &[usize] {
        &self.order
    }
}

/// Exact distances from `source` up to `radius`; unreachable or farther
/// vertices are absent.
pub fn bounded_bfs(g: &Graph, source: usize, radius: Option<u32>) -> Result<BTreeMap<usize, u32>> {
    g.check_vertex(source)?;
    let mut bfs = Bfs::new(g.vertex_count());
    bfs.run(g, source, radius);
    Ok(bfs
        .reached()
        .iter()
        .map(|&v| (v, bfs.dist(v).unwrap()))
        .collect())
}

/// Closed ball `B(v, r)` as a sorted vertex list.
pub fn ball(g: &Graph, v: usize, r: u32) -> Result<Vec<usize>> {
    g.check_vertex(v)?;
    let mut bfs = Bfs::new(g.vertex_count());
    let mut out = bfs.run(g, v, Some(r)).to_vec();
    out.sort_unstable();
    Ok(out)
}

/// Growth function samples of a graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthProfile {
    /// `gamma[r]` is the largest ball size at radius `r`, for `0 ≤ r ≤ r_max`.
    pub gamma: Vec<usize>,
    /// `rho[r - 1]` is `ln gamma[r] / ln(r + 1)`, for `1 ≤ r ≤ r_max`.
    pub rho: Vec<f64>,
    /// Largest sampled value of `rho`.
    pub er_bound: f64,
}

impl GrowthProfile {
    pub fn r_max(&self) -> u32 {
        (self.gamma.len() - 1) as u32
    }

    pub fn rho_at(&self, r: u32) -> Option<f64> {
        if r == 0 {
            None
        } else {
            self.rho.get(r as usize - 1).copied()
        }
    }
}

/// Samples `γ(r)` and `ρ(r)` for every radius up to `r_max`.
pub fn growth_profile(g: &Graph, r_max: u32) -> Result<GrowthProfile> {
    if g.vertex_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    if r_max == 0 {
        return Err(Error::InvalidArgument("r_max must be at least 1".into()));
    }
    let rm = r_max as usize;
    let mut gamma = vec![0usize; rm + 1];
    let mut bfs = Bfs::new(g.vertex_count());
    let mut counts = vec![0usize; rm + 1];
    for v in 0..g.vertex_count() {
        counts.iter_mut().for_each(|c| *c = 0);
        bfs.run(g, v, Some(r_max));
        for &u in bfs.reached() {
            counts[bfs.dist(u).unwrap() as usize] += 1;
        }
        let mut acc = 0;
        for r in 0..=rm {
            acc += counts[r];
            gamma[r] = gamma[r].max(acc);
        }
    }
    let rho: Vec<f64> = (1..=rm)
        .map(|r| libm::log(gamma[r] as f64) / libm::log(r as f64 + 1.0))
        .collect();
    let er_bound = rho.iter().copied().fold(0.0, f64::max);
    Ok(GrowthProfile {
        gamma,
        rho,
        er_bound,
    })
}

/// Outcome of testing `γ(r) ≤ r^b` on the sampled radii `r ≥ r0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthBoundCheck {
    pub holds: bool,
    pub first_violation: Option<u32>,
}

/// Checks the `(b, r0)` growth bound over every sampled integer radius `r ≥ r0`.
pub fn check_b_r0(profile: &GrowthProfile, b: f64, r0: f64) -> GrowthBoundCheck {
    let start = libm::ceil(r0.max(1.0)) as u32;
    for r in start..=profile.r_max() {
        if profile.gamma[r as usize] as f64 > libm::pow(r as f64, b) {
            return GrowthBoundCheck {
                holds: false,
                first_violation: Some(r),
            };
        }
    }
    GrowthBoundCheck {
        holds: true,
        first_violation: None,
    }
}

/// `G^r`: same vertices, `u ~ v` iff `1 ≤ dist(u, v) ≤ r`.
pub fn power_graph(g: &Graph, r: u32) -> Result<Graph> {
    if r == 0 {
        return Err(Error::InvalidArgument(
            "power graph radius must be at least 1".into(),
        ));
    }
    let n = g.vertex_count();
    let mut bfs = Bfs::new(n);
    let rows = (0..n)
        .map(|v| {
            bfs.run(g, v, Some(r))
                .iter()
                .copied()
                .filter(|&u| u != v)
                .collect()
        })
        .collect();
    Ok(Graph::from_rows(rows))
}

/// Quotient `G/P` and the map from cluster id to quotient vertex.
///
/// Quotient vertices are numbered by cluster id, so the map is the identity;
/// it is returned to keep callers independent of that choice.
pub fn quotient_graph(g: &Graph, p: &Partition) -> Result<(Graph, Vec<usize>)> {
    if p.cluster_of.len() != g.vertex_count() {
        return Err(Error::InvalidPartition(format!(
            "partition covers {} vertices, graph has {}",
            p.cluster_of.len(),
            g.vertex_count()
        )));
    }
    let k = p.clusters.len();
    let mut rows = vec![Vec::new(); k];
    for (u, v) in g.edges() {
        let (a, b) = (p.cluster_of[u], p.cluster_of[v]);
        if a != b {
            rows[a].push(b);
            rows[b].push(a);
        }
    }
    Ok((Graph::from_rows(rows), (0..k).collect()))
}

/// Greedy coloring in increasing id order with the smallest free color.
pub fn greedy_proper_coloring(g: &Graph) -> Vec<usize> {
    let n = g.vertex_count();
    let mut color = vec![usize::MAX; n];
    let mut seen = vec![usize::MAX; g.max_degree() + 1];
    for v in 0..n {
        for &u in g.neighbors(v) {
            if color[u] < seen.len() {
                seen[color[u]] = v;
            }
        }
        color[v] = (0..).find(|&c| c >= seen.len() || seen[c] != v).unwrap();
    }
    color
}

/// Greedy coloring of `G^radius` without materializing the power graph.
/// Produces exactly `greedy_proper_coloring(&power_graph(g, radius))`.
pub fn greedy_power_coloring(g: &Graph, radius: u32) -> Vec<usize> {
    let n = g.vertex_count();
    let mut color = vec![usize::MAX; n];
    let mut bfs = Bfs::new(n);
    // seen[c] == v + 1 marks color c as taken by a neighbor of v.
    let mut seen: Vec<usize> = Vec::new();
    for v in 0..n {
        for &u in bfs.run(g, v, Some(radius)) {
            if u < v {
                let c = color[u];
                if c >= seen.len() {
                    seen.resize(c + 1, 0);
                }
                seen[c] = v + 1;
            }
        }
        color[v] = (0..)
            .find(|&c| c >= seen.len() || seen[c] != v + 1)
            .unwrap();
    }
    color
}

/// Partition of the vertex set into nonempty clusters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub cluster_of: Vec<usize>,
    pub clusters: Vec<Vec<usize>>,
    /// Diameter of each cluster in the metric of the whole graph; `None` is ∞
    /// (a cluster meeting two components).
    pub diam: Vec<Option<u32>>,
}

impl Partition {
    /// Validates `clusters` as a partition of `V(g)` and records diameters.
    /// Clusters are sorted internally and ordered by smallest member.
    pub fn new(g: &Graph, clusters: Vec<Vec<usize>>) -> Result<Self> {
        let (cluster_of, clusters) = normalize(g.vertex_count(), clusters)?;
        let mut bfs = Bfs::new(g.vertex_count());
        let mut inside = vec![false; g.vertex_count()];
        let diam = clusters
            .iter()
            .map(|c| set_diameter_in(g, c, &mut bfs, &mut inside))
            .collect();
        Ok(Partition {
            cluster_of,
            clusters,
            diam,
        })
    }

    /// Builds a partition from per-vertex labels; equal labels share a cluster.
    pub fn from_labels(g: &Graph, labels: &[usize]) -> Result<Self> {
        if labels.len() != g.vertex_count() {
            return Err(Error::InvalidPartition(format!(
                "{} labels for {} vertices",
                labels.len(),
                g.vertex_count()
            )));
        }
        let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (v, &l) in labels.iter().enumerate() {
            by_label.entry(l).or_default().push(v);
        }
        Self::new(g, by_label.into_values().collect())
    }

    /// All singletons.
    pub fn singletons(g: &Graph) -> Self {
        let n = g.vertex_count();
        Partition {
            cluster_of: (0..n).collect(),
            clusters: (0..n).map(|v| vec![v]).collect(),
            diam: vec![Some(0); n],
        }
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Largest cluster diameter, `None` if some cluster has infinite diameter.
    pub fn max_diam(&self) -> Option<u32> {
        self.diam
            .iter()
            .try_fold(0u32, |acc, d| d.map(|d| acc.max(d)))
    }

    /// Vertices of cluster `c` with a neighbor outside it.
    pub fn boundary(&self, g: &Graph, c: usize) -> Vec<usize> {
        self.clusters[c]
            .iter()
            .copied()
            .filter(|&u| g.neighbors(u).iter().any(|&w| self.cluster_of[w] != c))
            .collect()
    }

    /// For each vertex `v`, the largest `ρ` with `B(v, ρ)` inside the cluster
    /// of `v`; `u32::MAX` when that cluster contains the whole component.
    pub fn pad_radii(&self, g: &Graph) -> Vec<u32> {
        let n = g.vertex_count();
        let mut dist = vec![u32::MAX; n];
        let mut queue = Vec::new();
        for v in 0..n {
            let c = self.cluster_of[v];
            if g.neighbors(v).iter().any(|&w| self.cluster_of[w] != c) {
                dist[v] = 0;
                queue.push(v);
            }
        }
        let mut head = 0;
        while head < queue.len() {
            let u = queue[head];
            head += 1;
            for &w in g.neighbors(u) {
                if dist[w] == u32::MAX && self.cluster_of[w] == self.cluster_of[u] {
                    dist[w] = dist[u] + 1;
                    queue.push(w);
                }
            }
        }
        dist
    }

    /// True when every cluster of `self` lies inside a cluster of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.clusters.iter().all(|c| {
            let target = coarser.cluster_of[c[0]];
            c.iter().all(|&v| coarser.cluster_of[v] == target)
        })
    }
}

fn normalize(n: usize, mut clusters: Vec<Vec<usize>>) -> Result<(Vec<usize>, Vec<Vec<usize>>)> {
    for c in clusters.iter_mut() {
        c.sort_unstable();
    }
    if clusters.iter().any(|c| c.is_empty()) {
        return Err(Error::InvalidPartition("empty cluster".into()));
    }
    clusters.sort_unstable_by_key(|c| c[0]);
    let mut cluster_of = vec![usize::MAX; n];
    for (i, c) in clusters.iter().enumerate() {
        for &v in c {
            if v >= n {
                return Err(Error::VertexOutOfRange {
                    vertex: v,
                    count: n,
                });
            }
            if cluster_of[v] != usize::MAX {
                return Err(Error::InvalidPartition(format!("vertex {v} appears twice")));
            }
            cluster_of[v] = i;
        }
    }
    if let Some(v) = cluster_of.iter().position(|&c| c == usize::MAX) {
        return Err(Error::InvalidPartition(format!(
            "vertex {v} is not covered"
        )));
    }
    Ok((cluster_of, clusters))
}

/// Largest `dist_G` between members of `set`; `None` if two members are in
/// different components. The empty set has diameter 0.
pub fn set_diameter(g: &Graph, set: &[usize], bfs: &mut Bfs) -> Option<u32> {
    let Some(&first) = set.first() else {
        return Some(0);
    };
    let comp = g.component_of(first);
    if set.iter().any(|&v| g.component_of(v) != comp) {
        return None;
    }
    if set.len() == 1 {
        return Some(0);
    }
    let mut inside = vec![false; g.vertex_count()];
    set_diameter_in(g, set, bfs, &mut inside)
}

/// [`set_diameter`] with a caller-owned all-false membership buffer, which
/// is all false again on return.
fn set_diameter_in(g: &Graph, set: &[usize], bfs: &mut Bfs, inside: &mut [bool]) -> Option<u32> {
    let Some(&first) = set.first() else {
        return Some(0);
    };
    let comp = g.component_of(first);
    if set.len() == 1 {
        return Some(0);
    }
    if set.iter().any(|&v| g.component_of(v) != comp) {
        return None;
    }
    let mut best = 0;
    for &v in set {
        inside[v] = true;
    }
    for &u in set {
        let mut remaining = set.len();
        bfs.next_epoch();
        let epoch = bfs.epoch;
        bfs.mark[u] = epoch;
        bfs.dist[u] = 0;
        bfs.order.push(u);
        let mut head = 0;
        'search: while head < bfs.order.len() {
            let x = bfs.order[head];
            head += 1;
            if inside[x] {
                best = best.max(bfs.dist[x]);
                remaining -= 1;
                if remaining == 0 {
                    break 'search;
                }
            }
            let d = bfs.dist[x] + 1;
            for &w in g.neighbors(x) {
                if bfs.mark[w] != epoch {
                    bfs.mark[w] = epoch;
                    bfs.dist[w] = d;
                    bfs.order.push(w);
                }
            }
        }
    }
    for &v in set {
        inside[v] = false;
    }
    Some(best)
}

/// `dist_G` between two vertex sets; `None` when either is empty or they
/// lie in different components.
pub fn set_distance(g: &Graph, a: &[usize], b: &[usize], bfs: &mut Bfs) -> Option<u32> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    bfs.run_filtered(g, a, None, |_| true);
    b.iter().filter_map(|&v| bfs.dist(v)).min()
}
