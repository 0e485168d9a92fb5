//! Coarse embeddings into `(ℤᴺ, ℓ∞)`: nested decompositions, dumpling
//! contractions chosen by Moser–Tardos, cocycle accumulation and
//! realization, the injective augmentation, and an exhaustive verifier.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::decomposition::{
    self, build_padded_with, ceil_count, random_carving, verify_padded_at, ClassOrder,
    DecompositionParams, Origin,
};
use crate::graph::{greedy_power_coloring, quotient_graph, Bfs, Graph, Partition};
use crate::lll::{self, Csp, Sampler, SolveStats};
use crate::rng;
use crate::{Error, Result};

/// Stand-in for an infinite depth or padding radius.
const INF: u32 = u32::MAX;

// ---------------------------------------------------------------------------
// Refinement and nesting

/// Checks `finer ⪯ coarser` layer by layer.
pub fn check_refines(
    finer: &[Partition],
    coarser: &[Partition],
    names: (&str, &str),
) -> Result<()> {
    if finer.len() != coarser.len() {
        return Err(Error::InvalidArgument(format!(
            "{} has {} layers, {} has {}",
            names.0,
            finer.len(),
            names.1,
            coarser.len()
        )));
    }
    for (i, (p, q)) in finer.iter().zip(coarser).enumerate() {
        if p.cluster_of.len() != q.cluster_of.len() || !p.refines(q) {
            return Err(Error::NotRefinement {
                finer: names.0.into(),
                coarser: names.1.into(),
                layer: i,
            });
        }
    }
    Ok(())
}

/// Nests a coarse tuple over a fine one: in every layer each coarse cluster
/// `C` shrinks to `C' = {x ∈ C : C_x ⊆ C}` (`C_x` the fine cluster of `x`)
/// and the fine clusters left over are kept as they are.
pub fn nest(g: &Graph, fine: &[Partition], coarse: &[Partition]) -> Result<Vec<Partition>> {
    if fine.len() != coarse.len() {
        return Err(Error::InvalidArgument(format!(
            "fine tuple has {} layers, coarse has {}",
            fine.len(),
            coarse.len()
        )));
    }
    let n = g.vertex_count();
    fine.iter()
        .zip(coarse)
        .map(|(p, q)| {
            if p.cluster_of.len() != n || q.cluster_of.len() != n {
                return Err(Error::InvalidPartition(
                    "partition size does not match the graph".into(),
                ));
            }
            let mut label = vec![0usize; n];
            for (k, c) in p.clusters.iter().enumerate() {
                let target = q.cluster_of[c[0]];
                let inside = c.iter().all(|&v| q.cluster_of[v] == target);
                let l = if inside { target } else { q.len() + k };
                for &v in c {
                    label[v] = l;
                }
            }
            Partition::from_labels(g, &label)
        })
        .collect()
}

/// Padding inheritance after [`nest`]: whenever `B(v, 2r)` lies in a coarse
/// cluster, `B(v, r)` must lie in a nested cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InheritanceReport {
    pub r: u32,
    /// Largest diameter of the fine tuple; the argument needs `r ≥` it.
    pub fine_max_diam: Option<u32>,
    pub radius_hypothesis: bool,
    /// Vertex-layer pairs with `B(v, 2r)` inside a coarse cluster.
    pub checked: usize,
    pub failures: usize,
    /// `(layer, vertex)` of the first failure.
    pub first_failure: Option<(usize, usize)>,
}

impl InheritanceReport {
    pub fn ok(&self) -> bool {
        self.failures == 0
    }
}

fn max_diam_of(layers: &[Partition]) -> Option<u32> {
    layers
        .iter()
        .try_fold(0u32, |acc, p| p.max_diam().map(|d| acc.max(d)))
}

pub fn check_inheritance(
    g: &Graph,
    fine: &[Partition],
    coarse: &[Partition],
    nested: &[Partition],
    r: u32,
) -> InheritanceReport {
    let fine_max_diam = max_diam_of(fine);
    let mut checked = 0;
    let mut failures = 0;
    let mut first_failure = None;
    let two_r = r.saturating_mul(2);
    for (i, (q, p)) in coarse.iter().zip(nested).enumerate() {
        let pad_q = q.pad_radii(g);
        let pad_p = p.pad_radii(g);
        for v in 0..g.vertex_count() {
            if pad_q[v] >= two_r {
                checked += 1;
                if pad_p[v] < r {
                    failures += 1;
                    first_failure.get_or_insert((i, v));
                }
            }
        }
    }
    InheritanceReport {
        r,
        fine_max_diam,
        radius_hypothesis: fine_max_diam.is_some_and(|d| r >= d),
        checked,
        failures,
        first_failure,
    }
}

// ---------------------------------------------------------------------------
// Dumpling contractions

/// For every vertex `u`, `dist_{G/P}([u]_P, ∂([u]_Q / P))`, where the
/// boundary is taken in the quotient graph. `INF` marks Q-clusters with an
/// empty boundary.
fn quotient_depths(g: &Graph, p: &Partition, q: &Partition) -> Result<Vec<u32>> {
    let (qg, _) = quotient_graph(g, p)?;
    let k = p.len();
    let owner: Vec<usize> = p.clusters.iter().map(|c| q.cluster_of[c[0]]).collect();
    let mut depth = vec![INF; k];
    let mut queue = Vec::new();
    for c in 0..k {
        if qg.neighbors(c).iter().any(|&d| owner[d] != owner[c]) {
            depth[c] = 0;
            queue.push(c);
        }
    }
    let mut head = 0;
    while head < queue.len() {
        let c = queue[head];
        head += 1;
        for &d in qg.neighbors(c) {
            if depth[d] == INF && owner[d] == owner[c] {
                depth[d] = depth[c] + 1;
                queue.push(d);
            }
        }
    }
    Ok(p.cluster_of.iter().map(|&c| depth[c]).collect())
}

#[inline]
fn psi_value(depth: u32, t: u32) -> i64 {
    if depth == INF {
        0
    } else {
        depth.saturating_sub(t) as i64
    }
}

/// Per-layer quotient depths of every vertex, after checking `D ⪯ F`.
fn layer_depths(g: &Graph, d: &[Partition], f: &[Partition]) -> Result<Vec<Vec<u32>>> {
    check_refines(d, f, ("D", "F"))?;
    d.iter()
        .zip(f)
        .map(|(p, q)| quotient_depths(g, p, q))
        .collect()
}

/// `ψ_i(u) = max{0, dist_{G/P_i}([u], ∂_i([u]_Q)) − t_i([u]_Q)}`, with
/// `ψ_i ≡ 0` on Q-clusters without boundary. `t[i]` is indexed by the
/// cluster ids of `f[i]`. Returns `ψ[layer][vertex]`.
pub fn dumpling_psi(
    g: &Graph,
    d: &[Partition],
    f: &[Partition],
    t: &[Vec<u32>],
) -> Result<Vec<Vec<i64>>> {
    if t.len() != f.len() || t.iter().zip(f).any(|(t, q)| t.len() != q.len()) {
        return Err(Error::InvalidArgument(
            "t needs one value per Q-cluster".into(),
        ));
    }
    let depths = layer_depths(g, d, f)?;
    Ok(depths
        .iter()
        .zip(f)
        .zip(t)
        .map(|((depth, q), t)| {
            depth
                .iter()
                .enumerate()
                .map(|(u, &dep)| psi_value(dep, t[q.cluster_of[u]]))
                .collect()
        })
        .collect())
}

// ---------------------------------------------------------------------------
// One step: choosing t by Moser–Tardos

/// Numbers of one dumpling step. `r` is the radius the step is stated for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    pub r: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub b: f64,
}

impl StepParams {
    /// `⌊r^{β/α} / (r+1)⌋`, the largest truncation.
    pub fn t_max(&self) -> u32 {
        let x = libm::floor(libm::pow(self.r, self.beta / self.alpha) / (self.r + 1.0));
        if x >= u32::MAX as f64 {
            u32::MAX - 1
        } else if x > 0.0 {
            x as u32
        } else {
            0
        }
    }

    /// Constrained pairs have `lo < dist ≤ hi`.
    pub fn pair_range(&self) -> (f64, f64) {
        (libm::pow(self.r, self.beta), libm::pow(self.r, self.gamma))
    }

    /// `r^{γ(1−ε)}`.
    pub fn threshold(&self) -> f64 {
        libm::pow(self.r, self.gamma * (1.0 - self.epsilon))
    }

    /// Number of coordinates that must reach the threshold.
    pub fn required(&self, m: usize) -> usize {
        ceil_count((1.0 - self.eta) * m as f64 / 2.0)
    }

    /// `r^{β/α}`.
    pub fn padding_radius(&self) -> f64 {
        libm::pow(self.r, self.beta / self.alpha)
    }
}

/// Status of the step's hypotheses, numbered as in the statement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepHypotheses {
    /// (1) `ε < 1 < α < β < γ`, `b, r ≥ 1`.
    pub order: bool,
    /// (2) `r^{γε/2} ≥ 64`.
    pub gamma_epsilon: bool,
    /// (3) `r^{(γ−β)b} ≥ 2`.
    pub growth_gap: bool,
    /// (4) `(1−η)m(β/α − 1 − γ(1−ε/2)) ≥ 6γb`.
    pub lll: bool,
    /// `η ∈ (0, 1/2)`.
    pub eta_range: bool,
    /// (5) `D ⪯ F`.
    pub refines: bool,
    /// (6) every `P_i` is `r`-bounded.
    pub p_bounded: bool,
    /// (7) every `Q_i` is `r^β`-bounded.
    pub q_bounded: bool,
    /// (8) `B(u, r^{β/α})` lies in a `Q_i`-cluster for `(1−η)m` values of `i`.
    pub strong: bool,
    pub p_max_diam: Option<u32>,
    pub q_max_diam: Option<u32>,
    /// Fewest layers in which some `B(u, r^{β/α})` is uncut.
    pub min_padded_layers: usize,
}

impl StepHypotheses {
    pub fn all(&self) -> bool {
        self.order
            && self.gamma_epsilon
            && self.growth_gap
            && self.lll
            && self.eta_range
            && self.refines
            && self.p_bounded
            && self.q_bounded
            && self.strong
    }
}

pub fn step_hypotheses(
    g: &Graph,
    d: &[Partition],
    f: &[Partition],
    s: &StepParams,
) -> StepHypotheses {
    let m = f.len();
    let (r, a, b_, c, e, bb) = (s.r, s.alpha, s.beta, s.gamma, s.epsilon, s.b);
    let refines = check_refines(d, f, ("D", "F")).is_ok();
    let p_max_diam = max_diam_of(d);
    let q_max_diam = max_diam_of(f);
    let pad = libm::floor(s.padding_radius());
    let pad = if pad >= INF as f64 {
        INF - 1
    } else {
        pad as u32
    };
    let radii: Vec<Vec<u32>> = f.iter().map(|q| q.pad_radii(g)).collect();
    let min_padded_layers = (0..g.vertex_count())
        .map(|v| radii.iter().filter(|p| p[v] >= pad).count())
        .min()
        .unwrap_or(m);
    StepHypotheses {
        order: e < 1.0 && 1.0 < a && a < b_ && b_ < c && bb >= 1.0 && r >= 1.0,
        gamma_epsilon: libm::pow(r, c * e / 2.0) >= 64.0,
        growth_gap: libm::pow(r, (c - b_) * bb) >= 2.0,
        lll: (1.0 - s.eta) * m as f64 * (b_ / a - 1.0 - c * (1.0 - e / 2.0)) >= 6.0 * c * bb,
        eta_range: s.eta > 0.0 && s.eta < 0.5,
        refines,
        p_bounded: p_max_diam.is_some_and(|x| x as f64 <= r),
        q_bounded: q_max_diam.is_some_and(|x| x as f64 <= libm::pow(r, b_)),
        strong: min_padded_layers >= ceil_count((1.0 - s.eta) * m as f64),
        p_max_diam,
        q_max_diam,
        min_padded_layers,
    }
}

/// Which pairs become constraints.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairSource {
    /// Every pair in range, by bounded search from every vertex.
    #[default]
    Exhaustive,
    /// Every pair in range whose smaller endpoint is a sampled source; each
    /// vertex is a source with probability `rate`.
    Sample { rate: f64 },
}

/// Whether `u` is a source under `source`.
pub fn sampled(source: PairSource, seed: u64, u: usize) -> bool {
    match source {
        PairSource::Exhaustive => true,
        PairSource::Sample { rate } => {
            let mut r = rng::stream(seed, &[rng::SAMPLE, u as u64]);
            rng::unit_f64(&mut r) < rate
        }
    }
}

fn radius_of(x: f64) -> Option<u32> {
    let f = libm::floor(x);
    (f < u32::MAX as f64).then(|| if f < 0.0 { 0 } else { f as u32 })
}

/// Pairs `u < v` with `lo < dist(u, v) ≤ hi`, in lexicographic order.
pub fn enumerate_pairs(
    g: &Graph,
    lo: f64,
    hi: f64,
    source: PairSource,
    seed: u64,
) -> Vec<(u32, u32)> {
    let n = g.vertex_count();
    let mut out = Vec::new();
    if hi < 1.0 || hi <= lo {
        return out;
    }
    let mut bfs = Bfs::new(n);
    let radius = radius_of(hi);
    let mut row = Vec::new();
    for u in 0..n {
        if !sampled(source, seed, u) {
            continue;
        }
        row.clear();
        bfs.run(g, u, radius);
        for &v in bfs.reached() {
            if v > u && bfs.dist(v).unwrap() as f64 > lo {
                row.push(v as u32);
            }
        }
        row.sort_unstable();
        out.extend(row.iter().map(|&v| (u as u32, v)));
    }
    out
}

/// Variables `t_i(S)`, one per cluster `S` of every `Q_i`, uniform on
/// `0..=t_max`; one constraint per pair.
struct DumplingCsp<'a> {
    m: usize,
    var_offset: Vec<usize>,
    num_vars: usize,
    domain: u32,
    q_of: Vec<&'a [usize]>,
    depth: &'a [Vec<u32>],
    phi: &'a [Vec<i64>],
    pairs: &'a [(u32, u32)],
    pair_scope: Vec<u32>,
    scope_offsets: Vec<usize>,
    scope_vars: Vec<usize>,
    threshold: f64,
    required: usize,
    p_bound: Option<f64>,
}

impl<'a> DumplingCsp<'a> {
    #[allow(clippy::too_many_arguments)]
    fn new(
        f: &'a [Partition],
        depth: &'a [Vec<u32>],
        phi: &'a [Vec<i64>],
        pairs: &'a [(u32, u32)],
        t_max: u32,
        threshold: f64,
        required: usize,
        p_bound: Option<f64>,
    ) -> Self {
        let m = f.len();
        let mut var_offset = Vec::with_capacity(m);
        let mut num_vars = 0;
        for q in f {
            var_offset.push(num_vars);
            num_vars += q.len();
        }
        let q_of: Vec<&[usize]> = f.iter().map(|q| q.cluster_of.as_slice()).collect();
        let n = q_of.first().map_or(0, |q| q.len());
        // Vertices with the same cluster in every layer share a cell.
        let mut cells: BTreeMap<Vec<usize>, u32> = BTreeMap::new();
        let cell: Vec<u32> = (0..n)
            .map(|v| {
                let sig: Vec<usize> = q_of.iter().map(|q| q[v]).collect();
                let next = cells.len() as u32;
                *cells.entry(sig).or_insert(next)
            })
            .collect();
        let mut scope_ids: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        let mut scope_offsets = vec![0];
        let mut scope_vars = Vec::new();
        let mut pair_scope = Vec::with_capacity(pairs.len());
        for &(u, v) in pairs {
            let (a, b) = (cell[u as usize], cell[v as usize]);
            let key = (a.min(b), a.max(b));
            let next = scope_ids.len() as u32;
            let id = *scope_ids.entry(key).or_insert_with(|| {
                let start = scope_vars.len();
                for (i, q) in q_of.iter().enumerate() {
                    scope_vars.push(var_offset[i] + q[u as usize]);
                    scope_vars.push(var_offset[i] + q[v as usize]);
                }
                scope_vars[start..].sort_unstable();
                let mut end = start;
                for k in start..scope_vars.len() {
                    if k == start || scope_vars[k] != scope_vars[end - 1] {
                        scope_vars[end] = scope_vars[k];
                        end += 1;
                    }
                }
                scope_vars.truncate(end);
                scope_offsets.push(end);
                next
            });
            pair_scope.push(id);
        }
        DumplingCsp {
            m,
            var_offset,
            num_vars,
            domain: t_max + 1,
            q_of,
            depth,
            phi,
            pairs,
            pair_scope,
            scope_offsets,
            scope_vars,
            threshold,
            required,
            p_bound,
        }
    }

    fn value(&self, i: usize, u: usize, values: &[u32]) -> i64 {
        let t = values[self.var_offset[i] + self.q_of[i][u]];
        self.phi[i][u] + psi_value(self.depth[i][u], t)
    }
}

impl Csp for DumplingCsp<'_> {
    fn num_variables(&self) -> usize {
        self.num_vars
    }
    fn sampler(&self, _var: usize) -> Sampler {
        Sampler::Uniform(self.domain)
    }
    fn num_constraints(&self) -> usize {
        self.pairs.len()
    }
    fn num_scopes(&self) -> usize {
        self.scope_offsets.len() - 1
    }
    fn scope(&self, s: usize) -> &[usize] {
        &self.scope_vars[self.scope_offsets[s]..self.scope_offsets[s + 1]]
    }
    fn scope_of(&self, c: usize) -> usize {
        self.pair_scope[c] as usize
    }
    fn is_violated(&self, c: usize, values: &[u32]) -> bool {
        let (u, v) = self.pairs[c];
        let mut good = 0;
        for i in 0..self.m {
            let diff = self.value(i, u as usize, values) - self.value(i, v as usize, values);
            if diff.unsigned_abs() as f64 >= self.threshold {
                good += 1;
                if good >= self.required {
                    return false;
                }
            }
        }
        good < self.required
    }
    fn probability_bound(&self) -> Option<f64> {
        self.p_bound
    }
}

/// Whether some choice of `t` gives the pair its required number of
/// separated coordinates. Layers are independent since they share no
/// variables; inside a layer `ψ` ranges over an interval in `t`.
#[allow(clippy::too_many_arguments)]
fn pair_satisfiable(
    f: &[Partition],
    depth: &[Vec<u32>],
    phi: &[Vec<i64>],
    u: usize,
    v: usize,
    t_max: u32,
    threshold: f64,
    required: usize,
) -> bool {
    let range = |d: u32| -> (i64, i64) {
        if d == INF {
            (0, 0)
        } else {
            (psi_value(d, t_max), d as i64)
        }
    };
    let mut good = 0;
    for i in 0..f.len() {
        let c = phi[i][u] - phi[i][v];
        let (du, dv) = (depth[i][u], depth[i][v]);
        let (a, b) = if f[i].cluster_of[u] == f[i].cluster_of[v] {
            // Shared t; the difference is monotone in t.
            (
                c + psi_value(du, 0) - psi_value(dv, 0),
                c + psi_value(du, t_max) - psi_value(dv, t_max),
            )
        } else {
            let (lu, hu) = range(du);
            let (lv, hv) = range(dv);
            (c + lu - hv, c + hu - lv)
        };
        if a.unsigned_abs().max(b.unsigned_abs()) as f64 >= threshold {
            good += 1;
            if good >= required {
                return true;
            }
        }
    }
    good >= required
}

/// Report of one dumpling step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub params: StepParams,
    pub layers: usize,
    pub t_max: u32,
    pub pair_range: (f64, f64),
    pub threshold: f64,
    pub required: usize,
    pub pair_source: PairSource,
    /// Constraints handed to the solver.
    pub pairs: usize,
    /// Enumerated pairs that no choice of `t` separates; left out.
    pub unsatisfiable_pairs: usize,
    pub hypotheses: StepHypotheses,
    pub stats: SolveStats,
    /// Pairs failing the separation count when rechecked from `ψ` alone.
    pub recheck_failures: usize,
    pub note: Option<String>,
}

/// `ψ`, the chosen truncations and the report.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub psi: Vec<Vec<i64>>,
    pub t: Vec<Vec<u32>>,
    pub report: StepReport,
}

/// Counts the pairs that fail the separation requirement for `φ + ψ`.
pub fn count_separation_failures(
    phi: &[Vec<i64>],
    psi: &[Vec<i64>],
    pairs: &[(u32, u32)],
    threshold: f64,
    required: usize,
) -> usize {
    pairs
        .iter()
        .filter(|&&(u, v)| {
            let good = phi
                .iter()
                .zip(psi)
                .filter(|(ph, ps)| {
                    let a = ph[u as usize] + ps[u as usize];
                    let b = ph[v as usize] + ps[v as usize];
                    (a - b).unsigned_abs() as f64 >= threshold
                })
                .count();
            good < required
        })
        .count()
}

/// One application of the dumpling lemma: picks `t` so that every
/// constrained pair is separated by at least `r^{γ(1−ε)}` in at least
/// `(1−η)m/2` coordinates of `φ + ψ`. Non-convergence is reported in
/// `stats`, not as an error.
#[allow(clippy::too_many_arguments)]
pub fn dumpling_step(
    g: &Graph,
    d: &[Partition],
    f: &[Partition],
    phi: &[Vec<i64>],
    params: &StepParams,
    seed: u64,
    budget: Option<u64>,
    pair_source: PairSource,
    keep_going: &mut dyn FnMut(u64) -> bool,
) -> Result<Step> {
    let n = g.vertex_count();
    let m = f.len();
    if phi.len() != m || phi.iter().any(|p| p.len() != n) {
        return Err(Error::InvalidArgument(
            "φ needs one value per layer and vertex".into(),
        ));
    }
    let depth = layer_depths(g, d, f)?;
    let hypotheses = step_hypotheses(g, d, f, params);
    let t_max = params.t_max();
    let (lo, hi) = params.pair_range();
    let threshold = params.threshold();
    let required = params.required(m);
    let mut pairs = enumerate_pairs(g, lo, hi, pair_source, rng::derive(seed, &[rng::SAMPLE]));
    let enumerated = pairs.len();
    pairs.retain(|&(u, v)| {
        pair_satisfiable(
            f, &depth, phi, u as usize, v as usize, t_max, threshold, required,
        )
    });
    let unsatisfiable_pairs = enumerated - pairs.len();
    let p_bound = hypotheses
        .all()
        .then(|| libm::pow(params.r, -3.0 * params.gamma * params.b));
    let (t, stats, note) = if pairs.is_empty() {
        let t: Vec<Vec<u32>> = f.iter().map(|q| vec![0; q.len()]).collect();
        let stats = SolveStats {
            resample_count: 0,
            budget: 0,
            converged: true,
            p_bound,
            d_bound: 0,
            d_exact: true,
            lll_condition_met: p_bound.is_some(),
            interrupted: false,
            frozen: false,
        };
        (t, stats, Some("no constrained pairs; t ≡ 0".into()))
    } else {
        let mut csp = DumplingCsp::new(f, &depth, phi, &pairs, t_max, threshold, required, p_bound);
        let mut r = rng::stream(seed, &[rng::SOLVER]);
        let solve = lll::mt_solve_with(&mut csp, &mut r, budget, keep_going);
        let t = csp
            .var_offset
            .iter()
            .zip(f)
            .map(|(&off, q)| solve.values[off..off + q.len()].to_vec())
            .collect();
        (t, solve.stats, None)
    };
    let psi: Vec<Vec<i64>> = depth
        .iter()
        .zip(f)
        .zip(&t)
        .map(|((dep, q), t)| {
            (0..n)
                .map(|u| psi_value(dep[u], t[q.cluster_of[u]]))
                .collect()
        })
        .collect();
    let recheck_failures = count_separation_failures(phi, &psi, &pairs, threshold, required);
    if stats.converged && recheck_failures > 0 {
        return Err(Error::Invariant(format!(
            "solver converged but {recheck_failures} pairs fail the separation recheck"
        )));
    }
    Ok(Step {
        psi,
        t,
        report: StepReport {
            params: params.clone(),
            layers: m,
            t_max,
            pair_range: (lo, hi),
            threshold,
            required,
            pair_source,
            pairs: pairs.len(),
            unsatisfiable_pairs,
            hypotheses,
            stats,
            recheck_failures,
            note,
        },
    })
}

// ---------------------------------------------------------------------------
// Decompositions at each scale

/// Where the decomposition at one scale comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ScaleSource {
    /// Every layer is the partition into singletons.
    Singletons,
    /// Ball carving with `tGeo(p, M)` radii. With `solve` the carving CSP
    /// is run to make every vertex padded in `⌈(1−η)m⌉` layers; without it
    /// the first sample is kept and its padding is only measured.
    Carving {
        p: f64,
        #[serde(rename = "M")]
        m_cap: u32,
        #[serde(default)]
        solve: bool,
    },
}

/// One level `E_k` of a nested schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleReport {
    pub index: usize,
    pub r: u32,
    /// Radius the source was built for: `r_0`, then `2r_k`.
    pub source_radius: u32,
    pub source: ScaleSource,
    /// Largest diameter of the source tuple and of the nested level.
    pub source_max_diam: Option<u32>,
    pub max_diam: Option<u32>,
    /// Entry `j`: vertices whose `r`-ball is uncut in exactly `j` layers.
    pub padded_histogram: Vec<usize>,
    pub min_padded_layers: usize,
    pub solve: Option<SolveStats>,
    pub refines_previous: Option<bool>,
    pub inheritance: Option<InheritanceReport>,
}

/// Levels `E_0 ⪯ E_1 ⪯ …`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestedSchedule {
    pub levels: Vec<Vec<Partition>>,
    pub reports: Vec<ScaleReport>,
}

#[allow(clippy::too_many_arguments)]
fn build_source(
    g: &Graph,
    source: &ScaleSource,
    m: usize,
    eta: f64,
    radius: u32,
    seed: u64,
    budget: Option<u64>,
    keep_going: &mut dyn FnMut(u64) -> bool,
) -> Result<(Vec<Partition>, Option<SolveStats>)> {
    match *source {
        ScaleSource::Singletons => Ok((vec![Partition::singletons(g); m], None)),
        ScaleSource::Carving {
            p,
            m_cap,
            solve: false,
        } => Ok((
            random_carving(g, m, p, m_cap, ClassOrder::default(), seed)?,
            None,
        )),
        ScaleSource::Carving {
            p,
            m_cap,
            solve: true,
        } => {
            let min_padded = ceil_count((1.0 - eta) * m as f64).max(1);
            let params = DecompositionParams {
                r: radius,
                alpha: if radius >= 2 {
                    libm::log(2.0 * m_cap as f64) / libm::log(radius as f64)
                } else {
                    2.0
                },
                eta: Some(1.0 - min_padded as f64 / m as f64),
                m,
                b: None,
                epsilon: None,
                p: Some(p),
                m_cap: Some(m_cap),
                origin: Origin::Override,
                min_padded,
                class_order: ClassOrder::default(),
            };
            let out = build_padded_with(g, &params, seed, budget, keep_going)?;
            if !out.stats.converged {
                return Err(Error::NotConverged {
                    resamples: out.stats.resample_count,
                });
            }
            Ok((out.decomposition.layers, Some(out.stats)))
        }
    }
}

/// Builds `E_0` from `sources[0]` at radius `r_0`, then
/// `E_{k+1} = nest(E_k, source at 2r_{k+1})` with `r = r_{k+1}`. A source
/// list shorter than `scales` repeats its last entry.
#[allow(clippy::too_many_arguments)]
pub fn nested_schedule(
    g: &Graph,
    m: usize,
    eta: f64,
    scales: &[u32],
    sources: &[ScaleSource],
    seed: u64,
    budget: Option<u64>,
    keep_going: &mut dyn FnMut(u64) -> bool,
) -> Result<NestedSchedule> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be positive".into()));
    }
    if sources.is_empty() && !scales.is_empty() {
        return Err(Error::InvalidArgument("no scale sources given".into()));
    }
    let mut levels: Vec<Vec<Partition>> = Vec::with_capacity(scales.len());
    let mut reports = Vec::with_capacity(scales.len());
    for (k, &r) in scales.iter().enumerate() {
        let source = &sources[k.min(sources.len() - 1)];
        let source_radius = if k == 0 { r } else { r.saturating_mul(2) };
        let (raw, solve) = build_source(
            g,
            source,
            m,
            eta,
            source_radius,
            rng::derive(seed, &[rng::SCALE, k as u64]),
            budget,
            keep_going,
        )?;
        let source_max_diam = max_diam_of(&raw);
        let (level, refines_previous, inheritance) = match levels.last() {
            None => (raw, None, None),
            Some(prev) => {
                let nested = nest(g, prev, &raw)?;
                let refines = check_refines(prev, &nested, ("E_k", "E_k+1")).is_ok();
                let inh = check_inheritance(g, prev, &raw, &nested, r);
                (nested, Some(refines), Some(inh))
            }
        };
        let padded = verify_padded_at(g, &level, r, f64::INFINITY, 0);
        reports.push(ScaleReport {
            index: k,
            r,
            source_radius,
            source: source.clone(),
            source_max_diam,
            max_diam: max_diam_of(&level),
            padded_histogram: padded.padded_histogram,
            min_padded_layers: padded.min_padded_layers,
            solve,
            refines_previous,
            inheritance,
        });
        levels.push(level);
    }
    Ok(NestedSchedule { levels, reports })
}

// ---------------------------------------------------------------------------
// Schedules

/// The theorem's constants for `(b, ε, r_0)`; large quantities as `log₁₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub m: usize,
    /// Number of phases `ℓ = ⌈2 ln β / ln α⌉`.
    pub ell: usize,
    pub log10_x0: f64,
    /// `⌈10⁷ b ln(1/ε) / ε²⌉`.
    pub n_bound: f64,
    /// Distance above which the lower bound is claimed.
    pub log10_threshold: f64,
    /// The phases together cover `(x0^γ, ∞)`.
    pub log10_covered_from: f64,
}

pub fn theory_constants(b: f64, epsilon: f64, r0: f64) -> TheoryConstants {
    let alpha = 1.0 + epsilon / 12.0;
    let beta = 12.0 / epsilon;
    let gamma = alpha * beta;
    let base = libm::log10(1e7 * b / epsilon);
    let log10_r0 = libm::log10(r0.max(1.0));
    let log10_x0 = (200.0 / epsilon * base).max(log10_r0);
    TheoryConstants {
        alpha,
        beta,
        gamma,
        m: ceil_count(1440.0 * b / epsilon),
        ell: ceil_count(2.0 * libm::log(beta) / libm::log(alpha)),
        log10_x0,
        n_bound: libm::ceil(1e7 * b * libm::log(1.0 / epsilon) / (epsilon * epsilon)),
        log10_threshold: (3000.0 / (epsilon * epsilon) * base).max(15.0 / epsilon * log10_r0),
        log10_covered_from: gamma * log10_x0,
    }
}

/// User-chosen schedule for runs on small graphs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeskSchedule {
    pub m: usize,
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Defaults to `αβ`.
    #[serde(default)]
    pub gamma: Option<f64>,
    pub phases: Vec<DeskPhase>,
    #[serde(default)]
    pub pairs: PairSource,
    /// `ε` inside the steps, which sets their thresholds `r^{γ(1−ε)}`;
    /// defaults to the run's `ε`.
    #[serde(default)]
    pub step_epsilon: Option<f64>,
    /// Resample budget of each solver run when the caller gives none.
    #[serde(default)]
    pub step_budget: Option<u64>,
    /// Tries per phase; each retry rebuilds the phase from a fresh seed.
    #[serde(default = "one")]
    pub attempts: u32,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeskPhase {
    /// Base scale; scales default to `⌈x^{βⁿ}⌉`.
    pub x: f64,
    #[serde(default)]
    pub scales: Option<Vec<u32>>,
    /// One source per scale; the last entry repeats.
    pub sources: Vec<ScaleSource>,
    /// Radius of step `n`; defaults to `r_{2n+1}^{α/β}`.
    #[serde(default)]
    pub step_r: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedMode {
    /// The theorem's constants; `r0` is the growth radius of the graph.
    Theory {
        r0: f64,
    },
    Desk(DeskSchedule),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    pub r: f64,
    /// `(r^β, r^γ]`.
    pub interval: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub log10_x: f64,
    /// Scales not exceeding the largest component diameter.
    pub scales: Vec<u32>,
    /// Number of scales dropped for exceeding it (infinite for theory
    /// schedules is reported as the full count considered).
    pub truncated: bool,
    pub sources: Vec<ScaleSource>,
    pub steps: Vec<StepPlan>,
}

/// Resolved schedule: the numbers actually used plus the theory values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSchedule {
    pub mode: String,
    pub b: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub m: usize,
    /// `ε` used for the step thresholds.
    pub step_epsilon: f64,
    pub step_budget: Option<u64>,
    pub attempts: u32,
    pub theory: TheoryConstants,
    pub diameter: u32,
    pub phases: Vec<PhasePlan>,
    /// `ℓ·m` (theory) or phases × m (desk).
    pub dim: usize,
}

impl EmbeddingSchedule {
    /// Distance intervals whose pairs the construction separates.
    pub fn covered(&self) -> Vec<(f64, f64)> {
        self.phases
            .iter()
            .flat_map(|p| p.steps.iter().map(|s| s.interval))
            .collect()
    }
}

/// Largest diameter over the components of `g`.
pub fn max_component_diameter(g: &Graph) -> u32 {
    let mut bfs = Bfs::new(g.vertex_count());
    let mut best = 0;
    for v in 0..g.vertex_count() {
        bfs.run(g, v, None);
        let far = bfs.reached().last().map_or(0, |&w| bfs.dist(w).unwrap());
        best = best.max(far);
    }
    best
}

const MAX_SCALES: usize = 64;

fn plan_steps(
    scales: &[u32],
    alpha: f64,
    beta: f64,
    gamma: f64,
    step_r: Option<&[f64]>,
) -> Vec<StepPlan> {
    (0..scales.len() / 2)
        .map(|n| {
            let r = step_r
                .and_then(|s| s.get(n).copied())
                .unwrap_or_else(|| libm::pow(scales[2 * n + 1] as f64, alpha / beta));
            StepPlan {
                r,
                interval: (libm::pow(r, beta), libm::pow(r, gamma)),
            }
        })
        .collect()
}

/// Resolves `mode` against `g`.
pub fn resolve_schedule(
    g: &Graph,
    b: f64,
    epsilon: f64,
    mode: &EmbedMode,
) -> Result<EmbeddingSchedule> {
    if !(b >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "b = {b} must be at least 1"
        )));
    }
    let diameter = max_component_diameter(g);
    match mode {
        EmbedMode::Theory { r0 } => {
            if !(epsilon > 0.0 && epsilon < 0.5) {
                return Err(Error::InvalidArgument(format!(
                    "ε = {epsilon} must lie in (0, 1/2)"
                )));
            }
            let th = theory_constants(b, epsilon, *r0);
            let log10_diam = libm::log10(diameter.max(1) as f64);
            let phases = (0..th.ell)
                .map(|j| {
                    let log10_x = th.log10_x0 * libm::pow(th.alpha, j as f64);
                    // r_0 = x_j already exceeds the diameter for any graph
                    // this program can hold; the check keeps the rule explicit.
                    let mut scales = Vec::new();
                    let mut lx = log10_x;
                    while lx <= log10_diam && scales.len() < MAX_SCALES {
                        scales.push(libm::ceil(libm::pow(10.0, lx)) as u32);
                        lx *= th.beta;
                    }
                    let steps = plan_steps(&scales, th.alpha, th.beta, th.gamma, None);
                    PhasePlan {
                        log10_x,
                        truncated: true,
                        scales,
                        sources: Vec::new(),
                        steps,
                    }
                })
                .collect();
            Ok(EmbeddingSchedule {
                mode: "theory".into(),
                b,
                epsilon,
                alpha: th.alpha,
                beta: th.beta,
                gamma: th.gamma,
                eta: 0.25,
                m: th.m,
                step_epsilon: epsilon,
                step_budget: None,
                attempts: 1,
                dim: th.ell * th.m,
                theory: th,
                diameter,
                phases,
            })
        }
        EmbedMode::Desk(d) => {
            if !(epsilon > 0.0 && epsilon < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "ε = {epsilon} must lie in (0, 1)"
                )));
            }
            if d.m == 0 {
                return Err(Error::InvalidArgument("m must be positive".into()));
            }
            if !(d.alpha > 0.0 && d.beta > 0.0) {
                return Err(Error::InvalidArgument("α and β must be positive".into()));
            }
            let gamma = d.gamma.unwrap_or(d.alpha * d.beta);
            let mut phases = Vec::with_capacity(d.phases.len());
            for ph in &d.phases {
                if ph.sources.is_empty() {
                    return Err(Error::InvalidArgument(
                        "every phase needs a scale source".into(),
                    ));
                }
                let (scales, truncated) = match &ph.scales {
                    Some(list) => {
                        let kept: Vec<u32> = list
                            .iter()
                            .copied()
                            .take_while(|&r| r <= diameter)
                            .collect();
                        let cut = kept.len() < list.len();
                        (kept, cut)
                    }
                    None => {
                        if !(ph.x > 1.0 && d.beta > 1.0) {
                            return Err(Error::InvalidArgument(
                                "default scales need x > 1 and β > 1".into(),
                            ));
                        }
                        let mut out = Vec::new();
                        let mut x = ph.x;
                        while libm::ceil(x) <= diameter as f64 && out.len() < MAX_SCALES {
                            out.push(libm::ceil(x) as u32);
                            x = libm::pow(x, d.beta);
                        }
                        (out, true)
                    }
                };
                if scales.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidArgument("scales must increase".into()));
                }
                let steps = plan_steps(&scales, d.alpha, d.beta, gamma, ph.step_r.as_deref());
                phases.push(PhasePlan {
                    log10_x: libm::log10(ph.x),
                    scales,
                    truncated,
                    sources: ph.sources.clone(),
                    steps,
                });
            }
            Ok(EmbeddingSchedule {
                mode: "desk".into(),
                b,
                epsilon,
                alpha: d.alpha,
                beta: d.beta,
                gamma,
                eta: d.eta,
                m: d.m,
                step_epsilon: d.step_epsilon.unwrap_or(epsilon),
                step_budget: d.step_budget,
                attempts: d.attempts,
                dim: d.phases.len() * d.m,
                theory: theory_constants(b, epsilon.min(0.499_999), 1.0),
                diameter,
                phases,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Cocycles

/// Integer vectors on the edges of a graph, oriented from the smaller to the
/// larger endpoint. Only the coordinates in `columns` are stored; all others
/// are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeCocycle {
    pub dim: usize,
    pub columns: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    /// `edges.len() × columns.len()`, row-major.
    pub values: Vec<i64>,
}

/// A map `V → ℤᴺ`. Coordinates outside `columns` are zero everywhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEmbedding {
    pub dim: usize,
    pub columns: Vec<usize>,
    /// `n × columns.len()`, row-major.
    pub coords: Vec<i64>,
    /// One vertex per component, in component order.
    pub basepoints: Vec<usize>,
    #[serde(default)]
    pub schedule: Option<EmbeddingSchedule>,
}

impl GridEmbedding {
    /// The all-zero map.
    pub fn zero(g: &Graph, dim: usize) -> Self {
        GridEmbedding {
            dim,
            columns: Vec::new(),
            coords: Vec::new(),
            basepoints: basepoints(g),
            schedule: None,
        }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, v: usize) -> &[i64] {
        let w = self.width();
        &self.coords[v * w..(v + 1) * w]
    }

    /// `‖f(u) − f(v)‖_∞`.
    pub fn linf(&self, u: usize, v: usize) -> u64 {
        self.row(u)
            .iter()
            .zip(self.row(v))
            .map(|(a, b)| (a - b).unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    /// Full coordinate vector of `v`.
    pub fn full_row(&self, v: usize) -> Vec<i64> {
        let mut out = vec![0; self.dim];
        for (k, &c) in self.columns.iter().enumerate() {
            out[c] = self.row(v)[k];
        }
        out
    }
}

/// `δ(x, y) = f(y) − f(x)` inside a component, stored as potentials.
#[derive(Clone, Debug, PartialEq)]
pub struct Cocycle<'a> {
    pub embedding: &'a GridEmbedding,
    pub component: &'a [usize],
}

impl<'a> Cocycle<'a> {
    pub fn new(g: &'a Graph, embedding: &'a GridEmbedding) -> Self {
        Cocycle {
            embedding,
            component: component_index(g),
        }
    }

    /// `None` when `x` and `y` lie in different components.
    pub fn delta(&self, x: usize, y: usize) -> Option<Vec<i64>> {
        (self.component[x] == self.component[y]).then(|| {
            self.embedding
                .row(y)
                .iter()
                .zip(self.embedding.row(x))
                .map(|(a, b)| a - b)
                .collect()
        })
    }
}

fn component_index(g: &Graph) -> &[usize] {
    g.component_index()
}

/// Smallest vertex of each component.
fn basepoints(g: &Graph) -> Vec<usize> {
    g.components()
        .iter()
        .map(|c| *c.iter().min().expect("components are nonempty"))
        .collect()
}

/// Integrates `δ` from each component's basepoint along a depth-first
/// spanning tree, then checks every edge. An edge where the values disagree
/// is reported as inconsistent.
pub fn realize_cocycle(g: &Graph, cocycle: &EdgeCocycle) -> Result<GridEmbedding> {
    let n = g.vertex_count();
    let w = cocycle.columns.len();
    if cocycle.values.len() != cocycle.edges.len() * w {
        return Err(Error::InvalidArgument(
            "cocycle values do not match its edges".into(),
        ));
    }
    let mut index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (e, &(u, v)) in cocycle.edges.iter().enumerate() {
        if u >= v || !g.has_edge(u, v) {
            return Err(Error::InvalidArgument(format!(
                "cocycle edge ({u}, {v}) is not an edge oriented u < v"
            )));
        }
        if index.insert((u, v), e).is_some() {
            return Err(Error::InvalidArgument(format!(
                "edge ({u}, {v}) given twice"
            )));
        }
    }
    if index.len() != g.edge_count() {
        return Err(Error::InvalidArgument(format!(
            "cocycle covers {} of {} edges",
            index.len(),
            g.edge_count()
        )));
    }
    let delta = |u: usize, v: usize| -> (&[i64], bool) {
        let (a, b, flip) = if u < v { (u, v, false) } else { (v, u, true) };
        let e = index[&(a, b)];
        (&cocycle.values[e * w..(e + 1) * w], flip)
    };
    let mut coords = vec![0i64; n * w];
    let mut seen = vec![false; n];
    let bases = basepoints(g);
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for &base in &bases {
        seen[base] = true;
        stack.push((base, 0));
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            let nb = g.neighbors(u);
            if *next == nb.len() {
                stack.pop();
                continue;
            }
            let x = nb[*next];
            *next += 1;
            if seen[x] {
                continue;
            }
            seen[x] = true;
            let (d, flip) = delta(u, x);
            for k in 0..w {
                coords[x * w + k] = coords[u * w + k] + if flip { -d[k] } else { d[k] };
            }
            stack.push((x, 0));
        }
    }
    let mut edges: Vec<(usize, usize)> = g.edges().collect();
    edges.sort_unstable();
    for (u, v) in edges {
        let (d, _) = delta(u, v);
        if (0..w).any(|k| coords[v * w + k] - coords[u * w + k] != d[k]) {
            return Err(Error::InconsistentCocycle(u, v));
        }
    }
    Ok(GridEmbedding {
        dim: cocycle.dim,
        columns: cocycle.columns.clone(),
        coords,
        basepoints: bases,
        schedule: None,
    })
}

// ---------------------------------------------------------------------------
// The coarse embedding

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub index: usize,
    /// Attempts are numbered from 0; a failed attempt is followed by a
    /// retry with fresh decompositions while attempts remain.
    pub attempt: u32,
    pub scales: Vec<ScaleReport>,
    pub steps: Vec<StepReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedReport {
    pub schedule: EmbeddingSchedule,
    pub phases: Vec<PhaseReport>,
    /// Set when a phase or step failed; no embedding is produced then.
    pub failure: Option<String>,
    pub covered_intervals: Vec<(f64, f64)>,
    /// Every step's hypotheses held.
    pub hypotheses_hold: bool,
    /// Largest number of steps changing one coordinate on one edge.
    pub max_steps_per_edge_coordinate: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbedOutcome {
    pub embedding: Option<GridEmbedding>,
    pub report: EmbedReport,
}

/// One attempt at a phase: its nested levels and steps. Returns the step
/// outputs and, if some step or level failed, the reason.
#[allow(clippy::too_many_arguments)]
fn run_phase(
    g: &Graph,
    schedule: &EmbeddingSchedule,
    plan: &PhasePlan,
    j: usize,
    phase_seed: u64,
    budget: Option<u64>,
    pair_source: PairSource,
    keep_going: &mut dyn FnMut(u64) -> bool,
) -> Result<(PhaseReport, Vec<Vec<Vec<i64>>>, Option<String>)> {
    let (n, m) = (g.vertex_count(), schedule.m);
    let budget = budget.or(schedule.step_budget);
    let mut report = PhaseReport {
        index: j,
        attempt: 0,
        scales: Vec::new(),
        steps: Vec::new(),
    };
    let nested = match nested_schedule(
        g,
        m,
        schedule.eta,
        &plan.scales,
        &plan.sources,
        phase_seed,
        budget,
        keep_going,
    ) {
        Ok(s) => s,
        Err(e @ (Error::NotConverged { .. } | Error::Precondition(_))) => {
            return Ok((report, Vec::new(), Some(format!("phase {j}: {e}"))))
        }
        Err(e) => return Err(e),
    };
    report.scales = nested.reports;
    let mut phi = vec![vec![0i64; n]; m];
    let mut psis = Vec::with_capacity(plan.steps.len());
    for (k, sp) in plan.steps.iter().enumerate() {
        let params = StepParams {
            r: sp.r,
            alpha: schedule.alpha,
            beta: schedule.beta,
            gamma: schedule.gamma,
            epsilon: schedule.step_epsilon,
            eta: schedule.eta,
            b: schedule.b,
        };
        let step = dumpling_step(
            g,
            &nested.levels[2 * k],
            &nested.levels[2 * k + 1],
            &phi,
            &params,
            rng::derive(phase_seed, &[rng::SOLVER, k as u64]),
            budget,
            pair_source,
            keep_going,
        )?;
        let converged = step.report.stats.converged;
        report.steps.push(step.report);
        if !converged {
            return Ok((
                report,
                psis,
                Some(format!("phase {j}, step {k}: solver did not converge")),
            ));
        }
        for (ph, ps) in phi.iter_mut().zip(&step.psi) {
            for (a, b) in ph.iter_mut().zip(ps) {
                *a += b;
            }
        }
        psis.push(step.psi);
    }
    Ok((report, psis, None))
}

/// Runs the construction phase by phase: nested levels, one dumpling step
/// per pair of levels, per-edge accumulation of the increments, then
/// realization. Each step may change a coordinate on an edge by at most 1
/// and at most one step may change it at all; both are checked.
#[allow(clippy::too_many_arguments)]
pub fn coarse_embed(
    g: &Graph,
    b: f64,
    epsilon: f64,
    mode: &EmbedMode,
    seed: u64,
    budget: Option<u64>,
    keep_going: &mut dyn FnMut(u64) -> bool,
) -> Result<EmbedOutcome> {
    let schedule = resolve_schedule(g, b, epsilon, mode)?;
    let pair_source = match mode {
        EmbedMode::Desk(d) => d.pairs,
        EmbedMode::Theory { .. } => PairSource::Exhaustive,
    };
    let m = schedule.m;
    let mut edges: Vec<(usize, usize)> = g.edges().collect();
    edges.sort_unstable();
    let active: Vec<usize> = (0..schedule.phases.len())
        .filter(|&j| !schedule.phases[j].steps.is_empty())
        .collect();
    let columns: Vec<usize> = active.iter().flat_map(|&j| j * m..(j + 1) * m).collect();
    let w = columns.len();
    let mut values = vec![0i64; edges.len() * w];
    let mut hits = vec![0u8; edges.len() * w];
    let mut phases = Vec::new();
    let mut failure = None;
    let mut hypotheses_hold = true;
    for (slot, &j) in active.iter().enumerate() {
        let plan = &schedule.phases[j];
        let mut outcome = None;
        for attempt in 0..schedule.attempts.max(1) {
            let mut path = vec![rng::PHASE, j as u64];
            if attempt > 0 {
                path.push(attempt as u64);
            }
            let phase_seed = rng::derive(seed, &path);
            let (mut report, psis, err) = run_phase(
                g,
                &schedule,
                plan,
                j,
                phase_seed,
                budget,
                pair_source,
                keep_going,
            )?;
            report.attempt = attempt;
            hypotheses_hold &= report.steps.iter().all(|s| s.hypotheses.all());
            phases.push(report);
            if err.is_none() {
                outcome = Some(psis);
                break;
            }
            failure = err;
        }
        let Some(psis) = outcome else { break };
        failure = None;
        for psi in &psis {
            for (e, &(u, v)) in edges.iter().enumerate() {
                for i in 0..m {
                    let dlt = psi[i][v] - psi[i][u];
                    if dlt == 0 {
                        continue;
                    }
                    let at = e * w + slot * m + i;
                    if dlt.abs() > 1 || hits[at] > 0 {
                        return Err(Error::Invariant(format!(
                            "edge ({u}, {v}) coordinate {}: increment {dlt} after {} earlier nonzero steps",
                            j * m + i,
                            hits[at]
                        )));
                    }
                    hits[at] += 1;
                    values[at] += dlt;
                }
            }
        }
    }
    let report = EmbedReport {
        covered_intervals: schedule.covered(),
        phases,
        failure,
        hypotheses_hold,
        max_steps_per_edge_coordinate: hits.iter().copied().max().unwrap_or(0) as usize,
        schedule,
    };
    if report.failure.is_some() {
        return Ok(EmbedOutcome {
            embedding: None,
            report,
        });
    }
    let cocycle = EdgeCocycle {
        dim: report.schedule.dim,
        columns,
        edges,
        values,
    };
    let mut embedding = realize_cocycle(g, &cocycle)?;
    embedding.schedule = Some(report.schedule.clone());
    Ok(EmbedOutcome {
        embedding: Some(embedding),
        report,
    })
}

// ---------------------------------------------------------------------------
// Injective augmentation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectiveReport {
    /// Coloring radius `R`.
    pub r: u32,
    pub s: u32,
    pub colors: usize,
    /// `⌈log(colors) / log(s+1)⌉`.
    pub k: usize,
    /// `⌈b·ln R / ln(s+1)⌉`.
    pub k_theory: usize,
    pub components: usize,
    /// Shift between consecutive components along the first stored
    /// coordinate; 0 for a connected graph.
    pub offset_step: i64,
    /// `log₁₀ max{(10⁷b/ε)^{3000/ε²}, r0^{15/ε}}`, when known.
    pub log10_theory_r: Option<f64>,
}

/// Smallest `k` with `(s+1)^k ≥ colors`.
pub fn digits_needed(colors: usize, s: u32) -> usize {
    let base = s as u128 + 1;
    let mut k = 0;
    let mut cap: u128 = 1;
    while cap < colors as u128 {
        cap = cap.saturating_mul(base);
        k += 1;
    }
    k
}

/// Appends base-`(s+1)` digits of a greedy coloring of `G^R` to `base`
/// (through the cocycle `(δg, c(v) − c(u))`), then shifts components apart.
pub fn injective_from(
    g: &Graph,
    base: &GridEmbedding,
    r: u32,
    s: u32,
    b: f64,
) -> Result<(GridEmbedding, InjectiveReport)> {
    if s == 0 {
        return Err(Error::InvalidArgument("s must be positive".into()));
    }
    let r = r.max(1);
    let n = g.vertex_count();
    let color = greedy_power_coloring(g, r);
    let colors = color.iter().copied().max().map_or(0, |c| c + 1);
    let k = digits_needed(colors, s);
    let k_theory = ceil_count(b * libm::log(r as f64) / libm::log(s as f64 + 1.0));
    let digits = |v: usize| -> Vec<i64> {
        let mut c = color[v] as u64;
        (0..k)
            .map(|_| {
                let d = c % (s as u64 + 1);
                c /= s as u64 + 1;
                d as i64
            })
            .collect()
    };
    let wb = base.width();
    let mut columns = base.columns.clone();
    columns.extend(base.dim..base.dim + k);
    let w = columns.len();
    let mut edges: Vec<(usize, usize)> = g.edges().collect();
    edges.sort_unstable();
    let mut values = Vec::with_capacity(edges.len() * w);
    for &(u, v) in &edges {
        for c in 0..wb {
            values.push(base.row(v)[c] - base.row(u)[c]);
        }
        let (du, dv) = (digits(u), digits(v));
        values.extend(dv.iter().zip(&du).map(|(a, b)| a - b));
    }
    let cocycle = EdgeCocycle {
        dim: base.dim + k,
        columns,
        edges,
        values,
    };
    let mut f = realize_cocycle(g, &cocycle)?;
    let comps = g.components();
    let mut offset_step = 0;
    if comps.len() > 1 {
        if f.width() == 0 {
            f.columns.push(f.dim);
            f.dim += 1;
            f.coords = vec![0; n];
        }
        let w = f.width();
        let (lo, hi) = (0..n).fold((i64::MAX, i64::MIN), |(lo, hi), v| {
            let x = f.coords[v * w];
            (lo.min(x), hi.max(x))
        });
        offset_step = hi - lo + max_component_diameter(g) as i64 + 1;
        let idx = g.component_index();
        for v in 0..n {
            f.coords[v * w] += idx[v] as i64 * offset_step;
        }
    }
    f.schedule = base.schedule.clone();
    Ok((
        f,
        InjectiveReport {
            r,
            s,
            colors,
            k,
            k_theory,
            components: comps.len(),
            offset_step,
            log10_theory_r: None,
        },
    ))
}

/// [`coarse_embed`], then the injective augmentation with `R` the empirical
/// threshold of the coarse map.
#[allow(clippy::too_many_arguments)]
pub fn injective_embed(
    g: &Graph,
    b: f64,
    epsilon: f64,
    s: u32,
    mode: &EmbedMode,
    seed: u64,
    budget: Option<u64>,
    keep_going: &mut dyn FnMut(u64) -> bool,
) -> Result<(
    Option<(GridEmbedding, InjectiveReport)>,
    EmbedReport,
    DistortionReport,
)> {
    let out = coarse_embed(g, b, epsilon, mode, seed, budget, keep_going)?;
    let coarse = match out.embedding {
        Some(f) => f,
        None => {
            let zero = GridEmbedding::zero(g, out.report.schedule.dim);
            let rep = verify_embedding(g, &zero, epsilon, 1);
            return Ok((None, out.report, rep));
        }
    };
    let first = verify_embedding(g, &coarse, epsilon, 1);
    let r = first.empirical_threshold;
    let rep = verify_embedding(g, &coarse, epsilon, r);
    let (f, mut inj) = injective_from(g, &coarse, r, s, b)?;
    if let EmbedMode::Theory { r0 } = mode {
        inj.log10_theory_r = Some(theory_constants(b, epsilon, *r0).log10_threshold);
    }
    Ok((Some((f, inj)), out.report, rep))
}

// ---------------------------------------------------------------------------
// Verification

/// Which sources the pair scan visits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Upper bound checked on all pairs: `‖Δf‖_∞ ≤ max{dist, s}`.
    pub s: u32,
    pub sources: PairSource,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            s: 1,
            sources: PairSource::Exhaustive,
            seed: 0,
        }
    }
}

/// Pair statistics accumulated source by source; `merge` combines scans of
/// disjoint source sets.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PairScan {
    pub sources: usize,
    pub pairs: u64,
    /// Smallest `‖Δf‖/dist^{1−ε}` over pairs with `dist ≥ R`, with the pair.
    pub min_ratio: Option<(f64, usize, usize, u32)>,
    /// Largest distance of a pair with `‖Δf‖ < dist^{1−ε}`; 0 if none.
    pub max_failing_dist: u32,
    /// Largest `‖Δf‖ − max{dist, s}`.
    pub max_upper_excess: i64,
    pub diameter: u32,
}

impl PairScan {
    pub fn merge(mut self, o: PairScan) -> PairScan {
        self.sources += o.sources;
        self.pairs += o.pairs;
        self.min_ratio = match (self.min_ratio, o.min_ratio) {
            (Some(a), Some(b)) => Some(if b.0 < a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
                b
            } else {
                a
            }),
            (a, b) => a.or(b),
        };
        self.max_failing_dist = self.max_failing_dist.max(o.max_failing_dist);
        self.max_upper_excess = self.max_upper_excess.max(o.max_upper_excess);
        self.diameter = self.diameter.max(o.diameter);
        self
    }
}

/// `d^{1−ε}`, exact on perfect squares when `ε = 1/2`.
fn lower_target(d: u32, epsilon: f64) -> f64 {
    if epsilon == 0.5 {
        libm::sqrt(d as f64)
    } else {
        libm::pow(d as f64, 1.0 - epsilon)
    }
}

/// Scans all pairs `(u, v)` with `v > u` in the component of `u`.
pub fn scan_source(
    g: &Graph,
    f: &GridEmbedding,
    epsilon: f64,
    r_emp: u32,
    s: u32,
    u: usize,
    bfs: &mut Bfs,
) -> PairScan {
    let mut out = PairScan {
        sources: 1,
        max_upper_excess: i64::MIN,
        ..PairScan::default()
    };
    bfs.run(g, u, None);
    for &v in bfs.reached() {
        let d = bfs.dist(v).unwrap();
        out.diameter = out.diameter.max(d);
        if v <= u {
            continue;
        }
        out.pairs += 1;
        let delta = f.linf(u, v);
        let target = lower_target(d, epsilon);
        if (delta as f64) < target {
            out.max_failing_dist = out.max_failing_dist.max(d);
        }
        out.max_upper_excess = out.max_upper_excess.max(delta as i64 - d.max(s) as i64);
        if d >= r_emp {
            let ratio = delta as f64 / target;
            if out.min_ratio.map_or(true, |(best, ..)| ratio < best) {
                out.min_ratio = Some((ratio, u, v, d));
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub dim: usize,
    pub stored_columns: usize,
    pub max_edge_stretch: u64,
    pub contraction_ok: bool,
    pub r_emp: u32,
    /// `None` when no pair has `dist ≥ R_emp`.
    pub min_far_ratio: Option<f64>,
    pub worst_pair: Option<(usize, usize, u32)>,
    pub lower_bound_ok: bool,
    /// Smallest `R` such that every pair at distance `≥ R` meets the lower
    /// bound (1 when every pair does).
    pub empirical_threshold: u32,
    pub s: u32,
    pub max_upper_excess: i64,
    pub upper_ok: bool,
    pub injective: bool,
    pub collisions: usize,
    pub pairs_checked: u64,
    pub sources_checked: usize,
    pub sources: PairSource,
    pub diameter: u32,
}

/// Assembles the report from a finished scan.
pub fn distortion_report(
    g: &Graph,
    f: &GridEmbedding,
    r_emp: u32,
    opts: &VerifyOptions,
    scan: PairScan,
) -> DistortionReport {
    let max_edge_stretch = g.edges().map(|(u, v)| f.linf(u, v)).max().unwrap_or(0);
    let collisions = count_collisions(f, g.vertex_count());
    let upper = if scan.pairs == 0 {
        0
    } else {
        scan.max_upper_excess
    };
    DistortionReport {
        dim: f.dim,
        stored_columns: f.width(),
        max_edge_stretch,
        contraction_ok: max_edge_stretch <= 1,
        r_emp,
        min_far_ratio: scan.min_ratio.map(|x| x.0),
        worst_pair: scan.min_ratio.map(|x| (x.1, x.2, x.3)),
        lower_bound_ok: scan.min_ratio.map_or(true, |x| x.0 >= 1.0),
        empirical_threshold: scan.max_failing_dist + 1,
        s: opts.s,
        max_upper_excess: upper,
        upper_ok: upper <= 0,
        injective: collisions == 0,
        collisions,
        pairs_checked: scan.pairs,
        sources_checked: scan.sources,
        sources: opts.sources,
        diameter: scan.diameter,
    }
}

/// Vertices whose coordinates equal those of a smaller vertex.
pub fn count_collisions(f: &GridEmbedding, n: usize) -> usize {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| f.row(a).cmp(f.row(b)));
    order
        .windows(2)
        .filter(|p| f.row(p[0]) == f.row(p[1]))
        .count()
}

/// Exhaustive check of contraction on edges, the lower bound
/// `‖Δf‖_∞ ≥ dist^{1−ε}` on pairs with `dist ≥ r_emp`, and injectivity.
pub fn verify_embedding(
    g: &Graph,
    f: &GridEmbedding,
    epsilon: f64,
    r_emp: u32,
) -> DistortionReport {
    verify_embedding_with(g, f, epsilon, r_emp, &VerifyOptions::default())
}

pub fn verify_embedding_with(
    g: &Graph,
    f: &GridEmbedding,
    epsilon: f64,
    r_emp: u32,
    opts: &VerifyOptions,
) -> DistortionReport {
    let n = g.vertex_count();
    let mut bfs = Bfs::new(n);
    let mut scan = PairScan::default();
    for u in 0..n {
        if sampled(opts.sources, opts.seed, u) {
            scan = scan.merge(scan_source(g, f, epsilon, r_emp, opts.s, u, &mut bfs));
        }
    }
    distortion_report(g, f, r_emp, opts, scan)
}

/// Re-export for callers that only need the decomposition verifier.
pub use decomposition::verify_padded as verify_decomposition;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{grid, path};

    fn intervals(g: &Graph, blocks: &[&[usize]]) -> Partition {
        Partition::new(g, blocks.iter().map(|b| b.to_vec()).collect()).unwrap()
    }

    #[test]
    fn psi_on_split_path() {
        let g = path(10);
        let d = vec![Partition::singletons(&g)];
        let f = vec![intervals(&g, &[&[0, 1, 2, 3, 4], &[5, 6, 7, 8, 9]])];
        let psi = dumpling_psi(&g, &d, &f, &[vec![1, 1]]).unwrap();
        assert_eq!(psi[0], vec![3, 2, 1, 0, 0, 0, 0, 1, 2, 3]);
    }

    #[test]
    fn psi_whole_component_is_zero() {
        let g = path(6);
        let d = vec![Partition::singletons(&g)];
        let f = vec![intervals(&g, &[&[0, 1, 2, 3, 4, 5]])];
        assert_eq!(dumpling_psi(&g, &d, &f, &[vec![0]]).unwrap()[0], vec![0; 6]);
    }

    #[test]
    fn psi_full_truncation_is_zero() {
        let g = path(10);
        let d = vec![Partition::singletons(&g)];
        let f = vec![intervals(&g, &[&[0, 1, 2, 3, 4], &[5, 6, 7, 8, 9]])];
        let psi = dumpling_psi(&g, &d, &f, &[vec![4, 0]]).unwrap();
        assert_eq!(psi[0], vec![0, 0, 0, 0, 0, 0, 1, 2, 3, 4]);
    }

    #[test]
    fn psi_in_quotient_is_constant_on_fine_clusters() {
        let g = path(12);
        let d = vec![intervals(
            &g,
            &[&[0, 1], &[2, 3], &[4, 5], &[6, 7], &[8, 9], &[10, 11]],
        )];
        let f = vec![intervals(&g, &[&[0, 1, 2, 3, 4, 5, 6, 7], &[8, 9, 10, 11]])];
        let psi = dumpling_psi(&g, &d, &f, &[vec![0, 0]]).unwrap();
        assert_eq!(psi[0], vec![3, 3, 2, 2, 1, 1, 0, 0, 0, 0, 1, 1]);
    }

    #[test]
    fn psi_rejects_non_refinement() {
        let g = path(4);
        let d = vec![intervals(&g, &[&[0, 1], &[2, 3]])];
        let f = vec![intervals(&g, &[&[0, 1, 2], &[3]])];
        assert!(matches!(
            dumpling_psi(&g, &d, &f, &[vec![0, 0]]),
            Err(Error::NotRefinement { .. })
        ));
    }

    #[test]
    fn nest_shrinks_coarse_cluster() {
        let g = path(4);
        let fine = vec![intervals(&g, &[&[0, 1], &[2, 3]])];
        let coarse = vec![intervals(&g, &[&[0, 1, 2], &[3]])];
        let out = nest(&g, &fine, &coarse).unwrap();
        let mut clusters = out[0].clusters.clone();
        clusters.sort();
        assert_eq!(clusters, vec![vec![0, 1], vec![2, 3]]);
        assert!(fine[0].refines(&out[0]));
    }

    #[test]
    fn nest_of_equal_tuples_is_identity() {
        let g = path(6);
        let p = vec![intervals(&g, &[&[0, 1, 2], &[3, 4, 5]])];
        let out = nest(&g, &p, &p).unwrap();
        assert_eq!(out[0].cluster_of, p[0].cluster_of);
    }

    #[test]
    fn nest_inherits_padding() {
        let g = grid(12);
        let fine = random_carving(&g, 3, 0.5, 2, ClassOrder::default(), 7).unwrap();
        let r = max_diam_of(&fine).unwrap();
        let coarse = random_carving(&g, 3, 0.05, 40, ClassOrder::default(), 8).unwrap();
        let nested = nest(&g, &fine, &coarse).unwrap();
        check_refines(&fine, &nested, ("fine", "nested")).unwrap();
        let rep = check_inheritance(&g, &fine, &coarse, &nested, r);
        assert!(rep.radius_hypothesis);
        assert!(rep.ok(), "{rep:?}");
    }

    fn triangle_cocycle(closing: i64) -> EdgeCocycle {
        EdgeCocycle {
            dim: 1,
            columns: vec![0],
            edges: vec![(0, 1), (1, 2), (0, 2)],
            values: vec![1, 1, closing],
        }
    }

    fn triangle() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn realize_consistent_triangle() {
        let f = realize_cocycle(&triangle(), &triangle_cocycle(2)).unwrap();
        assert_eq!(f.coords, vec![0, 1, 2]);
        assert_eq!(f.basepoints, vec![0]);
    }

    #[test]
    fn realize_inconsistent_triangle_names_closing_edge() {
        assert_eq!(
            realize_cocycle(&triangle(), &triangle_cocycle(3)),
            Err(Error::InconsistentCocycle(0, 2))
        );
    }

    #[test]
    fn realize_zero_cocycle() {
        let g = grid(4);
        let edges: Vec<_> = g.edges().collect();
        let c = EdgeCocycle {
            dim: 2,
            columns: vec![0, 1],
            values: vec![0; edges.len() * 2],
            edges,
        };
        assert!(realize_cocycle(&g, &c)
            .unwrap()
            .coords
            .iter()
            .all(|&x| x == 0));
    }

    #[test]
    fn realize_rejects_missing_edges() {
        let c = EdgeCocycle {
            dim: 1,
            columns: vec![0],
            edges: vec![(0, 1)],
            values: vec![1],
        };
        assert!(matches!(
            realize_cocycle(&triangle(), &c),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn digit_count() {
        assert_eq!(digits_needed(1, 1), 0);
        assert_eq!(digits_needed(2, 1), 1);
        assert_eq!(digits_needed(100, 9), 2);
        assert_eq!(digits_needed(101, 9), 3);
        assert_eq!(digits_needed(9, 2), 2);
        assert_eq!(digits_needed(10, 2), 3);
    }

    #[test]
    fn theory_digit_count_example() {
        let g = path(3);
        let base = GridEmbedding::zero(&g, 0);
        let (_, rep) = injective_from(&g, &base, 100, 9, 2.0).unwrap();
        assert_eq!(rep.k_theory, 4);
    }

    #[test]
    fn verify_constant_map() {
        let g = path(10);
        let f = GridEmbedding::zero(&g, 3);
        let rep = verify_embedding(&g, &f, 0.5, 1);
        assert!(rep.contraction_ok);
        assert_eq!(rep.min_far_ratio, Some(0.0));
        assert!(!rep.injective);
        assert_eq!(rep.collisions, 9);
        assert_eq!(rep.empirical_threshold, 10);
    }

    #[test]
    fn verify_identity_on_path() {
        let g = path(30);
        let f = GridEmbedding {
            dim: 1,
            columns: vec![0],
            coords: (0..30).collect(),
            basepoints: vec![0],
            schedule: None,
        };
        let rep = verify_embedding(&g, &f, 0.5, 1);
        assert_eq!(rep.max_edge_stretch, 1);
        assert!(rep.lower_bound_ok && rep.injective && rep.upper_ok);
        assert_eq!(rep.min_far_ratio, Some(1.0));
        assert_eq!(rep.empirical_threshold, 1);
        assert_eq!(rep.pairs_checked, 30 * 29 / 2);
    }

    #[test]
    fn injective_on_two_components() {
        let g = Graph::from_edges(6, &[(0, 1), (1, 2), (3, 4), (4, 5)]).unwrap();
        let base = GridEmbedding::zero(&g, 0);
        let (f, rep) = injective_from(&g, &base, 2, 1, 1.0).unwrap();
        assert_eq!(rep.components, 2);
        let v = verify_embedding_with(
            &g,
            &f,
            0.5,
            1,
            &VerifyOptions {
                s: 1,
                ..VerifyOptions::default()
            },
        );
        assert!(v.injective && v.upper_ok, "{v:?}");
    }

    #[test]
    fn step_without_pairs() {
        let g = path(5);
        let d = vec![Partition::singletons(&g); 2];
        let f = vec![intervals(&g, &[&[0, 1, 2, 3, 4]]); 2];
        let params = StepParams {
            r: 2.0,
            alpha: 1.1,
            beta: 3.0,
            gamma: 4.0,
            epsilon: 0.5,
            eta: 0.25,
            b: 1.0,
        };
        let phi = vec![vec![0; 5]; 2];
        let step = dumpling_step(
            &g,
            &d,
            &f,
            &phi,
            &params,
            1,
            None,
            PairSource::Exhaustive,
            &mut |_| true,
        )
        .unwrap();
        assert_eq!(step.report.pairs, 0);
        assert!(step.report.note.is_some());
        assert!(step.psi.iter().all(|p| p.iter().all(|&x| x == 0)));
    }

    #[test]
    fn theory_mode_on_one_vertex() {
        let g = Graph::from_edges(1, &[]).unwrap();
        let out = coarse_embed(
            &g,
            1.0,
            0.25,
            &EmbedMode::Theory { r0: 2.0 },
            0,
            None,
            &mut |_| true,
        )
        .unwrap();
        let f = out.embedding.unwrap();
        let th = theory_constants(1.0, 0.25, 2.0);
        assert_eq!(f.dim, th.ell * th.m);
        assert!(f.full_row(0).iter().all(|&x| x == 0));
    }

    #[test]
    fn theory_constants_sane() {
        let th = theory_constants(2.0, 0.25, 1.0);
        assert_eq!(th.m, 11520);
        assert!(th.alpha > 1.0 && th.beta == 48.0);
        assert_eq!(
            th.ell,
            ceil_count(2.0 * libm::log(48.0) / libm::log(1.0 + 0.25 / 12.0))
        );
    }

    #[test]
    fn pair_enumeration_matches_brute_force() {
        let g = grid(6);
        let got = enumerate_pairs(&g, 2.0, 5.0, PairSource::Exhaustive, 0);
        let mut want = Vec::new();
        for u in 0..36usize {
            for v in u + 1..36 {
                let d = (u / 6).abs_diff(v / 6) + (u % 6).abs_diff(v % 6);
                if d > 2 && d <= 5 {
                    want.push((u as u32, v as u32));
                }
            }
        }
        assert_eq!(got, want);
    }

    #[test]
    fn pair_satisfiability_matches_brute_force() {
        let g = path(14);
        let d = vec![Partition::singletons(&g); 2];
        let f = vec![
            intervals(&g, &[&[0, 1, 2, 3, 4, 5], &[6, 7, 8, 9, 10, 11, 12, 13]]),
            intervals(&g, &[&[0, 1, 2], &[3, 4, 5, 6, 7, 8, 9], &[10, 11, 12, 13]]),
        ];
        let depth = layer_depths(&g, &d, &f).unwrap();
        let mut r = rng::stream(3, &[]);
        for _ in 0..40 {
            let phi: Vec<Vec<i64>> = (0..2)
                .map(|_| (0..14).map(|_| rng::below(&mut r, 5) as i64 - 2).collect())
                .collect();
            let t_max = rng::below(&mut r, 3) as u32;
            let threshold = 1.0 + rng::below(&mut r, 4) as f64;
            for required in 1..=2 {
                for u in 0..14 {
                    for v in u + 1..14 {
                        // Every t on the two clusters of each layer.
                        let good_layers = (0..2)
                            .filter(|&i| {
                                let (cu, cv) = (f[i].cluster_of[u], f[i].cluster_of[v]);
                                (0..=t_max).any(|a| {
                                    (0..=t_max).any(|b| {
                                        let tb = if cu == cv { a } else { b };
                                        let x = phi[i][u] + psi_value(depth[i][u], a);
                                        let y = phi[i][v] + psi_value(depth[i][v], tb);
                                        (x - y).unsigned_abs() as f64 >= threshold
                                    })
                                })
                            })
                            .count();
                        assert_eq!(
                            pair_satisfiable(&f, &depth, &phi, u, v, t_max, threshold, required),
                            good_layers >= required,
                            "{u} {v}"
                        );
                    }
                }
            }
        }
    }

    fn small_desk() -> DeskSchedule {
        DeskSchedule {
            m: 4,
            eta: 0.5,
            alpha: 1.6,
            beta: 4.0,
            gamma: Some(7.0),
            phases: vec![DeskPhase {
                x: 1.5,
                scales: Some(vec![1, 8]),
                sources: vec![
                    ScaleSource::Singletons,
                    ScaleSource::Carving {
                        p: 0.05,
                        m_cap: 8,
                        solve: false,
                    },
                ],
                step_r: Some(vec![1.5]),
            }],
            pairs: PairSource::Sample { rate: 0.1 },
            step_epsilon: Some(1.0),
            step_budget: Some(20_000),
            attempts: 4,
        }
    }

    #[test]
    fn coarse_embed_on_small_grid_is_a_contraction() {
        let g = grid(12);
        let out = coarse_embed(
            &g,
            2.0,
            0.5,
            &EmbedMode::Desk(small_desk()),
            5,
            None,
            &mut |_| true,
        )
        .unwrap();
        let f = out
            .embedding
            .unwrap_or_else(|| panic!("{:?}", out.report.failure));
        assert_eq!(f.dim, 4);
        assert!(out.report.max_steps_per_edge_coordinate <= 1);
        let rep = verify_embedding(&g, &f, 0.5, 1);
        assert!(rep.contraction_ok);
        let again = verify_embedding(&g, &f, 0.5, rep.empirical_threshold);
        assert!(again.lower_bound_ok);
    }

    #[test]
    fn injective_embed_on_small_tree() {
        let g = crate::generators::tree(4, 2);
        for s in [1, 3] {
            let (made, _, coarse) = injective_embed(
                &g,
                2.0,
                0.5,
                s,
                &EmbedMode::Desk(small_desk()),
                1,
                None,
                &mut |_| true,
            )
            .unwrap();
            let (f, rep) = made.expect("coarse stage converges");
            assert_eq!(rep.r, coarse.r_emp.max(1));
            assert_eq!(rep.k, digits_needed(rep.colors, s));
            let v = verify_embedding_with(
                &g,
                &f,
                0.5,
                1,
                &VerifyOptions {
                    s,
                    ..VerifyOptions::default()
                },
            );
            assert!(v.injective && v.upper_ok, "{v:?}");
        }
    }
}
