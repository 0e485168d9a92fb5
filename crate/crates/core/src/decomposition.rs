//! Padded decompositions and covers: conversions between them, the carving
//! CSP solved by Moser–Tardos, strengthening, and verifiers that work from
//! the definitions alone.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::carving::{
    self, auto_cap, make_color_classes_with, CarvingInput, ClassStrategy, TGeoParams,
};
use crate::graph::{set_diameter, Bfs, Graph, Partition};
use crate::lll::{self, Csp, Sampler, SolveStats};
use crate::rng;
use crate::{Error, Result};

/// Slack used when turning real products such as `m/η` into layer counts,
/// so that `3 / (1/3)` counts as 9 and not 10.
const COUNT_SLACK: f64 = 1e-9;

/// `⌈x⌉` tolerant of rounding noise just above an integer.
pub fn ceil_count(x: f64) -> usize {
    let c = libm::ceil(x - COUNT_SLACK);
    if c <= 0.0 {
        0
    } else {
        c as usize
    }
}

/// How a decomposition's parameters were chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    /// `m = ⌊b⌋+1`, `α = (1+ε)m/(m−b)`.
    TheoryI,
    /// `m = ⌈6b/ε⌉`, `α = 1+ε`.
    TheoryIIStated,
    /// The same theorem at `ε/2`: `m = ⌈12b/ε⌉`, `α = 1+ε/2`.
    TheoryIIHalved,
    Override,
    /// Expanded from a cover.
    Cover,
    Strengthened,
    Nested,
}

/// Parameter record carried by every decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionParams {
    /// Padding radius.
    pub r: u32,
    /// Clusters are meant to be `r^α`-bounded.
    pub alpha: f64,
    pub eta: Option<f64>,
    pub m: usize,
    pub b: Option<f64>,
    pub epsilon: Option<f64>,
    pub p: Option<f64>,
    #[serde(rename = "M")]
    pub m_cap: Option<u32>,
    pub origin: Origin,
    /// Number of layers in which every ball `B(v, r)` must be uncut.
    pub min_padded: usize,
    #[serde(default)]
    pub class_order: ClassOrder,
}

/// Order in which each layer visits the color classes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassOrder {
    /// Every layer uses the color order.
    Shared,
    /// Each layer visits the classes in its own seeded random order.
    #[default]
    Shuffled,
}

impl DecompositionParams {
    /// `r^α`, snapped to the nearest integer when within rounding error of
    /// it (the default desk `α` solves `r^α = 2M` in floating point).
    pub fn diam_bound(&self) -> f64 {
        let x = libm::pow(self.r as f64, self.alpha);
        let k = libm::round(x);
        if libm::fabs(x - k) <= 1e-9 * x.max(1.0) {
            k
        } else {
            x
        }
    }
}

/// Desk-scale carving parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverrideParams {
    pub m: usize,
    pub p: f64,
    #[serde(rename = "M")]
    pub m_cap: u32,
    pub r: u32,
    /// Defaults to the exponent with `r^α = 2M` (or 2 when `r ≤ 1`).
    pub alpha: Option<f64>,
    /// Defaults to 1 (a plain padded decomposition).
    pub min_padded: Option<usize>,
    #[serde(default)]
    pub class_order: ClassOrder,
}

/// Which rule fixes `(m, α, p, M)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuildMode {
    TheoryI {
        epsilon: f64,
    },
    /// `halved` selects the `ε/2` layer path used by the strong theorem.
    TheoryII {
        epsilon: f64,
        halved: bool,
    },
    Override(OverrideParams),
}

/// Status of a theorem's radius threshold. Never enforced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCheck {
    pub required_r: f64,
    /// True when the threshold is strict (`r > required_r`).
    pub strict: bool,
    pub holds: bool,
    /// `2M ≤ r^α`, which makes carved clusters `r^α`-bounded.
    pub carving_within_bound: bool,
}

/// Resolves a build mode to concrete parameters.
pub fn resolve_params(
    b: f64,
    r: u32,
    mode: &BuildMode,
) -> Result<(DecompositionParams, Option<ThresholdCheck>)> {
    if !(b >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "growth exponent b = {b} must be ≥ 1"
        )));
    }
    match mode {
        BuildMode::Override(o) => {
            if o.m == 0 {
                return Err(Error::InvalidArgument("m must be positive".into()));
            }
            TGeoParams::new(o.p, o.m_cap)?;
            let min_padded = o.min_padded.unwrap_or(1);
            if min_padded == 0 || min_padded > o.m {
                return Err(Error::InvalidArgument(format!(
                    "min_padded = {min_padded} must lie in 1..={}",
                    o.m
                )));
            }
            let alpha = match o.alpha {
                Some(a) => a,
                None if o.r >= 2 && o.m_cap >= 1 => {
                    libm::log((2 * o.m_cap) as f64) / libm::log(o.r as f64)
                }
                None => 2.0,
            };
            let eta = (min_padded > 1).then(|| 1.0 - min_padded as f64 / o.m as f64);
            Ok((
                DecompositionParams {
                    r: o.r,
                    alpha,
                    eta,
                    m: o.m,
                    b: Some(b),
                    epsilon: None,
                    p: Some(o.p),
                    m_cap: Some(o.m_cap),
                    origin: Origin::Override,
                    min_padded,
                    class_order: o.class_order,
                },
                None,
            ))
        }
        BuildMode::TheoryI { epsilon } => {
            let eps = *epsilon;
            if !(eps > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "ε = {eps} must be positive"
                )));
            }
            let m = libm::floor(b) as usize + 1;
            let alpha = (1.0 + eps) * m as f64 / (m as f64 - b);
            let required = [
                9.0,
                libm::pow(1600.0 * libm::pow(b, 4.0), 1.0 / alpha),
                libm::pow(8000.0 * alpha * b / eps, 2.0 / eps),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            theory(b, Some(eps), r, m, alpha, Origin::TheoryI, required, true)
        }
        BuildMode::TheoryII { epsilon, halved } => {
            let eps = *epsilon;
            if !(eps > 0.0 && eps <= 0.5) {
                return Err(Error::InvalidArgument(format!(
                    "ε = {eps} must lie in (0, 1/2]"
                )));
            }
            let (e, origin) = if *halved {
                (eps / 2.0, Origin::TheoryIIHalved)
            } else {
                (eps, Origin::TheoryIIStated)
            };
            let m = ceil_count(6.0 * b / e);
            let required = libm::pow(12000.0 * b / e, 4.0 / e);
            theory(b, Some(eps), r, m, 1.0 + e, origin, required, false)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn theory(
    b: f64,
    epsilon: Option<f64>,
    r: u32,
    m: usize,
    alpha: f64,
    origin: Origin,
    required_r: f64,
    strict: bool,
) -> Result<(DecompositionParams, Option<ThresholdCheck>)> {
    let rf = r as f64;
    let bound = libm::pow(rf, alpha);
    let p = 8.0 * alpha * b * libm::log(rf) / bound;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Precondition(format!(
            "carving probability p = 8αb·ln r / r^α = {p} is not in (0, 1) at r = {r}"
        )));
    }
    let cap = 4.0 * b * libm::log(1.0 / p) / p;
    if cap >= u32::MAX as f64 / 2.0 {
        return Err(Error::Precondition(format!("M = {cap:.3e} is too large")));
    }
    let m_cap = libm::floor(cap) as u32;
    let holds = if strict {
        rf > required_r
    } else {
        rf >= required_r
    };
    Ok((
        DecompositionParams {
            r,
            alpha,
            eta: None,
            m,
            b: Some(b),
            epsilon,
            p: Some(p),
            m_cap: Some(m_cap),
            origin,
            min_padded: 1,
            class_order: ClassOrder::default(),
        },
        Some(ThresholdCheck {
            required_r,
            strict,
            holds,
            carving_within_bound: (2 * m_cap) as f64 <= bound,
        }),
    ))
}

/// An `m`-tuple of partitions with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub params: DecompositionParams,
    pub layers: Vec<Partition>,
}

/// `m` families of vertex sets meant to be `r_disjoint`-disjoint and
/// `d_bounded`-bounded, jointly covering the vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cover {
    pub layers: Vec<Vec<Vec<usize>>>,
    pub r_disjoint: u32,
    #[serde(rename = "D_bounded")]
    pub d_bounded: f64,
}

// ---------------------------------------------------------------------------
// Conversions

/// Expands every set to `B(C, r)` and fills the rest of each layer with
/// singletons. Sets of one family must be more than `2r` apart.
fn expand_families(g: &Graph, families: &[Vec<Vec<usize>>], r: u32) -> Result<Vec<Partition>> {
    let n = g.vertex_count();
    let mut bfs = Bfs::new(n);
    families
        .iter()
        .enumerate()
        .map(|(j, family)| {
            let mut label = vec![usize::MAX; n];
            for (k, set) in family.iter().enumerate() {
                if set.is_empty() {
                    continue;
                }
                for &x in bfs.run_filtered(g, set, Some(r), |_| true) {
                    if label[x] != usize::MAX && label[x] != k {
                        return Err(Error::Precondition(format!(
                            "sets {} and {k} of layer {j} are within distance {}",
                            label[x],
                            2 * r
                        )));
                    }
                    label[x] = k;
                }
            }
            let mut next = family.len();
            for l in label.iter_mut() {
                if *l == usize::MAX {
                    *l = next;
                    next += 1;
                }
            }
            Partition::from_labels(g, &label)
        })
        .collect()
}

/// From a `(2r, D)`-cover to an `(r, α)`-padded decomposition:
/// `C ↦ B(C, r)`, leftover vertices become singletons.
pub fn padded_from_cover(g: &Graph, cover: &Cover, r: u32, alpha: f64) -> Result<Decomposition> {
    let target = libm::pow(r as f64, alpha);
    if target < cover.d_bounded + 2.0 * r as f64 {
        return Err(Error::Precondition(format!(
            "r^α = {target} < D + 2r = {}",
            cover.d_bounded + 2.0 * r as f64
        )));
    }
    if cover.r_disjoint < 2 * r {
        return Err(Error::Precondition(format!(
            "cover is only {}-disjoint, need {}",
            cover.r_disjoint,
            2 * r
        )));
    }
    let layers = expand_families(g, &cover.layers, r)?;
    Ok(Decomposition {
        params: DecompositionParams {
            r,
            alpha,
            eta: None,
            m: layers.len(),
            b: None,
            epsilon: None,
            p: None,
            m_cap: None,
            origin: Origin::Cover,
            min_padded: 1,
            class_order: ClassOrder::default(),
        },
        layers,
    })
}

/// Removes `B(x, ⌊r/2⌋)` around every boundary vertex `x` of each cluster.
fn shrink_layers(g: &Graph, layers: &[Partition], r: u32) -> Vec<Vec<Vec<usize>>> {
    let n = g.vertex_count();
    let mut bfs = Bfs::new(n);
    layers
        .iter()
        .map(|p| {
            let mut removed = vec![false; n];
            for c in 0..p.len() {
                let boundary = p.boundary(g, c);
                if boundary.is_empty() {
                    continue;
                }
                let label = &p.cluster_of;
                for &x in bfs.run_filtered(g, &boundary, Some(r / 2), |_| true) {
                    if label[x] == c {
                        removed[x] = true;
                    }
                }
            }
            p.clusters
                .iter()
                .map(|c| {
                    c.iter()
                        .copied()
                        .filter(|&v| !removed[v])
                        .collect::<Vec<_>>()
                })
                .filter(|c: &Vec<usize>| !c.is_empty())
                .collect()
        })
        .collect()
}

/// From an `(r/2+1, α)`-padded decomposition to an `(r, D)`-cover with
/// `D = (r/2+1)^α`: `C ↦ C \ ⋃_{x ∈ ∂C} B(x, r/2)`. Fails when some vertex
/// ends up uncovered, which happens when the input was not padded enough.
pub fn cover_from_padded(g: &Graph, d: &Decomposition, r: u32) -> Result<Cover> {
    let layers = shrink_layers(g, &d.layers, r);
    let mut covered = vec![false; g.vertex_count()];
    for &v in layers.iter().flatten().flatten() {
        covered[v] = true;
    }
    let missing = covered.iter().filter(|&&c| !c).count();
    if missing > 0 {
        let first = covered.iter().position(|&c| !c).unwrap();
        return Err(Error::Precondition(format!(
            "{missing} vertices are not covered after shrinking (first: {first}); \
             the decomposition is not ({}+1)-padded",
            r / 2
        )));
    }
    Ok(Cover {
        layers,
        r_disjoint: r,
        d_bounded: libm::pow((r / 2 + 1) as f64, d.params.alpha),
    })
}

// ---------------------------------------------------------------------------
// Verification

/// Independent check of a cover against its definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverReport {
    pub disjoint_ok: bool,
    /// Smallest distance between two sets of one layer (`None` = ∞).
    pub min_gap: Option<u32>,
    pub bounded_ok: bool,
    pub max_diam: Option<u32>,
    pub covers_all: bool,
    pub uncovered: usize,
}

impl CoverReport {
    pub fn ok(&self) -> bool {
        self.disjoint_ok && self.bounded_ok && self.covers_all
    }
}

pub fn verify_cover(g: &Graph, cover: &Cover) -> CoverReport {
    let n = g.vertex_count();
    let mut bfs = Bfs::new(n);
    let mut covered = vec![false; n];
    let mut min_gap: Option<u32> = None;
    let mut max_diam = Some(0u32);
    let mut bounded_ok = true;
    for family in &cover.layers {
        let mut label = vec![usize::MAX; n];
        for (k, set) in family.iter().enumerate() {
            for &v in set {
                covered[v] = true;
                label[v] = k;
            }
        }
        for (k, set) in family.iter().enumerate() {
            let d = set_diameter(g, set, &mut bfs);
            bounded_ok &= d.is_some_and(|d| d as f64 <= cover.d_bounded);
            max_diam = match (max_diam, d) {
                (Some(a), Some(b)) => Some(a.max(b)),
                _ => None,
            };
            if set.is_empty() {
                continue;
            }
            // Nearest vertex of another set of the same family.
            bfs.run_filtered(g, set, None, |_| true);
            for &x in bfs.reached() {
                if label[x] != usize::MAX && label[x] != k {
                    let dx = bfs.dist(x).unwrap();
                    min_gap = Some(min_gap.map_or(dx, |m| m.min(dx)));
                    break;
                }
            }
        }
    }
    let uncovered = covered.iter().filter(|&&c| !c).count();
    CoverReport {
        disjoint_ok: min_gap.map_or(true, |gap| gap > cover.r_disjoint),
        min_gap,
        bounded_ok,
        max_diam,
        covers_all: uncovered == 0,
        uncovered,
    }
}

/// Independent check of a decomposition against its definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaddedReport {
    pub r: u32,
    pub layers: usize,
    /// Every layer is a genuine partition of the vertex set.
    pub partitions_ok: bool,
    /// Largest recomputed cluster diameter per layer (`None` = ∞).
    pub layer_max_diam: Vec<Option<u32>>,
    pub diam_bound: f64,
    pub bounded_ok: bool,
    /// Entry `j` counts the vertices whose `r`-ball is uncut in exactly `j`
    /// layers.
    pub padded_histogram: Vec<usize>,
    pub min_padded_layers: usize,
    /// `1 − min_padded_layers / m`, the smallest `η` for which the
    /// decomposition is `(1−η)`-strong.
    pub strong_eta_achieved: f64,
    pub required_padded: usize,
    pub padded_ok: bool,
}

impl PaddedReport {
    pub fn ok(&self) -> bool {
        self.partitions_ok && self.bounded_ok && self.padded_ok
    }
}

/// Labels recomputed from cluster lists, or `None` if they do not form a
/// partition.
fn labels_of(n: usize, p: &Partition) -> Option<Vec<usize>> {
    let mut label = vec![usize::MAX; n];
    for (k, c) in p.clusters.iter().enumerate() {
        if c.is_empty() {
            return None;
        }
        for &v in c {
            if v >= n || label[v] != usize::MAX {
                return None;
            }
            label[v] = k;
        }
    }
    (label.iter().all(|&l| l != usize::MAX) && label == p.cluster_of).then_some(label)
}

/// Recomputes diameters and padding counts from the cluster lists. Nothing
/// recorded at construction time is trusted.
pub fn verify_padded(g: &Graph, d: &Decomposition) -> PaddedReport {
    verify_padded_at(
        g,
        &d.layers,
        d.params.r,
        d.params.diam_bound(),
        d.params.min_padded,
    )
}

/// [`verify_padded`] with explicit radius, diameter bound and required
/// number of padded layers.
pub fn verify_padded_at(
    g: &Graph,
    layers: &[Partition],
    r: u32,
    diam_bound: f64,
    required_padded: usize,
) -> PaddedReport {
    let n = g.vertex_count();
    let m = layers.len();
    let mut bfs = Bfs::new(n);
    let labels: Vec<Option<Vec<usize>>> = layers.iter().map(|p| labels_of(n, p)).collect();
    let partitions_ok = labels.iter().all(Option::is_some);
    let layer_max_diam: Vec<Option<u32>> = layers
        .iter()
        .map(|p| {
            p.clusters.iter().try_fold(0u32, |acc, c| {
                set_diameter(g, c, &mut bfs).map(|d| acc.max(d))
            })
        })
        .collect();
    let bounded_ok = layer_max_diam
        .iter()
        .all(|d| d.is_some_and(|d| d as f64 <= diam_bound));
    let mut hist = vec![0usize; m + 1];
    let mut min_padded = if n == 0 { m } else { usize::MAX };
    if partitions_ok {
        for v in 0..n {
            bfs.run(g, v, Some(r));
            let count = labels
                .iter()
                .flatten()
                .filter(|lab| bfs.reached().iter().all(|&u| lab[u] == lab[v]))
                .count();
            hist[count] += 1;
            min_padded = min_padded.min(count);
        }
    } else {
        min_padded = 0;
    }
    let strong = if m == 0 {
        1.0
    } else {
        1.0 - min_padded as f64 / m as f64
    };
    PaddedReport {
        r,
        layers: m,
        partitions_ok,
        layer_max_diam,
        diam_bound,
        bounded_ok,
        padded_histogram: hist,
        min_padded_layers: min_padded,
        strong_eta_achieved: strong,
        required_padded,
        padded_ok: partitions_ok && min_padded >= required_padded,
    }
}

// ---------------------------------------------------------------------------
// The carving CSP

/// Variables `t_i(v)` for every layer `i` and vertex `v` (index `i·n + v`);
/// one constraint per vertex `u` over `B(u, M + r)` in every layer, violated
/// when `B(u, r)` is cut in more than `m − min_padded` layers.
pub struct PaddingCsp<'g> {
    g: &'g Graph,
    n: usize,
    m: usize,
    r: u32,
    min_padded: usize,
    sampler: Sampler,
    /// Carving input of every layer; `t` is refreshed from the assignment.
    inputs: Vec<CarvingInput>,
    /// Position of each vertex in each layer's carving order.
    rank: Vec<Vec<u32>>,
    scope_offsets: Vec<usize>,
    scope_vars: Vec<usize>,
    inner_offsets: Vec<usize>,
    inner: Vec<usize>,
    owner: Vec<Vec<usize>>,
    p_bound: Option<f64>,
    bfs: Bfs,
    sweep: LocalSweep,
}

impl<'g> PaddingCsp<'g> {
    /// Sets up the system; `classes[i]` are the `2M`-separated color
    /// classes of layer `i`, in carving order.
    pub fn new(
        g: &'g Graph,
        params: &DecompositionParams,
        classes: Vec<Vec<Vec<usize>>>,
    ) -> Result<Self> {
        let (Some(p), Some(m_cap)) = (params.p, params.m_cap) else {
            return Err(Error::InvalidArgument(
                "carving parameters p and M are required".into(),
            ));
        };
        let tgeo = TGeoParams::new(p, m_cap)?;
        let n = g.vertex_count();
        let m = params.m;
        let r = params.r;
        if classes.len() != m {
            return Err(Error::InvalidArgument(format!(
                "{} class orders for {m} layers",
                classes.len()
            )));
        }
        let rank = classes
            .iter()
            .map(|cl| {
                let mut rank = vec![0u32; n];
                for (i, &v) in cl.iter().flatten().enumerate() {
                    rank[v] = i as u32;
                }
                rank
            })
            .collect();
        let mut bfs = Bfs::new(n);
        let mut scope_offsets = vec![0];
        let mut scope_vars = Vec::new();
        let mut inner_offsets = vec![0];
        let mut inner = Vec::new();
        let mut ball = Vec::new();
        for u in 0..n {
            ball.clear();
            ball.extend_from_slice(bfs.run(g, u, Some(m_cap + r)));
            ball.sort_unstable();
            for layer in 0..m {
                scope_vars.extend(ball.iter().map(|&v| layer * n + v));
            }
            scope_offsets.push(scope_vars.len());
            inner.extend(ball.iter().copied().filter(|&v| bfs.dist(v).unwrap() <= r));
            inner_offsets.push(inner.len());
        }
        let p_bound = params
            .b
            .filter(|&b| p <= 1.0 / (5.0 * b) && r >= 9 && m_cap == auto_cap(b, p))
            .map(|_| cut_probability_bound(r, p, m, params.min_padded));
        Ok(PaddingCsp {
            g,
            n,
            m,
            r,
            min_padded: params.min_padded,
            sampler: Sampler::TGeo(tgeo),
            inputs: classes
                .into_iter()
                .map(|classes| CarvingInput {
                    m_cap,
                    classes,
                    t: vec![0; n],
                })
                .collect(),
            rank,
            scope_offsets,
            scope_vars,
            inner_offsets,
            inner,
            owner: vec![vec![usize::MAX; n]; m],
            p_bound,
            bfs,
            sweep: LocalSweep::new(n),
        })
    }

    /// Current owners (carving centers) of every layer.
    pub fn owners(&self) -> &[Vec<usize>] {
        &self.owner
    }

    fn uncut_layers(&self, u: usize) -> usize {
        let ball = &self.inner[self.inner_offsets[u]..self.inner_offsets[u + 1]];
        self.owner
            .iter()
            .filter(|own| ball.iter().all(|&w| own[w] == own[u]))
            .count()
    }
}

/// Union bound on `P[A_u]` given a per-layer cut probability of at most
/// `20rp`: some `m − k + 1` layers must all be cut.
fn cut_probability_bound(r: u32, p: f64, m: usize, k: usize) -> f64 {
    let q = (20.0 * r as f64 * p).min(1.0);
    let need = m + 1 - k;
    let mut binom = 1.0;
    for i in 0..need {
        binom = binom * (m - i) as f64 / (i + 1) as f64;
    }
    (binom * libm::pow(q, need as f64)).min(1.0)
}

impl Csp for PaddingCsp<'_> {
    fn num_variables(&self) -> usize {
        self.n * self.m
    }
    fn sampler(&self, _var: usize) -> Sampler {
        self.sampler
    }
    fn num_constraints(&self) -> usize {
        self.n
    }
    fn num_scopes(&self) -> usize {
        self.n
    }
    fn scope(&self, s: usize) -> &[usize] {
        &self.scope_vars[self.scope_offsets[s]..self.scope_offsets[s + 1]]
    }
    fn scope_of(&self, c: usize) -> usize {
        c
    }
    fn is_violated(&self, c: usize, _values: &[u32]) -> bool {
        self.uncut_layers(c) < self.min_padded
    }

    fn reset(&mut self, values: &[u32]) {
        for layer in 0..self.m {
            let input = &mut self.inputs[layer];
            input
                .t
                .copy_from_slice(&values[layer * self.n..(layer + 1) * self.n]);
            self.owner[layer] = carving::carve_owners(self.g, input)
                .expect("carving input is valid by construction");
        }
    }

    fn refresh(&mut self, values: &[u32], changed: &[usize]) {
        let m_cap = self.inputs[0].m_cap;
        let mut by_layer: Vec<Vec<usize>> = vec![Vec::new(); self.m];
        for &var in changed {
            by_layer[var / self.n].push(var % self.n);
        }
        for (layer, sources) in by_layer.iter().enumerate() {
            if sources.is_empty() {
                continue;
            }
            let t = &values[layer * self.n..(layer + 1) * self.n];
            // Owners can only change within distance M of a changed center;
            // the centers that can reach that region lie within 2M.
            let mut candidates: Vec<usize> = self
                .bfs
                .run_filtered(self.g, sources, Some(2 * m_cap), |_| true)
                .to_vec();
            let region: Vec<usize> = candidates
                .iter()
                .copied()
                .filter(|&w| self.bfs.dist(w).unwrap() <= m_cap)
                .collect();
            let rank = &self.rank[layer];
            candidates.sort_unstable_by_key(|&x| rank[x]);
            let owner = &mut self.owner[layer];
            self.sweep.recarve(self.g, &region, &candidates, t, owner);
        }
    }

    fn probability_bound(&self) -> Option<f64> {
        self.p_bound
    }

    fn dependency_degrees(&self) -> Option<Vec<usize>> {
        // A_u and A_v share a variable iff dist(u, v) ≤ 2(M + r).
        let mut bfs = Bfs::new(self.n);
        let radius = 2 * (self.inputs[0].m_cap + self.r);
        Some(
            (0..self.n)
                .map(|u| bfs.run(self.g, u, Some(radius)).len() - 1)
                .collect(),
        )
    }
}

/// Re-runs the carving sweep for the vertices of a region only.
struct LocalSweep {
    in_region: Vec<u32>,
    seen: Vec<u32>,
    reach: Vec<i64>,
    reach_epoch: Vec<u32>,
    epoch: u32,
    ball_epoch: u32,
    queue: Vec<(usize, u32)>,
}

impl LocalSweep {
    fn new(n: usize) -> Self {
        LocalSweep {
            in_region: vec![0; n],
            seen: vec![0; n],
            reach: vec![-1; n],
            reach_epoch: vec![0; n],
            epoch: 0,
            ball_epoch: 0,
            queue: Vec::new(),
        }
    }

    /// `candidates` must be in carving order and contain every center
    /// within distance `M` of the region.
    fn recarve(
        &mut self,
        g: &Graph,
        region: &[usize],
        candidates: &[usize],
        t: &[u32],
        owner: &mut [usize],
    ) {
        self.epoch += 1;
        let epoch = self.epoch;
        for &w in region {
            self.in_region[w] = epoch;
            owner[w] = usize::MAX;
        }
        for &x in candidates {
            self.ball_epoch = self.ball_epoch.wrapping_add(1);
            if self.ball_epoch == 0 {
                self.seen.iter_mut().for_each(|s| *s = 0);
                self.ball_epoch = 1;
            }
            let be = self.ball_epoch;
            self.queue.clear();
            self.queue.push((x, 0));
            self.seen[x] = be;
            let mut head = 0;
            while head < self.queue.len() {
                let (w, d) = self.queue[head];
                head += 1;
                let left = t[x] as i64 - d as i64;
                if self.reach_epoch[w] == epoch && left <= self.reach[w] {
                    continue;
                }
                self.reach_epoch[w] = epoch;
                self.reach[w] = left;
                if self.in_region[w] == epoch && owner[w] == usize::MAX {
                    owner[w] = x;
                }
                if left == 0 {
                    continue;
                }
                for &y in g.neighbors(w) {
                    if self.seen[y] != be {
                        self.seen[y] = be;
                        self.queue.push((y, d + 1));
                    }
                }
            }
        }
        debug_assert!(region.iter().all(|&w| owner[w] != usize::MAX));
    }
}

/// Result of [`build_padded`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaddedBuild {
    /// Carved from the final assignment, also when the solver gave up.
    pub decomposition: Decomposition,
    pub stats: SolveStats,
    pub report: PaddedReport,
    pub thresholds: Option<ThresholdCheck>,
    pub class_strategy: ClassStrategy,
    pub color_classes: usize,
}

impl PaddedBuild {
    /// The decomposition, or `NotConverged` when the solver ran out of budget.
    pub fn into_result(self) -> Result<Decomposition> {
        if self.stats.converged {
            Ok(self.decomposition)
        } else {
            Err(Error::NotConverged {
                resamples: self.stats.resample_count,
            })
        }
    }
}

/// Resolves `mode` and builds.
pub fn build_padded_mode(
    g: &Graph,
    b: f64,
    r: u32,
    mode: &BuildMode,
    seed: u64,
    budget: Option<u64>,
) -> Result<PaddedBuild> {
    let (params, thresholds) = resolve_params(b, r, mode)?;
    let mut out = build_padded(g, &params, seed, budget)?;
    out.thresholds = thresholds;
    Ok(out)
}

/// Solves the carving CSP with Moser–Tardos, carves every layer from the
/// solution and verifies the result independently.
pub fn build_padded(
    g: &Graph,
    params: &DecompositionParams,
    seed: u64,
    budget: Option<u64>,
) -> Result<PaddedBuild> {
    build_padded_with(g, params, seed, budget, &mut |_| true)
}

/// [`build_padded`] with a solver hook, see [`lll::mt_solve_with`].
pub fn build_padded_with(
    g: &Graph,
    params: &DecompositionParams,
    seed: u64,
    budget: Option<u64>,
    keep_going: &mut dyn FnMut(u64) -> bool,
) -> Result<PaddedBuild> {
    let m_cap = params
        .m_cap
        .ok_or_else(|| Error::InvalidArgument("M is required".into()))?;
    let (classes, strategy) = make_color_classes_with(g, m_cap, ClassStrategy::Auto);
    let color_classes = classes.len();
    let orders = layer_orders(&classes, params.m, params.class_order, seed);
    let mut csp = PaddingCsp::new(g, params, orders.clone())?;
    let mut rng = rng::stream(seed, &[rng::SOLVER]);
    let solve = lll::mt_solve_with(&mut csp, &mut rng, budget, keep_going);
    let n = g.vertex_count();
    let mut layers = Vec::with_capacity(params.m);
    for (layer, classes) in orders.into_iter().enumerate() {
        let input = CarvingInput {
            m_cap,
            classes,
            t: solve.values[layer * n..(layer + 1) * n].to_vec(),
        };
        layers.push(carving::carve(g, &input)?);
    }
    let decomposition = Decomposition {
        params: params.clone(),
        layers,
    };
    let report = verify_padded(g, &decomposition);
    if solve.stats.converged && !report.padded_ok {
        return Err(Error::Invariant(
            "solver converged but the carved layers are not padded".into(),
        ));
    }
    Ok(PaddedBuild {
        decomposition,
        stats: solve.stats,
        report,
        thresholds: None,
        class_strategy: strategy,
        color_classes,
    })
}

fn layer_orders(
    classes: &[Vec<usize>],
    m: usize,
    order: ClassOrder,
    seed: u64,
) -> Vec<Vec<Vec<usize>>> {
    (0..m)
        .map(|layer| match order {
            ClassOrder::Shared => classes.to_vec(),
            ClassOrder::Shuffled => {
                let mut rng = rng::stream(seed, &[rng::LAYER, layer as u64]);
                let mut out = classes.to_vec();
                for i in (1..out.len()).rev() {
                    out.swap(i, rng::below(&mut rng, i as u64 + 1) as usize);
                }
                out
            }
        })
        .collect()
}

/// `m` independent carvings with `tGeo(p, M)` radii and no padding
/// requirement: the initial sample of the carving CSP, without the solver.
pub fn random_carving(
    g: &Graph,
    m: usize,
    p: f64,
    m_cap: u32,
    order: ClassOrder,
    seed: u64,
) -> Result<Vec<Partition>> {
    let (classes, _) = make_color_classes_with(g, m_cap, ClassStrategy::Auto);
    random_carving_with_classes(g, &classes, m, p, m_cap, order, seed)
}

/// [`random_carving`] with color classes computed once by the caller, e.g.
/// with [`carving::make_color_classes`]. They must be `2M`-separated.
pub fn random_carving_with_classes(
    g: &Graph,
    classes: &[Vec<usize>],
    m: usize,
    p: f64,
    m_cap: u32,
    order: ClassOrder,
    seed: u64,
) -> Result<Vec<Partition>> {
    let tgeo = TGeoParams::new(p, m_cap)?;
    let n = g.vertex_count();
    layer_orders(classes, m, order, seed)
        .into_iter()
        .enumerate()
        .map(|(layer, classes)| {
            let mut rng = rng::stream(seed, &[rng::LAYER, layer as u64, rng::VERTEX]);
            let t = (0..n)
                .map(|_| carving::tgeo_sample(&tgeo, &mut rng))
                .collect();
            carving::carve(g, &CarvingInput { m_cap, classes, t })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Strengthening

/// Result of [`strengthen`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strengthened {
    pub decomposition: Decomposition,
    /// `N = ⌈m/η⌉ − 1`.
    pub n: usize,
    /// Radius asked of the source, `2Nr + 1`.
    pub source_radius_requested: u32,
    pub source_radius_used: u32,
    /// Disjointness of the intermediate cover, `2(source radius − 1)`.
    pub cover_radius: u32,
    /// The cover is at least `4Nr`-disjoint, which the boundedness argument
    /// needs. The layer count guarantee does not depend on it.
    pub disjointness_ok: bool,
    pub cover_report: CoverReport,
    /// `r^α ≥ D + 4rN + 2r`.
    pub bound_hypothesis: bool,
    /// `r ≥ (10m/η)^{α'/(α−α')}`.
    pub radius_hypothesis: bool,
    pub report: PaddedReport,
}

/// Builds a `(1−η)`-strong decomposition with `⌈m/η⌉` layers from a source
/// of plain padded decompositions with `m` layers. `source` is called once
/// with the radius `2Nr + 1` the construction asks for.
pub fn strengthen<F>(
    g: &Graph,
    m: usize,
    r: u32,
    eta: f64,
    alpha: f64,
    source: F,
) -> Result<Strengthened>
where
    F: FnOnce(u32) -> Result<Decomposition>,
{
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "η = {eta} must lie in (0, 1)"
        )));
    }
    if m == 0 || r == 0 {
        return Err(Error::InvalidArgument("m and r must be positive".into()));
    }
    let layers_out = ceil_count(m as f64 / eta);
    let big_n = layers_out - 1;
    let requested = (2 * big_n as u64 * r as u64 + 1).min(u32::MAX as u64) as u32;
    let src = source(requested)?;
    if src.layers.len() != m {
        return Err(Error::InvalidArgument(format!(
            "source has {} layers, expected {m}",
            src.layers.len()
        )));
    }
    let rs = src.params.r.max(1);
    let cover_radius = 2 * (rs - 1);
    let cover = Cover {
        layers: shrink_layers(g, &src.layers, cover_radius),
        r_disjoint: cover_radius,
        d_bounded: libm::pow(rs as f64, src.params.alpha),
    };
    let cover_report = verify_cover(g, &cover);
    let n = g.vertex_count();
    let mut bfs = Bfs::new(n);

    // Level i of every vertex w.r.t. each U_j, i.e. dist_H(v, U_j) with
    // H = G^{2r}, which equals ⌈dist_G(v, U_j) / 2r⌉.
    let step = 2 * r;
    let mut in_shell: Vec<Vec<bool>> = vec![vec![false; n]; layers_out];
    for family in &cover.layers {
        let union: Vec<usize> = family.iter().flatten().copied().collect();
        if union.is_empty() {
            continue;
        }
        bfs.run_filtered(g, &union, Some(step.saturating_mul(big_n as u32)), |_| true);
        for &v in bfs.reached() {
            let d = bfs.dist(v).unwrap();
            let level = d.div_ceil(step) as usize;
            if level <= big_n {
                in_shell[level][v] = true;
            }
        }
    }
    // F_i: components of H[S_i^c].
    let mut families = Vec::with_capacity(layers_out);
    let mut comp = vec![usize::MAX; n];
    let mut stack = Vec::new();
    for shell in &in_shell {
        comp.iter_mut().for_each(|c| *c = usize::MAX);
        let mut family: Vec<Vec<usize>> = Vec::new();
        for s in 0..n {
            if shell[s] || comp[s] != usize::MAX {
                continue;
            }
            let id = family.len();
            let mut members = vec![s];
            comp[s] = id;
            stack.clear();
            stack.push(s);
            while let Some(x) = stack.pop() {
                for &y in bfs.run(g, x, Some(step)) {
                    if !shell[y] && comp[y] == usize::MAX {
                        comp[y] = id;
                        members.push(y);
                        stack.push(y);
                    }
                }
            }
            members.sort_unstable();
            family.push(members);
        }
        families.push(family);
    }
    let layers = expand_families(g, &families, r)?;
    let d_src = cover.d_bounded;
    let rf = r as f64;
    let bound_hypothesis = libm::pow(rf, alpha) >= d_src + 4.0 * rf * big_n as f64 + 2.0 * rf;
    let alpha_src = src.params.alpha;
    let radius_hypothesis = alpha > alpha_src
        && rf >= libm::pow(10.0 * m as f64 / eta, alpha_src / (alpha - alpha_src));
    let min_padded = layers_out - m;
    let decomposition = Decomposition {
        params: DecompositionParams {
            r,
            alpha,
            eta: Some(eta),
            m: layers_out,
            b: src.params.b,
            epsilon: src.params.epsilon,
            p: None,
            m_cap: None,
            origin: Origin::Strengthened,
            min_padded,
            class_order: ClassOrder::Shared,
        },
        layers,
    };
    let report = verify_padded(g, &decomposition);
    if !report.padded_ok {
        return Err(Error::Invariant(format!(
            "strengthened decomposition pads some vertex in only {} of {} layers",
            report.min_padded_layers, layers_out
        )));
    }
    Ok(Strengthened {
        decomposition,
        n: big_n,
        source_radius_requested: requested,
        source_radius_used: src.params.r,
        cover_radius,
        disjointness_ok: cover_radius as u64 >= 4 * big_n as u64 * r as u64,
        cover_report,
        bound_hypothesis,
        radius_hypothesis,
        report,
    })
}

/// Counts of vertices per number of padded layers, keyed for JSON output.
pub fn histogram_map(report: &PaddedReport) -> BTreeMap<String, usize> {
    report
        .padded_histogram
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| (format!("{k}"), c))
        .collect()
}
