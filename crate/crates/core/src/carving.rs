//! Randomized ball carving with truncated geometric radii.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::graph::{self, Bfs, Graph, Partition};
use crate::rng;
use crate::{Error, Result};

/// Truncated geometric distribution: `P[n] = p(1−p)ⁿ` for `n < M` and the
/// remaining mass `(1−p)^M` sits on `M`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TGeoParams {
    pub p: f64,
    #[serde(rename = "M")]
    pub cap: u32,
}

impl TGeoParams {
    pub fn new(p: f64, cap: u32) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!("p = {p} is not in (0, 1)")));
        }
        Ok(TGeoParams { p, cap })
    }

    /// `P[t ≤ n] = 1 − (1−p)^{n+1}` for `n < M`, and 1 from `M` on.
    pub fn cdf(&self, n: u32) -> f64 {
        if n >= self.cap {
            1.0
        } else {
            1.0 - libm::pow(1.0 - self.p, n as f64 + 1.0)
        }
    }

    /// `P[t ≥ n] = (1−p)ⁿ` for `n ≤ M`.
    pub fn tail(&self, n: u32) -> f64 {
        if n > self.cap {
            0.0
        } else {
            libm::pow(1.0 - self.p, n as f64)
        }
    }

    /// Inverse CDF at `u ∈ [0, 1)`: the least `n` with `u < cdf(n)`.
    pub fn quantile(&self, u: f64) -> u32 {
        let q = 1.0 - self.p;
        let guess = libm::floor(libm::log1p(-u) / libm::log(q));
        let mut n = if guess.is_finite() && guess >= 0.0 {
            (guess.min(self.cap as f64)) as u32
        } else {
            self.cap
        };
        while n > 0 && u < self.cdf(n - 1) {
            n -= 1;
        }
        while n < self.cap && u >= self.cdf(n) {
            n += 1;
        }
        n
    }
}

/// Probability mass at `n`.
pub fn tgeo_pmf(params: &TGeoParams, n: u32) -> Result<f64> {
    if n > params.cap {
        return Err(Error::InvalidArgument(format!(
            "n = {n} is outside the support 0..={}",
            params.cap
        )));
    }
    let q = 1.0 - params.p;
    Ok(if n < params.cap {
        params.p * libm::pow(q, n as f64)
    } else {
        libm::pow(q, n as f64)
    })
}

/// Draws one value by inverse CDF.
pub fn tgeo_sample<R: RngCore + ?Sized>(params: &TGeoParams, rng: &mut R) -> u32 {
    params.quantile(rng::unit_f64(rng))
}

/// How color classes for carving are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassStrategy {
    /// Greedy coloring of `G^{2M}` in increasing id order.
    GreedyPower,
    /// Coloring through a `2M`-net and its Voronoi cells (see
    /// [`separated_cell_classes`]); linear in the size of the graph.
    NetCells,
    /// `GreedyPower` unless its estimated cost exceeds [`GREEDY_WORK_LIMIT`].
    Auto,
}

/// Estimated number of BFS visits above which `Auto` switches to `NetCells`.
pub const GREEDY_WORK_LIMIT: f64 = 5.0e7;

/// Color classes `I_0, I_1, …` of `G^{2M}` by greedy coloring in id order.
pub fn make_color_classes(g: &Graph, m_cap: u32) -> Vec<Vec<usize>> {
    make_color_classes_with(g, m_cap, ClassStrategy::Auto).0
}

/// Color classes with an explicit strategy; also returns the strategy used.
pub fn make_color_classes_with(
    g: &Graph,
    m_cap: u32,
    strategy: ClassStrategy,
) -> (Vec<Vec<usize>>, ClassStrategy) {
    let radius = 2 * m_cap;
    let chosen = match strategy {
        ClassStrategy::Auto => {
            if estimate_ball_work(g, radius) <= GREEDY_WORK_LIMIT {
                ClassStrategy::GreedyPower
            } else {
                ClassStrategy::NetCells
            }
        }
        s => s,
    };
    let colors = match chosen {
        ClassStrategy::NetCells => separated_cell_classes(g, radius),
        _ => {
            if radius == 0 {
                (0..g.vertex_count()).map(|_| 0).collect::<Vec<_>>()
            } else {
                graph::greedy_power_coloring(g, radius)
            }
        }
    };
    (classes_from_colors(&colors), chosen)
}

fn classes_from_colors(colors: &[usize]) -> Vec<Vec<usize>> {
    let k = colors.iter().map(|&c| c + 1).max().unwrap_or(0);
    let mut classes = vec![Vec::new(); k];
    for (v, &c) in colors.iter().enumerate() {
        classes[c].push(v);
    }
    classes.retain(|c| !c.is_empty());
    classes
}

/// Estimated total size of all radius-`radius` balls, from up to 32 evenly
/// spaced sample vertices.
fn estimate_ball_work(g: &Graph, radius: u32) -> f64 {
    let n = g.vertex_count();
    if n == 0 {
        return 0.0;
    }
    let samples = n.min(32);
    let mut bfs = Bfs::new(n);
    let mut total = 0usize;
    for i in 0..samples {
        let v = i * n / samples;
        total += bfs.run(g, v, Some(radius)).len();
    }
    total as f64 / samples as f64 * n as f64
}

/// A coloring in which equal colors are more than `radius` apart, built
/// without touching `G^{radius}`:
///
/// 1. pick a maximal `radius`-separated net greedily in id order;
/// 2. split `V` into cells by nearest net point (ties to the earlier point);
/// 3. greedily color the cells so that cells within distance `radius` differ;
/// 4. color a vertex by (cell color, rank of the vertex inside its cell).
pub fn separated_cell_classes(g: &Graph, radius: u32) -> Vec<usize> {
    let n = g.vertex_count();
    let mut near = vec![u32::MAX; n];
    let mut centers = Vec::new();
    let mut queue = Vec::new();
    for v in 0..n {
        if near[v] != u32::MAX {
            continue;
        }
        centers.push(v);
        near[v] = 0;
        queue.clear();
        queue.push(v);
        let mut head = 0;
        while head < queue.len() {
            let x = queue[head];
            head += 1;
            let d = near[x] + 1;
            if d > radius {
                continue;
            }
            for &w in g.neighbors(x) {
                if d < near[w] {
                    near[w] = d;
                    queue.push(w);
                }
            }
        }
    }
    let mut bfs = Bfs::new(n);
    bfs.run_filtered(g, &centers, None, |_| true);
    let mut cell = vec![usize::MAX; n];
    for (i, &c) in centers.iter().enumerate() {
        cell[c] = i;
    }
    for &x in bfs.reached() {
        if cell[x] == usize::MAX {
            continue;
        }
        for &w in g.neighbors(x) {
            if cell[w] == usize::MAX {
                cell[w] = cell[x];
            }
        }
    }
    let mut members = vec![Vec::new(); centers.len()];
    for v in 0..n {
        members[cell[v]].push(v);
    }
    let mut cell_color = vec![usize::MAX; centers.len()];
    let mut used = Vec::new();
    for c in 0..centers.len() {
        used.clear();
        for &x in bfs.run_filtered(g, &members[c], Some(radius), |_| true) {
            let other = cell[x];
            if other < c {
                used.push(cell_color[other]);
            }
        }
        used.sort_unstable();
        used.dedup();
        cell_color[c] = used
            .iter()
            .enumerate()
            .find(|&(i, &k)| i != k)
            .map_or(used.len(), |(i, _)| i);
    }
    let mut keys: Vec<(usize, usize)> = vec![(0, 0); n];
    for (c, ms) in members.iter().enumerate() {
        for (rank, &v) in ms.iter().enumerate() {
            keys[v] = (cell_color[c], rank);
        }
    }
    let mut distinct = keys.clone();
    distinct.sort_unstable();
    distinct.dedup();
    keys.iter()
        .map(|k| distinct.binary_search(k).unwrap())
        .collect()
}

/// Input to [`carve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarvingInput {
    #[serde(rename = "M")]
    pub m_cap: u32,
    /// Ordered classes; within a class all distances exceed `2M`.
    pub classes: Vec<Vec<usize>>,
    /// Radius `t(x) ∈ 0..=M` for every vertex.
    pub t: Vec<u32>,
}

/// Carves `V` into the clusters `B(x, t(x)) \ (earlier clusters)`, visiting
/// centers class by class.
pub fn carve(g: &Graph, input: &CarvingInput) -> Result<Partition> {
    let owner = carve_owners(g, input)?;
    let p = Partition::from_labels(g, &owner)?;
    let bound = 2 * input.m_cap;
    if let Some((i, _)) = p
        .diam
        .iter()
        .enumerate()
        .find(|(_, d)| d.map_or(true, |d| d > bound))
    {
        return Err(Error::Invariant(format!(
            "carved cluster {i} has diameter {:?} > 2M = {bound}",
            p.diam[i]
        )));
    }
    Ok(p)
}

/// For each vertex, the center whose ball claimed it.
pub fn carve_owners(g: &Graph, input: &CarvingInput) -> Result<Vec<usize>> {
    let n = g.vertex_count();
    check_input(n, input)?;
    let mut owner = vec![usize::MAX; n];
    let mut carver = Carver::new(n);
    for class in &input.classes {
        for &x in class {
            carver.carve_center(g, x, input.t[x], |w| {
                if owner[w] == usize::MAX {
                    owner[w] = x;
                }
            });
        }
    }
    if let Some(v) = owner.iter().position(|&o| o == usize::MAX) {
        return Err(Error::Invariant(format!("vertex {v} was never carved")));
    }
    Ok(owner)
}

fn check_input(n: usize, input: &CarvingInput) -> Result<()> {
    if input.t.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} radii for {n} vertices",
            input.t.len()
        )));
    }
    if let Some(v) = input.t.iter().position(|&t| t > input.m_cap) {
        return Err(Error::InvalidArgument(format!(
            "t({v}) = {} exceeds M = {}",
            input.t[v], input.m_cap
        )));
    }
    let mut seen = vec![false; n];
    for &v in input.classes.iter().flatten() {
        if v >= n || seen[v] {
            return Err(Error::InvalidArgument(format!(
                "color classes do not partition the vertices (vertex {v})"
            )));
        }
        seen[v] = true;
    }
    if seen.iter().any(|&s| !s) {
        return Err(Error::InvalidArgument(
            "color classes do not cover the vertices".into(),
        ));
    }
    Ok(())
}

/// Ball sweeper that skips work already dominated by earlier balls.
///
/// `reach[w]` is the largest leftover radius with which an earlier ball
/// passed through `w`. A later ball arriving at `w` with no more leftover
/// cannot claim anything through `w`, so it stops there.
struct Carver {
    reach: Vec<i64>,
    mark: Vec<u32>,
    epoch: u32,
    queue: Vec<(usize, u32)>,
}

impl Carver {
    fn new(n: usize) -> Self {
        Carver {
            reach: vec![-1; n],
            mark: vec![0; n],
            epoch: 0,
            queue: Vec::new(),
        }
    }

    fn carve_center<F: FnMut(usize)>(&mut self, g: &Graph, x: usize, t: u32, mut claim: F) {
        self.epoch += 1;
        let epoch = self.epoch;
        self.queue.clear();
        self.queue.push((x, 0));
        self.mark[x] = epoch;
        let mut head = 0;
        while head < self.queue.len() {
            let (w, d) = self.queue[head];
            head += 1;
            let left = t as i64 - d as i64;
            if left <= self.reach[w] {
                continue;
            }
            self.reach[w] = left;
            claim(w);
            if left == 0 {
                continue;
            }
            for &y in g.neighbors(w) {
                if self.mark[y] != epoch {
                    self.mark[y] = epoch;
                    self.queue.push((y, d + 1));
                }
            }
        }
    }
}

/// True iff `B(v, r)` meets at least two clusters of `p`.
pub fn is_ball_cut(g: &Graph, p: &Partition, v: usize, r: u32) -> Result<bool> {
    g.check_vertex(v)?;
    let mut bfs = Bfs::new(g.vertex_count());
    Ok(ball_cut(g, &p.cluster_of, v, r, &mut bfs))
}

pub(crate) fn ball_cut(g: &Graph, label: &[usize], v: usize, r: u32, bfs: &mut Bfs) -> bool {
    let c = label[v];
    bfs.run(g, v, Some(r)).iter().any(|&u| label[u] != c)
}

/// Configuration of a cut-rate experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutRateConfig {
    pub b: f64,
    pub p: f64,
    /// `None` selects `M = ⌊4b·ln(1/p)/p⌋`.
    #[serde(rename = "M")]
    pub m_cap: Option<u32>,
    pub r: u32,
    pub trials: u32,
    pub seed: u64,
    pub classes: ClassStrategy,
}

/// `M = ⌊4b·ln(1/p)/p⌋`.
pub fn auto_cap(b: f64, p: f64) -> u32 {
    libm::floor(4.0 * b * libm::log(1.0 / p) / p) as u32
}

/// Cut counts of one trial, split by whether the vertex's ball has the
/// largest size `γ(r)` (full) or is truncated by the edge of the graph.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutCounts {
    pub full_cut: u64,
    pub full_total: u64,
    pub truncated_cut: u64,
    pub truncated_total: u64,
}

impl CutCounts {
    pub fn merge(self, o: CutCounts) -> CutCounts {
        CutCounts {
            full_cut: self.full_cut + o.full_cut,
            full_total: self.full_total + o.full_total,
            truncated_cut: self.truncated_cut + o.truncated_cut,
            truncated_total: self.truncated_total + o.truncated_total,
        }
    }
}

/// Radius of vertex `v` in trial `trial`: a function of `(seed, trial, v)` only.
pub fn trial_radius(params: &TGeoParams, seed: u64, trial: u32, v: usize) -> u32 {
    let h = rng::derive(seed, &[rng::TRIAL, trial as u64, rng::VERTEX, v as u64]);
    params.quantile((h >> 11) as f64 * (1.0 / (1u64 << 53) as f64))
}

/// Precomputed data shared by all trials of an experiment.
#[derive(Clone, Debug)]
pub struct CutRateSetup {
    pub params: TGeoParams,
    pub classes: Vec<Vec<usize>>,
    pub strategy: ClassStrategy,
    /// `|B(v, r)|` for every vertex.
    pub ball_size: Vec<usize>,
    pub max_ball: usize,
}

pub fn cut_rate_setup(g: &Graph, cfg: &CutRateConfig) -> Result<CutRateSetup> {
    if g.vertex_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    let cap = cfg.m_cap.unwrap_or_else(|| auto_cap(cfg.b, cfg.p));
    let params = TGeoParams::new(cfg.p, cap)?;
    let (classes, strategy) = make_color_classes_with(g, cap, cfg.classes);
    let mut bfs = Bfs::new(g.vertex_count());
    let ball_size: Vec<usize> = (0..g.vertex_count())
        .map(|v| bfs.run(g, v, Some(cfg.r)).len())
        .collect();
    let max_ball = ball_size.iter().copied().max().unwrap_or(0);
    Ok(CutRateSetup {
        params,
        classes,
        strategy,
        ball_size,
        max_ball,
    })
}

/// Runs one trial: fresh radii, one carving, one cut test per vertex.
pub fn cut_rate_trial(
    g: &Graph,
    setup: &CutRateSetup,
    r: u32,
    seed: u64,
    trial: u32,
) -> Result<CutCounts> {
    let n = g.vertex_count();
    let t = (0..n)
        .map(|v| trial_radius(&setup.params, seed, trial, v))
        .collect();
    let input = CarvingInput {
        m_cap: setup.params.cap,
        classes: setup.classes.clone(),
        t,
    };
    let owner = carve_owners(g, &input)?;
    let mut bfs = Bfs::new(n);
    let mut counts = CutCounts::default();
    for v in 0..n {
        let cut = r > 0 && ball_cut(g, &owner, v, r, &mut bfs);
        if setup.ball_size[v] == setup.max_ball {
            counts.full_total += 1;
            counts.full_cut += cut as u64;
        } else {
            counts.truncated_total += 1;
            counts.truncated_cut += cut as u64;
        }
    }
    Ok(counts)
}

/// Which hypotheses of the cut bound were met.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutPreconditions {
    pub p_small: bool,
    pub r_at_least_9: bool,
    pub b_at_least_1: bool,
    /// `γ(s) ≤ s^b` on every checked radius `r ≤ s ≤ growth_checked_to`.
    pub growth_bound: bool,
    pub growth_checked_to: u32,
}

impl CutPreconditions {
    pub fn all(&self) -> bool {
        self.p_small && self.r_at_least_9 && self.b_at_least_1 && self.growth_bound
    }
}

/// Largest radius whose growth profile costs at most `work` BFS visits.
const GROWTH_CHECK_WORK: f64 = 5.0e7;

/// Checks the hypotheses of the cut bound. The growth bound is checked on
/// radii `r ..= s`, with `s` as large as an exact profile allows within a
/// fixed amount of work (and at least `r`).
pub fn cut_preconditions(g: &Graph, b: f64, p: f64, r: u32) -> Result<CutPreconditions> {
    let n = g.vertex_count() as f64;
    let mut to = r.max(1);
    let mut bfs = Bfs::new(g.vertex_count());
    let probe = |rad: u32, bfs: &mut Bfs| {
        (0..g.vertex_count().min(8))
            .map(|i| {
                bfs.run(g, i * g.vertex_count() / g.vertex_count().min(8), Some(rad))
                    .len()
            })
            .max()
            .unwrap_or(0) as f64
    };
    while to < 4096 && n * probe(to * 2, &mut bfs) <= GROWTH_CHECK_WORK {
        to *= 2;
    }
    let profile = graph::growth_profile(g, to)?;
    let check = graph::check_b_r0(&profile, b, r.max(1) as f64);
    Ok(CutPreconditions {
        p_small: p <= 1.0 / (5.0 * b),
        r_at_least_9: r >= 9,
        b_at_least_1: b >= 1.0,
        growth_bound: check.holds,
        growth_checked_to: to,
    })
}

/// Report of a cut-rate experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutRateReport {
    pub graph: String,
    pub n: usize,
    pub b: f64,
    pub p: f64,
    #[serde(rename = "M")]
    pub m_cap: u32,
    pub r: u32,
    pub trials: u32,
    pub seed: u64,
    pub empirical_cut_fraction: f64,
    pub bound_20rp: f64,
    pub preconditions_met: bool,
    pub preconditions: CutPreconditions,
    /// Cut fraction over vertices whose ball has the maximum size `γ(r)`.
    pub full_ball_cut_fraction: Option<f64>,
    /// Cut fraction over vertices whose ball is truncated by the graph's edge.
    pub truncated_ball_cut_fraction: Option<f64>,
    pub truncated_ball_vertices: usize,
    pub class_strategy: ClassStrategy,
    pub color_classes: usize,
}

/// Assembles the report from merged trial counts.
pub fn cut_rate_report(
    g: &Graph,
    name: &str,
    cfg: &CutRateConfig,
    setup: &CutRateSetup,
    pre: CutPreconditions,
    counts: CutCounts,
) -> CutRateReport {
    let frac = |c: u64, t: u64| (t > 0).then(|| c as f64 / t as f64);
    let total = counts.full_total + counts.truncated_total;
    CutRateReport {
        graph: name.into(),
        n: g.vertex_count(),
        b: cfg.b,
        p: cfg.p,
        m_cap: setup.params.cap,
        r: cfg.r,
        trials: cfg.trials,
        seed: cfg.seed,
        empirical_cut_fraction: frac(counts.full_cut + counts.truncated_cut, total).unwrap_or(0.0),
        bound_20rp: 20.0 * cfg.r as f64 * cfg.p,
        preconditions_met: pre.all(),
        preconditions: pre,
        full_ball_cut_fraction: frac(counts.full_cut, counts.full_total),
        truncated_ball_cut_fraction: frac(counts.truncated_cut, counts.truncated_total),
        truncated_ball_vertices: setup
            .ball_size
            .iter()
            .filter(|&&s| s != setup.max_ball)
            .count(),
        class_strategy: setup.strategy,
        color_classes: setup.classes.len(),
    }
}

/// Runs every trial sequentially and reports.
pub fn cut_rate_experiment(g: &Graph, name: &str, cfg: &CutRateConfig) -> Result<CutRateReport> {
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let setup = cut_rate_setup(g, cfg)?;
    let pre = cut_preconditions(g, cfg.b, cfg.p, cfg.r)?;
    let mut counts = CutCounts::default();
    for trial in 0..cfg.trials {
        counts = counts.merge(cut_rate_trial(g, &setup, cfg.r, cfg.seed, trial)?);
    }
    Ok(cut_rate_report(g, name, cfg, &setup, pre, counts))
}
