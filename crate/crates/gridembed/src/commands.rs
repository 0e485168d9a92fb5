//! One function per subcommand. Each loads the graph, builds, verifies and
//! returns the serialized report with its artifacts.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use gridembed_core::carving::{self, ClassStrategy, CutCounts, CutRateConfig};
use gridembed_core::decomposition::{
    self, BuildMode, ClassOrder, OverrideParams, PaddedBuild, PaddedReport, Strengthened,
};
use gridembed_core::embedding::{
    self, DeskSchedule, DistortionReport, EmbedMode, EmbedReport, GridEmbedding, InjectiveReport,
    PairScan, VerifyOptions,
};
use gridembed_core::graph::{self, Bfs, GrowthBoundCheck, GrowthProfile};
use gridembed_core::{Graph, Partition};

use crate::io;
use crate::{CliError, GraphSummary, Mode, Output, Overrides, Report, RunConfig, Status};

pub const SUBCOMMANDS: [&str; 8] = [
    "growth",
    "carve",
    "cutrate",
    "decompose",
    "strengthen",
    "embed",
    "inject",
    "verify",
];

/// Runs the subcommand named in `cfg`.
pub fn run(cfg: &RunConfig) -> Result<Output, CliError> {
    let g = load_graph(cfg)?;
    let mut o = Overrides::new(&cfg.overrides);
    let out = match cfg.subcommand.as_str() {
        "growth" => growth(cfg, &g, &mut o),
        "carve" => carve(cfg, &g, &mut o),
        "cutrate" => cutrate(cfg, &g, &mut o),
        "decompose" => decompose(cfg, &g, &mut o),
        "strengthen" => strengthen(cfg, &g, &mut o),
        "embed" => embed(cfg, &g, &mut o),
        "inject" => inject(cfg, &g, &mut o),
        "verify" => verify(cfg, &g, &mut o),
        other => Err(CliError::Config(format!("unknown subcommand `{other}`"))),
    }?;
    o.finish()?;
    Ok(out)
}

pub fn load_graph(cfg: &RunConfig) -> Result<Graph, CliError> {
    match (&cfg.input, &cfg.gen) {
        (Some(path), None) => io::load_edge_list(Path::new(path)),
        (None, Some(family)) => io::generate(family),
        _ => Err(CliError::Config(
            "give exactly one of --input and --gen".into(),
        )),
    }
}

fn finish<T: Serialize>(
    cfg: &RunConfig,
    g: &Graph,
    status: Status,
    result: T,
    artifacts: Vec<(String, String)>,
) -> Result<Output, CliError> {
    let report = Report {
        config: cfg.clone(),
        status,
        graph: GraphSummary::of(cfg.graph_name(), g),
        result,
    };
    let mut text =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    Ok(Output {
        status,
        report: text,
        artifacts,
    })
}

fn labels_tsv(n: usize, layers: &[Partition]) -> String {
    let mut out = String::new();
    for v in 0..n {
        out.push_str(&v.to_string());
        for p in layers {
            out.push('\t');
            out.push_str(&p.cluster_of[v].to_string());
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// growth

#[derive(Serialize)]
struct GrowthResult {
    profile: GrowthProfile,
    b: Option<f64>,
    r0: f64,
    bound: Option<GrowthBoundCheck>,
}

fn growth(cfg: &RunConfig, g: &Graph, o: &mut Overrides) -> Result<Output, CliError> {
    let r_max: u32 = o.or("r_max", 10)?;
    let b: Option<f64> = o.get("b")?;
    let r0: f64 = o.or("r0", 1.0)?;
    let profile = graph::growth_profile(g, r_max)?;
    let bound = b.map(|b| graph::check_b_r0(&profile, b, r0));
    let status = Status::check(bound.as_ref().map_or(true, |c| c.holds));
    finish(
        cfg,
        g,
        status,
        GrowthResult {
            profile,
            b,
            r0,
            bound,
        },
        vec![],
    )
}

// ---------------------------------------------------------------------------
// carve

#[derive(Serialize)]
struct CarveResult {
    p: f64,
    #[serde(rename = "M")]
    m_cap: u32,
    clusters: usize,
    max_diam: Option<u32>,
    diam_bound: u32,
    verification: PaddedReport,
}

fn carve(cfg: &RunConfig, g: &Graph, o: &mut Overrides) -> Result<Output, CliError> {
    let p: f64 = o.or("p", 0.5)?;
    let m_cap: u32 = o.or("M", 4)?;
    let layers = decomposition::random_carving(g, 1, p, m_cap, ClassOrder::Shared, cfg.seed)?;
    let verification = decomposition::verify_padded_at(g, &layers, 0, (2 * m_cap) as f64, 1);
    let status = Status::check(verification.partitions_ok && verification.bounded_ok);
    let result = CarveResult {
        p,
        m_cap,
        clusters: layers[0].len(),
        max_diam: layers[0].max_diam(),
        diam_bound: 2 * m_cap,
        verification,
    };
    let tsv = labels_tsv(g.vertex_count(), &layers);
    finish(cfg, g, status, result, vec![("partition.tsv".into(), tsv)])
}

// ---------------------------------------------------------------------------
// cutrate

fn cutrate(cfg: &RunConfig, g: &Graph, o: &mut Overrides) -> Result<Output, CliError> {
    let rc = CutRateConfig {
        b: o.or("b", 1.0)?,
        p: o.require("p")?,
        m_cap: o.get("M")?,
        r: o.require("r")?,
        trials: o.or("trials", 20)?,
        seed: cfg.seed,
        classes: ClassStrategy::Auto,
    };
    if rc.trials == 0 {
        return Err(CliError::Config("trials must be at least 1".into()));
    }
    let setup = carving::cut_rate_setup(g, &rc)?;
    let pre = carving::cut_preconditions(g, rc.b, rc.p, rc.r)?;
    let counts = (0..rc.trials)
        .into_par_iter()
        .map(|t| carving::cut_rate_trial(g, &setup, rc.r, rc.seed, t))
        .try_reduce(CutCounts::default, |a, b| Ok(a.merge(b)))?;
    let report = carving::cut_rate_report(g, &cfg.graph_name(), &rc, &setup, pre, counts);
    // The bound is only claimed when its hypotheses hold.
    let status = Status::check(
        !report.preconditions_met || report.empirical_cut_fraction <= report.bound_20rp,
    );
    finish(cfg, g, status, report, vec![])
}

// ---------------------------------------------------------------------------
// decompose / strengthen

fn build_mode(cfg: &RunConfig, o: &mut Overrides, r: u32) -> Result<BuildMode, CliError> {
    Ok(match cfg.mode {
        Mode::Desk => BuildMode::Override(OverrideParams {
            m: o.require("m")?,
            p: o.require("p")?,
            m_cap: o.require("M")?,
            r,
            alpha: o.get("alpha")?,
            min_padded: o.get("min_padded")?,
            class_order: match o.get::<String>("class_order")?.as_deref() {
                None | Some("shuffled") => ClassOrder::Shuffled,
                Some("shared") => ClassOrder::Shared,
                Some(x) => return Err(CliError::Config(format!("unknown class_order `{x}`"))),
            },
        }),
        Mode::Theory => {
            let epsilon = o.or("eps", 0.5)?;
            match o.or("theorem", 1u8)? {
                1 => BuildMode::TheoryI { epsilon },
                2 => BuildMode::TheoryII {
                    epsilon,
                    halved: o.or("halved", false)?,
                },
                t => return Err(CliError::Config(format!("theorem={t} is not 1 or 2"))),
            }
        }
    })
}

fn build_status(b: &PaddedBuild) -> Status {
    if !b.stats.converged {
        Status::NotConverged
    } else {
        Status::check(b.report.ok())
    }
}

fn decompose(cfg: &RunConfig, g: &Graph, o: &mut Overrides) -> Result<Output, CliError> {
    let b: f64 = o.or("b", 2.0)?;
    let r: u32 = o.require("r")?;
    let mode = build_mode(cfg, o, r)?;
    let mut build = decomposition::build_padded_mode(g, b, r, &mode, cfg.seed, cfg.budget)?;
    if let BuildMode::Override(p) = &mode {
        // Desk layers are checked against the carving bound 2M; r^α is
        // degenerate at r = 1.
        let d = &build.decomposition;
        build.report = decomposition::verify_padded_at(
            g,
            &d.layers,
            r,
            (2 * p.m_cap) as f64,
            d.params.min_padded,
        );
    }
    let status = build_status(&build);
    let tsv = labels_tsv(g.vertex_count(), &build.decomposition.layers);
    #[derive(Serialize)]
    struct Result<'a> {
        params: &'a decomposition::DecompositionParams,
        stats: &'a gridembed_core::lll::SolveStats,
        thresholds: &'a Option<decomposition::ThresholdCheck>,
        class_strategy: ClassStrategy,
        color_classes: usize,
        verification: &'a PaddedReport,
        padded_histogram: std::collections::BTreeMap<String, usize>,
    }
    let result = Result {
        params: &build.decomposition.params,
        stats: &build.stats,
        thresholds: &build.thresholds,
        class_strategy: build.class_strategy,
        color_classes: build.color_classes,
        verification: &build.report,
        padded_histogram: decomposition::histogram_map(&build.report),
    };
    finish(
        cfg,
        g,
        status,
        result,
        vec![("decomposition.tsv".into(), tsv)],
    )
}

#[derive(Serialize)]
struct StrengthenResult {
    source: Option<SourceSummary>,
    strengthened: Option<Strengthened>,
}

#[derive(Serialize)]
struct SourceSummary {
    stats: gridembed_core::lll::SolveStats,
    verification: PaddedReport,
}

/// Builds the source at `source_r` if given, otherwise at the radius the
/// construction asks for.
fn strengthen(cfg: &RunConfig, g: &Graph, o: &mut Overrides) -> Result<Output, CliError> {
    let b: f64 = o.or("b", 2.0)?;
    let r: u32 = o.require("r")?;
    let eta: f64 = o.require("eta")?;
    let alpha: f64 = o.require("alpha")?;
    let source_r: Option<u32> = o.get("source_r")?;
    let mode = build_mode(cfg, o, 0)?;
    let mut source = None;
    let out = decomposition::strengthen(g, layer_count(&mode, b)?, r, eta, alpha, |requested| {
        let rs = source_r.unwrap_or(requested);
        let mode = match &mode {
            BuildMode::Override(p) => BuildMode::Override(OverrideParams { r: rs, ..p.clone() }),
            m => m.clone(),
        };
        let build = decomposition::build_padded_mode(g, b, rs, &mode, cfg.seed, cfg.budget)?;
        source = Some(SourceSummary {
            stats: build.stats.clone(),
            verification: build.report.clone(),
        });
        build.into_result()
    });
    let strengthened = match out {
        Ok(s) => Some(s),
        Err(gridembed_core::Error::NotConverged { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let (status, artifacts) = match &strengthened {
        None => (Status::NotConverged, vec![]),
        Some(s) => (
            Status::check(s.report.ok()),
            vec![(
                "decomposition.tsv".into(),
                labels_tsv(g.vertex_count(), &s.decomposition.layers),
            )],
        ),
    };
    finish(
        cfg,
        g,
        status,
        StrengthenResult {
            source,
            strengthened,
        },
        artifacts,
    )
}

fn layer_count(mode: &BuildMode, b: f64) -> Result<usize, CliError> {
    // r only affects p and M, not m; any radius ≥ 2 resolves.
    Ok(decomposition::resolve_params(b, 1 << 20, mode)?.0.m)
}

// ---------------------------------------------------------------------------
// embed / inject / verify

/// [`embedding::verify_embedding_with`], parallel over sources.
pub fn verify_parallel(
    g: &Graph,
    f: &GridEmbedding,
    epsilon: f64,
    r_emp: u32,
    opts: &VerifyOptions,
) -> DistortionReport {
    let n = g.vertex_count();
    let scan = (0..n)
        .into_par_iter()
        .filter(|&u| embedding::sampled(opts.sources, opts.seed, u))
        .map_init(
            || Bfs::new(n),
            |bfs, u| embedding::scan_source(g, f, epsilon, r_emp, opts.s, u, bfs),
        )
        .reduce(PairScan::default, PairScan::merge);
    embedding::distortion_report(g, f, r_emp, opts, scan)
}

/// Verifies at `r` if given, otherwise at the empirical threshold.
fn verify_at(
    g: &Graph,
    f: &GridEmbedding,
    epsilon: f64,
    r: Option<u32>,
    opts: &VerifyOptions,
) -> DistortionReport {
    let r = match r {
        Some(r) => r,
        None => verify_parallel(g, f, epsilon, 1, opts).empirical_threshold,
    };
    verify_parallel(g, f, epsilon, r, opts)
}

fn embed_mode(cfg: &RunConfig, o: &mut Overrides) -> Result<EmbedMode, CliError> {
    match cfg.mode {
        Mode::Theory => Ok(EmbedMode::Theory {
            r0: o.or("r0", 1.0)?,
        }),
        Mode::Desk => {
            let path = cfg
                .schedule
                .as_ref()
                .ok_or_else(|| CliError::Config("desk mode needs --schedule <file.json>".into()))?;
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
            let s: DeskSchedule = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{path}: {e}")))?;
            Ok(EmbedMode::Desk(s))
        }
    }
}

fn default_epsilon(mode: Mode) -> f64 {
    match mode {
        Mode::Theory => 0.25,
        Mode::Desk => 0.5,
    }
}

#[derive(Serialize)]
struct EmbedResult {
    b: f64,
    epsilon: f64,
    construction: EmbedReport,
    verification: DistortionReport,
}

fn embed(cfg: &RunConfig, g: &Graph, o: &mut Overrides) -> Result<Output, CliError> {
    let b: f64 = o.or("b", 2.0)?;
    let epsilon: f64 = o.or("eps", default_epsilon(cfg.mode))?;
    let r: Option<u32> = o.get("R")?;
    let mode = embed_mode(cfg, o)?;
    let out = embedding::coarse_embed(g, b, epsilon, &mode, cfg.seed, cfg.budget, &mut |_| true)?;
    let opts = VerifyOptions {
        s: 1,
        sources: cfg.pairs,
        seed: cfg.seed,
    };
    let Some(f) = out.embedding else {
        let zero = GridEmbedding::zero(g, out.report.schedule.dim);
        let verification = verify_at(g, &zero, epsilon, r, &opts);
        let result = EmbedResult {
            b,
            epsilon,
            construction: out.report,
            verification,
        };
        return finish(cfg, g, Status::NotConverged, result, vec![]);
    };
    let verification = verify_at(g, &f, epsilon, r, &opts);
    let status = Status::check(verification.contraction_ok && verification.lower_bound_ok);
    let tsv = io::embedding_tsv(&f, g.vertex_count());
    let result = EmbedResult {
        b,
        epsilon,
        construction: out.report,
        verification,
    };
    finish(cfg, g, status, result, vec![("embedding.tsv".into(), tsv)])
}

#[derive(Serialize)]
struct InjectResult {
    b: f64,
    epsilon: f64,
    construction: EmbedReport,
    coarse_verification: DistortionReport,
    injective: Option<InjectiveReport>,
    verification: Option<DistortionReport>,
}

fn inject(cfg: &RunConfig, g: &Graph, o: &mut Overrides) -> Result<Output, CliError> {
    let b: f64 = o.or("b", 2.0)?;
    let epsilon: f64 = o.or("eps", default_epsilon(cfg.mode))?;
    let s: u32 = o.or("s", 1)?;
    if s == 0 {
        return Err(CliError::Config("s must be positive".into()));
    }
    let mode = embed_mode(cfg, o)?;
    let (made, construction, coarse_verification) =
        embedding::injective_embed(g, b, epsilon, s, &mode, cfg.seed, cfg.budget, &mut |_| true)?;
    let Some((f, inj)) = made else {
        let result = InjectResult {
            b,
            epsilon,
            construction,
            coarse_verification,
            injective: None,
            verification: None,
        };
        return finish(cfg, g, Status::NotConverged, result, vec![]);
    };
    let opts = VerifyOptions {
        s,
        sources: cfg.pairs,
        seed: cfg.seed,
    };
    let verification = verify_parallel(g, &f, epsilon, inj.r, &opts);
    let status = Status::check(verification.injective && verification.upper_ok);
    let tsv = io::embedding_tsv(&f, g.vertex_count());
    let result = InjectResult {
        b,
        epsilon,
        construction,
        coarse_verification,
        injective: Some(inj),
        verification: Some(verification),
    };
    finish(cfg, g, status, result, vec![("embedding.tsv".into(), tsv)])
}

/// Checks an embedding file. Without `s` the map must be a contraction
/// meeting the lower bound from `R` on; with `s` it must be injective with
/// `‖Δf‖ ≤ max{dist, s}` instead of contracting.
fn verify(cfg: &RunConfig, g: &Graph, o: &mut Overrides) -> Result<Output, CliError> {
    let epsilon: f64 = o.or("eps", 0.5)?;
    let r: u32 = o.or("R", 1)?;
    let s: Option<u32> = o.get("s")?;
    let path = cfg
        .embedding
        .as_ref()
        .ok_or_else(|| CliError::Config("verify needs --embedding <file.tsv>".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
    let f = io::parse_embedding_tsv(g, &text)?;
    let opts = VerifyOptions {
        s: s.unwrap_or(1),
        sources: cfg.pairs,
        seed: cfg.seed,
    };
    let rep = verify_parallel(g, &f, epsilon, r, &opts);
    let passed = match s {
        None => rep.contraction_ok && rep.lower_bound_ok,
        Some(_) => rep.injective && rep.upper_ok && rep.lower_bound_ok,
    };
    finish(cfg, g, Status::check(passed), rep, vec![])
}
