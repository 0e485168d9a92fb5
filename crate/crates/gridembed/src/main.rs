use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gridembed::commands;
use gridembed::{io, parse_overrides, parse_pairs, CliError, Mode, RunConfig};
use gridembed_core::embedding::PairSource;

#[derive(Parser)]
#[command(
    name = "gridembed",
    version,
    about = "Padded decompositions and grid embeddings of graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Growth function γ(r) and ρ(r). Overrides: r_max, b, r0.
    Growth(Common),
    /// One ball carving. Overrides: p, M.
    Carve(Common),
    /// Cut-rate experiment. Overrides: b, p, M, r, trials.
    Cutrate(Common),
    /// Padded decomposition. Overrides: b, r; desk: m, p, M, alpha, min_padded,
    /// class_order; theory: eps, theorem, halved.
    Decompose(Common),
    /// Strong decomposition. Overrides: b, r, eta, alpha, source_r and the
    /// source's decompose overrides.
    Strengthen(Common),
    /// Coarse embedding. Overrides: b, eps, R, r0 (theory).
    Embed(Common),
    /// Injective embedding. Overrides: b, eps, s, r0 (theory).
    Inject(Common),
    /// Checks an embedding TSV. Overrides: eps, R, s.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// Edge list, one `u v` pair per line.
    #[arg(long, conflicts_with = "gen")]
    input: Option<PathBuf>,
    /// Generated graph: path:n, cycle:n, grid:k, gridinf:k, tree:depth,branching,
    /// er-bounded:n,d,seed.
    #[arg(long)]
    gen: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; the report goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parameters as k=v,k=v; may be repeated.
    #[arg(long = "override")]
    overrides: Vec<String>,
    #[arg(long, default_value = "theory", value_parser = |s: &str| s.parse::<Mode>())]
    mode: Mode,
    /// Solver resampling budget.
    #[arg(long)]
    budget: Option<u64>,
    /// Verification sources: exhaustive or sample:<rate>.
    #[arg(long, default_value = "exhaustive", value_parser = parse_pairs)]
    pairs: PairSource,
    /// Embedding TSV (verify).
    #[arg(long)]
    embedding: Option<PathBuf>,
    /// Desk schedule JSON (embed, inject with --mode desk).
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("gridembed: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let (name, c) = match cli.command {
        Command::Growth(c) => ("growth", c),
        Command::Carve(c) => ("carve", c),
        Command::Cutrate(c) => ("cutrate", c),
        Command::Decompose(c) => ("decompose", c),
        Command::Strengthen(c) => ("strengthen", c),
        Command::Embed(c) => ("embed", c),
        Command::Inject(c) => ("inject", c),
        Command::Verify(c) => ("verify", c),
    };
    if let Some(t) = std::env::var("GRIDEMBED_THREADS")
        .ok()
        .filter(|s| !s.is_empty())
    {
        let t: usize = t
            .parse()
            .map_err(|_| CliError::Config(format!("GRIDEMBED_THREADS={t} is not a number")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let show = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let cfg = RunConfig {
        subcommand: name.into(),
        input: show(&c.input),
        gen: c.gen,
        embedding: show(&c.embedding),
        schedule: show(&c.schedule),
        seed: c.seed,
        overrides: parse_overrides(&c.overrides)?,
        mode: c.mode,
        budget: c.budget,
        pairs: c.pairs,
        out: show(&c.out),
        verbosity: c.verbose,
    };
    let out = commands::run(&cfg)?;
    match &c.out {
        Some(dir) => {
            for (file, text) in &out.artifacts {
                io::write_atomic(&dir.join(file), text.as_bytes())?;
            }
            io::write_atomic(&dir.join("report.json"), out.report.as_bytes())?;
            if c.verbose > 0 {
                eprintln!("{name}: {:?}, wrote {}", out.status, dir.display());
            }
        }
        None => print!("{}", out.report),
    }
    Ok(out.status.exit_code())
}
