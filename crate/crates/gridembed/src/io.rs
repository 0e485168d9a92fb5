//! Graph ingestion, generators and file output.

use std::fs;
use std::io::Write;
use std::path::Path;

use gridembed_core::embedding::GridEmbedding;
use gridembed_core::generators;
use gridembed_core::Graph;

use crate::CliError;

/// Largest graph a generator string may ask for.
const MAX_VERTICES: u64 = 1 << 26;

/// Parses a generator string such as `grid:64` or `tree:6,2`.
pub fn generate(family: &str) -> Result<Graph, CliError> {
    let bad = || CliError::Config(format!("malformed generator `{family}`"));
    let (kind, args) = family.split_once(':').ok_or_else(bad)?;
    let nums: Vec<u64> = args
        .split(',')
        .map(|a| a.trim().parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let one = |k: usize| -> Result<usize, CliError> {
        if nums.len() == 1 && nums[0] >= k as u64 {
            Ok(nums[0] as usize)
        } else {
            Err(bad())
        }
    };
    let vertices = match (kind, &nums[..]) {
        ("grid" | "gridinf", [k]) => k.checked_mul(*k),
        ("tree", [d, b]) => {
            (0..=*d).try_fold(0u64, |acc, i| acc.checked_add(b.checked_pow(i as u32)?))
        }
        (_, [n, ..]) => Some(*n),
        _ => None,
    };
    if vertices.map_or(true, |n| n > MAX_VERTICES) {
        return Err(CliError::Config(format!(
            "generator `{family}` is too large"
        )));
    }
    Ok(match kind {
        "path" => generators::path(one(1)?),
        "cycle" => generators::cycle(one(1)?),
        "grid" => generators::grid(one(1)?),
        "gridinf" => generators::gridinf(one(1)?),
        "tree" => match nums[..] {
            [d, b] => generators::tree(d as u32, b as usize),
            _ => return Err(bad()),
        },
        "er-bounded" => match nums[..] {
            [n, d, seed] if n >= 1 => generators::er_bounded(n as usize, d as usize, seed),
            _ => return Err(bad()),
        },
        _ => return Err(bad()),
    })
}

/// Reads an edge list: one `u v` pair per line, `#` starts a comment, and a
/// line with a single id declares a vertex without edges. An optional first
/// line `n <count>` fixes the vertex count; otherwise ids are `0..=max id`.
pub fn parse_edge_list(text: &str) -> Result<Graph, CliError> {
    let mut edges = Vec::new();
    let mut n = 0usize;
    let mut declared = None;
    let mut first = true;
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if std::mem::take(&mut first) {
            if let Some(count) = line
                .strip_prefix('n')
                .filter(|r| r.starts_with(char::is_whitespace))
            {
                let count: usize = count.trim().parse().map_err(|_| {
                    CliError::Config(format!("line {}: bad header `{line}`", i + 1))
                })?;
                declared = Some(count);
                continue;
            }
        }
        let ids: Vec<usize> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::Config(format!("line {}: expected vertex ids", i + 1)))?;
        match ids[..] {
            [v] => n = n.max(v + 1),
            [u, v] => {
                n = n.max(u.max(v) + 1);
                edges.push((u, v));
            }
            _ => {
                return Err(CliError::Config(format!(
                    "line {}: expected one or two ids",
                    i + 1
                )))
            }
        }
    }
    if let Some(count) = declared {
        if n > count {
            return Err(CliError::Config(format!(
                "vertex {} exceeds the declared count {count}",
                n - 1
            )));
        }
        n = count;
    }
    if n == 0 {
        return Err(CliError::Config("graph has no vertices".into()));
    }
    Ok(Graph::from_edges(n, &edges)?)
}

pub fn load_edge_list(path: &Path) -> Result<Graph, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_edge_list(&text)
}

/// One line per vertex: `v c_1 … c_N`, tab separated.
pub fn embedding_tsv(f: &GridEmbedding, n: usize) -> String {
    let mut out = String::new();
    for v in 0..n {
        out.push_str(&v.to_string());
        for c in f.full_row(v) {
            out.push('\t');
            out.push_str(&c.to_string());
        }
        out.push('\n');
    }
    out
}

/// Inverse of [`embedding_tsv`]; every vertex of `g` must appear once.
pub fn parse_embedding_tsv(g: &Graph, text: &str) -> Result<GridEmbedding, CliError> {
    let n = g.vertex_count();
    let mut rows: Vec<Option<Vec<i64>>> = vec![None; n];
    let mut dim = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| CliError::Config(format!("embedding line {}: {msg}", i + 1));
        let mut fields = line.split_whitespace();
        let v: usize = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err("bad vertex id"))?;
        let coords: Vec<i64> = fields
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| err("bad coordinate"))?;
        if v >= n {
            return Err(err("vertex out of range"));
        }
        if *dim.get_or_insert(coords.len()) != coords.len() {
            return Err(err("rows have different lengths"));
        }
        if rows[v].replace(coords).is_some() {
            return Err(err("duplicate vertex"));
        }
    }
    let dim = dim.unwrap_or(0);
    let mut f = GridEmbedding::zero(g, dim);
    f.columns = (0..dim).collect();
    f.coords = Vec::with_capacity(n * dim);
    for (v, row) in rows.into_iter().enumerate() {
        f.coords.extend(
            row.ok_or_else(|| CliError::Config(format!("embedding has no row for vertex {v}")))?,
        );
    }
    Ok(f)
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io)?;
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let mut file = fs::File::create(&tmp).map_err(io)?;
    file.write_all(contents).map_err(io)?;
    file.sync_all().map_err(io)?;
    drop(file);
    fs::rename(&tmp, path).map_err(io)
}
