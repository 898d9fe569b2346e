//! Library half of the `specsketch` binary.
//!
//! [`run_stream`] reads a text update stream in one pass, folds it into a
//! sketch stack, decodes a sparsifier and optionally checks it against the
//! exact oracle. [`selftest`] runs the bundled property checks.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use spectral_sketch::{
    decode, is_spectral_sparsifier, new_stack, relative_spectrum, DecodeError, DecodeStats, EdgeKey, EdgeUpdate,
    GlobalParams, Graph, Seed, SketchStack, Variant, WeightedGraph,
};
use thiserror::Error;

pub mod selftest;

pub use selftest::{selftest, SelftestReport};

/// Everything a run needs besides the stream itself.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Expected vertex count; must agree with the stream header when set.
    pub n: Option<usize>,
    pub eps: f64,
    pub gamma_base: Option<f64>,
    pub variant: Variant,
    pub seed: Seed,
    pub qjl: Option<usize>,
    pub d_threshold: Option<f64>,
    pub lambda_threshold: Option<f64>,
    pub beta: Option<f64>,
    pub verify: bool,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: None,
            eps: 0.5,
            gamma_base: None,
            variant: Variant::BallCarve,
            seed: Seed::from_u64(1),
            qjl: None,
            d_threshold: None,
            lambda_threshold: None,
            beta: None,
            verify: false,
            out: None,
            checkpoint: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |what: &str| Err(CliError::Config(what.to_string()));
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad("--eps must lie in (0, 1)");
        }
        if self.gamma_base.is_some_and(|g| !(g > 1.0 && g.is_finite())) {
            return bad("--gamma-base must be a finite number above 1");
        }
        if self.qjl == Some(0) {
            return bad("--qjl must be positive");
        }
        for (name, v) in [
            ("--d-threshold", self.d_threshold),
            ("--lambda-threshold", self.lambda_threshold),
            ("--beta", self.beta),
        ] {
            if v.is_some_and(|x| !(x > 0.0 && x.is_finite())) {
                return Err(CliError::Config(format!("{name} must be positive")));
            }
        }
        if self.n.is_some_and(|n| n < 2) {
            return bad("--n must be at least 2");
        }
        Ok(())
    }

    /// Decoder parameters for an `n`-vertex stream with overrides applied.
    pub fn params(&self, n: usize) -> Result<GlobalParams, CliError> {
        self.validate()?;
        if n < 2 {
            return Err(CliError::Config("streams need at least two vertices".into()));
        }
        let mut p = GlobalParams::new(n, self.eps, self.variant, self.gamma_base);
        if let Some(q) = self.qjl {
            p = p.with_qjl(q);
        }
        if let Some(d) = self.d_threshold {
            p = p.with_d(d);
        }
        if let Some(l) = self.lambda_threshold {
            p = p.with_flce_lambda(l);
        }
        if let Some(b) = self.beta {
            p = p.with_beta(b);
        }
        Ok(p)
    }

    pub fn stack_seed(&self) -> Seed {
        self.seed.derive(&[0])
    }

    pub fn decode_seed(&self) -> Seed {
        self.seed.derive(&[1])
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("stream line {line}: {msg}")]
    Stream { line: usize, msg: String },
    #[error("decode failed: {0}")]
    Decode(#[from] DecodeError),
    #[error("verification failed: relative spectrum [{lo:.4}, {hi:.4}] outside 1 ± {eps}")]
    Verify { lo: f64, hi: f64, eps: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Stream { .. } | CliError::Config(_) => 2,
            CliError::Decode(_) => 3,
            CliError::Verify { .. } => 4,
            CliError::Io(_) => 1,
        }
    }
}

/// One parsed stream line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamLine {
    Header(usize),
    Update(EdgeUpdate),
}

/// Parses a single line; `None` for blanks and comments.
pub fn parse_line(raw: &str, lineno: usize) -> Result<Option<StreamLine>, CliError> {
    let err = |msg: String| CliError::Stream { line: lineno, msg };
    let body = raw.split('#').next().unwrap_or("").trim();
    if body.is_empty() {
        return Ok(None);
    }
    let toks: Vec<&str> = body.split_whitespace().collect();
    let num = |t: &str| t.parse::<usize>().map_err(|_| err(format!("`{t}` is not a vertex index")));
    match toks.as_slice() {
        ["n", count] => Ok(Some(StreamLine::Header(
            count.parse().map_err(|_| err(format!("`{count}` is not a vertex count")))?,
        ))),
        [op @ ("+" | "-"), a, b] => {
            let e = EdgeKey::new(num(a)?, num(b)?).map_err(|e| err(e.to_string()))?;
            Ok(Some(StreamLine::Update(if *op == "+" { EdgeUpdate::insert(e) } else { EdgeUpdate::delete(e) })))
        }
        _ => Err(err(format!("expected `n <count>`, `+ u v` or `- u v`, got `{body}`"))),
    }
}

/// Sketch state after one pass, plus the exact graph kept for validation
/// and verification.
pub struct Ingested {
    pub params: GlobalParams,
    pub stack: SketchStack,
    pub graph: Graph,
    pub updates: usize,
}

/// Single pass over the stream. Every update goes straight into the stack.
pub fn ingest<R: BufRead>(cfg: &RunConfig, reader: R) -> Result<Ingested, CliError> {
    let mut state: Option<Ingested> = None;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let Some(parsed) = parse_line(&line, lineno)? else { continue };
        let err = |msg: String| CliError::Stream { line: lineno, msg };
        match (parsed, state.as_mut()) {
            (StreamLine::Header(n), None) => {
                if let Some(want) = cfg.n.filter(|&w| w != n) {
                    return Err(err(format!("header says n = {n} but --n is {want}")));
                }
                let params = cfg.params(n).map_err(|e| err(e.to_string()))?;
                let stack = new_stack(&params, cfg.stack_seed());
                state = Some(Ingested { params, stack, graph: Graph::new(n), updates: 0 });
            }
            (StreamLine::Header(_), Some(_)) => return Err(err("repeated header".into())),
            (StreamLine::Update(_), None) => return Err(err("missing `n <count>` header".into())),
            (StreamLine::Update(u), Some(st)) => {
                let checked = if u.delta > 0 { st.graph.insert(u.e) } else { st.graph.remove(u.e) };
                checked.map_err(|e| err(e.to_string()))?;
                st.stack.apply_update(u).map_err(|e| err(e.to_string()))?;
                st.updates += 1;
            }
        }
    }
    state.ok_or(CliError::Stream { line: 0, msg: "empty stream: missing `n <count>` header".into() })
}

#[derive(Clone, Debug)]
pub struct Report {
    pub n: usize,
    pub variant: Variant,
    pub updates: usize,
    pub input_edges: usize,
    pub sketch_bytes: usize,
    pub decode_time: Duration,
    pub sparsifier: WeightedGraph,
    pub stats: DecodeStats,
    /// `(min, max)` relative eigenvalue, present with `--verify`.
    pub spectrum: Option<(f64, f64)>,
    pub verdict: Option<bool>,
    pub checkpoint: Vec<u8>,
}

impl Report {
    pub fn edge_count(&self) -> usize {
        self.sparsifier.edge_count()
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "variant        {}", self.variant)?;
        writeln!(f, "n              {}", self.n)?;
        writeln!(f, "updates        {}", self.updates)?;
        writeln!(f, "input edges    {}", self.input_edges)?;
        writeln!(f, "sketch bytes   {}", self.sketch_bytes)?;
        writeln!(f, "decode ms      {:.3}", self.decode_time.as_secs_f64() * 1e3)?;
        writeln!(f, "output edges   {}", self.edge_count())?;
        if let Some((lo, hi)) = self.spectrum {
            writeln!(f, "spectrum       [{lo:.6}, {hi:.6}]")?;
        }
        if let Some(v) = self.verdict {
            writeln!(f, "verified       {v}")?;
        }
        Ok(())
    }
}

/// Ingests, decodes and (with `verify`) checks the result. A failed check is
/// reported in `verdict`, not as an error, so callers can still write outputs.
pub fn run_stream<R: BufRead>(cfg: &RunConfig, reader: R) -> Result<Report, CliError> {
    let ing = ingest(cfg, reader)?;
    let started = Instant::now();
    let out = decode(&ing.params, &ing.stack, cfg.decode_seed())?;
    let decode_time = started.elapsed();
    let checkpoint = ing.stack.checkpoint_bytes();
    let (spectrum, verdict) = if cfg.verify {
        let g = ing.graph.to_weighted();
        let spec = relative_spectrum(&g, &out.sparsifier).map_err(DecodeError::from)?;
        let ok = is_spectral_sparsifier(&g, &out.sparsifier, cfg.eps).map_err(DecodeError::from)?;
        (Some(spec), Some(ok))
    } else {
        (None, None)
    };
    Ok(Report {
        n: ing.graph.n(),
        variant: cfg.variant,
        updates: ing.updates,
        input_edges: ing.graph.edge_count(),
        sketch_bytes: ing.stack.sketch_bytes(),
        decode_time,
        sparsifier: out.sparsifier,
        stats: out.stats,
        spectrum,
        verdict,
        checkpoint,
    })
}

/// `u v w` lines in ascending linear-index order.
pub fn write_sparsifier(g: &WeightedGraph, w: &mut impl Write) -> std::io::Result<()> {
    let mut edges = g.edges();
    edges.sort_by_key(|(e, _)| e.linear_index());
    for (e, wt) in edges {
        writeln!(w, "{} {} {}", e.u, e.v, wt)?;
    }
    Ok(())
}

/// Writes the sparsifier (stdout when no `--out`) and the checkpoint file.
pub fn write_outputs(cfg: &RunConfig, report: &Report) -> Result<(), CliError> {
    match &cfg.out {
        Some(path) => {
            let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
            write_sparsifier(&report.sparsifier, &mut f)?;
            f.flush()?;
        }
        None => write_sparsifier(&report.sparsifier, &mut std::io::stdout().lock())?,
    }
    if let Some(path) = &cfg.checkpoint {
        std::fs::write(path, &report.checkpoint)?;
    }
    Ok(())
}

/// Renders a graph as a stream of insertions, with a header.
pub fn graph_to_stream(g: &Graph) -> String {
    let mut s = format!("n {}\n", g.n());
    for e in g.edges() {
        s.push_str(&format!("+ {} {}\n", e.u, e.v));
    }
    s
}
