//! Batch front end: percolation sweeps, stability curves, verification suites and reductions.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 configuration error,
//! 3 stochastic failure (no usable spanning network for this seed).

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::gate_suite;
use crate::graphlike::{reduce_to_cluster, rule_suite, verify_excerpts, Instance, ReduceOptions, Stage};
use crate::percolation::{percolation_probability, stability_curve, write_csv, CurveRow, PercKind, TrialPlan, RNG_IDENTITY};
use crate::statevector::DEFAULT_CAP;
use crate::verify::{ddw_suite, domain_suite, symmetry_suite};
use crate::zd::PrimeDim;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Default worker count when `--threads` is absent.
pub const THREADS_ENV: &str = "QUDIT_MBQC_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STOCHASTIC: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "qudit-mbqc", version, about = "Qudit SPT resource states: percolation, rewrite rules and gate verification")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Spanning probability versus L.
    Percolate(PercolateArgs),
    /// Spanning probability versus edge-deletion probability.
    Stability(StabilityArgs),
    /// Run verification suites and report pass/fail as JSON.
    Verify(VerifyArgs),
    /// Reduce a sampled graph-like state to a square cluster-like state.
    Reduce(ReduceArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Rules,
    Gates,
    Symmetry,
    Domain,
    Ddw,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LatticeArg {
    Honeycomb,
    Square,
}

impl From<LatticeArg> for PercKind {
    fn from(l: LatticeArg) -> Self {
        match l {
            LatticeArg::Honeycomb => PercKind::Honeycomb,
            LatticeArg::Square => PercKind::Square,
        }
    }
}

#[derive(Args, Debug)]
pub struct Common {
    #[arg(long, default_value_t = 3)]
    pub d: u32,
    /// SPT class index; recorded in outputs, and used where the state depends on it.
    #[arg(long, default_value_t = 1)]
    pub k: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PercolateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "honeycomb")]
    pub lattice: LatticeArg,
    /// Sizes: `a..b` (inclusive), `a..b:step` or `a,b,c`.
    #[arg(long = "L", default_value = "10,20,30")]
    pub l: String,
    #[arg(long, default_value_t = 10000)]
    pub trials: u64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "honeycomb")]
    pub lattice: LatticeArg,
    #[arg(long = "L", default_value = "10,20,30")]
    pub l: String,
    /// Deletion probabilities: `a..b:step` or a list.
    #[arg(long = "p-grid", default_value = "0..0.5:0.02")]
    pub p_grid: String,
    /// Outcome patterns per point.
    #[arg(long, default_value_t = 50)]
    pub patterns: u64,
    /// Deletion draws per pattern.
    #[arg(long, default_value_t = 50)]
    pub deletions: u64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "all")]
    pub suite: Suite,
    /// Random host graphs for the rule suite.
    #[arg(long, default_value_t = 200)]
    pub graphs: usize,
    /// Random weight assignments per gate construction.
    #[arg(long, default_value_t = 20)]
    pub assignments: usize,
}

#[derive(Args, Debug)]
pub struct ReduceArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "honeycomb")]
    pub lattice: LatticeArg,
    #[arg(long = "L", default_value_t = 10)]
    pub l: usize,
    /// Side of the target square grid.
    #[arg(long, default_value_t = 2)]
    pub w: usize,
    /// Minimum grid cell size in faces (default L/5).
    #[arg(long)]
    pub block: Option<usize>,
    /// Largest schedule excerpt checked against the state vector; 0 skips the check.
    #[arg(long = "verify-max")]
    pub verify_max: Option<usize>,
}

/// Everything needed to reproduce a run; embedded in every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub d: u32,
    pub k: u32,
    pub lattice: Option<PercKind>,
    #[serde(rename = "L")]
    pub l: Vec<usize>,
    pub trials: Option<u64>,
    pub seed: u64,
    pub p_grid: Vec<f64>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub suite: Option<Suite>,
    pub w: Option<usize>,
}

impl RunConfig {
    fn base(subcommand: &str, c: &Common, format: Format) -> Self {
        RunConfig {
            subcommand: subcommand.into(),
            d: c.d,
            k: c.k,
            lattice: None,
            l: Vec::new(),
            trials: None,
            seed: c.seed,
            p_grid: Vec::new(),
            out: c.out.clone(),
            format,
            suite: None,
            w: None,
        }
    }
}

/// Provenance block written next to every result.
#[derive(Clone, Debug, Serialize)]
pub struct Meta {
    pub schema: &'static str,
    pub tool: &'static str,
    pub version: &'static str,
    pub rng: &'static str,
    pub config: RunConfig,
}

impl Meta {
    pub fn new(config: RunConfig) -> Self {
        Meta { schema: "qudit-mbqc/meta/1", tool: "qudit-mbqc", version: VERSION, rng: RNG_IDENTITY, config }
    }
}

/// `a..b`, `a..b:step` or a comma list of integers.
pub fn parse_sizes(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Invalid(format!("size list {s:?}; use a..b, a..b:step or a,b,c"));
    let v: Vec<usize> = if let Some((a, rest)) = s.split_once("..") {
        let (b, step) = rest.split_once(':').unwrap_or((rest, "1"));
        let (a, b, step): (usize, usize, usize) =
            (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?, step.trim().parse().map_err(|_| bad())?);
        if step == 0 || a > b {
            return Err(bad());
        }
        (a..=b).step_by(step).collect()
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if v.is_empty() {
        return Err(bad());
    }
    Ok(v)
}

/// `a..b:step` (inclusive, step required) or a comma list of probabilities.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Invalid(format!("p-grid {s:?}; use a..b:step or a,b,c"));
    let v: Vec<f64> = if let Some((a, rest)) = s.split_once("..") {
        let (b, step) = rest.split_once(':').ok_or_else(bad)?;
        let (a, b, step): (f64, f64, f64) =
            (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?, step.trim().parse().map_err(|_| bad())?);
        if !(step > 0.0) || a > b {
            return Err(bad());
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| ((a + i as f64 * step) * 1e9).round() / 1e9).collect()
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if v.is_empty() || v.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(bad());
    }
    Ok(v)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Subcritical(_) => EXIT_STOCHASTIC,
        Error::Io(_) => EXIT_CHECK_FAILED,
        _ => EXIT_CONFIG,
    }
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// CSV rows to `out` with a JSON provenance sidecar, or one JSON document.
fn emit_curve(meta: Meta, rows: &[CurveRow]) -> Result<()> {
    let out = meta.config.out.clone();
    match meta.config.format {
        Format::Csv => {
            write_csv(sink(&out)?, rows)?;
            let m = serde_json::to_string_pretty(&meta)?;
            match &out {
                Some(p) => std::fs::write(sidecar(p), m)?,
                None => eprintln!("{m}"),
            }
        }
        Format::Json => {
            let doc = serde_json::json!({ "schema": "qudit-mbqc/curve/1", "meta": meta, "rows": rows });
            let mut w = sink(&out)?;
            serde_json::to_writer_pretty(&mut w, &doc)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

fn emit_json(doc: &serde_json::Value, out: &Option<PathBuf>) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn cmd_percolate(a: &PercolateArgs) -> Result<i32> {
    let d = PrimeDim::new(a.common.d)?;
    let sizes = parse_sizes(&a.l)?;
    let kind = PercKind::from(a.lattice);
    let mut cfg = RunConfig::base("percolate", &a.common, a.format);
    cfg.lattice = Some(kind);
    cfg.l = sizes.clone();
    cfg.trials = Some(a.trials);
    let mut rows = Vec::new();
    for &l in &sizes {
        let plan = TrialPlan { d, l, kind, trials: a.trials, seed: a.common.seed, delete_p: None };
        let e = percolation_probability(&plan)?;
        rows.push(CurveRow { kind, d: d.get(), l, trials: a.trials, seed: a.common.seed, delete_p: 0.0, prob: e.prob, stderr: e.stderr });
    }
    emit_curve(Meta::new(cfg), &rows)?;
    Ok(EXIT_OK)
}

pub fn cmd_stability(a: &StabilityArgs) -> Result<i32> {
    let d = PrimeDim::new(a.common.d)?;
    let sizes = parse_sizes(&a.l)?;
    let grid = parse_grid(&a.p_grid)?;
    let kind = PercKind::from(a.lattice);
    let mut cfg = RunConfig::base("stability", &a.common, a.format);
    cfg.lattice = Some(kind);
    cfg.l = sizes.clone();
    cfg.trials = Some(a.patterns * a.deletions);
    cfg.p_grid = grid.clone();
    let mut rows = Vec::new();
    for &l in &sizes {
        for (p, e) in stability_curve(d, kind, l, a.patterns, a.deletions, a.common.seed, &grid)? {
            rows.push(CurveRow { kind, d: d.get(), l, trials: e.samples, seed: a.common.seed, delete_p: p, prob: e.prob, stderr: e.stderr });
        }
    }
    emit_curve(Meta::new(cfg), &rows)?;
    Ok(EXIT_OK)
}

/// One suite's outcome in the verify summary.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteLine {
    pub suite: Suite,
    pub passed: bool,
    pub min_fidelity: f64,
    pub first_failure: Option<String>,
}

fn run_suite(s: Suite, d: PrimeDim, a: &VerifyArgs) -> Result<(SuiteLine, serde_json::Value)> {
    let k = a.common.k;
    let (passed, min_fidelity, first_failure, doc) = match s {
        Suite::Rules => {
            let r = rule_suite(d, a.graphs, 6, a.common.seed)?;
            (r.passed, r.min_fidelity, r.failures.first().cloned(), serde_json::to_value(&r)?)
        }
        Suite::Gates => {
            let r = gate_suite(d, a.assignments, a.common.seed)?;
            (r.passed, r.min_fidelity, r.first_failure.clone(), serde_json::to_value(&r)?)
        }
        Suite::Symmetry => {
            let r = symmetry_suite(&[d], &[k])?;
            (r.passed, r.min_fidelity, r.first_failure.clone(), serde_json::to_value(&r)?)
        }
        Suite::Domain => {
            let r = domain_suite(&[d], &[k])?;
            (r.passed, r.min_fidelity, r.first_failure.clone(), serde_json::to_value(&r)?)
        }
        Suite::Ddw => {
            let r = ddw_suite(&[d])?;
            (r.passed, r.min_fidelity, r.first_failure.clone(), serde_json::to_value(&r)?)
        }
        Suite::All => unreachable!("expanded by the caller"),
    };
    Ok((SuiteLine { suite: s, passed, min_fidelity, first_failure }, doc))
}

pub fn cmd_verify(a: &VerifyArgs) -> Result<i32> {
    let d = PrimeDim::new(a.common.d)?;
    if k_is_trivial(d, a.common.k) {
        return Err(Error::TrivialClass);
    }
    let suites = match a.suite {
        Suite::All => vec![Suite::Rules, Suite::Gates, Suite::Symmetry, Suite::Domain, Suite::Ddw],
        s => vec![s],
    };
    // odd-d suites fail early, before any work
    if suites.iter().any(|s| matches!(s, Suite::Rules | Suite::Gates)) {
        d.require_odd("rule and gate suites")?;
    }
    let mut cfg = RunConfig::base("verify", &a.common, Format::Json);
    cfg.suite = Some(a.suite);
    let mut lines = Vec::new();
    let mut docs = Vec::new();
    for s in suites {
        let (line, doc) = run_suite(s, d, a)?;
        eprintln!(
            "{:<9} {}  min fidelity {:.12}{}",
            format!("{s:?}").to_lowercase(),
            if line.passed { "PASS" } else { "FAIL" },
            line.min_fidelity,
            line.first_failure.as_ref().map(|f| format!("  first failure: {f}")).unwrap_or_default()
        );
        lines.push(line);
        docs.push(doc);
    }
    let passed = lines.iter().all(|l| l.passed);
    let first_failure = lines.iter().find(|l| !l.passed).map(|l| format!("{:?}: {}", l.suite, l.first_failure.clone().unwrap_or_default()));
    let doc = serde_json::json!({
        "schema": "qudit-mbqc/verify/1",
        "meta": Meta::new(cfg),
        "passed": passed,
        "first_failure": first_failure,
        "summary": lines,
        "suites": docs,
    });
    emit_json(&doc, &a.common.out)?;
    Ok(if passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn k_is_trivial(d: PrimeDim, k: u32) -> bool {
    k % d.get() == 0
}

pub fn cmd_reduce(a: &ReduceArgs) -> Result<i32> {
    let d = PrimeDim::new(a.common.d)?;
    d.require_odd("reduction")?;
    if k_is_trivial(d, a.common.k) {
        return Err(Error::TrivialClass);
    }
    let kind = PercKind::from(a.lattice);
    let mut cfg = RunConfig::base("reduce", &a.common, Format::Json);
    cfg.lattice = Some(kind);
    cfg.l = vec![a.l];
    cfg.w = Some(a.w);
    let inst = Instance::sample(d, kind, a.l, a.common.k, a.common.seed)?;
    let opts = ReduceOptions { w: a.w, block: a.block, seed: a.common.seed };
    let red = match reduce_to_cluster(&inst.graph, &inst.embedding, &opts) {
        Ok(r) => r,
        Err(Error::Subcritical(why)) => {
            eprintln!("subcritical instance: {why}; retry with another --seed, a larger --L or a smaller --w");
            return Ok(EXIT_STOCHASTIC);
        }
        Err(e) => return Err(e),
    };
    // the final grid is oracle-checked only while its state vector fits
    let final_size = d.as_usize().checked_pow(red.graph.vertex_count() as u32).unwrap_or(usize::MAX);
    let stabilizers = if final_size <= DEFAULT_CAP { Some(red.graph.stabilizer_check()?) } else { None };
    let max_q = a.verify_max.unwrap_or(if d.get() == 3 { 10 } else { 7 });
    let excerpts = if max_q > 0 { Some(verify_excerpts(&inst.graph, &red.schedule, max_q)?) } else { None };
    let passed = stabilizers.as_ref().map_or(true, |s| s.passed) && excerpts.as_ref().map_or(true, |e| e.passed());
    eprintln!(
        "reduced {} qudits to a {}x{} grid with {} steps (clean {}, merge {}, shorten {}); {}",
        inst.graph.vertex_count(),
        a.w,
        a.w,
        red.schedule.len(),
        red.count(Stage::Clean),
        red.count(Stage::Merge),
        red.count(Stage::Shorten),
        match (&stabilizers, &excerpts) {
            (None, None) => "symbolic only".to_string(),
            _ => format!("oracle checks {}", if passed { "pass" } else { "FAIL" }),
        }
    );
    let doc = serde_json::json!({
        "schema": "qudit-mbqc/reduction/1",
        "meta": Meta::new(cfg),
        "initial_vertices": inst.graph.vertex_count(),
        "initial_edges": inst.graph.edge_count(),
        "network_size": red.network_size,
        "frame_length": red.frame_length,
        "schedule": red.schedule,
        "final_graph": { "edges": red.graph.edges(), "grid": red.grid },
        "stabilizer_check": stabilizers,
        "excerpts": excerpts,
        "symbolic_only": stabilizers.is_none(),
        "passed": passed,
    });
    emit_json(&doc, &a.common.out)?;
    Ok(if passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}

/// Parses `args` (program name first) and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.threads {
        // a second build in the same process (tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let r = match &cli.command {
        Command::Percolate(a) => cmd_percolate(a),
        Command::Stability(a) => cmd_stability(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Reduce(a) => cmd_reduce(a),
    };
    match r {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
