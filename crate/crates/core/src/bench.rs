//! Experiment harness behind the `patchmg` binary: run specifications,
//! full solves, smoother timings and traffic simulations.

use std::fmt::Display;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::dof_map::{n_dofs, DofVector};
use crate::error::{invalid, Error, Result};
use crate::mesh::{PatchOrdering, COLOR_BY_COLOR};
use crate::multigrid::{unit_rhs, MultigridSolver, SolveConfig};
use crate::smoothers::{Direction, LevelContext, Smoother, SmootherConfig, SmootherKind};
use crate::traffic::{record_trace, simulate_sweep, CacheConfig, TraceOptions, DEFAULT_LINE_ELEMS};

/// Version of the CSV columns and JSON keys written by the harness.
pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_SOLVE_REPS: usize = 1;
pub const DEFAULT_BENCH_REPS: usize = 20;

/// Default simulated cache: this fraction of one solution vector.
pub const DEFAULT_CACHE_FRACTION: usize = 32;

const SEED: u64 = 0x5eed;

/// One experiment configuration. List-valued fields span a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub dim: usize,
    pub degree: usize,
    pub levels: Vec<usize>,
    pub variants: Vec<SmootherKind>,
    pub orderings: Vec<PatchOrdering>,
    /// `None`: one batch per color.
    pub batch_sizes: Option<Vec<usize>>,
    pub threads: Vec<usize>,
    pub tol: f64,
    /// `tol` exactly as given.
    pub tol_text: String,
    pub reps: Option<usize>,
    pub max_iterations: usize,
    /// `None`: capacity derived from the vector size.
    pub cache_lines: Option<Vec<usize>>,
    pub line_elems: usize,
    pub metadata: bool,
    pub out: Option<PathBuf>,
    pub trace_out: Option<PathBuf>,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            dim: 2,
            degree: 3,
            levels: vec![3],
            variants: vec![SmootherKind::CombinedColorized],
            orderings: vec![PatchOrdering::ZCurve],
            batch_sizes: None,
            threads: vec![1],
            tol: 1e-12,
            tol_text: "1e-12".into(),
            reps: None,
            max_iterations: 100,
            cache_lines: None,
            line_elems: DEFAULT_LINE_ELEMS,
            metadata: false,
            out: None,
            trace_out: None,
        }
    }
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::InvalidArgument(format!("{key}: cannot parse '{value}': {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    let items: Vec<T> = value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_one(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return invalid(format!("{key}: empty list"));
    }
    Ok(items)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => invalid(format!("{key}: expected a boolean, got '{value}'")),
    }
}

/// `key=value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("config line {}: expected key=value", n + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

impl RunSpec {
    /// Applies one setting; keys are the long flag names without dashes
    /// (`_` and `-` are interchangeable).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = key.trim().trim_start_matches("--").replace('_', "-");
        match k.as_str() {
            "dim" => self.dim = parse_one(&k, value)?,
            "degree" => self.degree = parse_one(&k, value)?,
            "level" | "levels" => self.levels = parse_list(&k, value)?,
            "variant" => self.variants = parse_list(&k, value)?,
            "ordering" => self.orderings = parse_list(&k, value)?,
            "batch-size" => self.batch_sizes = Some(parse_list(&k, value)?),
            "threads" => self.threads = parse_list(&k, value)?,
            "tol" => {
                self.tol = parse_one(&k, value)?;
                self.tol_text = value.trim().to_string();
            }
            "reps" => self.reps = Some(parse_one(&k, value)?),
            "max-iter" => self.max_iterations = parse_one(&k, value)?,
            "cache-lines" => self.cache_lines = Some(parse_list(&k, value)?),
            "line-elems" => self.line_elems = parse_one(&k, value)?,
            "metadata" => self.metadata = parse_bool(&k, value)?,
            "out" => self.out = Some(PathBuf::from(value.trim())),
            "trace-out" => self.trace_out = Some(PathBuf::from(value.trim())),
            _ => return invalid(format!("unknown setting '{key}'")),
        }
        Ok(())
    }

    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: impl IntoIterator<Item = (K, V)>) -> Result<Self> {
        let mut spec = RunSpec::default();
        for (k, v) in pairs {
            spec.set(k.as_ref(), v.as_ref())?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_config_str(text: &str) -> Result<Self> {
        Self::from_pairs(parse_config(text)?)
    }

    /// Rejects inconsistent combinations.
    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.dim) {
            return invalid(format!("dim must be 2 or 3, got {}", self.dim));
        }
        if !(1..=10).contains(&self.degree) {
            return invalid(format!("degree must be in 1..=10, got {}", self.degree));
        }
        if self.levels.is_empty() || self.variants.is_empty() || self.orderings.is_empty() {
            return invalid("level, variant and ordering must not be empty");
        }
        let all_batched = self.variants.iter().all(|&v| v == SmootherKind::Batched);
        if let Some(sizes) = &self.batch_sizes {
            if !all_batched {
                return invalid("--batch-size requires the batched variant");
            }
            if sizes.contains(&0) {
                return invalid("batch sizes must be at least 1");
            }
        }
        if self.threads.contains(&0) {
            return invalid("thread count must be at least 1");
        }
        if self.threads.iter().any(|&t| t > 1) && !all_batched {
            return invalid("more than one thread requires the batched variant");
        }
        if !(self.tol > 0.0) {
            return invalid(format!("tol must be positive, got {}", self.tol_text));
        }
        if self.reps == Some(0) {
            return invalid("reps must be at least 1");
        }
        if self.line_elems == 0 || self.cache_lines.as_ref().is_some_and(|c| c.contains(&0)) {
            return invalid("cache lines and line size must be at least 1");
        }
        Ok(())
    }

    fn single<'a, T: std::fmt::Debug>(&self, name: &str, v: &'a [T]) -> Result<&'a T> {
        match v {
            [x] => Ok(x),
            _ => invalid(format!("solve takes a single {name}, got {v:?}")),
        }
    }

    fn batch_list(&self) -> Vec<Option<usize>> {
        match &self.batch_sizes {
            Some(s) => s.iter().map(|&b| Some(b)).collect(),
            None => vec![None],
        }
    }

    /// Every (level, variant, ordering, n_B, threads) combination.
    fn configurations(&self) -> Vec<(usize, SmootherConfig, Option<usize>)> {
        let mut out = Vec::new();
        for &level in &self.levels {
            for &kind in &self.variants {
                for &ordering in &self.orderings {
                    for nb in self.batch_list() {
                        for &threads in &self.threads {
                            let config = SmootherConfig::new(kind)
                                .with_ordering(ordering)
                                .with_batch_size(nb.unwrap_or(COLOR_BY_COLOR))
                                .with_threads(threads);
                            out.push((level, config, nb));
                        }
                    }
                }
            }
        }
        out
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Result of [`cmd_solve`]; `report` is the JSON object written out.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub converged: bool,
    pub report: serde_json::Value,
}

pub fn cmd_solve(spec: &RunSpec) -> Result<SolveOutcome> {
    spec.validate()?;
    let level = *spec.single("level", &spec.levels)?;
    let kind = *spec.single("variant", &spec.variants)?;
    let ordering = *spec.single("ordering", &spec.orderings)?;
    let nb = *spec.single("batch size", &spec.batch_list())?;
    let threads = *spec.single("thread count", &spec.threads)?;
    let reps = spec.reps.unwrap_or(DEFAULT_SOLVE_REPS);
    let smoother = SmootherConfig::new(kind)
        .with_ordering(ordering)
        .with_batch_size(nb.unwrap_or(COLOR_BY_COLOR))
        .with_threads(threads);
    let config = SolveConfig {
        tolerance: spec.tol,
        max_iterations: spec.max_iterations,
        smoother,
        ..SolveConfig::default()
    };
    let mut solver = MultigridSolver::new(spec.dim, spec.degree, level, config)?;
    let b = unit_rhs(solver.finest().grid)?;

    let mut samples = Vec::with_capacity(reps);
    let mut reports = Vec::with_capacity(reps);
    for _ in 0..reps {
        let mut u = DofVector::zeros(*b.layout());
        let start = Instant::now();
        let report = solver.solve(&mut u, &b)?;
        samples.push(start.elapsed().as_secs_f64());
        reports.push(report);
    }
    let last = reports.last().expect("reps >= 1").clone();
    let avg = |f: &dyn Fn(&crate::multigrid::Timings) -> f64| mean(&reports.iter().map(|r| f(&r.timings)).collect::<Vec<_>>());
    let (smoothing, residual, transfer, coarse) =
        (avg(&|t| t.smoothing), avg(&|t| t.residual), avg(&|t| t.transfer), avg(&|t| t.coarse));
    let solve_seconds = mean(&samples);
    let per_it = |x: f64| if last.iterations == 0 { 0.0 } else { x / last.iterations as f64 };
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "solve",
        "dim": spec.dim,
        "degree": spec.degree,
        "level": level,
        "variant": kind.name(),
        "ordering": ordering.name(),
        "batch_size": nb,
        "threads": threads,
        "tol": spec.tol,
        "tol_input": spec.tol_text,
        "dofs": n_dofs(spec.dim, spec.degree, level),
        "iterations": last.iterations,
        "converged": last.converged,
        "initial_residual": last.initial_residual(),
        "final_residual": last.final_residual(),
        "relative_residual": last.relative_residual(),
        "residual_history": last.residuals,
        "repetitions": reps,
        "samples": samples,
        "solve_seconds": solve_seconds,
        "per_iteration": {
            "smoothing_seconds": per_it(smoothing),
            "vmult_seconds": per_it(residual),
        },
        "breakdown": {
            "smoothing": smoothing,
            "residual": residual,
            "transfer": transfer,
            "coarse": coarse,
            "other": (solve_seconds - smoothing - residual - transfer - coarse).max(0.0),
        },
    });
    Ok(SolveOutcome { converged: last.converged, report })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub level: usize,
    pub variant: String,
    pub ordering: String,
    #[serde(rename = "n_B")]
    pub n_b: Option<usize>,
    pub threads: usize,
    pub smoother_seconds_mean: f64,
    pub vmult_seconds_mean: f64,
    pub ratio: f64,
    pub cell_apply_count: u64,
    pub schema_version: u32,
}

/// Times smoother sweeps against the matrix-free product on the same
/// level, after one untimed warm-up of each.
pub fn cmd_smoother_bench(spec: &RunSpec) -> Result<Vec<BenchRow>> {
    spec.validate()?;
    let reps = spec.reps.unwrap_or(DEFAULT_BENCH_REPS);
    let mut rows = Vec::new();
    let mut cache: Option<LevelContext> = None;
    for (level, config, nb) in spec.configurations() {
        if cache.as_ref().map(|c| c.level()) != Some(level) {
            cache = Some(LevelContext::new(spec.dim, spec.degree, level)?);
        }
        let ctx = cache.as_ref().expect("context built above");
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let mut u = DofVector::random(ctx.grid, &mut rng);
        let b = DofVector::random(ctx.grid, &mut rng);
        let mut smoother = Smoother::new(ctx, config)?;

        let stats = smoother.sweep(ctx, &mut u, &b, Direction::Forward)?;
        let mut dst = DofVector::zeros(ctx.grid);
        ctx.operator.vmult(&u, &mut dst);
        // Interleaved so both see the same machine state.
        let (mut smooth_t, mut vmult_t) = (0.0, 0.0);
        for _ in 0..reps {
            let start = Instant::now();
            smoother.sweep(ctx, &mut u, &b, Direction::Forward)?;
            smooth_t += start.elapsed().as_secs_f64();
            let start = Instant::now();
            ctx.operator.vmult(&u, &mut dst);
            vmult_t += start.elapsed().as_secs_f64();
        }
        let (smooth_t, vmult_t) = (smooth_t / reps as f64, vmult_t / reps as f64);

        rows.push(BenchRow {
            level,
            variant: config.kind.name().into(),
            ordering: config.ordering.name().into(),
            n_b: nb,
            threads: config.threads,
            smoother_seconds_mean: smooth_t,
            vmult_seconds_mean: vmult_t,
            ratio: smooth_t / vmult_t,
            cell_apply_count: stats.cell_applies,
            schema_version: SCHEMA_VERSION,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrafficRow {
    pub variant: String,
    pub ordering: String,
    #[serde(rename = "n_B")]
    pub n_b: Option<usize>,
    pub capacity: usize,
    pub doubles_per_dof: f64,
    pub schema_version: u32,
}

/// Default simulated capacity in lines for a level with `n_dofs` DoFs.
pub fn default_cache_lines(n_dofs: usize, line_elems: usize) -> usize {
    (n_dofs / DEFAULT_CACHE_FRACTION / line_elems).max(1)
}

/// Simulated doubles per DoF of one forward sweep for every configuration
/// and capacity.
pub fn cmd_traffic(spec: &RunSpec) -> Result<Vec<TrafficRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    let mut cache: Option<LevelContext> = None;
    for (level, config, nb) in spec.configurations() {
        if cache.as_ref().map(|c| c.level()) != Some(level) {
            cache = Some(LevelContext::new(spec.dim, spec.degree, level)?);
        }
        let ctx = cache.as_ref().expect("context built above");
        let schedule = config.schedule(spec.dim, level)?;
        if let Some(path) = &spec.trace_out {
            let trace = record_trace(ctx, &config, &schedule, &TraceOptions { metadata: spec.metadata, ..Default::default() })?;
            trace.write_binary(std::io::BufWriter::new(std::fs::File::create(path)?))?;
        }
        let capacities = match &spec.cache_lines {
            Some(c) => c.clone(),
            None => vec![default_cache_lines(ctx.n_dofs(), spec.line_elems)],
        };
        for capacity in capacities {
            let cc = CacheConfig::new(capacity, spec.line_elems)?;
            let report = simulate_sweep(ctx, &config, &schedule, &cc, spec.metadata)?;
            rows.push(TrafficRow {
                variant: config.kind.name().into(),
                ordering: config.ordering.name().into(),
                n_b: nb,
                capacity,
                doubles_per_dof: report.doubles_per_dof,
                schema_version: SCHEMA_VERSION,
            });
        }
    }
    Ok(rows)
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Serialization(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Serialization(e.to_string()))
}
