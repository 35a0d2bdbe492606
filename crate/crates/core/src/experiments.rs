//! Parameter sweeps, Monte Carlo estimators and their persistence.
//!
//! A sweep walks the grid `beta × epsilon × boundary × size` (in that
//! nesting order). Each grid point is a [`Cell`]; replica `r` of cell `c`
//! draws from its own RNG stream `(seed, c << 32 | r)`, so results do not
//! depend on scheduling. Every finished cell is written to
//! `cells/cell-NNNNN.json` before the next one starts, and a rerun with the
//! same config reuses those files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::context_census;
use crate::error::{Error, Result};
use crate::lattice::{BoundaryCondition, Configuration, Path, Site, Spin, Window, MINUS};
use crate::sampler::{mask, sample_noise_field, ChainState, ExactSampler, McmcSettings, NoiseParams, RngStream};
use crate::specification::{extremal_rates, SpecificationParams, ENUMERATION_CAP};
use crate::theory::{self, Thresholds};

/// Version of the `results.csv` / `summary.json` layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "VNRF_OUTPUT_DIR";

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

const DEFAULT_OUTPUT_DIR: &str = "vnrf-output";

fn default_boundaries() -> Vec<BoundaryCondition> {
    vec![BoundaryCondition::AllPlus]
}

fn default_max_path_length() -> usize {
    6
}

/// Sweep description, read from TOML. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub betas: Vec<f64>,
    /// Noise levels in `[0, 1)`; `0` observes the hidden field directly.
    pub epsilons: Vec<f64>,
    #[serde(default = "default_boundaries")]
    pub boundaries: Vec<BoundaryCondition>,
    /// Side lengths of square windows.
    pub sizes: Vec<usize>,
    pub replicas: usize,
    pub seed: u64,
    /// Sweeps each replica chain runs before it is read; default `200 * size`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Longest open path (in sites) whose existence is recorded.
    #[serde(default = "default_max_path_length")]
    pub max_path_length: usize,
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: SweepConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &FsPath) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            context: "reading sweep config".into(),
            source,
        })?;
        SweepConfig::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.betas.is_empty() || self.epsilons.is_empty() || self.boundaries.is_empty() || self.sizes.is_empty() {
            return bad("betas, epsilons, boundaries and sizes must all be non-empty".into());
        }
        if let Some(b) = self.betas.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return bad(format!("beta {b} must be finite and nonnegative"));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e >= 0.0 && **e < 1.0)) {
            return bad(format!("epsilon {e} must lie in [0, 1)"));
        }
        if let Some(s) = self.sizes.iter().find(|s| **s < 3 || **s > 4096) {
            return bad(format!("window size {s} must lie in [3, 4096]"));
        }
        if self.replicas == 0 {
            return bad("replicas must be at least 1".into());
        }
        if self.max_path_length == 0 || self.max_path_length > 16 {
            return bad(format!("max_path_length {} must lie in [1, 16]", self.max_path_length));
        }
        self.thresholds()?;
        Ok(())
    }

    pub fn thresholds(&self) -> Result<Thresholds> {
        let d = Thresholds::default();
        Thresholds::new(self.p_star.unwrap_or(d.p_star), self.beta_c.unwrap_or(d.beta_c))
            .map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// `output_dir`, overridden by the environment variable when set.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        }
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &beta in &self.betas {
            for &epsilon in &self.epsilons {
                for &boundary in &self.boundaries {
                    for &size in &self.sizes {
                        cells.push(Cell { index: cells.len(), beta, epsilon, boundary, size });
                    }
                }
            }
        }
        cells
    }

    pub fn mcmc_settings(&self, size: usize) -> McmcSettings {
        let side = size as u64;
        McmcSettings { burn_in: self.burn_in.unwrap_or(200 * side), thin: side }
    }
}

/// One grid point of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub beta: f64,
    pub epsilon: f64,
    pub boundary: BoundaryCondition,
    pub size: usize,
}

impl Cell {
    pub fn window(&self) -> Result<Window> {
        Window::square(self.size, self.boundary)
    }

    pub fn params(&self) -> Result<SpecificationParams> {
        SpecificationParams::ising(self.beta)
    }

    pub fn stream(&self, replica: usize) -> u64 {
        (self.index as u64) << 32 | replica as u64
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cell {} (beta {}, epsilon {}, {} boundary, {}x{})",
            self.index, self.beta, self.epsilon, self.boundary, self.size, self.size
        )
    }
}

/// Binomial proportion with standard error `sqrt(p(1-p)/n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_counts(hits: usize, samples: usize) -> Self {
        let p = if samples == 0 { 0.0 } else { hits as f64 / samples as f64 };
        let stderr = if samples == 0 { 0.0 } else { (p * (1.0 - p) / samples as f64).sqrt() };
        Estimate { value: p, stderr, samples }
    }
}

/// Source of hidden configurations: exact for windows within the
/// enumeration cap, a heat-bath chain started from the boundary-aligned
/// configuration otherwise.
enum Hidden {
    Exact(Arc<ExactSampler>),
    Chain(Box<ChainState>, McmcSettings),
}

impl Hidden {
    fn new(params: &SpecificationParams, window: &Window, settings: McmcSettings) -> Result<Self> {
        Ok(if window.len() <= ENUMERATION_CAP {
            Hidden::Exact(Arc::new(ExactSampler::new(params, window)?))
        } else {
            Hidden::Chain(Box::new(ChainState::aligned(*params, *window)), settings)
        })
    }

    /// Same source with no chain history; exact tables are shared.
    fn restart(&self) -> Self {
        match self {
            Hidden::Exact(s) => Hidden::Exact(Arc::clone(s)),
            Hidden::Chain(state, settings) => {
                Hidden::Chain(Box::new(ChainState::aligned(*state.params(), *state.window())), *settings)
            }
        }
    }

    fn is_exact(&self) -> bool {
        matches!(self, Hidden::Exact(_))
    }

    fn draw(&mut self, rng: &mut RngStream) -> Configuration {
        match self {
            Hidden::Exact(s) => s.sample(rng),
            Hidden::Chain(state, settings) => {
                let sweeps = if state.sweeps() == 0 { settings.burn_in.max(1) } else { settings.thin.max(1) };
                state.run(sweeps, rng);
                state.configuration()
            }
        }
    }
}

fn observe(hidden: Configuration, epsilon: f64, rng: &mut RngStream) -> Result<Configuration> {
    if epsilon == 0.0 {
        return Ok(hidden);
    }
    let noise = sample_noise_field(&NoiseParams::new(epsilon)?, hidden.window(), rng);
    mask(&hidden, &noise)
}

/// One independent draw of the observed field for replica `replica`: a
/// fresh chain (or exact draw) on the replica's own stream.
pub fn draw_replica(cell: &Cell, settings: McmcSettings, seed: u64, replica: usize) -> Result<Configuration> {
    let hidden = Hidden::new(&cell.params()?, &cell.window()?, settings)?;
    draw_replica_from(&hidden, cell, seed, replica)
}

fn draw_replica_from(template: &Hidden, cell: &Cell, seed: u64, replica: usize) -> Result<Configuration> {
    let mut rng = RngStream::new(seed, cell.stream(replica));
    let x = template.restart().draw(&mut rng);
    observe(x, cell.epsilon, &mut rng)
}

/// Fraction of replicas whose -1 sites contain a cluster joining two
/// opposite window edges.
pub fn estimate_spanning_probability(cell: &Cell, replicas: usize, settings: McmcSettings, seed: u64) -> Result<Estimate> {
    let template = Hidden::new(&cell.params()?, &cell.window()?, settings)?;
    let mut hits = 0;
    for r in 0..replicas {
        let x = draw_replica_from(&template, cell, seed, r)?;
        if crate::context::has_spanning_cluster(&x) {
            hits += 1;
        }
    }
    Ok(Estimate::from_counts(hits, replicas))
}

/// Spanning probability of an i.i.d. field with `P(-1) = p`.
pub fn estimate_bernoulli_spanning(p: f64, size: usize, replicas: usize, seed: u64, stream: u64) -> Result<Estimate> {
    let window = Window::square(size, BoundaryCondition::AllPlus)?;
    let noise = NoiseParams::new(p)?;
    let mut rng = RngStream::new(seed, stream);
    let hits = (0..replicas)
        .filter(|_| crate::context::has_spanning_cluster(&sample_noise_field(&noise, &window, &mut rng)))
        .count();
    Ok(Estimate::from_counts(hits, replicas))
}

/// For each path, the frequency with which every one of its sites reads -1,
/// over `samples` draws of one long chain (or exact draws) on a plus
/// boundary window.
pub fn estimate_path_minus_probability(
    params: &SpecificationParams,
    epsilon: f64,
    window: &Window,
    paths: &[Path],
    samples: usize,
    settings: McmcSettings,
    rng: &mut RngStream,
) -> Result<Vec<Estimate>> {
    if window.boundary() != BoundaryCondition::AllPlus {
        return Err(Error::RequiresPlusBoundary);
    }
    let indices: Vec<Vec<usize>> = paths
        .iter()
        .map(|p| {
            p.sites()
                .iter()
                .map(|&s| match window.index(s) {
                    Some(k) if !window.is_edge(s) => Ok(k),
                    _ => Err(Error::InvalidPath(format!("site {s} is not strictly inside the window"))),
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut hidden = Hidden::new(params, window, settings)?;
    let mut hits = vec![0usize; paths.len()];
    for _ in 0..samples {
        let x = observe(hidden.draw(rng), epsilon, rng)?;
        let spins = x.spins();
        for (h, idx) in hits.iter_mut().zip(&indices) {
            if idx.iter().all(|&k| spins[k] == MINUS) {
                *h += 1;
            }
        }
    }
    Ok(hits.into_iter().map(|h| Estimate::from_counts(h, samples)).collect())
}

/// Frequency of the increasing event "every site of `block` reads +1".
pub fn estimate_all_plus_probability(
    params: &SpecificationParams,
    epsilon: f64,
    window: &Window,
    block: &[Site],
    samples: usize,
    settings: McmcSettings,
    rng: &mut RngStream,
) -> Result<Estimate> {
    let indices: Vec<usize> = block.iter().map(|&s| window.index(s).ok_or(Error::SiteOutsideWindow(s))).collect::<Result<_>>()?;
    let mut hidden = Hidden::new(params, window, settings)?;
    let mut hits = 0;
    for _ in 0..samples {
        let x = observe(hidden.draw(rng), epsilon, rng)?;
        if indices.iter().all(|&k| x.spins()[k] != MINUS) {
            hits += 1;
        }
    }
    Ok(Estimate::from_counts(hits, samples))
}

/// Longest self-avoiding path of -1 sites (capped at `cap`) that starts at a
/// neighbor of `center` and never visits `center`.
pub fn longest_open_path(x: &Configuration, center: Site, cap: usize) -> usize {
    fn extend(x: &Configuration, center: Site, path: &mut Vec<Site>, cap: usize, best: &mut usize) {
        *best = (*best).max(path.len());
        if *best >= cap {
            return;
        }
        let last = *path.last().expect("non-empty");
        let body_len = path.len() - 1;
        for next in last.neighbor_array() {
            if next == center
                || x.spin(next) != Some(MINUS)
                || path[..body_len].iter().any(|s| *s == next || s.is_neighbor(next))
            {
                continue;
            }
            path.push(next);
            extend(x, center, path, cap, best);
            path.pop();
        }
    }
    let mut best = 0;
    for start in center.neighbor_array() {
        if x.spin(start) == Some(MINUS) {
            let mut path = vec![start];
            extend(x, center, &mut path, cap, &mut best);
        }
    }
    best
}

/// Closed-form predictions evaluated at a cell's parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryFlags {
    pub lambda0_plus: f64,
    pub lambda0_minus: f64,
    pub thm2_finite: bool,
    pub thm2_infinite: bool,
    pub remark_beta_bound: Option<f64>,
    pub thm3_epsilon_bound: f64,
    pub thm3_region: bool,
    pub thm3_beta_admissible: bool,
    /// `(e^{-2 beta} + eps)^n` for `n = 1..=max_path_length`.
    pub lemma1_bounds: Vec<f64>,
    /// `4 * 3^(n-1) * (e^{-2 beta} + eps)^n`, capped at 1.
    pub open_path_union_bounds: Vec<f64>,
}

impl TheoryFlags {
    pub fn compute(beta: f64, epsilon: f64, max_path_length: usize, thresholds: &Thresholds) -> Result<Self> {
        let rates = extremal_rates(&SpecificationParams::ising(beta)?);
        let lemma1_bounds: Vec<f64> = (1..=max_path_length).map(|n| theory::lemma1_bound(beta, epsilon, n)).collect();
        let open_path_union_bounds = lemma1_bounds
            .iter()
            .enumerate()
            .map(|(k, b)| (theory::path_count_bound(k + 1) as f64 * b).min(1.0))
            .collect();
        Ok(TheoryFlags {
            lambda0_plus: rates.lambda0_plus,
            lambda0_minus: rates.lambda0_minus,
            thm2_finite: theory::thm2_finite_condition(epsilon, rates.lambda0_plus, thresholds),
            thm2_infinite: theory::thm2_infinite_condition(epsilon, rates.lambda0_minus, thresholds),
            remark_beta_bound: theory::remark_beta_bound(epsilon, thresholds),
            thm3_epsilon_bound: theory::thm3_epsilon_bound(beta),
            thm3_region: theory::thm3_region(beta, epsilon),
            thm3_beta_admissible: theory::thm3_beta_admissible(beta),
            lemma1_bounds,
            open_path_union_bounds,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub code_version: String,
    pub p_star: f64,
    pub beta_c: f64,
}

/// Estimates for one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cell: Cell,
    pub replicas: usize,
    /// `"exact"` or `"mcmc"`.
    pub sampler: String,
    pub burn_in: u64,
    pub spanning: Estimate,
    /// Over resolved contexts of all sites of all replicas.
    pub context_size_mean: Option<f64>,
    pub context_size_median: Option<f64>,
    /// Truncated contexts among non-edge sites, pooled over replicas.
    pub truncated_fraction: f64,
    pub max_minus_cluster_mean: f64,
    /// `P(some -1 path of n sites leaves a neighbor of the center)` for `n = 1..`.
    pub open_path_frequencies: Vec<Estimate>,
    /// Resolved context size -> count.
    pub context_size_histogram: BTreeMap<usize, u64>,
    pub theory: TheoryFlags,
    pub provenance: Provenance,
}

fn histogram_median(h: &BTreeMap<usize, u64>) -> Option<f64> {
    let total: u64 = h.values().sum();
    if total == 0 {
        return None;
    }
    let nth = |rank: u64| {
        let mut seen = 0;
        for (&size, &count) in h {
            seen += count;
            if seen > rank {
                return size as f64;
            }
        }
        unreachable!("rank below total")
    };
    Some(if total % 2 == 1 { nth(total / 2) } else { (nth(total / 2 - 1) + nth(total / 2)) / 2.0 })
}

/// Runs every replica of one cell.
pub fn run_cell(cell: &Cell, config: &SweepConfig) -> Result<SweepResult> {
    let thresholds = config.thresholds()?;
    let settings = config.mcmc_settings(cell.size);
    let params = cell.params()?;
    let window = cell.window()?;
    let template = Hidden::new(&params, &window, settings)?;
    let exact = template.is_exact();
    let center = window.center();
    let mut spanning = 0;
    let mut histogram: BTreeMap<usize, u64> = BTreeMap::new();
    let mut size_sum = 0u64;
    let (mut interior, mut truncated) = (0usize, 0usize);
    let mut cluster_sum = 0usize;
    let mut path_hits = vec![0usize; config.max_path_length];
    for r in 0..config.replicas {
        let x = draw_replica_from(&template, cell, config.seed, r)?;
        let census = context_census(&x);
        spanning += census.spanning as usize;
        for s in census.resolved_sizes() {
            *histogram.entry(s).or_default() += 1;
            size_sum += s as u64;
        }
        interior += census.interior_sites;
        truncated += census.truncated_interior;
        cluster_sum += census.max_minus_cluster;
        let longest = longest_open_path(&x, center, config.max_path_length);
        for hit in &mut path_hits[..longest] {
            *hit += 1;
        }
    }
    let resolved: u64 = histogram.values().sum();
    Ok(SweepResult {
        cell: *cell,
        replicas: config.replicas,
        sampler: if exact { "exact" } else { "mcmc" }.into(),
        burn_in: if exact { 0 } else { settings.burn_in },
        spanning: Estimate::from_counts(spanning, config.replicas),
        context_size_mean: (resolved > 0).then(|| size_sum as f64 / resolved as f64),
        context_size_median: histogram_median(&histogram),
        truncated_fraction: if interior == 0 { 0.0 } else { truncated as f64 / interior as f64 },
        max_minus_cluster_mean: cluster_sum as f64 / config.replicas as f64,
        open_path_frequencies: path_hits.iter().map(|&h| Estimate::from_counts(h, config.replicas)).collect(),
        context_size_histogram: histogram,
        theory: TheoryFlags::compute(cell.beta, cell.epsilon, config.max_path_length, &thresholds)?,
        provenance: Provenance {
            seed: config.seed,
            code_version: CODE_VERSION.into(),
            p_star: thresholds.p_star,
            beta_c: thresholds.beta_c,
        },
    })
}

/// Everything that determines a cell's result; a cached cell is reused only
/// when this matches exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CellKey {
    cell: Cell,
    replicas: usize,
    seed: u64,
    burn_in: u64,
    max_path_length: usize,
    p_star: f64,
    beta_c: f64,
    code_version: String,
}

#[derive(Serialize, Deserialize)]
struct CellRecord {
    key: CellKey,
    result: SweepResult,
}

fn cell_key(cell: &Cell, config: &SweepConfig) -> Result<CellKey> {
    let t = config.thresholds()?;
    let s = config.mcmc_settings(cell.size);
    Ok(CellKey {
        cell: *cell,
        replicas: config.replicas,
        seed: config.seed,
        burn_in: s.burn_in,
        max_path_length: config.max_path_length,
        p_star: t.p_star,
        beta_c: t.beta_c,
        code_version: CODE_VERSION.into(),
    })
}

fn io_err(path: &FsPath, context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Error + '_ {
    let context = context.into();
    move |source| Error::Io { path: path.to_path_buf(), context, source }
}

fn write_atomic(path: &FsPath, bytes: &[u8], context: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp, context))?;
    fs::rename(&tmp, path).map_err(io_err(path, context))
}

fn load_cached(path: &FsPath, key: &CellKey) -> Option<SweepResult> {
    let text = fs::read_to_string(path).ok()?;
    let record: CellRecord = serde_json::from_str(&text).ok()?;
    (record.key == *key).then_some(record.result)
}

/// Top-level contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub code_version: String,
    pub config: SweepConfig,
    pub results: Vec<SweepResult>,
}

/// Runs (or resumes) a sweep and writes `results.csv` and `summary.json`
/// into the resolved output directory.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepResult>> {
    run_sweep_in(config, &config.resolved_output_dir())
}

pub fn run_sweep_in(config: &SweepConfig, out: &FsPath) -> Result<Vec<SweepResult>> {
    config.validate()?;
    let cells_dir = out.join("cells");
    fs::create_dir_all(&cells_dir).map_err(io_err(&cells_dir, "creating output directory"))?;
    let results = config
        .cells()
        .par_iter()
        .map(|cell| {
            let key = cell_key(cell, config)?;
            let path = cells_dir.join(format!("cell-{:05}.json", cell.index));
            if let Some(result) = load_cached(&path, &key) {
                return Ok(result);
            }
            let result = run_cell(cell, config).map_err(|e| Error::InvalidArgument(format!("{cell}: {e}")))?;
            let record = CellRecord { key, result };
            let bytes = serde_json::to_vec_pretty(&record).expect("results serialize");
            write_atomic(&path, &bytes, &format!("writing {cell}"))?;
            Ok(record.result)
        })
        .collect::<Result<Vec<_>>>()?;
    write_results_csv(&results, &out.join("results.csv"))?;
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        code_version: CODE_VERSION.into(),
        config: config.clone(),
        results: results.clone(),
    };
    let mut bytes = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    bytes.push(b'\n');
    write_atomic(&out.join("summary.json"), &bytes, "writing summary")?;
    Ok(results)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Column names of `results.csv`; per-length columns follow for
/// `n = 1..=max_path_length`.
pub const CSV_COLUMNS: &[&str] = &[
    "cell",
    "beta",
    "epsilon",
    "boundary",
    "size",
    "replicas",
    "sampler",
    "burn_in",
    "spanning_probability",
    "spanning_stderr",
    "context_size_mean",
    "context_size_median",
    "truncated_fraction",
    "max_minus_cluster_mean",
    "lambda0_plus",
    "lambda0_minus",
    "thm2_finite",
    "thm2_infinite",
    "remark_beta_bound",
    "thm3_epsilon_bound",
    "thm3_region",
    "thm3_beta_admissible",
    "seed",
    "code_version",
    "p_star",
    "beta_c",
];

pub fn write_results_csv(results: &[SweepResult], path: &FsPath) -> Result<()> {
    let max_len = results.iter().map(|r| r.open_path_frequencies.len()).max().unwrap_or(0);
    let mut header: Vec<String> = CSV_COLUMNS.iter().map(|s| s.to_string()).collect();
    for n in 1..=max_len {
        header.extend([format!("open_path_{n}"), format!("open_path_{n}_stderr"), format!("lemma1_bound_{n}")]);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for r in results {
        let t = &r.theory;
        let mut row = vec![
            r.cell.index.to_string(),
            r.cell.beta.to_string(),
            r.cell.epsilon.to_string(),
            r.cell.boundary.to_string(),
            r.cell.size.to_string(),
            r.replicas.to_string(),
            r.sampler.clone(),
            r.burn_in.to_string(),
            r.spanning.value.to_string(),
            r.spanning.stderr.to_string(),
            opt(r.context_size_mean),
            opt(r.context_size_median),
            r.truncated_fraction.to_string(),
            r.max_minus_cluster_mean.to_string(),
            t.lambda0_plus.to_string(),
            t.lambda0_minus.to_string(),
            t.thm2_finite.to_string(),
            t.thm2_infinite.to_string(),
            opt(t.remark_beta_bound),
            t.thm3_epsilon_bound.to_string(),
            t.thm3_region.to_string(),
            t.thm3_beta_admissible.to_string(),
            r.provenance.seed.to_string(),
            r.provenance.code_version.clone(),
            r.provenance.p_star.to_string(),
            r.provenance.beta_c.to_string(),
        ];
        for n in 0..max_len {
            let f = r.open_path_frequencies.get(n);
            row.push(opt(f.map(|e| e.value)));
            row.push(opt(f.map(|e| e.stderr)));
            row.push(opt(t.lemma1_bounds.get(n).copied()));
        }
        w.write_record(&row).expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory flush");
    write_atomic(path, &bytes, "writing results.csv")
}

/// Reads `summary.json` from a file or from the directory containing it.
pub fn load_summary(path: &FsPath) -> Result<Summary> {
    let file = if path.is_dir() { path.join("summary.json") } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).map_err(io_err(&file, "reading results"))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { path: file, source: Box::new(e) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    PhaseDiagram,
    ContextSizeHistogram,
    Lemma1Comparison,
    Scaling,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] =
        [PlotKind::PhaseDiagram, PlotKind::ContextSizeHistogram, PlotKind::Lemma1Comparison, PlotKind::Scaling];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::PhaseDiagram => "phase_diagram",
            PlotKind::ContextSizeHistogram => "context_size_histogram",
            PlotKind::Lemma1Comparison => "lemma1_comparison",
            PlotKind::Scaling => "scaling",
        }
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlotKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::UnknownPlotKind(s.into()))
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Long-format table: every row has the same columns.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotTable {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl PlotTable {
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

const CURVE_POINTS: usize = 100;

/// Builds the table for one plot kind. Measured rows carry
/// `series = "measured"`; computed region boundaries carry the name of the
/// curve.
pub fn emit_plot_data(results: &[SweepResult], kind: PlotKind, thresholds: &Thresholds) -> Result<PlotTable> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("no results to plot".into()));
    }
    let cell_cols = |r: &SweepResult| {
        vec![r.cell.beta.to_string(), r.cell.epsilon.to_string(), r.cell.boundary.to_string(), r.cell.size.to_string()]
    };
    let table = match kind {
        PlotKind::PhaseDiagram => {
            let mut rows = Vec::new();
            for r in results {
                let mut row = vec!["measured".to_string()];
                row.extend(cell_cols(r));
                row.extend([
                    r.spanning.value.to_string(),
                    r.spanning.stderr.to_string(),
                    r.truncated_fraction.to_string(),
                    r.theory.thm2_finite.to_string(),
                    r.theory.thm2_infinite.to_string(),
                    r.theory.thm3_region.to_string(),
                ]);
                rows.push(row);
            }
            let curve = |name: &str, beta: f64, eps: f64| {
                let mut row = vec![name.to_string(), beta.to_string(), eps.to_string()];
                row.extend(std::iter::repeat_n(String::new(), 8));
                row
            };
            for k in 0..CURVE_POINTS {
                let eps = k as f64 / CURVE_POINTS as f64;
                if let Some(beta) = theory::remark_beta_bound(eps, thresholds) {
                    rows.push(curve("remark_curve", beta, eps));
                }
            }
            let beta_max = results.iter().map(|r| r.cell.beta).fold(2.0, f64::max);
            let beta_min = 3f64.ln() / 2.0;
            for k in 0..=CURVE_POINTS {
                let beta = beta_min + (beta_max - beta_min) * k as f64 / CURVE_POINTS as f64;
                rows.push(curve("thm3_curve", beta, theory::thm3_epsilon_bound(beta).max(0.0)));
            }
            for k in 0..=CURVE_POINTS {
                let beta = beta_max * k as f64 / CURVE_POINTS as f64;
                let rates = extremal_rates(&SpecificationParams::ising(beta)?);
                if let Some(eps) = theory::thm2_infinite_epsilon_threshold(rates.lambda0_minus, thresholds) {
                    rows.push(curve("thm2_infinite_curve", beta, eps));
                }
            }
            PlotTable {
                columns: vec![
                    "series",
                    "beta",
                    "epsilon",
                    "boundary",
                    "size",
                    "spanning_probability",
                    "spanning_stderr",
                    "truncated_fraction",
                    "thm2_finite",
                    "thm2_infinite",
                    "thm3_region",
                ],
                rows,
            }
        }
        PlotKind::ContextSizeHistogram => {
            let mut rows = Vec::new();
            for r in results {
                let total: u64 = r.context_size_histogram.values().sum();
                for (&size, &count) in &r.context_size_histogram {
                    let mut row = cell_cols(r);
                    row.extend([size.to_string(), count.to_string(), (count as f64 / total as f64).to_string()]);
                    rows.push(row);
                }
            }
            PlotTable {
                columns: vec!["beta", "epsilon", "boundary", "size", "context_size", "count", "fraction"],
                rows,
            }
        }
        PlotKind::Lemma1Comparison => {
            let mut rows = Vec::new();
            for r in results {
                for (k, f) in r.open_path_frequencies.iter().enumerate() {
                    let mut row = cell_cols(r);
                    row.extend([
                        (k + 1).to_string(),
                        f.value.to_string(),
                        f.stderr.to_string(),
                        r.theory.lemma1_bounds[k].to_string(),
                        r.theory.open_path_union_bounds[k].to_string(),
                    ]);
                    rows.push(row);
                }
            }
            PlotTable {
                columns: vec![
                    "beta",
                    "epsilon",
                    "boundary",
                    "size",
                    "path_length",
                    "open_path_frequency",
                    "stderr",
                    "lemma1_bound",
                    "union_bound",
                ],
                rows,
            }
        }
        PlotKind::Scaling => {
            let mut sorted: Vec<&SweepResult> = results.iter().collect();
            sorted.sort_by(|a, b| {
                (a.cell.beta, a.cell.epsilon, a.cell.boundary.name(), a.cell.size)
                    .partial_cmp(&(b.cell.beta, b.cell.epsilon, b.cell.boundary.name(), b.cell.size))
                    .expect("finite parameters")
            });
            let rows = sorted
                .into_iter()
                .map(|r| {
                    let mut row = cell_cols(r);
                    row.extend([
                        r.truncated_fraction.to_string(),
                        r.spanning.value.to_string(),
                        r.spanning.stderr.to_string(),
                        opt(r.context_size_mean),
                    ]);
                    row
                })
                .collect();
            PlotTable {
                columns: vec![
                    "beta",
                    "epsilon",
                    "boundary",
                    "size",
                    "truncated_fraction",
                    "spanning_probability",
                    "spanning_stderr",
                    "context_size_mean",
                ],
                rows,
            }
        }
    };
    Ok(table)
}

/// Writes `plots/<kind>.csv` under `out` and returns its path.
pub fn write_plot_data(summary: &Summary, kind: PlotKind, out: &FsPath) -> Result<PathBuf> {
    let thresholds = summary.config.thresholds()?;
    let table = emit_plot_data(&summary.results, kind, &thresholds)?;
    let dir = out.join("plots");
    fs::create_dir_all(&dir).map_err(io_err(&dir, "creating plots directory"))?;
    let path = dir.join(format!("{kind}.csv"));
    write_atomic(&path, &table.to_csv(), "writing plot data")?;
    Ok(path)
}

/// Reads a grid of `+`/`-` characters, one row per line; blank lines and
/// whitespace are ignored. Row `r`, column `c` is site `(r, c)`.
pub fn parse_configuration(text: &str, boundary: BoundaryCondition) -> Result<Configuration> {
    let rows: Vec<Vec<Spin>> = text
        .lines()
        .map(|l| l.chars().filter(|c| !c.is_whitespace()).collect::<String>())
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.chars()
                .map(|c| match c {
                    '+' => Ok(crate::lattice::PLUS),
                    '-' => Ok(MINUS),
                    other => Err(Error::InvalidArgument(format!("unexpected character {other:?} in configuration"))),
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(Error::InvalidArgument("configuration has no rows".into()));
    }
    if rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::InvalidArgument("configuration rows differ in length".into()));
    }
    Configuration::from_rows(&rows, boundary)
}
