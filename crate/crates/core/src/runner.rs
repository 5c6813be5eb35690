//! Subcommand implementations and file formats.
//!
//! `simulate` writes into the output directory:
//!
//! * `summary.json`: configuration, per-tree metadata and witness results
//! * `leaves.csv`: `tree_id,path,row,col,span,pooled_C,pooled_A,efficiency,total_time`
//! * `partitions.csv`: `tree_id,row,col,span`
//! * `mc_trials.csv`: per-trial Monte Carlo witness values
//!
//! `summary.json` together with `leaves.csv` is sufficient to rebuild every
//! estimate, which is what `--reanalyze` does.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SubtractMode, UncertaintyChoice};
use crate::error::{Error, Result};
use crate::sampler::{run_acquisition, IterativeStop, PartitionTree, RateEstimate};
use crate::source::{Basis, Component, ComponentGrids, GridSpec, IndexRect, SourceModel};
use crate::uncertainty::{evaluate, monte_carlo, propagate_error, EstimatePair, UncertaintyReport};
use crate::witness::{
    dimensionality_bound, estimate_distribution, max_certifiable, DimensionalityBound,
    EstimateMethod, LeafSummary, WitnessResult,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Per-tree metadata needed to rebuild an estimate from its leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeMeta {
    pub tree_id: u32,
    pub basis: Basis,
    pub component: Component,
    pub grid: GridSpec,
    pub leaves: usize,
    pub partition_passes: usize,
    pub iterative_passes: usize,
    pub acquisitions: u64,
    pub model_time: f64,
    pub total_rate: RateEstimate,
    pub budget_exhausted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeData {
    pub meta: TreeMeta,
    pub leaves: Vec<LeafSummary>,
}

impl TreeData {
    pub fn from_tree(tree: &PartitionTree, acquisition_time: f64) -> Result<Self> {
        Ok(Self {
            meta: TreeMeta {
                tree_id: tree.tree_id,
                basis: tree.basis,
                component: tree.component,
                grid: tree.grid,
                leaves: tree.leaf_count(),
                partition_passes: tree.partition_passes,
                iterative_passes: tree.iterative_passes,
                acquisitions: tree.acquisitions,
                model_time: tree.acquisitions as f64 * acquisition_time,
                total_rate: tree.total,
                budget_exhausted: tree.budget_exhausted,
            },
            leaves: tree.leaf_summaries(None)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: EstimateMethod,
    pub witness: WitnessResult,
    pub dimensionality: DimensionalityBound,
    pub propagation: Option<UncertaintyReport>,
    pub monte_carlo: Option<UncertaintyReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    /// Seconds since the Unix epoch when the file was written.
    pub timestamp: u64,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub source: SourceModel,
    pub trees: Vec<TreeMeta>,
    pub total_leaves: usize,
    /// `2 n^4`: pixel-by-pixel measurement of both bases.
    pub naive_measurements: f64,
    pub improvement_factor: f64,
    pub max_certifiable: f64,
    pub continuous_ef: f64,
    pub oracle_ef: Option<f64>,
    pub results: Vec<MethodSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisOptions {
    pub subtract: SubtractMode,
    pub uncertainty: UncertaintyChoice,
    pub mc_trials: usize,
    pub seed: u64,
}

impl AnalysisOptions {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            subtract: cfg.analysis.subtract,
            uncertainty: cfg.analysis.uncertainty,
            mc_trials: cfg.analysis.mc_trials,
            seed: cfg.seed,
        }
    }
}

/// Pairs trees as (position, momentum) per component, in component order.
pub fn estimate_pairs(trees: &[TreeData], subtract: bool) -> Result<Vec<EstimatePair>> {
    let mut pairs = Vec::new();
    for c in [Component::X, Component::Y] {
        let find = |b: Basis| trees.iter().find(|t| t.meta.basis == b && t.meta.component == c);
        match (find(Basis::Position), find(Basis::Momentum)) {
            (Some(p), Some(k)) => {
                let est = |t: &TreeData| {
                    estimate_distribution(t.meta.basis, c, t.meta.grid, t.leaves.clone(), subtract)
                };
                pairs.push((est(p)?, est(k)?));
            }
            (None, None) => {}
            _ => {
                return Err(Error::Format(format!(
                    "component {} is missing a basis",
                    c.label()
                )))
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::Format("no trees to analyze".into()));
    }
    Ok(pairs)
}

pub fn analyze(trees: &[TreeData], opts: AnalysisOptions) -> Result<Vec<MethodSummary>> {
    opts.subtract
        .flags()
        .iter()
        .map(|&subtract| {
            let pairs = estimate_pairs(trees, subtract)?;
            let mut witness = evaluate(&pairs)?;
            let propagation = match opts.uncertainty {
                UncertaintyChoice::MonteCarlo => None,
                _ => {
                    let mut r = propagate_error(&pairs)?;
                    r.sensitivities = None;
                    Some(r)
                }
            };
            let monte_carlo = match opts.uncertainty {
                UncertaintyChoice::Propagation => None,
                _ => Some(monte_carlo(&pairs, opts.mc_trials, opts.seed)?),
            };
            witness.sigma = propagation
                .as_ref()
                .or(monte_carlo.as_ref())
                .map_or(0.0, |r| r.ef_sigma);
            witness.uncertainty_method = propagation
                .as_ref()
                .or(monte_carlo.as_ref())
                .map(|r| r.method);
            Ok(MethodSummary {
                method: witness.method,
                dimensionality: dimensionality_bound(witness.ef_bound)?,
                witness,
                propagation,
                monte_carlo,
            })
        })
        .collect()
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn naive_measurements(n: usize) -> f64 {
    2.0 * (n as f64).powi(4)
}

fn max_certifiable_for(grids: &[ComponentGrids]) -> Result<f64> {
    let (x, y) = (grids[0], grids[1]);
    max_certifiable(
        x.position.delta(),
        y.position.delta(),
        x.momentum.delta(),
        y.momentum.delta(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub summary: Summary,
    pub trees: Vec<TreeData>,
}

fn build_summary(
    cfg: &ExperimentConfig,
    source: SourceModel,
    grids: &[ComponentGrids],
    trees: &[TreeData],
    opts: AnalysisOptions,
) -> Result<Summary> {
    let n = cfg.grid.n;
    let total_leaves: usize = trees.iter().map(|t| t.leaves.len()).sum();
    let naive = naive_measurements(n);
    let oracle_ef = if cfg.analysis.oracle {
        Some(source.oracle_ef_bound(grids)?)
    } else {
        None
    };
    let mut config = cfg.clone();
    config.seed = opts.seed;
    config.analysis.subtract = opts.subtract;
    Ok(Summary {
        schema_version: SCHEMA_VERSION,
        timestamp: unix_now(),
        seed: opts.seed,
        config,
        source,
        trees: trees.iter().map(|t| t.meta.clone()).collect(),
        total_leaves,
        naive_measurements: naive,
        improvement_factor: naive / total_leaves as f64,
        max_certifiable: max_certifiable_for(grids)?,
        continuous_ef: source.continuous_ef_bound(&[Component::X, Component::Y]),
        oracle_ef,
        results: analyze(trees, opts)?,
    })
}

/// Full acquisition and analysis for one configuration.
pub fn simulate(cfg: &ExperimentConfig, opts: AnalysisOptions) -> Result<SimulationOutput> {
    let source = cfg.source_model()?;
    let grids = cfg.grids(&source, cfg.grid.n)?;
    let mut det = cfg.detector();
    det.rng_seed = opts.seed;
    let acq = run_acquisition(&source, &grids, &det, &cfg.sampler_params())?;
    info!(
        "acquisition done: {} leaves, improvement {:.3e}",
        acq.total_leaves(),
        naive_measurements(cfg.grid.n) / acq.total_leaves() as f64
    );
    let trees = acq
        .trees
        .iter()
        .map(|t| TreeData::from_tree(t, det.acquisition_time))
        .collect::<Result<Vec<_>>>()?;
    let summary = build_summary(cfg, source, &grids, &trees, opts)?;
    Ok(SimulationOutput { summary, trees })
}

#[derive(Debug, Serialize, Deserialize)]
struct LeafRow {
    tree_id: u32,
    path: String,
    row: usize,
    col: usize,
    span: usize,
    #[serde(rename = "pooled_C")]
    pooled_c: f64,
    #[serde(rename = "pooled_A")]
    pooled_a: f64,
    efficiency: f64,
    total_time: f64,
}

#[derive(Debug, Serialize)]
struct PartitionRow {
    tree_id: u32,
    row: usize,
    col: usize,
    span: usize,
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

pub fn write_leaves_csv(path: &Path, trees: &[TreeData]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for t in trees {
        for l in &t.leaves {
            w.serialize(LeafRow {
                tree_id: t.meta.tree_id,
                path: l.path.clone(),
                row: l.rect.row,
                col: l.rect.col,
                span: l.rect.rows,
                pooled_c: l.pooled_c,
                pooled_a: l.pooled_a,
                efficiency: l.efficiency,
                total_time: l.total_time,
            })
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_partitions_csv(path: &Path, trees: &[TreeData]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for t in trees {
        for l in &t.leaves {
            w.serialize(PartitionRow {
                tree_id: t.meta.tree_id,
                row: l.rect.row,
                col: l.rect.col,
                span: l.rect.rows,
            })
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_mc_csv(path: &Path, results: &[MethodSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["method", "trial", "ef"]).map_err(csv_err)?;
    for r in results {
        if let Some(mc) = &r.monte_carlo {
            let label = if r.method.subtract() { "subtracted" } else { "raw" };
            for (i, v) in mc.trial_values.iter().enumerate() {
                w.write_record([label.to_string(), i.to_string(), v.to_string()])
                    .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_leaves_csv(path: &Path, metas: &[TreeMeta]) -> Result<Vec<TreeData>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut trees: Vec<TreeData> = metas
        .iter()
        .map(|m| TreeData {
            meta: m.clone(),
            leaves: Vec::new(),
        })
        .collect();
    for row in r.deserialize::<LeafRow>() {
        let row = row.map_err(csv_err)?;
        let t = trees
            .iter_mut()
            .find(|t| t.meta.tree_id == row.tree_id)
            .ok_or_else(|| Error::Format(format!("unknown tree_id {}", row.tree_id)))?;
        t.leaves.push(LeafSummary {
            path: row.path,
            rect: IndexRect::square(row.row, row.col, row.span),
            pooled_c: row.pooled_c,
            pooled_a: row.pooled_a,
            efficiency: row.efficiency,
            total_time: row.total_time,
        });
    }
    for t in &trees {
        if t.leaves.len() != t.meta.leaves {
            return Err(Error::Format(format!(
                "tree {} lists {} leaves but the CSV has {}",
                t.meta.tree_id,
                t.meta.leaves,
                t.leaves.len()
            )));
        }
        let rects: Vec<IndexRect> = t.leaves.iter().map(|l| l.rect).collect();
        crate::witness::check_tiling(t.meta.grid.n(), &rects)?;
    }
    Ok(trees)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_simulation(dir: &Path, out: &SimulationOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("summary.json"), &out.summary)?;
    write_leaves_csv(&dir.join("leaves.csv"), &out.trees)?;
    write_partitions_csv(&dir.join("partitions.csv"), &out.trees)?;
    write_mc_csv(&dir.join("mc_trials.csv"), &out.summary.results)?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let text = fs::read_to_string(path)?;
    let s: Summary = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    if s.schema_version != SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported schema version {}",
            s.schema_version
        )));
    }
    Ok(s)
}

/// Rebuilds every estimate from a previous run's files and repeats the
/// analysis.
pub fn reanalyze(dir: &Path, opts: Option<AnalysisOptions>) -> Result<SimulationOutput> {
    let old = read_summary(&dir.join("summary.json"))?;
    let trees = read_leaves_csv(&dir.join("leaves.csv"), &old.trees)?;
    let opts = opts.unwrap_or(AnalysisOptions {
        seed: old.seed,
        ..AnalysisOptions::from_config(&old.config)
    });
    let grids: Vec<ComponentGrids> = [Component::X, Component::Y]
        .into_iter()
        .filter_map(|c| {
            let g = |b| old.trees.iter().find(|t| t.basis == b && t.component == c).map(|t| t.grid);
            Some(ComponentGrids {
                component: c,
                position: g(Basis::Position)?,
                momentum: g(Basis::Momentum)?,
            })
        })
        .collect();
    let summary = build_summary(&old.config, old.source, &grids, &trees, opts)?;
    Ok(SimulationOutput { summary, trees })
}

/// One `sweep-time` checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeCheckpoint {
    pub records_per_leaf: usize,
    pub time_per_partition: f64,
    pub ef_raw: Option<f64>,
    pub sigma_raw: Option<f64>,
    pub ef_subtracted: Option<f64>,
    pub sigma_subtracted: Option<f64>,
}

/// Runs one acquisition until every leaf holds the largest checkpoint's
/// record count, then evaluates each checkpoint on the leading records.
pub fn sweep_time(cfg: &ExperimentConfig, subtract: SubtractMode, seed: u64) -> Result<Vec<TimeCheckpoint>> {
    let source = cfg.source_model()?;
    let grids = cfg.grids(&source, cfg.grid.n)?;
    let mut det = cfg.detector();
    det.rng_seed = seed;
    let mut params = cfg.sampler_params();
    let last = *cfg.sweep.checkpoints.last().expect("validated non-empty");
    params.iterative = IterativeStop::RecordsPerLeaf(last);
    let acq = run_acquisition(&source, &grids, &det, &params)?;
    let mut out = Vec::new();
    for &k in &cfg.sweep.checkpoints {
        let mut row = TimeCheckpoint {
            records_per_leaf: k,
            time_per_partition: k as f64 * det.acquisition_time,
            ef_raw: None,
            sigma_raw: None,
            ef_subtracted: None,
            sigma_subtracted: None,
        };
        for &sub in subtract.flags() {
            let pairs: Vec<EstimatePair> = acq
                .trees
                .chunks(2)
                .map(|c| Ok((c[0].estimate(sub, Some(k))?, c[1].estimate(sub, Some(k))?)))
                .collect::<Result<_>>()?;
            let r = propagate_error(&pairs)?;
            if sub {
                row.ef_subtracted = Some(r.ef_bound);
                row.sigma_subtracted = Some(r.ef_sigma);
            } else {
                row.ef_raw = Some(r.ef_bound);
                row.sigma_raw = Some(r.ef_sigma);
            }
        }
        info!("checkpoint {k} records/leaf: raw {:?} subtracted {:?}", row.ef_raw, row.ef_subtracted);
        out.push(row);
    }
    Ok(out)
}

/// One `sweep-resolution` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionRow {
    pub n: usize,
    pub leaves: usize,
    pub naive_measurements: f64,
    pub improvement_factor: f64,
    pub ef_raw: Option<f64>,
    pub sigma_raw: Option<f64>,
    pub ef_subtracted: Option<f64>,
    pub sigma_subtracted: Option<f64>,
    pub oracle_ef: f64,
}

pub fn sweep_resolution(cfg: &ExperimentConfig, subtract: SubtractMode, seed: u64) -> Result<Vec<ResolutionRow>> {
    let source = cfg.source_model()?;
    let mut det = cfg.detector();
    det.rng_seed = seed;
    let params = cfg.sampler_params();
    cfg.sweep
        .resolutions
        .iter()
        .map(|&n| {
            let grids = cfg.grids(&source, n)?;
            let acq = run_acquisition(&source, &grids, &det, &params)?;
            let trees = acq
                .trees
                .iter()
                .map(|t| TreeData::from_tree(t, det.acquisition_time))
                .collect::<Result<Vec<_>>>()?;
            let leaves = acq.total_leaves();
            let naive = naive_measurements(n);
            let mut row = ResolutionRow {
                n,
                leaves,
                naive_measurements: naive,
                improvement_factor: naive / leaves as f64,
                ef_raw: None,
                sigma_raw: None,
                ef_subtracted: None,
                sigma_subtracted: None,
                oracle_ef: source.oracle_ef_bound(&grids)?,
            };
            for &sub in subtract.flags() {
                let r = propagate_error(&estimate_pairs(&trees, sub)?)?;
                if sub {
                    row.ef_subtracted = Some(r.ef_bound);
                    row.sigma_subtracted = Some(r.ef_sigma);
                } else {
                    row.ef_raw = Some(r.ef_bound);
                    row.sigma_raw = Some(r.ef_sigma);
                }
            }
            info!("n={n}: {leaves} leaves, oracle {:.4}", row.oracle_ef);
            Ok(row)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub n: usize,
    pub oracle_ef: f64,
    pub max_certifiable: f64,
    pub continuous_ef: f64,
}

pub fn oracle(cfg: &ExperimentConfig) -> Result<OracleReport> {
    let n = cfg.grid.n;
    if n > 512 {
        return Err(Error::Config {
            line: None,
            message: format!("grid.n: oracle supports n <= 512, got {n}"),
        });
    }
    let source = cfg.source_model()?;
    let grids = cfg.grids(&source, n)?;
    Ok(OracleReport {
        n,
        oracle_ef: source.oracle_ef_bound(&grids)?,
        max_certifiable: max_certifiable_for(&grids)?,
        continuous_ef: source.continuous_ef_bound(&[Component::X, Component::Y]),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_time_csv(path: &Path, rows: &[TimeCheckpoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "records_per_leaf",
        "time_per_partition",
        "ef_raw",
        "sigma_raw",
        "ef_subtracted",
        "sigma_subtracted",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.records_per_leaf.to_string(),
            r.time_per_partition.to_string(),
            opt(r.ef_raw),
            opt(r.sigma_raw),
            opt(r.ef_subtracted),
            opt(r.sigma_subtracted),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_resolution_csv(path: &Path, rows: &[ResolutionRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "n",
        "leaves",
        "naive_measurements",
        "improvement_factor",
        "ef_raw",
        "sigma_raw",
        "ef_subtracted",
        "sigma_subtracted",
        "oracle_ef",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.leaves.to_string(),
            r.naive_measurements.to_string(),
            r.improvement_factor.to_string(),
            opt(r.ef_raw),
            opt(r.sigma_raw),
            opt(r.ef_subtracted),
            opt(r.sigma_subtracted),
            r.oracle_ef.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Overrides shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct CommandOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub subtract: Option<SubtractMode>,
}

impl CommandOptions {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        if let Some(m) = self.subtract {
            cfg.analysis.subtract = m;
        }
    }
}

pub fn cmd_simulate(config: &Path, opts: &CommandOptions, reanalyze_only: bool) -> Result<Summary> {
    if reanalyze_only {
        let dir = opts
            .out
            .clone()
            .map_or_else(|| ExperimentConfig::load(config).map(|c| c.output.dir), Ok)?;
        let old = read_summary(&dir.join("summary.json"))?;
        let mut cfg = old.config.clone();
        opts.apply(&mut cfg);
        let mut a = AnalysisOptions::from_config(&cfg);
        a.seed = opts.seed.unwrap_or(old.seed);
        let out = reanalyze(&dir, Some(a))?;
        write_json(&dir.join("reanalysis.json"), &out.summary)?;
        write_mc_csv(&dir.join("mc_trials.csv"), &out.summary.results)?;
        info!("wrote {}", dir.join("reanalysis.json").display());
        return Ok(out.summary);
    }
    let mut cfg = ExperimentConfig::load(config)?;
    opts.apply(&mut cfg);
    let out = simulate(&cfg, AnalysisOptions::from_config(&cfg))?;
    write_simulation(&cfg.output.dir, &out)?;
    info!("wrote results to {}", cfg.output.dir.display());
    Ok(out.summary)
}

pub fn cmd_sweep_time(config: &Path, opts: &CommandOptions) -> Result<Vec<TimeCheckpoint>> {
    let mut cfg = ExperimentConfig::load(config)?;
    opts.apply(&mut cfg);
    let rows = sweep_time(&cfg, cfg.analysis.subtract, cfg.seed)?;
    fs::create_dir_all(&cfg.output.dir)?;
    write_time_csv(&cfg.output.dir.join("sweep_time.csv"), &rows)?;
    Ok(rows)
}

pub fn cmd_sweep_resolution(config: &Path, opts: &CommandOptions) -> Result<Vec<ResolutionRow>> {
    let mut cfg = ExperimentConfig::load(config)?;
    opts.apply(&mut cfg);
    let rows = sweep_resolution(&cfg, cfg.analysis.subtract, cfg.seed)?;
    fs::create_dir_all(&cfg.output.dir)?;
    write_resolution_csv(&cfg.output.dir.join("sweep_resolution.csv"), &rows)?;
    Ok(rows)
}

pub fn cmd_oracle(config: &Path, opts: &CommandOptions) -> Result<OracleReport> {
    let mut cfg = ExperimentConfig::load(config)?;
    opts.apply(&mut cfg);
    oracle(&cfg)
}
