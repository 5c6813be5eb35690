//! Adaptive quad-tree acquisition.
//!
//! Each joint distribution is covered by a quad-tree whose leaves are the
//! rectangles actually measured. The partition phase repeatedly scans the
//! unstable leaves, one acquisition per leaf per pass, and splits any leaf
//! whose rate is confidently at or above `alpha * R_T`. Once fewer than a
//! fraction `gamma` of the leaves remain unstable, the iterative phase
//! equalizes the number of acquisitions across all leaves and keeps
//! scanning them uniformly.

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{
    acquire, expected_rates, relative_efficiency, DetectorConfig, MeasurementChannel,
    MeasurementRecord, StreamKey,
};
use crate::source::{Basis, ComponentGrids, GridSpec, IndexRect, SourceModel};
use crate::witness::{estimate_distribution, EstimatedDistribution, LeafSummary};

/// A rate in events per second with its one-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterativeStop {
    /// Uniform passes after equalizing record counts.
    Passes(usize),
    /// Uniform passes while the total model time stays within the budget
    /// (seconds, counting every acquisition as one `acquisition_time`).
    ModelTime(f64),
    /// Equalize until every leaf holds at least this many records.
    RecordsPerLeaf(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma_frac: f64,
    /// Maximum tree depth; `None` allows single-pixel leaves.
    pub max_depth: Option<u32>,
    /// Safety cap on partition-phase passes.
    pub max_partition_passes: usize,
    pub iterative: IterativeStop,
    /// Duration of the all-pixels total-rate measurement, in seconds.
    pub total_duration: f64,
    /// Fold the total-rate uncertainty into the stability test.
    pub include_total_uncertainty: bool,
}

impl Default for SamplerParams {
    fn default() -> Self {
        Self {
            alpha: 0.002,
            beta: 2.0,
            gamma_frac: 0.15,
            max_depth: None,
            max_partition_passes: 10_000,
            iterative: IterativeStop::Passes(20),
            total_duration: 10.0,
            include_total_uncertainty: true,
        }
    }
}

impl SamplerParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::domain(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::domain(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.gamma_frac > 0.0 && self.gamma_frac <= 1.0) {
            return Err(Error::domain(format!(
                "gamma_frac must lie in (0, 1], got {}",
                self.gamma_frac
            )));
        }
        if !(self.total_duration.is_finite() && self.total_duration > 0.0) {
            return Err(Error::domain("total_duration must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadNode {
    /// Base-4 digits from the root; digit 0..3 = top-left, top-right,
    /// bottom-left, bottom-right.
    pub path: String,
    pub rect: IndexRect,
    pub records: Vec<MeasurementRecord>,
    pub stable: bool,
    pub children: Option<[usize; 4]>,
}

impl QuadNode {
    pub fn depth(&self) -> u32 {
        self.path.len() as u32
    }

    pub fn span(&self) -> usize {
        self.rect.rows
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    /// Unique index within one tree (level offset plus base-4 value).
    pub fn index_in_tree(&self) -> u64 {
        let d = self.depth();
        let offset = (4u64.pow(d) - 1) / 3;
        let value = self
            .path
            .bytes()
            .fold(0u64, |acc, b| acc * 4 + u64::from(b - b'0'));
        offset + value
    }
}

/// Pooled rate over all records: `sum C / (eps * sum T)`. The uncertainty
/// is Poisson on the pooled count; a zero count is treated as one count,
/// so an empty node still needs time to be declared confidently dark.
pub fn node_rate(node: &QuadNode) -> Result<RateEstimate> {
    pooled_rate(&node.records)
}

fn pooled_rate(records: &[MeasurementRecord]) -> Result<RateEstimate> {
    let first = records
        .first()
        .ok_or_else(|| Error::state("node has no records"))?;
    let eps = first.efficiency;
    let counts: f64 = records.iter().map(|r| r.coincidences).sum();
    let time: f64 = records.iter().map(|r| r.duration).sum();
    let scale = eps * time;
    Ok(RateEstimate {
        rate: counts / scale,
        sigma: counts.max(1.0).sqrt() / scale,
    })
}

/// A node is stable once the sign of `alpha R_T - R_i` is known to
/// `beta` standard deviations. The uncertainties of `R_i` and of
/// `alpha R_T` add in quadrature. A zero margin is never stable.
pub fn stability_check(rate: RateEstimate, alpha: f64, beta: f64, total: RateEstimate) -> Stability {
    let margin = (rate.rate - alpha * total.rate).abs();
    let sigma = rate.sigma.hypot(alpha * total.sigma);
    if margin > 0.0 && margin >= beta * sigma {
        Stability::Stable
    } else {
        Stability::Unstable
    }
}

/// Total coincidence rate from an all-pixels acquisition of `duration`.
pub fn measure_total(
    channel: &MeasurementChannel<'_>,
    det: &DetectorConfig,
    duration: f64,
    stream: u64,
) -> Result<RateEstimate> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::domain("total-rate duration must be positive"));
    }
    let n = channel.size();
    let full = IndexRect::full(n);
    let rates = expected_rates(channel, full, det)?;
    let eps = relative_efficiency(det, full, n);
    let long = DetectorConfig {
        acquisition_time: duration,
        ..det.clone()
    };
    let rec = acquire(
        rates,
        &long,
        eps,
        StreamKey {
            node_id: stream,
            pass_index: u64::MAX,
        },
    );
    pooled_rate(&[rec])
}

/// Quad-tree over one joint distribution together with its measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionTree {
    pub tree_id: u32,
    pub basis: Basis,
    pub component: crate::source::Component,
    pub grid: GridSpec,
    pub nodes: Vec<QuadNode>,
    pub total: RateEstimate,
    pub max_depth: u32,
    pub partition_passes: usize,
    pub iterative_passes: usize,
    /// Acquisitions taken so far, in units of `acquisition_time`.
    pub acquisitions: u64,
    pub budget_exhausted: bool,
}

impl PartitionTree {
    /// Tree with only a root node; call [`PartitionTree::split`] on node 0
    /// (or use [`PartitionTree::with_quadrants`]) before the partition phase.
    pub fn new(
        tree_id: u32,
        basis: Basis,
        component: crate::source::Component,
        grid: GridSpec,
        total: RateEstimate,
        max_depth: Option<u32>,
    ) -> Self {
        let full_depth = grid.depth();
        Self {
            tree_id,
            basis,
            component,
            grid,
            nodes: vec![QuadNode {
                path: String::new(),
                rect: IndexRect::full(grid.n()),
                records: Vec::new(),
                stable: false,
                children: None,
            }],
            total,
            max_depth: max_depth.map_or(full_depth, |d| d.min(full_depth)),
            partition_passes: 0,
            iterative_passes: 0,
            acquisitions: 0,
            budget_exhausted: false,
        }
    }

    pub fn with_quadrants(
        tree_id: u32,
        basis: Basis,
        component: crate::source::Component,
        grid: GridSpec,
        total: RateEstimate,
        max_depth: Option<u32>,
    ) -> Result<Self> {
        let mut t = Self::new(tree_id, basis, component, grid, total, max_depth);
        t.split(0)?;
        Ok(t)
    }

    pub fn root(&self) -> &QuadNode {
        &self.nodes[0]
    }

    /// Splits a leaf into four unstable children that tile it.
    pub fn split(&mut self, idx: usize) -> Result<[usize; 4]> {
        let node = self
            .nodes
            .get(idx)
            .ok_or_else(|| Error::state(format!("no node {idx}")))?;
        if !node.is_leaf() {
            return Err(Error::state(format!("node '{}' is already split", node.path)));
        }
        if node.span() < 2 || node.depth() >= self.max_depth {
            return Err(Error::state(format!(
                "node '{}' is at maximum resolution",
                node.path
            )));
        }
        let h = node.span() / 2;
        let (r, c) = (node.rect.row, node.rect.col);
        let base = node.path.clone();
        let first = self.nodes.len();
        for (digit, (dr, dc)) in [(0, 0), (0, h), (h, 0), (h, h)].into_iter().enumerate() {
            self.nodes.push(QuadNode {
                path: format!("{base}{digit}"),
                rect: IndexRect::square(r + dr, c + dc, h),
                records: Vec::new(),
                stable: false,
                children: None,
            });
        }
        let kids = [first, first + 1, first + 2, first + 3];
        self.nodes[idx].children = Some(kids);
        Ok(kids)
    }

    pub fn can_split(&self, idx: usize) -> bool {
        let n = &self.nodes[idx];
        n.is_leaf() && n.span() >= 2 && n.depth() < self.max_depth
    }

    /// Leaf indices in scan order: breadth-first, then by path.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].is_leaf())
            .collect();
        out.sort_by(|&a, &b| {
            let (na, nb) = (&self.nodes[a], &self.nodes[b]);
            (na.path.len(), &na.path).cmp(&(nb.path.len(), &nb.path))
        });
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn stream_id(&self, idx: usize) -> u64 {
        (u64::from(self.tree_id) << 56) | self.nodes[idx].index_in_tree()
    }

    /// Panics-free tiling check: leaves cover the grid exactly once.
    pub fn check_tiling(&self) -> Result<()> {
        let rects: Vec<IndexRect> = self.leaves().iter().map(|&i| self.nodes[i].rect).collect();
        crate::witness::check_tiling(self.grid.n(), &rects)
    }

    fn acquire_node(
        &mut self,
        idx: usize,
        channel: &MeasurementChannel<'_>,
        det: &DetectorConfig,
    ) -> Result<()> {
        let rect = self.nodes[idx].rect;
        let rates = expected_rates(channel, rect, det)?;
        let eps = relative_efficiency(det, rect, self.grid.n());
        let key = StreamKey {
            node_id: self.stream_id(idx),
            pass_index: self.nodes[idx].records.len() as u64,
        };
        let rec = acquire(rates, det, eps, key);
        self.nodes[idx].records.push(rec);
        self.acquisitions += 1;
        Ok(())
    }

    /// Rate used for stability decisions (raw coincidences). Noise-free
    /// acquisitions carry no statistical uncertainty.
    fn decision_rate(&self, idx: usize, det: &DetectorConfig) -> Result<RateEstimate> {
        let mut r = node_rate(&self.nodes[idx])?;
        if det.noise_free() {
            r.sigma = 0.0;
        }
        Ok(r)
    }

    fn decision_total(&self, det: &DetectorConfig, params: &SamplerParams) -> RateEstimate {
        let mut t = self.total;
        if det.noise_free() || !params.include_total_uncertainty {
            t.sigma = 0.0;
        }
        t
    }

    pub fn unstable_fraction(&self) -> f64 {
        let leaves = self.leaves();
        let unstable = leaves.iter().filter(|&&i| !self.nodes[i].stable).count();
        unstable as f64 / leaves.len() as f64
    }

    pub fn model_time(&self, det: &DetectorConfig) -> f64 {
        self.acquisitions as f64 * det.acquisition_time
    }

    /// Pooled leaf measurements in scan order, optionally restricted to each
    /// leaf's first `max_records` records.
    pub fn leaf_summaries(&self, max_records: Option<usize>) -> Result<Vec<LeafSummary>> {
        self.leaves()
            .into_iter()
            .map(|i| {
                let node = &self.nodes[i];
                let k = max_records.map_or(node.records.len(), |m| m.min(node.records.len()));
                let recs = &node.records[..k];
                let first = recs.first().ok_or_else(|| {
                    Error::state(format!("leaf '{}' has no records", node.path))
                })?;
                Ok(LeafSummary {
                    path: node.path.clone(),
                    rect: node.rect,
                    pooled_c: recs.iter().map(|r| r.coincidences).sum(),
                    pooled_a: recs.iter().map(|r| r.accidentals).sum(),
                    efficiency: first.efficiency,
                    total_time: recs.iter().map(|r| r.duration).sum(),
                })
            })
            .collect()
    }

    pub fn estimate(&self, subtract: bool, max_records: Option<usize>) -> Result<EstimatedDistribution> {
        estimate_distribution(
            self.basis,
            self.component,
            self.grid,
            self.leaf_summaries(max_records)?,
            subtract,
        )
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.basis.label(), self.component.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseOutcome {
    /// Unstable fraction fell below gamma (or every leaf is stable).
    Converged,
    /// The pass cap was reached first.
    BudgetExhausted,
}

/// Builds the partition by scanning unstable leaves until fewer than
/// `gamma_frac` of all leaves remain unstable.
pub fn partition_phase(
    tree: &mut PartitionTree,
    params: &SamplerParams,
    det: &DetectorConfig,
    channel: &MeasurementChannel<'_>,
) -> Result<PhaseOutcome> {
    if tree.root().is_leaf() {
        return Err(Error::state("partition phase needs the root split into quadrants"));
    }
    let total = tree.decision_total(det, params);
    let threshold = params.alpha * total.rate;
    loop {
        let leaves = tree.leaves();
        let scan: Vec<usize> = leaves
            .iter()
            .copied()
            .filter(|&i| !tree.nodes[i].stable)
            .collect();
        let frac = scan.len() as f64 / leaves.len() as f64;
        if scan.is_empty() || frac < params.gamma_frac {
            return Ok(PhaseOutcome::Converged);
        }
        if tree.partition_passes >= params.max_partition_passes {
            tree.budget_exhausted = true;
            return Ok(PhaseOutcome::BudgetExhausted);
        }
        for &i in &scan {
            tree.acquire_node(i, channel, det)?;
        }
        let mut splits = 0;
        for &i in &scan {
            let rate = tree.decision_rate(i, det)?;
            if stability_check(rate, params.alpha, params.beta, total) == Stability::Stable {
                tree.nodes[i].stable = true;
                if rate.rate >= threshold && tree.can_split(i) {
                    tree.split(i)?;
                    splits += 1;
                }
            }
        }
        tree.partition_passes += 1;
        info!(
            "{} partition pass {}: leaves={} scanned={} unstable_frac={:.4} splits={}",
            tree.label(),
            tree.partition_passes,
            tree.leaf_count(),
            scan.len(),
            frac,
            splits
        );
    }
}

/// Equalizes record counts over all leaves and then scans every leaf
/// uniformly until the stop criterion.
pub fn iterative_phase(
    tree: &mut PartitionTree,
    stop: IterativeStop,
    det: &DetectorConfig,
    channel: &MeasurementChannel<'_>,
) -> Result<()> {
    let leaves = tree.leaves();
    let most = leaves
        .iter()
        .map(|&i| tree.nodes[i].records.len())
        .max()
        .unwrap_or(0);
    let (target, passes) = match stop {
        IterativeStop::Passes(0) => return Ok(()),
        IterativeStop::Passes(k) => (most, Some(k)),
        IterativeStop::RecordsPerLeaf(k) => (most.max(k), Some(0)),
        IterativeStop::ModelTime(_) => (most, None),
    };
    let top_up = |tree: &mut PartitionTree, target: usize| -> Result<()> {
        for &i in &leaves {
            while tree.nodes[i].records.len() < target {
                tree.acquire_node(i, channel, det)?;
            }
        }
        Ok(())
    };
    top_up(tree, target)?;
    let mut level = target;
    let mut pass = 0usize;
    loop {
        let more = match (stop, passes) {
            (_, Some(k)) => pass < k,
            (IterativeStop::ModelTime(budget), None) => {
                tree.model_time(det) + leaves.len() as f64 * det.acquisition_time <= budget
            }
            _ => false,
        };
        if !more {
            if let IterativeStop::ModelTime(budget) = stop {
                tree.budget_exhausted = tree.model_time(det) > budget;
            }
            break;
        }
        level += 1;
        top_up(tree, level)?;
        pass += 1;
        tree.iterative_passes += 1;
        debug!("{} iterative pass {}: records per leaf {}", tree.label(), pass, level);
    }
    info!(
        "{} iterative phase done: leaves={} records/leaf={} model_time={:.1}s",
        tree.label(),
        leaves.len(),
        level,
        tree.model_time(det)
    );
    Ok(())
}

/// Measures `R_T`, partitions, and runs the iterative phase for one
/// distribution.
pub fn run_tree(
    tree_id: u32,
    basis: Basis,
    component: crate::source::Component,
    grid: GridSpec,
    channel: &MeasurementChannel<'_>,
    det: &DetectorConfig,
    params: &SamplerParams,
) -> Result<PartitionTree> {
    let total = measure_total(channel, det, params.total_duration, u64::from(tree_id) << 56 | (1 << 55))?;
    let mut tree = PartitionTree::with_quadrants(tree_id, basis, component, grid, total, params.max_depth)?;
    partition_phase(&mut tree, params, det, channel)?;
    iterative_phase(&mut tree, params.iterative, det, channel)?;
    Ok(tree)
}

/// Trees for every basis/component pair, in order
/// (position-x, momentum-x, position-y, momentum-y, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionResult {
    pub trees: Vec<PartitionTree>,
    pub params: SamplerParams,
    pub seed: u64,
}

impl AcquisitionResult {
    pub fn total_leaves(&self) -> usize {
        self.trees.iter().map(|t| t.leaf_count()).sum()
    }

    pub fn tree(&self, basis: Basis, component: crate::source::Component) -> Option<&PartitionTree> {
        self.trees
            .iter()
            .find(|t| t.basis == basis && t.component == component)
    }
}

pub fn run_acquisition(
    source: &SourceModel,
    grids: &[ComponentGrids],
    det: &DetectorConfig,
    params: &SamplerParams,
) -> Result<AcquisitionResult> {
    source.validate()?;
    det.validate()?;
    params.validate()?;
    let jobs: Vec<(u32, Basis, ComponentGrids)> = grids
        .iter()
        .flat_map(|g| [Basis::Position, Basis::Momentum].map(move |b| (b, *g)))
        .enumerate()
        .map(|(i, (b, g))| (i as u32, b, g))
        .collect();
    let trees = jobs
        .par_iter()
        .map(|&(id, basis, g)| {
            let grid = g.grid(basis);
            let table = source.cdf_table(basis, g.component, grid);
            let channel = MeasurementChannel::new(&table, source.total_rate);
            run_tree(id, basis, g.component, grid, &channel, det, params)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AcquisitionResult {
        trees,
        params: params.clone(),
        seed: det.rng_seed,
    })
}
