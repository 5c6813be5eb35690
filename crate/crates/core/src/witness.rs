//! Entropies, coarse-graining and the entropic entanglement witness.
//!
//! For `d` transverse components the witness is
//!
//! ```text
//! E_f >= sum_i [ log2(2 pi / (dX_i dK_i)) - H(X_a|X_b)_i - H(K_a|K_b)_i ]
//! ```
//!
//! evaluated on (possibly multilevel, coarse-grained) estimates of the
//! position and momentum joint distributions. All entropies are in bits.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{KahanAccumulator, SquareMatrix};
use crate::source::{Basis, Component, GridSpec, IndexRect, JointDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    /// Exact discretization, no sampling.
    Exact,
    Raw,
    AccidentalSubtracted,
}

impl EstimateMethod {
    pub fn subtract(self) -> bool {
        matches!(self, EstimateMethod::AccidentalSubtracted)
    }

    pub fn from_subtract(subtract: bool) -> Self {
        if subtract {
            EstimateMethod::AccidentalSubtracted
        } else {
            EstimateMethod::Raw
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyMethod {
    Propagation,
    MonteCarlo,
}

/// A normalized matrix tied to one basis/component grid.
pub trait GriddedDistribution {
    fn basis(&self) -> Basis;
    fn component(&self) -> Component;
    fn grid(&self) -> GridSpec;
    fn matrix(&self) -> &SquareMatrix;
}

impl GriddedDistribution for JointDistribution {
    fn basis(&self) -> Basis {
        self.basis
    }
    fn component(&self) -> Component {
        self.component
    }
    fn grid(&self) -> GridSpec {
        self.grid
    }
    fn matrix(&self) -> &SquareMatrix {
        &self.matrix
    }
}

/// Pooled measurement of one leaf of a partition tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafSummary {
    pub path: String,
    pub rect: IndexRect,
    pub pooled_c: f64,
    pub pooled_a: f64,
    pub efficiency: f64,
    pub total_time: f64,
}

impl LeafSummary {
    /// Counts attributed to the leaf before the efficiency/time division;
    /// negative accidental-subtracted counts clamp to zero.
    pub fn signal_counts(&self, subtract: bool) -> f64 {
        if subtract {
            (self.pooled_c - self.pooled_a).max(0.0)
        } else {
            self.pooled_c
        }
    }

    pub fn is_clamped(&self, subtract: bool) -> bool {
        subtract && self.pooled_c - self.pooled_a < 0.0
    }

    /// Estimated rate `counts / (efficiency * total_time)`.
    pub fn rate(&self, subtract: bool) -> f64 {
        self.signal_counts(subtract) / (self.efficiency * self.total_time)
    }
}

/// Multilevel estimate of a joint distribution built from a leaf list.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedDistribution {
    pub basis: Basis,
    pub component: Component,
    pub grid: GridSpec,
    pub method: EstimateMethod,
    pub matrix: SquareMatrix,
    pub leaves: Vec<LeafSummary>,
}

impl GriddedDistribution for EstimatedDistribution {
    fn basis(&self) -> Basis {
        self.basis
    }
    fn component(&self) -> Component {
        self.component
    }
    fn grid(&self) -> GridSpec {
        self.grid
    }
    fn matrix(&self) -> &SquareMatrix {
        &self.matrix
    }
}

/// Spreads each leaf's estimated rate uniformly over its rectangle and
/// normalizes.
pub fn estimate_distribution(
    basis: Basis,
    component: Component,
    grid: GridSpec,
    leaves: Vec<LeafSummary>,
    subtract: bool,
) -> Result<EstimatedDistribution> {
    let matrix = fill_leaves(grid.n(), &leaves, |_, leaf| leaf.rate(subtract))?;
    Ok(EstimatedDistribution {
        basis,
        component,
        grid,
        method: EstimateMethod::from_subtract(subtract),
        matrix,
        leaves,
    })
}

/// Fill rule shared by estimation and resampling: `value(leaf) / area` on
/// every pixel of the leaf, then normalization.
pub(crate) fn fill_leaves(
    n: usize,
    leaves: &[LeafSummary],
    value: impl Fn(usize, &LeafSummary) -> f64,
) -> Result<SquareMatrix> {
    let mut m = SquareMatrix::zeros(n);
    for (i, leaf) in leaves.iter().enumerate() {
        leaf.rect.check_within(n)?;
        let v = value(i, leaf);
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::domain(format!("leaf {} has invalid rate {v}", leaf.path)));
        }
        let per = v / leaf.rect.area() as f64;
        for r in leaf.rect.row..leaf.rect.row + leaf.rect.rows {
            for c in leaf.rect.col..leaf.rect.col + leaf.rect.cols {
                m.set(r, c, per);
            }
        }
    }
    if m.normalize() <= 0.0 {
        return Err(Error::Degenerate("all leaf rates are zero".into()));
    }
    Ok(m)
}

/// Shannon entropy in bits with `0 log 0 = 0`.
pub fn shannon_entropy(p: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = KahanAccumulator::default();
    for v in p {
        if v > 0.0 {
            acc.add(-v * v.log2());
        }
    }
    acc.total()
}

/// `H(A|B) = H(A,B) - H(B)`, with A the row index and B the column index.
pub fn conditional_entropy(m: &SquareMatrix) -> f64 {
    shannon_entropy(m.as_slice().iter().copied()) - shannon_entropy(m.col_sums())
}

/// `I(A:B) = H(A) + H(B) - H(A,B)`.
pub fn mutual_information(m: &SquareMatrix) -> f64 {
    shannon_entropy(m.row_sums()) + shannon_entropy(m.col_sums())
        - shannon_entropy(m.as_slice().iter().copied())
}

/// Replaces each block by its mean. The blocks must tile the matrix.
pub fn coarse_grain(m: &SquareMatrix, blocks: &[IndexRect]) -> Result<SquareMatrix> {
    let n = m.n();
    check_tiling(n, blocks)?;
    let mut out = SquareMatrix::zeros(n);
    for b in blocks {
        let mean = m.block_sum(b.row, b.col, b.rows, b.cols) / b.area() as f64;
        for r in b.row..b.row + b.rows {
            for c in b.col..b.col + b.cols {
                out.set(r, c, mean);
            }
        }
    }
    Ok(out)
}

/// Verifies that `blocks` cover every cell of an `n x n` grid exactly once.
pub fn check_tiling(n: usize, blocks: &[IndexRect]) -> Result<()> {
    let mut seen = vec![false; n * n];
    for b in blocks {
        b.check_within(n)?;
        for r in b.row..b.row + b.rows {
            for c in b.col..b.col + b.cols {
                if std::mem::replace(&mut seen[r * n + c], true) {
                    return Err(Error::domain(format!("cell ({r},{c}) covered twice")));
                }
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::domain(format!("cell ({},{}) not covered", i / n, i % n)));
    }
    Ok(())
}

/// Joint distribution over `(X_a, Y_a, X_b, Y_b)`, stored with the last
/// index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FourIndexDistribution {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl FourIndexDistribution {
    pub fn new(dims: [usize; 4], mut data: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0 || d > 8) {
            return Err(Error::domain("each axis must have between 1 and 8 outcomes"));
        }
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::domain("data length does not match dims"));
        }
        if data.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain("entries must be non-negative"));
        }
        let total: f64 = data.iter().sum();
        if total <= 0.0 {
            return Err(Error::Degenerate("zero total".into()));
        }
        data.iter_mut().for_each(|v| *v /= total);
        Ok(Self { dims, data })
    }

    /// Product `P(X_a, X_b) P(Y_a, Y_b)` of two two-party distributions.
    pub fn product(x: &SquareMatrix, y: &SquareMatrix) -> Result<Self> {
        let (nx, ny) = (x.n(), y.n());
        let mut data = Vec::with_capacity(nx * nx * ny * ny);
        for xa in 0..nx {
            for ya in 0..ny {
                for xb in 0..nx {
                    for yb in 0..ny {
                        data.push(x.get(xa, xb) * y.get(ya, yb));
                    }
                }
            }
        }
        Self::new([nx, ny, nx, ny], data)
    }

    pub fn get(&self, xa: usize, ya: usize, xb: usize, yb: usize) -> f64 {
        let [_, d1, d2, d3] = self.dims;
        self.data[((xa * d1 + ya) * d2 + xb) * d3 + yb]
    }

    fn marginal(&self, keep: [bool; 4]) -> Vec<f64> {
        let kept_dims: Vec<usize> = (0..4).filter(|&i| keep[i]).map(|i| self.dims[i]).collect();
        let mut out = vec![0.0; kept_dims.iter().product::<usize>().max(1)];
        let [d0, d1, d2, d3] = self.dims;
        for i0 in 0..d0 {
            for i1 in 0..d1 {
                for i2 in 0..d2 {
                    for i3 in 0..d3 {
                        let idx = [i0, i1, i2, i3];
                        let mut flat = 0;
                        for k in 0..4 {
                            if keep[k] {
                                flat = flat * self.dims[k] + idx[k];
                            }
                        }
                        out[flat] += self.get(i0, i1, i2, i3);
                    }
                }
            }
        }
        out
    }
}

/// Returns `(H(X_a,Y_a|X_b,Y_b), H(X_a|X_b) + H(Y_a|Y_b))`; the first
/// never exceeds the second, with equality for separable distributions.
pub fn component_split_check(p: &FourIndexDistribution) -> (f64, f64) {
    let h = |keep| shannon_entropy(p.marginal(keep));
    let lhs = h([true, true, true, true]) - h([false, false, true, true]);
    let hx = h([true, false, true, false]) - h([false, false, true, false]);
    let hy = h([false, true, false, true]) - h([false, false, false, true]);
    (lhs, hx + hy)
}

/// Per-component contributions to the witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentTerms {
    pub component: Component,
    /// `log2(2 pi / (dX dK))`.
    pub log_term: f64,
    pub h_position: f64,
    pub h_momentum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessResult {
    pub components: Vec<ComponentTerms>,
    /// Lower bound on the entanglement of formation, in ebits. Negative
    /// values certify nothing.
    pub ef_bound: f64,
    /// One standard deviation, in ebits.
    pub sigma: f64,
    pub method: EstimateMethod,
    pub uncertainty_method: Option<UncertaintyMethod>,
}

impl WitnessResult {
    /// `sum(log terms) - sum(conditional entropies)` from the stored fields.
    pub fn recompute_bound(&self) -> f64 {
        let logs: f64 = self.components.iter().map(|c| c.log_term).sum();
        let hs: f64 = self.components.iter().map(|c| c.h_position + c.h_momentum).sum();
        logs - hs
    }
}

pub fn log_term(position: &GridSpec, momentum: &GridSpec) -> f64 {
    (2.0 * PI / (position.delta() * momentum.delta())).log2()
}

/// Evaluates the witness on (position, momentum) pairs, one per component.
pub fn ef_bound<D: GriddedDistribution>(
    pairs: &[(&D, &D)],
    method: EstimateMethod,
) -> Result<WitnessResult> {
    if pairs.is_empty() {
        return Err(Error::domain("at least one component is required"));
    }
    let mut components = Vec::with_capacity(pairs.len());
    for (pos, mom) in pairs {
        if pos.basis() != Basis::Position || mom.basis() != Basis::Momentum {
            return Err(Error::domain("each pair must be (position, momentum)"));
        }
        if pos.component() != mom.component() {
            return Err(Error::domain(format!(
                "component mismatch: {} vs {}",
                pos.component().label(),
                mom.component().label()
            )));
        }
        if components
            .iter()
            .any(|c: &ComponentTerms| c.component == pos.component())
        {
            return Err(Error::domain(format!(
                "component {} given twice",
                pos.component().label()
            )));
        }
        components.push(ComponentTerms {
            component: pos.component(),
            log_term: log_term(&pos.grid(), &mom.grid()),
            h_position: conditional_entropy(pos.matrix()),
            h_momentum: conditional_entropy(mom.matrix()),
        });
    }
    let mut result = WitnessResult {
        components,
        ef_bound: 0.0,
        sigma: 0.0,
        method,
        uncertainty_method: None,
    };
    result.ef_bound = result.recompute_bound();
    Ok(result)
}

/// Largest certifiable value for the given pixel sizes: every conditional
/// entropy zero, `log2((2 pi)^2 / (dx dy dkx dky))`.
pub fn max_certifiable(dx: f64, dy: f64, dkx: f64, dky: f64) -> Result<f64> {
    if [dx, dy, dkx, dky].iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::domain("pixel sizes must be positive"));
    }
    Ok(((2.0 * PI).powi(2) / (dx * dy * dkx * dky)).log2())
}

/// Approximate number of measurements, `12 (n - log2 n - 2)`, needed to
/// cover four perfectly correlated `n x n` distributions.
pub fn measurement_count_bound(n: usize) -> Result<u64> {
    if n < 8 || !n.is_power_of_two() {
        return Err(Error::domain(format!(
            "resolution must be a power of two >= 8, got {n}"
        )));
    }
    let log = n.trailing_zeros() as u64;
    Ok(12 * (n as u64 - log - 2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionalityBound {
    /// `ceil(2^ef)`: the smallest integer dimension consistent with the bound.
    pub ceil: u64,
    /// `floor(2^ef)`, the convention used when reporting "2^ef >= D".
    pub floor: u64,
}

/// Lower bound on the entanglement dimensionality implied by `ef` ebits.
pub fn dimensionality_bound(ef: f64) -> Result<DimensionalityBound> {
    if !ef.is_finite() {
        return Err(Error::domain("ef must be finite"));
    }
    if ef <= 0.0 {
        return Ok(DimensionalityBound { ceil: 1, floor: 1 });
    }
    let v = ef.exp2();
    Ok(DimensionalityBound {
        ceil: v.ceil() as u64,
        floor: (v.floor() as u64).max(1),
    })
}
