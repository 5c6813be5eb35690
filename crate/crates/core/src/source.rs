//! Analytic double-Gaussian model of a spatially entangled photon-pair source.
//!
//! Each transverse component (x or y) is modeled independently. In a given
//! basis the joint density of the two parties' coordinates is
//!
//! ```text
//! p(u_a, u_b) = exp(-(u_a + u_b)^2 / (2 S^2) - (u_a - u_b)^2 / (2 D^2)) / (pi S D)
//! ```
//!
//! where `S` is the standard deviation of the sum coordinate and `D` of the
//! difference coordinate. In position the sum is broad and the difference is
//! narrow (positive correlation); in momentum the sum is narrow and the
//! difference broad (anti-correlation). Equivalently, `(u_a, u_b)` is a
//! centered bivariate normal with marginal standard deviation
//! `sqrt(S^2 + D^2) / 2` and correlation `(S^2 - D^2) / (S^2 + D^2)`, which is
//! what the region integrals below use.
//!
//! # Fourier duals of a pure state
//!
//! For the pure double-Gaussian amplitude
//! `psi ~ exp(-(x_a + x_b)^2 / (4 s^2)) exp(-(x_a - x_b)^2 / (4 d^2))`
//! the sum and difference coordinates factorize, and the phase
//! `k_a x_a + k_b x_b = (k_a + k_b)(x_a + x_b)/2 + (k_a - k_b)(x_a - x_b)/2`
//! pairs `x_a + x_b` with `(k_a + k_b)/2`. [`fourier_dual_width`] evaluates
//! the momentum width of each factor numerically by FFT; the result agrees
//! with `k_sum = 1 / s` and `k_diff = 1 / d` to better than 1e-9 relative, so
//! `s * k_sum = 1` (the minimum allowed by `[x_a + x_b, k_a + k_b] = 2i`).

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::quadrature::{bivariate_normal_upper, normal_cdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Position,
    Momentum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    X,
    Y,
}

impl Basis {
    pub fn label(self) -> &'static str {
        match self {
            Basis::Position => "position",
            Basis::Momentum => "momentum",
        }
    }
}

impl Component {
    pub fn label(self) -> &'static str {
        match self {
            Component::X => "x",
            Component::Y => "y",
        }
    }
}

/// Discretization of one component axis: `n` pixels across a window of
/// width `extent` centered on zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    n: usize,
    extent: f64,
}

impl GridSpec {
    pub fn new(n: usize, extent: f64) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::domain(format!(
                "grid resolution must be a power of two >= 2, got {n}"
            )));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::domain(format!("grid extent must be positive, got {extent}")));
        }
        Ok(Self { n, extent })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    /// Pixel size.
    pub fn delta(&self) -> f64 {
        self.extent / self.n as f64
    }

    /// Coordinate of pixel boundary `i` (0..=n).
    pub fn edge(&self, i: usize) -> f64 {
        -0.5 * self.extent + i as f64 * self.delta()
    }

    pub fn center(&self, i: usize) -> f64 {
        self.edge(i) + 0.5 * self.delta()
    }

    pub fn depth(&self) -> u32 {
        self.n.trailing_zeros()
    }
}

/// Rectangle in joint index space: rows index party a, columns party b.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexRect {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

impl IndexRect {
    pub fn new(row: usize, col: usize, rows: usize, cols: usize) -> Self {
        Self { row, col, rows, cols }
    }

    pub fn square(row: usize, col: usize, span: usize) -> Self {
        Self::new(row, col, span, span)
    }

    pub fn full(n: usize) -> Self {
        Self::square(0, 0, n)
    }

    pub fn area(&self) -> usize {
        self.rows * self.cols
    }

    pub fn check_within(&self, n: usize) -> Result<()> {
        if self.row + self.rows > n || self.col + self.cols > n {
            return Err(Error::domain(format!(
                "rectangle {self:?} exceeds {n}x{n} grid"
            )));
        }
        Ok(())
    }
}

/// Parameters of the double-Gaussian source, in SI units (m, rad/m, 1/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    pub sigma_sum_x: f64,
    pub sigma_sum_y: f64,
    pub sigma_diff_x: f64,
    pub sigma_diff_y: f64,
    pub k_sigma_sum_x: f64,
    pub k_sigma_sum_y: f64,
    pub k_sigma_diff_x: f64,
    pub k_sigma_diff_y: f64,
    /// Total coincidence rate with every pixel directed to the detectors.
    pub total_rate: f64,
}

/// Sum/difference widths of one (basis, component) joint density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointWidths {
    pub sum: f64,
    pub diff: f64,
}

impl JointWidths {
    /// Standard deviation of either party's marginal.
    pub fn marginal_sigma(&self) -> f64 {
        (self.sum * self.sum + self.diff * self.diff).sqrt() / 2.0
    }

    pub fn correlation(&self) -> f64 {
        let (s2, d2) = (self.sum * self.sum, self.diff * self.diff);
        (s2 - d2) / (s2 + d2)
    }

    /// `1 - |correlation|`, computed without cancellation.
    pub fn one_minus_abs_correlation(&self) -> f64 {
        let (s2, d2) = (self.sum * self.sum, self.diff * self.diff);
        2.0 * s2.min(d2) / (s2 + d2)
    }

    /// Variance of one party's coordinate conditioned on the other's.
    pub fn conditional_variance(&self) -> f64 {
        let (s2, d2) = (self.sum * self.sum, self.diff * self.diff);
        s2 * d2 / (s2 + d2)
    }
}

impl SourceModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sigma_sum_x: f64,
        sigma_diff_x: f64,
        sigma_sum_y: f64,
        sigma_diff_y: f64,
        k_sigma_sum_x: f64,
        k_sigma_diff_x: f64,
        k_sigma_sum_y: f64,
        k_sigma_diff_y: f64,
        total_rate: f64,
    ) -> Result<Self> {
        let s = Self {
            sigma_sum_x,
            sigma_sum_y,
            sigma_diff_x,
            sigma_diff_y,
            k_sigma_sum_x,
            k_sigma_sum_y,
            k_sigma_diff_x,
            k_sigma_diff_y,
            total_rate,
        };
        s.validate()?;
        Ok(s)
    }

    /// Pure-state source: momentum widths are the numerically evaluated
    /// Fourier duals of the position widths.
    pub fn pure_state(
        sigma_sum_x: f64,
        sigma_diff_x: f64,
        sigma_sum_y: f64,
        sigma_diff_y: f64,
        total_rate: f64,
    ) -> Result<Self> {
        for (name, w) in [
            ("sigma_sum_x", sigma_sum_x),
            ("sigma_diff_x", sigma_diff_x),
            ("sigma_sum_y", sigma_sum_y),
            ("sigma_diff_y", sigma_diff_y),
        ] {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::domain(format!("{name} must be positive, got {w}")));
            }
        }
        Self::new(
            sigma_sum_x,
            sigma_diff_x,
            sigma_sum_y,
            sigma_diff_y,
            fourier_dual_width(sigma_sum_x),
            fourier_dual_width(sigma_diff_x),
            fourier_dual_width(sigma_sum_y),
            fourier_dual_width(sigma_diff_y),
            total_rate,
        )
    }

    /// Pure-state source derived from pump and crystal parameters.
    ///
    /// The sum width is the pump waist (intensity `exp(-2 r^2 / w^2)`
    /// evaluated at the pair's mean coordinate). The phase-matching function
    /// `sinc(L q^2 / (4 k_p))` is replaced by the Gaussian
    /// `exp(-0.455 L q^2 / (4 k_p))`, giving a momentum difference width
    /// `sqrt(k_p / (0.455 L))` whose dual is the position difference width.
    pub fn from_pump(
        waist_x: f64,
        waist_y: f64,
        crystal_length: f64,
        pump_wavelength: f64,
        pump_index: f64,
        total_rate: f64,
    ) -> Result<Self> {
        if !(crystal_length > 0.0 && pump_wavelength > 0.0 && pump_index > 0.0) {
            return Err(Error::domain("crystal and pump parameters must be positive"));
        }
        let k_pump = 2.0 * PI * pump_index / pump_wavelength;
        let sigma_diff = (0.455 * crystal_length / k_pump).sqrt();
        Self::pure_state(waist_x, sigma_diff, waist_y, sigma_diff, total_rate)
    }

    /// Defaults modeled on a 356 um x 334 um pump waist, 3 mm BiBO crystal
    /// pumped at 405 nm, and 26,400 coincidences per second.
    pub fn default_physical() -> Self {
        Self::from_pump(356e-6, 334e-6, 3e-3, 405e-9, 1.87, 26_400.0)
            .expect("default source parameters are valid")
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("sigma_sum_x", self.sigma_sum_x),
            ("sigma_sum_y", self.sigma_sum_y),
            ("sigma_diff_x", self.sigma_diff_x),
            ("sigma_diff_y", self.sigma_diff_y),
            ("k_sigma_sum_x", self.k_sigma_sum_x),
            ("k_sigma_sum_y", self.k_sigma_sum_y),
            ("k_sigma_diff_x", self.k_sigma_diff_x),
            ("k_sigma_diff_y", self.k_sigma_diff_y),
        ];
        for (name, w) in all {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::domain(format!("{name} must be positive, got {w}")));
            }
        }
        if !(self.total_rate.is_finite() && self.total_rate >= 0.0) {
            return Err(Error::domain("total_rate must be non-negative"));
        }
        for c in [Component::X, Component::Y] {
            let p = self.widths(Basis::Position, c);
            let k = self.widths(Basis::Momentum, c);
            if p.diff > p.sum {
                return Err(Error::domain(format!(
                    "position {}: sigma_diff must not exceed sigma_sum",
                    c.label()
                )));
            }
            if k.sum > k.diff {
                return Err(Error::domain(format!(
                    "momentum {}: k_sigma_sum must not exceed k_sigma_diff",
                    c.label()
                )));
            }
            // ħ = 1 units; relative slack absorbs FFT rounding in pure_state.
            let tol = 0.5 * (1.0 - 1e-9);
            if p.sum * k.sum < tol || p.diff * k.diff < tol {
                return Err(Error::domain(format!(
                    "component {}: conjugate width products must be >= 1/2",
                    c.label()
                )));
            }
        }
        Ok(())
    }

    pub fn widths(&self, basis: Basis, component: Component) -> JointWidths {
        match (basis, component) {
            (Basis::Position, Component::X) => JointWidths {
                sum: self.sigma_sum_x,
                diff: self.sigma_diff_x,
            },
            (Basis::Position, Component::Y) => JointWidths {
                sum: self.sigma_sum_y,
                diff: self.sigma_diff_y,
            },
            (Basis::Momentum, Component::X) => JointWidths {
                sum: self.k_sigma_sum_x,
                diff: self.k_sigma_diff_x,
            },
            (Basis::Momentum, Component::Y) => JointWidths {
                sum: self.k_sigma_sum_y,
                diff: self.k_sigma_diff_y,
            },
        }
    }

    pub fn joint_density(&self, basis: Basis, component: Component, u_a: f64, u_b: f64) -> f64 {
        let w = self.widths(basis, component);
        let s = u_a + u_b;
        let d = u_a - u_b;
        (-(s * s) / (2.0 * w.sum * w.sum) - (d * d) / (2.0 * w.diff * w.diff)).exp()
            / (PI * w.sum * w.diff)
    }

    /// `P(u_a < x, u_b < y)` under the untruncated density.
    pub fn joint_cdf(&self, basis: Basis, component: Component, x: f64, y: f64) -> f64 {
        let w = self.widths(basis, component);
        let s = w.marginal_sigma();
        bivariate_normal_upper(-x / s, -y / s, w.correlation(), w.one_minus_abs_correlation())
    }

    /// Probability mass of an index rectangle of `grid`.
    pub fn region_probability(
        &self,
        basis: Basis,
        component: Component,
        rect: IndexRect,
        grid: &GridSpec,
    ) -> Result<f64> {
        rect.check_within(grid.n())?;
        if rect.rows == 0 || rect.cols == 0 {
            return Ok(0.0);
        }
        let (r0, r1) = (grid.edge(rect.row), grid.edge(rect.row + rect.rows));
        let (c0, c1) = (grid.edge(rect.col), grid.edge(rect.col + rect.cols));
        let f = |x, y| self.joint_cdf(basis, component, x, y);
        Ok(corner_difference(f(r1, c1), f(r0, c1), f(r1, c0), f(r0, c0)))
    }

    pub fn cdf_table(&self, basis: Basis, component: Component, grid: GridSpec) -> CdfTable {
        CdfTable::new(self, basis, component, grid)
    }

    /// Dense matrix of per-pixel masses, normalized over the window.
    pub fn discretize(&self, basis: Basis, component: Component, grid: GridSpec) -> JointDistribution {
        self.cdf_table(basis, component, grid).to_distribution()
    }

    /// Grids with the default windows: `8 sigma_sum` in position and
    /// `8 k_sigma_diff` in momentum, both at resolution `n`.
    pub fn default_grids(&self, n: usize) -> Result<Vec<ComponentGrids>> {
        [Component::X, Component::Y]
            .into_iter()
            .map(|c| {
                Ok(ComponentGrids {
                    component: c,
                    position: GridSpec::new(n, 8.0 * self.widths(Basis::Position, c).sum)?,
                    momentum: GridSpec::new(n, 8.0 * self.widths(Basis::Momentum, c).diff)?,
                })
            })
            .collect()
    }

    /// Witness value of the exact discretized distributions.
    pub fn oracle_ef_bound(&self, grids: &[ComponentGrids]) -> Result<f64> {
        let dists: Vec<(JointDistribution, JointDistribution)> = grids
            .par_iter()
            .map(|g| {
                (
                    self.discretize(Basis::Position, g.component, g.position),
                    self.discretize(Basis::Momentum, g.component, g.momentum),
                )
            })
            .collect();
        let pairs: Vec<_> = dists.iter().map(|(p, k)| (p, k)).collect();
        Ok(crate::witness::ef_bound(&pairs, crate::witness::EstimateMethod::Exact)?.ef_bound)
    }

    /// Continuous-variable value of the witness for the Gaussian model:
    /// `sum_i [log2(2 pi) - h(x_a|x_b) - h(k_a|k_b)]` with Gaussian
    /// conditional differential entropies `0.5 log2(2 pi e var)`.
    pub fn continuous_ef_bound(&self, components: &[Component]) -> f64 {
        let h = |var: f64| 0.5 * (2.0 * PI * std::f64::consts::E * var).log2();
        components
            .iter()
            .map(|&c| {
                let x = self.widths(Basis::Position, c).conditional_variance();
                let k = self.widths(Basis::Momentum, c).conditional_variance();
                (2.0 * PI).log2() - h(x) - h(k)
            })
            .sum()
    }
}

/// Position and momentum grids of one transverse component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentGrids {
    pub component: Component,
    pub position: GridSpec,
    pub momentum: GridSpec,
}

impl ComponentGrids {
    pub fn grid(&self, basis: Basis) -> GridSpec {
        match basis {
            Basis::Position => self.position,
            Basis::Momentum => self.momentum,
        }
    }
}

#[inline]
fn corner_difference(hh: f64, lh: f64, hl: f64, ll: f64) -> f64 {
    ((hh - lh) - (hl - ll)).max(0.0)
}

/// Width of the momentum-space intensity conjugate to a Gaussian
/// intensity of standard deviation `sigma` in a sum or difference
/// coordinate, evaluated by FFT of the amplitude `exp(-u^2 / (4 sigma^2))`.
pub fn fourier_dual_width(sigma: f64) -> f64 {
    const N: usize = 8192;
    let half_width = 64.0 * sigma;
    let du = 2.0 * half_width / N as f64;
    let mut buf: Vec<Complex<f64>> = (0..N)
        .map(|j| {
            let u = -half_width + j as f64 * du;
            Complex::new((-(u * u) / (4.0 * sigma * sigma)).exp(), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(N).process(&mut buf);
    let dq = 2.0 * PI / (N as f64 * du);
    let (mut m0, mut m2) = (0.0, 0.0);
    for (m, c) in buf.iter().enumerate() {
        let idx = if m < N / 2 { m as f64 } else { m as f64 - N as f64 };
        let q = idx * dq;
        let p = c.norm_sqr();
        m0 += p;
        m2 += q * q * p;
    }
    // The conjugate of u is (k_a ± k_b) / 2.
    2.0 * (m2 / m0).sqrt()
}

/// Source of expected probability mass over index rectangles of a fixed
/// grid. Rectangles are assumed in bounds.
pub trait RegionMass: Send + Sync {
    fn size(&self) -> usize;
    fn mass(&self, rect: IndexRect) -> f64;
    /// Marginal mass of party a over rows `[start, start + len)`.
    fn marginal_a(&self, start: usize, len: usize) -> f64;
    /// Marginal mass of party b over columns `[start, start + len)`.
    fn marginal_b(&self, start: usize, len: usize) -> f64;
}

/// Joint CDF evaluated at every pixel corner, so that any grid-aligned
/// rectangle's mass is a four-corner difference.
#[derive(Debug, Clone)]
pub struct CdfTable {
    basis: Basis,
    component: Component,
    grid: GridSpec,
    corners: Vec<f64>,
    marginal: Vec<f64>,
}

impl CdfTable {
    pub fn new(source: &SourceModel, basis: Basis, component: Component, grid: GridSpec) -> Self {
        let n = grid.n();
        let corners: Vec<f64> = (0..=n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let x = grid.edge(i);
                (0..=n).map(move |j| source.joint_cdf(basis, component, x, grid.edge(j)))
            })
            .collect();
        let s = source.widths(basis, component).marginal_sigma();
        let marginal = (0..=n).map(|i| normal_cdf(grid.edge(i) / s)).collect();
        Self {
            basis,
            component,
            grid,
            corners,
            marginal,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    #[inline]
    fn corner(&self, i: usize, j: usize) -> f64 {
        self.corners[i * (self.grid.n() + 1) + j]
    }

    pub fn to_distribution(&self) -> JointDistribution {
        let n = self.grid.n();
        let mut m = SquareMatrix::from_fn(n, |r, c| self.mass(IndexRect::square(r, c, 1)));
        m.normalize();
        JointDistribution {
            basis: self.basis,
            component: self.component,
            grid: self.grid,
            matrix: m,
        }
    }
}

impl RegionMass for CdfTable {
    fn size(&self) -> usize {
        self.grid.n()
    }

    fn mass(&self, rect: IndexRect) -> f64 {
        if rect.rows == 0 || rect.cols == 0 {
            return 0.0;
        }
        let (r0, r1) = (rect.row, rect.row + rect.rows);
        let (c0, c1) = (rect.col, rect.col + rect.cols);
        corner_difference(
            self.corner(r1, c1),
            self.corner(r0, c1),
            self.corner(r1, c0),
            self.corner(r0, c0),
        )
    }

    fn marginal_a(&self, start: usize, len: usize) -> f64 {
        self.marginal[start + len] - self.marginal[start]
    }

    fn marginal_b(&self, start: usize, len: usize) -> f64 {
        // identical marginals for both parties
        self.marginal[start + len] - self.marginal[start]
    }
}

/// Normalized discrete joint distribution of one basis and component.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    pub basis: Basis,
    pub component: Component,
    pub grid: GridSpec,
    pub matrix: SquareMatrix,
}

impl JointDistribution {
    /// Wraps a non-negative matrix, normalizing it to unit sum.
    pub fn from_matrix(
        basis: Basis,
        component: Component,
        grid: GridSpec,
        mut matrix: SquareMatrix,
    ) -> Result<Self> {
        if matrix.n() != grid.n() {
            return Err(Error::domain("matrix size does not match grid"));
        }
        if matrix.as_slice().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain("matrix entries must be finite and non-negative"));
        }
        if matrix.normalize() <= 0.0 {
            return Err(Error::Degenerate("matrix has zero total".into()));
        }
        Ok(Self {
            basis,
            component,
            grid,
            matrix,
        })
    }

    /// Perfectly correlated (`diagonal`) or anti-correlated distribution.
    pub fn diagonal(basis: Basis, component: Component, grid: GridSpec, anti: bool) -> Self {
        let n = grid.n();
        let m = SquareMatrix::from_fn(n, |r, c| {
            let hit = if anti { r + c == n - 1 } else { r == c };
            if hit {
                1.0
            } else {
                0.0
            }
        });
        Self::from_matrix(basis, component, grid, m).expect("diagonal matrix is valid")
    }
}

impl RegionMass for JointDistribution {
    fn size(&self) -> usize {
        self.grid.n()
    }

    fn mass(&self, rect: IndexRect) -> f64 {
        self.matrix.block_sum(rect.row, rect.col, rect.rows, rect.cols)
    }

    fn marginal_a(&self, start: usize, len: usize) -> f64 {
        self.matrix.block_sum(start, 0, len, self.grid.n())
    }

    fn marginal_b(&self, start: usize, len: usize) -> f64 {
        self.matrix.block_sum(0, start, self.grid.n(), len)
    }
}
