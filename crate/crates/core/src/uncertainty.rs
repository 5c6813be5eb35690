//! Statistical uncertainty of the witness from counting noise.
//!
//! Two estimators are provided. Propagation uses the analytic gradient of
//! the witness with respect to every leaf's pooled coincidence (and
//! accidental) count, with Poisson variances equal to the counts.
//! Monte Carlo redraws every pooled count from a Poisson distribution with
//! the measured mean, rebuilds the estimates and takes the spread.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::KahanAccumulator;
use crate::measurement::{poisson_draw, substream};
use crate::witness::{
    conditional_entropy, ef_bound, fill_leaves, EstimatedDistribution, UncertaintyMethod,
    WitnessResult,
};

/// Position and momentum estimates for one transverse component.
pub type EstimatePair = (EstimatedDistribution, EstimatedDistribution);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub method: UncertaintyMethod,
    /// Point estimate from the measured counts.
    pub ef_bound: f64,
    /// Point estimate for propagation, sample mean for Monte Carlo.
    pub ef_mean: f64,
    pub ef_sigma: f64,
    pub trials: usize,
    /// Per-trial witness values (Monte Carlo only).
    pub trial_values: Vec<f64>,
    /// `dE_f / dC` per leaf, one list per distribution (propagation only).
    pub sensitivities: Option<Vec<Vec<f64>>>,
}

/// Sensitivity of the witness to one leaf's pooled counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafPartial {
    pub d_coincidences: f64,
    pub d_accidentals: f64,
}

/// Witness of a set of estimates, method taken from the first estimate.
pub fn evaluate(pairs: &[EstimatePair]) -> Result<WitnessResult> {
    let first = pairs
        .first()
        .ok_or_else(|| Error::domain("at least one component is required"))?;
    let method = first.0.method;
    if pairs.iter().any(|(p, k)| p.method != method || k.method != method) {
        return Err(Error::domain("all estimates must use the same method"));
    }
    let refs: Vec<(&EstimatedDistribution, &EstimatedDistribution)> =
        pairs.iter().map(|(p, k)| (p, k)).collect();
    ef_bound(&refs, method)
}

/// `d(-H(A|B)) / d(count)` for every leaf of one estimate.
///
/// With `p = q / Z`, `dH/dp_ij = -log2(p_ij / p_.j)` and
/// `dH/dq_ij = (dH/dp_ij - H) / Z`. A leaf's rate enters `area` pixels
/// with weight `1 / area`, and the rate is `count / (eps T)`. Leaves with
/// zero estimated rate (including clamped ones) get zero sensitivity.
pub fn leaf_partials(est: &EstimatedDistribution) -> Vec<LeafPartial> {
    let subtract = est.method.subtract();
    let m = &est.matrix;
    let col = m.col_sums();
    let h = conditional_entropy(m);
    let z: f64 = {
        let mut acc = KahanAccumulator::default();
        for l in &est.leaves {
            acc.add(l.rate(subtract));
        }
        acc.total()
    };
    est.leaves
        .iter()
        .map(|leaf| {
            let rate = leaf.rate(subtract);
            if rate <= 0.0 || z <= 0.0 {
                return LeafPartial {
                    d_coincidences: 0.0,
                    d_accidentals: 0.0,
                };
            }
            let r = leaf.rect;
            let mut g = KahanAccumulator::default();
            for i in r.row..r.row + r.rows {
                for (j, &cj) in col.iter().enumerate().skip(r.col).take(r.cols) {
                    g.add(-(m.get(i, j) / cj).log2());
                }
            }
            let g_mean = g.total() / r.area() as f64;
            let dh_drate = (g_mean - h) / z;
            let d_c = -dh_drate / (leaf.efficiency * leaf.total_time);
            LeafPartial {
                d_coincidences: d_c,
                d_accidentals: if subtract { -d_c } else { 0.0 },
            }
        })
        .collect()
}

/// `sqrt(sum (df/dN)^2 N)` for independent Poisson counts `N`.
pub fn poisson_sigma(terms: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let mut var = KahanAccumulator::default();
    for (partial, count) in terms {
        var.add(partial * partial * count);
    }
    var.total().max(0.0).sqrt()
}

/// First-order propagation of Poisson counting noise.
pub fn propagate_error(pairs: &[EstimatePair]) -> Result<UncertaintyReport> {
    let w = evaluate(pairs)?;
    let mut terms = Vec::new();
    let mut sensitivities = Vec::new();
    for (p, k) in pairs {
        for est in [p, k] {
            let partials = leaf_partials(est);
            for (leaf, d) in est.leaves.iter().zip(&partials) {
                terms.push((d.d_coincidences, leaf.pooled_c));
                terms.push((d.d_accidentals, leaf.pooled_a));
            }
            sensitivities.push(partials.iter().map(|d| d.d_coincidences).collect());
        }
    }
    Ok(UncertaintyReport {
        method: UncertaintyMethod::Propagation,
        ef_bound: w.ef_bound,
        ef_mean: w.ef_bound,
        ef_sigma: poisson_sigma(terms),
        trials: 0,
        trial_values: Vec::new(),
        sensitivities: Some(sensitivities),
    })
}

const MC_DOMAIN: u64 = 0x6d63_0000_0000_0000;

fn resample(est: &EstimatedDistribution, seed: u64, trial: u64, slot: u64) -> Result<f64> {
    let subtract = est.method.subtract();
    let mut rng = substream(seed, MC_DOMAIN | trial, slot);
    let values: Vec<f64> = est
        .leaves
        .iter()
        .map(|l| {
            let c = poisson_draw(&mut rng, l.pooled_c);
            let a = if subtract { poisson_draw(&mut rng, l.pooled_a) } else { 0.0 };
            let counts = if subtract { (c - a).max(0.0) } else { c };
            counts / (l.efficiency * l.total_time)
        })
        .collect();
    let m = fill_leaves(est.grid.n(), &est.leaves, |i, _| values[i])?;
    Ok(conditional_entropy(&m))
}

/// Parametric bootstrap over `trials` Poisson redraws of all pooled counts.
pub fn monte_carlo(pairs: &[EstimatePair], trials: usize, seed: u64) -> Result<UncertaintyReport> {
    if trials < 2 {
        return Err(Error::domain("Monte Carlo needs at least two trials"));
    }
    let w = evaluate(pairs)?;
    let logs: f64 = w.components.iter().map(|c| c.log_term).sum();
    let values = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut e = logs;
            for (i, (p, k)) in pairs.iter().enumerate() {
                e -= resample(p, seed, t, 2 * i as u64)?;
                e -= resample(k, seed, t, 2 * i as u64 + 1)?;
            }
            Ok(e)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = values.iter().sum::<f64>() / trials as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    Ok(UncertaintyReport {
        method: UncertaintyMethod::MonteCarlo,
        ef_bound: w.ef_bound,
        ef_mean: mean,
        ef_sigma: var.sqrt(),
        trials,
        trial_values: values,
        sensitivities: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::{Basis, Component, GridSpec, IndexRect};
    use crate::witness::{estimate_distribution, LeafSummary};

    fn leaf(path: &str, row: usize, col: usize, span: usize, c: f64, a: f64) -> LeafSummary {
        LeafSummary {
            path: path.into(),
            rect: IndexRect::square(row, col, span),
            pooled_c: c,
            pooled_a: a,
            efficiency: 0.9,
            total_time: 2.0,
        }
    }

    fn est(basis: Basis, leaves: Vec<LeafSummary>, subtract: bool) -> EstimatedDistribution {
        let g = GridSpec::new(4, 1.0).unwrap();
        estimate_distribution(basis, Component::X, g, leaves, subtract).unwrap()
    }

    fn sample_leaves(scale: f64) -> Vec<LeafSummary> {
        vec![
            leaf("0", 0, 0, 2, 40.0 * scale, 3.0 * scale),
            leaf("1", 0, 2, 2, 5.0 * scale, 2.0 * scale),
            leaf("2", 2, 0, 2, 7.0 * scale, 1.0 * scale),
            leaf("30", 2, 2, 1, 20.0 * scale, 1.0 * scale),
            leaf("31", 2, 3, 1, 3.0 * scale, 0.5 * scale),
            leaf("32", 3, 2, 1, 4.0 * scale, 0.5 * scale),
            leaf("33", 3, 3, 1, 25.0 * scale, 2.0 * scale),
        ]
    }

    fn pairs(scale: f64, subtract: bool) -> Vec<EstimatePair> {
        let mom: Vec<LeafSummary> = sample_leaves(scale)
            .into_iter()
            .rev()
            .zip(sample_leaves(scale))
            .map(|(a, b)| LeafSummary { rect: b.rect, path: b.path, ..a })
            .collect();
        vec![(
            est(Basis::Position, sample_leaves(scale), subtract),
            est(Basis::Momentum, mom, subtract),
        )]
    }

    fn with_counts(p: &[EstimatePair], which: usize, leaf: usize, dc: f64, da: f64) -> Vec<EstimatePair> {
        let mut out = p.to_vec();
        let e = if which == 0 { &mut out[0].0 } else { &mut out[0].1 };
        let mut leaves = e.leaves.clone();
        leaves[leaf].pooled_c += dc;
        leaves[leaf].pooled_a += da;
        *e = estimate_distribution(e.basis, e.component, e.grid, leaves, e.method.subtract()).unwrap();
        out
    }

    #[test]
    fn partials_match_central_differences() {
        for subtract in [false, true] {
            let p = pairs(1.0, subtract);
            for which in 0..2 {
                let e = if which == 0 { &p[0].0 } else { &p[0].1 };
                for (i, d) in leaf_partials(e).iter().enumerate() {
                    let h = 1e-4;
                    let f = |dc, da| evaluate(&with_counts(&p, which, i, dc, da)).unwrap().ef_bound;
                    let fd_c = (f(h, 0.0) - f(-h, 0.0)) / (2.0 * h);
                    assert!(
                        (fd_c - d.d_coincidences).abs() <= 1e-6 * fd_c.abs().max(1e-3),
                        "leaf {i}: {fd_c} vs {}",
                        d.d_coincidences
                    );
                    if subtract {
                        let fd_a = (f(0.0, h) - f(0.0, -h)) / (2.0 * h);
                        assert!((fd_a - d.d_accidentals).abs() <= 1e-6 * fd_a.abs().max(1e-3));
                    }
                }
            }
        }
    }

    #[test]
    fn linear_functional_closed_form() {
        let c = [0.5, -2.0, 3.0];
        let n = [10.0, 4.0, 7.0];
        let expect = (0.25 * 10.0 + 4.0 * 4.0 + 9.0 * 7.0f64).sqrt();
        assert!((poisson_sigma(c.into_iter().zip(n)) - expect).abs() < 1e-12);
        assert_eq!(poisson_sigma([(0.0, 5.0), (0.0, 9.0)]), 0.0);
    }

    #[test]
    fn zero_count_leaves_never_vary_under_resampling() {
        let mut leaves = sample_leaves(1.0);
        leaves[2].pooled_c = 0.0;
        let e = est(Basis::Position, leaves, false);
        for t in 0..50 {
            let mut rng = substream(3, MC_DOMAIN | t, 0);
            for l in &e.leaves {
                let c = poisson_draw(&mut rng, l.pooled_c);
                if l.pooled_c == 0.0 {
                    assert_eq!(c, 0.0);
                }
            }
        }
    }

    #[test]
    fn sigma_scales_as_inverse_sqrt_counts() {
        let s1 = propagate_error(&pairs(1.0, false)).unwrap();
        let s4 = propagate_error(&pairs(4.0, false)).unwrap();
        assert!((s1.ef_bound - s4.ef_bound).abs() < 1e-12);
        assert!((s1.ef_sigma / s4.ef_sigma - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_count_leaf_contributes_nothing() {
        let mut leaves = sample_leaves(1.0);
        leaves[1].pooled_c = 0.0;
        let e = est(Basis::Position, leaves, false);
        let d = leaf_partials(&e);
        assert_eq!(d[1].d_coincidences, 0.0);
        assert!(d.iter().enumerate().all(|(i, d)| i == 1 || d.d_coincidences != 0.0));

        let mut leaves = sample_leaves(1.0);
        leaves[4].pooled_a = 10.0;
        let e = est(Basis::Position, leaves, true);
        assert_eq!(leaf_partials(&e)[4], LeafPartial { d_coincidences: 0.0, d_accidentals: 0.0 });
    }

    #[test]
    fn uniform_rescaling_has_zero_total_derivative() {
        // E is scale invariant, so sum_L C_L dE/dC_L = 0
        let p = pairs(1.0, false);
        let e = &p[0].0;
        let s: f64 = e
            .leaves
            .iter()
            .zip(leaf_partials(e))
            .map(|(l, d)| l.pooled_c * d.d_coincidences)
            .sum();
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_agrees_with_propagation_at_high_counts() {
        let p = pairs(1e4, false);
        let prop = propagate_error(&p).unwrap();
        let mc = monte_carlo(&p, 400, 11).unwrap();
        assert_eq!(mc.trial_values.len(), 400);
        assert!((mc.ef_sigma / prop.ef_sigma - 1.0).abs() < 0.15, "{} vs {}", mc.ef_sigma, prop.ef_sigma);
        let se = mc.ef_sigma / 20.0;
        assert!((mc.ef_mean - mc.ef_bound).abs() < 3.0 * se + 1e-3);
        assert_eq!(mc, monte_carlo(&p, 400, 11).unwrap());
        assert!(monte_carlo(&p, 1, 11).is_err());
    }
}
