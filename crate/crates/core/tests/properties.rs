use proptest::prelude::*;

use entropic_witness::measurement::{CountingNoise, DetectorConfig, MeasurementChannel};
use entropic_witness::sampler::{
    run_tree, stability_check, IterativeStop, PartitionTree, RateEstimate, SamplerParams, Stability,
};
use entropic_witness::source::{Basis, Component, GridSpec, IndexRect, RegionMass, SourceModel};
use entropic_witness::witness::{
    coarse_grain, component_split_check, conditional_entropy, estimate_distribution, mutual_information,
    FourIndexDistribution, LeafSummary,
};
use entropic_witness::SquareMatrix;

fn matrix(n: usize) -> impl Strategy<Value = SquareMatrix> {
    prop::collection::vec(0.0f64..1.0, n * n).prop_filter_map("zero matrix", move |v| {
        let mut m = SquareMatrix::from_vec(n, v);
        (m.normalize() > 0.0).then_some(m)
    })
}

/// Random grouping of `0..n` into contiguous runs, as (start, len).
fn groups(n: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec(any::<bool>(), n - 1).prop_map(move |cuts| {
        let mut out = Vec::new();
        let mut start = 0;
        for (i, cut) in cuts.into_iter().enumerate() {
            if cut {
                out.push((start, i + 1 - start));
                start = i + 1;
            }
        }
        out.push((start, n - start));
        out
    })
}

fn product_blocks(rows: &[(usize, usize)], cols: &[(usize, usize)]) -> Vec<IndexRect> {
    rows.iter()
        .flat_map(|&(r, h)| cols.iter().map(move |&(c, w)| IndexRect::new(r, c, h, w)))
        .collect()
}

/// Quad-tree partition driven by a bit string: each visited node consumes
/// one bit and splits when it is set.
fn quadtree_blocks(n: usize, bits: &[bool]) -> Vec<IndexRect> {
    fn go(row: usize, col: usize, span: usize, bits: &[bool], next: &mut usize, out: &mut Vec<IndexRect>) {
        let split = span > 1 && bits.get(*next).copied().unwrap_or(false);
        *next += 1;
        if !split {
            out.push(IndexRect::square(row, col, span));
            return;
        }
        let h = span / 2;
        for (dr, dc) in [(0, 0), (0, h), (h, 0), (h, h)] {
            go(row + dr, col + dc, h, bits, next, out);
        }
    }
    let mut out = Vec::new();
    go(0, 0, n, bits, &mut 0, &mut out);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn coarse_graining_keeps_normalization(m in matrix(8), bits in prop::collection::vec(any::<bool>(), 85)) {
        let c = coarse_grain(&m, &quadtree_blocks(8, &bits)).unwrap();
        prop_assert!((c.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn product_coarse_graining_never_adds_information(m in matrix(8), rows in groups(8), cols in groups(8)) {
        let c = coarse_grain(&m, &product_blocks(&rows, &cols)).unwrap();
        prop_assert!(mutual_information(&c) <= mutual_information(&m) + 1e-12);
    }

    #[test]
    fn averaging_within_columns_never_lowers_conditional_entropy(m in matrix(8), rows in groups(8)) {
        let cols: Vec<(usize, usize)> = (0..8).map(|c| (c, 1)).collect();
        let c = coarse_grain(&m, &product_blocks(&rows, &cols)).unwrap();
        prop_assert!(conditional_entropy(&c) >= conditional_entropy(&m) - 1e-12);
    }

    #[test]
    fn equal_block_coarse_graining_never_lowers_conditional_entropy(
        m in matrix(8),
        rh in prop::sample::select(vec![1usize, 2, 4, 8]),
        cw in prop::sample::select(vec![1usize, 2, 4, 8]),
    ) {
        let rows: Vec<_> = (0..8).step_by(rh).map(|r| (r, rh)).collect();
        let cols: Vec<_> = (0..8).step_by(cw).map(|c| (c, cw)).collect();
        let c = coarse_grain(&m, &product_blocks(&rows, &cols)).unwrap();
        prop_assert!(conditional_entropy(&c) >= conditional_entropy(&m) - 1e-12);
        prop_assert!(mutual_information(&c) <= mutual_information(&m) + 1e-12);
    }

    #[test]
    fn component_split_inequality(
        dims in prop::array::uniform4(1usize..5),
        seed in prop::collection::vec(0.0f64..1.0, 256),
    ) {
        let len: usize = dims.iter().product();
        let p = FourIndexDistribution::new(dims, seed[..len].to_vec()).unwrap();
        let (joint, split) = component_split_check(&p);
        prop_assert!(joint <= split + 1e-12, "{joint} > {split}");
    }

    #[test]
    fn component_split_equality_on_products(x in matrix(3), y in matrix(4)) {
        let (joint, split) = component_split_check(&FourIndexDistribution::product(&x, &y).unwrap());
        prop_assert!((joint - split).abs() < 1e-12);
    }

    #[test]
    fn stricter_beta_never_stabilizes(
        rate in 0.0f64..1e4,
        sigma in 0.0f64..1e3,
        total in 1.0f64..1e5,
        total_sigma in 0.0f64..1e2,
        alpha in 1e-4f64..1.0,
        b1 in 0.0f64..5.0,
        extra in 0.0f64..5.0,
    ) {
        let r = RateEstimate { rate, sigma };
        let t = RateEstimate { rate: total, sigma: total_sigma };
        if stability_check(r, alpha, b1 + extra, t) == Stability::Stable {
            prop_assert_eq!(stability_check(r, alpha, b1, t), Stability::Stable);
        }
    }

    #[test]
    fn random_splits_keep_tiling(depth in 1u32..6, picks in prop::collection::vec(any::<prop::sample::Index>(), 0..40)) {
        let grid = GridSpec::new(32, 1.0).unwrap();
        let total = RateEstimate { rate: 1.0, sigma: 0.0 };
        let mut tree = PartitionTree::with_quadrants(0, Basis::Position, Component::X, grid, total, Some(depth)).unwrap();
        let mut splits = 1;
        for pick in picks {
            let candidates: Vec<usize> = tree.leaves().into_iter().filter(|&i| tree.can_split(i)).collect();
            if candidates.is_empty() {
                break;
            }
            tree.split(candidates[pick.index(candidates.len())]).unwrap();
            splits += 1;
            tree.check_tiling().unwrap();
        }
        prop_assert_eq!(tree.leaf_count(), 1 + 3 * splits);
        prop_assert!(tree.leaf_count() <= 4usize.pow(depth));
    }

    #[test]
    fn estimates_rebuild_bit_exactly_from_serialized_leaves(
        bits in prop::collection::vec(any::<bool>(), 85),
        counts in prop::collection::vec((0.0f64..1e4, 0.0f64..50.0, 0.5f64..1.0), 64),
        subtract in any::<bool>(),
    ) {
        let grid = GridSpec::new(8, 1.0).unwrap();
        let leaves: Vec<LeafSummary> = quadtree_blocks(8, &bits)
            .into_iter()
            .zip(counts)
            .enumerate()
            .map(|(i, (rect, (c, a, eps)))| LeafSummary {
                path: i.to_string(),
                rect,
                pooled_c: c.round() + 100.0,
                pooled_a: a.round(),
                efficiency: eps,
                total_time: 0.5 * (1 + i % 3) as f64,
            })
            .collect();
        let est = estimate_distribution(Basis::Position, Component::X, grid, leaves.clone(), subtract).unwrap();
        prop_assert!((est.matrix.sum() - 1.0).abs() < 1e-12);
        for l in &leaves {
            let first = est.matrix.get(l.rect.row, l.rect.col);
            for r in l.rect.row..l.rect.row + l.rect.rows {
                for c in l.rect.col..l.rect.col + l.rect.cols {
                    prop_assert_eq!(est.matrix.get(r, c), first);
                }
            }
        }
        let json = serde_json::to_string(&leaves).unwrap();
        let back: Vec<LeafSummary> = serde_json::from_str(&json).unwrap();
        let again = estimate_distribution(Basis::Position, Component::X, grid, back, subtract).unwrap();
        prop_assert_eq!(est.matrix.as_slice(), again.matrix.as_slice());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Noise-free runs split exactly the nodes whose exact rate reaches the
    /// threshold, so every internal node is hot and every coarse leaf cold.
    #[test]
    fn noise_free_partition_is_the_minimal_threshold_tree(
        sum in 50e-6f64..500e-6,
        ratio in 2.0f64..40.0,
        log_alpha in -3.5f64..-1.0,
        basis in prop::sample::select(vec![Basis::Position, Basis::Momentum]),
    ) {
        let source = SourceModel::pure_state(sum, sum / ratio, sum, sum / ratio, 26_400.0).unwrap();
        let grid = source.default_grids(32).unwrap()[0].grid(basis);
        let table = source.cdf_table(basis, Component::X, grid);
        let rate = 26_400.0;
        let channel = MeasurementChannel::new(&table, rate);
        let det = DetectorConfig {
            noise: CountingNoise::Expected,
            singles_rate_a: 0.0,
            singles_rate_b: 0.0,
            ..DetectorConfig::default()
        };
        let alpha = 10f64.powf(log_alpha);
        let params = SamplerParams { alpha, iterative: IterativeStop::Passes(0), ..SamplerParams::default() };
        let tree = run_tree(0, basis, Component::X, grid, &channel, &det, &params).unwrap();
        tree.check_tiling().unwrap();
        let threshold = alpha * tree.total.rate;
        let exact = |rect: IndexRect| rate * table.mass(rect);
        for (i, node) in tree.nodes.iter().enumerate().skip(1) {
            if node.is_leaf() {
                prop_assert!(node.span() == 1 || exact(node.rect) < threshold, "leaf {i} is hot");
            } else {
                prop_assert!(exact(node.rect) >= threshold, "internal node {i} is cold");
            }
        }
    }
}
