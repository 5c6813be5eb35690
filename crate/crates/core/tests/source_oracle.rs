#![allow(clippy::excessive_precision)]

use entropic_witness::source::{Basis, Component, ComponentGrids, GridSpec, IndexRect, SourceModel};

fn tight() -> SourceModel {
    SourceModel::pure_state(200e-6, 20e-6, 150e-6, 30e-6, 26_400.0).unwrap()
}

const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const K_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const G_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// 15-point Kronrod estimate and its distance from the embedded 7-point
/// Gauss rule.
fn kronrod(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut k = 0.0;
    let mut g = 0.0;
    for (i, &x) in GK_NODES.iter().enumerate() {
        let v = if x == 0.0 { f(c) } else { f(c - h * x) + f(c + h * x) };
        k += K_WEIGHTS[i] * v;
        if i % 2 == 1 {
            g += G_WEIGHTS[i / 2] * v;
        }
    }
    (k * h, (k - g).abs() * h)
}

fn refine(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (v, err) = kronrod(f, a, b);
    if err <= tol || depth == 0 {
        return v;
    }
    let m = 0.5 * (a + b);
    refine(f, a, m, tol / 2.0, depth - 1) + refine(f, m, b, tol / 2.0, depth - 1)
}

/// Adaptive Gauss-Kronrod over `[a, b]` to absolute accuracy `tol`,
/// seeded with 32 panels so narrow peaks are not missed.
fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let panels = 32;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| refine(f, a + i as f64 * h, a + (i + 1) as f64 * h, tol / panels as f64, 24))
        .sum()
}

fn box_integral(s: &SourceModel, basis: Basis, c: Component, x: (f64, f64), y: (f64, f64)) -> f64 {
    let sigma = s.widths(basis, c).marginal_sigma();
    let inner = |u: f64| integrate(&|v| s.joint_density(basis, c, u, v), y.0, y.1, 1e-13 / sigma);
    integrate(&inner, x.0, x.1, 1e-12)
}

#[test]
fn density_integrates_to_one_over_six_sigma() {
    let s = tight();
    for basis in [Basis::Position, Basis::Momentum] {
        for c in [Component::X, Component::Y] {
            let m = 6.0 * s.widths(basis, c).marginal_sigma();
            let total = box_integral(&s, basis, c, (-m, m), (-m, m));
            assert!((total - 1.0).abs() < 1e-6, "{basis:?} {c:?}: {total}");
        }
    }
}

#[test]
fn region_masses_match_adaptive_quadrature() {
    let s = tight();
    let grids = s.default_grids(16).unwrap();
    for g in &grids {
        for basis in [Basis::Position, Basis::Momentum] {
            let grid = g.grid(basis);
            for rect in [
                IndexRect::square(7, 7, 1),
                IndexRect::square(8, 7, 1),
                IndexRect::square(4, 4, 4),
                IndexRect::square(6, 8, 2),
                IndexRect::new(0, 0, 16, 16),
            ] {
                let got = s.region_probability(basis, g.component, rect, &grid).unwrap();
                let x = (grid.edge(rect.row), grid.edge(rect.row + rect.rows));
                let y = (grid.edge(rect.col), grid.edge(rect.col + rect.cols));
                let want = box_integral(&s, basis, g.component, x, y);
                assert!((got - want).abs() < 1e-9, "{basis:?} {rect:?}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn discretized_matrices_are_normalized_and_symmetric() {
    let s = tight();
    for g in s.default_grids(64).unwrap() {
        for basis in [Basis::Position, Basis::Momentum] {
            let d = s.discretize(basis, g.component, g.grid(basis));
            assert!((d.matrix.sum() - 1.0).abs() < 1e-12);
            assert!(d.matrix.as_slice().iter().all(|&v| v >= 0.0));
            if basis == Basis::Position {
                let t = d.matrix.transpose();
                for (a, b) in d.matrix.as_slice().iter().zip(t.as_slice()) {
                    assert!((a - b).abs() <= 1e-15, "{a} vs {b}");
                }
            }
        }
    }
}

fn quadtree(row: usize, col: usize, span: usize, salt: &mut u64, out: &mut Vec<IndexRect>) {
    *salt = salt.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    if span == 1 || (*salt >> 61) < 3 {
        out.push(IndexRect::square(row, col, span));
        return;
    }
    let h = span / 2;
    for (dr, dc) in [(0, 0), (0, h), (h, 0), (h, h)] {
        quadtree(row + dr, col + dc, h, salt, out);
    }
}

#[test]
fn region_probabilities_add_over_partitions() {
    let s = tight();
    let g = s.default_grids(64).unwrap()[0];
    for basis in [Basis::Position, Basis::Momentum] {
        let grid = g.grid(basis);
        let full = s.region_probability(basis, g.component, IndexRect::full(64), &grid).unwrap();
        for seed in 0..20u64 {
            let mut salt = seed;
            let mut blocks = Vec::new();
            quadtree(0, 0, 64, &mut salt, &mut blocks);
            let sum: f64 = blocks
                .iter()
                .map(|&b| s.region_probability(basis, g.component, b, &grid).unwrap())
                .sum();
            assert!((sum - full).abs() < 1e-9, "seed {seed}: {sum} vs {full}");
        }
    }
}

#[test]
fn oracle_is_monotone_in_resolution_and_below_continuum() {
    let s = SourceModel::default_physical();
    let cont = s.continuous_ef_bound(&[Component::X, Component::Y]);
    let values: Vec<f64> = [16, 32, 64, 128]
        .iter()
        .map(|&n| s.oracle_ef_bound(&s.default_grids(n).unwrap()).unwrap())
        .collect();
    for w in values.windows(2) {
        assert!(w[1] >= w[0], "{values:?}");
    }
    assert!(*values.last().unwrap() < cont);
}

#[test]
fn gaussian_oracle_converges_to_continuum() {
    let s = SourceModel::pure_state(1e-3, 1e-4, 1e-3, 1e-4, 26_400.0).unwrap();
    let oracle = s.oracle_ef_bound(&s.default_grids(256).unwrap()).unwrap();
    let cont = s.continuous_ef_bound(&[Component::X, Component::Y]);
    assert!((oracle - cont).abs() < 0.05, "{oracle} vs {cont}");
}

#[test]
fn uncorrelated_gaussian_certifies_nothing() {
    let sigma = 1e-4;
    let s = SourceModel::pure_state(sigma, sigma, sigma, sigma, 1.0).unwrap();
    for n in [16, 64, 256] {
        let position = 8.0 * sigma;
        // dX dK = 2 pi / n
        let momentum = 2.0 * std::f64::consts::PI * n as f64 / position;
        let grids: Vec<ComponentGrids> = [Component::X, Component::Y]
            .map(|c| ComponentGrids {
                component: c,
                position: GridSpec::new(n, position).unwrap(),
                momentum: GridSpec::new(n, momentum).unwrap(),
            })
            .to_vec();
        let bound = s.oracle_ef_bound(&grids).unwrap();
        assert!(bound <= 0.0, "n={n}: {bound}");
    }
}
