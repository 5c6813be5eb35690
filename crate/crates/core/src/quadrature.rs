//! Gauss-Legendre rules and normal-distribution helpers.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
///
/// Roots are found by Newton iteration on the Legendre recurrence, seeded
/// with the Chebyshev-like estimate `cos(pi (i - 1/4) / (n + 1/2))`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper-orthant probability `P(X > h, Y > k)` for a standard bivariate
/// normal with correlation `r`.
///
/// Genz's algorithm (Drezner-Wesolowsky for moderate `|r|`, an asymptotic
/// expansion plus Gauss-Legendre correction for `|r| >= 0.925`).
/// `one_minus_abs_r` must equal `1 - |r|`; passing it separately keeps the
/// near-singular branch accurate when `r` is within rounding of +-1.
pub fn bivariate_normal_upper(h: f64, k: f64, r: f64, one_minus_abs_r: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let npts = if r.abs() < 0.3 {
        6
    } else if r.abs() < 0.75 {
        12
    } else {
        20
    };
    let (xs, ws) = rule_cache(npts);
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for (x, w) in xs.iter().zip(ws) {
            let sn = (asr * (1.0 + x) / 2.0).sin();
            bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        bvn = bvn * asr / (2.0 * two_pi) + normal_cdf(-h) * normal_cdf(-k);
        return bvn;
    }
    let mut k = k;
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if one_minus_abs_r > 0.0 {
        let a2 = one_minus_abs_r * (2.0 - one_minus_abs_r);
        let mut a = a2.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        bvn = a
            * (-(bs / a2 + hk) / 2.0).exp()
            * (1.0 - c * (bs - a2) * (1.0 - d * bs / 5.0) / 3.0 + c * d * a2 * a2 / 5.0);
        if hk > -160.0 {
            let b = bs.sqrt();
            bvn -= (-hk / 2.0).exp()
                * two_pi.sqrt()
                * normal_cdf(-b / a)
                * b
                * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for (x, w) in xs.iter().zip(ws) {
            let t = a * (x + 1.0);
            let tsq = t * t;
            let rs = (1.0 - tsq).sqrt();
            let term = if tsq > 0.0 {
                (-bs / (2.0 * tsq) - hk / (1.0 + rs)).exp() / rs
                    - (-(bs / tsq + hk) / 2.0).exp() * (1.0 + c * tsq * (1.0 + d * tsq))
            } else {
                0.0
            };
            bvn += a * w * term;
        }
        bvn = -bvn / two_pi;
    }
    if r > 0.0 {
        bvn + normal_cdf(-h.max(k))
    } else {
        let mut out = -bvn;
        if k > h {
            if h < 0.0 {
                out += normal_cdf(k) - normal_cdf(h);
            } else {
                out += normal_cdf(-h) - normal_cdf(-k);
            }
        }
        out
    }
}

fn rule_cache(n: usize) -> (&'static [f64], &'static [f64]) {
    use std::sync::OnceLock;
    static R6: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static R12: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static R20: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let cell = match n {
        6 => &R6,
        12 => &R12,
        _ => &R20,
    };
    let (x, w) = cell.get_or_init(|| gauss_legendre(n));
    (x, w)
}
