use serde::{Deserialize, Serialize};

/// Dense square matrix stored row-major. Row index is party a, column
/// index is party b.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                data.push(f(r, c));
            }
        }
        Self { n, data }
    }

    /// Panics if `data.len() != n * n`.
    pub fn from_vec(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n, "matrix data must be n*n");
        Self { n, data }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.n + col] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn sum(&self) -> f64 {
        kahan_sum(self.data.iter().copied())
    }

    /// Divides every entry by the total. Returns the total used.
    pub fn normalize(&mut self) -> f64 {
        let total = self.sum();
        if total > 0.0 {
            for v in &mut self.data {
                *v /= total;
            }
        }
        total
    }

    /// Marginal over columns for each row (party a).
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| kahan_sum(self.data[r * self.n..(r + 1) * self.n].iter().copied()))
            .collect()
    }

    /// Marginal over rows for each column (party b).
    pub fn col_sums(&self) -> Vec<f64> {
        let mut acc: Vec<KahanAccumulator> = vec![KahanAccumulator::default(); self.n];
        for r in 0..self.n {
            for (c, a) in acc.iter_mut().enumerate() {
                a.add(self.data[r * self.n + c]);
            }
        }
        acc.into_iter().map(|a| a.total()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |r, c| self.get(c, r))
    }

    /// Sum of entries inside a block, by direct summation.
    pub fn block_sum(&self, row: usize, col: usize, rows: usize, cols: usize) -> f64 {
        let mut acc = KahanAccumulator::default();
        for r in row..row + rows {
            for c in col..col + cols {
                acc.add(self.data[r * self.n + c]);
            }
        }
        acc.total()
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanAccumulator {
    sum: f64,
    comp: f64,
}

impl KahanAccumulator {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = KahanAccumulator::default();
    for v in values {
        acc.add(v);
    }
    acc.total()
}
