//! LU factorization of banded matrices without pivoting.
//!
//! Only intended for matrices where elimination without pivoting is stable,
//! such as column diagonally dominant ones. Fill-in stays inside the band.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        Self {
            n,
            lower,
            upper,
            data: vec![0.0; n * (lower + upper + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn width(&self) -> usize {
        self.lower + self.upper + 1
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if j + self.lower < i || j > i + self.upper || i >= self.n || j >= self.n {
            None
        } else {
            Some(i * self.width() + j + self.lower - i)
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.data[k])
    }

    /// Adds `v` at `(i, j)`; panics if the entry is outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("({i}, {j}) outside band ({}, {})", self.lower, self.upper));
        self.data[k] += v;
    }

    /// In-place LU factorization. The unit lower factor is stored below the
    /// diagonal.
    pub fn factor(mut self) -> Result<BandedLu> {
        let (n, kl, ku, w) = (self.n, self.lower, self.upper, self.width());
        for k in 0..n {
            let pivot = self.data[k * w + kl];
            if !(pivot.is_finite() && pivot != 0.0) {
                return Err(Error::InvalidParameter(format!("zero pivot at row {k} in banded LU")));
            }
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + ku).min(n - 1);
            for i in k + 1..=last_row {
                let ik = i * w + k + kl - i;
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=last_col {
                    let ij = i * w + j + kl - i;
                    let kj = k * w + j + kl - k;
                    self.data[ij] -= l * self.data[kj];
                }
            }
        }
        Ok(BandedLu { m: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    m: BandedMatrix,
}

impl BandedLu {
    /// Overwrites `b` with the solution of `A x = b`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let m = &self.m;
        let (n, kl, ku, w) = (m.n, m.lower, m.upper, m.width());
        assert_eq!(b.len(), n);
        for i in 0..n {
            let start = i.saturating_sub(kl);
            let mut acc = b[i];
            for (j, bj) in b.iter().enumerate().take(i).skip(start) {
                acc -= m.data[i * w + j + kl - i] * bj;
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let end = (i + ku).min(n - 1);
            let mut acc = b[i];
            for (j, bj) in b.iter().enumerate().take(end + 1).skip(i + 1) {
                acc -= m.data[i * w + j + kl - i] * bj;
            }
            b[i] = acc / m.data[i * w + kl];
        }
    }
}
