//! Banded LU factorization with partial pivoting.
//!
//! The pseudo-2D Jacobian is banded once degrees of freedom are interleaved
//! per macro node (micro column, then the three macro fields), with
//! bandwidth of the order of the micro resolution. A direct banded solve is
//! deterministic and fast at that bandwidth, which keeps the Newton
//! iteration reproducible across runs.

use crate::error::{Error, Result};

/// Banded matrix in LAPACK-style storage with `kl` extra rows of fill-in
/// workspace for pivoting.
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// (2*kl + ku + 1) x n, entry (i, j) at `data[(kl + ku + i - j) * n + j]`.
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![0.0; (2 * kl + ku + 1) * n],
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + self.ku + self.kl >= j && j + self.kl >= i, "({i},{j}) outside band");
        (self.kl + self.ku + i - j) * self.n + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.slot(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn reset(&mut self) {
        self.data.fill(0.0);
    }

    /// Factor in place. Returns the pivot vector for [`BandedLu::solve`].
    pub fn factor(self) -> Result<BandedLu> {
        let BandedMatrix { n, kl, ku, mut data } = self;
        let width = kl + ku;
        let idx = |i: usize, j: usize| (kl + ku + i - j) * n + j;
        let mut ipiv = vec![0usize; n];
        for j in 0..n {
            let i_max = (j + kl).min(n - 1);
            let mut p = j;
            let mut best = data[idx(j, j)].abs();
            for i in (j + 1)..=i_max {
                let v = data[idx(i, j)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            ipiv[j] = p;
            if best == 0.0 {
                return Err(Error::SingularSystem { pivot: j });
            }
            let k_max = (j + width).min(n - 1);
            if p != j {
                for k in j..=k_max {
                    data.swap(idx(j, k), idx(p, k));
                }
            }
            let pivot = data[idx(j, j)];
            for i in (j + 1)..=i_max {
                let l = data[idx(i, j)] / pivot;
                data[idx(i, j)] = l;
                if l != 0.0 {
                    for k in (j + 1)..=k_max {
                        data[idx(i, k)] -= l * data[idx(j, k)];
                    }
                }
            }
        }
        Ok(BandedLu {
            n,
            kl,
            ku,
            data,
            ipiv,
        })
    }
}

/// Factored banded matrix.
#[derive(Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandedLu {
    /// Solve `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        assert_eq!(b.len(), n);
        let idx = |i: usize, j: usize| (kl + ku + i - j) * n + j;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                let i_max = (j + kl).min(n - 1);
                for i in (j + 1)..=i_max {
                    b[i] -= self.data[idx(i, j)] * bj;
                }
            }
        }
        let width = kl + ku;
        for j in (0..n).rev() {
            b[j] /= self.data[idx(j, j)];
            let bj = b[j];
            if bj != 0.0 {
                let i_min = j.saturating_sub(width);
                for i in i_min..j {
                    b[i] -= self.data[idx(i, j)] * bj;
                }
            }
        }
    }
}
