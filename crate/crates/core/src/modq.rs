//! Arithmetic over Z_q and over square matrices of Z_q elements.
//!
//! Entries are stored canonically in `[0, q)`; the centered representative in
//! `[-(q-1)/2, (q-1)/2]` is computed on demand. None of this is constant time.

use std::fmt;

use thiserror::Error;
use zeroize::Zeroize;

use crate::params::MAX_MODULUS;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatrixError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("modulus mismatch: {0} vs {1}")]
    ModulusMismatch(u64, u64),
    #[error("entry {value} at index {index} is not below the modulus {q}")]
    EntryOutOfRange { index: usize, value: u64, q: u64 },
    #[error("expected {expected} entries, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("invalid shape: n = {n}, q = {q}")]
    InvalidShape { n: usize, q: u64 },
}

/// Centered representative of `x` in `[0, q)`: `x` if `x <= (q-1)/2`, else `x - q`.
#[inline]
pub fn centered(x: u64, q: u64) -> i64 {
    debug_assert!(x < q);
    if x <= (q - 1) / 2 {
        x as i64
    } else {
        x as i64 - q as i64
    }
}

/// Reduces a signed integer into `[0, q)`.
#[inline]
pub fn reduce_signed(x: i64, q: u64) -> u64 {
    x.rem_euclid(q as i64) as u64
}

/// An n x n matrix over Z_q, row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ModQMatrix {
    n: usize,
    q: u64,
    entries: Vec<u64>,
}

impl fmt::Debug for ModQMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ModQMatrix(n={}, q={})", self.n, self.q)?;
        if self.n <= 4 {
            f.debug_list()
                .entries(self.entries.chunks(self.n))
                .finish()?;
        }
        Ok(())
    }
}

impl Zeroize for ModQMatrix {
    fn zeroize(&mut self) {
        self.entries.zeroize();
    }
}

fn check_shape(n: usize, q: u64) -> Result<(), MatrixError> {
    if n == 0 || !(3..=MAX_MODULUS).contains(&q) || n.checked_mul(n).is_none() {
        return Err(MatrixError::InvalidShape { n, q });
    }
    Ok(())
}

impl ModQMatrix {
    pub fn zeros(n: usize, q: u64) -> Self {
        check_shape(n, q).expect("valid matrix shape");
        Self {
            n,
            q,
            entries: vec![0; n * n],
        }
    }

    pub fn identity(n: usize, q: u64) -> Self {
        let mut m = Self::zeros(n, q);
        for i in 0..n {
            m.entries[i * n + i] = 1;
        }
        m
    }

    /// Builds a matrix from `n * n` canonical entries in row-major order.
    pub fn from_entries(n: usize, q: u64, entries: Vec<u64>) -> Result<Self, MatrixError> {
        check_shape(n, q)?;
        if entries.len() != n * n {
            return Err(MatrixError::WrongLength {
                expected: n * n,
                got: entries.len(),
            });
        }
        if let Some((index, &value)) = entries.iter().enumerate().find(|(_, &v)| v >= q) {
            return Err(MatrixError::EntryOutOfRange { index, value, q });
        }
        Ok(Self { n, q, entries })
    }

    /// Builds a matrix from signed entries, reducing each mod q.
    pub fn from_signed(n: usize, q: u64, values: &[i64]) -> Result<Self, MatrixError> {
        let entries = values.iter().map(|&v| reduce_signed(v, q)).collect();
        Self::from_entries(n, q, entries)
    }

    pub fn from_fn(n: usize, q: u64, mut f: impl FnMut(usize, usize) -> u64) -> Self {
        let mut m = Self::zeros(n, q);
        for i in 0..n {
            for j in 0..n {
                m.entries[i * n + j] = f(i, j) % q;
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn entries(&self) -> &[u64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.entries[row * self.n + col]
    }

    pub fn row(&self, row: usize) -> &[u64] {
        &self.entries[row * self.n..(row + 1) * self.n]
    }

    pub fn centered_entries(&self) -> impl Iterator<Item = i64> + '_ {
        self.entries.iter().map(move |&x| centered(x, self.q))
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&x| x == 0)
    }

    fn compatible(&self, other: &Self) -> Result<(), MatrixError> {
        if self.n != other.n {
            return Err(MatrixError::DimensionMismatch(self.n, other.n));
        }
        if self.q != other.q {
            return Err(MatrixError::ModulusMismatch(self.q, other.q));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(u64, u64) -> u64) -> Result<Self, MatrixError> {
        self.compatible(other)?;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self {
            n: self.n,
            q: self.q,
            entries,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self, MatrixError> {
        let q = self.q;
        self.zip_with(other, |a, b| {
            let s = a + b;
            if s >= q {
                s - q
            } else {
                s
            }
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, MatrixError> {
        let q = self.q;
        self.zip_with(other, |a, b| if a >= b { a - b } else { a + q - b })
    }

    pub fn neg(&self) -> Self {
        let q = self.q;
        Self {
            n: self.n,
            q,
            entries: self
                .entries
                .iter()
                .map(|&a| if a == 0 { 0 } else { q - a })
                .collect(),
        }
    }

    /// Entrywise `2a mod q`.
    pub fn scale2(&self) -> Self {
        let q = self.q;
        Self {
            n: self.n,
            q,
            entries: self
                .entries
                .iter()
                .map(|&a| {
                    let d = 2 * a;
                    if d >= q {
                        d - q
                    } else {
                        d
                    }
                })
                .collect(),
        }
    }

    /// Largest absolute centered entry.
    pub fn inf_norm(&self) -> u64 {
        self.centered_entries()
            .map(i64::unsigned_abs)
            .max()
            .unwrap_or(0)
    }

    /// Matrix product `self * rhs` mod q. Runs row-parallel when the
    /// `parallel` feature is enabled.
    pub fn mul(&self, rhs: &Self) -> Result<Self, MatrixError> {
        #[cfg(feature = "parallel")]
        {
            self.mul_parallel(rhs)
        }
        #[cfg(not(feature = "parallel"))]
        {
            self.mul_sequential(rhs)
        }
    }

    pub fn mul_sequential(&self, rhs: &Self) -> Result<Self, MatrixError> {
        self.compatible(rhs)?;
        let n = self.n;
        let mut out = Self::zeros(n, self.q);
        let kernel = RowKernel::new(self.q);
        for (i, out_row) in out.entries.chunks_mut(n).enumerate() {
            kernel.row(self.row(i), &rhs.entries, n, out_row);
        }
        Ok(out)
    }

    #[cfg(feature = "parallel")]
    pub fn mul_parallel(&self, rhs: &Self) -> Result<Self, MatrixError> {
        use rayon::prelude::*;

        self.compatible(rhs)?;
        let n = self.n;
        let mut out = Self::zeros(n, self.q);
        let kernel = RowKernel::new(self.q);
        out.entries
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, out_row)| kernel.row(self.row(i), &rhs.entries, n, out_row));
        Ok(out)
    }
}

/// Accumulates one output row in 64-bit lanes, reducing every `chunk` terms
/// so that `acc + chunk * (q-1)^2` never exceeds `u64::MAX`.
#[derive(Clone, Copy)]
struct RowKernel {
    q: u64,
    chunk: usize,
}

impl RowKernel {
    fn new(q: u64) -> Self {
        let max_term = (q - 1) * (q - 1);
        let chunk = ((u64::MAX - (q - 1)) / max_term.max(1)).max(1);
        Self {
            q,
            chunk: usize::try_from(chunk).unwrap_or(usize::MAX),
        }
    }

    fn row(&self, lhs_row: &[u64], rhs: &[u64], n: usize, out: &mut [u64]) {
        let mut pending = 0usize;
        for (k, &a) in lhs_row.iter().enumerate() {
            if a == 0 {
                continue;
            }
            if pending == self.chunk {
                out.iter_mut().for_each(|x| *x %= self.q);
                pending = 0;
            }
            let rhs_row = &rhs[k * n..(k + 1) * n];
            for (acc, &b) in out.iter_mut().zip(rhs_row) {
                *acc = acc.wrapping_add(a.wrapping_mul(b));
            }
            pending += 1;
        }
        out.iter_mut().for_each(|x| *x %= self.q);
    }
}
