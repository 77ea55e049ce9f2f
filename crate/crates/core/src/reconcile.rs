//! Signal (hint) and extractor functions.
//!
//! The server publishes one hint bit per entry of its key material. With that
//! hint, any two values whose difference is even and at most `floor(q/4) - 2`
//! in absolute value extract to the same bit.
//!
//! Hint intervals are closed and taken on centered representatives. The
//! extractor's parity is also read on the centered representative of
//! `x + sigma * (q-1)/2 mod q`: q is odd, so the parity of the canonical
//! `[0, q)` form flips whenever a value wraps past zero, which breaks the
//! agreement guarantee for small offsets around 0.

use thiserror::Error;

use crate::modq::{centered, ModQMatrix};
use crate::sampler::StreamExpander;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReconcileError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("bit matrix of dimension {n} needs {expected} bits, got {got}")]
    WrongLength {
        n: usize,
        expected: usize,
        got: usize,
    },
    #[error("bit value {0} is not 0 or 1")]
    InvalidBit(u8),
}

macro_rules! bit_matrix {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, Hash)]
        pub struct $name {
            n: usize,
            bits: Vec<u8>,
        }

        impl std::fmt::Debug for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, "{}(n={})", stringify!($name), self.n)
            }
        }

        impl $name {
            pub fn new(n: usize, bits: Vec<u8>) -> Result<Self, ReconcileError> {
                if bits.len() != n * n {
                    return Err(ReconcileError::WrongLength { n, expected: n * n, got: bits.len() });
                }
                if let Some(&b) = bits.iter().find(|&&b| b > 1) {
                    return Err(ReconcileError::InvalidBit(b));
                }
                Ok(Self { n, bits })
            }

            pub fn zeros(n: usize) -> Self {
                Self { n, bits: vec![0; n * n] }
            }

            pub fn n(&self) -> usize {
                self.n
            }

            /// Row-major bits, each 0 or 1.
            pub fn bits(&self) -> &[u8] {
                &self.bits
            }

            pub fn get(&self, row: usize, col: usize) -> u8 {
                self.bits[row * self.n + col]
            }

            /// Packs bits row-major, 8 per byte, MSB first, zero padded.
            pub fn pack(&self) -> Vec<u8> {
                pack_bits(&self.bits)
            }

            /// Inverse of [`Self::pack`]. Padding bits must be zero.
            pub fn unpack(n: usize, packed: &[u8]) -> Result<Self, ReconcileError> {
                let count = n * n;
                let expected = count.div_ceil(8);
                if packed.len() != expected {
                    return Err(ReconcileError::WrongLength { n, expected: expected * 8, got: packed.len() * 8 });
                }
                let mut bits: Vec<u8> = packed
                    .iter()
                    .flat_map(|byte| (0..8).rev().map(move |i| (byte >> i) & 1))
                    .collect();
                if bits[count..].iter().any(|&b| b != 0) {
                    return Err(ReconcileError::InvalidBit(1));
                }
                bits.truncate(count);
                Ok(Self { n, bits })
            }
        }
    };
}

bit_matrix!(
    /// Per-entry reconciliation hints sent alongside the server's exchange matrix.
    SignalMatrix
);
bit_matrix!(
    /// Shared bits extracted from key material.
    KeyBits
);

fn pack_bits(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | (b << (7 - i)))
        })
        .collect()
}

/// 0 iff `centered(x)` lies in `[-floor(q/4), floor(q/4)]`.
pub fn hint0(x: u64, q: u64) -> u8 {
    let c = centered(x, q);
    let f = (q / 4) as i64;
    u8::from(!(-f..=f).contains(&c))
}

/// 0 iff `centered(x)` lies in `[-floor(q/4) + 1, floor(q/4) + 1]`.
pub fn hint1(x: u64, q: u64) -> u8 {
    let c = centered(x, q);
    let f = (q / 4) as i64;
    u8::from(!(1 - f..=f + 1).contains(&c))
}

pub fn hint(choice: u8, x: u64, q: u64) -> u8 {
    if choice == 0 {
        hint0(x, q)
    } else {
        hint1(x, q)
    }
}

/// `centered((x + sigma * (q-1)/2) mod q)`, the value whose parity is the key bit.
pub fn shifted(x: u64, sigma: u8, q: u64) -> i64 {
    let offset = sigma as u64 * ((q - 1) / 2);
    centered((x + offset) % q, q)
}

pub fn extract_entry(x: u64, sigma: u8, q: u64) -> u8 {
    shifted(x, sigma, q).rem_euclid(2) as u8
}

/// Signal of `m` with an independent hint choice per entry. Choices are the
/// bits of `ceil(n^2 / 8)` bytes drawn from `randomness`, row-major, MSB first.
pub fn signal(m: &ModQMatrix, randomness: &mut StreamExpander) -> SignalMatrix {
    let count = m.n() * m.n();
    let mut choices = vec![0u8; count.div_ceil(8)];
    randomness.fill(&mut choices);
    let q = m.q();
    let bits = m
        .entries()
        .iter()
        .enumerate()
        .map(|(i, &x)| hint((choices[i / 8] >> (7 - i % 8)) & 1, x, q))
        .collect();
    SignalMatrix { n: m.n(), bits }
}

/// Entrywise extractor `k = centered((x + sigma * (q-1)/2) mod q) mod 2`.
pub fn extract(m: &ModQMatrix, s: &SignalMatrix) -> Result<KeyBits, ReconcileError> {
    if m.n() != s.n() {
        return Err(ReconcileError::DimensionMismatch(m.n(), s.n()));
    }
    let q = m.q();
    let bits = m
        .entries()
        .iter()
        .zip(s.bits())
        .map(|(&x, &sigma)| extract_entry(x, sigma, q))
        .collect();
    Ok(KeyBits { n: m.n(), bits })
}
