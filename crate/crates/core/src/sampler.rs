//! Seeded and fresh generation of uniform and discrete-Gaussian matrices.
//!
//! Every byte of randomness flows through a [`StreamExpander`], a SHAKE-256
//! stream absorbed with `u32_be(len(tag)) || tag || seed`. Fresh randomness is
//! a stream keyed by 32 bytes from the OS. Given the same (tag, seed), every
//! sampler here is a pure function, so outputs can be pinned as golden vectors.
//!
//! Gaussian sampling uses an inverse cumulative table of 64-bit fixed-point
//! weights. The weights `exp(-pi x^2 / tau^2)` are evaluated in 256-bit fixed
//! point, so the table does not depend on the platform's floating-point `exp`.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::{Shake256, Shake256Reader};
use thiserror::Error;
use zeroize::Zeroizing;

use crate::modq::{reduce_signed, ModQMatrix};
use crate::params::ProtocolParams;

pub const SEED_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplerError {
    #[error("{0} must not be empty")]
    EmptyField(&'static str),
    #[error("entropy source unavailable: {0}")]
    EntropyUnavailable(String),
}

/// Length-prefixes `field` as `u32_be(len) || field`.
pub(crate) fn absorb_field(xof: &mut Shake256, field: &[u8]) {
    xof.update(&(field.len() as u32).to_be_bytes());
    xof.update(field);
}

/// `SHAKE-256(parts...)` truncated to `N` bytes, parts concatenated as given.
pub(crate) fn shake<const N: usize>(parts: &[&[u8]]) -> [u8; N] {
    let mut xof = Shake256::default();
    for part in parts {
        xof.update(part);
    }
    let mut out = [0u8; N];
    xof.finalize_xof().read(&mut out);
    out
}

pub fn fresh_seed() -> Result<Zeroizing<[u8; SEED_LEN]>, SamplerError> {
    let mut seed = Zeroizing::new([0u8; SEED_LEN]);
    getrandom::getrandom(seed.as_mut())
        .map_err(|e| SamplerError::EntropyUnavailable(e.to_string()))?;
    Ok(seed)
}

/// Unbounded deterministic byte stream for a (tag, seed) pair.
pub struct StreamExpander {
    reader: Shake256Reader,
}

impl StreamExpander {
    pub fn new(tag: &[u8], seed: &[u8]) -> Self {
        let mut xof = Shake256::default();
        absorb_field(&mut xof, tag);
        xof.update(seed);
        Self {
            reader: xof.finalize_xof(),
        }
    }

    /// A stream keyed by fresh OS entropy.
    pub fn fresh(tag: &[u8]) -> Result<Self, SamplerError> {
        let seed = fresh_seed()?;
        Ok(Self::new(tag, seed.as_ref()))
    }

    pub fn fill(&mut self, buf: &mut [u8]) {
        self.reader.read(buf);
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut buf = [0u8; 8];
        self.fill(&mut buf);
        u64::from_be_bytes(buf)
    }

    pub fn next_seed(&mut self) -> [u8; SEED_LEN] {
        let mut seed = [0u8; SEED_LEN];
        self.fill(&mut seed);
        seed
    }

    /// Uniform value in `[0, modulus)`.
    ///
    /// Draws `w` big-endian bytes, the smallest byte count covering
    /// `ceil(log2 modulus)` bits, and rejects draws at or above the largest
    /// multiple of `modulus` below `2^(8w)`. The rejected region is smaller
    /// than `modulus`, so each draw is accepted with probability above 1/2.
    pub fn uniform_below(&mut self, modulus: u64) -> u64 {
        assert!(modulus >= 2);
        let bits = 64 - (modulus - 1).leading_zeros();
        let width = bits.div_ceil(8) as usize;
        let span: u128 = 1u128 << (8 * width);
        let limit = span - span % modulus as u128;
        let mut buf = [0u8; 8];
        loop {
            self.fill(&mut buf[8 - width..]);
            let x = u64::from_be_bytes(buf) as u128;
            if x < limit {
                return (x % modulus as u128) as u64;
            }
        }
    }
}

/// Uniform n x n matrix over Z_q, filled row-major from `stream`.
pub fn uniform_matrix_from(n: usize, q: u64, stream: &mut StreamExpander) -> ModQMatrix {
    let entries = (0..n * n).map(|_| stream.uniform_below(q)).collect();
    ModQMatrix::from_entries(n, q, entries).expect("entries reduced below q")
}

/// Uniform matrix determined by `(params, tag, seed)`.
pub fn uniform_matrix(
    p: &ProtocolParams,
    tag: &[u8],
    seed: &[u8],
) -> Result<ModQMatrix, SamplerError> {
    if seed.is_empty() {
        return Err(SamplerError::EmptyField("seed"));
    }
    Ok(uniform_matrix_from(
        p.n,
        p.q,
        &mut StreamExpander::new(tag, seed),
    ))
}

/// Gaussian matrix determined by `(params, tag, seed)`.
pub fn gaussian_matrix(
    p: &ProtocolParams,
    table: &GaussianTable,
    tag: &[u8],
    seed: &[u8],
) -> Result<ModQMatrix, SamplerError> {
    if seed.is_empty() {
        return Err(SamplerError::EmptyField("seed"));
    }
    Ok(table.matrix(p.n, p.q, &mut StreamExpander::new(tag, seed)))
}

/// Registration seed `SHAKE-256("LSRP-gen" || lp(id) || lp(salt) || lp(password))`,
/// where `lp(x) = u32_be(len(x)) || x`.
pub fn derive_registration_seed(
    id: &[u8],
    salt: &[u8],
    password: &[u8],
) -> Result<Zeroizing<[u8; SEED_LEN]>, SamplerError> {
    if id.is_empty() {
        return Err(SamplerError::EmptyField("id"));
    }
    if salt.is_empty() {
        return Err(SamplerError::EmptyField("salt"));
    }
    let mut xof = Shake256::default();
    xof.update(b"LSRP-gen");
    absorb_field(&mut xof, id);
    absorb_field(&mut xof, salt);
    absorb_field(&mut xof, password);
    let mut seed = Zeroizing::new([0u8; SEED_LEN]);
    xof.finalize_xof().read(seed.as_mut());
    Ok(seed)
}

pub fn fresh_salt(p: &ProtocolParams) -> Result<Vec<u8>, SamplerError> {
    let mut salt = vec![0u8; p.salt_len];
    getrandom::getrandom(&mut salt).map_err(|e| SamplerError::EntropyUnavailable(e.to_string()))?;
    Ok(salt)
}

const FRAC_BITS: u64 = 256;

/// Inverse-CDF table for the discrete Gaussian with weights
/// `rho(x) = exp(-pi x^2 / tau^2)` on `[-bound, bound]`.
///
/// The nominal support is `|x| <= floor(t * tau)`. Points whose probability
/// rounds below 2^-64 cannot be represented, so the support is shrunk
/// symmetrically until every point owns at least one 64-bit slot; for
/// tau = 3 this keeps `[-11, 11]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTable {
    tau: f64,
    bound: i64,
    cdf: Vec<u64>,
    weights: Vec<BigUint>,
}

impl GaussianTable {
    pub fn new(tau: f64, tail_cutoff: u32) -> Self {
        assert!(tau.is_finite() && tau > 0.0, "tau must be positive");
        let nominal = (tail_cutoff as f64 * tau).floor() as i64;
        // weights[k] = rho(k) in 256-bit fixed point, k >= 0
        let half: Vec<BigUint> = (0..=nominal).map(|k| rho_fixed(k, tau)).collect();
        let mut bound = nominal;
        loop {
            let weights: Vec<BigUint> = (-bound..=bound)
                .map(|x| half[x.unsigned_abs() as usize].clone())
                .collect();
            let cdf = cumulative_u64(&weights);
            let representable = cdf[0] >= 1 && cdf.windows(2).all(|w| w[1] > w[0]);
            if representable || bound == 0 {
                return Self {
                    tau,
                    bound,
                    cdf,
                    weights,
                };
            }
            bound -= 1;
        }
    }

    pub fn for_params(p: &ProtocolParams) -> Self {
        Self::new(p.tau, p.tail_cutoff)
    }

    /// Degenerate table that always yields 0 (the tau -> 0 limit).
    pub fn point_mass() -> Self {
        Self {
            tau: 0.0,
            bound: 0,
            cdf: vec![u64::MAX],
            weights: vec![BigUint::one() << FRAC_BITS],
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Largest absolute value the table can produce.
    pub fn bound(&self) -> i64 {
        self.bound
    }

    /// Cumulative weights scaled to `2^64 - 1`, one per support point from
    /// `-bound` to `bound`.
    pub fn cdf(&self) -> &[u64] {
        &self.cdf
    }

    pub fn weights(&self) -> &[BigUint] {
        &self.weights
    }

    /// Maps a 64-bit draw to the first support point whose cumulative weight
    /// is at least the draw.
    pub fn lookup(&self, draw: u64) -> i64 {
        let idx = self.cdf.partition_point(|&c| c < draw);
        idx as i64 - self.bound
    }

    pub fn sample(&self, stream: &mut StreamExpander) -> i64 {
        if self.bound == 0 {
            return 0;
        }
        self.lookup(stream.next_u64())
    }

    /// n x n matrix of signed samples reduced into `[0, q)`, row-major.
    pub fn matrix(&self, n: usize, q: u64, stream: &mut StreamExpander) -> ModQMatrix {
        let entries = (0..n * n)
            .map(|_| reduce_signed(self.sample(stream), q))
            .collect();
        ModQMatrix::from_entries(n, q, entries).expect("entries reduced below q")
    }
}

fn cumulative_u64(weights: &[BigUint]) -> Vec<u64> {
    let total: BigUint = weights.iter().sum();
    let scale = BigUint::from(u64::MAX);
    let mut acc = BigUint::zero();
    weights
        .iter()
        .map(|w| {
            acc += w;
            (&acc * &scale / &total)
                .to_u64()
                .expect("cumulative weight fits 64 bits")
        })
        .collect()
}

/// `exp(-pi k^2 / tau^2)` as a `FRAC_BITS` fixed-point integer.
fn rho_fixed(k: i64, tau: f64) -> BigUint {
    if k == 0 {
        return BigUint::one() << FRAC_BITS;
    }
    // tau = mant * 2^exp exactly
    let (mant, exp) = decompose(tau);
    let guard = 64u64;
    let pi = pi_fixed(FRAC_BITS + guard);
    let num = pi * BigUint::from((k as i128 * k as i128) as u128);
    let den = BigUint::from(mant) * BigUint::from(mant);
    let shift = -2 * exp;
    let y = if shift >= 0 {
        (num << shift as u64) / den
    } else {
        (num >> (-shift) as u64) / den
    };
    exp_neg_fixed(&y, FRAC_BITS + guard) >> guard
}

fn decompose(x: f64) -> (u64, i64) {
    let bits = x.to_bits();
    let exponent = ((bits >> 52) & 0x7ff) as i64;
    let fraction = bits & ((1u64 << 52) - 1);
    let (mant, exp) = if exponent == 0 {
        (fraction, -1074)
    } else {
        (fraction | (1u64 << 52), exponent - 1075)
    };
    let tz = mant.trailing_zeros().min(63) as i64;
    (mant >> tz, exp + tz)
}

/// `e^{-y}` for fixed-point `y >= 0`, both with `frac` fractional bits.
fn exp_neg_fixed(y: &BigUint, frac: u64) -> BigUint {
    let one = BigUint::one() << frac;
    // e^-1100 is far below 2^-1024.
    if *y > BigUint::from(1100u32) << frac {
        return BigUint::zero();
    }
    // halve until y / 2^s <= 1/2, then square s times
    let mut s = 0u64;
    while (y >> s) > (&one >> 1u32) {
        s += 1;
    }
    let work = frac + s + 16;
    let z = BigInt::from(y << (work - frac)) >> s;
    let one_w = BigInt::one() << work;
    let mut term = one_w.clone();
    let mut sum = one_w.clone();
    let mut i = 1u32;
    loop {
        term = -((&term * &z) >> work) / i;
        if term.is_zero() {
            break;
        }
        sum += &term;
        i += 1;
    }
    let mut r = sum.abs().to_biguint().expect("non-negative");
    for _ in 0..s {
        r = (&r * &r) >> work;
    }
    r >> (work - frac)
}

/// pi with `frac` fractional bits via Machin's formula.
fn pi_fixed(frac: u64) -> BigUint {
    let work = frac + 32;
    let atan_inv = |k: u32| -> BigInt {
        let one = BigInt::one() << work;
        let k2 = BigInt::from(k * k);
        let mut power = one / k;
        let mut sum = BigInt::zero();
        let mut i = 0u32;
        while !power.is_zero() {
            let term = &power / (2 * i + 1);
            if i.is_multiple_of(2) {
                sum += term;
            } else {
                sum -= term;
            }
            power /= &k2;
            i += 1;
        }
        sum
    };
    let pi = atan_inv(5) * 16 - atan_inv(239) * 4;
    let pi: BigInt = pi >> 32u32;
    pi.to_biguint().expect("pi is positive")
}

/// One golden-vector line: `tag seed_hex e0,e1,...,e7`.
pub fn golden_line(tag: &str, seed: &[u8], first: &ModQMatrix) -> String {
    let csv: Vec<String> = first.entries().iter().take(8).map(u64::to_string).collect();
    format!("{tag} {} {}", hex::encode(seed), csv.join(","))
}
