//! Regev's LWE public-key bit encryption.
//!
//! Used as an end-to-end check of the uniform and Gaussian samplers and of
//! centered decoding. The noise distribution is the same discrete Gaussian
//! table as the key exchange, with parameter `alpha * p`.

use thiserror::Error;

use crate::modq::{centered, reduce_signed};
use crate::sampler::{GaussianTable, StreamExpander};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegevError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegevParams {
    pub n: usize,
    pub m: usize,
    pub p: u64,
    pub alpha: f64,
    pub tail_cutoff: u32,
}

pub fn is_prime(x: u64) -> bool {
    if x < 2 {
        return false;
    }
    (2..)
        .take_while(|d| d * d <= x)
        .all(|d| !x.is_multiple_of(d))
}

impl RegevParams {
    /// n = 64, m = 320, p = 4099, alpha = 1 / (sqrt(n) * log2(n)^2).
    pub fn default_test() -> Self {
        Self::for_dimension(64, 4099)
    }

    /// `m = 5n` and `alpha = 1 / (sqrt(n) * log2(n)^2)` for a chosen prime `p`.
    pub fn for_dimension(n: usize, p: u64) -> Self {
        let log = (n as f64).log2();
        Self {
            n,
            m: 5 * n,
            p,
            alpha: 1.0 / ((n as f64).sqrt() * log * log),
            tail_cutoff: 10,
        }
    }

    /// Gaussian parameter of the noise, `alpha * p`.
    pub fn tau(&self) -> f64 {
        self.alpha * self.p as f64
    }

    pub fn validate(&self) -> Result<(), RegevError> {
        let bad = |s: String| Err(RegevError::InvalidParams(s));
        if self.n < 2 {
            return bad(format!("n = {} too small", self.n));
        }
        if self.m != 5 * self.n {
            return bad(format!("m = {} must equal 5n = {}", self.m, 5 * self.n));
        }
        let n2 = (self.n as u64).pow(2);
        if !(self.p > n2 && self.p < 2 * n2) {
            return bad(format!(
                "p = {} must lie strictly between n^2 and 2n^2",
                self.p
            ));
        }
        if !is_prime(self.p) {
            return bad(format!("p = {} is not prime", self.p));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha = {} must be positive", self.alpha));
        }
        if self.tail_cutoff == 0 || self.tail_cutoff as f64 * self.tau() >= self.p as f64 / 2.0 {
            return bad("noise support must stay below p/2".into());
        }
        Ok(())
    }

    pub fn noise_table(&self) -> GaussianTable {
        GaussianTable::new(self.tau(), self.tail_cutoff)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegevKeys {
    pub params: RegevParams,
    pub secret: Vec<u64>,
    /// `m` rows of length `n`, row-major.
    pub a: Vec<u64>,
    pub b: Vec<u64>,
}

impl RegevKeys {
    pub fn a_row(&self, i: usize) -> &[u64] {
        &self.a[i * self.params.n..(i + 1) * self.params.n]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegevCiphertext {
    pub a: Vec<u64>,
    pub b: u64,
}

fn inner(x: &[u64], y: &[u64], p: u64) -> u64 {
    x.iter()
        .zip(y)
        .fold(0u64, |acc, (&u, &v)| (acc + u * v) % p)
}

/// Uniform secret, uniform `a_i`, `b_i = <a_i, s> + e_i mod p`.
pub fn regev_keygen(
    rp: &RegevParams,
    noise: &GaussianTable,
    entropy: &mut StreamExpander,
) -> Result<RegevKeys, RegevError> {
    regev_keygen_traced(rp, noise, entropy).map(|(k, _)| k)
}

/// Like [`regev_keygen`], also returning the noise terms `e_i`.
pub fn regev_keygen_traced(
    rp: &RegevParams,
    noise: &GaussianTable,
    entropy: &mut StreamExpander,
) -> Result<(RegevKeys, Vec<i64>), RegevError> {
    rp.validate()?;
    let secret: Vec<u64> = (0..rp.n).map(|_| entropy.uniform_below(rp.p)).collect();
    keygen_with_secret(rp, secret, noise, entropy)
}

/// Key generation around a caller-chosen secret.
pub fn keygen_with_secret(
    rp: &RegevParams,
    secret: Vec<u64>,
    noise: &GaussianTable,
    entropy: &mut StreamExpander,
) -> Result<(RegevKeys, Vec<i64>), RegevError> {
    rp.validate()?;
    if secret.len() != rp.n {
        return Err(RegevError::DimensionMismatch(rp.n, secret.len()));
    }
    let p = rp.p;
    let a: Vec<u64> = (0..rp.m * rp.n).map(|_| entropy.uniform_below(p)).collect();
    let errors: Vec<i64> = (0..rp.m).map(|_| noise.sample(entropy)).collect();
    let b = a
        .chunks(rp.n)
        .zip(&errors)
        .map(|(row, &e)| (inner(row, &secret, p) + reduce_signed(e, p)) % p)
        .collect();
    Ok((
        RegevKeys {
            params: rp.clone(),
            secret,
            a,
            b,
        },
        errors,
    ))
}

/// Encrypts `bit` under a uniformly random subset of the public samples.
pub fn regev_encrypt(keys: &RegevKeys, bit: u8, entropy: &mut StreamExpander) -> RegevCiphertext {
    let m = keys.params.m;
    let mut coins = vec![0u8; m.div_ceil(8)];
    entropy.fill(&mut coins);
    let subset: Vec<usize> = (0..m)
        .filter(|&i| (coins[i / 8] >> (7 - i % 8)) & 1 == 1)
        .collect();
    encrypt_with_subset(keys, bit, &subset)
}

/// `(sum_{i in S} a_i, bit * floor(p/2) + sum_{i in S} b_i)` mod p.
pub fn encrypt_with_subset(keys: &RegevKeys, bit: u8, subset: &[usize]) -> RegevCiphertext {
    let p = keys.params.p;
    let mut a = vec![0u64; keys.params.n];
    let mut b = u64::from(bit & 1) * (p / 2);
    for &i in subset {
        for (acc, &x) in a.iter_mut().zip(keys.a_row(i)) {
            *acc = (*acc + x) % p;
        }
        b = (b + keys.b[i]) % p;
    }
    RegevCiphertext { a, b }
}

/// 0 if `d = b - <a, s> mod p` is within p/4 of zero, else 1.
pub fn regev_decrypt(secret: &[u64], c: &RegevCiphertext, p: u64) -> Result<u8, RegevError> {
    if secret.len() != c.a.len() {
        return Err(RegevError::DimensionMismatch(secret.len(), c.a.len()));
    }
    let d = (c.b + p - inner(&c.a, secret, p)) % p;
    Ok(decode_distance(d, p))
}

fn decode_distance(d: u64, p: u64) -> u8 {
    u8::from(4 * centered(d, p).unsigned_abs() >= p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RegevParams {
        RegevParams::for_dimension(8, 67)
    }

    #[test]
    fn default_params_shape() {
        let rp = RegevParams::default_test();
        rp.validate().unwrap();
        assert_eq!((rp.n, rp.m, rp.p), (64, 320, 4099));
        assert!(is_prime(4099) && 4099 > 4096 && 4099 < 8192);
        assert!((rp.alpha - 1.0 / 288.0).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        let mut rp = RegevParams::default_test();
        rp.m = 100;
        assert!(rp.validate().is_err());
        let rp = RegevParams::for_dimension(64, 4097); // 17 * 241
        assert!(rp.validate().is_err());
        let rp = RegevParams::for_dimension(64, 4093); // prime, below n^2
        assert!(rp.validate().is_err());
        assert!(!is_prime(1) && is_prime(2) && is_prime(67) && !is_prime(4097));
    }

    #[test]
    fn zero_noise_keygen() {
        let rp = small();
        let mut s = StreamExpander::new(b"regev", b"1");
        let (keys, errors) =
            regev_keygen_traced(&rp, &GaussianTable::point_mass(), &mut s).unwrap();
        assert!(errors.iter().all(|&e| e == 0));
        for i in 0..rp.m {
            assert_eq!(keys.b[i], inner(keys.a_row(i), &keys.secret, rp.p));
        }
    }

    #[test]
    fn zero_secret_gives_noise() {
        let rp = small();
        let mut s = StreamExpander::new(b"regev", b"2");
        let (keys, errors) =
            keygen_with_secret(&rp, vec![0; 8], &rp.noise_table(), &mut s).unwrap();
        for (b, e) in keys.b.iter().zip(errors) {
            assert_eq!(*b, reduce_signed(e, rp.p));
        }
    }

    #[test]
    fn forced_subsets() {
        let rp = small();
        let keys =
            regev_keygen(&rp, &rp.noise_table(), &mut StreamExpander::new(b"r", b"3")).unwrap();
        assert_eq!(
            encrypt_with_subset(&keys, 0, &[]),
            RegevCiphertext {
                a: vec![0; 8],
                b: 0
            }
        );
        assert_eq!(
            encrypt_with_subset(&keys, 1, &[]),
            RegevCiphertext {
                a: vec![0; 8],
                b: 33
            }
        );
        assert_eq!(
            encrypt_with_subset(&keys, 0, &[0]),
            RegevCiphertext {
                a: keys.a_row(0).to_vec(),
                b: keys.b[0]
            }
        );
    }

    #[test]
    fn zero_noise_round_trip() {
        let rp = RegevParams::default_test();
        let mut s = StreamExpander::new(b"r", b"4");
        let keys = regev_keygen(&rp, &GaussianTable::point_mass(), &mut s).unwrap();
        for bit in [0, 1, 1, 0, 1] {
            let c = regev_encrypt(&keys, bit, &mut s);
            assert_eq!(regev_decrypt(&keys.secret, &c, rp.p).unwrap(), bit);
        }
    }

    #[test]
    fn threshold() {
        let p = 4099;
        assert_eq!(decode_distance(1024, p), 0);
        assert_eq!(decode_distance(1025, p), 1);
        assert_eq!(decode_distance(p - 1024, p), 0);
        assert_eq!(decode_distance(p - 1025, p), 1);
        assert_eq!(decode_distance(p / 2, p), 1);
    }

    #[test]
    fn additivity_at_zero_noise() {
        let rp = small();
        let keys = regev_keygen(
            &rp,
            &GaussianTable::point_mass(),
            &mut StreamExpander::new(b"r", b"5"),
        )
        .unwrap();
        let s1 = [1, 4, 9];
        let s2 = [2, 3, 30];
        let c1 = encrypt_with_subset(&keys, 0, &s1);
        let c2 = encrypt_with_subset(&keys, 0, &s2);
        let both = encrypt_with_subset(&keys, 0, &[1, 4, 9, 2, 3, 30]);
        let sum_a: Vec<u64> =
            c1.a.iter()
                .zip(&c2.a)
                .map(|(x, y)| (x + y) % rp.p)
                .collect();
        assert_eq!(sum_a, both.a);
        assert_eq!((c1.b + c2.b) % rp.p, both.b);
    }

    #[test]
    fn decrypt_dimension_mismatch() {
        let c = RegevCiphertext {
            a: vec![0; 3],
            b: 0,
        };
        assert_eq!(
            regev_decrypt(&[0; 4], &c, 67),
            Err(RegevError::DimensionMismatch(4, 3))
        );
    }
}
